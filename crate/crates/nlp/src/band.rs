//! Envelope (skyline) LDLᵀ factorization of the reduced KKT matrix, with a
//! reverse Cuthill–McKee ordering computed from the block sparsity pattern.
//!
//! After the inertia-correcting regularization the KKT matrix is
//! quasidefinite, so the factorization needs no pivoting and the pivot signs
//! reveal the inertia directly.

/// Symbolic structure shared by repeated factorizations of one problem shape.
#[derive(Debug, Clone)]
pub struct KktSymbolic {
    pub dim: usize,
    /// `perm[new] = old` node index.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    /// First envelope column of each permuted row.
    pub first: Vec<usize>,
    /// Storage offset of each permuted row; row i occupies
    /// `offset[i] .. offset[i] + (i - first[i] + 1)`, diagonal last.
    pub offset: Vec<usize>,
    pub storage: usize,
    /// Expected pivot sign per permuted row: `false` → positive (primal),
    /// `true` → negative (dual).
    pub negative: Vec<bool>,
}

impl KktSymbolic {
    /// `edges` are symmetric couplings between nodes (self-loops implied).
    /// `is_dual[node]` marks rows whose pivot must come out negative.
    pub fn build(dim: usize, edges: &[(usize, usize)], is_dual: &[bool]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let perm = reverse_cuthill_mckee(dim, &adj);
        let mut inv = vec![0usize; dim];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..dim).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &nb in &adj[old] {
                let nb_new = inv[nb];
                if nb_new < new && nb_new < first[new] {
                    first[new] = nb_new;
                }
            }
        }
        let mut offset = vec![0usize; dim];
        let mut storage = 0usize;
        for i in 0..dim {
            offset[i] = storage;
            storage += i - first[i] + 1;
        }
        let negative = perm.iter().map(|&old| is_dual[old]).collect();
        KktSymbolic {
            dim,
            perm,
            inv,
            first,
            offset,
            storage,
            negative,
        }
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.dim).map(|i| i - self.first[i]).max().unwrap_or(0)
    }
}

fn reverse_cuthill_mckee(dim: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let mut order = Vec::with_capacity(dim);
    let mut visited = vec![false; dim];
    let mut nodes: Vec<usize> = (0..dim).collect();
    nodes.sort_unstable_by_key(|&v| adj[v].len());
    for &start in &nodes {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_unstable_by_key(|&u| adj[u].len());
            for u in nb {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Numeric envelope matrix tied to a symbolic structure.
pub struct KktMatrix<'a> {
    pub sym: &'a KktSymbolic,
    pub vals: Vec<f64>,
}

impl<'a> KktMatrix<'a> {
    pub fn zeros(sym: &'a KktSymbolic) -> Self {
        KktMatrix {
            sym,
            vals: vec![0.0; sym.storage],
        }
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Accumulate into entry (a, b) given in original node indices.
    #[inline]
    pub fn add(&mut self, a: usize, b: usize, v: f64) {
        let (mut i, mut j) = (self.sym.inv[a], self.sym.inv[b]);
        if i < j {
            std::mem::swap(&mut i, &mut j);
        }
        debug_assert!(
            j >= self.sym.first[i],
            "entry ({a},{b}) outside envelope"
        );
        let pos = self.sym.offset[i] + (j - self.sym.first[i]);
        self.vals[pos] += v;
    }

    /// In-place LDLᵀ. Returns `Err(row)` when a pivot is degenerate or has the
    /// wrong sign for the declared inertia.
    pub fn factor(&mut self) -> Result<(), usize> {
        let sym = self.sym;
        let dim = sym.dim;
        // d[k] kept at each row's diagonal slot.
        for i in 0..dim {
            let fi = sym.first[i];
            let row_i = sym.offset[i];
            for j in fi..i {
                let fj = sym.first[j];
                let row_j = sym.offset[j];
                let lo = fi.max(fj);
                let mut acc = self.vals[row_i + (j - fi)];
                for k in lo..j {
                    let lik = self.vals[row_i + (k - fi)];
                    let ljk = self.vals[row_j + (k - fj)];
                    let dk = self.vals[sym.offset[k] + (k - sym.first[k])];
                    acc -= lik * ljk * dk;
                }
                let dj = self.vals[row_j + (j - fj)];
                self.vals[row_i + (j - fi)] = acc / dj;
            }
            let mut acc = self.vals[row_i + (i - fi)];
            for k in fi..i {
                let lik = self.vals[row_i + (k - fi)];
                let dk = self.vals[sym.offset[k] + (k - sym.first[k])];
                acc -= lik * lik * dk;
            }
            if !acc.is_finite() || acc.abs() < 1e-300 {
                return Err(i);
            }
            if sym.negative[i] != (acc < 0.0) {
                return Err(i);
            }
            self.vals[row_i + (i - fi)] = acc;
        }
        Ok(())
    }

    /// Solve with the factored matrix; `rhs` is in original node order.
    pub fn solve(&self, rhs: &mut [f64]) {
        let sym = self.sym;
        let dim = sym.dim;
        let mut b = vec![0.0; dim];
        for old in 0..dim {
            b[sym.inv[old]] = rhs[old];
        }
        // Forward: L z = b.
        for i in 0..dim {
            let fi = sym.first[i];
            let row = sym.offset[i];
            let mut acc = b[i];
            for k in fi..i {
                acc -= self.vals[row + (k - fi)] * b[k];
            }
            b[i] = acc;
        }
        // Diagonal.
        for i in 0..dim {
            b[i] /= self.vals[sym.offset[i] + (i - sym.first[i])];
        }
        // Backward: Lᵀ x = z.
        for i in (0..dim).rev() {
            let fi = sym.first[i];
            let row = sym.offset[i];
            for k in fi..i {
                b[k] -= self.vals[row + (k - fi)] * b[i];
            }
        }
        for old in 0..dim {
            rhs[old] = b[sym.inv[old]];
        }
    }
}

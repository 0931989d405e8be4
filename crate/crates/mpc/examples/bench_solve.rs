use emslab_mpc::{MpcConfig, MpcPolicy, Measurement};
use emslab_powertrain::{VehicleParams, RPM};
use std::time::Instant;

fn main() {
    let p = VehicleParams::synthetic_default();
    let mut policy = MpcPolicy::new(MpcConfig::default(), p).unwrap();
    let mut total_iters = 0usize;
    let t0 = Instant::now();
    let n = 400;
    for k in 0..n {
        let m = Measurement {
            omega: (1500.0 + 30.0 * ((k as f64) * 0.1).sin()) * RPM,
            soc: 50.0 - 0.002 * k as f64,
            x_ice: 55.0 + 5.0 * ((k as f64) * 0.07).cos(),
            omega_ref: (1500.0 + 30.0 * ((k as f64 + 1.0) * 0.1).sin()) * RPM,
            omega_ref_rate: 0.0,
            tau_gb: 1.03,
            t_pto: 10.0,
            i_aux: 5.0,
        };
        let (dec, _) = policy.step(&m);
        total_iters += dec.iterations;
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{n} solves in {:.2} s → {:.2} ms/solve, mean iters {:.1}", dt, 1e3 * dt / n as f64, total_iters as f64 / n as f64);
}

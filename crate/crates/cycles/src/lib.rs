//! Driving-cycle synthesis: spectral surrogates of transport profiles and the
//! constant agricultural operating cycle.

pub mod agricultural;
pub mod error;
pub mod phase;
pub mod transport;

pub use agricultural::{build_agricultural_cycle, AgriculturalSpec};
pub use error::{CycleError, Result};
pub use phase::{original_phases, phase_randomize, spectrum_magnitude, surrogate_with_phases};
pub use transport::{build_transport_cycle, BaseProfile, GearSelector, TransportSpec};

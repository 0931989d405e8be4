//! Traditional vehicle baseline: no electric drive, clutch permanently
//! closed, engine speed controller doing all the work.

use emslab_powertrain::{PlantState, VehicleParams};
use emslab_sim::{simulate, DriveCycleInput, PlantOptions, Result, SimLog, ZeroTorquePolicy};

/// Run the cycle with the electric motor absent and the battery disconnected.
///
/// `mass_reduction` is subtracted from the vehicle mass (200 kg for the true
/// engine-only vehicle, 0 to compare inside the hybrid platform). Auxiliary
/// electrical loads are dropped along with the battery.
pub fn simulate_ice_only(
    cycle: &DriveCycleInput,
    params: &VehicleParams,
    init: &PlantState,
    opts: &PlantOptions,
    mass_reduction: f64,
) -> Result<SimLog> {
    let mut p = params.clone();
    p.loss.mass -= mass_reduction;
    let mut c = cycle.clone();
    c.i_b_aux.iter_mut().for_each(|i| *i = 0.0);
    let run_opts = PlantOptions {
        auto_clutch: false,
        engine_enabled: true,
        ..opts.clone()
    };
    let mut state = *init;
    state.xi = true;
    simulate(&c, &mut ZeroTorquePolicy, &p, &state, &run_opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use emslab_powertrain::RPM;

    #[test]
    fn constant_cruise_fuel_rate_settles() {
        let p = VehicleParams::synthetic_default();
        let cycle = DriveCycleInput::constant(1700.0 * RPM, 11, 40.0, 0.05);
        let init = PlantState::at_speed(1700.0 * RPM, 50.0);
        let log =
            simulate_ice_only(&cycle, &p, &init, &PlantOptions::default(), 200.0).unwrap();
        // After the transient the fuel rate is constant.
        let tail = &log.fuel_rate[log.len() - 400..];
        let (lo, hi) = tail
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi > 0.0);
        assert!((hi - lo) / hi < 1e-6, "fuel rate still moving: {lo}..{hi}");
        // Battery untouched.
        assert_eq!(log.delta_soc(), 0.0);
        assert!(log.i_b.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn mass_reduction_saves_fuel_on_a_grade() {
        // The grade force is proportional to mass, so a climb separates the
        // two baselines unambiguously.
        let p = VehicleParams::synthetic_default();
        let mut cycle = DriveCycleInput::constant(1500.0 * RPM, 11, 60.0, 0.05);
        cycle.slope.iter_mut().for_each(|s| *s = 0.03);
        let init = PlantState::at_speed(1500.0 * RPM, 50.0);
        let heavy =
            simulate_ice_only(&cycle, &p, &init, &PlantOptions::default(), 0.0).unwrap();
        let light =
            simulate_ice_only(&cycle, &p, &init, &PlantOptions::default(), 200.0).unwrap();
        assert!(
            light.total_fuel_kg() < heavy.total_fuel_kg(),
            "lighter vehicle must burn less uphill: {} vs {}",
            light.total_fuel_kg(),
            heavy.total_fuel_kg()
        );
    }
}

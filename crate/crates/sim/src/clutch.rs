//! Clutch supervision: the engine decouples when its commanded torque drops
//! near zero, with hysteresis against chattering.

/// Next clutch state given the (unclamped) commanded engine torque.
///
/// Opens below `threshold - hysteresis/2`, closes above
/// `threshold + hysteresis/2`, holds in between.
pub fn clutch_logic(t_ice_cmd: f64, xi: bool, threshold: f64, hysteresis: f64) -> bool {
    let half = 0.5 * hysteresis;
    if t_ice_cmd < threshold - half {
        false
    } else if t_ice_cmd > threshold + half {
        true
    } else {
        xi
    }
}

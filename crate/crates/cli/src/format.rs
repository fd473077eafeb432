//! Number formatting for CSV output.

/// Nine significant digits: fixed-point for magnitudes in `[1e-5, 1e9)`,
/// scientific otherwise.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

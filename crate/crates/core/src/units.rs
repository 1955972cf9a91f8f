//! Power unit conversions and physical constants.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `P[W] = 10^((dBm - 30) / 10)`.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Free-space constant `(lambda / 4 pi)^2` for a carrier frequency in Hz.
pub fn free_space_constant(carrier_hz: f64) -> f64 {
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    (wavelength / (4.0 * std::f64::consts::PI)).powi(2)
}

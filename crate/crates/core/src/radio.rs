//! Link-level physics: free-space path loss, the link predicate and
//! Shannon-rate link throughput.

use crate::error::{Error, Result};
use crate::scenario::RadioParams;

/// Power gain of a free-space link, `h = mu_f / d^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGain {
    pub h: f64,
    pub distance_m: f64,
}

pub fn path_loss(distance_m: f64, radio: &RadioParams) -> Result<LinkGain> {
    if !(distance_m > 0.0) {
        return Err(Error::ZeroDistance(distance_m));
    }
    Ok(LinkGain { h: gain(distance_m, radio.mu_f), distance_m })
}

#[inline]
pub(crate) fn gain(distance_m: f64, mu_f: f64) -> f64 {
    mu_f / (distance_m * distance_m)
}

/// A link is up when the received power reaches the sensitivity threshold
/// (boundary inclusive).
#[inline]
pub fn link_up(p_tx_w: f64, h: f64, sensitivity_w: f64) -> bool {
    p_tx_w * h >= sensitivity_w
}

/// `B log2(1 + p h / N)` in bit/s, `N` being the total noise power.
#[inline]
pub fn link_throughput(p_tx_w: f64, h: f64, radio: &RadioParams) -> f64 {
    radio.bandwidth_hz * (p_tx_w * h / radio.noise_power_w).ln_1p() / std::f64::consts::LN_2
}

/// Smallest transmit power for which [`link_up`] holds over `distance_m`.
///
/// Starts from `gamma d^2 / mu_f` and steps to the next float until the
/// predicate (evaluated exactly as [`link_up`] does) is satisfied, so that
/// transmitting at the returned power always closes the link.
pub fn reach_power(distance_m: f64, radio: &RadioParams) -> f64 {
    let h = gain(distance_m, radio.mu_f);
    let mut p = radio.sensitivity_w / h;
    while !link_up(p, h, radio.sensitivity_w) {
        p = p.next_up();
    }
    // Step back while the predicate still holds (the division may overshoot).
    while link_up(p.next_down(), h, radio.sensitivity_w) {
        p = p.next_down();
    }
    p
}

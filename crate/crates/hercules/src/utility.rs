//! The utility function driving rate decisions: a concave reward in the
//! sending rate minus a congestion penalty scaled by how far the
//! connection sits inside (or beyond) its requirement band.
//!
//! All functions here are pure; feedback smoothing lives in the
//! simulator and controller.

use std::f64::consts::PI;

use crate::core::{CoefficientSet, IntervalStats, Requirement};

/// Normalized rate: 0 at the minimum requirement, 1 at the maximum,
/// unbounded outside the band.
pub fn normalized_rate(rate: f64, req: &Requirement) -> f64 {
    (rate - req.min_rate) / req.width()
}

/// Requirement penalty H, an arctan ramp through (1/2, 1/2) with range
/// (0, 1). `d_scale` >= 1 steepens the ramp around the band midpoint.
pub fn requirement_penalty(xbar: f64, d_scale: f64) -> f64 {
    (d_scale * (xbar - 0.5)).atan() / PI + 0.5
}

/// Per-term signs for the congestion-penalty bracket. The default
/// treats loss, positive RTT gradient, and RTT jitter all as penalties;
/// flipping a sign is available for experimentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermSigns {
    pub loss: f64,
    pub gradient: f64,
    pub stddev: f64,
}

impl Default for TermSigns {
    fn default() -> Self {
        TermSigns {
            loss: 1.0,
            gradient: 1.0,
            stddev: 1.0,
        }
    }
}

/// Congestion-penalty bracket: beta * loss + gamma * max(0, dRTT/dt)
/// + phi * sigma(RTT), clamped at 0 from below so the congestion-free
/// identity U = x^t holds exactly under measurement noise.
pub fn congestion_penalty(stats: &IntervalStats, coeffs: &CoefficientSet) -> f64 {
    congestion_penalty_signed(stats, coeffs, &TermSigns::default())
}

/// Congestion penalty with configurable per-term signs.
pub fn congestion_penalty_signed(
    stats: &IntervalStats,
    coeffs: &CoefficientSet,
    signs: &TermSigns,
) -> f64 {
    let bracket = signs.loss * coeffs.beta * stats.loss_ratio
        + signs.gradient * coeffs.gamma * stats.rtt_gradient.max(0.0)
        + signs.stddev * coeffs.phi * stats.rtt_stddev;
    bracket.max(0.0)
}

/// An evaluated utility together with the inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityValue {
    pub value: f64,
    pub rate: f64,
    pub penalty: f64,
}

/// Full utility: rate^t - rate * H(normalized rate) * penalty bracket.
pub fn utility(
    rate: f64,
    req: &Requirement,
    stats: &IntervalStats,
    coeffs: &CoefficientSet,
) -> UtilityValue {
    let xbar = normalized_rate(rate, req);
    let h = requirement_penalty(xbar, coeffs.d_scale);
    let penalty = congestion_penalty(stats, coeffs);
    UtilityValue {
        value: rate.powf(coeffs.t) - rate * h * penalty,
        rate,
        penalty,
    }
}

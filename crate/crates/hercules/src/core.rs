//! Core domain types shared by every other module: per-connection
//! bandwidth requirements, utility coefficients, and per-interval
//! feedback statistics.
//!
//! All bandwidths are carried as bits per second and all times as
//! seconds, in double precision. Everything here is an immutable value
//! type, safe to share and send between threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// The requirement interval is empty or inverted; the normalized
    /// rate divides by (max - min), so equal bounds are rejected.
    #[error("degenerate requirement: max_rate {max_rate} <= min_rate {min_rate}")]
    DegenerateRequirement { min_rate: f64, max_rate: f64 },

    #[error("non-positive minimum requirement: {min_rate}")]
    NonPositiveMin { min_rate: f64 },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid interval stats: {0}")]
    InvalidStats(String),
}

/// Per-connection bandwidth requirement band, in bits per second.
///
/// `min_rate` is the threshold below which the application degrades
/// significantly; `max_rate` is the rate beyond which it sees no
/// significant improvement. A `bounded` connection refuses to send
/// above `max_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub min_rate: f64,
    pub max_rate: f64,
    pub bounded: bool,
}

impl Requirement {
    pub fn new(min_rate: f64, max_rate: f64, bounded: bool) -> Result<Self, CoreError> {
        let req = Requirement {
            min_rate,
            max_rate,
            bounded,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.min_rate > 0.0) || !self.min_rate.is_finite() {
            return Err(CoreError::NonPositiveMin {
                min_rate: self.min_rate,
            });
        }
        if !(self.max_rate > self.min_rate) || !self.max_rate.is_finite() {
            return Err(CoreError::DegenerateRequirement {
                min_rate: self.min_rate,
                max_rate: self.max_rate,
            });
        }
        Ok(())
    }

    /// Width of the requirement band, `max_rate - min_rate` (> 0 for a
    /// validated requirement).
    pub fn width(&self) -> f64 {
        self.max_rate - self.min_rate
    }
}

/// Validates a requirement and hands it back unchanged.
pub fn validate_requirement(req: Requirement) -> Result<Requirement, CoreError> {
    req.validate()?;
    Ok(req)
}

/// Utility-function constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    /// Rate exponent, in (0, 1]; keeps the reward term concave.
    pub t: f64,
    /// Loss coefficient, >= 0.
    pub beta: f64,
    /// Latency-gradient coefficient, > 0.
    pub gamma: f64,
    /// RTT standard-deviation coefficient, >= 0.
    pub phi: f64,
    /// Requirement-penalty steepness, >= 1.
    pub d_scale: f64,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        CoefficientSet {
            t: 0.9,
            beta: 11.35,
            gamma: 25.0,
            phi: 750.0,
            d_scale: 2.0,
        }
    }
}

impl CoefficientSet {
    pub fn validate(&self) -> Result<(), CoreError> {
        let mut faults = Vec::new();
        if !(self.t > 0.0 && self.t <= 1.0) {
            faults.push(format!("t must be in (0, 1], got {}", self.t));
        }
        if !(self.beta >= 0.0) {
            faults.push(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.gamma > 0.0) {
            faults.push(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.phi >= 0.0) {
            faults.push(format!("phi must be >= 0, got {}", self.phi));
        }
        if !(self.d_scale >= 1.0) {
            faults.push(format!("d_scale must be >= 1, got {}", self.d_scale));
        }
        if faults.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidCoefficients(faults.join("; ")))
        }
    }
}

/// Feedback gathered over one update interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    /// Average sending rate over the interval, bits per second.
    pub avg_rate: f64,
    /// Fraction of offered traffic lost, in [0, 1].
    pub loss_ratio: f64,
    /// Ordered (time, rtt) samples, both in seconds.
    pub rtt_samples: Vec<(f64, f64)>,
    /// Least-squares slope of the RTT samples, seconds per second.
    pub rtt_gradient: f64,
    /// Population standard deviation of the RTT samples, seconds.
    pub rtt_stddev: f64,
    /// Interval length, seconds.
    pub duration: f64,
}

impl IntervalStats {
    /// Builds stats from raw samples, deriving the RTT gradient and
    /// standard deviation from them.
    pub fn from_samples(
        avg_rate: f64,
        loss_ratio: f64,
        rtt_samples: Vec<(f64, f64)>,
        duration: f64,
    ) -> Result<Self, CoreError> {
        let rtt_gradient = least_squares_slope(&rtt_samples);
        let rtt_stddev = population_stddev(rtt_samples.iter().map(|&(_, r)| r));
        let stats = IntervalStats {
            avg_rate,
            loss_ratio,
            rtt_samples,
            rtt_gradient,
            rtt_stddev,
            duration,
        };
        stats.validate()?;
        Ok(stats)
    }

    /// Builds stats from already-computed aggregates, without raw RTT
    /// samples. Used by test drivers and synthetic feedback streams.
    pub fn from_parts(
        avg_rate: f64,
        loss_ratio: f64,
        rtt_gradient: f64,
        rtt_stddev: f64,
        duration: f64,
    ) -> Result<Self, CoreError> {
        let stats = IntervalStats {
            avg_rate,
            loss_ratio,
            rtt_samples: Vec::new(),
            rtt_gradient,
            rtt_stddev,
            duration,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(0.0..=1.0).contains(&self.loss_ratio) {
            return Err(CoreError::InvalidStats(format!(
                "loss_ratio must be in [0, 1], got {}",
                self.loss_ratio
            )));
        }
        if !(self.duration > 0.0) {
            return Err(CoreError::InvalidStats(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        if !(self.rtt_stddev >= 0.0) {
            return Err(CoreError::InvalidStats(format!(
                "rtt_stddev must be >= 0, got {}",
                self.rtt_stddev
            )));
        }
        Ok(())
    }

    /// Mean of the RTT samples, if any.
    pub fn mean_rtt(&self) -> Option<f64> {
        if self.rtt_samples.is_empty() {
            None
        } else {
            Some(self.rtt_samples.iter().map(|&(_, r)| r).sum::<f64>() / self.rtt_samples.len() as f64)
        }
    }
}

/// Connection rates indexed by connection id, bits per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.0.iter().any(|&r| !(r >= 0.0)) {
            return Err(CoreError::InvalidStats(
                "rate vector entries must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Least-squares slope of (x, y) samples. Returns 0 for fewer than two
/// samples or zero variance in x.
pub fn least_squares_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let inv = 1.0 / n as f64;
    let mean_x = samples.iter().map(|&(x, _)| x).sum::<f64>() * inv;
    let mean_y = samples.iter().map(|&(_, y)| y).sum::<f64>() * inv;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in samples {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Population standard deviation.
pub fn population_stddev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid_requirement() {
        let req = validate_requirement(Requirement {
            min_rate: 20e6,
            max_rate: 30e6,
            bounded: false,
        })
        .unwrap();
        assert_eq!(req.min_rate, 20e6);
        assert_eq!(req.width(), 10e6);
    }

    #[test]
    fn rejects_equal_bounds() {
        let err = validate_requirement(Requirement {
            min_rate: 10e3,
            max_rate: 10e3,
            bounded: false,
        })
        .unwrap_err();
        assert!(matches!(err, CoreError::DegenerateRequirement { .. }));
    }

    #[test]
    fn rejects_zero_minimum() {
        let err = validate_requirement(Requirement {
            min_rate: 0.0,
            max_rate: 5e6,
            bounded: false,
        })
        .unwrap_err();
        assert!(matches!(err, CoreError::NonPositiveMin { .. }));
    }

    #[test]
    fn default_coefficients_match_suggested_values() {
        let c = CoefficientSet::default();
        assert_eq!(c.t, 0.9);
        assert_eq!(c.beta, 11.35);
        assert_eq!(c.gamma, 25.0);
        assert_eq!(c.phi, 750.0);
        assert_eq!(c.d_scale, 2.0);
        c.validate().unwrap();
    }

    #[test]
    fn coefficient_bounds_enforced() {
        let mut c = CoefficientSet::default();
        c.t = 0.0;
        assert!(c.validate().is_err());
        c.t = 1.0;
        c.d_scale = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn slope_of_exact_line_is_exact() {
        let samples: Vec<(f64, f64)> = (0..4).map(|i| (i as f64 * 1e-3, 0.020 + i as f64 * 1e-3)).collect();
        let slope = least_squares_slope(&samples);
        assert!((slope - 1.0).abs() < 1e-12, "slope {slope}");
    }

    #[test]
    fn slope_of_constant_is_zero() {
        let samples = vec![(0.0, 0.02), (0.001, 0.02), (0.002, 0.02)];
        assert_eq!(least_squares_slope(&samples), 0.0);
        assert_eq!(population_stddev(samples.iter().map(|&(_, r)| r)), 0.0);
    }

    #[test]
    fn gradient_recomputable_from_samples() {
        // The stored gradient must equal an independently computed
        // least-squares slope (two-pass covariance form) within 1e-9.
        let samples: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let t = i as f64 * 2.5e-3;
                (t, 0.02 + 0.004 * t + if i % 2 == 0 { 1e-4 } else { -1e-4 })
            })
            .collect();
        let stats =
            IntervalStats::from_samples(1e6, 0.0, samples.clone(), 0.05).unwrap();
        let n = samples.len() as f64;
        let sx: f64 = samples.iter().map(|&(t, _)| t).sum();
        let sy: f64 = samples.iter().map(|&(_, r)| r).sum();
        let sxy: f64 = samples.iter().map(|&(t, r)| t * r).sum();
        let sxx: f64 = samples.iter().map(|&(t, _)| t * t).sum();
        let independent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (stats.rtt_gradient - independent).abs() < 1e-9,
            "stored {} vs independent {}",
            stats.rtt_gradient,
            independent
        );
    }

    #[test]
    fn stats_bounds_enforced() {
        assert!(IntervalStats::from_parts(1e6, 1.5, 0.0, 0.0, 0.02).is_err());
        assert!(IntervalStats::from_parts(1e6, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(IntervalStats::from_parts(1e6, 0.0, 0.0, -1e-3, 0.02).is_err());
    }
}

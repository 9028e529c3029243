//! Simplified competitor controllers for comparative experiments: a
//! fair-share online learner sharing the probing machinery, and a
//! rate-based AIMD loss controller.

use crate::core::{CoefficientSet, IntervalStats, Requirement};
use crate::ratecontrol::{
    ControlError, Controller, ControllerConfig, RateController, RateDecision, UtilityModel,
};

/// Fair-share utility shape: the requirement penalty is pinned at 1 and
/// the RTT-jitter term is dropped, leaving
/// x^t - x * (beta * loss + gamma * max(0, dRTT/dt)).
///
/// It drives the same probing state machine as the requirement-aware
/// shape, so observed differences between the two are attributable to
/// the utility shape alone.
#[derive(Debug, Clone)]
pub struct FairShareUtility {
    pub coeffs: CoefficientSet,
}

impl UtilityModel for FairShareUtility {
    fn utility(&self, rate: f64, stats: &IntervalStats) -> f64 {
        let bracket = (self.coeffs.beta * stats.loss_ratio
            + self.coeffs.gamma * stats.rtt_gradient.max(0.0))
        .max(0.0);
        rate.powf(self.coeffs.t) - rate * bracket
    }

    fn max_requirement(&self) -> Option<f64> {
        None
    }
}

/// Builds a fair-share controller. The requirement only supplies the
/// initial rate and the bounded cap; the utility ignores it.
///
/// The online learners this baseline reconstructs evaluate each
/// monitor interval's feedback raw, so the smoothing knob is pinned to
/// raw regardless of the shared controller configuration.
pub fn vivace_like_controller(
    req: Requirement,
    coeffs: CoefficientSet,
    cfg: ControllerConfig,
    seed: u64,
) -> Controller {
    let cfg = ControllerConfig {
        smoothing: 1.0,
        ..cfg
    };
    Controller::new(Box::new(FairShareUtility { coeffs }), req, cfg, seed)
}

/// AIMD tunables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AimdConfig {
    /// Rate added per RTT of elapsed interval, bits per second.
    pub additive_increase: f64,
    /// Multiplicative back-off factor on loss, in (0, 1).
    pub multiplicative_decrease: f64,
    /// Loss ratio above which the interval counts as a loss event.
    pub loss_threshold: f64,
}

impl Default for AimdConfig {
    fn default() -> Self {
        AimdConfig {
            additive_increase: 1e6,
            multiplicative_decrease: 0.5,
            loss_threshold: 0.0,
        }
    }
}

impl AimdConfig {
    pub fn validate(&self) -> Result<(), String> {
        let mut faults = Vec::new();
        if !(self.additive_increase > 0.0) {
            faults.push(format!(
                "additive_increase must be > 0, got {}",
                self.additive_increase
            ));
        }
        if !(self.multiplicative_decrease > 0.0 && self.multiplicative_decrease < 1.0) {
            faults.push(format!(
                "multiplicative_decrease must be in (0, 1), got {}",
                self.multiplicative_decrease
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_threshold) {
            faults.push(format!(
                "loss_threshold must be in [0, 1], got {}",
                self.loss_threshold
            ));
        }
        if faults.is_empty() {
            Ok(())
        } else {
            Err(faults.join("; "))
        }
    }
}

/// Rate-based AIMD: add `additive_increase * (interval / RTT)` while
/// the loss ratio stays at or below the threshold, multiply by the
/// decrease factor when it does not.
pub struct AimdController {
    cfg: AimdConfig,
    ctl: ControllerConfig,
    bounded_cap: Option<f64>,
    rate: f64,
    srtt: Option<f64>,
    scheduled_interval: f64,
    last_loss: f64,
}

impl AimdController {
    pub fn new(req: Requirement, cfg: AimdConfig, ctl: ControllerConfig) -> AimdController {
        let initial = ctl.initial_rate_cap.min(req.min_rate).max(ctl.rate_floor);
        AimdController {
            cfg,
            ctl,
            bounded_cap: req.bounded.then_some(req.max_rate),
            rate: initial,
            srtt: None,
            scheduled_interval: ctl.min_interval,
            last_loss: 0.0,
        }
    }

    fn clamp_rate(&self, rate: f64) -> f64 {
        let capped = match self.bounded_cap {
            Some(cap) => rate.min(cap),
            None => rate,
        };
        capped.max(self.ctl.rate_floor)
    }
}

impl RateController for AimdController {
    fn current_rate(&self) -> f64 {
        self.rate
    }

    fn scheduled_interval(&self) -> f64 {
        self.scheduled_interval
    }

    fn on_interval_end(&mut self, stats: &IntervalStats) -> Result<RateDecision, ControlError> {
        let scheduled = self.scheduled_interval;
        if (stats.duration - scheduled).abs() > 0.5 * scheduled {
            return Err(ControlError::StaleStats {
                actual: stats.duration,
                scheduled,
            });
        }
        if let Some(mean) = stats.mean_rtt() {
            self.srtt = Some(match self.srtt {
                Some(s) => 0.875 * s + 0.125 * mean,
                None => mean,
            });
        }
        self.last_loss = stats.loss_ratio;

        if stats.loss_ratio > self.cfg.loss_threshold {
            self.rate = self.clamp_rate(self.rate * self.cfg.multiplicative_decrease);
        } else {
            let rtt = self.srtt.unwrap_or(self.ctl.min_interval);
            self.rate =
                self.clamp_rate(self.rate + self.cfg.additive_increase * stats.duration / rtt);
        }

        self.scheduled_interval = self
            .srtt
            .map_or(self.ctl.min_interval, |s| s.max(self.ctl.min_interval));
        Ok(RateDecision {
            next_rate: self.rate,
            next_mode: crate::ratecontrol::Mode::Moving,
            interval_length: self.scheduled_interval,
        })
    }

    fn mode_label(&self) -> &'static str {
        "aimd"
    }

    fn last_utility(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(min: f64, max: f64) -> Requirement {
        Requirement::new(min, max, false).unwrap()
    }

    fn stats(rate: f64, loss: f64, rtt: f64, duration: f64) -> IntervalStats {
        IntervalStats::from_samples(
            rate,
            loss,
            vec![(0.0, rtt), (duration / 2.0, rtt), (duration, rtt)],
            duration,
        )
        .unwrap()
    }

    #[test]
    fn aimd_grows_additively_without_loss() {
        let mut c = AimdController::new(req(1e6, 2e6), AimdConfig::default(), ControllerConfig::default());
        let start = c.current_rate();
        // Three loss-free intervals, each exactly one RTT long.
        let mut d = None;
        for _ in 0..3 {
            let interval = c.scheduled_interval();
            d = Some(c.on_interval_end(&stats(c.current_rate(), 0.0, interval, interval)).unwrap());
        }
        let got = d.unwrap().next_rate;
        assert!(
            (got - (start + 3e6)).abs() < 1e-6,
            "expected {} got {got}",
            start + 3e6
        );
    }

    #[test]
    fn aimd_halves_on_loss() {
        let mut c = AimdController::new(req(50e6, 80e6), AimdConfig::default(), ControllerConfig::default());
        c.rate = 40e6;
        let interval = c.scheduled_interval();
        let d = c.on_interval_end(&stats(40e6, 0.02, interval, interval)).unwrap();
        assert!((d.next_rate - 20e6).abs() < 1e-6);
    }

    #[test]
    fn aimd_alternating_cycle_matches_closed_form() {
        // Strictly alternating loss / no-loss intervals settle into the
        // two-point cycle {ai, 2 ai} with mean 1.5 ai: after a halve to
        // h the rate grows to h + ai, and halving that returns h only
        // when h = ai.
        let ai = 1e6;
        let cfg = AimdConfig {
            additive_increase: ai,
            ..AimdConfig::default()
        };
        let mut c = AimdController::new(req(1e6, 2e6), cfg, ControllerConfig::default());
        c.rate = 7.3e6;
        let mut lossy = false;
        let mut visited = Vec::new();
        for _ in 0..200 {
            let interval = c.scheduled_interval();
            let loss = if lossy { 0.05 } else { 0.0 };
            let d = c.on_interval_end(&stats(c.rate, loss, interval, interval)).unwrap();
            visited.push(d.next_rate);
            lossy = !lossy;
        }
        let tail = &visited[visited.len() - 20..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 1.5 * ai).abs() < 0.05 * ai, "tail mean {mean}");
    }

    #[test]
    fn fair_share_utility_ignores_requirements() {
        let coeffs = CoefficientSet::default();
        let shape = FairShareUtility { coeffs };
        let s = IntervalStats::from_parts(10e6, 0.0, 0.0, 0.5, 0.01).unwrap();
        // The jitter term is dropped: a huge stddev changes nothing.
        assert_eq!(shape.utility(10e6, &s), 10e6f64.powf(0.9));
        // No congestion feedback at all: utility increases with rate.
        let quiet = IntervalStats::from_parts(10e6, 0.0, 0.0, 0.0, 0.01).unwrap();
        assert!(shape.utility(20e6, &quiet) > shape.utility(10e6, &quiet));
    }

    #[test]
    fn fair_share_controller_grows_without_feedback() {
        let cfg = ControllerConfig::default();
        let mut c = vivace_like_controller(req(1e6, 2e6), CoefficientSet::default(), cfg, 17);
        let mut rate = c.current_rate();
        let mut max_seen: f64 = rate;
        for _ in 0..100 {
            let stats =
                IntervalStats::from_parts(rate, 0.0, 0.0, 0.0, c.scheduled_interval()).unwrap();
            rate = c.on_interval_end(&stats).unwrap().next_rate;
            max_seen = max_seen.max(rate);
        }
        assert!(max_seen > 100e6, "stalled at {max_seen}");
    }
}

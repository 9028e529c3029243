//! Online-learning rate control: a slow-start / probing / moving state
//! machine that turns per-interval utility feedback into sending-rate
//! decisions.
//!
//! Slow start doubles the rate each interval until the utility drops or
//! the rate reaches the maximum requirement. Probing measures the
//! utility at x(1 + delta) and x(1 - delta) over two consecutive
//! sub-intervals (in seed-randomized order) and picks the direction of
//! the utility gradient. Moving multiplies the rate by (1 +/-
//! step_fraction) in the held direction until the utility decreases,
//! then drops back to probing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::core::{CoefficientSet, IntervalStats, Requirement};
use crate::utility;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    /// The supplied stats do not cover the interval the controller
    /// scheduled (duration off by more than 50%).
    #[error("stale stats: duration {actual}s vs scheduled {scheduled}s")]
    StaleStats { actual: f64, scheduled: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SlowStart,
    Probing,
    Moving,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::SlowStart => "slow_start",
            Mode::Probing => "probing",
            Mode::Moving => "moving",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Controller tunables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Cap on the initial sending rate, bits per second.
    pub initial_rate_cap: f64,
    /// Probe perturbation as a fraction of the current rate.
    pub delta: f64,
    /// Multiplicative step per moving interval.
    pub step_fraction: f64,
    /// Hard lower bound on emitted rates, bits per second.
    pub rate_floor: f64,
    /// Floor of the update-interval length; the interval is
    /// max(smoothed RTT, min_interval).
    pub min_interval: f64,
    /// EWMA weight of the newest interval in the smoothed feedback
    /// (loss ratio, RTT gradient, RTT deviation) the utility is
    /// evaluated against, in (0, 1]. 1 uses raw per-interval feedback.
    /// Smoothing lets a probe pair compare the shared congestion state
    /// instead of the transient its own perturbation caused.
    pub smoothing: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            initial_rate_cap: 5e3,
            delta: 0.05,
            step_fraction: 0.05,
            rate_floor: 1e3,
            min_interval: 0.010,
            smoothing: 0.3,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let mut faults = Vec::new();
        if !(self.delta > 0.0 && self.delta < 1.0) {
            faults.push(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            faults.push(format!(
                "step_fraction must be in (0, 1), got {}",
                self.step_fraction
            ));
        }
        if !(self.initial_rate_cap > 0.0) {
            faults.push(format!(
                "initial_rate_cap must be > 0, got {}",
                self.initial_rate_cap
            ));
        }
        if !(self.rate_floor > 0.0) {
            faults.push(format!("rate_floor must be > 0, got {}", self.rate_floor));
        }
        if !(self.min_interval > 0.0) {
            faults.push(format!(
                "min_interval must be > 0, got {}",
                self.min_interval
            ));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            faults.push(format!(
                "smoothing must be in (0, 1], got {}",
                self.smoothing
            ));
        }
        if faults.is_empty() {
            Ok(())
        } else {
            Err(faults.join("; "))
        }
    }
}

/// An in-flight two-point probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePlan {
    /// The rate the probe brackets.
    pub base_rate: f64,
    /// The two pending probe rates, base * (1 +/- delta), in the
    /// randomized order they will be sent.
    pub rates: [f64; 2],
    /// Index of the next probe sub-interval to send.
    pub next: usize,
    /// Measured (planned rate, utility) pairs.
    pub results: Vec<(f64, f64)>,
    /// Feedback (loss, gradient, deviation, duration) of the first
    /// sub-interval, kept so the pair can be compared under the
    /// combined conditions of both windows.
    first_window: Option<(f64, f64, f64, f64)>,
}

/// Observable controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mode: Mode,
    /// Rate scheduled for the interval now being sent, bits per second.
    pub current_rate: f64,
    /// Movement direction; meaningful in `Moving`.
    pub direction: Direction,
    /// Utility measured on the most recently evaluated interval.
    pub last_utility: Option<f64>,
    pub probe: Option<ProbePlan>,
    /// Length of the interval currently being sent, seconds.
    pub scheduled_interval: f64,
}

/// A per-interval rate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDecision {
    pub next_rate: f64,
    pub next_mode: Mode,
    pub interval_length: f64,
}

/// The utility shape a controller optimizes. The requirement-aware
/// shape and the fair-share baseline both drive the same state machine.
pub trait UtilityModel: Send {
    fn utility(&self, rate: f64, stats: &IntervalStats) -> f64;

    /// Maximum requirement for the slow-start exit rule; `None`
    /// disables the rule (requirement-blind shapes).
    fn max_requirement(&self) -> Option<f64>;
}

/// Requirement-aware utility shape.
#[derive(Debug, Clone)]
pub struct HerculesUtility {
    pub req: Requirement,
    pub coeffs: CoefficientSet,
}

impl UtilityModel for HerculesUtility {
    fn utility(&self, rate: f64, stats: &IntervalStats) -> f64 {
        utility::utility(rate, &self.req, stats, &self.coeffs).value
    }

    fn max_requirement(&self) -> Option<f64> {
        Some(self.req.max_rate)
    }
}

/// Uniform controller interface the simulator drives.
pub trait RateController: Send {
    /// Rate scheduled for the interval currently being sent.
    fn current_rate(&self) -> f64;

    /// Length of the interval currently being sent, seconds.
    fn scheduled_interval(&self) -> f64;

    /// Consumes the completed interval's feedback and decides the next
    /// rate and interval.
    fn on_interval_end(&mut self, stats: &IntervalStats) -> Result<RateDecision, ControlError>;

    fn mode_label(&self) -> &'static str;

    /// Utility measured on the most recent completed interval.
    fn last_utility(&self) -> f64;
}

/// The probing rate controller.
pub struct Controller {
    model: Box<dyn UtilityModel>,
    cfg: ControllerConfig,
    /// Hard cap on emitted rates for bounded applications.
    bounded_cap: Option<f64>,
    state: ControllerState,
    srtt: Option<f64>,
    /// EWMA-smoothed congestion feedback the utility is evaluated on.
    smoothed: Option<(f64, f64, f64)>,
    /// Rate achieved on the previous interval; "utility decreased"
    /// compares this rate and the current one under the same smoothed
    /// feedback, so the comparison tracks the utility gradient rather
    /// than drift in the congestion level between the two intervals.
    last_rate: Option<f64>,
    last_measured_utility: f64,
    rng: ChaCha8Rng,
}

/// Builds a requirement-aware controller. The initial sending rate is
/// the minimum of the configured cap and the connection's minimum
/// requirement, entering slow start.
pub fn new_controller(
    req: Requirement,
    coeffs: CoefficientSet,
    cfg: ControllerConfig,
    seed: u64,
) -> Controller {
    Controller::new(
        Box::new(HerculesUtility { req, coeffs }),
        req,
        cfg,
        seed,
    )
}

impl Controller {
    /// Builds a controller over an arbitrary utility shape. The
    /// requirement still supplies the initial rate and the bounded cap.
    pub fn new(
        model: Box<dyn UtilityModel>,
        req: Requirement,
        cfg: ControllerConfig,
        seed: u64,
    ) -> Controller {
        let initial = cfg.initial_rate_cap.min(req.min_rate).max(cfg.rate_floor);
        Controller {
            model,
            cfg,
            bounded_cap: req.bounded.then_some(req.max_rate),
            state: ControllerState {
                mode: Mode::SlowStart,
                current_rate: initial,
                direction: Direction::Up,
                last_utility: None,
                probe: None,
                scheduled_interval: cfg.min_interval,
            },
            srtt: None,
            smoothed: None,
            last_rate: None,
            last_measured_utility: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Update-interval length: max(smoothed RTT, min_interval), falling
    /// back to min_interval before any RTT sample exists.
    pub fn plan_interval(&self) -> f64 {
        match self.srtt {
            Some(srtt) => srtt.max(self.cfg.min_interval),
            None => self.cfg.min_interval,
        }
    }

    fn clamp_rate(&self, rate: f64) -> f64 {
        let capped = match self.bounded_cap {
            Some(cap) => rate.min(cap),
            None => rate,
        };
        capped.max(self.cfg.rate_floor)
    }

    fn enter_probing(&mut self, measured_utility: f64) {
        let base = self.state.current_rate;
        let hi = base * (1.0 + self.cfg.delta);
        let lo = base * (1.0 - self.cfg.delta);
        let rates = if self.rng.gen_bool(0.5) { [hi, lo] } else { [lo, hi] };
        self.state.current_rate = self.clamp_rate(rates[0]);
        self.state.probe = Some(ProbePlan {
            base_rate: base,
            rates,
            next: 1,
            results: Vec::with_capacity(2),
            first_window: None,
        });
        self.state.mode = Mode::Probing;
        self.state.last_utility = Some(measured_utility);
    }

    fn step_slow_start(&mut self, u: f64, decreased: bool) {
        let exceeded = self
            .model
            .max_requirement()
            .is_some_and(|max| self.state.current_rate >= max);
        if decreased || exceeded {
            // Rate held; the probe brackets it.
            self.enter_probing(u);
        } else {
            self.state.last_utility = Some(u);
            self.state.current_rate = self.clamp_rate(self.state.current_rate * 2.0);
        }
    }

    fn step_probing(&mut self, u: f64, eval_stats: &IntervalStats) {
        let mut plan = self.state.probe.take().expect("probing mode carries a plan");
        let just_measured = plan.rates[plan.next - 1];
        plan.results.push((just_measured, u));

        if plan.next == 1 {
            plan.next = 2;
            plan.first_window = Some((
                eval_stats.loss_ratio,
                eval_stats.rtt_gradient,
                eval_stats.rtt_stddev,
                eval_stats.duration,
            ));
            self.state.current_rate = self.clamp_rate(plan.rates[1]);
            self.state.probe = Some(plan);
            return;
        }

        // Both sub-intervals measured. Compare the pair under the
        // combined feedback of both windows, so the two rates face the
        // same congestion state and the sign reflects the utility
        // gradient rather than the perturbation each probe caused.
        let pair_stats = match plan.first_window {
            Some((loss, gradient, stddev, dur)) => {
                let total = dur + eval_stats.duration;
                let w1 = dur / total;
                let w2 = eval_stats.duration / total;
                IntervalStats {
                    avg_rate: eval_stats.avg_rate,
                    loss_ratio: w1 * loss + w2 * eval_stats.loss_ratio,
                    rtt_samples: Vec::new(),
                    rtt_gradient: w1 * gradient + w2 * eval_stats.rtt_gradient,
                    rtt_stddev: w1 * stddev + w2 * eval_stats.rtt_stddev,
                    duration: total,
                }
            }
            None => eval_stats.clone(),
        };
        let (rate_hi, rate_lo) = if plan.rates[0] > plan.rates[1] {
            (plan.results[0].0, plan.results[1].0)
        } else {
            (plan.results[1].0, plan.results[0].0)
        };
        let u_hi = self.model.utility(self.clamp_rate(rate_hi), &pair_stats);
        let u_lo = self.model.utility(self.clamp_rate(rate_lo), &pair_stats);
        let scale = u_hi.abs().max(u_lo.abs()).max(f64::MIN_POSITIVE);
        let up = (u_hi - u_lo) > 1e-12 * scale;
        self.state.direction = if up { Direction::Up } else { Direction::Down };
        let winner = plan.base_rate
            * if up {
                1.0 + self.cfg.delta
            } else {
                1.0 - self.cfg.delta
            };
        self.state.current_rate = self.clamp_rate(winner);
        self.state.last_utility = Some(if up { u_hi } else { u_lo });
        self.state.mode = Mode::Moving;
        self.state.probe = None;
    }

    fn step_moving(&mut self, u: f64, decreased: bool, prev_rate: Option<f64>) {
        if decreased {
            // The last step crossed the utility peak: probe around the
            // rate that preceded it rather than the overshoot itself.
            if let Some(prev) = prev_rate {
                self.state.current_rate = self.clamp_rate(prev);
            }
            self.enter_probing(u);
            return;
        }
        self.state.last_utility = Some(u);
        let factor = match self.state.direction {
            Direction::Up => 1.0 + self.cfg.step_fraction,
            Direction::Down => 1.0 - self.cfg.step_fraction,
        };
        self.state.current_rate = self.clamp_rate(self.state.current_rate * factor);
    }
}

impl RateController for Controller {
    fn current_rate(&self) -> f64 {
        self.state.current_rate
    }

    fn scheduled_interval(&self) -> f64 {
        self.state.scheduled_interval
    }

    fn on_interval_end(&mut self, stats: &IntervalStats) -> Result<RateDecision, ControlError> {
        let scheduled = self.state.scheduled_interval;
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

        // Evaluate the utility against smoothed congestion feedback at
        // this interval's achieved rate.
        let alpha = self.cfg.smoothing;
        let raw = (stats.loss_ratio, stats.rtt_gradient, stats.rtt_stddev);
        let sm = match self.smoothed {
            Some(prev) => (
                prev.0 + alpha * (raw.0 - prev.0),
                prev.1 + alpha * (raw.1 - prev.1),
                prev.2 + alpha * (raw.2 - prev.2),
            ),
            None => raw,
        };
        self.smoothed = Some(sm);
        let eval_stats = IntervalStats {
            avg_rate: stats.avg_rate,
            loss_ratio: sm.0,
            rtt_samples: Vec::new(),
            rtt_gradient: sm.1,
            rtt_stddev: sm.2,
            duration: stats.duration,
        };
        let u = self.model.utility(stats.avg_rate, &eval_stats);
        self.last_measured_utility = u;
        // "Utility decreased" holds the congestion feedback fixed and
        // compares the two most recent rates under it.
        let prev_rate = self.last_rate;
        let decreased = prev_rate.is_some_and(|prev| u < self.model.utility(prev, &eval_stats));
        self.last_rate = Some(stats.avg_rate);
        match self.state.mode {
            Mode::SlowStart => self.step_slow_start(u, decreased),
            Mode::Probing => self.step_probing(u, &eval_stats),
            Mode::Moving => self.step_moving(u, decreased, prev_rate),
        }

        self.state.scheduled_interval = self.plan_interval();
        Ok(RateDecision {
            next_rate: self.state.current_rate,
            next_mode: self.state.mode,
            interval_length: self.state.scheduled_interval,
        })
    }

    fn mode_label(&self) -> &'static str {
        self.state.mode.label()
    }

    fn last_utility(&self) -> f64 {
        self.last_measured_utility
    }
}

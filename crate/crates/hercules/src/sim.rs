//! Deterministic discrete-time fluid-flow simulation of a single
//! bottleneck link: shared capacity, FIFO drop-tail queue with a finite
//! buffer, propagation delay, seeded random loss, time-varying
//! capacity, and staggered connection arrivals.
//!
//! Rates are fluid: each tick a sender offers `rate * dt` bits, the
//! queue integrates the difference between offered load and capacity,
//! and overflow is shared in proportion to offered rates. Feedback
//! (loss and RTT samples) reaches a sender one RTT after the tick it
//! describes, modeling the ACK return path. A simulation run is
//! single-threaded and bit-deterministic for a fixed setup and seed.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{AimdConfig, AimdController, vivace_like_controller};
use crate::core::{CoefficientSet, IntervalStats, Requirement};
use crate::ratecontrol::{new_controller, ControlError, ControllerConfig, RateController};

/// Notional packet size used to discretize fluid for random-loss
/// thinning, bits (1500-byte packets).
const PACKET_BITS: f64 = 12_000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("no feedback samples in measurement window")]
    EmptyWindow,

    #[error(transparent)]
    Controller(#[from] ControlError),
}

/// One step of a piecewise-constant capacity schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitySegment {
    /// Segment start, seconds.
    pub start: f64,
    /// Capacity from `start` onward, bits per second.
    pub capacity: f64,
}

/// The bottleneck link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    /// Piecewise-constant capacity, first segment starting at 0.
    pub capacity_schedule: Vec<CapacitySegment>,
    /// Two-way propagation delay with an empty queue, seconds.
    pub base_rtt: f64,
    /// Queue buffer, bits. A buffer given in BDP multiples is resolved
    /// against the first capacity segment and the base RTT before the
    /// run; mid-run capacity changes do not resize it.
    pub buffer_bits: f64,
    /// Independent random loss applied to offered traffic, in [0, 1].
    pub random_loss: f64,
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.capacity_schedule.is_empty() {
            return Err(SimError::InvalidScenario("empty capacity schedule".into()));
        }
        if self.capacity_schedule[0].start != 0.0 {
            return Err(SimError::InvalidScenario(format!(
                "capacity schedule must start at 0, got {}",
                self.capacity_schedule[0].start
            )));
        }
        for pair in self.capacity_schedule.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(SimError::InvalidScenario(
                    "capacity schedule times must be strictly increasing".into(),
                ));
            }
        }
        if self.capacity_schedule.iter().any(|s| !(s.capacity > 0.0)) {
            return Err(SimError::InvalidScenario("capacities must be > 0".into()));
        }
        if !(self.base_rtt > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "base_rtt must be > 0, got {}",
                self.base_rtt
            )));
        }
        if !(self.buffer_bits >= 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "buffer must be >= 0, got {}",
                self.buffer_bits
            )));
        }
        if !(0.0..=1.0).contains(&self.random_loss) {
            return Err(SimError::InvalidScenario(format!(
                "random_loss must be in [0, 1], got {}",
                self.random_loss
            )));
        }
        Ok(())
    }

    pub fn capacity_at(&self, t: f64) -> f64 {
        let mut cap = self.capacity_schedule[0].capacity;
        for seg in &self.capacity_schedule {
            if seg.start <= t {
                cap = seg.capacity;
            } else {
                break;
            }
        }
        cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Hercules,
    VivaceLike,
    Aimd,
}

impl Protocol {
    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Hercules => "hercules",
            Protocol::VivaceLike => "vivace_like",
            Protocol::Aimd => "aimd",
        }
    }
}

/// One competing connection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionSpec {
    pub id: String,
    pub requirement: Requirement,
    pub protocol: Protocol,
    /// Arrival time, seconds.
    pub start_time: f64,
    /// Departure time, seconds; `None` runs to the end.
    pub stop_time: Option<f64>,
}

impl ConnectionSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        self.requirement
            .validate()
            .map_err(|e| SimError::InvalidScenario(format!("connection {:?}: {e}", self.id)))?;
        if !(self.start_time >= 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "connection {:?}: start_time must be >= 0",
                self.id
            )));
        }
        if let Some(stop) = self.stop_time {
            if !(stop > self.start_time) {
                return Err(SimError::InvalidScenario(format!(
                    "connection {:?}: stop_time must exceed start_time",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A fully lowered, runnable experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub link: LinkModel,
    pub connections: Vec<ConnectionSpec>,
    pub coefficients: CoefficientSet,
    pub controller: ControllerConfig,
    pub aimd: AimdConfig,
    /// Run length, seconds.
    pub duration: f64,
    /// Tick length, seconds.
    pub tick: f64,
    /// Record every Nth tick in the time series.
    pub record_stride: u32,
    pub seed: u64,
}

impl SimSetup {
    pub fn validate(&self) -> Result<(), SimError> {
        self.link.validate()?;
        if self.connections.is_empty() {
            return Err(SimError::InvalidScenario("no connections".into()));
        }
        for conn in &self.connections {
            conn.validate()?;
        }
        self.coefficients
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.controller
            .validate()
            .map_err(SimError::InvalidScenario)?;
        self.aimd.validate().map_err(SimError::InvalidScenario)?;
        if !(self.duration > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        if !(self.tick > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "tick must be > 0, got {}",
                self.tick
            )));
        }
        // RTT gradients need several samples per RTT to be resolvable.
        if self.tick > self.link.base_rtt / 4.0 {
            return Err(SimError::InvalidScenario(format!(
                "tick {} exceeds base_rtt / 4 = {}",
                self.tick,
                self.link.base_rtt / 4.0
            )));
        }
        if self.tick > self.controller.min_interval {
            return Err(SimError::InvalidScenario(format!(
                "tick {} exceeds the minimum update interval {}",
                self.tick, self.controller.min_interval
            )));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidScenario("record_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// One recorded time-series row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    /// Connection index into the setup's connection list.
    pub conn: usize,
    pub send_rate: f64,
    pub throughput: f64,
    pub utility: f64,
    pub mode: &'static str,
    pub rtt: f64,
    pub loss_ratio: f64,
}

/// Per-connection end-of-run metrics. Every field is recomputable from
/// the recorded time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionSummary {
    pub id: String,
    pub protocol: Protocol,
    pub min_rate_bps: f64,
    pub max_rate_bps: f64,
    /// Mean recorded sending rate while active, bits per second.
    pub avg_rate_bps: f64,
    /// avg_rate / min_rate.
    pub satisfaction: f64,
    /// Offered-weighted mean recorded loss ratio.
    pub loss_ratio: f64,
}

/// The output of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub records: Vec<TickRecord>,
    pub conn_ids: Vec<String>,
    pub protocols: Vec<Protocol>,
    pub summaries: Vec<ConnectionSummary>,
    /// Mean over recorded ticks of aggregate sending rate / capacity.
    pub utilization: f64,
    /// Output of the convergence detector at default band and hold.
    pub convergence_time: Option<f64>,
    pub duration: f64,
    pub tick: f64,
    pub record_stride: u32,
    pub seed: u64,
}

impl SimResult {
    /// (time, send_rate) series for one connection.
    pub fn rate_series(&self, conn: usize) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter(|r| r.conn == conn)
            .map(|r| (r.time, r.send_rate))
            .collect()
    }

    /// Mean recorded sending rate of one connection over [t0, t1).
    pub fn avg_rate_between(&self, conn: usize, t0: f64, t1: f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0u64;
        for r in &self.records {
            if r.conn == conn && r.time >= t0 && r.time < t1 {
                sum += r.send_rate;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Mass-balance bookkeeping for one tick, all in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickAudit {
    pub time: f64,
    pub offered: f64,
    pub random_lost: f64,
    pub overflow_lost: f64,
    pub delivered: f64,
    pub queue_delta: f64,
    pub queue_after: f64,
    pub capacity: f64,
    pub rtt: f64,
}

/// A delivered feedback sample describing one tick of sending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSample {
    pub t: f64,
    pub rtt: f64,
    pub offered_bits: f64,
    pub lost_bits: f64,
}

struct PendingSample {
    available_at: f64,
    sample: FeedbackSample,
}

struct Sender {
    started: bool,
    active: bool,
    controller: Box<dyn RateController>,
    rate: f64,
    window_start: f64,
    window_end: f64,
    pending: VecDeque<PendingSample>,
    received: VecDeque<FeedbackSample>,
    queue_bits: f64,
    rng: ChaCha8Rng,
    last_stats: Option<IntervalStats>,
}

/// A stepping fluid-flow simulation.
pub struct Simulation {
    setup: SimSetup,
    clock: f64,
    tick_index: u64,
    senders: Vec<Sender>,
    records: Vec<TickRecord>,
}

impl Simulation {
    pub fn new(setup: SimSetup) -> Result<Simulation, SimError> {
        setup.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(setup.seed);
        let mut senders = Vec::with_capacity(setup.connections.len());
        for conn in &setup.connections {
            use rand::RngCore;
            let loss_seed = master.next_u64();
            let controller_seed = master.next_u64();
            let controller: Box<dyn RateController> = match conn.protocol {
                Protocol::Hercules => Box::new(new_controller(
                    conn.requirement,
                    setup.coefficients,
                    setup.controller,
                    controller_seed,
                )),
                Protocol::VivaceLike => Box::new(vivace_like_controller(
                    conn.requirement,
                    setup.coefficients,
                    setup.controller,
                    controller_seed,
                )),
                Protocol::Aimd => Box::new(AimdController::new(
                    conn.requirement,
                    setup.aimd,
                    setup.controller,
                )),
            };
            senders.push(Sender {
                started: false,
                active: false,
                rate: 0.0,
                window_start: 0.0,
                window_end: 0.0,
                pending: VecDeque::new(),
                received: VecDeque::new(),
                queue_bits: 0.0,
                rng: ChaCha8Rng::seed_from_u64(loss_seed),
                last_stats: None,
                controller,
            });
        }
        Ok(Simulation {
            setup,
            clock: 0.0,
            tick_index: 0,
            senders,
            records: Vec::new(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn queue_bits(&self) -> f64 {
        self.senders.iter().map(|s| s.queue_bits).sum()
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) -> Result<TickAudit, SimError> {
        let t = self.clock;
        let dt = self.setup.tick;
        let next_clock = t + dt;
        let capacity = self.setup.link.capacity_at(t);
        let cap_bits = capacity * dt;
        let buffer = self.setup.link.buffer_bits;
        let loss_p = self.setup.link.random_loss;
        let n = self.senders.len();

        // Arrivals and departures.
        for (i, s) in self.senders.iter_mut().enumerate() {
            let spec = &self.setup.connections[i];
            if !s.started && t >= spec.start_time {
                s.started = true;
                s.active = true;
                s.rate = s.controller.current_rate();
                s.window_start = t;
                s.window_end = t + s.controller.scheduled_interval();
            }
            if s.active {
                if let Some(stop) = spec.stop_time {
                    if t >= stop {
                        s.active = false;
                        s.rate = 0.0;
                    }
                }
            }
        }

        // Offered traffic and independent random loss (binomial
        // thinning over notional packets so the realized loss ratio
        // converges to the configured rate).
        let mut offered = vec![0.0; n];
        let mut random_lost = vec![0.0; n];
        let mut inflow = vec![0.0; n];
        let mut total_inflow = 0.0;
        let mut total_offered = 0.0;
        for (i, s) in self.senders.iter_mut().enumerate() {
            if !s.active {
                continue;
            }
            let bits = s.rate * dt;
            offered[i] = bits;
            total_offered += bits;
            if loss_p > 0.0 && bits > 0.0 {
                let pkts = (bits / PACKET_BITS).round().max(1.0) as u64;
                let dist = Binomial::new(pkts, loss_p).expect("validated loss probability");
                let lost_pkts = dist.sample(&mut s.rng);
                random_lost[i] = bits * lost_pkts as f64 / pkts as f64;
            }
            inflow[i] = bits - random_lost[i];
            total_inflow += inflow[i];
        }

        // Queue update: drain up to capacity, clamp at the buffer, and
        // share overflow in proportion to offered rates.
        let queue_before: f64 = self.senders.iter().map(|s| s.queue_bits).sum();
        let available = queue_before + total_inflow;
        let delivered = cap_bits.min(available);
        let overflow = (available - delivered - buffer).max(0.0);
        let pool = available - overflow;
        let mut delivered_each = vec![0.0; n];
        for (i, s) in self.senders.iter_mut().enumerate() {
            let over_i = if total_inflow > 0.0 {
                overflow * inflow[i] / total_inflow
            } else {
                0.0
            };
            let pool_i = s.queue_bits + inflow[i] - over_i;
            let drain_i = if pool > 0.0 { delivered * pool_i / pool } else { 0.0 };
            s.queue_bits = (pool_i - drain_i).max(0.0);
            delivered_each[i] = drain_i;
            random_lost[i] += over_i; // total per-sender loss this tick
        }
        let queue_after: f64 = self.senders.iter().map(|s| s.queue_bits).sum();
        let rtt = self.setup.link.base_rtt + queue_after / capacity;

        // Feedback samples, delayed by one current RTT.
        for (i, s) in self.senders.iter_mut().enumerate() {
            if !s.active {
                continue;
            }
            s.pending.push_back(PendingSample {
                available_at: t + rtt,
                sample: FeedbackSample {
                    t,
                    rtt,
                    offered_bits: offered[i],
                    lost_bits: random_lost[i],
                },
            });
            while let Some(front) = s.pending.front() {
                if front.available_at <= next_clock {
                    let p = s.pending.pop_front().expect("non-empty");
                    s.received.push_back(p.sample);
                } else {
                    break;
                }
            }
        }

        // Time series.
        if self.tick_index % self.setup.record_stride as u64 == 0 {
            for (i, s) in self.senders.iter().enumerate() {
                if !s.active {
                    continue;
                }
                self.records.push(TickRecord {
                    time: t,
                    conn: i,
                    send_rate: s.rate,
                    throughput: delivered_each[i] / dt,
                    utility: s.controller.last_utility(),
                    mode: s.controller.mode_label(),
                    rtt,
                    loss_ratio: if offered[i] > 0.0 {
                        random_lost[i] / offered[i]
                    } else {
                        0.0
                    },
                });
            }
        }

        // Interval boundaries: act once the window has elapsed and all
        // feedback describing it has arrived.
        for s in self.senders.iter_mut() {
            if !s.active || next_clock < s.window_end {
                continue;
            }
            let feedback_complete = s
                .pending
                .front()
                .map_or(true, |p| p.sample.t >= s.window_end);
            if !feedback_complete {
                continue;
            }
            while s.received.front().is_some_and(|f| f.t < s.window_start) {
                s.received.pop_front();
            }
            let mut window = Vec::new();
            while s.received.front().is_some_and(|f| f.t < s.window_end) {
                window.push(s.received.pop_front().expect("non-empty"));
            }
            let stats = match window_stats(&window, dt) {
                Ok(stats) => stats,
                Err(SimError::EmptyWindow) => match &s.last_stats {
                    Some(prev) => prev.clone(),
                    None => return Err(SimError::EmptyWindow),
                },
                Err(e) => return Err(e),
            };
            let decision = s.controller.on_interval_end(&stats)?;
            s.last_stats = Some(stats);
            s.rate = decision.next_rate;
            s.window_start = next_clock;
            s.window_end = next_clock + decision.interval_length;
        }

        self.clock = next_clock;
        self.tick_index += 1;
        Ok(TickAudit {
            time: t,
            offered: total_offered,
            random_lost: total_offered - total_inflow,
            overflow_lost: overflow,
            delivered,
            queue_delta: queue_after - queue_before,
            queue_after,
            capacity,
            rtt,
        })
    }

    /// Runs out the configured duration and produces the result.
    pub fn run_to_end(mut self) -> Result<SimResult, SimError> {
        let ticks = (self.setup.duration / self.setup.tick).round() as u64;
        for _ in 0..ticks {
            self.step()?;
        }
        Ok(self.finalize())
    }

    fn finalize(self) -> SimResult {
        let setup = self.setup;
        let n = setup.connections.len();
        let mut rate_sum = vec![0.0; n];
        let mut rate_count = vec![0u64; n];
        let mut loss_weighted = vec![0.0; n];
        let mut util_sum = 0.0;
        let mut util_ticks = 0u64;

        let mut idx = 0;
        while idx < self.records.len() {
            let t = self.records[idx].time;
            let mut aggregate = 0.0;
            while idx < self.records.len() && self.records[idx].time == t {
                let r = &self.records[idx];
                rate_sum[r.conn] += r.send_rate;
                rate_count[r.conn] += 1;
                loss_weighted[r.conn] += r.loss_ratio * r.send_rate;
                aggregate += r.send_rate;
                idx += 1;
            }
            util_sum += aggregate / setup.link.capacity_at(t);
            util_ticks += 1;
        }

        let summaries = setup
            .connections
            .iter()
            .enumerate()
            .map(|(i, conn)| {
                let avg = if rate_count[i] == 0 {
                    0.0
                } else {
                    rate_sum[i] / rate_count[i] as f64
                };
                ConnectionSummary {
                    id: conn.id.clone(),
                    protocol: conn.protocol,
                    min_rate_bps: conn.requirement.min_rate,
                    max_rate_bps: conn.requirement.max_rate,
                    avg_rate_bps: avg,
                    satisfaction: avg / conn.requirement.min_rate,
                    loss_ratio: if rate_sum[i] > 0.0 {
                        loss_weighted[i] / rate_sum[i]
                    } else {
                        0.0
                    },
                }
            })
            .collect();

        let per_conn: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|i| {
                self.records
                    .iter()
                    .filter(|r| r.conn == i)
                    .map(|r| (r.time, r.send_rate))
                    .collect()
            })
            .collect();
        let convergence = convergence_time(&per_conn, 0.10, 5.0);

        SimResult {
            records: self.records,
            conn_ids: setup.connections.iter().map(|c| c.id.clone()).collect(),
            protocols: setup.connections.iter().map(|c| c.protocol).collect(),
            summaries,
            utilization: if util_ticks == 0 {
                0.0
            } else {
                util_sum / util_ticks as f64
            },
            convergence_time: convergence,
            duration: setup.duration,
            tick: setup.tick,
            record_stride: setup.record_stride,
            seed: setup.seed,
        }
    }
}

/// Runs a lowered setup to completion.
pub fn run(setup: SimSetup) -> Result<SimResult, SimError> {
    Simulation::new(setup)?.run_to_end()
}

/// Builds interval stats from the feedback samples of one measurement
/// window. The loss ratio is lost / offered over the window, the RTT
/// gradient is the least-squares slope of the window's samples, and the
/// deviation is the population standard deviation.
pub fn window_stats(samples: &[FeedbackSample], dt: f64) -> Result<IntervalStats, SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let offered: f64 = samples.iter().map(|s| s.offered_bits).sum();
    let lost: f64 = samples.iter().map(|s| s.lost_bits).sum();
    let duration = samples.len() as f64 * dt;
    let rtt_samples: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.rtt)).collect();
    let loss_ratio = if offered > 0.0 {
        (lost / offered).clamp(0.0, 1.0)
    } else {
        0.0
    };
    IntervalStats::from_samples(offered / duration, loss_ratio, rtt_samples, duration)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))
}

/// Earliest time T after which every connection's rate stays within
/// +/- `band` of its trailing mean for `hold` continuously: every
/// window [s, s + hold] with s >= T must keep each connection inside
/// the band around that window's mean (the trailing mean as seen from
/// the window end), and every connection must have samples covering
/// the window. Returns `None` if the tail of the series never settles.
pub fn convergence_time(per_conn: &[Vec<(f64, f64)>], band: f64, hold: f64) -> Option<f64> {
    let series: Vec<&Vec<(f64, f64)>> = per_conn.iter().filter(|s| !s.is_empty()).collect();
    if series.is_empty() {
        return None;
    }
    // Uniform sample spacing on a shared grid.
    let delta = series
        .iter()
        .filter_map(|s| s.windows(2).map(|w| w[1].0 - w[0].0).next())
        .fold(f64::INFINITY, f64::min);
    if !delta.is_finite() || delta <= 0.0 {
        // Single-sample series: only a zero hold could succeed.
        return None;
    }
    let w = (hold / delta).round().max(1.0) as usize;

    let index_of = |t: f64| -> i64 { (t / delta).round() as i64 };
    let mut starts: Vec<i64> = Vec::new();
    let mut valids: Vec<Vec<bool>> = Vec::new();
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for s in &series {
        let i0 = index_of(s[0].0);
        if s.len() < w + 1 {
            return None;
        }
        let valid = window_in_band(s, w, band);
        lo = lo.min(i0);
        hi = hi.max(i0 + (s.len() - 1) as i64);
        starts.push(i0);
        valids.push(valid);
    }

    // A window start is acceptable only when every connection covers
    // it and sits inside its band; convergence requires every window
    // from T to the end of the series to be acceptable, so walk the
    // starts backward while they stay valid.
    let window_valid = |g: i64| -> bool {
        series.iter().enumerate().all(|(k, s)| {
            let i0 = starts[k];
            let rel = g - i0;
            rel >= 0
                && (g + w as i64) <= i0 + (s.len() - 1) as i64
                && valids[k][rel as usize]
        })
    };
    let last = hi - w as i64;
    if last < lo || !window_valid(last) {
        return None;
    }
    let mut earliest = last;
    for g in (lo..last).rev() {
        if window_valid(g) {
            earliest = g;
        } else {
            break;
        }
    }
    Some(earliest as f64 * delta)
}

/// For each window start index, whether all w+1 samples lie within
/// +/- band of the window mean. Sliding prefix sums and monotonic
/// deques keep this linear.
fn window_in_band(series: &[(f64, f64)], w: usize, band: f64) -> Vec<bool> {
    let n = series.len();
    let count = n - w;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &(_, r) in series {
        prefix.push(prefix.last().unwrap() + r);
    }
    let mut out = Vec::with_capacity(count);
    let mut min_dq: VecDeque<usize> = VecDeque::new();
    let mut max_dq: VecDeque<usize> = VecDeque::new();
    for i in 0..n {
        while min_dq.back().is_some_and(|&b| series[b].1 >= series[i].1) {
            min_dq.pop_back();
        }
        min_dq.push_back(i);
        while max_dq.back().is_some_and(|&b| series[b].1 <= series[i].1) {
            max_dq.pop_back();
        }
        max_dq.push_back(i);
        if i >= w {
            let s = i - w;
            while *min_dq.front().unwrap() < s {
                min_dq.pop_front();
            }
            while *max_dq.front().unwrap() < s {
                max_dq.pop_front();
            }
            let mean = (prefix[i + 1] - prefix[s]) / (w + 1) as f64;
            let lo = series[*min_dq.front().unwrap()].1;
            let hi = series[*max_dq.front().unwrap()].1;
            let ok = if mean > 0.0 {
                hi <= mean * (1.0 + band) && lo >= mean * (1.0 - band)
            } else {
                hi == 0.0 && lo == 0.0
            };
            out.push(ok);
        }
    }
    debug_assert_eq!(out.len(), count);
    out
}

/// Mean of aggregate recorded sending rate over capacity, over [t0, t1).
pub fn utilization_between(result: &SimResult, link: &LinkModel, t0: f64, t1: f64) -> f64 {
    let mut sum = 0.0;
    let mut ticks = 0u64;
    let mut idx = 0;
    let records = &result.records;
    while idx < records.len() {
        let t = records[idx].time;
        let mut aggregate = 0.0;
        while idx < records.len() && records[idx].time == t {
            aggregate += records[idx].send_rate;
            idx += 1;
        }
        if t >= t0 && t < t1 {
            sum += aggregate / link.capacity_at(t);
            ticks += 1;
        }
    }
    if ticks == 0 {
        0.0
    } else {
        sum / ticks as f64
    }
}

//! Experiment harness: runs seeded trials of a scenario, aggregates
//! summary metrics, writes time-series CSV and summary JSON, and
//! drives parameter sweeps.
//!
//! Trials run in parallel (they share no mutable state); each trial
//! uses seed, seed + 1, ... so results are independent of scheduling.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fairness::{hrf_allocate, mmf_allocate, Allocation, AllocationProblem};
use crate::scenario::{emit, ScenarioConfig, ScenarioError};
use crate::sim::{self, SimError, SimResult, TickRecord};
use crate::units::{Bandwidth, BufferSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },

    #[error("{0}")]
    Sweep(String),
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Per-connection metrics aggregated across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionReport {
    pub id: String,
    pub protocol: String,
    pub min_rate_bps: f64,
    pub max_rate_bps: f64,
    pub avg_rate_bps_mean: f64,
    pub satisfaction_mean: f64,
    /// Minimum satisfaction across trials (the guaranteed ratio).
    pub satisfaction_worst: f64,
    pub loss_ratio_mean: f64,
}

/// Reference allocation from a fairness oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleAllocation {
    pub capacity_bps: f64,
    pub rates_bps: Vec<f64>,
    pub normalized: Vec<f64>,
    pub theta: f64,
}

impl OracleAllocation {
    fn from(alloc: Allocation, capacity: f64) -> Self {
        OracleAllocation {
            capacity_bps: capacity,
            rates_bps: alloc.rates,
            normalized: alloc.normalized,
            theta: alloc.theta,
        }
    }
}

/// Aggregate report over all trials of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub scenario: String,
    pub d_scale: f64,
    pub trials: u32,
    pub seed: u64,
    pub per_connection: Vec<ConnectionReport>,
    pub utilization_median: f64,
    pub utilization_mean: f64,
    /// Median convergence-detector output across trials that converged.
    pub convergence_time_s: Option<f64>,
    /// Reference allocation over the first capacity segment, honoring
    /// bounded caps.
    pub hrf_reference: OracleAllocation,
    pub mmf_reference: OracleAllocation,
}

/// Runs every trial of a scenario (seed, seed + 1, ...), in parallel.
pub fn run_trials(config: &ScenarioConfig) -> Result<Vec<SimResult>, HarnessError> {
    config.validate()?;
    (0..config.trials as u64)
        .into_par_iter()
        .map(|k| {
            let setup = config.to_setup(config.seed.wrapping_add(k));
            sim::run(setup).map_err(HarnessError::from)
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fairness-oracle references for a scenario over a given capacity.
pub fn oracle_allocations(
    config: &ScenarioConfig,
    capacity: f64,
) -> (OracleAllocation, OracleAllocation) {
    let requirements = config
        .connection_specs()
        .iter()
        .map(|c| c.requirement)
        .collect::<Vec<_>>();
    let problem = AllocationProblem {
        requirements,
        capacity,
        respect_bounds: true,
    };
    let hrf = OracleAllocation::from(hrf_allocate(&problem), capacity);
    let mmf = OracleAllocation::from(mmf_allocate(&problem), capacity);
    (hrf, mmf)
}

/// Aggregates trial results into a summary report.
pub fn summarize(results: &[SimResult], config: &ScenarioConfig) -> SummaryReport {
    let n = config.connections.len();
    let mut per_connection = Vec::with_capacity(n);
    for i in 0..n {
        let avg_mean = results.iter().map(|r| r.summaries[i].avg_rate_bps).sum::<f64>()
            / results.len() as f64;
        let sat_mean = results.iter().map(|r| r.summaries[i].satisfaction).sum::<f64>()
            / results.len() as f64;
        let sat_worst = results
            .iter()
            .map(|r| r.summaries[i].satisfaction)
            .fold(f64::INFINITY, f64::min);
        let loss_mean = results.iter().map(|r| r.summaries[i].loss_ratio).sum::<f64>()
            / results.len() as f64;
        per_connection.push(ConnectionReport {
            id: config.connections[i].id.clone(),
            protocol: config.connections[i].protocol.label().to_string(),
            min_rate_bps: config.connections[i].min_rate.bps(),
            max_rate_bps: config.connections[i].max_rate.bps(),
            avg_rate_bps_mean: avg_mean,
            satisfaction_mean: sat_mean,
            satisfaction_worst: sat_worst,
            loss_ratio_mean: loss_mean,
        });
    }

    let mut utilizations: Vec<f64> = results.iter().map(|r| r.utilization).collect();
    let utilization_mean = utilizations.iter().sum::<f64>() / utilizations.len() as f64;
    let utilization_median = median(&mut utilizations);

    let mut convergences: Vec<f64> =
        results.iter().filter_map(|r| r.convergence_time).collect();
    let convergence_time_s = if convergences.is_empty() {
        None
    } else {
        Some(median(&mut convergences))
    };

    let first_capacity = config.link_model().capacity_at(0.0);
    let (hrf_reference, mmf_reference) = oracle_allocations(config, first_capacity);

    SummaryReport {
        scenario: config.name.clone(),
        d_scale: config.coefficients.d_scale,
        trials: config.trials,
        seed: config.seed,
        per_connection,
        utilization_median,
        utilization_mean,
        convergence_time_s,
        hrf_reference,
        mmf_reference,
    }
}

/// Fixed time-series CSV schema.
pub const CSV_HEADER: &str =
    "time_s,conn_id,protocol,state,send_rate_bps,throughput_bps,utility,rtt_ms,loss_ratio";

/// Writes one trial's time series.
pub fn write_time_series_csv(result: &SimResult, path: &Path) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let to_csv_err = |source: csv::Error| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    };
    writer
        .write_record(CSV_HEADER.split(','))
        .map_err(to_csv_err)?;
    for r in &result.records {
        writer
            .write_record(&[
                r.time.to_string(),
                result.conn_ids[r.conn].clone(),
                result.protocols[r.conn].label().to_string(),
                r.mode.to_string(),
                r.send_rate.to_string(),
                r.throughput.to_string(),
                r.utility.to_string(),
                (r.rtt * 1e3).to_string(),
                r.loss_ratio.to_string(),
            ])
            .map_err(to_csv_err)?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a time series written by [`write_time_series_csv`]. Mode
/// strings are interned against the fixed controller labels.
pub fn read_time_series_csv(
    path: &Path,
) -> Result<(Vec<TickRecord>, Vec<String>), HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let mut conn_ids: Vec<String> = Vec::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|source| HarnessError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let parse = |i: usize| -> f64 { row.get(i).unwrap_or("0").parse().unwrap_or(f64::NAN) };
        let id = row.get(1).unwrap_or("").to_string();
        let conn = match conn_ids.iter().position(|c| *c == id) {
            Some(i) => i,
            None => {
                conn_ids.push(id);
                conn_ids.len() - 1
            }
        };
        let mode = match row.get(3).unwrap_or("") {
            "slow_start" => "slow_start",
            "probing" => "probing",
            "moving" => "moving",
            "aimd" => "aimd",
            _ => "unknown",
        };
        records.push(TickRecord {
            time: parse(0),
            conn,
            send_rate: parse(4),
            throughput: parse(5),
            utility: parse(6),
            mode,
            rtt: parse(7) / 1e3,
            loss_ratio: parse(8),
        });
    }
    Ok((records, conn_ids))
}

/// Runs a scenario end to end: all trials, per-trial CSV, aggregate
/// summary JSON, and the oracle reference JSON.
pub fn run_scenario(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(SummaryReport, Vec<SimResult>), HarnessError> {
    let results = run_trials(config)?;
    let summary = summarize(&results, config);

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    for (k, result) in results.iter().enumerate() {
        let path = out_dir.join(format!("trial_{k}.csv"));
        write_time_series_csv(result, &path)?;
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    let oracle = OracleReport::for_config(config);
    write_json(&out_dir.join("oracle.json"), &oracle)?;
    let scenario_copy = out_dir.join("scenario.toml");
    fs::write(&scenario_copy, emit(config)).map_err(|e| io_err(&scenario_copy, e))?;
    Ok((summary, results))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(b"\n").map_err(|e| io_err(path, e))?;
    Ok(())
}

/// HRF and MMF reference allocations for every capacity segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub scenario: String,
    pub connection_ids: Vec<String>,
    pub segments: Vec<OracleSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSegment {
    pub start_s: f64,
    pub hrf: OracleAllocation,
    pub mmf: OracleAllocation,
}

impl OracleReport {
    pub fn for_config(config: &ScenarioConfig) -> OracleReport {
        let link = config.link_model();
        let segments = link
            .capacity_schedule
            .iter()
            .map(|seg| {
                let (hrf, mmf) = oracle_allocations(config, seg.capacity);
                OracleSegment {
                    start_s: seg.start,
                    hrf,
                    mmf,
                }
            })
            .collect();
        OracleReport {
            scenario: config.name.clone(),
            connection_ids: config.connections.iter().map(|c| c.id.clone()).collect(),
            segments,
        }
    }
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Capacity,
    Loss,
    Buffer,
    D,
}

impl SweepParam {
    pub fn parse_name(name: &str) -> Result<SweepParam, HarnessError> {
        match name {
            "capacity" => Ok(SweepParam::Capacity),
            "loss" => Ok(SweepParam::Loss),
            "buffer" => Ok(SweepParam::Buffer),
            "d" => Ok(SweepParam::D),
            other => Err(HarnessError::Sweep(format!(
                "unknown sweep parameter {other:?} (capacity, loss, buffer, d)"
            ))),
        }
    }

    /// Parses one sweep value in this parameter's unit language.
    pub fn parse_value(&self, text: &str) -> Result<f64, HarnessError> {
        let bad = |e: String| HarnessError::Sweep(format!("bad value {text:?}: {e}"));
        match self {
            SweepParam::Capacity => text
                .parse::<Bandwidth>()
                .map(|b| b.bps())
                .map_err(|e| bad(e.0)),
            SweepParam::Loss => text
                .parse::<f64>()
                .map_err(|e| bad(e.to_string()))
                .and_then(|v| {
                    if (0.0..=1.0).contains(&v) {
                        Ok(v)
                    } else {
                        Err(bad("loss must be in [0, 1]".into()))
                    }
                }),
            SweepParam::Buffer => text
                .parse::<BufferSpec>()
                .map(|_| f64::NAN)
                .map_err(|e| bad(e.0)),
            SweepParam::D => text.parse::<f64>().map_err(|e| bad(e.to_string())),
        }
    }

    pub fn apply(&self, config: &ScenarioConfig, value_text: &str) -> Result<ScenarioConfig, HarnessError> {
        let mut varied = config.clone();
        match self {
            SweepParam::Capacity => {
                let bps = self.parse_value(value_text)?;
                varied.link.capacity = Some(Bandwidth(bps));
                varied.link.capacity_schedule = None;
            }
            SweepParam::Loss => {
                varied.link.random_loss = self.parse_value(value_text)?;
            }
            SweepParam::Buffer => {
                let spec: BufferSpec = value_text
                    .parse()
                    .map_err(|e: crate::units::UnitParseError| HarnessError::Sweep(e.0))?;
                varied.link.buffer = spec;
            }
            SweepParam::D => {
                varied.coefficients.d_scale = self.parse_value(value_text)?;
            }
        }
        varied.name = format!("{}__{}={}", config.name, self.label(), value_text.trim());
        Ok(varied)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepParam::Capacity => "capacity",
            SweepParam::Loss => "loss",
            SweepParam::Buffer => "buffer",
            SweepParam::D => "d",
        }
    }
}

/// One sweep point's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: String,
    pub summary: SummaryReport,
    /// Mean over connections of stddev / mean of the sending rate over
    /// the final third of the run (median across trials).
    pub stability_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub param: String,
    pub points: Vec<SweepPoint>,
}

/// Normalized rate oscillation over the final third of a run: the mean
/// over connections of (stddev of send rate / mean send rate).
pub fn stability_metric(result: &SimResult) -> f64 {
    let t0 = result.duration * 2.0 / 3.0;
    let n = result.conn_ids.len();
    let mut total = 0.0;
    let mut counted = 0;
    for conn in 0..n {
        let tail: Vec<f64> = result
            .records
            .iter()
            .filter(|r| r.conn == conn && r.time >= t0)
            .map(|r| r.send_rate)
            .collect();
        if tail.is_empty() {
            continue;
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        if mean <= 0.0 {
            continue;
        }
        let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tail.len() as f64;
        total += var.sqrt() / mean;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Runs a sweep, writing per-point outputs under
/// `out_dir/<param>=<value>/` and a `sweep.json` aggregate.
pub fn run_sweep(
    config: &ScenarioConfig,
    param: SweepParam,
    values: &[String],
    out_dir: &Path,
) -> Result<SweepReport, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Sweep("no sweep values given".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let varied = param.apply(config, value)?;
        varied.validate()?;
        let point_dir = out_dir.join(format!("{}={}", param.label(), value.trim()));
        let (summary, results) = run_scenario(&varied, &point_dir)?;
        let mut stabilities: Vec<f64> = results.iter().map(stability_metric).collect();
        points.push(SweepPoint {
            value: value.trim().to_string(),
            summary,
            stability_metric: median(&mut stabilities),
        });
    }
    let report = SweepReport {
        scenario: config.name.clone(),
        param: param.label().to_string(),
        points,
    };
    write_json(&out_dir.join("sweep.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario_str;

    fn tiny_scenario(trials: u32) -> ScenarioConfig {
        let text = format!(
            r#"
name = "tiny"
duration = "2 s"
seed = 5
trials = {trials}

[link]
capacity = "20 Mbps"
base_rtt = "20 ms"
buffer = "1 bdp"

[[connections]]
id = "a"
protocol = "hercules"
min_rate = "4 Mbps"
max_rate = "6 Mbps"

[[connections]]
id = "b"
protocol = "hercules"
min_rate = "8 Mbps"
max_rate = "12 Mbps"
"#
        );
        parse_scenario_str(&text).unwrap()
    }

    #[test]
    fn identical_trials_make_worst_equal_mean() {
        // trials = 1: the worst-case satisfaction is the mean.
        let config = tiny_scenario(1);
        let results = run_trials(&config).unwrap();
        let summary = summarize(&results, &config);
        for conn in &summary.per_connection {
            assert_eq!(conn.satisfaction_mean, conn.satisfaction_worst);
        }
    }

    #[test]
    fn utilization_is_rate_over_capacity() {
        let config = tiny_scenario(1);
        let results = run_trials(&config).unwrap();
        // Independent recomputation straight from the records.
        let mut by_time: std::collections::BTreeMap<u64, f64> = Default::default();
        for r in &results[0].records {
            *by_time.entry(r.time.to_bits()).or_default() += r.send_rate;
        }
        let expected = by_time.values().map(|agg| agg / 20e6).sum::<f64>()
            / by_time.len() as f64;
        assert!((results[0].utilization - expected).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trips_and_summary_is_recomputable() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_scenario(2);
        let (summary, results) = run_scenario(&config, dir.path()).unwrap();

        // Re-derive per-connection satisfaction means from the CSVs.
        let mut sat = vec![Vec::new(); config.connections.len()];
        let mut utils = Vec::new();
        for k in 0..config.trials as usize {
            let (records, ids) = read_time_series_csv(&dir.path().join(format!("trial_{k}.csv"))).unwrap();
            assert_eq!(records.len(), results[k].records.len());
            for (i, id) in ids.iter().enumerate() {
                let conn_idx = config
                    .connections
                    .iter()
                    .position(|c| c.id == *id)
                    .unwrap();
                let rates: Vec<f64> = records
                    .iter()
                    .filter(|r| r.conn == i)
                    .map(|r| r.send_rate)
                    .collect();
                let avg = rates.iter().sum::<f64>() / rates.len() as f64;
                sat[conn_idx].push(avg / config.connections[conn_idx].min_rate.bps());
            }
            let mut by_time: std::collections::BTreeMap<u64, f64> = Default::default();
            for r in &records {
                *by_time.entry(r.time.to_bits()).or_default() += r.send_rate;
            }
            utils.push(
                by_time.values().map(|agg| agg / 20e6).sum::<f64>() / by_time.len() as f64,
            );
        }
        for (i, conn) in summary.per_connection.iter().enumerate() {
            let mean = sat[i].iter().sum::<f64>() / sat[i].len() as f64;
            assert!(
                (mean - conn.satisfaction_mean).abs() < 1e-9,
                "satisfaction mismatch for {}: {mean} vs {}",
                conn.id,
                conn.satisfaction_mean
            );
        }
        let util_mean = utils.iter().sum::<f64>() / utils.len() as f64;
        assert!((util_mean - summary.utilization_mean).abs() < 1e-9);

        // Files exist.
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("oracle.json").exists());
        assert!(dir.path().join("scenario.toml").exists());
    }

    #[test]
    fn sweep_varies_the_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_scenario(1);
        let report = run_sweep(
            &config,
            SweepParam::D,
            &["1".into(), "2".into()],
            dir.path(),
        )
        .unwrap();
        assert_eq!(report.points.len(), 2);
        assert_eq!(report.points[0].summary.d_scale, 1.0);
        assert_eq!(report.points[1].summary.d_scale, 2.0);
        assert!(dir.path().join("sweep.json").exists());

        let cap = SweepParam::Capacity
            .apply(&config, "30 Mbps")
            .unwrap();
        assert_eq!(cap.link_model().capacity_at(0.0), 30e6);
    }

    #[test]
    fn oracle_report_covers_every_segment() {
        let text = r#"
name = "segmented"
duration = "4 s"
seed = 1

[link]
capacity_schedule = [
  { at = "0 s", rate = "45 Mbps" },
  { at = "2 s", rate = "95 Mbps" },
]
base_rtt = "20 ms"
buffer = "1 bdp"

[[connections]]
id = "a"
protocol = "hercules"
min_rate = "20 Mbps"
max_rate = "30 Mbps"
"#;
        let config = parse_scenario_str(text).unwrap();
        let report = OracleReport::for_config(&config);
        assert_eq!(report.segments.len(), 2);
        assert_eq!(report.segments[1].hrf.capacity_bps, 95e6);
    }
}

//! Exact allocation oracles over a single shared bottleneck.
//!
//! `hrf_allocate` performs progressive filling on the *normalized*
//! rates (lexicographic max-min over (x - a) / (b - a)); `mmf_allocate`
//! is classic lexicographic max-min over raw rates. Both are verified
//! against `brute_force_lex_max_min`, an exhaustive grid search that is
//! deliberately independent of the water-filling code paths.

use std::cmp::Ordering;

use thiserror::Error;

use crate::core::{CoreError, Requirement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FairnessError {
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),

    #[error("grid enumeration of {candidates} candidates exceeds budget {budget}")]
    GridTooLarge { candidates: u128, budget: u64 },

    #[error("lexicographic comparison of vectors with lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error(transparent)]
    Core(#[from] CoreError),
}

/// A single-bottleneck allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub requirements: Vec<Requirement>,
    /// Shared capacity, bits per second.
    pub capacity: f64,
    /// Cap each connection at its max_rate when it is bounded.
    pub respect_bounds: bool,
}

impl AllocationProblem {
    pub fn new(
        requirements: Vec<Requirement>,
        capacity: f64,
        respect_bounds: bool,
    ) -> Result<Self, FairnessError> {
        let p = AllocationProblem {
            requirements,
            capacity,
            respect_bounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FairnessError> {
        if self.requirements.is_empty() {
            return Err(FairnessError::InvalidProblem(
                "requirement list is empty".into(),
            ));
        }
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(FairnessError::InvalidProblem(format!(
                "capacity must be positive and finite, got {}",
                self.capacity
            )));
        }
        for req in &self.requirements {
            req.validate()?;
        }
        Ok(())
    }

    /// Per-connection hard cap: max_rate for bounded connections when
    /// caps are respected, otherwise unlimited.
    fn cap(&self, i: usize) -> f64 {
        let req = &self.requirements[i];
        if self.respect_bounds && req.bounded {
            req.max_rate
        } else {
            f64::INFINITY
        }
    }
}

/// The result of an allocation oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Allocated rates, bits per second, in input order.
    pub rates: Vec<f64>,
    /// Normalized rates of the allocation, in input order.
    pub normalized: Vec<f64>,
    /// Common fill level reached: a normalized rate for HRF, a raw rate
    /// for MMF, and the smallest sorted objective entry for the
    /// brute-force oracle.
    pub theta: f64,
}

fn finish(p: &AllocationProblem, rates: Vec<f64>, theta: f64) -> Allocation {
    let normalized = rates
        .iter()
        .zip(&p.requirements)
        .map(|(&x, req)| (x - req.min_rate) / req.width())
        .collect();
    Allocation {
        rates,
        normalized,
        theta,
    }
}

/// Lexicographic max-min over normalized rates via progressive filling.
///
/// Raises a common level theta with x_i = clamp(a_i + theta * w_i, 0,
/// cap_i) until capacity is exhausted or every connection is capped.
/// Connections pinned at a clamp are frozen while filling continues for
/// the rest, so the result is Pareto-efficient.
pub fn hrf_allocate(p: &AllocationProblem) -> Allocation {
    let n = p.requirements.len();
    let rate_at = |i: usize, theta: f64| -> f64 {
        let req = &p.requirements[i];
        (req.min_rate + theta * req.width()).clamp(0.0, p.cap(i))
    };
    let sum_at = |theta: f64| -> f64 { (0..n).map(|i| rate_at(i, theta)).sum() };

    // Slope changes where a connection leaves its floor (theta =
    // -a/w) or hits its cap (theta = 1 exactly, since b = a + w).
    let mut kinks: Vec<f64> = p
        .requirements
        .iter()
        .map(|req| -req.min_rate / req.width())
        .collect();
    if (0..n).any(|i| p.cap(i).is_finite()) {
        kinks.push(1.0);
    }
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    // Below the lowest kink every rate is floored at zero.
    let mut prev = kinks[0];
    let mut prev_sum = sum_at(prev);
    debug_assert!(prev_sum <= p.capacity || prev_sum == 0.0);
    for &kink in &kinks[1..] {
        let sum = sum_at(kink);
        if sum >= p.capacity {
            let slope = (sum - prev_sum) / (kink - prev);
            let theta = prev + (p.capacity - prev_sum) / slope;
            let rates = (0..n).map(|i| rate_at(i, theta)).collect();
            return finish(p, rates, theta);
        }
        prev = kink;
        prev_sum = sum;
    }

    // Past the last kink only uncapped connections keep growing.
    let slope: f64 = (0..n)
        .filter(|&i| p.cap(i).is_infinite())
        .map(|i| p.requirements[i].width())
        .sum();
    let theta = if slope > 0.0 {
        prev + (p.capacity - prev_sum) / slope
    } else {
        // Everyone is capped and capacity is left over.
        1.0
    };
    let rates = (0..n).map(|i| rate_at(i, theta)).collect();
    finish(p, rates, theta)
}

/// Classic lexicographic max-min over raw rates: water-filling with
/// equal increments, honoring caps when `respect_bounds` is set.
pub fn mmf_allocate(p: &AllocationProblem) -> Allocation {
    let n = p.requirements.len();
    let rate_at = |i: usize, level: f64| -> f64 { level.min(p.cap(i)) };
    let sum_at = |level: f64| -> f64 { (0..n).map(|i| rate_at(i, level)).sum() };

    let mut kinks: Vec<f64> = (0..n).map(|i| p.cap(i)).filter(|c| c.is_finite()).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    let mut prev = 0.0;
    let mut prev_sum = 0.0;
    for &kink in &kinks {
        let sum = sum_at(kink);
        if sum >= p.capacity {
            let slope = (sum - prev_sum) / (kink - prev);
            let level = prev + (p.capacity - prev_sum) / slope;
            let rates = (0..n).map(|i| rate_at(i, level)).collect();
            return finish(p, rates, level);
        }
        prev = kink;
        prev_sum = sum;
    }

    let uncapped = (0..n).filter(|&i| p.cap(i).is_infinite()).count();
    let level = if uncapped > 0 {
        prev + (p.capacity - prev_sum) / uncapped as f64
    } else {
        prev
    };
    let rates = (0..n).map(|i| rate_at(i, level)).collect();
    finish(p, rates, level)
}

/// Objective space for the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSpace {
    Raw,
    Normalized,
}

/// Independent oracle: enumerates every rate vector on the grid with
/// sum <= capacity, sorts the objective vector ascending, and returns
/// the lexicographic maximum. Exponential in the connection count; the
/// enumeration is bounded by `budget` candidate prefixes.
pub fn brute_force_lex_max_min(
    p: &AllocationProblem,
    grid_step: f64,
    space: ObjectiveSpace,
    budget: u64,
) -> Result<Allocation, FairnessError> {
    let n = p.requirements.len();
    if n > 4 {
        return Err(FairnessError::InvalidProblem(format!(
            "brute force supports at most 4 connections, got {n}"
        )));
    }
    if !(grid_step > 0.0) {
        return Err(FairnessError::InvalidProblem(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }

    // The final coordinate is always taken maximal (raising any single
    // coordinate never worsens the sorted objective), so only the
    // first n-1 coordinates are enumerated.
    let steps: Vec<u64> = (0..n)
        .map(|i| (p.cap(i).min(p.capacity) / grid_step).floor() as u64)
        .collect();
    let candidates: u128 = steps[..n - 1].iter().map(|&k| k as u128 + 1).product();
    if candidates > budget as u128 {
        return Err(FairnessError::GridTooLarge { candidates, budget });
    }

    let objective = |rates: &[f64]| -> Vec<f64> {
        let mut obj: Vec<f64> = match space {
            ObjectiveSpace::Raw => rates.to_vec(),
            ObjectiveSpace::Normalized => rates
                .iter()
                .zip(&p.requirements)
                .map(|(&x, req)| (x - req.min_rate) / req.width())
                .collect(),
        };
        obj.sort_by(f64::total_cmp);
        obj
    };

    let mut best_rates: Option<Vec<f64>> = None;
    let mut best_obj: Vec<f64> = Vec::new();
    let mut prefix = vec![0.0; n];
    let mut counters = vec![0u64; n.saturating_sub(1)];
    loop {
        let mut used = 0.0;
        let mut feasible = true;
        for i in 0..n - 1 {
            prefix[i] = counters[i] as f64 * grid_step;
            used += prefix[i];
            if used > p.capacity + 1e-9 {
                feasible = false;
                break;
            }
        }
        if feasible {
            let last_max = (p.capacity - used).max(0.0).min(p.cap(n - 1));
            prefix[n - 1] = (last_max / grid_step).floor() * grid_step;
            let obj = objective(&prefix);
            let better = match &best_rates {
                None => true,
                Some(_) => {
                    lex_compare(&obj, &best_obj).expect("equal lengths") == Ordering::Greater
                }
            };
            if better {
                best_rates = Some(prefix.clone());
                best_obj = obj;
            }
        }

        // Odometer increment over the first n-1 coordinates.
        let mut carry = true;
        for i in (0..n - 1).rev() {
            counters[i] += 1;
            if counters[i] <= steps[i] {
                carry = false;
                break;
            }
            counters[i] = 0;
        }
        if carry {
            break;
        }
    }

    let rates = best_rates.expect("grid always contains the zero vector");
    let theta = best_obj[0];
    Ok(finish(p, rates, theta))
}

/// Ratio between an achieved average rate and the minimum requirement.
pub fn satisfaction_ratio(avg_rate: f64, req: &Requirement) -> f64 {
    avg_rate / req.min_rate
}

/// Standard lexicographic order on two equally-long sorted vectors.
pub fn lex_compare(u: &[f64], v: &[f64]) -> Result<Ordering, FairnessError> {
    if u.len() != v.len() {
        return Err(FairnessError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    for (a, b) in u.iter().zip(v) {
        match a.total_cmp(b) {
            Ordering::Equal => continue,
            other => return Ok(other),
        }
    }
    Ok(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(min_mbps: f64, max_mbps: f64, bounded: bool) -> Requirement {
        Requirement::new(min_mbps * 1e6, max_mbps * 1e6, bounded).unwrap()
    }

    fn paper_reqs(bounded: bool) -> Vec<Requirement> {
        vec![
            req(20.0, 30.0, bounded),
            req(40.0, 60.0, bounded),
            req(60.0, 90.0, bounded),
        ]
    }

    fn assert_rates(alloc: &Allocation, expected_mbps: &[f64], tol_bps: f64) {
        assert_eq!(alloc.rates.len(), expected_mbps.len());
        for (i, (&got, &want)) in alloc.rates.iter().zip(expected_mbps).enumerate() {
            assert!(
                (got - want * 1e6).abs() <= tol_bps,
                "rate {i}: got {got}, want {}",
                want * 1e6
            );
        }
    }

    #[test]
    fn hrf_three_connection_anchor() {
        let p = AllocationProblem::new(paper_reqs(false), 120e6, false).unwrap();
        let alloc = hrf_allocate(&p);
        assert_rates(&alloc, &[20.0, 40.0, 60.0], 1.0);
        for &nz in &alloc.normalized {
            assert!(nz.abs() < 1e-9, "normalized {nz}");
        }
        assert!(alloc.theta.abs() < 1e-9);
    }

    #[test]
    fn hrf_surplus_capacity_raises_common_level() {
        // 120 + 60 * theta = 170 -> theta = 5/6.
        let p = AllocationProblem::new(paper_reqs(false), 170e6, false).unwrap();
        let alloc = hrf_allocate(&p);
        assert!((alloc.theta - 5.0 / 6.0).abs() < 1e-12);
        assert_rates(&alloc, &[20.0 + 50.0 / 6.0, 40.0 + 100.0 / 6.0, 85.0], 1.0);
    }

    #[test]
    fn hrf_shortfall_goes_negative() {
        // 120 + 60 * theta = 60 -> theta = -1, no floor active.
        let p = AllocationProblem::new(paper_reqs(false), 60e6, false).unwrap();
        let alloc = hrf_allocate(&p);
        assert!((alloc.theta + 1.0).abs() < 1e-12);
        assert_rates(&alloc, &[10.0, 20.0, 30.0], 1.0);
    }

    #[test]
    fn hrf_deep_shortfall_floors_at_zero() {
        // Capacity so small that the first connection pins at zero.
        let reqs = vec![req(1.0, 21.0, false), req(50.0, 60.0, false)];
        let p = AllocationProblem::new(reqs, 10e6, false).unwrap();
        let alloc = hrf_allocate(&p);
        assert!(alloc.rates[0] >= 0.0);
        assert!((alloc.rates.iter().sum::<f64>() - 10e6).abs() < 1.0);
        // theta below the first connection's floor kink.
        assert!(alloc.theta < -1.0 / 20.0);
        assert_eq!(alloc.rates[0], 0.0);
    }

    #[test]
    fn hrf_single_bounded_connection_caps() {
        let p =
            AllocationProblem::new(vec![req(40.0, 60.0, true)], 1000e6, true).unwrap();
        let alloc = hrf_allocate(&p);
        assert_rates(&alloc, &[60.0], 1e-3);
        assert_eq!(alloc.theta, 1.0);
    }

    #[test]
    fn mmf_paper_contrast_anchor() {
        // With caps at the maxima, classic max-min leaves the third
        // connection below its 60 Mbps minimum while HRF satisfies it.
        let p = AllocationProblem::new(paper_reqs(true), 120e6, true).unwrap();
        let alloc = mmf_allocate(&p);
        assert_rates(&alloc, &[30.0, 45.0, 45.0], 1.0);
        assert!(alloc.rates[2] < 60e6);

        let hrf = hrf_allocate(&AllocationProblem::new(paper_reqs(true), 120e6, true).unwrap());
        for (rate, req) in hrf.rates.iter().zip(&paper_reqs(true)[..]) {
            assert!(*rate >= req.min_rate - 1.0);
        }
    }

    #[test]
    fn mmf_symmetric_split() {
        let reqs = vec![req(10.0, 40.0, false); 3];
        let p = AllocationProblem::new(reqs, 90e6, false).unwrap();
        let alloc = mmf_allocate(&p);
        assert_rates(&alloc, &[30.0, 30.0, 30.0], 1e-3);
    }

    #[test]
    fn mmf_cap_then_remainder() {
        let reqs = vec![req(5.0, 10.0, true), req(5.0, 10.0, false)];
        let p = AllocationProblem::new(reqs, 100e6, true).unwrap();
        let alloc = mmf_allocate(&p);
        assert_rates(&alloc, &[10.0, 90.0], 1e-3);
    }

    #[test]
    fn brute_force_matches_paper_anchor() {
        let p = AllocationProblem::new(paper_reqs(false), 120e6, false).unwrap();
        let alloc =
            brute_force_lex_max_min(&p, 1e6, ObjectiveSpace::Normalized, 1 << 20).unwrap();
        assert_rates(&alloc, &[20.0, 40.0, 60.0], 1e-3);
    }

    #[test]
    fn brute_force_single_connection_takes_capacity() {
        let p = AllocationProblem::new(vec![req(10.0, 20.0, false)], 15e6, false).unwrap();
        let alloc = brute_force_lex_max_min(&p, 1e6, ObjectiveSpace::Raw, 1 << 20).unwrap();
        assert_rates(&alloc, &[15.0], 1e-3);
    }

    #[test]
    fn brute_force_budget_is_enforced() {
        let p = AllocationProblem::new(paper_reqs(false), 120e6, false).unwrap();
        let err = brute_force_lex_max_min(&p, 1e3, ObjectiveSpace::Raw, 1000).unwrap_err();
        assert!(matches!(err, FairnessError::GridTooLarge { .. }));
    }

    #[test]
    fn satisfaction_ratio_is_plain_division() {
        let r = req(100.0, 150.0, false);
        assert!((satisfaction_ratio(27e6, &r) - 0.27).abs() < 1e-12);
        assert!((satisfaction_ratio(100e6, &r) - 1.0).abs() < 1e-12);
        assert!((satisfaction_ratio(97e6, &r) - 0.97).abs() < 1e-12);
    }

    #[test]
    fn lex_compare_cases() {
        assert_eq!(
            lex_compare(&[0.0, 0.0, 1.0], &[0.0, 0.5, 0.5]).unwrap(),
            Ordering::Less
        );
        assert_eq!(lex_compare(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), Ordering::Equal);
        assert_eq!(
            lex_compare(&[-1.0, 0.0], &[-2.0, 5.0]).unwrap(),
            Ordering::Greater
        );
        assert!(matches!(
            lex_compare(&[1.0], &[1.0, 2.0]),
            Err(FairnessError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hrf_is_scale_invariant_and_permutation_equivariant() {
        let reqs = vec![req(5.0, 12.0, false), req(30.0, 45.0, true), req(9.0, 18.0, false)];
        let p = AllocationProblem::new(reqs.clone(), 70e6, true).unwrap();
        let base = hrf_allocate(&p);

        let scaled_reqs: Vec<Requirement> = reqs
            .iter()
            .map(|r| Requirement::new(r.min_rate * 3.0, r.max_rate * 3.0, r.bounded).unwrap())
            .collect();
        let scaled = hrf_allocate(&AllocationProblem::new(scaled_reqs, 210e6, true).unwrap());
        for (a, b) in base.rates.iter().zip(&scaled.rates) {
            assert!((a * 3.0 - b).abs() < 1e-3, "{a} vs {b}");
        }

        let perm = vec![reqs[2], reqs[0], reqs[1]];
        let permuted = hrf_allocate(&AllocationProblem::new(perm, 70e6, true).unwrap());
        assert!((permuted.rates[0] - base.rates[2]).abs() < 1e-6);
        assert!((permuted.rates[1] - base.rates[0]).abs() < 1e-6);
        assert!((permuted.rates[2] - base.rates[1]).abs() < 1e-6);
    }

    #[test]
    fn hrf_uses_full_capacity_when_someone_is_uncapped() {
        let reqs = vec![req(5.0, 10.0, true), req(1.0, 2.0, false)];
        let p = AllocationProblem::new(reqs, 50e6, true).unwrap();
        let alloc = hrf_allocate(&p);
        let total: f64 = alloc.rates.iter().sum();
        assert!((total - 50e6).abs() / 50e6 < 1e-6);
    }
}

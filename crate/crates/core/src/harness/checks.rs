//! Trend checks evaluated on sweep results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::complexity::{verify_complexity, ComplexityReport, MAX_DEVIATION};
use super::{run_sweep, Coord, ExperimentResult, Record, SweepSpec};
use crate::error::Result;
use crate::metrics::nearest_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    /// The sweep does not contain the cells the check needs.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: &'static str,
    pub outcome: Outcome,
    pub detail: String,
}

impl CheckResult {
    fn new(id: &'static str, ok: bool, detail: String) -> Self {
        Self { id, outcome: if ok { Outcome::Pass } else { Outcome::Fail }, detail }
    }

    fn skipped(id: &'static str, detail: impl Into<String>) -> Self {
        Self { id, outcome: Outcome::Skipped, detail: detail.into() }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skipped => "SKIP",
        };
        write!(f, "[{tag}] {}: {}", self.id, self.detail)
    }
}

pub const FRACTION_OF_EXACT: f64 = 0.95;
pub const ERROR_FLOOR_FRACTION: f64 = 0.90;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
pub const BOOTSTRAP_MIN_FRACTION: f64 = 0.80;
pub const ORDERING_MIN_FRACTION: f64 = 0.95;
pub const ORDERING_TOL: f64 = 1e-9;

fn nulling_ranks(res: &ExperimentResult) -> Vec<usize> {
    res.records.iter().filter(|r| r.nulling && r.method != "exact").map(|r| r.q).collect::<BTreeSet<_>>().into_iter().collect()
}

fn reference(res: &ExperimentResult) -> Option<f64> {
    res.mean_capacity(&Coord::new("exact", 0, "fp64", false, 0))
}

/// First CG order `<= k_max` whose nulled mean reaches `target`.
fn first_reaching(res: &ExperimentResult, precision: &str, q: usize, k_max: usize, target: f64) -> (Option<usize>, Vec<String>) {
    let mut seen = Vec::new();
    for k in 1..=k_max {
        if let Some(m) = res.mean_capacity(&Coord::new("cg", k, precision, true, q)) {
            seen.push(format!("k={k}:{m:.3}"));
            if m >= target {
                return (Some(k), seen);
            }
        }
    }
    (None, seen)
}

/// Nulled CG reaches a fraction of the exact plain design within a few iterations.
pub fn iteration_savings(res: &ExperimentResult) -> CheckResult {
    const ID: &str = "iteration savings";
    let Some(exact) = reference(res) else { return CheckResult::skipped(ID, "no exact fp64 baseline") };
    let target = FRACTION_OF_EXACT * exact;
    let qs = nulling_ranks(res);
    if qs.is_empty() {
        return CheckResult::skipped(ID, "no nulled cg cells");
    }
    let mut ok = true;
    let mut detail = format!("target {target:.3} bit/s/Hz");
    if let Some(own) = res.mean_capacity(&Coord::new("exact", 0, "fp64", true, qs[0])) {
        detail.push_str(&format!(" (nulled exact design {own:.3})"));
    }
    for q in qs {
        for (precision, k_max) in [("fp32", 4), ("q15.16", 6)] {
            let (hit, seen) = first_reaching(res, precision, q, k_max, target);
            if seen.is_empty() {
                return CheckResult::skipped(ID, format!("no nulled cg cells for {precision} q={q}"));
            }
            ok &= hit.is_some();
            let best = seen.last().map_or(String::new(), |s| format!(" (last {s})"));
            detail.push_str(&format!("; {precision} q={q} reached at {}", hit.map_or(format!("none of k<={k_max}{best}"), |k| format!("k={k}"))));
        }
    }
    CheckResult::new(ID, ok, detail)
}

/// Without nulling, Q7.16 CG stays clearly below the exact design at a high iteration count.
pub fn error_floor(res: &ExperimentResult, k: usize) -> CheckResult {
    const ID: &str = "error floor";
    let Some(exact) = reference(res) else { return CheckResult::skipped(ID, "no exact fp64 baseline") };
    let Some(m) = res.mean_capacity(&Coord::new("cg", k, "q7.16", false, 0)) else {
        return CheckResult::skipped(ID, format!("no plain q7.16 cg cell at k={k}"));
    };
    let ratio = m / exact;
    CheckResult::new(ID, ratio <= ERROR_FLOOR_FRACTION, format!("plain q7.16 cg k={k}: {ratio:.3} of exact (limit {ERROR_FLOOR_FRACTION})"))
}

/// Nulled mean capacity is at least the plain one for every finite precision and `k <= k_max`.
pub fn nulling_dominates(res: &ExperimentResult, k_max: usize) -> CheckResult {
    const ID: &str = "nulling dominates";
    let mut compared = 0;
    let mut worst: Option<(f64, String)> = None;
    for q in nulling_ranks(res) {
        for precision in ["fp32", "q15.16", "q7.16"] {
            for k in 1..=k_max {
                let (Some(on), Some(off)) = (res.mean_capacity(&Coord::new("cg", k, precision, true, q)), res.mean_capacity(&Coord::new("cg", k, precision, false, 0))) else {
                    continue;
                };
                compared += 1;
                let margin = on - off;
                if worst.as_ref().is_none_or(|(w, _)| margin < *w) {
                    worst = Some((margin, format!("{precision} k={k} q={q}")));
                }
            }
        }
    }
    match worst {
        None => CheckResult::skipped(ID, "no matching nulled/plain cg cells"),
        Some((margin, at)) => CheckResult::new(ID, margin >= 0.0, format!("{compared} comparisons, smallest margin {margin:.4} bit/s/Hz at {at}")),
    }
}

/// Per-drop capacities of one cell, `[drop] -> [ue]`.
fn by_drop(res: &ExperimentResult, coord: &Coord) -> BTreeMap<u64, Vec<f64>> {
    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in res.cell(coord) {
        out.entry(r.drop).or_default().push(r.capacity);
    }
    out
}

fn mean_p10(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (values.iter().sum::<f64>() / values.len() as f64, nearest_rank(values, 10.0))
}

/// Relative gains of nulling at the 10th percentile and at the mean.
pub fn relative_gaps(on: &mut [f64], off: &mut [f64]) -> (f64, f64) {
    let (m_on, p_on) = mean_p10(on);
    let (m_off, p_off) = mean_p10(off);
    ((p_on - p_off) / p_off.abs(), (m_on - m_off) / m_off.abs())
}

/// Bootstrap over drops: the relative p10 gap of nulling exceeds the relative mean gap.
pub fn cell_edge(res: &ExperimentResult, precision: &str, k: usize, resamples: usize, seed: u64) -> CheckResult {
    const ID: &str = "cell edge";
    let Some(&q) = nulling_ranks(res).first() else { return CheckResult::skipped(ID, "no nulled cells") };
    let on = by_drop(res, &Coord::new("cg", k, precision, true, q));
    let off = by_drop(res, &Coord::new("cg", k, precision, false, 0));
    let drops: Vec<u64> = on.keys().filter(|d| off.contains_key(d)).copied().collect();
    if drops.is_empty() {
        return CheckResult::skipped(ID, format!("no paired {precision} cg cells at k={k}"));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if drops.iter().any(|d| !finite(&on[d]) || !finite(&off[d])) {
        return CheckResult::new(ID, false, "failed cells in the compared coordinates".into());
    }
    let gather = |sel: &[u64], m: &BTreeMap<u64, Vec<f64>>| sel.iter().flat_map(|d| m[d].iter().copied()).collect::<Vec<f64>>();
    let (p_full, m_full) = relative_gaps(&mut gather(&drops, &on), &mut gather(&drops, &off));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0;
    for _ in 0..resamples {
        let sel: Vec<u64> = (0..drops.len()).map(|_| drops[rng.random_range(0..drops.len())]).collect();
        let (p, m) = relative_gaps(&mut gather(&sel, &on), &mut gather(&sel, &off));
        if p > m {
            wins += 1;
        }
    }
    let frac = wins as f64 / resamples as f64;
    CheckResult::new(
        ID,
        frac >= BOOTSTRAP_MIN_FRACTION,
        format!("{precision} cg k={k}: p10 gap {p_full:+.3}, mean gap {m_full:+.3}; p10 gap larger in {frac:.3} of {resamples} resamples (limit {BOOTSTRAP_MIN_FRACTION})"),
    )
}

/// Full MMSE >= exact LTBF >= every approximate variant, per UE, in most drops.
///
/// Approximate variants are compared with the exact design of the same nulling
/// setting. Meaningful on results evaluated at the design instant.
pub fn ordering(res: &ExperimentResult) -> CheckResult {
    const ID: &str = "capacity ordering";
    let mut per_drop: BTreeMap<u64, Vec<&Record>> = BTreeMap::new();
    for r in &res.records {
        per_drop.entry(r.drop).or_default().push(r);
    }
    if per_drop.is_empty() {
        return CheckResult::skipped(ID, "no records");
    }
    let mut good = 0;
    let mut baseline_good = 0;
    let (mut pairs, mut pairs_ok) = (0usize, 0usize);
    let mut largest: Option<(f64, String)> = None;
    let mut violations: BTreeMap<String, usize> = BTreeMap::new();
    for rows in per_drop.values() {
        let mut exact: BTreeMap<(bool, usize, usize), f64> = BTreeMap::new();
        let mut mmse: BTreeMap<usize, f64> = BTreeMap::new();
        for r in rows {
            match r.method.as_str() {
                "mmse" => {
                    mmse.insert(r.ue, r.capacity);
                }
                "exact" => {
                    exact.insert((r.nulling, r.q, r.ue), r.capacity);
                }
                _ => {}
            }
        }
        let mut ok = true;
        let mut baseline_ok = true;
        let tol = |x: f64| ORDERING_TOL * x.abs().max(1.0);
        for r in rows {
            let bound = match r.method.as_str() {
                "mmse" => continue,
                "exact" => mmse.get(&r.ue).copied(),
                _ => exact.get(&(r.nulling, r.q, r.ue)).copied(),
            };
            let Some(bound) = bound else { continue };
            pairs += 1;
            if r.capacity <= bound + tol(bound) {
                pairs_ok += 1;
            } else {
                ok = false;
                baseline_ok &= r.method != "exact";
                let excess = (r.capacity - bound) / bound.abs().max(f64::MIN_POSITIVE);
                if largest.as_ref().is_none_or(|(e, _)| excess > *e) {
                    largest = Some((excess, r.coord().label()));
                }
                *violations.entry(r.coord().label()).or_default() += 1;
            }
        }
        good += ok as usize;
        baseline_good += baseline_ok as usize;
    }
    let frac = good as f64 / per_drop.len() as f64;
    let mut detail = format!(
        "{good}/{} drops ordered ({frac:.3}, limit {ORDERING_MIN_FRACTION}); mmse >= exact in {baseline_good} drops; {pairs_ok}/{pairs} per-UE comparisons hold",
        per_drop.len()
    );
    if !violations.is_empty() {
        let mut worst: Vec<(String, usize)> = violations.into_iter().collect();
        worst.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let list: Vec<String> = worst.iter().take(4).map(|(c, n)| format!("{c} x{n}")).collect();
        detail.push_str(&format!("; most violations: {}", list.join(", ")));
    }
    if let Some((e, at)) = largest {
        detail.push_str(&format!("; largest relative excess {e:.2e} at {at}"));
    }
    CheckResult::new(ID, frac >= ORDERING_MIN_FRACTION, detail)
}

/// Trend checks that apply to a sweep evaluated after the long-term interval.
pub fn trend_checks(res: &ExperimentResult) -> Vec<CheckResult> {
    vec![
        iteration_savings(res),
        error_floor(res, 20),
        nulling_dominates(res, 6),
        cell_edge(res, "q7.16", 3, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED),
    ]
}

pub fn complexity(report: &ComplexityReport) -> CheckResult {
    let worst = report.fits.iter().max_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation));
    match worst {
        None => CheckResult::skipped("complexity", "no fits"),
        Some(w) => CheckResult::new("complexity", report.passed(), format!("worst deviation {:.3} for {} (limit {MAX_DEVIATION})", w.max_deviation, w.name)),
    }
}

/// Every sweep-level check: trends on `res`, ordering on a rerun of `spec`
/// evaluated at the design instant, and the complexity fits.
pub fn all_checks(spec: &SweepSpec, res: &ExperimentResult, workers: usize) -> Result<(Vec<CheckResult>, ComplexityReport)> {
    let mut out = trend_checks(res);
    let mut at_design = spec.clone();
    at_design.evaluate_at_ms = Some(0.0);
    out.push(ordering(&run_sweep(&at_design, workers)?));
    let report = verify_complexity(&spec.scenario)?;
    out.push(complexity(&report));
    Ok((out, report))
}

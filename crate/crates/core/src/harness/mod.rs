//! Monte Carlo sweeps: configuration, execution, CSV output and checks.
//!
//! A sweep file is TOML. Grid keys sit at the top level and the channel
//! scenario lives under `[scenario]`:
//!
//! ```toml
//! cg_iterations = [1, 2, 3, 4]
//! poly_degrees = []
//! precisions = ["fp32", "q15.16", "q7.16"]
//! nulling = "both"
//! q = [3]
//! n_drops = 50
//!
//! [scenario]
//! ue_speed_mps = 1.5
//! seed = 7
//! ```
//!
//! Any key can be overridden with `path.to.key=value`, where the value is a
//! TOML literal (bare words are taken as strings).

pub mod checks;
pub mod complexity;
pub mod emit;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{Arith, ArithmeticProfile};
use crate::channel::{self, ChannelDrop, NullFrames, ScenarioConfig};
use crate::error::{Error, Result};
use crate::inversion::{InversionSpec, Method, Scaling};
use crate::linalg::row_space_angle;
use crate::ltbf::{BeamformerSet, CovarianceSet, LtbfDesign, NullingConfig};
use crate::metrics::{self, LinkMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullingMode {
    On,
    Off,
    #[default]
    Both,
}

/// How the interferer covariance is obtained at the design instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceEstimate {
    /// Exact expectation over symbols and noise.
    Analytic,
    /// Sample average over `scenario.null_frames` null frames.
    #[default]
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// CG iteration counts; empty disables CG.
    pub cg_iterations: Vec<usize>,
    /// Neumann degrees; empty disables the polynomial method.
    pub poly_degrees: Vec<usize>,
    pub precisions: Vec<Arith>,
    pub scaling: Scaling,
    pub nulling: NullingMode,
    /// Nulling ranks to sweep.
    pub q: Vec<usize>,
    /// When set, the nulling rank is chosen per drop by this energy fraction
    /// and `q` is ignored.
    pub energy_threshold: Option<f64>,
    /// Projection rank per UE; 0 means `streams_per_ue`.
    pub r: usize,
    pub n_drops: usize,
    pub interference_estimate: InterferenceEstimate,
    /// Evaluation instant after the design instant; defaults to `scenario.t_lt_ms`.
    pub evaluate_at_ms: Option<f64>,
    pub scenario: ScenarioConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            cg_iterations: (1..=10).collect(),
            poly_degrees: (1..=10).collect(),
            precisions: [ArithmeticProfile::Fp64, ArithmeticProfile::Fp32, ArithmeticProfile::Q15_16, ArithmeticProfile::Q7_16]
                .into_iter()
                .map(Arith::wide)
                .collect(),
            scaling: Scaling::Spectral,
            nulling: NullingMode::Both,
            q: vec![3],
            energy_threshold: None,
            r: 0,
            n_drops: 50,
            interference_estimate: InterferenceEstimate::Sampled,
            evaluate_at_ms: None,
            scenario: ScenarioConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let spec: SweepSpec = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n_drops == 0 {
            return Err(Error::Config("n_drops must be at least 1".into()));
        }
        if self.precisions.is_empty() && !(self.cg_iterations.is_empty() && self.poly_degrees.is_empty()) {
            return Err(Error::Config("precisions must not be empty".into()));
        }
        if self.cg_iterations.iter().chain(&self.poly_degrees).any(|&k| k == 0) {
            return Err(Error::Config("iteration counts and degrees must be at least 1".into()));
        }
        if self.nulling != NullingMode::Off {
            if !self.scenario.interferer {
                return Err(Error::Config("nulling needs scenario.interferer = true".into()));
            }
            if self.energy_threshold.is_none() && (self.q.is_empty() || self.q.iter().any(|&q| q == 0 || q >= self.scenario.n_rx())) {
                return Err(Error::Config(format!("q grid must be non-empty with 1 <= q < {}", self.scenario.n_rx())));
            }
        }
        let r = self.rank();
        if r == 0 || r > self.scenario.n_rx() {
            return Err(Error::Config(format!("r = {r} out of range")));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        if self.r == 0 { self.scenario.streams_per_ue } else { self.r }
    }

    pub fn null_frames(&self) -> NullFrames {
        match self.interference_estimate {
            InterferenceEstimate::Analytic => NullFrames::Analytic,
            InterferenceEstimate::Sampled => NullFrames::Sampled(self.scenario.null_frames),
        }
    }

    /// Nulling settings swept per drop, the plain design first.
    pub fn nulling_settings(&self) -> Vec<NullingConfig> {
        let mut out = Vec::new();
        if self.nulling != NullingMode::On {
            out.push(NullingConfig::off());
        }
        if self.nulling != NullingMode::Off {
            match self.energy_threshold {
                Some(t) => out.push(NullingConfig::auto(t)),
                None => out.extend(self.q.iter().map(|&q| NullingConfig::with_rank(q))),
            }
        }
        out
    }

    /// Replaces the method and precision grids with explicit CLI choices.
    pub fn restrict(&mut self, methods: &[Method], precisions: &[Arith], scaling: Option<Scaling>) {
        if !methods.is_empty() {
            self.cg_iterations = methods.iter().filter_map(|m| if let Method::Cg(k) = m { Some(*k) } else { None }).collect();
            self.poly_degrees = methods.iter().filter_map(|m| if let Method::Poly(d) = m { Some(*d) } else { None }).collect();
        }
        if !precisions.is_empty() {
            self.precisions = precisions.to_vec();
        }
        if let Some(s) = scaling {
            self.scaling = s;
        }
    }
}

/// Sets `path.to.key = value` in a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override key '{key}' passes through a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub drop: u64,
    pub ue: usize,
    /// `mmse`, `exact`, `cg` or `poly`.
    pub method: String,
    pub order: usize,
    pub precision: String,
    pub nulling: bool,
    pub q: usize,
    pub sinr_db: f64,
    pub capacity: f64,
    pub cond_q: f64,
    pub cond_rv: f64,
    pub flops: u64,
    pub flops_nulling: u64,
    /// Row-space angle to the exact design with the same nulling setting.
    pub angle: f64,
    pub status: String,
}

/// Coordinates that identify a sweep cell, without drop and UE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub method: String,
    pub order: usize,
    pub precision: String,
    pub nulling: bool,
    pub q: usize,
}

impl Coord {
    pub fn new(method: &str, order: usize, precision: &str, nulling: bool, q: usize) -> Self {
        Self { method: method.into(), order, precision: precision.into(), nulling, q }
    }

    /// Filename-safe label, e.g. `cg-3_q15.16_nulled-q3`.
    pub fn label(&self) -> String {
        let method = if self.order > 0 { format!("{}-{}", self.method, self.order) } else { self.method.clone() };
        let nulling = if self.nulling { format!("nulled-q{}", self.q) } else { "plain".into() };
        format!("{method}_{}_{nulling}", self.precision.replace('/', "-"))
    }
}

impl Record {
    pub fn coord(&self) -> Coord {
        Coord::new(&self.method, self.order, &self.precision, self.nulling, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: SweepSpec,
    pub n_rx: usize,
    pub records: Vec<Record>,
}

impl ExperimentResult {
    /// Records of one cell in drop/UE order.
    pub fn cell<'a>(&'a self, coord: &'a Coord) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.method == coord.method && r.order == coord.order && r.precision == coord.precision && r.nulling == coord.nulling && r.q == coord.q)
    }

    pub fn coords(&self) -> Vec<Coord> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            let c = r.coord();
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        out
    }

    /// Mean capacity of a cell over all drops and UEs, ignoring failed rows.
    pub fn mean_capacity(&self, coord: &Coord) -> Option<f64> {
        let v: Vec<f64> = self.cell(coord).map(|r| r.capacity).filter(|c| c.is_finite()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Beamformer set built for one cell of one drop.
struct Variant {
    method: Method,
    precision: String,
    result: Result<BeamformerSet>,
}

fn variant_rows(drop: &ChannelDrop, eval: &ChannelDrop, nulling: &NullingConfig, v: &Variant, exact: Option<&BeamformerSet>) -> Vec<Record> {
    let n_ue = drop.n_ue();
    let coord = Coord::new(v.method.family(), v.method.order(), &v.precision, nulling.enabled, 0);
    let fail = |msg: String, q: usize| -> Vec<Record> {
        (0..n_ue)
            .map(|ue| Record {
                drop: drop.index,
                ue,
                method: coord.method.clone(),
                order: coord.order,
                precision: coord.precision.clone(),
                nulling: coord.nulling,
                q,
                sinr_db: f64::NAN,
                capacity: f64::NAN,
                cond_q: f64::NAN,
                cond_rv: f64::NAN,
                flops: 0,
                flops_nulling: 0,
                angle: f64::NAN,
                status: format!("error: {msg}"),
            })
            .collect()
    };
    let bf = match &v.result {
        Ok(bf) => bf,
        Err(e) => return fail(e.to_string(), if nulling.enabled && nulling.energy_threshold.is_none() { nulling.rank } else { 0 }),
    };
    let q = if bf.nulling.enabled { bf.nulling.rank } else { 0 };
    let link = match metrics::evaluate_ltbf(eval, bf) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string(), q),
    };
    let mut status = bf.status.flags();
    for w in &bf.warnings {
        if !w.starts_with("inversion status") {
            status.push_str(&format!(";warn:{w}"));
        }
    }
    (0..n_ue)
        .map(|ue| Record {
            drop: drop.index,
            ue,
            method: coord.method.clone(),
            order: coord.order,
            precision: coord.precision.clone(),
            nulling: coord.nulling,
            q,
            sinr_db: link.mean_sinr_db(ue),
            capacity: link.capacity[ue],
            cond_q: bf.cond_q,
            cond_rv: bf.cond_rv.unwrap_or(f64::NAN),
            flops: bf.status.flops + bf.nulling_flops,
            flops_nulling: bf.nulling_flops,
            angle: exact.and_then(|e| row_space_angle(&bf.g[ue], &e.g[ue]).ok()).unwrap_or(f64::NAN),
            status: status.clone(),
        })
        .collect()
}

fn baseline_rows(drop: &ChannelDrop, link: &Result<LinkMetrics>) -> Vec<Record> {
    (0..drop.n_ue())
        .map(|ue| {
            let (sinr_db, capacity, status) = match link {
                Ok(m) => (m.mean_sinr_db(ue), m.capacity[ue], "ok".to_string()),
                Err(e) => (f64::NAN, f64::NAN, format!("error: {e}")),
            };
            Record {
                drop: drop.index,
                ue,
                method: "mmse".into(),
                order: 0,
                precision: "fp64".into(),
                nulling: false,
                q: 0,
                sinr_db,
                capacity,
                cond_q: f64::NAN,
                cond_rv: f64::NAN,
                flops: 0,
                flops_nulling: 0,
                angle: f64::NAN,
                status,
            }
        })
        .collect()
}

/// Every record of one drop, in a fixed order.
pub fn run_drop(spec: &SweepSpec, index: u64) -> Result<Vec<Record>> {
    let drop = channel::generate_drop(&spec.scenario, index)?;
    let eval = drop.evolve(spec.evaluate_at_ms.unwrap_or(spec.scenario.t_lt_ms))?;
    let mut rows = baseline_rows(&drop, &metrics::evaluate_mmse_baseline(&eval));
    let r = spec.rank();
    let covs = CovarianceSet::from_drop(&drop, spec.null_frames());

    let mut settings = spec.nulling_settings();
    // the plain exact design is the reference for every sweep
    if settings.first().is_none_or(|s| s.enabled) {
        settings.insert(0, NullingConfig::off());
    }
    let sweep_plain = spec.nulling != NullingMode::On;
    for (si, nulling) in settings.iter().enumerate() {
        let design = covs.as_ref().map_err(|e| Error::Invalid(e.to_string())).and_then(|c| LtbfDesign::new(c, nulling));
        let exact = Variant {
            method: Method::Exact,
            precision: "fp64".into(),
            result: design.as_ref().map_err(|e| Error::Invalid(e.to_string())).and_then(|d| d.beamformers(r, &InversionSpec::exact())),
        };
        rows.extend(variant_rows(&drop, &eval, nulling, &exact, exact.result.as_ref().ok()));
        if si == 0 && !nulling.enabled && !sweep_plain {
            continue;
        }
        for arith in &spec.precisions {
            for (family, grid) in [(Method::Cg(1), &spec.cg_iterations), (Method::Poly(1), &spec.poly_degrees)] {
                let Some(&top) = grid.iter().max() else { continue };
                let method = match family {
                    Method::Cg(_) => Method::Cg(top),
                    _ => Method::Poly(top),
                };
                let inv = InversionSpec { method, arith: *arith, scaling: spec.scaling };
                let traj = design.as_ref().map_err(|e| Error::Invalid(e.to_string())).and_then(|d| d.trajectory(r, &inv));
                let mut orders: Vec<usize> = grid.clone();
                orders.sort_unstable();
                orders.dedup();
                for k in orders {
                    let m = match family {
                        Method::Cg(_) => Method::Cg(k),
                        _ => Method::Poly(k),
                    };
                    let result = match &traj {
                        Ok(t) => Ok(t[k - 1].clone()),
                        Err(e) => Err(Error::Invalid(e.to_string())),
                    };
                    let v = Variant { method: m, precision: arith.to_string(), result };
                    rows.extend(variant_rows(&drop, &eval, nulling, &v, exact.result.as_ref().ok()));
                }
            }
        }
    }
    Ok(rows)
}

/// Runs every drop on a pool of `workers` threads. Output is independent of `workers`.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let per_drop: Vec<Result<Vec<Record>>> = pool.install(|| (0..spec.n_drops as u64).into_par_iter().map(|d| run_drop(spec, d)).collect());
    let mut records = Vec::new();
    for rows in per_drop {
        records.extend(rows?);
    }
    Ok(ExperimentResult { spec: spec.clone(), n_rx: spec.scenario.n_rx(), records })
}

//! Disorder-averaged sweeps over `(L, W_gamma)` grids: seed management,
//! per-realization metric evaluation, order-independent aggregation, and
//! persistence.
//!
//! Realizations are independent jobs; the per-point reduction always runs in
//! realization-index order, so serial and parallel executions of the same
//! config produce byte-identical stores.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilanczos::{tridiagonalize, BiLanczosOptions};
use crate::entanglement::eigenstate_entropy_stats;
use crate::error::{Error, Result};
use crate::krylov_dynamics::{
    diagnostic_trace, early_time_coefficient, EvolutionMethod, EvolveOptions,
};
use crate::lanczos_metrics::{krylov_variance, reciprocity};
use crate::model::{build_hamiltonian, initial_plus_state, sample_disorder, SpinChainParams};
use crate::scaling::ScalingDataset;
use crate::spectral::{csr_ratios, eigendecompose, mean_angular, mean_radial};
use crate::stats::{self, mix64};

pub const SCHEMA_VERSION: u32 = 1;

/// Metric families a sweep can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Krylov-chain traces: `C_K`, `I_K`, early-time coefficient.
    Complexity,
    /// Lanczos-coefficient statistics: `σ_K²`, reciprocity, profiles.
    Lanczos,
    /// Complex spacing-ratio statistics of the spectrum.
    Csr,
    /// Eigenstate entanglement entropy statistics.
    Entropy,
}

/// Sampling-time layout for complexity traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSpec {
    pub log_min: f64,
    pub log_max: f64,
    pub log_points: usize,
    pub early_max: f64,
    pub early_points: usize,
    /// Times whose `C_K`/`I_K` values are recorded as scalars; always folded
    /// into the grid.
    pub sample_times: Vec<f64>,
}

impl Default for TimeGridSpec {
    fn default() -> Self {
        Self {
            log_min: 1e-3,
            log_max: 1e4,
            log_points: 200,
            early_max: 0.01,
            early_points: 20,
            sample_times: vec![300.0, 1000.0, 1e4],
        }
    }
}

impl TimeGridSpec {
    pub fn build(&self) -> Vec<f64> {
        let mut grid = stats::lin_space(0.0, self.early_max, self.early_points);
        grid.extend(stats::log_space(self.log_min, self.log_max, self.log_points));
        grid.extend(self.sample_times.iter().copied());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// Full description of a sweep; everything a rerun needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub l_list: Vec<usize>,
    pub w_gamma_grid: Vec<f64>,
    pub realizations_per_point: usize,
    /// Per-size overrides of the realization count.
    #[serde(default)]
    pub realizations_by_l: BTreeMap<usize, usize>,
    #[serde(default = "default_coupling")]
    pub j: f64,
    #[serde(default = "default_field")]
    pub h: f64,
    #[serde(default = "default_w_delta")]
    pub w_delta: f64,
    #[serde(default)]
    pub time_grid: TimeGridSpec,
    pub metrics: BTreeSet<Metric>,
    pub base_seed: u64,
    /// Truncate the bi-Lanczos iteration at this many Krylov vectors.
    /// Honored only when the trace metrics are not requested (the chain
    /// evolution needs the full tridiagonal form).
    #[serde(default)]
    pub krylov_dim_cap: Option<usize>,
    #[serde(default = "default_reciprocity_depths")]
    pub reciprocity_depths: Vec<usize>,
    #[serde(default = "default_evolution")]
    pub evolution: EvolutionMethod,
    /// Keep every per-realization record in the store.
    #[serde(default)]
    pub store_raw: bool,
}

fn default_coupling() -> f64 {
    1.0
}
fn default_field() -> f64 {
    0.5
}
fn default_w_delta() -> f64 {
    1.0
}
fn default_reciprocity_depths() -> Vec<usize> {
    vec![4, 5, 6]
}
fn default_evolution() -> EvolutionMethod {
    EvolutionMethod::Eigen
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_list.is_empty() || self.w_gamma_grid.is_empty() {
            return Err(Error::InvalidInput("empty L list or W_gamma grid".into()));
        }
        if self.realizations_per_point == 0 {
            return Err(Error::InvalidInput("realizations_per_point must be ≥ 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidInput("no metrics requested".into()));
        }
        for &l in &self.l_list {
            if !(1..=13).contains(&l) {
                return Err(Error::InvalidInput(format!(
                    "L = {l} outside the dense-matrix budget (1..=13)"
                )));
            }
            if self.metrics.contains(&Metric::Entropy) && l % 2 != 0 {
                return Err(Error::InvalidInput(format!(
                    "entropy metric needs even L, got {l}"
                )));
            }
        }
        if self.w_gamma_grid.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidInput("negative W_gamma".into()));
        }
        Ok(())
    }

    pub fn realizations_for(&self, l: usize) -> usize {
        self.realizations_by_l.get(&l).copied().unwrap_or(self.realizations_per_point)
    }

    fn params(&self, l: usize, w_gamma: f64) -> SpinChainParams {
        SpinChainParams { l, j: self.j, h: self.h, w_delta: self.w_delta, w_gamma }
    }
}

/// Seed for realization `r` of grid point `(L, w_idx)`: the base seed xored
/// with a SplitMix64 chain over the indices.
pub fn realization_seed(base_seed: u64, l: usize, w_idx: usize, r: usize) -> u64 {
    base_seed ^ mix64(l as u64 ^ mix64(w_idx as u64 ^ mix64(r as u64)))
}

/// Everything measured on one disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub seed: u64,
    pub scalars: BTreeMap<String, f64>,
    pub profiles: BTreeMap<String, Vec<f64>>,
}

/// Moments of one scalar across the successful realizations of a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Aggregate {
    fn from_values(values: &[f64]) -> Self {
        Self {
            mean: stats::mean(values),
            std: stats::sample_std(values),
            sem: stats::sem(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        }
    }
}

/// Element-wise aggregate of a profile metric, truncated to the shortest
/// record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileAggregate {
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub count: usize,
    /// Number of records that were longer than the common prefix.
    pub truncated: usize,
}

/// Reduce a set of successful records. Keys present in only part of the
/// records are aggregated over the records that carry them.
pub fn aggregate(
    records: &[RealizationRecord],
) -> Result<(BTreeMap<String, Aggregate>, BTreeMap<String, ProfileAggregate>)> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut scalars = BTreeMap::new();
    let mut keys = BTreeSet::new();
    for rec in records {
        keys.extend(rec.scalars.keys().cloned());
    }
    for key in keys {
        let values: Vec<f64> =
            records.iter().filter_map(|r| r.scalars.get(&key).copied()).collect();
        scalars.insert(key, Aggregate::from_values(&values));
    }
    let mut profiles = BTreeMap::new();
    let mut pkeys = BTreeSet::new();
    for rec in records {
        pkeys.extend(rec.profiles.keys().cloned());
    }
    for key in pkeys {
        let rows: Vec<&Vec<f64>> = records.iter().filter_map(|r| r.profiles.get(&key)).collect();
        let min_len = rows.iter().map(|r| r.len()).min().unwrap_or(0);
        let truncated = rows.iter().filter(|r| r.len() > min_len).count();
        let mut mean = Vec::with_capacity(min_len);
        let mut sem = Vec::with_capacity(min_len);
        for i in 0..min_len {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            mean.push(stats::mean(&col));
            sem.push(stats::sem(&col));
        }
        profiles.insert(key, ProfileAggregate { mean, sem, count: rows.len(), truncated });
    }
    Ok((scalars, profiles))
}

/// Aggregated results at one `(L, W_gamma)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub l: usize,
    pub w_idx: usize,
    pub w_gamma: f64,
    pub n_requested: usize,
    pub n_success: usize,
    /// One reason string per failed realization.
    pub failures: Vec<String>,
    /// Set when more than 20% of the realizations failed.
    pub flagged: bool,
    pub scalars: BTreeMap<String, Aggregate>,
    pub profiles: BTreeMap<String, ProfileAggregate>,
    /// Time grid backing the trace profiles, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<RealizationRecord>>,
}

/// A completed (or partially completed) sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultStore {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub points: Vec<PointResult>,
}

impl ResultStore {
    pub fn point(&self, l: usize, w_idx: usize) -> Option<&PointResult> {
        self.points.iter().find(|p| p.l == l && p.w_idx == w_idx)
    }

    /// Curves of one observable for the collapse stage. `sigma_S` maps to
    /// the cross-realization deviation of the per-realization mean entropy;
    /// every other observable reads its scalar's mean and standard error.
    pub fn scaling_dataset(&self, observable: &str) -> Result<ScalingDataset> {
        let mut data = ScalingDataset::new(observable);
        for &l in &self.config.l_list {
            let mut pts = Vec::new();
            for p in self.points.iter().filter(|p| p.l == l) {
                let value = match observable {
                    "sigma_S" => p.scalars.get("S_mean").map(|a| (a.std, a.sem)),
                    "sigma_S_pooled" => p.scalars.get("S_pooled_std").map(|a| (a.mean, a.sem)),
                    other => p.scalars.get(other).map(|a| (a.mean, a.sem)),
                };
                if let Some((y, err)) = value {
                    pts.push((p.w_gamma, y, err));
                }
            }
            if !pts.is_empty() {
                data.insert_curve(l, pts);
            }
        }
        data.validate()?;
        Ok(data)
    }
}

fn evaluate_realization(
    config: &ExperimentConfig,
    l: usize,
    w_idx: usize,
    r: usize,
) -> Result<RealizationRecord> {
    let w_gamma = config.w_gamma_grid[w_idx];
    let seed = realization_seed(config.base_seed, l, w_idx, r);
    let params = config.params(l, w_gamma);
    let disorder = sample_disorder(&params, seed);
    let h = build_hamiltonian(&params, &disorder)?;

    let mut scalars = BTreeMap::new();
    let mut profiles = BTreeMap::new();

    let wants_traces = config.metrics.contains(&Metric::Complexity);
    let wants_lanczos = config.metrics.contains(&Metric::Lanczos);
    if wants_traces || wants_lanczos {
        let psi0 = initial_plus_state(l);
        let opts = BiLanczosOptions {
            store_basis: false,
            max_steps: if wants_traces { None } else { config.krylov_dim_cap },
            ..Default::default()
        };
        let tri = tridiagonalize(&h, &psi0, &opts)?;
        let form = &tri.form;
        if wants_lanczos {
            scalars.insert("k_dim".into(), form.k() as f64);
            for &d in &config.reciprocity_depths {
                scalars.insert(format!("R_K_{d}"), reciprocity(form, d)?);
            }
            if form.k() >= 5 {
                scalars.insert("sigma_K2".into(), krylov_variance(form)?);
            }
            profiles.insert("abs_b".into(), form.b.clone());
            profiles.insert("abs_c".into(), form.c.iter().map(|z| z.norm()).collect());
            profiles
                .insert("cos_theta".into(), form.link_arguments().iter().map(|t| t.cos()).collect());
        }
        if wants_traces {
            let grid = config.time_grid.build();
            let evolve = EvolveOptions { method: config.evolution, ..Default::default() };
            let trace = diagnostic_trace(form, &grid, &evolve)?;
            scalars.insert("early_time_a".into(), early_time_coefficient(&trace)?);
            for &t in &config.time_grid.sample_times {
                let c = trace.c_k_at(t).ok_or_else(|| {
                    Error::InvalidInput(format!("sample time {t} outside the grid"))
                })?;
                let i = trace.i_k_at(t).unwrap();
                scalars.insert(format!("c_k_t{t}"), c);
                scalars.insert(format!("i_k_t{t}"), i);
            }
            profiles.insert("c_k_trace".into(), trace.c_k.clone());
            profiles.insert("i_k_trace".into(), trace.i_k.clone());
            profiles.insert("log_norm_trace".into(), trace.log_norms.clone());
        }
    }

    let wants_csr = config.metrics.contains(&Metric::Csr);
    let wants_entropy = config.metrics.contains(&Metric::Entropy);
    if wants_csr {
        let spectrum = eigendecompose(&h)?;
        let sample = csr_ratios(&spectrum)?;
        scalars.insert("r_mean".into(), mean_radial(&sample)?);
        scalars.insert("cos_theta_mean".into(), mean_angular(&sample)?);
        scalars.insert("csr_excluded".into(), sample.excluded_duplicates as f64);
    }
    if wants_entropy {
        let sample = eigenstate_entropy_stats(&h, l)?;
        let n = sample.entropies.len() as f64;
        scalars.insert("S_mean".into(), sample.mean());
        scalars.insert("S_max".into(), sample.max());
        scalars.insert("S_sum".into(), sample.entropies.iter().sum());
        scalars.insert("S_sq_sum".into(), sample.entropies.iter().map(|s| s * s).sum());
        scalars.insert("S_count".into(), n);
    }

    Ok(RealizationRecord { seed, scalars, profiles })
}

fn pooled_entropy_std(records: &[RealizationRecord]) -> Option<f64> {
    let mut n = 0.0;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for rec in records {
        n += rec.scalars.get("S_count")?;
        sum += rec.scalars.get("S_sum")?;
        sq += rec.scalars.get("S_sq_sum")?;
    }
    if n < 2.0 {
        return Some(0.0);
    }
    let mean = sum / n;
    Some(((sq - n * mean * mean) / (n - 1.0)).max(0.0).sqrt())
}

fn run_point(config: &ExperimentConfig, l: usize, w_idx: usize) -> Result<PointResult> {
    let n = config.realizations_for(l);
    let outcomes: Vec<std::result::Result<RealizationRecord, String>> = (0..n)
        .into_par_iter()
        .map(|r| evaluate_realization(config, l, w_idx, r).map_err(|e| e.to_string()))
        .collect();
    // fixed-order reduction: realization index order, independent of the
    // parallel schedule
    let mut records = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(reason) => failures.push(reason),
        }
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let (mut scalars, profiles) = aggregate(&records)?;
    if let Some(pooled) = pooled_entropy_std(&records) {
        let agg =
            Aggregate { mean: pooled, std: 0.0, sem: 0.0, min: pooled, max: pooled, count: records.len() };
        scalars.insert("S_pooled_std".into(), agg);
    }
    let times = config
        .metrics
        .contains(&Metric::Complexity)
        .then(|| config.time_grid.build());
    Ok(PointResult {
        l,
        w_idx,
        w_gamma: config.w_gamma_grid[w_idx],
        n_requested: n,
        n_success: records.len(),
        flagged: failures.len() * 5 > n,
        failures,
        scalars,
        profiles,
        times,
        raw: config.store_raw.then_some(records),
    })
}

/// Run the full sweep. Deterministic for a fixed config; failures are
/// recorded per point and never abort the sweep (a point whose realizations
/// all fail is itself recorded as a failure-flagged empty point).
pub fn run_sweep(config: &ExperimentConfig) -> Result<ResultStore> {
    resume_sweep(config, None)
}

/// Like [`run_sweep`], but completed points found in `prior` are carried
/// over instead of recomputed. The prior store must have been produced by an
/// identical config.
pub fn resume_sweep(config: &ExperimentConfig, prior: Option<&ResultStore>) -> Result<ResultStore> {
    config.validate()?;
    if let Some(p) = prior {
        if p.config != *config {
            return Err(Error::InvalidInput(
                "resume config differs from the stored config".into(),
            ));
        }
    }
    let mut points = Vec::new();
    for &l in &config.l_list {
        for w_idx in 0..config.w_gamma_grid.len() {
            let done = prior.and_then(|p| p.point(l, w_idx)).filter(|p| {
                p.n_success + p.failures.len() == p.n_requested
                    && p.n_requested == config.realizations_for(l)
            });
            match done {
                Some(p) => points.push(p.clone()),
                None => match run_point(config, l, w_idx) {
                    Ok(p) => points.push(p),
                    Err(Error::NoRecords) => points.push(PointResult {
                        l,
                        w_idx,
                        w_gamma: config.w_gamma_grid[w_idx],
                        n_requested: config.realizations_for(l),
                        n_success: 0,
                        failures: vec!["all realizations failed".into()],
                        flagged: true,
                        scalars: BTreeMap::new(),
                        profiles: BTreeMap::new(),
                        times: None,
                        raw: None,
                    }),
                    Err(e) => return Err(e),
                },
            }
        }
    }
    Ok(ResultStore { schema_version: SCHEMA_VERSION, config: config.clone(), points })
}

/// Write the store manifest plus one CSV per metric family into `dir`.
pub fn persist(store: &ResultStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(store)?;
    fs::write(dir.join("store.json"), manifest)?;

    let metrics = &store.config.metrics;
    if metrics.contains(&Metric::Lanczos) {
        let mut f = fs::File::create(dir.join("lanczos_metrics.csv"))?;
        writeln!(f, "L,W_gamma,sigma_K2_mean,sigma_K2_sem,R_K_4,R_K_5,R_K_6")?;
        for p in &store.points {
            let col = |k: &str| p.scalars.get(k).map_or(f64::NAN, |a| a.mean);
            let sem = |k: &str| p.scalars.get(k).map_or(f64::NAN, |a| a.sem);
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                p.l,
                p.w_gamma,
                col("sigma_K2"),
                sem("sigma_K2"),
                col("R_K_4"),
                col("R_K_5"),
                col("R_K_6")
            )?;
        }
    }
    if metrics.contains(&Metric::Csr) {
        let mut f = fs::File::create(dir.join("csr_summary.csv"))?;
        writeln!(f, "L,W_gamma,r_mean,r_sem,cos_theta_mean,cos_theta_sem,n_realizations")?;
        for p in &store.points {
            if let (Some(r), Some(c)) = (p.scalars.get("r_mean"), p.scalars.get("cos_theta_mean")) {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{}",
                    p.l, p.w_gamma, r.mean, r.sem, c.mean, c.sem, p.n_success
                )?;
            }
        }
    }
    if metrics.contains(&Metric::Entropy) {
        let mut f = fs::File::create(dir.join("entropy_summary.csv"))?;
        writeln!(f, "L,W_gamma,S_mean,sigma_S,sigma_S_pooled")?;
        for p in &store.points {
            if let Some(s) = p.scalars.get("S_mean") {
                let pooled = p.scalars.get("S_pooled_std").map_or(f64::NAN, |a| a.mean);
                writeln!(f, "{},{},{},{},{}", p.l, p.w_gamma, s.mean, s.std, pooled)?;
            }
        }
    }
    if metrics.contains(&Metric::Complexity) {
        let mut f = fs::File::create(dir.join("complexity_summary.csv"))?;
        let sample_cols: Vec<String> = store
            .config
            .time_grid
            .sample_times
            .iter()
            .flat_map(|t| [format!("c_k_t{t}"), format!("i_k_t{t}")])
            .collect();
        writeln!(f, "L,W_gamma,early_time_a,early_time_a_sem,{}", sample_cols.join(","))?;
        for p in &store.points {
            if let Some(a) = p.scalars.get("early_time_a") {
                let rest: Vec<String> = sample_cols
                    .iter()
                    .map(|k| p.scalars.get(k).map_or("nan".into(), |v| v.mean.to_string()))
                    .collect();
                writeln!(f, "{},{},{},{},{}", p.l, p.w_gamma, a.mean, a.sem, rest.join(","))?;
            }
        }
        // ensemble-mean traces, one file per grid point
        for p in &store.points {
            if let (Some(times), Some(ck)) = (&p.times, p.profiles.get("c_k_trace")) {
                let ik = &p.profiles["i_k_trace"];
                let ln = &p.profiles["log_norm_trace"];
                let name = format!("trace_mean_L{}_w{}.csv", p.l, p.w_idx);
                let mut f = fs::File::create(dir.join(name))?;
                writeln!(f, "t,c_k,i_k,raw_log_norm")?;
                for i in 0..ck.mean.len() {
                    writeln!(f, "{},{},{},{}", times[i], ck.mean[i], ik.mean[i], ln.mean[i])?;
                }
            }
        }
    }
    Ok(())
}

/// Load a store written by [`persist`].
pub fn load(dir: &Path) -> Result<ResultStore> {
    let text = fs::read_to_string(dir.join("store.json"))?;
    let store: ResultStore = serde_json::from_str(&text)?;
    if store.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: store.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(store)
}

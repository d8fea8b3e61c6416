//! Monte-Carlo harness: synthetic data generation and FDR/power sweeps over
//! target levels, comparing the plain filter (KO) against the aggregated one
//! (AKO) on the same data per repetition.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ako::{make_schedule, run_seed, ScheduleKind};
use crate::error::{Error, Result};
use crate::filter::{select, Variant, WStatistics};
use crate::knockoff::{DesignMatrix, KnockoffModel};
use crate::path::{sigmoid, ModelKind, PathConfig};
use crate::seed::{derive_seed, rng_from_seed};

/// Safety factor for the equicorrelated perturbation used by the harness.
const SAFETY: f64 = 0.99;

// per-repetition seed streams
const STREAM_DESIGN: u64 = 1;
const STREAM_BETA: u64 = 2;
const STREAM_OUTCOME: u64 = 3;
const STREAM_KNOCKOFF: u64 = 4;

/// Full specification of one simulation experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    /// AR(1) correlation of adjacent features.
    pub rho: f64,
    /// Number of nonzero coefficients (0 gives a pure-null experiment).
    pub sparsity: usize,
    /// Target signal-to-noise ratio ‖Xβ‖²/(n·σ²).
    pub snr: f64,
    pub sigma2: f64,
    pub model: ModelKind,
    pub q_grid: Vec<f64>,
    pub variant: Variant,
    pub schedule_kind: ScheduleKind,
    pub k: usize,
    pub reps: usize,
    pub master_seed: u64,
    /// Covariance shrinkage used when fitting the knockoff model.
    pub shrinkage: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 200,
            p: 100,
            rho: 0.5,
            sparsity: 20,
            snr: 5.0,
            sigma2: 1.0,
            model: ModelKind::Linear,
            q_grid: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            variant: Variant::Ko,
            schedule_kind: ScheduleKind::Geometric,
            k: 5,
            reps: 100,
            master_seed: 0,
            shrinkage: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity > self.p {
            return Err(Error::InvalidInput(format!(
                "sparsity {} exceeds p = {}",
                self.sparsity, self.p
            )));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if self.q_grid.is_empty() || self.q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidInput(
                "q_grid must be nonempty with levels in [0, 1]".into(),
            ));
        }
        if !(self.sigma2 > 0.0) || !(self.snr > 0.0) {
            return Err(Error::InvalidInput(
                "sigma2 and snr must be positive".into(),
            ));
        }
        Ok(())
    }

    fn path_config(&self) -> PathConfig {
        match self.model {
            ModelKind::Linear => PathConfig::linear(),
            ModelKind::Logistic => PathConfig::logistic(),
        }
    }
}

/// Design with i.i.d. rows from N(0, Σ), Σ_ij = ρ^|i−j|, generated through the
/// exact lower-triangular AR(1) factor: x_1 = z_1, x_j = ρ·x_{j−1} + √(1−ρ²)·z_j.
pub fn gen_ar1_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<DesignMatrix> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rho must lie in (-1, 1), got {rho}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let innovation = (1.0 - rho * rho).sqrt();
    let mut values = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        values[(i, 0)] = prev;
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * z;
            values[(i, j)] = prev;
        }
    }
    DesignMatrix::new(values)
}

/// Sparse coefficient vector: a uniformly drawn support set to 1, then the
/// whole vector rescaled so that ‖Xβ‖²/(n·σ²) equals `snr` exactly.
///
/// `sparsity = 0` returns the zero vector (pure-null signal), which has no
/// scale to adjust.
pub fn gen_sparse_beta(
    p: usize,
    sparsity: usize,
    x: &DesignMatrix,
    snr: f64,
    sigma2: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if sparsity > p {
        return Err(Error::InvalidInput(format!(
            "sparsity {sparsity} exceeds p = {p}"
        )));
    }
    if x.p() != p {
        return Err(Error::InvalidInput(format!(
            "design has p = {} but beta has length {p}",
            x.p()
        )));
    }
    let mut beta = DVector::zeros(p);
    if sparsity == 0 {
        return Ok(beta);
    }
    let mut rng = rng_from_seed(seed);
    for idx in rand::seq::index::sample(&mut rng, p, sparsity) {
        beta[idx] = 1.0;
    }
    let xb = x.values() * &beta;
    let ssq = xb.norm_squared();
    if ssq <= 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let scale = (snr * x.n() as f64 * sigma2 / ssq).sqrt();
    Ok(beta * scale)
}

/// Outcome draw. Linear: y = Xβ + ε with ε ~ N(0, σ²I). Logistic: independent
/// Bernoulli draws at Pr(y_i = 1) = exp(x_iᵀβ)/(1+exp(x_iᵀβ)), evaluated in
/// the overflow-free form.
pub fn gen_outcome(
    x: &DesignMatrix,
    beta: &DVector<f64>,
    model: ModelKind,
    sigma2: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if x.p() != beta.len() {
        return Err(Error::InvalidInput(format!(
            "design has p = {} but beta has length {}",
            x.p(),
            beta.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let eta = x.values() * beta;
    let y = match model {
        ModelKind::Linear => {
            let sd = sigma2.sqrt();
            DVector::from_fn(x.n(), |i, _| eta[i] + sd * rng.sample::<f64, _>(StandardNormal))
        }
        ModelKind::Logistic => DVector::from_fn(x.n(), |i, _| {
            let u: f64 = rng.gen();
            if u < sigmoid(eta[i]) {
                1.0
            } else {
                0.0
            }
        }),
    };
    Ok(y)
}

/// Selection method identifier in harness output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ko,
    Ako,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Ko => write!(f, "KO"),
            Method::Ako => write!(f, "AKO"),
        }
    }
}

/// One tidy output row: a single (repetition, target level, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub q: f64,
    pub method: Method,
    pub variant: Variant,
    pub fdp: f64,
    pub tdp_paper: f64,
    /// None when the true support is empty (pure-null runs).
    pub power_conventional: Option<f64>,
    pub n_selected: usize,
    /// KO rows carry the run-1 knockoff seed, AKO rows the per-rep master
    /// seed the run seeds were derived from.
    pub seed: u64,
}

/// Aggregated cell over repetitions for one (q, method).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateCell {
    pub q: f64,
    pub method: Method,
    pub mean_fdr: f64,
    pub se_fdr: f64,
    pub mean_tdp_paper: f64,
    pub se_tdp_paper: f64,
    pub mean_power: Option<f64>,
    pub se_power: Option<f64>,
    pub reps: usize,
}

/// A repetition that failed, kept for the record instead of being dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcludedRep {
    pub rep: usize,
    pub error: String,
}

/// Everything an experiment produced, fully determined by its config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RepRecord>,
    pub cells: Vec<AggregateCell>,
    pub excluded: Vec<ExcludedRep>,
    /// Logistic outcome draws redone because a class was missing.
    pub outcome_regenerations: usize,
}

/// Progress callback payload: repetitions completed so far out of the total.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

struct RepOutput {
    rows: Vec<RepRecord>,
    regenerations: usize,
}

fn outcome_with_retries(
    x: &DesignMatrix,
    beta: &DVector<f64>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(DVector<f64>, usize)> {
    let y = gen_outcome(x, beta, cfg.model, cfg.sigma2, seed)?;
    if cfg.model == ModelKind::Linear {
        return Ok((y, 0));
    }
    let constant = |y: &DVector<f64>| {
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        ones == 0 || ones == y.len()
    };
    if !constant(&y) {
        return Ok((y, 0));
    }
    for attempt in 1..=100 {
        let y = gen_outcome(x, beta, cfg.model, cfg.sigma2, derive_seed(seed, attempt))?;
        if !constant(&y) {
            return Ok((y, attempt as usize));
        }
    }
    Err(Error::DegenerateOutcome(
        "logistic outcome stayed single-class after 100 regenerations".into(),
    ))
}

fn run_rep(cfg: &ExperimentConfig, rep: usize) -> Result<RepOutput> {
    let rep_seed = derive_seed(cfg.master_seed, rep as u64);
    let x = gen_ar1_design(cfg.n, cfg.p, cfg.rho, derive_seed(rep_seed, STREAM_DESIGN))?;
    let beta = gen_sparse_beta(
        cfg.p,
        cfg.sparsity,
        &x,
        cfg.snr,
        cfg.sigma2,
        derive_seed(rep_seed, STREAM_BETA),
    )?;
    let support: BTreeSet<usize> = beta
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(j, _)| j)
        .collect();
    let (y, regenerations) =
        outcome_with_retries(&x, &beta, cfg, derive_seed(rep_seed, STREAM_OUTCOME))?;

    let model = KnockoffModel::from_design(&x, cfg.shrinkage, SAFETY)?;
    let path_cfg = cfg.path_config();
    let ko_master = derive_seed(rep_seed, STREAM_KNOCKOFF);

    // One W vector per aggregation run; every q in the grid reuses them, which
    // is exactly what rerunning the aggregation with the same master seed
    // would compute.
    let mut runs: Vec<(u64, WStatistics)> = Vec::with_capacity(cfg.k);
    for i in 1..=cfg.k {
        let seed = run_seed(ko_master, i);
        let w = crate::ako::run_knockoff_w(&x, &y, &model, &path_cfg, seed)
            .map_err(|e| Error::RunFailed {
                run: i,
                source: Box::new(e),
            })?;
        runs.push((seed, w));
    }

    let mut rows = Vec::with_capacity(cfg.q_grid.len() * 2);
    for &q in &cfg.q_grid {
        let plain = select(&runs[0].1, q, cfg.variant, runs[0].0, None);
        rows.push(make_record(cfg, rep, q, Method::Ko, &plain.selected, &support, runs[0].0));

        let schedule = make_schedule(q, cfg.k, cfg.schedule_kind.clone())?;
        let mut union = BTreeSet::new();
        for (idx, &level) in schedule.levels.iter().enumerate() {
            let sel = select(&runs[idx].1, level, cfg.variant, runs[idx].0, Some(idx));
            union.extend(sel.selected);
        }
        rows.push(make_record(cfg, rep, q, Method::Ako, &union, &support, ko_master));
    }
    Ok(RepOutput {
        rows,
        regenerations,
    })
}

fn make_record(
    cfg: &ExperimentConfig,
    rep: usize,
    q: f64,
    method: Method,
    selected: &BTreeSet<usize>,
    support: &BTreeSet<usize>,
    seed: u64,
) -> RepRecord {
    use crate::ako::{empirical_fdp, empirical_power, PowerConvention};
    let power_conventional = if support.is_empty() {
        None
    } else {
        Some(empirical_power(selected, support, PowerConvention::Conventional).expect("nonempty support"))
    };
    RepRecord {
        rep,
        q,
        method,
        variant: cfg.variant,
        fdp: empirical_fdp(selected, support),
        tdp_paper: empirical_power(selected, support, PowerConvention::PaperTdp)
            .expect("tdp is total"),
        power_conventional,
        n_selected: selected.len(),
        seed,
    }
}

/// Run the experiment, fanning repetitions out to worker threads.
///
/// Per-rep seeds are pre-derived, so the result is identical to sequential
/// execution regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_progress(cfg, |_| {})
}

pub fn run_experiment_with_progress(
    cfg: &ExperimentConfig,
    on_progress: impl Fn(Progress) + Sync,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let completed = AtomicUsize::new(0);
    let outputs: Vec<(usize, std::result::Result<RepOutput, Error>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let out = run_rep(cfg, rep);
            let done = completed.fetch_add(1, Ordering::Relaxed) + 1;
            on_progress(Progress {
                completed: done,
                total: cfg.reps,
            });
            (rep, out)
        })
        .collect();

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut regenerations = 0usize;
    for (rep, out) in outputs {
        match out {
            Ok(o) => {
                rows.extend(o.rows);
                regenerations += o.regenerations;
            }
            Err(e) => excluded.push(ExcludedRep {
                rep,
                error: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::SolverFailure(format!(
            "every repetition failed; first error: {}",
            excluded
                .first()
                .map(|e| e.error.clone())
                .unwrap_or_default()
        )));
    }
    let cells = aggregate(cfg, &rows);
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        cells,
        excluded,
        outcome_regenerations: regenerations,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

fn aggregate(cfg: &ExperimentConfig, rows: &[RepRecord]) -> Vec<AggregateCell> {
    let mut cells = Vec::new();
    for &q in &cfg.q_grid {
        for method in [Method::Ko, Method::Ako] {
            let sub: Vec<&RepRecord> = rows
                .iter()
                .filter(|r| r.q == q && r.method == method)
                .collect();
            if sub.is_empty() {
                continue;
            }
            let (mean_fdr, se_fdr) = mean_se(&sub.iter().map(|r| r.fdp).collect::<Vec<_>>());
            let (mean_tdp, se_tdp) = mean_se(&sub.iter().map(|r| r.tdp_paper).collect::<Vec<_>>());
            let powers: Vec<f64> = sub.iter().filter_map(|r| r.power_conventional).collect();
            let (mean_power, se_power) = if powers.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_se(&powers);
                (Some(m), Some(s))
            };
            cells.push(AggregateCell {
                q,
                method,
                mean_fdr,
                se_fdr,
                mean_tdp_paper: mean_tdp,
                se_tdp_paper: se_tdp,
                mean_power,
                se_power,
                reps: sub.len(),
            });
        }
    }
    cells
}

/// Write the tidy per-(rep, q, method) rows:
/// `rep,q,method,variant,fdp,tdp_paper,power_conventional,n_selected,seed`.
pub fn write_raw_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &result.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    q: f64,
    method: &'a Method,
    mean_fdr: f64,
    se_fdr: f64,
    mean_power: Option<f64>,
    se_power: Option<f64>,
    reps: usize,
}

/// Write the aggregated table: `q,method,mean_fdr,se_fdr,mean_power,se_power,reps`.
/// Power is the conventional convention; the cells retain both.
pub fn write_aggregate_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for cell in &result.cells {
        w.serialize(AggregateRow {
            q: cell.q,
            method: &cell.method,
            mean_fdr: cell.mean_fdr,
            se_fdr: cell.se_fdr,
            mean_power: cell.mean_power,
            se_power: cell.se_power,
            reps: cell.reps,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv write failed: {e}"))
}

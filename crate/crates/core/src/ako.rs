//! Aggregated knockoff selection.
//!
//! The filter is run k times, each run on a fresh knockoff draw and at its
//! own target level q_i, and the selected sets are unioned. With
//! Σ q_i ≤ q and the knockoff+ variant, the union controls FDR at level q by
//! a union bound; the recommended geometric sequence q_i = q/2^{i−1}
//! oversubscribes that budget (Σ q_i > q for k ≥ 2) and is flagged as such.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{select, w_statistics, SelectionResult, Variant, WStatistics};
use crate::knockoff::{sample_knockoffs, DesignMatrix, KnockoffModel};
use crate::path::{entry_statistics, fit_path, ModelKind, PathConfig};
use crate::seed::derive_seed;

/// How the per-run target levels are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// q_i = q / 2^{i−1}. Recommended default; sums to more than q for k ≥ 2.
    Geometric,
    /// q_i = q / k, so the levels sum to q and the union bound applies.
    Uniform,
    /// Caller-supplied levels.
    Custom(Vec<f64>),
}

/// A sequence of per-run target levels for one aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSchedule {
    pub q: f64,
    pub k: usize,
    pub kind: ScheduleKind,
    pub levels: Vec<f64>,
    /// Whether Σ levels ≤ q (+1e−12), i.e. the union-bound guarantee applies.
    pub theorem_valid: bool,
}

/// Build a schedule of k levels for target level q.
pub fn make_schedule(q: f64, k: usize, kind: ScheduleKind) -> Result<AggregationSchedule> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidSchedule(format!(
            "target level q must lie in [0, 1], got {q}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidSchedule("k must be at least 1".into()));
    }
    let levels: Vec<f64> = match &kind {
        ScheduleKind::Geometric => (0..k).map(|i| (q / 2f64.powi(i as i32)).clamp(0.0, 1.0)).collect(),
        ScheduleKind::Uniform => vec![q / k as f64; k],
        ScheduleKind::Custom(levels) => {
            if levels.len() != k {
                return Err(Error::InvalidSchedule(format!(
                    "custom schedule has {} levels but k = {k}",
                    levels.len()
                )));
            }
            if levels.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
                return Err(Error::InvalidSchedule(
                    "custom levels must lie in [0, 1]".into(),
                ));
            }
            levels.clone()
        }
    };
    let sum: f64 = levels.iter().sum();
    Ok(AggregationSchedule {
        q,
        k,
        kind,
        theorem_valid: sum <= q + 1e-12,
        levels,
    })
}

/// Options for [`ako_select_with`].
#[derive(Debug, Clone, Default)]
pub struct AkoOptions {
    /// Reuse a single knockoff draw (seed of run 1) for every run. Ablation
    /// switch; the default draws a fresh knockoff sample per run.
    pub reuse_knockoffs: bool,
}

/// Result of one aggregated selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AkoResult {
    /// Union of the per-run selections (0-based feature indices).
    pub selected: BTreeSet<usize>,
    pub per_run: Vec<SelectionResult>,
    pub schedule: AggregationSchedule,
    pub variant: Variant,
    pub master_seed: u64,
}

/// One complete filter run: draw knockoffs with `seed`, fit the path on
/// `[X X̃]`, and return the W statistics.
///
/// This is the unit both aggregation and the simulation harness build on, so
/// a plain filter run and run i of an aggregation are bit-identical whenever
/// their seeds match.
pub fn run_knockoff_w(
    x: &DesignMatrix,
    y: &DVector<f64>,
    model: &KnockoffModel,
    path_cfg: &PathConfig,
    seed: u64,
) -> Result<WStatistics> {
    let x_tilde = sample_knockoffs(x, model, seed)?;
    let x_ext = extend_design(x.values(), &x_tilde);
    let path = fit_path(&x_ext, y, path_cfg)?;
    let (z, z_tilde) = entry_statistics(&path)?;
    w_statistics(&z, &z_tilde)
}

/// Column-concatenate `[X X̃]`.
pub fn extend_design(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let mut ext = DMatrix::zeros(n, 2 * p);
    ext.view_mut((0, 0), (n, p)).copy_from(x);
    ext.view_mut((0, p), (n, p)).copy_from(x_tilde);
    ext
}

/// Seed of run `i` (1-based) under a master seed.
pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    derive_seed(master_seed, run as u64)
}

/// Aggregated knockoff selection: k filter runs at the schedule's levels,
/// selections unioned.
///
/// Run i draws its knockoff sample with a seed derived from
/// `(master_seed, i)`, so the whole aggregation is deterministic, and runs
/// may be evaluated in any order (or concurrently) with identical results.
#[allow(clippy::too_many_arguments)]
pub fn ako_select(
    x: &DesignMatrix,
    y: &DVector<f64>,
    model: ModelKind,
    schedule: &AggregationSchedule,
    variant: Variant,
    knockoff_model: &KnockoffModel,
    path_cfg: &PathConfig,
    master_seed: u64,
) -> Result<AkoResult> {
    ako_select_with(
        x,
        y,
        model,
        schedule,
        variant,
        knockoff_model,
        path_cfg,
        master_seed,
        &AkoOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn ako_select_with(
    x: &DesignMatrix,
    y: &DVector<f64>,
    model: ModelKind,
    schedule: &AggregationSchedule,
    variant: Variant,
    knockoff_model: &KnockoffModel,
    path_cfg: &PathConfig,
    master_seed: u64,
    options: &AkoOptions,
) -> Result<AkoResult> {
    if path_cfg.model != model {
        return Err(Error::InvalidInput(format!(
            "path config is for the {} model but {} was requested",
            path_cfg.model, model
        )));
    }
    let mut per_run = Vec::with_capacity(schedule.k);
    let mut union = BTreeSet::new();
    let mut reused_w: Option<WStatistics> = None;

    for (idx, &level) in schedule.levels.iter().enumerate() {
        let run = idx + 1;
        let seed = if options.reuse_knockoffs {
            run_seed(master_seed, 1)
        } else {
            run_seed(master_seed, run)
        };
        let w = match (&reused_w, options.reuse_knockoffs) {
            (Some(w), true) => w.clone(),
            _ => {
                let w = run_knockoff_w(x, y, knockoff_model, path_cfg, seed).map_err(|e| {
                    Error::RunFailed {
                        run,
                        source: Box::new(e),
                    }
                })?;
                if options.reuse_knockoffs {
                    reused_w = Some(w.clone());
                }
                w
            }
        };
        let sel = select(&w, level, variant, seed, Some(idx));
        union.extend(sel.selected.iter().copied());
        per_run.push(sel);
    }

    Ok(AkoResult {
        selected: union,
        per_run,
        schedule: schedule.clone(),
        variant,
        master_seed,
    })
}

/// Realized false discovery proportion `|Ŝ\S| / (|Ŝ| ∨ 1)`.
pub fn empirical_fdp(selected: &BTreeSet<usize>, true_support: &BTreeSet<usize>) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    let false_count = selected.difference(true_support).count();
    false_count as f64 / selected.len() as f64
}

/// Which power definition to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerConvention {
    /// True discoveries over selections, `|Ŝ∩S| / (|Ŝ| ∨ 1)`. This is the
    /// quantity printed as "power" in some write-ups; it is really a true
    /// discovery proportion.
    PaperTdp,
    /// True discoveries over the true support, `|Ŝ∩S| / |S|`.
    Conventional,
}

/// Realized power under the chosen convention. The conventional form is
/// undefined for an empty true support.
pub fn empirical_power(
    selected: &BTreeSet<usize>,
    true_support: &BTreeSet<usize>,
    convention: PowerConvention,
) -> Result<f64> {
    let hits = selected.intersection(true_support).count() as f64;
    match convention {
        PowerConvention::PaperTdp => Ok(if selected.is_empty() {
            0.0
        } else {
            hits / selected.len() as f64
        }),
        PowerConvention::Conventional => {
            if true_support.is_empty() {
                Err(Error::UndefinedPower)
            } else {
                Ok(hits / true_support.len() as f64)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::filter::select;
    use crate::knockoff::KnockoffModel;
    use crate::sim::{gen_ar1_design, gen_outcome, gen_sparse_beta};

    #[test]
    fn geometric_schedule_values() {
        let s = make_schedule(0.1, 5, ScheduleKind::Geometric).unwrap();
        let expect = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        for (l, e) in s.levels.iter().zip(expect.iter()) {
            assert_relative_eq!(l, e, epsilon = 1e-15);
        }
        assert_relative_eq!(s.levels.iter().sum::<f64>(), 0.19375, epsilon = 1e-15);
        assert!(!s.theorem_valid);
    }

    #[test]
    fn uniform_schedule_sums_to_q() {
        let s = make_schedule(0.1, 5, ScheduleKind::Uniform).unwrap();
        assert!(s.levels.iter().all(|&l| (l - 0.02).abs() < 1e-15));
        assert_relative_eq!(s.levels.iter().sum::<f64>(), 0.1, epsilon = 1e-12);
        assert!(s.theorem_valid);
    }

    #[test]
    fn k_one_schedule_is_plain_level() {
        for kind in [ScheduleKind::Geometric, ScheduleKind::Uniform] {
            let s = make_schedule(0.2, 1, kind).unwrap();
            assert_eq!(s.levels, vec![0.2]);
            assert!(s.theorem_valid);
        }
    }

    #[test]
    fn custom_schedule_bounds_are_enforced() {
        assert!(make_schedule(0.1, 2, ScheduleKind::Custom(vec![0.05, 1.5])).is_err());
        assert!(make_schedule(0.1, 2, ScheduleKind::Custom(vec![0.05])).is_err());
        let s = make_schedule(0.1, 2, ScheduleKind::Custom(vec![0.04, 0.06])).unwrap();
        assert!(s.theorem_valid);
    }

    fn small_problem() -> (DesignMatrix, DVector<f64>, KnockoffModel) {
        let x = gen_ar1_design(80, 12, 0.4, 31).unwrap();
        let beta = gen_sparse_beta(12, 3, &x, 5.0, 1.0, 32).unwrap();
        let y = gen_outcome(&x, &beta, ModelKind::Linear, 1.0, 33).unwrap();
        let model = KnockoffModel::from_design(&x, 0.0, 0.99).unwrap();
        (x, y, model)
    }

    #[test]
    fn k_one_equals_plain_filter_bit_exact() {
        let (x, y, model) = small_problem();
        let cfg = PathConfig::linear();
        let schedule = make_schedule(0.3, 1, ScheduleKind::Geometric).unwrap();
        let ako = ako_select(&x, &y, ModelKind::Linear, &schedule, Variant::Ko, &model, &cfg, 2025)
            .unwrap();

        let seed1 = run_seed(2025, 1);
        let w = run_knockoff_w(&x, &y, &model, &cfg, seed1).unwrap();
        let plain = select(&w, 0.3, Variant::Ko, seed1, None);
        assert_eq!(ako.selected, plain.selected);
        assert_eq!(ako.per_run.len(), 1);
        assert_eq!(ako.per_run[0].threshold.to_bits(), plain.threshold.to_bits());
        assert_eq!(ako.per_run[0].seed, seed1);
    }

    #[test]
    fn zero_levels_with_ko_plus_select_nothing() {
        let (x, y, model) = small_problem();
        let cfg = PathConfig::linear();
        let schedule = make_schedule(0.0, 3, ScheduleKind::Uniform).unwrap();
        let ako = ako_select(
            &x,
            &y,
            ModelKind::Linear,
            &schedule,
            Variant::KoPlus,
            &model,
            &cfg,
            11,
        )
        .unwrap();
        assert!(ako.selected.is_empty());
        for run in &ako.per_run {
            assert!(run.selected.is_empty());
            assert_eq!(run.threshold, f64::INFINITY);
        }
    }

    #[test]
    fn union_identity_and_first_run_superset() {
        let (x, y, model) = small_problem();
        let cfg = PathConfig::linear();
        let schedule = make_schedule(0.4, 4, ScheduleKind::Geometric).unwrap();
        let ako = ako_select(&x, &y, ModelKind::Linear, &schedule, Variant::Ko, &model, &cfg, 99)
            .unwrap();
        let mut union = BTreeSet::new();
        for run in &ako.per_run {
            union.extend(run.selected.iter().copied());
        }
        assert_eq!(ako.selected, union);
        // levels_1 = q is the largest level, so its run is contained in the union
        assert!(ako.per_run[0].selected.is_subset(&ako.selected));
    }

    #[test]
    fn reuse_knockoffs_shares_the_draw() {
        let (x, y, model) = small_problem();
        let cfg = PathConfig::linear();
        let schedule = make_schedule(0.4, 3, ScheduleKind::Uniform).unwrap();
        let opts = AkoOptions {
            reuse_knockoffs: true,
        };
        let ako = ako_select_with(
            &x,
            &y,
            ModelKind::Linear,
            &schedule,
            Variant::Ko,
            &model,
            &cfg,
            5,
            &opts,
        )
        .unwrap();
        let seed1 = run_seed(5, 1);
        for run in &ako.per_run {
            assert_eq!(run.seed, seed1);
        }
        // all runs share one W vector, so identical levels give identical sets
        assert_eq!(ako.per_run[0].selected, ako.per_run[1].selected);
        assert_eq!(ako.per_run[1].selected, ako.per_run[2].selected);
    }

    #[test]
    fn fdp_and_power_counting() {
        let sel: BTreeSet<usize> = [1, 2, 3].into();
        let truth: BTreeSet<usize> = [2, 3, 4].into();
        assert_relative_eq!(empirical_fdp(&sel, &truth), 1.0 / 3.0);
        assert_eq!(empirical_fdp(&BTreeSet::new(), &truth), 0.0);
        assert_eq!(empirical_fdp(&truth, &truth), 0.0);

        let sel2: BTreeSet<usize> = [2, 3].into();
        assert_relative_eq!(
            empirical_power(&sel2, &truth, PowerConvention::PaperTdp).unwrap(),
            1.0
        );
        assert_relative_eq!(
            empirical_power(&sel2, &truth, PowerConvention::Conventional).unwrap(),
            2.0 / 3.0
        );
        assert_eq!(
            empirical_power(&BTreeSet::new(), &truth, PowerConvention::PaperTdp).unwrap(),
            0.0
        );
        assert_eq!(
            empirical_power(&BTreeSet::new(), &truth, PowerConvention::Conventional).unwrap(),
            0.0
        );
        assert!(matches!(
            empirical_power(&sel2, &BTreeSet::new(), PowerConvention::Conventional),
            Err(Error::UndefinedPower)
        ));
    }
}

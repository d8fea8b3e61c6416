//! The knockoff filter: W statistics, data-dependent thresholds, selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Filter variant. `KoPlus` adds one to the threshold numerator and gives
/// exact finite-sample FDR control; `Ko` is the approximate variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ko")]
    Ko,
    #[serde(rename = "ko+")]
    KoPlus,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Ko => write!(f, "ko"),
            Variant::KoPlus => write!(f, "ko+"),
        }
    }
}

/// Signed knockoff statistics together with the entry values they came from.
///
/// `w_j = max(z_j, z̃_j) · sign(z_j − z̃_j)` with `sign(0) = 0`, so a tie
/// (original and knockoff entering at the same penalty) gives `w_j = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WStatistics {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
}

/// Build W statistics from entry values. Inputs must be elementwise
/// nonnegative and of equal length.
pub fn w_statistics(z: &[f64], z_tilde: &[f64]) -> Result<WStatistics> {
    if z.len() != z_tilde.len() {
        return Err(Error::InvalidInput(format!(
            "entry statistics of lengths {} and {} do not match",
            z.len(),
            z_tilde.len()
        )));
    }
    if z.iter().chain(z_tilde.iter()).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "entry statistics must be finite and nonnegative".into(),
        ));
    }
    let w = z
        .iter()
        .zip(z_tilde.iter())
        .map(|(&zj, &ztj)| {
            if zj > ztj {
                zj
            } else if ztj > zj {
                -ztj
            } else {
                0.0
            }
        })
        .collect();
    Ok(WStatistics {
        w,
        z: z.to_vec(),
        z_tilde: z_tilde.to_vec(),
    })
}

/// A selection emitted by the filter, with the provenance needed to replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    /// 0-based indices of the selected features.
    pub selected: BTreeSet<usize>,
    /// Threshold actually used; `+inf` means nothing qualified.
    pub threshold: f64,
    /// Target FDR level of this run.
    pub q: f64,
    pub variant: Variant,
    /// Seed of the knockoff draw behind this selection.
    pub seed: u64,
    /// Position in an aggregation schedule, when part of one (0-based).
    pub schedule_index: Option<usize>,
}

/// Data-dependent selection threshold.
///
/// Candidates are the distinct nonzero magnitudes |w_j|; zeros are excluded so
/// a tie never selects itself. For each candidate t (ascending), the ratio
/// `#{w_j ≤ −t} / max(1, #{w_j ≥ t})` (with numerator `1 + #{…}` for
/// knockoff+) is compared against q; the smallest qualifying t is returned,
/// `+inf` if none qualifies.
pub fn threshold(w: &[f64], q: f64, variant: Variant) -> f64 {
    let mut candidates: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &t in &candidates {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        let numerator = match variant {
            Variant::Ko => neg,
            Variant::KoPlus => 1 + neg,
        } as f64;
        if numerator / pos.max(1) as f64 <= q {
            return t;
        }
    }
    f64::INFINITY
}

/// Apply the filter at level `q`: selected = {j : w_j ≥ T_q}.
///
/// `seed` and `schedule_index` are provenance supplied by the caller.
pub fn select(
    w: &WStatistics,
    q: f64,
    variant: Variant,
    seed: u64,
    schedule_index: Option<usize>,
) -> SelectionResult {
    let t = threshold(&w.w, q, variant);
    let selected = w
        .w
        .iter()
        .enumerate()
        .filter(|(_, &wj)| wj >= t)
        .map(|(j, _)| j)
        .collect();
    SelectionResult {
        selected,
        threshold: t,
        q,
        variant,
        seed,
        schedule_index,
    }
}

//! Deterministic emitters for analysis outputs. Every function here is a pure
//! function of its inputs; maps are ordered so repeated emission is
//! byte-identical.

mod mosaic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{DeltaReport, LayerSummary, OverlapReport, RoleAssignmentMatrix};
use crate::score::{HeadCoord, RoleSamples};
use crate::sieve::RoleId;
use crate::stats::{self, HypothesisResult};

pub use mosaic::{emit_mosaic_svg, MosaicStyle};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("role set mismatch: {0}")]
    RoleSetMismatch(String),
    #[error("at least two histogram bins are required")]
    TooFewBins,
}

/// One row of `assignments.json` / `assignments.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub layer: usize,
    pub head: usize,
    pub role: RoleId,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Absent (`null`) for zero-variance samples.
    pub z: Option<f64>,
    pub p: f64,
    pub assigned: bool,
}

pub fn assignment_records(m: &RoleAssignmentMatrix) -> Vec<AssignmentRecord> {
    m.coords()
        .flat_map(|c| {
            m.results(c).iter().map(move |(role, r)| AssignmentRecord {
                layer: c.layer,
                head: c.head,
                role: role.clone(),
                n: r.n,
                mean: r.mean,
                std: r.std,
                z: r.z,
                p: r.p_value,
                assigned: r.rejected(),
            })
        })
        .collect()
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn assignments_json(m: &RoleAssignmentMatrix) -> String {
    to_json(&assignment_records(m))
}

pub fn assignments_csv(m: &RoleAssignmentMatrix) -> String {
    csv_string(
        &[
            "layer", "head", "role", "n", "mean", "std", "z", "p", "assigned",
        ],
        assignment_records(m).into_iter().map(|r| {
            vec![
                r.layer.to_string(),
                r.head.to_string(),
                r.role.to_string(),
                r.n.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                opt(r.z),
                r.p.to_string(),
                r.assigned.to_string(),
            ]
        }),
    )
}

/// Raw sample matrix: one line per (layer, head, role, sequence).
pub fn scores_csv(samples: &RoleSamples) -> String {
    let rows = samples.roles.iter().flat_map(|(role, per_head)| {
        per_head.iter().flat_map(move |(c, s)| {
            s.sequence_ids
                .iter()
                .zip(&s.scores)
                .map(move |(id, score)| {
                    vec![
                        c.layer.to_string(),
                        c.head.to_string(),
                        role.to_string(),
                        id.clone(),
                        score.to_string(),
                    ]
                })
        })
    });
    csv_string(&["layer", "head", "role", "sequence_id", "score"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VennRegion {
    /// Roles whose circles contain the region (and no others of the set).
    pub roles: Vec<RoleId>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VennCounts {
    pub roles: Vec<RoleId>,
    /// All 2^k - 1 non-empty regions, ordered by subset bitmask.
    pub regions: Vec<VennRegion>,
    /// Heads carrying none of the roles.
    pub unskilled: usize,
    pub total: usize,
}

pub fn emit_venn_counts(
    m: &RoleAssignmentMatrix,
    roles: &[RoleId],
) -> Result<VennCounts, ReportError> {
    if roles.is_empty() || roles.len() > 4 {
        return Err(ReportError::RoleSetMismatch(format!(
            "Venn counts need 1 to 4 roles, got {}",
            roles.len()
        )));
    }
    for (i, r) in roles.iter().enumerate() {
        if roles[..i].contains(r) {
            return Err(ReportError::RoleSetMismatch(format!("duplicate role {r}")));
        }
    }
    let k = roles.len();
    let mut counts = vec![0usize; 1 << k];
    for c in m.coords() {
        let mask = roles
            .iter()
            .enumerate()
            .filter(|(_, r)| m.has_role(c, r))
            .fold(0usize, |acc, (i, _)| acc | (1 << i));
        counts[mask] += 1;
    }
    let regions = (1..1usize << k)
        .map(|mask| VennRegion {
            roles: (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| roles[i].clone())
                .collect(),
            count: counts[mask],
        })
        .collect();
    Ok(VennCounts {
        roles: roles.to_vec(),
        regions,
        unskilled: counts[0],
        total: m.layers * m.heads,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    /// Fraction of scores `<= x`.
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub score_count: usize,
    pub score_mean: Option<f64>,
    pub suggested_tau: Option<i64>,
    pub score_cdf: Vec<CdfPoint>,
    pub p_value_count: usize,
    /// Equal-width bins over [0, 1]; the last bin includes 1.
    pub p_value_bins: Vec<PValueBin>,
    /// Fraction of p-values strictly inside (0.05, 0.95).
    pub p_between_fraction: f64,
}

/// Fraction of `p_values` strictly inside (0.05, 0.95).
pub fn between_fraction(p_values: &[f64]) -> f64 {
    if p_values.is_empty() {
        return 0.0;
    }
    let inside = p_values.iter().filter(|&&p| p > 0.05 && p < 0.95).count();
    inside as f64 / p_values.len() as f64
}

pub fn emit_histograms(
    scores: &[f64],
    results: &[HypothesisResult],
    bins: usize,
) -> Result<Histograms, ReportError> {
    if bins < 2 {
        return Err(ReportError::TooFewBins);
    }
    let mut sorted: Vec<f64> = scores.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let score_cdf = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) => {
            let (lo, hi) = if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            };
            (0..=bins)
                .map(|i| {
                    let x = if i == bins {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / bins as f64
                    };
                    let below = sorted.partition_point(|&s| s <= x);
                    CdfPoint {
                        x,
                        cdf: below as f64 / sorted.len() as f64,
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let p_values: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let mut p_value_bins: Vec<PValueBin> = (0..bins)
        .map(|i| PValueBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            count: 0,
        })
        .collect();
    for &p in &p_values {
        let idx = ((p * bins as f64).floor() as usize).min(bins - 1);
        p_value_bins[idx].count += 1;
    }
    Ok(Histograms {
        score_count: sorted.len(),
        score_mean: (!sorted.is_empty()).then(|| stats::mean(&sorted)),
        suggested_tau: stats::suggest_tau(&sorted).ok(),
        score_cdf,
        p_value_count: p_values.len(),
        p_value_bins,
        p_between_fraction: between_fraction(&p_values),
    })
}

pub fn all_results(m: &RoleAssignmentMatrix) -> Vec<HypothesisResult> {
    m.coords()
        .flat_map(|c| m.results(c).values().copied())
        .collect()
}

pub fn delta_csv(report: &DeltaReport) -> String {
    csv_string(
        &[
            "band",
            "first_layer",
            "last_layer",
            "role",
            "before",
            "after",
            "difference",
        ],
        report.entries.iter().map(|e| {
            vec![
                e.band.to_string(),
                e.first_layer.to_string(),
                e.last_layer.to_string(),
                e.role.to_string(),
                e.before.to_string(),
                e.after.to_string(),
                e.difference.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub role_a: RoleId,
    pub role_b: RoleId,
    /// Spearman rho over (head, sequence) pairs of all heads.
    pub pooled: Option<f64>,
    /// Mean of the defined per-head correlations.
    pub mean_per_head: Option<f64>,
    pub per_head: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapFile {
    pub overlaps: Vec<OverlapReport>,
    pub correlations: Vec<Correlation>,
}

pub fn overlap_csv(reports: &[OverlapReport]) -> String {
    csv_string(
        &[
            "role_a",
            "role_b",
            "count_a",
            "count_b",
            "intersection",
            "union",
            "jaccard",
            "pct_a_in_b",
            "pct_b_in_a",
        ],
        reports.iter().map(|r| {
            vec![
                r.role_a.to_string(),
                r.role_b.to_string(),
                r.count_a.to_string(),
                r.count_b.to_string(),
                r.intersection.to_string(),
                r.union.to_string(),
                r.jaccard.to_string(),
                r.pct_a_in_b.to_string(),
                r.pct_b_in_a.to_string(),
            ]
        }),
    )
}

pub fn layers_csv(summaries: &[LayerSummary]) -> String {
    csv_string(
        &["layer", "role", "heads"],
        summaries.iter().flat_map(|s| {
            let roles = s
                .role_counts
                .iter()
                .map(move |(r, n)| vec![s.layer.to_string(), r.to_string(), n.to_string()]);
            let extra = [
                vec![
                    s.layer.to_string(),
                    "multi-skilled".into(),
                    s.multi_skilled.to_string(),
                ],
                vec![
                    s.layer.to_string(),
                    "unskilled".into(),
                    s.unskilled.to_string(),
                ],
            ];
            roles.chain(extra)
        }),
    )
}

/// Key used for per-head maps in JSON (`"L3H7"`).
pub fn head_key(c: HeadCoord) -> String {
    c.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{Decision, HypothesisResult};

    fn result(p: f64) -> HypothesisResult {
        HypothesisResult {
            n: 2,
            mean: 1.0,
            std: 0.0,
            tau: 3.0,
            z: None,
            p_value: p,
            alpha: 0.05,
            decision: if p < 0.05 {
                Decision::RejectNull
            } else {
                Decision::Inconclusive
            },
        }
    }

    #[test]
    fn p_values_on_the_edges() {
        let rs: Vec<_> = [0.0, 1.0, 1.0, 0.0].into_iter().map(result).collect();
        let h = emit_histograms(&[1.0], &rs, 10).unwrap();
        assert_eq!(h.p_between_fraction, 0.0);
        assert_eq!(h.p_value_bins[0].count, 2);
        assert_eq!(h.p_value_bins[9].count, 2);
        assert!(emit_histograms(&[1.0], &rs, 1).is_err());
    }

    #[test]
    fn uniform_scores_step_at_one() {
        let h = emit_histograms(&[1.0; 50], &[], 4).unwrap();
        assert!(h.score_cdf.iter().all(|p| if p.x < 1.0 {
            p.cdf == 0.0
        } else {
            p.cdf == 1.0
        }));
        assert!(h.score_cdf.iter().any(|p| p.x < 1.0));
        assert_eq!(h.suggested_tau, Some(2));
    }

    #[test]
    fn between_fraction_counts_open_interval() {
        assert_eq!(between_fraction(&[0.05, 0.95, 0.5, 0.01]), 0.25);
    }
}

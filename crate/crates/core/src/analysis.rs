//! Role assignment by hypothesis testing, and the analyses built on it:
//! role overlap, score correlation, per-layer distribution and fine-tuning
//! deltas.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{HeadCoord, RoleSamples, SieveBiasSamples};
use crate::sieve::RoleId;
use crate::stats::{self, HypothesisResult, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("checkpoints differ: {0}")]
    ShapeMismatch(String),
    #[error("{bands} bands do not evenly divide {layers} layers")]
    BandMismatch { layers: usize, bands: usize },
    #[error("need at least two common sequences, found {0}")]
    TooFewCommon(usize),
    #[error("role {0} was not tested")]
    UnknownRole(RoleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    None,
    /// Divide alpha by the total number of (head, role) tests.
    Bonferroni,
}

/// Test outcome of every (head, role) pair over an L×H grid.
///
/// A role belongs to a head iff its test rejected the null hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleAssignmentMatrix {
    pub layers: usize,
    pub heads: usize,
    pub tau: f64,
    pub alpha: f64,
    pub correction: Correction,
    /// Roles that were tested, in `RoleId` order.
    pub roles: Vec<RoleId>,
    cells: Vec<BTreeMap<RoleId, HypothesisResult>>,
}

impl RoleAssignmentMatrix {
    /// Builds a matrix from precomputed results; `cells` is row-major L×H.
    pub fn from_cells(
        layers: usize,
        heads: usize,
        tau: f64,
        alpha: f64,
        roles: Vec<RoleId>,
        cells: Vec<BTreeMap<RoleId, HypothesisResult>>,
    ) -> Self {
        assert_eq!(cells.len(), layers * heads, "cell count");
        RoleAssignmentMatrix {
            layers,
            heads,
            tau,
            alpha,
            correction: Correction::None,
            roles,
            cells,
        }
    }

    fn index(&self, c: HeadCoord) -> usize {
        c.layer * self.heads + c.head
    }

    pub fn coords(&self) -> impl Iterator<Item = HeadCoord> + '_ {
        (0..self.layers).flat_map(move |l| (0..self.heads).map(move |h| HeadCoord::new(l, h)))
    }

    pub fn results(&self, c: HeadCoord) -> &BTreeMap<RoleId, HypothesisResult> {
        &self.cells[self.index(c)]
    }

    pub fn has_role(&self, c: HeadCoord, role: &RoleId) -> bool {
        self.results(c)
            .get(role)
            .is_some_and(HypothesisResult::rejected)
    }

    /// Accepted roles of one head, in role order.
    pub fn assigned(&self, c: HeadCoord) -> Vec<&RoleId> {
        self.results(c)
            .iter()
            .filter(|(_, r)| r.rejected())
            .map(|(role, _)| role)
            .collect()
    }

    pub fn heads_with(&self, role: &RoleId) -> BTreeSet<HeadCoord> {
        self.coords().filter(|&c| self.has_role(c, role)).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|cell| cell.values().map(|r| r.p_value))
            .collect()
    }
}

/// Tests every head independently for every role in `samples`.
pub fn classify_heads(
    samples: &RoleSamples,
    tau: f64,
    alpha: f64,
    correction: Correction,
) -> Result<RoleAssignmentMatrix, AnalysisError> {
    let tests: usize = samples.roles.values().map(BTreeMap::len).sum();
    let effective_alpha = match correction {
        Correction::None => alpha,
        Correction::Bonferroni => alpha / tests.max(1) as f64,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha).into());
    }
    let mut cells = vec![BTreeMap::new(); samples.layers * samples.heads];
    for (role, per_head) in &samples.roles {
        for (coord, s) in per_head {
            let r = stats::ztest_mean_gt(&s.scores, tau, effective_alpha)?;
            cells[coord.layer * samples.heads + coord.head].insert(role.clone(), r);
        }
    }
    Ok(RoleAssignmentMatrix {
        layers: samples.layers,
        heads: samples.heads,
        tau,
        alpha,
        correction,
        roles: samples.roles.keys().cloned().collect(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub role_a: RoleId,
    pub role_b: RoleId,
    pub count_a: usize,
    pub count_b: usize,
    pub intersection: usize,
    pub union: usize,
    /// |A∩B| / |A∪B|, 0 when both are empty.
    pub jaccard: f64,
    /// |A∩B| / |A|, 0 when A is empty.
    pub pct_a_in_b: f64,
    /// |A∩B| / |B|, 0 when B is empty.
    pub pct_b_in_a: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn overlap_report(m: &RoleAssignmentMatrix, a: &RoleId, b: &RoleId) -> OverlapReport {
    let set_a = m.heads_with(a);
    let set_b = m.heads_with(b);
    let intersection = set_a.intersection(&set_b).count();
    let union = set_a.union(&set_b).count();
    OverlapReport {
        role_a: a.clone(),
        role_b: b.clone(),
        count_a: set_a.len(),
        count_b: set_b.len(),
        intersection,
        union,
        jaccard: ratio(intersection, union),
        pct_a_in_b: ratio(intersection, set_a.len()),
        pct_b_in_a: ratio(intersection, set_b.len()),
    }
}

fn aligned_pairs(a: &SieveBiasSamples, b: &SieveBiasSamples) -> (Vec<f64>, Vec<f64>) {
    let by_id: BTreeMap<&str, f64> = b
        .sequence_ids
        .iter()
        .map(String::as_str)
        .zip(b.scores.iter().copied())
        .collect();
    a.sequence_ids
        .iter()
        .zip(&a.scores)
        .filter_map(|(id, &x)| by_id.get(id.as_str()).map(|&y| (x, y)))
        .unzip()
}

/// Spearman correlation of two sample vectors over their common sequences.
pub fn score_correlation(a: &SieveBiasSamples, b: &SieveBiasSamples) -> Result<f64, AnalysisError> {
    let (x, y) = aligned_pairs(a, b);
    if x.len() < 2 {
        return Err(AnalysisError::TooFewCommon(x.len()));
    }
    Ok(stats::spearman(&x, &y)?)
}

/// Task-level correlation: (head, sequence) pairs of all heads pooled.
pub fn pooled_score_correlation(
    a: &BTreeMap<HeadCoord, SieveBiasSamples>,
    b: &BTreeMap<HeadCoord, SieveBiasSamples>,
) -> Result<f64, AnalysisError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (coord, sa) in a {
        if let Some(sb) = b.get(coord) {
            let (px, py) = aligned_pairs(sa, sb);
            x.extend(px);
            y.extend(py);
        }
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFewCommon(x.len()));
    }
    Ok(stats::spearman(&x, &y)?)
}

/// Per-head correlations; `None` where a head's scores are degenerate.
pub fn per_head_correlations(
    a: &BTreeMap<HeadCoord, SieveBiasSamples>,
    b: &BTreeMap<HeadCoord, SieveBiasSamples>,
) -> BTreeMap<HeadCoord, Option<f64>> {
    a.iter()
        .filter_map(|(coord, sa)| {
            b.get(coord)
                .map(|sb| (*coord, score_correlation(sa, sb).ok()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    /// Heads carrying each role (all tested roles).
    pub role_counts: BTreeMap<RoleId, usize>,
    /// Number of heads by degree, where degree counts the `degree_roles` a head carries.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Heads with degree of at least two.
    pub multi_skilled: usize,
    /// Heads with none of the four coarse roles.
    pub unskilled: usize,
    /// (head, degree), degree descending, head index ascending on ties.
    pub sorted_heads: Vec<(usize, usize)>,
}

/// Degree of a head over `roles`.
pub fn degree(m: &RoleAssignmentMatrix, c: HeadCoord, roles: &[RoleId]) -> usize {
    roles.iter().filter(|r| m.has_role(c, r)).count()
}

/// Heads of one layer ordered by degree (descending), head index breaking ties.
pub fn sorted_layer(
    m: &RoleAssignmentMatrix,
    layer: usize,
    roles: &[RoleId],
) -> Vec<(usize, usize)> {
    let mut heads: Vec<(usize, usize)> = (0..m.heads)
        .map(|h| (h, degree(m, HeadCoord::new(layer, h), roles)))
        .collect();
    heads.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    heads
}

pub fn layer_distribution(m: &RoleAssignmentMatrix, degree_roles: &[RoleId]) -> Vec<LayerSummary> {
    let coarse = RoleId::coarse_roles();
    (0..m.layers)
        .map(|layer| {
            let mut role_counts: BTreeMap<RoleId, usize> =
                m.roles.iter().map(|r| (r.clone(), 0)).collect();
            let mut unskilled = 0;
            for h in 0..m.heads {
                let c = HeadCoord::new(layer, h);
                for r in m.assigned(c) {
                    *role_counts.entry(r.clone()).or_default() += 1;
                }
                if degree(m, c, &coarse) == 0 {
                    unskilled += 1;
                }
            }
            let sorted_heads = sorted_layer(m, layer, degree_roles);
            let mut degree_histogram = BTreeMap::new();
            for &(_, d) in &sorted_heads {
                *degree_histogram.entry(d).or_default() += 1;
            }
            LayerSummary {
                layer,
                role_counts,
                multi_skilled: sorted_heads.iter().filter(|(_, d)| *d >= 2).count(),
                degree_histogram,
                unskilled,
                sorted_heads,
            }
        })
        .collect()
}

/// Splits `layers` into `bands` contiguous equal ranges.
pub fn layer_bands(layers: usize, bands: usize) -> Result<Vec<Range<usize>>, AnalysisError> {
    if bands == 0 || !layers.is_multiple_of(bands) {
        return Err(AnalysisError::BandMismatch { layers, bands });
    }
    let size = layers / bands;
    Ok((0..bands).map(|b| b * size..(b + 1) * size).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub band: usize,
    pub first_layer: usize,
    pub last_layer: usize,
    pub role: RoleId,
    pub before: f64,
    pub after: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub entries: Vec<DeltaEntry>,
}

impl DeltaReport {
    pub fn get(&self, band: usize, role: &RoleId) -> Option<&DeltaEntry> {
        self.entries
            .iter()
            .find(|e| e.band == band && &e.role == role)
    }
}

fn band_mean(per_head: &BTreeMap<HeadCoord, SieveBiasSamples>, band: &Range<usize>) -> f64 {
    let (sum, count) = per_head
        .iter()
        .filter(|(c, _)| band.contains(&c.layer))
        .flat_map(|(_, s)| s.scores.iter())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Change of the mean score per (layer band, role) from `before` to `after`.
pub fn finetune_delta(
    before: &RoleSamples,
    after: &RoleSamples,
    n_bands: usize,
) -> Result<DeltaReport, AnalysisError> {
    if (before.layers, before.heads) != (after.layers, after.heads) {
        return Err(AnalysisError::ShapeMismatch(format!(
            "{}x{} vs {}x{} heads",
            before.layers, before.heads, after.layers, after.heads
        )));
    }
    let roles_before: Vec<&RoleId> = before.roles.keys().collect();
    let roles_after: Vec<&RoleId> = after.roles.keys().collect();
    if roles_before != roles_after {
        return Err(AnalysisError::ShapeMismatch(
            "tested role sets differ".into(),
        ));
    }
    let bands = layer_bands(before.layers, n_bands)?;
    let mut entries = Vec::new();
    for (b, band) in bands.iter().enumerate() {
        for (role, per_head) in &before.roles {
            let pre = band_mean(per_head, band);
            let post = band_mean(&after.roles[role], band);
            entries.push(DeltaEntry {
                band: b,
                first_layer: band.start,
                last_layer: band.end - 1,
                role: role.clone(),
                before: pre,
                after: post,
                difference: post - pre,
            });
        }
    }
    Ok(DeltaReport { entries })
}

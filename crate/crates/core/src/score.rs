//! Sieve bias scores.
//!
//! For a source token with attention row `a` over a sequence of length T and
//! a sieve S, the token score is
//!
//! ```text
//! (sum_{s in S} a[s] / |S|) / (sum_t a[t] / T)
//! ```
//!
//! i.e. mean attention inside the sieve over mean attention overall. A
//! uniform row scores exactly 1. Sequence scores average the token scores of
//! all eligible source tokens.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{Bundle, Sequence};
use crate::sieve::{build_sieve, RoleId, RoleSpec, Sieve};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("sieve is empty for this token")]
    EmptySieve,
    #[error("attention row sums to a non-positive value")]
    ZeroRowSum,
    #[error("role {0} has no eligible token in any sequence")]
    NoEligibleSequence(RoleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadCoord {
    pub layer: usize,
    pub head: usize,
}

impl HeadCoord {
    pub fn new(layer: usize, head: usize) -> Self {
        HeadCoord { layer, head }
    }
}

impl std::fmt::Display for HeadCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

/// Per-sequence scores of one head for one role, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveBiasSamples {
    pub head: HeadCoord,
    pub role: RoleId,
    pub scores: Vec<f64>,
    pub sequence_ids: Vec<String>,
}

pub fn token_bias<W: Copy + Into<f64>>(
    row: &[W],
    targets: &[usize],
    row_sum: f64,
) -> Result<f64, ScoreError> {
    if targets.is_empty() {
        return Err(ScoreError::EmptySieve);
    }
    if row_sum.is_nan() || row_sum <= 0.0 {
        return Err(ScoreError::ZeroRowSum);
    }
    let inside: f64 = targets.iter().map(|&s| row[s].into()).sum();
    Ok((inside / targets.len() as f64) / (row_sum / row.len() as f64))
}

/// Mean token score over the eligible sources of one head's T×T matrix.
///
/// `att` must hold `sieve.len()²` validated weights; returns `None` when no
/// source token is eligible.
pub fn sequence_bias<W: Copy + Into<f64>>(att: &[W], sieve: &Sieve) -> Option<f64> {
    let t = sieve.len();
    debug_assert_eq!(att.len(), t * t);
    let mut total = 0.0;
    let mut count = 0usize;
    for (source, targets) in sieve.iter() {
        if targets.is_empty() {
            continue;
        }
        let row = &att[source * t..(source + 1) * t];
        let row_sum: f64 = row.iter().map(|&v| v.into()).sum();
        if let Ok(b) = token_bias(row, targets, row_sum) {
            total += b;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Whether `seq` can carry `role` at all. Block attention is only defined
/// between sentences, so single-segment sequences never count for it.
pub fn role_applies(seq: &Sequence, role: &RoleId) -> bool {
    match role {
        RoleId::Block => {
            let t = &seq.tokens;
            let mut content = (0..t.len())
                .filter(|&p| !t.is_special(p))
                .map(|p| t.segment_ids[p]);
            let first = content.next();
            content.any(|s| Some(s) != first)
        }
        _ => true,
    }
}

/// Samples of every head of `bundle` for one role.
pub fn head_samples(
    bundle: &Bundle,
    spec: &RoleSpec,
) -> Result<BTreeMap<HeadCoord, SieveBiasSamples>, ScoreError> {
    let (layers, heads) = (bundle.layers, bundle.heads);
    // one entry per sequence: None if ineligible, else L*H scores
    let per_sequence: Vec<Option<Vec<f64>>> = bundle
        .sequences
        .par_iter()
        .map(|seq| {
            if !role_applies(seq, &spec.role) {
                return None;
            }
            let sieve = build_sieve(seq, spec);
            if !sieve.any_eligible() {
                return None;
            }
            let mut scores = Vec::with_capacity(layers * heads);
            for l in 0..layers {
                for h in 0..heads {
                    let s = sequence_bias(seq.attention.head(l, h), &sieve)
                        .expect("eligible sieve yields a score");
                    scores.push(s);
                }
            }
            Some(scores)
        })
        .collect();

    let eligible: Vec<(usize, &Vec<f64>)> = per_sequence
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
        .collect();
    if eligible.is_empty() {
        return Err(ScoreError::NoEligibleSequence(spec.role.clone()));
    }
    let ids: Vec<String> = eligible
        .iter()
        .map(|(i, _)| bundle.sequences[*i].id.clone())
        .collect();
    let mut out = BTreeMap::new();
    for l in 0..layers {
        for h in 0..heads {
            let k = l * heads + h;
            let coord = HeadCoord::new(l, h);
            out.insert(
                coord,
                SieveBiasSamples {
                    head: coord,
                    role: spec.role.clone(),
                    scores: eligible.iter().map(|(_, s)| s[k]).collect(),
                    sequence_ids: ids.clone(),
                },
            );
        }
    }
    Ok(out)
}

/// Samples for a whole role set over one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSamples {
    pub layers: usize,
    pub heads: usize,
    pub roles: BTreeMap<RoleId, BTreeMap<HeadCoord, SieveBiasSamples>>,
    /// Requested roles with no eligible sequence, in request order.
    pub ineligible: Vec<RoleId>,
}

impl RoleSamples {
    pub fn empty(layers: usize, heads: usize) -> Self {
        RoleSamples {
            layers,
            heads,
            roles: BTreeMap::new(),
            ineligible: Vec::new(),
        }
    }

    /// All scores of every role, head and sequence.
    pub fn pooled_scores(&self) -> Vec<f64> {
        self.roles
            .values()
            .flat_map(|m| m.values())
            .flat_map(|s| s.scores.iter().copied())
            .collect()
    }
}

/// Scores every role in `specs`; roles with no eligible sequence are listed
/// in [`RoleSamples::ineligible`] rather than failing the whole run.
pub fn role_samples(bundle: &Bundle, specs: &[RoleSpec]) -> RoleSamples {
    let results: Vec<_> = specs
        .par_iter()
        .map(|spec| (spec.role.clone(), head_samples(bundle, spec)))
        .collect();
    let mut out = RoleSamples::empty(bundle.layers, bundle.heads);
    for (role, res) in results {
        match res {
            Ok(samples) => {
                out.roles.insert(role, samples);
            }
            Err(_) => out.ineligible.push(role),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::TokenSequence;
    use crate::sieve::{local_sieve, LocalVariant};

    const ROW: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

    #[test]
    fn hand_evaluated_token_bias() {
        assert!((token_bias(&ROW, &[0, 1, 2], 1.0).unwrap() - 1.2).abs() < 1e-12);
        assert!((token_bias(&ROW, &[3], 1.0).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(token_bias(&[0.25f64; 4], &[1, 3], 1.0).unwrap(), 1.0);
        assert_eq!(token_bias(&ROW, &[], 1.0), Err(ScoreError::EmptySieve));
        assert_eq!(token_bias(&ROW, &[0], 0.0), Err(ScoreError::ZeroRowSum));
    }

    #[test]
    fn identity_attention_sequence_bias() {
        let seq = TokenSequence::from_tokens(&["a", "b", "c"]).unwrap();
        let sieve = local_sieve(&seq, 1, LocalVariant::Symmetric);
        let eye = [1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let b = sequence_bias(&eye, &sieve).unwrap();
        assert!((b - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ineligible_sequence_is_absent() {
        let sieve = Sieve::from_targets(RoleId::label("nsubj"), vec![vec![], vec![]]);
        assert_eq!(sequence_bias(&[0.5f64; 4], &sieve), None);
    }
}

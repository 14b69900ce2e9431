//! Synthetic bundles with planted functional roles.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with the run seed;
//! sequence `i` draws from stream `i` of that generator, so sequences can be
//! produced in parallel and outputs are identical on every platform.
//!
//! Every sequence is `[CLS] segment-0 [SEP] segment-1 [SEP]` (or a single
//! segment), each segment a run of five-word clauses following one fixed
//! template:
//!
//! ```text
//! chase  big   quickly  cats  dogs
//! root   amod  advmod   dobj  nsubj
//!        ->dogs ->chase ->chase ->chase
//! ```
//!
//! Word order keeps most arcs at least three tokens long so that local and
//! syntactic plants stay distinguishable. Words are randomly split into one
//! or two wordpieces to hit the requested length.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{
    AttentionTensor, Bundle, BundleError, DependencyParse, Sequence, SpecialFlag, TokenSequence,
};
use crate::score::HeadCoord;
use crate::sieve::{build_sieve, RoleId, RoleSpec, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("plant {index}: {reason}")]
    InvalidPlant { index: usize, reason: String },
    #[error("sequence length {len} is too short for {segments} segment(s); need at least {min}")]
    TooShort {
        len: usize,
        segments: u8,
        min: usize,
    },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// How strongly a planted head attends to its sieve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantStrength {
    /// Fraction of each row's attention placed inside the sieve.
    Mass(f64),
    /// Target token score; the in-sieve mass is `bias * |S| / T`, capped at 1.
    Bias(f64),
}

impl PlantStrength {
    pub fn mass_for(self, sieve_size: usize, len: usize) -> f64 {
        match self {
            PlantStrength::Mass(m) => m,
            PlantStrength::Bias(b) => (b * sieve_size as f64 / len as f64).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub head: HeadCoord,
    pub role: RoleId,
    pub strength: PlantStrength,
    /// Multiplicative jitter: each weight is scaled by `1 + noise * u`,
    /// `u ~ U(-1, 1)`, then the row is renormalized. Must lie in `[0, 1]`.
    pub noise: f64,
}

impl PlantSpec {
    pub fn with_bias(head: HeadCoord, role: RoleId, bias: f64, noise: f64) -> Self {
        PlantSpec {
            head,
            role,
            strength: PlantStrength::Bias(bias),
            noise,
        }
    }

    pub fn with_mass(head: HeadCoord, role: RoleId, mass: f64, noise: f64) -> Self {
        PlantSpec {
            head,
            role,
            strength: PlantStrength::Mass(mass),
            noise,
        }
    }
}

/// Plant-file entry: `{"layer": 3, "head": 7, "role": "local", "bias": 5.0, "noise": 0.05}`
/// with exactly one of `mass` / `bias`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantRepr {
    layer: usize,
    head: usize,
    role: RoleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<f64>,
    #[serde(default)]
    noise: f64,
}

impl Serialize for PlantSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (mass, bias) = match self.strength {
            PlantStrength::Mass(m) => (Some(m), None),
            PlantStrength::Bias(b) => (None, Some(b)),
        };
        PlantRepr {
            layer: self.head.layer,
            head: self.head.head,
            role: self.role.clone(),
            mass,
            bias,
            noise: self.noise,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlantSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PlantRepr::deserialize(d)?;
        let strength = match (r.mass, r.bias) {
            (Some(m), None) => PlantStrength::Mass(m),
            (None, Some(b)) => PlantStrength::Bias(b),
            _ => {
                return Err(serde::de::Error::custom(
                    "plant needs exactly one of `mass` or `bias`",
                ))
            }
        };
        Ok(PlantSpec {
            head: HeadCoord::new(r.layer, r.head),
            role: r.role,
            strength,
            noise: r.noise,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub model_id: String,
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub n_sequences: usize,
    /// 1 or 2 segments per sequence.
    pub segments: u8,
    /// Jitter of unplanted (near-uniform) rows.
    pub background_noise: f64,
    /// Window of planted local roles.
    pub window: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            model_id: "synthetic".into(),
            layers: 12,
            heads: 12,
            seq_len: 32,
            n_sequences: 200,
            segments: 2,
            background_noise: 0.05,
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

/// Token score of a row built by [`plant_row`] without noise.
pub fn expected_bias(mass: f64, len: usize, sieve_size: usize) -> f64 {
    mass * len as f64 / sieve_size as f64
}

/// A row of length `len` with `mass` spread evenly over `targets` and the
/// rest evenly over the other positions, jittered by `noise` and renormalized.
pub fn plant_row(targets: &[usize], len: usize, mass: f64, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plant_row_with(targets, len, mass, noise, &mut rng)
}

pub fn plant_row_with<R: Rng>(
    targets: &[usize],
    len: usize,
    mass: f64,
    noise: f64,
    rng: &mut R,
) -> Vec<f64> {
    let inside = targets.len();
    let outside = len - inside;
    let mut row = if outside == 0 || inside == 0 {
        vec![1.0 / len as f64; len]
    } else {
        let mut row = vec![(1.0 - mass) / outside as f64; len];
        for &t in targets {
            row[t] = mass / inside as f64;
        }
        row
    };
    jitter(&mut row, noise, rng);
    row
}

fn jitter<R: Rng>(row: &mut [f64], noise: f64, rng: &mut R) {
    if noise > 0.0 {
        for w in row.iter_mut() {
            *w *= 1.0 + noise * rng.random_range(-1.0..1.0);
        }
    }
    let sum: f64 = row.iter().sum();
    for w in row.iter_mut() {
        *w /= sum;
    }
}

/// Smallest sequence length the template supports.
pub fn min_len(segments: u8) -> usize {
    match segments {
        1 => 2 + 5,
        _ => 3 + 10,
    }
}

const TEMPLATE_RELATIONS: [&str; 5] = ["root", "amod", "advmod", "dobj", "nsubj"];
const TEMPLATE_HEADS: [Option<usize>; 5] = [None, Some(4), Some(0), Some(0), Some(0)];
const VOCAB: [[&str; 4]; 5] = [
    ["chase", "watch", "follow", "greet"],
    ["big", "small", "quiet", "brave"],
    ["quickly", "often", "rarely", "gladly"],
    ["cats", "birds", "cars", "kids"],
    ["dogs", "foxes", "owls", "bears"],
];

struct SegmentText {
    pieces: Vec<String>,
    word_of_piece: Vec<usize>,
    parse: Vec<DependencyParse>,
}

fn split_word(word: &str) -> [String; 2] {
    let mid = word.len() / 2;
    [word[..mid].to_string(), format!("##{}", &word[mid..])]
}

/// Clauses filling exactly `budget` wordpieces; word ids start at `first_word`.
fn segment_text<R: Rng>(budget: usize, first_word: usize, rng: &mut R) -> SegmentText {
    let c_min = budget.div_ceil(10);
    let c_max = budget / 5;
    let clauses = rng.random_range(c_min..=c_max);
    let words = 5 * clauses;
    let mut split = vec![false; words];
    for i in sample(rng, words, budget - words) {
        split[i] = true;
    }
    let mut out = SegmentText {
        pieces: Vec::with_capacity(budget),
        word_of_piece: Vec::with_capacity(budget),
        parse: Vec::with_capacity(clauses),
    };
    for c in 0..clauses {
        let mut forms = Vec::with_capacity(5);
        for slot in 0..5 {
            let form = VOCAB[slot][rng.random_range(0..VOCAB[slot].len())];
            let w = c * 5 + slot;
            if split[w] {
                for p in split_word(form) {
                    out.pieces.push(p);
                    out.word_of_piece.push(first_word + w);
                }
            } else {
                out.pieces.push(form.to_string());
                out.word_of_piece.push(first_word + w);
            }
            forms.push(form.to_string());
        }
        out.parse.push(
            DependencyParse::sentence(
                forms,
                TEMPLATE_HEADS.to_vec(),
                TEMPLATE_RELATIONS.iter().map(|s| s.to_string()).collect(),
            )
            .expect("template is a valid tree"),
        );
    }
    out
}

fn layout<R: Rng>(len: usize, segments: u8, rng: &mut R) -> (TokenSequence, DependencyParse) {
    let budgets = if segments == 1 {
        vec![len - 2]
    } else {
        let content = len - 3;
        let first = rng.random_range(5..=content - 5);
        vec![first, content - first]
    };
    let mut tokens = vec!["[CLS]".to_string()];
    let mut flags = vec![SpecialFlag::Cls];
    let mut seg_ids = vec![0u8];
    let mut word_ids = vec![None];
    let mut sentences = Vec::new();
    let mut next_word = 0;
    for (s, &budget) in budgets.iter().enumerate() {
        let text = segment_text(budget, next_word, rng);
        next_word += 5 * text.parse.len();
        for (p, w) in text.pieces.into_iter().zip(text.word_of_piece) {
            tokens.push(p);
            flags.push(SpecialFlag::None);
            seg_ids.push(s as u8);
            word_ids.push(Some(w));
        }
        sentences.extend(text.parse);
        tokens.push("[SEP]".to_string());
        flags.push(SpecialFlag::Sep);
        seg_ids.push(s as u8);
        word_ids.push(None);
    }
    let seq = TokenSequence::new(tokens, flags, seg_ids, word_ids).expect("valid synthetic tokens");
    (seq, DependencyParse::concat(&sentences))
}

fn validate(config: &SynthConfig, plants: &[PlantSpec]) -> Result<(), SynthError> {
    if config.layers == 0 || config.heads == 0 {
        return Err(SynthError::Layout(
            "need at least one layer and head".into(),
        ));
    }
    if !matches!(config.segments, 1 | 2) {
        return Err(SynthError::Layout(format!("{} segments", config.segments)));
    }
    if config.window == 0 {
        return Err(SynthError::Layout("window must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.background_noise) {
        return Err(SynthError::Layout(
            "background noise must lie in [0, 1]".into(),
        ));
    }
    let min = min_len(config.segments);
    if config.seq_len < min {
        return Err(SynthError::TooShort {
            len: config.seq_len,
            segments: config.segments,
            min,
        });
    }
    let mut seen = BTreeMap::new();
    for (index, p) in plants.iter().enumerate() {
        let bad = |reason: String| SynthError::InvalidPlant { index, reason };
        if p.head.layer >= config.layers || p.head.head >= config.heads {
            return Err(bad(format!("head {} outside the layout", p.head)));
        }
        if let Some(prev) = seen.insert(p.head, index) {
            return Err(bad(format!(
                "head {} already planted by plant {prev}",
                p.head
            )));
        }
        if !(0.0..=1.0).contains(&p.noise) {
            return Err(bad(format!("noise {} outside [0, 1]", p.noise)));
        }
        match p.strength {
            PlantStrength::Mass(m) if !(0.0..=1.0).contains(&m) => {
                return Err(bad(format!("mass {m} outside [0, 1]")))
            }
            PlantStrength::Bias(b) if !(b >= 0.0 && b.is_finite()) => {
                return Err(bad(format!("bias {b} must be finite and non-negative")))
            }
            _ => {}
        }
    }
    Ok(())
}

fn generate_sequence(
    config: &SynthConfig,
    plants: &BTreeMap<HeadCoord, &PlantSpec>,
    index: usize,
) -> Result<Sequence, BundleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let (tokens, parse) = layout(config.seq_len, config.segments, &mut rng);
    let len = tokens.len();

    // annotations only; the real alignment is computed by Sequence::new
    let placeholder = AttentionTensor::new(1, 1, len, vec![1.0 / len as f32; len * len])
        .expect("placeholder shape");
    let skeleton = Sequence::new(format!("synth-{index:05}"), tokens, parse, placeholder)?;
    let sieves: BTreeMap<&RoleId, _> = plants
        .values()
        .map(|p| {
            (
                &p.role,
                build_sieve(&skeleton, &RoleSpec::new(p.role.clone(), config.window)),
            )
        })
        .collect();

    let mut data = Vec::with_capacity(config.layers * config.heads * len * len);
    for l in 0..config.layers {
        for h in 0..config.heads {
            let plant = plants.get(&HeadCoord::new(l, h));
            for t in 0..len {
                let row = match plant {
                    Some(p) if sieves[&p.role].is_eligible(t) => {
                        let targets = sieves[&p.role].targets(t);
                        let mass = p.strength.mass_for(targets.len(), len);
                        plant_row_with(targets, len, mass, p.noise, &mut rng)
                    }
                    _ => plant_row_with(&[], len, 0.0, config.background_noise, &mut rng),
                };
                data.extend(row.into_iter().map(|w| w as f32));
            }
        }
    }
    let attention =
        AttentionTensor::new(config.layers, config.heads, len, data).expect("tensor shape");
    let Sequence {
        id, tokens, parse, ..
    } = skeleton;
    Sequence::new(id, tokens, parse, attention)
}

/// Generates a validated bundle; identical for identical inputs.
pub fn generate_bundle(config: &SynthConfig, plants: &[PlantSpec]) -> Result<Bundle, SynthError> {
    validate(config, plants)?;
    let by_head: BTreeMap<HeadCoord, &PlantSpec> = plants.iter().map(|p| (p.head, p)).collect();
    let sequences = (0..config.n_sequences)
        .into_par_iter()
        .map(|i| generate_sequence(config, &by_head, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Bundle::new(
        config.model_id.clone(),
        config.layers,
        config.heads,
        sequences,
    )?)
}

#![allow(dead_code)]

use headsieve::bundle::{AttentionTensor, Bundle, DependencyParse, Sequence, TokenSequence};
use headsieve::score::HeadCoord;
use headsieve::sieve::RoleId;
use headsieve::synth::{PlantSpec, SynthConfig};

/// `[CLS] a b c [SEP]` with a flat parse: every word hangs off `a`.
pub fn five_token_sequence(id: &str, rows: &[[f32; 5]]) -> Sequence {
    let tokens = TokenSequence::from_tokens(&["[CLS]", "a", "b", "c", "[SEP]"]).unwrap();
    let parse = DependencyParse::sentence(
        vec!["a".into(), "b".into(), "c".into()],
        vec![None, Some(0), Some(0)],
        vec!["root".into(), "nsubj".into(), "dobj".into()],
    )
    .unwrap();
    let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let attention = AttentionTensor::new(1, 1, 5, data).unwrap();
    Sequence::new(id, tokens, parse, attention).unwrap()
}

pub fn uniform_rows() -> [[f32; 5]; 5] {
    [[0.2; 5]; 5]
}

/// One-head bundle whose rows put `mass` on the two delimiters.
pub fn delimiter_bundle(n: usize, mass: f32) -> Bundle {
    let rest = (1.0 - mass) / 3.0;
    let row = [mass / 2.0, rest, rest, rest, mass / 2.0];
    let seqs = (0..n)
        .map(|i| five_token_sequence(&format!("s{i}"), &[row; 5]))
        .collect();
    Bundle::new("hand", 1, 1, seqs).unwrap()
}

/// Twenty distinct heads of a 12×12 model, five per coarse role.
pub fn planted_heads() -> Vec<(HeadCoord, RoleId)> {
    let roles = RoleId::coarse_roles();
    (0..20)
        .map(|i| {
            let c = HeadCoord::new(i % 12, (5 * i + i / 12 + 3) % 12);
            (c, roles[i % 4].clone())
        })
        .collect()
}

pub fn planted_config() -> (SynthConfig, Vec<PlantSpec>) {
    let config = SynthConfig {
        seed: 2024,
        ..SynthConfig::default()
    };
    let plants = planted_heads()
        .into_iter()
        .map(|(c, r)| PlantSpec::with_bias(c, r, 5.0, 0.05))
        .collect();
    (config, plants)
}

/// One-head bundle whose rows put `mass` on `[CLS]` and spread the rest.
pub fn cls_bundle(n: usize, mass: f32) -> Bundle {
    let rest = (1.0 - mass) / 4.0;
    let row = [mass, rest, rest, rest, rest];
    let seqs = (0..n)
        .map(|i| five_token_sequence(&format!("s{i}"), &[row; 5]))
        .collect();
    Bundle::new("hand", 1, 1, seqs).unwrap()
}

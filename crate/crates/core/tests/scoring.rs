mod common;

use headsieve::analysis::finetune_delta;
use headsieve::bundle::{AttentionTensor, Bundle, DependencyParse, Sequence, TokenSequence};
use headsieve::score::{head_samples, role_samples, HeadCoord, ScoreError};
use headsieve::sieve::{RoleId, RoleSpec};
use headsieve::synth::{generate_bundle, PlantSpec, SynthConfig};

/// `[CLS] a b c [SEP]` whose parse has no nsubj arc.
fn without_subject(id: &str) -> Sequence {
    let tokens = TokenSequence::from_tokens(&["[CLS]", "a", "b", "c", "[SEP]"]).unwrap();
    let parse = DependencyParse::sentence(
        vec!["a".into(), "b".into(), "c".into()],
        vec![None, Some(0), Some(0)],
        vec!["root".into(), "amod".into(), "dobj".into()],
    )
    .unwrap();
    let attention = AttentionTensor::new(1, 1, 5, vec![0.2; 25]).unwrap();
    Sequence::new(id, tokens, parse, attention).unwrap()
}

#[test]
fn sequences_without_the_relation_are_dropped() {
    let bundle = Bundle::new(
        "hand",
        1,
        1,
        vec![
            common::five_token_sequence("seq1", &common::uniform_rows()),
            without_subject("seq2"),
        ],
    )
    .unwrap();
    let nsubj = head_samples(
        &bundle,
        &RoleSpec::with_default_window(RoleId::label("nsubj")),
    )
    .unwrap();
    let s = &nsubj[&HeadCoord::new(0, 0)];
    assert_eq!(s.sequence_ids, ["seq1"]);
    assert_eq!(s.scores.len(), 1);
    assert!((s.scores[0] - 1.0).abs() < 1e-6);

    let any = head_samples(&bundle, &RoleSpec::with_default_window(RoleId::SYNTACTIC)).unwrap();
    assert_eq!(any[&HeadCoord::new(0, 0)].scores.len(), 2);

    let lonely = Bundle::new("hand", 1, 1, vec![without_subject("only")]).unwrap();
    assert_eq!(
        head_samples(
            &lonely,
            &RoleSpec::with_default_window(RoleId::label("nsubj"))
        ),
        Err(ScoreError::NoEligibleSequence(RoleId::label("nsubj")))
    );
}

#[test]
fn single_segment_bundles_have_no_block_samples() {
    let bundle = common::cls_bundle(2, 0.5);
    assert_eq!(
        head_samples(&bundle, &RoleSpec::with_default_window(RoleId::BLOCK)),
        Err(ScoreError::NoEligibleSequence(RoleId::BLOCK))
    );
}

#[test]
fn delimiter_scores_match_hand_values() {
    // [CLS] and [SEP] share the mass: each gets 0.3, so beta = 0.3 / 0.2
    let bundle = common::delimiter_bundle(2, 0.6);
    let specs = [
        RoleSpec::with_default_window(RoleId::DELIMITER),
        RoleSpec::with_default_window("cls".parse::<RoleId>().unwrap()),
    ];
    let samples = role_samples(&bundle, &specs);
    let c = HeadCoord::new(0, 0);
    for role in [RoleId::DELIMITER, "cls".parse::<RoleId>().unwrap()] {
        for s in &samples.roles[&role][&c].scores {
            assert!((s - 1.5).abs() < 1e-6, "{role}: {s}");
        }
    }
}

#[test]
fn repeated_scoring_is_identical() {
    let config = SynthConfig {
        layers: 2,
        heads: 2,
        n_sequences: 30,
        ..SynthConfig::default()
    };
    let bundle = generate_bundle(&config, &[]).unwrap();
    let specs = RoleSpec::defaults(2);
    let a = role_samples(&bundle, &specs);
    for _ in 0..3 {
        assert_eq!(role_samples(&bundle, &specs), a);
    }
}

#[test]
fn weaker_final_band_delimiters_show_a_negative_delta() {
    let plants = |mass: f64| -> Vec<PlantSpec> {
        (4..6)
            .flat_map(|l| {
                (0..2).map(move |h| {
                    PlantSpec::with_mass(HeadCoord::new(l, h), RoleId::DELIMITER, mass, 0.05)
                })
            })
            .collect()
    };
    let config = SynthConfig {
        layers: 6,
        heads: 2,
        n_sequences: 40,
        seed: 17,
        ..SynthConfig::default()
    };
    let before = generate_bundle(&config, &plants(0.6)).unwrap();
    let after = generate_bundle(&config, &plants(0.3)).unwrap();
    let specs = RoleSpec::defaults(2);
    let report = finetune_delta(
        &role_samples(&before, &specs),
        &role_samples(&after, &specs),
        3,
    )
    .unwrap();
    let last = report.get(2, &RoleId::DELIMITER).unwrap();
    assert!(last.difference < -1.0, "{last:?}");
    assert_eq!((last.first_layer, last.last_layer), (4, 5));
    for band in 0..2 {
        let d = report.get(band, &RoleId::DELIMITER).unwrap().difference;
        assert!(d.abs() < 1e-12, "band {band}: {d}");
    }
}

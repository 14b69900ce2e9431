mod common;

use std::fs;

use headsieve::bundle::{load_bundle, write_bundle, BundleError};
use headsieve::sieve::{RoleId, RoleSpec};
use headsieve::synth::{generate_bundle, SynthConfig};

fn small_config() -> SynthConfig {
    SynthConfig {
        layers: 2,
        heads: 3,
        seq_len: 16,
        n_sequences: 4,
        seed: 11,
        ..SynthConfig::default()
    }
}

#[test]
fn round_trip_is_bit_exact() {
    let bundle = generate_bundle(&small_config(), &[])
        .unwrap()
        .with_roles(vec![
            RoleSpec::new(RoleId::LOCAL, 3),
            RoleSpec::new(RoleId::label("nsubj"), 2),
        ]);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    let back = load_bundle(dir.path()).unwrap();
    assert_eq!(back, bundle);
    for (a, b) in back.sequences.iter().zip(&bundle.sequences) {
        let bits_a: Vec<u32> = a.attention.as_slice().iter().map(|x| x.to_bits()).collect();
        let bits_b: Vec<u32> = b.attention.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    let again = tempfile::tempdir().unwrap();
    write_bundle(&back, again.path()).unwrap();
    for name in [
        "manifest.json",
        "seq00002/attn.bin",
        "seq00002/parse.conllu",
        "seq00002/tokens.json",
    ] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(again.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn truncated_tensor_is_a_shape_mismatch() {
    let bundle = generate_bundle(&small_config(), &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    let path = dir.path().join("seq00001/attn.bin");
    let mut bytes = fs::read(&path).unwrap();
    let full = bytes.len();
    bytes.truncate(full - 4);
    fs::write(&path, bytes).unwrap();
    match load_bundle(dir.path()) {
        Err(BundleError::ShapeMismatch {
            sequence,
            expected,
            actual,
        }) => {
            assert_eq!(sequence, bundle.sequences[1].id);
            assert_eq!(expected, full);
            assert_eq!(actual, full - 4);
        }
        other => panic!("expected ShapeMismatch, got {other:?}"),
    }
}

#[test]
fn row_sum_violation_names_the_row() {
    let bundle = common::delimiter_bundle(2, 0.5);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();

    let path = dir.path().join("seq00001/attn.bin");
    let mut values: Vec<f32> = fs::read(&path)
        .unwrap()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    // token 3 of layer 0, head 0 now sums to 0.8
    for w in &mut values[15..20] {
        *w = 0.16;
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&path, bytes).unwrap();

    let err = load_bundle(dir.path()).unwrap_err();
    match &err {
        BundleError::RowSumViolation { sequence, at, sum } => {
            assert_eq!(sequence, "s1");
            assert_eq!((at.layer, at.head, at.token), (0, 0, 3));
            assert!((sum - 0.8).abs() < 1e-6);
        }
        other => panic!("expected RowSumViolation, got {other:?}"),
    }
    let msg = err.to_string();
    assert!(
        msg.contains("layer 0") && msg.contains("head 0") && msg.contains("token 3"),
        "{msg}"
    );
}

#[test]
fn missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_bundle(dir.path()),
        Err(BundleError::MissingFile { .. })
    ));

    let bundle = common::delimiter_bundle(1, 0.5);
    write_bundle(&bundle, dir.path()).unwrap();
    fs::remove_file(dir.path().join("seq00000/parse.conllu")).unwrap();
    assert!(matches!(
        load_bundle(dir.path()),
        Err(BundleError::MissingFile { .. })
    ));
}

#[test]
fn manifest_accepts_short_keys() {
    let bundle = common::delimiter_bundle(1, 0.5);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    let manifest = r#"{
        "model_id": "hand", "L": 1, "H": 1,
        "roles": [{"coarse": "delimiter", "variant": "cls"}],
        "sequences": [{"id": "s0", "tokens_file": "seq00000/tokens.json",
                       "parse_file": "seq00000/parse.conllu",
                       "tensor_file": "seq00000/attn.bin", "T": 5}]
    }"#;
    fs::write(dir.path().join("manifest.json"), manifest).unwrap();
    let back = load_bundle(dir.path()).unwrap();
    assert_eq!(back.sequences, bundle.sequences);
    assert_eq!(back.roles.unwrap()[0].role.to_string(), "cls");
}

#[test]
fn word_count_disagreement_is_rejected() {
    let bundle = common::delimiter_bundle(1, 0.5);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    fs::write(
        dir.path().join("seq00000/parse.conllu"),
        "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t1\tnsubj\t_\t_\n\n",
    )
    .unwrap();
    assert!(matches!(
        load_bundle(dir.path()),
        Err(BundleError::AnnotationMismatch { .. })
    ));
}

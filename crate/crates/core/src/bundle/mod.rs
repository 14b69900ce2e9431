//! On-disk bundle format: attention tensors plus token and parse annotations
//! for every input sequence of one model checkpoint.
//!
//! Layout of a bundle directory:
//!
//! ```text
//! manifest.json
//! <seq dir>/tokens.json     tokens, special_flags, segment_ids, word_ids
//! <seq dir>/parse.conllu    dependency parse of the sequence's words
//! <seq dir>/attn.bin        little-endian f32, [layer][head][source][target]
//! ```
//!
//! File paths inside the manifest are relative to the bundle directory.

pub mod conllu;
mod tensor;
mod tokens;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conllu::{normalize_relation, parse_conllu, write_conllu, ConlluError, DependencyParse};
pub use tensor::{AttentionTensor, RowCoord, RowFault};
pub use tokens::{
    align_wordpieces, AlignError, SpecialFlag, TokenError, TokenSequence, WordAlignment,
};

use crate::sieve::RoleSpec;

/// Maximum allowed |row sum - 1| for a stored attention row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing file {}", .path.display())]
    MissingFile { path: PathBuf },
    #[error("reading {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("parsing {}: {source}", .path.display())]
    Conllu {
        path: PathBuf,
        #[source]
        source: ConlluError,
    },
    #[error("sequence {sequence}: {source}")]
    Tokens {
        sequence: String,
        #[source]
        source: TokenError,
    },
    #[error("sequence {sequence}: expected {expected} bytes of attention, found {actual}")]
    ShapeMismatch {
        sequence: String,
        expected: usize,
        actual: usize,
    },
    #[error("sequence {sequence}: layout differs from the bundle ({detail})")]
    LayoutMismatch { sequence: String, detail: String },
    #[error(
        "sequence {sequence}: row (layer {}, head {}, token {}) sums to {sum}",
        .at.layer, .at.head, .at.token
    )]
    RowSumViolation {
        sequence: String,
        at: RowCoord,
        sum: f64,
    },
    #[error(
        "sequence {sequence}: invalid weight {value} at (layer {}, head {}, token {}, target {target})",
        .at.layer, .at.head, .at.token
    )]
    InvalidWeight {
        sequence: String,
        at: RowCoord,
        target: usize,
        value: f32,
    },
    #[error("sequence {sequence}: annotations disagree: {detail}")]
    AnnotationMismatch { sequence: String, detail: String },
    #[error("duplicate sequence id {0:?}")]
    DuplicateId(String),
    #[error("writing {}: {source}", .path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One fully validated input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub tokens: TokenSequence,
    pub parse: DependencyParse,
    pub alignment: WordAlignment,
    pub attention: AttentionTensor,
}

impl Sequence {
    /// Validates the annotations and attention of one sequence.
    pub fn new(
        id: impl Into<String>,
        tokens: TokenSequence,
        parse: DependencyParse,
        attention: AttentionTensor,
    ) -> Result<Self, BundleError> {
        let id = id.into();
        tokens.validate().map_err(|source| BundleError::Tokens {
            sequence: id.clone(),
            source,
        })?;
        if attention.len() != tokens.len() {
            return Err(BundleError::LayoutMismatch {
                sequence: id,
                detail: format!(
                    "attention length {} but {} tokens",
                    attention.len(),
                    tokens.len()
                ),
            });
        }
        parse
            .validate()
            .map_err(|e| BundleError::AnnotationMismatch {
                sequence: id.clone(),
                detail: e.to_string(),
            })?;
        let alignment =
            align_wordpieces(&tokens, &parse).map_err(|e| BundleError::AnnotationMismatch {
                sequence: id.clone(),
                detail: e.to_string(),
            })?;
        attention
            .check_rows(ROW_SUM_TOLERANCE)
            .map_err(|fault| match fault {
                RowFault::RowSum { at, sum } => BundleError::RowSumViolation {
                    sequence: id.clone(),
                    at,
                    sum,
                },
                RowFault::BadValue { at, target, value } => BundleError::InvalidWeight {
                    sequence: id.clone(),
                    at,
                    target,
                    value,
                },
            })?;
        Ok(Sequence {
            id,
            tokens,
            parse,
            alignment,
            attention,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Attention and annotations of one checkpoint over N sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model_id: String,
    pub layers: usize,
    pub heads: usize,
    /// Role configuration stored with the bundle, if any.
    pub roles: Option<Vec<RoleSpec>>,
    pub sequences: Vec<Sequence>,
}

impl Bundle {
    pub fn new(
        model_id: impl Into<String>,
        layers: usize,
        heads: usize,
        sequences: Vec<Sequence>,
    ) -> Result<Self, BundleError> {
        let mut seen = std::collections::HashSet::new();
        for seq in &sequences {
            if !seen.insert(seq.id.as_str()) {
                return Err(BundleError::DuplicateId(seq.id.clone()));
            }
            if seq.attention.layers() != layers || seq.attention.heads() != heads {
                return Err(BundleError::LayoutMismatch {
                    sequence: seq.id.clone(),
                    detail: format!(
                        "{}x{} heads, bundle has {layers}x{heads}",
                        seq.attention.layers(),
                        seq.attention.heads()
                    ),
                });
            }
        }
        Ok(Bundle {
            model_id: model_id.into(),
            layers,
            heads,
            roles: None,
            sequences,
        })
    }

    pub fn with_roles(mut self, roles: Vec<RoleSpec>) -> Self {
        self.roles = Some(roles);
        self
    }

    pub fn num_heads(&self) -> usize {
        self.layers * self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    #[serde(alias = "L")]
    pub layers: usize,
    #[serde(alias = "H")]
    pub heads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<RoleSpec>>,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub tokens_file: String,
    pub parse_file: String,
    pub tensor_file: String,
    #[serde(alias = "T")]
    pub length: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>, BundleError> {
    fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            BundleError::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            BundleError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn read_text(path: &Path) -> Result<String, BundleError> {
    let bytes = read_file(path)?;
    String::from_utf8(bytes).map_err(|e| BundleError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| BundleError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, BundleError> {
    read_json(&dir.join("manifest.json"))
}

fn load_sequence(dir: &Path, m: &Manifest, entry: &SequenceEntry) -> Result<Sequence, BundleError> {
    let tokens: TokenSequence = read_json(&dir.join(&entry.tokens_file))?;
    let parse_path = dir.join(&entry.parse_file);
    let sentences =
        parse_conllu(&read_text(&parse_path)?).map_err(|source| BundleError::Conllu {
            path: parse_path.clone(),
            source,
        })?;
    let parse = DependencyParse::concat(&sentences);
    let bytes = read_file(&dir.join(&entry.tensor_file))?;
    let attention = AttentionTensor::from_le_bytes(m.layers, m.heads, entry.length, &bytes)
        .ok_or_else(|| BundleError::ShapeMismatch {
            sequence: entry.id.clone(),
            expected: 4 * AttentionTensor::element_count(m.layers, m.heads, entry.length),
            actual: bytes.len(),
        })?;
    if tokens.len() != entry.length {
        return Err(BundleError::LayoutMismatch {
            sequence: entry.id.clone(),
            detail: format!("manifest T = {} but {} tokens", entry.length, tokens.len()),
        });
    }
    Sequence::new(entry.id.clone(), tokens, parse, attention)
}

/// Loads and fully validates a bundle directory.
///
/// Sequences are validated in parallel; the reported error is always the
/// first failing sequence in manifest order.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle, BundleError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let loaded: Vec<Result<Sequence, BundleError>> = manifest
        .sequences
        .par_iter()
        .map(|entry| load_sequence(dir, &manifest, entry))
        .collect();
    let sequences = loaded.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut bundle = Bundle::new(
        manifest.model_id,
        manifest.layers,
        manifest.heads,
        sequences,
    )?;
    bundle.roles = manifest.roles;
    Ok(bundle)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| BundleError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| BundleError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bundle` under `dir` using one sub-directory per sequence.
pub fn write_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<Manifest, BundleError> {
    let dir = dir.as_ref();
    let mut entries = Vec::with_capacity(bundle.sequences.len());
    for (i, seq) in bundle.sequences.iter().enumerate() {
        let sub = format!("seq{i:05}");
        let entry = SequenceEntry {
            id: seq.id.clone(),
            tokens_file: format!("{sub}/tokens.json"),
            parse_file: format!("{sub}/parse.conllu"),
            tensor_file: format!("{sub}/attn.bin"),
            length: seq.len(),
        };
        let tokens = serde_json::to_vec(&seq.tokens).expect("token serialization");
        write_file(&dir.join(&entry.tokens_file), &tokens)?;
        write_file(
            &dir.join(&entry.parse_file),
            write_conllu(&seq.parse).as_bytes(),
        )?;
        write_file(&dir.join(&entry.tensor_file), &seq.attention.to_le_bytes())?;
        entries.push(entry);
    }
    let manifest = Manifest {
        model_id: bundle.model_id.clone(),
        layers: bundle.layers,
        heads: bundle.heads,
        roles: bundle.roles.clone(),
        sequences: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    json.push('\n');
    write_file(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

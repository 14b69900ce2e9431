//! Attention sieves: for every source token, the target positions a head of a
//! given functional role is expected to attend to.
//!
//! Delimiter tokens are never scored as sources, so their target sets are
//! always empty. Only the delimiter roles ever target delimiter positions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{DependencyParse, Sequence, SpecialFlag, TokenSequence, WordAlignment};

pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseRole {
    Local,
    Syntactic,
    Block,
    Delimiter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocalVariant {
    Symmetric,
    Prev,
    Next,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DelimiterVariant {
    Both,
    Cls,
    Sep,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyntacticVariant {
    Any,
    /// Bare relation label, lowercase without subtype.
    Label(String),
}

/// A functional role, optionally refined to a sub-role.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoleId {
    Local(LocalVariant),
    Syntactic(SyntacticVariant),
    Block,
    Delimiter(DelimiterVariant),
}

impl RoleId {
    pub const LOCAL: RoleId = RoleId::Local(LocalVariant::Symmetric);
    pub const SYNTACTIC: RoleId = RoleId::Syntactic(SyntacticVariant::Any);
    pub const BLOCK: RoleId = RoleId::Block;
    pub const DELIMITER: RoleId = RoleId::Delimiter(DelimiterVariant::Both);

    pub fn label(label: &str) -> RoleId {
        RoleId::Syntactic(SyntacticVariant::Label(crate::bundle::normalize_relation(
            label,
        )))
    }

    pub fn coarse(&self) -> CoarseRole {
        match self {
            RoleId::Local(_) => CoarseRole::Local,
            RoleId::Syntactic(_) => CoarseRole::Syntactic,
            RoleId::Block => CoarseRole::Block,
            RoleId::Delimiter(_) => CoarseRole::Delimiter,
        }
    }

    /// True for the four unrefined roles.
    pub fn is_coarse(&self) -> bool {
        matches!(
            self,
            RoleId::Local(LocalVariant::Symmetric)
                | RoleId::Syntactic(SyntacticVariant::Any)
                | RoleId::Block
                | RoleId::Delimiter(DelimiterVariant::Both)
        )
    }

    pub fn coarse_roles() -> Vec<RoleId> {
        vec![
            RoleId::LOCAL,
            RoleId::SYNTACTIC,
            RoleId::BLOCK,
            RoleId::DELIMITER,
        ]
    }

    /// The nine fine-grained roles, in mosaic sub-cell order.
    pub fn fine_roles() -> Vec<RoleId> {
        vec![
            RoleId::Delimiter(DelimiterVariant::Cls),
            RoleId::Delimiter(DelimiterVariant::Sep),
            RoleId::Block,
            RoleId::Local(LocalVariant::Prev),
            RoleId::Local(LocalVariant::Next),
            RoleId::label("nsubj"),
            RoleId::label("dobj"),
            RoleId::label("amod"),
            RoleId::label("advmod"),
        ]
    }

    /// Coarse roles followed by the fine-grained ones (block listed once).
    pub fn default_roles() -> Vec<RoleId> {
        let mut roles = Self::coarse_roles();
        for r in Self::fine_roles() {
            if !roles.contains(&r) {
                roles.push(r);
            }
        }
        roles
    }

    fn reserved(name: &str) -> Option<RoleId> {
        Some(match name {
            "local" => RoleId::LOCAL,
            "local-prev" => RoleId::Local(LocalVariant::Prev),
            "local-next" => RoleId::Local(LocalVariant::Next),
            "syntactic" => RoleId::SYNTACTIC,
            "block" => RoleId::Block,
            "delimiter" => RoleId::DELIMITER,
            "cls" => RoleId::Delimiter(DelimiterVariant::Cls),
            "sep" => RoleId::Delimiter(DelimiterVariant::Sep),
            _ => return None,
        })
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoleId::Local(LocalVariant::Symmetric) => f.write_str("local"),
            RoleId::Local(LocalVariant::Prev) => f.write_str("local-prev"),
            RoleId::Local(LocalVariant::Next) => f.write_str("local-next"),
            RoleId::Syntactic(SyntacticVariant::Any) => f.write_str("syntactic"),
            RoleId::Syntactic(SyntacticVariant::Label(l)) => {
                if RoleId::reserved(l).is_some() || l.is_empty() {
                    write!(f, "syntactic:{l}")
                } else {
                    f.write_str(l)
                }
            }
            RoleId::Block => f.write_str("block"),
            RoleId::Delimiter(DelimiterVariant::Both) => f.write_str("delimiter"),
            RoleId::Delimiter(DelimiterVariant::Cls) => f.write_str("cls"),
            RoleId::Delimiter(DelimiterVariant::Sep) => f.write_str("sep"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoleParseError {
    #[error("empty role name")]
    Empty,
    #[error("variant {variant:?} is not valid for role {coarse:?}")]
    BadVariant { coarse: CoarseRole, variant: String },
    #[error("local window must be at least 1")]
    ZeroWindow,
}

impl FromStr for RoleId {
    type Err = RoleParseError;

    /// Accepts role names (`local`, `local-prev`, `cls`, ...), bare relation
    /// labels (`nsubj`) and the explicit `syntactic:<label>` form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let name = s.trim().to_ascii_lowercase();
        if name.is_empty() {
            return Err(RoleParseError::Empty);
        }
        if let Some(role) = RoleId::reserved(&name) {
            return Ok(role);
        }
        let label = name
            .strip_prefix("syntactic:")
            .or_else(|| name.strip_prefix("syn:"))
            .unwrap_or(&name);
        if label.is_empty() {
            return Err(RoleParseError::Empty);
        }
        Ok(RoleId::Syntactic(SyntacticVariant::Label(
            label.to_string(),
        )))
    }
}

impl Serialize for RoleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A role plus the parameters needed to build its sieve.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoleSpec {
    pub role: RoleId,
    /// Neighbourhood radius for local roles; ignored by the others.
    pub window: usize,
}

impl RoleSpec {
    pub fn new(role: RoleId, window: usize) -> Self {
        RoleSpec { role, window }
    }

    pub fn with_default_window(role: RoleId) -> Self {
        RoleSpec::new(role, DEFAULT_WINDOW)
    }

    pub fn defaults(window: usize) -> Vec<RoleSpec> {
        RoleId::default_roles()
            .into_iter()
            .map(|r| RoleSpec::new(r, window))
            .collect()
    }
}

/// Manifest form: `{"coarse": "local", "variant": "prev", "window": 1}`.
#[derive(Serialize, Deserialize)]
struct RoleSpecRepr {
    coarse: CoarseRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
}

impl TryFrom<RoleSpecRepr> for RoleSpec {
    type Error = RoleParseError;

    fn try_from(r: RoleSpecRepr) -> Result<Self, Self::Error> {
        let variant = r.variant.as_deref().map(str::to_ascii_lowercase);
        let bad = |v: &str| RoleParseError::BadVariant {
            coarse: r.coarse,
            variant: v.to_string(),
        };
        let role = match (r.coarse, variant.as_deref()) {
            (CoarseRole::Local, None | Some("symmetric")) => RoleId::LOCAL,
            (CoarseRole::Local, Some("prev")) => RoleId::Local(LocalVariant::Prev),
            (CoarseRole::Local, Some("next")) => RoleId::Local(LocalVariant::Next),
            (CoarseRole::Syntactic, None | Some("any")) => RoleId::SYNTACTIC,
            (CoarseRole::Syntactic, Some(label)) if !label.trim().is_empty() => {
                RoleId::label(label)
            }
            (CoarseRole::Block, None) => RoleId::Block,
            (CoarseRole::Delimiter, None | Some("both")) => RoleId::DELIMITER,
            (CoarseRole::Delimiter, Some("cls")) => RoleId::Delimiter(DelimiterVariant::Cls),
            (CoarseRole::Delimiter, Some("sep")) => RoleId::Delimiter(DelimiterVariant::Sep),
            (_, Some(v)) => return Err(bad(v)),
        };
        let window = r.window.unwrap_or(DEFAULT_WINDOW);
        if window == 0 {
            return Err(RoleParseError::ZeroWindow);
        }
        Ok(RoleSpec { role, window })
    }
}

impl From<&RoleSpec> for RoleSpecRepr {
    fn from(spec: &RoleSpec) -> Self {
        let variant = match &spec.role {
            RoleId::Local(LocalVariant::Symmetric) => None,
            RoleId::Local(LocalVariant::Prev) => Some("prev".to_string()),
            RoleId::Local(LocalVariant::Next) => Some("next".to_string()),
            RoleId::Syntactic(SyntacticVariant::Any) => None,
            RoleId::Syntactic(SyntacticVariant::Label(l)) => Some(l.clone()),
            RoleId::Block => None,
            RoleId::Delimiter(DelimiterVariant::Both) => None,
            RoleId::Delimiter(DelimiterVariant::Cls) => Some("cls".to_string()),
            RoleId::Delimiter(DelimiterVariant::Sep) => Some("sep".to_string()),
        };
        let window = matches!(spec.role, RoleId::Local(_)).then_some(spec.window);
        RoleSpecRepr {
            coarse: spec.role.coarse(),
            variant,
            window,
        }
    }
}

impl Serialize for RoleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RoleSpecRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RoleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RoleSpecRepr::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// Target positions per source token for one role on one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sieve {
    pub role: RoleId,
    targets: Vec<Vec<usize>>,
}

impl Sieve {
    /// `targets[t]` must be sorted, deduplicated and `< targets.len()`.
    pub fn from_targets(role: RoleId, targets: Vec<Vec<usize>>) -> Self {
        debug_assert!(targets
            .iter()
            .all(|s| s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&p| p < targets.len())));
        Sieve { role, targets }
    }

    pub fn targets(&self, source: usize) -> &[usize] {
        &self.targets[source]
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn is_eligible(&self, source: usize) -> bool {
        !self.targets[source].is_empty()
    }

    /// Whether any source token has a non-empty target set.
    pub fn any_eligible(&self) -> bool {
        self.targets.iter().any(|s| !s.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.targets
            .iter()
            .enumerate()
            .map(|(t, s)| (t, s.as_slice()))
    }
}

fn content_positions(seq: &TokenSequence) -> impl Iterator<Item = usize> + '_ {
    (0..seq.len()).filter(|&p| !seq.is_special(p))
}

pub fn local_sieve(seq: &TokenSequence, window: usize, variant: LocalVariant) -> Sieve {
    assert!(window >= 1, "local window must be at least 1");
    let n = seq.len();
    let targets = (0..n)
        .map(|t| {
            if seq.is_special(t) {
                return Vec::new();
            }
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(n - 1);
            let range = match variant {
                LocalVariant::Symmetric => lo..hi + 1,
                LocalVariant::Prev => lo..t,
                LocalVariant::Next => t + 1..hi + 1,
            };
            range.filter(|&p| !seq.is_special(p)).collect()
        })
        .collect();
    Sieve::from_targets(RoleId::Local(variant), targets)
}

pub fn delimiter_sieve(seq: &TokenSequence, variant: DelimiterVariant) -> Sieve {
    let wanted: Vec<usize> = (0..seq.len())
        .filter(|&p| match (variant, seq.special_flags[p]) {
            (DelimiterVariant::Both, f) => f.is_special(),
            (DelimiterVariant::Cls, f) => f == SpecialFlag::Cls,
            (DelimiterVariant::Sep, f) => f == SpecialFlag::Sep,
        })
        .collect();
    let targets = (0..seq.len())
        .map(|t| {
            if seq.is_special(t) {
                Vec::new()
            } else {
                wanted.clone()
            }
        })
        .collect();
    Sieve::from_targets(RoleId::Delimiter(variant), targets)
}

pub fn block_sieve(seq: &TokenSequence) -> Sieve {
    let mut by_segment: [Vec<usize>; 2] = Default::default();
    for p in content_positions(seq) {
        by_segment[usize::from(seq.segment_ids[p])].push(p);
    }
    let targets = (0..seq.len())
        .map(|t| {
            if seq.is_special(t) {
                Vec::new()
            } else {
                by_segment[usize::from(seq.segment_ids[t])].clone()
            }
        })
        .collect();
    Sieve::from_targets(RoleId::Block, targets)
}

/// Word-level relatives of every word under `variant`.
fn related_words(parse: &DependencyParse, variant: &SyntacticVariant) -> Vec<Vec<usize>> {
    let children = parse.children();
    let labels: Vec<String> = (0..parse.len()).map(|w| parse.base_relation(w)).collect();
    (0..parse.len())
        .map(|w| {
            let mut related = Vec::new();
            match variant {
                SyntacticVariant::Any => {
                    related.extend(parse.heads[w]);
                    related.extend(&children[w]);
                }
                SyntacticVariant::Label(r) => {
                    let r = crate::bundle::normalize_relation(r);
                    if labels[w] == r {
                        related.extend(parse.heads[w]);
                    }
                    related.extend(children[w].iter().filter(|&&c| labels[c] == r));
                }
            }
            related
        })
        .collect()
}

pub fn syntactic_sieve(
    seq: &TokenSequence,
    parse: &DependencyParse,
    align: &WordAlignment,
    variant: &SyntacticVariant,
) -> Sieve {
    let related = related_words(parse, variant);
    let mut targets = vec![Vec::new(); seq.len()];
    for (w, rel) in related.iter().enumerate() {
        if rel.is_empty() {
            continue;
        }
        let mut positions: Vec<usize> = rel
            .iter()
            .flat_map(|&r| align.pieces(r).iter().copied())
            .collect();
        positions.sort_unstable();
        positions.dedup();
        for &p in align.pieces(w) {
            targets[p] = positions.clone();
        }
    }
    Sieve::from_targets(RoleId::Syntactic(variant.clone()), targets)
}

/// Builds the sieve of `spec` over one bundle sequence.
pub fn build_sieve(seq: &Sequence, spec: &RoleSpec) -> Sieve {
    match &spec.role {
        RoleId::Local(v) => local_sieve(&seq.tokens, spec.window, *v),
        RoleId::Syntactic(v) => syntactic_sieve(&seq.tokens, &seq.parse, &seq.alignment, v),
        RoleId::Block => block_sieve(&seq.tokens),
        RoleId::Delimiter(v) => delimiter_sieve(&seq.tokens, *v),
    }
}

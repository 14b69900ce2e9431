use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::conllu::DependencyParse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpecialFlag {
    Cls,
    Sep,
    None,
}

impl SpecialFlag {
    pub fn is_special(self) -> bool {
        !matches!(self, SpecialFlag::None)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("token sequence is empty")]
    Empty,
    #[error("{field} has {actual} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("CLS token at position {position}; CLS may only appear at position 0")]
    MisplacedCls { position: usize },
    #[error("segment id {value} at position {position} is not 0 or 1")]
    BadSegment { position: usize, value: u8 },
    #[error("segment ids decrease at position {position}")]
    SegmentsDecrease { position: usize },
    #[error("word ids decrease at position {position}")]
    WordIdsDecrease { position: usize },
    #[error("special token at position {position} carries a word id")]
    SpecialWithWordId { position: usize },
}

/// One stored input sequence: wordpieces plus their annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub special_flags: Vec<SpecialFlag>,
    pub segment_ids: Vec<u8>,
    pub word_ids: Vec<Option<usize>>,
}

impl TokenSequence {
    pub fn new(
        tokens: Vec<String>,
        special_flags: Vec<SpecialFlag>,
        segment_ids: Vec<u8>,
        word_ids: Vec<Option<usize>>,
    ) -> Result<Self, TokenError> {
        let seq = TokenSequence {
            tokens,
            special_flags,
            segment_ids,
            word_ids,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds a sequence from plain token strings, treating the literal
    /// strings `[CLS]` and `[SEP]` as delimiters. Segments advance after
    /// each `[SEP]` that is followed by more content; content tokens get
    /// consecutive word ids.
    pub fn from_tokens(tokens: &[&str]) -> Result<Self, TokenError> {
        let mut flags = Vec::with_capacity(tokens.len());
        let mut segments = Vec::with_capacity(tokens.len());
        let mut words = Vec::with_capacity(tokens.len());
        let mut segment = 0u8;
        let mut next_word = 0;
        for (i, tok) in tokens.iter().enumerate() {
            let flag = match *tok {
                "[CLS]" => SpecialFlag::Cls,
                "[SEP]" => SpecialFlag::Sep,
                _ => SpecialFlag::None,
            };
            flags.push(flag);
            segments.push(segment);
            if flag.is_special() {
                words.push(None);
            } else {
                words.push(Some(next_word));
                next_word += 1;
            }
            if flag == SpecialFlag::Sep && i + 1 < tokens.len() {
                segment = segment.saturating_add(1);
            }
        }
        TokenSequence::new(
            tokens.iter().map(|t| t.to_string()).collect(),
            flags,
            segments,
            words,
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_special(&self, position: usize) -> bool {
        self.special_flags[position].is_special()
    }

    pub fn validate(&self) -> Result<(), TokenError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(TokenError::Empty);
        }
        for (field, len) in [
            ("special_flags", self.special_flags.len()),
            ("segment_ids", self.segment_ids.len()),
            ("word_ids", self.word_ids.len()),
        ] {
            if len != n {
                return Err(TokenError::LengthMismatch {
                    field,
                    expected: n,
                    actual: len,
                });
            }
        }
        let mut last_word: Option<usize> = None;
        for p in 0..n {
            if self.special_flags[p] == SpecialFlag::Cls && p != 0 {
                return Err(TokenError::MisplacedCls { position: p });
            }
            let seg = self.segment_ids[p];
            if seg > 1 {
                return Err(TokenError::BadSegment {
                    position: p,
                    value: seg,
                });
            }
            if p > 0 && seg < self.segment_ids[p - 1] {
                return Err(TokenError::SegmentsDecrease { position: p });
            }
            if let Some(w) = self.word_ids[p] {
                if self.is_special(p) {
                    return Err(TokenError::SpecialWithWordId { position: p });
                }
                if last_word.is_some_and(|last| w < last) {
                    return Err(TokenError::WordIdsDecrease { position: p });
                }
                last_word = Some(w);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("content token at position {position} has no word id")]
    MissingWordId { position: usize },
    #[error("parse has {parse_words} words but tokens reference {token_words}")]
    WordCountMismatch {
        parse_words: usize,
        token_words: usize,
    },
    #[error("word {word} has no wordpieces")]
    GapInAlignment { word: usize },
}

/// Wordpiece positions of every parse word, in word order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordAlignment {
    pieces: Vec<Vec<usize>>,
}

impl WordAlignment {
    pub fn pieces(&self, word: usize) -> &[usize] {
        &self.pieces[word]
    }

    pub fn num_words(&self) -> usize {
        self.pieces.len()
    }

    pub fn as_slices(&self) -> &[Vec<usize>] {
        &self.pieces
    }
}

/// Groups the content-token positions of `seq` by the parse word they belong to.
pub fn align_wordpieces(
    seq: &TokenSequence,
    parse: &DependencyParse,
) -> Result<WordAlignment, AlignError> {
    let mut token_words = 0;
    for p in 0..seq.len() {
        if seq.is_special(p) {
            continue;
        }
        match seq.word_ids[p] {
            Some(w) => token_words = token_words.max(w + 1),
            None => return Err(AlignError::MissingWordId { position: p }),
        }
    }
    if token_words != parse.len() {
        return Err(AlignError::WordCountMismatch {
            parse_words: parse.len(),
            token_words,
        });
    }
    let mut pieces = vec![Vec::new(); token_words];
    for (p, w) in seq.word_ids.iter().enumerate() {
        if let Some(w) = w {
            pieces[*w].push(p);
        }
    }
    if let Some(word) = pieces.iter().position(Vec::is_empty) {
        return Err(AlignError::GapInAlignment { word });
    }
    Ok(WordAlignment { pieces })
}

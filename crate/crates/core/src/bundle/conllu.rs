//! Dependency parses and a minimal CoNLL-U reader/writer.
//!
//! Only the columns the sieves need are kept: FORM, HEAD and DEPREL.
//! Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped, as
//! they carry no basic-tree arcs.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {columns}")]
    MalformedLine { line: usize, columns: usize },
    #[error("line {line}: word id {value:?} is not the next integer in the sentence")]
    BadWordId { line: usize, value: String },
    #[error("line {line}: HEAD {value:?} is not an integer")]
    NonIntegerHead { line: usize, value: String },
    #[error("line {line}: HEAD {head} out of range for a sentence of {words} words")]
    HeadOutOfRange {
        line: usize,
        head: usize,
        words: usize,
    },
    #[error("sentence {sentence}: expected exactly one root, found {roots}")]
    RootCount { sentence: usize, roots: usize },
    #[error("sentence {sentence}: dependency arcs contain a cycle through word {word}")]
    Cycle { sentence: usize, word: usize },
}

/// Word-level dependency tree (or forest, one tree per sentence).
///
/// `heads[w]` is the index of the governor of word `w`, or `None` for a
/// sentence root. Indices are 0-based over `words`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyParse {
    pub words: Vec<String>,
    pub heads: Vec<Option<usize>>,
    pub relations: Vec<String>,
    /// First word index of every sentence, ascending; `[0]` for a single sentence.
    pub sentence_starts: Vec<usize>,
}

/// Lowercases a relation label and strips any subtype (`nsubj:pass` → `nsubj`).
pub fn normalize_relation(label: &str) -> String {
    label
        .split(':')
        .next()
        .unwrap_or_default()
        .trim()
        .to_ascii_lowercase()
}

impl DependencyParse {
    /// Builds a single-sentence parse and validates it.
    pub fn sentence(
        words: Vec<String>,
        heads: Vec<Option<usize>>,
        relations: Vec<String>,
    ) -> Result<Self, ConlluError> {
        let parse = DependencyParse {
            words,
            heads,
            relations,
            sentence_starts: vec![0],
        };
        parse.validate()?;
        Ok(parse)
    }

    /// Concatenates sentences into one forest, offsetting word indices.
    pub fn concat(parts: &[DependencyParse]) -> Self {
        let mut out = DependencyParse::default();
        for part in parts {
            let offset = out.words.len();
            out.sentence_starts
                .extend(part.sentence_starts.iter().map(|s| s + offset));
            out.words.extend(part.words.iter().cloned());
            out.heads
                .extend(part.heads.iter().map(|h| h.map(|h| h + offset)));
            out.relations.extend(part.relations.iter().cloned());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Word ranges of each sentence.
    pub fn sentences(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let n = self.words.len();
        self.sentence_starts.iter().enumerate().map(move |(i, &s)| {
            let end = self.sentence_starts.get(i + 1).copied().unwrap_or(n);
            s..end
        })
    }

    /// Relation label of word `w` with subtypes stripped.
    pub fn base_relation(&self, w: usize) -> String {
        normalize_relation(&self.relations[w])
    }

    /// Dependents of every word, in word order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.words.len()];
        for (w, head) in self.heads.iter().enumerate() {
            if let Some(h) = head {
                children[*h].push(w);
            }
        }
        children
    }

    /// Checks that heads stay inside their sentence, each sentence has one
    /// root and the arcs are acyclic.
    pub fn validate(&self) -> Result<(), ConlluError> {
        let n = self.words.len();
        assert_eq!(self.heads.len(), n, "heads length");
        assert_eq!(self.relations.len(), n, "relations length");
        for (s, range) in self.sentences().enumerate() {
            let mut roots = 0;
            for w in range.clone() {
                match self.heads[w] {
                    None => roots += 1,
                    Some(h) if !range.contains(&h) => {
                        return Err(ConlluError::HeadOutOfRange {
                            line: 0,
                            head: h + 1,
                            words: range.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
            if roots != 1 {
                return Err(ConlluError::RootCount { sentence: s, roots });
            }
            for start in range.clone() {
                let mut cur = start;
                let mut steps = 0;
                while let Some(h) = self.heads[cur] {
                    cur = h;
                    steps += 1;
                    if steps > range.len() {
                        return Err(ConlluError::Cycle {
                            sentence: s,
                            word: start,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses a CoNLL-U document into one parse per sentence.
pub fn parse_conllu(text: &str) -> Result<Vec<DependencyParse>, ConlluError> {
    let mut sentences = Vec::new();
    let mut current = SentenceBuilder::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(parse) = current.finish(sentences.len())? {
                sentences.push(parse);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::MalformedLine {
                line: line_no,
                columns: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        match id.parse::<usize>() {
            Ok(v) if v == current.words.len() + 1 => {}
            _ => {
                return Err(ConlluError::BadWordId {
                    line: line_no,
                    value: id.to_string(),
                })
            }
        }
        let head: usize = cols[6].parse().map_err(|_| ConlluError::NonIntegerHead {
            line: line_no,
            value: cols[6].to_string(),
        })?;
        current.words.push(cols[1].to_string());
        current.heads.push((line_no, head));
        current.relations.push(cols[7].to_lowercase());
    }
    if let Some(parse) = current.finish(sentences.len())? {
        sentences.push(parse);
    }
    Ok(sentences)
}

#[derive(Default)]
struct SentenceBuilder {
    words: Vec<String>,
    heads: Vec<(usize, usize)>,
    relations: Vec<String>,
}

impl SentenceBuilder {
    fn finish(&mut self, index: usize) -> Result<Option<DependencyParse>, ConlluError> {
        if self.words.is_empty() {
            return Ok(None);
        }
        let n = self.words.len();
        let mut heads = Vec::with_capacity(n);
        for &(line, head) in &self.heads {
            if head > n {
                return Err(ConlluError::HeadOutOfRange {
                    line,
                    head,
                    words: n,
                });
            }
            heads.push(head.checked_sub(1));
        }
        let parse = DependencyParse {
            words: std::mem::take(&mut self.words),
            heads,
            relations: std::mem::take(&mut self.relations),
            sentence_starts: vec![0],
        };
        self.heads.clear();
        parse.validate().map_err(|e| match e {
            ConlluError::RootCount { roots, .. } => ConlluError::RootCount {
                sentence: index,
                roots,
            },
            ConlluError::Cycle { word, .. } => ConlluError::Cycle {
                sentence: index,
                word,
            },
            other => other,
        })?;
        Ok(Some(parse))
    }
}

/// Writes a parse back out as CoNLL-U, one block per sentence.
pub fn write_conllu(parse: &DependencyParse) -> String {
    let mut out = String::new();
    for range in parse.sentences() {
        let start = range.start;
        for w in range {
            let head = parse.heads[w].map_or(0, |h| h - start + 1);
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_",
                w - start + 1,
                parse.words[w],
                head,
                parse.relations[w]
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOGS: &str = "# text = dogs chase cats\n\
        1\tdogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n\
        2\tchase\tchase\tVERB\tVBP\t_\t0\tROOT\t_\t_\n\
        3\tcats\tcat\tNOUN\tNNS\t_\t2\tdobj\t_\t_\n\n";

    #[test]
    fn three_word_sentence() {
        let parses = parse_conllu(DOGS).unwrap();
        assert_eq!(parses.len(), 1);
        let p = &parses[0];
        assert_eq!(p.words, vec!["dogs", "chase", "cats"]);
        assert_eq!(p.heads, vec![Some(1), None, Some(1)]);
        assert_eq!(p.relations, vec!["nsubj", "root", "dobj"]);
    }

    #[test]
    fn empty_document() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n# only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn nine_columns_is_malformed() {
        let text = "1\tdogs\tdog\tNOUN\tNNS\t_\t0\troot\t_\n";
        assert_eq!(
            parse_conllu(text),
            Err(ConlluError::MalformedLine {
                line: 1,
                columns: 9
            })
        );
    }

    #[test]
    fn head_errors() {
        let bad = "1\ta\t_\t_\t_\t_\tx\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(bad),
            Err(ConlluError::NonIntegerHead { line: 1, .. })
        ));
        let out = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t7\tdep\t_\t_\n";
        assert_eq!(
            parse_conllu(out),
            Err(ConlluError::HeadOutOfRange {
                line: 2,
                head: 7,
                words: 2
            })
        );
    }

    #[test]
    fn tree_shape_errors() {
        let two_roots = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(two_roots),
            Err(ConlluError::RootCount { roots: 2, .. })
        ));
        let cycle = "1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n3\tc\t_\t_\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(cycle),
            Err(ConlluError::Cycle { .. })
        ));
    }

    #[test]
    fn skips_ranges_and_empty_nodes_and_crlf() {
        let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\r\n\
            1\tdo\t_\t_\t_\t_\t0\troot\t_\t_\r\n\
            1.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\r\n\
            2\tn't\t_\t_\t_\t_\t1\tadvmod\t_\t_\r\n";
        let p = parse_conllu(text).unwrap();
        assert_eq!(p[0].words, vec!["do", "n't"]);
        assert_eq!(p[0].heads, vec![None, Some(0)]);
    }

    #[test]
    fn concat_and_write_round_trip() {
        let mut text = DOGS.to_string();
        text.push_str(
            "1\tbirds\t_\t_\t_\t_\t2\tnsubj:pass\t_\t_\n2\tsing\t_\t_\t_\t_\t0\troot\t_\t_\n\n",
        );
        let parts = parse_conllu(&text).unwrap();
        let merged = DependencyParse::concat(&parts);
        assert_eq!(merged.sentence_starts, vec![0, 3]);
        assert_eq!(merged.heads[3], Some(4));
        assert_eq!(merged.base_relation(3), "nsubj");
        let again = DependencyParse::concat(&parse_conllu(&write_conllu(&merged)).unwrap());
        assert_eq!(again, merged);
    }

    #[test]
    fn normalizes_labels() {
        assert_eq!(normalize_relation("NSUBJ:pass"), "nsubj");
        assert_eq!(normalize_relation("amod"), "amod");
    }
}

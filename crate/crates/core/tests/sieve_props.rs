use std::collections::BTreeSet;

use headsieve::bundle::{align_wordpieces, DependencyParse, SpecialFlag, TokenSequence};
use headsieve::sieve::{
    block_sieve, delimiter_sieve, local_sieve, syntactic_sieve, DelimiterVariant, LocalVariant,
    SyntacticVariant,
};
use proptest::prelude::*;

const LABELS: [&str; 5] = ["nsubj", "dobj", "amod", "advmod", "det"];

#[derive(Debug, Clone)]
struct Case {
    tokens: TokenSequence,
    parse: DependencyParse,
}

/// `[CLS] seg0 [SEP] (seg1 [SEP])`, each word split into 1..=3 pieces,
/// with a random single-root tree over the words.
fn case() -> impl Strategy<Value = Case> {
    (1usize..=12, 0usize..=10, any::<u64>())
        .prop_flat_map(|(n0, n1, salt)| {
            let words = n0 + n1;
            (
                Just((n0, n1, salt)),
                prop::collection::vec(1usize..=3, words),
                prop::collection::vec(any::<prop::sample::Index>(), words),
                prop::collection::vec(0usize..LABELS.len(), words),
                Just((0..words).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
        .prop_map(|((n0, n1, _), pieces, parents, labels, order)| {
            build(n0, n1, &pieces, &parents, &labels, &order)
        })
}

fn build(
    n0: usize,
    n1: usize,
    pieces: &[usize],
    parents: &[prop::sample::Index],
    labels: &[usize],
    order: &[usize],
) -> Case {
    let mut toks = vec!["[CLS]".to_string()];
    let mut flags = vec![SpecialFlag::Cls];
    let mut segs = vec![0u8];
    let mut wids = vec![None];
    for (w, &k) in pieces.iter().enumerate() {
        let seg = u8::from(w >= n0);
        if w == n0 {
            toks.push("[SEP]".into());
            flags.push(SpecialFlag::Sep);
            segs.push(0);
            wids.push(None);
        }
        for p in 0..k {
            toks.push(format!("w{w}p{p}"));
            flags.push(SpecialFlag::None);
            segs.push(seg);
            wids.push(Some(w));
        }
    }
    toks.push("[SEP]".into());
    flags.push(SpecialFlag::Sep);
    segs.push(u8::from(n1 > 0));
    wids.push(None);
    let tokens = TokenSequence::new(toks, flags, segs, wids).unwrap();

    // order[0] is the root; every later word attaches to an earlier one
    let words = pieces.len();
    let mut heads = vec![None; words];
    let mut relations = vec!["root".to_string(); words];
    for i in 1..words {
        let w = order[i];
        heads[w] = Some(order[parents[i].index(i)]);
        relations[w] = LABELS[labels[i]].to_string();
    }
    let parse = DependencyParse::sentence(
        (0..words).map(|w| format!("w{w}")).collect(),
        heads,
        relations,
    )
    .unwrap();
    Case { tokens, parse }
}

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn local_sieves_are_windows(c in case(), window in 1usize..5) {
        let seq = &c.tokens;
        let sym = local_sieve(seq, window, LocalVariant::Symmetric);
        let prev = local_sieve(seq, window, LocalVariant::Prev);
        let next = local_sieve(seq, window, LocalVariant::Next);
        for t in 0..seq.len() {
            let s = sym.targets(t);
            if seq.is_special(t) {
                prop_assert!(s.is_empty() && prev.targets(t).is_empty() && next.targets(t).is_empty());
                continue;
            }
            prop_assert!(s.contains(&t));
            prop_assert!(s.len() <= 2 * window + 1);
            for &p in s {
                prop_assert!(p.abs_diff(t) <= window && !seq.is_special(p));
            }
            prop_assert!(prev.targets(t).iter().all(|&p| p < t));
            prop_assert!(next.targets(t).iter().all(|&p| p > t));
            let mut joined = set(prev.targets(t));
            joined.extend(next.targets(t));
            joined.insert(t);
            prop_assert_eq!(joined, set(s));
        }
    }

    #[test]
    fn local_sieve_is_symmetric(c in case(), window in 1usize..5) {
        let sym = local_sieve(&c.tokens, window, LocalVariant::Symmetric);
        for t in 0..c.tokens.len() {
            for &p in sym.targets(t) {
                prop_assert!(sym.targets(p).contains(&t));
            }
        }
    }

    #[test]
    fn delimiter_sieve_is_the_special_set(c in case()) {
        let seq = &c.tokens;
        let both = delimiter_sieve(seq, DelimiterVariant::Both);
        let cls = delimiter_sieve(seq, DelimiterVariant::Cls);
        let sep = delimiter_sieve(seq, DelimiterVariant::Sep);
        let specials: Vec<usize> = (0..seq.len()).filter(|&p| seq.is_special(p)).collect();
        for t in 0..seq.len() {
            if seq.is_special(t) {
                prop_assert!(both.targets(t).is_empty());
                continue;
            }
            prop_assert_eq!(both.targets(t), specials.as_slice());
            prop_assert_eq!(cls.targets(t), &[0][..]);
            let mut u = set(cls.targets(t));
            u.extend(sep.targets(t));
            prop_assert_eq!(u, set(&specials));
        }
    }

    #[test]
    fn block_sieve_partitions_content(c in case()) {
        let seq = &c.tokens;
        let block = block_sieve(seq);
        for t in 0..seq.len() {
            if seq.is_special(t) {
                prop_assert!(block.targets(t).is_empty());
                continue;
            }
            let expected: Vec<usize> = (0..seq.len())
                .filter(|&p| !seq.is_special(p) && seq.segment_ids[p] == seq.segment_ids[t])
                .collect();
            prop_assert_eq!(block.targets(t), expected.as_slice());
            for &p in block.targets(t) {
                prop_assert_eq!(block.targets(p), block.targets(t));
            }
        }
    }

    #[test]
    fn syntactic_sieves_follow_the_tree(c in case()) {
        let seq = &c.tokens;
        let align = align_wordpieces(seq, &c.parse).unwrap();
        let any = syntactic_sieve(seq, &c.parse, &align, &SyntacticVariant::Any);
        let word_of = |p: usize| seq.word_ids[p];
        for t in 0..seq.len() {
            let Some(w) = word_of(t) else {
                prop_assert!(any.targets(t).is_empty());
                continue;
            };
            // arcs are undirected: a target's word is w's head or one of its children
            for &p in any.targets(t) {
                let v = word_of(p).unwrap();
                prop_assert!(c.parse.heads[w] == Some(v) || c.parse.heads[v] == Some(w));
                prop_assert!(any.targets(p).contains(&t));
            }
            let degree = usize::from(c.parse.heads[w].is_some())
                + c.parse.heads.iter().filter(|&&h| h == Some(w)).count();
            let words: BTreeSet<usize> = any.targets(t).iter().map(|&p| word_of(p).unwrap()).collect();
            prop_assert_eq!(words.len(), degree);
            // every piece of a related word is a target
            for v in &words {
                prop_assert!(align.pieces(*v).iter().all(|p| any.targets(t).contains(p)));
            }
        }

        // labelled sieves are subsets of `any` and together cover it
        let mut covered = vec![BTreeSet::new(); seq.len()];
        for label in LABELS {
            let s = syntactic_sieve(seq, &c.parse, &align, &SyntacticVariant::Label(label.into()));
            for (t, seen) in covered.iter_mut().enumerate() {
                let targets = set(s.targets(t));
                prop_assert!(targets.is_subset(&set(any.targets(t))));
                seen.extend(targets);
            }
        }
        for (t, seen) in covered.iter().enumerate() {
            prop_assert_eq!(seen, &set(any.targets(t)));
        }
    }
}

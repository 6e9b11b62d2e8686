//! Word alignment: a diagonal-prior IBM Model 2 trained by EM, Viterbi
//! decoding, grow-diag-final-and symmetrization, Pharaoh I/O and
//! alignment-count shortlists.

mod gdfa;
mod model;
mod pharaoh;
pub mod prior;

use crate::cooccur::{topk, CooccurTable, ShortlistTable, Statistic};
use crate::corpus::{Bitext, TokenId};
use crate::error::{Error, Result};

pub use gdfa::symmetrize_gdfa;
pub use model::{align_bitext, train_em, viterbi_align, AlignmentModel, Direction, EmConfig, TranslationTable};
pub use pharaoh::{read_pharaoh, write_pharaoh};
pub use prior::diagonal_prior;

/// Links `(source position, target position)` of one sentence pair, 0-based,
/// sorted and without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SentenceAlignment {
    links: Vec<(u32, u32)>,
}

impl SentenceAlignment {
    pub fn new(mut links: Vec<(u32, u32)>) -> Self {
        links.sort_unstable();
        links.dedup();
        SentenceAlignment { links }
    }

    pub fn links(&self) -> &[(u32, u32)] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        self.links.binary_search(&(i, j)).is_ok()
    }

    /// Swaps the roles of the two sides.
    pub fn transposed(&self) -> Self {
        SentenceAlignment::new(self.links.iter().map(|&(i, j)| (j, i)).collect())
    }

    /// Checks every link against the sentence lengths.
    pub fn check_bounds(&self, pair: usize, src_len: usize, tgt_len: usize) -> Result<()> {
        match self
            .links
            .iter()
            .find(|&&(i, j)| i as usize >= src_len || j as usize >= tgt_len)
        {
            Some(&(i, j)) => Err(Error::LinkOutOfRange {
                pair,
                src: i as usize,
                tgt: j as usize,
                src_len,
                tgt_len,
            }),
            None => Ok(()),
        }
    }
}

/// Trains both directions, decodes Viterbi alignments and symmetrizes them.
pub fn align_symmetric(bitext: &Bitext, config: &EmConfig) -> Result<Vec<SentenceAlignment>> {
    let (fwd, _) = train_em(bitext, Direction::SrcToTgt, config)?;
    let (rev, _) = train_em(bitext, Direction::TgtToSrc, config)?;
    let a_fwd = align_bitext(&fwd, bitext);
    let a_rev = align_bitext(&rev, bitext);
    bitext
        .pairs
        .iter()
        .zip(a_fwd.iter().zip(&a_rev))
        .map(|(p, (f, r))| symmetrize_gdfa(f, r, p.src.len(), p.tgt.len()))
        .collect()
}

/// Counts one `(src word, tgt word)` occurrence per alignment link; unknown
/// words are left out.
pub fn count_links(bitext: &Bitext, alignments: &[SentenceAlignment]) -> Result<CooccurTable> {
    if alignments.len() != bitext.len() {
        return Err(Error::LineCountMismatch {
            src: bitext.len(),
            tgt: alignments.len(),
        });
    }
    let (su, tu) = (bitext.src_vocab.unk_id(), bitext.tgt_vocab.unk_id());
    for (k, (p, a)) in bitext.pairs.iter().zip(alignments).enumerate() {
        a.check_bounds(k, p.src.len(), p.tgt.len())?;
    }
    let triples = bitext.pairs.iter().zip(alignments).flat_map(|(p, a)| {
        a.links().iter().filter_map(move |&(i, j)| {
            let (s, t): (TokenId, TokenId) = (p.src[i as usize], p.tgt[j as usize]);
            (s != su && t != tu).then_some((s, t, 1))
        })
    });
    Ok(CooccurTable::from_triples(
        bitext.src_vocab.len(),
        bitext.tgt_vocab.len(),
        triples,
    ))
}

/// Top `k` target words per source word by `count(s, t) / count(s)`.
pub fn topk_aligned(table: &CooccurTable, k: usize) -> ShortlistTable {
    topk(table, k, Statistic::Conditional).with_provenance("word_align")
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{encode, Vocab};

    fn bitext(src: &[&str], tgt: &[&str]) -> Bitext {
        let sv = Arc::new(Vocab::build(src.iter(), 100, "<unk>").unwrap());
        let tv = Arc::new(Vocab::build(tgt.iter(), 100, "<unk>").unwrap());
        encode(src, tgt, sv, tv).unwrap()
    }

    #[test]
    fn link_counts() {
        let b = bitext(&["a b c"], &["x y z"]);
        let id = |s: &str| b.src_vocab.id(s);
        let tid = |s: &str| b.tgt_vocab.id(s);

        let single = count_links(&b, &[SentenceAlignment::new(vec![(0, 0)])]).unwrap();
        assert_eq!(single.grand_total(), 1);
        assert_eq!(single.count(id("a"), tid("x")), 1);

        // a-x, a-y, c-y
        let three = count_links(&b, &[SentenceAlignment::new(vec![(0, 0), (0, 1), (2, 1)])]).unwrap();
        assert_eq!(three.count(id("a"), tid("x")), 1);
        assert_eq!(three.count(id("a"), tid("y")), 1);
        assert_eq!(three.count(id("c"), tid("y")), 1);
        assert_eq!(three.src_marginal(id("a")), 2);
        assert_eq!(three.tgt_marginal(tid("y")), 2);
        assert_eq!(three.grand_total(), 3);

        let empty = count_links(&b, &[SentenceAlignment::default()]).unwrap();
        assert_eq!(empty.grand_total(), 0);
    }

    #[test]
    fn link_counts_reject_out_of_range() {
        let b = bitext(&["a b"], &["x"]);
        let err = count_links(&b, &[SentenceAlignment::new(vec![(0, 1)])]).unwrap_err();
        assert!(matches!(err, Error::LinkOutOfRange { .. }));
    }

    #[test]
    fn aligned_shortlist_never_has_zero_counts() {
        let t = CooccurTable::from_triples(2, 4, [(0, 1, 3), (0, 2, 1), (1, 3, 2)]);
        let sl = topk_aligned(&t, 10);
        assert_eq!(sl.get(0), &[1, 2]);
        assert_eq!(sl.get(1), &[3]);
        assert_eq!(sl.provenance(), "word_align");
    }
}

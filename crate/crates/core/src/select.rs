//! Sentence, batch and training-time vocabulary selection on top of the
//! per-word and per-sentence strategies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::cooccur::ShortlistTable;
use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::phrase::PhraseTable;
use crate::svm::SvmEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Cooccur,
    Pmi,
    Pca,
    WordAlign,
    Phrase,
    Svm,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Cooccur,
        Strategy::Pmi,
        Strategy::Pca,
        Strategy::WordAlign,
        Strategy::Phrase,
        Strategy::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cooccur => "cooccur",
            Strategy::Pmi => "pmi",
            Strategy::Pca => "pca",
            Strategy::WordAlign => "word_align",
            Strategy::Phrase => "phrase",
            Strategy::Svm => "svm",
        }
    }

    /// Strategies backed by a per-source-word shortlist.
    pub fn is_word_level(self) -> bool {
        !matches!(self, Strategy::Phrase | Strategy::Svm)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::param("strategy", format!("unknown strategy `{s}`")))
    }
}

/// Trained data behind a strategy.
#[derive(Debug, Clone)]
pub enum Resource {
    Shortlist(Arc<ShortlistTable>),
    Phrase(Arc<PhraseTable>),
    Svm(Arc<SvmEnsemble>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Common,
    Selected,
    Reference,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Common => "common",
            Origin::Selected => "selected",
            Origin::Reference => "reference",
        }
    }
}

/// A set of target ids sorted ascending; the position of an id is its local index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabSubset {
    ids: Vec<TokenId>,
    origin: Vec<Origin>,
}

impl VocabSubset {
    /// Subset of `ids`, all tagged `origin`.
    pub fn from_ids(mut ids: Vec<TokenId>, origin: Origin) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let origin = vec![origin; ids.len()];
        VocabSubset { ids, origin }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn contains(&self, g: TokenId) -> bool {
        self.ids.binary_search(&g).is_ok()
    }

    pub fn local_of(&self, g: TokenId) -> Option<usize> {
        self.ids.binary_search(&g).ok()
    }

    pub fn global_of(&self, local: usize) -> Option<TokenId> {
        self.ids.get(local).copied()
    }

    pub fn origin(&self, g: TokenId) -> Option<Origin> {
        self.local_of(g).map(|i| self.origin[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, Origin)> + '_ {
        self.ids.iter().copied().zip(self.origin.iter().copied())
    }

    /// Adds `ids`; already present ids keep their tag unless `force` is set.
    fn merge(&mut self, ids: impl IntoIterator<Item = TokenId>, origin: Origin, force: bool) {
        let mut map: FxHashMap<TokenId, Origin> = self.iter().collect();
        for g in ids {
            if force {
                map.insert(g, origin);
            } else {
                map.entry(g).or_insert(origin);
            }
        }
        let mut entries: Vec<(TokenId, Origin)> = map.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);
        self.ids = entries.iter().map(|e| e.0).collect();
        self.origin = entries.iter().map(|e| e.1).collect();
    }

    /// Union; on overlap the tag of `self` is kept.
    pub fn union(&mut self, other: &VocabSubset) {
        if other.is_empty() {
            return;
        }
        let mut ids = Vec::with_capacity(self.len() + other.len());
        let mut origin = Vec::with_capacity(ids.capacity());
        let (mut i, mut j) = (0, 0);
        while i < self.ids.len() || j < other.ids.len() {
            let take_self = j == other.ids.len() || (i < self.ids.len() && self.ids[i] <= other.ids[j]);
            if take_self {
                if j < other.ids.len() && self.ids[i] == other.ids[j] {
                    j += 1;
                }
                ids.push(self.ids[i]);
                origin.push(self.origin[i]);
                i += 1;
            } else {
                ids.push(other.ids[j]);
                origin.push(other.origin[j]);
                j += 1;
            }
        }
        self.ids = ids;
        self.origin = origin;
    }

    /// Gather list for an output layer and the inverse map.
    pub fn remap(&self) -> (Vec<TokenId>, FxHashMap<TokenId, usize>) {
        let local = self.ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        (self.ids.clone(), local)
    }
}

/// Unions in the `n` most frequent target words (ids `0..n`), tagged common.
/// `n` is capped at the number of in-vocabulary words.
pub fn add_common(subset: &mut VocabSubset, tgt_vocab: &Vocab, n: usize) {
    let n = n.min(tgt_vocab.len().saturating_sub(1));
    subset.merge(0..n as TokenId, Origin::Common, true);
}

/// Immutable selector for one strategy configuration.
#[derive(Debug, Clone)]
pub struct Selector {
    strategy: Strategy,
    k: usize,
    common_n: usize,
    resource: Resource,
    src_unk: TokenId,
    tgt_vocab: Arc<Vocab>,
}

impl Selector {
    /// `k` bounds the shortlist length for word-level strategies and the
    /// number of target phrases per source n-gram for `phrase`; it is unused
    /// by `svm`.
    pub fn new(
        strategy: Strategy,
        k: usize,
        common_n: usize,
        resource: Resource,
        src_unk: TokenId,
        tgt_vocab: Arc<Vocab>,
    ) -> Result<Self> {
        let ok = match (&resource, strategy) {
            (Resource::Shortlist(_), s) => s.is_word_level(),
            (Resource::Phrase(_), s) => s == Strategy::Phrase,
            (Resource::Svm(_), s) => s == Strategy::Svm,
        };
        if !ok {
            return Err(Error::param(
                "strategy",
                format!("resource does not match strategy `{strategy}`"),
            ));
        }
        Ok(Selector {
            strategy,
            k,
            common_n,
            resource,
            src_unk,
            tgt_vocab,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn common_n(&self) -> usize {
        self.common_n
    }

    pub fn tgt_vocab(&self) -> &Arc<Vocab> {
        &self.tgt_vocab
    }

    /// Same resources with different `k` and `common_n`.
    pub fn with_params(&self, k: usize, common_n: usize) -> Selector {
        Selector {
            k,
            common_n,
            ..self.clone()
        }
    }

    /// Shortlist of one source word, at most `k` ids; empty for sentence-level strategies.
    pub fn select_word(&self, s: TokenId) -> Vec<TokenId> {
        let tgt_unk = self.tgt_vocab.unk_id();
        match &self.resource {
            Resource::Shortlist(table) if s != self.src_unk => table
                .get(s)
                .iter()
                .copied()
                .filter(|&t| t != tgt_unk)
                .take(self.k)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Strategy output for one sentence, before common words.
    fn raw_sentence(&self, src: &[TokenId]) -> Vec<TokenId> {
        let tgt_unk = self.tgt_vocab.unk_id();
        let mut ids = match &self.resource {
            Resource::Shortlist(_) => src.iter().flat_map(|&s| self.select_word(s)).collect(),
            Resource::Phrase(table) => table.select(src, self.k),
            Resource::Svm(ens) => ens.select(src, self.src_unk),
        };
        ids.retain(|&t| t != tgt_unk);
        ids
    }

    pub fn select_sentence(&self, src: &[TokenId]) -> VocabSubset {
        let mut subset = VocabSubset::from_ids(self.raw_sentence(src), Origin::Selected);
        add_common(&mut subset, &self.tgt_vocab, self.common_n);
        subset
    }

    pub fn select_batch<S: AsRef<[TokenId]>>(&self, batch: &[S]) -> VocabSubset {
        let ids = batch.iter().flat_map(|s| self.raw_sentence(s.as_ref())).collect();
        let mut subset = VocabSubset::from_ids(ids, Origin::Selected);
        add_common(&mut subset, &self.tgt_vocab, self.common_n);
        subset
    }

    /// Batch selection plus every in-vocabulary reference token; also returns
    /// the number of unknown reference tokens, which cannot be added.
    pub fn select_training<S: AsRef<[TokenId]>, R: AsRef<[TokenId]>>(
        &self,
        batch: &[S],
        references: &[R],
    ) -> Result<(VocabSubset, usize)> {
        if batch.len() != references.len() {
            return Err(Error::LineCountMismatch {
                src: batch.len(),
                tgt: references.len(),
            });
        }
        let mut subset = self.select_batch(batch);
        let unk = self.tgt_vocab.unk_id();
        let mut oov = 0;
        let mut refs = Vec::new();
        for r in references {
            for &t in r.as_ref() {
                if t == unk || t as usize >= self.tgt_vocab.len() {
                    oov += 1;
                } else {
                    refs.push(t);
                }
            }
        }
        subset.merge(refs, Origin::Reference, false);
        Ok((subset, oov))
    }
}

/// One line per subset: space-separated target tokens in id order.
pub fn write_selection<W: Write>(mut w: W, subsets: &[VocabSubset], tgt: &Vocab) -> Result<()> {
    for s in subsets {
        let toks: Vec<&str> = s.ids().iter().map(|&t| tgt.token(t)).collect();
        writeln!(w, "{}", toks.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    use super::*;

    fn vocab(n: usize) -> Arc<Vocab> {
        let tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).chain(["<unk>".to_string()]).collect();
        let freq = (0..=n as u64).rev().collect();
        Arc::new(Vocab::from_parts(tokens, freq).unwrap())
    }

    fn shortlist_selector(lists: Vec<Vec<TokenId>>, k: usize, common: usize, v: usize) -> Selector {
        let n_src = lists.len();
        let table = ShortlistTable::new(lists, k.max(1), "cooccur");
        Selector::new(
            Strategy::Cooccur,
            k,
            common,
            Resource::Shortlist(Arc::new(table)),
            n_src as TokenId,
            vocab(v),
        )
        .unwrap()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn resource_must_match() {
        let table = Arc::new(ShortlistTable::new(vec![], 1, "x"));
        assert!(Selector::new(Strategy::Svm, 1, 0, Resource::Shortlist(table), 0, vocab(3)).is_err());
    }

    #[test]
    fn word_level_lookup() {
        let sel = shortlist_selector(vec![vec![3, 1, 4], vec![2]], 2, 0, 10);
        assert_eq!(sel.select_word(0), vec![3, 1]);
        assert_eq!(sel.select_word(1), vec![2]);
        assert!(sel.select_word(7).is_empty());
        assert!(sel.select_word(2).is_empty(), "source unk");
        assert!(sel.with_params(0, 0).select_word(0).is_empty());
    }

    #[test]
    fn sentence_union_oracle() {
        let lists = vec![vec![5, 6], vec![6, 7, 8], vec![9]];
        let sel = shortlist_selector(lists.clone(), 10, 2, 20);
        let sentence = [0, 1, 2, 1];
        let mut oracle = BTreeSet::new();
        for &s in &sentence {
            oracle.extend(lists[s as usize].iter().copied());
        }
        oracle.extend([0, 1]);
        let got = sel.select_sentence(&sentence);
        assert_eq!(got.ids(), oracle.into_iter().collect::<Vec<_>>());
        assert_eq!(got.origin(0), Some(Origin::Common));
        assert_eq!(got.origin(7), Some(Origin::Selected));

        let one = sel.select_sentence(&[2]);
        assert_eq!(one.ids(), &[0, 1, 9]);
    }

    #[test]
    fn batch_and_training() {
        let sel = shortlist_selector(vec![vec![5], vec![6], vec![7]], 10, 0, 20);
        let batch = [vec![0], vec![1]];
        assert_eq!(sel.select_batch(&batch).ids(), &[5, 6]);
        assert_eq!(sel.select_batch(&batch[..1]), sel.select_sentence(&batch[0]));

        let unk = sel.tgt_vocab().unk_id();
        let refs = [vec![5, 11], vec![unk, 12, 5]];
        let (sub, oov) = sel.select_training(&batch, &refs).unwrap();
        assert_eq!(sub.ids(), &[5, 6, 11, 12]);
        assert_eq!(sub.origin(5), Some(Origin::Selected));
        assert_eq!(sub.origin(11), Some(Origin::Reference));
        assert_eq!(oov, 1);
        assert!(sel.select_training(&batch, &refs[..1]).is_err());
    }

    #[test]
    fn common_words() {
        let v = vocab(1000);
        let mut s = VocabSubset::from_ids(vec![3, 500, 999], Origin::Selected);
        add_common(&mut s, &v, 0);
        assert_eq!(s.len(), 3);
        let before: BTreeSet<_> = s.ids().iter().copied().collect();
        let mut t = s.clone();
        add_common(&mut t, &v, 600);
        let added: BTreeSet<_> = t
            .ids()
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .difference(&before)
            .copied()
            .collect();
        let expect: BTreeSet<_> = (0..600).filter(|i| !before.contains(i)).collect();
        assert_eq!(added, expect);
        add_common(&mut t, &v, 5000);
        assert_eq!(t.len(), 1000);
        assert!(!t.contains(v.unk_id()));
    }

    #[test]
    fn remap_bijection() {
        let s = VocabSubset::from_ids(vec![42], Origin::Selected);
        let (g, l) = s.remap();
        assert_eq!(g, vec![42]);
        assert_eq!(l[&42], 0);
    }

    proptest! {
        #[test]
        fn remap_is_a_bijection(ids in prop::collection::vec(0u32..500, 0..60)) {
            let s = VocabSubset::from_ids(ids, Origin::Selected);
            let (gather, local) = s.remap();
            prop_assert_eq!(local.len(), gather.len());
            for (i, &g) in gather.iter().enumerate() {
                prop_assert_eq!(local[&g], i);
                prop_assert_eq!(s.global_of(i), Some(g));
                prop_assert_eq!(s.local_of(g), Some(i));
            }
            prop_assert!(gather.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn union_matches_set_union(a in prop::collection::vec(0u32..50, 0..30), b in prop::collection::vec(0u32..50, 0..30)) {
            let mut x = VocabSubset::from_ids(a.clone(), Origin::Selected);
            x.union(&VocabSubset::from_ids(b.clone(), Origin::Reference));
            let oracle: BTreeSet<u32> = a.iter().chain(&b).copied().collect();
            prop_assert_eq!(x.ids(), oracle.iter().copied().collect::<Vec<_>>());
            for &g in &a {
                prop_assert_eq!(x.origin(g), Some(Origin::Selected));
            }
        }
    }
}

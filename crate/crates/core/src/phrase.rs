//! Phrase pairs consistent with word alignments, and phrase-based target
//! vocabulary selection.

use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;

use crate::align::SentenceAlignment;
use crate::corpus::{Bitext, TokenId, Vocab};
use crate::error::{Error, Result};

/// A phrase pair as half-open position ranges of one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhraseSpan {
    pub src_start: usize,
    pub src_end: usize,
    pub tgt_start: usize,
    pub tgt_end: usize,
}

/// Enumerates all phrase pairs consistent with `alignment`.
///
/// A pair of spans is consistent when at least one link lies inside the
/// rectangle and no link connects a word inside one span to a word outside
/// the other. Target spans are extended over adjacent unaligned target words.
/// Both spans are at most `max_len` words long.
pub fn extract_spans(alignment: &SentenceAlignment, src_len: usize, tgt_len: usize, max_len: usize) -> Vec<PhraseSpan> {
    let mut tgt_aligned = vec![false; tgt_len];
    for &(_, j) in alignment.links() {
        tgt_aligned[j as usize] = true;
    }
    let links = alignment.links();
    let mut out = Vec::new();
    for s1 in 0..src_len {
        for s2 in s1..src_len.min(s1 + max_len) {
            let mut tmin = usize::MAX;
            let mut tmax = 0;
            for &(i, j) in links {
                let (i, j) = (i as usize, j as usize);
                if (s1..=s2).contains(&i) {
                    tmin = tmin.min(j);
                    tmax = tmax.max(j);
                }
            }
            if tmin == usize::MAX || tmax - tmin + 1 > max_len {
                continue;
            }
            let consistent = links.iter().all(|&(i, j)| {
                let (i, j) = (i as usize, j as usize);
                !(tmin..=tmax).contains(&j) || (s1..=s2).contains(&i)
            });
            if !consistent {
                continue;
            }
            let mut t1 = tmin;
            loop {
                let mut t2 = tmax;
                while t2 - t1 < max_len {
                    out.push(PhraseSpan {
                        src_start: s1,
                        src_end: s2 + 1,
                        tgt_start: t1,
                        tgt_end: t2 + 1,
                    });
                    if t2 + 1 < tgt_len && !tgt_aligned[t2 + 1] {
                        t2 += 1;
                    } else {
                        break;
                    }
                }
                if t1 > 0 && !tgt_aligned[t1 - 1] && tmax - (t1 - 1) < max_len {
                    t1 -= 1;
                } else {
                    break;
                }
            }
        }
    }
    out
}

type Phrase = Box<[TokenId]>;

/// Source n-gram to `(target n-gram, count)` entries, each list ordered by
/// descending count then target n-gram.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTable {
    entries: FxHashMap<Phrase, Vec<(Phrase, u64)>>,
    max_len: usize,
    min_count: u64,
}

impl PhraseTable {
    fn from_counts(counts: FxHashMap<(Phrase, Phrase), u64>, max_len: usize, min_count: u64) -> Self {
        let mut entries: FxHashMap<Phrase, Vec<(Phrase, u64)>> = FxHashMap::default();
        for ((src, tgt), c) in counts {
            entries.entry(src).or_default().push((tgt, c));
        }
        for list in entries.values_mut() {
            list.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        }
        PhraseTable {
            entries,
            max_len,
            min_count,
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Number of source phrases.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of `(source, target)` entries.
    pub fn n_pairs(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn targets(&self, src: &[TokenId]) -> &[(Phrase, u64)] {
        self.entries.get(src).map_or(&[], Vec::as_slice)
    }

    /// Drops entries seen fewer than `min_count` times.
    pub fn prune(&self, min_count: u64) -> Result<PhraseTable> {
        if min_count == 0 {
            return Err(Error::param("min_count", "must be at least 1"));
        }
        let mut entries = FxHashMap::default();
        for (src, list) in &self.entries {
            let kept: Vec<_> = list.iter().filter(|(_, c)| *c >= min_count).cloned().collect();
            if !kept.is_empty() {
                entries.insert(src.clone(), kept);
            }
        }
        Ok(PhraseTable {
            entries,
            max_len: self.max_len,
            min_count: min_count.max(self.min_count),
        })
    }

    /// Union of the target tokens of the `per_phrase` most frequent target
    /// phrases of every source n-gram of `src_sentence`.
    pub fn select(&self, src_sentence: &[TokenId], per_phrase: usize) -> Vec<TokenId> {
        let mut out = Vec::new();
        for start in 0..src_sentence.len() {
            for end in start + 1..=src_sentence.len().min(start + self.max_len) {
                for (tgt, _) in self.targets(&src_sentence[start..end]).iter().take(per_phrase) {
                    out.extend_from_slice(tgt);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn sorted_entries(&self) -> Vec<(&Phrase, &Vec<(Phrase, u64)>)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Writes `src tokens ||| tgt tokens ||| count` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W, src: &Vocab, tgt: &Vocab) -> Result<()> {
        for (sp, list) in self.sorted_entries() {
            let s = src.decode(sp);
            for (tp, c) in list {
                writeln!(w, "{s} ||| {} ||| {c}", tgt.decode(tp))?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, src: &Vocab, tgt: &Vocab) -> Result<PhraseTable> {
        let mut counts: FxHashMap<(Phrase, Phrase), u64> = FxHashMap::default();
        let mut max_len = 1;
        let mut min_count = u64::MAX;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::Malformed {
                line: lineno + 1,
                reason: reason.into(),
            };
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            let [s, t, c] = fields[..] else {
                return Err(malformed("expected `src ||| tgt ||| count`"));
            };
            let sp: Phrase = src.encode(s).into();
            let tp: Phrase = tgt.encode(t).into();
            if sp.is_empty() || tp.is_empty() {
                return Err(malformed("empty phrase"));
            }
            let c: u64 = c.parse().map_err(|_| malformed("invalid count"))?;
            max_len = max_len.max(sp.len()).max(tp.len());
            min_count = min_count.min(c);
            *counts.entry((sp, tp)).or_insert(0) += c;
        }
        if min_count == u64::MAX {
            min_count = 1;
        }
        Ok(Self::from_counts(counts, max_len, min_count))
    }
}

fn count_shard(
    bitext: &Bitext,
    alignments: &[SentenceAlignment],
    range: std::ops::Range<usize>,
    max_len: usize,
) -> FxHashMap<(Phrase, Phrase), u64> {
    let mut counts = FxHashMap::default();
    for k in range {
        let (p, a) = (&bitext.pairs[k], &alignments[k]);
        for span in extract_spans(a, p.src.len(), p.tgt.len(), max_len) {
            let key: (Phrase, Phrase) = (
                p.src[span.src_start..span.src_end].into(),
                p.tgt[span.tgt_start..span.tgt_end].into(),
            );
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Builds a phrase table from one (symmetrized) alignment per sentence pair.
pub fn extract_phrases(
    bitext: &Bitext,
    alignments: &[SentenceAlignment],
    max_len: usize,
    threads: usize,
) -> Result<PhraseTable> {
    if max_len == 0 {
        return Err(Error::param("max_len", "must be at least 1"));
    }
    if alignments.len() != bitext.len() {
        return Err(Error::LineCountMismatch {
            src: bitext.len(),
            tgt: alignments.len(),
        });
    }
    for (k, (p, a)) in bitext.pairs.iter().zip(alignments).enumerate() {
        a.check_bounds(k, p.src.len(), p.tgt.len())?;
    }
    let threads = threads.max(1);
    let counts = if threads == 1 || bitext.len() < 2 * threads {
        count_shard(bitext, alignments, 0..bitext.len(), max_len)
    } else {
        let chunk = bitext.len().div_ceil(threads);
        let shards: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..bitext.len())
                .step_by(chunk)
                .map(|a| {
                    let b = (a + chunk).min(bitext.len());
                    scope.spawn(move || count_shard(bitext, alignments, a..b, max_len))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("extraction shard panicked"))
                .collect()
        });
        let mut merged = FxHashMap::default();
        for shard in shards {
            for (key, c) in shard {
                *merged.entry(key).or_insert(0) += c;
            }
        }
        merged
    };
    Ok(PhraseTable::from_counts(counts, max_len, 1))
}

//! Sparse bilingual co-occurrence statistics and per-source-word shortlists.

use std::cmp::Ordering;
use std::io::{BufRead, Read, Write};

use rustc_hash::FxHashMap;

use crate::binio;
use crate::corpus::{Bitext, SentencePair, TokenId, Vocab};
use crate::error::{Error, Result};

const TABLE_MAGIC: &[u8; 8] = b"VSCOOC01";

/// Sparse joint counts `c(s, t)` with row/column marginals.
///
/// Rows are indexed by source id and hold `(target id, count)` sorted by
/// target id. The same structure stores alignment-link counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurTable {
    n_src: usize,
    n_tgt: usize,
    rows: Vec<Vec<(TokenId, u64)>>,
    src_marginal: Vec<u64>,
    tgt_marginal: Vec<u64>,
    grand_total: u64,
}

impl CooccurTable {
    /// Builds a table from `(source, target, count)` triples; duplicate keys are summed.
    pub fn from_triples<I>(n_src: usize, n_tgt: usize, triples: I) -> Self
    where
        I: IntoIterator<Item = (TokenId, TokenId, u64)>,
    {
        let mut map: FxHashMap<(TokenId, TokenId), u64> = FxHashMap::default();
        for (s, t, c) in triples {
            if c > 0 {
                *map.entry((s, t)).or_insert(0) += c;
            }
        }
        Self::from_map(n_src, n_tgt, map)
    }

    fn from_map(n_src: usize, n_tgt: usize, map: FxHashMap<(TokenId, TokenId), u64>) -> Self {
        let mut rows: Vec<Vec<(TokenId, u64)>> = vec![Vec::new(); n_src];
        for ((s, t), c) in map {
            rows[s as usize].push((t, c));
        }
        let mut src_marginal = vec![0u64; n_src];
        let mut tgt_marginal = vec![0u64; n_tgt];
        let mut grand_total = 0u64;
        for (s, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(t, _)| t);
            for &(t, c) in row.iter() {
                src_marginal[s] += c;
                tgt_marginal[t as usize] += c;
                grand_total += c;
            }
        }
        CooccurTable {
            n_src,
            n_tgt,
            rows,
            src_marginal,
            tgt_marginal,
            grand_total,
        }
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_tgt(&self) -> usize {
        self.n_tgt
    }

    pub fn row(&self, s: TokenId) -> &[(TokenId, u64)] {
        self.rows.get(s as usize).map_or(&[], Vec::as_slice)
    }

    pub fn count(&self, s: TokenId, t: TokenId) -> u64 {
        let row = self.row(s);
        row.binary_search_by_key(&t, |&(id, _)| id).map_or(0, |i| row[i].1)
    }

    pub fn src_marginal(&self, s: TokenId) -> u64 {
        self.src_marginal.get(s as usize).copied().unwrap_or(0)
    }

    pub fn tgt_marginal(&self, t: TokenId) -> u64 {
        self.tgt_marginal.get(t as usize).copied().unwrap_or(0)
    }

    pub fn grand_total(&self) -> u64 {
        self.grand_total
    }

    /// Number of stored non-zero cells.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Iterates over all non-zero cells in (source, target) order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, TokenId, u64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |&(t, c)| (s as TokenId, t, c)))
    }

    /// Estimate of `P(s, t)`; zero for unseen pairs or an empty table.
    pub fn joint_prob(&self, s: TokenId, t: TokenId) -> f64 {
        if self.grand_total == 0 {
            return 0.0;
        }
        self.count(s, t) as f64 / self.grand_total as f64
    }

    /// Estimate of `P(t | s)` from the row marginal.
    pub fn conditional(&self, s: TokenId, t: TokenId) -> f64 {
        match self.src_marginal(s) {
            0 => 0.0,
            m => self.count(s, t) as f64 / m as f64,
        }
    }

    /// `P(s,t) / (P(s) P(t))`, or `None` when the pair is unseen or the target
    /// marginal falls below `floor`.
    pub fn pmi(&self, s: TokenId, t: TokenId, floor: u64) -> Option<f64> {
        pmi_score(
            self.count(s, t),
            self.src_marginal(s),
            self.tgt_marginal(t),
            self.grand_total,
            floor,
        )
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_magic(&mut w, TABLE_MAGIC)?;
        binio::write_u64(&mut w, self.n_src as u64)?;
        binio::write_u64(&mut w, self.n_tgt as u64)?;
        binio::write_u64(&mut w, self.nnz() as u64)?;
        for (s, t, c) in self.iter() {
            binio::write_u32(&mut w, s)?;
            binio::write_u32(&mut w, t)?;
            binio::write_u64(&mut w, c)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        binio::read_magic(&mut r, TABLE_MAGIC)?;
        let n_src = binio::read_len(&mut r)?;
        let n_tgt = binio::read_len(&mut r)?;
        let nnz = binio::read_len(&mut r)?;
        let mut triples = Vec::with_capacity(nnz.min(1 << 24));
        for _ in 0..nnz {
            let s = binio::read_u32(&mut r)?;
            let t = binio::read_u32(&mut r)?;
            let c = binio::read_u64(&mut r)?;
            if s as usize >= n_src || t as usize >= n_tgt {
                return Err(Error::Format(format!("cell ({s}, {t}) outside table")));
            }
            triples.push((s, t, c));
        }
        Ok(Self::from_triples(n_src, n_tgt, triples))
    }

    /// Writes `src_token<TAB>tgt_token<TAB>count` rows.
    pub fn write_tsv<W: Write>(&self, mut w: W, src: &Vocab, tgt: &Vocab) -> Result<()> {
        for (s, t, c) in self.iter() {
            writeln!(w, "{}\t{}\t{c}", src.token(s), tgt.token(t))?;
        }
        Ok(())
    }
}

fn pmi_score(count: u64, src_marg: u64, tgt_marg: u64, total: u64, floor: u64) -> Option<f64> {
    if count == 0 || src_marg == 0 || tgt_marg == 0 || tgt_marg < floor {
        return None;
    }
    Some(count as f64 * total as f64 / (src_marg as f64 * tgt_marg as f64))
}

fn count_shard(pairs: &[SentencePair], src_unk: TokenId, tgt_unk: TokenId) -> FxHashMap<(TokenId, TokenId), u64> {
    let mut map = FxHashMap::default();
    for pair in pairs {
        for &s in pair.src.iter().filter(|&&s| s != src_unk) {
            for &t in pair.tgt.iter().filter(|&&t| t != tgt_unk) {
                *map.entry((s, t)).or_insert(0) += 1;
            }
        }
    }
    map
}

/// Counts every (source position, target position) pair of every sentence
/// pair; unknown words are left out.
pub fn count_cooccurrences(bitext: &Bitext, threads: usize) -> CooccurTable {
    let (n_src, n_tgt) = (bitext.src_vocab.len(), bitext.tgt_vocab.len());
    let (su, tu) = (bitext.src_vocab.unk_id(), bitext.tgt_vocab.unk_id());
    let threads = threads.max(1);
    if threads == 1 || bitext.len() < 2 * threads {
        return CooccurTable::from_map(n_src, n_tgt, count_shard(&bitext.pairs, su, tu));
    }
    let chunk = bitext.len().div_ceil(threads);
    let shards: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = bitext
            .pairs
            .chunks(chunk)
            .map(|c| scope.spawn(move || count_shard(c, su, tu)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("counting shard panicked"))
            .collect()
    });
    let mut merged = FxHashMap::default();
    for shard in shards {
        for (k, c) in shard {
            *merged.entry(k).or_insert(0) += c;
        }
    }
    CooccurTable::from_map(n_src, n_tgt, merged)
}

/// Ranking statistic for [`topk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    /// `P(s, t)`.
    Joint,
    /// Point-wise mutual information with a minimum target marginal.
    Pmi { floor: u64 },
    /// `P(t | s)`, used for alignment-link counts.
    Conditional,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Joint => "joint",
            Statistic::Pmi { .. } => "pmi",
            Statistic::Conditional => "conditional",
        }
    }

    fn score(&self, table: &CooccurTable, s: TokenId, t: TokenId, count: u64) -> Option<f64> {
        match *self {
            Statistic::Joint => Some(count as f64 / table.grand_total as f64),
            Statistic::Pmi { floor } => pmi_score(
                count,
                table.src_marginal(s),
                table.tgt_marginal(t),
                table.grand_total,
                floor,
            ),
            Statistic::Conditional => Some(count as f64 / table.src_marginal(s) as f64),
        }
    }
}

/// Orders `(id, score)` by descending score, then ascending id.
pub(crate) fn by_score_desc(a: &(TokenId, f64), b: &(TokenId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Per-source-word ordered lists of up to `k` target words.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortlistTable {
    lists: Vec<Vec<TokenId>>,
    k: usize,
    provenance: String,
}

impl ShortlistTable {
    pub fn new(lists: Vec<Vec<TokenId>>, k: usize, provenance: impl Into<String>) -> Self {
        ShortlistTable {
            lists,
            k,
            provenance: provenance.into(),
        }
    }

    /// Shortlist for source word `s`; empty for unknown words.
    pub fn get(&self, s: TokenId) -> &[TokenId] {
        self.lists.get(s as usize).map_or(&[], Vec::as_slice)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_src(&self) -> usize {
        self.lists.len()
    }

    /// Keeps the first `k` entries of every list.
    pub fn truncated(&self, k: usize) -> ShortlistTable {
        ShortlistTable {
            lists: self.lists.iter().map(|l| l[..l.len().min(k)].to_vec()).collect(),
            k: k.min(self.k),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `src_token<TAB>t1 t2 ... tk` for every non-empty list.
    pub fn write_tsv<W: Write>(&self, mut w: W, src: &Vocab, tgt: &Vocab) -> Result<()> {
        for (s, list) in self.lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            write!(w, "{}\t", src.token(s as TokenId))?;
            for (i, &t) in list.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                w.write_all(tgt.token(t).as_bytes())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, src: &Vocab, tgt: &Vocab, provenance: &str) -> Result<Self> {
        let mut lists = vec![Vec::new(); src.len()];
        let mut k = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::Malformed {
                line: lineno + 1,
                reason,
            };
            let (s_tok, rest) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `source<TAB>targets`".into()))?;
            let s = src
                .get(s_tok)
                .ok_or_else(|| malformed(format!("unknown source token `{s_tok}`")))?;
            let list: Vec<TokenId> = rest
                .split_whitespace()
                .map(|t| {
                    tgt.get(t)
                        .ok_or_else(|| malformed(format!("unknown target token `{t}`")))
                })
                .collect::<Result<_>>()?;
            k = k.max(list.len());
            lists[s as usize] = list;
        }
        Ok(ShortlistTable::new(lists, k, provenance))
    }
}

/// The `k` highest-scoring target words of every source word; ties go to the
/// lower target id.
pub fn topk(table: &CooccurTable, k: usize, statistic: Statistic) -> ShortlistTable {
    let lists = (0..table.n_src)
        .map(|s| {
            let s = s as TokenId;
            let mut scored: Vec<(TokenId, f64)> = table
                .row(s)
                .iter()
                .filter_map(|&(t, c)| statistic.score(table, s, t, c).map(|v| (t, v)))
                .collect();
            scored.sort_unstable_by(by_score_desc);
            scored.truncate(k);
            scored.into_iter().map(|(t, _)| t).collect()
        })
        .collect();
    ShortlistTable::new(lists, k, statistic.name())
}

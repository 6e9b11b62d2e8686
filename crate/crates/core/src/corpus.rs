//! Parallel corpus ingestion: vocabularies, encoding, length filtering and
//! bucket batching.
//!
//! Input text is expected to be tokenized already; tokens are separated by
//! whitespace and sentences by newlines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// Integer id of a token within one side's [`Vocab`].
pub type TokenId = u32;

/// Frequency-ranked token/id mapping for one language side.
///
/// Ids `0..len()-1` hold the real tokens by non-increasing frequency (ties
/// broken lexicographically); the last id is the unknown-word symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    id_of: FxHashMap<String, TokenId>,
    freq: Vec<u64>,
    unk_id: TokenId,
}

impl Vocab {
    /// Builds a vocabulary of the `max_size` most frequent tokens plus `unk`.
    pub fn build<I, S>(lines: I, max_size: usize, unk: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size == 0 {
            return Err(Error::param("max_size", "must be at least 1"));
        }
        let mut counts: FxHashMap<String, u64> = FxHashMap::default();
        let mut total = 0u64;
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                *counts.entry(tok.to_owned()).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        // The unk symbol is never ranked as a regular token.
        let unk_seen = counts.remove(unk).unwrap_or(0);

        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let dropped: u64 = ranked.iter().skip(max_size).map(|(_, c)| c).sum();
        ranked.truncate(max_size);

        let mut tokens = Vec::with_capacity(ranked.len() + 1);
        let mut freq = Vec::with_capacity(ranked.len() + 1);
        for (tok, c) in ranked {
            tokens.push(tok);
            freq.push(c);
        }
        tokens.push(unk.to_owned());
        freq.push(dropped + unk_seen);
        Self::from_parts(tokens, freq)
    }

    /// Assembles a vocabulary from already-ranked tokens; the last token is unk.
    pub fn from_parts(tokens: Vec<String>, freq: Vec<u64>) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != freq.len() {
            return Err(Error::Format("vocabulary needs at least the unk entry".into()));
        }
        let mut id_of = FxHashMap::default();
        id_of.reserve(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if id_of.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate token `{t}`")));
            }
        }
        let unk_id = (tokens.len() - 1) as TokenId;
        Ok(Vocab {
            tokens,
            id_of,
            freq,
            unk_id,
        })
    }

    /// Number of entries, including unk.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    /// Id of `token`, or the unk id for out-of-vocabulary tokens.
    pub fn id(&self, token: &str) -> TokenId {
        self.id_of.get(token).copied().unwrap_or(self.unk_id)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn freq(&self, id: TokenId) -> u64 {
        self.freq[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, line: &str) -> Vec<TokenId> {
        line.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id));
        }
        out
    }

    /// Writes `rank<TAB>token<TAB>frequency` rows, rank ascending.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (rank, (tok, f)) in self.tokens.iter().zip(&self.freq).enumerate() {
            writeln!(w, "{rank}\t{tok}\t{f}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut freq = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(rank), Some(tok), Some(f), None) = (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    reason: "expected 3 tab-separated fields".into(),
                });
            };
            let bad = |what: &str| Error::Malformed {
                line: lineno + 1,
                reason: format!("invalid {what}"),
            };
            let rank: usize = rank.parse().map_err(|_| bad("rank"))?;
            if rank != tokens.len() {
                return Err(bad("rank (ranks must be contiguous from 0)"));
            }
            tokens.push(tok.to_owned());
            freq.push(f.parse().map_err(|_| bad("frequency"))?);
        }
        Self::from_parts(tokens, freq)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_tsv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_tsv(BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub src: Vec<TokenId>,
    pub tgt: Vec<TokenId>,
}

/// A sentence-aligned parallel corpus encoded against two vocabularies.
#[derive(Debug, Clone)]
pub struct Bitext {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Arc<Vocab>,
    pub tgt_vocab: Arc<Vocab>,
}

impl Bitext {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same corpus with the roles of source and target exchanged.
    pub fn reversed(&self) -> Bitext {
        Bitext {
            pairs: self
                .pairs
                .iter()
                .map(|p| SentencePair {
                    src: p.tgt.clone(),
                    tgt: p.src.clone(),
                })
                .collect(),
            src_vocab: Arc::clone(&self.tgt_vocab),
            tgt_vocab: Arc::clone(&self.src_vocab),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Bitext {
        Bitext {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            src_vocab: Arc::clone(&self.src_vocab),
            tgt_vocab: Arc::clone(&self.tgt_vocab),
        }
    }

    /// Shuffles with `seed` and splits off `ceil(fraction * len)` pairs as held-out data.
    pub fn holdout_split(&self, fraction: f64, seed: u64) -> Result<(Bitext, Bitext)> {
        let (train, dev) = holdout_indices(self.len(), fraction, seed)?;
        Ok((self.select(&train), self.select(&dev)))
    }
}

/// Indices `(train, held_out)` of a seeded shuffle of `0..len` with
/// `ceil(fraction * len)` held-out items.
pub fn holdout_indices(len: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::param("fraction", "must be in [0, 1)"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = (fraction * len as f64).ceil() as usize;
    let train = order.split_off(n_dev);
    Ok((train, order))
}

/// Encodes parallel lines into a [`Bitext`]; out-of-vocabulary tokens become unk.
pub fn encode<S: AsRef<str>, T: AsRef<str>>(
    lines_src: &[S],
    lines_tgt: &[T],
    src_vocab: Arc<Vocab>,
    tgt_vocab: Arc<Vocab>,
) -> Result<Bitext> {
    if lines_src.len() != lines_tgt.len() {
        return Err(Error::LineCountMismatch {
            src: lines_src.len(),
            tgt: lines_tgt.len(),
        });
    }
    let mut pairs = Vec::with_capacity(lines_src.len());
    for (i, (s, t)) in lines_src.iter().zip(lines_tgt).enumerate() {
        let src = src_vocab.encode(s.as_ref());
        let tgt = tgt_vocab.encode(t.as_ref());
        if src.is_empty() {
            return Err(Error::EmptySentence {
                side: "source",
                line: i + 1,
            });
        }
        if tgt.is_empty() {
            return Err(Error::EmptySentence {
                side: "target",
                line: i + 1,
            });
        }
        pairs.push(SentencePair { src, tgt });
    }
    Ok(Bitext {
        pairs,
        src_vocab,
        tgt_vocab,
    })
}

/// Reads a UTF-8 text file into lines.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let r = BufReader::new(File::open(path)?);
    Ok(r.lines().collect::<std::io::Result<_>>()?)
}

/// Keeps pairs whose source and target both have at most `max_len` tokens.
pub fn filter_by_length(bitext: &Bitext, max_len: usize) -> Result<Bitext> {
    if max_len == 0 {
        return Err(Error::param("max_len", "must be at least 1"));
    }
    Ok(Bitext {
        pairs: bitext
            .pairs
            .iter()
            .filter(|p| p.src.len() <= max_len && p.tgt.len() <= max_len)
            .cloned()
            .collect(),
        src_vocab: Arc::clone(&bitext.src_vocab),
        tgt_vocab: Arc::clone(&bitext.tgt_vocab),
    })
}

/// Indices of the sentence pairs in one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

/// Groups pairs into batches whose target sentences all have the same length.
///
/// Pairs are ordered by target length, then source length, then original
/// position; each run of equal target length is chunked into batches of at
/// most `batch_size`, leaving the last batch of a run partially filled.
pub fn bucket_batch(bitext: &Bitext, batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }
    let mut order: Vec<usize> = (0..bitext.len()).collect();
    order.sort_by_key(|&i| (bitext.pairs[i].tgt.len(), bitext.pairs[i].src.len(), i));

    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_len = None;
    for i in order {
        let len = bitext.pairs[i].tgt.len();
        if current_len != Some(len) || current.len() == batch_size {
            if !current.is_empty() {
                batches.push(Batch {
                    indices: std::mem::take(&mut current),
                });
            }
            current_len = Some(len);
        }
        current.push(i);
    }
    if !current.is_empty() {
        batches.push(Batch { indices: current });
    }
    Ok(batches)
}

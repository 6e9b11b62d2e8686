//! Translation table, EM training and Viterbi decoding for the
//! diagonal-prior IBM Model 2.

use std::io::{Read, Write};

use rustc_hash::FxHashSet;

use super::prior::prior_row;
use super::SentenceAlignment;
use crate::binio;
use crate::corpus::{Bitext, SentencePair, TokenId};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 8] = b"VSALIGN1";

/// Sentence pairs per E-step block. Partial counts are merged block by block
/// in corpus order, so results do not depend on the worker count.
const BLOCK: usize = 2048;

/// Which side the model generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Generates target words from source words.
    SrcToTgt,
    /// Generates source words from target words.
    TgtToSrc,
}

impl Direction {
    fn code(self) -> u32 {
        match self {
            Direction::SrcToTgt => 0,
            Direction::TgtToSrc => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Direction::SrcToTgt),
            1 => Ok(Direction::TgtToSrc),
            _ => Err(Error::Format(format!("unknown direction code {c}"))),
        }
    }
}

/// Sparse `theta(gen | cond)` in compressed rows. Row `n_cond` is the null word.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    offsets: Vec<usize>,
    gen: Vec<TokenId>,
    prob: Vec<f64>,
}

impl TranslationTable {
    /// Uniform table over the pairs that co-occur in some sentence pair.
    fn uniform_support(pairs: &[SentencePair], n_cond: usize) -> Self {
        let null = n_cond as u64;
        let mut keys: FxHashSet<u64> = FxHashSet::default();
        for p in pairs {
            for &t in &p.tgt {
                keys.insert(null << 32 | t as u64);
                for &s in &p.src {
                    keys.insert((s as u64) << 32 | t as u64);
                }
            }
        }
        let mut keys: Vec<u64> = keys.into_iter().collect();
        keys.sort_unstable();

        let mut offsets = vec![0usize; n_cond + 2];
        let mut gen = Vec::with_capacity(keys.len());
        for &k in &keys {
            offsets[(k >> 32) as usize + 1] += 1;
            gen.push(k as u32);
        }
        for r in 0..=n_cond {
            offsets[r + 1] += offsets[r];
        }
        let mut prob = vec![0.0; gen.len()];
        for r in 0..=n_cond {
            let (a, b) = (offsets[r], offsets[r + 1]);
            if b > a {
                let u = 1.0 / (b - a) as f64;
                prob[a..b].iter_mut().for_each(|p| *p = u);
            }
        }
        TranslationTable { offsets, gen, prob }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.gen.len()
    }

    /// Flat index of `(row, gen)` if it is in the support.
    #[inline]
    fn index(&self, row: usize, g: TokenId) -> Option<usize> {
        let (a, b) = (self.offsets[row], self.offsets[row + 1]);
        self.gen[a..b].binary_search(&g).ok().map(|k| a + k)
    }

    #[inline]
    fn get(&self, row: usize, g: TokenId) -> f64 {
        if row + 1 >= self.offsets.len() {
            return 0.0;
        }
        self.index(row, g).map_or(0.0, |k| self.prob[k])
    }

    /// `(gen id, probability)` entries of one row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        let (a, b) = (self.offsets[row], self.offsets[row + 1]);
        self.gen[a..b].iter().copied().zip(self.prob[a..b].iter().copied())
    }
}

/// EM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub iterations: usize,
    /// Diagonal tension.
    pub lambda: f64,
    /// Null-alignment probability.
    pub p0: f64,
    pub threads: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: 5,
            lambda: 4.0,
            p0: 0.08,
            threads: 1,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.p0) {
            return Err(Error::param("p0", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Trained translation probabilities plus the fixed diagonal-prior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub table: TranslationTable,
    pub lambda: f64,
    pub p0: f64,
    pub direction: Direction,
    /// Vocabulary size of the conditioning side.
    pub n_cond: usize,
    /// Vocabulary size of the generated side.
    pub n_gen: usize,
}

/// Per-block E-step output.
struct Partial {
    counts: Vec<f64>,
    touched: Vec<usize>,
    loglik: f64,
}

impl AlignmentModel {
    fn null_row(&self) -> usize {
        self.n_cond
    }

    /// `theta(g | c)`; `None` conditions on the null word.
    pub fn theta(&self, cond: Option<TokenId>, g: TokenId) -> f64 {
        let row = cond.map_or(self.null_row(), |c| c as usize);
        if row > self.n_cond {
            return 0.0;
        }
        self.table.get(row, g)
    }

    /// Log-likelihood of one pair in the model's orientation, up to the
    /// length model constant.
    fn pair_loglik(&self, cond: &[TokenId], gen: &[TokenId], prior: &mut Vec<f64>) -> f64 {
        let (m, n) = (gen.len(), cond.len());
        let mut ll = 0.0;
        for (i, &g) in gen.iter().enumerate() {
            prior_row(i, m, n, self.lambda, self.p0, prior);
            let mut z = self.p0 * self.theta(None, g);
            for (j, &c) in cond.iter().enumerate() {
                z += prior[j] * self.theta(Some(c), g);
            }
            ll += z.ln();
        }
        ll
    }

    /// Corpus log-likelihood of `bitext` (given in source/target orientation).
    pub fn log_likelihood(&self, bitext: &Bitext) -> f64 {
        let mut prior = Vec::new();
        bitext
            .pairs
            .iter()
            .map(|p| {
                let (cond, gen) = self.orient(p);
                self.pair_loglik(cond, gen, &mut prior)
            })
            .sum()
    }

    fn orient<'a>(&self, p: &'a SentencePair) -> (&'a [TokenId], &'a [TokenId]) {
        match self.direction {
            Direction::SrcToTgt => (&p.src, &p.tgt),
            Direction::TgtToSrc => (&p.tgt, &p.src),
        }
    }

    fn e_step_block(&self, pairs: &[SentencePair], partial: &mut Partial) {
        let mut prior = Vec::new();
        let mut post = Vec::new();
        let mut idx = Vec::new();
        partial.loglik = 0.0;
        let null = self.null_row();
        for p in pairs {
            let (cond, gen) = (&p.src, &p.tgt);
            let (m, n) = (gen.len(), cond.len());
            for (i, &g) in gen.iter().enumerate() {
                prior_row(i, m, n, self.lambda, self.p0, &mut prior);
                post.clear();
                idx.clear();
                let k0 = self.table.index(null, g).expect("null row covers every generated word");
                idx.push(k0);
                post.push(self.p0 * self.table.prob[k0]);
                for (j, &c) in cond.iter().enumerate() {
                    let k = self
                        .table
                        .index(c as usize, g)
                        .expect("support covers co-occurring pairs");
                    idx.push(k);
                    post.push(prior[j] * self.table.prob[k]);
                }
                let z: f64 = post.iter().sum();
                partial.loglik += z.ln();
                for (&k, &q) in idx.iter().zip(&post) {
                    if partial.counts[k] == 0.0 {
                        partial.touched.push(k);
                    }
                    partial.counts[k] += q / z;
                }
            }
        }
    }

    fn m_step(&mut self, counts: &[f64]) {
        let t = &mut self.table;
        for r in 0..t.n_rows() {
            let (a, b) = (t.offsets[r], t.offsets[r + 1]);
            let total: f64 = counts[a..b].iter().sum();
            if total > 0.0 {
                for (p, &c) in t.prob[a..b].iter_mut().zip(&counts[a..b]) {
                    *p = c / total;
                }
            }
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_magic(&mut w, MODEL_MAGIC)?;
        binio::write_u32(&mut w, self.direction.code())?;
        binio::write_f64(&mut w, self.lambda)?;
        binio::write_f64(&mut w, self.p0)?;
        binio::write_u64(&mut w, self.n_cond as u64)?;
        binio::write_u64(&mut w, self.n_gen as u64)?;
        for r in 0..self.table.n_rows() {
            let (a, b) = (self.table.offsets[r], self.table.offsets[r + 1]);
            binio::write_u64(&mut w, (b - a) as u64)?;
            for k in a..b {
                binio::write_u32(&mut w, self.table.gen[k])?;
                binio::write_f64(&mut w, self.table.prob[k])?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        binio::read_magic(&mut r, MODEL_MAGIC)?;
        let direction = Direction::from_code(binio::read_u32(&mut r)?)?;
        let lambda = binio::read_f64(&mut r)?;
        let p0 = binio::read_f64(&mut r)?;
        let n_cond = binio::read_len(&mut r)?;
        let n_gen = binio::read_len(&mut r)?;
        let mut offsets = Vec::with_capacity(n_cond + 2);
        offsets.push(0);
        let mut gen = Vec::new();
        let mut prob = Vec::new();
        for _ in 0..=n_cond {
            let len = binio::read_len(&mut r)?;
            for _ in 0..len {
                let g = binio::read_u32(&mut r)?;
                if g as usize >= n_gen {
                    return Err(Error::Format(format!("generated id {g} out of range")));
                }
                gen.push(g);
                prob.push(binio::read_f64(&mut r)?);
            }
            offsets.push(gen.len());
        }
        Ok(AlignmentModel {
            table: TranslationTable { offsets, gen, prob },
            lambda,
            p0,
            direction,
            n_cond,
            n_gen,
        })
    }
}

/// Trains the aligner by EM.
///
/// Returns the model and the corpus log-likelihood measured in the E-step of
/// each iteration (i.e. under the parameters entering that iteration).
pub fn train_em(bitext: &Bitext, direction: Direction, config: &EmConfig) -> Result<(AlignmentModel, Vec<f64>)> {
    config.validate()?;
    if bitext.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let oriented;
    let data = match direction {
        Direction::SrcToTgt => bitext,
        Direction::TgtToSrc => {
            oriented = bitext.reversed();
            &oriented
        }
    };
    let n_cond = data.src_vocab.len();
    let n_gen = data.tgt_vocab.len();
    let mut model = AlignmentModel {
        table: TranslationTable::uniform_support(&data.pairs, n_cond),
        lambda: config.lambda,
        p0: config.p0,
        direction,
        n_cond,
        n_gen,
    };

    let nnz = model.table.nnz();
    let blocks: Vec<&[SentencePair]> = data.pairs.chunks(BLOCK).collect();
    let workers = config.threads.max(1).min(blocks.len());
    let mut partials: Vec<Partial> = (0..workers)
        .map(|_| Partial {
            counts: vec![0.0; nnz],
            touched: Vec::new(),
            loglik: 0.0,
        })
        .collect();

    let mut history = Vec::with_capacity(config.iterations);
    let mut counts = vec![0.0; nnz];
    for _ in 0..config.iterations {
        counts.iter_mut().for_each(|c| *c = 0.0);
        let mut loglik = 0.0;
        for wave in blocks.chunks(workers) {
            if wave.len() == 1 || workers == 1 {
                for (block, partial) in wave.iter().zip(partials.iter_mut()) {
                    model.e_step_block(block, partial);
                }
            } else {
                let m = &model;
                std::thread::scope(|scope| {
                    for (block, partial) in wave.iter().zip(partials.iter_mut()) {
                        scope.spawn(move || m.e_step_block(block, partial));
                    }
                });
            }
            // Merge in block order.
            for partial in partials.iter_mut().take(wave.len()) {
                loglik += partial.loglik;
                for &k in &partial.touched {
                    counts[k] += partial.counts[k];
                    partial.counts[k] = 0.0;
                }
                partial.touched.clear();
            }
        }
        history.push(loglik);
        model.m_step(&counts);
    }
    Ok((model, history))
}

/// Most probable link for every generated position; null links are dropped.
///
/// `cond`/`gen` are given in the model's orientation and the returned links
/// are `(cond position, gen position)`. Ties go to the null word, then to the
/// smaller position.
pub fn viterbi_align(model: &AlignmentModel, cond: &[TokenId], gen: &[TokenId]) -> SentenceAlignment {
    let (m, n) = (gen.len(), cond.len());
    let mut prior = Vec::new();
    let mut links = Vec::new();
    for (i, &g) in gen.iter().enumerate() {
        prior_row(i, m, n, model.lambda, model.p0, &mut prior);
        let mut best = model.p0 * model.theta(None, g);
        let mut best_j = None;
        for (j, &c) in cond.iter().enumerate() {
            let score = prior[j] * model.theta(Some(c), g);
            if score > best {
                best = score;
                best_j = Some(j);
            }
        }
        if let Some(j) = best_j {
            links.push((j as u32, i as u32));
        }
    }
    SentenceAlignment::new(links)
}

/// Viterbi alignments of every pair, always returned as
/// `(source position, target position)` links.
pub fn align_bitext(model: &AlignmentModel, bitext: &Bitext) -> Vec<SentenceAlignment> {
    bitext
        .pairs
        .iter()
        .map(|p| match model.direction {
            Direction::SrcToTgt => viterbi_align(model, &p.src, &p.tgt),
            Direction::TgtToSrc => viterbi_align(model, &p.tgt, &p.src).transposed(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_relative_eq;

    use super::*;
    use crate::corpus::{encode, Vocab};

    fn bitext(src: &[&str], tgt: &[&str]) -> Bitext {
        let sv = Arc::new(Vocab::build(src.iter(), 100, "<unk>").unwrap());
        let tv = Arc::new(Vocab::build(tgt.iter(), 100, "<unk>").unwrap());
        encode(src, tgt, sv, tv).unwrap()
    }

    fn row_sums_to_one(model: &AlignmentModel) {
        for r in 0..model.table.n_rows() {
            let (s, n) = model.table.row(r).fold((0.0, 0), |(s, n), (_, p)| (s + p, n + 1));
            if n > 0 {
                assert_relative_eq!(s, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn forced_single_word_alignment() {
        let b = bitext(&["a", "a", "b"], &["x", "x", "y"]);
        let (model, _) = train_em(
            &b,
            Direction::SrcToTgt,
            &EmConfig {
                iterations: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let (a, x) = (b.src_vocab.id("a"), b.tgt_vocab.id("x"));
        assert_relative_eq!(model.theta(Some(a), x), 1.0);
        assert_eq!(viterbi_align(&model, &[a], &[x]).links(), &[(0, 0)]);
        row_sums_to_one(&model);
    }

    #[test]
    fn unseen_target_words_fall_back_to_null() {
        let b = bitext(&["a b", "b"], &["x y", "y"]);
        let (model, _) = train_em(&b, Direction::SrcToTgt, &EmConfig::default()).unwrap();
        let unk = b.tgt_vocab.unk_id();
        assert!(viterbi_align(&model, &b.pairs[0].src, &[unk, unk]).is_empty());
    }

    #[test]
    fn loglik_is_monotone_and_threads_agree() {
        let src: Vec<String> = (0..300).map(|i| format!("w{} v{} u{}", i % 11, i % 7, i % 5)).collect();
        let tgt: Vec<String> = (0..300).map(|i| format!("v{} w{} z{}", i % 7, i % 11, i % 3)).collect();
        let sv = Arc::new(Vocab::build(src.iter(), 100, "<unk>").unwrap());
        let tv = Arc::new(Vocab::build(tgt.iter(), 100, "<unk>").unwrap());
        let b = encode(&src, &tgt, sv, tv).unwrap();
        let cfg = EmConfig {
            iterations: 6,
            ..Default::default()
        };
        let (m1, h1) = train_em(&b, Direction::SrcToTgt, &cfg).unwrap();
        for w in h1.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{h1:?}");
        }
        let (m4, h4) = train_em(&b, Direction::SrcToTgt, &EmConfig { threads: 4, ..cfg }).unwrap();
        assert_eq!(m1, m4);
        assert_eq!(h1, h4);
        row_sums_to_one(&m1);
        assert!(m1.log_likelihood(&b) >= *h1.last().unwrap());
    }

    #[test]
    fn reverse_direction_links_are_in_source_target_coordinates() {
        let b = bitext(&["a b c", "a", "b", "c"], &["x y", "x", "y", "x y"]);
        let (fwd, _) = train_em(&b, Direction::SrcToTgt, &EmConfig::default()).unwrap();
        let (rev, _) = train_em(&b, Direction::TgtToSrc, &EmConfig::default()).unwrap();
        for (p, (af, ar)) in b
            .pairs
            .iter()
            .zip(align_bitext(&fwd, &b).iter().zip(align_bitext(&rev, &b).iter()))
        {
            for &(i, j) in af.links().iter().chain(ar.links()) {
                assert!((i as usize) < p.src.len() && (j as usize) < p.tgt.len());
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let b = bitext(&["a b", "b c"], &["x y", "y z"]);
        let (model, _) = train_em(&b, Direction::TgtToSrc, &EmConfig::default()).unwrap();
        let mut buf = Vec::new();
        model.write_binary(&mut buf).unwrap();
        assert_eq!(AlignmentModel::read_binary(&buf[..]).unwrap(), model);
    }

    #[test]
    fn rejects_bad_config() {
        let b = bitext(&["a"], &["x"]);
        for cfg in [
            EmConfig {
                iterations: 0,
                ..Default::default()
            },
            EmConfig {
                p0: 1.0,
                ..Default::default()
            },
            EmConfig {
                lambda: -1.0,
                ..Default::default()
            },
        ] {
            assert!(train_em(&b, Direction::SrcToTgt, &cfg).is_err());
        }
    }
}

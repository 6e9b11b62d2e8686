//! Coverage and vocabulary-size evaluation of selectors, and a scoring
//! microbenchmark standing in for the output layer of a decoder.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Bitext, TokenId};
use crate::error::{Error, Result};
use crate::select::{Selector, VocabSubset};

/// Reference occurrences covered by `subset`. Unknown tokens count toward the
/// total and are never covered.
pub fn coverage(subset: &VocabSubset, reference: &[TokenId], unk: TokenId) -> (usize, usize) {
    let covered = reference.iter().filter(|&&t| t != unk && subset.contains(t)).count();
    (covered, reference.len())
}

/// Like [`coverage`] against a system output, with unknown tokens left out of
/// the total.
pub fn coverage_vs_output(subset: &VocabSubset, output: &[TokenId], unk: TokenId) -> (usize, usize) {
    let known: Vec<TokenId> = output.iter().copied().filter(|&t| t != unk).collect();
    coverage(subset, &known, unk)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub strategy: String,
    pub k: usize,
    pub common_n: usize,
    pub batch_size: usize,
    /// Per sentence: (size of the subset used for it, covered, reference tokens).
    pub per_sentence: Vec<(usize, usize, usize)>,
    /// Subset size averaged over sentences.
    pub avg_vocab: f64,
    /// Subset size averaged over batches.
    pub avg_vocab_batch: f64,
    pub coverage: f64,
    /// Mean selection time per batch.
    pub mean_time_ms: f64,
}

/// Selects a vocabulary for consecutive batches of `batch_size` sentences and
/// measures how much of each reference it covers.
pub fn evaluate(selector: &Selector, data: &Bitext, batch_size: usize) -> Result<CoverageReport> {
    if batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let unk = data.tgt_vocab.unk_id();
    let mut per_sentence = Vec::with_capacity(data.len());
    let mut batch_sizes = Vec::new();
    let mut elapsed = 0.0;
    for chunk in data.pairs.chunks(batch_size) {
        let srcs: Vec<&[TokenId]> = chunk.iter().map(|p| p.src.as_slice()).collect();
        let start = Instant::now();
        let subset = selector.select_batch(&srcs);
        elapsed += start.elapsed().as_secs_f64();
        batch_sizes.push(subset.len());
        for p in chunk {
            let (c, t) = coverage(&subset, &p.tgt, unk);
            per_sentence.push((subset.len(), c, t));
        }
    }
    let n = per_sentence.len() as f64;
    let covered: usize = per_sentence.iter().map(|r| r.1).sum();
    let total: usize = per_sentence.iter().map(|r| r.2).sum();
    Ok(CoverageReport {
        strategy: selector.strategy().name().to_string(),
        k: selector.k(),
        common_n: selector.common_n(),
        batch_size,
        avg_vocab: per_sentence.iter().map(|r| r.0 as f64).sum::<f64>() / n,
        avg_vocab_batch: batch_sizes.iter().sum::<usize>() as f64 / batch_sizes.len() as f64,
        coverage: if total == 0 { 1.0 } else { covered as f64 / total as f64 },
        per_sentence,
        mean_time_ms: 1e3 * elapsed / batch_sizes.len() as f64,
    })
}

/// Evaluates every selector, spreading them over `threads` workers.
pub fn sweep(selectors: &[Selector], data: &Bitext, batch_size: usize, threads: usize) -> Result<Vec<CoverageReport>> {
    let threads = threads.max(1).min(selectors.len().max(1));
    if threads == 1 {
        return selectors.iter().map(|s| evaluate(s, data, batch_size)).collect();
    }
    let mut slots: Vec<Option<Result<CoverageReport>>> = Vec::new();
    slots.resize_with(selectors.len(), || None);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    (w..selectors.len())
                        .step_by(threads)
                        .map(|i| (i, evaluate(&selectors[i], data, batch_size)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every config evaluated")).collect()
}

pub const CSV_HEADER: &str = "strategy,k,common_n,batch_size,avg_vocab,coverage,mean_time_ms,avg_vocab_batch";

pub fn write_csv<W: Write>(mut w: W, reports: &[CoverageReport]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{:.4},{:.6},{:.4},{:.4}",
            r.strategy, r.k, r.common_n, r.batch_size, r.avg_vocab, r.coverage, r.mean_time_ms, r.avg_vocab_batch
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub vocab_size: usize,
    pub mean_time_ms: f64,
    pub steps: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    /// Gathered-subset rows sorted by size, the last one being the whole vocabulary.
    pub rows: Vec<TimingRow>,
    /// Contiguous scan over the full matrix, no gather.
    pub full: TimingRow,
    pub note: String,
}

impl TimingReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vocab_size,mean_time_ms,steps,d,gather")?;
        for (r, gather) in self.rows.iter().map(|r| (r, 1)).chain([(&self.full, 0)]) {
            writeln!(
                w,
                "{},{:.6},{},{},{}",
                r.vocab_size, r.mean_time_ms, r.steps, r.d, gather
            )?;
        }
        writeln!(w, "# {}", self.note)?;
        Ok(())
    }
}

/// Blocks used for the median-of-means estimate, and warm-up iterations.
const TIMING_BLOCKS: usize = 10;
const WARMUP: usize = 10;
const HIDDEN_STREAM: usize = 16;

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Index of the best-scoring row among `rows` of `emb`, as a local index.
fn gather_argmax(emb: &[f32], d: usize, rows: &[u32], h: &[f32]) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, &r) in rows.iter().enumerate() {
        let s = dot(&emb[r as usize * d..(r as usize + 1) * d], h);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

fn full_argmax(emb: &[f32], d: usize, h: &[f32]) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, row) in emb.chunks_exact(d).enumerate() {
        let s = dot(row, h);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Median over blocks of the mean time per call of `f`, in milliseconds.
fn time_ms(steps: usize, mut f: impl FnMut(usize) -> usize) -> f64 {
    for i in 0..WARMUP {
        black_box(f(i));
    }
    let per_block = (steps / TIMING_BLOCKS).max(1);
    let mut means: Vec<f64> = (0..TIMING_BLOCKS)
        .map(|b| {
            let start = Instant::now();
            for i in 0..per_block {
                black_box(f(b * per_block + i));
            }
            1e3 * start.elapsed().as_secs_f64() / per_block as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    (means[TIMING_BLOCKS / 2 - 1] + means[TIMING_BLOCKS / 2]) / 2.0
}

/// Random scoring embeddings and hidden states for [`scoring_bench`] and its
/// variants.
pub struct ScoringFixture {
    pub v_full: usize,
    pub d: usize,
    emb: Vec<f32>,
    hidden: Vec<Vec<f32>>,
}

impl ScoringFixture {
    pub fn new(v_full: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || v_full == 0 {
            return Err(Error::param("d", "vocabulary and dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = (0..v_full * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let hidden = (0..HIDDEN_STREAM)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        Ok(ScoringFixture { v_full, d, emb, hidden })
    }

    /// Mean time of one gather, score and argmax step over `rows`.
    pub fn time_gather(&self, rows: &[u32], steps: usize) -> Result<f64> {
        if let Some(&r) = rows.iter().find(|&&r| r as usize >= self.v_full) {
            return Err(Error::SubsetTooLarge {
                size: r as usize + 1,
                vocab: self.v_full,
            });
        }
        Ok(time_ms(steps, |i| {
            gather_argmax(&self.emb, self.d, rows, &self.hidden[i % HIDDEN_STREAM])
        }))
    }

    pub fn time_full(&self, steps: usize) -> f64 {
        time_ms(steps, |i| {
            full_argmax(&self.emb, self.d, &self.hidden[i % HIDDEN_STREAM])
        })
    }

    /// Sorted random subset of `size` distinct row ids.
    pub fn random_rows(&self, size: usize, seed: u64) -> Result<Vec<u32>> {
        if size > self.v_full {
            return Err(Error::SubsetTooLarge {
                size,
                vocab: self.v_full,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<u32> = rand::seq::index::sample(&mut rng, self.v_full, size)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        rows.sort_unstable();
        Ok(rows)
    }
}

/// Times scoring against random subsets of each size plus the whole
/// vocabulary, on a single thread.
pub fn scoring_bench(v_full: usize, d: usize, subset_sizes: &[usize], steps: usize, seed: u64) -> Result<TimingReport> {
    if steps < TIMING_BLOCKS {
        return Err(Error::param("steps", format!("must be at least {TIMING_BLOCKS}")));
    }
    if let Some(&v) = subset_sizes.iter().find(|&&v| v > v_full) {
        return Err(Error::SubsetTooLarge { size: v, vocab: v_full });
    }
    let fx = ScoringFixture::new(v_full, d, seed)?;
    let mut sizes: Vec<usize> = subset_sizes.iter().copied().filter(|&v| v > 0).collect();
    sizes.push(v_full);
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::with_capacity(sizes.len());
    for (i, &v) in sizes.iter().enumerate() {
        let ids: Vec<u32> = if v == v_full {
            (0..v_full as u32).collect()
        } else {
            fx.random_rows(v, seed.wrapping_add(i as u64 + 1))?
        };
        rows.push(TimingRow {
            vocab_size: v,
            mean_time_ms: fx.time_gather(&ids, steps)?,
            steps,
            d,
        });
    }
    let full = TimingRow {
        vocab_size: v_full,
        mean_time_ms: fx.time_full(steps),
        steps,
        d,
    };
    Ok(TimingReport {
        rows,
        full,
        note: "single-thread scoring only (gather, matrix-vector product, argmax); not decoding time".to_string(),
    })
}

/// Least-squares fit `y = a x + b`, returning `(a, b, r2)`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}

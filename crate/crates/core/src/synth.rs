//! Seeded synthetic parallel corpora for tests, benchmarks and the demo.
//!
//! The translation generator draws Zipf-distributed source words, renders
//! each one as its main translation, an alternative or nothing, inserts
//! frequent target function words and applies local reordering. That gives
//! co-occurrence statistics dominated by frequent words while alignments
//! still point at the actual translations.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub pairs: usize,
    /// Number of distinct source content words; the target side has as many
    /// content words plus `function_words`.
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Zipf exponent of source word frequencies.
    pub zipf: f64,
    /// Probability of rendering a word by its main translation; the
    /// alternative gets half of the rest and the remainder is dropped.
    pub p_main: f64,
    /// Target words inserted independently of the source.
    pub function_words: usize,
    pub p_function: f64,
    pub p_swap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            pairs: 10_000,
            vocab: 2_000,
            min_len: 5,
            max_len: 25,
            zipf: 1.0,
            p_main: 0.7,
            function_words: 8,
            p_function: 0.4,
            p_swap: 0.2,
            seed: 0,
        }
    }
}

/// Source and target lines of whitespace-separated tokens.
pub type Lines = (Vec<String>, Vec<String>);

pub fn translation_corpus(cfg: &SynthConfig) -> Result<Lines> {
    if cfg.vocab < 2 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::param("synth", "need vocab >= 2 and 1 <= min_len <= max_len"));
    }
    if !(0.0..=1.0).contains(&cfg.p_main)
        || !(0.0..=1.0).contains(&cfg.p_function)
        || !(0.0..=1.0).contains(&cfg.p_swap)
    {
        return Err(Error::param("synth", "probabilities must be in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<f64> = (0..cfg.vocab).map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf)).collect();
    let zipf = WeightedIndex::new(&weights).map_err(|e| Error::param("zipf", e.to_string()))?;

    let mut main: Vec<usize> = (0..cfg.vocab).collect();
    main.shuffle(&mut rng);
    let alt: Vec<usize> = (0..cfg.vocab)
        .map(|w| {
            let a = rng.gen_range(0..cfg.vocab - 1);
            if a >= main[w] {
                a + 1
            } else {
                a
            }
        })
        .collect();
    let p_alt = cfg.p_main + (1.0 - cfg.p_main) / 2.0;

    let mut src_lines = Vec::with_capacity(cfg.pairs);
    let mut tgt_lines = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let src: Vec<usize> = (0..len).map(|_| zipf.sample(&mut rng)).collect();
        let mut tgt: Vec<String> = Vec::with_capacity(len + cfg.function_words);
        for &w in &src {
            let u: f64 = rng.gen();
            if u < cfg.p_main {
                tgt.push(format!("t{}", main[w]));
            } else if u < p_alt {
                tgt.push(format!("t{}", alt[w]));
            }
        }
        for f in 0..cfg.function_words {
            if rng.gen_bool(cfg.p_function) {
                let pos = rng.gen_range(0..=tgt.len());
                tgt.insert(pos, format!("f{f}"));
            }
        }
        if tgt.is_empty() {
            tgt.push("f0".to_string());
        }
        for i in 1..tgt.len() {
            if rng.gen_bool(cfg.p_swap) {
                tgt.swap(i - 1, i);
            }
        }
        src_lines.push(src.iter().map(|w| format!("s{w}")).collect::<Vec<_>>().join(" "));
        tgt_lines.push(tgt.join(" "));
    }
    Ok((src_lines, tgt_lines))
}

/// Identical source and target sentences over `symbols` uniform symbols.
pub fn copy_corpus(pairs: usize, symbols: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Lines> {
    if symbols == 0 || min_len == 0 || min_len > max_len {
        return Err(Error::param("synth", "need symbols >= 1 and 1 <= min_len <= max_len"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<String> = (0..pairs)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..symbols)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Ok((lines.clone(), lines))
}

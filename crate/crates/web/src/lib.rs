//! WebAssembly bindings for the static demo page in `www/`.
//!
//! A [`Demo`] trains co-occurrence, PMI and word-alignment shortlists on a
//! small synthetic corpus in the browser; the page then draws coverage
//! against average vocabulary size, shows per-sentence selections and plots
//! the diagonal alignment prior.

use std::sync::Arc;

use vocabsel::align::{align_symmetric, count_links, prior::prior_row, topk_aligned, EmConfig};
use vocabsel::bench::coverage;
use vocabsel::cooccur::{count_cooccurrences, topk, ShortlistTable, Statistic};
use vocabsel::corpus::{encode, Bitext, Vocab};
use vocabsel::select::{Resource, Selector, Strategy};
use vocabsel::synth::{translation_corpus, SynthConfig};
use wasm_bindgen::prelude::*;

const MAX_K: usize = 100;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    train: Bitext,
    test: Bitext,
    test_lines: Vec<String>,
    cooccur: Arc<ShortlistTable>,
    pmi: Arc<ShortlistTable>,
    word_align: Arc<ShortlistTable>,
}

#[wasm_bindgen]
impl Demo {
    /// Generates `pairs` sentence pairs over `vocab` source words, holds out
    /// 10% for evaluation and trains the shortlists on the rest.
    #[wasm_bindgen(constructor)]
    pub fn new(pairs: usize, vocab: usize, seed: u64) -> Result<Demo, JsError> {
        Self::build(pairs, vocab, seed).map_err(js_err)
    }

    pub fn train_pairs(&self) -> usize {
        self.train.len()
    }

    pub fn test_pairs(&self) -> usize {
        self.test.len()
    }

    pub fn tgt_vocab_size(&self) -> usize {
        self.train.tgt_vocab.len()
    }

    /// Source side of held-out sentence `i`.
    pub fn test_sentence(&self, i: usize) -> String {
        self.test_lines.get(i).cloned().unwrap_or_default()
    }

    /// Target side of held-out sentence `i`.
    pub fn test_reference(&self, i: usize) -> String {
        self.test
            .pairs
            .get(i)
            .map(|p| self.test.tgt_vocab.decode(&p.tgt))
            .unwrap_or_default()
    }

    /// `[avg_vocab_0, coverage_0, avg_vocab_1, coverage_1, ...]` on the
    /// held-out pairs, one entry pair per value of `ks`.
    pub fn coverage_curve(
        &self,
        strategy: &str,
        ks: &[u32],
        common: usize,
        batch_size: usize,
    ) -> Result<Vec<f64>, JsError> {
        self.curve(strategy, ks, common, batch_size).map_err(js_err)
    }

    /// Selected target words for a whitespace-tokenized source sentence, in
    /// frequency order. Words that are also in `reference` are prefixed with `+`.
    pub fn select(
        &self,
        strategy: &str,
        k: usize,
        common: usize,
        sentence: &str,
        reference: &str,
    ) -> Result<String, JsError> {
        self.marked_selection(strategy, k, common, sentence, reference)
            .map_err(js_err)
    }
}

impl Demo {
    fn build(pairs: usize, vocab: usize, seed: u64) -> vocabsel::Result<Demo> {
        let (src, tgt) = translation_corpus(&SynthConfig {
            pairs,
            vocab,
            min_len: 4,
            max_len: 15,
            seed,
            ..SynthConfig::default()
        })?;
        let n_test = (pairs / 10).max(1);
        let (test_src, train_src) = src.split_at(n_test);
        let (test_tgt, train_tgt) = tgt.split_at(n_test);
        let src_vocab = Arc::new(Vocab::build(train_src, usize::MAX, "<unk>")?);
        let tgt_vocab = Arc::new(Vocab::build(train_tgt, usize::MAX, "<unk>")?);
        let train = encode(train_src, train_tgt, Arc::clone(&src_vocab), Arc::clone(&tgt_vocab))?;
        let test = encode(test_src, test_tgt, src_vocab, tgt_vocab)?;

        let table = count_cooccurrences(&train, 1);
        let cooccur = Arc::new(topk(&table, MAX_K, Statistic::Joint));
        let pmi = Arc::new(topk(&table, MAX_K, Statistic::Pmi { floor: 5 }));
        let alignments = align_symmetric(&train, &EmConfig::default())?;
        let word_align = Arc::new(topk_aligned(&count_links(&train, &alignments)?, MAX_K));
        Ok(Demo {
            train,
            test,
            test_lines: test_src.to_vec(),
            cooccur,
            pmi,
            word_align,
        })
    }

    fn selector(&self, strategy: &str, k: usize, common: usize) -> vocabsel::Result<Selector> {
        let strategy: Strategy = strategy.parse()?;
        let table = match strategy {
            Strategy::Cooccur => &self.cooccur,
            Strategy::Pmi => &self.pmi,
            Strategy::WordAlign => &self.word_align,
            _ => {
                return Err(vocabsel::Error::InvalidParameter {
                    name: "strategy",
                    reason: format!("`{strategy}` is not trained in the demo"),
                })
            }
        };
        Selector::new(
            strategy,
            k.min(MAX_K),
            common,
            Resource::Shortlist(Arc::clone(table)),
            self.train.src_vocab.unk_id(),
            Arc::clone(&self.train.tgt_vocab),
        )
    }

    fn curve(&self, strategy: &str, ks: &[u32], common: usize, batch_size: usize) -> vocabsel::Result<Vec<f64>> {
        let batch_size = batch_size.max(1);
        let unk = self.test.tgt_vocab.unk_id();
        let mut out = Vec::with_capacity(2 * ks.len());
        for &k in ks {
            let sel = self.selector(strategy, k as usize, common)?;
            let (mut size_sum, mut covered, mut total) = (0usize, 0usize, 0usize);
            for chunk in self.test.pairs.chunks(batch_size) {
                let srcs: Vec<&[u32]> = chunk.iter().map(|p| p.src.as_slice()).collect();
                let subset = sel.select_batch(&srcs);
                for p in chunk {
                    let (c, t) = coverage(&subset, &p.tgt, unk);
                    size_sum += subset.len();
                    covered += c;
                    total += t;
                }
            }
            out.push(size_sum as f64 / self.test.len() as f64);
            out.push(if total == 0 { 1.0 } else { covered as f64 / total as f64 });
        }
        Ok(out)
    }

    fn marked_selection(
        &self,
        strategy: &str,
        k: usize,
        common: usize,
        sentence: &str,
        reference: &str,
    ) -> vocabsel::Result<String> {
        let sel = self.selector(strategy, k, common)?;
        let subset = sel.select_sentence(&self.train.src_vocab.encode(sentence));
        let refs: Vec<u32> = self.train.tgt_vocab.encode(reference);
        let words: Vec<String> = subset
            .ids()
            .iter()
            .map(|&t| {
                let w = self.train.tgt_vocab.token(t);
                if refs.contains(&t) {
                    format!("+{w}")
                } else {
                    w.to_string()
                }
            })
            .collect();
        Ok(words.join(" "))
    }
}

/// Row-major `m x (n + 1)` matrix of alignment prior probabilities; column 0
/// is the null word.
#[wasm_bindgen]
pub fn prior_matrix(m: usize, n: usize, lambda: f64, p0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * (n + 1));
    let mut row = Vec::new();
    for i in 0..m {
        prior_row(i, m, n, lambda, p0, &mut row);
        out.push(p0);
        out.extend_from_slice(&row);
    }
    out
}

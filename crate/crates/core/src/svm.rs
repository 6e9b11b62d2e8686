//! One linear SVM per target word over bag-of-words source features.
//!
//! Each model predicts whether its target word occurs in the translation of a
//! source sentence. Models are trained independently with hinge-loss SGD and
//! then given a decision threshold calibrated on held-out data.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

use crate::binio;
use crate::corpus::{Bitext, TokenId, Vocab};
use crate::error::{Error, Result};

const ENSEMBLE_MAGIC: &[u8; 8] = b"VSSVM001";

/// Threshold standing in for minus infinity: every finite score passes it.
pub const ALWAYS_FIRE: f64 = f64::MIN;
/// Threshold that no finite score reaches.
pub const NEVER_FIRE: f64 = f64::MAX;

/// Distinct in-vocabulary source ids of a sentence, ascending.
pub fn featurize(src: &[TokenId], unk: TokenId) -> Vec<TokenId> {
    let mut f: Vec<TokenId> = src.iter().copied().filter(|&s| s != unk).collect();
    f.sort_unstable();
    f.dedup();
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Sorted, deduplicated feature ids.
    pub features: Vec<TokenId>,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    /// L2 regularization strength.
    pub reg: f64,
    pub epochs: usize,
    /// Negatives sampled per positive example.
    pub neg_ratio: f64,
    /// Minimum number of positive training sentences for a model.
    pub min_positive: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            reg: 1e-4,
            epochs: 10,
            neg_ratio: 10.0,
            min_positive: 5,
            seed: 0,
            threads: 1,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.reg.is_finite() && self.reg > 0.0) {
            return Err(Error::param("reg", "must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if !(self.neg_ratio.is_finite() && self.neg_ratio > 0.0) {
            return Err(Error::param("neg_ratio", "must be positive"));
        }
        if self.min_positive == 0 {
            return Err(Error::param("min_positive", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub target: TokenId,
    /// Non-zero weights sorted by feature id.
    pub weights: Vec<(TokenId, f64)>,
    pub bias: f64,
    pub threshold: f64,
}

impl SvmModel {
    /// Decision value touching only the sentence's features.
    pub fn score(&self, features: &[TokenId]) -> f64 {
        let mut acc = 0.0;
        for &f in features {
            if let Ok(i) = self.weights.binary_search_by_key(&f, |&(id, _)| id) {
                acc += self.weights[i].1;
            }
        }
        acc + self.bias
    }

    /// Decision value `w . x + b` over a dense 0/1 feature vector.
    pub fn score_dense(&self, x: &[f64]) -> f64 {
        let mut w = vec![0.0; x.len()];
        for &(f, v) in &self.weights {
            if (f as usize) < w.len() {
                w[f as usize] = v;
            }
        }
        let mut acc = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            acc += wi * xi;
        }
        acc + self.bias
    }

    pub fn fires(&self, features: &[TokenId]) -> bool {
        self.score(features) >= self.threshold
    }
}

/// Averaged L2-regularized hinge objective of `model` on `examples`.
pub fn objective(model: &SvmModel, examples: &[Example], reg: f64) -> f64 {
    let norm2: f64 = model.weights.iter().map(|(_, w)| w * w).sum();
    let refs: Vec<(&[TokenId], bool)> = examples.iter().map(|e| (e.features.as_slice(), e.positive)).collect();
    let loss: f64 = refs.iter().map(|&(f, pos)| hinge(label(pos) * model.score(f))).sum();
    0.5 * reg * norm2 + loss / examples.len().max(1) as f64
}

fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

fn label(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

/// Trains one model by SGD on the averaged hinge objective with step size
/// `1 / (reg * (t + t0))`; the threshold is left at 0.
pub fn train_one(target: TokenId, examples: &[Example], config: &SvmConfig, seed: u64) -> Result<SvmModel> {
    config.validate()?;
    let refs: Vec<(&[TokenId], bool)> = examples.iter().map(|e| (e.features.as_slice(), e.positive)).collect();
    let dim = examples
        .iter()
        .flat_map(|e| e.features.iter())
        .max()
        .map_or(0, |&m| m as usize + 1);
    train_refs(target, &refs, dim, config, seed)
}

fn train_refs(
    target: TokenId,
    examples: &[(&[TokenId], bool)],
    dim: usize,
    config: &SvmConfig,
    seed: u64,
) -> Result<SvmModel> {
    let has_pos = examples.iter().any(|e| e.1);
    let has_neg = examples.iter().any(|e| !e.1);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass(target.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);

    let t0 = choose_t0(examples, &order, dim, config.reg);
    let mut sgd = Sgd::new(dim, config.reg, t0);
    for epoch in 0..config.epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let (f, pos) = examples[i];
            sgd.step(f, label(pos));
        }
    }
    Ok(sgd.into_model(target))
}

/// Lazily scaled weight vector: `w = scale * v`.
struct Sgd {
    v: Vec<f64>,
    scale: f64,
    bias: f64,
    reg: f64,
    t: f64,
    touched: Vec<bool>,
}

impl Sgd {
    fn new(dim: usize, reg: f64, t0: f64) -> Self {
        Sgd {
            v: vec![0.0; dim],
            scale: 1.0,
            bias: 0.0,
            reg,
            t: t0,
            touched: vec![false; dim],
        }
    }

    fn margin(&self, f: &[TokenId], y: f64) -> f64 {
        let dot: f64 = f.iter().map(|&i| self.v[i as usize]).sum();
        y * (self.scale * dot + self.bias)
    }

    fn step(&mut self, f: &[TokenId], y: f64) {
        let eta = 1.0 / (self.reg * self.t);
        let violated = self.margin(f, y) < 1.0;
        self.scale *= 1.0 - eta * self.reg;
        if violated {
            let delta = eta * y / self.scale;
            for &i in f {
                self.v[i as usize] += delta;
                self.touched[i as usize] = true;
            }
            self.bias += eta * y;
        }
        if self.scale < 1e-9 {
            for x in &mut self.v {
                *x *= self.scale;
            }
            self.scale = 1.0;
        }
        self.t += 1.0;
    }

    fn objective(&self, examples: &[(&[TokenId], bool)], idx: &[usize]) -> f64 {
        let norm2: f64 = self.v.iter().map(|x| x * x).sum::<f64>() * self.scale * self.scale;
        let loss: f64 = idx
            .iter()
            .map(|&i| hinge(self.margin(examples[i].0, label(examples[i].1))))
            .sum();
        0.5 * self.reg * norm2 + loss / idx.len() as f64
    }

    fn into_model(self, target: TokenId) -> SvmModel {
        let weights = self
            .v
            .iter()
            .enumerate()
            .filter(|&(i, &x)| self.touched[i] && x != 0.0)
            .map(|(i, &x)| (i as TokenId, x * self.scale))
            .collect();
        SvmModel {
            target,
            weights,
            bias: self.bias,
            threshold: 0.0,
        }
    }
}

/// Picks `t0 = 1 / (reg * eta0)` by running one epoch per candidate `eta0`
/// on a prefix of the shuffled data and keeping the lowest objective.
fn choose_t0(examples: &[(&[TokenId], bool)], order: &[usize], dim: usize, reg: f64) -> f64 {
    const CANDIDATES: [f64; 5] = [4.0, 1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0];
    let sub = &order[..order.len().min(256)];
    let mut best = (f64::INFINITY, 1.0 / reg);
    for eta0 in CANDIDATES {
        let t0 = (1.0 / (reg * eta0)).max(2.0);
        let mut sgd = Sgd::new(dim, reg, t0);
        for &i in sub {
            sgd.step(examples[i].0, label(examples[i].1));
        }
        let obj = sgd.objective(examples, sub);
        if obj < best.0 {
            best = (obj, t0);
        }
    }
    best.1
}

/// Why a target word got no model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    TooFewPositives(usize),
    SingleClass,
}

/// Per-target-word models plus an inverted feature index for sparse scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmEnsemble {
    n_src: usize,
    models: Vec<SvmModel>,
    pub reg: f64,
    pub epochs: usize,
    index: Vec<Vec<(u32, f64)>>,
}

impl SvmEnsemble {
    pub fn new(n_src: usize, mut models: Vec<SvmModel>, reg: f64, epochs: usize) -> Self {
        models.sort_by_key(|m| m.target);
        let mut index = vec![Vec::new(); n_src];
        for (m, model) in models.iter().enumerate() {
            for &(f, w) in &model.weights {
                if let Some(list) = index.get_mut(f as usize) {
                    list.push((m as u32, w));
                }
            }
        }
        SvmEnsemble {
            n_src,
            models,
            reg,
            epochs,
            index,
        }
    }

    pub fn models(&self) -> &[SvmModel] {
        &self.models
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn has_model(&self, t: TokenId) -> bool {
        self.models.binary_search_by_key(&t, |m| m.target).is_ok()
    }

    /// Target ids that have a model, ascending.
    pub fn trained_set(&self) -> Vec<TokenId> {
        self.models.iter().map(|m| m.target).collect()
    }

    /// Scores of every model, in `models()` order, for a featurized sentence.
    pub fn score_all(&self, features: &[TokenId]) -> Vec<f64> {
        let mut acc = vec![0.0; self.models.len()];
        for &f in features {
            if let Some(list) = self.index.get(f as usize) {
                for &(m, w) in list {
                    acc[m as usize] += w;
                }
            }
        }
        for (a, m) in acc.iter_mut().zip(&self.models) {
            *a += m.bias;
        }
        acc
    }

    /// Targets whose score reaches their threshold, ascending.
    pub fn select(&self, src_sentence: &[TokenId], unk: TokenId) -> Vec<TokenId> {
        let features = featurize(src_sentence, unk);
        self.score_all(&features)
            .into_iter()
            .zip(&self.models)
            .filter(|(s, m)| *s >= m.threshold)
            .map(|(_, m)| m.target)
            .collect()
    }

    pub fn set_thresholds(&mut self, thresholds: &[f64]) {
        for (m, &t) in self.models.iter_mut().zip(thresholds) {
            m.threshold = t;
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_magic(&mut w, ENSEMBLE_MAGIC)?;
        binio::write_u64(&mut w, self.n_src as u64)?;
        binio::write_f64(&mut w, self.reg)?;
        binio::write_u64(&mut w, self.epochs as u64)?;
        binio::write_u64(&mut w, self.models.len() as u64)?;
        for m in &self.models {
            binio::write_u32(&mut w, m.target)?;
            binio::write_f64(&mut w, m.bias)?;
            binio::write_f64(&mut w, m.threshold)?;
            binio::write_u64(&mut w, m.weights.len() as u64)?;
            for &(f, x) in &m.weights {
                binio::write_u32(&mut w, f)?;
                binio::write_f64(&mut w, x)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        binio::read_magic(&mut r, ENSEMBLE_MAGIC)?;
        let n_src = binio::read_len(&mut r)?;
        let reg = binio::read_f64(&mut r)?;
        let epochs = binio::read_len(&mut r)?;
        let n = binio::read_len(&mut r)?;
        let mut models = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let target = binio::read_u32(&mut r)?;
            let bias = binio::read_f64(&mut r)?;
            let threshold = binio::read_f64(&mut r)?;
            let nnz = binio::read_len(&mut r)?;
            let mut weights = Vec::with_capacity(nnz.min(1 << 20));
            for _ in 0..nnz {
                let f = binio::read_u32(&mut r)?;
                if f as usize >= n_src {
                    return Err(Error::Format(format!("feature {f} out of range")));
                }
                weights.push((f, binio::read_f64(&mut r)?));
            }
            models.push(SvmModel {
                target,
                weights,
                bias,
                threshold,
            });
        }
        Ok(SvmEnsemble::new(n_src, models, reg, epochs))
    }

    /// One line per model: `token<TAB>bias<TAB>threshold<TAB>src:w src:w ...`.
    pub fn write_tsv<W: Write>(&self, mut w: W, src: &Vocab, tgt: &Vocab) -> Result<()> {
        for m in &self.models {
            let weights: Vec<String> = m
                .weights
                .iter()
                .map(|&(f, x)| format!("{}:{x}", src.token(f)))
                .collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                tgt.token(m.target),
                m.bias,
                m.threshold,
                weights.join(" ")
            )?;
        }
        Ok(())
    }
}

fn task_seed(seed: u64, target: TokenId) -> u64 {
    seed ^ (u64::from(target) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a model for every eligible target word (all non-unk words when
/// `targets` is `None`).
///
/// Labels are +1 for sentences whose target side contains the word and -1
/// otherwise; negatives are subsampled to `neg_ratio` per positive. Every
/// model depends only on the data, its target id and the seed, so results do
/// not depend on the thread count.
pub fn train_ensemble(
    bitext: &Bitext,
    targets: Option<&[TokenId]>,
    config: &SvmConfig,
) -> Result<(SvmEnsemble, Vec<(TokenId, Skip)>)> {
    config.validate()?;
    if bitext.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let unk_src = bitext.src_vocab.unk_id();
    let unk_tgt = bitext.tgt_vocab.unk_id();
    let n_src = bitext.src_vocab.len();
    let n_tgt = bitext.tgt_vocab.len();
    let features: Vec<Vec<TokenId>> = bitext.pairs.iter().map(|p| featurize(&p.src, unk_src)).collect();

    let mut positives: Vec<Vec<u32>> = vec![Vec::new(); n_tgt];
    for (i, p) in bitext.pairs.iter().enumerate() {
        for t in featurize(&p.tgt, unk_tgt) {
            positives[t as usize].push(i as u32);
        }
    }
    let targets: Vec<TokenId> = match targets {
        Some(t) => {
            let mut t: Vec<TokenId> = t
                .iter()
                .copied()
                .filter(|&t| t != unk_tgt && (t as usize) < n_tgt)
                .collect();
            t.sort_unstable();
            t.dedup();
            t
        }
        None => (0..n_tgt as TokenId).filter(|&t| t != unk_tgt).collect(),
    };

    let n = bitext.len();
    let train = |t: TokenId| -> Result<std::result::Result<SvmModel, Skip>> {
        let pos = &positives[t as usize];
        if pos.len() < config.min_positive {
            return Ok(Err(Skip::TooFewPositives(pos.len())));
        }
        if pos.len() == n {
            return Ok(Err(Skip::SingleClass));
        }
        let seed = task_seed(config.seed, t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(pos, n, (config.neg_ratio * pos.len() as f64).ceil() as usize, &mut rng);
        let examples: Vec<(&[TokenId], bool)> = pos
            .iter()
            .map(|&i| (features[i as usize].as_slice(), true))
            .chain(negs.iter().map(|&i| (features[i as usize].as_slice(), false)))
            .collect();
        train_refs(t, &examples, n_src, config, rng.gen()).map(Ok)
    };

    let threads = config.threads.max(1).min(targets.len().max(1));
    let results: Vec<_> = if threads == 1 {
        targets.iter().map(|&t| train(t)).collect()
    } else {
        let mut slots: Vec<Option<Result<std::result::Result<SvmModel, Skip>>>> = Vec::new();
        slots.resize_with(targets.len(), || None);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let targets = &targets;
                    let train = &train;
                    scope.spawn(move || {
                        (w..targets.len())
                            .step_by(threads)
                            .map(|i| (i, train(targets[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("svm worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every target is trained")).collect()
    };

    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for (&t, r) in targets.iter().zip(results) {
        match r? {
            Ok(m) => models.push(m),
            Err(skip) => skipped.push((t, skip)),
        }
    }
    Ok((SvmEnsemble::new(n_src, models, config.reg, config.epochs), skipped))
}

/// Up to `want` distinct sentence indices outside `pos` (sorted), in sampling order.
fn sample_negatives(pos: &[u32], n: usize, want: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let available = n - pos.len();
    let is_pos = |i: u32| pos.binary_search(&i).is_ok();
    if want >= available {
        return (0..n as u32).filter(|&i| !is_pos(i)).collect();
    }
    if want * 2 <= available {
        let mut seen = FxHashSet::default();
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let i = rng.gen_range(0..n as u32);
            if !is_pos(i) && seen.insert(i) {
                out.push(i);
            }
        }
        return out;
    }
    let mut all: Vec<u32> = (0..n as u32).filter(|&i| !is_pos(i)).collect();
    all.shuffle(rng);
    all.truncate(want);
    all
}

/// Threshold calibration target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMode {
    /// Largest threshold keeping recall on validation positives at least `r`.
    Recall(f64),
    /// Fire on `m` times as many validation sentences as contain the word.
    Frequency(f64),
}

/// Threshold for one model from its validation scores and labels. The flag is
/// set when the target cannot be met and the model is made to always fire.
pub fn calibrate_scores(scores: &[f64], labels: &[bool], mode: CalibrationMode) -> Result<(f64, bool)> {
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    match mode {
        CalibrationMode::Recall(r) => {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::param("recall", "must be in (0, 1]"));
            }
            let mut pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
            if pos.is_empty() {
                return Ok((ALWAYS_FIRE, true));
            }
            pos.sort_by(|a, b| b.total_cmp(a));
            let need = ((r * pos.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            Ok((pos[need - 1], false))
        }
        CalibrationMode::Frequency(m) => {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::param("multiplier", "must be non-negative"));
            }
            let freq = labels.iter().filter(|&&l| l).count();
            let fire = (m * freq as f64).round() as usize;
            if fire == 0 {
                return Ok((NEVER_FIRE, false));
            }
            if fire >= scores.len() {
                return Ok((ALWAYS_FIRE, false));
            }
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            Ok((sorted[fire - 1], false))
        }
    }
}

/// Calibrates every model of the ensemble on a validation bitext and returns
/// the target ids whose recall target was unattainable.
pub fn calibrate(ensemble: &mut SvmEnsemble, validation: &Bitext, mode: CalibrationMode) -> Result<Vec<TokenId>> {
    if validation.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let unk_src = validation.src_vocab.unk_id();
    let unk_tgt = validation.tgt_vocab.unk_id();
    let n_models = ensemble.models.len();
    let mut scores = vec![Vec::with_capacity(validation.len()); n_models];
    let mut labels = vec![vec![false; validation.len()]; n_models];
    for (i, p) in validation.pairs.iter().enumerate() {
        for (m, s) in ensemble.score_all(&featurize(&p.src, unk_src)).into_iter().enumerate() {
            scores[m].push(s);
        }
        for t in featurize(&p.tgt, unk_tgt) {
            if let Ok(m) = ensemble.models.binary_search_by_key(&t, |m| m.target) {
                labels[m][i] = true;
            }
        }
    }
    let mut flagged = Vec::new();
    let mut thresholds = Vec::with_capacity(n_models);
    for m in 0..n_models {
        let (th, flag) = calibrate_scores(&scores[m], &labels[m], mode)?;
        if flag {
            flagged.push(ensemble.models[m].target);
        }
        thresholds.push(th);
    }
    ensemble.set_thresholds(&thresholds);
    Ok(flagged)
}

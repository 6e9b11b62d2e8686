//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `VOCABSEL_DESK_PAIRS` overrides the size of the desk-scale corpus used by
//! criteria 8, 9 and 11 (default 100000).

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vocabsel::align::{
    align_bitext, align_symmetric, count_links, symmetrize_gdfa, topk_aligned, train_em, Direction, EmConfig,
    SentenceAlignment,
};
use vocabsel::bench::{coverage_vs_output, evaluate, fit_linear, scoring_bench};
use vocabsel::cooccur::{count_cooccurrences, topk, CooccurTable, ShortlistTable, Statistic};
use vocabsel::corpus::{encode, Bitext, TokenId, Vocab};
use vocabsel::pca::{factorize, hellinger_transform, Metric, Solver};
use vocabsel::phrase::{extract_phrases, extract_spans, PhraseSpan};
use vocabsel::select::{Resource, Selector, Strategy};
use vocabsel::svm::{calibrate, featurize, train_ensemble, train_one, CalibrationMode, Example, SvmConfig, SvmModel};
use vocabsel::synth::{copy_corpus, translation_corpus, SynthConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bitext_from(lines: &(Vec<String>, Vec<String>), max_vocab: usize) -> Bitext {
    let sv = Arc::new(Vocab::build(lines.0.iter(), max_vocab, "<unk>").unwrap());
    let tv = Arc::new(Vocab::build(lines.1.iter(), max_vocab, "<unk>").unwrap());
    encode(&lines.0, &lines.1, sv, tv).unwrap()
}

fn c1_em_monotone() -> Outcome {
    let start = Instant::now();
    let lines = translation_corpus(&SynthConfig {
        pairs: 1000,
        vocab: 300,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = bitext_from(&lines, usize::MAX);
    let cfg = EmConfig {
        iterations: 10,
        ..EmConfig::default()
    };
    let (model, mut ll) = train_em(&b, Direction::SrcToTgt, &cfg).unwrap();
    ll.push(model.log_likelihood(&b));
    let min_gain = ll
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs())
        .fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    check(
        min_gain >= -1e-9 && secs < 10.0,
        format!(
            "log-likelihood {:.1} -> {:.1} over {} evaluations, smallest relative gain per step {min_gain:.2e}, {secs:.1} s",
            ll[0],
            ll[ll.len() - 1],
            ll.len()
        ),
    )
}

fn c2_copy_language() -> Outcome {
    let start = Instant::now();
    let lines = copy_corpus(5000, 50, 3, 10, 2).unwrap();
    let b = bitext_from(&lines, usize::MAX);
    let (model, _) = train_em(&b, Direction::SrcToTgt, &EmConfig::default()).unwrap();
    let al = align_bitext(&model, &b);
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, a) in b.pairs.iter().zip(&al) {
        total += p.tgt.len();
        hit += (0..p.tgt.len() as u32).filter(|&j| a.contains(j, j)).count();
    }
    let rate = hit as f64 / total as f64;
    let secs = start.elapsed().as_secs_f64();
    check(
        rate >= 0.99 && secs < 30.0,
        format!("identity links recovered {hit}/{total} = {:.4}, {secs:.1} s", rate),
    )
}

fn random_alignment(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SentenceAlignment {
    let density: f64 = rng.gen_range(0.0..0.5);
    let mut links = Vec::new();
    for i in 0..n as u32 {
        for j in 0..m as u32 {
            if rng.gen_bool(density) {
                links.push((i, j));
            }
        }
    }
    SentenceAlignment::new(links)
}

/// Every rectangle with a link inside and no link leaving it.
fn consistent_rectangles(a: &SentenceAlignment, n: usize, m: usize, max_len: usize) -> BTreeSet<PhraseSpan> {
    let mut out = BTreeSet::new();
    for s1 in 0..n {
        for s2 in s1 + 1..=(s1 + max_len).min(n) {
            for t1 in 0..m {
                for t2 in t1 + 1..=(t1 + max_len).min(m) {
                    let mut inside = 0;
                    let mut leaving = 0;
                    for &(i, j) in a.links() {
                        let in_s = (s1..s2).contains(&(i as usize));
                        let in_t = (t1..t2).contains(&(j as usize));
                        if in_s && in_t {
                            inside += 1;
                        } else if in_s || in_t {
                            leaving += 1;
                        }
                    }
                    if inside > 0 && leaving == 0 {
                        out.insert(PhraseSpan {
                            src_start: s1,
                            src_end: s2,
                            tgt_start: t1,
                            tgt_end: t2,
                        });
                    }
                }
            }
        }
    }
    out
}

fn c3_phrase_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 1500;
    let mut mismatches = 0;
    let mut spans = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=8);
        let max_len = if rng.gen_bool(0.5) { 8 } else { rng.gen_range(1..=8) };
        let a = random_alignment(&mut rng, n, m);
        let got: Vec<PhraseSpan> = extract_spans(&a, n, m, max_len);
        let got_set: BTreeSet<PhraseSpan> = got.iter().copied().collect();
        let oracle = consistent_rectangles(&a, n, m, max_len);
        spans += oracle.len();
        if got_set != oracle || got_set.len() != got.len() {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("{trials} random pairs, {spans} oracle phrase pairs, {mismatches} mismatching pairs"),
    )
}

fn c4_gdfa_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 2000;
    let mut violations = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=12);
        let m = rng.gen_range(1..=12);
        let f = random_alignment(&mut rng, n, m);
        let r = random_alignment(&mut rng, n, m);
        let out = symmetrize_gdfa(&f, &r, n, m).unwrap();
        let lower = f
            .links()
            .iter()
            .filter(|l| r.contains(l.0, l.1))
            .all(|l| out.contains(l.0, l.1));
        let upper = out.links().iter().all(|l| f.contains(l.0, l.1) || r.contains(l.0, l.1));
        if !(lower && upper) {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("{trials} random alignment pairs, {violations} violations"),
    )
}

/// Selectors for all six strategies trained on `train`.
struct Resources {
    selectors: Vec<Selector>,
}

fn build_small_resources(train: &Bitext, seed: u64) -> Resources {
    let k_max = 30;
    let cooc = count_cooccurrences(train, 1);
    let alignments = align_symmetric(train, &EmConfig::default()).unwrap();
    let links = count_links(train, &alignments).unwrap();
    let h = hellinger_transform(&cooc);
    let (nt, ns) = h.dims();
    let emb = factorize(&h, 8.min(nt).min(ns), Solver::Exact).unwrap();
    let phrases = extract_phrases(train, &alignments, 3, 1).unwrap();
    let (svm, _) = train_ensemble(
        train,
        None,
        &SvmConfig {
            seed,
            ..SvmConfig::default()
        },
    )
    .unwrap();
    let src_unk = train.src_vocab.unk_id();
    let tv = Arc::clone(&train.tgt_vocab);
    let tgt_unk = tv.unk_id();
    let resources = [
        (
            Strategy::Cooccur,
            Resource::Shortlist(Arc::new(topk(&cooc, k_max, Statistic::Joint))),
        ),
        (
            Strategy::Pmi,
            Resource::Shortlist(Arc::new(topk(&cooc, k_max, Statistic::Pmi { floor: 3 }))),
        ),
        (
            Strategy::Pca,
            Resource::Shortlist(Arc::new(emb.shortlists(k_max, Metric::Reconstruction, Some(tgt_unk)))),
        ),
        (
            Strategy::WordAlign,
            Resource::Shortlist(Arc::new(topk_aligned(&links, k_max))),
        ),
        (Strategy::Phrase, Resource::Phrase(Arc::new(phrases))),
        (Strategy::Svm, Resource::Svm(Arc::new(svm))),
    ];
    let selectors = resources
        .into_iter()
        .map(|(s, r)| Selector::new(s, 5, 0, r, src_unk, Arc::clone(&tv)).unwrap())
        .collect();
    Resources { selectors }
}

fn c5_selection_algebra() -> Outcome {
    let mut checks = 0usize;
    let mut failures = Vec::new();
    for corpus in 0..8u64 {
        let lines = translation_corpus(&SynthConfig {
            pairs: 300,
            vocab: 80,
            seed: 100 + corpus,
            ..SynthConfig::default()
        })
        .unwrap();
        // A capped vocabulary leaves some reference tokens unknown.
        let b = bitext_from(&lines, 60);
        let res = build_small_resources(&b, corpus);
        let v_real = b.tgt_vocab.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(corpus);
        for sel in &res.selectors {
            let name = sel.strategy().name();
            for _ in 0..15 {
                let size = rng.gen_range(1..=8);
                let idx: Vec<usize> = (0..size).map(|_| rng.gen_range(0..b.len())).collect();
                let batch: Vec<&[TokenId]> = idx.iter().map(|&i| b.pairs[i].src.as_slice()).collect();
                let refs: Vec<&[TokenId]> = idx.iter().map(|&i| b.pairs[i].tgt.as_slice()).collect();

                let ks = [0, 1, 2, 3, 5, 10, 30];
                for w in ks.windows(2) {
                    let a = sel.with_params(w[0], 0).select_batch(&batch);
                    let c = sel.with_params(w[1], 0).select_batch(&batch);
                    checks += 1;
                    if !a.ids().iter().all(|&t| c.contains(t)) {
                        failures.push(format!("{name}: k {} not within k {}", w[0], w[1]));
                    }
                }
                let cs = [0, 1, 10, 40, v_real];
                for w in cs.windows(2) {
                    let a = sel.with_params(5, w[0]).select_batch(&batch);
                    let c = sel.with_params(5, w[1]).select_batch(&batch);
                    checks += 1;
                    if !a.ids().iter().all(|&t| c.contains(t)) {
                        failures.push(format!("{name}: common {} not within common {}", w[0], w[1]));
                    }
                }
                let full = sel.with_params(5, v_real).select_batch(&batch);
                checks += 1;
                if full.ids() != (0..v_real as TokenId).collect::<Vec<_>>() {
                    failures.push(format!("{name}: common_n = V is not the full vocabulary"));
                }

                let base = sel.select_batch(&batch);
                let mut shuffled = batch.clone();
                shuffled.shuffle(&mut rng);
                checks += 1;
                if sel.select_batch(&shuffled) != base {
                    failures.push(format!("{name}: batch order changes selection"));
                }

                let (train_sub, oov) = sel.select_training(&batch, &refs).unwrap();
                let unk = b.tgt_vocab.unk_id();
                let in_vocab: Vec<TokenId> = refs
                    .iter()
                    .flat_map(|r| r.iter().copied())
                    .filter(|&t| t != unk)
                    .collect();
                let unk_count = refs.iter().flat_map(|r| r.iter()).filter(|&&t| t == unk).count();
                checks += 1;
                if !in_vocab.iter().all(|&t| train_sub.contains(t)) || oov != unk_count {
                    failures.push(format!("{name}: training selection misses reference tokens"));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{checks} checks over 8 corpora x 6 strategies, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn c6_pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_err = 0.0f64;
    let mut rank_mismatch = 0;
    for _ in 0..50 {
        let n_src = rng.gen_range(2..=12);
        let n_tgt = rng.gen_range(2..=12);
        let mut triples = Vec::new();
        for s in 0..n_src as u32 {
            let mut targets: Vec<u32> = (0..n_tgt as u32).collect();
            targets.shuffle(&mut rng);
            let support = rng.gen_range(1..=n_tgt);
            // Distinct counts within a column keep the direct ranking strict.
            let mut counts: Vec<u64> = (1..=support as u64).map(|c| c * 3).collect();
            counts.shuffle(&mut rng);
            for (t, c) in targets[..support].iter().zip(counts) {
                triples.push((s, *t, c));
            }
        }
        let table = CooccurTable::from_triples(n_src, n_tgt, triples);
        let h = hellinger_transform(&table);
        let d = n_src.min(n_tgt);
        let emb = factorize(&h, d, Solver::Exact).unwrap();
        let dense = h.to_dense();
        worst_err = worst_err.max((emb.reconstruction() - &dense).norm() / dense.norm());
        for s in 0..n_src as u32 {
            let mut direct: Vec<(u32, u64)> = table.row(s).to_vec();
            direct.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let direct: Vec<u32> = direct.into_iter().map(|(t, _)| t).collect();
            if emb.nearest_targets(s, direct.len(), Metric::Reconstruction) != direct {
                rank_mismatch += 1;
            }
        }
    }
    check(
        worst_err <= 1e-6 && rank_mismatch == 0,
        format!("50 random tables, worst relative Frobenius error {worst_err:.2e}, {rank_mismatch} ranking mismatches"),
    )
}

fn c7_svm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut train_errors = 0;
    for dataset in 0..20u64 {
        let key = rng.gen_range(0..40u32);
        let data: Vec<Example> = (0..400)
            .map(|_| {
                let positive = rng.gen_bool(0.3);
                let mut f: Vec<u32> = (0..rng.gen_range(1..8))
                    .map(|_| rng.gen_range(0..40))
                    .filter(|&x| x != key)
                    .collect();
                if positive {
                    f.push(key);
                }
                f.sort_unstable();
                f.dedup();
                Example { features: f, positive }
            })
            .collect();
        let m = train_one(
            0,
            &data,
            &SvmConfig {
                epochs: 50,
                ..SvmConfig::default()
            },
            dataset,
        )
        .unwrap();
        train_errors += data
            .iter()
            .filter(|e| (m.score(&e.features) >= 0.0) != e.positive)
            .count();
    }

    let mut bit_mismatch = 0;
    for _ in 0..1000 {
        let weights: BTreeSet<u32> = (0..rng.gen_range(0..30)).map(|_| rng.gen_range(0..60)).collect();
        let model = SvmModel {
            target: 0,
            weights: weights.into_iter().map(|f| (f, rng.gen_range(-10.0..10.0))).collect(),
            bias: rng.gen_range(-2.0..2.0),
            threshold: 0.0,
        };
        let feats: BTreeSet<u32> = (0..rng.gen_range(0..20)).map(|_| rng.gen_range(0..60)).collect();
        let feats: Vec<u32> = feats.into_iter().collect();
        let mut x = vec![0.0; 60];
        for &f in &feats {
            x[f as usize] = 1.0;
        }
        if model.score(&feats).to_bits() != model.score_dense(&x).to_bits() {
            bit_mismatch += 1;
        }
    }

    let lines = translation_corpus(&SynthConfig {
        pairs: 3000,
        vocab: 150,
        seed: 77,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = bitext_from(&lines, usize::MAX);
    let (train, valid) = b.holdout_split(0.2, 7).unwrap();
    let (mut ens, _) = train_ensemble(&train, None, &SvmConfig::default()).unwrap();
    let target = 0.9;
    let flagged = calibrate(&mut ens, &valid, CalibrationMode::Recall(target)).unwrap();
    let (su, tu) = (valid.src_vocab.unk_id(), valid.tgt_vocab.unk_id());
    let mut worst_recall = 1.0f64;
    let (mut hit_all, mut pos_all) = (0usize, 0usize);
    for m in ens.models() {
        let (mut hit, mut pos) = (0usize, 0usize);
        for p in &valid.pairs {
            if featurize(&p.tgt, tu).contains(&m.target) {
                pos += 1;
                if m.fires(&featurize(&p.src, su)) {
                    hit += 1;
                }
            }
        }
        if pos > 0 {
            worst_recall = worst_recall.min(hit as f64 / pos as f64);
        }
        hit_all += hit;
        pos_all += pos;
    }
    check(
        train_errors == 0 && bit_mismatch == 0 && worst_recall >= target,
        format!(
            "training errors {train_errors} over 20 separable sets; {bit_mismatch}/1000 sparse-dense mismatches; \
             {} models calibrated to recall {target}, worst validation recall {worst_recall:.3}, overall {:.3}, {} flagged",
            ens.models().len(),
            hit_all as f64 / pos_all.max(1) as f64,
            flagged.len()
        ),
    )
}

/// Desk-scale corpus and resources shared by criteria 8, 9 and 11.
struct Desk {
    test: Bitext,
    cooccur: Arc<ShortlistTable>,
    pmi: Arc<ShortlistTable>,
    pca: Arc<ShortlistTable>,
    word_align: Arc<ShortlistTable>,
    phrase: Resource,
    svm: Resource,
    log: Vec<String>,
}

const DESK_K_MAX: usize = 500;
const DESK_PCA_DIM: usize = 256;

fn build_desk() -> Desk {
    let pairs: usize = std::env::var("VOCABSEL_DESK_PAIRS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(100_000);
    let mut log = Vec::new();
    let lap = {
        let t = Instant::now();
        move |what: &str, log: &mut Vec<String>| log.push(format!("{what} at {:.1} s", t.elapsed().as_secs_f64()))
    };
    let lines = translation_corpus(&SynthConfig {
        pairs,
        vocab: 5000,
        seed: 2024,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = bitext_from(&lines, 30_000);
    let (train, test) = b.holdout_split(0.01, 1).unwrap();
    lap("corpus", &mut log);

    let cooc = count_cooccurrences(&train, 1);
    let tgt_unk = train.tgt_vocab.unk_id();
    let cooccur = Arc::new(topk(&cooc, DESK_K_MAX, Statistic::Joint));
    let pmi = Arc::new(topk(&cooc, DESK_K_MAX, Statistic::Pmi { floor: 10 }));
    lap("co-occurrence shortlists", &mut log);

    let emb = factorize(&hellinger_transform(&cooc), DESK_PCA_DIM, Solver::Auto).unwrap();
    let pca = Arc::new(emb.shortlists(DESK_K_MAX, Metric::Reconstruction, Some(tgt_unk)));
    lap("pca", &mut log);

    let alignments = align_symmetric(&train, &EmConfig::default()).unwrap();
    let links = count_links(&train, &alignments).unwrap();
    let word_align = Arc::new(topk_aligned(&links, DESK_K_MAX));
    lap("alignment", &mut log);

    let phrases = extract_phrases(&train, &alignments, 3, 1).unwrap().prune(2).unwrap();
    lap("phrases", &mut log);

    let svm_pairs: Vec<usize> = (0..(train.len() * 4 / 5).min(20_000)).collect();
    let svm_train = train.select(&svm_pairs);
    let dev_pairs: Vec<usize> = (svm_pairs.len()..train.len().min(svm_pairs.len() + 2000)).collect();
    let svm_dev = train.select(&dev_pairs);
    let (mut svm, _) = train_ensemble(
        &svm_train,
        None,
        &SvmConfig {
            epochs: 5,
            ..SvmConfig::default()
        },
    )
    .unwrap();
    calibrate(&mut svm, &svm_dev, CalibrationMode::Frequency(1.0)).unwrap();
    lap("svm", &mut log);

    Desk {
        test,
        cooccur,
        pmi,
        pca,
        word_align,
        phrase: Resource::Phrase(Arc::new(phrases)),
        svm: Resource::Svm(Arc::new(svm)),
        log,
    }
}

impl Desk {
    fn selector(&self, strategy: Strategy, k: usize, common_n: usize) -> Selector {
        let resource = match strategy {
            Strategy::Cooccur => Resource::Shortlist(Arc::clone(&self.cooccur)),
            Strategy::Pmi => Resource::Shortlist(Arc::clone(&self.pmi)),
            Strategy::Pca => Resource::Shortlist(Arc::clone(&self.pca)),
            Strategy::WordAlign => Resource::Shortlist(Arc::clone(&self.word_align)),
            Strategy::Phrase => self.phrase.clone(),
            Strategy::Svm => self.svm.clone(),
        };
        Selector::new(
            strategy,
            k,
            common_n,
            resource,
            self.test.src_vocab.unk_id(),
            Arc::clone(&self.test.tgt_vocab),
        )
        .unwrap()
    }

    /// Smallest-error `k` in `1..=DESK_K_MAX` for a target average vocabulary.
    fn match_k(&self, strategy: Strategy, target: f64) -> (usize, f64, f64) {
        let eval = |k: usize| evaluate(&self.selector(strategy, k, 0), &self.test, 1).unwrap();
        let (mut lo, mut hi) = (1, DESK_K_MAX);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if eval(mid).avg_vocab < target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let mut best = eval(lo);
        let mut best_k = lo;
        if lo > 1 {
            let below = eval(lo - 1);
            if (below.avg_vocab - target).abs() < (best.avg_vocab - target).abs() {
                best = below;
                best_k = lo - 1;
            }
        }
        (best_k, best.avg_vocab, best.coverage)
    }
}

fn c8_strategy_ordering(desk: &Desk) -> Outcome {
    let wa = evaluate(&desk.selector(Strategy::WordAlign, 10, 0), &desk.test, 1).unwrap();
    let target = wa.avg_vocab;
    let (kc, vc, cc) = desk.match_k(Strategy::Cooccur, target);
    let (kp, vp, cp) = desk.match_k(Strategy::Pca, target);
    let matched = |v: f64| (v - target).abs() <= 0.15 * target;
    check(
        matched(vc) && matched(vp) && wa.coverage > cc && wa.coverage > cp,
        format!(
            "word_align k=10 avg {:.1} coverage {:.4}; cooccur k={kc} avg {vc:.1} coverage {cc:.4}; \
             pca k={kp} avg {vp:.1} coverage {cp:.4}",
            wa.avg_vocab, wa.coverage
        ),
    )
}

fn c9_nested_coverage(desk: &Desk) -> Outcome {
    let small = desk.selector(Strategy::WordAlign, 100, 0);
    let large = desk.selector(Strategy::WordAlign, 500, 0);
    let unk = desk.test.tgt_vocab.unk_id();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut covered, mut total) = (0, 0);
    for p in &desk.test.pairs {
        // Mock system output: reference-length draw from the words the
        // smaller selection proposes for this sentence.
        let pool: Vec<TokenId> = p.src.iter().flat_map(|&s| small.select_word(s)).collect();
        if pool.is_empty() {
            continue;
        }
        let output: Vec<TokenId> = (0..p.tgt.len()).map(|_| *pool.choose(&mut rng).unwrap()).collect();
        let (c, t) = coverage_vs_output(&large.select_sentence(&p.src), &output, unk);
        covered += c;
        total += t;
    }
    let rate = covered as f64 / total.max(1) as f64;
    check(
        rate >= 0.99,
        format!("top-500 covers {covered}/{total} = {rate:.4} of top-100 mock output tokens"),
    )
}

fn c10_linear_scaling() -> Outcome {
    let sizes = [500, 1000, 2000, 5000, 10_000, 100_000];
    let report = scoring_bench(100_000, 512, &sizes, 100, 10).unwrap();
    let xs: Vec<f64> = report.rows.iter().map(|r| r.vocab_size as f64).collect();
    let ys: Vec<f64> = report.rows.iter().map(|r| r.mean_time_ms).collect();
    let (a, b, r2) = fit_linear(&xs, &ys);
    let t = |v: usize| report.rows.iter().find(|r| r.vocab_size == v).unwrap().mean_time_ms;
    let ratio = t(100_000) / t(1000);
    let times: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}:{:.3}", r.vocab_size, r.mean_time_ms))
        .collect();
    check(
        r2 >= 0.95 && ratio >= 10.0,
        format!(
            "ms per step {}; full scan {:.3}; fit {a:.3e} ms/word + {b:.3} ms, R2 {r2:.4}; time(100k)/time(1k) {ratio:.1}",
            times.join(" "),
            report.full.mean_time_ms
        ),
    )
}

fn c11_batched_growth(desk: &Desk) -> Outcome {
    let mut parts = Vec::new();
    let mut violations = Vec::new();
    for strategy in Strategy::ALL {
        let k = if strategy == Strategy::Phrase { 3 } else { 20 };
        let one = evaluate(&desk.selector(strategy, k, 0), &desk.test, 1)
            .unwrap()
            .avg_vocab;
        let batched: Vec<f64> = [0, 1000, 2000]
            .iter()
            .map(|&c| {
                evaluate(&desk.selector(strategy, k, c), &desk.test, 32)
                    .unwrap()
                    .avg_vocab
            })
            .collect();
        if batched[0] <= one {
            violations.push(format!("{} does not grow with batching", strategy.name()));
        }
        for (i, step) in ["0->1000", "1000->2000"].iter().enumerate() {
            let delta = batched[i + 1] - batched[i];
            if delta >= 1000.0 {
                violations.push(format!("{} common {step} adds {delta:.0}", strategy.name()));
            }
        }
        parts.push(format!(
            "{} b1 {one:.0} b32 {:.0}/{:.0}/{:.0}",
            strategy.name(),
            batched[0],
            batched[1],
            batched[2]
        ));
    }
    let mut detail = format!("avg vocab at common 0/1000/2000: {}", parts.join("; "));
    if !violations.is_empty() {
        detail.push_str(&format!("; violations: {}", violations.join(", ")));
    }
    check(violations.is_empty(), detail)
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome, failed: &mut usize) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("criterion {id:>2} {name}: PASS ({d}) [{secs:.1} s]"),
        Err(d) => {
            *failed += 1;
            println!("criterion {id:>2} {name}: FAIL ({d}) [{secs:.1} s]");
        }
    }
}

fn main() {
    let mut failed = 0;
    run(1, "EM monotonicity", c1_em_monotone, &mut failed);
    run(2, "copy-language alignment", c2_copy_language, &mut failed);
    run(3, "phrase extraction oracle", c3_phrase_oracle, &mut failed);
    run(4, "gdfa bounds", c4_gdfa_bounds, &mut failed);
    run(5, "selection algebra", c5_selection_algebra, &mut failed);
    run(6, "PCA correctness", c6_pca, &mut failed);
    run(7, "SVM correctness", c7_svm, &mut failed);

    let start = Instant::now();
    let desk = catch_unwind(build_desk);
    match &desk {
        Ok(d) => println!(
            "desk-scale resources built in {:.1} s ({})",
            start.elapsed().as_secs_f64(),
            d.log.join(", ")
        ),
        Err(_) => println!("desk-scale resources failed to build"),
    }
    let desk = desk.ok();
    let with_desk = |f: fn(&Desk) -> Outcome| -> Outcome {
        match &desk {
            Some(d) => f(d),
            None => Err("desk-scale resources unavailable".to_string()),
        }
    };
    run(8, "strategy ordering", || with_desk(c8_strategy_ordering), &mut failed);
    run(9, "nested coverage", || with_desk(c9_nested_coverage), &mut failed);
    run(10, "linear scaling", c10_linear_scaling, &mut failed);
    run(
        11,
        "batched vocabulary growth",
        || with_desk(c11_batched_growth),
        &mut failed,
    );

    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::{info, warn};
use vocabsel::align::{
    align_bitext, count_links, read_pharaoh, symmetrize_gdfa, topk_aligned, train_em, write_pharaoh, AlignmentModel,
    Direction, EmConfig,
};
use vocabsel::bench::{self, fit_linear, scoring_bench};
use vocabsel::cooccur::{count_cooccurrences, topk, CooccurTable, ShortlistTable, Statistic};
use vocabsel::corpus::{self, filter_by_length, holdout_indices, read_lines, Bitext, Vocab};
use vocabsel::pca::{factorize, hellinger_transform, Metric, Solver};
use vocabsel::phrase::{extract_phrases, PhraseTable};
use vocabsel::select::{write_selection, Resource, Selector, Strategy};
use vocabsel::svm::{calibrate, train_ensemble, CalibrationMode, SvmConfig, SvmEnsemble};
use vocabsel::synth::{translation_corpus, SynthConfig};

use crate::{
    BitextArgs, CalibrationArg, Cli, Command, DirectionArg, LinkSource, MetricArg, SelectorArgs, SolverArg,
    StatisticArg, VocabArgs,
};

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)
        .map_err(vocabsel::Error::Io)
        .with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path)
        .map_err(vocabsel::Error::Io)
        .with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush()
        .map_err(vocabsel::Error::Io)
        .with_context(|| format!("cannot write {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Arc<Vocab>> {
    let v = Vocab::load(path).with_context(|| format!("cannot load vocabulary {}", path.display()))?;
    Ok(Arc::new(v))
}

fn load_vocabs(v: &VocabArgs) -> Result<(Arc<Vocab>, Arc<Vocab>)> {
    Ok((load_vocab(&v.src_vocab)?, load_vocab(&v.tgt_vocab)?))
}

fn load_bitext(b: &BitextArgs) -> Result<Bitext> {
    let src_vocab = load_vocab(&b.src_vocab)?;
    let tgt_vocab = load_vocab(&b.tgt_vocab)?;
    let src = read_lines(&b.src).with_context(|| format!("cannot read {}", b.src.display()))?;
    let tgt = read_lines(&b.tgt).with_context(|| format!("cannot read {}", b.tgt.display()))?;
    let mut bitext = corpus::encode(&src, &tgt, src_vocab, tgt_vocab)
        .with_context(|| format!("cannot encode {} / {}", b.src.display(), b.tgt.display()))?;
    if let Some(max) = b.max_sentence_len {
        let before = bitext.len();
        bitext = filter_by_length(&bitext, max)?;
        info!(
            "kept {} of {before} pairs with at most {max} tokens per side",
            bitext.len()
        );
    }
    if bitext.is_empty() {
        return Err(vocabsel::Error::EmptyCorpus.into());
    }
    info!("loaded {} sentence pairs", bitext.len());
    Ok(bitext)
}

fn load_resource(strategy: Strategy, path: &Path, src: &Vocab, tgt: &Vocab) -> Result<Resource> {
    let ctx = || format!("cannot load {strategy} resource {}", path.display());
    Ok(match strategy {
        Strategy::Phrase => Resource::Phrase(Arc::new(
            PhraseTable::read_tsv(open(path)?, src, tgt).with_context(ctx)?,
        )),
        Strategy::Svm => Resource::Svm(Arc::new(SvmEnsemble::read_binary(open(path)?).with_context(ctx)?)),
        _ => Resource::Shortlist(Arc::new(
            ShortlistTable::read_tsv(open(path)?, src, tgt, strategy.name()).with_context(ctx)?,
        )),
    })
}

fn build_selector(args: &SelectorArgs, src: &Vocab, tgt: Arc<Vocab>) -> Result<Selector> {
    let resource = load_resource(args.strategy, &args.resource, src, &tgt)?;
    Ok(Selector::new(
        args.strategy,
        args.k,
        args.common,
        resource,
        src.unk_id(),
        tgt,
    )?)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Synth {
            pairs,
            vocab,
            seed,
            src_out,
            tgt_out,
        } => {
            let (src, tgt) = translation_corpus(&SynthConfig {
                pairs,
                vocab,
                seed,
                ..SynthConfig::default()
            })?;
            for (lines, path) in [(src, &src_out), (tgt, &tgt_out)] {
                let mut w = create(path)?;
                for l in lines {
                    writeln!(w, "{l}")?;
                }
                finish(w, path)?;
            }
        }

        Command::Split {
            src,
            tgt,
            fraction,
            seed,
            prefix,
        } => {
            let s = read_lines(&src).with_context(|| format!("cannot read {}", src.display()))?;
            let t = read_lines(&tgt).with_context(|| format!("cannot read {}", tgt.display()))?;
            if s.len() != t.len() {
                return Err(vocabsel::Error::LineCountMismatch {
                    src: s.len(),
                    tgt: t.len(),
                }
                .into());
            }
            let (train, dev) = holdout_indices(s.len(), fraction, seed)?;
            info!("{} training and {} held-out pairs", train.len(), dev.len());
            for (part, idx) in [("train", &train), ("dev", &dev)] {
                for (side, lines) in [("src", &s), ("tgt", &t)] {
                    let mut name = prefix.clone().into_os_string();
                    name.push(format!(".{part}.{side}"));
                    let path = PathBuf::from(name);
                    let mut w = create(&path)?;
                    for &i in idx.iter() {
                        writeln!(w, "{}", lines[i])?;
                    }
                    finish(w, &path)?;
                }
            }
        }

        Command::BuildVocab {
            input,
            output,
            max_size,
            unk,
        } => {
            let lines = read_lines(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let vocab = Vocab::build(&lines, max_size, &unk)?;
            info!("{} types plus {unk}", vocab.len() - 1);
            let mut w = create(&output)?;
            vocab.write_tsv(&mut w)?;
            finish(w, &output)?;
        }

        Command::CountCooccur {
            bitext,
            output,
            tsv,
            shortlist,
            statistic,
            k,
            pmi_floor,
        } => {
            let b = load_bitext(&bitext)?;
            let table = count_cooccurrences(&b, threads);
            info!("{} non-zero cells over {} pairs", table.nnz(), b.len());
            if let Some(p) = &output {
                let mut w = create(p)?;
                table.write_binary(&mut w)?;
                finish(w, p)?;
            }
            if let Some(p) = &tsv {
                let mut w = create(p)?;
                table.write_tsv(&mut w, &b.src_vocab, &b.tgt_vocab)?;
                finish(w, p)?;
            }
            if let Some(p) = &shortlist {
                let stat = match statistic {
                    StatisticArg::Joint => Statistic::Joint,
                    StatisticArg::Pmi => Statistic::Pmi { floor: pmi_floor },
                };
                let mut w = create(p)?;
                topk(&table, k, stat).write_tsv(&mut w, &b.src_vocab, &b.tgt_vocab)?;
                finish(w, p)?;
            }
        }

        Command::TrainPca {
            table,
            vocabs,
            dim,
            solver,
            iters,
            seed,
            output,
            tsv,
            shortlist,
            k,
            metric,
        } => {
            let (src, tgt) = load_vocabs(&vocabs)?;
            let t = CooccurTable::read_binary(open(&table)?)
                .with_context(|| format!("cannot load co-occurrence table {}", table.display()))?;
            if t.n_src() != src.len() || t.n_tgt() != tgt.len() {
                return Err(vocabsel::Error::Format(format!(
                    "table is {}x{} but the vocabularies have {} and {} entries",
                    t.n_src(),
                    t.n_tgt(),
                    src.len(),
                    tgt.len()
                ))
                .into());
            }
            let h = hellinger_transform(&t);
            let max_dim = t.n_src().min(t.n_tgt());
            let d = if dim > max_dim {
                warn!("dimension {dim} exceeds min(V_src, V_tgt) = {max_dim}; using {max_dim}");
                max_dim
            } else {
                dim
            };
            let solver = match solver {
                SolverArg::Auto => Solver::Auto,
                SolverArg::Exact => Solver::Exact,
                SolverArg::Subspace => Solver::Subspace { max_iters: iters, seed },
            };
            let emb = factorize(&h, d, solver)?;
            info!("factorized {} non-zeros at d={d}", h.nnz());
            if let Some(p) = &output {
                let mut w = create(p)?;
                emb.write_binary(&mut w)?;
                finish(w, p)?;
            }
            if let Some(p) = &tsv {
                let mut w = create(p)?;
                emb.write_tsv(&mut w, &src, &tgt)?;
                finish(w, p)?;
            }
            if let Some(p) = &shortlist {
                let metric = match metric {
                    MetricArg::Reconstruction => Metric::Reconstruction,
                    MetricArg::Euclidean => Metric::Euclidean,
                };
                let mut w = create(p)?;
                emb.shortlists(k, metric, Some(tgt.unk_id()))
                    .write_tsv(&mut w, &src, &tgt)?;
                finish(w, p)?;
            }
        }

        Command::TrainAlign {
            bitext,
            direction,
            iterations,
            lambda,
            p0,
            output,
        } => {
            let b = load_bitext(&bitext)?;
            let direction = match direction {
                DirectionArg::Forward => Direction::SrcToTgt,
                DirectionArg::Reverse => Direction::TgtToSrc,
            };
            let config = EmConfig {
                iterations,
                lambda,
                p0,
                threads,
            };
            let (model, lls) = train_em(&b, direction, &config)?;
            for (i, ll) in lls.iter().enumerate() {
                info!("iteration {i}: log-likelihood {ll:.3}");
            }
            let mut w = create(&output)?;
            model.write_binary(&mut w)?;
            finish(w, &output)?;
        }

        Command::AlignViterbi { bitext, model, output } => {
            let b = load_bitext(&bitext)?;
            let m = AlignmentModel::read_binary(open(&model)?)
                .with_context(|| format!("cannot load alignment model {}", model.display()))?;
            let als = align_bitext(&m, &b);
            let mut w = create(&output)?;
            write_pharaoh(&als, &mut w)?;
            finish(w, &output)?;
        }

        Command::Symmetrize {
            bitext,
            forward,
            reverse,
            output,
            shortlist,
            k,
            shortlist_from,
        } => {
            let b = load_bitext(&bitext)?;
            let fwd = read_pharaoh(open(&forward)?).with_context(|| format!("cannot parse {}", forward.display()))?;
            let rev = read_pharaoh(open(&reverse)?).with_context(|| format!("cannot parse {}", reverse.display()))?;
            if fwd.len() != b.len() || rev.len() != b.len() {
                return Err(vocabsel::Error::LineCountMismatch {
                    src: b.len(),
                    tgt: if fwd.len() != b.len() { fwd.len() } else { rev.len() },
                })
                .context("alignment files must have one line per sentence pair");
            }
            let mut merged = Vec::with_capacity(b.len());
            for (i, p) in b.pairs.iter().enumerate() {
                let a = symmetrize_gdfa(&fwd[i], &rev[i], p.src.len(), p.tgt.len())
                    .with_context(|| format!("sentence pair {}", i + 1))?;
                merged.push(a);
            }
            let mut w = create(&output)?;
            write_pharaoh(&merged, &mut w)?;
            finish(w, &output)?;
            if let Some(p) = &shortlist {
                let source = match shortlist_from {
                    LinkSource::Symmetrized => &merged,
                    LinkSource::Forward => &fwd,
                    LinkSource::Reverse => &rev,
                };
                let links = count_links(&b, source)?;
                let mut w = create(p)?;
                topk_aligned(&links, k).write_tsv(&mut w, &b.src_vocab, &b.tgt_vocab)?;
                finish(w, p)?;
            }
        }

        Command::ExtractPhrases {
            bitext,
            alignment,
            max_len,
            min_count,
            output,
        } => {
            let b = load_bitext(&bitext)?;
            let als =
                read_pharaoh(open(&alignment)?).with_context(|| format!("cannot parse {}", alignment.display()))?;
            let mut table = extract_phrases(&b, &als, max_len, threads)?;
            if min_count > 1 {
                table = table.prune(min_count)?;
            }
            info!("{} source phrases, {} phrase pairs", table.len(), table.n_pairs());
            let mut w = create(&output)?;
            table.write_tsv(&mut w, &b.src_vocab, &b.tgt_vocab)?;
            finish(w, &output)?;
        }

        Command::TrainSvm {
            bitext,
            reg,
            epochs,
            neg_ratio,
            min_positive,
            seed,
            output,
            tsv,
        } => {
            let b = load_bitext(&bitext)?;
            let config = SvmConfig {
                reg,
                epochs,
                neg_ratio,
                min_positive,
                seed,
                threads,
            };
            let (ens, skipped) = train_ensemble(&b, None, &config)?;
            info!(
                "trained {} models, skipped {} target words",
                ens.models().len(),
                skipped.len()
            );
            let mut w = create(&output)?;
            ens.write_binary(&mut w)?;
            finish(w, &output)?;
            if let Some(p) = &tsv {
                let mut w = create(p)?;
                ens.write_tsv(&mut w, &b.src_vocab, &b.tgt_vocab)?;
                finish(w, p)?;
            }
        }

        Command::CalibrateSvm {
            bitext,
            model,
            mode,
            value,
            output,
        } => {
            let b = load_bitext(&bitext)?;
            let mut ens = SvmEnsemble::read_binary(open(&model)?)
                .with_context(|| format!("cannot load SVM ensemble {}", model.display()))?;
            let mode = match mode {
                CalibrationArg::Recall => CalibrationMode::Recall(value),
                CalibrationArg::Frequency => CalibrationMode::Frequency(value),
            };
            let flagged = calibrate(&mut ens, &b, mode)?;
            if !flagged.is_empty() {
                warn!(
                    "{} models cannot reach the recall target and always fire",
                    flagged.len()
                );
            }
            let mut w = create(&output)?;
            ens.write_binary(&mut w)?;
            finish(w, &output)?;
        }

        Command::Select {
            selector,
            vocabs,
            input,
            batch_size,
            references,
            output,
        } => {
            if batch_size == 0 {
                return Err(vocabsel::Error::InvalidParameter {
                    name: "batch_size",
                    reason: "must be at least 1".into(),
                }
                .into());
            }
            let (src, tgt) = load_vocabs(&vocabs)?;
            let sel = build_selector(&selector, &src, Arc::clone(&tgt))?;
            let lines = read_lines(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let sents: Vec<Vec<u32>> = lines.iter().map(|l| src.encode(l)).collect();
            let refs: Option<Vec<Vec<u32>>> = match &references {
                Some(p) => {
                    let r = read_lines(p).with_context(|| format!("cannot read {}", p.display()))?;
                    if r.len() != lines.len() {
                        return Err(vocabsel::Error::LineCountMismatch {
                            src: lines.len(),
                            tgt: r.len(),
                        }
                        .into());
                    }
                    Some(r.iter().map(|l| tgt.encode(l)).collect())
                }
                None => None,
            };
            let mut subsets = Vec::new();
            let mut oov = 0;
            for (i, batch) in sents.chunks(batch_size).enumerate() {
                match &refs {
                    Some(r) => {
                        let lo = i * batch_size;
                        let (s, n) = sel.select_training(batch, &r[lo..lo + batch.len()])?;
                        oov += n;
                        subsets.push(s);
                    }
                    None => subsets.push(sel.select_batch(batch)),
                }
            }
            if refs.is_some() {
                info!("{oov} reference tokens are out of vocabulary");
            }
            let n = subsets.len().max(1) as f64;
            info!(
                "{} selections, average size {:.1}",
                subsets.len(),
                subsets.iter().map(|s| s.len()).sum::<usize>() as f64 / n
            );
            let mut w = sink(output.as_deref())?;
            write_selection(&mut w, &subsets, &tgt)?;
            w.flush()?;
        }

        Command::BenchCoverage {
            bitext,
            selector,
            batch_size,
            output,
        } => {
            let b = load_bitext(&bitext)?;
            let sel = build_selector(&selector, &b.src_vocab, Arc::clone(&b.tgt_vocab))?;
            let report = bench::evaluate(&sel, &b, batch_size)?;
            info!(
                "coverage {:.4}, average vocabulary {:.1}",
                report.coverage, report.avg_vocab
            );
            let mut w = sink(output.as_deref())?;
            bench::write_csv(&mut w, &[report])?;
            w.flush()?;
        }

        Command::Sweep {
            bitext,
            resources,
            k,
            common,
            batch_size,
            output,
        } => {
            let b = load_bitext(&bitext)?;
            let mut selectors = Vec::new();
            for (strategy, path) in &resources {
                let resource = load_resource(*strategy, path, &b.src_vocab, &b.tgt_vocab)?;
                let base = Selector::new(
                    *strategy,
                    0,
                    0,
                    resource,
                    b.src_vocab.unk_id(),
                    Arc::clone(&b.tgt_vocab),
                )?;
                let ks: &[usize] = if *strategy == Strategy::Svm { &k[..1] } else { &k };
                for &kk in ks {
                    for &c in &common {
                        selectors.push(base.with_params(kk, c));
                    }
                }
            }
            let mut reports = Vec::new();
            for &bs in &batch_size {
                reports.extend(bench::sweep(&selectors, &b, bs, threads)?);
            }
            info!("{} configurations evaluated", reports.len());
            let mut w = sink(output.as_deref())?;
            bench::write_csv(&mut w, &reports)?;
            w.flush()?;
        }

        Command::BenchSpeed {
            vocab_size,
            dim,
            sizes,
            steps,
            seed,
            output,
        } => {
            let report = scoring_bench(vocab_size, dim, &sizes, steps, seed)?;
            let xs: Vec<f64> = report.rows.iter().map(|r| r.vocab_size as f64).collect();
            let ys: Vec<f64> = report.rows.iter().map(|r| r.mean_time_ms).collect();
            if xs.len() >= 2 {
                let (a, b, r2) = fit_linear(&xs, &ys);
                info!("time per step = {:.3e} ms/word * V + {b:.4} ms (R2 {r2:.4})", a);
            }
            let mut w = sink(output.as_deref())?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

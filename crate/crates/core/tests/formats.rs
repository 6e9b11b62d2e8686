use std::io::Cursor;
use std::sync::Arc;

use vocabsel::align::{align_symmetric, read_pharaoh, train_em, write_pharaoh, AlignmentModel, Direction, EmConfig};
use vocabsel::cooccur::{count_cooccurrences, topk, CooccurTable, ShortlistTable, Statistic};
use vocabsel::corpus::{encode, Bitext, Vocab};
use vocabsel::pca::{factorize, hellinger_transform, BilingualEmbedding, Solver};
use vocabsel::phrase::{extract_phrases, PhraseTable};
use vocabsel::svm::{calibrate, train_ensemble, CalibrationMode, SvmConfig, SvmEnsemble};
use vocabsel::synth::{translation_corpus, SynthConfig};

fn corpus() -> Bitext {
    let (src, tgt) = translation_corpus(&SynthConfig {
        pairs: 400,
        vocab: 60,
        max_len: 12,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    let sv = Arc::new(Vocab::build(&src, 1000, "<unk>").unwrap());
    let tv = Arc::new(Vocab::build(&tgt, 1000, "<unk>").unwrap());
    encode(&src, &tgt, sv, tv).unwrap()
}

#[test]
fn every_resource_round_trips() {
    let b = corpus();
    let (sv, tv) = (&*b.src_vocab, &*b.tgt_vocab);

    let mut buf = Vec::new();
    sv.write_tsv(&mut buf).unwrap();
    assert_eq!(&Vocab::read_tsv(Cursor::new(&buf)).unwrap(), sv);

    let table = count_cooccurrences(&b, 1);
    let mut buf = Vec::new();
    table.write_binary(&mut buf).unwrap();
    assert_eq!(CooccurTable::read_binary(Cursor::new(&buf)).unwrap(), table);

    let lists = topk(&table, 7, Statistic::Joint);
    let mut buf = Vec::new();
    lists.write_tsv(&mut buf, sv, tv).unwrap();
    let back = ShortlistTable::read_tsv(Cursor::new(&buf), sv, tv, lists.provenance()).unwrap();
    assert_eq!(back, lists);

    let emb = factorize(&hellinger_transform(&table), 6, Solver::Auto).unwrap();
    let mut buf = Vec::new();
    emb.write_binary(&mut buf).unwrap();
    assert_eq!(BilingualEmbedding::read_binary(Cursor::new(&buf)).unwrap(), emb);

    let (model, _) = train_em(&b, Direction::TgtToSrc, &EmConfig::default()).unwrap();
    let mut buf = Vec::new();
    model.write_binary(&mut buf).unwrap();
    assert_eq!(AlignmentModel::read_binary(Cursor::new(&buf)).unwrap(), model);

    let als = align_symmetric(&b, &EmConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_pharaoh(&als, &mut buf).unwrap();
    assert_eq!(read_pharaoh(Cursor::new(&buf)).unwrap(), als);

    let phrases = extract_phrases(&b, &als, 3, 1).unwrap();
    let mut buf = Vec::new();
    phrases.write_tsv(&mut buf, sv, tv).unwrap();
    assert_eq!(PhraseTable::read_tsv(Cursor::new(&buf), sv, tv).unwrap(), phrases);

    let (mut ens, _) = train_ensemble(&b.select(&(0..300).collect::<Vec<_>>()), None, &SvmConfig::default()).unwrap();
    calibrate(
        &mut ens,
        &b.select(&(300..400).collect::<Vec<_>>()),
        CalibrationMode::Recall(0.9),
    )
    .unwrap();
    let mut buf = Vec::new();
    ens.write_binary(&mut buf).unwrap();
    assert_eq!(SvmEnsemble::read_binary(Cursor::new(&buf)).unwrap(), ens);
}

#[test]
fn corrupt_binaries_are_rejected() {
    let b = corpus();
    let table = count_cooccurrences(&b, 1);
    let mut buf = Vec::new();
    table.write_binary(&mut buf).unwrap();
    let err = CooccurTable::read_binary(Cursor::new(&buf[..buf.len() / 2])).unwrap_err();
    assert!(matches!(err.kind(), "bad_format" | "io"), "{err}");
    let err = SvmEnsemble::read_binary(Cursor::new(&buf)).unwrap_err();
    assert_eq!(err.kind(), "bad_format");
    let err = AlignmentModel::read_binary(Cursor::new(b"garbage")).unwrap_err();
    assert!(matches!(err.kind(), "bad_format" | "io"), "{err}");
}

#[test]
fn malformed_text_reports_the_line() {
    let b = corpus();
    let err = read_pharaoh(Cursor::new("0-0 1-1\n0-x\n")).unwrap_err();
    assert_eq!(err.kind(), "malformed_input");
    assert!(err.to_string().contains("line 2"), "{err}");
    let err = Vocab::read_tsv(Cursor::new("0\ta\t3\n2\tb\t1\n")).unwrap_err();
    assert_eq!(err.kind(), "malformed_input");
    let err = ShortlistTable::read_tsv(Cursor::new("s0\n"), &b.src_vocab, &b.tgt_vocab, "cooccur").unwrap_err();
    assert_eq!(err.kind(), "malformed_input");
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vocabsel::bench::{scoring_bench, ScoringFixture};

/// Best of three runs, which damps scheduler noise.
fn best_of_three(fx: &ScoringFixture, rows: &[u32]) -> f64 {
    (0..3)
        .map(|_| fx.time_gather(rows, 200).unwrap())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn disjoint_subsets_of_equal_size_take_equal_time() {
    let fx = ScoringFixture::new(40_000, 256, 7).unwrap();
    let mut ids: Vec<u32> = (0..40_000).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let mut a = ids[..5_000].to_vec();
    let mut b = ids[5_000..10_000].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let ta = best_of_three(&fx, &a);
    let tb = best_of_three(&fx, &b);
    let rel = (ta - tb).abs() / ta.min(tb);
    assert!(rel < 0.10, "{ta:.4} ms vs {tb:.4} ms ({:.1}% apart)", 100.0 * rel);
}

#[test]
fn scoring_bench_reports_every_size_and_a_full_scan() {
    let r = scoring_bench(5_000, 32, &[100, 1_000, 1_000, 0], 10, 3).unwrap();
    let sizes: Vec<usize> = r.rows.iter().map(|x| x.vocab_size).collect();
    assert_eq!(sizes, vec![100, 1_000, 5_000]);
    assert_eq!(r.full.vocab_size, 5_000);
    assert!(r
        .rows
        .iter()
        .all(|x| x.mean_time_ms > 0.0 && x.steps == 10 && x.d == 32));
    assert!(scoring_bench(5_000, 32, &[6_000], 10, 3).is_err());
    assert!(scoring_bench(5_000, 32, &[100], 5, 3).is_err());
}

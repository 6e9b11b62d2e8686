//! Diagonal alignment prior of the reparameterized IBM Model 2.
//!
//! A target word at 0-based position `i` of a length-`m` sentence links to
//! the null word with probability `p0`, and to source position `j` of a
//! length-`n` sentence with probability proportional to
//! `exp(-lambda * |(i+1)/m - (j+1)/n|)`, scaled so the real positions share
//! `1 - p0`.

/// Unnormalized diagonal affinity `exp(-lambda * h(i, j, m, n))`.
#[inline]
fn affinity(i: usize, j: usize, m: usize, n: usize, lambda: f64) -> f64 {
    let h = ((i + 1) as f64 / m as f64 - (j + 1) as f64 / n as f64).abs();
    (-lambda * h).exp()
}

/// Probability that target position `i` aligns to source position `j`.
pub fn diagonal_prior(i: usize, j: usize, m: usize, n: usize, lambda: f64, p0: f64) -> f64 {
    debug_assert!(i < m && j < n);
    let z: f64 = (0..n).map(|jj| affinity(i, jj, m, n, lambda)).sum();
    (1.0 - p0) * affinity(i, j, m, n, lambda) / z
}

/// Fills `out` with the prior over the `n` real source positions for target
/// position `i`; the null word implicitly receives `p0`.
pub fn prior_row(i: usize, m: usize, n: usize, lambda: f64, p0: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..n).map(|j| affinity(i, j, m, n, lambda)));
    let z: f64 = out.iter().sum();
    let scale = (1.0 - p0) / z;
    for v in out.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn zero_tension_is_uniform() {
        for j in 0..4 {
            assert_relative_eq!(diagonal_prior(1, j, 3, 4, 0.0, 0.08), 0.92 / 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        // i = 0 of m = 2 against n = 2: distances 0 and 1/2, weights 1 and e^-2.
        let z = 1.0 + (-2.0f64).exp();
        assert_relative_eq!(diagonal_prior(0, 0, 2, 2, 4.0, 0.08), 0.92 / z, epsilon = 1e-15);
        assert_relative_eq!(
            diagonal_prior(0, 1, 2, 2, 4.0, 0.08),
            0.92 * (-2.0f64).exp() / z,
            epsilon = 1e-15
        );
    }

    #[test]
    fn large_tension_concentrates_on_diagonal() {
        let p = diagonal_prior(3, 3, 8, 8, 200.0, 0.0);
        assert!(p > 0.999, "{p}");
    }

    #[test]
    fn row_sums_with_null() {
        let mut row = Vec::new();
        for (m, n) in [(1, 1), (3, 7), (9, 2)] {
            for i in 0..m {
                prior_row(i, m, n, 4.0, 0.08, &mut row);
                assert_relative_eq!(row.iter().sum::<f64>() + 0.08, 1.0, epsilon = 1e-12);
                for (j, &v) in row.iter().enumerate() {
                    assert_relative_eq!(v, diagonal_prior(i, j, m, n, 4.0, 0.08), epsilon = 1e-15);
                }
            }
        }
    }
}

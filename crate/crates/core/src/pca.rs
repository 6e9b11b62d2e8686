//! Bilingual embeddings from Hellinger PCA of the conditional co-occurrence
//! matrix `H[t][s] = sqrt(P(t | s))`, and nearest-target shortlists.
//!
//! The factorization is a truncated SVD without centering, so
//! `tgt_vecs * diag(sigma) * src_vecs^T` is the best rank-`d` approximation
//! of `H` and its entries can be read as smoothed co-occurrence estimates.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio;
use crate::cooccur::{by_score_desc, CooccurTable, ShortlistTable};
use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};

const EMBED_MAGIC: &[u8; 8] = b"VSEMBED1";

/// Sparse `V_tgt x V_src` matrix stored by source column.
#[derive(Debug, Clone, PartialEq)]
pub struct HellingerMatrix {
    n_tgt: usize,
    n_src: usize,
    cols: Vec<Vec<(TokenId, f64)>>,
}

/// Element-wise square root of the column-normalized counts.
pub fn hellinger_transform(table: &CooccurTable) -> HellingerMatrix {
    let cols = (0..table.n_src())
        .map(|s| {
            let s = s as TokenId;
            let m = table.src_marginal(s) as f64;
            table.row(s).iter().map(|&(t, c)| (t, (c as f64 / m).sqrt())).collect()
        })
        .collect();
    HellingerMatrix {
        n_tgt: table.n_tgt(),
        n_src: table.n_src(),
        cols,
    }
}

impl HellingerMatrix {
    pub fn dims(&self) -> (usize, usize) {
        (self.n_tgt, self.n_src)
    }

    pub fn column(&self, s: TokenId) -> &[(TokenId, f64)] {
        self.cols.get(s as usize).map_or(&[], Vec::as_slice)
    }

    pub fn get(&self, t: TokenId, s: TokenId) -> f64 {
        let col = self.column(s);
        col.binary_search_by_key(&t, |&(id, _)| id).map_or(0.0, |i| col[i].1)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_tgt, self.n_src);
        for (s, col) in self.cols.iter().enumerate() {
            for &(t, v) in col {
                m[(t as usize, s)] = v;
            }
        }
        m
    }

    /// `H x` for a row-major `n_src x b` block, giving `n_tgt x b`.
    fn mul(&self, x: &[f64], b: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_tgt * b];
        for (s, col) in self.cols.iter().enumerate() {
            let xs = &x[s * b..(s + 1) * b];
            for &(t, h) in col {
                let o = &mut out[t as usize * b..(t as usize + 1) * b];
                for (o, &v) in o.iter_mut().zip(xs) {
                    *o += h * v;
                }
            }
        }
        out
    }

    /// `H^T y` for a row-major `n_tgt x b` block, giving `n_src x b`.
    fn mul_t(&self, y: &[f64], b: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_src * b];
        for (s, col) in self.cols.iter().enumerate() {
            let o = &mut out[s * b..(s + 1) * b];
            for &(t, h) in col {
                let ys = &y[t as usize * b..(t as usize + 1) * b];
                for (o, &v) in o.iter_mut().zip(ys) {
                    *o += h * v;
                }
            }
        }
        out
    }
}

/// How the truncated decomposition is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    /// Exact eigendecomposition of the smaller Gram matrix when the problem is
    /// small enough, subspace iteration otherwise.
    Auto,
    Exact,
    Subspace {
        max_iters: usize,
        seed: u64,
    },
}

/// Largest `min(V_tgt, V_src)` handled by the exact solver under [`Solver::Auto`].
pub const EXACT_LIMIT: usize = 1024;

/// Convergence threshold on the relative change of the Ritz values.
const SUBSPACE_TOL: f64 = 1e-10;

/// Low-rank bilingual embedding. Row `s` of `src_vecs` and row `t` of
/// `tgt_vecs` are the right and left singular vectors of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualEmbedding {
    pub d: usize,
    pub n_src: usize,
    pub n_tgt: usize,
    /// Row-major `n_src x d`.
    pub src_vecs: Vec<f64>,
    /// Row-major `n_tgt x d`.
    pub tgt_vecs: Vec<f64>,
    pub singular_values: Vec<f64>,
}

/// Similarity used to rank target words for a source word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Reconstructed matrix entry `tgt_vecs[t] . diag(sigma) . src_vecs[s]`.
    Reconstruction,
    /// Negative squared distance between `sqrt(sigma)`-scaled embeddings.
    Euclidean,
}

pub fn factorize(h: &HellingerMatrix, d: usize, solver: Solver) -> Result<BilingualEmbedding> {
    let min_dim = h.n_tgt.min(h.n_src);
    if d == 0 || d > min_dim {
        return Err(Error::param("d", format!("must be in 1..={min_dim}, got {d}")));
    }
    let (mut v, sigma) = match solver {
        Solver::Exact => exact_right_vectors(h, d),
        Solver::Auto if min_dim <= EXACT_LIMIT => exact_right_vectors(h, d),
        Solver::Auto => subspace_right_vectors(h, d, 100, 0),
        Solver::Subspace { max_iters, seed } => subspace_right_vectors(h, d, max_iters.max(1), seed),
    };
    fix_signs(&mut v, h.n_src, d);
    // U = H V diag(1/sigma); columns with vanishing sigma carry no weight.
    let mut u = h.mul(&v, d);
    for row in u.chunks_mut(d) {
        for (x, &s) in row.iter_mut().zip(&sigma) {
            *x = if s > f64::EPSILON * sigma[0].max(1.0) {
                *x / s
            } else {
                0.0
            };
        }
    }
    Ok(BilingualEmbedding {
        d,
        n_src: h.n_src,
        n_tgt: h.n_tgt,
        src_vecs: v,
        tgt_vecs: u,
        singular_values: sigma,
    })
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
fn sorted_eigen(g: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vecs, vals)
}

/// Top-`d` right singular vectors (row-major `n_src x d`) and singular values
/// from the smaller Gram matrix.
fn exact_right_vectors(h: &HellingerMatrix, d: usize) -> (Vec<f64>, Vec<f64>) {
    let dense = h.to_dense();
    if h.n_src <= h.n_tgt {
        let (vecs, vals) = sorted_eigen(dense.tr_mul(&dense));
        let sigma: Vec<f64> = vals[..d].iter().map(|&l| l.max(0.0).sqrt()).collect();
        let mut v = vec![0.0; h.n_src * d];
        for s in 0..h.n_src {
            for k in 0..d {
                v[s * d + k] = vecs[(s, k)];
            }
        }
        (v, sigma)
    } else {
        // Left vectors from H H^T, then V = H^T U diag(1/sigma).
        let (vecs, vals) = sorted_eigen(&dense * dense.transpose());
        let sigma: Vec<f64> = vals[..d].iter().map(|&l| l.max(0.0).sqrt()).collect();
        let mut u = vec![0.0; h.n_tgt * d];
        for t in 0..h.n_tgt {
            for k in 0..d {
                u[t * d + k] = vecs[(t, k)];
            }
        }
        let mut v = h.mul_t(&u, d);
        for row in v.chunks_mut(d) {
            for (x, &s) in row.iter_mut().zip(&sigma) {
                *x = if s > f64::EPSILON * sigma[0].max(1.0) {
                    *x / s
                } else {
                    0.0
                };
            }
        }
        (v, sigma)
    }
}

fn orthonormalize(block: &[f64], n: usize, b: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, b, block);
    let q = m.qr().q();
    let mut out = vec![0.0; n * b];
    for r in 0..n {
        for c in 0..b {
            out[r * b + c] = q[(r, c)];
        }
    }
    out
}

/// Block subspace iteration on `H^T H` with Rayleigh-Ritz extraction.
fn subspace_right_vectors(h: &HellingerMatrix, d: usize, max_iters: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = h.n_src;
    let b = (d + 10).min(h.n_src.min(h.n_tgt));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..n * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut q = orthonormalize(&init, n, b);

    let ritz = |q: &[f64]| -> (DMatrix<f64>, Vec<f64>) {
        let y = h.mul(q, b);
        let ym = DMatrix::from_row_slice(h.n_tgt, b, &y);
        sorted_eigen(ym.tr_mul(&ym))
    };

    let mut prev: Option<Vec<f64>> = None;
    for iter in 0..max_iters {
        let z = h.mul_t(&h.mul(&q, b), b);
        q = orthonormalize(&z, n, b);
        if iter % 5 == 4 {
            let (_, vals) = ritz(&q);
            let top = vals[..d].to_vec();
            if let Some(p) = &prev {
                let change = top
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                if change < SUBSPACE_TOL {
                    break;
                }
            }
            prev = Some(top);
        }
    }

    let (w, vals) = ritz(&q);
    let sigma: Vec<f64> = vals[..d].iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut v = vec![0.0; n * d];
    for r in 0..n {
        for k in 0..d {
            let mut acc = 0.0;
            for c in 0..b {
                acc += q[r * b + c] * w[(c, k)];
            }
            v[r * d + k] = acc;
        }
    }
    (v, sigma)
}

/// Flips each component so its largest-magnitude source entry is positive.
fn fix_signs(v: &mut [f64], n: usize, d: usize) {
    for k in 0..d {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for r in 0..n {
            let x = v[r * d + k];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for r in 0..n {
                v[r * d + k] = -v[r * d + k];
            }
        }
    }
}

impl BilingualEmbedding {
    pub fn src_vec(&self, s: TokenId) -> &[f64] {
        &self.src_vecs[s as usize * self.d..(s as usize + 1) * self.d]
    }

    pub fn tgt_vec(&self, t: TokenId) -> &[f64] {
        &self.tgt_vecs[t as usize * self.d..(t as usize + 1) * self.d]
    }

    /// Reconstructed entry `H~[t][s]`.
    pub fn reconstruct(&self, t: TokenId, s: TokenId) -> f64 {
        self.tgt_vec(t)
            .iter()
            .zip(self.src_vec(s))
            .zip(&self.singular_values)
            .map(|((a, b), sg)| a * sg * b)
            .sum()
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_tgt, self.n_src, |t, s| {
            self.reconstruct(t as TokenId, s as TokenId)
        })
    }

    pub fn score(&self, s: TokenId, t: TokenId, metric: Metric) -> f64 {
        match metric {
            Metric::Reconstruction => self.reconstruct(t, s),
            Metric::Euclidean => -self
                .tgt_vec(t)
                .iter()
                .zip(self.src_vec(s))
                .zip(&self.singular_values)
                .map(|((a, b), sg)| {
                    let diff = sg.sqrt() * (a - b);
                    diff * diff
                })
                .sum::<f64>(),
        }
    }

    /// The `k` best-scoring target ids for source word `s`; ties go to the lower id.
    pub fn nearest_targets(&self, s: TokenId, k: usize, metric: Metric) -> Vec<TokenId> {
        let scored = (0..self.n_tgt as TokenId).map(|t| (t, self.score(s, t, metric)));
        top_k(scored.collect(), k)
    }

    /// Shortlists for every source word, skipping `exclude` as a candidate.
    ///
    /// Scores are computed a block of source words at a time with a dense
    /// matrix product.
    pub fn shortlists(&self, k: usize, metric: Metric, exclude: Option<TokenId>) -> ShortlistTable {
        const BLOCK: usize = 256;
        let d = self.d;
        let scale: Vec<f64> = match metric {
            Metric::Reconstruction => self.singular_values.clone(),
            Metric::Euclidean => self.singular_values.iter().map(|s| s.sqrt()).collect(),
        };
        let tgt = DMatrix::from_row_slice(self.n_tgt, d, &self.tgt_vecs);
        let tgt_scaled = match metric {
            Metric::Reconstruction => tgt.clone(),
            Metric::Euclidean => DMatrix::from_fn(self.n_tgt, d, |t, c| tgt[(t, c)] * scale[c]),
        };
        let tgt_sq: Vec<f64> = (0..self.n_tgt)
            .map(|t| tgt_scaled.row(t).iter().map(|x| x * x).sum())
            .collect();

        let mut lists = Vec::with_capacity(self.n_src);
        for start in (0..self.n_src).step_by(BLOCK) {
            let end = (start + BLOCK).min(self.n_src);
            let src = DMatrix::from_fn(d, end - start, |c, j| self.src_vecs[(start + j) * d + c] * scale[c]);
            let prod = &tgt_scaled * &src; // n_tgt x block
            for j in 0..end - start {
                let src_sq: f64 = src.column(j).iter().map(|x| x * x).sum();
                let scored: Vec<(TokenId, f64)> = (0..self.n_tgt)
                    .filter(|&t| Some(t as TokenId) != exclude)
                    .map(|t| {
                        let v = match metric {
                            Metric::Reconstruction => prod[(t, j)],
                            Metric::Euclidean => -(tgt_sq[t] - 2.0 * prod[(t, j)] + src_sq),
                        };
                        (t as TokenId, v)
                    })
                    .collect();
                lists.push(top_k(scored, k));
            }
        }
        let name = match metric {
            Metric::Reconstruction => "pca",
            Metric::Euclidean => "pca_euclidean",
        };
        ShortlistTable::new(lists, k, name)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_magic(&mut w, EMBED_MAGIC)?;
        binio::write_u64(&mut w, self.n_src as u64)?;
        binio::write_u64(&mut w, self.n_tgt as u64)?;
        binio::write_u64(&mut w, self.d as u64)?;
        for &x in self.src_vecs.iter().chain(&self.tgt_vecs).chain(&self.singular_values) {
            binio::write_f64(&mut w, x)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        binio::read_magic(&mut r, EMBED_MAGIC)?;
        let n_src = binio::read_len(&mut r)?;
        let n_tgt = binio::read_len(&mut r)?;
        let d = binio::read_len(&mut r)?;
        let mut read_n = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| binio::read_f64(&mut r)).collect() };
        let src_vecs = read_n(n_src * d)?;
        let tgt_vecs = read_n(n_tgt * d)?;
        let singular_values = read_n(d)?;
        Ok(BilingualEmbedding {
            d,
            n_src,
            n_tgt,
            src_vecs,
            tgt_vecs,
            singular_values,
        })
    }

    /// One line per word: `src|tgt<TAB>token<TAB>v1 v2 ... vd`.
    pub fn write_tsv<W: Write>(&self, mut w: W, src: &Vocab, tgt: &Vocab) -> Result<()> {
        let mut line = |side: &str, tok: &str, v: &[f64]| -> Result<()> {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
            writeln!(w, "{side}\t{tok}\t{}", vals.join(" "))?;
            Ok(())
        };
        for s in 0..self.n_src.min(src.len()) {
            line("src", src.token(s as TokenId), self.src_vec(s as TokenId))?;
        }
        for t in 0..self.n_tgt.min(tgt.len()) {
            line("tgt", tgt.token(t as TokenId), self.tgt_vec(t as TokenId))?;
        }
        Ok(())
    }
}

fn top_k(mut scored: Vec<(TokenId, f64)>, k: usize) -> Vec<TokenId> {
    if k < scored.len() {
        if k == 0 {
            return Vec::new();
        }
        scored.select_nth_unstable_by(k - 1, by_score_desc);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_score_desc);
    scored.into_iter().map(|(t, _)| t).collect()
}

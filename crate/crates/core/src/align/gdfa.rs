use super::SentenceAlignment;
use crate::error::Result;

const NEIGHBORS: [(i64, i64); 8] = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

struct Grid {
    cols: usize,
    cells: Vec<bool>,
}

impl Grid {
    fn new(rows: usize, cols: usize) -> Self {
        Grid {
            cols,
            cells: vec![false; rows * cols],
        }
    }

    fn from(a: &SentenceAlignment, rows: usize, cols: usize) -> Self {
        let mut g = Grid::new(rows, cols);
        for &(i, j) in a.links() {
            g.set(i as usize, j as usize);
        }
        g
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize) {
        self.cells[i * self.cols + j] = true;
    }
}

/// Grow-diag-final-and symmetrization of two directional alignments.
///
/// Both inputs are `(source position, target position)` links over the same
/// sentence pair. Starting from their intersection, neighbouring union links
/// (including diagonals) are added while they touch an unaligned word; then
/// each directional alignment in turn contributes links whose two words are
/// both still unaligned.
pub fn symmetrize_gdfa(
    fwd: &SentenceAlignment,
    rev: &SentenceAlignment,
    src_len: usize,
    tgt_len: usize,
) -> Result<SentenceAlignment> {
    fwd.check_bounds(0, src_len, tgt_len)?;
    rev.check_bounds(0, src_len, tgt_len)?;
    let f = Grid::from(fwd, src_len, tgt_len);
    let r = Grid::from(rev, src_len, tgt_len);

    let mut out = Grid::new(src_len, tgt_len);
    let mut src_aligned = vec![false; src_len];
    let mut tgt_aligned = vec![false; tgt_len];
    let add = |out: &mut Grid, i: usize, j: usize, sa: &mut [bool], ta: &mut [bool]| {
        out.set(i, j);
        sa[i] = true;
        ta[j] = true;
    };

    for &(i, j) in fwd.links() {
        if r.get(i as usize, j as usize) {
            add(&mut out, i as usize, j as usize, &mut src_aligned, &mut tgt_aligned);
        }
    }

    // grow-diag
    let mut grew = true;
    while grew {
        grew = false;
        for i in 0..src_len {
            for j in 0..tgt_len {
                if !out.get(i, j) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni as usize >= src_len || nj as usize >= tgt_len {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    let in_union = f.get(ni, nj) || r.get(ni, nj);
                    if in_union && !out.get(ni, nj) && (!src_aligned[ni] || !tgt_aligned[nj]) {
                        add(&mut out, ni, nj, &mut src_aligned, &mut tgt_aligned);
                        grew = true;
                    }
                }
            }
        }
    }

    // final-and, forward then reverse
    for dir in [&f, &r] {
        for i in 0..src_len {
            for j in 0..tgt_len {
                if dir.get(i, j) && !src_aligned[i] && !tgt_aligned[j] {
                    add(&mut out, i, j, &mut src_aligned, &mut tgt_aligned);
                }
            }
        }
    }

    let mut links = Vec::new();
    for i in 0..src_len {
        for j in 0..tgt_len {
            if out.get(i, j) {
                links.push((i as u32, j as u32));
            }
        }
    }
    Ok(SentenceAlignment::new(links))
}

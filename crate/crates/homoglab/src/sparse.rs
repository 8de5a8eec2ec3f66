//! Minimal sparse symmetric kernels: CSR storage with triplet assembly,
//! matrix-vector products, and MatrixMarket export.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;

/// Compressed sparse row matrix. Assembly stores the full (symmetric)
/// pattern so the product needs no transpose pass.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets, summing duplicates. Column indices end up sorted
    /// within each row.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0f64; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        // Sort each row and merge duplicates.
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            let mut row: Vec<(usize, f64)> =
                cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()).collect();
            row.sort_unstable_by_key(|e| e.0);
            for (c, v) in row {
                if let Some(last) = out_cols.last() {
                    if *last == c && out_cols.len() > row_ptr[r] {
                        *out_vals.last_mut().unwrap() += v;
                        continue;
                    }
                }
                out_cols.push(c);
                out_vals.push(v);
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Self { nrows, ncols, row_ptr, col_idx: out_cols, values: out_vals }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.par_iter_mut().enumerate().for_each(|(r, yr)| {
            let (cols, vals) = {
                let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
                (&self.col_idx[lo..hi], &self.values[lo..hi])
            };
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            *yr = acc;
        });
    }

    pub fn mul_vec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).find(|(c, _)| **c == r).map(|(_, v)| *v).unwrap_or(0.0)
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest |A - Aᵀ| entry.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let (ccols, cvals) = self.row(*c);
                let vt = match ccols.binary_search(&r) {
                    Ok(p) => cvals[p],
                    Err(_) => 0.0,
                };
                defect = defect.max((v - vt).abs());
            }
        }
        defect
    }

    /// Write in MatrixMarket coordinate format (general symmetric, lower
    /// triangle).
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> Result<()> {
        let lower: Vec<(usize, usize, f64)> = (0..self.nrows)
            .flat_map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter()
                    .zip(vals)
                    .filter(move |(c, _)| **c <= r)
                    .map(move |(c, v)| (r, *c, *v))
                    .collect::<Vec<_>>()
            })
            .collect();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, lower.len())?;
        for (r, c, v) in lower {
            writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[(r, *c)] = *v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_assembly_merges_duplicates() {
        let t = vec![(0, 0, 1.0), (0, 1, 2.0), (0, 0, 3.0), (1, 0, 2.0), (1, 1, 5.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        assert_eq!(a.nnz(), 4);
        let y = a.mul_vec_alloc(&[1.0, 1.0]);
        assert_eq!(y, vec![6.0, 7.0]);
        assert_eq!(a.symmetry_defect(), 0.0);
        assert_eq!(a.diagonal(), vec![4.0, 5.0]);
    }

    #[test]
    fn matrix_market_roundtrip_shape() {
        let t = vec![(0, 0, 2.0), (1, 1, 3.0), (1, 0, -1.0), (0, 1, -1.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        assert!(s.contains("2 2 3"));
    }
}

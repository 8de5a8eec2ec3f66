//! Symmetric banded factorizations. Structured-grid stiffness matrices have
//! bandwidth ≈ grid width, which makes a dense-band Cholesky the cheapest
//! reliable direct solver here, and a band LDLᵀ gives eigenvalue counts via
//! Sylvester inertia for spectrum slicing.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Lower-band storage: entry (i, j) with 0 <= i - j <= bw lives at
/// `data[i * (bw + 1) + (bw - (i - j))]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let p = self.idx(i, j);
        self.data[p] = v;
    }

    /// Lower triangle (incl. diagonal) of a CSR symmetric matrix.
    pub fn from_csr(a: &CsrMatrix) -> Self {
        let mut bw = 0usize;
        for r in 0..a.nrows {
            let (cols, _) = a.row(r);
            for c in cols {
                bw = bw.max(r.abs_diff(*c));
            }
        }
        let mut b = Self::zeros(a.nrows, bw);
        for r in 0..a.nrows {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c <= r {
                    b.set(r, *c, *v);
                }
            }
        }
        b
    }

    /// A + s·B entrywise (B must fit in the same band or smaller).
    pub fn add_scaled(&mut self, s: f64, other: &BandMatrix) {
        assert!(other.bw <= self.bw && other.n == self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(other.bw)..=i {
                let v = self.get(i, j) + s * other.get(i, j);
                self.set(i, j, v);
            }
        }
    }
}

/// Cholesky factor of a banded SPD matrix.
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let mut l = a.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = l.get(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(Error::Solve(format!(
                            "band Cholesky breakdown at pivot {i}: {s}"
                        )));
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        Ok(Self { l })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bw;
        // Forward: L y = b.
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= self.l.get(i, j) * b[j];
            }
            b[i] = s / self.l.get(i, i);
        }
        // Backward: Lᵀ x = y.
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l.get(j, i) * b[j];
            }
            b[i] = s / self.l.get(i, i);
        }
    }
}

/// Number of eigenvalues of the pencil (K, M) strictly below `sigma`,
/// computed from the inertia of K - sigma·M via an unpivoted band LDLᵀ.
/// Fails if a pivot is too close to zero (sigma grazing an eigenvalue).
pub fn eigenvalue_count_below(k: &CsrMatrix, m: &CsrMatrix, sigma: f64) -> Result<usize> {
    let mut a = BandMatrix::from_csr(k);
    let bm = BandMatrix::from_csr(m);
    a.add_scaled(-sigma, &bm);
    let n = a.n;
    let bw = a.bw;
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0f64, f64::max);
    // LDLᵀ without pivoting: L unit lower, D diagonal. Store L in a, D in d.
    let mut d = vec![0.0f64; n];
    let mut negatives = 0usize;
    for i in 0..n {
        let j0 = i.saturating_sub(bw);
        for j in j0..=i {
            let mut s = a.get(i, j);
            let k0 = j0.max(j.saturating_sub(bw));
            for p in k0..j {
                s -= a.get(i, p) * a.get(j, p) * d[p];
            }
            if j == i {
                if s.abs() < 1e-13 * scale.max(1.0) {
                    return Err(Error::Solve(format!(
                        "inertia pivot {i} vanished at shift {sigma}; move the shift"
                    )));
                }
                d[i] = s;
                if s < 0.0 {
                    negatives += 1;
                }
            } else {
                a.set(i, j, s / d[j]);
            }
        }
    }
    Ok(negatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd_band(n: usize, bw: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen::<f64>()));
            for j in i.saturating_sub(bw)..i {
                let v = 0.3 * (rng.gen::<f64>() - 0.5);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn cholesky_solves() {
        let a = random_spd_band(40, 3, 7);
        let band = BandMatrix::from_csr(&a);
        let chol = BandCholesky::factor(&band).unwrap();
        let x_true: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut b = a.mul_vec_alloc(&x_true);
        chol.solve(&mut b);
        let err = b.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn inertia_counts_match_dense() {
        let a = random_spd_band(30, 2, 3);
        let m = {
            let t: Vec<(usize, usize, f64)> = (0..30).map(|i| (i, i, 1.0)).collect();
            CsrMatrix::from_triplets(30, 30, &t)
        };
        let dense = a.to_dense();
        let eigs = dense.symmetric_eigen().eigenvalues;
        let mut sorted: Vec<f64> = eigs.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        for sigma in [3.5, 4.0, 4.5, 5.0] {
            let expect = sorted.iter().filter(|&&e| e < sigma).count();
            let got = eigenvalue_count_below(&a, &m, sigma).unwrap();
            assert_eq!(got, expect, "sigma = {sigma}");
        }
    }
}

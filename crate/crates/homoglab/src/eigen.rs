//! Smallest eigenpairs of generalized symmetric pencils (K, M): the
//! primitive behind every spectral object in the crate.
//!
//! The iterative path is a shift-invert Lanczos recurrence in the M inner
//! product with full reorthogonalization; inner solves go through a band
//! Cholesky factorization when the operator has a usable band profile and
//! through deflated CG otherwise (periodic operators couple opposite faces,
//! which destroys the band). A dense path doubles as the cross-validation
//! oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banded::{BandCholesky, BandMatrix};
use crate::error::{Error, Result};
use crate::fem::{Constraint, SparseSymmetricOperator};
use crate::solver::cg_solve;
use crate::sparse::{axpy, dot, CsrMatrix};

pub const DEFAULT_SEED: u64 = 0x5EED;
/// Relative gap below which eigenvalues are reported as one cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenRequest<'a> {
    pub operator: &'a SparseSymmetricOperator,
    pub count: usize,
    /// Relative residual target ‖Ku - λMu‖ / (λ‖u‖_M).
    pub tolerance: f64,
    pub shift: Option<f64>,
    pub seed: u64,
}

impl<'a> EigenRequest<'a> {
    pub fn new(operator: &'a SparseSymmetricOperator, count: usize) -> Self {
        Self { operator, count, tolerance: 1e-9, shift: None, seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Ascending eigenvalues of (K, M).
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration hit its cap first; partial results are
    /// still returned, flagged here.
    pub converged: bool,
}

impl EigenResult {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Eigen(format!(
                "eigensolve not converged after {} iterations (worst residual {:.3e})",
                self.iterations,
                self.residuals.iter().copied().fold(0.0, f64::max)
            )))
        }
    }

    /// Eigenvalues of the inverse operator, decreasing.
    pub fn inverse_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| 1.0 / v).collect()
    }

    /// Group indices into clusters of relative gap below `CLUSTER_GAP`;
    /// returns (start, len) pairs.
    pub fn clusters(&self) -> Vec<(usize, usize)> {
        cluster_indices(&self.values, CLUSTER_GAP)
    }
}

pub fn cluster_indices(values: &[f64], rel_gap: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let scale = values[i].abs().max(values[i - 1].abs()).max(1e-300);
            (values[i] - values[i - 1]).abs() > rel_gap * scale
        };
        if split {
            out.push((start, i - start));
            start = i;
        }
    }
    out
}

enum InverseApply {
    Banded(BandCholesky),
    Cg { k: CsrMatrix, deflate: Vec<Vec<f64>>, tol: f64 },
}

impl InverseApply {
    fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            InverseApply::Banded(chol) => {
                let mut x = b.to_vec();
                chol.solve(&mut x);
                Ok(x)
            }
            InverseApply::Cg { k, deflate, tol } => {
                let (x, _) = cg_solve(k, b, *tol, 50 * k.nrows.max(100), deflate)?;
                Ok(x)
            }
        }
    }
}

fn m_dot(m: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    dot(a, &m.mul_vec_alloc(b))
}

/// Smallest `count` eigenpairs of the operator pencil.
pub fn smallest_eigenpairs(req: &EigenRequest) -> Result<EigenResult> {
    let op = req.operator;
    let n = op.dim();
    let k = &op.stiffness;
    let m = &op.mass;
    if req.count == 0 {
        return Err(Error::Eigen("count must be >= 1".into()));
    }
    if req.tolerance <= 0.0 || req.tolerance > 1e-2 {
        return Err(Error::Eigen("tolerance must lie in (0, 1e-2]".into()));
    }
    if 4 * req.count > n {
        return Err(Error::Eigen(format!(
            "count {} too large for dimension {n} (need count <= dim/4)",
            req.count
        )));
    }

    let sigma = req.shift.unwrap_or(0.0);
    let deflate: Vec<Vec<f64>> = if op.constraint == Constraint::PeriodicMeanZero {
        op.null_basis.clone()
    } else {
        Vec::new()
    };
    // Shifted matrix K + sigma M when a shift is requested.
    let shifted;
    let kmat: &CsrMatrix = if sigma != 0.0 {
        let mut t = Vec::new();
        for r in 0..n {
            let (cols, vals) = k.row(r);
            for (c, v) in cols.iter().zip(vals) {
                t.push((r, *c, *v));
            }
            let (cols, vals) = m.row(r);
            for (c, v) in cols.iter().zip(vals) {
                t.push((r, *c, sigma * *v));
            }
        }
        shifted = CsrMatrix::from_triplets(n, n, &t);
        &shifted
    } else {
        k
    };

    let inverse = match op.constraint {
        Constraint::Dirichlet => {
            let band = BandMatrix::from_csr(kmat);
            InverseApply::Banded(BandCholesky::factor(&band)?)
        }
        _ => InverseApply::Cg {
            k: kmat.clone(),
            deflate: deflate.clone(),
            tol: (req.tolerance * 1e-3).max(1e-14),
        },
    };

    // M-orthonormalized deflation basis for the Lanczos sweep.
    let mut defl_m: Vec<Vec<f64>> = Vec::new();
    for z in &deflate {
        let mut v = z.clone();
        for d in &defl_m {
            let c = m_dot(m, &v, d);
            axpy(-c, d, &mut v);
        }
        let nrm = m_dot(m, &v, &v).sqrt();
        if nrm > 1e-14 {
            for vi in &mut v {
                *vi /= nrm;
            }
            defl_m.push(v);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let dim_eff = n - defl_m.len();
    let max_steps = dim_eff.min((6 * req.count + 40).max(60));

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    m_orth(&mut v, &defl_m, m);
    let nrm = m_dot(m, &v, &v).sqrt();
    for vi in &mut v {
        *vi /= nrm;
    }
    basis.push(v);

    let mut steps = 0usize;
    while steps < max_steps {
        let vj = basis.last().unwrap().clone();
        let mv = m.mul_vec_alloc(&vj);
        let mut w = inverse.apply(&mv)?;
        let alpha = m_dot(m, &w, &vj);
        axpy(-alpha, &vj, &mut w);
        if basis.len() >= 2 {
            let beta_prev = *betas.last().unwrap();
            let vprev = &basis[basis.len() - 2];
            axpy(-beta_prev, vprev, &mut w);
        }
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            m_orth(&mut w, &defl_m, m);
            m_orth(&mut w, &basis, m);
        }
        alphas.push(alpha);
        steps += 1;
        let beta = m_dot(m, &w, &w).sqrt();
        if beta < 1e-13 {
            break; // invariant subspace found
        }
        betas.push(beta);
        for wi in &mut w {
            *wi /= beta;
        }
        basis.push(w);
        if basis.len() > max_steps {
            basis.pop();
            betas.pop();
            break;
        }
    }

    // Ritz pairs of the tridiagonal.
    let j = alphas.len();
    let mut t = DMatrix::zeros(j, j);
    for i in 0..j {
        t[(i, i)] = alphas[i];
        if i + 1 < j && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let se = t.symmetric_eigen();
    // Largest nu = 1/(lambda + sigma) first.
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));

    let count = req.count.min(j);
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let nu = se.eigenvalues[idx];
        if nu <= 0.0 {
            return Err(Error::Eigen(format!("non-positive Ritz value {nu}; operator not SPD under its constraint")));
        }
        let lambda = 1.0 / nu - sigma;
        let y = se.eigenvectors.column(idx);
        let mut x = vec![0.0; n];
        for (c, vb) in y.iter().zip(&basis) {
            axpy(*c, vb, &mut x);
        }
        let xm = m_dot(m, &x, &x).sqrt();
        for xi in &mut x {
            *xi /= xm;
        }
        let kx = k.mul_vec_alloc(&x);
        let mx = m.mul_vec_alloc(&x);
        let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
        let res = dot(&r, &r).sqrt() / lambda.abs().max(1e-300);
        values.push(lambda);
        vectors.push(x);
        residuals.push(res);
    }
    // Ascending in lambda.
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let values: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
    let vectors: Vec<Vec<f64>> = perm.iter().map(|&i| vectors[i].clone()).collect();
    let residuals: Vec<f64> = perm.iter().map(|&i| residuals[i]).collect();

    let converged =
        values.len() == req.count && residuals.iter().all(|&r| r <= req.tolerance);
    Ok(EigenResult { values, vectors, residuals, iterations: steps, converged })
}

fn m_orth(w: &mut [f64], basis: &[Vec<f64>], m: &CsrMatrix) {
    let mw = m.mul_vec_alloc(w);
    let coeffs: Vec<f64> = basis.iter().map(|b| dot(&mw, b)).collect();
    for (c, b) in coeffs.iter().zip(basis) {
        axpy(-c, b, w);
    }
}

/// Full dense eigendecomposition of the pencil; ground truth for dimensions
/// up to 2000. For periodic-mean-zero operators the kernel block (constants)
/// is dropped from the returned spectrum.
pub fn dense_oracle_eigens(op: &SparseSymmetricOperator) -> Result<EigenResult> {
    let n = op.dim();
    if n > 2000 {
        return Err(Error::Eigen(format!("dense oracle capped at dimension 2000, got {n}")));
    }
    let kd = op.stiffness.to_dense();
    let md = op.mass.to_dense();
    let (values, vectors) = dense_generalized_eigen(&kd, &md)?;
    let (values, vectors) = if op.constraint == Constraint::PeriodicMeanZero {
        let drop = op.null_basis.len();
        let scale = values.last().copied().unwrap_or(1.0).abs().max(1.0);
        for v in values.iter().take(drop) {
            if v.abs() > 1e-8 * scale {
                return Err(Error::Eigen(format!(
                    "expected {drop} kernel eigenvalues, found value {v}"
                )));
            }
        }
        (values[drop..].to_vec(), vectors[drop..].to_vec())
    } else {
        (values, vectors)
    };
    let residuals = values
        .iter()
        .zip(&vectors)
        .map(|(l, x)| {
            let kx = op.stiffness.mul_vec_alloc(x);
            let mx = op.mass.mul_vec_alloc(x);
            let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - l * b).collect();
            dot(&r, &r).sqrt() / l.abs().max(1e-300)
        })
        .collect();
    Ok(EigenResult { values, vectors, residuals, iterations: 0, converged: true })
}

/// Ascending eigenpairs of K x = λ M x via M = LLᵀ and a dense symmetric
/// eigendecomposition of L⁻¹ K L⁻ᵀ. Vectors come back M-orthonormal.
pub fn dense_generalized_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = k.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigen("mass matrix not positive definite".into()))?;
    let l = chol.l();
    // A = L⁻¹ K L⁻ᵀ
    let mut a = k.clone();
    // Solve L X = K (column-wise), then L Aᵀ = Xᵀ.
    let linv_k = l.clone().solve_lower_triangular(&a).ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let at = l
        .clone()
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    a = (at.clone() + at.transpose()) * 0.5;
    let se = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| se.eigenvalues[x].total_cmp(&se.eigenvalues[y]));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &i in &order {
        values.push(se.eigenvalues[i]);
        let q: DVector<f64> = se.eigenvectors.column(i).into();
        let x = lt
            .solve_upper_triangular(&q)
            .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
        vectors.push(x.iter().copied().collect());
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, ContrastWeight};
    use crate::fem::{assemble_1d, assemble_fine_operator};
    use crate::geometry::{build_epsilon_domain, PeriodicGeometry};
    use std::f64::consts::PI;

    fn op_from_pair(k: CsrMatrix, m: CsrMatrix) -> SparseSymmetricOperator {
        let n = k.nrows;
        SparseSymmetricOperator {
            stiffness: k,
            mass: m,
            constraint: Constraint::Dirichlet,
            dof_of_node: (0..n).map(Some).collect(),
            node_of_dof: (0..n).collect(),
            block: 1,
            null_basis: Vec::new(),
        }
    }

    /// Exact generalized eigenvalues of the 1D Dirichlet Q1 pencil.
    fn fem_1d_eigenvalue(ncells: usize, k: usize) -> f64 {
        let h = 1.0 / ncells as f64;
        let c = (k as f64 * PI * h).cos();
        (6.0 / (h * h)) * (1.0 - c) / (2.0 + c)
    }

    #[test]
    fn one_d_dirichlet_matches_closed_form() {
        let (k, m) = assemble_1d(100, |_| 1.0);
        let op = op_from_pair(k, m);
        let mut req = EigenRequest::new(&op, 3);
        req.tolerance = 1e-10;
        let res = smallest_eigenpairs(&req).unwrap().ensure_converged().unwrap();
        for (i, v) in res.values.iter().enumerate() {
            let exact = fem_1d_eigenvalue(100, i + 1);
            assert!((v - exact).abs() <= 1e-10 * exact, "mode {i}: {v} vs {exact}");
        }
    }

    #[test]
    fn identity_pencil_all_ones() {
        let t: Vec<(usize, usize, f64)> = (0..40).map(|i| (i, i, 2.5)).collect();
        let k = CsrMatrix::from_triplets(40, 40, &t);
        let op = op_from_pair(k.clone(), k);
        let res = smallest_eigenpairs(&EigenRequest::new(&op, 4)).unwrap();
        for v in &res.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_d_dirichlet_laplacian_spectrum() {
        let g = PeriodicGeometry::centered_half_box();
        let (_, grid) = build_epsilon_domain(&g, 2, 16).unwrap();
        let field = CoefficientField::identity(1);
        let w = ContrastWeight::new(1.0).unwrap();
        let op = assemble_fine_operator(&grid, &field, &w, 0.5).unwrap();
        let res = smallest_eigenpairs(&EigenRequest::new(&op, 3)).unwrap();
        let h = 1.0 / 32.0;
        let tol = 8.0 * h * h; // O(h²) consistency
        assert!((res.values[0] / (2.0 * PI * PI) - 1.0).abs() < tol);
        assert!((res.values[1] / (5.0 * PI * PI) - 1.0).abs() < tol);
        assert!((res.values[2] / (5.0 * PI * PI) - 1.0).abs() < tol);
        let clusters = res.clusters();
        assert_eq!(clusters[0], (0, 1));
    }

    #[test]
    fn dense_oracle_agrees_with_lanczos() {
        let (k, m) = assemble_1d(60, |c| if c < 30 { 1.0 } else { 3.0 });
        let op = op_from_pair(k, m);
        let mut req = EigenRequest::new(&op, 5);
        req.tolerance = 1e-10;
        let it = smallest_eigenpairs(&req).unwrap();
        let dn = dense_oracle_eigens(&op).unwrap();
        for i in 0..5 {
            let rel = (it.values[i] - dn.values[i]).abs() / dn.values[i];
            assert!(rel < 1e-9, "mode {i}: rel = {rel}");
        }
    }

    #[test]
    fn dense_oracle_diagonal_case() {
        let diag = [5.0, 1.0, 3.0, 2.0];
        let t: Vec<(usize, usize, f64)> =
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        let k = CsrMatrix::from_triplets(4, 4, &t);
        let eye: Vec<(usize, usize, f64)> = (0..4).map(|i| (i, i, 1.0)).collect();
        let m = CsrMatrix::from_triplets(4, 4, &eye);
        let res = dense_oracle_eigens(&op_from_pair(k, m)).unwrap();
        assert_eq!(res.values, vec![1.0, 2.0, 3.0, 5.0]);
    }

    #[test]
    fn dense_oracle_rayleigh_quotient_consistency() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let kd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let b = DMatrix::from_fn(n, n, |_, _| 0.1 * (rng.gen::<f64>() - 0.5));
        let md = &b * b.transpose() + DMatrix::identity(n, n);
        let to_csr = |d: &DMatrix<f64>| {
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    t.push((i, j, d[(i, j)]));
                }
            }
            CsrMatrix::from_triplets(n, n, &t)
        };
        let op = op_from_pair(to_csr(&kd), to_csr(&md));
        let res = dense_oracle_eigens(&op).unwrap();
        for (l, x) in res.values.iter().zip(&res.vectors) {
            let kx = op.stiffness.mul_vec_alloc(x);
            let mx = op.mass.mul_vec_alloc(x);
            let rq = dot(x, &kx) / dot(x, &mx);
            assert!((rq - l).abs() <= 1e-12 * l.abs().max(1.0));
        }
    }

    #[test]
    fn monotone_under_psd_update() {
        use rand::{Rng, SeedableRng};
        let (k, m) = assemble_1d(40, |_| 1.0);
        let op = op_from_pair(k.clone(), m.clone());
        let base = dense_oracle_eigens(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = k.nrows;
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut t = Vec::new();
        for r in 0..n {
            let (cols, vals) = k.row(r);
            for (c, v) in cols.iter().zip(vals) {
                t.push((r, *c, *v));
            }
            for c in 0..n {
                t.push((r, c, 0.5 * u[r] * u[c]));
            }
        }
        let k2 = CsrMatrix::from_triplets(n, n, &t);
        let op2 = op_from_pair(k2, m);
        let upd = dense_oracle_eigens(&op2).unwrap();
        for (a, b) in base.values.iter().zip(&upd.values) {
            assert!(b >= &(a - 1e-10));
        }
    }

    #[test]
    fn orthonormality_invariant() {
        let (k, m) = assemble_1d(80, |_| 1.0);
        let op = op_from_pair(k, m);
        let res = smallest_eigenpairs(&EigenRequest::new(&op, 4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d = m_dot(&op.mass, &res.vectors[i], &res.vectors[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8);
            }
        }
    }
}

//! Conjugate gradients with Jacobi preconditioning, plus the deflation
//! projection used for singular periodic operators.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, CsrMatrix};

/// Outcome of a CG solve.
#[derive(Debug, Clone)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Orthogonalize `v` against the (not necessarily orthonormal) basis `z`
/// in the Euclidean inner product.
pub fn project_out(v: &mut [f64], z: &[Vec<f64>]) {
    for zi in z {
        let nz = dot(zi, zi);
        if nz > 0.0 {
            let c = dot(v, zi) / nz;
            axpy(-c, zi, v);
        }
    }
}

/// Solve K x = b by preconditioned CG. `deflate` spans the kernel of K;
/// right-hand side and iterates are kept orthogonal to it.
pub fn cg_solve(
    k: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    deflate: &[Vec<f64>],
) -> Result<(Vec<f64>, CgStats)> {
    let n = k.nrows;
    let diag = k.diagonal();
    let precond: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut rhs = b.to_vec();
    project_out(&mut rhs, deflate);
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], CgStats { iterations: 0, relative_residual: 0.0 }));
    }

    let mut x = vec![0.0; n];
    let mut r = rhs;
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, pi)| ri * pi).collect();
    project_out(&mut z, deflate);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = vec![0.0; n];
    for it in 0..max_iter {
        k.mul_vec(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if pkp <= 0.0 {
            return Err(Error::Solve(format!(
                "CG breakdown: non-positive curvature {pkp} at iteration {it}"
            )));
        }
        let alpha = rz / pkp;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &kp, &mut r);
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            project_out(&mut x, deflate);
            return Ok((x, CgStats { iterations: it + 1, relative_residual: rnorm / bnorm }));
        }
        z = r.iter().zip(&precond).map(|(ri, pi)| ri * pi).collect();
        project_out(&mut z, deflate);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Solve(format!(
        "CG did not converge in {max_iter} iterations (residual {:.3e})",
        dot(&r, &r).sqrt() / bnorm
    )))
}

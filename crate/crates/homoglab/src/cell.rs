//! Cell problems on the periodic unit cell: correctors χ and the homogenized
//! tensor Â(δ) = ∫_Y Λ_δ A (I + ∇χ) dy.
//!
//! With per-cell constant coefficients the Q1 Galerkin solution and the
//! tensor quadrature are exact, so layered media reproduce the
//! harmonic/arithmetic closed forms to solver tolerance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coefficients::{CoefficientField, ContrastWeight};
use crate::error::{Error, Result};
use crate::fem::{assemble_cell_operator, SparseSymmetricOperator};
use crate::geometry::StructuredGrid;
use crate::solver::cg_solve;

/// Correctors of the cell problem, one per matrix-gradient direction
/// (j, β) ↦ column j·m + β; each is a mean-zero periodic nodal field with
/// m components per node.
pub struct CorrectorSet {
    pub chi: Vec<Vec<f64>>,
    pub operator: SparseSymmetricOperator,
    /// Contrast the set was computed at.
    pub delta: f64,
    /// Grid resolution the set was computed on.
    pub resolution: [usize; 2],
    /// Relative CG residual per corrector solve.
    pub residuals: Vec<f64>,
}

/// The constant homogenized tensor with its ellipticity certificate.
#[derive(Debug, Clone)]
pub struct HomogenizedTensor {
    /// dm × dm entries indexed (i·m + α, j·m + β).
    pub entries: DMatrix<f64>,
    pub delta: f64,
    /// Smallest eigenvalue of the symmetrized entries.
    pub ellipticity_check: f64,
}

/// ∫_cell ∂_i N_a dy for the four Q1 shapes on an hx × hy cell.
fn gradient_integrals(hx: f64, hy: f64) -> [[f64; 4]; 2] {
    [
        [-0.5 * hy, 0.5 * hy, 0.5 * hy, -0.5 * hy],
        [-0.5 * hx, -0.5 * hx, 0.5 * hx, 0.5 * hx],
    ]
}

/// Per-cell coefficient Λ_δ(y) A(y) at the barycenter.
fn cell_coefficients(
    grid: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let w = ContrastWeight::new(delta)?.values(grid)?;
    let res = grid.resolution;
    let mut out = Vec::with_capacity(grid.cell_count());
    for cj in 0..res[1] {
        for ci in 0..res[0] {
            let a = field.eval(grid.cell_center(ci, cj)) * w[grid.cell_index(ci, cj)];
            out.push(a);
        }
    }
    Ok(out)
}

/// Solve the dm corrector problems ∫ Λ A (∇χ + e_j ⊗ e_β) · ∇v = 0 over
/// periodic mean-zero fields. The dm solves are independent and run
/// concurrently; results merge by column index.
pub fn solve_correctors(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
) -> Result<CorrectorSet> {
    let op = assemble_cell_operator(grid_y, field, delta)?;
    let m = field.m;
    let dm = 2 * m;
    let coeffs = cell_coefficients(grid_y, field, delta)?;
    let h = grid_y.h();
    let g = gradient_integrals(h[0], h[1]);
    let res = grid_y.resolution;
    let n = op.dim();
    let ones_m = op.mass.mul_vec_alloc(&vec![1.0; n]);

    let solved: Result<Vec<(Vec<f64>, f64)>> = (0..dm)
        .into_par_iter()
        .map(|col| {
            // rhs_aα = -∫ Λ A (e_j ⊗ e_β) : ∇(N_a e_α)
            let mut b = vec![0.0; n];
            for cj in 0..res[1] {
                for ci in 0..res[0] {
                    let a = &coeffs[grid_y.cell_index(ci, cj)];
                    let nodes = grid_y.cell_nodes(ci, cj);
                    for (la, node) in nodes.iter().enumerate() {
                        let Some(d) = op.dof_of_node[node * m] else { continue };
                        for alpha in 0..m {
                            let mut f = 0.0;
                            for i in 0..2 {
                                f += a[(i * m + alpha, col)] * g[i][la];
                            }
                            b[d + alpha] -= f;
                        }
                    }
                }
            }
            let (mut x, stats) =
                cg_solve(&op.stiffness, &b, 1e-12, 200 * n.max(100), &op.null_basis)?;
            // Mass-weighted mean-zero per component.
            for alpha in 0..m {
                let mut num = 0.0;
                let mut den = 0.0;
                for d in (alpha..n).step_by(m) {
                    num += ones_m[d] * x[d];
                    den += ones_m[d];
                }
                let mean = num / den;
                for d in (alpha..n).step_by(m) {
                    x[d] -= mean;
                }
            }
            Ok((x, stats.relative_residual))
        })
        .collect();
    let solved = solved?;
    let (chi, residuals) = solved.into_iter().unzip();
    Ok(CorrectorSet { chi, operator: op, delta, resolution: res, residuals })
}

/// Homogenized tensor from a corrector set:
/// â_{(iα)(jβ)} = ∫ Λ (a_{(iα)(jβ)} + Σ_{kγ} a_{(iα)(kγ)} ∂_k χ^{jβ}_γ).
/// Rejects corrector sets computed at a different grid or contrast.
pub fn homogenized_tensor(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
    correctors: &CorrectorSet,
) -> Result<HomogenizedTensor> {
    check_corrector_match(grid_y, field, delta, correctors)?;
    let m = field.m;
    let dm = 2 * m;
    let coeffs = cell_coefficients(grid_y, field, delta)?;
    let h = grid_y.h();
    let cell_vol = h[0] * h[1];
    let g = gradient_integrals(h[0], h[1]);
    let res = grid_y.resolution;
    let op = &correctors.operator;

    let mut a_hat = DMatrix::zeros(dm, dm);
    for cj in 0..res[1] {
        for ci in 0..res[0] {
            let a = &coeffs[grid_y.cell_index(ci, cj)];
            let nodes = grid_y.cell_nodes(ci, cj);
            for row in 0..dm {
                for col in 0..dm {
                    a_hat[(row, col)] += a[(row, col)] * cell_vol;
                }
            }
            // ∫_cell ∂_k χ^{col}_γ = Σ_a χ[node_a, γ] g_k[a]
            for col in 0..dm {
                let x = &correctors.chi[col];
                for (la, node) in nodes.iter().enumerate() {
                    let Some(d) = op.dof_of_node[node * m] else { continue };
                    for gamma in 0..m {
                        let v = x[d + gamma];
                        for k in 0..2 {
                            let gk = g[k][la] * v;
                            for row in 0..dm {
                                a_hat[(row, col)] += a[(row, k * m + gamma)] * gk;
                            }
                        }
                    }
                }
            }
        }
    }
    let ellipticity_check = ((&a_hat + a_hat.transpose()) * 0.5)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(HomogenizedTensor { entries: a_hat, delta, ellipticity_check })
}

fn check_corrector_match(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
    correctors: &CorrectorSet,
) -> Result<()> {
    if correctors.resolution != grid_y.resolution {
        return Err(Error::Assembly(format!(
            "corrector set computed at resolution {:?}, tensor requested at {:?}",
            correctors.resolution, grid_y.resolution
        )));
    }
    if correctors.delta != delta {
        return Err(Error::Assembly(format!(
            "corrector set computed at δ = {}, tensor requested at δ = {delta}",
            correctors.delta
        )));
    }
    if correctors.chi.len() != 2 * field.m {
        return Err(Error::Assembly(format!(
            "corrector set has {} columns, expected {}",
            correctors.chi.len(),
            2 * field.m
        )));
    }
    Ok(())
}

/// The same tensor through the energy form
/// E_{pq} = ∫ Λ A (e_p + ∇χ_p) · (e_q + ∇χ_q): for symmetric A this equals
/// the direct form by the corrector equation, so comparing the two tests the
/// solve accuracy end to end.
pub fn homogenized_tensor_energy(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
    correctors: &CorrectorSet,
) -> Result<DMatrix<f64>> {
    check_corrector_match(grid_y, field, delta, correctors)?;
    let m = field.m;
    let dm = 2 * m;
    let coeffs = cell_coefficients(grid_y, field, delta)?;
    let h = grid_y.h();
    let cell_vol = h[0] * h[1];
    let g = gradient_integrals(h[0], h[1]);
    let res = grid_y.resolution;
    let op = &correctors.operator;

    // ∫ ΛA e_p·e_q, ∫ ΛA e_p·∇χ_q, ∫ ΛA ∇χ_p·e_q assembled cellwise; the
    // bilinear gradient term χ_pᵀ K χ_q reuses the stiffness exactly.
    let mut e = DMatrix::zeros(dm, dm);
    for cj in 0..res[1] {
        for ci in 0..res[0] {
            let a = &coeffs[grid_y.cell_index(ci, cj)];
            let nodes = grid_y.cell_nodes(ci, cj);
            for p in 0..dm {
                for q in 0..dm {
                    e[(p, q)] += a[(p, q)] * cell_vol;
                }
            }
            for (la, node) in nodes.iter().enumerate() {
                let Some(d) = op.dof_of_node[node * m] else { continue };
                for gamma in 0..m {
                    for k in 0..2 {
                        let kg = k * m + gamma;
                        for p in 0..dm {
                            for q in 0..dm {
                                // a_{p,(kγ)} ∂_k χ^q_γ and ∂_k χ^p_γ a_{(kγ),q}
                                e[(p, q)] += a[(p, kg)] * g[k][la] * correctors.chi[q][d + gamma];
                                e[(p, q)] += correctors.chi[p][d + gamma] * g[k][la] * a[(kg, q)];
                            }
                        }
                    }
                }
            }
        }
    }
    for p in 0..dm {
        let kx = op.stiffness.mul_vec_alloc(&correctors.chi[p]);
        for q in 0..dm {
            e[(p, q)] += crate::sparse::dot(&kx, &correctors.chi[q]);
        }
    }
    Ok(e)
}

/// Convenience: correctors plus tensor in one call.
pub fn compute_homogenized(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
) -> Result<(HomogenizedTensor, CorrectorSet)> {
    let c = solve_correctors(grid_y, field, delta)?;
    let a_hat = homogenized_tensor(grid_y, field, delta, &c)?;
    Ok((a_hat, c))
}

/// Â(δ) along a contrast sweep.
pub fn tensor_delta_sweep(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    deltas: &[f64],
) -> Result<Vec<HomogenizedTensor>> {
    deltas
        .iter()
        .map(|&d| Ok(compute_homogenized(grid_y, field, d)?.0))
        .collect()
}

/// Arithmetic and harmonic means of the scalar coefficient Λ a over Y:
/// the Voigt–Reuss bracket for diagonal entries of scalar media.
pub fn voigt_reuss_bounds(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
) -> Result<(f64, f64)> {
    if field.m != 1 {
        return Err(Error::Assembly("Voigt–Reuss bracket needs a scalar field".into()));
    }
    let coeffs = cell_coefficients(grid_y, field, delta)?;
    let vol = {
        let h = grid_y.h();
        h[0] * h[1]
    };
    let mut arith = 0.0;
    let mut harm = 0.0;
    for a in &coeffs {
        arith += a[(0, 0)] * vol;
        harm += vol / a[(0, 0)];
    }
    Ok((1.0 / harm, arith))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell_grid, PeriodicGeometry};

    fn grid(res: usize) -> StructuredGrid {
        build_unit_cell_grid(&PeriodicGeometry::centered_half_box(), res).unwrap()
    }

    #[test]
    fn identity_field_gives_identity_tensor() {
        let g = grid(8);
        let field = CoefficientField::identity(1);
        let (a_hat, c) = compute_homogenized(&g, &field, 1.0).unwrap();
        for col in &c.chi {
            assert!(col.iter().all(|v| v.abs() < 1e-10));
        }
        assert!((a_hat.entries[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((a_hat.entries[(1, 1)] - 1.0).abs() < 1e-10);
        assert!(a_hat.entries[(0, 1)].abs() < 1e-10);
        assert!((a_hat.ellipticity_check - 1.0).abs() < 1e-10);
    }

    #[test]
    fn layered_medium_matches_harmonic_and_arithmetic_means() {
        // a ∈ {1, 4} in equal halves along y₁, no contrast: â₁₁ = harmonic
        // mean 1.6, â₂₂ = arithmetic mean 2.5. Exact for Q1 on aligned grids.
        let g = grid(8);
        let field = CoefficientField::layered(1.0, 4.0, false);
        let (a_hat, c) = compute_homogenized(&g, &field, 1.0).unwrap();
        let a_hat = a_hat.entries;
        assert!((a_hat[(0, 0)] - 1.6).abs() < 1e-9, "a11 = {}", a_hat[(0, 0)]);
        assert!((a_hat[(1, 1)] - 2.5).abs() < 1e-9, "a22 = {}", a_hat[(1, 1)]);
        assert!(a_hat[(0, 1)].abs() < 1e-9);
        assert!(a_hat[(1, 0)].abs() < 1e-9);
        // χ₂ vanishes for a medium layered in y₁.
        assert!(c.chi[1].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn tensor_is_symmetric_and_within_voigt_reuss() {
        let g = grid(16);
        let field = CoefficientField::checkerboard(2.0, 0.7);
        let delta = 0.3;
        let (a_hat, _) = compute_homogenized(&g, &field, delta).unwrap();
        assert!(a_hat.ellipticity_check > 0.0);
        let a_hat = a_hat.entries;
        assert!((a_hat[(0, 1)] - a_hat[(1, 0)]).abs() < 1e-8);
        let (reuss, voigt) = voigt_reuss_bounds(&g, &field, delta).unwrap();
        for i in 0..2 {
            assert!(a_hat[(i, i)] >= reuss - 1e-9, "a{i}{i} below Reuss bound");
            assert!(a_hat[(i, i)] <= voigt + 1e-9, "a{i}{i} above Voigt bound");
        }
    }

    #[test]
    fn correctors_are_mean_zero() {
        let g = grid(16);
        let field = CoefficientField::identity(1);
        let c = solve_correctors(&g, &field, 0.1).unwrap();
        let n = c.operator.dim();
        let ones_m = c.operator.mass.mul_vec_alloc(&vec![1.0; n]);
        for col in &c.chi {
            let mean: f64 = col.iter().zip(&ones_m).map(|(x, w)| x * w).sum();
            assert!(mean.abs() < 1e-12, "mean = {mean}");
        }
    }

    #[test]
    fn tensor_rejects_mismatched_correctors() {
        let field = CoefficientField::identity(1);
        let c = solve_correctors(&grid(8), &field, 0.5).unwrap();
        assert!(homogenized_tensor(&grid(16), &field, 0.5, &c).is_err());
        assert!(homogenized_tensor(&grid(8), &field, 0.25, &c).is_err());
        assert!(homogenized_tensor(&grid(8), &field, 0.5, &c).is_ok());
    }

    #[test]
    fn energy_identity_matches_direct_form() {
        let g = grid(16);
        for field in [
            CoefficientField::checkerboard(2.0, 0.7),
            CoefficientField::layered(1.0, 4.0, false),
        ] {
            let delta = 0.3;
            let (a_hat, c) = compute_homogenized(&g, &field, delta).unwrap();
            let e = homogenized_tensor_energy(&g, &field, delta, &c).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let d = (e[(i, j)] - a_hat.entries[(i, j)]).abs();
                    assert!(d < 1e-8, "entry ({i},{j}) differs by {d:.3e}");
                }
            }
        }
    }

    #[test]
    fn refinement_convergence_for_smooth_layers() {
        let field = CoefficientField::layered(1.0, 4.0, true);
        let mut vals = Vec::new();
        for res in [8, 16, 32, 64] {
            let (a_hat, _) = compute_homogenized(&grid(res), &field, 1.0).unwrap();
            vals.push(a_hat.entries[(0, 0)]);
        }
        let d1 = (vals[1] - vals[0]).abs();
        let d2 = (vals[2] - vals[1]).abs();
        let d3 = (vals[3] - vals[2]).abs();
        assert!(d2 * 3.0 <= d1, "refinement gain {:.2} < 3", d1 / d2);
        assert!(d3 * 3.0 <= d2, "refinement gain {:.2} < 3", d2 / d3);
    }

    #[test]
    fn correctors_continuous_in_delta() {
        let g = grid(16);
        let field = CoefficientField::checkerboard(2.0, 0.7);
        let a = solve_correctors(&g, &field, 1.0).unwrap();
        let b = solve_correctors(&g, &field, 1.0 + 1e-6).unwrap();
        for (x, y) in a.chi.iter().zip(&b.chi) {
            let diff = x
                .iter()
                .zip(y)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-4, "corrector jump {diff:.3e}");
        }
    }

    #[test]
    fn perforated_limit_is_stable_and_bracketed() {
        // δ → 0 with A = I on the centered half box approximates the
        // perforated tensor: â₁₁ ∈ (0.5, 1), stable from 10⁻⁶ to 10⁻⁸.
        let g = grid(16);
        let field = CoefficientField::identity(1);
        let (t6, _) = compute_homogenized(&g, &field, 1e-6).unwrap();
        let (t8, _) = compute_homogenized(&g, &field, 1e-8).unwrap();
        let a6 = t6.entries[(0, 0)];
        assert!(a6 > 0.5 && a6 < 1.0, "a11 = {a6}");
        assert!((a6 - t8.entries[(0, 0)]).abs() < 1e-4);
        assert!(t6.ellipticity_check > 0.1);
    }

    #[test]
    fn tensor_monotone_in_delta() {
        // The quadratic form δ ↦ min over correctors is monotone, so diagonal
        // entries increase with δ.
        let g = grid(8);
        let field = CoefficientField::identity(1);
        let sweep = tensor_delta_sweep(&g, &field, &[0.01, 0.1, 0.5, 1.0]).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].entries[(0, 0)] >= w[0].entries[(0, 0)] - 1e-10);
            assert!(w[1].entries[(1, 1)] >= w[0].entries[(1, 1)] - 1e-10);
        }
        // δ = 1 removes the contrast entirely.
        let last = &sweep.last().unwrap().entries;
        assert!((last[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tensor_stays_elliptic_at_small_delta() {
        let g = grid(8);
        let field = CoefficientField::identity(1);
        let (a_hat, _) = compute_homogenized(&g, &field, 1e-4).unwrap();
        assert!(a_hat.ellipticity_check > 0.1, "min eig = {}", a_hat.ellipticity_check);
    }
}

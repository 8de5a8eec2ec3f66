//! Dirichlet spectrum of the inclusion ω and its splitting into mean-zero
//! (Bloch) and nonzero-mean (residual) branches.
//!
//! Modes are L²(ω)-orthonormal; inside a degenerate cluster the basis is
//! rotated so the mean functional ∫_ω ψ is carried by a single mode, which
//! makes the branch labels well defined. Means are computed exactly from the
//! nodal values of the zero extension (∫ N_a = h² on a uniform grid).

use crate::coefficients::CoefficientField;
use crate::eigen::{cluster_indices, dense_oracle_eigens, smallest_eigenpairs, EigenRequest};
use crate::error::{Error, Result};
use crate::fem::{assemble_inclusion_operator, SparseSymmetricOperator};
use crate::geometry::{EpsilonLattice, PeriodicGeometry, StructuredGrid};
use crate::sparse::axpy;

/// Relative gap treated as an exact degeneracy when rotating clusters.
const DEGENERACY_GAP: f64 = 1e-7;
/// |∫ψ| below this is a mean-zero mode (ψ is L²-normalized).
pub const MEAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct InclusionMode {
    /// Dirichlet eigenvalue μ of -div(A∇) on ω.
    pub mu: f64,
    /// Nodal values on the inclusion dofs, L²(ω)-orthonormal.
    pub psi: Vec<f64>,
    /// ∫_ω ψ dy, sign-fixed to be nonnegative.
    pub mean: f64,
    /// c = (∫_ω ψ)².
    pub weight: f64,
    pub mean_zero: bool,
}

#[derive(Debug)]
pub struct InclusionSpectrum {
    pub operator: SparseSymmetricOperator,
    /// Modes ascending in μ.
    pub modes: Vec<InclusionMode>,
    /// Inclusion volume fraction θ = |ω|.
    pub theta: f64,
    /// Whether `modes` is the complete discrete spectrum of the operator.
    pub complete: bool,
}

impl InclusionSpectrum {
    /// Σ c_i over the computed nonzero-mean modes. Parseval for the
    /// indicator of ω bounds this by θ; equality holds for the complete
    /// discrete spectrum.
    pub fn weight_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.weight).sum()
    }

    /// Certified mass of the uncomputed nonzero-mean tail, θ - Σ c_i.
    pub fn tail_mass(&self) -> f64 {
        (self.theta - self.weight_sum()).max(0.0)
    }

    /// Inverse eigenvalues α = 1/μ of the mean-zero branch, decreasing.
    pub fn mean_zero_alphas(&self) -> Vec<f64> {
        self.modes.iter().filter(|m| m.mean_zero).map(|m| 1.0 / m.mu).collect()
    }

    /// (β = 1/μ, c) pairs of the nonzero-mean branch, β decreasing.
    pub fn residual_branches(&self) -> Vec<(f64, f64)> {
        self.modes
            .iter()
            .filter(|m| !m.mean_zero)
            .map(|m| (1.0 / m.mu, m.weight))
            .collect()
    }
}

fn build_modes(
    op: SparseSymmetricOperator,
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    node_integral: f64,
    theta: f64,
    complete: bool,
) -> InclusionSpectrum {
    // Rotate each degenerate cluster so only its first mode carries the mean.
    let mut vectors = vectors;
    let clusters = cluster_indices(&values, DEGENERACY_GAP);
    for (start, len) in clusters {
        if len < 2 {
            continue;
        }
        let means: Vec<f64> = (start..start + len)
            .map(|i| node_integral * vectors[i].iter().sum::<f64>())
            .collect();
        let norm = means.iter().map(|m| m * m).sum::<f64>().sqrt();
        if norm < MEAN_TOL {
            continue;
        }
        // Orthogonal map sending e₁ ↦ μ/‖μ‖ (Householder), applied to the
        // cluster's coefficient space; L²-orthonormality is preserved.
        let k = len;
        let u: Vec<f64> = {
            let mut u: Vec<f64> = means.iter().map(|m| m / norm).collect();
            u[0] -= 1.0;
            let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if un > 0.0 {
                u.iter_mut().for_each(|x| *x /= un);
            }
            u
        };
        let h = |col: usize| -> Vec<f64> {
            // column `col` of H = I - 2uuᵀ
            (0..k).map(|r| (if r == col { 1.0 } else { 0.0 }) - 2.0 * u[r] * u[col]).collect()
        };
        let old: Vec<Vec<f64>> = (0..k).map(|i| vectors[start + i].clone()).collect();
        for col in 0..k {
            let coeffs = h(col);
            let mut v = vec![0.0; old[0].len()];
            for (c, o) in coeffs.iter().zip(&old) {
                axpy(*c, o, &mut v);
            }
            vectors[start + col] = v;
        }
    }

    let modes = values
        .into_iter()
        .zip(vectors)
        .map(|(mu, mut psi)| {
            let mut mean = node_integral * psi.iter().sum::<f64>();
            if mean < 0.0 {
                psi.iter_mut().for_each(|v| *v = -*v);
                mean = -mean;
            }
            let mean_zero = mean < MEAN_TOL;
            InclusionMode {
                mu,
                psi,
                mean,
                weight: if mean_zero { 0.0 } else { mean * mean },
                mean_zero,
            }
        })
        .collect();
    InclusionSpectrum { operator: op, modes, theta, complete }
}

/// The `count` lowest inclusion modes at the given unit-cell resolution.
pub fn inclusion_spectrum(
    grid_y: &StructuredGrid,
    geom: &PeriodicGeometry,
    field: &CoefficientField,
    count: usize,
) -> Result<InclusionSpectrum> {
    if field.m != 1 {
        return Err(Error::Eigen("inclusion spectrum implemented for scalar fields".into()));
    }
    let op = assemble_inclusion_operator(grid_y, geom, field)?;
    let h = grid_y.h();
    let node_integral = h[0] * h[1];
    let n = op.dim();
    let (values, vectors, complete) = if n <= 2000 && (count >= n || 4 * count > n) {
        let r = dense_oracle_eigens(&op)?;
        let take = count.min(n);
        (r.values[..take].to_vec(), r.vectors[..take].to_vec(), take == n)
    } else {
        let mut req = EigenRequest::new(&op, count);
        req.tolerance = 1e-8;
        let r = smallest_eigenpairs(&req)?.ensure_converged()?;
        (r.values, r.vectors, false)
    };
    Ok(build_modes(op, values, vectors, node_integral, geom.theta, complete))
}

/// The complete discrete inclusion spectrum (dense path, dim ≤ 2000). The
/// residual weights then satisfy Σ c_i + Σ‖mean-zero defect‖ = θ exactly in
/// the discrete Parseval sense.
pub fn inclusion_spectrum_complete(
    grid_y: &StructuredGrid,
    geom: &PeriodicGeometry,
    field: &CoefficientField,
) -> Result<InclusionSpectrum> {
    let op = assemble_inclusion_operator(grid_y, geom, field)?;
    inclusion_spectrum(grid_y, geom, field, op.dim())
}

/// The pure Bloch part of the limit spectrum: values κα_i, each carried by
/// every cell of the ε-lattice, hence multiplicity = number of cells per
/// mean-zero mode.
pub fn bloch_values(
    spectrum: &InclusionSpectrum,
    kappa: f64,
    lattice: &EpsilonLattice,
) -> Vec<(f64, usize)> {
    let mult = lattice.cell_count();
    spectrum.mean_zero_alphas().into_iter().map(|a| (kappa * a, mult)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_unit_cell_grid_dirichlet;
    use std::f64::consts::PI;

    fn spectrum(res: usize, count: usize) -> InclusionSpectrum {
        let g = PeriodicGeometry::centered_half_box();
        let grid = build_unit_cell_grid_dirichlet(&g, res).unwrap();
        inclusion_spectrum(&grid, &g, &CoefficientField::identity(1), count).unwrap()
    }

    #[test]
    fn ground_mode_of_half_box() {
        // Side-1/2 square: μ₁ = 2π²/L² = 8π², with c₁ = 64L²/π⁴ = 16/π⁴.
        let s = spectrum(64, 4);
        let mu1 = s.modes[0].mu;
        assert!((mu1 / (8.0 * PI * PI) - 1.0).abs() < 1e-2, "mu1 = {mu1}");
        assert!(!s.modes[0].mean_zero);
        let c1 = s.modes[0].weight;
        assert!((c1 / (16.0 / PI.powi(4)) - 1.0).abs() < 1e-2, "c1 = {c1}");
    }

    #[test]
    fn first_mean_zero_mode() {
        // (1,2)/(2,1) pair at μ = 5π²/L² = 20π², both mean-zero.
        let s = spectrum(64, 4);
        assert!(s.modes[1].mean_zero && s.modes[2].mean_zero);
        let alpha = s.mean_zero_alphas();
        assert!((alpha[0] * 20.0 * PI * PI - 1.0).abs() < 1e-2);
        assert!((s.modes[1].mu - s.modes[2].mu).abs() < 1e-6 * s.modes[1].mu);
    }

    #[test]
    fn degenerate_cluster_carries_mean_on_one_mode() {
        // (1,3)/(3,1) at μ = 40π²: both separately have nonzero mean; the
        // rotated basis puts the whole mean on one mode with c = c₁₃ + c₃₁.
        let s = spectrum(64, 8);
        let target = 40.0 * PI * PI;
        let cluster: Vec<&InclusionMode> = s
            .modes
            .iter()
            .filter(|m| (m.mu / target - 1.0).abs() < 0.02)
            .collect();
        assert_eq!(cluster.len(), 2);
        let nonzero: Vec<_> = cluster.iter().filter(|m| !m.mean_zero).collect();
        assert_eq!(nonzero.len(), 1);
        let c_expect = 2.0 * 64.0 * 0.25 / (9.0 * PI.powi(4));
        assert!((nonzero[0].weight / c_expect - 1.0).abs() < 2e-2);
    }

    #[test]
    fn parseval_weights_bounded_by_theta() {
        let s = spectrum(64, 60);
        let sum = s.weight_sum();
        assert!(sum <= 0.25 + 1e-9, "sum = {sum}");
        assert!(sum > 0.2, "sum = {sum} should capture most of θ = 0.25");
        assert!(s.tail_mass() > 0.0);
    }

    #[test]
    fn complete_spectrum_exhausts_theta_discretely() {
        // Coarse grid so the dense path covers every mode. The discrete
        // Parseval identity gives Σ c_i = ‖P 1_ω‖² ≤ θ with the gap equal to
        // the part of the indicator outside the nodal space.
        let g = PeriodicGeometry::centered_half_box();
        let grid = build_unit_cell_grid_dirichlet(&g, 16).unwrap();
        let s = inclusion_spectrum_complete(&grid, &g, &CoefficientField::identity(1)).unwrap();
        assert!(s.complete);
        assert_eq!(s.modes.len(), s.operator.dim());
        let sum = s.weight_sum();
        assert!(sum <= 0.25 + 1e-9 && sum > 0.15, "sum = {sum}");
    }

    #[test]
    fn scaling_covariance_of_ground_eigenvalue() {
        // Side-1/4 box: μ₁ = 2π²/L² = 32π².
        let g = PeriodicGeometry::box_2d([0.375, 0.375], [0.625, 0.625]).unwrap();
        let grid = build_unit_cell_grid_dirichlet(&g, 64).unwrap();
        let s = inclusion_spectrum(&grid, &g, &CoefficientField::identity(1), 2).unwrap();
        assert!((s.modes[0].mu / (32.0 * PI * PI) - 1.0).abs() < 2e-2);
        assert!((s.theta - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn bloch_values_multiplicity() {
        let s = spectrum(32, 6);
        let lat = EpsilonLattice::unit_square(4).unwrap();
        let kappa = 2.0;
        let b = bloch_values(&s, kappa, &lat);
        assert!(!b.is_empty());
        for (v, mult) in &b {
            assert_eq!(*mult, 16);
            assert!(*v > 0.0 && *v < kappa / (19.0 * PI * PI));
        }
    }
}

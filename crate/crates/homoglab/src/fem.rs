//! Q1 finite element assembly on structured grids: stiffness/mass pairs for
//! the fine contrast operator, the periodic cell operator, the Dirichlet
//! inclusion operator and the constant-coefficient homogenized operator.
//!
//! Elements are multilinear on rectangles with 2x2 Gauss quadrature, which is
//! exact for constant-per-cell coefficients.

use nalgebra::DMatrix;

use crate::coefficients::{CoefficientField, ContrastWeight};
use crate::error::{Error, Result};
use crate::geometry::{PeriodicGeometry, StructuredGrid};
use crate::sparse::CsrMatrix;

/// Which constraint the operator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Zero trace on the boundary of the grid (or of the inclusion).
    Dirichlet,
    /// Periodic identification, full space (constants in the kernel).
    Periodic,
    /// Periodic identification with the constants projected out.
    PeriodicMeanZero,
}

/// Assembled stiffness/mass pair with its dof bookkeeping.
#[derive(Debug, Clone)]
pub struct SparseSymmetricOperator {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub constraint: Constraint,
    /// Per grid node (times block component), the dof index if free.
    pub dof_of_node: Vec<Option<usize>>,
    /// Inverse map: grid node index (times component) per dof.
    pub node_of_dof: Vec<usize>,
    /// System block size m.
    pub block: usize,
    /// Basis of the stiffness kernel under `Periodic` (constants per
    /// component), in dof numbering.
    pub null_basis: Vec<Vec<f64>>,
}

impl SparseSymmetricOperator {
    pub fn dim(&self) -> usize {
        self.stiffness.nrows
    }
}

/// Reference-element integrals on a hx x hy rectangle:
/// grad_blocks[i][j][(a, b)] = ∫ ∂_i N_a ∂_j N_b, mass[(a, b)] = ∫ N_a N_b.
struct ElementMatrices {
    grad: [[DMatrix<f64>; 2]; 2],
    mass: DMatrix<f64>,
}

fn element_matrices(hx: f64, hy: f64) -> ElementMatrices {
    // Gauss points on [0,1].
    let g = [0.5 - 0.5 / 3.0f64.sqrt(), 0.5 + 0.5 / 3.0f64.sqrt()];
    let shapes = |x: f64, y: f64| {
        [
            (1.0 - x) * (1.0 - y),
            x * (1.0 - y),
            x * y,
            (1.0 - x) * y,
        ]
    };
    let dshapes = |x: f64, y: f64| {
        // (d/dx, d/dy) in physical coordinates.
        [
            [-(1.0 - y) / hx, -(1.0 - x) / hy],
            [(1.0 - y) / hx, -x / hy],
            [y / hx, x / hy],
            [-y / hx, (1.0 - x) / hy],
        ]
    };
    let w = 0.25 * hx * hy; // each of 4 points
    let mut grad = [
        [DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)],
        [DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)],
    ];
    let mut mass = DMatrix::zeros(4, 4);
    for &gx in &g {
        for &gy in &g {
            let n = shapes(gx, gy);
            let d = dshapes(gx, gy);
            for a in 0..4 {
                for b in 0..4 {
                    mass[(a, b)] += w * n[a] * n[b];
                    for i in 0..2 {
                        for j in 0..2 {
                            grad[i][j][(a, b)] += w * d[a][i] * d[b][j];
                        }
                    }
                }
            }
        }
    }
    ElementMatrices { grad, mass }
}

/// Dof selection per node: `None` marks a constrained node.
fn dirichlet_dofs(grid: &StructuredGrid) -> Vec<Option<usize>> {
    let [nx, ny] = grid.nodes_per_axis();
    let mut dofs = vec![None; nx * ny];
    let mut next = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let interior = i > 0 && j > 0 && i + 1 < nx && j + 1 < ny;
            if interior {
                dofs[j * nx + i] = Some(next);
                next += 1;
            }
        }
    }
    dofs
}

fn all_dofs(grid: &StructuredGrid) -> Vec<Option<usize>> {
    (0..grid.node_count()).map(Some).collect()
}

/// Core assembly: per-cell dm x dm coefficient matrices, arbitrary dof
/// selection, block size m.
fn assemble(
    grid: &StructuredGrid,
    cell_coeff: impl Fn(usize) -> DMatrix<f64>,
    dof_of_node_scalar: &[Option<usize>],
    m: usize,
    constraint: Constraint,
) -> SparseSymmetricOperator {
    let h = grid.h();
    let elems = element_matrices(h[0], h[1]);
    let ndof_scalar = dof_of_node_scalar.iter().flatten().count();
    let ndof = ndof_scalar * m;

    let mut kt: Vec<(usize, usize, f64)> = Vec::new();
    let mut mt: Vec<(usize, usize, f64)> = Vec::new();
    for cj in 0..grid.resolution[1] {
        for ci in 0..grid.resolution[0] {
            let cell = grid.cell_index(ci, cj);
            let a = cell_coeff(cell);
            let nodes = grid.cell_nodes(ci, cj);
            for la in 0..4 {
                let Some(ra) = dof_of_node_scalar[nodes[la]] else { continue };
                for lb in 0..4 {
                    let Some(rb) = dof_of_node_scalar[nodes[lb]] else { continue };
                    for alpha in 0..m {
                        for beta in 0..m {
                            let mut kv = 0.0;
                            for i in 0..2 {
                                for j in 0..2 {
                                    kv += a[(i * m + alpha, j * m + beta)]
                                        * elems.grad[i][j][(la, lb)];
                                }
                            }
                            if kv != 0.0 {
                                kt.push((ra * m + alpha, rb * m + beta, kv));
                            }
                            if alpha == beta {
                                let mv = elems.mass[(la, lb)];
                                mt.push((ra * m + alpha, rb * m + beta, mv));
                            }
                        }
                    }
                }
            }
        }
    }
    let stiffness = CsrMatrix::from_triplets(ndof, ndof, &kt);
    let mass = CsrMatrix::from_triplets(ndof, ndof, &mt);

    let mut node_of_dof = vec![0usize; ndof];
    for (node, d) in dof_of_node_scalar.iter().enumerate() {
        if let Some(d) = d {
            for alpha in 0..m {
                node_of_dof[d * m + alpha] = node * m + alpha;
            }
        }
    }
    let mut dof_of_node = vec![None; dof_of_node_scalar.len() * m];
    for (node, d) in dof_of_node_scalar.iter().enumerate() {
        if let Some(d) = d {
            for alpha in 0..m {
                dof_of_node[node * m + alpha] = Some(d * m + alpha);
            }
        }
    }

    let null_basis = if matches!(constraint, Constraint::Periodic | Constraint::PeriodicMeanZero) {
        (0..m)
            .map(|alpha| {
                let mut z = vec![0.0; ndof];
                for d in 0..ndof_scalar {
                    z[d * m + alpha] = 1.0;
                }
                z
            })
            .collect()
    } else {
        Vec::new()
    };

    SparseSymmetricOperator {
        stiffness,
        mass,
        constraint,
        dof_of_node,
        node_of_dof,
        block: m,
        null_basis,
    }
}

/// The fine contrast operator -div(Λ A(x/ε) ∇) with zero Dirichlet boundary
/// on the ε-domain grid.
pub fn assemble_fine_operator(
    grid: &StructuredGrid,
    field: &CoefficientField,
    weight: &ContrastWeight,
    epsilon: f64,
) -> Result<SparseSymmetricOperator> {
    if grid.periodic {
        return Err(Error::Assembly("fine operator needs a Dirichlet grid".into()));
    }
    let cells_per_eps = grid.resolution[0] as f64 * epsilon;
    if (cells_per_eps - cells_per_eps.round()).abs() > 1e-9 || cells_per_eps < 1.0 {
        return Err(Error::Assembly(format!(
            "resolution {} does not resolve epsilon cells of size {epsilon}",
            grid.resolution[0]
        )));
    }
    let w = weight.values(grid)?;
    let res = grid.resolution;
    let op = assemble(
        grid,
        |cell| {
            let (ci, cj) = (cell % res[0], cell / res[0]);
            let c = grid.cell_center(ci, cj);
            // Coefficient at y = {x/ε}, sampled at the cell barycenter.
            let y = [c[0] / epsilon, c[1] / epsilon];
            field.eval(y) * w[cell]
        },
        &dirichlet_dofs(grid),
        field.m,
        Constraint::Dirichlet,
    );
    Ok(op)
}

/// The cell operator L_{1,δ} = -div(Λ_δ A ∇) on the periodic unit cell,
/// constants deflated.
pub fn assemble_cell_operator(
    grid_y: &StructuredGrid,
    field: &CoefficientField,
    delta: f64,
) -> Result<SparseSymmetricOperator> {
    if !grid_y.periodic {
        return Err(Error::Assembly("cell operator needs a periodic grid".into()));
    }
    let w = ContrastWeight::new(delta)?.values(grid_y)?;
    let res = grid_y.resolution;
    let op = assemble(
        grid_y,
        |cell| {
            let (ci, cj) = (cell % res[0], cell / res[0]);
            field.eval(grid_y.cell_center(ci, cj)) * w[cell]
        },
        &all_dofs(grid_y),
        field.m,
        Constraint::PeriodicMeanZero,
    );
    Ok(op)
}

/// Dirichlet operator on the inclusion: dofs restricted to nodes strictly
/// inside ω, contrast 1.
pub fn assemble_inclusion_operator(
    grid_y: &StructuredGrid,
    geom: &PeriodicGeometry,
    field: &CoefficientField,
) -> Result<SparseSymmetricOperator> {
    let [nx, ny] = grid_y.nodes_per_axis();
    let wrap = if grid_y.periodic { grid_y.node_count() } else { nx * ny };
    let mut dofs = vec![None; wrap];
    let mut next = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let c = grid_y.node_coord(i, j);
            if geom.contains(c) {
                dofs[j * nx + i] = Some(next);
                next += 1;
            }
        }
    }
    if next == 0 {
        return Err(Error::Assembly(
            "inclusion has no interior nodes at this resolution".into(),
        ));
    }
    let res = grid_y.resolution;
    let op = assemble(
        grid_y,
        |cell| {
            let (ci, cj) = (cell % res[0], cell / res[0]);
            field.eval(grid_y.cell_center(ci, cj))
        },
        &dofs,
        field.m,
        Constraint::Dirichlet,
    );
    Ok(op)
}

/// Constant-coefficient Dirichlet operator -div(Â ∇) on Ω.
pub fn assemble_homogenized_operator(
    grid_omega: &StructuredGrid,
    a_hat: &DMatrix<f64>,
    m: usize,
) -> Result<SparseSymmetricOperator> {
    if grid_omega.periodic {
        return Err(Error::Assembly("homogenized operator needs a Dirichlet grid".into()));
    }
    let dm = 2 * m;
    if a_hat.nrows() != dm || a_hat.ncols() != dm {
        return Err(Error::Assembly(format!(
            "homogenized tensor must be {dm} x {dm}"
        )));
    }
    let sym = (a_hat + a_hat.transpose()) * 0.5;
    let min_eig = sym
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::Assembly(format!(
            "homogenized tensor is not SPD (smallest eigenvalue {min_eig})"
        )));
    }
    let op = assemble(
        grid_omega,
        |_| a_hat.clone(),
        &dirichlet_dofs(grid_omega),
        m,
        Constraint::Dirichlet,
    );
    Ok(op)
}

/// Plain mass/stiffness (A = I, no constraint removal) on a grid, used for
/// discrete L² and H¹ norms of nodal functions.
pub fn assemble_norm_pair(grid: &StructuredGrid) -> (CsrMatrix, CsrMatrix) {
    let op = assemble(
        grid,
        |_| DMatrix::identity(2, 2),
        &(0..grid.node_count()).map(Some).collect::<Vec<_>>(),
        1,
        if grid.periodic { Constraint::Periodic } else { Constraint::Dirichlet },
    );
    (op.stiffness, op.mass)
}

/// 1D Dirichlet stiffness/mass pair on [0,1] with per-cell scalar
/// coefficient; interior nodes only. Oracle path for closed-form tests.
pub fn assemble_1d(ncells: usize, coeff: impl Fn(usize) -> f64) -> (CsrMatrix, CsrMatrix) {
    let h = 1.0 / ncells as f64;
    let n = ncells - 1;
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    for c in 0..ncells {
        let a = coeff(c);
        // local nodes c-1, c (interior numbering: node i is grid node i+1)
        let le = [c as isize - 1, c as isize];
        let kl = [[a / h, -a / h], [-a / h, a / h]];
        let ml = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        for (p, &gp) in le.iter().enumerate() {
            if gp < 0 || gp >= n as isize {
                continue;
            }
            for (q, &gq) in le.iter().enumerate() {
                if gq < 0 || gq >= n as isize {
                    continue;
                }
                kt.push((gp as usize, gq as usize, kl[p][q]));
                mt.push((gp as usize, gq as usize, ml[p][q]));
            }
        }
    }
    (CsrMatrix::from_triplets(n, n, &kt), CsrMatrix::from_triplets(n, n, &mt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_epsilon_domain, build_unit_cell_grid, PeriodicGeometry};
    use crate::sparse::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn galerkin_symmetry_on_random_vectors() {
        let g = PeriodicGeometry::centered_half_box();
        let (_, grid) = build_epsilon_domain(&g, 2, 8).unwrap();
        let field = CoefficientField::checkerboard(2.0, 0.7);
        let w = ContrastWeight::new(0.1).unwrap();
        let op = assemble_fine_operator(&grid, &field, &w, 0.5).unwrap();
        assert!(op.stiffness.symmetry_defect() <= 1e-12 * op.stiffness.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = op.dim();
        for _ in 0..5 {
            let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let ku = op.stiffness.mul_vec_alloc(&u);
            let kv = op.stiffness.mul_vec_alloc(&v);
            let defect = (dot(&v, &ku) - dot(&u, &kv)).abs();
            assert!(defect <= 1e-10 * op.stiffness.max_abs());
        }
    }

    #[test]
    fn fine_operator_linear_in_delta() {
        let g = PeriodicGeometry::centered_half_box();
        let (_, grid) = build_epsilon_domain(&g, 2, 4).unwrap();
        let field = CoefficientField::identity(1);
        let eps = 0.5;
        let k1 = assemble_fine_operator(&grid, &field, &ContrastWeight::new(1.0).unwrap(), eps)
            .unwrap()
            .stiffness;
        let k2 = assemble_fine_operator(&grid, &field, &ContrastWeight::new(2.0).unwrap(), eps)
            .unwrap()
            .stiffness;
        // k2 - k1 equals the inclusion part; k2 = 2*k_inc + k_mat = k1 + k_inc.
        let kinc: Vec<f64> = k2.values.iter().zip(&k1.values).map(|(a, b)| a - b).collect();
        let kmat: Vec<f64> = k1.values.iter().zip(&kinc).map(|(a, b)| a - b).collect();
        for ((v2, vm), vi) in k2.values.iter().zip(&kmat).zip(&kinc) {
            assert!((v2 - (vm + 2.0 * vi)).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_operator_kills_constants() {
        let g = PeriodicGeometry::centered_half_box();
        let grid = build_unit_cell_grid(&g, 8).unwrap();
        let field = CoefficientField::layered(1.0, 4.0, true);
        let op = assemble_cell_operator(&grid, &field, 0.3).unwrap();
        let ones = vec![1.0; op.dim()];
        let k1 = op.stiffness.mul_vec_alloc(&ones);
        let max = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-10 * op.stiffness.max_abs().max(1.0), "max = {max}");
    }

    #[test]
    fn cell_operator_continuous_in_delta() {
        let g = PeriodicGeometry::centered_half_box();
        let grid = build_unit_cell_grid(&g, 8).unwrap();
        let field = CoefficientField::identity(1);
        let a = assemble_cell_operator(&grid, &field, 1.0).unwrap().stiffness;
        let b = assemble_cell_operator(&grid, &field, 1.0 + 1e-14).unwrap().stiffness;
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-13);
        }
    }

    #[test]
    fn inclusion_operator_requires_interior_nodes() {
        // At resolution 4 every node of this quarter-size box sits on its
        // boundary: no strict-interior dofs.
        let g = PeriodicGeometry::box_2d([0.25, 0.25], [0.5, 0.5]).unwrap();
        let grid = build_unit_cell_grid(&g, 4).unwrap();
        let field = CoefficientField::identity(1);
        assert!(assemble_inclusion_operator(&grid, &g, &field).is_err());
    }

    #[test]
    fn homogenized_rejects_non_spd() {
        let g = PeriodicGeometry::centered_half_box();
        let (_, grid) = build_epsilon_domain(&g, 2, 4).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(assemble_homogenized_operator(&grid, &bad, 1).is_err());
    }

    #[test]
    fn one_dimensional_pair_is_tridiagonal() {
        let (k, m) = assemble_1d(10, |_| 1.0);
        assert_eq!(k.nrows, 9);
        // Tridiagonal: at most 3 entries per row.
        for r in 0..9 {
            assert!(k.row(r).0.len() <= 3);
            assert!(m.row(r).0.len() <= 3);
        }
        let h: f64 = 0.1;
        assert!((k.diagonal()[0] - 2.0 / h).abs() < 1e-12);
        assert!((m.diagonal()[0] - 2.0 * h / 3.0).abs() < 1e-12);
    }
}

//! Discrete unfolding: the re-indexing operator T̃_ε from fine grid
//! functions on Ω to two-scale functions on (ε-cells) × Y, its adjoint
//! averaging Ũ_ε, and the projection P_ε = T̃_ε∘Ũ_ε.
//!
//! The fine grid has resolution n·M so every ε-cell carries an exact M-grid
//! copy of Y; T̃ is then pure re-indexing and the algebra (Ũ∘T̃ = Id,
//! adjointness, P idempotent/self-adjoint/contractive) holds to solver
//! round-off, with no interpolation error. Quantitative content lives in the
//! O(ε) rate estimates of `estimate_norm_bounds`.

use rayon::prelude::*;

use std::sync::OnceLock;

use crate::banded::{BandCholesky, BandMatrix};
use crate::error::{Error, Result};
use crate::fem::assemble_norm_pair;
use crate::geometry::{EpsilonLattice, Region, StructuredGrid};
use crate::sparse::{dot, CsrMatrix};

/// Element of L²(Ω̂_ε × Y): per ε-cell a nodal function on the (M+1)²
/// node grid of the unit cell.
#[derive(Debug, Clone)]
pub struct TwoScaleGridFunction {
    pub n_lattice: usize,
    pub subres: usize,
    /// values[cell][y_node], cells row-major, y nodes row-major on (M+1)².
    pub values: Vec<Vec<f64>>,
}

impl TwoScaleGridFunction {
    pub fn zeros(n_lattice: usize, subres: usize) -> Self {
        let ny = (subres + 1) * (subres + 1);
        Self { n_lattice, subres, values: vec![vec![0.0; ny]; n_lattice * n_lattice] }
    }
}

/// Grids, mass matrices and index maps shared by the unfolding operators at
/// one ε = 1/n and subresolution M.
pub struct UnfoldingContext {
    pub lattice: EpsilonLattice,
    pub subres: usize,
    /// Fine grid on Ω at resolution n·M (all nodes carried).
    pub grid_fine: StructuredGrid,
    pub mass_fine: CsrMatrix,
    pub stiff_fine: CsrMatrix,
    /// Unit-cell grid at resolution M with boundary nodes.
    pub grid_y: StructuredGrid,
    pub mass_y: CsrMatrix,
    /// Banded Cholesky factor of the fine mass, built on first use.
    mass_fine_chol: OnceLock<BandCholesky>,
}

fn untagged_grid(resolution: usize) -> StructuredGrid {
    StructuredGrid {
        resolution: [resolution, resolution],
        periodic: false,
        tags: vec![Region::Matrix; resolution * resolution],
        extent: [1.0, 1.0],
    }
}

impl UnfoldingContext {
    pub fn new(n_lattice: usize, subres: usize) -> Result<Self> {
        if n_lattice == 0 || subres == 0 {
            return Err(Error::Geometry("unfolding needs n >= 1 and M >= 1".into()));
        }
        let lattice = EpsilonLattice::unit_square(n_lattice)?;
        let grid_fine = untagged_grid(n_lattice * subres);
        let (stiff_fine, mass_fine) = assemble_norm_pair(&grid_fine);
        let grid_y = untagged_grid(subres);
        let (_, mass_y) = assemble_norm_pair(&grid_y);
        Ok(Self {
            lattice,
            subres,
            grid_fine,
            mass_fine,
            stiff_fine,
            grid_y,
            mass_y,
            mass_fine_chol: OnceLock::new(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.lattice.epsilon
    }

    fn check_fine(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid_fine.node_count() {
            return Err(Error::Geometry(format!(
                "fine function has {} nodes, grid has {}",
                u.len(),
                self.grid_fine.node_count()
            )));
        }
        Ok(())
    }

    fn check_two_scale(&self, phi: &TwoScaleGridFunction) -> Result<()> {
        let ny = (self.subres + 1) * (self.subres + 1);
        if phi.n_lattice != self.lattice.n
            || phi.subres != self.subres
            || phi.values.len() != self.lattice.cell_count()
            || phi.values.iter().any(|v| v.len() != ny)
        {
            return Err(Error::Geometry("two-scale function shape mismatch".into()));
        }
        Ok(())
    }

    /// Global fine-node index of local y-node (li, lj) in cell (ci, cj).
    #[inline]
    fn fine_node(&self, ci: usize, cj: usize, li: usize, lj: usize) -> usize {
        let m = self.subres;
        let nx = self.grid_fine.nodes_per_axis()[0];
        (cj * m + lj) * nx + ci * m + li
    }

    /// (T̃_ε u)(n, y) = u(εn + εy): exact re-indexing.
    pub fn unfold(&self, u: &[f64]) -> Result<TwoScaleGridFunction> {
        self.check_fine(u)?;
        let m = self.subres;
        let n = self.lattice.n;
        let mut phi = TwoScaleGridFunction::zeros(n, m);
        for cj in 0..n {
            for ci in 0..n {
                let vals = &mut phi.values[cj * n + ci];
                for lj in 0..=m {
                    for li in 0..=m {
                        vals[lj * (m + 1) + li] = u[self.fine_node(ci, cj, li, lj)];
                    }
                }
            }
        }
        Ok(phi)
    }

    /// Ũ_ε: the adjoint of T̃_ε. Cell contributions ε²·M_Y·φ_n are folded
    /// back onto the fine grid (shared boundary nodes accumulate) and the
    /// fine mass is inverted, which reproduces Ũ∘T̃ = Id exactly.
    pub fn average(&self, phi: &TwoScaleGridFunction) -> Result<Vec<f64>> {
        self.check_two_scale(phi)?;
        let m = self.subres;
        let n = self.lattice.n;
        let eps2 = self.epsilon() * self.epsilon();
        let mut b = vec![0.0; self.grid_fine.node_count()];
        for cj in 0..n {
            for ci in 0..n {
                let my_phi = self.mass_y.mul_vec_alloc(&phi.values[cj * n + ci]);
                for lj in 0..=m {
                    for li in 0..=m {
                        b[self.fine_node(ci, cj, li, lj)] += eps2 * my_phi[lj * (m + 1) + li];
                    }
                }
            }
        }
        let mut u = b;
        self.mass_fine_solver()?.solve(&mut u);
        Ok(u)
    }

    /// Exact fine mass inverse via a banded Cholesky factor, built once.
    fn mass_fine_solver(&self) -> Result<&BandCholesky> {
        if let Some(c) = self.mass_fine_chol.get() {
            return Ok(c);
        }
        let chol = BandCholesky::factor(&BandMatrix::from_csr(&self.mass_fine))?;
        Ok(self.mass_fine_chol.get_or_init(|| chol))
    }

    /// P_ε = T̃_ε∘Ũ_ε: the orthogonal projection onto the unfolded image of
    /// fine grid functions.
    pub fn project(&self, phi: &TwoScaleGridFunction) -> Result<TwoScaleGridFunction> {
        self.unfold(&self.average(phi)?)
    }

    pub fn two_scale_inner(&self, a: &TwoScaleGridFunction, b: &TwoScaleGridFunction) -> f64 {
        let eps2 = self.epsilon() * self.epsilon();
        let s: f64 = a
            .values
            .par_iter()
            .zip(&b.values)
            .map(|(x, y)| dot(x, &self.mass_y.mul_vec_alloc(y)))
            .sum();
        eps2 * s
    }

    pub fn two_scale_norm(&self, a: &TwoScaleGridFunction) -> f64 {
        self.two_scale_inner(a, a).sqrt()
    }

    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mass_fine.mul_vec_alloc(v))
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.l2_inner(u, u).sqrt()
    }

    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        (self.l2_inner(u, u) + dot(u, &self.stiff_fine.mul_vec_alloc(u))).sqrt()
    }

    /// ⟨φ(n, ·)⟩_Y per cell (|Y| = 1).
    pub fn y_means(&self, phi: &TwoScaleGridFunction) -> Vec<f64> {
        let ones = vec![1.0; (self.subres + 1) * (self.subres + 1)];
        let w = self.mass_y.mul_vec_alloc(&ones);
        phi.values.iter().map(|v| dot(v, &w)).collect()
    }

    /// Per-cell averages ε⁻²∫_cell u of a fine grid function.
    pub fn cell_averages(&self, u: &[f64]) -> Result<Vec<f64>> {
        let phi = self.unfold(u)?;
        Ok(self.y_means(&phi))
    }

    /// Replace u by its per-cell average, as a fine nodal function.
    pub fn cell_average_field(&self, u: &[f64]) -> Result<Vec<f64>> {
        let avg = self.cell_averages(u)?;
        let m = self.subres;
        let n = self.lattice.n;
        let nx = self.grid_fine.nodes_per_axis()[0];
        let mut out = vec![0.0; self.grid_fine.node_count()];
        let mut weight = vec![0.0; self.grid_fine.node_count()];
        for cj in 0..n {
            for ci in 0..n {
                let a = avg[cj * n + ci];
                for lj in 0..=m {
                    for li in 0..=m {
                        let node = (cj * m + lj) * nx + ci * m + li;
                        out[node] += a;
                        weight[node] += 1.0;
                    }
                }
            }
        }
        for (o, w) in out.iter_mut().zip(&weight) {
            *o /= w;
        }
        Ok(out)
    }

    /// Sample a function of x at the fine nodes.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let [nx, ny] = self.grid_fine.nodes_per_axis();
        let mut u = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                u.push(f(self.grid_fine.node_coord(i, j)));
            }
        }
        u
    }

    /// A two-scale function φ(n, y) = g(y), the same oscillation pattern in
    /// every cell.
    pub fn pattern(&self, g: impl Fn([f64; 2]) -> f64) -> TwoScaleGridFunction {
        let m = self.subres;
        let mut vals = Vec::with_capacity((m + 1) * (m + 1));
        for lj in 0..=m {
            for li in 0..=m {
                vals.push(g([li as f64 / m as f64, lj as f64 / m as f64]));
            }
        }
        TwoScaleGridFunction {
            n_lattice: self.lattice.n,
            subres: m,
            values: vec![vals; self.lattice.cell_count()],
        }
    }
}

/// Rate measurements of the quantitative unfolding estimates over an ε list.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateReport {
    pub eps: Vec<f64>,
    /// Duality quotients for ‖Ũ_ε − ⟨·⟩_Y‖ in the H⁻¹-type pairing.
    pub r_a: Vec<f64>,
    /// ‖T̃_ε u − ι u‖_{L²(Ω×Y)}/‖u‖_{H¹}, ι the cellwise embedding.
    pub r_b: Vec<f64>,
    /// ‖cell-average(u) − u‖_{L²}/‖u‖_{H¹}.
    pub r_c: Vec<f64>,
    pub slope_a: f64,
    pub slope_b: f64,
    pub slope_c: f64,
}

/// Least-squares slope of ln y against ln x.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// The smooth test family: low-frequency sine products with nonzero means
/// and gradients in both axes.
fn smooth_family() -> Vec<Box<dyn Fn([f64; 2]) -> f64 + Sync>> {
    vec![
        Box::new(|x: [f64; 2]| (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()),
        Box::new(|x: [f64; 2]| {
            (2.0 * std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
        }),
        Box::new(|x: [f64; 2]| (std::f64::consts::PI * x[0]).sin()),
    ]
}

/// Oscillation patterns for the averaging estimate.
fn pattern_family() -> Vec<Box<dyn Fn([f64; 2]) -> f64 + Sync>> {
    vec![
        Box::new(|y: [f64; 2]| (2.0 * std::f64::consts::PI * y[0]).sin()),
        Box::new(|y: [f64; 2]| {
            (2.0 * std::f64::consts::PI * y[0]).sin() * (2.0 * std::f64::consts::PI * y[1]).sin()
        }),
    ]
}

/// Measure r_a, r_b, r_c over the ε list and fit their log-log slopes.
/// Theory predicts all three decay like ε (slope 1).
pub fn estimate_norm_bounds(eps_list: &[f64], subres: usize) -> Result<RateReport> {
    if eps_list.is_empty() {
        return Err(Error::Config("rate estimate needs a nonempty epsilon list".into()));
    }
    let smooth = smooth_family();
    let patterns = pattern_family();
    let mut r_a = Vec::new();
    let mut r_b = Vec::new();
    let mut r_c = Vec::new();
    for &eps in eps_list {
        let n = (1.0 / eps).round() as usize;
        if ((n as f64) * eps - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("epsilon {eps} is not a reciprocal integer")));
        }
        let ctx = UnfoldingContext::new(n, subres)?;

        let us: Vec<Vec<f64>> = smooth.iter().map(|f| ctx.sample(f)).collect();
        let h1: Vec<f64> = us.iter().map(|u| ctx.h1_norm(u)).collect();

        // r_c: distance of u to its cell averages, relative to H¹.
        let mut rc: f64 = 0.0;
        for (u, h) in us.iter().zip(&h1) {
            let avg = ctx.cell_averages(u)?;
            // ‖u − Qu‖² computed on the two-scale side (exact quadrature).
            let phi = ctx.unfold(u)?;
            let mut shifted = phi.clone();
            for (cell, v) in shifted.values.iter_mut().enumerate() {
                for x in v.iter_mut() {
                    *x -= avg[cell];
                }
            }
            rc = rc.max(ctx.two_scale_norm(&shifted) / h);
        }
        r_c.push(rc);

        // r_b: ‖T̃u − ιu‖ with ι the cellwise-constant embedding, computed
        // through the Ω-side norm as a cross-check of the same decay.
        let mut rb: f64 = 0.0;
        for (u, h) in us.iter().zip(&h1) {
            let qu = ctx.cell_average_field(u)?;
            let diff: Vec<f64> = u.iter().zip(&qu).map(|(a, b)| a - b).collect();
            rb = rb.max(ctx.l2_norm(&diff) / h);
        }
        r_b.push(rb);

        // r_a: duality quotients |⟨(Ũ − ⟨·⟩_Y)φ, v⟩| / (‖φ‖‖v‖_{H¹}),
        // using adjointness ⟨Ũφ, v⟩ = ⟨φ, T̃v⟩ to avoid the mass solve.
        let mut ra: f64 = 0.0;
        let eps2 = eps * eps;
        let mut phis: Vec<TwoScaleGridFunction> =
            patterns.iter().map(|g| ctx.pattern(g)).collect();
        for u in &us {
            phis.push(ctx.unfold(u)?);
        }
        for phi in &phis {
            let norm_phi = ctx.two_scale_norm(phi);
            let means = ctx.y_means(phi);
            for (v, hv) in us.iter().zip(&h1) {
                let tv = ctx.unfold(v)?;
                let lhs = ctx.two_scale_inner(phi, &tv);
                let v_avgs = ctx.y_means(&tv);
                let rhs: f64 =
                    eps2 * means.iter().zip(&v_avgs).map(|(a, b)| a * b).sum::<f64>();
                ra = ra.max((lhs - rhs).abs() / (norm_phi * hv));
            }
        }
        r_a.push(ra);
    }
    let slope_a = fit_loglog_slope(eps_list, &r_a);
    let slope_b = fit_loglog_slope(eps_list, &r_b);
    let slope_c = fit_loglog_slope(eps_list, &r_c);
    Ok(RateReport { eps: eps_list.to_vec(), r_a, r_b, r_c, slope_a, slope_b, slope_c })
}

//! The coefficient tensor A(y), the contrast weight, and validation of the
//! structural conditions (ellipticity, periodicity, Hölder continuity,
//! symmetry).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Region, StructuredGrid};

/// Built-in coefficient descriptors. Scalar descriptors act as
/// a(y)·δ_ij·δ_αβ for any system size m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Descriptor {
    Identity,
    /// Scalar coefficient depending on y₁ only. `smooth = false` gives the
    /// half-half piecewise profile {low on [0,1/2), high on [1/2,1)};
    /// `smooth = true` gives the cosine profile with the same extremes.
    Layered { low: f64, high: f64, smooth: bool },
    /// Smooth scalar field c0 + c1·sin(2πy₁)sin(2πy₂).
    CheckerboardSmoothed { c0: f64, c1: f64 },
    /// Constant dm x dm matrix, row-major. Also used to inject structural
    /// violations in tests.
    ConstantMatrix { entries: Vec<f64> },
    /// Values on a uniform sample lattice, bilinearly interpolated.
    /// `values[j * resolution + i]` holds the row-major dm x dm matrix at
    /// y = (i/resolution, j/resolution).
    UserSampled { resolution: usize, values: Vec<Vec<f64>>, holder_lambda: f64 },
}

/// The tensor A(y): periodic by construction (the evaluator consumes the
/// fractional part of y only).
#[derive(Debug, Clone)]
pub struct CoefficientField {
    /// System size (number of equations).
    pub m: usize,
    /// Declared ellipticity constant.
    pub nu: f64,
    pub descriptor: Descriptor,
}

fn fract(v: f64) -> f64 {
    let f = v - v.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

impl CoefficientField {
    pub fn identity(m: usize) -> Self {
        Self { m, nu: 1.0, descriptor: Descriptor::Identity }
    }

    pub fn layered(low: f64, high: f64, smooth: bool) -> Self {
        let nu = low.min(1.0 / high);
        Self { m: 1, nu, descriptor: Descriptor::Layered { low, high, smooth } }
    }

    pub fn checkerboard(c0: f64, c1: f64) -> Self {
        let nu = (c0 - c1.abs()).min(1.0 / (c0 + c1.abs()));
        Self { m: 1, nu, descriptor: Descriptor::CheckerboardSmoothed { c0, c1 } }
    }

    pub fn constant_matrix(m: usize, entries: Vec<f64>) -> Result<Self> {
        let dm = 2 * m;
        if entries.len() != dm * dm {
            return Err(Error::Coefficient(format!(
                "constant matrix needs {} entries, got {}",
                dm * dm,
                entries.len()
            )));
        }
        Ok(Self { m, nu: 0.0, descriptor: Descriptor::ConstantMatrix { entries } })
    }

    /// Scalar value for scalar-type descriptors at a point of Y.
    fn scalar_at(&self, y: [f64; 2]) -> Option<f64> {
        match &self.descriptor {
            Descriptor::Identity => Some(1.0),
            Descriptor::Layered { low, high, smooth } => {
                let y1 = fract(y[0]);
                Some(if *smooth {
                    0.5 * (low + high) - 0.5 * (high - low) * (2.0 * std::f64::consts::PI * y1).cos()
                } else if y1 < 0.5 {
                    *low
                } else {
                    *high
                })
            }
            Descriptor::CheckerboardSmoothed { c0, c1 } => {
                let p = 2.0 * std::f64::consts::PI;
                Some(c0 + c1 * (p * fract(y[0])).sin() * (p * fract(y[1])).sin())
            }
            _ => None,
        }
    }

    /// Evaluate the dm x dm array a_ij^{αβ} at y (fractional part taken).
    /// Row/column index is i * m + α.
    pub fn eval(&self, y: [f64; 2]) -> DMatrix<f64> {
        let dm = 2 * self.m;
        if let Some(a) = self.scalar_at(y) {
            return DMatrix::identity(dm, dm) * a;
        }
        match &self.descriptor {
            Descriptor::ConstantMatrix { entries } => {
                DMatrix::from_row_slice(dm, dm, entries)
            }
            Descriptor::UserSampled { resolution, values, .. } => {
                let r = *resolution;
                let (y0, y1) = (fract(y[0]) * r as f64, fract(y[1]) * r as f64);
                let (i0, j0) = (y0.floor() as usize % r, y1.floor() as usize % r);
                let (tx, ty) = (y0 - y0.floor(), y1 - y1.floor());
                let at = |i: usize, j: usize| &values[(j % r) * r + (i % r)];
                let mut out = DMatrix::zeros(dm, dm);
                for (w, v) in [
                    ((1.0 - tx) * (1.0 - ty), at(i0, j0)),
                    (tx * (1.0 - ty), at(i0 + 1, j0)),
                    ((1.0 - tx) * ty, at(i0, j0 + 1)),
                    (tx * ty, at(i0 + 1, j0 + 1)),
                ] {
                    for k in 0..dm * dm {
                        out[(k / dm, k % dm)] += w * v[k];
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }

    /// Hölder exponent used in validation. Built-in fields are Lipschitz.
    pub fn holder_lambda(&self) -> f64 {
        match &self.descriptor {
            Descriptor::UserSampled { holder_lambda, .. } => *holder_lambda,
            _ => 1.0,
        }
    }
}

/// Outcome of sampling the structural conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symmetry_defect: f64,
    /// Empirical lower/upper bounds of the quadratic form on unit ξ.
    pub ellipticity_bounds: (f64, f64),
    /// Sampled sup |A(y)-A(w)| / |y-w|^λ.
    pub holder_quotient: f64,
    pub holder_lambda: f64,
    pub symmetric: bool,
    pub elliptic: bool,
}

/// Sample symmetry a_ij^{αβ} = a_ji^{βα}, the ellipticity bounds on random
/// directions, and a Hölder quotient on random point pairs.
pub fn validate_structure(
    field: &CoefficientField,
    samples: usize,
    directions: usize,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::Coefficient("validation needs samples >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let m = field.m;
    let dm = 2 * m;
    let mut symmetry_defect = 0.0f64;
    let mut form_min = f64::INFINITY;
    let mut form_max = f64::NEG_INFINITY;
    let mut holder_quotient = 0.0f64;
    let lambda = field.holder_lambda();

    let mut prev: Option<([f64; 2], DMatrix<f64>)> = None;
    for _ in 0..samples {
        let y = [rng.gen::<f64>(), rng.gen::<f64>()];
        let a = field.eval(y);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Coefficient(format!(
                "evaluator returned non-finite entries at y = ({}, {})",
                y[0], y[1]
            )));
        }
        // Symmetry: index k = i*m + α against l = j*m + β vs (j*m+β, i*m+α).
        for k in 0..dm {
            for l in 0..dm {
                symmetry_defect = symmetry_defect.max((a[(k, l)] - a[(l, k)]).abs());
            }
        }
        for _ in 0..directions {
            let xi: Vec<f64> = (0..dm).map(|_| rng.gen::<f64>() - 0.5).collect();
            let norm2: f64 = xi.iter().map(|v| v * v).sum();
            if norm2 < 1e-12 {
                continue;
            }
            let mut q = 0.0;
            for k in 0..dm {
                for l in 0..dm {
                    q += a[(k, l)] * xi[k] * xi[l];
                }
            }
            q /= norm2;
            form_min = form_min.min(q);
            form_max = form_max.max(q);
        }
        if let Some((w, aw)) = &prev {
            let dy = ((y[0] - w[0]).powi(2) + (y[1] - w[1]).powi(2)).sqrt();
            if dy > 1e-10 {
                let da = (&a - aw).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
                holder_quotient = holder_quotient.max(da / dy.powf(lambda));
            }
        }
        prev = Some((y, a));
    }
    let elliptic = form_min > 0.0;
    Ok(ValidationReport {
        symmetry_defect,
        ellipticity_bounds: (form_min, form_max),
        holder_quotient,
        holder_lambda: lambda,
        symmetric: symmetry_defect < 1e-12,
        elliptic,
    })
}

/// The contrast weight Λ: δ on the inclusion set, 1 on the matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastWeight {
    pub delta: f64,
    /// κ = δ⁻¹ε² when bound to a lattice size.
    pub kappa: Option<f64>,
}

impl ContrastWeight {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Coefficient(format!("contrast delta must be in (0, inf), got {delta}")));
        }
        Ok(Self { delta, kappa: None })
    }

    pub fn bind_epsilon(mut self, epsilon: f64) -> Self {
        self.kappa = Some(epsilon * epsilon / self.delta);
        self
    }

    /// Per-cell weight array: δ on inclusion-tagged cells, 1 elsewhere.
    pub fn values(&self, grid: &StructuredGrid) -> Result<Vec<f64>> {
        if grid.tags.len() != grid.cell_count() {
            return Err(Error::Coefficient("grid carries no region tags".into()));
        }
        Ok(grid
            .tags
            .iter()
            .map(|t| if *t == Region::Inclusion { self.delta } else { 1.0 })
            .collect())
    }
}

//! Experiment orchestration: declarative configs, the fine-versus-limit
//! eigenvalue convergence sweep, the contrast-regime study, and
//! deterministic persistence.
//!
//! Every output file starts with a header block carrying the config hash,
//! crate version, and tolerance settings, so runs are reproducible and
//! attributable. Numbers are written in full precision; two runs with the
//! same config and seed produce bit-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::banded::eigenvalue_count_below;
use crate::cell::{compute_homogenized, HomogenizedTensor};
use crate::coefficients::{CoefficientField, ContrastWeight};
use crate::eigen::{smallest_eigenpairs, EigenRequest};
use crate::error::{Error, Result};
use crate::fem::assemble_fine_operator;
use crate::geometry::{
    build_epsilon_domain, build_unit_cell_grid, build_unit_cell_grid_dirichlet, PeriodicGeometry,
};
use crate::inclusion::{bloch_values, inclusion_spectrum, InclusionSpectrum};
use crate::limit::{
    homogenized_eigenvalues, leading_etas, limit_eta, residual_roots, two_scale_dense_oracle,
    BetaFunction, ResidualRoot,
};
use crate::unfolding::{estimate_norm_bounds, RateReport};

pub const EIGEN_TOL: f64 = 1e-9;
pub const CG_TOL: f64 = 1e-12;
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;

/// Geometry section: the axis-aligned inclusion box inside the unit cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub inclusion_lower: [f64; 2],
    pub inclusion_upper: [f64; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { inclusion_lower: [0.25, 0.25], inclusion_upper: [0.75, 0.75] }
    }
}

/// Coefficient section: which periodic tensor A(y) to use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientConfig {
    Identity,
    Layered { low: f64, high: f64, smooth: bool },
    Checkerboard { c0: f64, c1: f64 },
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self::Identity
    }
}

/// Contrast law: fixed δ or the regime family δ = ε^p.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ContrastLaw {
    Fixed { delta: f64 },
    Power { p: u32 },
}

impl Default for ContrastLaw {
    fn default() -> Self {
        Self::Power { p: 2 }
    }
}

/// Sweep section: grids, counts, and the ε list (as denominators of 1/n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// ε = 1/n per entry.
    pub eps_denominators: Vec<usize>,
    /// Fine cells per ε-cell axis.
    pub subres: usize,
    /// Number of eigenvalue pairs to compare.
    pub eigen_count: usize,
    /// Unit-cell grid resolution for correctors and inclusion modes.
    pub y_resolution: usize,
    /// Grid resolution for homogenized Dirichlet eigenvalues.
    pub omega_resolution: usize,
    /// Inclusion modes to compute.
    pub mode_count: usize,
    /// Homogenized levels θ_j used for roots.
    pub theta_count: usize,
    /// Pole intervals for the root table; None takes all certified ones.
    pub intervals: Option<usize>,
    /// Build the limit side of the sweep with the same per-cell
    /// discretization as the fine grid, so differences isolate the
    /// ε-coupling error instead of a fixed per-cell quadrature mismatch.
    #[serde(default = "default_true")]
    pub matched_discretization: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps_denominators: vec![4, 8, 16],
            subres: 8,
            eigen_count: 6,
            y_resolution: 64,
            omega_resolution: 64,
            mode_count: 60,
            theta_count: 6,
            intervals: None,
            matched_discretization: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    /// Hex seed for the iterative eigensolver starting vectors.
    pub seed: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), seed: "5EED".into() }
    }
}

/// One declarative file drives every experiment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub coefficient: CoefficientConfig,
    #[serde(default)]
    pub contrast: ContrastLaw,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.eps_denominators.is_empty() {
            return Err(Error::Config("eps_denominators must be nonempty".into()));
        }
        for &n in &self.sweep.eps_denominators {
            if n == 0 {
                return Err(Error::Config("eps denominators must be ≥ 1".into()));
            }
            let eps = 1.0 / n as f64;
            if !(self.delta_for(eps) > 0.0) {
                return Err(Error::Config(format!("contrast law gives δ ≤ 0 at ε = {eps}")));
            }
        }
        if self.sweep.eigen_count == 0 || self.sweep.theta_count == 0 {
            return Err(Error::Config("eigen_count and theta_count must be ≥ 1".into()));
        }
        u64::from_str_radix(&self.output.seed, 16)
            .map_err(|_| Error::Config(format!("seed '{}' is not hex", self.output.seed)))?;
        self.geometry()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<PeriodicGeometry> {
        PeriodicGeometry::box_2d(self.geometry.inclusion_lower, self.geometry.inclusion_upper)
    }

    pub fn field(&self) -> CoefficientField {
        match &self.coefficient {
            CoefficientConfig::Identity => CoefficientField::identity(1),
            CoefficientConfig::Layered { low, high, smooth } => {
                CoefficientField::layered(*low, *high, *smooth)
            }
            CoefficientConfig::Checkerboard { c0, c1 } => CoefficientField::checkerboard(*c0, *c1),
        }
    }

    pub fn delta_for(&self, eps: f64) -> f64 {
        match self.contrast {
            ContrastLaw::Fixed { delta } => delta,
            ContrastLaw::Power { p } => eps.powi(p as i32),
        }
    }

    pub fn kappa_for(&self, eps: f64) -> f64 {
        eps * eps / self.delta_for(eps)
    }

    pub fn seed(&self) -> u64 {
        u64::from_str_radix(&self.output.seed, 16).unwrap_or(0x5EED)
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.sweep.eps_denominators.iter().map(|&n| 1.0 / n as f64).collect()
    }

    /// SHA-256 of the canonical JSON serialization. The output directory is
    /// excluded: the hash identifies the experiment, not where it is written,
    /// so runs into different directories produce identical artifacts.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output.dir = String::new();
        let json = serde_json::to_string(&canon).unwrap_or_default();
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }
}

/// Header block prepended to every output file.
pub fn file_header(cfg: &ExperimentConfig) -> String {
    format!(
        "# config_hash: {}\n# generator: homoglab {}\n# tolerances: eigen={EIGEN_TOL:e} cg={CG_TOL:e} root_residual={ROOT_RESIDUAL_TOL:e}\n",
        cfg.hash(),
        env!("CARGO_PKG_VERSION"),
    )
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Single-stage runs backing the CLI subcommands.
// ---------------------------------------------------------------------------

/// Correctors and Â_δ at the first configured contrast; writes tensor.json.
pub fn run_cell(cfg: &ExperimentConfig) -> Result<HomogenizedTensor> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let grid = build_unit_cell_grid(&geom, cfg.sweep.y_resolution)?;
    let eps = cfg.eps_list()[0];
    let delta = cfg.delta_for(eps);
    let (tensor, correctors) = compute_homogenized(&grid, &field, delta)?;

    let mut entries = Vec::new();
    let dm = tensor.entries.nrows();
    let m = dm / 2;
    for r in 0..dm {
        for c in 0..dm {
            entries.push(serde_json::json!({
                "i": r / m + 1, "alpha": r % m + 1,
                "j": c / m + 1, "beta": c % m + 1,
                "value": tensor.entries[(r, c)],
            }));
        }
    }
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "delta": delta,
        "resolution": cfg.sweep.y_resolution,
        "ellipticity": tensor.ellipticity_check,
        "solve_residuals": correctors.residuals,
        "entries": entries,
    });
    write_text(
        &cfg.out_dir().join("tensor.json"),
        &serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    Ok(tensor)
}

/// Inclusion modes; writes inclusion.csv with one row per mode.
pub fn run_inclusion(cfg: &ExperimentConfig) -> Result<InclusionSpectrum> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let grid = build_unit_cell_grid(&geom, cfg.sweep.y_resolution)?;
    let spectrum = inclusion_spectrum(&grid, &geom, &field, cfg.sweep.mode_count)?;

    let mut body = file_header(cfg);
    body.push_str("index,mu,inv,mean,branch,c\n");
    for (i, m) in spectrum.modes.iter().enumerate() {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            fmt(m.mu),
            fmt(1.0 / m.mu),
            fmt(m.mean),
            if m.mean_zero { "bloch" } else { "residual" },
            fmt(m.weight),
        ));
    }
    write_text(&cfg.out_dir().join("inclusion.csv"), &body)?;
    Ok(spectrum)
}

/// Everything needed to evaluate the limit spectrum at one (ε, δ).
pub struct LimitPipeline {
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub a_hat: HomogenizedTensor,
    pub thetas: Vec<f64>,
    pub secular: BetaFunction,
    pub bloch: Vec<(f64, usize)>,
    pub roots: Vec<ResidualRoot>,
    pub etas: Vec<f64>,
}

/// Build the limit spectrum for one ε: Â_δ, θ_j, β_κ, Bloch values, roots,
/// and the merged η list.
pub fn limit_pipeline(cfg: &ExperimentConfig, eps: f64, count: usize) -> Result<LimitPipeline> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let delta = cfg.delta_for(eps);
    let kappa = cfg.kappa_for(eps);
    let n = (1.0 / eps).round() as usize;
    let lattice = crate::geometry::EpsilonLattice::unit_square(n)?;

    let grid_y = build_unit_cell_grid(&geom, cfg.sweep.y_resolution)?;
    let (a_hat, _) = compute_homogenized(&grid_y, &field, delta)?;
    let grid_omega = build_unit_cell_grid_dirichlet(&geom, cfg.sweep.omega_resolution)?;
    let thetas = homogenized_eigenvalues(&grid_omega, &a_hat.entries, cfg.sweep.theta_count)?;

    let spectrum = inclusion_spectrum(&grid_y, &geom, &field, cfg.sweep.mode_count)?;
    let secular = BetaFunction::from_spectrum(&spectrum, kappa)?;
    let bloch = bloch_values(&spectrum, kappa, &lattice);
    let roots = residual_roots(&secular, &thetas, cfg.sweep.intervals)?;
    let report = limit_eta(&bloch, &roots);
    let etas = leading_etas(&report, count);
    Ok(LimitPipeline { eps, delta, kappa, a_hat, thetas, secular, bloch, roots, etas })
}

/// Secular function, root table, and merged η list for the smallest ε.
/// Writes roots.csv and eta.json.
pub fn run_limit(cfg: &ExperimentConfig) -> Result<LimitPipeline> {
    let eps = cfg.eps_list().into_iter().fold(f64::INFINITY, f64::min);
    let pipe = limit_pipeline(cfg, eps, cfg.sweep.eigen_count.max(cfg.sweep.theta_count))?;

    let mut body = file_header(cfg);
    body.push_str("branch,interval,theta_index,lambda,eta,bracket_lo,bracket_hi,residual,defect_factor,pole_grazing\n");
    for r in &pipe.roots {
        body.push_str(&format!(
            "residual,{},{},{},{},{},{},{},{},{}\n",
            r.interval_index,
            r.theta_index + 1,
            fmt(r.lambda),
            fmt(r.eta),
            fmt(r.bracket.0),
            fmt(r.bracket.1),
            fmt(r.residual),
            fmt(r.defect_factor),
            r.pole_grazing,
        ));
    }
    write_text(&cfg.out_dir().join("roots.csv"), &body)?;

    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "eps": pipe.eps,
        "delta": pipe.delta,
        "kappa": pipe.kappa,
        "thetas": pipe.thetas,
        "bloch": pipe.bloch.iter().map(|(v, m)| serde_json::json!({"value": v, "multiplicity": m})).collect::<Vec<_>>(),
        "eta": pipe.etas,
    });
    write_text(&cfg.out_dir().join("eta.json"), &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(pipe)
}

/// The k smallest fine eigenvalues at one ε.
pub fn fine_eigenvalues(cfg: &ExperimentConfig, eps: f64, k: usize) -> Result<Vec<f64>> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let n = (1.0 / eps).round() as usize;
    let (_, grid) = build_epsilon_domain(&geom, n, cfg.sweep.subres)?;
    let weight = ContrastWeight::new(cfg.delta_for(eps))?.bind_epsilon(eps);
    let op = assemble_fine_operator(&grid, &field, &weight, eps)?;
    let mut req = EigenRequest::new(&op, k);
    req.tolerance = EIGEN_TOL;
    req.seed = cfg.seed();
    let res = smallest_eigenpairs(&req)?.ensure_converged()?;
    Ok(res.values)
}

/// Fine spectra for every configured ε; writes fine.csv.
pub fn run_fine(cfg: &ExperimentConfig) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut body = file_header(cfg);
    body.push_str("eps,index,lambda,inv_lambda\n");
    for eps in cfg.eps_list() {
        let vals = fine_eigenvalues(cfg, eps, cfg.sweep.eigen_count)?;
        for (i, v) in vals.iter().enumerate() {
            body.push_str(&format!("{},{},{},{}\n", fmt(eps), i + 1, fmt(*v), fmt(1.0 / v)));
        }
        out.push((eps, vals));
    }
    write_text(&cfg.out_dir().join("fine.csv"), &body)?;
    Ok(out)
}

/// Two-scale transform rate verification; writes unfold_rates.csv and
/// unfold_slopes.json.
pub fn run_unfold_check(cfg: &ExperimentConfig) -> Result<RateReport> {
    let eps = cfg.eps_list();
    let report = estimate_norm_bounds(&eps, cfg.sweep.subres)?;
    let mut body = file_header(cfg);
    body.push_str("eps,r_a,r_b,r_c\n");
    for i in 0..report.eps.len() {
        body.push_str(&format!(
            "{},{},{},{}\n",
            fmt(report.eps[i]),
            fmt(report.r_a[i]),
            fmt(report.r_b[i]),
            fmt(report.r_c[i]),
        ));
    }
    write_text(&cfg.out_dir().join("unfold_rates.csv"), &body)?;
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "slope_a": report.slope_a,
        "slope_b": report.slope_b,
        "slope_c": report.slope_c,
    });
    write_text(
        &cfg.out_dir().join("unfold_slopes.json"),
        &serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// The convergence sweep.
// ---------------------------------------------------------------------------

/// Per-ε outcome of the sweep: paired values or a recorded failure.
#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    /// Fine inverse eigenvalues 1/λ, decreasing.
    pub fine_inverse: Vec<f64>,
    /// Limit values η, decreasing, same length.
    pub eta: Vec<f64>,
    /// |1/λ_i − η_i| per index.
    pub diffs: Vec<f64>,
    pub runtime_seconds: f64,
}

/// The full sweep result with per-index and aggregate fitted slopes.
#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// ε values where a stage failed, with the error text.
    pub failures: Vec<(f64, String)>,
    /// Fitted log-log slope of diff_i vs ε per index i.
    pub per_index_slopes: Vec<f64>,
    /// Slope of the per-ε mean error.
    pub aggregate_slope: f64,
}

fn sweep_one(cfg: &ExperimentConfig, eps: f64) -> Result<SweepEntry> {
    let start = std::time::Instant::now();
    let k = cfg.sweep.eigen_count;
    let fine = fine_eigenvalues(cfg, eps, k)?;
    let fine_inverse: Vec<f64> = fine.iter().map(|v| 1.0 / v).collect();
    let pipe = if cfg.sweep.matched_discretization {
        let n = (1.0 / eps).round() as usize;
        let mut matched = cfg.clone();
        matched.sweep.y_resolution = cfg.sweep.subres;
        matched.sweep.omega_resolution = n * cfg.sweep.subres;
        limit_pipeline(&matched, eps, k)?
    } else {
        limit_pipeline(cfg, eps, k)?
    };
    if pipe.etas.len() < k {
        return Err(Error::Spectral(format!(
            "limit spectrum provides {} values, {k} requested",
            pipe.etas.len()
        )));
    }
    let diffs = fine_inverse
        .iter()
        .zip(&pipe.etas)
        .map(|(l, e)| (l - e).abs())
        .collect();
    Ok(SweepEntry {
        eps,
        delta: pipe.delta,
        kappa: pipe.kappa,
        fine_inverse,
        eta: pipe.etas,
        diffs,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run the convergence experiment: pair fine inverse eigenvalues with the
/// limit spectrum per ε, difference by sorted position, fit slopes. Stage
/// failures are recorded per ε and the sweep continues. Writes rates.csv and
/// slopes.json.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let k = cfg.sweep.eigen_count;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut eps_sorted = cfg.eps_list();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    for eps in eps_sorted {
        match sweep_one(cfg, eps) {
            Ok(e) => entries.push(e),
            Err(err) => failures.push((eps, err.to_string())),
        }
    }

    let mut per_index_slopes = Vec::new();
    let eps_ok: Vec<f64> = entries.iter().map(|e| e.eps).collect();
    if entries.len() >= 2 {
        for i in 0..k {
            let d: Vec<f64> = entries.iter().map(|e| e.diffs[i].max(1e-300)).collect();
            per_index_slopes.push(crate::unfolding::fit_loglog_slope(&eps_ok, &d));
        }
    }
    let aggregate_slope = if entries.len() >= 2 {
        let mean: Vec<f64> = entries
            .iter()
            .map(|e| e.diffs.iter().sum::<f64>() / e.diffs.len() as f64)
            .collect();
        crate::unfolding::fit_loglog_slope(&eps_ok, &mean)
    } else {
        f64::NAN
    };

    let mut body = file_header(cfg);
    body.push_str("eps,index,inv_lambda,eta,abs_diff\n");
    for e in &entries {
        for i in 0..e.diffs.len() {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt(e.eps),
                i + 1,
                fmt(e.fine_inverse[i]),
                fmt(e.eta[i]),
                fmt(e.diffs[i]),
            ));
        }
    }
    write_text(&cfg.out_dir().join("rates.csv"), &body)?;
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "per_index_slopes": per_index_slopes,
        "aggregate_slope": aggregate_slope,
        "failures": failures.iter().map(|(e, m)| serde_json::json!({"eps": e, "error": m})).collect::<Vec<_>>(),
    });
    write_text(&cfg.out_dir().join("slopes.json"), &serde_json::to_string_pretty(&doc).unwrap())?;

    Ok(SweepReport { entries, failures, per_index_slopes, aggregate_slope })
}

// ---------------------------------------------------------------------------
// Regime study.
// ---------------------------------------------------------------------------

/// Result of one regime run at δ = ε^p.
#[derive(Debug, Serialize)]
pub struct RegimeResult {
    pub p: u32,
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    /// p ≠ 2: relative gap between the leading fine eigenvalue and the
    /// regime's predicted leading value.
    pub leading_relative_gap: Option<f64>,
    /// p = 2: size of the fine cluster found near the first Bloch value.
    pub bloch_cluster_size: Option<usize>,
    /// p = 2: expected size = (cells) × (degeneracy of the first mean-zero
    /// mode).
    pub bloch_cluster_expected: Option<usize>,
    /// p = 2: half-width (relative) of the smallest symmetric window around
    /// the Bloch value containing the expected count.
    pub bloch_cluster_spread: Option<f64>,
}

/// Count generalized eigenvalues of the fine pencil inside [lo, hi] by two
/// factorization inertia counts.
fn count_in_window(
    op: &crate::fem::SparseSymmetricOperator,
    lo: f64,
    hi: f64,
) -> Result<usize> {
    let below_hi = eigenvalue_count_below(&op.stiffness, &op.mass, hi)?;
    let below_lo = eigenvalue_count_below(&op.stiffness, &op.mass, lo)?;
    Ok(below_hi - below_lo)
}

fn regime_run(cfg: &ExperimentConfig, p: u32, eps: f64) -> Result<RegimeResult> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let delta = eps.powi(p as i32);
    let kappa = eps * eps / delta;
    let n = (1.0 / eps).round() as usize;

    let mut sub = ExperimentConfig { contrast: ContrastLaw::Power { p }, ..cfg.clone() };
    sub.sweep.eps_denominators = vec![n];

    match p.cmp(&2) {
        std::cmp::Ordering::Less => {
            // Homogenization dominates: the leading fine eigenvalue tracks
            // θ₁ of Â_δ.
            let fine = fine_eigenvalues(&sub, eps, 1)?;
            let grid_y = build_unit_cell_grid(&geom, cfg.sweep.y_resolution)?;
            let (a_hat, _) = compute_homogenized(&grid_y, &field, delta)?;
            let grid_omega = build_unit_cell_grid_dirichlet(&geom, cfg.sweep.omega_resolution)?;
            let theta1 = homogenized_eigenvalues(&grid_omega, &a_hat.entries, 1)?[0];
            Ok(RegimeResult {
                p,
                eps,
                delta,
                kappa,
                leading_relative_gap: Some((fine[0] - theta1).abs() / theta1),
                bloch_cluster_size: None,
                bloch_cluster_expected: None,
                bloch_cluster_spread: None,
            })
        }
        std::cmp::Ordering::Greater => {
            // Inclusion modes dominate: the leading eigenvalue tracks
            // δε⁻²μ₁ = μ₁/κ with the matched discrete μ₁.
            let fine = fine_eigenvalues(&sub, eps, 1)?;
            let grid_y = build_unit_cell_grid(&geom, cfg.sweep.subres)?;
            let spectrum = inclusion_spectrum(&grid_y, &geom, &field, 1)?;
            let predicted = spectrum.modes[0].mu / kappa;
            Ok(RegimeResult {
                p,
                eps,
                delta,
                kappa,
                leading_relative_gap: Some((fine[0] - predicted).abs() / predicted),
                bloch_cluster_size: None,
                bloch_cluster_expected: None,
                bloch_cluster_spread: None,
            })
        }
        std::cmp::Ordering::Equal => {
            // Critical coupling: the fine spectrum carries a Bloch cluster of
            // size (cells × degeneracy) near κα₁ (λ scale: μ₁^{mz}/κ), with μ
            // from the same per-cell discretization as the fine grid.
            let grid_y = build_unit_cell_grid(&geom, cfg.sweep.subres)?;
            let spectrum = inclusion_spectrum(&grid_y, &geom, &field, 8)?;
            let first_mz = spectrum
                .modes
                .iter()
                .find(|m| m.mean_zero)
                .ok_or_else(|| Error::Spectral("no mean-zero mode found".into()))?;
            let mu = first_mz.mu;
            let degeneracy = spectrum
                .modes
                .iter()
                .filter(|m| (m.mu / mu - 1.0).abs() < 1e-6)
                .count();
            let expected = n * n * degeneracy;
            let center = mu / kappa;

            let (_, grid) = build_epsilon_domain(&geom, n, cfg.sweep.subres)?;
            let weight = ContrastWeight::new(delta)?.bind_epsilon(eps);
            let op = assemble_fine_operator(&grid, &field, &weight, eps)?;
            let size = count_in_window(&op, 0.95 * center, 1.05 * center)?;
            // Smallest symmetric window still holding the expected count.
            let mut spread = 0.05;
            if size >= expected {
                for s in [0.04, 0.03, 0.02, 0.01, 0.005] {
                    if count_in_window(&op, (1.0 - s) * center, (1.0 + s) * center)? >= expected {
                        spread = s;
                    } else {
                        break;
                    }
                }
            }
            Ok(RegimeResult {
                p,
                eps,
                delta,
                kappa,
                leading_relative_gap: None,
                bloch_cluster_size: Some(size),
                bloch_cluster_expected: Some(expected),
                bloch_cluster_spread: Some(spread),
            })
        }
    }
}

/// Run the three-regime study at the smallest configured ε; writes
/// regimes.json.
pub fn run_regimes(cfg: &ExperimentConfig) -> Result<Vec<RegimeResult>> {
    let eps = cfg.eps_list().into_iter().fold(f64::INFINITY, f64::min);
    let mut results = Vec::new();
    for p in [1u32, 2, 3] {
        results.push(regime_run(cfg, p, eps)?);
    }
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "results": results,
    });
    write_text(&cfg.out_dir().join("regimes.json"), &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(results)
}

/// Dense two-scale cross-check at desk scale; writes oracle.json and returns
/// the maximal relative mismatch.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<f64> {
    let geom = cfg.geometry()?;
    let field = cfg.field();
    let a_hat = {
        let grid_y = build_unit_cell_grid(&geom, 16)?;
        compute_homogenized(&grid_y, &field, 1.0)?.0.entries
    };
    let oracle = two_scale_dense_oracle(&geom, &field, &a_hat, 2, 8, 8, 1.0)?;
    let roots = residual_roots(&oracle.secular, &oracle.thetas, None)?;
    let report = limit_eta(&oracle.bloch, &roots);
    let predicted = leading_etas(&report, oracle.t_eigenvalues.len());
    let mut max_rel: f64 = 0.0;
    for (p, t) in predicted.iter().zip(&oracle.t_eigenvalues) {
        max_rel = max_rel.max((p - t).abs() / t);
    }
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "dimension": oracle.t_eigenvalues.len(),
        "max_relative_mismatch": max_rel,
        "values": oracle.t_eigenvalues,
    });
    write_text(&cfg.out_dir().join("oracle.json"), &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(max_rel)
}

/// Identity-free helper for reuse in tests: read a whole output directory
/// into (name, contents) pairs sorted by name, for hashing.
pub fn snapshot_outputs(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push((
                entry.file_name().to_string_lossy().into_owned(),
                fs::read_to_string(entry.path())?,
            ));
        }
    }
    out.sort();
    Ok(out)
}

//! The secular function β_κ and the residual limit spectrum.
//!
//! β_κ(λ) = λΣc_i/(1 − κβ_iλ) + (1 − Σc_i)λ is strictly increasing between
//! its poles (κβ_i)⁻¹, so each pole interval carries exactly one root of
//! β_κ(λ) = θ_j per homogenized level θ_j. The roots' reciprocals merge with
//! the Bloch values κα_i into the limit spectrum.

use homoglab::cell::compute_homogenized;
use homoglab::coefficients::CoefficientField;
use homoglab::geometry::{
    build_unit_cell_grid, build_unit_cell_grid_dirichlet, EpsilonLattice, PeriodicGeometry,
};
use homoglab::inclusion::{bloch_values, inclusion_spectrum};
use homoglab::limit::{
    gamma_eval_oracle, homogenized_eigenvalues, leading_etas, limit_eta, residual_roots,
    BetaFunction,
};

fn main() -> homoglab::Result<()> {
    let geom = PeriodicGeometry::centered_half_box();
    let field = CoefficientField::identity(1);
    let grid_y = build_unit_cell_grid(&geom, 64)?;
    let kappa = 1.0;

    let spectrum = inclusion_spectrum(&grid_y, &geom, &field, 40)?;
    let secular = BetaFunction::from_spectrum(&spectrum, kappa)?;
    println!("κ = {kappa}: first λ-poles (κβ_i)⁻¹:");
    for p in secular.lambda_poles().iter().take(4) {
        println!("  {p:.4}");
    }
    println!("matrix weight 1 − Σc = {:.6}, tail mass = {:.2e}",
        secular.matrix_weight, secular.tail_mass);

    // Cross-check against the dense resolvent at one point, using the
    // complete discrete mode set of the same small grid (exact identity).
    let small = build_unit_cell_grid(&geom, 16)?;
    let eta = 0.2;
    let direct = gamma_eval_oracle(kappa, eta, &small, &geom, &field)?;
    let series = BetaFunction::from_spectrum(
        &homoglab::inclusion::inclusion_spectrum_complete(&small, &geom, &field)?,
        kappa,
    )?
    .gamma_eval(eta)?;
    println!("\nγ({eta}) resolvent = {direct:.10}, expansion = {:.10}", series.mid());

    // Homogenized levels and the root table.
    let (a_hat, _) = compute_homogenized(&grid_y, &field, 1.0)?;
    let grid_omega = build_unit_cell_grid_dirichlet(&geom, 64)?;
    let thetas = homogenized_eigenvalues(&grid_omega, &a_hat.entries, 3)?;
    println!("\nhomogenized levels θ: {thetas:.4?}");
    let roots = residual_roots(&secular, &thetas, Some(2))?;
    println!("{:>3} {:>3} {:>12} {:>12} {:>10}", "i", "j", "lambda", "eta", "residual");
    for r in &roots {
        println!(
            "{:>3} {:>3} {:>12.5} {:>12.6e} {:>10.2e}",
            r.interval_index, r.theta_index + 1, r.lambda, r.eta, r.residual
        );
    }

    let lattice = EpsilonLattice::unit_square(8)?;
    let bloch = bloch_values(&spectrum, kappa, &lattice);
    let report = limit_eta(&bloch, &roots);
    println!("\nleading limit values η (ε = 1/8): {:?}",
        leading_etas(&report, 8).iter().map(|v| format!("{v:.5e}")).collect::<Vec<_>>());
    Ok(())
}

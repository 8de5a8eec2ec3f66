//! Dirichlet eigenmodes of the inclusion and their coupling weights.
//!
//! The side-0.5 box inclusion has closed-form modes: μ_kl = 4π²(k² + l²),
//! with nonzero mean exactly for odd (k, l) and weights c_kl = 64L²/(k²l²π⁴).
//! Mean-zero modes feed the Bloch branch of the limit spectrum; nonzero-mean
//! modes become the poles of the secular function. Degenerate clusters are
//! rotated so a single mode carries the whole cluster mean.

use homoglab::coefficients::CoefficientField;
use homoglab::geometry::{build_unit_cell_grid, EpsilonLattice, PeriodicGeometry};
use homoglab::inclusion::{bloch_values, inclusion_spectrum};

fn main() -> homoglab::Result<()> {
    let geom = PeriodicGeometry::centered_half_box();
    let grid = build_unit_cell_grid(&geom, 96)?;
    let field = CoefficientField::identity(1);
    let spectrum = inclusion_spectrum(&grid, &geom, &field, 20)?;

    let pi2 = std::f64::consts::PI.powi(2);
    println!("first modes (μ₁ exact: 8π² = {:.4}):", 8.0 * pi2);
    println!("{:>4} {:>12} {:>12} {:>10}  branch", "i", "mu", "beta=1/mu", "c");
    for (i, m) in spectrum.modes.iter().take(12).enumerate() {
        println!(
            "{:>4} {:>12.4} {:>12.3e} {:>10.3e}  {}",
            i + 1,
            m.mu,
            1.0 / m.mu,
            m.weight,
            if m.mean_zero { "bloch" } else { "residual" }
        );
    }
    println!(
        "\nΣc = {:.6} of θ = {:.6} ({:.1}% captured by {} modes)",
        spectrum.weight_sum(),
        spectrum.theta,
        100.0 * spectrum.weight_sum() / spectrum.theta,
        spectrum.modes.len()
    );
    println!("first α (exact 1/(20π²) = {:.6e}): {:.6e}",
        1.0 / (20.0 * pi2), spectrum.mean_zero_alphas()[0]);

    let lattice = EpsilonLattice::unit_square(8)?;
    let kappa = 1.0;
    let bloch = bloch_values(&spectrum, kappa, &lattice);
    println!("\nBloch values at κ = {kappa}, ε = 1/8 (each × {} cells):", lattice.cell_count());
    for (v, mult) in bloch.iter().take(4) {
        println!("  κα = {v:.6e}  multiplicity {mult}");
    }
    Ok(())
}

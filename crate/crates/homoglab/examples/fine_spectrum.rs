//! Eigenvalues of the fine high-contrast operator.
//!
//! Assembles −div(Λ_δ A(x/ε)∇) with zero boundary values on the unit square
//! and computes the smallest eigenvalues by shift-invert iteration. At δ = 1
//! the operator is exactly −Δ with λ₁ = 2π²; at δ = ε² the low spectrum
//! reorganizes around the inclusion modes.

use homoglab::coefficients::{CoefficientField, ContrastWeight};
use homoglab::eigen::{smallest_eigenpairs, EigenRequest};
use homoglab::fem::assemble_fine_operator;
use homoglab::geometry::{build_epsilon_domain, PeriodicGeometry};

fn main() -> homoglab::Result<()> {
    let geom = PeriodicGeometry::centered_half_box();
    let field = CoefficientField::identity(1);
    let n = 8; // ε = 1/8
    let eps = 1.0 / n as f64;
    let (_, grid) = build_epsilon_domain(&geom, n, 8)?;

    for delta in [1.0, eps * eps] {
        let weight = ContrastWeight::new(delta)?.bind_epsilon(eps);
        let op = assemble_fine_operator(&grid, &field, &weight, eps)?;
        let req = EigenRequest::new(&op, 6);
        let res = smallest_eigenpairs(&req)?.ensure_converged()?;
        println!("δ = {delta:.4} (κ = {:.2}):", eps * eps / delta);
        for (i, v) in res.values.iter().enumerate() {
            println!("  λ{} = {v:>12.5}   1/λ = {:.6e}", i + 1, 1.0 / v);
        }
        if delta == 1.0 {
            let pi2 = std::f64::consts::PI.powi(2);
            println!("  (exact Laplacian: 2π² = {:.5}, 5π² = {:.5})", 2.0 * pi2, 5.0 * pi2);
        }
        println!();
    }
    Ok(())
}

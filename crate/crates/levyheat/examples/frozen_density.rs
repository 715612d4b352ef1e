//! Frozen-process densities: FFT inversion on a grid against the closed
//! Cauchy form, single-point inversion, and the Dirac probe that sends
//! the freezing parameter to the integration variable.
//!
//! ```bash
//! cargo run --release -p levyheat --example frozen_density
//! ```

use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::frozen::{
    dirac_probe, frozen_density_grid, frozen_density_point, FrozenTolerances, SpaceGrid,
};
use levyheat::levy::{isotropic_stable, PreparedLevy};
use levyheat::linalg::VecD;

fn main() -> levyheat::Result<()> {
    let prepared = PreparedLevy::new(&isotropic_stable(1, 1.0, 1.0))?;
    let coeffs = Coefficients::new(1, DriftSpec::Zero, SigmaSpec::Constant { value: 1.0 })?;
    let tol = FrozenTolerances::default();
    let zero = VecD::scalar(0.0);

    let grid = SpaceGrid::new_1d(0.0, 80.0, 2048)?;
    let field = frozen_density_grid(&prepared, &coeffs, 0.0, 1.0, 1.0, &zero, &zero, &grid, &tol)?;
    println!("grid inversion, span 1 (closed form t/(pi (t^2+x^2))):");
    for &z in &[0.0, 0.5, 1.0, 3.0] {
        let got = field.value_at(&VecD::scalar(z)).unwrap();
        let want = 1.0 / (std::f64::consts::PI * (1.0 + z * z));
        println!("  z = {z:4.1}: fft {got:.8}, exact {want:.8}");
    }
    println!("  mass on grid: {:.6}", field.meta.mass_estimate);

    let point = frozen_density_point(
        &prepared, &coeffs, 0.0, 1.0, 1.0, &zero, &zero, &VecD::scalar(1.0), &tol,
    )?;
    println!("point inversion at z = 1: {point:.8} (exact {:.8})", 1.0 / (2.0 * std::f64::consts::PI));

    // Dirac probe: integral of f against the diagonally-frozen density
    let y_grid = SpaceGrid::new_1d(0.0, 12.0, 512)?;
    let mass = dirac_probe(&prepared, &coeffs, &|_y: &VecD| 1.0, &zero, 0.0, 0.5, &y_grid, &tol)?;
    println!("probe of f = 1 at span 0.5: {mass:.6} (should be ~1)");
    let bump = |y: &VecD| (-(y[0] / 0.75).powi(2)).exp();
    for &span in &[0.4, 0.2, 0.1, 0.05] {
        let got = dirac_probe(&prepared, &coeffs, &bump, &zero, 0.0, span, &y_grid, &tol)?;
        println!("  span {span:5.2}: probe of a unit bump = {got:.6} -> f(x) = 1");
    }
    Ok(())
}

//! The bound profiles and their empirical verification: the upper profile
//! against the exact Cauchy density, the lower profile where it applies,
//! the smoothing-exponent ladder, and the profile convolution constant.
//!
//! ```bash
//! cargo run --release -p levyheat --example bound_profiles
//! ```

use levyheat::bounds::{
    pbar, pbar_convolution_constant, plow, sandwich, smoothing_integral, Orientation, QCase,
    QConvention, QProfile, SandwichRegion,
};
use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::frozen::{frozen_density_grid, FrozenTolerances, SpaceGrid};
use levyheat::levy::{isotropic_stable, PreparedLevy, Tempering};
use levyheat::linalg::VecD;

fn main() -> levyheat::Result<()> {
    let model = isotropic_stable(1, 1.0, 1.0);
    let prepared = PreparedLevy::new(&model)?;
    let coeffs = Coefficients::new(1, DriftSpec::Zero, SigmaSpec::Constant { value: 1.0 })?;
    let profile = QProfile::new(QCase::BoundedDriftH1a, 1.0, Tempering::none(), QConvention::TheoremMin)?;
    let zero = VecD::scalar(0.0);
    let (t, horizon) = (0.0, 0.5);

    println!("upper profile along distance (span {}):", horizon - t);
    for &dist in &[0.0, 1.0, 3.0, 10.0] {
        let v = pbar(&model, &coeffs, &profile, t, horizon, &zero, &VecD::scalar(dist), Orientation::Forward)?;
        println!("  dist {dist:5.1}: pbar = {v:.6}");
    }

    // sandwich the exact frozen density between the profiles
    let grid = SpaceGrid::new_1d(0.0, 60.0, 2048)?;
    let tol = FrozenTolerances::default();
    let report = sandwich(
        &grid,
        &|g: &SpaceGrid| {
            Ok(frozen_density_grid(&prepared, &coeffs, t, horizon, horizon, &zero, &zero, g, &tol)?.values)
        },
        &|z: &VecD| pbar(&model, &coeffs, &profile, t, horizon, &zero, z, Orientation::Forward),
        Some(&|z: &VecD| plow(&model, &coeffs, t, horizon, &zero, z, 1.0)),
        &SandwichRegion { center: vec![0.0], radius: 30.0 },
    )?;
    println!(
        "sandwich: c_upper = {:.4}, c_lower = {:.4}, refinement stability = {:.4}",
        report.c_upper,
        report.c_lower.unwrap_or(f64::NAN),
        report.refinement_stability
    );

    // smoothing ladder with a Hoelder dispersion
    let holder = Coefficients::new(
        1,
        DriftSpec::Zero,
        SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
    )?;
    let sgrid = SpaceGrid::new_1d(0.0, 12.0, 1024)?;
    let smoothing = smoothing_integral(&model, &holder, &profile, 0.0, 0.25, &zero, &sgrid, 1.0)?;
    println!("smoothing ladder (span, integral):");
    for (span, val) in &smoothing.ladder {
        println!("  {span:8.5}  {val:.6e}");
    }
    println!(
        "fitted omega = {:.4} (rate eta(1 ^ 1/alpha) = 0.5)",
        smoothing.fitted_omega
    );

    let pairs = vec![(zero, VecD::scalar(2.0)), (zero, zero)];
    let cgrid = SpaceGrid::new_1d(0.0, 50.0, 256)?;
    let c = pbar_convolution_constant(&model, &coeffs, &profile, 0.0, 0.25, 0.5, &pairs, &cgrid)?;
    println!("profile convolution constant at the midpoint: {c:.4}");
    Ok(())
}

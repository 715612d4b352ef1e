//! The parametrix series on the Hoelder-dispersion benchmark: kernel
//! values against their bound, term norms, convergence verdict and mass.
//!
//! ```bash
//! cargo run --release -p levyheat --example parametrix_series
//! ```

use levyheat::bounds::{hbar, QProfile};
use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::frozen::SpaceGrid;
use levyheat::levy::{isotropic_stable, PreparedLevy};
use levyheat::linalg::VecD;
use levyheat::parametrix::{density, kernel_h, series, KernelParams, SeriesParams};

fn main() -> levyheat::Result<()> {
    let model = isotropic_stable(1, 1.2, 2.0);
    let prepared = PreparedLevy::new(&model)?;
    let coeffs = Coefficients::new(
        1,
        DriftSpec::Sinusoidal { amplitude: 0.3, frequency: 1.0, phase: 0.4 },
        SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
    )?;
    let (t, horizon) = (0.0, 0.5);
    let x = VecD::scalar(0.3);

    // a few kernel samples against the kernel bound
    let profile = QProfile::for_model(&model, &coeffs)?;
    println!("kernel samples |H| against the bound:");
    for &(xv, yv) in &[(0.3, 0.8), (-0.5, 1.0), (1.5, -1.5)] {
        let h = kernel_h(&prepared, &coeffs, t, horizon, &VecD::scalar(xv), &VecD::scalar(yv), &KernelParams::default())?;
        let hb = hbar(&model, &coeffs, &profile, t, horizon, &VecD::scalar(xv), &VecD::scalar(yv), 1.0)?;
        println!("  (x, y) = ({xv:4.1}, {yv:4.1}): H = {h:+.5e}, bound {hb:.5e}, ratio {:.3}", h.abs() / hb);
    }

    let grid = SpaceGrid::new_1d(0.3, 12.0, 256)?;
    let params = SeriesParams { n_time: 12, r_max: 6, auto_refine: false, ..Default::default() };
    let state = series(&prepared, &coeffs, t, horizon, &x, &grid, &params, false)?;
    println!("term sup norms: {:?}", state.term_sup_norms);
    println!(
        "converged: {} after {} correction terms; mass = {:.5} (grid {:.5} + tail {:.5})",
        state.converged,
        state.r_used,
        state.total_mass(),
        state.mass_on_grid,
        state.tail_mass_estimate
    );
    for &z in &[0.3, 1.3, 4.3] {
        println!("  p(t, T, x, {z:4.1}) = {:.6}", density(&state, &VecD::scalar(z))?);
    }
    Ok(())
}

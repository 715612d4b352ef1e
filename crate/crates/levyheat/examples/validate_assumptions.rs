//! The assumption validator: measured constants for a passing model, the
//! zero-drift requirement at low stability index, and the rotation
//! counterexample that breaks measure continuity.
//!
//! ```bash
//! cargo run --release -p levyheat --example validate_assumptions
//! ```

use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::levy::{
    isotropic_stable, validate_assumptions, Flavor, LevyModel, SpectralMeasure, Tempering,
    ToleranceSet,
};

fn print_report(tag: &str, report: &levyheat::levy::AssumptionReport) {
    println!("== {tag}: all_passed = {} ==", report.all_passed);
    for check in &report.checks {
        let mark = if check.passed { "pass" } else { "FAIL" };
        let consts: Vec<String> = check
            .measured
            .iter()
            .map(|(k, v)| format!("{k} = {v:.4e}"))
            .collect();
        println!("  [{mark}] {:14} {}", check.name, consts.join(", "));
        if !check.note.is_empty() {
            println!("         note: {}", check.note);
        }
    }
}

fn main() -> levyheat::Result<()> {
    let tol = ToleranceSet::default();

    let iso = isotropic_stable(1, 1.0, 1.0);
    let constant = Coefficients::new(1, DriftSpec::Zero, SigmaSpec::Constant { value: 1.0 })?;
    print_report("isotropic stable, constant sigma", &validate_assumptions(&iso, &constant, &tol));

    let low = isotropic_stable(1, 0.8, 1.0);
    let drift = Coefficients::new(
        1,
        DriftSpec::Sinusoidal { amplitude: 0.5, frequency: 1.0, phase: 0.0 },
        SigmaSpec::Constant { value: 1.0 },
    )?;
    print_report("alpha = 0.8 with a drift", &validate_assumptions(&low, &drift, &tol));

    // product of independent stables + rotation dispersion: the image
    // measures separate sets the dominating measure cannot see
    let product = LevyModel {
        d: 2,
        alpha: 1.2,
        spectral: SpectralMeasure::Atomic {
            directions: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            weights: vec![0.5; 4],
        },
        tempering: Tempering::polynomial(3.0),
        gamma: 1.0,
        flavor: Flavor::H1b,
        closed_form: None,
        lower_bound: None,
    };
    let rotation = Coefficients::new(2, DriftSpec::Zero, SigmaSpec::Rotation { angle_scale: 0.5 })?;
    print_report("product driver with rotation sigma", &validate_assumptions(&product, &rotation, &tol));
    Ok(())
}

use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::frozen::SpaceGrid;
use levyheat::levy::{isotropic_stable, PreparedLevy};
use levyheat::linalg::VecD;
use levyheat::mc::*;

#[test]
fn cusp_cell_vs_steps() {
    let model = isotropic_stable(1, 1.2, 2.0);
    let prepared = PreparedLevy::new(&model).unwrap();
    let coeffs = Coefficients::new(
        1,
        DriftSpec::Sinusoidal { amplitude: 0.3, frequency: 1.0, phase: 0.4 },
        SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
    ).unwrap();
    let grid = SpaceGrid::new_1d(0.3, 64.0, 512).unwrap();
    for (steps, paths) in [(256usize, 400_000usize), (1024, 400_000), (4096, 400_000)] {
        let config = SimConfig {
            n_paths: paths,
            n_steps_per_unit_time: steps,
            delta_rule: DeltaRule::CharacteristicScale,
            small_jump_mode: SmallJumpMode::GaussianMatch,
            seed: 3,
            block_count: 8,
        };
        let e = simulate(&prepared, &coeffs, &VecD::scalar(0.3), 0.0, 0.5, &config).unwrap();
        let hist = empirical_density(&e, &grid, DensityMode::Histogram).unwrap();
        // cell nearest the cusp (z = -0.0125) and two reference cells
        let probe = |target: f64| -> (f64, f64) {
            let mut best = (0usize, f64::INFINITY);
            for k in 0..grid.len() {
                let d = (grid.axis_coord(0, k) - target).abs();
                if d < best.1 { best = (k, d); }
            }
            (hist.values[best.0], hist.standard_errors[best.0])
        };
        let (pc, se_c) = probe(0.0);
        let (pl, _) = probe(-1.0);
        let (pr, _) = probe(1.0);
        println!("steps={steps:5} cusp_cell={pc:.5}+-{se_c:.5}  left1={pl:.5} right1={pr:.5}");
    }
}

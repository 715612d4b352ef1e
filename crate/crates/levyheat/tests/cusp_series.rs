use levyheat::flow::{Coefficients, DriftSpec, SigmaSpec};
use levyheat::frozen::SpaceGrid;
use levyheat::levy::{isotropic_stable, PreparedLevy};
use levyheat::linalg::VecD;
use levyheat::parametrix::{series, SeriesParams};

#[test]
fn cusp_cell_vs_series_resolution() {
    let model = isotropic_stable(1, 1.2, 2.0);
    let prepared = PreparedLevy::new(&model).unwrap();
    let coeffs = Coefficients::new(
        1,
        DriftSpec::Sinusoidal { amplitude: 0.3, frequency: 1.0, phase: 0.4 },
        SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
    ).unwrap();
    let x = VecD::scalar(0.3);
    for (n, half) in [(256usize, 12.8f64), (512, 12.8)] {
        let grid = SpaceGrid::new_1d(0.3, half, n).unwrap();
        let params = SeriesParams { n_time: 12, r_max: 5, auto_refine: false, ..Default::default() };
        let state = series(&prepared, &coeffs, 0.0, 0.5, &x, &grid, &params, false).unwrap();
        // cell average over the MC cell [-0.140, 0.110] via fine sampling
        let mut acc = 0.0;
        let m = 200;
        for i in 0..m {
            let z = -0.140 + 0.25 * (i as f64 + 0.5) / m as f64;
            acc += state.grid.cubic_or_multilinear(&state.partial_sum, &VecD::scalar(z)).unwrap();
        }
        println!("n={n} cusp_cell_avg={:.5} mass={:.5}", acc / m as f64, state.total_mass());
    }
}

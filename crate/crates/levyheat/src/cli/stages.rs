//! Stage execution: each stage computes one pipeline piece and drops its
//! artifacts (CSV + JSON) into the output directory. Heavier stages are
//! cached inside the context so `all` reuses them.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::{
    hbar, pbar, pbar_convolution_constant, plow, sandwich, smoothing_integral, Orientation,
    SandwichRegion,
};
use crate::error::{Error, Result};
use crate::flow::Coefficients;
use crate::frozen::{fmt_g17, frozen_density_grid, SpaceGrid};
use crate::levy::{validate_assumptions, PreparedLevy};
use crate::linalg::VecD;
use crate::mc::{compare, empirical_density, simulate, write_ensemble, DensityMode, PathEnsemble};
use crate::parametrix::{series, KernelEvaluator, SeriesState};

use super::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Validate,
    Exponent,
    Frozen,
    Kernel,
    Series,
    Simulate,
    Compare,
    Bounds,
    All,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Exponent => "exponent",
            Stage::Frozen => "frozen",
            Stage::Kernel => "kernel",
            Stage::Series => "series",
            Stage::Simulate => "simulate",
            Stage::Compare => "compare",
            Stage::Bounds => "bounds",
            Stage::All => "all",
        }
    }
}

pub struct StageContext {
    pub cfg: RunConfig,
    pub prepared: PreparedLevy,
    pub coeffs: Coefficients,
    pub out_dir: PathBuf,
    pub wall_clocks: BTreeMap<String, f64>,
    series_cache: Option<SeriesState>,
    ensemble_cache: Option<PathEnsemble>,
}

impl StageContext {
    pub fn new(cfg: RunConfig, out_dir: PathBuf) -> Result<Self> {
        let prepared = PreparedLevy::new(&cfg.model)?;
        let coeffs = cfg.coefficients()?;
        std::fs::create_dir_all(&out_dir)?;
        Ok(StageContext {
            cfg,
            prepared,
            coeffs,
            out_dir,
            wall_clocks: BTreeMap::new(),
            series_cache: None,
            ensemble_cache: None,
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.out_dir.join(name);
        let mut f = std::fs::File::create(path)?;
        let text = serde_json::to_string_pretty(value)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    fn csv_file(&self, name: &str) -> Result<std::fs::File> {
        Ok(std::fs::File::create(self.out_dir.join(name))?)
    }

    pub fn run(&mut self, stage: Stage) -> Result<()> {
        let order: Vec<Stage> = match stage {
            Stage::All => vec![
                Stage::Validate,
                Stage::Exponent,
                Stage::Frozen,
                Stage::Kernel,
                Stage::Series,
                Stage::Simulate,
                Stage::Compare,
                Stage::Bounds,
            ],
            s => vec![s],
        };
        for s in order {
            let started = std::time::Instant::now();
            match s {
                Stage::Validate => self.stage_validate()?,
                Stage::Exponent => self.stage_exponent()?,
                Stage::Frozen => self.stage_frozen()?,
                Stage::Kernel => self.stage_kernel()?,
                Stage::Series => self.stage_series()?,
                Stage::Simulate => self.stage_simulate()?,
                Stage::Compare => self.stage_compare()?,
                Stage::Bounds => self.stage_bounds()?,
                Stage::All => unreachable!(),
            }
            self.wall_clocks
                .insert(s.name().to_string(), started.elapsed().as_secs_f64());
        }
        Ok(())
    }

    fn stage_validate(&mut self) -> Result<()> {
        let tol = self
            .cfg
            .experiment
            .assumption_tolerances
            .clone()
            .unwrap_or_default();
        let report = validate_assumptions(&self.cfg.model, &self.coeffs, &tol);
        self.write_json("assumptions.json", &report)?;
        if !report.all_passed {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| c.required && !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            return Err(Error::Assumption(failed.join(", ")));
        }
        Ok(())
    }

    fn stage_exponent(&mut self) -> Result<()> {
        let zmax = self.cfg.experiment.zeta_max;
        let d = self.cfg.model.d;
        let mut f = self.csv_file("exponent.csv")?;
        writeln!(f, "zeta,phi")?;
        let n = 200;
        for i in 0..=n {
            let z = if i == 0 {
                0.0
            } else {
                zmax.powf(i as f64 / n as f64) * 1e-2_f64.powf(1.0 - i as f64 / n as f64)
            };
            let mut zeta = VecD::zeros(d);
            zeta[0] = z;
            let phi = self.prepared.exponent_quadrature(&zeta, 1, 1e-8)?;
            writeln!(f, "{},{}", fmt_g17(z), fmt_g17(phi))?;
        }
        Ok(())
    }

    fn stage_frozen(&mut self) -> Result<()> {
        let exp = &self.cfg.experiment;
        let grid = exp.grid.build()?;
        let tol = exp.frozen_tolerances.clone().unwrap_or_default();
        let field = frozen_density_grid(
            &self.prepared,
            &self.coeffs,
            exp.t,
            exp.horizon,
            exp.horizon,
            &self.cfg.freezing_point(),
            &self.cfg.x0(),
            &grid,
            &tol,
        )?;
        field.write_csv(self.csv_file("frozen_density.csv")?)?;
        self.write_json("frozen_density.meta.json", &field.meta)?;
        Ok(())
    }

    fn stage_kernel(&mut self) -> Result<()> {
        let exp = &self.cfg.experiment;
        let profile = self.cfg.q_profile(&self.coeffs)?;
        let params = self.cfg.kernel_params();
        let n = exp.kernel_samples.max(2);
        let half = exp.kernel_box;
        let x0 = self.cfg.x0();
        let coord = |i: usize| -> f64 { -half + 2.0 * half * i as f64 / (n - 1) as f64 };
        let mut rows = Vec::new();
        let mut c_upper: f64 = 0.0;
        for iy in 0..n {
            let mut y = x0;
            y[0] += coord(iy);
            let eval = KernelEvaluator::new(
                &self.prepared,
                &self.coeffs,
                exp.t,
                exp.horizon,
                &y,
                &params,
            )?;
            for ix in 0..n {
                let mut x = x0;
                x[0] += coord(ix);
                let h = eval.eval(&x);
                let hb = hbar(
                    &self.prepared.model,
                    &self.coeffs,
                    &profile,
                    exp.t,
                    exp.horizon,
                    &x,
                    &y,
                    exp.delta_h,
                )?;
                if hb > 0.0 {
                    c_upper = c_upper.max(h.abs() / hb);
                }
                rows.push((x[0], y[0], h, hb));
            }
        }
        // stability under doubled kernel quadrature
        let mut fine_params = params.clone();
        fine_params.small_panels_per_decade *= 2;
        fine_params.large_panels_per_decade *= 2;
        fine_params.micro_frac *= 0.5;
        let mut c_upper_fine: f64 = 0.0;
        for iy in 0..n {
            let mut y = x0;
            y[0] += coord(iy);
            let eval = KernelEvaluator::new(
                &self.prepared,
                &self.coeffs,
                exp.t,
                exp.horizon,
                &y,
                &fine_params,
            )?;
            for ix in 0..n {
                let mut x = x0;
                x[0] += coord(ix);
                let h = eval.eval(&x);
                let hb = hbar(
                    &self.prepared.model,
                    &self.coeffs,
                    &profile,
                    exp.t,
                    exp.horizon,
                    &x,
                    &y,
                    exp.delta_h,
                )?;
                if hb > 0.0 {
                    c_upper_fine = c_upper_fine.max(h.abs() / hb);
                }
            }
        }
        let mut f = self.csv_file("kernel.csv")?;
        writeln!(f, "x,y,kernel,hbar")?;
        for (x, y, h, hb) in rows {
            writeln!(
                f,
                "{},{},{},{}",
                fmt_g17(x),
                fmt_g17(y),
                fmt_g17(h),
                fmt_g17(hb)
            )?;
        }
        #[derive(Serialize)]
        struct KernelReport {
            c_upper: f64,
            c_upper_refined: f64,
            stability_ratio: f64,
            samples: usize,
        }
        self.write_json(
            "kernel_report.json",
            &KernelReport {
                c_upper,
                c_upper_refined: c_upper_fine,
                stability_ratio: if c_upper > 0.0 { c_upper_fine / c_upper } else { 1.0 },
                samples: n * n,
            },
        )?;
        Ok(())
    }

    pub fn series_state(&mut self) -> Result<&SeriesState> {
        if self.series_cache.is_none() {
            let exp = &self.cfg.experiment;
            let grid = self.cfg.series_grid()?;
            let params = self.cfg.series_params();
            let state = series(
                &self.prepared,
                &self.coeffs,
                exp.t,
                exp.horizon,
                &self.cfg.x0(),
                &grid,
                &params,
                false,
            )?;
            self.series_cache = Some(state);
        }
        Ok(self.series_cache.as_ref().unwrap())
    }

    fn stage_series(&mut self) -> Result<()> {
        let state = self.series_state()?;
        let grid = state.grid.clone();
        let summary = SeriesSummary::from_state(state);
        let terms: Vec<Vec<f64>> = state.terms.clone();
        let partial = state.partial_sum.clone();
        for (r, term) in terms.iter().enumerate() {
            let mut f = self.csv_file(&format!("series_term_{r}.csv"))?;
            writeln!(f, "z,value")?;
            for (k, v) in term.iter().enumerate() {
                writeln!(f, "{},{}", fmt_g17(grid.node(k)[0]), fmt_g17(*v))?;
            }
        }
        let mut f = self.csv_file("series_density.csv")?;
        writeln!(f, "z,value")?;
        for (k, v) in partial.iter().enumerate() {
            writeln!(f, "{},{}", fmt_g17(grid.node(k)[0]), fmt_g17(*v))?;
        }
        self.write_json("series_manifest.json", &summary)?;
        Ok(())
    }

    pub fn ensemble(&mut self) -> Result<&PathEnsemble> {
        if self.ensemble_cache.is_none() {
            let exp = &self.cfg.experiment;
            let config = self.cfg.sim_config();
            let ensemble = simulate(
                &self.prepared,
                &self.coeffs,
                &self.cfg.x0(),
                exp.t,
                exp.horizon,
                &config,
            )?;
            self.ensemble_cache = Some(ensemble);
        }
        Ok(self.ensemble_cache.as_ref().unwrap())
    }

    fn stage_simulate(&mut self) -> Result<()> {
        let grid = self.cfg.experiment.grid.build()?;
        self.ensemble()?;
        let ensemble = self.ensemble_cache.as_ref().unwrap();
        let file = std::fs::File::create(self.out_dir.join("ensemble.bin"))?;
        write_ensemble(ensemble, std::io::BufWriter::new(file))?;
        let hist = empirical_density(ensemble, &grid, DensityMode::Histogram)?;
        hist.write_csv(std::fs::File::create(self.out_dir.join("histogram.csv"))?)?;
        #[derive(Serialize)]
        struct SimSummary {
            n_paths: usize,
            excluded_paths: usize,
            mean_jump_count: f64,
            coverage: f64,
            seed: u64,
            block_count: usize,
        }
        let summary = SimSummary {
            n_paths: ensemble.terminal_states.len(),
            excluded_paths: ensemble.excluded_paths,
            mean_jump_count: ensemble.jump_counts.iter().map(|c| *c as f64).sum::<f64>()
                / ensemble.jump_counts.len().max(1) as f64,
            coverage: hist.coverage,
            seed: ensemble.config.seed,
            block_count: ensemble.config.block_count,
        };
        self.write_json("simulate_summary.json", &summary)?;
        Ok(())
    }

    fn stage_compare(&mut self) -> Result<()> {
        let exp_bulk = self.cfg.experiment.bulk_frac;
        let tail_window = self.cfg.experiment.tail_window;
        let grid = self.cfg.experiment.grid.build()?;
        self.series_state()?;
        self.ensemble()?;
        let state = self.series_cache.as_ref().unwrap();
        let ensemble = self.ensemble_cache.as_ref().unwrap();
        let hist = empirical_density(ensemble, &grid, DensityMode::Histogram)?;
        let partial = state.partial_sum.clone();
        let sgrid = state.grid.clone();
        let center = self.cfg.x0();
        let report = compare(
            &move |z: &VecD| Ok(sgrid.cubic_or_multilinear(&partial, z).unwrap_or(0.0)),
            &hist,
            exp_bulk,
            tail_window.map(|(lo, hi)| (lo, hi, center)),
        )?;
        // per-node z-scores
        let mut f = self.csv_file("compare.csv")?;
        writeln!(f, "z,series,empirical,standard_error,zscore")?;
        for k in 0..grid.len() {
            let node = grid.node(k);
            let sv = state
                .grid
                .cubic_or_multilinear(&state.partial_sum, &node)
                .unwrap_or(0.0);
            let ev = hist.values[k];
            let se = hist.standard_errors[k];
            let zsc = if se > 0.0 { (sv - ev) / se } else { f64::NAN };
            writeln!(
                f,
                "{},{},{},{},{}",
                fmt_g17(node[0]),
                fmt_g17(sv),
                fmt_g17(ev),
                fmt_g17(se),
                fmt_g17(zsc)
            )?;
        }
        self.write_json("compare_report.json", &report)?;
        Ok(())
    }

    fn stage_bounds(&mut self) -> Result<()> {
        let exp = &self.cfg.experiment;
        let grid = exp.grid.build()?;
        let profile = self.cfg.q_profile(&self.coeffs)?;
        let x0 = self.cfg.x0();
        let t = exp.t;
        let horizon = exp.horizon;

        // bound-profile slice along the grid
        let mut f = self.csv_file("pbar_slice.csv")?;
        writeln!(f, "z,pbar,plow,plow_applicable")?;
        for k in 0..grid.len() {
            let z = grid.node(k);
            let pb = pbar(
                &self.cfg.model,
                &self.coeffs,
                &profile,
                t,
                horizon,
                &x0,
                &z,
                Orientation::Forward,
            )?;
            let (pl, ok) = if self.cfg.model.lower_bound.is_some() {
                plow(&self.cfg.model, &self.coeffs, t, horizon, &x0, &z, 1.0)?
            } else {
                (0.0, false)
            };
            writeln!(
                f,
                "{},{},{},{}",
                fmt_g17(z[0]),
                fmt_g17(pb),
                fmt_g17(pl),
                u8::from(ok)
            )?;
        }

        // smoothing ladder
        let smoothing = smoothing_integral(
            &self.cfg.model,
            &self.coeffs,
            &profile,
            t,
            t + 0.25 * (horizon - t),
            &x0,
            &grid,
            exp.delta_h,
        )?;
        let mut f = self.csv_file("smoothing_ladder.csv")?;
        writeln!(f, "span,integral")?;
        for (span, val) in &smoothing.ladder {
            writeln!(f, "{},{}", fmt_g17(*span), fmt_g17(*val))?;
        }

        // sandwich of the frozen density against the bound profile
        let tolf = exp.frozen_tolerances.clone().unwrap_or_default();
        let prepared = &self.prepared;
        let coeffs = &self.coeffs;
        let y = self.cfg.freezing_point();
        let model = &self.cfg.model;
        let region = SandwichRegion {
            center: x0.to_vec(),
            radius: 0.5 * exp.grid.half_width,
        };
        let lower_fn = |z: &VecD| plow(model, coeffs, t, horizon, &x0, z, 1.0);
        let lower: Option<&dyn Fn(&VecD) -> Result<(f64, bool)>> =
            if model.lower_bound.is_some() { Some(&lower_fn) } else { None };
        let report = sandwich(
            &grid,
            &|g: &SpaceGrid| {
                Ok(frozen_density_grid(prepared, coeffs, t, horizon, horizon, &y, &x0, g, &tolf)?
                    .values)
            },
            &|z: &VecD| {
                pbar(model, coeffs, &profile, t, horizon, &x0, z, Orientation::Forward)
            },
            lower,
            &region,
        )?;

        // bound-profile convolution constant at the midpoint
        let pairs = vec![
            (x0, x0),
            (x0, {
                let mut y = x0;
                y[0] += 2.0;
                y
            }),
        ];
        let coarse = SpaceGrid::new(
            grid.axes
                .iter()
                .map(|a| crate::frozen::AxisSpec {
                    center: a.center,
                    half_width: a.half_width,
                    n: (a.n / 4).max(64),
                })
                .collect(),
        )?;
        let conv_c = pbar_convolution_constant(
            model,
            coeffs,
            &profile,
            t,
            0.5 * (t + horizon),
            horizon,
            &pairs,
            &coarse,
        )?;

        #[derive(Serialize)]
        struct BoundsReport {
            sandwich: crate::bounds::SandwichReport,
            smoothing_value: f64,
            smoothing_fitted_omega: f64,
            pbar_convolution_constant: f64,
        }
        self.write_json(
            "bounds_report.json",
            &BoundsReport {
                sandwich: report,
                smoothing_value: smoothing.value,
                smoothing_fitted_omega: smoothing.fitted_omega,
                pbar_convolution_constant: conv_c,
            },
        )?;
        Ok(())
    }
}

#[derive(Serialize)]
pub struct SeriesSummary {
    pub term_sup_norms: Vec<f64>,
    pub converged: bool,
    pub r_used: usize,
    pub mass_on_grid: f64,
    pub tail_mass_estimate: f64,
    pub total_mass: f64,
    pub envelope_constant: f64,
    pub grading_used: f64,
    pub refine_triggered: bool,
}

impl SeriesSummary {
    pub fn from_state(state: &SeriesState) -> Self {
        SeriesSummary {
            term_sup_norms: state.term_sup_norms.clone(),
            converged: state.converged,
            r_used: state.r_used,
            mass_on_grid: state.mass_on_grid,
            tail_mass_estimate: state.tail_mass_estimate,
            total_mass: state.total_mass(),
            envelope_constant: state.envelope_constant,
            grading_used: state.meta.grading_used,
            refine_triggered: state.meta.refine_triggered,
        }
    }
}

/// Machine-readable failure artifact.
#[derive(Serialize)]
pub struct ErrorArtifact {
    pub stage: String,
    pub code: i32,
    pub message: String,
    pub context: BTreeMap<String, String>,
}

pub fn write_error_artifact(out_dir: &Path, stage: &str, err: &Error) -> std::io::Result<()> {
    let artifact = ErrorArtifact {
        stage: stage.to_string(),
        code: err.exit_code(),
        message: err.to_string(),
        context: BTreeMap::new(),
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("error.json"),
        serde_json::to_string_pretty(&artifact).unwrap_or_default() + "\n",
    )
}

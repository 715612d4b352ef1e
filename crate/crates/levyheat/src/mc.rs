//! Jump-splitting Monte Carlo for the SDE.
//!
//! Jumps above the threshold delta arrive on an exponential clock with
//! rate `nu(B(0, delta)^c)` and are applied through the dispersion at the
//! pre-jump state; between arrivals the truncated remainder evolves by
//! Euler steps whose small-jump increment is either dropped or replaced
//! by a moment-matched Gaussian. Per-path RNG streams are counter-based,
//! so ensembles are bitwise reproducible under any parallel execution.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Coefficients;
use crate::frozen::{fmt_g17, SpaceGrid};
use crate::levy::{LargeJumpSampler, PreparedLevy};
use crate::linalg::VecD;

// ---------------------------------------------------------------------------
// configuration and ensembles
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallJumpMode {
    /// Drop the compensated small-jump martingale entirely.
    Drop,
    /// Replace it with a centered Gaussian of matched covariance.
    GaussianMatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", deny_unknown_fields)]
pub enum DeltaRule {
    /// delta = (T - t)^{1/alpha}, the characteristic scale.
    CharacteristicScale,
    Fixed { delta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps_per_unit_time: usize,
    pub delta_rule: DeltaRule,
    pub small_jump_mode: SmallJumpMode,
    pub seed: u64,
    pub block_count: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 100_000,
            n_steps_per_unit_time: 256,
            delta_rule: DeltaRule::CharacteristicScale,
            small_jump_mode: SmallJumpMode::GaussianMatch,
            seed: 1,
            block_count: 8,
        }
    }
}

impl SimConfig {
    pub fn delta(&self, span: f64, alpha: f64) -> f64 {
        match self.delta_rule {
            DeltaRule::CharacteristicScale => span.powf(1.0 / alpha),
            DeltaRule::Fixed { delta } => delta,
        }
    }
}

/// Terminal samples with per-path jump counts and the reproducibility
/// tuple that generated them.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub d: usize,
    pub terminal_states: Vec<VecD>,
    pub jump_counts: Vec<u32>,
    pub config: SimConfig,
    pub excluded_paths: usize,
    pub wall_clock_secs: f64,
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

/// Counter-based stream for one path: ChaCha8 seeded by the run seed,
/// stream id derived from (block, path-in-block).
fn path_rng(seed: u64, block: u64, path_in_block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((block << 40) | (path_in_block & ((1 << 40) - 1)));
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Simulates the SDE from `(t, x0)` to `T` by the jump-splitting
/// construction. Non-finite paths are excluded and counted; an exclusion
/// rate above 0.1% fails the run.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    prepared: &PreparedLevy,
    coeffs: &Coefficients,
    x0: &VecD,
    t: f64,
    horizon: f64,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    if horizon <= t {
        return Err(Error::Config("simulation needs T > t".into()));
    }
    if config.n_paths == 0 || config.block_count == 0 {
        return Err(Error::Config("need at least one path and one block".into()));
    }
    if prepared.alpha() <= 1.0 && !coeffs.drift_is_zero() {
        return Err(Error::Config("alpha <= 1 requires zero drift".into()));
    }
    let started = std::time::Instant::now();
    let span = horizon - t;
    let delta = config.delta(span, prepared.alpha());
    let rate = prepared.tail_mass(delta);
    let sampler = if rate > 0.0 {
        Some(LargeJumpSampler::new(prepared, delta)?)
    } else {
        None
    };
    let chol = match config.small_jump_mode {
        SmallJumpMode::Drop => None,
        SmallJumpMode::GaussianMatch => {
            Some(prepared.small_jump_covariance(delta).cholesky_psd())
        }
    };
    let d = prepared.d();
    let dt_base = 1.0 / config.n_steps_per_unit_time as f64;

    // paths partitioned into blocks; per-block accumulation merged in
    // block order keeps the result independent of scheduling
    let block_count = config.block_count;
    let per_block = config.n_paths.div_ceil(block_count);
    let blocks: Vec<(Vec<VecD>, Vec<u32>, usize)> = (0..block_count)
        .into_par_iter()
        .map(|b| {
            let lo = b * per_block;
            let hi = ((b + 1) * per_block).min(config.n_paths);
            let mut terminals = Vec::with_capacity(hi.saturating_sub(lo));
            let mut counts = Vec::with_capacity(hi.saturating_sub(lo));
            let mut excluded = 0usize;
            for p in lo..hi {
                let mut rng = path_rng(config.seed, b as u64, (p - lo) as u64);
                let mut x = *x0;
                let mut s = t;
                let mut jumps = 0u32;
                let mut next_jump = if let Some(sampler) = &sampler {
                    let e: f64 = rng.gen::<f64>().max(1e-300);
                    s + (-e.ln()) / sampler.rate
                } else {
                    f64::INFINITY
                };
                let mut alive = true;
                while s < horizon {
                    let target = horizon.min(next_jump);
                    // Euler steps to the next event
                    while s < target {
                        let dt = dt_base.min(target - s);
                        let mut incr = coeffs.drift_at(s, &x).scale(dt);
                        if let Some(l) = &chol {
                            let mut g = VecD::zeros(d);
                            for i in 0..d {
                                g[i] = standard_normal(&mut rng);
                            }
                            let noise = l.matvec(&g).scale(dt.sqrt());
                            incr = incr.add(&coeffs.sigma_at(s, &x).matvec(&noise));
                        }
                        x = x.add(&incr);
                        s += dt;
                        if !x.is_finite() {
                            alive = false;
                            break;
                        }
                    }
                    if !alive {
                        break;
                    }
                    if next_jump <= horizon {
                        // apply the large jump through the dispersion at the
                        // pre-jump state
                        let sampler = sampler.as_ref().unwrap();
                        let j = sampler.sample(&mut rng);
                        x = x.add(&coeffs.sigma_at(s, &x).matvec(&j));
                        jumps += 1;
                        let e: f64 = rng.gen::<f64>().max(1e-300);
                        next_jump = s + (-e.ln()) / sampler.rate;
                        if !x.is_finite() {
                            alive = false;
                            break;
                        }
                    }
                }
                if alive && x.is_finite() {
                    terminals.push(x);
                    counts.push(jumps);
                } else {
                    excluded += 1;
                }
            }
            (terminals, counts, excluded)
        })
        .collect();

    let mut terminal_states = Vec::with_capacity(config.n_paths);
    let mut jump_counts = Vec::with_capacity(config.n_paths);
    let mut excluded_paths = 0usize;
    for (terms, counts, excl) in blocks {
        terminal_states.extend(terms);
        jump_counts.extend(counts);
        excluded_paths += excl;
    }
    if excluded_paths as f64 > 0.001 * config.n_paths as f64 {
        return Err(Error::Precision(format!(
            "{excluded_paths} of {} paths diverged",
            config.n_paths
        )));
    }
    Ok(PathEnsemble {
        d,
        terminal_states,
        jump_counts,
        config: config.clone(),
        excluded_paths,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Inter-arrival samples of the large-jump clock, drawn through the same
/// stream logic as the simulator.
pub fn interarrival_samples(
    prepared: &PreparedLevy,
    delta: f64,
    count: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let rate = prepared.tail_mass(delta);
    if !(rate > 0.0) {
        return Err(Error::Config("clock needs positive tail mass".into()));
    }
    let mut rng = path_rng(seed, 0, 0);
    let samples = (0..count)
        .map(|_| {
            let e: f64 = rng.gen::<f64>().max(1e-300);
            -e.ln() / rate
        })
        .collect();
    Ok((samples, rate))
}

// ---------------------------------------------------------------------------
// empirical densities
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum DensityMode {
    Histogram,
    /// Gaussian kernel with a Silverman-type bandwidth
    /// `factor * sigma_hat * n^{-1/(d+4)}`.
    KernelSmoothed { factor: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalDensity {
    pub grid: SpaceGrid,
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub bandwidth: Option<f64>,
    pub n_paths: usize,
    pub coverage: f64,
}

impl EmpiricalDensity {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.d();
        let header: Vec<String> = (0..d)
            .map(|a| format!("z{a}"))
            .chain(["value".to_string(), "standard_error".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.values.len() {
            let node = self.grid.node(i);
            let mut row: Vec<String> = node.as_slice().iter().map(|c| fmt_g17(*c)).collect();
            row.push(fmt_g17(self.values[i]));
            row.push(fmt_g17(self.standard_errors[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Normalized histogram (or smoothed estimate) over node-centered cells,
/// with per-node binomial standard errors. Refuses grids covering less
/// than 99% of the samples.
pub fn empirical_density(
    ensemble: &PathEnsemble,
    grid: &SpaceGrid,
    mode: DensityMode,
) -> Result<EmpiricalDensity> {
    let d = grid.d();
    if d != ensemble.d {
        return Err(Error::Config("grid dimension mismatch".into()));
    }
    let n_total = ensemble.terminal_states.len();
    let cell = grid.cell_volume();
    let mut counts = vec![0u64; grid.len()];
    let mut inside = 0usize;
    for state in &ensemble.terminal_states {
        let mut flat = 0usize;
        let mut ok = true;
        for a in 0..d {
            let h = grid.spacing(a);
            let pos = (state[a] - grid.axis_coord(a, 0)) / h + 0.5;
            if pos < 0.0 || pos >= grid.axes[a].n as f64 {
                ok = false;
                break;
            }
            flat = flat * grid.axes[a].n + pos as usize;
        }
        if ok {
            counts[flat] += 1;
            inside += 1;
        }
    }
    let coverage = inside as f64 / n_total.max(1) as f64;
    if coverage < 0.99 {
        return Err(Error::Coverage { covered: coverage, required: 0.99 });
    }
    match mode {
        DensityMode::Histogram => {
            let values: Vec<f64> = counts
                .iter()
                .map(|c| *c as f64 / (inside as f64 * cell))
                .collect();
            let standard_errors: Vec<f64> = counts
                .iter()
                .map(|c| {
                    let p = *c as f64 / inside as f64;
                    (p * (1.0 - p) / inside as f64).sqrt() / cell
                })
                .collect();
            Ok(EmpiricalDensity {
                grid: grid.clone(),
                values,
                standard_errors,
                bandwidth: None,
                n_paths: n_total,
                coverage,
            })
        }
        DensityMode::KernelSmoothed { factor } => {
            // bandwidth from the per-axis sample spread
            let mut var = 0.0;
            for a in 0..d {
                let mean: f64 = ensemble.terminal_states.iter().map(|s| s[a]).sum::<f64>()
                    / n_total as f64;
                var += ensemble
                    .terminal_states
                    .iter()
                    .map(|s| (s[a] - mean) * (s[a] - mean))
                    .sum::<f64>()
                    / n_total as f64;
            }
            let sigma_hat = (var / d as f64).sqrt();
            let bw = factor * sigma_hat * (n_total as f64).powf(-1.0 / (d as f64 + 4.0));
            let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bw).powi(d as i32);
            let values: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let node = grid.node(i);
                    let mut acc = 0.0;
                    for state in &ensemble.terminal_states {
                        let dsq = state.sub(&node).dot(&state.sub(&node));
                        acc += (-0.5 * dsq / (bw * bw)).exp();
                    }
                    acc * norm / n_total as f64
                })
                .collect();
            // same binomial error scale as the histogram of bw-sized cells
            let standard_errors: Vec<f64> = values
                .iter()
                .map(|v| (v / (n_total as f64 * bw.powi(d as i32))).sqrt() * 0.5)
                .collect();
            Ok(EmpiricalDensity {
                grid: grid.clone(),
                values,
                standard_errors,
                bandwidth: Some(bw),
                n_paths: n_total,
                coverage,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// comparison reports
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub nodes_compared: usize,
    pub fraction_within_3se: f64,
    pub sup_abs_z: f64,
    /// Log-log tail slopes fitted over the requested window.
    pub tail_slope_reference: f64,
    pub tail_slope_empirical: f64,
    pub bulk_threshold: f64,
}

/// Per-node z-scores of a reference density against an empirical one;
/// the bulk is where the reference exceeds `bulk_frac` of its maximum.
pub fn compare(
    reference: &(dyn Fn(&VecD) -> Result<f64> + Sync),
    empirical: &EmpiricalDensity,
    bulk_frac: f64,
    tail_window: Option<(f64, f64, VecD)>,
) -> Result<ComparisonReport> {
    let grid = &empirical.grid;
    let ref_values: Vec<f64> = (0..grid.len())
        .map(|i| reference(&grid.node(i)))
        .collect::<Result<Vec<f64>>>()?;
    let ref_max = ref_values.iter().cloned().fold(0.0f64, f64::max);
    let threshold = bulk_frac * ref_max;
    let mut nodes = 0usize;
    let mut within = 0usize;
    let mut sup_z: f64 = 0.0;
    for i in 0..grid.len() {
        if ref_values[i] <= threshold || empirical.standard_errors[i] <= 0.0 {
            continue;
        }
        let z = (ref_values[i] - empirical.values[i]) / empirical.standard_errors[i];
        nodes += 1;
        if z.abs() <= 3.0 {
            within += 1;
        }
        sup_z = sup_z.max(z.abs());
    }
    let (mut slope_ref, mut slope_emp) = (f64::NAN, f64::NAN);
    if let Some((lo, hi, center)) = tail_window {
        let mut xs = Vec::new();
        let mut yr = Vec::new();
        let mut ye = Vec::new();
        for i in 0..grid.len() {
            let r = grid.node(i).dist(&center);
            if r >= lo && r <= hi && ref_values[i] > 0.0 && empirical.values[i] > 0.0 {
                xs.push(r.ln());
                yr.push(ref_values[i].ln());
                ye.push(empirical.values[i].ln());
            }
        }
        if xs.len() >= 4 {
            slope_ref = crate::quad::linear_fit_slope(&xs, &yr);
            slope_emp = crate::quad::linear_fit_slope(&xs, &ye);
        }
    }
    Ok(ComparisonReport {
        nodes_compared: nodes,
        fraction_within_3se: if nodes > 0 { within as f64 / nodes as f64 } else { f64::NAN },
        sup_abs_z: sup_z,
        tail_slope_reference: slope_ref,
        tail_slope_empirical: slope_emp,
        bulk_threshold: threshold,
    })
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

/// Flat binary layout: u64 little-endian header length, the config JSON,
/// then path-major little-endian f64 terminal states.
pub fn write_ensemble<W: std::io::Write>(ensemble: &PathEnsemble, mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Header<'a> {
        d: usize,
        n_paths: usize,
        config: &'a SimConfig,
        excluded_paths: usize,
    }
    let header = serde_json::to_vec(&Header {
        d: ensemble.d,
        n_paths: ensemble.terminal_states.len(),
        config: &ensemble.config,
        excluded_paths: ensemble.excluded_paths,
    })?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for state in &ensemble.terminal_states {
        for i in 0..ensemble.d {
            w.write_all(&state[i].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ensemble<R: std::io::Read>(mut r: R) -> Result<(SimConfig, usize, Vec<VecD>)> {
    #[derive(Deserialize)]
    struct Header {
        d: usize,
        n_paths: usize,
        config: SimConfig,
        #[allow(dead_code)]
        excluded_paths: usize,
    }
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let len = u64::from_le_bytes(len_buf) as usize;
    let mut header_buf = vec![0u8; len];
    r.read_exact(&mut header_buf)?;
    let header: Header = serde_json::from_slice(&header_buf)?;
    let mut states = Vec::with_capacity(header.n_paths);
    let mut f = [0u8; 8];
    for _ in 0..header.n_paths {
        let mut v = VecD::zeros(header.d);
        for i in 0..header.d {
            r.read_exact(&mut f)?;
            v[i] = f64::from_le_bytes(f);
        }
        states.push(v);
    }
    Ok((header.config, header.d, states))
}

/// Kolmogorov-Smirnov distance of sorted samples against a CDF.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        worst = worst.max((f - i as f64 / n).abs());
        worst = worst.max(((i + 1) as f64 / n - f).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{DriftSpec, SigmaSpec};
    use crate::levy::isotropic_stable;

    fn cauchy_setup() -> (PreparedLevy, Coefficients) {
        let model = isotropic_stable(1, 1.0, 1.0);
        let coeffs =
            Coefficients::new(1, DriftSpec::Zero, SigmaSpec::Constant { value: 1.0 }).unwrap();
        (PreparedLevy::new(&model).unwrap(), coeffs)
    }

    #[test]
    fn frozen_dynamics_with_huge_delta() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig {
            n_paths: 500,
            delta_rule: DeltaRule::Fixed { delta: 1e9 },
            small_jump_mode: SmallJumpMode::Drop,
            ..Default::default()
        };
        let ensemble = simulate(&prepared, &coeffs, &VecD::scalar(0.7), 0.0, 0.5, &config).unwrap();
        assert!(ensemble.terminal_states.iter().all(|s| s[0] == 0.7));
        assert!(ensemble.jump_counts.iter().all(|c| *c == 0));
    }

    #[test]
    fn jump_count_matches_poisson_mean() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig {
            n_paths: 100_000,
            n_steps_per_unit_time: 16,
            delta_rule: DeltaRule::Fixed { delta: 1.0 },
            small_jump_mode: SmallJumpMode::Drop,
            seed: 5,
            block_count: 4,
        };
        let span = 0.5;
        let ensemble =
            simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, span, &config).unwrap();
        let rate = prepared.tail_mass(1.0);
        let want = span * rate;
        let mean: f64 = ensemble.jump_counts.iter().map(|c| *c as f64).sum::<f64>()
            / ensemble.jump_counts.len() as f64;
        let se = (want / ensemble.jump_counts.len() as f64).sqrt();
        assert!(
            (mean - want).abs() <= 3.0 * se,
            "mean {mean}, want {want}, se {se}"
        );
    }

    #[test]
    fn reproducibility_is_bitwise() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig {
            n_paths: 2000,
            seed: 42,
            block_count: 8,
            ..Default::default()
        };
        let a = simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 0.5, &config).unwrap();
        let b = simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 0.5, &config).unwrap();
        assert_eq!(a.terminal_states.len(), b.terminal_states.len());
        for (x, y) in a.terminal_states.iter().zip(&b.terminal_states) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
        }
        assert_eq!(a.jump_counts, b.jump_counts);
    }

    #[test]
    fn block_splitting_preserves_law() {
        let (prepared, coeffs) = cauchy_setup();
        let base = SimConfig {
            n_paths: 60_000,
            n_steps_per_unit_time: 64,
            seed: 3,
            block_count: 1,
            ..Default::default()
        };
        let other = SimConfig { seed: 4, block_count: 8, ..base.clone() };
        let a = simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 0.5, &base).unwrap();
        let b = simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 0.5, &other).unwrap();
        // compare the central interquantile statistic: P(|X| <= 1)
        let frac = |e: &PathEnsemble| {
            e.terminal_states.iter().filter(|s| s[0].abs() <= 1.0).count() as f64
                / e.terminal_states.len() as f64
        };
        let (fa, fb) = (frac(&a), frac(&b));
        let se = (fa * (1.0 - fa) / a.terminal_states.len() as f64).sqrt();
        assert!((fa - fb).abs() <= 3.0 * se * 2f64.sqrt(), "{fa} vs {fb}");
    }

    #[test]
    fn poisson_clock_ks() {
        let (prepared, _) = cauchy_setup();
        let (mut samples, rate) = interarrival_samples(&prepared, 1.0, 100_000, 11).unwrap();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ks_distance(&samples, |x| 1.0 - (-rate * x).exp());
        // 1% asymptotic Kolmogorov threshold
        let threshold = 1.6276 / (samples.len() as f64).sqrt();
        assert!(ks < threshold, "ks {ks} threshold {threshold}");
    }

    #[test]
    fn cauchy_terminal_histogram_matches_closed_form() {
        // sigma = 1, F = 0: the terminal law is exactly Cauchy(span). A
        // small fixed delta keeps the Gaussian replacement of the
        // compensated small jumps well below the statistical resolution.
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig {
            n_paths: 200_000,
            n_steps_per_unit_time: 128,
            delta_rule: DeltaRule::Fixed { delta: 0.05 },
            seed: 8,
            block_count: 8,
            ..Default::default()
        };
        let span = 1.0;
        let ensemble =
            simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, span, &config).unwrap();
        let grid = SpaceGrid::new_1d(0.0, 2048.0, 16384).unwrap();
        let hist = empirical_density(&ensemble, &grid, DensityMode::Histogram).unwrap();
        assert!((hist.mass() - 1.0).abs() < 1e-9);
        // the stated window |x - x0| <= 5 corresponds to a bulk cut at
        // f(5)/f(0) = 1/26 of the peak
        let report = compare(
            &|z: &VecD| {
                Ok(span / (std::f64::consts::PI * (span * span + z[0] * z[0])))
            },
            &hist,
            1.0 / 26.0,
            None,
        )
        .unwrap();
        assert!(
            report.sup_abs_z <= 3.0,
            "fraction {} sup_z {}",
            report.fraction_within_3se,
            report.sup_abs_z
        );
        // tail slopes of both curves approach -(alpha + gamma) = -2
        let report_tail = compare(
            &|z: &VecD| {
                Ok(span / (std::f64::consts::PI * (span * span + z[0] * z[0])))
            },
            &hist,
            0.0,
            Some((5.0, 50.0, VecD::scalar(0.0))),
        )
        .unwrap();
        assert!(
            (report_tail.tail_slope_reference + 2.0).abs() < 0.15,
            "slope {}",
            report_tail.tail_slope_reference
        );
        assert!(
            (report_tail.tail_slope_empirical + 2.0).abs() < 0.4,
            "empirical slope {}",
            report_tail.tail_slope_empirical
        );
    }

    #[test]
    fn drop_and_gaussian_match_converge_together() {
        let (prepared, coeffs) = cauchy_setup();
        let span = 0.5;
        let sup_hist_diff = |delta: f64| -> f64 {
            let mk = |mode: SmallJumpMode, seed: u64| {
                let config = SimConfig {
                    n_paths: 40_000,
                    n_steps_per_unit_time: 128,
                    delta_rule: DeltaRule::Fixed { delta },
                    small_jump_mode: mode,
                    seed,
                    block_count: 4,
                };
                let e = simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, span, &config)
                    .unwrap();
                let grid = SpaceGrid::new_1d(0.0, 512.0, 2048).unwrap();
                empirical_density(&e, &grid, DensityMode::Histogram).unwrap()
            };
            let a = mk(SmallJumpMode::Drop, 21);
            let b = mk(SmallJumpMode::GaussianMatch, 22);
            a.values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = sup_hist_diff(0.8);
        let fine = sup_hist_diff(0.1);
        assert!(fine < coarse, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn histogram_coverage_refusal() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig { n_paths: 20_000, seed: 9, ..Default::default() };
        let ensemble =
            simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 1.0, &config).unwrap();
        // a narrow grid cannot cover the heavy tails
        let grid = SpaceGrid::new_1d(0.0, 3.0, 64).unwrap();
        match empirical_density(&ensemble, &grid, DensityMode::Histogram) {
            Err(Error::Coverage { covered, .. }) => assert!(covered < 0.99),
            other => panic!("expected coverage refusal, got {other:?}"),
        }
    }

    #[test]
    fn uniform_synthetic_histogram_is_flat() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let states: Vec<VecD> = (0..400_000)
            .map(|_| VecD::scalar(rng.gen::<f64>() * 8.0 - 4.0))
            .collect();
        let ensemble = PathEnsemble {
            d: 1,
            jump_counts: vec![0; states.len()],
            terminal_states: states,
            config: SimConfig::default(),
            excluded_paths: 0,
            wall_clock_secs: 0.0,
        };
        let grid = SpaceGrid::new_1d(0.0, 4.0, 64).unwrap();
        let hist = empirical_density(&ensemble, &grid, DensityMode::Histogram).unwrap();
        for (i, v) in hist.values.iter().enumerate() {
            let z = grid.axis_coord(0, i);
            if z.abs() > 3.8 {
                continue; // boundary cells are half-covered
            }
            let se = hist.standard_errors[i];
            assert!((v - 0.125).abs() <= 3.5 * se, "z={z} v={v} se={se}");
        }
    }

    #[test]
    fn self_comparison_is_exact() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig { n_paths: 5000, seed: 2, ..Default::default() };
        let ensemble =
            simulate(&prepared, &coeffs, &VecD::scalar(0.0), 0.0, 0.5, &config).unwrap();
        let grid = SpaceGrid::new_1d(0.0, 512.0, 1024).unwrap();
        let hist = empirical_density(&ensemble, &grid, DensityMode::Histogram).unwrap();
        let values = hist.values.clone();
        let g2 = hist.grid.clone();
        let report = compare(
            &move |z: &VecD| Ok(g2.multilinear(&values, z).unwrap_or(0.0)),
            &hist,
            0.01,
            None,
        )
        .unwrap();
        assert_eq!(report.sup_abs_z, 0.0);
        assert_eq!(report.fraction_within_3se, 1.0);
    }

    #[test]
    fn ensemble_round_trip() {
        let (prepared, coeffs) = cauchy_setup();
        let config = SimConfig { n_paths: 100, seed: 6, ..Default::default() };
        let ensemble =
            simulate(&prepared, &coeffs, &VecD::scalar(0.3), 0.0, 0.5, &config).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&ensemble, &mut buf).unwrap();
        let (config2, d, states) = read_ensemble(&buf[..]).unwrap();
        assert_eq!(config2, ensemble.config);
        assert_eq!(d, 1);
        assert_eq!(states.len(), ensemble.terminal_states.len());
        for (a, b) in states.iter().zip(&ensemble.terminal_states) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }
}

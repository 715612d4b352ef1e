//! The frozen-process density by Fourier inversion.
//!
//! Freezing the coefficients along the backward flow anchored at a
//! terminal pair (T, y) turns the SDE into an additive process whose
//! characteristic function is explicit: the density follows by inverse
//! FFT on a grid, or by direct oscillatory quadrature at single points.
//! The deterministic drift shift is applied as a Fourier phase so values
//! never get resampled.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, steps_for_span, Coefficients, FlowPath};
use crate::levy::PreparedLevy;
use crate::linalg::{MatD, VecD};
use crate::quad::gauss_legendre;
use crate::sphere::{antipodal_pairs, sphere_rule};

/// Hard cap on total grid points (memory guard).
pub const GRID_POINT_CAP: usize = 1 << 22;

// ---------------------------------------------------------------------------
// grids and fields
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub center: f64,
    pub half_width: f64,
    pub n: usize,
}

/// Uniform tensor grid; per axis `n` points at `center + (j - n/2) h`
/// with `h = 2 half_width / n`. `n` must be a power of two (>= 8) for
/// the FFT inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub axes: Vec<AxisSpec>,
}

impl SpaceGrid {
    pub fn new(axes: Vec<AxisSpec>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::Config("grid dimension must be 1..=3".into()));
        }
        let mut total: usize = 1;
        for ax in &axes {
            if ax.n < 8 || !ax.n.is_power_of_two() {
                return Err(Error::Config("grid axis needs a power-of-two size >= 8".into()));
            }
            if !(ax.half_width > 0.0) {
                return Err(Error::Config("grid half width must be positive".into()));
            }
            total = total.saturating_mul(ax.n);
        }
        if total > GRID_POINT_CAP {
            return Err(Error::Config(format!(
                "grid has {total} points, above the cap {GRID_POINT_CAP}"
            )));
        }
        Ok(SpaceGrid { axes })
    }

    pub fn new_1d(center: f64, half_width: f64, n: usize) -> Result<Self> {
        SpaceGrid::new(vec![AxisSpec { center, half_width, n }])
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.axes[axis].half_width / self.axes[axis].n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.d()).map(|a| self.spacing(a)).product()
    }

    pub fn axis_coord(&self, axis: usize, idx: usize) -> f64 {
        self.axes[axis].center + (idx as f64 - self.axes[axis].n as f64 / 2.0) * self.spacing(axis)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.d()).rev() {
            out[axis] = rem % self.axes[axis].n;
            rem /= self.axes[axis].n;
        }
        out
    }

    pub fn node(&self, flat: usize) -> VecD {
        let mi = self.multi_index(flat);
        let mut v = VecD::zeros(self.d());
        for axis in 0..self.d() {
            v[axis] = self.axis_coord(axis, mi[axis]);
        }
        v
    }

    pub fn contains(&self, p: &VecD) -> bool {
        (0..self.d()).all(|a| {
            let lo = self.axis_coord(a, 0);
            let hi = self.axis_coord(a, self.axes[a].n - 1);
            p[a] >= lo && p[a] <= hi
        })
    }

    /// Multilinear interpolation of `values` at `p`; None outside the grid.
    pub fn multilinear(&self, values: &[f64], p: &VecD) -> Option<f64> {
        let d = self.d();
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..d {
            let h = self.spacing(a);
            let pos = (p[a] - self.axis_coord(a, 0)) / h;
            if pos < 0.0 || pos > (self.axes[a].n - 1) as f64 {
                return None;
            }
            let idx = (pos.floor() as usize).min(self.axes[a].n - 2);
            base[a] = idx;
            frac[a] = pos - idx as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let hi = (corner >> a) & 1 == 1;
                weight *= if hi { frac[a] } else { 1.0 - frac[a] };
                let idx = base[a] + usize::from(hi);
                flat = flat * self.axes[a].n + idx;
            }
            acc += weight * values[flat];
        }
        Some(acc)
    }

    /// Catmull-Rom interpolation for 1-d grids; falls back to
    /// multilinear in higher dimensions. None outside the grid.
    pub fn cubic_or_multilinear(&self, values: &[f64], p: &VecD) -> Option<f64> {
        if self.d() != 1 {
            return self.multilinear(values, p);
        }
        let h = self.spacing(0);
        let n = self.axes[0].n as isize;
        let pos = (p[0] - self.axis_coord(0, 0)) / h;
        if pos < 0.0 || pos > (n - 1) as f64 {
            return None;
        }
        let i = pos.floor() as isize;
        let t = pos - i as f64;
        let tap = |k: isize| -> f64 { values[(i + k).clamp(0, n - 1) as usize] };
        let (p0, p1, p2, p3) = (tap(-1), tap(0), tap(1), tap(2));
        Some(0.5 * (2.0 * p1
            + (-p0 + p2) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t))
    }

    pub fn refine(&self, factor: usize) -> Result<SpaceGrid> {
        SpaceGrid::new(
            self.axes
                .iter()
                .map(|a| AxisSpec { center: a.center, half_width: a.half_width, n: a.n * factor })
                .collect(),
        )
    }
}

/// Numerical policies for the inversion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrozenTolerances {
    /// Mass window around 1 for density fields.
    pub norm_tol: f64,
    /// Error when clipped negative mass exceeds this fraction of total.
    pub clip_mass_tol: f64,
    /// Error when a single value is below `-clip_floor * max`.
    pub clip_floor: f64,
    /// Decay required of the characteristic function at the dual-grid edge.
    pub edge_decay: f64,
    /// Base Gauss-Legendre order of the time quadrature.
    pub time_order: usize,
}

impl Default for FrozenTolerances {
    fn default() -> Self {
        FrozenTolerances {
            norm_tol: 5e-3,
            clip_mass_tol: 1e-4,
            clip_floor: 1e-3,
            edge_decay: 1e-5,
            time_order: 16,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldMeta {
    pub t: f64,
    pub s: f64,
    pub horizon: f64,
    pub freezing_point: Vec<f64>,
    pub start_point: Vec<f64>,
    pub mass_estimate: f64,
    pub clipped_mass: f64,
}

/// Density values on a space grid at fixed (t, s, T, x, y).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: SpaceGrid,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl DensityField {
    pub fn value_at(&self, p: &VecD) -> Option<f64> {
        self.grid.multilinear(&self.values, p)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// CSV rows: one node per line, coordinates then value, 17 significant
    /// digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.d();
        let header: Vec<String> = (0..d)
            .map(|a| format!("z{a}"))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let node = self.grid.node(i);
            let mut row: Vec<String> = node.as_slice().iter().map(|c| fmt_g17(*c)).collect();
            row.push(fmt_g17(*v));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17-significant-digit scientific formatting (round-trip exact for f64).
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// frozen characteristic function
// ---------------------------------------------------------------------------

/// Time-integrated frozen exponent `p -> int_t^s phi_Z(sigma(u, theta_u)^T p) du`
/// with the dispersion evaluated along a flow path anchored at (T, y).
/// Gauss-Legendre in time, order doubled until a probe set of frequencies
/// is stable to 1e-10.
pub struct FrozenCf {
    sigma_nodes: Vec<(f64, MatD)>,
}

impl FrozenCf {
    pub fn new(
        prepared: &PreparedLevy,
        coeffs: &Coefficients,
        t: f64,
        s: f64,
        path: &FlowPath,
        base_order: usize,
    ) -> Result<FrozenCf> {
        if s <= t {
            return Err(Error::Config("frozen exponent needs s > t".into()));
        }
        if !path.covers(t, s) {
            return Err(Error::Config(
                "flow path does not cover the requested time interval".into(),
            ));
        }
        let build = |order: usize| -> Vec<(f64, MatD)> {
            let (xs, ws) = gauss_legendre(order);
            let half = 0.5 * (s - t);
            let mid = 0.5 * (s + t);
            xs.iter()
                .zip(ws)
                .map(|(x, w)| {
                    let u = mid + half * x;
                    (w * half, coeffs.sigma_at(u, &path.eval(u)))
                })
                .collect()
        };
        let probe = |nodes: &[(f64, MatD)], p: &VecD| -> f64 {
            nodes
                .iter()
                .map(|(w, sig)| w * prepared.exponent(&sig.transpose_matvec(p)))
                .sum()
        };
        let d = prepared.d();
        let mut order = base_order.max(4);
        let mut nodes = build(order);
        for _ in 0..4 {
            let finer = build(order * 2);
            let mut worst: f64 = 0.0;
            for &rho in &[1.0, 8.0] {
                let mut p = VecD::zeros(d);
                p[0] = rho;
                if d > 1 {
                    p[d - 1] = 0.3 * rho;
                }
                let a = probe(&nodes, &p);
                let b = probe(&finer, &p);
                worst = worst.max((a - b).abs());
            }
            if worst <= 1e-10 {
                break;
            }
            order *= 2;
            nodes = finer;
        }
        Ok(FrozenCf { sigma_nodes: nodes })
    }

    #[inline]
    pub fn eval(&self, prepared: &PreparedLevy, p: &VecD) -> f64 {
        if p.dim() == 1 {
            let pv = p[0];
            let mut acc = 0.0;
            for (w, sig) in &self.sigma_nodes {
                acc += w * prepared.exponent_scalar_1d(sig.get(0, 0) * pv);
            }
            return acc.min(0.0);
        }
        let mut acc = 0.0;
        for (w, sig) in &self.sigma_nodes {
            acc += w * prepared.exponent(&sig.transpose_matvec(p));
        }
        acc.min(0.0)
    }
}

/// Spec-shaped wrapper for a single frequency.
pub fn frozen_exponent(
    prepared: &PreparedLevy,
    coeffs: &Coefficients,
    t: f64,
    s: f64,
    path: &FlowPath,
    p: &VecD,
    n_time_nodes: usize,
) -> Result<f64> {
    Ok(FrozenCf::new(prepared, coeffs, t, s, path, n_time_nodes)?.eval(prepared, p))
}

// ---------------------------------------------------------------------------
// FFT inversion
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

/// Inverse Fourier transform of a characteristic function onto the grid:
/// `out[j] = (2pi)^{-d} int e^{-i <p, z_j - a>} chi(p) dp`, discretized on
/// the dual grid `p_q = q * pi / half_width` per axis.
pub fn invert_char_fn(
    grid: &SpaceGrid,
    chi: impl Fn(&VecD) -> Complex<f64> + Sync,
    a: &VecD,
) -> Vec<f64> {
    let d = grid.d();
    let n_total = grid.len();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_total];

    // fill with chi(p_q) * exp(-i <p_q, c - a>) * prod (-1)^{q_axis}
    for (flat, slot) in buf.iter_mut().enumerate() {
        let mi = grid.multi_index(flat);
        let mut p = VecD::zeros(d);
        let mut phase = 0.0;
        let mut sign = 1.0;
        for axis in 0..d {
            let n = grid.axes[axis].n;
            let dp = std::f64::consts::PI / grid.axes[axis].half_width;
            let q = mi[axis] as f64 - n as f64 / 2.0;
            let pq = q * dp;
            p[axis] = pq;
            phase -= pq * (grid.axes[axis].center - a[axis]);
            if mi[axis] % 2 == 1 {
                sign = -sign;
            }
        }
        let c = chi(&p);
        let rot = Complex::from_polar(1.0, phase);
        *slot = c * rot * sign;
    }

    // forward FFT along each axis
    for axis in 0..d {
        let n = grid.axes[axis].n;
        let fft = PLANNER.with(|pl| pl.borrow_mut().plan_fft_forward(n));
        let stride: usize = grid.axes[axis + 1..].iter().map(|a| a.n).product();
        let block = stride * n;
        let mut scratch = vec![Complex::new(0.0, 0.0); n];
        for base in 0..(n_total / block) {
            for inner in 0..stride {
                let start = base * block + inner;
                for k in 0..n {
                    scratch[k] = buf[start + k * stride];
                }
                fft.process(&mut scratch);
                for k in 0..n {
                    buf[start + k * stride] = scratch[k];
                }
            }
        }
    }

    // postphase and scale
    let mut scale = 1.0;
    for axis in 0..d {
        let dp = std::f64::consts::PI / grid.axes[axis].half_width;
        scale *= dp / (2.0 * std::f64::consts::PI);
    }
    buf.iter()
        .enumerate()
        .map(|(flat, v)| {
            let mi = grid.multi_index(flat);
            let mut sign = 1.0;
            for axis in 0..d {
                if mi[axis] % 2 == 1 {
                    sign = -sign;
                }
            }
            v.re * sign * scale
        })
        .collect()
}

// ---------------------------------------------------------------------------
// density operations
// ---------------------------------------------------------------------------

fn backward_path(coeffs: &Coefficients, y: &VecD, horizon: f64, t: f64) -> Result<FlowPath> {
    flow(coeffs, y, horizon, t, steps_for_span(horizon - t))
}

/// Frozen density `p^{T,y}(t, s, x, .)` on a grid by inverse FFT.
#[allow(clippy::too_many_arguments)]
pub fn frozen_density_grid(
    prepared: &PreparedLevy,
    coeffs: &Coefficients,
    t: f64,
    s: f64,
    horizon: f64,
    y: &VecD,
    x: &VecD,
    grid: &SpaceGrid,
    tol: &FrozenTolerances,
) -> Result<DensityField> {
    let path = backward_path(coeffs, y, horizon, t)?;
    let cf = FrozenCf::new(prepared, coeffs, t, s, &path, tol.time_order)?;
    // deterministic shift: int_t^s F(u, theta_{u,T}(y)) du
    let shift = path.drift_shift(t, s);
    let a = x.add(&shift);

    // dual-edge decay check ties the truncation to the certified decay
    for axis in 0..grid.d() {
        let mut p = VecD::zeros(grid.d());
        p[axis] = std::f64::consts::PI / grid.spacing(axis);
        let edge = cf.eval(prepared, &p).exp();
        if edge > tol.edge_decay {
            return Err(Error::Resolution(format!(
                "characteristic function is {edge:.2e} at the dual edge of axis {axis}; \
                 use more points or a smaller half width"
            )));
        }
    }

    let raw = invert_char_fn(grid, |p| Complex::new(cf.eval(prepared, p).exp(), 0.0), &a);

    let max_val = raw.iter().cloned().fold(0.0f64, f64::max);
    let cell = grid.cell_volume();
    let mut clipped = 0.0;
    let mut values = Vec::with_capacity(raw.len());
    for v in &raw {
        if *v < 0.0 {
            if *v < -tol.clip_floor * max_val {
                return Err(Error::Resolution(format!(
                    "negative density {v:.3e} below the clip floor; grid too coarse"
                )));
            }
            clipped += -v * cell;
            values.push(0.0);
        } else {
            values.push(*v);
        }
    }
    let mass: f64 = values.iter().sum::<f64>() * cell;
    if clipped > tol.clip_mass_tol * mass.max(1e-300) {
        return Err(Error::Resolution(format!(
            "clipped negative mass {clipped:.3e} exceeds tolerance; refine the grid"
        )));
    }
    if (mass - 1.0).abs() > tol.norm_tol {
        return Err(Error::Resolution(format!(
            "density mass {mass:.6} outside [1 - {0}, 1 + {0}]; enlarge the grid",
            tol.norm_tol
        )));
    }
    Ok(DensityField {
        grid: grid.clone(),
        values,
        meta: FieldMeta {
            t,
            s,
            horizon,
            freezing_point: y.to_vec(),
            start_point: x.to_vec(),
            mass_estimate: mass,
            clipped_mass: clipped,
        },
    })
}

/// Frozen density at a single point `z` by direct oscillatory quadrature
/// in the radial frequency, spherical rule across directions for d >= 2.
#[allow(clippy::too_many_arguments)]
pub fn frozen_density_point(
    prepared: &PreparedLevy,
    coeffs: &Coefficients,
    t: f64,
    s: f64,
    horizon: f64,
    y: &VecD,
    x: &VecD,
    z: &VecD,
    tol: &FrozenTolerances,
) -> Result<f64> {
    let path = backward_path(coeffs, y, horizon, t)?;
    let cf = FrozenCf::new(prepared, coeffs, t, s, &path, tol.time_order)?;
    let shift = path.drift_shift(t, s);
    let a = x.add(&shift);
    let r = z.sub(&a);
    point_inversion(prepared, &cf, &r)
}

/// Shared point-inversion core: `(2pi)^{-d} int cos(<p, r>) e^{Phi(p)} dp`.
///
/// Composite Filon panels in the radial frequency: the panel count follows
/// the envelope `e^{Phi}` alone, so far-field arguments cost the same as
/// near-field ones.
pub(crate) fn point_inversion(prepared: &PreparedLevy, cf: &FrozenCf, r: &VecD) -> Result<f64> {
    let d = prepared.d();
    let decay_along = |dir: &VecD| -> f64 {
        let mut rho = 1.0;
        for _ in 0..80 {
            if cf.eval(prepared, &dir.scale(rho)).exp() < 1e-14 {
                break;
            }
            rho *= 1.4;
        }
        rho
    };
    let radial_filon = |dir: &VecD, freq: f64, power: i32, n_panels: usize| -> f64 {
        let freq = freq.abs();
        let rho_max = decay_along(dir);
        // quadratic panel layout: finer near zero where the envelope bends
        let mut acc = 0.0;
        let mut edges = Vec::with_capacity(n_panels + 1);
        for k in 0..=n_panels {
            let s = k as f64 / n_panels as f64;
            edges.push(rho_max * s * s);
        }
        // at rho = 0: exp(Phi(0)) = 1 and 0^0 = 1, so powi covers both
        let env = |rho: f64| -> f64 {
            cf.eval(prepared, &dir.scale(rho)).exp() * rho.powi(power)
        };
        for k in 0..n_panels {
            let (a, b) = (edges[k], edges[k + 1]);
            if b <= a {
                continue;
            }
            let fa = env(a);
            let fm = env(0.5 * (a + b));
            let fb = env(b);
            acc += crate::quad::filon_cos_panel(a, b, freq, fa, fm, fb);
        }
        acc
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    if d == 1 {
        let dir = VecD::scalar(1.0);
        let val = radial_filon(&dir, r[0], 0, 384);
        return Ok((val / std::f64::consts::PI).max(0.0));
    }
    // d >= 2: antipodal half-sphere x radial Filon
    let rule = antipodal_pairs(&sphere_rule(d, 64));
    let mut total = 0.0;
    for node in &rule {
        let freq = r.dot(&node.dir);
        total += 2.0 * node.weight * radial_filon(&node.dir, freq, d as i32 - 1, 256);
    }
    Ok((total / two_pi.powi(d as i32)).max(0.0))
}

// ---------------------------------------------------------------------------
// Dirac probe
// ---------------------------------------------------------------------------

/// `int f(y) p^{T,y}(t, T, x, y) dy` where the freezing parameter equals
/// the integration variable: one point inversion per node, each with its
/// own backward flow. The bulk integral runs over the grid nodes inside
/// the ball `|y - theta_{T,t}(x)| <= 8 (T-t)^{1/alpha}`; the heavy tail is
/// picked up by log-radial quadrature of the same integrand, truncated
/// where the single-jump bound says nothing is left.
#[allow(clippy::too_many_arguments)]
pub fn dirac_probe(
    prepared: &PreparedLevy,
    coeffs: &Coefficients,
    f: &(dyn Fn(&VecD) -> f64 + Sync),
    x: &VecD,
    t: f64,
    horizon: f64,
    y_grid: &SpaceGrid,
    tol: &FrozenTolerances,
) -> Result<f64> {
    use rayon::prelude::*;
    let d = prepared.d();
    let alpha = prepared.alpha();
    let span = horizon - t;
    if span <= 0.0 {
        return Err(Error::Config("probe needs T > t".into()));
    }
    let center = flow(coeffs, x, t, horizon, steps_for_span(span))?.target_state();
    let radius = 8.0 * span.powf(1.0 / alpha);

    let eval_at = |y: &VecD| -> Result<f64> {
        let v = frozen_density_point(prepared, coeffs, t, horizon, horizon, y, x, y, tol)?;
        Ok(f(y) * v)
    };

    // bulk: grid nodes inside the ball
    let nodes: Vec<usize> = (0..y_grid.len())
        .filter(|i| y_grid.node(*i).dist(&center) <= radius)
        .collect();
    let bulk_terms: Vec<Result<f64>> =
        nodes.par_iter().map(|i| eval_at(&y_grid.node(*i))).collect();
    let mut bulk = 0.0;
    for term in bulk_terms {
        bulk += term?;
    }
    bulk *= y_grid.cell_volume();

    // heavy tail on log-radial panels
    let mut tail = 0.0;
    let (dirs, dir_weight): (Vec<VecD>, f64) = if d == 1 {
        (vec![VecD::scalar(1.0), VecD::scalar(-1.0)], 1.0)
    } else {
        let rule = sphere_rule(d, 32);
        let w = rule[0].weight;
        (rule.iter().map(|n| n.dir).collect(), w)
    };
    let mut lo = radius;
    for _ in 0..60 {
        let hi = lo * 1.6;
        let terms: Vec<Result<f64>> = dirs
            .par_iter()
            .map(|dir| {
                let mut acc = 0.0;
                let (xs, ws) = gauss_legendre(4);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (xg, wg) in xs.iter().zip(ws) {
                    let rho = mid + half * xg;
                    let y = center.add(&dir.scale(rho));
                    let radial = if d == 1 { 1.0 } else { rho.powi(d as i32 - 1) };
                    acc += wg * half * radial * eval_at(&y)?;
                }
                Ok(acc * dir_weight)
            })
            .collect();
        let mut shell = 0.0;
        for term in terms {
            shell += term?;
        }
        tail += shell;
        // single-jump tail bound: remaining mass <= span * nu(|z| > hi/2)
        let bound = span * prepared.tail_mass(hi * 0.5);
        lo = hi;
        if bound < 1e-8 || shell.abs() < 1e-12 * (bulk.abs() + tail.abs()).max(1e-300) {
            break;
        }
    }
    Ok(bulk + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{DriftSpec, SigmaSpec};
    use crate::levy::{isotropic_stable, PreparedLevy};

    fn cauchy_setup() -> (PreparedLevy, Coefficients) {
        let model = isotropic_stable(1, 1.0, 1.0);
        let coeffs =
            Coefficients::new(1, DriftSpec::Zero, SigmaSpec::Constant { value: 1.0 }).unwrap();
        (PreparedLevy::new(&model).unwrap(), coeffs)
    }

    #[test]
    fn gaussian_char_fn_inverts_to_gaussian() {
        // chi(p) = exp(-p^2/2) -> density exp(-z^2/2)/sqrt(2 pi); pure FFT
        // mapping check, no Levy machinery involved
        let grid = SpaceGrid::new_1d(0.0, 20.0, 512).unwrap();
        let a = VecD::scalar(0.7);
        let vals = invert_char_fn(&grid, |p| Complex::new((-0.5 * p[0] * p[0]).exp(), 0.0), &a);
        for i in 0..grid.len() {
            let z = grid.axis_coord(0, i);
            let want = (-0.5 * (z - 0.7) * (z - 0.7)).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!(
                (vals[i] - want).abs() < 1e-12,
                "z={z} got={} want={want}",
                vals[i]
            );
        }
    }

    #[test]
    fn gaussian_char_fn_inverts_in_2d() {
        let grid = SpaceGrid::new(vec![
            AxisSpec { center: 0.0, half_width: 12.0, n: 64 },
            AxisSpec { center: 0.5, half_width: 12.0, n: 64 },
        ])
        .unwrap();
        let a = VecD::from_slice(&[0.0, 0.5]);
        let vals = invert_char_fn(&grid, |p| Complex::new((-0.5 * p.dot(p)).exp(), 0.0), &a);
        for &flat in &[0usize, 777, 2080, 4095] {
            let node = grid.node(flat);
            let rsq = node.sub(&a).dot(&node.sub(&a));
            let want = (-0.5 * rsq).exp() / (2.0 * std::f64::consts::PI);
            assert!((vals[flat] - want).abs() < 1e-10, "flat={flat}");
        }
    }

    #[test]
    fn cauchy_density_on_grid() {
        let (prepared, coeffs) = cauchy_setup();
        let grid = SpaceGrid::new_1d(0.0, 80.0, 2048).unwrap();
        let x = VecD::scalar(0.0);
        let field = frozen_density_grid(
            &prepared,
            &coeffs,
            0.0,
            1.0,
            1.0,
            &VecD::scalar(0.0),
            &x,
            &grid,
            &FrozenTolerances::default(),
        )
        .unwrap();
        // closed form t/(pi (t^2 + z^2)) with t = 1
        for i in 0..grid.len() {
            let z = grid.axis_coord(0, i);
            if z.abs() > 5.0 {
                continue;
            }
            let want = 1.0 / (std::f64::consts::PI * (1.0 + z * z));
            assert!(
                (field.values[i] - want).abs() < 1e-4,
                "z={z} got={} want={want}",
                field.values[i]
            );
        }
        assert!((field.meta.mass_estimate - 1.0).abs() < 5e-3);
        let at0 = field.value_at(&VecD::scalar(0.0)).unwrap();
        assert!((at0 - std::f64::consts::FRAC_1_PI).abs() < 1e-4);
    }

    #[test]
    fn grid_density_symmetric_without_drift() {
        let (prepared, coeffs) = cauchy_setup();
        let grid = SpaceGrid::new_1d(0.0, 60.0, 1024).unwrap();
        let field = frozen_density_grid(
            &prepared,
            &coeffs,
            0.0,
            0.5,
            0.5,
            &VecD::scalar(0.0),
            &VecD::scalar(0.0),
            &grid,
            &FrozenTolerances::default(),
        )
        .unwrap();
        let n = grid.len();
        for i in 1..n / 2 {
            let left = field.values[n / 2 - i];
            let right = field.values[n / 2 + i];
            assert!((left - right).abs() < 1e-8, "i={i} {left} vs {right}");
        }
    }

    #[test]
    fn point_inversion_matches_cauchy() {
        let (prepared, coeffs) = cauchy_setup();
        // z - x = 1, s - t = 1 -> 1/(2 pi)
        let got = frozen_density_point(
            &prepared,
            &coeffs,
            0.0,
            1.0,
            1.0,
            &VecD::scalar(0.0),
            &VecD::scalar(0.0),
            &VecD::scalar(1.0),
            &FrozenTolerances::default(),
        )
        .unwrap();
        let want = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((got - want).abs() < 1e-4, "got {got} want {want}");
    }

    #[test]
    fn point_agrees_with_grid_in_bulk() {
        let model = crate::levy::symmetric_1d(1.2, 0.5, crate::levy::Tempering::polynomial(4.0));
        let prepared = PreparedLevy::new(&model).unwrap();
        let coeffs = Coefficients::new(
            1,
            DriftSpec::Sinusoidal { amplitude: 0.3, frequency: 1.0, phase: 0.4 },
            SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
        )
        .unwrap();
        let grid = SpaceGrid::new_1d(0.3, 40.0, 1024).unwrap();
        let y = VecD::scalar(0.8);
        let x = VecD::scalar(0.3);
        let field = frozen_density_grid(
            &prepared,
            &coeffs,
            0.0,
            0.5,
            0.5,
            &y,
            &x,
            &grid,
            &FrozenTolerances::default(),
        )
        .unwrap();
        // shared points = exact grid nodes, so no interpolation enters
        for &idx in &[512usize, 516, 524, 540] {
            let zz = VecD::scalar(grid.axis_coord(0, idx));
            let pp = frozen_density_point(
                &prepared,
                &coeffs,
                0.0,
                0.5,
                0.5,
                &y,
                &x,
                &zz,
                &FrozenTolerances::default(),
            )
            .unwrap();
            let pg = field.values[idx];
            assert!(
                (pp - pg).abs() < 1e-4 * pg.max(1e-3),
                "z={}: point {pp} vs grid {pg}",
                zz[0]
            );
        }
    }

    #[test]
    fn frozen_exponent_constant_sigma() {
        let (prepared, coeffs) = cauchy_setup();
        let path = flow(&coeffs, &VecD::scalar(0.0), 1.0, 0.0, 16).unwrap();
        for &p in &[0.0f64, 0.7, 3.0] {
            let got =
                frozen_exponent(&prepared, &coeffs, 0.2, 0.9, &path, &VecD::scalar(p), 16).unwrap();
            let want = 0.7 * prepared.exponent(&VecD::scalar(p));
            assert!((got - want).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn frozen_exponent_time_scaled_sigma() {
        // sigma(u) = 1 + u, isotropic alpha = 1: Phi(p) = -|p| int_t^s (1+u) du
        let model = isotropic_stable(1, 1.0, 1.0);
        let prepared = PreparedLevy::new(&model).unwrap();
        let coeffs =
            Coefficients::new(1, DriftSpec::Zero, SigmaSpec::TimeScaled { base: 1.0, slope: 1.0 })
                .unwrap();
        let path = flow(&coeffs, &VecD::scalar(0.0), 1.0, 0.0, 16).unwrap();
        let (t, s) = (0.1, 0.8);
        let p = VecD::scalar(2.0);
        let got = frozen_exponent(&prepared, &coeffs, t, s, &path, &p, 16).unwrap();
        let want = -2.0 * ((s + s * s / 2.0) - (t + t * t / 2.0));
        assert!((got - want).abs() < 1e-10, "got {got} want {want}");
    }

    #[test]
    fn chapman_kolmogorov_fixed_freezing_pair() {
        // fixed (T, y): the frozen process is a genuine Markov family, so
        // the (t,u) and (u,s) densities convolve to the (t,s) one
        let model = crate::levy::symmetric_1d(1.2, 0.5, crate::levy::Tempering::polynomial(4.0));
        let prepared = PreparedLevy::new(&model).unwrap();
        let coeffs = Coefficients::new(
            1,
            DriftSpec::Sinusoidal { amplitude: 0.3, frequency: 1.0, phase: 0.4 },
            SigmaSpec::HolderRadial { base: 1.0, amp: 0.5, expo: 0.5 },
        )
        .unwrap();
        let (t, u, s, horizon) = (0.0, 0.25, 0.5, 0.5);
        let y = VecD::scalar(0.4);
        let x = VecD::scalar(0.1);
        let grid = SpaceGrid::new_1d(0.1, 30.0, 1024).unwrap();
        let tolp = FrozenTolerances::default();
        let first =
            frozen_density_grid(&prepared, &coeffs, t, u, horizon, &y, &x, &grid, &tolp).unwrap();
        let direct =
            frozen_density_grid(&prepared, &coeffs, t, s, horizon, &y, &x, &grid, &tolp).unwrap();
        // second leg as a translation-invariant profile: p(u, s, w, z) = P(z - w - shift2)
        let path = backward_path(&coeffs, &y, horizon, t).unwrap();
        let cf2 = FrozenCf::new(&prepared, &coeffs, u, s, &path, 16).unwrap();
        let shift2 = path.drift_shift(u, s);
        // P on displacement grid: evaluate with a = shift2 so that
        // prof[k] = P(z_k - shift2) where z_k is the grid node offset
        let disp_grid = SpaceGrid::new_1d(0.0, 30.0, 1024).unwrap();
        let prof2 = invert_char_fn(
            &disp_grid,
            |p| Complex::new(cf2.eval(&prepared, p).exp(), 0.0),
            &VecD::scalar(shift2[0]),
        );
        let h = grid.spacing(0);
        let n = grid.len();
        let half = n / 2;
        let mut sup_err: f64 = 0.0;
        for target in 0..n {
            let z = grid.axis_coord(0, target);
            if z.abs() > 4.0 {
                continue;
            }
            let mut conv = 0.0;
            for w_idx in 0..n {
                // displacement z_target - z_w maps to profile index
                let offset = target as isize - w_idx as isize + half as isize;
                if offset < 0 || offset >= n as isize {
                    continue;
                }
                conv += first.values[w_idx] * prof2[offset as usize];
            }
            conv *= h;
            let want = direct.values[target];
            sup_err = sup_err.max((conv - want).abs());
        }
        assert!(sup_err < 1e-3, "sup error {sup_err}");
    }

    #[test]
    fn dirac_probe_constant_function_recovers_mass() {
        let (prepared, coeffs) = cauchy_setup();
        let grid = SpaceGrid::new_1d(0.0, 12.0, 512).unwrap();
        let got = dirac_probe(
            &prepared,
            &coeffs,
            &|_y: &VecD| 1.0,
            &VecD::scalar(0.0),
            0.0,
            0.5,
            &grid,
            &FrozenTolerances::default(),
        )
        .unwrap();
        assert!((got - 1.0).abs() < 5e-3, "probe {got}");
    }

    #[test]
    fn dirac_probe_far_bump_vanishes() {
        let (prepared, coeffs) = cauchy_setup();
        let grid = SpaceGrid::new_1d(0.0, 12.0, 512).unwrap();
        let bump = |y: &VecD| (-((y[0] - 6.0) / 0.4).powi(2)).exp();
        let mut prev = f64::INFINITY;
        for &span in &[0.4, 0.1, 0.025] {
            let got = dirac_probe(
                &prepared,
                &coeffs,
                &bump,
                &VecD::scalar(0.0),
                0.0,
                span,
                &grid,
                &FrozenTolerances::default(),
            )
            .unwrap();
            assert!(got < prev);
            prev = got;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn meta_json_round_trip_is_bit_exact() {
        let meta = FieldMeta {
            t: 0.1234567890123456,
            s: 0.5,
            horizon: 0.5,
            freezing_point: vec![1.0 / 3.0],
            start_point: vec![std::f64::consts::PI],
            mass_estimate: 0.9987654321012345,
            clipped_mass: 3.2e-17,
        };
        let text = serde_json::to_string(&meta).unwrap();
        let back: FieldMeta = serde_json::from_str(&text).unwrap();
        assert_eq!(meta.t.to_bits(), back.t.to_bits());
        assert_eq!(meta.freezing_point[0].to_bits(), back.freezing_point[0].to_bits());
        assert_eq!(meta.mass_estimate.to_bits(), back.mass_estimate.to_bits());
        assert_eq!(meta.clipped_mass.to_bits(), back.clipped_mass.to_bits());
    }

    #[test]
    fn grid_rejects_bad_axes() {
        assert!(SpaceGrid::new_1d(0.0, 10.0, 100).is_err()); // not a power of two
        assert!(SpaceGrid::new_1d(0.0, 10.0, 4).is_err()); // too small
        assert!(SpaceGrid::new_1d(0.0, -1.0, 64).is_err());
    }

    #[test]
    fn grid_multilinear_is_exact_on_linear_data() {
        let grid = SpaceGrid::new_1d(0.0, 4.0, 8).unwrap();
        let values: Vec<f64> = (0..8).map(|i| grid.axis_coord(0, i) * 2.0 + 1.0).collect();
        for &p in &[-3.5, -1.2, 0.0, 2.9] {
            let got = grid.multilinear(&values, &VecD::scalar(p)).unwrap();
            assert!((got - (2.0 * p + 1.0)).abs() < 1e-12);
        }
        assert!(grid.multilinear(&values, &VecD::scalar(5.0)).is_none());
    }
}

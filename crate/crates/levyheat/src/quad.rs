//! Quadrature building blocks: Gauss-Legendre rules, composite rules on
//! log-spaced panels for heavy-tailed radial integrands, the two-sided
//! graded time mesh used by the parametrix convolution, and monotone
//! cubic interpolation for tabulated functions.

use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration on the Legendre recurrence and cached per order.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<std::sync::Mutex<std::collections::HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(std::collections::HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(v) = guard.get(&n) {
        return v;
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let leaked: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new((nodes, weights)));
    guard.insert(n, leaked);
    leaked
}

/// Gauss-Legendre integral of `f` on [a, b].
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in xs.iter().zip(ws) {
        s += w * f(mid + half * x);
    }
    s * half
}

/// Composite Gauss-Legendre over log-spaced panels on [a, b], 0 < a < b.
/// Suited to integrands that are smooth in log-radius.
pub fn integrate_log_panels(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels_per_decade: usize,
    gl_order: usize,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let la = a.ln();
    let lb = b.ln();
    let decades = (lb - la) / std::f64::consts::LN_10;
    let n_panels = ((decades * panels_per_decade as f64).ceil() as usize).max(1);
    let step = (lb - la) / n_panels as f64;
    let mut total = 0.0;
    for k in 0..n_panels {
        let lo = (la + k as f64 * step).exp();
        let hi = (la + (k + 1) as f64 * step).exp();
        total += integrate_gl(&f, lo, hi, gl_order);
    }
    total
}

/// Adaptive panel-doubling wrapper: integrates on log panels, doubles the
/// panel density until the change is below `rel_tol`, and returns the
/// value together with the last observed change (the error estimate).
pub fn integrate_log_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let mut density = 4;
    let mut prev = integrate_log_panels(&f, a, b, density, 8);
    for _ in 0..8 {
        density *= 2;
        let cur = integrate_log_panels(&f, a, b, density, 8);
        let diff = (cur - prev).abs();
        if diff <= rel_tol * cur.abs().max(1e-300) {
            return (cur, diff);
        }
        prev = cur;
    }
    (prev, f64::INFINITY)
}

/// Trapezoid weight sum of uniformly gridded values times the spacing.
pub fn trapezoid_uniform(values: &[f64], spacing: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[values.len() - 1])) * spacing
}

/// Time mesh on (t0, t1), open at both endpoints, with node density
/// proportional to `((u - t0)(t1 - u))^{g - 1}`. Nodes sit at the images
/// of the midpoints of a uniform mesh in the transformed variable; the
/// panel widths double as quadrature weights, so endpoint-singular
/// integrands of the form `(t1 - u)^{w-1}` integrate stably.
#[derive(Clone, Debug)]
pub struct GradedMesh {
    pub t0: f64,
    pub t1: f64,
    pub grading: f64,
    pub nodes: Vec<f64>,
    /// Panel edges in physical time; `edges.len() == nodes.len() + 1`.
    pub edges: Vec<f64>,
}

impl GradedMesh {
    pub fn new(t0: f64, t1: f64, n: usize, grading: f64) -> Self {
        assert!(t1 > t0 && n >= 1 && grading > 0.0 && grading <= 1.0);
        // cumulative of (s(1-s))^{g-1} evaluated without endpoint trouble:
        // substitute s = v^{1/g} near 0 and mirror for s > 1/2.
        let half_mass = incomplete_sym_beta(0.5, grading);
        let total = 2.0 * half_mass;
        let cum = |s: f64| -> f64 {
            if s <= 0.5 {
                incomplete_sym_beta(s, grading)
            } else {
                total - incomplete_sym_beta(1.0 - s, grading)
            }
        };
        // node density in physical position must be proportional to the
        // endpoint-singular density, so positions come from the INVERSE
        // of the cumulative: solve cum(sigma) = target by bisection.
        let invert = |target: f64| -> f64 {
            if target <= 0.0 {
                return 0.0;
            }
            if target >= total {
                return 1.0;
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if cum(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let span = t1 - t0;
        let mut edges = Vec::with_capacity(n + 1);
        let mut nodes = Vec::with_capacity(n);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            edges.push(t0 + span * invert(s * total));
        }
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            nodes.push(t0 + span * invert(s * total));
        }
        edges[0] = t0;
        edges[n] = t1;
        GradedMesh { t0, t1, grading, nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weight of node `j` for the full integral over (t0, t1).
    pub fn weight(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    /// Weights for the partial integral over (t0, v) where `v` is node `i`:
    /// full panels strictly below node i, zero at and above it. The half
    /// panel adjacent to the (integrable) upper singularity is dropped.
    pub fn partial_weight(&self, j: usize, i: usize) -> f64 {
        if j < i {
            self.weight(j)
        } else {
            0.0
        }
    }
}

/// `int_0^s (u(1-u))^{g-1} du` for s <= 1/2, with the endpoint killed by
/// the substitution u = v^{1/g}.
fn incomplete_sym_beta(s: f64, g: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let upper = s.powf(g);
    integrate_gl(
        |v: f64| {
            let u = v.powf(1.0 / g);
            (1.0 - u).powf(g - 1.0) / g
        },
        0.0,
        upper,
        48,
    )
}

/// Monotone cubic (Fritsch-Carlson) interpolant over sorted knots.
/// Preserves monotone data, which the inverse-CDF tables require.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return None;
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let mut deltas = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            deltas.push((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
        }
        let mut slopes = vec![0.0; n];
        slopes[0] = deltas[0];
        slopes[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            if deltas[i - 1] * deltas[i] <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // harmonic mean keeps the interpolant monotone
                let w1 = 2.0 * (xs[i + 1] - xs[i]) + (xs[i] - xs[i - 1]);
                let w2 = (xs[i + 1] - xs[i]) + 2.0 * (xs[i] - xs[i - 1]);
                slopes[i] = (w1 + w2) / (w1 / deltas[i - 1] + w2 / deltas[i]);
            }
        }
        Some(MonotoneCubic { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Filon quadrature of `int_a^b f(x) cos(t x) dx` over one panel with the
/// three samples f(a), f(mid), f(b). Panel size only needs to resolve the
/// envelope f, not the oscillation.
pub fn filon_cos_panel(a: f64, b: f64, t: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    let h = 0.5 * (b - a);
    let theta = t * h;
    let (alpha, beta, gamma) = filon_weights(theta);
    h * (alpha * (fb * (t * b).sin() - fa * (t * a).sin())
        + 0.5 * beta * (fb * (t * b).cos() + fa * (t * a).cos())
        + gamma * fm * (t * 0.5 * (a + b)).cos())
}

fn filon_weights(theta: f64) -> (f64, f64, f64) {
    if theta.abs() < 0.05 {
        let t2 = theta * theta;
        let alpha = theta * t2 * (2.0 / 45.0 - t2 * 2.0 / 315.0 + t2 * t2 * 2.0 / 4725.0);
        let beta = 2.0 / 3.0 + t2 * (2.0 / 15.0 - t2 * 4.0 / 105.0 + t2 * t2 * 2.0 / 567.0);
        let gamma = 4.0 / 3.0 - t2 * (2.0 / 15.0 - t2 / 210.0 + t2 * t2 / 11340.0);
        (alpha, beta, gamma)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let alpha = 1.0 / theta + s * c / t2 - 2.0 * s * s / t3;
        let beta = 2.0 * ((1.0 + c * c) / t2 - 2.0 * s * c / t3);
        let gamma = 4.0 * (s / t3 - c / t2);
        (alpha, beta, gamma)
    }
}

/// Least-squares slope of y against x.
pub fn linear_fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

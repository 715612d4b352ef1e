//! Drift coefficients, the deterministic flow of the drift ODE, and the
//! transported distances consumed by every bound profile.
//!
//! Coefficients come from a closed-form registry so that boundedness,
//! Lipschitz, Hoelder and ellipticity constants are known analytically
//! rather than estimated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{MatD, VecD};

/// Drift families. Every family has analytically known bound / Lipschitz
/// constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum DriftSpec {
    /// F = 0, mandatory when alpha <= 1.
    Zero,
    /// F_i(t, x) = amplitude * sin(frequency * x_i + phase). Bounded and
    /// Lipschitz.
    Sinusoidal { amplitude: f64, frequency: f64, phase: f64 },
    /// F(t, x) = rate * x. Lipschitz, unbounded.
    Linear { rate: f64 },
}

/// Dispersion families; `sigma` acts as a d x d matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum SigmaSpec {
    /// sigma = value * Identity.
    Constant { value: f64 },
    /// sigma(x) = (base + amp * min(1, |x|^expo)) * Identity; Hoelder with
    /// exponent `expo` and constant `amp`.
    HolderRadial { base: f64, amp: f64, expo: f64 },
    /// d = 2 only: rotation by `angle_scale * min(1, |x|)`. Lipschitz in
    /// space; useful to probe the measure-continuity check, which this
    /// family is designed to break for atomic spectral measures.
    Rotation { angle_scale: f64 },
    /// sigma(t, x) = (base + slope * t) * Identity, constant in space.
    /// Declared ellipticity covers the time window [0, 10].
    TimeScaled { base: f64, slope: f64 },
}

/// Variant classification of the drift, mirroring the assumption split
/// between bounded and Lipschitz drifts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriftKind {
    Zero,
    Bounded { bound: f64, lipschitz: f64 },
    Lipschitz { lipschitz: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Coefficients {
    pub d: usize,
    pub drift: DriftSpec,
    pub sigma: SigmaSpec,
    /// Ellipticity constant: kappa^{-1} |xi|^2 <= <xi, sigma xi> <= kappa |xi|^2.
    pub kappa: f64,
    /// Hoelder exponent of sigma in space.
    pub eta: f64,
    pub holder_constant: f64,
}

impl Coefficients {
    pub fn new(d: usize, drift: DriftSpec, sigma: SigmaSpec) -> Result<Self> {
        let (kappa, eta, holder_constant) = match &sigma {
            SigmaSpec::Constant { value } => {
                if *value <= 0.0 {
                    return Err(Error::Config("constant sigma must be positive".into()));
                }
                (value.max(1.0 / value).max(1.0 + 1e-12), 1.0, 0.0)
            }
            SigmaSpec::HolderRadial { base, amp, expo } => {
                if *base <= 0.0 || *amp < 0.0 || !(0.0..=1.0).contains(expo) || *expo == 0.0 {
                    return Err(Error::Config(
                        "HolderRadial requires base > 0, amp >= 0, expo in (0, 1]".into(),
                    ));
                }
                let hi = base + amp;
                ((1.0 / base).max(hi).max(1.0 + 1e-12), *expo, *amp)
            }
            SigmaSpec::Rotation { angle_scale } => {
                if d != 2 {
                    return Err(Error::Config("Rotation sigma is d = 2 only".into()));
                }
                if angle_scale.abs() >= std::f64::consts::FRAC_PI_2 {
                    return Err(Error::Config(
                        "Rotation angle must stay below pi/2 for ellipticity".into(),
                    ));
                }
                let cosm = angle_scale.abs().cos();
                ((1.0 / cosm).max(1.0 + 1e-12), 1.0, angle_scale.abs())
            }
            SigmaSpec::TimeScaled { base, slope } => {
                let lo = (base + slope * 0.0).min(base + slope * 10.0);
                let hi = (base + slope * 0.0).max(base + slope * 10.0);
                if lo <= 0.0 {
                    return Err(Error::Config(
                        "TimeScaled sigma must stay positive on [0, 10]".into(),
                    ));
                }
                ((1.0 / lo).max(hi).max(1.0 + 1e-12), 1.0, 0.0)
            }
        };
        Ok(Coefficients { d, drift, sigma, kappa, eta, holder_constant })
    }

    pub fn drift_kind(&self) -> DriftKind {
        match &self.drift {
            DriftSpec::Zero => DriftKind::Zero,
            DriftSpec::Sinusoidal { amplitude, frequency, .. } => DriftKind::Bounded {
                bound: amplitude.abs() * (self.d as f64).sqrt(),
                lipschitz: (amplitude * frequency).abs(),
            },
            DriftSpec::Linear { rate } => DriftKind::Lipschitz { lipschitz: rate.abs() },
        }
    }

    pub fn drift_is_zero(&self) -> bool {
        matches!(self.drift, DriftSpec::Zero)
    }

    /// Whether sigma depends on the spatial argument at all.
    pub fn sigma_is_space_constant(&self) -> bool {
        matches!(
            self.sigma,
            SigmaSpec::Constant { .. } | SigmaSpec::TimeScaled { .. }
        )
    }

    #[inline]
    pub fn drift_at(&self, _t: f64, x: &VecD) -> VecD {
        match &self.drift {
            DriftSpec::Zero => VecD::zeros(self.d),
            DriftSpec::Sinusoidal { amplitude, frequency, phase } => {
                let mut out = VecD::zeros(self.d);
                for i in 0..self.d {
                    out[i] = amplitude * (frequency * x[i] + phase).sin();
                }
                out
            }
            DriftSpec::Linear { rate } => x.scale(*rate),
        }
    }

    #[inline]
    pub fn sigma_at(&self, t: f64, x: &VecD) -> MatD {
        match &self.sigma {
            SigmaSpec::Constant { value } => MatD::scalar(self.d, *value),
            SigmaSpec::HolderRadial { base, amp, expo } => {
                let r = x.norm();
                MatD::scalar(self.d, base + amp * r.powf(*expo).min(1.0))
            }
            SigmaSpec::Rotation { angle_scale } => {
                let phi = angle_scale * x.norm().min(1.0);
                let (s, c) = phi.sin_cos();
                let mut m = MatD::zeros(2);
                m.set(0, 0, c);
                m.set(0, 1, -s);
                m.set(1, 0, s);
                m.set(1, 1, c);
                m
            }
            SigmaSpec::TimeScaled { base, slope } => MatD::scalar(self.d, base + slope * t),
        }
    }

    pub fn sigma_sup_norm(&self) -> f64 {
        match &self.sigma {
            SigmaSpec::Constant { value } => *value,
            SigmaSpec::HolderRadial { base, amp, .. } => base + amp,
            SigmaSpec::Rotation { .. } => 1.0,
            SigmaSpec::TimeScaled { base, slope } => (base + slope * 10.0).max(*base),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowDirection {
    Forward,
    Backward,
}

/// Discrete trajectory of the drift ODE through an anchor point, stored
/// with the drift values at the nodes so that intermediate times can be
/// recovered by cubic Hermite interpolation.
#[derive(Clone, Debug)]
pub struct FlowPath {
    pub times: Vec<f64>,
    pub states: Vec<VecD>,
    derivs: Vec<VecD>,
    pub direction: FlowDirection,
    pub anchor_time: f64,
    pub anchor_point: VecD,
}

/// Integrates theta' = F(t, theta) from `(anchor_time, anchor_point)` to
/// `target_time` with the classical 4th-order one-step method on a
/// uniform mesh. `target_time < anchor_time` produces the pull-back path.
pub fn flow(
    coeffs: &Coefficients,
    anchor_point: &VecD,
    anchor_time: f64,
    target_time: f64,
    steps: usize,
) -> Result<FlowPath> {
    assert!(steps >= 1, "steps must be >= 1");
    let n = steps;
    let dt = (target_time - anchor_time) / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut y = *anchor_point;
    times.push(anchor_time);
    states.push(y);
    for k in 0..n {
        let t0 = anchor_time + k as f64 * dt;
        let k1 = coeffs.drift_at(t0, &y);
        let k2 = coeffs.drift_at(t0 + 0.5 * dt, &y.add_scaled(0.5 * dt, &k1));
        let k3 = coeffs.drift_at(t0 + 0.5 * dt, &y.add_scaled(0.5 * dt, &k2));
        let k4 = coeffs.drift_at(t0 + dt, &y.add_scaled(dt, &k3));
        let mut incr = k1;
        incr = incr.add_scaled(2.0, &k2);
        incr = incr.add_scaled(2.0, &k3);
        incr = incr.add(&k4);
        y = y.add_scaled(dt / 6.0, &incr);
        if !y.is_finite() {
            return Err(Error::Integration { time: t0 + dt });
        }
        times.push(anchor_time + (k + 1) as f64 * dt);
        states.push(y);
    }
    let direction = if target_time >= anchor_time {
        FlowDirection::Forward
    } else {
        FlowDirection::Backward
    };
    if direction == FlowDirection::Backward {
        times.reverse();
        states.reverse();
    }
    let derivs = times
        .iter()
        .zip(&states)
        .map(|(t, s)| coeffs.drift_at(*t, s))
        .collect();
    Ok(FlowPath {
        times,
        states,
        derivs,
        direction,
        anchor_time,
        anchor_point: *anchor_point,
    })
}

impl FlowPath {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let eps = 1e-12 * (1.0 + self.end_time().abs());
        self.start_time() - eps <= a && b <= self.end_time() + eps
    }

    /// Terminal state of the integration (the state at the non-anchor end).
    pub fn target_state(&self) -> VecD {
        match self.direction {
            FlowDirection::Forward => *self.states.last().unwrap(),
            FlowDirection::Backward => self.states[0],
        }
    }

    /// Cubic Hermite evaluation of theta at time `u` inside the path span.
    pub fn eval(&self, u: f64) -> VecD {
        let n = self.times.len();
        if u <= self.times[0] {
            return self.states[0];
        }
        if u >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let i = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&u).unwrap())
        {
            Ok(i) => return self.states[i],
            Err(i) => i - 1,
        };
        let h = self.times[i + 1] - self.times[i];
        let s = (u - self.times[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = self.states[i].scale(h00);
        out = out.add_scaled(h10 * h, &self.derivs[i]);
        out = out.add_scaled(h01, &self.states[i + 1]);
        out = out.add_scaled(h11 * h, &self.derivs[i + 1]);
        out
    }

    /// `int_{u1}^{u2} F(w, theta_w) dw = theta(u2) - theta(u1)`, exact for
    /// the integrated trajectory because theta' = F(t, theta).
    pub fn drift_shift(&self, u1: f64, u2: f64) -> VecD {
        self.eval(u2).sub(&self.eval(u1))
    }
}

/// Default step count per unit of time for flow integrations.
pub const DEFAULT_FLOW_STEPS_PER_UNIT: f64 = 64.0;

pub fn steps_for_span(span: f64) -> usize {
    ((span.abs() * DEFAULT_FLOW_STEPS_PER_UNIT).ceil() as usize).max(8)
}

/// Both transported distances between x at time t and y at time T:
/// forward `|y - theta_{T,t}(x)|` and backward `|theta_{t,T}(y) - x|`.
pub fn transported_distance(
    coeffs: &Coefficients,
    t: f64,
    big_t: f64,
    x: &VecD,
    y: &VecD,
    steps: usize,
) -> Result<(f64, f64)> {
    let fwd = flow(coeffs, x, t, big_t, steps)?;
    let bwd = flow(coeffs, y, big_t, t, steps)?;
    Ok((y.dist(&fwd.target_state()), bwd.target_state().dist(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs_1d(drift: DriftSpec) -> Coefficients {
        Coefficients::new(1, drift, SigmaSpec::Constant { value: 1.0 }).unwrap()
    }

    #[test]
    fn zero_drift_is_identity() {
        let c = coeffs_1d(DriftSpec::Zero);
        let x = VecD::scalar(1.7);
        let p = flow(&c, &x, 0.0, 2.0, 10).unwrap();
        for s in &p.states {
            assert_eq!(*s, x);
        }
    }

    #[test]
    fn linear_drift_matches_exponential() {
        let c = coeffs_1d(DriftSpec::Linear { rate: 1.0 });
        let p = flow(&c, &VecD::scalar(1.0), 0.0, 1.0, 100).unwrap();
        let got = p.target_state()[0];
        assert!(
            (got - std::f64::consts::E).abs() < 1e-8,
            "got {got}, want e"
        );
    }

    #[test]
    fn round_trip_inverts() {
        let c = coeffs_1d(DriftSpec::Linear { rate: 1.0 });
        let fwd = flow(&c, &VecD::scalar(1.0), 0.0, 1.0, 100).unwrap();
        let back = flow(&c, &fwd.target_state(), 1.0, 0.0, 100).unwrap();
        assert!((back.target_state()[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn semigroup_composition() {
        let c = coeffs_1d(DriftSpec::Sinusoidal {
            amplitude: 0.7,
            frequency: 1.3,
            phase: 0.2,
        });
        let x = VecD::scalar(0.4);
        for &u in &[0.25, 0.5, 0.75] {
            let first = flow(&c, &x, 0.0, u, 64).unwrap();
            let second = flow(&c, &first.target_state(), u, 1.0, 64).unwrap();
            let direct = flow(&c, &x, 0.0, 1.0, 128).unwrap();
            assert!(
                (second.target_state()[0] - direct.target_state()[0]).abs() < 1e-7,
                "u = {u}"
            );
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let c = coeffs_1d(DriftSpec::Sinusoidal {
            amplitude: 1.0,
            frequency: 2.0,
            phase: 0.0,
        });
        let x = VecD::scalar(0.3);
        let reference = flow(&c, &x, 0.0, 1.0, 1024).unwrap().target_state()[0];
        let coarse = (flow(&c, &x, 0.0, 1.0, 16).unwrap().target_state()[0] - reference).abs();
        let fine = (flow(&c, &x, 0.0, 1.0, 32).unwrap().target_state()[0] - reference).abs();
        assert!(coarse / fine >= 12.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn transported_distances_linear_drift() {
        let c = coeffs_1d(DriftSpec::Linear { rate: 1.0 });
        let (fwd, bwd) = transported_distance(
            &c,
            0.0,
            1.0,
            &VecD::scalar(0.0),
            &VecD::scalar(1.0),
            100,
        )
        .unwrap();
        assert!((fwd - 1.0).abs() < 1e-9);
        assert!((bwd - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn transported_distances_zero_drift() {
        let c = coeffs_1d(DriftSpec::Zero);
        let (fwd, bwd) = transported_distance(
            &c,
            0.0,
            1.0,
            &VecD::scalar(0.5),
            &VecD::scalar(-1.5),
            8,
        )
        .unwrap();
        assert_eq!(fwd, 2.0);
        assert_eq!(bwd, 2.0);
    }

    #[test]
    fn gronwall_ratio_window() {
        let c = coeffs_1d(DriftSpec::Linear { rate: 0.8 });
        let span = 1.0;
        let lip = 0.8;
        let (fwd, bwd) = transported_distance(
            &c,
            0.0,
            span,
            &VecD::scalar(0.3),
            &VecD::scalar(2.0),
            128,
        )
        .unwrap();
        let ratio = fwd / bwd;
        assert!(ratio >= (-lip * span).exp() - 1e-9);
        assert!(ratio <= (lip * span).exp() + 1e-9);
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let c = coeffs_1d(DriftSpec::Linear { rate: 1.0 });
        let p = flow(&c, &VecD::scalar(1.0), 0.0, 1.0, 128).unwrap();
        for &u in &[0.111, 0.333, 0.777] {
            assert!((p.eval(u)[0] - u.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_blowup_reports_first_bad_node() {
        // exponential growth at rate 900 overflows f64 within the horizon
        let c = coeffs_1d(DriftSpec::Linear { rate: 900.0 });
        let err = flow(&c, &VecD::scalar(1.0), 0.0, 10.0, 50).unwrap_err();
        match err {
            Error::Integration { time } => assert!(time > 0.0),
            other => panic!("unexpected error {other:?}"),
        }
    }
}

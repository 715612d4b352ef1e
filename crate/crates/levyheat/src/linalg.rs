//! Small fixed-capacity vectors and matrices for dimensions 1..=3.
//!
//! Everything in this crate lives in spatial dimension d <= 3; a stack
//! vector with an explicit runtime dimension avoids allocation in the
//! quadrature and Monte Carlo hot loops.

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VecD {
    d: usize,
    a: [f64; MAX_DIM],
}

impl VecD {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension must be 1..=3");
        VecD { d, a: [0.0; MAX_DIM] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut out = VecD::zeros(v.len());
        out.a[..v.len()].copy_from_slice(v);
        out
    }

    pub fn scalar(x: f64) -> Self {
        VecD { d: 1, a: [x, 0.0, 0.0] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.a[..self.d]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    #[inline]
    pub fn dot(&self, other: &VecD) -> f64 {
        debug_assert_eq!(self.d, other.d);
        let mut s = 0.0;
        for i in 0..self.d {
            s += self.a[i] * other.a[i];
        }
        s
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn add(&self, other: &VecD) -> VecD {
        let mut out = *self;
        for i in 0..self.d {
            out.a[i] += other.a[i];
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &VecD) -> VecD {
        let mut out = *self;
        for i in 0..self.d {
            out.a[i] -= other.a[i];
        }
        out
    }

    #[inline]
    pub fn scale(&self, c: f64) -> VecD {
        let mut out = *self;
        for i in 0..self.d {
            out.a[i] *= c;
        }
        out
    }

    /// `self + c * other`, fused form used by the integrators.
    #[inline]
    pub fn add_scaled(&self, c: f64, other: &VecD) -> VecD {
        let mut out = *self;
        for i in 0..self.d {
            out.a[i] += c * other.a[i];
        }
        out
    }

    #[inline]
    pub fn dist(&self, other: &VecD) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for VecD {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.d);
        &self.a[i]
    }
}

impl std::ops::IndexMut<usize> for VecD {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.d);
        &mut self.a[i]
    }
}

/// Dense d x d matrix, d <= 3. Row-major storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatD {
    d: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl MatD {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d));
        MatD { d, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(d: usize) -> Self {
        let mut out = MatD::zeros(d);
        for i in 0..d {
            out.m[i][i] = 1.0;
        }
        out
    }

    pub fn diag(v: &VecD) -> Self {
        let mut out = MatD::zeros(v.dim());
        for i in 0..v.dim() {
            out.m[i][i] = v[i];
        }
        out
    }

    pub fn scalar(d: usize, c: f64) -> Self {
        let mut out = MatD::zeros(d);
        for i in 0..d {
            out.m[i][i] = c;
        }
        out
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut out = MatD::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.m[i][j] = f(i, j);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    #[inline]
    pub fn matvec(&self, v: &VecD) -> VecD {
        debug_assert_eq!(self.d, v.dim());
        let mut out = VecD::zeros(self.d);
        for i in 0..self.d {
            let mut s = 0.0;
            for j in 0..self.d {
                s += self.m[i][j] * v[j];
            }
            out[i] = s;
        }
        out
    }

    /// `self^T v`; the frozen exponent composes the dispersion transpose
    /// with frequency vectors.
    #[inline]
    pub fn transpose_matvec(&self, v: &VecD) -> VecD {
        debug_assert_eq!(self.d, v.dim());
        let mut out = VecD::zeros(self.d);
        for j in 0..self.d {
            let mut s = 0.0;
            for i in 0..self.d {
                s += self.m[i][j] * v[i];
            }
            out[j] = s;
        }
        out
    }

    /// Quadratic form `<v, M v>`.
    #[inline]
    pub fn quad_form(&self, v: &VecD) -> f64 {
        v.dot(&self.matvec(v))
    }

    /// Eigenvalue range of the symmetric part, used by the ellipticity
    /// validator. Closed form for d = 1, 2; cyclic Jacobi sweep for d = 3.
    pub fn sym_eig_range(&self) -> (f64, f64) {
        let d = self.d;
        let mut s = [[0.0f64; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                s[i][j] = 0.5 * (self.m[i][j] + self.m[j][i]);
            }
        }
        match d {
            1 => (s[0][0], s[0][0]),
            2 => {
                let tr = s[0][0] + s[1][1];
                let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                (tr / 2.0 - disc, tr / 2.0 + disc)
            }
            _ => {
                // Jacobi rotations; a handful of sweeps is plenty at d = 3.
                for _ in 0..12 {
                    for p in 0..2 {
                        for q in (p + 1)..3 {
                            if s[p][q].abs() < 1e-300 {
                                continue;
                            }
                            let theta = 0.5 * (s[q][q] - s[p][p]) / s[p][q];
                            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                            let c = 1.0 / (t * t + 1.0).sqrt();
                            let sn = t * c;
                            for k in 0..3 {
                                let skp = s[k][p];
                                let skq = s[k][q];
                                s[k][p] = c * skp - sn * skq;
                                s[k][q] = sn * skp + c * skq;
                            }
                            for k in 0..3 {
                                let spk = s[p][k];
                                let sqk = s[q][k];
                                s[p][k] = c * spk - sn * sqk;
                                s[q][k] = sn * spk + c * sqk;
                            }
                        }
                    }
                }
                let evs = [s[0][0], s[1][1], s[2][2]];
                (
                    evs.iter().cloned().fold(f64::INFINITY, f64::min),
                    evs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            }
        }
    }

    /// Inverse via cofactors; panics on exactly singular input, which the
    /// ellipticity validation rules out beforehand.
    pub fn inverse(&self) -> MatD {
        let d = self.d;
        match d {
            1 => {
                let mut out = MatD::zeros(1);
                out.m[0][0] = 1.0 / self.m[0][0];
                out
            }
            2 => {
                let det = self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0];
                let mut out = MatD::zeros(2);
                out.m[0][0] = self.m[1][1] / det;
                out.m[0][1] = -self.m[0][1] / det;
                out.m[1][0] = -self.m[1][0] / det;
                out.m[1][1] = self.m[0][0] / det;
                out
            }
            _ => {
                let m = &self.m;
                let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                let mut out = MatD::zeros(3);
                out.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
                out.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
                out.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
                out.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
                out.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
                out.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
                out.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
                out.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
                out.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
                out
            }
        }
    }

    /// Cholesky factor L with `L L^T = self` for a symmetric PSD matrix.
    /// Zero (or slightly negative, from roundoff) pivots are flattened
    /// to zero columns so rank-deficient jump covariances still work.
    pub fn cholesky_psd(&self) -> MatD {
        let d = self.d;
        let mut l = MatD::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.m[i][j];
                for k in 0..j {
                    s -= l.m[i][k] * l.m[j][k];
                }
                if i == j {
                    l.m[i][j] = if s > 1e-14 * self.m[i][i].abs().max(1e-300) {
                        s.sqrt()
                    } else {
                        0.0
                    };
                } else if l.m[j][j] > 0.0 {
                    l.m[i][j] = s / l.m[j][j];
                } else {
                    l.m[i][j] = 0.0;
                }
            }
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_ops() {
        let a = VecD::from_slice(&[1.0, 2.0]);
        let b = VecD::from_slice(&[3.0, -1.0]);
        assert_eq!(a.dot(&b), 1.0);
        assert_eq!(a.add(&b).as_slice(), &[4.0, 1.0]);
        assert!((a.norm() - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn eig_range_2d() {
        let m = MatD::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 });
        let (lo, hi) = m.sym_eig_range();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_3d() {
        let m = MatD::from_fn(3, |i, j| if i == j { 2.0 } else { 0.3 });
        let inv = m.inverse();
        let prod = MatD::from_fn(3, |i, j| {
            (0..3).map(|k| m.get(i, k) * inv.get(k, j)).sum()
        });
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_3d_matches_known_spectrum() {
        // circulant-ish symmetric matrix with known eigenvalues 1, 4, 4
        let m = MatD::from_fn(3, |i, j| if i == j { 3.0 } else { -1.0 });
        let (lo, hi) = m.sym_eig_range();
        assert!((lo - 1.0).abs() < 1e-9);
        assert!((hi - 4.0).abs() < 1e-9);
    }

    #[test]
    fn cholesky_rank_deficient() {
        // rank-1 covariance along e1
        let mut m = MatD::zeros(2);
        m.set(0, 0, 4.0);
        let l = m.cholesky_psd();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(1, 1), 0.0);
    }
}

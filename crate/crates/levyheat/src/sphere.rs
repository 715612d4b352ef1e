//! Directional quadrature on the unit sphere for d = 1, 2, 3.
//!
//! d = 1 reduces to the two-point set {-1, +1}, d = 2 uses the trapezoid
//! rule on the angle (spectrally accurate for periodic integrands), and
//! d = 3 uses the 26-point Lebedev rule (octahedral symmetry, exact
//! through degree 7). All rules are antipodally symmetric, which the
//! symmetric-measure cancellations downstream rely on.

use crate::linalg::VecD;

/// One directional node with its surface-measure weight.
#[derive(Clone, Copy, Debug)]
pub struct SphereNode {
    pub dir: VecD,
    pub weight: f64,
}

/// Quadrature nodes for the unit sphere `S^{d-1}` whose weights sum to
/// the total surface measure (2 for d = 1 counting measure, 2*pi for
/// d = 2, 4*pi for d = 3).
pub fn sphere_rule(d: usize, resolution: usize) -> Vec<SphereNode> {
    match d {
        1 => vec![
            SphereNode { dir: VecD::scalar(1.0), weight: 1.0 },
            SphereNode { dir: VecD::scalar(-1.0), weight: 1.0 },
        ],
        2 => {
            let n = resolution.max(8).next_multiple_of(2);
            let w = 2.0 * std::f64::consts::PI / n as f64;
            (0..n)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                    SphereNode {
                        dir: VecD::from_slice(&[phi.cos(), phi.sin()]),
                        weight: w,
                    }
                })
                .collect()
        }
        3 => lebedev26(),
        _ => panic!("unsupported dimension {d}"),
    }
}

/// The 26-point Lebedev rule, weights scaled to total mass 4*pi.
fn lebedev26() -> Vec<SphereNode> {
    let mut nodes = Vec::with_capacity(26);
    let four_pi = 4.0 * std::f64::consts::PI;
    let a1 = four_pi / 21.0;
    let a2 = four_pi * 4.0 / 105.0;
    let a3 = four_pi * 9.0 / 280.0;
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut v = [0.0; 3];
            v[axis] = sign;
            nodes.push(SphereNode { dir: VecD::from_slice(&v), weight: a1 });
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        for si in [1.0, -1.0] {
            for sj in [1.0, -1.0] {
                let mut v = [0.0; 3];
                v[i] = si * r;
                v[j] = sj * r;
                nodes.push(SphereNode { dir: VecD::from_slice(&v), weight: a2 });
            }
        }
    }
    let c = 1.0 / 3f64.sqrt();
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                nodes.push(SphereNode {
                    dir: VecD::from_slice(&[sx * c, sy * c, sz * c]),
                    weight: a3,
                });
            }
        }
    }
    nodes
}

/// Pairs antipodal nodes, returning one representative per +/- pair with
/// the per-node weight. Panics if a node has no antipode within 1e-9,
/// which cannot happen for the rules constructed here.
pub fn antipodal_pairs(nodes: &[SphereNode]) -> Vec<SphereNode> {
    let mut used = vec![false; nodes.len()];
    let mut reps = Vec::with_capacity(nodes.len() / 2);
    for i in 0..nodes.len() {
        if used[i] {
            continue;
        }
        let neg = nodes[i].dir.scale(-1.0);
        let j = (0..nodes.len())
            .find(|&j| !used[j] && j != i && nodes[j].dir.sub(&neg).norm() < 1e-9)
            .expect("antipodally symmetric rule");
        used[i] = true;
        used[j] = true;
        reps.push(SphereNode {
            dir: nodes[i].dir,
            weight: 0.5 * (nodes[i].weight + nodes[j].weight),
        });
    }
    reps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_masses() {
        let total = |d: usize| -> f64 { sphere_rule(d, 32).iter().map(|n| n.weight).sum() };
        assert!((total(1) - 2.0).abs() < 1e-14);
        assert!((total(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((total(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn lebedev_degree_exactness() {
        // int_{S^2} x^2 dsigma = 4*pi/3; int x^4 = 4*pi/5; int x^2 y^2 = 4*pi/15
        let rule = sphere_rule(3, 0);
        let quad = |f: &dyn Fn(&VecD) -> f64| -> f64 {
            rule.iter().map(|n| n.weight * f(&n.dir)).sum()
        };
        let pi = std::f64::consts::PI;
        assert!((quad(&|v| v[0] * v[0]) - 4.0 * pi / 3.0).abs() < 1e-12);
        assert!((quad(&|v| v[0].powi(4)) - 4.0 * pi / 5.0).abs() < 1e-12);
        assert!((quad(&|v| v[0] * v[0] * v[1] * v[1]) - 4.0 * pi / 15.0).abs() < 1e-12);
    }

    #[test]
    fn pairing_halves_node_count() {
        for d in 1..=3 {
            let rule = sphere_rule(d, 16);
            let pairs = antipodal_pairs(&rule);
            assert_eq!(pairs.len() * 2, rule.len());
            let total: f64 = pairs.iter().map(|p| 2.0 * p.weight).sum();
            let want: f64 = rule.iter().map(|n| n.weight).sum();
            assert!((total - want).abs() < 1e-12);
        }
    }
}

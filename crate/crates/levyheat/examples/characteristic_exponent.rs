//! Characteristic exponents of the shipped driver families: closed forms,
//! the radial-quadrature route, and the measured non-degeneracy constant.
//!
//! ```bash
//! cargo run --release -p levyheat --example characteristic_exponent
//! ```

use levyheat::levy::{
    isotropic_stable, isotropic_stable_quadrature_only, relativistic_stable, symmetric_1d,
    PreparedLevy, Tempering,
};
use levyheat::linalg::VecD;

fn main() -> levyheat::Result<()> {
    println!("== isotropic Cauchy (closed form vs quadrature) ==");
    let exact = PreparedLevy::new(&isotropic_stable(1, 1.0, 1.0))?;
    let quad = PreparedLevy::new(&isotropic_stable_quadrature_only(1, 1.0, 1.0))?;
    for &z in &[0.5, 1.0, 4.0, 20.0] {
        let zeta = VecD::scalar(z);
        let a = exact.exponent(&zeta);
        let b = quad.exponent_quadrature(&zeta, 1, 1e-9)?;
        println!("  zeta = {z:5.1}: closed {a:+.9}, quadrature {b:+.9}");
    }

    println!("== relativistic stable, alpha = 1 ==");
    let rel = PreparedLevy::new(&relativistic_stable(1, 1.0))?;
    for &z in &[3f64.sqrt(), 5.0] {
        println!("  phi({z:.4}) = {:+.9}", rel.exponent(&VecD::scalar(z)));
    }
    println!("  K on (1, 100]: {:.6}", rel.measured_nondegeneracy(100.0));

    println!("== polynomial tempering flattens the exponent ==");
    let tempered = PreparedLevy::new(&symmetric_1d(1.2, 0.5, Tempering::polynomial(4.0)))?;
    let plain = PreparedLevy::new(&symmetric_1d(1.2, 0.5, Tempering::none()))?;
    for &z in &[0.25, 1.0, 4.0, 16.0] {
        let zeta = VecD::scalar(z);
        println!(
            "  zeta = {z:5.2}: tempered {:+.6}, untempered {:+.6}",
            tempered.exponent(&zeta),
            plain.exponent(&zeta)
        );
    }
    Ok(())
}

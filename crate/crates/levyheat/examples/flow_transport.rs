//! The deterministic drift flow and the transported distances consumed by
//! the bound profiles: forward `|y - theta_{T,t}(x)|` and backward
//! `|theta_{t,T}(y) - x|`.
//!
//! ```bash
//! cargo run --release -p levyheat --example flow_transport
//! ```

use levyheat::flow::{flow, transported_distance, Coefficients, DriftSpec, SigmaSpec};
use levyheat::linalg::VecD;

fn main() -> levyheat::Result<()> {
    let linear = Coefficients::new(
        1,
        DriftSpec::Linear { rate: 1.0 },
        SigmaSpec::Constant { value: 1.0 },
    )?;
    let path = flow(&linear, &VecD::scalar(1.0), 0.0, 1.0, 128)?;
    println!(
        "linear drift: theta_{{1,0}}(1) = {:.9} (exact e = {:.9})",
        path.target_state()[0],
        std::f64::consts::E
    );
    let (fwd, bwd) = transported_distance(
        &linear,
        0.0,
        1.0,
        &VecD::scalar(0.0),
        &VecD::scalar(1.0),
        128,
    )?;
    println!("distances between (t,x)=(0,0) and (T,y)=(1,1): forward {fwd:.9}, backward {bwd:.9}");

    let wiggle = Coefficients::new(
        1,
        DriftSpec::Sinusoidal { amplitude: 0.5, frequency: 2.0, phase: 0.3 },
        SigmaSpec::Constant { value: 1.0 },
    )?;
    // semigroup composition through an intermediate time
    let x = VecD::scalar(0.4);
    let first = flow(&wiggle, &x, 0.0, 0.6, 64)?;
    let second = flow(&wiggle, &first.target_state(), 0.6, 1.0, 64)?;
    let direct = flow(&wiggle, &x, 0.0, 1.0, 128)?;
    println!(
        "semigroup check: composed {:.12} vs direct {:.12}",
        second.target_state()[0],
        direct.target_state()[0]
    );
    Ok(())
}

//! Wigner d and D functions: values, θ-derivatives and the unitarity of D^l.

use lkspin::spinfield::EulerPoint;
use lkspin::wigner::{wigner_D, wigner_d, wigner_d_theta_derivs, WignerIndex};
use nalgebra::Complex;

fn main() -> lkspin::Result<()> {
    let theta = 0.9;
    println!("d^2_{{m,1}}({theta}) and its first two θ-derivatives");
    for m in -2..=2 {
        let idx = WignerIndex::new(2, m, 1)?;
        println!(
            "  m = {m:+}: {:+.10}  {:+.10}  {:+.10}",
            wigner_d(idx, theta)?,
            wigner_d_theta_derivs(idx, theta, 1)?,
            wigner_d_theta_derivs(idx, theta, 2)?
        );
    }

    let p = EulerPoint::new(0.4, 1.2, -2.0)?;
    let l = 3u32;
    let n = 2 * l as i32 + 1;
    let mut worst: f64 = 0.0;
    for a in -(l as i32)..=l as i32 {
        for b in -(l as i32)..=l as i32 {
            let mut dot = Complex::new(0.0, 0.0);
            for m in -(l as i32)..=l as i32 {
                dot += wigner_D(WignerIndex::new(l, m, a)?, &p)?.conj() * wigner_D(WignerIndex::new(l, m, b)?, &p)?;
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).norm());
        }
    }
    println!("max |(D^3)† D^3 − I| over {n}x{n} entries: {worst:.2e}");
    Ok(())
}

//! Statistical checks of the sampler: gradient second moments against the
//! metric, two-point covariances against the closed form, and the spin identity.

use lkspin::mc::{validate_covariance, validate_metric};
use lkspin::spinfield::{EulerPoint, SpectrumSpec};

fn main() -> lkspin::Result<()> {
    let spec = SpectrumSpec::band_limited(1, 1, 4, 2.0)?;
    let p = EulerPoint::new(0.3, 1.1, -0.4)?;
    let q = EulerPoint::new(-1.0, 0.6, 2.0)?;
    let r = EulerPoint::new(2.2, 2.5, 0.1)?;

    let met = validate_metric(&spec, &[p, q], 4000, 1)?;
    println!("metric: max |z| = {:.2} over {} trials", met.max_abs_z, met.trials);
    let c = &met.points[0];
    for i in 0..3 {
        println!("  {:?}  vs  {:?}", c.empirical[i].map(|v| (v * 1e3).round() / 1e3), c.theory[i].map(|v| (v * 1e3).round() / 1e3));
    }

    let cov = validate_covariance(&spec, &[(p, p), (p, q), (q, r)], 4000, 2)?;
    for c in &cov.pairs {
        println!("cov: empirical {:+.4} ± {:.4}, theory {:+.4}, z {:+.2}", c.empirical, c.stderr, c.theory, c.z);
    }
    println!("spin identity residual {:.2e}", cov.spin_residual);
    Ok(())
}

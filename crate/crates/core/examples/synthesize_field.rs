//! Draws a spin-2 realization, checks the spin identity and prints a slice.

use lkspin::spinfield::{EulerPoint, FieldRealization, SpectrumSpec};
use nalgebra::{Complex, Rotation3, Vector3};

fn main() -> lkspin::Result<()> {
    let spec = SpectrumSpec::band_limited(2, 2, 8, 2.0)?;
    println!("spectrum {:?}, xi^2 = {:.6}", spec.coeffs, spec.xi_squared());
    let field = FieldRealization::sample(&spec, 42)?;

    let p = EulerPoint::new(0.7, 1.3, -0.2)?;
    let alpha = 0.9;
    let moved = EulerPoint::from_rotation(&(p.rotation() * Rotation3::from_axis_angle(&Vector3::z_axis(), alpha)))?;
    let residual = field.evaluate_complex(&moved) - field.evaluate_complex(&p) * Complex::from_polar(1.0, -2.0 * alpha);
    println!("|X(p R_z(a)) - X(p) e^(-2ia)| = {:.2e}", residual.norm());

    println!("f(phi, pi/2, 0):");
    for k in 0..8 {
        let phi = -3.0 + 0.75 * k as f64;
        let q = EulerPoint::new(phi, std::f64::consts::FRAC_PI_2, 0.0)?;
        println!("  phi = {phi:+.2}: {:+.6}  |grad| = {:.4}", field.evaluate(&q), field.chart_gradient(&q).norm());
    }
    println!("record: {}", serde_json::to_string(&field.record()).unwrap());
    Ok(())
}

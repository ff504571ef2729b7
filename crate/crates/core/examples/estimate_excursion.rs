//! Estimates L0..L3 of excursion sets, first for the fixture cos θ with known
//! answers, then for one random realization.

use lkspin::lkestim::{build_atlas, estimate_all, AxisField, EstimatorOptions};
use lkspin::spinfield::{FieldRealization, SpectrumSpec};
use std::f64::consts::PI;

fn main() -> lkspin::Result<()> {
    let opts = EstimatorOptions { morse: true, crossings: true, ..Default::default() };
    let atlas = build_atlas(&AxisField::cos_theta(), [48; 3], true)?;
    println!("fixture cos(theta), 48^3");
    for r in estimate_all(&atlas, &[-0.5, 0.0, 0.5], opts)? {
        let exact_l3 = 4.0 * PI * PI * (1.0 - r.u);
        let exact_l2 = 2.0 * PI * PI * (1.0 - r.u * r.u).sqrt();
        println!(
            "  u = {:+.1}: L3 {:.5} ({:.5})  L2 {:.5} ({:.5})  L1 {:.5}  chi_gb {:+.4}",
            r.u, r.l3, exact_l3, r.l2, exact_l2, r.l1, r.l0_gb
        );
    }

    let spec = SpectrumSpec::band_limited(2, 2, 5, 2.0)?;
    let field = FieldRealization::sample(&spec, 3)?;
    let atlas = build_atlas(&field, [48; 3], true)?;
    println!("random realization, l in 2..5, 48^3");
    for r in estimate_all(&atlas, &[-1.5, -0.5, 0.5, 1.5, 2.0], opts)? {
        println!("  {}", serde_json::to_string(&r).unwrap());
    }
    Ok(())
}

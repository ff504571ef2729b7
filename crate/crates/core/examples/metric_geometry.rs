//! Geometry of the left-invariant metric g_(ξ,s) in Euler coordinates.

use lkspin::so3geom::{CoordinatePlane, LeftInvariantMetric};

fn main() -> lkspin::Result<()> {
    for (xi, s) in [(1.0, 1.0), (2.0, 1.0), (3.0, 2.0)] {
        let m = LeftInvariantMetric::new(xi, s)?;
        let theta = 1.1;
        println!("xi = {xi}, s = {s}");
        let g = m.gram(theta)?;
        println!("  Gram at theta = {theta}:");
        for i in 0..3 {
            println!("    [{:9.6} {:9.6} {:9.6}]", g[(i, 0)], g[(i, 1)], g[(i, 2)]);
        }
        println!(
            "  scal = {:.12} (by contraction {:.12})",
            m.scalar_curvature(),
            m.scalar_curvature_by_contraction(theta)?
        );
        for plane in [CoordinatePlane::PhiTheta, CoordinatePlane::PhiPsi, CoordinatePlane::ThetaPsi] {
            println!("  sectional {plane:?}: {:.8}", m.sectional(plane, theta)?);
        }
        let lk = m.lk_so3();
        println!("  L_j(SO(3)) = [{:.6}, {:.6}, {:.6}, {:.6}]", lk.l0, lk.l1, lk.l2, lk.l3);
    }
    Ok(())
}

//! Closed-form expected Lipschitz–Killing curvatures of excursion sets, the
//! density-form constants, the SU(2) doubling and the large-ξ asymptotics.

use lkspin::expectations::{asymptotic_lk, d_constants, expected_lk_spin, to_2g, Manifold};

fn main() -> lkspin::Result<()> {
    let (xi, s) = (2.0, 1.0);
    println!("E L_j(u) on SO(3), xi = {xi}, s = {s}");
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "u", "L0", "L1", "L2", "L3");
    for k in -4..=4 {
        let u = 0.5 * k as f64;
        let v = expected_lk_spin(xi, s, u, Manifold::SO3)?.values.as_array();
        println!("{u:>6.2} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", v[0], v[1], v[2], v[3]);
    }

    let d = d_constants(xi, s)?;
    println!("d0 = {:.8}, d1 = {:.8} (1/sqrt(8pi^3) form: {:.8}), d2 = {:.8}, d3 = {:.8}", d.d0, d.d1, d.d1_pipeline, d.d2, d.d3);

    let so3 = expected_lk_spin(xi, s, 1.0, Manifold::SO3)?.values;
    let su2 = expected_lk_spin(xi, s, 1.0, Manifold::SU2)?.values;
    println!("SU(2)/SO(3) at u = 1: {:?}", [0, 1, 2, 3].map(|j| su2.get(j) / so3.get(j)));

    let (xi, s) = (50.0, 2.0);
    let mu = xi * xi * s / 5.0;
    for u in [0.0, 1.0] {
        let exact = to_2g(&expected_lk_spin(xi, s, u, Manifold::SO3)?.values);
        let asy = asymptotic_lk(mu, s, u)?.values;
        let scale = 10.0 * mu * (-0.5 * u * u).exp();
        println!(
            "xi = 50, u = {u}: |L0 exact - leading| / (10 mu e^(-u^2/2)) = {:.2e}, L2 exact/leading = {:.5}",
            (exact.l0 - asy.l0).abs() / scale,
            exact.l2 / asy.l2
        );
    }
    Ok(())
}

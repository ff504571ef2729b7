//! E1 and E2 by spherical quadrature against their closed forms on both branches.

use lkspin::expectations::{e1, e1_closed, e2, e2_closed, Eigentriple};

fn main() -> lkspin::Result<()> {
    println!("{:>6} {:>16} {:>16} {:>10} {:>10}", "xi/s", "E1", "E2", "dE1", "dE2");
    let s = 1.0;
    for ratio in [0.25, 0.5, 0.9, 1.1, 2.0, 5.0] {
        let xi: f64 = ratio * s;
        let t = Eigentriple::spin(xi, s)?;
        let (q1, q2) = (e1(&t)?, e2(&t)?);
        let (c1, c2) = (e1_closed(xi, s)?, e2_closed(xi, s)?);
        println!("{ratio:>6} {c1:>16.12} {c2:>16.12} {:>10.1e} {:>10.1e}", (q1 - c1).abs(), (q2 - c2).abs());
    }
    let t = Eigentriple::new(1.0, 2.0, 3.0)?;
    println!("general triple (1, 2, 3): E1 = {:.10}, E2 = {:.10}", e1(&t)?, e2(&t)?);
    Ok(())
}

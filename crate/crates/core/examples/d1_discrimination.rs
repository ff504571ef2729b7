//! Fits the odd-in-u part of the empirical E L1 at xi = 10, s = 2 and compares
//! it with both candidate d1 prefactors.

use lkspin::mc::discriminate_d1;
use lkspin::spinfield::SpectrumSpec;

fn main() -> lkspin::Result<()> {
    let spec = SpectrumSpec::two_level(2, 10.0)?;
    println!("two-level spectrum {:?}, xi = {}", spec.coeffs, spec.xi());
    let rep = discriminate_d1(&spec, &[1.0], 3, 96, 1, 7)?;
    println!("fitted amplitude {:.2} ± {:.2} from {:?}", rep.amplitude, rep.stderr, rep.per_trial);
    for c in &rep.candidates {
        println!("  {}: 8pi^2 d1 = {:.2}, z = {:+.2}, within 3 sigma: {}", c.label, c.amplitude, c.z, c.within_3_sigma);
    }
    println!("power {:.1}, verdict {:?}", rep.power, rep.verdict);
    Ok(())
}

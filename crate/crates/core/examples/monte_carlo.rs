//! A small Monte Carlo experiment comparing mean estimates with the closed forms.

use lkspin::mc::{run_experiment, ExperimentConfig, L0Method, L2Method};
use lkspin::spinfield::SpectrumSpec;

fn main() -> lkspin::Result<()> {
    let cfg = ExperimentConfig {
        spec: SpectrumSpec::band_limited(2, 2, 5, 2.0)?,
        resolution: 32,
        thresholds: vec![-1.0, 0.0, 1.0],
        trials: 16,
        seed: 1,
        l0_method: L0Method::Morse,
        l2_method: L2Method::Crossings,
    };
    let res = run_experiment(&cfg)?;
    print!("{}", res.to_csv());
    println!("config hash {}", res.provenance.config_hash);
    println!("wall time {:.1} s on {} threads", res.provenance.wall_time_s, res.provenance.threads);
    for e in &res.exclusions {
        println!("u = {}: {} of {} trials excluded", e.u, e.excluded, e.trials);
    }
    res.ensure_acceptable()
}

//! Acceptance suite: one PASS/FAIL line per criterion. Results of the Monte
//! Carlo criteria are written under the cargo target tmpdir before checking.

use lkspin::expectations::{
    asymptotic_lk, d_constants, e1, e1_closed, e2, e2_closed, expected_lk_densities, expected_lk_spin, to_2g, Eigentriple, Manifold,
};
use lkspin::lkestim::{
    atlas_surface_integrals, build_atlas, estimate_l0_gaussbonnet, estimate_l0_morse, estimate_l2, estimate_l3, extract_atlas_surface,
    l1_from_parts, AxisField,
};
use lkspin::mc::{discriminate_d1, run_experiment, validate_covariance, validate_metric, D1Verdict, ExperimentConfig, L0Method, L2Method};
use lkspin::so3geom::{LeftInvariantMetric, PAIRS};
use lkspin::spinfield::{EulerPoint, SpectrumSpec};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn save(name: &str, value: &impl serde::Serialize) {
    std::fs::write(out_dir().join(name), serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn gram_fd(m: &LeftInvariantMetric, t: f64) -> [[[f64; 3]; 3]; 3] {
    let h = 1e-4;
    let g = |d: f64| m.gram(t + d * h).unwrap();
    let dg = (g(-2.0) - g(2.0) + 8.0 * (g(1.0) - g(-1.0))) / (12.0 * h);
    let d = |i: usize, j: usize, k: usize| if k == 1 { dg[(i, j)] } else { 0.0 };
    let gi = m.gram(t).unwrap().try_inverse().unwrap();
    let mut out = [[[0.0; 3]; 3]; 3];
    for (k, plane) in out.iter_mut().enumerate() {
        for (i, row) in plane.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|l| 0.5 * gi[(k, l)] * (d(j, l, i) + d(i, l, j) - d(i, j, l))).sum();
            }
        }
    }
    out
}

/// `R^m_{ijk} = ∂_i Γ^m_{jk} − ∂_j Γ^m_{ik} + Γ^m_{ih} Γ^h_{jk} − Γ^m_{jh} Γ^h_{ik}` from the closed-form Γ.
fn riemann13_fd(m: &LeftInvariantMetric, t: f64) -> [[[[f64; 3]; 3]; 3]; 3] {
    let h = 1e-4;
    let at = |d: f64| m.christoffel(t + d * h).unwrap().0;
    let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
    let g = m.christoffel(t).unwrap().0;
    let d = |i: usize, a: usize, b: usize, c: usize| {
        if i == 1 {
            (m2[a][b][c] - p2[a][b][c] + 8.0 * (p1[a][b][c] - m1[a][b][c])) / (12.0 * h)
        } else {
            0.0
        }
    };
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for mm in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut v = d(i, mm, j, k) - d(j, mm, i, k);
                    for hh in 0..3 {
                        v += g[mm][i][hh] * g[hh][j][k] - g[mm][j][hh] * g[hh][i][k];
                    }
                    out[mm][i][j][k] = v;
                }
            }
        }
    }
    out
}

fn criterion_1() -> Check {
    let standard = LeftInvariantMetric::new(1.0, 1.0).unwrap().scalar_curvature();
    ensure((standard - 1.5).abs() <= 1e-12, format!("scal(1,1) = {standard}"))?;
    let thetas: Vec<f64> = (0..20).map(|i| 0.05 + (PI - 0.1) * i as f64 / 19.0).collect();
    let (mut worst_scal, mut worst_gamma, mut worst_riem): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for xi in [1.0, 2.0, 3.0] {
        for s in [1.0, 2.0] {
            let m = LeftInvariantMetric::new(xi, s).unwrap();
            for &t in &thetas {
                let r04 = m.riemann04(t).unwrap();
                let gi = m.gram_inverse(t).unwrap();
                let full = lkspin::so3geom::expand_pairs(&r04);
                let mut scal = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                scal += gi[(i, l)] * gi[(j, k)] * full[i][j][k][l];
                            }
                        }
                    }
                }
                worst_scal = worst_scal.max((scal - m.scalar_curvature()).abs());

                let gamma = m.christoffel(t).unwrap().0;
                let fd = gram_fd(&m, t);
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            worst_gamma = worst_gamma.max((gamma[k][i][j] - fd[k][i][j]).abs());
                        }
                    }
                }

                let r13 = riemann13_fd(&m, t);
                let g = m.gram(t).unwrap();
                let mut lowered = Matrix3::zeros();
                for (p, &(i, j)) in PAIRS.iter().enumerate() {
                    for (q, &(k, l)) in PAIRS.iter().enumerate() {
                        lowered[(p, q)] = (0..3).map(|mm| r13[mm][i][j][k] * g[(l, mm)]).sum();
                    }
                }
                worst_riem = worst_riem.max((lowered - r04).abs().max());
                let closed13 = m.riemann13(t).unwrap().0;
                for a in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            for k in 0..3 {
                                let omitted = a == 2 && k == 1 && i.min(j) == 0 && i.max(j) == 1;
                                if !omitted {
                                    worst_riem = worst_riem.max((closed13[a][i][j][k] - r13[a][i][j][k]).abs());
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(worst_scal <= 1e-10, format!("scal contraction residual {worst_scal:e}"))?;
    ensure(worst_gamma <= 1e-6, format!("Christoffel residual {worst_gamma:e}"))?;
    ensure(worst_riem <= 1e-6, format!("Riemann residual {worst_riem:e}"))?;
    Ok(format!("scal contraction {worst_scal:.1e}, Christoffel fd {worst_gamma:.1e}, Riemann fd {worst_riem:.1e}"))
}

fn gaussian_mc(a: [f64; 3], samples: usize, seed: u64) -> [(f64, f64); 2] {
    const CHUNKS: usize = 100;
    let per = samples / CHUNKS;
    let sums: Vec<[f64; 4]> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut acc = [0.0; 4];
            for _ in 0..per {
                let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let q: f64 = (0..3).map(|i| a[i] * g[i] * g[i]).sum();
                let v1 = (0..3).map(|i| a[i] * a[i] * g[i] * g[i]).sum::<f64>() / q;
                let v2 = q.sqrt();
                acc[0] += v1;
                acc[1] += v1 * v1;
                acc[2] += v2;
                acc[3] += v2 * v2;
            }
            acc
        })
        .collect();
    let n = (per * CHUNKS) as f64;
    let total = sums.iter().fold([0.0; 4], |acc, s| std::array::from_fn(|i| acc[i] + s[i]));
    let stat = |s: f64, s2: f64| {
        let mean = s / n;
        (mean, ((s2 / n - mean * mean) / (n - 1.0)).sqrt())
    };
    [stat(total[0], total[1]), stat(total[2], total[3])]
}

fn criterion_2() -> Check {
    let s = 1.0;
    let (mut worst_quad, mut worst_z): (f64, f64) = (0.0, 0.0);
    for (k, ratio) in [0.25, 0.5, 0.9, 1.1, 2.0, 5.0].into_iter().enumerate() {
        let xi: f64 = ratio * s;
        let t = Eigentriple::spin(xi, s).unwrap();
        let (c1, c2) = (e1_closed(xi, s).unwrap(), e2_closed(xi, s).unwrap());
        worst_quad = worst_quad.max((e1(&t).unwrap() - c1).abs()).max((e2(&t).unwrap() - c2).abs());
        let [(m1, se1), (m2, se2)] = gaussian_mc([xi * xi, xi * xi, s * s], 10_000_000, 100 + k as u64);
        worst_z = worst_z.max(((m1 - c1) / se1).abs()).max(((m2 - c2) / se2).abs());
    }
    ensure(worst_quad <= 1e-8, format!("closed form vs quadrature {worst_quad:e}"))?;
    ensure(worst_z <= 4.0, format!("closed form vs Monte Carlo |z| = {worst_z:.2}"))?;
    Ok(format!("quadrature residual {worst_quad:.1e}, Monte Carlo max |z| {worst_z:.2} (1e7 samples per ratio)"))
}

fn criterion_3() -> Check {
    let (mut worst_const, mut worst_route): (f64, f64) = (0.0, 0.0);
    for xi in [0.5f64, 0.8, 1.3, 2.0, 3.0, 5.0, 10.0] {
        for s in [1.0f64, 2.0, 3.0] {
            if (xi - s).abs() < 1e-9 {
                continue;
            }
            let d = d_constants(xi, s).unwrap();
            let e2v = e2_closed(xi, s).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            worst_const = worst_const
                .max(rel(d.d0, e2v / (8.0 * PI).sqrt()))
                .max(rel(8.0 * PI * PI * d.d2, 2.0 * xi * xi * s))
                .max(rel(3.0 * PI * d.d0 + 8.0 * PI * PI * d.d3, 2.0 * s * (1.0 - s * s / (4.0 * xi * xi))));
            for u in [-2.0, -0.7, 0.0, 0.4, 1.5, 3.0] {
                let a = expected_lk_spin(xi, s, u, Manifold::SO3).unwrap().values;
                let b = expected_lk_densities(xi, s, u, true).unwrap().values;
                for j in [0, 2, 3] {
                    worst_route = worst_route.max(rel(a.get(j), b.get(j)));
                }
            }
        }
    }
    ensure(worst_const <= 1e-12, format!("constant identities {worst_const:e}"))?;
    ensure(worst_route <= 1e-10, format!("density vs closed-form routes {worst_route:e}"))?;
    Ok(format!("identities {worst_const:.1e}, routes {worst_route:.1e}"))
}

fn criterion_4() -> Check {
    let atlas = build_atlas(&AxisField::cos_theta(), [64; 3], true).map_err(|e| e.to_string())?;
    let mut worst = [0.0f64; 5];
    for u in [-0.8, -0.5, -0.2, 0.0, 0.3, 0.6, 0.85] {
        let t0: f64 = f64::acos(u);
        let l3 = estimate_l3(&atlas.primary, u);
        let mesh = extract_atlas_surface(&atlas, u);
        let l2 = estimate_l2(&atlas, &mesh);
        let si = atlas_surface_integrals(&atlas, &mesh);
        let l1 = l1_from_parts(&si, l3);
        let gb = estimate_l0_gaussbonnet(&atlas, &mesh);
        let (morse, _) = estimate_l0_morse(&atlas, u).map_err(|e| e.to_string())?;
        // Torus θ = θ0: area 4π² sin θ0, H = −cot(θ0)/2, scal(g_{1,1}) = 3/2.
        let area = 4.0 * PI * PI * t0.sin();
        let exact_l1 = -(-0.5 / t0.tan()) * area / PI + 1.5 * 4.0 * PI * PI * (1.0 - u) / (4.0 * PI);
        let errs = [
            (l3 / (4.0 * PI * PI * (1.0 - u)) - 1.0).abs(),
            (l2 / (0.5 * area) - 1.0).abs(),
            (l1 / exact_l1 - 1.0).abs(),
            gb.abs(),
            (morse as f64).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    ensure(worst[0] <= 1e-3, format!("L3 rel err {:e}", worst[0]))?;
    ensure(worst[1] <= 1e-2, format!("L2 rel err {:e}", worst[1]))?;
    ensure(worst[2] <= 2e-2, format!("L1 rel err {:e}", worst[2]))?;
    ensure(worst[3] <= 0.1 && worst[4] <= 0.1, format!("chi gb {} morse {}", worst[3], worst[4]))?;
    Ok(format!(
        "L3 {:.1e}, L2 {:.1e}, L1 {:.1e} relative; |chi_gb| {:.1e}, |chi_morse| {}",
        worst[0], worst[1], worst[2], worst[3], worst[4]
    ))
}

fn criterion_5() -> Check {
    let cfg = ExperimentConfig {
        spec: SpectrumSpec::band_limited(2, 2, 8, 2.0).unwrap(),
        resolution: 64,
        thresholds: vec![-1.0, 0.0, 1.0],
        trials: 100,
        seed: 2024,
        l0_method: L0Method::Morse,
        l2_method: L2Method::Mesh,
    };
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    save("criterion5_results.json", &res);
    std::fs::write(out_dir().join("criterion5_results.csv"), res.to_csv()).unwrap();
    for r in res.rows.iter().filter(|r| r.quantity.len() == 2) {
        println!(
            "    u = {:+.0} {}: mean {:>10.4} ± {:.4}  theory {:>10.4}  z {:+.2}",
            r.u, r.quantity, r.mean, r.stderr, r.theory, r.z
        );
    }
    res.ensure_acceptable().map_err(|e| e.to_string())?;
    let breaches = res.tolerance_breaches();
    ensure(
        breaches.is_empty(),
        format!("{:?}", breaches.iter().map(|r| format!("u={} {} z={:.2}", r.u, r.quantity, r.z)).collect::<Vec<_>>()),
    )?;
    let excluded: usize = res.exclusions.iter().map(|e| e.excluded).sum();
    Ok(format!("100 trials at 64^3, {excluded} exclusions, {:.0} s", res.provenance.wall_time_s))
}

fn criterion_6() -> Check {
    let (xi, s) = (50.0, 2.0);
    let mu = xi * xi * s / 5.0;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for u in [0.0, 1.0] {
        let exact = to_2g(&expected_lk_spin(xi, s, u, Manifold::SO3).unwrap().values);
        let asy = asymptotic_lk(mu, s, u).unwrap().values;
        let scale = 10.0 * mu * (-0.5 * u * u).exp();
        worst.0 = worst.0.max((exact.l0 - asy.l0).abs() / scale);
        worst.1 = worst.1.max((exact.l2 / asy.l2 - 1.0).abs());
    }
    ensure(worst.0 <= 0.02 && worst.1 <= 0.02, format!("L0 {:e}, L2 {:e}", worst.0, worst.1))?;
    Ok(format!("L0 remainder {:.1e} of leading scale, L2 rel err {:.1e}", worst.0, worst.1))
}

fn criterion_7() -> Check {
    for (xi, s) in [(0.7, 1.0), (2.0, 1.0), (3.0, 2.0), (10.0, 2.0)] {
        for u in [-1.5, 0.0, 0.8, 2.5] {
            let a = expected_lk_spin(xi, s, u, Manifold::SO3).unwrap().values.as_array();
            let b = expected_lk_spin(xi, s, u, Manifold::SU2).unwrap().values.as_array();
            ensure(a.iter().zip(&b).all(|(x, y)| *y == 2.0 * x), format!("xi={xi} s={s} u={u}"))?;
        }
    }
    Ok("SU(2) values are exactly twice SO(3)".into())
}

fn criterion_8() -> Check {
    let spec = SpectrumSpec::two_level(2, 10.0).map_err(|e| e.to_string())?;
    let rep = discriminate_d1(&spec, &[1.0], 4, 96, 1, 77).map_err(|e| e.to_string())?;
    save("criterion8_d1.json", &rep);
    for c in &rep.candidates {
        println!("    {}: 8pi^2 d1 = {:.2}, z = {:+.2}", c.label, c.amplitude, c.z);
    }
    ensure(rep.power >= 3.0, format!("power {:.2} below 3 sigma", rep.power))?;
    let verdict = match rep.verdict {
        D1Verdict::SqrtEightPiSquared => "1/sqrt(8 pi^2) matches",
        D1Verdict::SqrtEightPiCubed => "1/sqrt(8 pi^3) matches",
        D1Verdict::Inconclusive => "inconclusive",
    };
    Ok(format!("fitted {:.1} ± {:.1}, power {:.1} sigma, finding: {verdict}", rep.amplitude, rep.stderr, rep.power))
}

fn criterion_9() -> Check {
    let spec = SpectrumSpec::band_limited(2, 2, 6, 2.0).unwrap();
    let pts: Vec<EulerPoint> = [(0.3, 1.1, -0.4), (-2.0, 0.4, 2.5), (1.7, 2.6, 0.9), (-0.8, PI / 2.0, -2.2)]
        .iter()
        .map(|&(a, b, c)| EulerPoint::new(a, b, c).unwrap())
        .collect();
    let pairs = vec![(pts[0], pts[0]), (pts[0], pts[1]), (pts[1], pts[2]), (pts[2], pts[3]), (pts[0], pts[3])];
    let met = validate_metric(&spec, &pts, 10_000, 5).map_err(|e| e.to_string())?;
    let cov = validate_covariance(&spec, &pairs, 10_000, 6).map_err(|e| e.to_string())?;
    save("criterion9_metric.json", &met);
    save("criterion9_covariance.json", &cov);
    ensure(met.max_abs_z <= 4.0, format!("metric |z| {:.2}", met.max_abs_z))?;
    ensure(cov.max_abs_z <= 4.0, format!("covariance |z| {:.2}", cov.max_abs_z))?;
    ensure(cov.spin_residual <= 1e-10, format!("spin residual {:e}", cov.spin_residual))?;
    Ok(format!("metric max |z| {:.2}, covariance max |z| {:.2}, spin residual {:.1e}", met.max_abs_z, cov.max_abs_z, cov.spin_residual))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("1 geometry exactness", criterion_1),
        ("2 special functions", criterion_2),
        ("3 closed-form consistency", criterion_3),
        ("4 LK fixture", criterion_4),
        ("5 Monte Carlo reproduction", criterion_5),
        ("6 asymptotic regime", criterion_6),
        ("7 SU(2) scaling", criterion_7),
        ("8 d1 discrepancy", criterion_8),
        ("9 field validation", criterion_9),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        match check() {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{:.1} s]", t.elapsed().as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{:.1} s]", t.elapsed().as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Batch command-line interface. Every command writes JSON or CSV to stdout,
//! or to `--output` when given.

use crate::error::{Error, Result};
use crate::expectations::{
    d_constants, e1, e1_closed, e2, e2_closed, expected_lk_euclidean, expected_lk_homothetic, expected_lk_spin, Eigentriple,
    ExpectedLK, Manifold,
};
use crate::lkestim::{build_atlas, estimate_all, extract_level_surface, EstimatorOptions, EstimatorReport};
use crate::mc::{self, ExperimentConfig, L0Method, L2Method};
use crate::so3geom::{CoordinatePlane, LeftInvariantMetric};
use crate::spinfield::{EulerPoint, FieldRealization, RealizationRecord, SpectrumSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "lkspin", version, about = "Lipschitz-Killing curvatures of spin random fields on SO(3)")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub out: Format,
    /// Master seed for every random draw.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Worker threads (falls back to LKSPIN_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldArg {
    So3,
    Su2,
}

impl From<ManifoldArg> for Manifold {
    fn from(m: ManifoldArg) -> Self {
        match m {
            ManifoldArg::So3 => Manifold::SO3,
            ManifoldArg::Su2 => Manifold::SU2,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form expected curvatures E L_j(u) of a spin field.
    Expect {
        #[arg(long)]
        xi: f64,
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        /// Thresholds: a value, a comma list, or start:stop:step.
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        #[arg(long, value_enum, default_value_t = ManifoldArg::So3)]
        manifold: ManifoldArg,
    },
    /// Expected curvatures of a stationary field on R³ with gradient eigenvalues (a, b, c).
    Euclidean {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c: f64,
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        /// Volume of the observation window.
        #[arg(long, default_value_t = 1.0)]
        volume: f64,
    },
    /// Gram matrix, curvatures and volume element of the metric g_(ξ,s) at θ.
    Geometry {
        #[arg(long)]
        xi: f64,
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        #[arg(long)]
        theta: f64,
    },
    /// E1 and E2 of an eigenvalue triple.
    EFuncs {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c: f64,
    },
    /// Draws a realization; JSON gives its record, CSV its values on an n³ grid.
    Synth {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value_t = 16)]
        res: usize,
    },
    /// Estimates L0..L3 of the excursion sets of one realization.
    Estimate {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        /// Realization record written by `synth`; overrides the spectrum flags and seed.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        #[arg(long, default_value_t = 64)]
        res: usize,
        /// Also compute the crossing-count L2.
        #[arg(long)]
        crossings: bool,
        /// Skip the critical-point count.
        #[arg(long)]
        no_morse: bool,
        /// Write the primary-chart mesh at the first threshold as OFF.
        #[arg(long)]
        off: Option<PathBuf>,
        /// Curvature quadrature refinement depth.
        #[arg(long)]
        refine_depth: Option<u32>,
    },
    /// Monte Carlo check of the expectations, the metric or the covariance.
    McValidate {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, value_enum, default_value_t = Check::Lk)]
        check: Check,
        /// Full experiment config as JSON; overrides spectrum, grid and trial flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, allow_hyphen_values = true, default_value = "-1,0,1")]
        u: String,
        #[arg(long, value_enum, default_value_t = L0Arg::Morse)]
        l0: L0Arg,
        #[arg(long, value_enum, default_value_t = L2Arg::Mesh)]
        l2: L2Arg,
        /// Directory for results.json, results.csv and manifest.json.
        #[arg(long)]
        save_dir: Option<PathBuf>,
        /// Largest tolerated |z| for the metric and covariance checks.
        #[arg(long, default_value_t = 4.0)]
        max_z: f64,
    },
    /// Decides between the two d1 prefactors from the odd part of the empirical E L1.
    D1Test {
        #[arg(long, default_value_t = 10.0)]
        xi: f64,
        #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
        s: i32,
        #[arg(long, allow_hyphen_values = true, default_value = "1")]
        u: String,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 96)]
        res: usize,
        /// Curvature quadrature refinement depth.
        #[arg(long, default_value_t = 1)]
        refine_depth: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Lk,
    Metric,
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum L0Arg {
    Morse,
    GaussBonnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum L2Arg {
    Mesh,
    Crossings,
}

/// Spectrum given as `--l`, as `--lmin/--lmax/--decay`, or as a JSON file.
#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub spin: i32,
    /// Single multipole.
    #[arg(long, conflicts_with_all = ["lmin", "lmax"])]
    pub l: Option<u32>,
    #[arg(long)]
    pub lmin: Option<u32>,
    #[arg(long)]
    pub lmax: Option<u32>,
    /// c_l ∝ (1 + l)^(−decay) before normalization.
    #[arg(long, default_value_t = 2.0)]
    pub decay: f64,
    /// JSON file `{"s": .., "coeffs": {"l": c_l}}`, normalized on load.
    #[arg(long)]
    pub spectrum_file: Option<PathBuf>,
}

impl SpectrumArgs {
    pub fn resolve(&self) -> Result<SpectrumSpec> {
        if let Some(path) = &self.spectrum_file {
            let spec: SpectrumSpec = serde_json::from_str(&read(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            return spec.normalize();
        }
        match (self.l, self.lmin, self.lmax) {
            (Some(l), _, _) => SpectrumSpec::monochromatic(self.spin, l),
            (None, lmin, Some(lmax)) => SpectrumSpec::band_limited(self.spin, lmin.unwrap_or(self.spin.unsigned_abs()), lmax, self.decay),
            (None, Some(lmin), None) => SpectrumSpec::band_limited(self.spin, lmin, lmin.max(8), self.decay),
            (None, None, None) => SpectrumSpec::band_limited(self.spin, self.spin.unsigned_abs(), 8, self.decay),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Parses `a`, `a,b,c` or `start:stop:step`; ranges include `stop` to within 1e-12.
pub fn parse_thresholds(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse thresholds '{text}'"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad()).and_then(|v| if v.is_finite() { Ok(v) } else { Err(bad()) });
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if !(h > 0.0) || b < a {
                return Err(Error::Config(format!("range '{text}' needs step > 0 and stop >= start")));
            }
            let n = ((b - a) / h + 1e-12).floor() as usize;
            if n > 1_000_000 {
                return Err(Error::Config(format!("range '{text}' has too many points")));
            }
            Ok((0..=n).map(|i| a + i as f64 * h).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

/// What a command produced and how it should exit.
pub struct Outcome {
    pub text: String,
    pub check_failed: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, check_failed: false }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output") + "\n"
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn expected(xi: f64, s: f64, u: f64, manifold: Manifold) -> Result<ExpectedLK> {
    match expected_lk_spin(xi, s, u, manifold) {
        Err(Error::Homothetic(_)) => {
            let mut e = expected_lk_homothetic(xi, u)?;
            e.values = e.values.scaled(manifold.factor());
            Ok(e)
        }
        r => r,
    }
}

fn lk_csv(rows: &[ExpectedLK]) -> String {
    csv(
        "u,L0,L1,L2,L3,regime",
        rows.iter().map(|e| {
            let v = e.values.as_array();
            format!("{},{:.15e},{:.15e},{:.15e},{:.15e},{}", e.u, v[0], v[1], v[2], v[3], e.regime.label())
        }),
    )
}

#[derive(Serialize)]
struct ExpectOutput {
    xi: f64,
    s: f64,
    manifold: Manifold,
    rows: Vec<ExpectedLK>,
}

#[derive(Serialize)]
struct EuclideanRow {
    #[serde(flatten)]
    lk: ExpectedLK,
    gamma_sa: f64,
    gamma_tmc: f64,
    gamma_tgc: f64,
}

#[derive(Serialize)]
struct GeometryOutput {
    xi: f64,
    s: f64,
    theta: f64,
    gram: [[f64; 3]; 3],
    gram_inverse: [[f64; 3]; 3],
    scalar_curvature: f64,
    sectional_phi_theta: f64,
    sectional_phi_psi: f64,
    sectional_theta_psi: f64,
    volume_element: f64,
    lk_so3: crate::lkestim::LKVector,
}

#[derive(Serialize)]
struct EFuncsOutput {
    a: f64,
    b: f64,
    c: f64,
    e1: f64,
    e2: f64,
    /// Closed forms with ξ = √a, s = √c, present when a = b.
    e1_closed: Option<f64>,
    e2_closed: Option<f64>,
}

fn rows3(m: &nalgebra::Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn cmd_expect(xi: f64, s: f64, u: &str, manifold: Manifold, out: Format) -> Result<Outcome> {
    let us = parse_thresholds(u)?;
    let rows = us.iter().map(|&u| expected(xi, s, u, manifold)).collect::<Result<Vec<_>>>()?;
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&ExpectOutput { xi, s, manifold, rows }),
        Format::Csv => lk_csv(&rows),
    }))
}

fn cmd_euclidean(t: [f64; 3], u: &str, volume: f64, out: Format) -> Result<Outcome> {
    let us = parse_thresholds(u)?;
    let triple = Eigentriple::new(t[0], t[1], t[2])?;
    let rows = us
        .iter()
        .map(|&u| {
            let (lk, c) = expected_lk_euclidean(&triple, u, volume)?;
            Ok(EuclideanRow { lk, gamma_sa: c.gamma_sa, gamma_tmc: c.gamma_tmc, gamma_tgc: c.gamma_tgc })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&rows),
        Format::Csv => csv(
            "u,L0,L1,L2,L3,gamma_sa,gamma_tmc,gamma_tgc",
            rows.iter().map(|r| {
                let v = r.lk.values.as_array();
                format!(
                    "{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                    r.lk.u, v[0], v[1], v[2], v[3], r.gamma_sa, r.gamma_tmc, r.gamma_tgc
                )
            }),
        ),
    }))
}

fn cmd_geometry(xi: f64, s: f64, theta: f64, out: Format) -> Result<Outcome> {
    let m = LeftInvariantMetric::new(xi, s)?;
    let g = GeometryOutput {
        xi,
        s,
        theta,
        gram: rows3(&m.gram(theta)?),
        gram_inverse: rows3(&m.gram_inverse(theta)?),
        scalar_curvature: m.scalar_curvature(),
        sectional_phi_theta: m.sectional(CoordinatePlane::PhiTheta, theta)?,
        sectional_phi_psi: m.sectional(CoordinatePlane::PhiPsi, theta)?,
        sectional_theta_psi: m.sectional(CoordinatePlane::ThetaPsi, theta)?,
        volume_element: m.volume_element(theta)?,
        lk_so3: m.lk_so3(),
    };
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&g),
        Format::Csv => {
            let mut rows = vec![];
            for (name, mat) in [("gram", g.gram), ("gram_inverse", g.gram_inverse)] {
                for (i, row) in mat.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        rows.push(format!("{name}_{}{},{v:.15e}", i + 1, j + 1));
                    }
                }
            }
            let lk = g.lk_so3.as_array();
            for (name, v) in [
                ("scalar_curvature", g.scalar_curvature),
                ("sectional_phi_theta", g.sectional_phi_theta),
                ("sectional_phi_psi", g.sectional_phi_psi),
                ("sectional_theta_psi", g.sectional_theta_psi),
                ("volume_element", g.volume_element),
                ("L0", lk[0]),
                ("L1", lk[1]),
                ("L2", lk[2]),
                ("L3", lk[3]),
            ] {
                rows.push(format!("{name},{v:.15e}"));
            }
            csv("quantity,value", rows)
        }
    }))
}

fn cmd_efuncs(a: f64, b: f64, c: f64, out: Format) -> Result<Outcome> {
    let t = Eigentriple::new(a, b, c)?;
    let (cl1, cl2) = if a == b && a != c {
        (Some(e1_closed(a.sqrt(), c.sqrt())?), Some(e2_closed(a.sqrt(), c.sqrt())?))
    } else {
        (None, None)
    };
    let o = EFuncsOutput { a, b, c, e1: e1(&t)?, e2: e2(&t)?, e1_closed: cl1, e2_closed: cl2 };
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.15e}")).unwrap_or_default();
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&o),
        Format::Csv => csv(
            "a,b,c,E1,E2,E1_closed,E2_closed",
            [format!("{a},{b},{c},{:.15e},{:.15e},{},{}", o.e1, o.e2, opt(cl1), opt(cl2))],
        ),
    }))
}

fn cmd_synth(spec: SpectrumSpec, seed: u64, res: usize, out: Format) -> Result<Outcome> {
    let field = FieldRealization::sample(&spec, seed)?;
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&field.record()),
        Format::Csv => {
            if res < 2 {
                return Err(Error::Config(format!("res must be at least 2, got {res}")));
            }
            let grid = build_grid_points(res);
            let (values, _) = field.grid_values(&grid.0, &grid.1, &grid.2, false);
            let mut s = String::from("phi,theta,psi,f\n");
            let mut it = values.iter();
            for &p in &grid.0 {
                for &t in &grid.1 {
                    for &k in &grid.2 {
                        writeln!(s, "{p:.12},{t:.12},{k:.12},{:.15e}", it.next().unwrap()).unwrap();
                    }
                }
            }
            s
        }
    }))
}

fn build_grid_points(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let periodic: Vec<f64> = (0..n).map(|i| -std::f64::consts::PI + (i as f64 + 0.5) * h).collect();
    let theta = (0..n).map(|j| (j as f64 + 0.5) * std::f64::consts::PI / n as f64).collect();
    (periodic.clone(), theta, periodic)
}

fn reports_csv(reports: &[EstimatorReport]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
    csv(
        "u,L0_gb,L0_morse,L1,L2,L2_crossings,L3,skipped_area_fraction,reliable",
        reports.iter().map(|r| {
            format!(
                "{},{:.12e},{},{:.12e},{:.12e},{},{:.12e},{:.3e},{}",
                r.u,
                r.l0_gb,
                opt(r.l0_morse),
                r.l1,
                r.l2,
                opt(r.l2_crossings),
                r.l3,
                r.skipped_area_fraction,
                r.reliable
            )
        }),
    )
}

#[derive(Serialize)]
struct EstimateOutput {
    record: RealizationRecord,
    resolution: usize,
    reports: Vec<EstimatorReport>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    record: RealizationRecord,
    u: &str,
    res: usize,
    crossings: bool,
    morse: bool,
    refine_depth: Option<u32>,
    off: Option<&Path>,
    out: Format,
) -> Result<Outcome> {
    let us = parse_thresholds(u)?;
    let field = FieldRealization::from_record(&record)?;
    let atlas = build_atlas(&field, [res; 3], true)?;
    let reports = estimate_all(&atlas, &us, EstimatorOptions { morse, crossings, refine_depth })?;
    if let Some(path) = off {
        let grid = atlas.grid(crate::lkestim::Chart::Primary);
        let mut mesh = extract_level_surface(grid, grid.regular_level(us[0]));
        mesh.project_onto(&field);
        write(path, &mesh.to_off())?;
    }
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&EstimateOutput { record, resolution: res, reports }),
        Format::Csv => reports_csv(&reports),
    }))
}

fn matrix_check_csv(points: &[mc::MatrixCheck]) -> String {
    let mut rows = vec![];
    for (k, c) in points.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                rows.push(format!(
                    "{k},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{:.4}",
                    c.point.phi,
                    c.point.theta,
                    c.point.psi,
                    i + 1,
                    j + 1,
                    c.empirical[i][j],
                    c.stderr[i][j],
                    c.theory[i][j],
                    c.z[i][j]
                ));
            }
        }
    }
    csv("point,phi,theta,psi,i,j,empirical,stderr,theory,z", rows)
}

fn validation_points() -> Vec<EulerPoint> {
    [(0.3, 1.1, -0.4), (-2.0, 0.4, 2.5), (1.7, 2.6, 0.9), (-0.8, std::f64::consts::FRAC_PI_2, -2.2)]
        .iter()
        .map(|&(a, b, c)| EulerPoint::new(a, b, c).expect("interior point"))
        .collect()
}

fn validation_pairs() -> Vec<(EulerPoint, EulerPoint)> {
    let p = validation_points();
    vec![(p[0], p[0]), (p[0], p[1]), (p[1], p[2]), (p[2], p[3]), (p[0], p[3])]
}

struct McArgs<'a> {
    spectrum: &'a SpectrumArgs,
    check: Check,
    config: Option<&'a Path>,
    trials: usize,
    res: usize,
    u: &'a str,
    l0: L0Arg,
    l2: L2Arg,
    save_dir: Option<&'a Path>,
    max_z: f64,
}

fn cmd_mc(a: McArgs<'_>, seed: u64, out: Format) -> Result<Outcome> {
    match a.check {
        Check::Lk => {
            let cfg = match a.config {
                Some(path) => serde_json::from_str(&read(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                None => ExperimentConfig {
                    spec: a.spectrum.resolve()?,
                    resolution: a.res,
                    thresholds: parse_thresholds(a.u)?,
                    trials: a.trials,
                    seed,
                    l0_method: match a.l0 {
                        L0Arg::Morse => L0Method::Morse,
                        L0Arg::GaussBonnet => L0Method::GaussBonnet,
                    },
                    l2_method: match a.l2 {
                        L2Arg::Mesh => L2Method::Mesh,
                        L2Arg::Crossings => L2Method::Crossings,
                    },
                },
            };
            cfg.validate()?;
            let res = mc::run_experiment(&cfg)?;
            eprintln!("{} trials in {:.1} s on {} threads", cfg.trials, res.provenance.wall_time_s, res.provenance.threads);
            if let Some(dir) = a.save_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
                write(&dir.join("results.json"), &to_json(&res))?;
                write(&dir.join("results.csv"), &res.to_csv())?;
                write(&dir.join("manifest.json"), &to_json(&res.manifest()))?;
            }
            let mut failed = false;
            if let Err(e) = res.ensure_acceptable() {
                eprintln!("{e}");
                failed = true;
            }
            for r in res.tolerance_breaches() {
                eprintln!("outside tolerance: u = {} {} mean {:.6} theory {:.6} z {:.2}", r.u, r.quantity, r.mean, r.theory, r.z);
                failed = true;
            }
            let text = match out {
                Format::Json => to_json(&res),
                Format::Csv => res.to_csv(),
            };
            Ok(Outcome { text, check_failed: failed })
        }
        Check::Metric => {
            let rep = mc::validate_metric(&a.spectrum.resolve()?, &validation_points(), a.trials, seed)?;
            let failed = rep.max_abs_z > a.max_z;
            let text = match out {
                Format::Json => to_json(&rep),
                Format::Csv => matrix_check_csv(&rep.points),
            };
            Ok(Outcome { text, check_failed: failed })
        }
        Check::Covariance => {
            let rep = mc::validate_covariance(&a.spectrum.resolve()?, &validation_pairs(), a.trials, seed)?;
            let failed = rep.max_abs_z > a.max_z || rep.spin_residual > 1e-10;
            let text = match out {
                Format::Json => to_json(&rep),
                Format::Csv => csv(
                    "p_phi,p_theta,p_psi,q_phi,q_theta,q_psi,empirical,stderr,theory,z",
                    rep.pairs.iter().map(|c| {
                        format!(
                            "{},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{:.4}",
                            c.p.phi, c.p.theta, c.p.psi, c.q.phi, c.q.theta, c.q.psi, c.empirical, c.stderr, c.theory, c.z
                        )
                    }),
                ),
            };
            Ok(Outcome { text, check_failed: failed })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_d1(xi: f64, s: i32, u: &str, trials: usize, res: usize, depth: u32, seed: u64, out: Format) -> Result<Outcome> {
    let us = parse_thresholds(u)?;
    let spec = SpectrumSpec::two_level(s, xi)?;
    let d = d_constants(xi, s as f64)?;
    let rep = mc::discriminate_d1(&spec, &us, trials, res, depth, seed)?;
    eprintln!("d1 = {:.6}, d1 (1/sqrt(8 pi^3)) = {:.6}", d.d1, d.d1_pipeline);
    Ok(Outcome::ok(match out {
        Format::Json => to_json(&rep),
        Format::Csv => csv(
            "candidate,amplitude,fitted,stderr,z,within_3_sigma,power,verdict",
            rep.candidates.iter().map(|c| {
                format!(
                    "{},{:.10e},{:.10e},{:.10e},{:.4},{},{:.4},{}",
                    c.label,
                    c.amplitude,
                    rep.amplitude,
                    rep.stderr,
                    c.z,
                    c.within_3_sigma,
                    rep.power,
                    serde_json::to_value(rep.verdict).unwrap().as_str().unwrap()
                )
            }),
        ),
    }))
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("LKSPIN_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("LKSPIN_THREADS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command.
pub fn execute(cli: Cli) -> Result<Outcome> {
    let Common { out, seed, threads, output } = cli.common;
    if let Some(n) = thread_count(threads)? {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // A pool already exists when called twice in one process; the first size stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match &cli.command {
        Command::Expect { xi, s, u, manifold } => cmd_expect(*xi, *s, u, (*manifold).into(), out),
        Command::Euclidean { a, b, c, u, volume } => cmd_euclidean([*a, *b, *c], u, *volume, out),
        Command::Geometry { xi, s, theta } => cmd_geometry(*xi, *s, *theta, out),
        Command::EFuncs { a, b, c } => cmd_efuncs(*a, *b, *c, out),
        Command::Synth { spectrum, res } => cmd_synth(spectrum.resolve()?, seed, *res, out),
        Command::Estimate { spectrum, record, u, res, crossings, no_morse, off, refine_depth } => {
            let rec = match record {
                Some(path) => serde_json::from_str(&read(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                None => RealizationRecord { spec: spectrum.resolve()?, seed },
            };
            cmd_estimate(rec, u, *res, *crossings, !*no_morse, *refine_depth, off.as_deref(), out)
        }
        Command::McValidate { spectrum, check, config, trials, res, u, l0, l2, save_dir, max_z } => cmd_mc(
            McArgs {
                spectrum,
                check: *check,
                config: config.as_deref(),
                trials: *trials,
                res: *res,
                u,
                l0: *l0,
                l2: *l2,
                save_dir: save_dir.as_deref(),
                max_z: *max_z,
            },
            seed,
            out,
        ),
        Command::D1Test { xi, s, u, trials, res, refine_depth } => cmd_d1(*xi, *s, u, *trials, *res, *refine_depth, seed, out),
    }?;
    match output {
        Some(path) => write(&path, &outcome.text)?,
        None => print!("{}", outcome.text),
    }
    Ok(outcome)
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(o) if o.check_failed => 2,
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_ranges() {
        assert_eq!(parse_thresholds("-2:2:0.5").unwrap().len(), 9);
        assert_eq!(parse_thresholds("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_thresholds("1.5").unwrap(), vec![1.5]);
        assert_eq!(parse_thresholds("-1,0,1").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(parse_thresholds("1:0:0.1").is_err());
        assert!(parse_thresholds("0:1:0").is_err());
        assert!(parse_thresholds("a").is_err());
        assert!(parse_thresholds("nan").is_err());
    }

    #[test]
    fn unknown_flag_exits_with_one() {
        assert_eq!(dispatch(["lkspin", "expect", "--xi", "2", "--s", "1", "--u", "0", "--bogus"]), 1);
        assert_eq!(dispatch(["lkspin", "frobnicate"]), 1);
    }

    #[test]
    fn domain_errors_exit_with_one() {
        assert_eq!(dispatch(["lkspin", "geometry", "--xi", "1", "--s", "1", "--theta", "0"]), 1);
        assert_eq!(dispatch(["lkspin", "expect", "--xi", "-1", "--s", "1", "--u", "0"]), 1);
    }

    #[test]
    fn spectrum_flags() {
        let parse = |args: &[&str]| {
            let mut argv = vec!["lkspin", "synth"];
            argv.extend_from_slice(args);
            match Cli::try_parse_from(argv).unwrap().command {
                Command::Synth { spectrum, .. } => spectrum.resolve().unwrap(),
                _ => unreachable!(),
            }
        };
        assert_eq!(parse(&["--spin", "1", "--l", "3"]), SpectrumSpec::monochromatic(1, 3).unwrap());
        assert_eq!(parse(&[]), SpectrumSpec::band_limited(2, 2, 8, 2.0).unwrap());
        assert_eq!(parse(&["--spin", "-1", "--lmax", "4", "--decay", "1"]), SpectrumSpec::band_limited(-1, 1, 4, 1.0).unwrap());
    }
}

//! Exact and semi-analytic expected Lipschitz-Killing curvatures of excursion
//! sets `{f ≥ u}`.

use crate::error::{Error, Result};
use crate::lkestim::LKVector;
use crate::so3geom::LeftInvariantMetric;
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Mutex;

const SPHERE_TOL: f64 = 1e-9;
const BRANCH_TOL: f64 = 1e-8;

pub fn gaussian_cdf(u: f64) -> f64 {
    if u == 0.0 {
        return 0.5;
    }
    0.5 * erfc(-u / SQRT_2)
}

/// `1 − Φ(u)` without cancellation for large `u`.
pub fn gaussian_sf(u: f64) -> f64 {
    if u == 0.0 {
        return 0.5;
    }
    0.5 * erfc(u / SQRT_2)
}

/// `E[χ₃]`, the mean of a chi variable with three degrees of freedom.
pub fn mean_chi3() -> f64 {
    2.0 * (2.0 / PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigentriple {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Eigentriple {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0 && a3 > 0.0) || !(a1 + a2 + a3).is_finite() {
            return Err(Error::Domain(format!("eigenvalues must be positive, got ({a1}, {a2}, {a3})")));
        }
        Ok(Eigentriple { a1, a2, a3 })
    }

    pub fn spin(xi: f64, s: f64) -> Result<Self> {
        Self::new(xi * xi, xi * xi, s * s)
    }

    pub fn sum(&self) -> f64 {
        self.a1 + self.a2 + self.a3
    }

    pub fn product(&self) -> f64 {
        self.a1 * self.a2 * self.a3
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(1/4π) ∮_{S²} g(n) dσ` by Gauss-Legendre in `cos θ'` times the trapezoid rule in `φ'`.
fn sphere_mean<G: Fn([f64; 3]) -> f64>(g: G) -> Result<f64> {
    let eval = |n: usize| {
        let (x, w) = gauss_legendre(n);
        let m = 2 * n;
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let r = (1.0 - xi * xi).sqrt();
            let mut row = 0.0;
            for k in 0..m {
                let ph = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                row += g([r * ph.cos(), r * ph.sin(), *xi]);
            }
            acc += wi * row / m as f64;
        }
        acc / 2.0
    };
    let mut n = 8;
    let mut prev = eval(n);
    while n < 1024 {
        n *= 2;
        let cur = eval(n);
        let change = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
        if change <= SPHERE_TOL {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature { residual: f64::NAN })
}

fn quad_form(t: &Eigentriple, n: [f64; 3]) -> f64 {
    t.a1 * n[0] * n[0] + t.a2 * n[1] * n[1] + t.a3 * n[2] * n[2]
}

/// `E1(a) = E[Σ a_i² γ_i² / Σ a_i γ_i²]`.
pub fn e1(t: &Eigentriple) -> Result<f64> {
    let t = Eigentriple::new(t.a1, t.a2, t.a3)?;
    sphere_mean(|n| {
        let num = t.a1 * t.a1 * n[0] * n[0] + t.a2 * t.a2 * n[1] * n[1] + t.a3 * t.a3 * n[2] * n[2];
        num / quad_form(&t, n)
    })
}

/// `E2(a) = E[(Σ a_i γ_i²)^{1/2}]`.
pub fn e2(t: &Eigentriple) -> Result<f64> {
    let t = Eigentriple::new(t.a1, t.a2, t.a3)?;
    Ok(mean_chi3() * sphere_mean(|n| quad_form(&t, n).sqrt())?)
}

fn check_xs(xi: f64, s: f64) -> Result<()> {
    if !(xi > 0.0) || s == 0.0 || !xi.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!("need xi > 0 and s != 0, got ({xi}, {s})")));
    }
    Ok(())
}

/// `E1(ξ², ξ², s²)` in closed form, both branches.
pub fn e1_closed(xi: f64, s: f64) -> Result<f64> {
    check_xs(xi, s)?;
    let x2 = xi * xi;
    let ia = s * s / x2;
    if (1.0 - ia).abs() < BRANCH_TOL {
        return Ok(x2);
    }
    let v = if ia < 1.0 {
        let b = (1.0 - ia).sqrt();
        1.0 + ia * (1.0 - (-(ia.ln()) + 2.0 * b.ln_1p()) / (2.0 * b))
    } else {
        let c = (ia - 1.0).sqrt();
        1.0 + ia * (1.0 - c.atan() / c)
    };
    Ok(x2 * v)
}

/// `E2(ξ², ξ², s²)` in closed form, both branches.
pub fn e2_closed(xi: f64, s: f64) -> Result<f64> {
    check_xs(xi, s)?;
    let ia = s * s / (xi * xi);
    let k = (2.0 / PI).sqrt();
    if (1.0 - ia).abs() < BRANCH_TOL {
        return Ok(2.0 * xi * k);
    }
    let r = if ia < 1.0 {
        let b = (1.0 - ia).sqrt();
        b.asin() / b
    } else {
        let c = (ia - 1.0).sqrt();
        c.asinh() / c
    };
    Ok(xi * k * (ia.sqrt() + r))
}

/// Constants of the density form of the expected curvatures. `d1` uses the
/// `1/√(8π²)` prefactor and `d1_pipeline` the `1/√(8π³)` one; they differ by `√π`.
/// The bracket of `d1` is `2ξ² + s² − E1(ξ², ξ², s²)`, with the `log(1 + r)/r`
/// coefficient confirmed by direct integration of `E1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DConstants {
    pub d0: f64,
    pub d1: f64,
    pub d1_pipeline: f64,
    pub d2: f64,
    pub d3: f64,
}

pub fn d_constants(xi: f64, s: f64) -> Result<DConstants> {
    check_xs(xi, s)?;
    let sa = s.abs();
    if (1.0 - s * s / (xi * xi)).abs() < BRANCH_TOL {
        return Err(Error::Homothetic(xi));
    }
    let (x2, s2) = (xi * xi, s * s);
    let (d0, bracket) = if xi > sa {
        let r = (1.0 - s2 / x2).sqrt();
        let d0 = (xi * r.asin() / r + sa) / (2.0 * PI);
        let bracket = x2 + s2 / r * xi.ln() - s2 * (sa.ln() / r - r.ln_1p() / r);
        (d0, bracket)
    } else {
        let e1 = e1_closed(xi, s)?;
        (e2_closed(xi, s)? / (8.0 * PI).sqrt(), 2.0 * x2 + s2 - e1)
    };
    Ok(DConstants {
        d0,
        d1: bracket / (8.0 * PI * PI).sqrt(),
        d1_pipeline: bracket / (8.0 * PI.powi(3)).sqrt(),
        d2: sa * x2 / (4.0 * PI * PI),
        d3: sa * (1.0 - s2 / (4.0 * x2)) / (4.0 * PI * PI) - 3.0 / (8.0 * PI) * d0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    SO3,
    SU2,
}

impl Manifold {
    pub fn factor(&self) -> f64 {
        match self {
            Manifold::SO3 => 1.0,
            Manifold::SU2 => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    ExactClosedForm,
    Quadrature,
    Asymptotic,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::ExactClosedForm => "exact-closed-form",
            Regime::Quadrature => "quadrature",
            Regime::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLK {
    pub u: f64,
    pub values: LKVector,
    pub regime: Regime,
}

/// Closed-form expected curvatures of `{f ≥ u}` for a spin field with parameters `(ξ, s)`.
pub fn expected_lk_spin(xi: f64, s: f64, u: f64, manifold: Manifold) -> Result<ExpectedLK> {
    check_xs(xi, s)?;
    let (x2, s2, sa) = (xi * xi, s * s, s.abs());
    let g = (-0.5 * u * u).exp();
    let tail = gaussian_sf(u);
    let vol = 8.0 * PI * PI;
    let scal_f = 2.0 / x2 - s2 / (2.0 * x2 * x2);
    let l3 = vol * tail;
    let l2 = g * vol * e2_closed(xi, s)? / (8.0 * PI).sqrt();
    let l1 = u * g * vol * (2.0 * x2 + s2 - e1_closed(xi, s)?) / (8.0 * PI.powi(3)).sqrt() + tail * 3.0 * PI;
    let l0 = g / (4.0 * PI * PI) * vol * x2 * sa * ((u * u - 1.0) + 0.5 * scal_f);
    Ok(ExpectedLK {
        u,
        values: LKVector::new([l0, l1, l2, l3]).scaled(manifold.factor()),
        regime: Regime::ExactClosedForm,
    })
}

/// `Ξ_0..Ξ_3` of the density form; `pipeline` picks the `1/√(8π³)` variant of `d1`.
pub fn xi_densities(d: &DConstants, u: f64, pipeline: bool) -> [f64; 4] {
    let g = (-0.5 * u * u).exp();
    let d1 = if pipeline { d.d1_pipeline } else { d.d1 };
    [gaussian_sf(u), g * d.d0, u * g * d1, (u * u - 1.0) * g * d.d2 + g * d.d3]
}

/// `E L_j = Σ_{i=0}^{3-j} L_{i+j}(SO(3)) Ξ_i(u)` with the standard-metric curvatures.
pub fn expected_lk_densities(xi: f64, s: f64, u: f64, pipeline: bool) -> Result<ExpectedLK> {
    let d = d_constants(xi, s)?;
    let x = xi_densities(&d, u, pipeline);
    let l = LeftInvariantMetric::standard().lk_so3().as_array();
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..=3 - j).map(|i| l[i + j] * x[i]).sum();
    }
    Ok(ExpectedLK { u, values: LKVector::new(out), regime: Regime::ExactClosedForm })
}

/// Volume of the unit ball in `R^j`.
pub fn unit_ball_volume(j: usize) -> f64 {
    [1.0, 2.0, PI, 4.0 * PI / 3.0][j]
}

/// `ρ_j(u) = (2π)^{-(j+1)/2} H_{j-1}(u) e^{-u²/2}`, with `ρ_0 = 1 − Φ`.
pub fn ec_density(j: usize, u: f64) -> f64 {
    if j == 0 {
        return gaussian_sf(u);
    }
    let h = [1.0, u, u * u - 1.0][j - 1];
    (2.0 * PI).powf(-(j as f64 + 1.0) / 2.0) * h * (-0.5 * u * u).exp()
}

/// Gaussian kinematic formula for a unit-variance field in its own metric.
pub fn adler_taylor(lk_f: &LKVector, u: f64) -> LKVector {
    let l = lk_f.as_array();
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..=3 - i {
            let binom = [[1.0, 1.0, 1.0, 1.0], [1.0, 2.0, 3.0, 0.0], [1.0, 3.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]][i][j];
            let flag = binom * unit_ball_volume(i + j) / (unit_ball_volume(i) * unit_ball_volume(j));
            *o += flag * l[i + j] * ec_density(j, u);
        }
    }
    LKVector::new(out)
}

/// Homothetic case `ξ = |s|`: `E L_j = ξ^{-j} E L^f_j`.
pub fn expected_lk_homothetic(xi: f64, u: f64) -> Result<ExpectedLK> {
    let lk_f = LeftInvariantMetric::new(xi, xi)?.lk_so3();
    let at = adler_taylor(&lk_f, u).as_array();
    let v = [0, 1, 2, 3].map(|j| at[j] * xi.powi(-(j as i32)));
    Ok(ExpectedLK { u, values: LKVector::new(v), regime: Regime::ExactClosedForm })
}

/// Pointwise inputs of the general formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGeometry {
    pub a: [f64; 3],
    pub scal_g: f64,
    pub scal_f: f64,
    pub vol_element: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { tol: 1e-10, max_nodes: 64 }
    }
}

type ECache = Mutex<HashMap<[u64; 3], (f64, f64)>>;

fn cached_e(cache: &ECache, a: [f64; 3]) -> Result<(f64, f64)> {
    let key = a.map(f64::to_bits);
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let t = Eigentriple::new(a[0], a[1], a[2])?;
    let v = (e1(&t)?, e2(&t)?);
    cache.lock().unwrap().insert(key, v);
    Ok(v)
}

/// Integrates the general formulas over the Euler chart `(−π,π)×(0,π)×(−π,π)`.
pub fn expected_lk_general<F>(fields: F, u: f64, opts: QuadratureOptions) -> Result<ExpectedLK>
where
    F: Fn(f64, f64, f64) -> LocalGeometry,
{
    let cache: ECache = Mutex::new(HashMap::new());
    // [vol, ∫scal_g, ∫E2, ∫(Σa − E1), ∫((u²−1) + scal_f/2)√Πa]
    let integrals = |n: usize| -> Result<[f64; 5]> {
        let (x, w) = gauss_legendre(n);
        let h = 2.0 * PI / n as f64;
        let mut acc = [0.0; 5];
        for (xi, wi) in x.iter().zip(&w) {
            let theta = 0.5 * PI * (xi + 1.0);
            let wt = wi * 0.5 * PI * h * h;
            for i in 0..n {
                let phi = -PI + (i as f64 + 0.5) * h;
                for k in 0..n {
                    let psi = -PI + (k as f64 + 0.5) * h;
                    let lg = fields(phi, theta, psi);
                    let (e1v, e2v) = cached_e(&cache, lg.a)?;
                    let dv = wt * lg.vol_element;
                    let prod = lg.a[0] * lg.a[1] * lg.a[2];
                    acc[0] += dv;
                    acc[1] += dv * lg.scal_g;
                    acc[2] += dv * e2v;
                    acc[3] += dv * (lg.a.iter().sum::<f64>() - e1v);
                    acc[4] += dv * ((u * u - 1.0) + 0.5 * lg.scal_f) * prod.sqrt();
                }
            }
        }
        Ok(acc)
    };
    let mut n = 8;
    let mut prev = integrals(n)?;
    let residual = loop {
        n *= 2;
        let cur = integrals(n)?;
        let scale = cur[0].abs().max(f64::MIN_POSITIVE);
        let res = cur
            .iter()
            .zip(&prev)
            .map(|(c, p)| (c - p).abs() / c.abs().max(scale * 1e-3))
            .fold(0.0, f64::max);
        prev = cur;
        if res <= opts.tol {
            break None;
        }
        if 2 * n > opts.max_nodes {
            break Some(res);
        }
    };
    if let Some(r) = residual {
        return Err(Error::Quadrature { residual: r });
    }
    let [vol, scal, ie2, ie1, ie0] = prev;
    let g = (-0.5 * u * u).exp();
    let tail = gaussian_sf(u);
    let values = LKVector::new([
        g / (4.0 * PI * PI) * ie0,
        u * g * ie1 / (8.0 * PI.powi(3)).sqrt() + tail * scal / (4.0 * PI),
        g * ie2 / (8.0 * PI).sqrt(),
        vol * tail,
    ]);
    Ok(ExpectedLK { u, values, regime: Regime::Quadrature })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuclideanConstants {
    pub gamma_sa: f64,
    pub gamma_tmc: f64,
    pub gamma_tgc: f64,
}

/// Expected curvatures of `{F ≥ u} ∩ U` for a stationary field on `R³` with volume `|U|`.
pub fn expected_lk_euclidean(t: &Eigentriple, u: f64, volume: f64) -> Result<(ExpectedLK, EuclideanConstants)> {
    if !(volume > 0.0) {
        return Err(Error::Domain(format!("volume must be positive, got {volume}")));
    }
    let e1v = e1(t)?;
    let e2v = e2(t)?;
    let g = (-0.5 * u * u).exp();
    let values = LKVector::new([
        g / (4.0 * PI * PI) * volume * (u * u - 1.0) * t.product().sqrt(),
        u * g * volume * (t.sum() - e1v) / (8.0 * PI.powi(3)).sqrt(),
        g * volume * e2v / (8.0 * PI).sqrt(),
        volume * gaussian_sf(u),
    ]);
    let consts = EuclideanConstants {
        gamma_sa: 8.0 / PI * e2v * e2v,
        gamma_tmc: 0.5 * (t.sum() - e1v),
        gamma_tgc: t.product().cbrt(),
    };
    Ok((ExpectedLK { u, values, regime: Regime::ExactClosedForm }, consts))
}

/// Leading large-μ terms in the `2g` normalization, `μ = ξ²|s|/5`.
pub fn asymptotic_lk(mu: f64, s: f64, u: f64) -> Result<ExpectedLK> {
    if !(mu > 0.0) || s == 0.0 {
        return Err(Error::Domain(format!("need mu > 0 and s != 0, got ({mu}, {s})")));
    }
    let sa = s.abs();
    let g = (-0.5 * u * u).exp();
    let values = LKVector::new([
        10.0 * (u * u - 1.0) * g * mu,
        SQRT_2 * 2f64.powf(2.5) * 5.0 * PI.sqrt() * u * g * mu / sa,
        2.0 * 2.0 * PI * PI * g * (5.0 / sa).sqrt() * mu.sqrt(),
        2f64.powf(1.5) * 8.0 * PI * PI * gaussian_sf(u),
    ]);
    Ok(ExpectedLK { u, values, regime: Regime::Asymptotic })
}

/// `L_j^{2g} = 2^{j/2} L_j`.
pub fn to_2g(l: &LKVector) -> LKVector {
    let a = l.as_array();
    LKVector::new([0, 1, 2, 3].map(|j| a[j] * 2f64.powf(j as f64 / 2.0)))
}

/// Riemannian-wave parameters `ξ² = s² = l(l+1)/3`.
pub fn wave_params(l: u32) -> (f64, f64) {
    let v = (l as f64) * (l as f64 + 1.0) / 3.0;
    (v, v)
}

pub fn berger_eigenvalue(l: u32, s: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let ll = (l as f64) * (l as f64 + 1.0);
    Ok(-4.0 * (ll - (1.0 - t.powi(-2)) * s * s))
}

//! Gaussian spin-s fields `f = Re X`, `X = Σ_l c_l Σ_m γ^l_{m,s} D^l_{m,s}`.

use crate::error::{Error, Result};
use crate::so3geom::LeftInvariantMetric;
use crate::wigner::{wigner_D, JacobiForm, WignerIndex};
use nalgebra::{Complex, Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerPoint {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

impl EulerPoint {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < PI) {
            return Err(Error::SingularChart(theta));
        }
        if !(phi.abs() <= PI && psi.abs() <= PI) {
            return Err(Error::Domain(format!("phi, psi must lie in (-pi, pi], got {phi}, {psi}")));
        }
        Ok(EulerPoint { phi, theta, psi })
    }

    /// Wraps φ and ψ into (−π, π]; θ must already be interior.
    pub fn wrapped(phi: f64, theta: f64, psi: f64) -> Result<Self> {
        Self::new(wrap_angle(phi), theta, wrap_angle(psi))
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.phi)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), self.theta)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), self.psi)
    }

    pub fn from_rotation(r: &Rotation3<f64>) -> Result<Self> {
        let m = r.matrix();
        let theta = m[(2, 2)].clamp(-1.0, 1.0).acos();
        let phi = m[(1, 2)].atan2(m[(0, 2)]);
        let psi = m[(2, 1)].atan2(-m[(2, 0)]);
        Self::new(phi, theta, psi)
    }

    /// Euler angles of `self⁻¹ · other`.
    pub fn relative_to(&self, other: &EulerPoint) -> Result<Self> {
        Self::from_rotation(&(self.rotation().inverse() * other.rotation()))
    }

    pub fn left_mul(&self, h: &Rotation3<f64>) -> Result<Self> {
        Self::from_rotation(&(h * self.rotation()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub s: i32,
    pub coeffs: BTreeMap<u32, f64>,
}

impl SpectrumSpec {
    pub fn new(s: i32, coeffs: BTreeMap<u32, f64>) -> Result<Self> {
        let spec = SpectrumSpec { s, coeffs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::Domain("empty spectrum".into()));
        }
        for (&l, &c) in &self.coeffs {
            if l < self.s.unsigned_abs() {
                return Err(Error::Domain(format!("degree {l} below |s| = {}", self.s.abs())));
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Domain(format!("coefficient c_{l} = {c} must be positive")));
            }
        }
        Ok(())
    }

    pub fn normalize(&self) -> Result<Self> {
        self.validate()?;
        let total: f64 = self.coeffs.values().map(|c| c * c / 2.0).sum();
        let k = total.sqrt();
        Ok(SpectrumSpec {
            s: self.s,
            coeffs: self.coeffs.iter().map(|(&l, &c)| (l, c / k)).collect(),
        })
    }

    pub fn is_normalized(&self) -> bool {
        let total: f64 = self.coeffs.values().map(|c| c * c / 2.0).sum();
        (total - 1.0).abs() < 1e-12
    }

    /// Normalized single-degree spectrum.
    pub fn monochromatic(s: i32, l: u32) -> Result<Self> {
        SpectrumSpec::new(s, BTreeMap::from([(l, 1.0)]))?.normalize()
    }

    /// Normalized spectrum on `lmin..=lmax` with `c_l ∝ (1+l)^{-decay}`.
    pub fn band_limited(s: i32, lmin: u32, lmax: u32, decay: f64) -> Result<Self> {
        if lmin > lmax {
            return Err(Error::Domain(format!("empty band {lmin}..={lmax}")));
        }
        let coeffs = (lmin..=lmax).map(|l| (l, (1.0 + l as f64).powf(-decay))).collect();
        SpectrumSpec::new(s, coeffs)?.normalize()
    }

    /// Mixture of two adjacent degrees `l, l + 1` with the given `ξ`.
    pub fn two_level(s: i32, xi: f64) -> Result<Self> {
        let level = |l: u32| ((l * (l + 1)) as f64 - (s * s) as f64) / 2.0;
        let x2 = xi * xi;
        let mut l = s.unsigned_abs().max(1);
        if !(x2.is_finite() && x2 >= level(l)) {
            return Err(Error::Domain(format!("xi = {xi} is below the lowest level for spin {s}")));
        }
        while level(l + 1) < x2 {
            l += 1;
        }
        let w_hi = (x2 - level(l)) / (level(l + 1) - level(l));
        let coeffs = BTreeMap::from([(l, (2.0 * (1.0 - w_hi)).sqrt()), (l + 1, (2.0 * w_hi).sqrt())])
            .into_iter()
            .filter(|&(_, c)| c > 0.0)
            .collect();
        SpectrumSpec::new(s, coeffs)
    }

    pub fn lmax(&self) -> u32 {
        *self.coeffs.keys().next_back().unwrap_or(&0)
    }

    pub fn xi_squared(&self) -> f64 {
        let s2 = (self.s * self.s) as f64;
        self.coeffs
            .iter()
            .map(|(&l, &c)| c * c / 2.0 * ((l * (l + 1)) as f64 - s2) / 2.0)
            .sum()
    }

    pub fn xi(&self) -> f64 {
        self.xi_squared().sqrt()
    }

    /// The Adler-Taylor metric parameters `(ξ, s)` of this field.
    pub fn metric(&self) -> Result<LeftInvariantMetric> {
        LeftInvariantMetric::new(self.xi(), self.s as f64)
    }

    /// `k(θ) = Σ_l c_l² d^l_{s,s}(θ)`; defined for every real θ.
    pub fn circular_covariance(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&l, &c)| {
                let idx = WignerIndex { l, m: self.s, s: self.s };
                c * c * JacobiForm::new(idx).jet(theta).d
            })
            .sum()
    }

    /// `E[f(p) f(q)]` for `q = p·R(φ,θ,ψ)`.
    pub fn covariance(&self, relative: &EulerPoint) -> f64 {
        0.5 * (self.s as f64 * (relative.phi + relative.psi)).cos()
            * self.circular_covariance(relative.theta)
    }

    /// `E[f(p) f(q)]` computed from `p⁻¹q` directly, so coincident points are fine.
    pub fn covariance_between(&self, p: &EulerPoint, q: &EulerPoint) -> f64 {
        let r = p.rotation().inverse() * q.rotation();
        let m = r.matrix();
        let theta = m[(2, 2)].clamp(-1.0, 1.0).acos();
        let sum = (m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]);
        0.5 * (self.s as f64 * sum).cos() * self.circular_covariance(theta)
    }
}

/// Value, chart gradient and raw chart Hessian of a field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

impl FieldJet {
    /// `Hess_ij = ∂_i∂_j f − Γ^k_{ij} ∂_k f`.
    pub fn riemannian_hessian(&self, metric: &LeftInvariantMetric, theta: f64) -> Matrix3<f64> {
        let g = metric.christoffel_unchecked(theta).0;
        Matrix3::from_fn(|i, j| self.hess[(i, j)] - (0..3).map(|k| g[k][i][j] * self.grad[k]).sum::<f64>())
    }
}

/// `Σ_l c_l γ^l_{m,s} d^l_{m,s}` and its θ-derivatives, for each m.
struct ThetaRow {
    a: Vec<[Complex<f64>; 3]>,
}

#[derive(Debug, Clone, Copy)]
struct Harmonic {
    m: i32,
    weight: Complex<f64>,
    form: JacobiForm,
}

#[derive(Debug, Clone)]
pub struct FieldRealization {
    pub spec: SpectrumSpec,
    pub seed: u64,
    gammas: BTreeMap<(u32, i32), Complex<f64>>,
    harmonics: Vec<Harmonic>,
    lmax: i32,
    /// `X = e^{-isψ} Σ_{m,k} C_{mk} e^{-imφ} e^{ikθ}`, row-major in `(m, k)`.
    fourier: Vec<Complex<f64>>,
}

/// Serialized form: coefficients are regenerated from `(spec, seed)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub spec: SpectrumSpec,
    pub seed: u64,
}

fn stream_id(l: u32, m: i32) -> u64 {
    ((l as u64) << 32) | (m as u32 as u64)
}

/// Exact Fourier coefficients in θ of `Σ_l w_{lm} d^l_{ms}(θ)` for each `m`:
/// each `d^l_{ms}` is a trigonometric polynomial of degree `l ≤ lmax`, so a
/// DFT on `2·lmax + 1` equispaced nodes recovers it.
fn fourier_table(harmonics: &[Harmonic], lmax: i32) -> Vec<Complex<f64>> {
    let n = (2 * lmax + 1) as usize;
    let mut table = vec![Complex::new(0.0, 0.0); n * n];
    let nodes: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    for h in harmonics {
        let samples: Vec<f64> = nodes.iter().map(|&t| h.form.jet(t).d).collect();
        let row = &mut table[(h.m + lmax) as usize * n..][..n];
        for (slot, k) in row.iter_mut().zip(-lmax..=lmax) {
            let c: Complex<f64> = samples
                .iter()
                .zip(&nodes)
                .map(|(&d, &t)| Complex::from_polar(d, -(k as f64) * t))
                .sum();
            *slot += h.weight * c / n as f64;
        }
    }
    table
}

impl FieldRealization {
    pub fn sample(spec: &SpectrumSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !spec.is_normalized() {
            return Err(Error::Domain("spectrum must be normalized before sampling".into()));
        }
        let mut gammas = BTreeMap::new();
        for &l in spec.coeffs.keys() {
            for m in -(l as i32)..=(l as i32) {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(stream_id(l, m));
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                gammas.insert((l, m), Complex::new(re, im) * FRAC_1_SQRT_2);
            }
        }
        Ok(Self::from_gammas(spec.clone(), seed, gammas))
    }

    pub fn from_record(rec: &RealizationRecord) -> Result<Self> {
        Self::sample(&rec.spec, rec.seed)
    }

    pub fn record(&self) -> RealizationRecord {
        RealizationRecord { spec: self.spec.clone(), seed: self.seed }
    }

    fn from_gammas(spec: SpectrumSpec, seed: u64, gammas: BTreeMap<(u32, i32), Complex<f64>>) -> Self {
        let harmonics: Vec<Harmonic> = gammas
            .iter()
            .map(|(&(l, m), &g)| Harmonic {
                m,
                weight: g * spec.coeffs[&l],
                form: JacobiForm::new(WignerIndex { l, m, s: spec.s }),
            })
            .collect();
        let lmax = spec.lmax() as i32;
        let fourier = fourier_table(&harmonics, lmax);
        FieldRealization { spec, seed, gammas, harmonics, lmax, fourier }
    }

    /// The field `y ↦ f(h·y)`: coefficients mix within each degree through `D^l(h)`.
    /// Its record still describes the untranslated realization.
    pub fn left_translated(&self, h: &EulerPoint) -> Self {
        let mut gammas = BTreeMap::new();
        for &l in self.spec.coeffs.keys() {
            let li = l as i32;
            for k in -li..=li {
                let g: Complex<f64> = (-li..=li)
                    .map(|m| self.gammas[&(l, m)] * wigner_D(WignerIndex { l, m, s: k }, h).expect("valid index"))
                    .sum();
                gammas.insert((l, k), g);
            }
        }
        Self::from_gammas(self.spec.clone(), self.seed, gammas)
    }

    pub fn gamma(&self, l: u32, m: i32) -> Option<Complex<f64>> {
        self.gammas.get(&(l, m)).copied()
    }

    fn theta_row(&self, theta: f64) -> ThetaRow {
        let z = Complex::new(0.0, 0.0);
        let n = (2 * self.lmax + 1) as usize;
        let step = Complex::from_polar(1.0, theta);
        let mut powers = Vec::with_capacity(n);
        let mut e = Complex::from_polar(1.0, -(self.lmax as f64) * theta);
        for _ in 0..n {
            powers.push(e);
            e *= step;
        }
        let a = self
            .fourier
            .chunks_exact(n)
            .map(|row| {
                let mut out = [z; 3];
                for (j, (c, p)) in row.iter().zip(&powers).enumerate() {
                    let k = (j as i32 - self.lmax) as f64;
                    let v = c * p;
                    out[0] += v;
                    out[1] += Complex::new(-k * v.im, k * v.re);
                    out[2] -= k * k * v;
                }
                out
            })
            .collect();
        ThetaRow { a }
    }

    /// `B = Σ_m e^{-imφ} A_m` and derivatives: `[B, B_φ, B_θ, B_φφ, B_φθ, B_θθ]`.
    fn phi_combine(&self, row: &ThetaRow, phi: f64) -> [Complex<f64>; 6] {
        let z = Complex::new(0.0, 0.0);
        let mut out = [z; 6];
        let step = Complex::from_polar(1.0, -phi);
        let mut e = Complex::from_polar(1.0, self.lmax as f64 * phi);
        for (i, am) in row.a.iter().enumerate() {
            let m = (i as i32 - self.lmax) as f64;
            let im = Complex::new(0.0, -m);
            let v = e * am[0];
            let vt = e * am[1];
            out[0] += v;
            out[1] += im * v;
            out[2] += vt;
            out[3] += -m * m * v;
            out[4] += im * vt;
            out[5] += e * am[2];
            e *= step;
        }
        out
    }

    fn jet_from(&self, b: &[Complex<f64>; 6], psi: f64) -> FieldJet {
        let s = self.spec.s as f64;
        let e = Complex::from_polar(1.0, -s * psi);
        let is = Complex::new(0.0, -s);
        let x = e * b[0];
        let xp = e * b[1];
        let xt = e * b[2];
        let value = x.re;
        let grad = Vector3::new(xp.re, xt.re, (is * x).re);
        let hpp = (e * b[3]).re;
        let hpt = (e * b[4]).re;
        let htt = (e * b[5]).re;
        let hps = (is * xp).re;
        let hts = (is * xt).re;
        let hss = -s * s * value;
        FieldJet {
            value,
            grad,
            hess: Matrix3::new(hpp, hpt, hps, hpt, htt, hts, hps, hts, hss),
        }
    }

    /// Jet at raw chart coordinates (θ need not be interior).
    pub fn jet_at(&self, phi: f64, theta: f64, psi: f64) -> FieldJet {
        let row = self.theta_row(theta);
        let b = self.phi_combine(&row, phi);
        self.jet_from(&b, psi)
    }

    pub fn jet(&self, p: &EulerPoint) -> FieldJet {
        self.jet_at(p.phi, p.theta, p.psi)
    }

    pub fn evaluate_complex(&self, p: &EulerPoint) -> Complex<f64> {
        let s = self.spec.s as f64;
        self.harmonics
            .iter()
            .map(|h| h.weight * Complex::from_polar(h.form.jet(p.theta).d, -(h.m as f64) * p.phi - s * p.psi))
            .sum()
    }

    pub fn evaluate(&self, p: &EulerPoint) -> f64 {
        self.evaluate_complex(p).re
    }

    pub fn chart_gradient(&self, p: &EulerPoint) -> Vector3<f64> {
        self.jet(p).grad
    }

    pub fn chart_hessian_raw(&self, p: &EulerPoint) -> Matrix3<f64> {
        self.jet(p).hess
    }

    pub fn riemannian_hessian(&self, p: &EulerPoint, metric: &LeftInvariantMetric) -> Matrix3<f64> {
        self.jet(p).riemannian_hessian(metric, p.theta)
    }

    /// Values (and optionally chart gradients) on a tensor grid, ordered
    /// `[(i_phi * n_theta + j_theta) * n_psi + k_psi]`.
    pub fn grid_values(
        &self,
        phis: &[f64],
        thetas: &[f64],
        psis: &[f64],
        with_grad: bool,
    ) -> (Vec<f64>, Option<Vec<[f64; 3]>>) {
        use rayon::prelude::*;
        let (nt, nk) = (thetas.len(), psis.len());
        let rows: Vec<ThetaRow> = thetas.par_iter().map(|&t| self.theta_row(t)).collect();
        let phases: Vec<Complex<f64>> = psis
            .iter()
            .map(|&p| Complex::from_polar(1.0, -(self.spec.s as f64) * p))
            .collect();
        let s = self.spec.s as f64;
        let slabs: Vec<(Vec<f64>, Vec<[f64; 3]>)> = phis
            .par_iter()
            .map(|&phi| {
                let mut vals = Vec::with_capacity(nt * nk);
                let mut grads = Vec::with_capacity(if with_grad { nt * nk } else { 0 });
                for row in &rows {
                    let b = self.phi_combine(row, phi);
                    for e in &phases {
                        let x = e * b[0];
                        vals.push(x.re);
                        if with_grad {
                            grads.push([(e * b[1]).re, (e * b[2]).re, s * x.im]);
                        }
                    }
                }
                (vals, grads)
            })
            .collect();
        let mut values = Vec::with_capacity(phis.len() * nt * nk);
        let mut grads = Vec::new();
        for (v, g) in slabs {
            values.extend(v);
            grads.extend(g);
        }
        (values, with_grad.then_some(grads))
    }
}

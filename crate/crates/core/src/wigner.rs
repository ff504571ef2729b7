//! Wigner d- and D-functions with exact θ-derivatives.
//!
//! `d^l_{m,s}(θ)` is evaluated through its Jacobi-polynomial form
//! `sin^a(θ/2) cos^b(θ/2) P_k^{(a,b)}(cos θ)`, which stays accurate to
//! round-off for large `l` where the alternating factorial sum does not.
//! Convention: `D^l_{m,s}(R3(φ)R2(θ)R3(ψ)) = e^{-imφ} d^l_{m,s}(θ) e^{-isψ}`.

use crate::error::{Error, Result};
use crate::spinfield::EulerPoint;
use nalgebra::Complex;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WignerIndex {
    pub l: u32,
    pub m: i32,
    pub s: i32,
}

impl WignerIndex {
    pub fn new(l: u32, m: i32, s: i32) -> Result<Self> {
        let idx = WignerIndex { l, m, s };
        idx.check()?;
        Ok(idx)
    }

    fn check(&self) -> Result<()> {
        let l = self.l as i64;
        if (self.m as i64).abs() > l || (self.s as i64).abs() > l {
            return Err(Error::Domain(format!(
                "Wigner index requires |m|, |s| <= l, got l={}, m={}, s={}",
                self.l, self.m, self.s
            )));
        }
        Ok(())
    }
}

/// Value and first two θ-derivatives of `d^l_{m,s}`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DJet {
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} outside [0, pi]")));
    }
    Ok(())
}

pub fn wigner_d(idx: WignerIndex, theta: f64) -> Result<f64> {
    idx.check()?;
    check_theta(theta)?;
    Ok(d_jet(idx, theta).d)
}

pub fn wigner_d_theta_derivs(idx: WignerIndex, theta: f64, order: u8) -> Result<f64> {
    idx.check()?;
    check_theta(theta)?;
    let j = d_jet(idx, theta);
    match order {
        1 => Ok(j.d1),
        2 => Ok(j.d2),
        _ => Err(Error::Domain(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

pub fn wigner_d_jet(idx: WignerIndex, theta: f64) -> Result<DJet> {
    idx.check()?;
    check_theta(theta)?;
    Ok(d_jet(idx, theta))
}

#[allow(non_snake_case)]
pub fn wigner_D(idx: WignerIndex, point: &EulerPoint) -> Result<Complex<f64>> {
    idx.check()?;
    let d = d_jet(idx, point.theta).d;
    let phase = -(idx.m as f64) * point.phi - (idx.s as f64) * point.psi;
    Ok(Complex::from_polar(d, phase))
}

/// Jacobi parameters `(k, a, b)`, sign and normalization of `d^l_{m,s}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct JacobiForm {
    k: u32,
    a: u32,
    b: u32,
    coeff: f64,
    diagonal: bool,
}

impl JacobiForm {
    pub(crate) fn new(idx: WignerIndex) -> Self {
        let (l, m, s) = (idx.l as i64, idx.m as i64, idx.s as i64);
        let k = (l + s).min(l - s).min(l + m).min(l - m);
        let (a, lambda) = if k == l + s || k == l - m {
            (m - s, m - s)
        } else {
            (s - m, 0)
        };
        let b = 2 * l - 2 * k - a;
        let ln_norm = 0.5
            * (ln_binom((2 * l - k) as u64, (k + a) as u64) - ln_binom((k + b) as u64, b as u64));
        let sign = if lambda.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        JacobiForm {
            k: k as u32,
            a: a as u32,
            b: b as u32,
            coeff: sign * ln_norm.exp(),
            diagonal: m == s,
        }
    }

    /// Jet at any real θ; the Jacobi form is a trigonometric polynomial.
    pub(crate) fn jet(&self, theta: f64) -> DJet {
        let (sh, ch) = (0.5 * theta).sin_cos();
        let (st, ct) = theta.sin_cos();
        let (a, b) = (self.a as i32, self.b as i32);
        let (af, bf) = (a as f64, b as f64);

        let h = pw(sh, a) * pw(ch, b);
        let h1 = term(0.5 * af, sh, a - 1, ch, b + 1) - term(0.5 * bf, sh, a + 1, ch, b - 1);
        let h2 = term(0.25 * af * (af - 1.0), sh, a - 2, ch, b + 2)
            - term(0.25 * (af * (bf + 1.0) + bf * (af + 1.0)), sh, a, ch, b)
            + term(0.25 * bf * (bf - 1.0), sh, a + 2, ch, b - 2);

        let k = self.k;
        let p = jacobi(k, af, bf, ct);
        let (dp, ddp) = if k >= 1 {
            let c1 = 0.5 * (k as f64 + af + bf + 1.0);
            let dp = c1 * jacobi(k - 1, af + 1.0, bf + 1.0, ct);
            let ddp = if k >= 2 {
                c1 * 0.5 * (k as f64 + af + bf + 2.0) * jacobi(k - 2, af + 2.0, bf + 2.0, ct)
            } else {
                0.0
            };
            (dp, ddp)
        } else {
            (0.0, 0.0)
        };
        let p1 = -st * dp;
        let p2 = st * st * ddp - ct * dp;

        let d = if theta == 0.0 {
            if self.diagonal { 1.0 } else { 0.0 }
        } else {
            self.coeff * h * p
        };
        DJet {
            d,
            d1: self.coeff * (h1 * p + h * p1),
            d2: self.coeff * (h2 * p + 2.0 * h1 * p1 + h * p2),
        }
    }
}

pub(crate) fn d_jet(idx: WignerIndex, theta: f64) -> DJet {
    JacobiForm::new(idx).jet(theta)
}

fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn ln_binom(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn pw(x: f64, n: i32) -> f64 {
    if n == 0 {
        1.0
    } else {
        x.powi(n)
    }
}

fn term(c: f64, x: f64, i: i32, y: f64, j: i32) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * pw(x, i) * pw(y, j)
    }
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by the three-term recurrence.
pub(crate) fn jacobi(n: u32, a: f64, b: f64, x: f64) -> f64 {
    let p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let mut prev = p0;
    let mut cur = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let lhs = 2.0 * k * (k + a + b) * (c - 2.0);
        let next = ((c - 1.0) * (c * (c - 2.0) * x + a * a - b * b) * cur
            - 2.0 * (k + a - 1.0) * (k + b - 1.0) * c * prev)
            / lhs;
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_fact(n: i64) -> f64 {
        ln_factorial(n as u64)
    }

    /// Explicit alternating factorial sum.
    fn explicit_sum(l: i64, m: i64, s: i64, theta: f64) -> f64 {
        let (sh, ch) = (0.5 * theta).sin_cos();
        let pre = 0.5 * (ln_fact(l + m) + ln_fact(l - m) + ln_fact(l + s) + ln_fact(l - s));
        let kmin = 0.max(s - m);
        let kmax = (l + s).min(l - m);
        let mut acc = 0.0;
        for k in kmin..=kmax {
            let den = ln_fact(l + s - k) + ln_fact(k) + ln_fact(l - k - m) + ln_fact(m - s + k);
            let sign = if (m - s + k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            acc += sign
                * (pre - den).exp()
                * ch.powi((2 * l + s - m - 2 * k) as i32)
                * sh.powi((m - s + 2 * k) as i32);
        }
        acc
    }

    #[test]
    fn scalar_representation() {
        let idx = WignerIndex::new(0, 0, 0).unwrap();
        for t in [0.0, 0.3, 2.0, PI] {
            assert_eq!(wigner_d(idx, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn small_cases() {
        let idx = WignerIndex::new(1, 1, 1).unwrap();
        assert!((wigner_d(idx, PI / 2.0).unwrap() - 0.5).abs() < 1e-15);
        let idx = WignerIndex::new(2, 2, 2).unwrap();
        assert!(wigner_d_theta_derivs(idx, 0.0, 1).unwrap().abs() < 1e-15);
        assert!((wigner_d_theta_derivs(idx, 0.0, 2).unwrap() + 1.0).abs() < 1e-14);
        for l in 0..12u32 {
            for s in -(l as i32)..=(l as i32) {
                assert_eq!(wigner_d(WignerIndex::new(l, s, s).unwrap(), 0.0).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn matches_explicit_sum() {
        for l in 0..=20i64 {
            for m in -l..=l {
                for s in -l..=l {
                    for &t in &[0.05, 0.7, 1.6, 2.9] {
                        let idx = WignerIndex::new(l as u32, m as i32, s as i32).unwrap();
                        let got = wigner_d(idx, t).unwrap();
                        let want = explicit_sum(l, m, s, t);
                        assert!((got - want).abs() < 1e-9, "l={l} m={m} s={s} t={t}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn unitarity_up_to_l100() {
        for l in (0..=100u32).step_by(7).chain([100]) {
            for s in [0i32, 1, 2, -3, l as i32 / 2, l as i32] {
                if s.unsigned_abs() > l {
                    continue;
                }
                for i in 0..=16 {
                    let t = PI * i as f64 / 16.0;
                    let sum: f64 = (-(l as i32)..=l as i32)
                        .map(|m| wigner_d(WignerIndex::new(l, m, s).unwrap(), t).unwrap().powi(2))
                        .sum();
                    assert!((sum - 1.0).abs() <= 1e-10, "l={l} s={s} t={t}: {sum}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for l in 0..=10u32 {
            for m in -(l as i32)..=l as i32 {
                for s in -(l as i32)..=l as i32 {
                    let idx = WignerIndex::new(l, m, s).unwrap();
                    for i in 0..=8 {
                        let t = 0.1 + (PI - 0.2) * i as f64 / 8.0;
                        let h1 = 1e-5;
                        let fd1 = (wigner_d(idx, t + h1).unwrap() - wigner_d(idx, t - h1).unwrap())
                            / (2.0 * h1);
                        let h2 = 1e-4;
                        let fd2 = (wigner_d(idx, t + h2).unwrap() - 2.0 * wigner_d(idx, t).unwrap()
                            + wigner_d(idx, t - h2).unwrap())
                            / (h2 * h2);
                        let j = wigner_d_jet(idx, t).unwrap();
                        assert!((j.d1 - fd1).abs() < 1e-7, "{idx:?} t={t}");
                        assert!((j.d2 - fd2).abs() < 1e-5, "{idx:?} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_expansion_near_zero() {
        for (l, s) in [(2u32, 2i32), (5, 1), (8, 3)] {
            let idx = WignerIndex::new(l, s, s).unwrap();
            let c = (l * (l + 1)) as f64 - (s * s) as f64;
            let t: f64 = 1e-3;
            let want = 1.0 - 0.5 * c * t * t / 2.0;
            assert!((wigner_d(idx, t).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn big_d_phase() {
        let idx = WignerIndex::new(3, 2, -1).unwrap();
        let p = EulerPoint::new(0.4, 1.1, -2.0).unwrap();
        let q = EulerPoint::new(-1.3, 1.1, 0.7).unwrap();
        let a = wigner_D(idx, &p).unwrap();
        let b = wigner_D(idx, &q).unwrap();
        assert!((a.norm() - b.norm()).abs() < 1e-15);
        assert_eq!(wigner_D(WignerIndex::new(0, 0, 0).unwrap(), &p).unwrap(), Complex::new(1.0, 0.0));
    }

    #[test]
    fn index_out_of_range() {
        assert!(WignerIndex::new(2, 3, 0).is_err());
        assert!(wigner_d(WignerIndex { l: 1, m: 0, s: 2 }, 0.2).is_err());
        assert!(wigner_d(WignerIndex { l: 1, m: 0, s: 0 }, -0.1).is_err());
    }
}

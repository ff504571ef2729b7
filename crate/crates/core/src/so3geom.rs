//! Left-invariant metrics `g_{ξ,s}` on SO(3) in Euler-angle coordinates (φ, θ, ψ).
//!
//! Index 0 is φ, 1 is θ, 2 is ψ. The Riemann (0,4) tensor is stored on the
//! pair basis `(φθ), (φψ), (θψ)`; curvature signs follow
//! `scal = -2 Σ_{i<j} R_{ijij}` so that sectional curvature is `-R(a,b,a,b)/|a∧b|²`.

use crate::error::{Error, Result};
use crate::lkestim::LKVector;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftInvariantMetric {
    pub xi: f64,
    pub s: f64,
}

/// `Γ^k_{ij}` stored as `g[k][i][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Christoffel(pub [[[f64; 3]; 3]; 3]);

/// `R^m_{ijk}` stored as `r[m][i][j][k]`; `R³_{122}` is left at zero (not provided).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Riemann13(pub [[[[f64; 3]; 3]; 3]; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinatePlane {
    PhiTheta,
    PhiPsi,
    ThetaPsi,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < PI {
        Ok(())
    } else {
        Err(Error::SingularChart(theta))
    }
}

impl LeftInvariantMetric {
    pub fn new(xi: f64, s: f64) -> Result<Self> {
        if !(xi > 0.0) || s == 0.0 || !s.is_finite() || !xi.is_finite() {
            return Err(Error::Domain(format!("metric needs xi > 0 and s != 0, got ({xi}, {s})")));
        }
        Ok(LeftInvariantMetric { xi, s })
    }

    pub fn standard() -> Self {
        LeftInvariantMetric { xi: 1.0, s: 1.0 }
    }

    fn x2(&self) -> f64 {
        self.xi * self.xi
    }

    fn s2(&self) -> f64 {
        self.s * self.s
    }

    pub fn gram(&self, theta: f64) -> Result<Matrix3<f64>> {
        check_theta(theta)?;
        Ok(self.gram_unchecked(theta))
    }

    pub(crate) fn gram_unchecked(&self, theta: f64) -> Matrix3<f64> {
        let (st, ct) = theta.sin_cos();
        let (x2, s2) = (self.x2(), self.s2());
        Matrix3::new(
            x2 * st * st + s2 * ct * ct, 0.0, s2 * ct,
            0.0, x2, 0.0,
            s2 * ct, 0.0, s2,
        )
    }

    pub fn gram_inverse(&self, theta: f64) -> Result<Matrix3<f64>> {
        check_theta(theta)?;
        Ok(self.gram_inverse_unchecked(theta))
    }

    pub(crate) fn gram_inverse_unchecked(&self, theta: f64) -> Matrix3<f64> {
        let (st, ct) = theta.sin_cos();
        let (x2, s2) = (self.x2(), self.s2());
        let q = 1.0 / (x2 * st * st);
        Matrix3::new(
            q, 0.0, -ct * q,
            0.0, 1.0 / x2, 0.0,
            -ct * q, 0.0, 1.0 / s2 + ct * ct * q,
        )
    }

    pub fn christoffel(&self, theta: f64) -> Result<Christoffel> {
        check_theta(theta)?;
        Ok(self.christoffel_unchecked(theta))
    }

    pub(crate) fn christoffel_unchecked(&self, theta: f64) -> Christoffel {
        let (st, ct) = theta.sin_cos();
        let r = self.s2() / self.x2();
        let mut g = [[[0.0; 3]; 3]; 3];
        let mut set = |k: usize, i: usize, j: usize, v: f64| {
            g[k][i][j] = v;
            g[k][j][i] = v;
        };
        set(0, 0, 1, ct / st * (1.0 - 0.5 * r));
        set(0, 1, 2, -0.5 * r / st);
        set(1, 0, 0, -0.5 * (2.0 * theta).sin() * (1.0 - r));
        set(1, 0, 2, 0.5 * r * st);
        set(2, 0, 1, -(1.0 - 0.5 * r) * ct * ct / st - 0.5 * st);
        set(2, 1, 2, 0.5 * r * ct / st);
        Christoffel(g)
    }

    /// Riemann (0,4) tensor on the pair basis.
    pub fn riemann04(&self, theta: f64) -> Result<Matrix3<f64>> {
        check_theta(theta)?;
        Ok(self.riemann04_unchecked(theta))
    }

    pub(crate) fn riemann04_unchecked(&self, theta: f64) -> Matrix3<f64> {
        let (st, ct) = theta.sin_cos();
        let (x2, s2) = (self.x2(), self.s2());
        let s4 = s2 * s2;
        let a = -st * st * (x2 - 0.75 * s2) - ct * ct * s4 / (4.0 * x2);
        let c = ct * s4 / (4.0 * x2);
        Matrix3::new(
            a, 0.0, c,
            0.0, -st * st * s4 / (4.0 * x2), 0.0,
            c, 0.0, -s4 / (4.0 * x2),
        )
    }

    pub fn riemann13(&self, theta: f64) -> Result<Riemann13> {
        check_theta(theta)?;
        let (st, ct) = theta.sin_cos();
        let r = self.s2() / self.x2();
        let q = 0.25 * r * r;
        let mut t = [[[[0.0; 3]; 3]; 3]; 3];
        let mut set = |m: usize, i: usize, j: usize, k: usize, v: f64| {
            t[m][i][j][k] = v;
            t[m][j][i][k] = -v;
        };
        set(0, 0, 1, 1, 1.0 - 0.75 * r);
        set(0, 0, 2, 0, q * ct);
        set(0, 0, 2, 2, q);
        set(1, 0, 1, 0, -st * st * (1.0 - 0.75 * r) - ct * ct * q);
        set(1, 0, 1, 2, -q * ct);
        set(1, 1, 2, 0, q * ct);
        set(1, 1, 2, 2, q);
        set(2, 0, 2, 0, -st * st * 0.25 * r - ct * ct * q);
        set(2, 0, 2, 2, -q * ct);
        set(2, 1, 2, 1, -0.25 * r);
        Ok(Riemann13(t))
    }

    /// Lowers `riemann13` with the Gram matrix onto the pair basis. Entries that
    /// would need the omitted `R³_{122}` use `R_{ijkl} = -R_{ijlk}` instead.
    pub fn lower_riemann13(&self, theta: f64) -> Result<Matrix3<f64>> {
        let r = self.riemann13(theta)?.0;
        let g = self.gram_unchecked(theta);
        let direct = |i: usize, j: usize, k: usize, l: usize| -> f64 {
            (0..3).map(|m| r[m][i][j][k] * g[(l, m)]).sum()
        };
        let lowered = |i: usize, j: usize, k: usize, l: usize| -> f64 {
            if i.min(j) == 0 && i.max(j) == 1 && k == 1 {
                if l == 1 {
                    0.0
                } else {
                    -direct(i, j, l, k)
                }
            } else {
                direct(i, j, k, l)
            }
        };
        let mut out = Matrix3::zeros();
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            for (q, &(k, l)) in PAIRS.iter().enumerate() {
                out[(p, q)] = lowered(i, j, k, l);
            }
        }
        Ok(out)
    }

    pub fn scalar_curvature(&self) -> f64 {
        2.0 / self.x2() - self.s2() / (2.0 * self.x2() * self.x2())
    }

    /// `Σ g^{il} g^{jk} R_{ijkl}` from the pair-basis tensor.
    pub fn scalar_curvature_by_contraction(&self, theta: f64) -> Result<f64> {
        let full = expand_pairs(&self.riemann04(theta)?);
        let gi = self.gram_inverse_unchecked(theta);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        acc += gi[(i, l)] * gi[(j, k)] * full[i][j][k][l];
                    }
                }
            }
        }
        Ok(acc)
    }

    pub fn sectional(&self, plane: CoordinatePlane, theta: f64) -> Result<f64> {
        let (a, b) = match plane {
            CoordinatePlane::PhiTheta => (Vector3::x(), Vector3::y()),
            CoordinatePlane::PhiPsi => (Vector3::x(), Vector3::z()),
            CoordinatePlane::ThetaPsi => (Vector3::y(), Vector3::z()),
        };
        self.sectional_of(&a, &b, theta)
    }

    pub fn sectional_of(&self, a: &Vector3<f64>, b: &Vector3<f64>, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let g = self.gram_unchecked(theta);
        let area2 = a.dot(&(g * a)) * b.dot(&(g * b)) - a.dot(&(g * b)).powi(2);
        if area2 <= 0.0 {
            return Err(Error::Domain("sectional curvature of a degenerate plane".into()));
        }
        Ok(-riemann_abab(&self.riemann04_unchecked(theta), a, b) / area2)
    }

    pub fn lk_so3(&self) -> LKVector {
        let s = self.s.abs();
        LKVector::new([
            0.0,
            4.0 * s * PI * (1.0 - self.s2() / (4.0 * self.x2())),
            0.0,
            8.0 * PI * PI * self.x2() * s,
        ])
    }

    pub fn volume_element(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        Ok(self.x2() * self.s.abs() * theta.sin())
    }
}

/// `R(a,b,a,b)` for the pair-basis tensor.
pub fn riemann_abab(r04: &Matrix3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let w = Vector3::from_iterator(PAIRS.iter().map(|&(i, j)| a[i] * b[j] - a[j] * b[i]));
    w.dot(&(r04 * w))
}

/// Full `R_{ijkl}` from the pair basis using the algebraic symmetries.
pub fn expand_pairs(r04: &Matrix3<f64>) -> [[[[f64; 3]; 3]; 3]; 3] {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for (p, &(i, j)) in PAIRS.iter().enumerate() {
        for (q, &(k, l)) in PAIRS.iter().enumerate() {
            let v = r04[(p, q)];
            out[i][j][k][l] = v;
            out[j][i][k][l] = -v;
            out[i][j][l][k] = -v;
            out[j][i][l][k] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics() -> Vec<LeftInvariantMetric> {
        let mut v = vec![];
        for xi in [0.6, 1.0, 1.7, 3.0] {
            for s in [1.0, -1.3, 2.0] {
                v.push(LeftInvariantMetric::new(xi, s).unwrap());
            }
        }
        v
    }

    fn thetas() -> Vec<f64> {
        (1..20).map(|i| PI * i as f64 / 20.0).collect()
    }

    #[test]
    fn gram_examples() {
        let g = LeftInvariantMetric::standard().gram(PI / 2.0).unwrap();
        assert!((g - Matrix3::identity()).abs().max() < 1e-15);
        let m = LeftInvariantMetric::new(2.0, 3.0).unwrap();
        let g = m.gram(PI / 2.0).unwrap();
        assert!((g - Matrix3::from_diagonal(&Vector3::new(4.0, 4.0, 9.0))).abs().max() < 1e-14);
        assert!(m.gram(0.0).is_err());
        assert!(m.gram(PI).is_err());
    }

    #[test]
    fn determinant_and_inverse() {
        for m in metrics() {
            for t in thetas() {
                let g = m.gram(t).unwrap();
                let want = m.xi.powi(4) * m.s * m.s * t.sin().powi(2);
                assert!((g.determinant() - want).abs() < 1e-12 * want.max(1.0));
                let id = g * m.gram_inverse(t).unwrap();
                assert!((id - Matrix3::identity()).abs().max() < 1e-12);
            }
        }
    }

    fn fd_christoffel(m: &LeftInvariantMetric, t: f64) -> [[[f64; 3]; 3]; 3] {
        let h = 1e-6;
        let dg = (m.gram_unchecked(t + h) - m.gram_unchecked(t - h)) / (2.0 * h);
        let d = |i: usize, j: usize, k: usize| if k == 1 { dg[(i, j)] } else { 0.0 };
        let gi = m.gram_inverse_unchecked(t);
        let mut out = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out[k][i][j] = (0..3)
                        .map(|l| 0.5 * gi[(k, l)] * (d(j, l, i) + d(i, l, j) - d(i, j, l)))
                        .sum();
                }
            }
        }
        out
    }

    #[test]
    fn christoffel_matches_finite_differences() {
        for m in metrics() {
            for t in thetas() {
                let exact = m.christoffel(t).unwrap().0;
                let fd = fd_christoffel(&m, t);
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            assert!((exact[k][i][j] - fd[k][i][j]).abs() < 1e-6, "{m:?} t={t} {k}{i}{j}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_examples() {
        let m = LeftInvariantMetric::new(1.7, 1.3).unwrap();
        let t = 0.83;
        let g = m.christoffel(t).unwrap().0;
        let r = 1.3f64.powi(2) / 1.7f64.powi(2);
        assert!((g[1][0][0] + (2.0 * t).sin() / 2.0 * (1.0 - r)).abs() < 1e-15);
        assert_eq!(g[0][0][0], 0.0);
        assert_eq!(g[0][2][2], 0.0);
        let h = LeftInvariantMetric::new(2.0, 2.0).unwrap().christoffel(t).unwrap().0;
        assert!((h[0][0][1] - t.cos() / (2.0 * t.sin())).abs() < 1e-15);
    }

    /// Riemann (1,3) from finite differences of the closed-form Christoffel symbols.
    fn fd_riemann13(m: &LeftInvariantMetric, t: f64) -> [[[[f64; 3]; 3]; 3]; 3] {
        let h = 1e-6;
        let gp = m.christoffel_unchecked(t + h).0;
        let gm = m.christoffel_unchecked(t - h).0;
        let g = m.christoffel_unchecked(t).0;
        let d = |i: usize, a: usize, b: usize, c: usize| {
            if i == 1 {
                (gp[a][b][c] - gm[a][b][c]) / (2.0 * h)
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

    #[test]
    fn riemann13_matches_finite_differences() {
        for m in metrics() {
            for t in thetas() {
                let exact = m.riemann13(t).unwrap().0;
                let fd = fd_riemann13(&m, t);
                for a in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            for k in 0..3 {
                                if a == 2 && k == 1 && i.min(j) == 0 && i.max(j) == 1 {
                                    continue;
                                }
                                assert!(
                                    (exact[a][i][j][k] - fd[a][i][j][k]).abs() < 1e-6,
                                    "{m:?} t={t} R^{a}_{i}{j}{k}: {} vs {}",
                                    exact[a][i][j][k],
                                    fd[a][i][j][k]
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn omitted_component_is_the_only_gap() {
        let m = LeftInvariantMetric::new(1.7, 1.3).unwrap();
        let t = 0.83;
        let fd = fd_riemann13(&m, t);
        let want = (m.s * m.s - m.xi * m.xi) * t.cos() / (m.xi * m.xi);
        assert!((fd[2][0][1][1] - want).abs() < 1e-6);
    }

    #[test]
    fn lowering_reproduces_riemann04() {
        for m in metrics() {
            for t in thetas() {
                let a = m.riemann04(t).unwrap();
                let b = m.lower_riemann13(t).unwrap();
                assert!((a - b).abs().max() < 1e-10, "{m:?} t={t}\n{a}\n{b}");
            }
        }
    }

    #[test]
    fn riemann04_examples() {
        let m = LeftInvariantMetric::new(1.5, 2.0).unwrap();
        let t = 1.1;
        let r = m.riemann04(t).unwrap();
        assert!((r[(2, 2)] + 16.0 / (4.0 * 2.25)).abs() < 1e-14);
        assert!((r[(1, 1)] + 16.0 / (4.0 * 2.25) * t.sin().powi(2)).abs() < 1e-14);
        assert_eq!(r[(1, 2)], 0.0);
        assert!((r - r.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn scalar_curvature_values() {
        assert!((LeftInvariantMetric::standard().scalar_curvature() - 1.5).abs() < 1e-12);
        assert!((LeftInvariantMetric::new(2.0, 2.0).unwrap().scalar_curvature() - 0.375).abs() < 1e-15);
        for m in metrics() {
            let ts: Vec<f64> = thetas().iter().map(|&t| m.scalar_curvature_by_contraction(t).unwrap()).collect();
            for v in &ts {
                assert!((v - m.scalar_curvature()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_identity() {
        for m in metrics() {
            for t in thetas() {
                let g = m.gram(t).unwrap();
                let e = orthonormal_frame(&g);
                let r = m.riemann04(t).unwrap();
                let mut tr = 0.0;
                for i in 0..3 {
                    for j in (i + 1)..3 {
                        tr += riemann_abab(&r, &e[i], &e[j]);
                    }
                }
                assert!((-2.0 * tr - m.scalar_curvature()).abs() < 1e-10);
            }
        }
    }

    fn orthonormal_frame(g: &Matrix3<f64>) -> [Vector3<f64>; 3] {
        let mut out: [Vector3<f64>; 3] = [Vector3::x(), Vector3::y(), Vector3::z()];
        for i in 0..3 {
            for j in 0..i {
                let c = out[i].dot(&(g * out[j]));
                out[i] -= out[j] * c;
            }
            let n = out[i].dot(&(g * out[i])).sqrt();
            out[i] /= n;
        }
        out
    }

    #[test]
    fn sectional_curvatures() {
        for m in metrics() {
            let want = m.s.powi(2) / (4.0 * m.xi.powi(4));
            for t in thetas() {
                assert!((m.sectional(CoordinatePlane::PhiPsi, t).unwrap() - want).abs() < 1e-12);
                assert!((m.sectional(CoordinatePlane::ThetaPsi, t).unwrap() - want).abs() < 1e-12);
                let (st, ct) = t.sin_cos();
                let (x2, s2) = (m.xi * m.xi, m.s * m.s);
                let num = st * st * (1.0 - 0.75 * s2 / x2) + ct * ct * (0.5 * s2 / x2).powi(2);
                let den = x2 * st * st + s2 * ct * ct;
                let s12 = m.sectional(CoordinatePlane::PhiTheta, t).unwrap();
                assert!((s12 - num * x2 / (x2 * den)).abs() < 1e-12, "{m:?} {t}");
            }
        }
        let std = LeftInvariantMetric::standard();
        assert!((std.sectional(CoordinatePlane::PhiTheta, PI / 2.0).unwrap() - 0.25).abs() < 1e-15);
        let h = LeftInvariantMetric::new(1.4, 1.4).unwrap();
        let a = h.sectional(CoordinatePlane::PhiTheta, 0.3).unwrap();
        let b = h.sectional(CoordinatePlane::PhiTheta, 2.2).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn lk_and_volume() {
        let l = LeftInvariantMetric::standard().lk_so3();
        assert_eq!(l.l0, 0.0);
        assert!((l.l1 - 3.0 * PI).abs() < 1e-14);
        assert!((l.l1 - 1.5 * 8.0 * PI * PI / (4.0 * PI)).abs() < 1e-14);
        assert!((l.l3 - 8.0 * PI * PI).abs() < 1e-12);
        let m = LeftInvariantMetric::new(1.3, -0.7).unwrap();
        let n = 400;
        let h = PI / n as f64;
        let integral: f64 = (0..n)
            .map(|j| m.volume_element((j as f64 + 0.5) * h).unwrap() * h)
            .sum::<f64>()
            * 4.0
            * PI
            * PI;
        let exact = 8.0 * PI * PI * 1.69 * 0.7;
        assert!((integral - exact).abs() / exact < 1e-5);
        assert!((m.lk_so3().l3 - exact).abs() < 1e-12);
        assert!((m.volume_element(PI / 2.0).unwrap() - 1.69 * 0.7).abs() < 1e-15);
        let p = LeftInvariantMetric::new(1.3, 0.7).unwrap();
        assert_eq!(p.lk_so3(), m.lk_so3());
        assert_eq!(p.scalar_curvature(), m.scalar_curvature());
    }
}

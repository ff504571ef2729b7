//! Estimators of `(L0, L1, L2, L3)` for excursion sets `{f ≥ u}` on an
//! Euler-angle grid, in the standard metric `g_{1,1}`.
//!
//! Grid nodes sit at half-cell offsets, `θ_j = (j + ½)π/n_θ` and
//! `φ_i = −π + (i + ½)2π/n_φ` (same for ψ), so no node touches a chart pole.
//! The level surface is meshed by marching tetrahedra (six per cell);
//! curvature integrands are evaluated from the analytic field jet at triangle
//! centroids.
//!
//! The Euler chart degenerates at θ ∈ {0, π}, so surface integrals and
//! critical points use an atlas of two charts: the standard one and the one
//! obtained by left translation with `R_y(π/2)`. A smooth partition of unity in
//! `|cos θ|` assigns each part of the surface to the chart where it sits well
//! inside `θ ∈ (π/6, 5π/6)`.

use crate::error::{Error, Result};
use crate::so3geom::{riemann_abab, LeftInvariantMetric};
use crate::spinfield::{EulerPoint, FieldJet, FieldRealization};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

const TWO_PI: f64 = 2.0 * PI;
const CHUNK: usize = 1024;
const VERTEX_PROJECTION_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LKVector {
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<[f64; 4]>,
}

impl LKVector {
    pub fn new(v: [f64; 4]) -> Self {
        LKVector { l0: v[0], l1: v[1], l2: v[2], l3: v[3], stderr: None }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l0, self.l1, self.l2, self.l3]
    }

    pub fn get(&self, j: usize) -> f64 {
        self.as_array()[j]
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = LKVector::new(self.as_array().map(|v| v * k));
        out.stderr = self.stderr.map(|e| e.map(|v| v * k.abs()));
        out
    }
}

/// A smooth function on the Euler chart with exact derivatives.
pub trait ChartField: Sync {
    fn jet_at(&self, phi: f64, theta: f64, psi: f64) -> FieldJet;

    /// The field `y ↦ f(h·y)`.
    fn left_translated(&self, h: &EulerPoint) -> Self
    where
        Self: Sized;

    /// Typical gradient size, used to scale degeneracy thresholds.
    fn gradient_scale(&self) -> f64 {
        1.0
    }

    /// Values and optional chart gradients on a tensor grid, φ-major then θ then ψ.
    fn grid_values(&self, phis: &[f64], thetas: &[f64], psis: &[f64], with_grad: bool) -> (Vec<f64>, Option<Vec<[f64; 3]>>) {
        let slabs: Vec<Vec<FieldJet>> = phis
            .par_iter()
            .map(|&p| {
                let mut out = Vec::with_capacity(thetas.len() * psis.len());
                for &t in thetas {
                    for &s in psis {
                        out.push(self.jet_at(p, t, s));
                    }
                }
                out
            })
            .collect();
        let jets: Vec<FieldJet> = slabs.into_iter().flatten().collect();
        let values = jets.iter().map(|j| j.value).collect();
        let grads = with_grad.then(|| jets.iter().map(|j| [j.grad[0], j.grad[1], j.grad[2]]).collect());
        (values, grads)
    }
}

impl ChartField for FieldRealization {
    fn jet_at(&self, phi: f64, theta: f64, psi: f64) -> FieldJet {
        FieldRealization::jet_at(self, phi, theta, psi)
    }

    fn left_translated(&self, h: &EulerPoint) -> Self {
        FieldRealization::left_translated(self, h)
    }

    fn gradient_scale(&self) -> f64 {
        self.spec.xi().max((self.spec.s as f64).abs())
    }

    fn grid_values(&self, phis: &[f64], thetas: &[f64], psis: &[f64], with_grad: bool) -> (Vec<f64>, Option<Vec<[f64; 3]>>) {
        FieldRealization::grid_values(self, phis, thetas, psis, with_grad)
    }
}

/// `h(x) = a · R(x) ẑ`; with `a = ẑ` this is `cos θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisField {
    pub axis: Vector3<f64>,
}

impl AxisField {
    pub fn cos_theta() -> Self {
        AxisField { axis: Vector3::z() }
    }
}

impl ChartField for AxisField {
    fn jet_at(&self, phi: f64, theta: f64, _psi: f64) -> FieldJet {
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let a = &self.axis;
        let dot = |v: [f64; 3]| a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
        let value = dot([cp * st, sp * st, ct]);
        let fp = dot([-sp * st, cp * st, 0.0]);
        let ft = dot([cp * ct, sp * ct, -st]);
        let fpp = dot([-cp * st, -sp * st, 0.0]);
        let fpt = dot([-sp * ct, cp * ct, 0.0]);
        let ftt = -value;
        let hess = Matrix3::new(fpp, fpt, 0.0, fpt, ftt, 0.0, 0.0, 0.0, 0.0);
        FieldJet { value, grad: Vector3::new(fp, ft, 0.0), hess }
    }

    fn left_translated(&self, h: &EulerPoint) -> Self {
        AxisField { axis: h.rotation().inverse() * self.axis }
    }
}

#[derive(Debug, Clone)]
pub struct EulerGrid {
    pub n_phi: usize,
    pub n_theta: usize,
    pub n_psi: usize,
    pub values: Vec<f64>,
    pub grads: Option<Vec<[f64; 3]>>,
}

impl EulerGrid {
    pub fn d_phi(&self) -> f64 {
        TWO_PI / self.n_phi as f64
    }

    pub fn d_theta(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn d_psi(&self) -> f64 {
        TWO_PI / self.n_psi as f64
    }

    pub fn phi(&self, i: usize) -> f64 {
        -PI + (i as f64 + 0.5) * self.d_phi()
    }

    pub fn theta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.d_theta()
    }

    pub fn psi(&self, k: usize) -> f64 {
        -PI + (k as f64 + 0.5) * self.d_psi()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_theta + j) * self.n_psi + k
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// `u`, nudged upward by 1e-12 until no node value equals it.
    pub fn regular_level(&self, u: f64) -> f64 {
        let mut u = u;
        while self.values.contains(&u) {
            u += 1e-12;
        }
        u
    }
}

pub fn build_grid<F: ChartField + ?Sized>(field: &F, resolution: [usize; 3], with_grad: bool) -> Result<EulerGrid> {
    if resolution.iter().any(|&n| n < 8) {
        return Err(Error::Config(format!("grid resolution must be at least 8 per axis, got {resolution:?}")));
    }
    let [n_phi, n_theta, n_psi] = resolution;
    let mut grid = EulerGrid { n_phi, n_theta, n_psi, values: vec![], grads: None };
    let phis: Vec<f64> = (0..n_phi).map(|i| grid.phi(i)).collect();
    let thetas: Vec<f64> = (0..n_theta).map(|j| grid.theta(j)).collect();
    let psis: Vec<f64> = (0..n_psi).map(|k| grid.psi(k)).collect();
    let (values, grads) = field.grid_values(&phis, &thetas, &psis, with_grad);
    grid.values = values;
    grid.grads = grads;
    Ok(grid)
}

/// `Vol{f ≥ u}`: along every θ-line the field is interpolated linearly
/// between nodes (constant in the half cells next to the poles) and the
/// indicator is integrated exactly against `sin θ`.
pub fn estimate_l3(grid: &EulerGrid, u: f64) -> f64 {
    let u = grid.regular_level(u);
    let (nt, h) = (grid.n_theta, grid.d_theta());
    let weight = |a: f64, b: f64| a.cos() - b.cos();
    let mut total = 0.0;
    for i in 0..grid.n_phi {
        let mut col = 0.0;
        for k in 0..grid.n_psi {
            let f = |j: usize| grid.value(i, j, k);
            let dtheta = |j: usize| grid.grads.as_ref().map(|g| g[grid.index(i, j, k)][1] * h);
            if f(0) >= u {
                col += weight(0.0, grid.theta(0));
            }
            if f(nt - 1) >= u {
                col += weight(grid.theta(nt - 1), PI);
            }
            for j in 0..nt - 1 {
                let (a, b) = (f(j), f(j + 1));
                let (ta, tb) = (grid.theta(j), grid.theta(j + 1));
                match (a >= u, b >= u) {
                    (true, true) => col += weight(ta, tb),
                    (false, false) => {}
                    (above_a, _) => {
                        let tc = ta + h * crossing_fraction(a, b, dtheta(j), dtheta(j + 1), u);
                        col += if above_a { weight(ta, tc) } else { weight(tc, tb) };
                    }
                }
            }
        }
        total += col;
    }
    total * grid.d_phi() * grid.d_psi()
}

/// Fraction in `[0, 1]` where the segment from `a` to `b` crosses `u`, cubic Hermite when slopes are known.
fn crossing_fraction(a: f64, b: f64, da: Option<f64>, db: Option<f64>, u: f64) -> f64 {
    let linear = (u - a) / (b - a);
    let (Some(da), Some(db)) = (da, db) else { return linear };
    let p = |t: f64| {
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * a + (t3 - 2.0 * t2 + t) * da + (3.0 * t2 - 2.0 * t3) * b + (t3 - t2) * db - u
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let rising = b > a;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if (p(mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Default)]
pub struct LevelSurfaceMesh {
    pub u: f64,
    /// Chart coordinates with φ, ψ wrapped into `[−π, π)`.
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub areas: Vec<f64>,
    pub centroids: Vec<[f64; 3]>,
    /// Outward (toward `{f < u}`) unit normals, in the g_{1,1} norm.
    pub normals: Option<Vec<[f64; 3]>>,
    /// Whether each triangle lies in the first or last θ slab.
    pub touches_pole_slab: Vec<bool>,
}

impl LevelSurfaceMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Edges not shared by exactly two triangles, modulo φ/ψ periodicity.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let mut count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<(u32, u32)> = count.into_iter().filter(|&(_, c)| c != 2).map(|(e, _)| e).collect();
        out.sort_unstable();
        out
    }

    /// Oriented-edge check: each directed edge appears once and its reverse once.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut seen: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *seen.entry((t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        seen.iter().all(|(&(a, b), &c)| c == 1 && seen.get(&(b, a)).is_none_or(|&r| r == 1))
    }

    /// Recomputes triangle areas (Gram matrix at the centroid) and centroids.
    pub fn update_geometry(&mut self) {
        let g11 = LeftInvariantMetric::standard();
        let (areas, centroids): (Vec<f64>, Vec<[f64; 3]>) = self
            .triangles
            .iter()
            .map(|t| {
                let p0 = self.vertices[t[0] as usize];
                let q = t.map(|v| {
                    let p = self.vertices[v as usize];
                    Vector3::new(unwrap_near(p[0], p0[0]), p[1], unwrap_near(p[2], p0[2]))
                });
                let (area, c) = triangle_area(&g11, &q);
                (area, [wrap(c[0]), c[1], wrap(c[2])])
            })
            .unzip();
        self.areas = areas;
        self.centroids = centroids;
    }

    /// Moves every vertex onto `{f = u}` by Newton steps along the gradient,
    /// then refreshes normals and triangle geometry.
    pub fn project_onto<F: ChartField + ?Sized>(&mut self, field: &F) {
        let g11 = LeftInvariantMetric::standard();
        let u = self.u;
        let moved: Vec<([f64; 3], [f64; 3])> = self
            .vertices
            .par_iter()
            .map(|&p0| {
                let p = project_point(field, &g11, Vector3::from(p0), u);
                let jet = field.jet_at(p[0], p[1], p[2]);
                ([wrap(p[0]), p[1], wrap(p[2])], outward_normal(&g11, p[1], &jet.grad))
            })
            .collect();
        let (vertices, normals) = moved.into_iter().unzip();
        self.vertices = vertices;
        self.normals = Some(normals);
        self.update_geometry();
    }

    pub fn to_off(&self) -> String {
        let mut s = String::new();
        writeln!(s, "OFF").unwrap();
        writeln!(s, "{} {} 0", self.vertices.len(), self.triangles.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.12} {:.12} {:.12}", v[0], v[1], v[2]).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TWO_PI) - PI
}

fn unwrap_near(x: f64, reference: f64) -> f64 {
    x + TWO_PI * ((reference - x) / TWO_PI).round()
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
    [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1],
];

/// Six tetrahedra sharing the cell diagonal 0–7 (corner bits: φ=1, θ=2, ψ=4).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7],
    [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7],
];

type EdgeKey = (u32, u32);

struct SlabOutput {
    vertices: Vec<(EdgeKey, [f64; 3], Option<[f64; 3]>)>,
    triangles: Vec<([EdgeKey; 3], bool)>,
}

/// Marching-tetrahedra extraction of `{f = u}` with outward orientation.
pub fn extract_level_surface(grid: &EulerGrid, u: f64) -> LevelSurfaceMesh {
    let u = grid.regular_level(u);
    let (np, nt, nk) = (grid.n_phi, grid.n_theta, grid.n_psi);
    let (hp, ht, hk) = (grid.d_phi(), grid.d_theta(), grid.d_psi());
    let slabs: Vec<SlabOutput> = (0..np)
        .into_par_iter()
        .map(|i| {
            let mut out = SlabOutput { vertices: vec![], triangles: vec![] };
            let mut local: HashMap<EdgeKey, ()> = HashMap::new();
            for j in 0..nt - 1 {
                for k in 0..nk {
                    let mut ids = [0u32; 8];
                    let mut pos = [[0.0; 3]; 8];
                    let mut val = [0.0; 8];
                    let mut above = 0;
                    for (c, d) in CORNERS.iter().enumerate() {
                        let (ii, jj, kk) = ((i + d[0]) % np, j + d[1], (k + d[2]) % nk);
                        let id = grid.index(ii, jj, kk);
                        ids[c] = id as u32;
                        val[c] = grid.values[id];
                        pos[c] = [grid.phi(i) + d[0] as f64 * hp, grid.theta(j) + d[1] as f64 * ht, grid.psi(k) + d[2] as f64 * hk];
                        if val[c] >= u {
                            above += 1;
                        }
                    }
                    if above == 0 || above == 8 {
                        continue;
                    }
                    let pole = j == 0 || j + 2 == nt;
                    for tet in TETS {
                        let (ins, outs): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&c| val[c] >= u);
                        if ins.is_empty() || outs.is_empty() {
                            continue;
                        }
                        let mut edge = |a: usize, b: usize| -> (EdgeKey, [f64; 3]) {
                            let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                            let t = (u - val[a]) / (val[b] - val[a]);
                            let p = std::array::from_fn(|x| pos[a][x] + t * (pos[b][x] - pos[a][x]));
                            if local.insert(key, ()).is_none() {
                                let g = grid.grads.as_ref().map(|gs| {
                                    let (ga, gb) = (gs[ids[a] as usize], gs[ids[b] as usize]);
                                    std::array::from_fn(|x| ga[x] + t * (gb[x] - ga[x]))
                                });
                                out.vertices.push((key, [wrap(p[0]), p[1], wrap(p[2])], g));
                            }
                            (key, p)
                        };
                        let polys: Vec<[(usize, usize); 3]> = match (ins.len(), outs.len()) {
                            (1, 3) => vec![[(ins[0], outs[0]), (ins[0], outs[1]), (ins[0], outs[2])]],
                            (3, 1) => vec![[(ins[0], outs[0]), (ins[1], outs[0]), (ins[2], outs[0])]],
                            _ => {
                                let (a, b, c, d) = (ins[0], ins[1], outs[0], outs[1]);
                                vec![[(a, c), (a, d), (b, d)], [(a, c), (b, d), (b, c)]]
                            }
                        };
                        let cin = centroid_of(&ins, &pos);
                        let cout = centroid_of(&outs, &pos);
                        let dir = Vector3::from(cout) - Vector3::from(cin);
                        for poly in polys {
                            let (k0, p0) = edge(poly[0].0, poly[0].1);
                            let (k1, p1) = edge(poly[1].0, poly[1].1);
                            let (k2, p2) = edge(poly[2].0, poly[2].1);
                            let n = (Vector3::from(p1) - Vector3::from(p0)).cross(&(Vector3::from(p2) - Vector3::from(p0)));
                            let tri = if n.dot(&dir) >= 0.0 { [k0, k1, k2] } else { [k0, k2, k1] };
                            out.triangles.push((tri, pole));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut mesh = LevelSurfaceMesh { u, ..Default::default() };
    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vgrads: Vec<Option<[f64; 3]>> = vec![];
    for slab in &slabs {
        for (key, p, g) in &slab.vertices {
            index.entry(*key).or_insert_with(|| {
                mesh.vertices.push(*p);
                vgrads.push(*g);
                (mesh.vertices.len() - 1) as u32
            });
        }
    }
    for slab in &slabs {
        for (tri, pole) in &slab.triangles {
            mesh.triangles.push(tri.map(|k| index[&k]));
            mesh.touches_pole_slab.push(*pole);
        }
    }
    if grid.grads.is_some() {
        let g11 = LeftInvariantMetric::standard();
        let normals = mesh
            .vertices
            .iter()
            .zip(&vgrads)
            .map(|(p, g)| outward_normal(&g11, p[1], &Vector3::from(g.unwrap())))
            .collect();
        mesh.normals = Some(normals);
    }
    mesh.update_geometry();
    mesh
}

fn outward_normal(metric: &LeftInvariantMetric, theta: f64, df: &Vector3<f64>) -> [f64; 3] {
    let grad = metric.gram_inverse_unchecked(theta) * df;
    let n = -grad / df.dot(&grad).sqrt();
    [n[0], n[1], n[2]]
}

fn centroid_of(idx: &[usize], pos: &[[f64; 3]; 8]) -> [f64; 3] {
    let n = idx.len() as f64;
    std::array::from_fn(|x| idx.iter().map(|&c| pos[c][x]).sum::<f64>() / n)
}

fn bracket_root<F: ChartField + ?Sized>(field: &F, at: impl Fn(f64) -> [f64; 3], lo: f64, hi: f64, flo: f64, fhi: f64, u: f64) -> f64 {
    let (mut lo, mut hi, mut flo, mut fhi) = (lo, hi, flo, fhi);
    let mut x = lo + (hi - lo) * flo / (flo - fhi);
    for _ in 0..60 {
        let p = at(x);
        let fx = field.jet_at(p[0], p[1], p[2]).value - u;
        if fx == 0.0 || hi - lo < 1e-13 {
            break;
        }
        if (fx > 0.0) == (flo > 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        let next = lo + (hi - lo) * flo / (flo - fhi);
        x = if next > lo && next < hi && (next - x).abs() > 1e-15 { next } else { 0.5 * (lo + hi) };
    }
    x
}

/// Surface area from crossings of `{f = u}` with the three families of
/// coordinate lines. A crossing on a line along `x_d` contributes
/// `w_d ‖∇f‖ sin θ / |∂_d f|` times the transverse cell size, with direction
/// weights `w_d = (∂_d f)² / Σ_e (∂_e f)²` summing to one, which keeps the
/// integrand bounded at tangencies. Returns `L2 = area / 2`.
pub fn estimate_l2_crossings<F: ChartField + ?Sized>(field: &F, grid: &EulerGrid, u: f64) -> f64 {
    let u = grid.regular_level(u);
    let g11 = LeftInvariantMetric::standard();
    let (np, nt, nk) = (grid.n_phi, grid.n_theta, grid.n_psi);
    let h = [grid.d_phi(), grid.d_theta(), grid.d_psi()];
    let n = [np, nt, nk];
    let weight = |p: [f64; 3], d: usize| {
        let jet = field.jet_at(p[0], p[1], p[2]);
        let df = jet.grad;
        let norm = df.dot(&(g11.gram_inverse_unchecked(p[1]) * df)).sqrt();
        let e2 = df.norm_squared();
        if e2 > 0.0 {
            df[d].abs() * norm * p[1].sin() / e2
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    for d in 0..3 {
        let (a, b) = match d {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let periodic = d != 1;
        let lines: Vec<f64> = (0..n[a] * n[b])
            .into_par_iter()
            .map(|line| {
                let mut idx = [0usize; 3];
                idx[a] = line / n[b];
                idx[b] = line % n[b];
                let coord = |idx: [usize; 3]| [grid.phi(idx[0]), grid.theta(idx[1]), grid.psi(idx[2])];
                let mut sum = 0.0;
                let steps = if periodic { n[d] } else { n[d] - 1 };
                for t in 0..steps {
                    let mut i0 = idx;
                    let mut i1 = idx;
                    i0[d] = t;
                    i1[d] = (t + 1) % n[d];
                    let (fa, fb) = (grid.values[grid.index(i0[0], i0[1], i0[2])], grid.values[grid.index(i1[0], i1[1], i1[2])]);
                    if (fa >= u) == (fb >= u) {
                        continue;
                    }
                    let base = coord(i0);
                    let at = |x: f64| {
                        let mut p = base;
                        p[d] = x;
                        p
                    };
                    let x = bracket_root(field, at, base[d], base[d] + h[d], fa - u, fb - u, u);
                    sum += weight(at(x), d);
                }
                sum
            })
            .collect();
        total += lines.iter().sum::<f64>() * h[a] * h[b];
    }
    0.5 * total
}

fn gradient_parts(jet: &FieldJet, metric: &LeftInvariantMetric, theta: f64) -> (Vector3<f64>, f64) {
    let grad = metric.gram_inverse_unchecked(theta) * jet.grad;
    (grad, jet.grad.dot(&grad).sqrt())
}

/// Mean outer curvature `½ (Tr_g Hess f − Hess f(n, n)) / ‖∇f‖` of the level set through the point.
pub fn mean_out_curvature<F: ChartField + ?Sized>(
    field: &F,
    point: [f64; 3],
    metric: &LeftInvariantMetric,
) -> Result<f64> {
    if !(point[1] > 0.0 && point[1] < PI) {
        return Err(Error::SingularChart(point[1]));
    }
    let jet = field.jet_at(point[0], point[1], point[2]);
    let eps = 1e-8 * field.gradient_scale();
    curvatures(&jet, metric, point[1], eps).map(|c| c.mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Curvature {
    mean: f64,
    gauss: f64,
    max_principal: f64,
}

/// Mean outer curvature, Gaussian curvature and the largest absolute
/// principal curvature of the level surface through a point.
fn curvatures(jet: &FieldJet, metric: &LeftInvariantMetric, theta: f64, eps: f64) -> Result<Curvature> {
    let (grad, norm) = gradient_parts(jet, metric, theta);
    if !(norm > eps) {
        return Err(Error::Degenerate(norm));
    }
    let hess = jet.riemannian_hessian(metric, theta);
    let gi = metric.gram_inverse_unchecked(theta);
    let n = grad / norm;
    let trace = (gi * hess).trace();
    let h = 0.5 * (trace - n.dot(&(hess * n))) / norm;

    let g = metric.gram_unchecked(theta);
    let ip = |a: &Vector3<f64>, b: &Vector3<f64>| a.dot(&(g * b));
    let mut cands: Vec<Vector3<f64>> = (0..3)
        .map(|i| {
            let e = Vector3::ith(i, 1.0);
            e - n * ip(&e, &n)
        })
        .collect();
    cands.sort_by(|a, b| ip(b, b).total_cmp(&ip(a, a)));
    let t1 = cands[0] / ip(&cands[0], &cands[0]).sqrt();
    let mut t2 = cands[1] - t1 * ip(&cands[1], &t1);
    let alt = cands[2] - t1 * ip(&cands[2], &t1);
    if ip(&alt, &alt) > ip(&t2, &t2) {
        t2 = alt;
    }
    let t2 = t2 / ip(&t2, &t2).sqrt();
    let s11 = t1.dot(&(hess * t1)) / norm;
    let s12 = t1.dot(&(hess * t2)) / norm;
    let s22 = t2.dot(&(hess * t2)) / norm;
    let sec = -riemann_abab(&metric.riemann04_unchecked(theta), &t1, &t2);
    let det = s11 * s22 - s12 * s12;
    let mid = 0.5 * (s11 + s22);
    let max_principal = mid.abs() + (mid * mid - det).max(0.0).sqrt();
    Ok(Curvature { mean: h, gauss: det + sec, max_principal })
}

/// Area-weighted integrals over a mesh, evaluated at triangle centroids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceIntegrals {
    pub area: f64,
    pub mean_curvature: f64,
    pub gauss_curvature: f64,
    pub skipped_area: f64,
}

impl SurfaceIntegrals {
    pub fn add(&self, other: &Self) -> Self {
        SurfaceIntegrals {
            area: self.area + other.area,
            mean_curvature: self.mean_curvature + other.mean_curvature,
            gauss_curvature: self.gauss_curvature + other.gauss_curvature,
            skipped_area: self.skipped_area + other.skipped_area,
        }
    }

    pub fn skipped_area_fraction(&self) -> f64 {
        if self.area > 0.0 {
            self.skipped_area / self.area
        } else {
            0.0
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let (p, q) = ((-1.0 / t).exp(), (-1.0 / (1.0 - t)).exp());
        p / (p + q)
    }
}

const PARTITION_INNER: f64 = 0.5;
const PARTITION_OUTER: f64 = 0.866_025_403_784_438_6;
const MORSE_SPLIT: f64 = std::f64::consts::FRAC_1_SQRT_2;
const MORSE_MARGIN: f64 = 0.1;

/// Partition-of-unity weight of the standard chart at a point with the given
/// `cos θ`: 1 for `|cos θ| ≤ cos(π/3)`, 0 for `|cos θ| ≥ cos(π/6)`, C^∞ between.
pub fn primary_weight(cos_theta: f64) -> f64 {
    smoothstep((PARTITION_OUTER - cos_theta.abs()) / (PARTITION_OUTER - PARTITION_INNER))
}

/// The left translation defining the second chart.
pub fn second_chart() -> EulerPoint {
    EulerPoint { phi: 0.0, theta: PI / 2.0, psi: 0.0 }
}

/// Which chart of the atlas a set of coordinates refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Primary,
    Secondary,
}

/// A field sampled in both charts on the same resolution.
#[derive(Debug, Clone)]
pub struct Atlas<F> {
    pub primary_field: F,
    pub secondary_field: F,
    pub primary: EulerGrid,
    pub secondary: EulerGrid,
    /// `R(h)ᵀ ẑ`, so that `cos θ` of `h·y` is `axis · R(y) ẑ`.
    pull_axis: Vector3<f64>,
}

pub fn build_atlas<F: ChartField + Clone>(field: &F, resolution: [usize; 3], with_grad: bool) -> Result<Atlas<F>> {
    let h = second_chart();
    let secondary_field = field.left_translated(&h);
    Ok(Atlas {
        primary: build_grid(field, resolution, with_grad)?,
        secondary: build_grid(&secondary_field, resolution, with_grad)?,
        primary_field: field.clone(),
        secondary_field,
        pull_axis: h.rotation().inverse() * Vector3::z(),
    })
}

impl<F: ChartField> Atlas<F> {
    pub fn field(&self, chart: Chart) -> &F {
        match chart {
            Chart::Primary => &self.primary_field,
            Chart::Secondary => &self.secondary_field,
        }
    }

    pub fn grid(&self, chart: Chart) -> &EulerGrid {
        match chart {
            Chart::Primary => &self.primary,
            Chart::Secondary => &self.secondary,
        }
    }

    /// `cos θ` in the standard chart of a point given in `chart` coordinates.
    pub fn primary_cos_theta(&self, chart: Chart, point: [f64; 3]) -> f64 {
        match chart {
            Chart::Primary => point[1].cos(),
            Chart::Secondary => {
                let (sp, cp) = point[0].sin_cos();
                let (st, ct) = point[1].sin_cos();
                self.pull_axis.dot(&Vector3::new(cp * st, sp * st, ct))
            }
        }
    }

    /// Weight of `chart` at a point given in that chart's coordinates.
    pub fn weight(&self, chart: Chart, point: [f64; 3]) -> f64 {
        let w = primary_weight(self.primary_cos_theta(chart, point));
        match chart {
            Chart::Primary => w,
            Chart::Secondary => 1.0 - w,
        }
    }

    /// Standard-chart coordinates of a point given in `chart` coordinates.
    pub fn to_primary(&self, chart: Chart, point: [f64; 3]) -> [f64; 3] {
        match chart {
            Chart::Primary => point,
            Chart::Secondary => {
                let y = EulerPoint { phi: point[0], theta: point[1], psi: point[2] };
                let r = second_chart().rotation() * y.rotation();
                let m = r.matrix();
                [m[(1, 2)].atan2(m[(0, 2)]), m[(2, 2)].clamp(-1.0, 1.0).acos(), m[(2, 1)].atan2(-m[(2, 0)])]
            }
        }
    }
}

/// Level-surface meshes of `{f = u}` in both charts.
#[derive(Debug, Clone)]
pub struct AtlasMesh {
    pub u: f64,
    pub primary: LevelSurfaceMesh,
    pub secondary: LevelSurfaceMesh,
}

impl AtlasMesh {
    pub fn mesh(&self, chart: Chart) -> &LevelSurfaceMesh {
        match chart {
            Chart::Primary => &self.primary,
            Chart::Secondary => &self.secondary,
        }
    }
}

/// Meshes in both charts with vertices projected onto the exact level set.
pub fn extract_atlas_surface<F: ChartField>(atlas: &Atlas<F>, u: f64) -> AtlasMesh {
    let mut primary = extract_level_surface(&atlas.primary, u);
    let mut secondary = extract_level_surface(&atlas.secondary, u);
    primary.project_onto(&atlas.primary_field);
    secondary.project_onto(&atlas.secondary_field);
    AtlasMesh { u: primary.u, primary, secondary }
}

/// Refinement stops once `max principal curvature × √(2·area)` drops below this.
const REFINE_BENDING: f64 = 0.25;
pub const MAX_REFINE_DEPTH: u32 = 6;

fn triangle_area(metric: &LeftInvariantMetric, q: &[Vector3<f64>; 3]) -> (f64, Vector3<f64>) {
    let c = (q[0] + q[1] + q[2]) / 3.0;
    let g = metric.gram_unchecked(c[1]);
    let (a, b) = (q[1] - q[0], q[2] - q[0]);
    let area2 = a.dot(&(g * a)) * b.dot(&(g * b)) - a.dot(&(g * b)).powi(2);
    (0.5 * area2.max(0.0).sqrt(), c)
}

fn project_point<F: ChartField + ?Sized>(field: &F, metric: &LeftInvariantMetric, p: Vector3<f64>, u: f64) -> Vector3<f64> {
    project_point_within(field, metric, p, u, f64::INFINITY).unwrap_or(p)
}

/// Newton projection onto `{f = u}`; `None` if it moves farther than `reach`.
fn project_point_within<F: ChartField + ?Sized>(
    field: &F,
    metric: &LeftInvariantMetric,
    start: Vector3<f64>,
    u: f64,
    reach: f64,
) -> Option<Vector3<f64>> {
    let mut p = start;
    for _ in 0..VERTEX_PROJECTION_STEPS {
        let jet = field.jet_at(p[0], p[1], p[2]);
        let grad = metric.gram_inverse_unchecked(p[1]) * jet.grad;
        let n2 = jet.grad.dot(&grad);
        if !(n2 > 0.0) {
            break;
        }
        let q = p - grad * ((jet.value - u) / n2);
        if !(q[1] > 0.0 && q[1] < PI) {
            break;
        }
        p = q;
    }
    ((p - start).norm() <= reach).then_some(p)
}

struct TriangleQuadrature<'a, F: ?Sized, W> {
    field: &'a F,
    weight: &'a W,
    metric: LeftInvariantMetric,
    eps: f64,
    u: f64,
    max_depth: u32,
}

impl<F: ChartField + ?Sized, W: Fn([f64; 3]) -> f64> TriangleQuadrature<'_, F, W> {
    /// Centroid rule, with recursive 4-way splitting (midpoints projected onto
    /// the level set) while the triangle is large compared with the curvature radius.
    fn integrate(&self, q: [Vector3<f64>; 3], depth: u32, acc: &mut SurfaceIntegrals) {
        let (area, c) = self.triangle(&q);
        let w = (self.weight)([wrap(c[0]), c[1], wrap(c[2])]);
        let jet = self.field.jet_at(c[0], c[1], c[2]);
        match curvatures(&jet, &self.metric, c[1], self.eps) {
            Ok(k) if depth < self.max_depth
                && k.max_principal * (2.0 * area).sqrt() > REFINE_BENDING
                && self.refine(&q, depth, acc) => {}
            Ok(k) => {
                let a = area * w;
                acc.area += a;
                acc.mean_curvature += k.mean * a;
                acc.gauss_curvature += k.gauss * a;
            }
            Err(_) => {
                acc.area += area * w;
                acc.skipped_area += area * w;
            }
        }
    }

    fn refine(&self, q: &[Vector3<f64>; 3], depth: u32, acc: &mut SurfaceIntegrals) -> bool {
        let reach = 0.5 * (0..3).map(|i| (q[i] - q[(i + 1) % 3]).norm()).fold(0.0, f64::max);
        let mid = |a: usize, b: usize| project_point_within(self.field, &self.metric, (q[a] + q[b]) * 0.5, self.u, reach);
        let (Some(m01), Some(m12), Some(m20)) = (mid(0, 1), mid(1, 2), mid(2, 0)) else {
            return false;
        };
        for sub in [[q[0], m01, m20], [m01, q[1], m12], [m20, m12, q[2]], [m01, m12, m20]] {
            self.integrate(sub, depth + 1, acc);
        }
        true
    }

    fn triangle(&self, q: &[Vector3<f64>; 3]) -> (f64, Vector3<f64>) {
        triangle_area(&self.metric, q)
    }
}

/// Integrals over one chart's mesh with per-triangle weights `w(centroid)`.
pub fn surface_integrals_weighted<F, W>(field: &F, mesh: &LevelSurfaceMesh, weight: W) -> SurfaceIntegrals
where
    F: ChartField + ?Sized,
    W: Fn([f64; 3]) -> f64 + Sync,
{
    surface_integrals_to_depth(field, mesh, weight, MAX_REFINE_DEPTH)
}

/// As [`surface_integrals_weighted`], splitting each triangle at most `max_depth` times.
pub fn surface_integrals_to_depth<F, W>(field: &F, mesh: &LevelSurfaceMesh, weight: W, max_depth: u32) -> SurfaceIntegrals
where
    F: ChartField + ?Sized,
    W: Fn([f64; 3]) -> f64 + Sync,
{
    let quad = TriangleQuadrature {
        field,
        weight: &weight,
        metric: LeftInvariantMetric::standard(),
        eps: 1e-8 * field.gradient_scale(),
        u: mesh.u,
        max_depth,
    };
    let idx: Vec<usize> = (0..mesh.triangles.len()).collect();
    let parts: Vec<SurfaceIntegrals> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = SurfaceIntegrals::default();
            for &t in chunk {
                if weight(mesh.centroids[t]) == 0.0 {
                    continue;
                }
                let tri = mesh.triangles[t];
                let p0 = mesh.vertices[tri[0] as usize];
                let q = tri.map(|v| {
                    let p = mesh.vertices[v as usize];
                    Vector3::new(unwrap_near(p[0], p0[0]), p[1], unwrap_near(p[2], p0[2]))
                });
                quad.integrate(q, 0, &mut acc);
            }
            acc
        })
        .collect();
    parts.iter().fold(SurfaceIntegrals::default(), |acc, p| acc.add(p))
}

/// Integrals over a single-chart mesh with unit weights.
pub fn surface_integrals<F: ChartField + ?Sized>(field: &F, mesh: &LevelSurfaceMesh) -> SurfaceIntegrals {
    surface_integrals_weighted(field, mesh, |_| 1.0)
}

/// Integrals over the whole level surface, split by the partition of unity.
pub fn atlas_surface_integrals<F: ChartField>(atlas: &Atlas<F>, mesh: &AtlasMesh) -> SurfaceIntegrals {
    atlas_surface_integrals_to_depth(atlas, mesh, MAX_REFINE_DEPTH)
}

pub fn atlas_surface_integrals_to_depth<F: ChartField>(atlas: &Atlas<F>, mesh: &AtlasMesh, max_depth: u32) -> SurfaceIntegrals {
    let part = |chart| surface_integrals_to_depth(atlas.field(chart), mesh.mesh(chart), |c| atlas.weight(chart, c), max_depth);
    part(Chart::Primary).add(&part(Chart::Secondary))
}

/// `−(1/π) ∫ H + (1/4π)·scal·Vol`, with `scal(g_{1,1}) = 3/2`.
pub fn l1_from_parts(integrals: &SurfaceIntegrals, l3: f64) -> f64 {
    -integrals.mean_curvature / PI + 1.5 * l3 / (4.0 * PI)
}

pub fn estimate_l2<F: ChartField>(atlas: &Atlas<F>, mesh: &AtlasMesh) -> f64 {
    let area = |chart: Chart| {
        let m = mesh.mesh(chart);
        m.centroids.iter().zip(&m.areas).map(|(&c, &a)| a * atlas.weight(chart, c)).sum::<f64>()
    };
    0.5 * (area(Chart::Primary) + area(Chart::Secondary))
}

pub fn estimate_l1<F: ChartField>(atlas: &Atlas<F>, mesh: &AtlasMesh) -> f64 {
    l1_from_parts(&atlas_surface_integrals(atlas, mesh), estimate_l3(&atlas.primary, mesh.u))
}

pub fn estimate_l0_gaussbonnet<F: ChartField>(atlas: &Atlas<F>, mesh: &AtlasMesh) -> f64 {
    atlas_surface_integrals(atlas, mesh).gauss_curvature / (4.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Standard-chart coordinates.
    pub point: [f64; 3],
    pub value: f64,
    /// Number of negative Hessian eigenvalues.
    pub index: u8,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub candidate_cells: usize,
    /// Candidate cells where the local quadratic model places a critical
    /// point but Newton's method did not converge.
    pub unresolved: usize,
    /// Converged points whose Hessian is numerically singular; they carry no index.
    pub degenerate: usize,
}

impl CriticalSet {
    /// `Σ_{f(p) ≥ u} (−1)^{3 − index}`.
    pub fn euler_characteristic(&self, u: f64) -> i64 {
        self.points
            .iter()
            .filter(|c| c.value >= u)
            .map(|c| if (3 - c.index) % 2 == 0 { 1 } else { -1 })
            .sum()
    }

    pub fn is_reliable(&self) -> bool {
        self.unresolved == 0 && self.degenerate == 0
    }

    pub fn count_by_index(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for p in &self.points {
            out[p.index as usize] += 1;
        }
        out
    }
}

fn newton<F: ChartField + ?Sized>(field: &F, start: [f64; 3], tol: f64, max_step: f64) -> Option<(Vector3<f64>, FieldJet)> {
    let mut x = Vector3::from(start);
    for _ in 0..40 {
        if !(x[1] > 0.0 && x[1] < PI) {
            return None;
        }
        let jet = field.jet_at(x[0], x[1], x[2]);
        if jet.grad.amax() < tol {
            return Some((x, jet));
        }
        let step = jet.hess.lu().solve(&jet.grad)?;
        let len = step.norm();
        x -= if len > max_step { step * (max_step / len) } else { step };
    }
    None
}

/// Critical points in one chart, located from sign changes of the node
/// gradients and refined by Newton's method on the analytic jet. Cells whose
/// centre satisfies `search` are examined; converged points must satisfy `keep`.
pub fn find_critical_points_in<F, S, K>(field: &F, grid: &EulerGrid, search: S, keep: K) -> Result<CriticalSet>
where
    F: ChartField + ?Sized,
    S: Fn([f64; 3]) -> bool + Sync,
    K: Fn([f64; 3]) -> bool + Sync,
{
    let grads = grid
        .grads
        .as_ref()
        .ok_or_else(|| Error::Config("critical point search needs a grid with gradients".into()))?;
    let (np, nt, nk) = (grid.n_phi, grid.n_theta, grid.n_psi);
    let (hp, ht, hk) = (grid.d_phi(), grid.d_theta(), grid.d_psi());
    let tol = 1e-10 * field.gradient_scale();
    let max_step = 2.0 * hp.max(ht).max(hk);
    let singular = 1e-6 * field.gradient_scale().powi(2);
    let per_slab: Vec<(Vec<CriticalPoint>, usize, usize, usize)> = (0..np)
        .into_par_iter()
        .map(|i| {
            let mut found = vec![];
            let (mut cands, mut failed, mut degenerate) = (0, 0, 0);
            for j in 0..nt - 1 {
                for k in 0..nk {
                    let base = [grid.phi(i), grid.theta(j), grid.psi(k)];
                    if !search([wrap(base[0] + 0.5 * hp), base[1] + 0.5 * ht, wrap(base[2] + 0.5 * hk)]) {
                        continue;
                    }
                    let mut lo = [f64::INFINITY; 3];
                    let mut hi = [f64::NEG_INFINITY; 3];
                    for d in CORNERS {
                        let g = grads[grid.index((i + d[0]) % np, j + d[1], (k + d[2]) % nk)];
                        for x in 0..3 {
                            lo[x] = lo[x].min(g[x]);
                            hi[x] = hi[x].max(g[x]);
                        }
                    }
                    if (0..3).any(|x| lo[x] > 0.0 || hi[x] < 0.0) {
                        continue;
                    }
                    cands += 1;
                    let starts = std::iter::once([0.5, 0.5, 0.5]).chain(CORNERS.iter().map(|d| d.map(|v| v as f64)));
                    let mut ok = false;
                    for s in starts {
                        let p = [base[0] + s[0] * hp, base[1] + s[1] * ht, base[2] + s[2] * hk];
                        if let Some((x, jet)) = newton(field, p, tol, max_step) {
                            let eig = SymmetricEigen::new(jet.hess).eigenvalues;
                            let point = [wrap(x[0]), x[1], wrap(x[2])];
                            if eig.amin() < singular {
                                if keep(point) {
                                    degenerate += 1;
                                }
                            } else if keep(point) {
                                found.push(CriticalPoint {
                                    point,
                                    value: jet.value,
                                    index: eig.iter().filter(|&&e| e < 0.0).count() as u8,
                                });
                            }
                            ok = true;
                            break;
                        }
                    }
                    if !ok && model_predicts_critical_point(field, base, [hp, ht, hk]) {
                        let c = [base[0] + 0.5 * hp, base[1] + 0.5 * ht, base[2] + 0.5 * hk];
                        match least_squares_gradient(field, c, tol) {
                            Descent::Root(x, jet) => {
                                let eig = SymmetricEigen::new(jet.hess).eigenvalues;
                                let point = [wrap(x[0]), x[1], wrap(x[2])];
                                if eig.amin() < singular {
                                    degenerate += usize::from(keep(point));
                                } else if keep(point) {
                                    found.push(CriticalPoint {
                                        point,
                                        value: jet.value,
                                        index: eig.iter().filter(|&&e| e < 0.0).count() as u8,
                                    });
                                }
                            }
                            Descent::NonzeroMinimum => {}
                            Descent::Failed => failed += 1,
                        }
                    }
                }
            }
            (found, cands, failed, degenerate)
        })
        .collect();
    let mut set = CriticalSet::default();
    for (found, cands, failed, degenerate) in per_slab {
        set.candidate_cells += cands;
        set.unresolved += failed;
        set.degenerate += degenerate;
        for c in found {
            if !set.points.iter().any(|p| same_point(&p.point, &c.point)) {
                set.points.push(c);
            }
        }
    }
    Ok(set)
}

enum Descent {
    Root(Vector3<f64>, FieldJet),
    NonzeroMinimum,
    Failed,
}

/// Levenberg–Marquardt on `‖∂f‖²`: either a critical point or a strictly
/// positive local minimum of the gradient norm.
fn least_squares_gradient<F: ChartField + ?Sized>(field: &F, start: [f64; 3], tol: f64) -> Descent {
    let mut x = Vector3::from(start);
    let mut jet = field.jet_at(x[0], x[1], x[2]);
    let mut cost = jet.grad.norm_squared();
    let mut lambda = 1e-3 * jet.hess.norm_squared().max(f64::MIN_POSITIVE);
    for _ in 0..500 {
        if jet.grad.amax() < tol {
            return Descent::Root(x, jet);
        }
        let h = jet.hess;
        let jtr = h.transpose() * jet.grad;
        if jtr.norm() <= 1e-10 * h.norm() * jet.grad.norm() {
            return Descent::NonzeroMinimum;
        }
        let Some(step) = (h.transpose() * h + Matrix3::identity() * lambda).cholesky().map(|c| c.solve(&jtr)) else {
            return Descent::Failed;
        };
        let y = x - step;
        if !(y[1] > 0.0 && y[1] < PI) {
            return Descent::Failed;
        }
        let trial = field.jet_at(y[0], y[1], y[2]);
        let trial_cost = trial.grad.norm_squared();
        if trial_cost < cost {
            let gain = (cost - trial_cost) / cost;
            x = y;
            jet = trial;
            cost = trial_cost;
            lambda = (lambda / 3.0).max(1e-300);
            if gain < 1e-14 && step.norm() < 1e-14 {
                return Descent::NonzeroMinimum;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 * h.norm_squared().max(1.0) {
                return Descent::NonzeroMinimum;
            }
        }
    }
    Descent::Failed
}

/// Whether the Newton step from the cell centre stays within 1.5 cells.
fn model_predicts_critical_point<F: ChartField + ?Sized>(field: &F, base: [f64; 3], h: [f64; 3]) -> bool {
    let c: [f64; 3] = std::array::from_fn(|x| base[x] + 0.5 * h[x]);
    let jet = field.jet_at(c[0], c[1], c[2]);
    match jet.hess.lu().solve(&jet.grad) {
        Some(step) => (0..3).all(|x| step[x].abs() <= 0.75 * h[x]),
        None => true,
    }
}

fn same_point(a: &[f64; 3], b: &[f64; 3]) -> bool {
    let d = [wrap(a[0] - b[0]), a[1] - b[1], wrap(a[2] - b[2])];
    d.iter().all(|v| v.abs() < 1e-7)
}

/// Critical points on all of SO(3): the standard chart owns points with
/// `|cos θ| < 1/√2`, the second chart the rest; both search a band around the split.
pub fn find_critical_points<F: ChartField>(atlas: &Atlas<F>) -> Result<CriticalSet> {
    let primary_cos = |p: [f64; 3]| atlas.primary_cos_theta(Chart::Secondary, p).abs();
    let mut set = find_critical_points_in(
        &atlas.primary_field,
        &atlas.primary,
        |p| p[1].cos().abs() < MORSE_SPLIT + MORSE_MARGIN,
        |p| p[1].cos().abs() < MORSE_SPLIT,
    )?;
    let second = find_critical_points_in(
        &atlas.secondary_field,
        &atlas.secondary,
        |p| primary_cos(p) >= MORSE_SPLIT - MORSE_MARGIN,
        |p| primary_cos(p) >= MORSE_SPLIT,
    )?;
    set.candidate_cells += second.candidate_cells;
    set.unresolved += second.unresolved;
    set.degenerate += second.degenerate;
    for mut c in second.points {
        c.point = atlas.to_primary(Chart::Secondary, c.point);
        set.points.push(c);
    }
    Ok(set)
}

pub fn estimate_l0_morse<F: ChartField>(atlas: &Atlas<F>, u: f64) -> Result<(i64, bool)> {
    let set = find_critical_points(atlas)?;
    Ok((set.euler_characteristic(u), set.is_reliable()))
}

/// One threshold's worth of estimates for a single realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub u: f64,
    #[serde(rename = "L0_gb")]
    pub l0_gb: f64,
    #[serde(rename = "L0_morse")]
    pub l0_morse: Option<f64>,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L2_crossings")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_crossings: Option<f64>,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub skipped_area_fraction: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorOptions {
    pub morse: bool,
    pub crossings: bool,
    /// Curvature quadrature refinement depth; `None` means [`MAX_REFINE_DEPTH`].
    pub refine_depth: Option<u32>,
}

pub const MAX_SKIPPED_AREA_FRACTION: f64 = 1e-4;

/// Runs every estimator at each threshold on one atlas.
pub fn estimate_all<F: ChartField>(atlas: &Atlas<F>, thresholds: &[f64], opts: EstimatorOptions) -> Result<Vec<EstimatorReport>> {
    let crit = if opts.morse { Some(find_critical_points(atlas)?) } else { None };
    Ok(thresholds
        .iter()
        .map(|&u| {
            let mesh = extract_atlas_surface(atlas, u);
            let si = atlas_surface_integrals_to_depth(atlas, &mesh, opts.refine_depth.unwrap_or(MAX_REFINE_DEPTH));
            let l3 = estimate_l3(&atlas.primary, u);
            let skipped = si.skipped_area_fraction();
            EstimatorReport {
                u,
                l0_gb: si.gauss_curvature / (4.0 * PI),
                l0_morse: crit.as_ref().map(|c| c.euler_characteristic(mesh.u) as f64),
                l1: l1_from_parts(&si, l3),
                l2: 0.5 * si.area,
                l2_crossings: opts.crossings.then(|| estimate_l2_crossings(&atlas.primary_field, &atlas.primary, u)),
                l3,
                skipped_area_fraction: skipped,
                reliable: skipped <= MAX_SKIPPED_AREA_FRACTION && crit.as_ref().is_none_or(|c| c.is_reliable()),
            }
        })
        .collect())
}

//! Centrally symmetric convex bodies: polytopes, ellipsoids and
//! parallelepipeds, their volumes, and extremal enclosing / inscribed bodies.
//!
//! Polytopes carry both descriptions. `vertices` is the symmetric vertex set,
//! `facets` holds one functional `f` per opposite facet pair so that the body
//! is `{x : |f·x| ≤ 1 for all f}`. In 2D and 3D both are exact; for m ≥ 4 the
//! vertex list is a radial boundary sample and volumes go through QMC.

use crate::error::{Error, Result};
use crate::sampling::{self, dot, halton_point, halton_shift, norm2, unit_ball_volume};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const KHACHIYAN_MAX_ITER: usize = 100_000;
pub const KHACHIYAN_TOL: f64 = 1e-8;
pub const QMC_DEFAULT_SAMPLES: usize = 2_000_000;
/// Largest number of facet triples enumerated before the 3D parallelepiped
/// search falls back to the heuristic.
pub const EXHAUSTIVE_TRIPLE_BUDGET: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    /// Closed form or finite combinatorial search, exact up to round-off.
    Exact,
    /// Convergent approximation: quadrature, low-discrepancy sampling or an
    /// iteration stopped at a tolerance.
    Quadrature,
    /// A local search without optimality guarantee.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Standard error across randomized QMC blocks; `None` for exact paths.
    pub std_error: Option<f64>,
    pub degenerate: bool,
}

impl VolumeEstimate {
    fn exact(value: f64) -> Self {
        let degenerate = !(value > 1e-300);
        Self { value: if degenerate { 0.0 } else { value }, std_error: None, degenerate }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    facets: Vec<Vec<f64>>,
    /// Boundary triangles (3D only), indices into `vertices`, outward oriented.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    triangles: Vec<[usize; 3]>,
    #[serde(default)]
    degenerate: bool,
}

impl Polytope {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Vec<f64>] {
        &self.facets
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Symmetric hull of the given points (and their negatives).
    pub fn from_vertices(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        check_dims(dim, points)?;
        let sym = symmetrize(points);
        match dim {
            1 => {
                let r = sym.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
                if r <= 0.0 {
                    return Ok(Self::degenerate_body(dim, sym));
                }
                Ok(Self { dim, vertices: vec![vec![r], vec![-r]], facets: vec![vec![1.0 / r]], triangles: vec![], degenerate: false })
            }
            2 => {
                let hull = hull2(&sym);
                if hull.len() < 3 || polygon_area(&hull) <= 1e-300 {
                    return Ok(Self::degenerate_body(dim, sym));
                }
                let mut facets = Vec::new();
                for k in 0..hull.len() {
                    let a = &hull[k];
                    let b = &hull[(k + 1) % hull.len()];
                    // outward normal of a CCW edge
                    let n = [b[1] - a[1], a[0] - b[0]];
                    let c = n[0] * a[0] + n[1] * a[1];
                    if c <= 0.0 {
                        return Ok(Self::degenerate_body(dim, sym));
                    }
                    push_unique_functional(&mut facets, vec![n[0] / c, n[1] / c]);
                }
                Ok(Self { dim, vertices: hull, facets, triangles: vec![], degenerate: false })
            }
            3 => {
                let pts: Vec<[f64; 3]> = sym.iter().map(|p| [p[0], p[1], p[2]]).collect();
                let Some(h) = Hull3::build(&pts) else {
                    return Ok(Self::degenerate_body(dim, sym));
                };
                let (vertices, triangles) = h.compact(&pts);
                let mut facets = Vec::new();
                for t in &triangles {
                    let (n, c) = plane(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
                    if c <= 0.0 {
                        return Ok(Self::degenerate_body(dim, sym));
                    }
                    push_unique_functional(&mut facets, vec![n[0] / c, n[1] / c, n[2] / c]);
                }
                Ok(Self { dim, vertices, facets, triangles, degenerate: false })
            }
            _ => Err(Error::InvalidArgument(format!(
                "vertex hulls are only available for m ≤ 3 (got m = {dim})"
            ))),
        }
    }

    /// Body `{x : |f·x| ≤ 1}`; vertices are recovered through the polar hull.
    pub fn from_facets(dim: usize, facets: &[Vec<f64>]) -> Result<Self> {
        check_dims(dim, facets)?;
        if facets.is_empty() {
            return Err(Error::InvalidArgument("at least one facet required".into()));
        }
        let polar = Self::from_vertices(dim.min(3), facets).ok();
        match (dim, polar) {
            (1..=3, Some(q)) if !q.degenerate => {
                // Facets of the polar body are vertices of this one, and the
                // vertices of the polar body are the irredundant facets here.
                let vertices = symmetrize(&q.facets);
                let mut irredundant = Vec::new();
                for v in &q.vertices {
                    push_unique_functional(&mut irredundant, v.clone());
                }
                let mut p = Self { dim, vertices, facets: irredundant, triangles: vec![], degenerate: false };
                if dim == 3 {
                    // re-triangulate the boundary from the recovered vertices
                    let pts: Vec<[f64; 3]> = p.vertices.iter().map(|v| [v[0], v[1], v[2]]).collect();
                    let h = Hull3::build(&pts).ok_or(Error::DegenerateBody { volume: 0.0 })?;
                    let (vs, ts) = h.compact(&pts);
                    p.vertices = vs;
                    p.triangles = ts;
                } else if dim == 2 {
                    p.vertices = hull2(&p.vertices);
                }
                Ok(p)
            }
            (1..=3, _) => Err(Error::DegenerateBody { volume: f64::INFINITY }),
            _ => {
                // m ≥ 4: boundary sample along radial directions
                let gauge = |x: &[f64]| facets.iter().map(|f| dot(f, x).abs()).fold(0.0, f64::max);
                let dirs = sampling::sphere_directions(dim, 4096);
                let mut verts = Vec::with_capacity(dirs.len());
                for d in &dirs {
                    let g = gauge(d);
                    if g <= 1e-12 {
                        return Err(Error::DegenerateBody { volume: f64::INFINITY });
                    }
                    verts.push(sampling::scale(d, 1.0 / g));
                }
                Ok(Self { dim, vertices: verts, facets: facets.to_vec(), triangles: vec![], degenerate: false })
            }
        }
    }

    /// Inscribed polytope whose vertices are the boundary points `u / s(u)`
    /// of a gauge along the given unit directions.
    pub fn radial<F: Fn(&[f64]) -> f64>(dim: usize, gauge: F, directions: &[Vec<f64>]) -> Result<Self> {
        let mut pts = Vec::with_capacity(directions.len());
        for d in directions {
            let g = gauge(d);
            if !(g > 1e-12) || !g.is_finite() {
                return Err(Error::DegenerateBody { volume: f64::INFINITY });
            }
            pts.push(sampling::scale(d, 1.0 / g));
        }
        Self::from_vertices(dim, &pts)
    }

    fn degenerate_body(dim: usize, vertices: Vec<Vec<f64>>) -> Self {
        Self { dim, vertices, facets: vec![], triangles: vec![], degenerate: true }
    }

    /// Gauge `max |f·x|` of the facet description.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        self.facets.iter().map(|f| dot(f, x).abs()).fold(0.0, f64::max)
    }

    /// Support function `max_v |u·v|` over the vertex set.
    pub fn support(&self, u: &[f64]) -> f64 {
        self.vertices.iter().map(|v| dot(u, v).abs()).fold(0.0, f64::max)
    }

    /// Image under a linear map.
    pub fn transform(&self, l: &DMatrix<f64>) -> Result<Self> {
        if l.nrows() != self.dim || l.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: l.nrows() });
        }
        let pts: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| (l * DVector::from_column_slice(v)).iter().copied().collect())
            .collect();
        Self::from_vertices(self.dim, &pts)
    }

    pub fn volume(&self) -> VolumeEstimate {
        if self.degenerate {
            return VolumeEstimate { value: 0.0, std_error: None, degenerate: true };
        }
        match self.dim {
            1 => VolumeEstimate::exact(2.0 * self.vertices[0][0].abs()),
            2 => VolumeEstimate::exact(polygon_area(&self.vertices)),
            3 => {
                let v: f64 = self
                    .triangles
                    .iter()
                    .map(|t| det3(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]) / 6.0)
                    .sum();
                VolumeEstimate::exact(v)
            }
            m => {
                let r = self.vertices.iter().map(|v| norm2(v)).fold(0.0, f64::max) * 1.05;
                qmc_volume(m, |x| self.gauge(x) <= 1.0, r, QMC_DEFAULT_SAMPLES, sampling::DEFAULT_SEED)
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.gauge(x) <= 1.0 + tol
    }
}

fn check_dims(dim: usize, pts: &[Vec<f64>]) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    for p in pts {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
    }
    Ok(())
}

fn symmetrize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(points.len() * 2);
    for p in points {
        out.push(p.clone());
        out.push(p.iter().map(|x| -x).collect());
    }
    out
}

/// Keeps one representative per ± pair, dropping near-duplicates.
fn push_unique_functional(list: &mut Vec<Vec<f64>>, f: Vec<f64>) {
    let scale = norm2(&f).max(1e-300);
    let tol = 1e-9 * scale;
    let dup = list.iter().any(|g| {
        let d1 = g.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d2 = g.iter().zip(&f).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        d1 <= tol || d2 <= tol
    });
    if !dup {
        list.push(f);
    }
}

fn cross2(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn hull2(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    if pts.len() < 3 {
        return pts;
    }
    // Exact orientation test: a collinearity tolerance can drop genuine
    // corners when round-off scrambles the sort order along an edge.
    let mut lower: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross2(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Shoelace area of a simple polygon given in order.
pub fn polygon_area(poly: &[Vec<f64>]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        let a = &poly[k];
        let b = &poly[(k + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    (s / 2.0).abs()
}

fn det3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Outward plane `n·x = c` through a CCW triangle.
fn plane(a: &[f64], b: &[f64], c: &[f64]) -> ([f64; 3], f64) {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let n = [n[0] / len, n[1] / len, n[2] / len];
    (n, n[0] * a[0] + n[1] * a[1] + n[2] * a[2])
}

/// Incremental 3D convex hull.
struct Hull3 {
    faces: Vec<[usize; 3]>,
}

impl Hull3 {
    fn build(pts: &[[f64; 3]]) -> Option<Self> {
        let n = pts.len();
        if n < 4 {
            return None;
        }
        let d = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        let scale = pts.iter().map(|p| p[0].abs().max(p[1].abs()).max(p[2].abs())).fold(0.0, f64::max);
        let eps = 1e-12 * scale.max(1e-300);
        let i0 = 0;
        let i1 = (0..n).max_by(|&a, &b| d(&pts[a], &pts[i0]).total_cmp(&d(&pts[b], &pts[i0])))?;
        let line = |p: &[f64; 3]| {
            let u = sub3(&pts[i1], &pts[i0]);
            let w = sub3(p, &pts[i0]);
            let c = cross3(&u, &w);
            norm3(&c) / norm3(&u).max(1e-300)
        };
        let i2 = (0..n).max_by(|&a, &b| line(&pts[a]).total_cmp(&line(&pts[b])))?;
        if line(&pts[i2]) <= eps {
            return None;
        }
        let nrm = cross3(&sub3(&pts[i1], &pts[i0]), &sub3(&pts[i2], &pts[i0]));
        let off = |p: &[f64; 3]| dot3(&nrm, &sub3(p, &pts[i0])) / norm3(&nrm);
        let i3 = (0..n).max_by(|&a, &b| off(&pts[a]).abs().total_cmp(&off(&pts[b]).abs()))?;
        if off(&pts[i3]).abs() <= eps {
            return None;
        }
        let mut faces: Vec<[usize; 3]> = if off(&pts[i3]) > 0.0 {
            vec![[i0, i2, i1], [i0, i1, i3], [i1, i2, i3], [i2, i0, i3]]
        } else {
            vec![[i0, i1, i2], [i0, i3, i1], [i1, i3, i2], [i2, i3, i0]]
        };
        let outside = |f: &[usize; 3], p: &[f64; 3]| {
            let a = &pts[f[0]];
            let nn = cross3(&sub3(&pts[f[1]], a), &sub3(&pts[f[2]], a));
            dot3(&nn, &sub3(p, a)) / norm3(&nn).max(1e-300)
        };
        for (idx, p) in pts.iter().enumerate() {
            if idx == i0 || idx == i1 || idx == i2 || idx == i3 {
                continue;
            }
            let visible: Vec<bool> = faces.iter().map(|f| outside(f, p) > eps).collect();
            if !visible.iter().any(|&v| v) {
                continue;
            }
            let mut edges: HashMap<(usize, usize), ()> = HashMap::new();
            for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
                for k in 0..3 {
                    edges.insert((f[k], f[(k + 1) % 3]), ());
                }
            }
            let mut next: Vec<[usize; 3]> = Vec::with_capacity(faces.len() + 8);
            for (f, v) in faces.iter().zip(&visible) {
                if !v {
                    next.push(*f);
                }
            }
            for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    if !edges.contains_key(&(b, a)) {
                        next.push([a, b, idx]);
                    }
                }
            }
            faces = next;
        }
        Some(Self { faces })
    }

    /// Re-indexes the hull onto its own vertex list.
    fn compact(&self, pts: &[[f64; 3]]) -> (Vec<Vec<f64>>, Vec<[usize; 3]>) {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut verts = Vec::new();
        let mut tris = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let mut t = [0usize; 3];
            for k in 0..3 {
                t[k] = *map.entry(f[k]).or_insert_with(|| {
                    verts.push(pts[f[k]].to_vec());
                    verts.len() - 1
                });
            }
            tris.push(t);
        }
        (verts, tris)
    }
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Quasi-Monte Carlo volume of `{x : inside(x)}` within the box `[-r, r]^m`.
/// The sample budget is split over 16 Cranley-Patterson shifted Halton blocks;
/// the spread between blocks gives the reported standard error.
pub fn qmc_volume<F: Fn(&[f64]) -> bool>(m: usize, inside: F, r: f64, samples: usize, seed: u64) -> VolumeEstimate {
    const BLOCKS: usize = 16;
    let per_block = (samples / BLOCKS).max(1);
    let box_vol = (2.0 * r).powi(m as i32);
    let estimates: Vec<f64> = (0..BLOCKS)
        .map(|b| {
            let shift = halton_shift(seed.wrapping_add(b as u64), m);
            let mut hits = 0usize;
            let mut x = vec![0.0; m];
            for i in 0..per_block as u64 {
                let u = halton_point(i, m, &shift);
                for k in 0..m {
                    x[k] = (2.0 * u[k] - 1.0) * r;
                }
                if inside(&x) {
                    hits += 1;
                }
            }
            box_vol * hits as f64 / per_block as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / BLOCKS as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (BLOCKS as f64 - 1.0);
    VolumeEstimate { value: mean, std_error: Some((var / BLOCKS as f64).sqrt()), degenerate: mean <= 0.0 }
}

/// Centered ellipsoid `{x : xᵀ A x ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(shape: DMatrix<f64>) -> Result<Self> {
        if !shape.is_square() || shape.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { shape })
    }

    pub fn ball(m: usize, radius: f64) -> Self {
        Self { shape: DMatrix::identity(m, m) / (radius * radius) }
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) / self.shape.determinant().sqrt()
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.shape * &v))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.quadratic(x) <= (1.0 + tol) * (1.0 + tol)
    }

    /// Boundary point in direction `u`.
    pub fn boundary_point(&self, u: &[f64]) -> Vec<f64> {
        sampling::scale(u, 1.0 / self.quadratic(u).sqrt())
    }
}

/// Centered parallelepiped `{x : |f_i·x| ≤ 1}` with the functionals as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parallelepiped {
    pub functionals: DMatrix<f64>,
    pub exactness: Exactness,
}

impl Parallelepiped {
    pub fn new(functionals: DMatrix<f64>, exactness: Exactness) -> Result<Self> {
        if !functionals.is_square() || functionals.determinant().abs() <= 1e-300 {
            return Err(Error::InvalidArgument("parallelepiped functionals must be invertible".into()));
        }
        Ok(Self { functionals, exactness })
    }

    pub fn dim(&self) -> usize {
        self.functionals.nrows()
    }

    pub fn volume(&self) -> f64 {
        2f64.powi(self.dim() as i32) / self.functionals.determinant().abs()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let v = &self.functionals * DVector::from_column_slice(x);
        v.iter().all(|y| y.abs() <= 1.0 + tol)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "body", rename_all = "snake_case")]
pub enum Body {
    Polytope(Polytope),
    Ellipsoid(Ellipsoid),
    Parallelepiped(Parallelepiped),
}

impl Body {
    pub fn volume(&self) -> VolumeEstimate {
        match self {
            Body::Polytope(p) => p.volume(),
            Body::Ellipsoid(e) => VolumeEstimate::exact(e.volume()),
            Body::Parallelepiped(p) => VolumeEstimate::exact(p.volume()),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Body::Polytope(p) => p.contains(x, tol),
            Body::Ellipsoid(e) => e.contains(x, tol),
            Body::Parallelepiped(p) => p.contains(x, tol),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KhachiyanReport {
    pub iterations: usize,
    /// max_j κ_j / m − 1 at termination.
    pub gap: f64,
}

/// Minimum-volume centered ellipsoid containing `±points`, by Khachiyan's
/// coordinate ascent with Wolfe away steps on the barycentric weights.
/// The returned shape is rescaled so every point lies inside.
pub fn centered_mvee(points: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<(Ellipsoid, KhachiyanReport)> {
    let m = points.first().map(|p| p.len()).ok_or_else(|| Error::InvalidArgument("no points".into()))?;
    let n = points.len();
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let mut u = vec![1.0 / n as f64; n];
    let moment = |u: &[f64]| {
        let mut x = DMatrix::zeros(m, m);
        for (w, p) in u.iter().zip(&pts) {
            if *w > 0.0 {
                x.ger(*w, p, p, 1.0);
            }
        }
        x
    };
    let mut x = moment(&u);
    let mut xinv = x.clone().try_inverse().ok_or(Error::DegenerateBody { volume: 0.0 })?;
    let mut kappa: Vec<f64> = pts.iter().map(|p| p.dot(&(&xinv * p))).collect();
    let mut iterations = 0;
    let md = m as f64;
    loop {
        let (jmax, kmax) = kappa.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let gap = kmax / md - 1.0;
        if gap <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence { iterations, gap });
        }
        iterations += 1;
        let (jmin, kmin) = kappa
            .iter()
            .copied()
            .enumerate()
            .filter(|(j, _)| u[*j] > 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let (j, tau) = if kmax - md >= md - kmin {
            (jmax, (kmax / md - 1.0) / (kmax - 1.0))
        } else {
            let t = (kmin / md - 1.0) / (kmin - 1.0);
            (jmin, t.max(-u[jmin] / (1.0 - u[jmin])))
        };
        for w in u.iter_mut() {
            *w *= 1.0 - tau;
        }
        u[j] += tau;
        if u[j] < 1e-300 {
            u[j] = 0.0;
        }
        // rank-one update of X and its inverse
        let p = &pts[j];
        x *= 1.0 - tau;
        x.ger(tau, p, p, 1.0);
        let s = tau / (1.0 - tau);
        let xp = &xinv * p;
        let denom = 1.0 + s * p.dot(&xp);
        xinv = (&xinv - (&xp * xp.transpose()) * (s / denom)) / (1.0 - tau);
        if iterations % 64 == 0 {
            xinv = x.clone().try_inverse().ok_or(Error::DegenerateBody { volume: 0.0 })?;
        }
        for (k, q) in kappa.iter_mut().zip(&pts) {
            *k = q.dot(&(&xinv * q));
        }
    }
    let kmax = kappa.iter().copied().fold(0.0, f64::max);
    let shape = &xinv / kmax;
    let gap = kmax / md - 1.0;
    Ok((Ellipsoid { shape }, KhachiyanReport { iterations, gap }))
}

pub fn min_enclosing_ellipsoid(p: &Polytope, tol: f64) -> Result<(Ellipsoid, KhachiyanReport)> {
    if p.degenerate {
        return Err(Error::DegenerateBody { volume: 0.0 });
    }
    centered_mvee(&p.vertices, tol, KHACHIYAN_MAX_ITER)
}

/// Largest centered ellipsoid inside the facet description: the polar of the
/// minimal ellipsoid around the facet functionals.
pub fn max_inscribed_ellipsoid(p: &Polytope, tol: f64) -> Result<(Ellipsoid, KhachiyanReport)> {
    if p.degenerate || p.facets.is_empty() {
        return Err(Error::DegenerateBody { volume: 0.0 });
    }
    inscribed_from_functionals(&p.facets, tol)
}

/// Largest centered ellipsoid inside `{x : |g·x| ≤ 1 for all g}`.
pub fn inscribed_from_functionals(functionals: &[Vec<f64>], tol: f64) -> Result<(Ellipsoid, KhachiyanReport)> {
    let (outer, report) = centered_mvee(functionals, tol, KHACHIYAN_MAX_ITER)?;
    let inv = outer.shape.try_inverse().ok_or(Error::DegenerateBody { volume: 0.0 })?;
    Ok((Ellipsoid { shape: inv }, report))
}

/// Minimal-volume parallelepiped containing a symmetric polytope.
///
/// For a symmetric polytope an optimal parallelepiped can always be chosen
/// with every face pair flush with a facet pair, so the search runs over
/// m-subsets of facet functionals maximizing |det|. In 2D this is a full
/// enumeration (for each edge direction, the best partner edge), in 3D it is
/// exhaustive while the triple count stays within
/// [`EXHAUSTIVE_TRIPLE_BUDGET`], otherwise (and for m ≥ 4) a multi-start
/// block ascent seeded from the minimal ellipsoid's axes, flagged heuristic.
pub fn min_enclosing_parallelepiped(p: &Polytope, restarts: usize) -> Result<Parallelepiped> {
    if p.degenerate || p.facets.len() < p.dim {
        return Err(Error::DegenerateBody { volume: 0.0 });
    }
    let m = p.dim;
    let fs = &p.facets;
    let k = fs.len();
    let rows_to_matrix = |idx: &[usize]| DMatrix::from_fn(m, m, |i, j| fs[idx[i]][j]);
    let (best, exactness) = match m {
        1 => (vec![0], Exactness::Exact),
        2 => {
            let mut best = (0.0, vec![0, 0]);
            for a in 0..k {
                for b in a + 1..k {
                    let d = (fs[a][0] * fs[b][1] - fs[a][1] * fs[b][0]).abs();
                    if d > best.0 {
                        best = (d, vec![a, b]);
                    }
                }
            }
            (best.1, Exactness::Exact)
        }
        3 if k * k.saturating_sub(1) * k.saturating_sub(2) / 6 <= EXHAUSTIVE_TRIPLE_BUDGET => {
            let mut best = (0.0, vec![0, 0, 0]);
            for a in 0..k {
                for b in a + 1..k {
                    let c = cross3(&[fs[a][0], fs[a][1], fs[a][2]], &[fs[b][0], fs[b][1], fs[b][2]]);
                    for (cidx, fc) in fs.iter().enumerate().skip(b + 1) {
                        let d = (c[0] * fc[0] + c[1] * fc[1] + c[2] * fc[2]).abs();
                        if d > best.0 {
                            best = (d, vec![a, b, cidx]);
                        }
                    }
                }
            }
            (best.1, Exactness::Exact)
        }
        _ => (facet_block_ascent(p, restarts)?, Exactness::Heuristic),
    };
    let f = rows_to_matrix(&best);
    if f.determinant().abs() <= 1e-300 {
        return Err(Error::DegenerateBody { volume: 0.0 });
    }
    Ok(Parallelepiped { functionals: f, exactness })
}

/// Block coordinate ascent on |det F| over facet rows: row i is replaced by
/// the facet functional maximizing |f·c| with c its cofactor vector.
fn facet_block_ascent(p: &Polytope, restarts: usize) -> Result<Vec<usize>> {
    let m = p.dim;
    let fs = &p.facets;
    let mut starts: Vec<Vec<usize>> = Vec::new();
    if let Ok((e, _)) = min_enclosing_ellipsoid(p, 1e-6) {
        // facets best aligned with the ellipsoid's axes
        let eig = e.shape.symmetric_eigen();
        let mut seed = Vec::new();
        for i in 0..m {
            let axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let j = (0..fs.len())
                .filter(|j| !seed.contains(j))
                .max_by(|&a, &b| {
                    let ca = dot(&fs[a], &axis).abs() / norm2(&fs[a]);
                    let cb = dot(&fs[b], &axis).abs() / norm2(&fs[b]);
                    ca.total_cmp(&cb)
                })
                .unwrap_or(0);
            seed.push(j);
        }
        starts.push(seed);
    }
    let mut rng = sampling::rng(sampling::DEFAULT_SEED);
    for _ in 0..restarts.max(1) {
        let mut s: Vec<usize> = Vec::new();
        while s.len() < m {
            let j = rng.gen_range(0..fs.len());
            if !s.contains(&j) {
                s.push(j);
            }
        }
        starts.push(s);
    }
    let det_of = |idx: &[usize]| DMatrix::from_fn(m, m, |i, j| fs[idx[i]][j]).determinant().abs();
    let mut best = (0.0, starts[0].clone());
    for mut rows in starts {
        for _sweep in 0..50 {
            let mut improved = false;
            for i in 0..m {
                let mat = DMatrix::from_fn(m, m, |r, c| fs[rows[r]][c]);
                let cof: Vec<f64> = (0..m)
                    .map(|j| {
                        let minor = mat.clone().remove_row(i).remove_column(j);
                        let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                        s * if m == 1 { 1.0 } else { minor.determinant() }
                    })
                    .collect();
                let cur = dot(&fs[rows[i]], &cof).abs();
                let (jbest, vbest) = (0..fs.len())
                    .map(|j| (j, dot(&fs[j], &cof).abs()))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                if vbest > cur * (1.0 + 1e-12) {
                    rows[i] = jbest;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        let d = det_of(&rows);
        if d > best.0 {
            best = (d, rows);
        }
    }
    Ok(best.1)
}

/// Heuristic minimal parallelepiped around `{x : gauge(x) ≤ 1}` for bodies
/// known only through their gauge. Rows are moved to supporting functionals
/// at `c / gauge(c)` (c the cofactor vector), starting from the given frames.
pub fn min_enclosing_parallelepiped_of_gauge<F: Fn(&[f64]) -> f64>(
    m: usize,
    gauge: F,
    seeds: &[DMatrix<f64>],
    sweeps: usize,
) -> Result<Parallelepiped> {
    let support_row = |x: &[f64]| -> Vec<f64> {
        // numerical subgradient of the gauge at a boundary point
        let h = 1e-6 * norm2(x).max(1e-12);
        let mut g = vec![0.0; m];
        let mut xp = x.to_vec();
        for j in 0..m {
            xp[j] = x[j] + h;
            let fp = gauge(&xp);
            xp[j] = x[j] - h;
            let fm = gauge(&xp);
            xp[j] = x[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        let s = dot(&g, x);
        sampling::scale(&g, 1.0 / s)
    };
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for seed in seeds {
        let mut f = seed.clone();
        // normalize rows to support value 1 on the body
        for i in 0..m {
            let r: Vec<f64> = f.row(i).iter().copied().collect();
            let x = sampling::scale(&r, 1.0 / gauge(&r));
            let g = support_row(&x);
            for j in 0..m {
                f[(i, j)] = g[j];
            }
        }
        for _ in 0..sweeps {
            let before = f.determinant().abs();
            for i in 0..m {
                let inv_t = match f.clone().try_inverse() {
                    Some(inv) => inv.transpose() * f.determinant(),
                    None => break,
                };
                let c: Vec<f64> = inv_t.row(i).iter().copied().collect();
                let gc = gauge(&c);
                if !(gc > 0.0) {
                    continue;
                }
                let g = support_row(&sampling::scale(&c, 1.0 / gc));
                for j in 0..m {
                    f[(i, j)] = g[j];
                }
            }
            if f.determinant().abs() <= before * (1.0 + 1e-13) {
                break;
            }
        }
        let d = f.determinant().abs();
        if best.as_ref().map_or(true, |(b, _)| d > *b) {
            best = Some((d, f));
        }
    }
    let (_, f) = best.ok_or_else(|| Error::InvalidArgument("no seed frames".into()))?;
    Parallelepiped::new(f, Exactness::Heuristic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn square() -> Polytope {
        Polytope::from_vertices(2, &[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn regular_polygon(k: usize) -> Polytope {
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        Polytope::from_vertices(2, &pts).unwrap()
    }

    #[test]
    fn volume_examples() {
        assert_abs_diff_eq!(Ellipsoid::ball(2, 1.0).volume(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(square().volume().value, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(regular_polygon(8).volume().value, 2.0 * 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn octagon_area_by_triangle_fan() {
        // independent oracle: 8 isoceles triangles with apex angle π/4
        let fan = 8.0 * 0.5 * (PI / 4.0).sin();
        assert_abs_diff_eq!(regular_polygon(8).volume().value, fan, epsilon = 1e-14);
    }

    #[test]
    fn facets_and_vertices_agree() {
        let sq = square();
        assert_eq!(sq.facets().len(), 2);
        let back = Polytope::from_facets(2, sq.facets()).unwrap();
        assert_abs_diff_eq!(back.volume().value, 4.0, epsilon = 1e-14);
        let redundant = Polytope::from_facets(2, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.1, 0.1]]).unwrap();
        assert_eq!(redundant.facets().len(), 2);
    }

    #[test]
    fn cube_in_3d() {
        let cube = Polytope::from_facets(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(cube.vertices().len(), 8);
        assert_abs_diff_eq!(cube.volume().value, 8.0, epsilon = 1e-12);
        let octa = Polytope::from_vertices(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(octa.volume().value, 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(octa.facets().len(), 4);
    }

    #[test]
    fn icosphere_hull_approaches_ball() {
        let (v, _) = sampling::icosphere(3);
        let pts: Vec<Vec<f64>> = v.iter().map(|p| p.to_vec()).collect();
        let p = Polytope::from_vertices(3, &pts).unwrap();
        let vol = p.volume().value;
        assert!(vol < 4.0 * PI / 3.0 && vol > 0.98 * 4.0 * PI / 3.0);
    }

    #[test]
    fn qmc_ball_volume_4d() {
        let est = qmc_volume(4, |x| norm2(x) <= 1.0, 1.0, 400_000, 7);
        let exact = PI * PI / 2.0;
        assert!((est.value - exact).abs() < 4e-3 * exact, "{est:?}");
        assert!(est.std_error.unwrap() < 1e-2);
    }

    #[test]
    fn contains_examples() {
        let disk = Ellipsoid::ball(2, 1.0);
        assert!(disk.contains(&[1.0, 0.0], 1e-12));
        assert!(!disk.contains(&[1.001, 0.0], 1e-6));
        let oct = regular_polygon(8);
        assert!(oct.contains(&[1.0, 0.0], 1e-12));
        let t = PI / 4.0;
        assert!(oct.contains(&[t.cos(), t.sin()], 1e-12));
    }

    #[test]
    fn mvee_examples() {
        let (e, _) = min_enclosing_ellipsoid(&square(), 1e-10).unwrap();
        assert_abs_diff_eq!(e.shape, DMatrix::identity(2, 2) / 2.0, epsilon = 1e-8);
        for n in [2, 3, 4, 8] {
            let (e, _) = min_enclosing_ellipsoid(&regular_polygon(2 * n), 1e-10).unwrap();
            assert_abs_diff_eq!(e.shape, DMatrix::identity(2, 2), epsilon = 1e-8);
        }
        let pts: Vec<Vec<f64>> = (0..64)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 64.0 + 0.1;
                vec![2.0 * t.cos(), t.sin()]
            })
            .collect();
        let p = Polytope::from_vertices(2, &pts).unwrap();
        let (e, _) = min_enclosing_ellipsoid(&p, 1e-10).unwrap();
        let target = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0]));
        assert_abs_diff_eq!(e.shape, target, epsilon = 1e-7);
    }

    #[test]
    fn square_mvee_beats_perturbations() {
        // oracle: every enclosing ellipsoid near A = I/2 has larger area
        let (e, _) = min_enclosing_ellipsoid(&square(), 1e-12).unwrap();
        let best = e.volume();
        let mut rng = sampling::rng(3);
        for _ in 0..200 {
            let d: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.05..0.05));
            let a = &e.shape + (&d + d.transpose()) / 2.0;
            if a.clone().cholesky().is_none() {
                continue;
            }
            let cand = Ellipsoid { shape: a };
            let rescale = square().vertices().iter().map(|v| cand.quadratic(v)).fold(0.0, f64::max);
            let enclosing = Ellipsoid { shape: cand.shape / rescale };
            assert!(enclosing.volume() >= best - 1e-12);
        }
    }

    #[test]
    fn inscribed_examples() {
        let (e, _) = max_inscribed_ellipsoid(&square(), 1e-10).unwrap();
        assert_abs_diff_eq!(e.shape, DMatrix::identity(2, 2), epsilon = 1e-8);
        let diamond = Polytope::from_vertices(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (e, _) = max_inscribed_ellipsoid(&diamond, 1e-10).unwrap();
        assert_abs_diff_eq!(e.shape, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-7);
        // tangency: the facet x + y = 1 touches the circle of radius 1/√2
        let touch = e.boundary_point(&[0.5f64.sqrt(), 0.5f64.sqrt()]);
        assert_abs_diff_eq!(touch[0] + touch[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn parallelepiped_examples() {
        let p = min_enclosing_parallelepiped(&square(), 4).unwrap();
        assert_abs_diff_eq!(p.volume(), 4.0, epsilon = 1e-14);
        assert_eq!(p.exactness, Exactness::Exact);
        let diamond = Polytope::from_vertices(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(min_enclosing_parallelepiped(&diamond, 4).unwrap().volume(), 2.0, epsilon = 1e-14);
        let disk = regular_polygon(512);
        let v = min_enclosing_parallelepiped(&disk, 4).unwrap().volume();
        // the 512-gon's optimal parallelogram is the square around its apothem
        assert_abs_diff_eq!(v, 4.0 * (PI / 512.0).cos().powi(2), epsilon = 1e-12);
    }

    #[test]
    fn parallelogram_enumeration_oracle() {
        // brute force over a fine sweep of both side directions
        let hex = Polytope::from_vertices(2, &[vec![1.0, 0.0], vec![0.3, 0.9], vec![-0.6, 0.7]]).unwrap();
        let exact = min_enclosing_parallelepiped(&hex, 4).unwrap().volume();
        let n = 720;
        let mut brute = f64::INFINITY;
        for i in 0..n {
            let a = PI * i as f64 / n as f64;
            for j in 0..n {
                let b = PI * j as f64 / n as f64;
                let f1 = [a.cos(), a.sin()];
                let f2 = [b.cos(), b.sin()];
                let det = (f1[0] * f2[1] - f1[1] * f2[0]).abs();
                if det < 1e-6 {
                    continue;
                }
                brute = brute.min(4.0 * hex.support(&f1) * hex.support(&f2) / det);
            }
        }
        assert!(exact <= brute + 1e-12);
        assert!(brute - exact < 1e-3 * exact);
    }

    #[test]
    fn cube_parallelepiped_3d() {
        let cube = Polytope::from_facets(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let p = min_enclosing_parallelepiped(&cube, 4).unwrap();
        assert_abs_diff_eq!(p.volume(), 8.0, epsilon = 1e-12);
        for v in cube.vertices() {
            assert!(p.contains(v, 1e-12));
        }
    }

    #[test]
    fn gauge_parallelepiped_of_ball() {
        let seeds = vec![DMatrix::identity(4, 4), DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.2 })];
        let p = min_enclosing_parallelepiped_of_gauge(4, norm2, &seeds, 30).unwrap();
        assert_abs_diff_eq!(p.volume(), 16.0, epsilon = 1e-6);
    }

    #[test]
    fn sandwich_and_equivariance() {
        let mut rng = sampling::rng(11);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let p = Polytope::from_vertices(2, &pts).unwrap();
            if p.is_degenerate() {
                continue;
            }
            let (ein, _) = max_inscribed_ellipsoid(&p, 1e-9).unwrap();
            let (eout, _) = min_enclosing_ellipsoid(&p, 1e-9).unwrap();
            let par = min_enclosing_parallelepiped(&p, 4).unwrap();
            let vol = p.volume().value;
            assert!(ein.volume() <= vol + 1e-9);
            assert!(vol <= eout.volume() + 1e-9);
            assert!(vol <= par.volume() + 1e-9);
            for v in p.vertices() {
                assert!(eout.contains(v, 1e-9));
                assert!(par.contains(v, 1e-9));
            }
            for k in 0..1000 {
                let t = 2.0 * PI * k as f64 / 1000.0;
                let b = ein.boundary_point(&[t.cos(), t.sin()]);
                assert!(p.contains(&b, 1e-6));
            }
            let l: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-2.0..2.0));
            if l.determinant().abs() < 0.1 {
                continue;
            }
            let lp = p.transform(&l).unwrap();
            assert_abs_diff_eq!(lp.volume().value, l.determinant().abs() * vol, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_body_flagged() {
        let seg = Polytope::from_vertices(2, &[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(seg.is_degenerate());
        let v = seg.volume();
        assert!(v.degenerate);
        assert_eq!(v.value, 0.0);
        assert!(min_enclosing_parallelepiped(&seg, 2).is_err());
    }

    #[test]
    fn body_json() {
        let b = Body::Polytope(square());
        let s = serde_json::to_string(&b).unwrap();
        let back: Body = serde_json::from_str(&s).unwrap();
        assert_abs_diff_eq!(back.volume().value, 4.0);
        let e = Body::Ellipsoid(Ellipsoid::ball(3, 2.0));
        let back: Body = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_abs_diff_eq!(back.volume().value, 32.0 * PI / 3.0, epsilon = 1e-12);
    }
}

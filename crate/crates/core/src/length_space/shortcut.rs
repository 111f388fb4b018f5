//! The round sphere with a great circle C along which travel costs half:
//! d(x, y) = min(D(x, y), inf_{v,w ∈ C} D(x, v) + ½D(v, w) + D(w, y)),
//! D the great-circle distance.

use super::surface::P3;
use crate::error::{Error, Result};
use crate::rectifiable::Metric;
use crate::sampling::{self, golden_section_min};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Great-circle distance between unit vectors.
pub fn sphere_distance(a: &[f64], b: &[f64]) -> f64 {
    // atan2 form stays accurate for nearly equal and nearly antipodal points
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    s.atan2(d)
}

/// The round sphere with its intrinsic distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundSphere;

impl Metric for RoundSphere {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        sphere_distance(a, b)
    }
}

#[derive(Debug, Clone)]
pub struct ShortcutSphere {
    normal: P3,
    u1: P3,
    u2: P3,
    samples: usize,
    circle: Vec<P3>,
}

/// Minimal circle sample count.
pub const MIN_CIRCLE_SAMPLES: usize = 16;

impl ShortcutSphere {
    /// Shortcut along the equator z = 0.
    pub fn new(circle_samples: usize) -> Result<Self> {
        Self::with_normal([0.0, 0.0, 1.0], circle_samples)
    }

    pub fn with_normal(normal: P3, circle_samples: usize) -> Result<Self> {
        if circle_samples < MIN_CIRCLE_SAMPLES {
            return Err(Error::InvalidArgument(format!("need at least {MIN_CIRCLE_SAMPLES} circle samples, got {circle_samples}")));
        }
        let n = sampling::unit3(normal);
        let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let d = helper[0] * n[0] + helper[1] * n[1] + helper[2] * n[2];
        let u1 = sampling::unit3([helper[0] - d * n[0], helper[1] - d * n[1], helper[2] - d * n[2]]);
        let u2 = [n[1] * u1[2] - n[2] * u1[1], n[2] * u1[0] - n[0] * u1[2], n[0] * u1[1] - n[1] * u1[0]];
        let mut s = Self { normal: n, u1, u2, samples: circle_samples, circle: Vec::new() };
        s.circle = (0..circle_samples).map(|k| s.circle_point(2.0 * PI * k as f64 / circle_samples as f64)).collect();
        Ok(s)
    }

    pub fn normal(&self) -> P3 {
        self.normal
    }

    pub fn circle_point(&self, t: f64) -> P3 {
        let (s, c) = t.sin_cos();
        [c * self.u1[0] + s * self.u2[0], c * self.u1[1] + s * self.u2[1], c * self.u1[2] + s * self.u2[2]]
    }

    /// Great-circle distance from a unit vector to C.
    pub fn distance_to_circle(&self, x: &[f64]) -> f64 {
        let h = x[0] * self.normal[0] + x[1] * self.normal[1] + x[2] * self.normal[2];
        h.clamp(-1.0, 1.0).abs().asin()
    }

    /// Discretization error bound of the circle infimum before polishing:
    /// both endpoints move by at most half a sample spacing.
    pub fn discretization_bound(&self) -> f64 {
        2.0 * PI / self.samples as f64
    }

    /// The best route through C, as (length, entry angle, exit angle).
    pub fn shortcut(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let s = self.samples;
        let step = 2.0 * PI / s as f64;
        let a: Vec<f64> = self.circle.iter().map(|v| sphere_distance(x, v)).collect();
        let b: Vec<f64> = self.circle.iter().map(|v| sphere_distance(y, v)).collect();
        // g[k] = min_j a[j] + ½·circ(j, k), by forward and backward sweeps
        // around the circle (two laps each settle the wrap-around)
        let mut g = a.clone();
        let mut src: Vec<usize> = (0..s).collect();
        let half = 0.5 * step;
        for _ in 0..2 {
            for i in 1..=s {
                let (p, k) = ((i - 1) % s, i % s);
                if g[p] + half < g[k] {
                    g[k] = g[p] + half;
                    src[k] = src[p];
                }
            }
            for i in (0..s).rev() {
                let (p, k) = ((i + 1) % s, i);
                if g[p] + half < g[k] {
                    g[k] = g[p] + half;
                    src[k] = src[p];
                }
            }
        }
        let (mut kbest, mut best) = (0, f64::INFINITY);
        for k in 0..s {
            if g[k] + b[k] < best {
                best = g[k] + b[k];
                kbest = k;
            }
        }
        let mut t_in = src[kbest] as f64 * step;
        let mut t_out = kbest as f64 * step;
        // alternate golden-section polish of entry and exit angles
        let cost = |ti: f64, to: f64| {
            let d = (ti - to).rem_euclid(2.0 * PI);
            sphere_distance(x, &self.circle_point(ti)) + 0.5 * d.min(2.0 * PI - d) + sphere_distance(y, &self.circle_point(to))
        };
        let mut polished = cost(t_in, t_out);
        for _ in 0..3 {
            let (ti, _) = golden_section_min(|t| cost(t, t_out), t_in - step, t_in + step, 60);
            let (to, v) = golden_section_min(|t| cost(ti, t), t_out - step, t_out + step, 60);
            if v < polished {
                polished = v;
                t_in = ti;
                t_out = to;
            }
        }
        (best.min(polished), t_in.rem_euclid(2.0 * PI), t_out.rem_euclid(2.0 * PI))
    }
}

impl Metric for ShortcutSphere {
    fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = sphere_distance(x, y);
        // any route through C is at least as long as reaching C from both ends
        if self.distance_to_circle(x) + self.distance_to_circle(y) >= d {
            return d;
        }
        d.min(self.shortcut(x, y).0)
    }
}

/// A metric with a sampler for its points.
pub trait PointSpace: Metric {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl PointSpace for RoundSphere {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        sampling::random_unit_vector(rng, 3)
    }
}

impl PointSpace for ShortcutSphere {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        sampling::random_unit_vector(rng, 3)
    }
}

impl PointSpace for super::steiner::GraphOracle {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = rng.gen_range(0..self.graph().node_count());
        self.graph().position(n).to_vec()
    }
}

/// Deliberately broken metric for negative controls: distances from the
/// lexicographically smaller point are inflated by `factor`.
pub struct AsymmetricDistortion<'a, S: PointSpace> {
    pub inner: &'a S,
    pub factor: f64,
}

impl<S: PointSpace> Metric for AsymmetricDistortion<'_, S> {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.inner.dist(a, b);
        if a.partial_cmp(b) == Some(std::cmp::Ordering::Less) {
            d * self.factor
        } else {
            d
        }
    }
}

impl<S: PointSpace> PointSpace for AsymmetricDistortion<'_, S> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.inner.sample(rng)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct AxiomViolation {
    pub kind: String,
    pub points: Vec<Vec<f64>>,
    pub excess: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct AxiomCheck {
    pub triples: usize,
    pub symmetry_violations: usize,
    pub identity_violations: usize,
    pub triangle_violations: usize,
    pub worst_excess: f64,
    /// Up to ten violations, worst first.
    pub witnesses: Vec<AxiomViolation>,
    pub passed: bool,
}

/// Symmetry, d(x,x) = 0 and the triangle inequality on seeded triples.
pub fn check_metric_axioms<S: PointSpace + ?Sized>(space: &S, sample_count: usize, tol: f64, seed: u64) -> AxiomCheck {
    let mut rng = sampling::rng(seed);
    let mut report = AxiomCheck {
        triples: sample_count,
        symmetry_violations: 0,
        identity_violations: 0,
        triangle_violations: 0,
        worst_excess: 0.0,
        witnesses: Vec::new(),
        passed: true,
    };
    let record = |r: &mut AxiomCheck, kind: &str, pts: Vec<Vec<f64>>, excess: f64| {
        r.worst_excess = r.worst_excess.max(excess);
        r.witnesses.push(AxiomViolation { kind: kind.into(), points: pts, excess });
    };
    for _ in 0..sample_count {
        let x = space.sample(&mut rng);
        let y = space.sample(&mut rng);
        let z = space.sample(&mut rng);
        let dxy = space.dist(&x, &y);
        let dyx = space.dist(&y, &x);
        let dyz = space.dist(&y, &z);
        let dxz = space.dist(&x, &z);
        let dxx = space.dist(&x, &x);
        if (dxy - dyx).abs() > tol {
            report.symmetry_violations += 1;
            record(&mut report, "symmetry", vec![x.clone(), y.clone()], (dxy - dyx).abs());
        }
        if dxx.abs() > tol {
            report.identity_violations += 1;
            record(&mut report, "identity", vec![x.clone()], dxx.abs());
        }
        let excess = dxz - dxy - dyz;
        if excess > tol {
            report.triangle_violations += 1;
            record(&mut report, "triangle", vec![x, y, z], excess);
        }
    }
    report.witnesses.sort_by(|a, b| b.excess.total_cmp(&a.excess));
    report.witnesses.truncate(10);
    report.passed = report.symmetry_violations + report.identity_violations + report.triangle_violations == 0;
    report
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct LipschitzProfile {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub pairs_used: usize,
    pub skipped: usize,
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
    pub argmin: Option<(Vec<f64>, Vec<f64>)>,
}

/// Ratios d_target(f x, f y) / d_source(x, y) over the given pairs;
/// pairs at zero source distance are skipped.
pub fn lipschitz_profile<F>(source: &dyn Metric, target: &dyn Metric, map: F, pairs: &[(Vec<f64>, Vec<f64>)]) -> LipschitzProfile
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = LipschitzProfile { max_ratio: f64::NEG_INFINITY, min_ratio: f64::INFINITY, pairs_used: 0, skipped: 0, argmax: None, argmin: None };
    for (x, y) in pairs {
        let ds = source.dist(x, y);
        if !(ds > 0.0) || !ds.is_finite() {
            p.skipped += 1;
            continue;
        }
        let r = target.dist(&map(x), &map(y)) / ds;
        p.pairs_used += 1;
        if r > p.max_ratio {
            p.max_ratio = r;
            p.argmax = Some((x.clone(), y.clone()));
        }
        if r < p.min_ratio {
            p.min_ratio = r;
            p.argmin = Some((x.clone(), y.clone()));
        }
    }
    p
}

/// Seeded pairs of points drawn from a space.
pub fn sample_pairs<S: PointSpace + ?Sized>(space: &S, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = sampling::rng(seed);
    (0..count).map(|_| (space.sample(&mut rng), space.sample(&mut rng))).collect()
}

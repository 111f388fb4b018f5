//! Empirical check of the hypotheses and conclusion of the metric rigidity
//! statement for a map f: X → Y between rectifiable spaces: f 1-Lipschitz,
//! M^μ(X) ≥ Vol(Y), volume preserved on balls, infinitesimally isometric,
//! and finally whether f preserves distances. It proves nothing.

use super::shortcut::{sample_pairs, lipschitz_profile, PointSpace, RoundSphere, ShortcutSphere};
use super::steiner::{GraphOracle, NullSet, Primitive};
use super::surface::flat_square_mesh;
use super::zigzag::{build_zigzag_surface, zigzag_height, ZIGZAG_HEIGHT_LIPSCHITZ};
use crate::error::{Error, Result};
use crate::finsler_volume::{JacobianConfig, VolumeDefinition};
use crate::rectifiable::{
    graph_chart, infinitesimal_isometry_check, linear_chart, md_jacobian, sphere_atlas, Ambient, Atlas, DerivativeConfig, MapSpec, Metric,
};
use crate::sampling::{self, norm2, sub};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Euclidean distance as a [`Metric`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanMetric;

impl Metric for EuclideanMetric {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        norm2(&sub(a, b))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticTolerances {
    pub lipschitz: f64,
    pub volume: f64,
    pub ball: f64,
    pub isometry: f64,
    pub isometry_fraction: f64,
    pub distance: f64,
}

impl Default for DiagnosticTolerances {
    fn default() -> Self {
        Self { lipschitz: 1e-6, volume: 1e-2, ball: 1e-2, isometry: 1e-3, isometry_fraction: 0.99, distance: 1e-2 }
    }
}

/// How infinitesimal isometry is probed.
#[derive(Clone)]
pub enum IsometryProbe {
    /// Metric derivatives of φ and f∘φ at (chart index, parameter) samples.
    MetricDerivative(Vec<(usize, Vec<f64>)>),
    /// Distance ratios on pairs of nearby source points; suited to graph
    /// oracles whose metric derivative is only defined at mesh scale.
    LocalPairs(Vec<(Vec<f64>, Vec<f64>)>),
}

/// Everything the diagnostic needs. `source` parametrizes X, `map` sends
/// points of X to points of Y and carries the ambient used for volumes of Y.
#[derive(Clone)]
pub struct MapDiagnosticInput {
    pub name: String,
    pub source: Atlas,
    pub map: MapSpec,
    pub source_metric: Arc<dyn Metric>,
    pub target_metric: Arc<dyn Metric>,
    /// Known Vol(Y); otherwise the pushforward volume ∫J(md(f∘φ)) is used,
    /// which equals Vol(Y) for injective f.
    pub target_volume: Option<f64>,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub ball_centers: Vec<Vec<f64>>,
    pub ball_radius: f64,
    pub probe: IsometryProbe,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticConfig {
    pub tag: VolumeDefinition,
    pub cells_per_axis: usize,
    pub tolerances: DiagnosticTolerances,
    pub derivative: DerivativeConfig,
    pub jacobian: JacobianConfig,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            tag: VolumeDefinition::Bh,
            cells_per_axis: 32,
            tolerances: DiagnosticTolerances::default(),
            derivative: DerivativeConfig::default(),
            jacobian: JacobianConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RatioCheck {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub pairs_used: usize,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VolumeCheck {
    pub source: f64,
    pub target: f64,
    pub target_is_pushforward: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BallCheck {
    pub center: Vec<f64>,
    pub radius: f64,
    /// ‖T‖^μ(B)
    pub source: f64,
    /// H^m(f(B)) as ∫_{φ⁻¹B} J(md(f∘φ))
    pub target: f64,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IsometryCheck {
    pub samples: usize,
    pub reliable_samples: usize,
    pub fraction_passing: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapDiagnosticReport {
    pub name: String,
    pub tag: VolumeDefinition,
    pub lipschitz: RatioCheck,
    pub volume: VolumeCheck,
    pub balls: Vec<BallCheck>,
    pub balls_passed: bool,
    pub isometry: IsometryCheck,
    pub distance: RatioCheck,
    /// Checks (i) to (iv).
    pub hypotheses_hold: bool,
    pub isometry_observed: bool,
    pub flags: Vec<String>,
    pub warnings: Vec<String>,
}

/// Message attached when the volume hypotheses hold but distances shrink.
pub const NOT_ESSENTIAL_FLAG: &str = "target not an essential length space";

struct Cell {
    point: Vec<f64>,
    weight: f64,
    source_j: f64,
    target_j: f64,
}

pub fn map_rigidity_diagnostic(input: &MapDiagnosticInput, cfg: &DiagnosticConfig) -> Result<MapDiagnosticReport> {
    if input.source.charts.is_empty() {
        return Err(Error::InvalidArgument("source atlas has no charts".into()));
    }
    let tol = &cfg.tolerances;
    let f = input.map.map.clone();
    let mut warnings = Vec::new();

    // (i) and (v) share the sampled pairs
    let prof = lipschitz_profile(input.source_metric.as_ref(), input.target_metric.as_ref(), |x| f(x), &input.pairs);
    if prof.pairs_used == 0 {
        warnings.push("no usable distance pairs".into());
    }
    if prof.skipped > 0 {
        warnings.push(format!("{} pairs skipped at zero or infinite source distance", prof.skipped));
    }
    let lipschitz = RatioCheck {
        max_ratio: prof.max_ratio,
        min_ratio: prof.min_ratio,
        pairs_used: prof.pairs_used,
        witness: prof.argmax.clone(),
        passed: prof.pairs_used > 0 && prof.max_ratio <= 1.0 + tol.lipschitz,
    };

    // one quadrature pass feeds (ii) and (iii)
    let target_atlas = input.source.compose(&input.map);
    let mut cells = Vec::new();
    let (mut degenerate, mut unreliable) = (0usize, 0usize);
    for (ci, (chart, tchart)) in input.source.charts.iter().zip(&target_atlas.charts).enumerate() {
        for (x, w) in chart.midpoint_grid(cfg.cells_per_axis) {
            let theta = input.source.density(ci, &x).unsigned_abs() as f64;
            let js = md_jacobian(chart, &x, cfg.tag, &cfg.derivative, &cfg.jacobian)?;
            let jt = md_jacobian(tchart, &x, cfg.tag, &cfg.derivative, &cfg.jacobian)?;
            degenerate += (js.degenerate || jt.degenerate) as usize;
            unreliable += (js.unreliable || jt.unreliable) as usize;
            cells.push(Cell { point: chart.eval(&x), weight: w * theta, source_j: js.value, target_j: jt.value });
        }
    }
    if degenerate > 0 {
        warnings.push(format!("degenerate metric derivative on {degenerate} of {} cells", cells.len()));
    }
    if unreliable > 0 {
        warnings.push(format!("unreliable metric derivative on {unreliable} of {} cells", cells.len()));
    }
    let source_total: f64 = cells.iter().map(|c| c.weight * c.source_j).sum();
    let pushforward: f64 = cells.iter().map(|c| c.weight * c.target_j).sum();
    let target_total = input.target_volume.unwrap_or(pushforward);
    let volume = VolumeCheck {
        source: source_total,
        target: target_total,
        target_is_pushforward: input.target_volume.is_none(),
        passed: source_total >= target_total * (1.0 - tol.volume),
    };

    let mut balls = Vec::new();
    for c in &input.ball_centers {
        let (mut s, mut t) = (0.0, 0.0);
        for cell in &cells {
            if input.source_metric.dist(c, &cell.point) <= input.ball_radius {
                s += cell.weight * cell.source_j;
                t += cell.weight * cell.target_j;
            }
        }
        let rel = if s > 0.0 { (t - s).abs() / s } else if t > 0.0 { f64::INFINITY } else { 0.0 };
        if s == 0.0 {
            warnings.push(format!("ball at {c:?} contains no quadrature cell"));
        }
        balls.push(BallCheck { center: c.clone(), radius: input.ball_radius, source: s, target: t, relative_difference: rel });
    }
    let balls_passed = balls.iter().all(|b| b.relative_difference <= tol.ball);

    let isometry = match &input.probe {
        IsometryProbe::MetricDerivative(samples) => {
            let (mut total, mut reliable, mut passing, mut max_dev) = (0usize, 0usize, 0usize, 0.0f64);
            for (ci, chart) in input.source.charts.iter().enumerate() {
                let xs: Vec<Vec<f64>> = samples.iter().filter(|(i, _)| *i == ci).map(|(_, x)| x.clone()).collect();
                if xs.is_empty() {
                    continue;
                }
                let r = infinitesimal_isometry_check(chart, &input.map, &xs, tol.isometry, &cfg.derivative)?;
                total += r.samples;
                reliable += r.reliable_samples;
                passing += r.passing;
                max_dev = max_dev.max(r.max_deviation);
            }
            let fraction = if reliable == 0 { 0.0 } else { passing as f64 / reliable as f64 };
            IsometryCheck { samples: total, reliable_samples: reliable, fraction_passing: fraction, max_deviation: max_dev, passed: fraction >= tol.isometry_fraction }
        }
        IsometryProbe::LocalPairs(pairs) => {
            let (mut reliable, mut passing, mut max_dev) = (0usize, 0usize, 0.0f64);
            for (x, y) in pairs {
                let ds = input.source_metric.dist(x, y);
                if !(ds > 0.0 && ds.is_finite()) {
                    continue;
                }
                reliable += 1;
                let dev = (input.target_metric.dist(&f(x), &f(y)) / ds - 1.0).abs();
                max_dev = max_dev.max(dev);
                passing += (dev <= tol.isometry) as usize;
            }
            let fraction = if reliable == 0 { 0.0 } else { passing as f64 / reliable as f64 };
            IsometryCheck { samples: pairs.len(), reliable_samples: reliable, fraction_passing: fraction, max_deviation: max_dev, passed: fraction >= tol.isometry_fraction }
        }
    };

    let distance = RatioCheck {
        max_ratio: prof.max_ratio,
        min_ratio: prof.min_ratio,
        pairs_used: prof.pairs_used,
        witness: prof.argmin,
        passed: prof.pairs_used > 0 && prof.min_ratio >= 1.0 - tol.distance && prof.max_ratio <= 1.0 + tol.distance,
    };
    let hypotheses_hold = lipschitz.passed && volume.passed && balls_passed && isometry.passed;
    let mut flags = Vec::new();
    if hypotheses_hold && !distance.passed {
        flags.push(NOT_ESSENTIAL_FLAG.to_string());
    }
    Ok(MapDiagnosticReport {
        name: input.name.clone(),
        tag: cfg.tag,
        isometry_observed: distance.passed,
        lipschitz,
        volume,
        balls,
        balls_passed,
        isometry,
        distance,
        hypotheses_hold,
        flags,
        warnings,
    })
}

/// Identity of the flat unit square.
pub fn flat_square_identity_case(pairs: usize, seed: u64) -> Result<MapDiagnosticInput> {
    let chart = linear_chart(DMatrix::identity(2, 2), vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean)?;
    let mut rng = sampling::rng(seed);
    let mut pt = || vec![rng.gen::<f64>(), rng.gen::<f64>()];
    let pairs: Vec<_> = (0..pairs).map(|_| (pt(), pt())).collect();
    let centers = (0..4).map(|_| pt()).collect();
    let samples = (0..50).map(|_| (0, pt())).collect();
    Ok(MapDiagnosticInput {
        name: "flat_square_identity".into(),
        source: Atlas::single(chart),
        map: MapSpec::identity(Ambient::Euclidean),
        source_metric: Arc::new(EuclideanMetric),
        target_metric: Arc::new(EuclideanMetric),
        target_volume: None,
        pairs,
        ball_centers: centers,
        ball_radius: 0.3,
        probe: IsometryProbe::MetricDerivative(samples),
    })
}

/// Identity from the round sphere onto the shortcut sphere.
pub fn shortcut_sphere_case(circle_samples: usize, pairs: usize, seed: u64) -> Result<MapDiagnosticInput> {
    let target = Arc::new(ShortcutSphere::new(circle_samples)?);
    let atlas = sphere_atlas();
    let pairs = sample_pairs(&RoundSphere, pairs, seed);
    let mut rng = sampling::rng(seed ^ 0x5eed);
    let mut centers = Vec::new();
    while centers.len() < 4 {
        let p = RoundSphere.sample(&mut rng);
        if target.distance_to_circle(&p) > 0.2 {
            centers.push(p);
        }
    }
    // parameter samples whose image stays off C
    let mut samples = Vec::new();
    while samples.len() < 300 {
        let ci = rng.gen_range(0..atlas.charts.len());
        let x = vec![rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
        if target.distance_to_circle(&atlas.charts[ci].eval(&x)) > 0.02 {
            samples.push((ci, x));
        }
    }
    Ok(MapDiagnosticInput {
        name: "shortcut_sphere".into(),
        source: atlas,
        map: MapSpec::new("id", 1.0, Ambient::Metric(target.clone()), |x| x.to_vec()),
        source_metric: Arc::new(RoundSphere),
        target_metric: target,
        target_volume: None,
        pairs,
        ball_centers: centers,
        ball_radius: 0.4,
        probe: IsometryProbe::MetricDerivative(samples),
    })
}

/// The two oracles of the zigzag surface: the essential distance with the
/// segment I = [0, 1] × {0} as null set, and the induced length distance.
pub struct ZigzagOracles {
    pub essential: Arc<GraphOracle>,
    pub induced: Arc<GraphOracle>,
    pub truncation: f64,
}

/// The null set used for the zigzag surface: I thickened by the truncation
/// height, so that paths cannot use the flattened strip as a detour.
pub fn zigzag_null_set(truncation: f64) -> NullSet {
    NullSet::new(vec![Primitive::Segment { a: [0.0, 0.0, 0.0], b: [1.0, 0.0, 0.0], thickness: Some(truncation) }])
}

pub fn zigzag_oracles(n_max: i32, level: u32) -> Result<ZigzagOracles> {
    let zz = build_zigzag_surface(n_max, 1.0)?;
    let surface = Arc::new(zz.surface);
    let essential = Arc::new(GraphOracle::new("essential", surface.clone(), level, zigzag_null_set(zz.truncation))?);
    let induced = Arc::new(GraphOracle::new("induced", surface, level, NullSet::default())?);
    Ok(ZigzagOracles { essential, induced, truncation: zz.truncation })
}

/// Identity g from the zigzag surface with its essential distance onto the
/// same surface with the induced length distance.
pub fn zigzag_case(n_max: i32, level: u32, pairs: usize, seed: u64) -> Result<MapDiagnosticInput> {
    let o = zigzag_oracles(n_max, level)?;
    let h = move |x: f64, y: f64| zigzag_height(x, y, Some(n_max));
    let chart = graph_chart("zigzag", vec![-1.0, -1.0], vec![1.0, 1.0], ZIGZAG_HEIGHT_LIPSCHITZ, h)?;
    let lift = |x: f64, y: f64| vec![x, y, h(x, y)];
    let mut rng = sampling::rng(seed);
    let mut pair_list = vec![(lift(0.0, 0.0), lift(1.0, 0.0))];
    while pair_list.len() < pairs.max(1) {
        let a = lift(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
        let b = lift(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
        pair_list.push((a, b));
    }
    let centers = (0..3).map(|_| lift(rng.gen_range(-0.5..0.5), rng.gen_range(0.3..0.7))).collect();
    // nearby pairs away from the x-axis
    let local = (0..100)
        .map(|_| {
            let (x, y) = (rng.gen_range(-0.8..0.8), rng.gen_range(0.2..0.8) * if rng.gen::<bool>() { 1.0 } else { -1.0 });
            (lift(x, y), lift(x + rng.gen_range(-0.05..0.05), y + rng.gen_range(-0.05..0.05)))
        })
        .collect();
    Ok(MapDiagnosticInput {
        name: "zigzag".into(),
        source: Atlas::single(chart),
        map: MapSpec::identity(Ambient::Euclidean),
        source_metric: o.essential,
        target_metric: o.induced,
        target_volume: None,
        pairs: pair_list,
        ball_centers: centers,
        ball_radius: 0.25,
        probe: IsometryProbe::LocalPairs(local),
    })
}

/// A convenience for building flat-square graph oracles.
pub fn flat_square_oracle(n: usize, level: u32) -> Result<GraphOracle> {
    GraphOracle::new("flat_square", Arc::new(flat_square_mesh(n, 1.0, false)?), level, NullSet::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_identity_passes_everything() {
        let input = flat_square_identity_case(100, 1).unwrap();
        let r = map_rigidity_diagnostic(&input, &DiagnosticConfig { cells_per_axis: 16, ..Default::default() }).unwrap();
        assert!(r.hypotheses_hold, "{r:?}");
        assert!(r.isometry_observed);
        assert!(r.flags.is_empty());
        assert!((r.volume.source - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shortcut_sphere_fails_only_the_conclusion() {
        let input = shortcut_sphere_case(128, 200, 2).unwrap();
        let r = map_rigidity_diagnostic(&input, &DiagnosticConfig { cells_per_axis: 12, ..Default::default() }).unwrap();
        assert!(r.lipschitz.passed && r.volume.passed && r.balls_passed && r.isometry.passed, "{r:?}");
        assert!(!r.isometry_observed);
        assert!(r.distance.min_ratio < 0.9);
        assert_eq!(r.flags, vec![NOT_ESSENTIAL_FLAG.to_string()]);
    }

    #[test]
    fn zigzag_identity_is_short_and_volume_preserving_but_not_isometric() {
        let input = zigzag_case(4, 2, 20, 3).unwrap();
        let r = map_rigidity_diagnostic(&input, &DiagnosticConfig { cells_per_axis: 16, ..Default::default() }).unwrap();
        assert!(r.hypotheses_hold, "{r:?}");
        assert!(r.lipschitz.max_ratio <= 1.0);
        // the witness is the pair (p, q) at the ends of I
        let (p, q) = r.distance.witness.clone().unwrap();
        assert_eq!((p, q), (vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]));
        assert!(r.distance.min_ratio < 0.9);
        assert_eq!(r.flags, vec![NOT_ESSENTIAL_FLAG.to_string()]);
    }
}

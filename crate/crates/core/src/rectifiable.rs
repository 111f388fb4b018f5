//! Sampled Lipschitz charts and atlases: metric derivatives, μ-measures of
//! chart images, Jacobians of maps, and a numerical check of the Finsler
//! area formula.

use crate::error::{Error, Result};
use crate::finsler_volume::{jacobian, JacobianConfig, VolumeDefinition};
use crate::norms::Seminorm;
use crate::sampling::{self, norm2, sub};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A distance on points of some R^N.
pub trait Metric: Send + Sync {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64;
}

/// The space a chart maps into.
#[derive(Clone)]
pub enum Ambient {
    Euclidean,
    Norm(Seminorm),
    Metric(Arc<dyn Metric>),
}

impl Ambient {
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Ambient::Euclidean => norm2(&sub(a, b)),
            Ambient::Norm(s) => s.value(&sub(a, b)),
            Ambient::Metric(m) => m.dist(a, b),
        }
    }
}

impl fmt::Debug for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ambient::Euclidean => f.write_str("Euclidean"),
            Ambient::Norm(s) => write!(f, "Norm({s:?})"),
            Ambient::Metric(_) => f.write_str("Metric(..)"),
        }
    }
}

pub type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A Lipschitz map from an axis-aligned box `K ⊂ R^m` into an ambient space.
#[derive(Clone)]
pub struct Chart {
    name: String,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lipschitz: f64,
    ambient: Ambient,
    map: PointMap,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("lipschitz", &self.lipschitz)
            .field("ambient", &self.ambient)
            .finish()
    }
}

/// Seeded pair count used to validate declared Lipschitz constants.
pub const LIPSCHITZ_PAIRS: usize = 512;

impl Chart {
    /// Builds a chart and validates the declared Lipschitz constant on
    /// seeded sample pairs.
    pub fn new<F>(name: &str, lo: Vec<f64>, hi: Vec<f64>, lipschitz: f64, ambient: Ambient, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let chart = Self::unchecked(name, lo, hi, lipschitz, ambient, Arc::new(map))?;
        chart.validate_lipschitz(LIPSCHITZ_PAIRS, sampling::DEFAULT_SEED)?;
        Ok(chart)
    }

    fn unchecked(name: &str, lo: Vec<f64>, hi: Vec<f64>, lipschitz: f64, ambient: Ambient, map: PointMap) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument(format!("chart `{name}` has an empty domain")));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!("chart `{name}` needs a positive Lipschitz constant")));
        }
        Ok(Self { name: name.to_string(), lo, hi, lipschitz, ambient, map })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn domain(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn ambient(&self) -> &Ambient {
        &self.ambient
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    pub fn map(&self) -> PointMap {
        self.map.clone()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Largest observed ratio d(φx, φy)/|x − y| over seeded pairs (half
    /// uniform, half at short range); errors if it exceeds the declared constant.
    pub fn validate_lipschitz(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = sampling::rng(seed);
        let m = self.dim();
        let diam = norm2(&sub(&self.hi, &self.lo));
        let mut observed: f64 = 0.0;
        for k in 0..pairs {
            let x: Vec<f64> = (0..m).map(|i| rng.gen_range(self.lo[i]..self.hi[i])).collect();
            let y: Vec<f64> = if k % 2 == 0 {
                (0..m).map(|i| rng.gen_range(self.lo[i]..self.hi[i])).collect()
            } else {
                let u = sampling::random_unit_vector(&mut rng, m);
                let t = 1e-3 * diam * rng.gen::<f64>();
                (0..m).map(|i| (x[i] + t * u[i]).clamp(self.lo[i], self.hi[i])).collect()
            };
            let d = norm2(&sub(&x, &y));
            if d < 1e-12 {
                continue;
            }
            observed = observed.max(self.ambient.dist(&self.eval(&x), &self.eval(&y)) / d);
        }
        if observed > self.lipschitz * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::LipschitzViolation { declared: self.lipschitz, observed });
        }
        Ok(observed)
    }

    /// Midpoint grid with `n` cells per axis: (cell center, cell volume).
    pub fn midpoint_grid(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        let cells = grid_cells(&self.lo, &self.hi, n);
        cells.into_iter().map(|(lo, hi)| (center(&lo, &hi), cell_volume(&lo, &hi))).collect()
    }

    /// The chart `f ∘ φ` into the target ambient of `f`.
    pub fn compose(&self, f: &MapSpec) -> Chart {
        let inner = self.map.clone();
        let outer = f.map.clone();
        Chart {
            name: format!("{}∘{}", f.name, self.name),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            lipschitz: self.lipschitz * f.lipschitz,
            ambient: f.target.clone(),
            map: Arc::new(move |x| outer(&inner(x))),
        }
    }

    /// Same image, parametrized by `x ↦ φ(Ax + b)` on the box `[lo, hi]`.
    pub fn reparametrize(&self, a: DMatrix<f64>, b: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Chart> {
        let inner = self.map.clone();
        let lip = self.lipschitz * a.norm();
        let map: PointMap = Arc::new(move |x| {
            let y = &a * DVector::from_column_slice(x);
            let y: Vec<f64> = y.iter().zip(&b).map(|(u, v)| u + v).collect();
            inner(&y)
        });
        Self::unchecked(&format!("{}∘affine", self.name), lo, hi, lip, self.ambient.clone(), map)
    }
}

/// A Lipschitz map between ambient spaces, used for pushforwards of charts.
#[derive(Clone)]
pub struct MapSpec {
    pub name: String,
    pub map: PointMap,
    pub lipschitz: f64,
    pub target: Ambient,
}

impl MapSpec {
    pub fn new<F>(name: &str, lipschitz: f64, target: Ambient, map: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { name: name.to_string(), map: Arc::new(map), lipschitz, target }
    }

    pub fn identity(target: Ambient) -> Self {
        Self::new("id", 1.0, target, |x| x.to_vec())
    }
}

pub type Density = Arc<dyn Fn(&[f64]) -> i64 + Send + Sync>;

/// Charts with (optional) integer densities. Images are assumed disjoint up
/// to null sets when `disjoint_images` is set.
#[derive(Clone)]
pub struct Atlas {
    pub charts: Vec<Chart>,
    densities: Vec<Option<Density>>,
    pub disjoint_images: bool,
}

impl fmt::Debug for Atlas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Atlas").field("charts", &self.charts).field("disjoint_images", &self.disjoint_images).finish()
    }
}

impl Atlas {
    pub fn new(charts: Vec<Chart>) -> Self {
        let n = charts.len();
        Self { charts, densities: vec![None; n], disjoint_images: true }
    }

    pub fn single(chart: Chart) -> Self {
        Self::new(vec![chart])
    }

    pub fn with_density<F>(mut self, chart: usize, theta: F) -> Self
    where
        F: Fn(&[f64]) -> i64 + Send + Sync + 'static,
    {
        self.densities[chart] = Some(Arc::new(theta));
        self
    }

    pub fn density(&self, chart: usize, x: &[f64]) -> i64 {
        self.densities[chart].as_ref().map_or(1, |t| t(x))
    }

    pub fn dim(&self) -> usize {
        self.charts.first().map_or(0, Chart::dim)
    }

    pub fn compose(&self, f: &MapSpec) -> Atlas {
        Atlas {
            charts: self.charts.iter().map(|c| c.compose(f)).collect(),
            densities: self.densities.clone(),
            disjoint_images: self.disjoint_images,
        }
    }
}

fn center(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
}

fn cell_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| b - a).product()
}

/// Cells of the uniform `n^m` grid on the box, as (lo, hi) pairs.
fn grid_cells(lo: &[f64], hi: &[f64], n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let m = lo.len();
    let total = n.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            for i in 0..m {
                let k = idx % n;
                idx /= n;
                let w = (hi[i] - lo[i]) / n as f64;
                a[i] = lo[i] + k as f64 * w;
                b[i] = if k + 1 == n { hi[i] } else { lo[i] + (k + 1) as f64 * w };
            }
            (a, b)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DerivativeConfig {
    /// Largest step h of the schedule h, h/2, …, h/2^levels.
    pub step: f64,
    pub levels: usize,
    /// Agreement required between the last two Richardson values.
    pub tolerance: f64,
    /// Central-difference step for charts into normed spaces.
    pub fd_step: f64,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self { step: 1e-3, levels: 8, tolerance: 1e-6, fd_step: 1e-6 }
    }
}

/// Degeneracy rule for fitted Gram matrices: λ_min < 1e-9·λ_max.
pub const GRAM_DEGENERACY_RATIO: f64 = 1e-9;

/// Unit directions used for metric derivatives: 12 angles on the half
/// circle in 2D, coordinate and diagonal directions otherwise.
pub fn default_directions(m: usize) -> Vec<Vec<f64>> {
    if m == 1 {
        return vec![vec![1.0]];
    }
    if m == 2 {
        return (0..12)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 12.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let mut dirs = Vec::new();
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        dirs.push(e);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m {
        for j in i + 1..m {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; m];
                e[i] = r;
                e[j] = s * r;
                dirs.push(e);
            }
        }
    }
    dirs
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricDerivativeEstimate {
    pub base_point: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Best inner-product fit md(v)² ≈ vᵀGv, projected to PSD.
    pub gram: DMatrix<f64>,
    /// max_v |md(v) − sqrt(vᵀGv)|
    pub euclidean_residual: f64,
    /// Directions whose Richardson sequence did not settle.
    pub unreliable_directions: usize,
}

impl MetricDerivativeEstimate {
    pub fn unreliable(&self) -> bool {
        self.unreliable_directions > 0
    }

    pub fn scale(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// One-sided difference quotients with Richardson extrapolation; returns the
/// estimate and whether the sequence converged.
fn directional_md(chart: &Chart, x: &[f64], fx: &[f64], v: &[f64], h0: f64, cfg: &DerivativeConfig) -> (f64, bool) {
    let q = |t: f64| {
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        chart.ambient.dist(&chart.eval(&y), fx) / t
    };
    let mut prev_q = q(h0);
    let mut richardson = Vec::with_capacity(cfg.levels);
    let mut t = h0;
    for _ in 0..cfg.levels {
        t *= 0.5;
        let qt = q(t);
        richardson.push(2.0 * qt - prev_q);
        prev_q = qt;
    }
    let n = richardson.len();
    if n < 2 {
        return (prev_q, true);
    }
    let last = richardson[n - 1];
    let scale = last.abs().max(1.0);
    let converged = (richardson[n - 1] - richardson[n - 2]).abs() <= cfg.tolerance * scale;
    (last.max(0.0), converged)
}

/// Metric derivative of the chart at `x` along each direction, with a
/// least-squares inner-product fit.
pub fn metric_derivative(chart: &Chart, x: &[f64], directions: &[Vec<f64>], cfg: &DerivativeConfig) -> Result<MetricDerivativeEstimate> {
    let m = chart.dim();
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x.len() });
    }
    let needed = m * (m + 1) / 2;
    if directions.len() < needed {
        return Err(Error::InvalidArgument(format!("need at least {needed} directions for the Gram fit")));
    }
    // keep the whole schedule inside the domain when x is interior
    let room = (0..m).map(|i| (x[i] - chart.lo[i]).min(chart.hi[i] - x[i])).fold(f64::INFINITY, f64::min);
    let h0 = if room > 0.0 { cfg.step.min(room) } else { cfg.step };
    let fx = chart.eval(x);
    let mut values = Vec::with_capacity(directions.len());
    let mut unreliable = 0;
    for v in directions {
        let (md, ok) = directional_md(chart, x, &fx, v, h0, cfg);
        values.push(md);
        if !ok {
            unreliable += 1;
        }
    }
    let gram = fit_gram(m, directions, &values);
    let euclidean_residual = directions
        .iter()
        .zip(&values)
        .map(|(v, md)| {
            let q = DVector::from_column_slice(v);
            (md - q.dot(&(&gram * &q)).max(0.0).sqrt()).abs()
        })
        .fold(0.0, f64::max);
    Ok(MetricDerivativeEstimate {
        base_point: x.to_vec(),
        directions: directions.to_vec(),
        values,
        gram,
        euclidean_residual,
        unreliable_directions: unreliable,
    })
}

/// Least squares for md(v)² = vᵀGv in the m(m+1)/2 entries of G, followed
/// by clipping negative eigenvalues.
fn fit_gram(m: usize, dirs: &[Vec<f64>], values: &[f64]) -> DMatrix<f64> {
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let a = DMatrix::from_fn(dirs.len(), pairs.len(), |r, c| {
        let (i, j) = pairs[c];
        let v = &dirs[r];
        if i == j {
            v[i] * v[i]
        } else {
            2.0 * v[i] * v[j]
        }
    });
    let b = DVector::from_iterator(values.len(), values.iter().map(|x| x * x));
    let sol = a.svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(pairs.len()));
    let mut g = DMatrix::zeros(m, m);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        g[(i, j)] = sol[c];
        g[(j, i)] = sol[c];
    }
    let eig = g.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Central-difference derivative of the chart map (N × m).
pub fn differential(chart: &Chart, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = chart.dim();
    let mut cols = Vec::with_capacity(m);
    let mut xp = x.to_vec();
    for j in 0..m {
        xp[j] = x[j] + h;
        let fp = chart.eval(&xp);
        xp[j] = x[j] - h;
        let fm = chart.eval(&xp);
        xp[j] = x[j];
        cols.push(DVector::from_iterator(fp.len(), fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h))));
    }
    DMatrix::from_columns(&cols)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MdJacobian {
    pub value: f64,
    pub degenerate: bool,
    /// The metric derivative estimate did not settle (metric ambients only).
    pub unreliable: bool,
}

fn gram_jacobian(g: &DMatrix<f64>) -> (f64, bool) {
    let eig = g.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min < GRAM_DEGENERACY_RATIO * max {
        (0.0, true)
    } else {
        (eig.iter().product::<f64>().sqrt(), false)
    }
}

/// J^μ(md(φ_x)).
///
/// Euclidean ambients use the Gram matrix of the differential; normed
/// ambients pull the norm back along the differential; general metrics use
/// the inner-product fit of the sampled metric derivative.
pub fn md_jacobian(chart: &Chart, x: &[f64], tag: VolumeDefinition, cfg: &DerivativeConfig, jcfg: &JacobianConfig) -> Result<MdJacobian> {
    match &chart.ambient {
        Ambient::Euclidean => {
            let d = differential(chart, x, cfg.fd_step);
            let (value, degenerate) = gram_jacobian(&(d.transpose() * &d));
            Ok(MdJacobian { value, degenerate, unreliable: false })
        }
        Ambient::Norm(s) => {
            let d = differential(chart, x, cfg.fd_step);
            let pulled = s.pullback(&d)?;
            let j = jacobian(tag, &pulled, jcfg)?;
            Ok(MdJacobian { value: j.value, degenerate: j.degenerate, unreliable: false })
        }
        Ambient::Metric(_) => {
            let est = metric_derivative(chart, x, &default_directions(chart.dim()), cfg)?;
            let (value, degenerate) = gram_jacobian(&est.gram);
            Ok(MdJacobian { value, degenerate, unreliable: est.unreliable() })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EuclideanityReport {
    pub samples: usize,
    pub reliable_samples: usize,
    /// Fraction of reliable samples whose residual is within `tol · scale`.
    pub fraction_euclidean: f64,
    pub worst_residual: f64,
}

pub fn is_infinitesimally_euclidean(chart: &Chart, samples: &[Vec<f64>], tol: f64, cfg: &DerivativeConfig) -> Result<EuclideanityReport> {
    let dirs = default_directions(chart.dim());
    let mut reliable = 0;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for x in samples {
        let est = metric_derivative(chart, x, &dirs, cfg)?;
        if est.unreliable() {
            continue;
        }
        reliable += 1;
        worst = worst.max(est.euclidean_residual);
        if est.euclidean_residual <= tol * est.scale().max(1e-300) {
            good += 1;
        }
    }
    Ok(EuclideanityReport {
        samples: samples.len(),
        reliable_samples: reliable,
        fraction_euclidean: if reliable == 0 { 0.0 } else { good as f64 / reliable as f64 },
        worst_residual: worst,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MuMeasure {
    pub value: f64,
    pub cells: usize,
    pub degenerate_cells: usize,
    pub unreliable_cells: usize,
    pub warnings: Vec<String>,
}

/// μ_S(B) = Σ_i ∫_{K_i ∩ φ_i⁻¹(B)} |θ_i| J^μ(md((φ_i)_x)) dx by the midpoint
/// rule with `cells_per_axis` cells per axis on each chart domain.
pub fn mu_measure<B>(
    atlas: &Atlas,
    tag: VolumeDefinition,
    indicator: B,
    cells_per_axis: usize,
    cfg: &DerivativeConfig,
    jcfg: &JacobianConfig,
) -> Result<MuMeasure>
where
    B: Fn(&[f64]) -> bool,
{
    let mut value = 0.0;
    let mut cells = 0;
    let mut degenerate = 0;
    let mut unreliable = 0;
    for (ci, chart) in atlas.charts.iter().enumerate() {
        for (x, w) in chart.midpoint_grid(cells_per_axis) {
            cells += 1;
            if !indicator(&chart.eval(&x)) {
                continue;
            }
            let j = md_jacobian(chart, &x, tag, cfg, jcfg)?;
            degenerate += j.degenerate as usize;
            unreliable += j.unreliable as usize;
            value += w * j.value * atlas.density(ci, &x).unsigned_abs() as f64;
        }
    }
    let mut warnings = Vec::new();
    if degenerate * 10 > cells {
        warnings.push(format!("metric derivative degenerate on {degenerate} of {cells} cells"));
    }
    if unreliable > 0 {
        warnings.push(format!("metric derivative unreliable on {unreliable} cells"));
    }
    Ok(MuMeasure { value, cells, degenerate_cells: degenerate, unreliable_cells: unreliable, warnings })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MapJacobian {
    pub value: f64,
    pub degenerate: bool,
}

/// J^μ(md(f_x)) = J^μ(md((f∘φ)_x)) / J^μ(md(φ_x)).
pub fn map_jacobian(
    chart: &Chart,
    f: &MapSpec,
    x: &[f64],
    tag: VolumeDefinition,
    cfg: &DerivativeConfig,
    jcfg: &JacobianConfig,
) -> Result<MapJacobian> {
    let base = md_jacobian(chart, x, tag, cfg, jcfg)?;
    if base.degenerate {
        return Err(Error::UndefinedDerivative { point: x.to_vec(), reason: "chart metric derivative is degenerate".into() });
    }
    let composed = md_jacobian(&chart.compose(f), x, tag, cfg, jcfg)?;
    if composed.degenerate {
        return Ok(MapJacobian { value: 0.0, degenerate: true });
    }
    Ok(MapJacobian { value: composed.value / base.value, degenerate: false })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AreaParams {
    /// Cells per axis for successive refinement levels.
    pub levels: Vec<usize>,
    /// Cells per axis of the initial injectivity decomposition.
    pub base_cells: usize,
    /// Bisection depth cap of the decomposition.
    pub depth_cap: usize,
}

impl Default for AreaParams {
    fn default() -> Self {
        Self { levels: vec![64, 128, 256], base_cells: 4, depth_cap: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AreaLevel {
    pub cells_per_axis: usize,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AreaFormulaReport {
    pub levels: Vec<AreaLevel>,
    pub pieces: usize,
    /// Pieces that hit the depth cap without passing the injectivity test.
    pub capped_pieces: usize,
    /// Domain measure of capped pieces, an upper bound for their share of the error.
    pub capped_measure: f64,
    /// Smallest observed order between successive levels; `None` when every
    /// residual is at round-off level.
    pub observed_order: Option<f64>,
    pub order_ok: bool,
}

impl AreaFormulaReport {
    pub fn finest_residual(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.residual)
    }
}

/// Residuals below this are at the round-off floor of the central-difference
/// differential and count as exact agreement.
pub const ROUNDOFF_RESIDUAL: f64 = 1e-8;

struct Piece {
    chart: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Bounding box of the image.
    img_lo: Vec<f64>,
    img_hi: Vec<f64>,
}

fn sample_points(lo: &[f64], hi: &[f64], fractions: &[f64]) -> Vec<Vec<f64>> {
    let m = lo.len();
    let k = fractions.len();
    (0..k.pow(m as u32))
        .map(|mut idx| {
            (0..m)
                .map(|i| {
                    let f = fractions[idx % k];
                    idx /= k;
                    lo[i] + f * (hi[i] - lo[i])
                })
                .collect()
        })
        .collect()
}

/// Heuristic injectivity of F on a cell: a consistent nonzero orientation of
/// dF at interior samples and no collapse of sample images.
fn looks_injective(f: &Chart, lo: &[f64], hi: &[f64], fd: f64) -> bool {
    let pts = sample_points(lo, hi, &[1.0 / 6.0, 0.5, 5.0 / 6.0]);
    let h = fd.min(1e-3 * lo.iter().zip(hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min));
    let dets: Vec<f64> = pts.iter().map(|p| differential(f, p, h).determinant()).collect();
    let scale = dets.iter().map(|d| d.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || dets.iter().any(|d| d.abs() < 1e-9 * scale) {
        return false;
    }
    if !(dets.iter().all(|d| *d > 0.0) || dets.iter().all(|d| *d < 0.0)) {
        return false;
    }
    let imgs: Vec<Vec<f64>> = pts.iter().map(|p| f.eval(p)).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dd = norm2(&sub(&pts[i], &pts[j]));
            if norm2(&sub(&imgs[i], &imgs[j])) < 1e-6 * dd * f.lipschitz {
                return false;
            }
        }
    }
    true
}

fn decompose(
    composed: &Chart,
    chart: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    depth: usize,
    params: &AreaParams,
    fd: f64,
    out: &mut Vec<Piece>,
    capped: &mut (usize, f64),
) {
    let ok = looks_injective(composed, &lo, &hi, fd);
    if !ok && depth < params.depth_cap {
        let mid = center(&lo, &hi);
        let m = lo.len();
        for mask in 0..1usize << m {
            let mut a = lo.clone();
            let mut b = hi.clone();
            for i in 0..m {
                if mask >> i & 1 == 0 {
                    b[i] = mid[i];
                } else {
                    a[i] = mid[i];
                }
            }
            decompose(composed, chart, a, b, depth + 1, params, fd, out, capped);
        }
        return;
    }
    if !ok {
        capped.0 += 1;
        capped.1 += cell_volume(&lo, &hi);
    }
    let pts = sample_points(&lo, &hi, &[0.0, 0.25, 0.5, 0.75, 1.0]);
    let n = composed.eval(&lo).len();
    let mut img_lo = vec![f64::INFINITY; n];
    let mut img_hi = vec![f64::NEG_INFINITY; n];
    for p in &pts {
        for (k, y) in composed.eval(p).into_iter().enumerate() {
            img_lo[k] = img_lo[k].min(y);
            img_hi[k] = img_hi[k].max(y);
        }
    }
    out.push(Piece { chart, lo, hi, img_lo, img_hi });
}

/// Newton inversion of F on a piece; returns the preimage if it lies in the
/// half-open piece.
fn invert(f: &Chart, piece: &Piece, y: &[f64], fd: f64) -> Option<Vec<f64>> {
    let mut x = center(&piece.lo, &piece.hi);
    let size = piece.lo.iter().zip(&piece.hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let h = fd.min(1e-3 * size);
    let scale = norm2(y).max(1.0);
    for _ in 0..30 {
        let r = DVector::from_vec(sub(&f.eval(&x), y));
        if r.norm() <= 1e-11 * scale {
            let inside = x.iter().enumerate().all(|(i, &v)| {
                let lo_ok = v >= piece.lo[i] - 1e-12 * size;
                let hi_ok = v < piece.hi[i] - 1e-12 * size;
                lo_ok && hi_ok
            });
            return inside.then_some(x);
        }
        let d = differential(f, &x, h);
        let step = d.lu().solve(&r)?;
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi -= s;
        }
        // preimages far outside the piece cannot belong to it
        if x.iter().enumerate().any(|(i, &v)| v < piece.lo[i] - size || v > piece.hi[i] + size) {
            return None;
        }
    }
    None
}

/// Compares ∫_S g J^μ(md f) dμ_S with ∫_{f(S)} Σ_{x ∈ f⁻¹(y)} g(x) dμ_{f(S)}(y).
///
/// The left side is chart quadrature of J^μ(md((f∘φ_i)_x)). The right side
/// splits each chart domain into pieces on which f∘φ_i looks injective,
/// integrates over a uniform grid on the bounding box of f(S), and counts
/// preimages by Newton inversion on each piece. `f` must map into R^m.
pub fn area_formula_check<G>(
    atlas: &Atlas,
    f: &MapSpec,
    g: G,
    tag: VolumeDefinition,
    params: &AreaParams,
    cfg: &DerivativeConfig,
    jcfg: &JacobianConfig,
) -> Result<AreaFormulaReport>
where
    G: Fn(&[f64]) -> f64,
{
    let m = atlas.dim();
    let composed = atlas.compose(f);
    let probe = composed.charts.first().ok_or_else(|| Error::InvalidArgument("empty atlas".into()))?;
    let n_img = probe.eval(probe.domain().0).len();
    if n_img != m {
        return Err(Error::InvalidArgument(format!("image atlas is only built for maps into R^{m}, got R^{n_img}")));
    }
    let target_density = match &f.target {
        Ambient::Euclidean => 1.0,
        Ambient::Norm(s) => jacobian(tag, s, jcfg)?.value,
        Ambient::Metric(_) => {
            return Err(Error::InvalidArgument("area formula check needs a Euclidean or normed target".into()));
        }
    };
    let mut pieces = Vec::new();
    let mut capped = (0usize, 0.0);
    for (ci, c) in composed.charts.iter().enumerate() {
        for (lo, hi) in grid_cells(&c.lo, &c.hi, params.base_cells.max(1)) {
            decompose(c, ci, lo, hi, 0, params, cfg.fd_step, &mut pieces, &mut capped);
        }
    }
    if pieces.is_empty() {
        return Err(Error::Decomposition("no pieces".into()));
    }
    let mut bb_lo = vec![f64::INFINITY; m];
    let mut bb_hi = vec![f64::NEG_INFINITY; m];
    for p in &pieces {
        for k in 0..m {
            bb_lo[k] = bb_lo[k].min(p.img_lo[k]);
            bb_hi[k] = bb_hi[k].max(p.img_hi[k]);
        }
    }
    let mut levels = Vec::new();
    for &n in &params.levels {
        let mut lhs = 0.0;
        for (ci, c) in composed.charts.iter().enumerate() {
            let base = &atlas.charts[ci];
            for (x, w) in c.midpoint_grid(n) {
                let j = md_jacobian(c, &x, tag, cfg, jcfg)?;
                lhs += w * j.value * g(&base.eval(&x)) * atlas.density(ci, &x).unsigned_abs() as f64;
            }
        }
        let mut rhs = 0.0;
        let widths: Vec<f64> = (0..m).map(|k| (bb_hi[k] - bb_lo[k]) / n as f64).collect();
        let w: f64 = widths.iter().product();
        for (ylo, yhi) in grid_cells(&bb_lo, &bb_hi, n) {
            let y = center(&ylo, &yhi);
            let mut sum = 0.0;
            for p in &pieces {
                if (0..m).any(|k| y[k] < p.img_lo[k] - 1e-12 || y[k] > p.img_hi[k] + 1e-12) {
                    continue;
                }
                let c = &composed.charts[p.chart];
                if let Some(x) = invert(c, p, &y, cfg.fd_step) {
                    let base = &atlas.charts[p.chart];
                    sum += g(&base.eval(&x)) * atlas.density(p.chart, &x).unsigned_abs() as f64;
                }
            }
            rhs += w * target_density * sum;
        }
        let residual = (lhs - rhs).abs() / lhs.abs().max(1e-12);
        levels.push(AreaLevel { cells_per_axis: n, h: 1.0 / n as f64, lhs, rhs, residual });
    }
    let (observed_order, order_ok) = refinement_order(&levels);
    Ok(AreaFormulaReport { levels, pieces: pieces.len(), capped_pieces: capped.0, capped_measure: capped.1, observed_order, order_ok })
}

/// Smallest pairwise order log(r_k/r_{k+1})/log(h_k/h_{k+1}); residuals at
/// round-off level count as converged.
fn refinement_order(levels: &[AreaLevel]) -> (Option<f64>, bool) {
    let mut order: Option<f64> = None;
    let mut ok = true;
    for w in levels.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.residual <= ROUNDOFF_RESIDUAL {
            continue;
        }
        if a.residual <= ROUNDOFF_RESIDUAL {
            ok = false;
            continue;
        }
        let p = (a.residual / b.residual).ln() / (a.h / b.h).ln();
        order = Some(order.map_or(p, |o: f64| o.min(p)));
        if p < 1.0 {
            ok = false;
        }
    }
    (order, ok)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IsometryReport {
    pub samples: usize,
    pub reliable_samples: usize,
    pub passing: usize,
    pub fraction_passing: f64,
    /// max over samples and directions of |md_{f∘φ}(v)/md_φ(v) − 1|
    pub max_deviation: f64,
}

/// Compares md(φ_x) and md((f∘φ)_x) direction by direction.
pub fn infinitesimal_isometry_check(chart: &Chart, f: &MapSpec, samples: &[Vec<f64>], tol: f64, cfg: &DerivativeConfig) -> Result<IsometryReport> {
    let composed = chart.compose(f);
    let dirs = default_directions(chart.dim());
    let mut reliable = 0;
    let mut passing = 0;
    let mut max_dev: f64 = 0.0;
    for x in samples {
        let a = metric_derivative(chart, x, &dirs, cfg)?;
        let b = metric_derivative(&composed, x, &dirs, cfg)?;
        if a.unreliable() || b.unreliable() {
            continue;
        }
        reliable += 1;
        let dev = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(u, v)| if *u > 0.0 { (v / u - 1.0).abs() } else { v.abs() })
            .fold(0.0, f64::max);
        max_dev = max_dev.max(dev);
        if dev <= tol {
            passing += 1;
        }
    }
    Ok(IsometryReport {
        samples: samples.len(),
        reliable_samples: reliable,
        passing,
        fraction_passing: if reliable == 0 { 0.0 } else { passing as f64 / reliable as f64 },
        max_deviation: max_dev,
    })
}

/// Seeded interior sample points of a chart domain, kept `margin` (relative)
/// away from the boundary.
pub fn interior_samples(chart: &Chart, count: usize, margin: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sampling::rng(seed);
    (0..count)
        .map(|_| {
            (0..chart.dim())
                .map(|i| {
                    let w = chart.hi[i] - chart.lo[i];
                    chart.lo[i] + w * (margin + (1.0 - 2.0 * margin) * rng.gen::<f64>())
                })
                .collect()
        })
        .collect()
}

/// Linear chart x ↦ Ax on a box.
pub fn linear_chart(a: DMatrix<f64>, lo: Vec<f64>, hi: Vec<f64>, ambient: Ambient) -> Result<Chart> {
    let lip = match &ambient {
        Ambient::Euclidean => a.clone().svd(false, false).singular_values.max(),
        _ => {
            // operator norm into the ambient, sampled then padded
            let m = a.ncols();
            let dirs = sampling::sphere_directions(m, if m == 2 { 4096 } else { 2000 });
            let zero = vec![0.0; a.nrows()];
            dirs.iter()
                .map(|d| ambient.dist(&(&a * DVector::from_column_slice(d)).iter().copied().collect::<Vec<_>>(), &zero))
                .fold(0.0, f64::max)
                * 1.01
        }
    };
    let map = move |x: &[f64]| -> Vec<f64> { (&a * DVector::from_column_slice(x)).iter().copied().collect() };
    Chart::new("linear", lo, hi, lip.max(1e-300), ambient, map)
}

/// Graph chart (x, y) ↦ (x, y, h(x, y)) for an `lip_h`-Lipschitz height.
pub fn graph_chart<F>(name: &str, lo: Vec<f64>, hi: Vec<f64>, lip_h: f64, h: F) -> Result<Chart>
where
    F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    Chart::new(name, lo, hi, (1.0 + lip_h * lip_h).sqrt(), Ambient::Euclidean, move |p| vec![p[0], p[1], h(p[0], p[1])])
}

/// Six cube-face charts (u, v) ∈ [−1, 1]² ↦ p/|p| covering the unit sphere.
pub fn sphere_atlas() -> Atlas {
    let faces: [fn(f64, f64) -> [f64; 3]; 6] = [
        |u, v| [1.0, u, v],
        |u, v| [-1.0, v, u],
        |u, v| [v, 1.0, u],
        |u, v| [u, -1.0, v],
        |u, v| [u, v, 1.0],
        |u, v| [v, u, -1.0],
    ];
    let names = ["+x", "-x", "+y", "-y", "+z", "-z"];
    let charts = faces
        .iter()
        .zip(names)
        .map(|(face, name)| {
            let face = *face;
            Chart::new(name, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0, Ambient::Euclidean, move |x| {
                sampling::unit3(face(x[0], x[1])).to_vec()
            })
            .expect("central projection onto the sphere is 1-Lipschitz")
        })
        .collect();
    Atlas::new(charts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit_square(ambient: Ambient) -> Chart {
        linear_chart(DMatrix::identity(2, 2), vec![0.0, 0.0], vec![1.0, 1.0], ambient).unwrap()
    }

    fn dc() -> DerivativeConfig {
        DerivativeConfig::default()
    }

    fn jc() -> JacobianConfig {
        JacobianConfig::default()
    }

    #[test]
    fn linear_metric_derivative() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let c = linear_chart(a.clone(), vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean).unwrap();
        let est = metric_derivative(&c, &[0.4, 0.6], &default_directions(2), &dc()).unwrap();
        for (v, md) in est.directions.iter().zip(&est.values) {
            let av = &a * DVector::from_column_slice(v);
            assert_abs_diff_eq!(*md, av.norm(), epsilon = 1e-8);
        }
        let g = a.transpose() * &a;
        assert!((&est.gram - &g).abs().max() < 1e-7);
        assert!(est.euclidean_residual < 1e-8);
        assert!(!est.unreliable());
    }

    #[test]
    fn tilted_plane_gram() {
        let c = Chart::new("tilt", vec![0.0, 0.0], vec![1.0, 1.0], 2f64.sqrt(), Ambient::Euclidean, |p| vec![p[0], p[1], p[0]]).unwrap();
        let est = metric_derivative(&c, &[0.5, 0.5], &default_directions(2), &dc()).unwrap();
        assert_abs_diff_eq!(est.values[0], 2f64.sqrt(), epsilon = 1e-9);
        assert!((est.gram.clone() - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).abs().max() < 1e-7);
        // independent oracle: finite differences of the closed-form map
        let d = differential(&c, &[0.5, 0.5], 1e-5);
        assert!((d.transpose() * d - est.gram).abs().max() < 1e-7);
    }

    #[test]
    fn lipschitz_violation_is_detected() {
        let r = Chart::new("bad", vec![0.0], vec![1.0], 1.0, Ambient::Euclidean, |x| vec![3.0 * x[0]]);
        assert!(matches!(r, Err(Error::LipschitzViolation { .. })));
    }

    #[test]
    fn euclideanity_examples() {
        let flat = unit_square(Ambient::Euclidean);
        let samples = interior_samples(&flat, 20, 0.05, 1);
        let r = is_infinitesimally_euclidean(&flat, &samples, 1e-6, &dc()).unwrap();
        assert_eq!(r.fraction_euclidean, 1.0);
        let linf = unit_square(Ambient::Norm(Seminorm::p_norm(2, f64::INFINITY).unwrap()));
        let r = is_infinitesimally_euclidean(&linf, &samples, 1e-3, &dc()).unwrap();
        assert_eq!(r.fraction_euclidean, 0.0);
        assert!(r.worst_residual > 0.05);
    }

    #[test]
    fn mu_measure_examples() {
        let id = unit_square(Ambient::Euclidean);
        let all = |_: &[f64]| true;
        let v = mu_measure(&Atlas::single(id.clone()), VolumeDefinition::Bh, all, 16, &dc(), &jc()).unwrap();
        assert_abs_diff_eq!(v.value, 1.0, epsilon = 1e-9);
        let twice = linear_chart(DMatrix::identity(2, 2) * 2.0, vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean).unwrap();
        for tag in VolumeDefinition::ALL {
            let v = mu_measure(&Atlas::single(twice.clone()), tag, all, 8, &dc(), &jc()).unwrap();
            assert_abs_diff_eq!(v.value, 4.0, epsilon = 1e-8);
        }
        // additivity and monotonicity over indicators
        let left = |p: &[f64]| p[0] < 0.5;
        let right = |p: &[f64]| p[0] >= 0.5;
        let a = mu_measure(&Atlas::single(id.clone()), VolumeDefinition::Bh, left, 16, &dc(), &jc()).unwrap().value;
        let b = mu_measure(&Atlas::single(id), VolumeDefinition::Bh, right, 16, &dc(), &jc()).unwrap().value;
        assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-9);
        assert!(a <= 1.0);
    }

    #[test]
    fn mu_measure_into_normed_space() {
        // identity into (R², ℓ∞): J^bh = π/4 per unit area
        let c = unit_square(Ambient::Norm(Seminorm::p_norm(2, f64::INFINITY).unwrap()));
        let v = mu_measure(&Atlas::single(c), VolumeDefinition::Bh, |_| true, 4, &dc(), &jc()).unwrap();
        assert_abs_diff_eq!(v.value, PI / 4.0, epsilon = 1e-6);
    }

    #[test]
    fn sphere_area() {
        let v = mu_measure(&sphere_atlas(), VolumeDefinition::Bh, |_| true, 64, &dc(), &jc()).unwrap();
        assert!((v.value - 4.0 * PI).abs() < 0.005 * 4.0 * PI, "{}", v.value);
    }

    #[test]
    fn map_jacobian_examples() {
        let flat = unit_square(Ambient::Euclidean);
        let x = [0.3, 0.7];
        let id = MapSpec::identity(Ambient::Euclidean);
        assert_abs_diff_eq!(map_jacobian(&flat, &id, &x, VolumeDefinition::Bh, &dc(), &jc()).unwrap().value, 1.0, epsilon = 1e-8);
        let half = MapSpec::new("half", 0.5, Ambient::Euclidean, |p| p.iter().map(|v| 0.5 * v).collect());
        for tag in VolumeDefinition::ALL {
            assert_abs_diff_eq!(map_jacobian(&flat, &half, &x, tag, &dc(), &jc()).unwrap().value, 0.25, epsilon = 1e-8);
        }
        let tilt = Chart::new("tilt", vec![0.0, 0.0], vec![1.0, 1.0], 2f64.sqrt(), Ambient::Euclidean, |p| vec![p[0], p[1], p[0]]).unwrap();
        let proj = MapSpec::new("proj", 1.0, Ambient::Euclidean, |p| vec![p[0], p[1]]);
        let expected = 1.0 / (DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) as DMatrix<f64>).determinant().sqrt();
        assert_abs_diff_eq!(map_jacobian(&tilt, &proj, &x, VolumeDefinition::Bh, &dc(), &jc()).unwrap().value, expected, epsilon = 1e-7);
        // chart independence under a linear reparametrization
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.4]);
        let re = tilt.reparametrize(a, vec![0.2, 0.3], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(map_jacobian(&re, &proj, &x, VolumeDefinition::Bh, &dc(), &jc()).unwrap().value, expected, epsilon = 1e-6);
        // degenerate base chart
        let flat_line = Chart::new("line", vec![0.0, 0.0], vec![1.0, 1.0], 1.0, Ambient::Euclidean, |p| vec![p[0], 0.0]).unwrap();
        assert!(matches!(
            map_jacobian(&flat_line, &id, &x, VolumeDefinition::Bh, &dc(), &jc()),
            Err(Error::UndefinedDerivative { .. })
        ));
    }

    #[test]
    fn isometry_check_examples() {
        let flat = unit_square(Ambient::Euclidean);
        let samples = interior_samples(&flat, 10, 0.05, 2);
        let rot = MapSpec::new("rot", 1.0, Ambient::Euclidean, |p| vec![0.6 * p[0] - 0.8 * p[1], 0.8 * p[0] + 0.6 * p[1]]);
        let r = infinitesimal_isometry_check(&flat, &rot, &samples, 1e-6, &dc()).unwrap();
        assert_eq!(r.fraction_passing, 1.0);
        assert!(r.max_deviation < 1e-8);
        let half = MapSpec::new("half", 0.5, Ambient::Euclidean, |p| p.iter().map(|v| 0.5 * v).collect());
        let r = infinitesimal_isometry_check(&flat, &half, &samples, 1e-6, &dc()).unwrap();
        assert_eq!(r.fraction_passing, 0.0);
        assert_abs_diff_eq!(r.max_deviation, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn area_formula_identity_and_fold() {
        let params = AreaParams { levels: vec![16, 32], ..Default::default() };
        let id = Atlas::single(unit_square(Ambient::Euclidean));
        let r = area_formula_check(&id, &MapSpec::identity(Ambient::Euclidean), |_| 1.0, VolumeDefinition::Bh, &params, &dc(), &jc()).unwrap();
        assert!(r.finest_residual() < ROUNDOFF_RESIDUAL && r.order_ok);
        let strip = linear_chart(DMatrix::identity(2, 2), vec![0.0, 0.0], vec![2.0, 1.0], Ambient::Euclidean).unwrap();
        let fold = MapSpec::new("fold", 1.0, Ambient::Euclidean, |p| vec![p[0].min(2.0 - p[0]), p[1]]);
        let r = area_formula_check(&Atlas::single(strip), &fold, |_| 1.0, VolumeDefinition::Bh, &params, &dc(), &jc()).unwrap();
        assert_abs_diff_eq!(r.levels[1].lhs, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.levels[1].rhs, 2.0, epsilon = 1e-9);
        assert_eq!(r.capped_pieces, 0);
    }
}

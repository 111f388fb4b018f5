//! Finsler volume definitions as Jacobian functionals on seminorms, the
//! Euclidean-rigidity test, and the circumscribed-Riemannian counterexample.
//!
//! Every definition is evaluated through the unit ball `B_s` of the seminorm:
//!
//! | tag     | Jacobian                                  |
//! |---------|-------------------------------------------|
//! | `bh`    | α_m / vol(B_s)                            |
//! | `mstar` | 2^m / vol(minimal parallelepiped ⊇ B_s)   |
//! | `sr`    | α_m / vol(minimal ellipsoid ⊇ B_s)        |
//! | `ir`    | α_m / vol(maximal ellipsoid ⊆ B_s)        |
//!
//! Degenerate seminorms have Jacobian 0.

use crate::convex_geometry::{
    self, centered_mvee, inscribed_from_functionals, max_inscribed_ellipsoid, min_enclosing_ellipsoid,
    min_enclosing_parallelepiped, min_enclosing_parallelepiped_of_gauge, qmc_volume, Exactness, Polytope,
};
use crate::error::{Error, Result};
use crate::norms::{self, compare_to_euclidean, regular_2ngon_norm, NormDoc, Representation, Seminorm};
use crate::sampling::{self, dot, norm2, sphere_directions, unit_ball_volume};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeDefinition {
    /// Busemann-Hausdorff
    Bh,
    /// Gromov mass-star
    Mstar,
    /// circumscribed Riemannian
    Sr,
    /// inscribed Riemannian
    Ir,
}

impl VolumeDefinition {
    pub const ALL: [VolumeDefinition; 4] = [Self::Bh, Self::Mstar, Self::Sr, Self::Ir];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Bh => "bh",
            Self::Mstar => "mstar",
            Self::Sr => "sr",
            Self::Ir => "ir",
        }
    }

    /// Whether the definition is known to be Euclidean rigid.
    pub fn is_euclidean_rigid_claimed(self) -> bool {
        !matches!(self, Self::Sr)
    }

    /// Rigidity backed by a proof (bh, mstar) rather than an observation (ir).
    pub fn rigidity_is_proved(self) -> bool {
        matches!(self, Self::Bh | Self::Mstar)
    }
}

impl fmt::Display for VolumeDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for VolumeDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bh" => Ok(Self::Bh),
            "mstar" => Ok(Self::Mstar),
            "sr" => Ok(Self::Sr),
            "ir" => Ok(Self::Ir),
            other => Err(Error::Parse(format!("unknown volume definition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct JacobianConfig {
    /// Boundary directions for non-polytopal unit balls in 2D.
    pub directions_2d: usize,
    /// Icosphere subdivision level for non-polytopal unit balls in 3D (4 ⇒ 2562 points).
    pub icosphere_level: usize,
    /// Boundary directions for m ≥ 4.
    pub directions_high: usize,
    pub qmc_samples: usize,
    pub khachiyan_tol: f64,
    pub parallelepiped_restarts: usize,
    pub seed: u64,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            directions_2d: 512,
            icosphere_level: 4,
            directions_high: 4096,
            qmc_samples: convex_geometry::QMC_DEFAULT_SAMPLES,
            khachiyan_tol: convex_geometry::KHACHIYAN_TOL,
            parallelepiped_restarts: 8,
            seed: sampling::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JacobianValue {
    pub tag: VolumeDefinition,
    pub value: f64,
    pub exactness: Exactness,
    /// QMC standard error of the Jacobian, when a QMC volume was involved.
    pub std_error: Option<f64>,
    pub degenerate: bool,
}

impl JacobianValue {
    fn exact(tag: VolumeDefinition, value: f64) -> Self {
        Self { tag, value, exactness: Exactness::Exact, std_error: None, degenerate: false }
    }

    fn degenerate(tag: VolumeDefinition) -> Self {
        Self { tag, value: 0.0, exactness: Exactness::Exact, std_error: None, degenerate: true }
    }
}

fn is_degenerate(s: &Seminorm) -> bool {
    if let Some(g) = s.gram_matrix() {
        let min = g.symmetric_eigen().eigenvalues.min().max(0.0).sqrt();
        return min < norms::DEGENERACY_THRESHOLD;
    }
    let m = s.dim();
    let count = match m {
        1 => 2,
        2 => 4096,
        3 => 4000,
        _ => 4096,
    };
    let mut min = sphere_directions(m, count).iter().map(|d| s.value(d) / norm2(d)).fold(f64::INFINITY, f64::min);
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        min = min.min(s.value(&e));
    }
    !(min >= norms::DEGENERACY_THRESHOLD)
}

/// Jacobian `J^μ(s)` of a seminorm with respect to a Finsler volume.
pub fn jacobian(tag: VolumeDefinition, s: &Seminorm, cfg: &JacobianConfig) -> Result<JacobianValue> {
    let m = s.dim();
    if m == 0 || m > 6 {
        return Err(Error::InvalidArgument(format!("Jacobians are supported for 1 ≤ m ≤ 6, got {m}")));
    }
    if matches!(s.representation(), Representation::Euclidean) {
        return Ok(JacobianValue::exact(tag, 1.0));
    }
    if is_degenerate(s) {
        return Ok(JacobianValue::degenerate(tag));
    }
    // Inner-product norms: the unit ball is an ellipsoid, so all four
    // definitions agree with sqrt(det G).
    if let Some(g) = s.gram_matrix() {
        return Ok(JacobianValue::exact(tag, g.determinant().max(0.0).sqrt()));
    }
    let alpha = unit_ball_volume(m);
    if let Representation::PNorm(p) = s.representation() {
        if tag == VolumeDefinition::Bh && p.is_finite() && *p != 1.0 {
            return Ok(JacobianValue::exact(tag, alpha / lp_ball_volume(m, *p)));
        }
    }
    if let (Some(facets), true) = (s.facets(), m <= 3) {
        let body = Polytope::from_facets(m, &facets)?;
        return polytope_jacobian(tag, &body, cfg, Exactness::Exact);
    }
    match m {
        1 => {
            let r = 1.0 / s.value(&[1.0]);
            Ok(JacobianValue::exact(tag, 2.0 / (2.0 * r)))
        }
        2 => {
            let dirs = sphere_directions(2, cfg.directions_2d);
            let body = Polytope::radial(2, |x| s.value(x), &dirs)?;
            match tag {
                VolumeDefinition::Ir => inscribed_jacobian(s, &radial_boundary(s, &dirs), cfg),
                _ => polytope_jacobian(tag, &body, cfg, Exactness::Quadrature),
            }
        }
        3 => {
            let (v, _) = sampling::icosphere(cfg.icosphere_level);
            let dirs: Vec<Vec<f64>> = v.iter().map(|p| p.to_vec()).collect();
            let body = Polytope::radial(3, |x| s.value(x), &dirs)?;
            match tag {
                VolumeDefinition::Ir => inscribed_jacobian(s, &radial_boundary(s, &dirs), cfg),
                VolumeDefinition::Mstar => gauge_parallelepiped_jacobian(s, body.vertices(), cfg),
                _ => polytope_jacobian(tag, &body, cfg, Exactness::Quadrature),
            }
        }
        _ => high_dim_jacobian(tag, s, cfg),
    }
}

fn polytope_jacobian(tag: VolumeDefinition, body: &Polytope, cfg: &JacobianConfig, exactness: Exactness) -> Result<JacobianValue> {
    let m = body.dim();
    let alpha = unit_ball_volume(m);
    if body.is_degenerate() {
        return Ok(JacobianValue::degenerate(tag));
    }
    let value = match tag {
        VolumeDefinition::Bh => {
            let v = body.volume();
            if v.std_error.is_some() {
                let std_error = v.std_error.map(|e| alpha * e / (v.value * v.value));
                return Ok(JacobianValue { tag, value: alpha / v.value, exactness: Exactness::Quadrature, std_error, degenerate: false });
            }
            alpha / v.value
        }
        VolumeDefinition::Mstar => {
            let p = min_enclosing_parallelepiped(body, cfg.parallelepiped_restarts)?;
            let value = 2f64.powi(m as i32) / p.volume();
            let exactness = if p.exactness == Exactness::Heuristic { Exactness::Heuristic } else { exactness };
            return Ok(JacobianValue { tag, value, exactness, std_error: None, degenerate: false });
        }
        VolumeDefinition::Sr | VolumeDefinition::Ir => {
            let e = if tag == VolumeDefinition::Sr {
                min_enclosing_ellipsoid(body, cfg.khachiyan_tol)?.0
            } else {
                max_inscribed_ellipsoid(body, cfg.khachiyan_tol)?.0
            };
            // Khachiyan stops at a tolerance
            return Ok(JacobianValue { tag, value: alpha / e.volume(), exactness: Exactness::Quadrature, std_error: None, degenerate: false });
        }
    };
    Ok(JacobianValue { tag, value, exactness, std_error: None, degenerate: false })
}

/// Boundary points `d / ‖d‖` of the unit ball along every direction.
fn radial_boundary(s: &Seminorm, dirs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    dirs.iter().map(|d| sampling::scale(d, 1.0 / s.value(d))).collect()
}

/// Numerical supporting functional of the unit ball at a boundary point,
/// normalized so that `f·x = 1`.
fn supporting_functional(s: &Seminorm, x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let h = 1e-6 * norm2(x).max(1e-12);
    let mut g = vec![0.0; m];
    let mut xp = x.to_vec();
    for j in 0..m {
        xp[j] = x[j] + h;
        let fp = s.value(&xp);
        xp[j] = x[j] - h;
        let fm = s.value(&xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    let d = dot(&g, x);
    sampling::scale(&g, 1.0 / d)
}

/// `ir` for bodies known through their gauge: supporting functionals at the
/// boundary sample describe an outer polytope whose inscribed ellipsoid is
/// the polar of the minimal ellipsoid around those functionals.
fn inscribed_jacobian(s: &Seminorm, boundary: &[Vec<f64>], cfg: &JacobianConfig) -> Result<JacobianValue> {
    let m = s.dim();
    let functionals: Vec<Vec<f64>> = boundary.iter().map(|x| supporting_functional(s, x)).collect();
    let (e, _) = inscribed_from_functionals(&functionals, cfg.khachiyan_tol)?;
    Ok(JacobianValue {
        tag: VolumeDefinition::Ir,
        value: unit_ball_volume(m) / e.volume(),
        exactness: Exactness::Quadrature,
        std_error: None,
        degenerate: false,
    })
}

fn gauge_parallelepiped_jacobian(s: &Seminorm, boundary: &[Vec<f64>], cfg: &JacobianConfig) -> Result<JacobianValue> {
    let m = s.dim();
    let mut seeds = vec![DMatrix::identity(m, m)];
    if let Ok((e, _)) = centered_mvee(boundary, 1e-6, convex_geometry::KHACHIYAN_MAX_ITER) {
        let eig = e.shape.symmetric_eigen();
        seeds.push(eig.eigenvectors.transpose());
    }
    let mut rng = sampling::rng(cfg.seed);
    for _ in 0..cfg.parallelepiped_restarts {
        let q = DMatrix::from_fn(m, m, |_, _| sampling::standard_normal(&mut rng)).qr().q();
        seeds.push(q);
    }
    let p = min_enclosing_parallelepiped_of_gauge(m, |x| s.value(x), &seeds, 60)?;
    Ok(JacobianValue {
        tag: VolumeDefinition::Mstar,
        value: 2f64.powi(m as i32) / p.volume(),
        exactness: Exactness::Heuristic,
        std_error: None,
        degenerate: false,
    })
}

fn high_dim_jacobian(tag: VolumeDefinition, s: &Seminorm, cfg: &JacobianConfig) -> Result<JacobianValue> {
    let m = s.dim();
    let alpha = unit_ball_volume(m);
    let dirs = sphere_directions(m, cfg.directions_high);
    let boundary = radial_boundary(s, &dirs);
    match tag {
        VolumeDefinition::Bh => {
            let min_ratio = dirs.iter().map(|d| s.value(d)).fold(f64::INFINITY, f64::min);
            let r = 1.05 / min_ratio;
            let v = qmc_volume(m, |x| s.value(x) <= 1.0, r, cfg.qmc_samples, cfg.seed);
            if v.degenerate {
                return Ok(JacobianValue::degenerate(tag));
            }
            Ok(JacobianValue {
                tag,
                value: alpha / v.value,
                exactness: Exactness::Quadrature,
                std_error: v.std_error.map(|e| alpha * e / (v.value * v.value)),
                degenerate: false,
            })
        }
        VolumeDefinition::Sr => {
            let (e, _) = centered_mvee(&boundary, cfg.khachiyan_tol, convex_geometry::KHACHIYAN_MAX_ITER)?;
            Ok(JacobianValue { tag, value: alpha / e.volume(), exactness: Exactness::Quadrature, std_error: None, degenerate: false })
        }
        VolumeDefinition::Ir => match s.facets() {
            Some(f) => {
                let (e, _) = inscribed_from_functionals(&f, cfg.khachiyan_tol)?;
                Ok(JacobianValue::exact(tag, alpha / e.volume()))
            }
            None => inscribed_jacobian(s, &boundary, cfg),
        },
        VolumeDefinition::Mstar => gauge_parallelepiped_jacobian(s, &boundary, cfg),
    }
}

/// Lebesgue volume of the unit ℓ^p ball in R^m: (2Γ(1+1/p))^m / Γ(1+m/p).
fn lp_ball_volume(m: usize, p: f64) -> f64 {
    let md = m as f64;
    (md * (2.0 * gamma(1.0 + 1.0 / p)).ln() - ln_gamma(1.0 + md / p)).exp()
}

fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Lanczos approximation (g = 7, n = 9), valid for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShortMapCheck {
    pub operator_norm: f64,
    /// μ_dst(A[0,1]^m) = J(dst)·|det A|
    pub image_volume: f64,
    /// μ_src([0,1]^m) = J(src)
    pub source_volume: f64,
    pub holds: bool,
}

/// Checks that a short linear map does not increase μ-volume.
pub fn check_short_map_monotonicity(
    tag: VolumeDefinition,
    src: &Seminorm,
    dst: &Seminorm,
    a: &DMatrix<f64>,
    cfg: &JacobianConfig,
) -> Result<ShortMapCheck> {
    let m = src.dim();
    if dst.dim() != m || a.nrows() != m || a.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: a.nrows() });
    }
    let dirs = sphere_directions(m, if m == 2 { 4096 } else { 4000 });
    let operator_norm = dirs
        .iter()
        .map(|d| {
            let ad: Vec<f64> = (a * nalgebra::DVector::from_column_slice(d)).iter().copied().collect();
            dst.value(&ad) / src.value(d)
        })
        .fold(0.0, f64::max);
    if operator_norm > 1.0 + 1e-9 {
        return Err(Error::NotShort { operator_norm });
    }
    let image_volume = jacobian(tag, dst, cfg)?.value * a.determinant().abs();
    let source_volume = jacobian(tag, src, cfg)?.value;
    Ok(ShortMapCheck { operator_norm, image_volume, source_volume, holds: image_volume <= source_volume * (1.0 + 1e-9) + 1e-12 })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RigidityTolerances {
    pub hypothesis: f64,
    pub conclusion: f64,
    pub directions: usize,
}

impl Default for RigidityTolerances {
    fn default() -> Self {
        Self { hypothesis: 1e-6, conclusion: 1e-4, directions: 4096 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RigidityVerdict {
    pub tag: VolumeDefinition,
    pub jacobian: f64,
    pub exactness: Exactness,
    /// ‖·‖ ≥ |·|
    pub dominates_euclidean: bool,
    /// J^μ(‖·‖) ≤ 1 + tol
    pub volume_not_larger: bool,
    pub hypotheses_hold: bool,
    /// ‖·‖ = |·| within the conclusion tolerance
    pub conclusion_holds: bool,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub witness_direction: Option<Vec<f64>>,
    /// Hypotheses hold but the conclusion fails for a definition whose
    /// rigidity is proved; this would be a defect in this library.
    pub contradicts_proved_rigidity: bool,
}

pub fn rigidity_test(tag: VolumeDefinition, norm: &Seminorm, tol: &RigidityTolerances, cfg: &JacobianConfig) -> Result<RigidityVerdict> {
    let cmp = compare_to_euclidean(norm, tol.directions)?;
    let j = jacobian(tag, norm, cfg)?;
    let dominates = cmp.min_ratio >= 1.0 - tol.hypothesis;
    let volume_ok = j.value <= 1.0 + tol.hypothesis;
    let hypotheses_hold = dominates && volume_ok;
    let conclusion_holds = cmp.max_ratio - 1.0 <= tol.conclusion && 1.0 - cmp.min_ratio <= tol.conclusion;
    let witness_direction = if conclusion_holds {
        None
    } else if cmp.max_ratio - 1.0 >= 1.0 - cmp.min_ratio {
        Some(cmp.witness_direction.clone())
    } else {
        Some(cmp.min_direction.clone())
    };
    Ok(RigidityVerdict {
        tag,
        jacobian: j.value,
        exactness: j.exactness,
        dominates_euclidean: dominates,
        volume_not_larger: volume_ok,
        hypotheses_hold,
        conclusion_holds,
        max_ratio: cmp.max_ratio,
        min_ratio: cmp.min_ratio,
        witness_direction,
        contradicts_proved_rigidity: tag.rigidity_is_proved() && hypotheses_hold && !conclusion_holds,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SrCounterexample {
    pub n: usize,
    pub norm: NormDoc,
    pub jacobian_sr: f64,
    pub max_ratio: f64,
    pub expected_max_ratio: f64,
    pub dominates_euclidean: bool,
    /// J^sr = 1, domination and the max-ratio value all confirmed within tolerance.
    pub certificate: bool,
    pub verdict: RigidityVerdict,
}

/// The regular 2n-gon norm: it dominates the Euclidean norm and has the same
/// circumscribed-Riemannian volume, yet differs from it.
pub fn sr_counterexample(n: usize, tol: f64, cfg: &JacobianConfig) -> Result<SrCounterexample> {
    let norm = regular_2ngon_norm(n)?;
    let verdict = rigidity_test(VolumeDefinition::Sr, &norm, &RigidityTolerances::default(), cfg)?;
    let expected_max_ratio = 1.0 / (PI / (2.0 * n as f64)).cos();
    let certificate = (verdict.jacobian - 1.0).abs() <= tol
        && verdict.dominates_euclidean
        && (verdict.max_ratio - expected_max_ratio).abs() <= tol;
    Ok(SrCounterexample {
        n,
        norm: NormDoc::from_seminorm(&norm)?,
        jacobian_sr: verdict.jacobian,
        max_ratio: verdict.max_ratio,
        expected_max_ratio,
        dominates_euclidean: verdict.dominates_euclidean,
        certificate,
        verdict,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComparabilityReport {
    pub jacobians: Vec<JacobianValue>,
    /// max/min over the four Jacobians; reported, not asserted.
    pub spread: f64,
}

pub fn comparability(norm: &Seminorm, cfg: &JacobianConfig) -> Result<ComparabilityReport> {
    let jacobians = VolumeDefinition::ALL.iter().map(|&t| jacobian(t, norm, cfg)).collect::<Result<Vec<_>>>()?;
    let max = jacobians.iter().map(|j| j.value).fold(0.0, f64::max);
    let min = jacobians.iter().map(|j| j.value).fold(f64::INFINITY, f64::min);
    Ok(ComparabilityReport { jacobians, spread: if min > 0.0 { max / min } else { f64::INFINITY } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::polytopal_norm;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn cfg() -> JacobianConfig {
        JacobianConfig::default()
    }

    #[test]
    fn euclidean_normalization() {
        for m in 1..=4 {
            for tag in VolumeDefinition::ALL {
                assert_eq!(jacobian(tag, &Seminorm::euclidean(m), &cfg()).unwrap().value, 1.0);
            }
        }
    }

    #[test]
    fn named_examples() {
        let linf = Seminorm::p_norm(2, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(jacobian(VolumeDefinition::Bh, &linf, &cfg()).unwrap().value, PI / 4.0, epsilon = 1e-14);
        let l1 = Seminorm::p_norm(2, 1.0).unwrap();
        assert_abs_diff_eq!(jacobian(VolumeDefinition::Mstar, &l1, &cfg()).unwrap().value, 2.0, epsilon = 1e-14);
        let oct = regular_2ngon_norm(4).unwrap();
        assert_abs_diff_eq!(jacobian(VolumeDefinition::Sr, &oct, &cfg()).unwrap().value, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_seminorm_has_zero_jacobian() {
        let g = Seminorm::gram(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).unwrap();
        let p = Seminorm::polytopal(2, vec![vec![1.0, 0.0]]).unwrap();
        for tag in VolumeDefinition::ALL {
            for s in [&g, &p] {
                let j = jacobian(tag, s, &cfg()).unwrap();
                assert!(j.degenerate);
                assert_eq!(j.value, 0.0);
            }
        }
    }

    #[test]
    fn lp_volume_closed_form() {
        assert_abs_diff_eq!(lp_ball_volume(2, 2.0), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(lp_ball_volume(3, 2.0), 4.0 * PI / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp_ball_volume(2, 1.0), 2.0, epsilon = 1e-12);
        // the callable route agrees with the closed form for p = 3
        let p3 = Seminorm::p_norm(2, 3.0).unwrap();
        let closed = jacobian(VolumeDefinition::Bh, &p3, &cfg()).unwrap().value;
        let callable = Seminorm::callable(2, 1e-15, move |v| p3.value(v));
        let approx = jacobian(VolumeDefinition::Bh, &callable, &cfg()).unwrap().value;
        assert!((closed - approx).abs() < 1e-4 * closed);
    }

    #[test]
    fn scaling_law() {
        let norms = [
            regular_2ngon_norm(3).unwrap(),
            polytopal_norm(vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![0.7, -0.7]]).unwrap(),
            Seminorm::gram(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
            polytopal_norm(vec![vec![1.0, 0.0, 0.2], vec![0.0, 1.0, 0.0], vec![0.3, 0.0, 1.0], vec![0.5, 0.5, 0.5]]).unwrap(),
        ];
        for s in &norms {
            let m = s.dim() as i32;
            for tag in VolumeDefinition::ALL {
                let base = jacobian(tag, s, &cfg()).unwrap().value;
                let scaled = jacobian(tag, &s.scaled(1.3), &cfg()).unwrap().value;
                assert!((scaled - 1.3f64.powi(m) * base).abs() <= 1e-6 * scaled, "{tag} {s:?}");
            }
        }
    }

    #[test]
    fn sandwich_ordering_in_2d() {
        // vol(E_in) ≤ vol(B) ≤ vol(E_out) ⇒ J^sr ≤ J^bh ≤ J^ir
        let s = polytopal_norm(vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![0.7, -0.7]]).unwrap();
        let j = |t| jacobian(t, &s, &cfg()).unwrap().value;
        assert!(j(VolumeDefinition::Sr) <= j(VolumeDefinition::Bh));
        assert!(j(VolumeDefinition::Bh) <= j(VolumeDefinition::Ir));
        assert!(j(VolumeDefinition::Mstar) <= j(VolumeDefinition::Ir) * 4.0 / PI + 1e-12);
    }

    #[test]
    fn short_map_examples() {
        let e = Seminorm::euclidean(2);
        let id = DMatrix::identity(2, 2);
        let r = check_short_map_monotonicity(VolumeDefinition::Bh, &e, &e, &id, &cfg()).unwrap();
        assert!(r.holds);
        assert_abs_diff_eq!(r.image_volume, r.source_volume);
        let half = DMatrix::identity(2, 2) * 0.5;
        let r = check_short_map_monotonicity(VolumeDefinition::Sr, &e, &e, &half, &cfg()).unwrap();
        assert!(r.holds);
        assert_abs_diff_eq!(r.image_volume, 0.25, epsilon = 1e-15);
        // √2·ℓ∞ dominates the Euclidean norm; explicitly J^bh = π / 2 for it
        let big_box = polytopal_norm(vec![vec![2f64.sqrt(), 0.0], vec![0.0, 2f64.sqrt()]]).unwrap();
        let r = check_short_map_monotonicity(VolumeDefinition::Bh, &big_box, &e, &id, &cfg()).unwrap();
        assert!(r.holds);
        assert_abs_diff_eq!(r.source_volume, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.image_volume, 1.0);
        let twice = DMatrix::identity(2, 2) * 2.0;
        assert!(matches!(
            check_short_map_monotonicity(VolumeDefinition::Bh, &e, &e, &twice, &cfg()),
            Err(Error::NotShort { .. })
        ));
    }

    #[test]
    fn rigidity_examples() {
        let tol = RigidityTolerances::default();
        let v = rigidity_test(VolumeDefinition::Bh, &Seminorm::euclidean(2), &tol, &cfg()).unwrap();
        assert!(v.hypotheses_hold && v.conclusion_holds);
        let v = rigidity_test(VolumeDefinition::Bh, &Seminorm::euclidean(2).scaled(1.1), &tol, &cfg()).unwrap();
        assert!(v.dominates_euclidean);
        assert!(!v.volume_not_larger);
        assert_abs_diff_eq!(v.jacobian, 1.21, epsilon = 1e-12);
        let v = rigidity_test(VolumeDefinition::Sr, &regular_2ngon_norm(4).unwrap(), &tol, &cfg()).unwrap();
        assert!(v.hypotheses_hold);
        assert!(!v.conclusion_holds);
        assert!(!v.contradicts_proved_rigidity);
        let w = v.witness_direction.unwrap();
        let angle = w[1].atan2(w[0]).rem_euclid(PI / 4.0);
        assert_abs_diff_eq!(angle, PI / 8.0, epsilon = 1e-4);
    }

    #[test]
    fn counterexample_examples() {
        let c = sr_counterexample(2, 1e-6, &cfg()).unwrap();
        assert_abs_diff_eq!(c.max_ratio, 2f64.sqrt(), epsilon = 1e-9);
        assert!(c.certificate);
        let c = sr_counterexample(4, 1e-4, &cfg()).unwrap();
        assert_abs_diff_eq!(c.max_ratio, 1.0 / (PI / 8.0).cos(), epsilon = 1e-9);
        assert!(c.certificate);
        let c = sr_counterexample(64, 1e-4, &cfg()).unwrap();
        assert_abs_diff_eq!(c.max_ratio, 1.0 / (PI / 128.0).cos(), epsilon = 1e-9);
        assert!(c.certificate && c.max_ratio > 1.0);
        assert!(sr_counterexample(1, 1e-4, &cfg()).is_err());
    }

    #[test]
    fn callable_paths_agree_with_closed_forms() {
        // a Gram norm hidden behind a callable goes through the sampled paths
        let g: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
        let exact = g.determinant().sqrt();
        let gram = Seminorm::gram(g).unwrap();
        let hidden = Seminorm::callable(3, 1e-15, move |v| gram.value(v));
        for tag in VolumeDefinition::ALL {
            let j = jacobian(tag, &hidden, &cfg()).unwrap();
            assert!((j.value - exact).abs() < 5e-3 * exact, "{tag}: {} vs {exact}", j.value);
        }
    }

    #[test]
    fn comparability_is_reported() {
        let r = comparability(&regular_2ngon_norm(3).unwrap(), &cfg()).unwrap();
        assert_eq!(r.jacobians.len(), 4);
        assert!(r.spread >= 1.0 && r.spread < 10.0);
    }

    #[test]
    fn parse_tags() {
        for t in VolumeDefinition::ALL {
            assert_eq!(t.tag().parse::<VolumeDefinition>().unwrap(), t);
        }
        assert!("hausdorff".parse::<VolumeDefinition>().is_err());
    }
}

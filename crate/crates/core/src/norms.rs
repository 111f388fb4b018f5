//! Seminorms on R^m and their comparison with the Euclidean norm.

use crate::error::{Error, Result};
use crate::sampling::{self, dot, norm2, random_unit_vector, sphere_directions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Minimum of a seminorm over unit directions below which it counts as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Representation {
    Euclidean,
    /// value = sqrt(vᵀ G v)
    Gram(DMatrix<f64>),
    /// value = max_i |f_i · v|
    Polytopal(Vec<Vec<f64>>),
    /// ℓ^p; `f64::INFINITY` is the max norm.
    PNorm(f64),
    Callable { eval: Evaluator, tolerance: f64 },
}

#[derive(Clone)]
pub struct Seminorm {
    dim: usize,
    repr: Representation,
}

impl fmt::Debug for Seminorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Representation::Euclidean => "euclidean".to_string(),
            Representation::Gram(g) => format!("gram{:?}", g.as_slice()),
            Representation::Polytopal(fs) => format!("polytopal({} facets)", fs.len()),
            Representation::PNorm(p) => format!("pnorm({p})"),
            Representation::Callable { tolerance, .. } => format!("callable(tol={tolerance})"),
        };
        write!(f, "Seminorm {{ dim: {}, {} }}", self.dim, kind)
    }
}

impl Seminorm {
    pub fn euclidean(dim: usize) -> Self {
        Self { dim, repr: Representation::Euclidean }
    }

    /// Gram seminorm; G only needs to be positive semidefinite.
    pub fn gram(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::InvalidArgument("Gram matrix must be square".into()));
        }
        let asym = (&g - g.transpose()).abs().max();
        if asym > 1e-12 * g.abs().max().max(1.0) {
            return Err(Error::InvalidArgument("Gram matrix must be symmetric".into()));
        }
        let min_eig = g.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 {
            return Err(Error::InvalidArgument(format!(
                "Gram matrix has negative eigenvalue {min_eig}"
            )));
        }
        Ok(Self { dim: g.nrows(), repr: Representation::Gram(g) })
    }

    pub fn p_norm(dim: usize, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p-norm exponent must be ≥ 1, got {p}")));
        }
        Ok(Self { dim, repr: Representation::PNorm(p) })
    }

    /// Polytopal seminorm from facet functionals; no spanning requirement
    /// (see [`polytopal_norm`] for the checked norm constructor).
    pub fn polytopal(dim: usize, facets: Vec<Vec<f64>>) -> Result<Self> {
        if facets.is_empty() {
            return Err(Error::InvalidArgument("polytopal seminorm needs at least one facet".into()));
        }
        for f in &facets {
            if f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.len() });
            }
        }
        Ok(Self { dim, repr: Representation::Polytopal(facets) })
    }

    pub fn callable<F>(dim: usize, tolerance: f64, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { dim, repr: Representation::Callable { eval: Arc::new(eval), tolerance } }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Evaluation tolerance: 0 for closed forms, the declared one for callables.
    pub fn tolerance(&self) -> f64 {
        match &self.repr {
            Representation::Callable { tolerance, .. } => *tolerance,
            _ => 0.0,
        }
    }

    pub fn is_callable(&self) -> bool {
        matches!(self.repr, Representation::Callable { .. })
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(self.value(v))
    }

    /// Unchecked evaluation; callers guarantee `v.len() == dim`.
    pub fn value(&self, v: &[f64]) -> f64 {
        match &self.repr {
            Representation::Euclidean => norm2(v),
            Representation::Gram(g) => {
                let x = DVector::from_column_slice(v);
                (x.dot(&(g * &x))).max(0.0).sqrt()
            }
            Representation::Polytopal(fs) => fs.iter().map(|f| dot(f, v).abs()).fold(0.0, f64::max),
            Representation::PNorm(p) => {
                if p.is_infinite() {
                    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
                } else if *p == 1.0 {
                    v.iter().map(|x| x.abs()).sum()
                } else {
                    let s = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    if s == 0.0 {
                        return 0.0;
                    }
                    s * v.iter().map(|x| (x.abs() / s).powf(*p)).sum::<f64>().powf(1.0 / p)
                }
            }
            Representation::Callable { eval, .. } => eval(v),
        }
    }

    /// The seminorm λ·‖·‖ for λ > 0.
    pub fn scaled(&self, lambda: f64) -> Self {
        let repr = match &self.repr {
            Representation::Euclidean => {
                Representation::Gram(DMatrix::identity(self.dim, self.dim) * (lambda * lambda))
            }
            Representation::Gram(g) => Representation::Gram(g * (lambda * lambda)),
            Representation::Polytopal(fs) => {
                Representation::Polytopal(fs.iter().map(|f| sampling::scale(f, lambda)).collect())
            }
            Representation::PNorm(_) | Representation::Callable { .. } => {
                let inner = self.clone();
                let tolerance = self.tolerance() * lambda;
                Representation::Callable { eval: Arc::new(move |v| lambda * inner.value(v)), tolerance }
            }
        };
        Self { dim: self.dim, repr }
    }

    /// The pullback v ↦ ‖A v‖ along a linear map A : R^k → R^m.
    pub fn pullback(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: a.nrows() });
        }
        let k = a.ncols();
        if let (Representation::PNorm(_), Some(fs)) = (&self.repr, self.facets()) {
            return Seminorm::polytopal(self.dim, fs)?.pullback(a);
        }
        let repr = match &self.repr {
            Representation::Euclidean => Representation::Gram(a.transpose() * a),
            Representation::Gram(g) => Representation::Gram(a.transpose() * g * a),
            Representation::Polytopal(fs) => Representation::Polytopal(
                fs.iter()
                    .map(|f| {
                        let row = DVector::from_column_slice(f).transpose() * a;
                        row.iter().copied().collect()
                    })
                    .collect(),
            ),
            Representation::PNorm(_) | Representation::Callable { .. } => {
                let inner = self.clone();
                let a = a.clone();
                let tolerance = self.tolerance() * a.norm();
                Representation::Callable {
                    eval: Arc::new(move |v| {
                        let w = &a * DVector::from_column_slice(v);
                        inner.value(w.as_slice())
                    }),
                    tolerance,
                }
            }
        };
        Ok(Self { dim: k, repr })
    }

    /// Symmetric Gram matrix if the seminorm is induced by an inner product.
    pub fn gram_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.repr {
            Representation::Euclidean => Some(DMatrix::identity(self.dim, self.dim)),
            Representation::Gram(g) => Some(g.clone()),
            Representation::PNorm(p) if *p == 2.0 => Some(DMatrix::identity(self.dim, self.dim)),
            _ => None,
        }
    }

    /// Facet functionals when the unit ball is a polytope with a closed form.
    pub fn facets(&self) -> Option<Vec<Vec<f64>>> {
        match &self.repr {
            Representation::Polytopal(fs) => Some(fs.clone()),
            Representation::PNorm(p) if p.is_infinite() => Some(
                (0..self.dim)
                    .map(|i| (0..self.dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            ),
            Representation::PNorm(p) if *p == 1.0 => Some(sign_vectors(self.dim)),
            _ => None,
        }
    }
}

/// All sign vectors (±1, …, ±1) with first entry +1: the facets of the ℓ¹ ball.
fn sign_vectors(m: usize) -> Vec<Vec<f64>> {
    (0..1usize << (m - 1))
        .map(|mask| {
            let mut v = vec![1.0; m];
            for (j, x) in v.iter_mut().enumerate().skip(1) {
                if mask >> (j - 1) & 1 == 1 {
                    *x = -1.0;
                }
            }
            v
        })
        .collect()
}

/// Checked constructor for an ellipsoidal norm √(vᵀGv), G SPD.
pub fn ellipsoidal_norm(g: DMatrix<f64>) -> Result<Seminorm> {
    if !g.is_square() {
        return Err(Error::InvalidArgument("Gram matrix must be square".into()));
    }
    if (&g - g.transpose()).abs().max() > 1e-12 * g.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite);
    }
    if g.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Seminorm::gram(g)
}

/// Checked constructor for a polytopal norm; the facets must span R^m.
pub fn polytopal_norm(facets: Vec<Vec<f64>>) -> Result<Seminorm> {
    let m = facets.first().map(|f| f.len()).ok_or_else(|| {
        Error::InvalidArgument("polytopal norm needs at least one facet".into())
    })?;
    let mat = DMatrix::from_fn(facets.len(), m, |i, j| facets[i][j]);
    let sv = mat.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    if rank < m {
        return Err(Error::FacetsNotSpanning(m));
    }
    Seminorm::polytopal(m, facets)
}

/// Norm whose unit ball is the regular 2n-gon with vertices at angles kπ/n
/// on the unit circle.
pub fn regular_2ngon_norm(n: usize) -> Result<Seminorm> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("regular 2n-gon needs n ≥ 2, got {n}")));
    }
    let half = PI / (2.0 * n as f64);
    let apothem = half.cos();
    // Edge k joins the vertices at kπ/n and (k+1)π/n; its outward normal sits
    // halfway between them at distance cos(π/2n) from the origin.
    let facets = (0..n)
        .map(|k| {
            let t = k as f64 * PI / n as f64 + half;
            vec![t.cos() / apothem, t.sin() / apothem]
        })
        .collect();
    Seminorm::polytopal(2, facets)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxiomReport {
    pub homogeneity_residual: f64,
    pub triangle_residual: f64,
    pub min_unit_value: f64,
    pub nan_seen: bool,
    pub is_norm: bool,
}

/// Seeded spot check of homogeneity, subadditivity and definiteness.
pub fn check_axioms(s: &Seminorm, sample_count: usize, tol: f64, seed: u64) -> AxiomReport {
    let m = s.dim();
    let mut rng = sampling::rng(seed);
    let mut hom: f64 = 0.0;
    let mut tri: f64 = 0.0;
    let mut min_unit = f64::INFINITY;
    let mut nan_seen = false;
    let zero = s.value(&vec![0.0; m]);
    if !zero.is_finite() {
        nan_seen = true;
    }
    hom = hom.max(zero.abs());
    for _ in 0..sample_count.max(1) {
        let u = random_unit_vector(&mut rng, m);
        let v = random_unit_vector(&mut rng, m);
        let lambda: f64 = rng.gen_range(-4.0..4.0);
        let ru: f64 = rng.gen_range(0.1..3.0);
        let rv: f64 = rng.gen_range(0.1..3.0);
        let u = sampling::scale(&u, ru);
        let v = sampling::scale(&v, rv);
        let su = s.value(&u);
        let sv = s.value(&v);
        let suv = s.value(&u.iter().zip(&v).map(|(a, b)| a + b).collect::<Vec<_>>());
        let slu = s.value(&sampling::scale(&u, lambda));
        if [su, sv, suv, slu].iter().any(|x| !x.is_finite()) {
            nan_seen = true;
            continue;
        }
        let scale = su.max(sv).max(1.0);
        hom = hom.max((slu - lambda.abs() * su).abs() / scale);
        tri = tri.max((suv - su - sv).max(0.0) / scale);
        min_unit = min_unit.min(su / ru);
    }
    // Coordinate axes catch kernels that random directions only graze.
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let v = s.value(&e);
        if !v.is_finite() {
            nan_seen = true;
        } else {
            min_unit = min_unit.min(v);
        }
    }
    let slack = tol + s.tolerance();
    AxiomReport {
        homogeneity_residual: hom,
        triangle_residual: tri,
        min_unit_value: min_unit,
        nan_seen,
        is_norm: !nan_seen && hom <= slack && tri <= slack && min_unit >= tol,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormComparisonReport {
    pub dominates_euclidean: bool,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub witness_direction: Vec<f64>,
    pub min_direction: Vec<f64>,
}

pub const DOMINATION_TOLERANCE: f64 = 1e-6;

/// Sup and inf of ‖v‖/|v| over a deterministic direction set. In 2D the
/// extremal sample directions are polished by golden-section search on the
/// angle, so the reported extrema are accurate well below the sweep spacing.
pub fn compare_to_euclidean(s: &Seminorm, direction_count: usize) -> Result<NormComparisonReport> {
    let m = s.dim();
    let dirs = sphere_directions(m, direction_count.max(4));
    let mut best_max = (f64::NEG_INFINITY, 0usize);
    let mut best_min = (f64::INFINITY, 0usize);
    let ratio = |d: &[f64]| s.value(d) / norm2(d);
    for (k, d) in dirs.iter().enumerate() {
        let r = ratio(d);
        if r > best_max.0 {
            best_max = (r, k);
        }
        if r < best_min.0 {
            best_min = (r, k);
        }
    }
    if !(best_min.0 >= DEGENERACY_THRESHOLD) {
        return Err(Error::DegenerateSeminorm { min_ratio: best_min.0 });
    }
    let mut max_ratio = best_max.0;
    let mut min_ratio = best_min.0;
    let mut witness = dirs[best_max.1].clone();
    let mut min_dir = dirs[best_min.1].clone();
    if m == 2 {
        let step = 2.0 * PI / dirs.len() as f64;
        let at = |t: f64| ratio(&[t.cos(), t.sin()]);
        let t0 = witness[1].atan2(witness[0]);
        let (t, neg) = sampling::golden_section_min(|t| -at(t), t0 - step, t0 + step, 100);
        if -neg > max_ratio {
            max_ratio = -neg;
            witness = vec![t.cos(), t.sin()];
        }
        let t0 = min_dir[1].atan2(min_dir[0]);
        let (t, v) = sampling::golden_section_min(at, t0 - step, t0 + step, 100);
        if v < min_ratio {
            min_ratio = v;
            min_dir = vec![t.cos(), t.sin()];
        }
    }
    Ok(NormComparisonReport {
        dominates_euclidean: min_ratio >= 1.0 - DOMINATION_TOLERANCE,
        max_ratio,
        min_ratio,
        witness_direction: witness,
        min_direction: min_dir,
    })
}

/// JSON document for a norm: `{"dim": m, "kind": ..., "payload": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NormDoc {
    pub dim: usize,
    #[serde(flatten)]
    pub body: NormBody,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum NormBody {
    Euclidean,
    Gram { matrix: Vec<Vec<f64>> },
    Polytopal { facets: Vec<Vec<f64>> },
    Pnorm { p: Exponent },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    /// Any string, conventionally "inf".
    Infinite(InfTag),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum InfTag {
    Inf,
}

impl NormDoc {
    pub fn to_seminorm(&self) -> Result<Seminorm> {
        let m = self.dim;
        if m == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        match &self.body {
            NormBody::Euclidean => Ok(Seminorm::euclidean(m)),
            NormBody::Gram { matrix } => {
                if matrix.len() != m || matrix.iter().any(|r| r.len() != m) {
                    return Err(Error::InvalidArgument("Gram matrix must be dim × dim".into()));
                }
                Seminorm::gram(DMatrix::from_fn(m, m, |i, j| matrix[i][j]))
            }
            NormBody::Polytopal { facets } => Seminorm::polytopal(m, facets.clone()),
            NormBody::Pnorm { p } => Seminorm::p_norm(
                m,
                match p {
                    Exponent::Finite(p) => *p,
                    Exponent::Infinite(_) => f64::INFINITY,
                },
            ),
        }
    }

    pub fn from_seminorm(s: &Seminorm) -> Result<Self> {
        let m = s.dim();
        let body = match s.representation() {
            Representation::Euclidean => NormBody::Euclidean,
            Representation::Gram(g) => NormBody::Gram {
                matrix: (0..m).map(|i| (0..m).map(|j| g[(i, j)]).collect()).collect(),
            },
            Representation::Polytopal(fs) => NormBody::Polytopal { facets: fs.clone() },
            Representation::PNorm(p) => NormBody::Pnorm {
                p: if p.is_infinite() { Exponent::Infinite(InfTag::Inf) } else { Exponent::Finite(*p) },
            },
            Representation::Callable { .. } => {
                return Err(Error::InvalidArgument("callable norms are not serializable".into()))
            }
        };
        Ok(Self { dim: m, body })
    }
}

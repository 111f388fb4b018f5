//! Experiment configuration: one TOML file with a `schema` version and a
//! section per command. Unknown keys are rejected.

use finsler_core::finsler_volume::{JacobianConfig, RigidityTolerances, VolumeDefinition};
use finsler_core::length_space::{DiagnosticConfig, Primitive, P3};
use finsler_core::measures::RadiusSchedule;
use finsler_core::norms::NormDoc;
use finsler_core::rectifiable::AreaParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    /// When present, must name the subcommand being run.
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub jacobian: JacobianSection,
    #[serde(default)]
    pub rigidity: RigiditySection,
    #[serde(default)]
    pub area_check: AreaSection,
    #[serde(default)]
    pub geodesic: GeodesicSection,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
    #[serde(default)]
    pub diagnose_map: DiagnoseSection,
    #[serde(default)]
    pub maximal: MaximalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command: None,
            seed: None,
            jacobian: JacobianSection::default(),
            rigidity: RigiditySection::default(),
            area_check: AreaSection::default(),
            geodesic: GeodesicSection::default(),
            counterexample: CounterexampleSection::default(),
            diagnose_map: DiagnoseSection::default(),
            maximal: MaximalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NamedNorm {
    pub name: String,
    pub norm: NormDoc,
}

fn euclidean_plane() -> Vec<NamedNorm> {
    vec![NamedNorm { name: "euclidean".into(), norm: NormDoc { dim: 2, body: finsler_core::norms::NormBody::Euclidean } }]
}

fn all_tags() -> Vec<VolumeDefinition> {
    VolumeDefinition::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JacobianSection {
    #[serde(default = "euclidean_plane")]
    pub norms: Vec<NamedNorm>,
    #[serde(default = "all_tags")]
    pub tags: Vec<VolumeDefinition>,
    #[serde(default)]
    pub settings: JacobianConfig,
}

impl Default for JacobianSection {
    fn default() -> Self {
        Self { norms: euclidean_plane(), tags: all_tags(), settings: JacobianConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RigiditySection {
    #[serde(default = "euclidean_plane")]
    pub norms: Vec<NamedNorm>,
    #[serde(default = "all_tags")]
    pub tags: Vec<VolumeDefinition>,
    #[serde(default)]
    pub tolerances: RigidityTolerances,
    /// Also run the 2n-gon counterexample for this n.
    #[serde(default)]
    pub sr_polygon: Option<usize>,
    #[serde(default)]
    pub settings: JacobianConfig,
}

impl Default for RigiditySection {
    fn default() -> Self {
        Self { norms: euclidean_plane(), tags: all_tags(), tolerances: RigidityTolerances::default(), sr_polygon: Some(4), settings: JacobianConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AreaCase {
    /// Identity of the unit square.
    Identity,
    /// (x, y) ↦ (min(x, 2 − x), y) on [0, 2] × [0, 1], multiplicity 2.
    Fold,
    /// Linear map [[2, 1], [1, 2]] on the unit square.
    Det3,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    One,
    /// exp(−|y|²)
    Gaussian,
    /// Indicator of y₀ < 1.5.
    LeftHalf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AreaSection {
    #[serde(default = "default_area_cases")]
    pub cases: Vec<AreaCase>,
    #[serde(default = "default_integrand")]
    pub integrand: Integrand,
    #[serde(default = "default_tag")]
    pub tag: VolumeDefinition,
    #[serde(default)]
    pub params: AreaParams,
}

fn default_area_cases() -> Vec<AreaCase> {
    vec![AreaCase::Identity, AreaCase::Fold, AreaCase::Det3]
}

fn default_integrand() -> Integrand {
    Integrand::Gaussian
}

fn default_tag() -> VolumeDefinition {
    VolumeDefinition::Bh
}

impl Default for AreaSection {
    fn default() -> Self {
        Self { cases: default_area_cases(), integrand: default_integrand(), tag: default_tag(), params: AreaParams::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Zigzag { n_max: i32, extent: f64 },
    FlatSquare { n: usize, side: f64, anti: bool },
    Sphere { level: usize },
    Off { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NullSpec {
    /// The segment from (0,0,0) to (1,0,0) thickened by the truncation
    /// height; zigzag surfaces only.
    ZigzagSegment,
    GreatCircle { normal: P3 },
    Primitives { primitives: Vec<Primitive> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSection {
    #[serde(default = "default_surface")]
    pub surface: SurfaceSpec,
    #[serde(default = "default_geodesic_pairs")]
    pub pairs: Vec<[P3; 2]>,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_null")]
    pub null_set: Option<NullSpec>,
}

fn default_surface() -> SurfaceSpec {
    SurfaceSpec::Zigzag { n_max: 6, extent: 1.0 }
}

fn default_geodesic_pairs() -> Vec<[P3; 2]> {
    vec![[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]]
}

fn default_levels() -> Vec<u32> {
    vec![3, 4]
}

fn default_null() -> Option<NullSpec> {
    Some(NullSpec::ZigzagSegment)
}

impl Default for GeodesicSection {
    fn default() -> Self {
        Self { surface: default_surface(), pairs: default_geodesic_pairs(), levels: default_levels(), null_set: default_null() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSection {
    pub sr_n: usize,
    pub sr_tolerance: f64,
    pub circle_samples: usize,
    pub triples: usize,
    pub pairs: usize,
    pub zigzag_n_max: i32,
    pub zigzag_levels: Vec<u32>,
}

impl Default for CounterexampleSection {
    fn default() -> Self {
        Self { sr_n: 4, sr_tolerance: 1e-4, circle_samples: 256, triples: 10_000, pairs: 2_000, zigzag_n_max: 6, zigzag_levels: vec![4, 5] }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DiagnoseCase {
    FlatSquare,
    ShortcutSphere,
    Zigzag,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub case: DiagnoseCase,
    pub pairs: usize,
    pub circle_samples: usize,
    pub n_max: i32,
    pub level: u32,
    pub settings: DiagnosticConfig,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self { case: DiagnoseCase::ShortcutSphere, pairs: 400, circle_samples: 256, n_max: 6, level: 3, settings: DiagnosticConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct MaximalSection {
    /// CSV file with coordinate columns followed by a weight column.
    #[serde(default)]
    pub measure: Option<PathBuf>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub schedule: RadiusSchedule,
}

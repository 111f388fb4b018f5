use crate::config::*;
use crate::output::{csv_table, CliError, Run};
use finsler_core::finsler_volume::{jacobian, rigidity_test, sr_counterexample};
use finsler_core::length_space::*;
use finsler_core::measures::{maximal_function, DiscreteMeasure};
use finsler_core::rectifiable::{area_formula_check, infinitesimal_isometry_check, interior_samples, linear_chart, sphere_atlas, Ambient, Atlas, DerivativeConfig, MapSpec, Metric};
use nalgebra::DMatrix;
use serde_json::json;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

type Out = Result<Run, CliError>;

fn f(x: f64) -> String {
    format!("{x}")
}

pub fn cmd_jacobian(sec: &JacobianSection) -> Out {
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for n in &sec.norms {
        let s = n.norm.to_seminorm()?;
        for &tag in &sec.tags {
            let j = jacobian(tag, &s, &sec.settings)?;
            if j.exactness == finsler_core::convex_geometry::Exactness::Heuristic {
                warnings.push(format!("{} {}: heuristic value", n.name, tag.tag()));
            }
            rows.push(vec![n.name.clone(), tag.tag().into(), f(j.value), format!("{:?}", j.exactness).to_lowercase(), j.std_error.map_or(String::new(), f), j.degenerate.to_string()]);
            entries.push(json!({ "norm": n.name, "jacobian": j }));
        }
    }
    let table = csv_table(&["norm", "tag", "value", "exactness", "std_error", "degenerate"], &rows)?;
    Ok(Run { results: json!(entries), warnings, violations: vec![], tables: vec![("jacobian".into(), table)] })
}

pub fn cmd_rigidity(sec: &RigiditySection) -> Out {
    let mut verdicts = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for n in &sec.norms {
        let s = n.norm.to_seminorm()?;
        for &tag in &sec.tags {
            let v = rigidity_test(tag, &s, &sec.tolerances, &sec.settings)?;
            if v.contradicts_proved_rigidity {
                violations.push(format!("{} {}: hypotheses hold but the norm is not Euclidean", n.name, tag.tag()));
            }
            rows.push(vec![
                n.name.clone(),
                tag.tag().into(),
                f(v.jacobian),
                f(v.min_ratio),
                f(v.max_ratio),
                v.hypotheses_hold.to_string(),
                v.conclusion_holds.to_string(),
            ]);
            verdicts.push(json!({ "norm": n.name, "verdict": v }));
        }
    }
    let counterexample = match sec.sr_polygon {
        Some(k) => {
            let c = sr_counterexample(k, 1e-4, &sec.settings)?;
            if !c.certificate {
                violations.push(format!("2n-gon counterexample with n = {k} not certified"));
            }
            Some(c)
        }
        None => None,
    };
    let table = csv_table(&["norm", "tag", "jacobian", "min_ratio", "max_ratio", "hypotheses_hold", "conclusion_holds"], &rows)?;
    Ok(Run { results: json!({ "verdicts": verdicts, "sr_counterexample": counterexample }), warnings: vec![], violations, tables: vec![("rigidity".into(), table)] })
}

pub fn cmd_area_check(sec: &AreaSection) -> Out {
    let dc = DerivativeConfig::default();
    let jc = finsler_core::finsler_volume::JacobianConfig::default();
    let id2 = || DMatrix::identity(2, 2);
    let g: fn(&[f64]) -> f64 = match sec.integrand {
        Integrand::One => |_| 1.0,
        Integrand::Gaussian => |y| (-(y[0] * y[0] + y[1] * y[1])).exp(),
        Integrand::LeftHalf => |y| if y[0] < 1.5 { 1.0 } else { 0.0 },
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &case in &sec.cases {
        let (atlas, map) = match case {
            AreaCase::Identity => (Atlas::single(linear_chart(id2(), vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean)?), MapSpec::identity(Ambient::Euclidean)),
            AreaCase::Fold => (
                Atlas::single(linear_chart(id2(), vec![0.0, 0.0], vec![2.0, 1.0], Ambient::Euclidean)?),
                MapSpec::new("fold", 1.0, Ambient::Euclidean, |p| vec![p[0].min(2.0 - p[0]), p[1]]),
            ),
            AreaCase::Det3 => (
                Atlas::single(linear_chart(id2(), vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean)?),
                MapSpec::new("det3", 3.0, Ambient::Euclidean, |p| vec![2.0 * p[0] + p[1], p[0] + 2.0 * p[1]]),
            ),
        };
        let r = area_formula_check(&atlas, &map, g, sec.tag, &sec.params, &dc, &jc)?;
        let name = serde_json::to_value(case).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        if r.capped_pieces > 0 {
            warnings.push(format!("{name}: {} pieces hit the bisection cap (measure {:e})", r.capped_pieces, r.capped_measure));
        }
        for l in &r.levels {
            rows.push(vec![name.clone(), l.cells_per_axis.to_string(), f(l.h), f(l.lhs), f(l.rhs), f(l.residual)]);
        }
        reports.push(json!({ "case": name, "report": r }));
    }
    let table = csv_table(&["case", "cells_per_axis", "h", "lhs", "rhs", "residual"], &rows)?;
    Ok(Run { results: json!(reports), warnings, violations: vec![], tables: vec![("area_residuals".into(), table)] })
}

/// Builds the surface and, for zigzag surfaces, returns the truncation height.
fn build_surface(spec: &SurfaceSpec) -> Result<(Arc<PolyhedralSurface>, Option<f64>), CliError> {
    Ok(match spec {
        SurfaceSpec::Zigzag { n_max, extent } => {
            let z = build_zigzag_surface(*n_max, *extent)?;
            (Arc::new(z.surface), Some(z.truncation))
        }
        SurfaceSpec::FlatSquare { n, side, anti } => (Arc::new(flat_square_mesh(*n, *side, *anti)?), None),
        SurfaceSpec::Sphere { level } => (Arc::new(sphere_mesh(*level)?), None),
        SurfaceSpec::Off { path } => {
            let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            (Arc::new(PolyhedralSurface::read_off(BufReader::new(file))?), None)
        }
    })
}

pub fn cmd_geodesic(sec: &GeodesicSection) -> Out {
    let (surface, truncation) = build_surface(&sec.surface)?;
    let null = match &sec.null_set {
        None => None,
        Some(NullSpec::ZigzagSegment) => match truncation {
            Some(h) => Some(zigzag_null_set(h)),
            None => return Err(CliError::Config("null set zigzag_segment needs a zigzag surface".into())),
        },
        Some(NullSpec::GreatCircle { normal }) => Some(NullSet::great_circle(*normal)),
        Some(NullSpec::Primitives { primitives }) => Some(NullSet::new(primitives.clone())),
    };
    let mut levels = sec.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut results = Vec::new();
    let (mut graph_rows, mut ess_rows) = (Vec::new(), Vec::new());
    let mut warnings = Vec::new();
    let mut violations = Vec::new();
    let mut previous: Vec<Option<f64>> = vec![None; sec.pairs.len()];
    for &level in &levels {
        for (i, [p, q]) in sec.pairs.iter().enumerate() {
            let g = graph_distance(&surface, p, q, level)?;
            if let Some(d) = &g.diagnostic {
                warnings.push(format!("level {level} pair {i}: {d}"));
            }
            if let Some(prev) = previous[i] {
                if g.value > prev + 1e-12 {
                    violations.push(format!("pair {i}: graph distance increased from {prev} to {} at level {level}", g.value));
                }
            }
            previous[i] = Some(g.value);
            graph_rows.push(DistanceRow { source: p.to_vec(), target: q.to_vec(), value: g.value, level });
            let e = match &null {
                Some(n) => {
                    let e = essential_distance(&surface, p, q, n, level)?;
                    if let Some(d) = &e.diagnostic {
                        warnings.push(format!("level {level} pair {i}, essential: {d}"));
                    }
                    if e.value < g.value - 1e-12 {
                        violations.push(format!("pair {i}: essential distance below graph distance at level {level}"));
                    }
                    ess_rows.push(DistanceRow { source: p.to_vec(), target: q.to_vec(), value: e.value, level });
                    Some(e)
                }
                None => None,
            };
            let gap = e.as_ref().map(|e| e.value - g.value);
            results.push(json!({ "level": level, "pair": i, "graph": g, "essential": e, "gap": gap }));
        }
    }
    let mut tables = Vec::new();
    let mut buf = Vec::new();
    write_distance_csv(&mut buf, &graph_rows)?;
    tables.push(("graph_distances".to_string(), buf));
    if null.is_some() {
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, &ess_rows)?;
        tables.push(("essential_distances".to_string(), buf));
    }
    Ok(Run { results: json!({ "levels": levels, "rows": results }), warnings, violations, tables })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CounterexampleName {
    SrPolygon,
    ShortcutSphere,
    Zigzag,
}

pub fn cmd_counterexample(name: CounterexampleName, sec: &CounterexampleSection, seed: u64) -> Out {
    match name {
        CounterexampleName::SrPolygon => {
            let c = sr_counterexample(sec.sr_n, sec.sr_tolerance, &finsler_core::finsler_volume::JacobianConfig { seed, ..Default::default() })?;
            let violations = if c.certificate { vec![] } else { vec!["certificate failed".to_string()] };
            Ok(Run { results: json!(c), violations, ..Default::default() })
        }
        CounterexampleName::ShortcutSphere => shortcut_certificate(sec, seed),
        CounterexampleName::Zigzag => zigzag_certificate(sec, seed),
    }
}

fn shortcut_certificate(sec: &CounterexampleSection, seed: u64) -> Out {
    let s = ShortcutSphere::new(sec.circle_samples)?;
    let axioms = check_metric_axioms(&s, sec.triples, 1e-9, seed);
    let pairs = sample_pairs(&RoundSphere, sec.pairs, seed.wrapping_add(1));
    let prof = lipschitz_profile(&RoundSphere, &s, |p| p.to_vec(), &pairs);
    let two_sided = prof.max_ratio <= 1.0 + 1e-12 && prof.min_ratio >= 0.5 - 1e-12;
    let target = Arc::new(s.clone());
    let id = MapSpec::new("id", 1.0, Ambient::Metric(target), |x| x.to_vec());
    let atlas = sphere_atlas();
    let (mut passing, mut reliable) = (0usize, 0usize);
    for (i, chart) in atlas.charts.iter().enumerate() {
        let xs: Vec<Vec<f64>> = interior_samples(chart, 100, 0.025, seed.wrapping_add(2 + i as u64))
            .into_iter()
            .filter(|x| s.distance_to_circle(&chart.eval(x)) > 0.01)
            .take(50)
            .collect();
        let r = infinitesimal_isometry_check(chart, &id, &xs, 1e-3, &DerivativeConfig::default())?;
        passing += r.passing;
        reliable += r.reliable_samples;
    }
    let isometry_fraction = passing as f64 / reliable.max(1) as f64;
    let antipodal_on_c = s.dist(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]);
    let poles = s.dist(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]);
    let mut violations = Vec::new();
    if !axioms.passed {
        violations.push("metric axioms fail".into());
    }
    if !two_sided {
        violations.push("½D ≤ d ≤ D violated".into());
    }
    let results = json!({
        "axioms": axioms,
        "lipschitz_profile": prof,
        "two_sided_bound": two_sided,
        "isometry_fraction_off_c": isometry_fraction,
        "antipodal_on_c": antipodal_on_c,
        "poles": poles,
        "not_isometric": prof.min_ratio < 1.0,
    });
    Ok(Run { results, violations, ..Default::default() })
}

fn zigzag_certificate(sec: &CounterexampleSection, seed: u64) -> Out {
    let zz = build_zigzag_surface(sec.zigzag_n_max, 1.0)?;
    let h = zz.truncation;
    let surface = Arc::new(zz.surface);
    let (p, q) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut levels = sec.zigzag_levels.clone();
    levels.sort_unstable();
    levels.dedup();
    for &level in &levels {
        let g = graph_distance(&surface, &p, &q, level)?.value;
        let e = essential_distance(&surface, &p, &q, &zigzag_null_set(h), level)?.value;
        if e < g - 1e-12 {
            violations.push(format!("essential distance below graph distance at level {level}"));
        }
        rows.push(json!({ "level": level, "graph": g, "essential": e, "gap": e - g }));
    }
    let oracle = GraphOracle::new("induced", surface, levels.first().copied().unwrap_or(3).min(3), NullSet::default())?;
    let pairs = sample_pairs(&oracle, sec.pairs.min(200), seed);
    let prof = lipschitz_profile(&EuclideanMetric, &oracle, |x| x.to_vec(), &pairs);
    if prof.min_ratio < 1.0 - 1e-12 {
        violations.push("induced distance below Euclidean distance".into());
    }
    let results = json!({
        "n_max": sec.zigzag_n_max,
        "truncation": h,
        "levels": rows,
        "lipschitz_constant_l": prof.max_ratio,
        "min_ratio_to_euclidean": prof.min_ratio,
    });
    Ok(Run { results, violations, ..Default::default() })
}

pub fn cmd_diagnose_map(sec: &DiagnoseSection, seed: u64) -> Out {
    let input = match sec.case {
        DiagnoseCase::FlatSquare => flat_square_identity_case(sec.pairs, seed)?,
        DiagnoseCase::ShortcutSphere => shortcut_sphere_case(sec.circle_samples, sec.pairs, seed)?,
        DiagnoseCase::Zigzag => zigzag_case(sec.n_max, sec.level, sec.pairs.min(200), seed)?,
    };
    let r = map_rigidity_diagnostic(&input, &sec.settings)?;
    let rows: Vec<Vec<String>> = r
        .balls
        .iter()
        .map(|b| vec![b.center.iter().map(|c| f(*c)).collect::<Vec<_>>().join(" "), f(b.radius), f(b.source), f(b.target), f(b.relative_difference)])
        .collect();
    let table = csv_table(&["center", "radius", "source", "target", "relative_difference"], &rows)?;
    let warnings = r.warnings.clone();
    Ok(Run { results: json!(r), warnings, violations: vec![], tables: vec![("balls".into(), table)] })
}

pub fn cmd_maximal(sec: &MaximalSection) -> Out {
    let path = sec.measure.as_ref().ok_or_else(|| CliError::Config("maximal.measure is required".into()))?;
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let m = DiscreteMeasure::from_csv(BufReader::new(file))?;
    let mut values = Vec::new();
    let mut rows = Vec::new();
    for x in &sec.points {
        let v = maximal_function(&m, x, &sec.schedule)?;
        rows.push(vec![x.iter().map(|c| f(*c)).collect::<Vec<_>>().join(" "), f(v.value), v.unbounded.to_string(), f(v.radius)]);
        values.push(json!({ "point": x, "value": v }));
    }
    let table = csv_table(&["point", "value", "unbounded", "radius"], &rows)?;
    Ok(Run { results: json!({ "total_mass": m.total_mass(), "atoms": m.atoms().len(), "values": values }), tables: vec![("maximal".into(), table)], ..Default::default() })
}

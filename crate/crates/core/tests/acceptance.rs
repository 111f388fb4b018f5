//! Acceptance run: one PASS/FAIL line per criterion, then a rerun of every
//! criterion to confirm byte-identical payloads.

use finsler_core::finsler_volume::{jacobian, rigidity_test, JacobianConfig, RigidityTolerances, VolumeDefinition};
use finsler_core::length_space::*;
use finsler_core::norms::{polytopal_norm, regular_2ngon_norm, Seminorm};
use finsler_core::rectifiable::{
    area_formula_check, infinitesimal_isometry_check, linear_chart, mu_measure, sphere_atlas, Ambient, AreaParams, Atlas, DerivativeConfig, MapSpec,
};
use finsler_core::rectifiable::Metric;
use finsler_core::sampling;
use nalgebra::DMatrix;
use rand::Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
    payload: Value,
}

fn outcome(pass: bool, detail: String, payload: Value) -> Outcome {
    Outcome { pass, detail, payload }
}

fn euclid_callable(m: usize) -> Seminorm {
    Seminorm::callable(m, 1e-12, |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn c1_normalization() -> Outcome {
    let cfg = JacobianConfig::default();
    let mut worst_exact: f64 = 0.0;
    let mut values = Vec::new();
    for m in [2, 3] {
        let norms = [Seminorm::euclidean(m), Seminorm::gram(DMatrix::identity(m, m)).unwrap(), Seminorm::p_norm(m, 2.0).unwrap()];
        for s in &norms {
            for tag in VolumeDefinition::ALL {
                let j = jacobian(tag, s, &cfg).unwrap().value;
                worst_exact = worst_exact.max((j - 1.0).abs());
                values.push(j);
            }
        }
    }
    let mut worst_qmc: f64 = 0.0;
    let s4 = euclid_callable(4);
    for tag in VolumeDefinition::ALL {
        let j = jacobian(tag, &s4, &cfg).unwrap().value;
        worst_qmc = worst_qmc.max((j - 1.0).abs());
        values.push(j);
    }
    let pass = worst_exact <= 1e-9 && worst_qmc <= 1e-3;
    outcome(pass, format!("max |J−1| closed form {worst_exact:.2e}, m=4 sampled {worst_qmc:.2e}"), json!(values))
}

/// Vertices of {x : |f_i·x| ≤ 1}, by clipping a large square against each
/// half-plane in turn.
fn polygon_vertices(facets: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let mut poly = vec![[-10.0, -10.0], [10.0, -10.0], [10.0, 10.0], [-10.0, 10.0]];
    for f in facets.iter().flat_map(|f| [*f, [-f[0], -f[1]]]) {
        let side = |p: &[f64; 2]| f[0] * p[0] + f[1] * p[1] - 1.0;
        let mut next = Vec::new();
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp <= 0.0 {
                next.push(p);
            }
            if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
                let t = sp / (sp - sq);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        poly = next;
    }
    poly.iter().map(|p| p.to_vec()).collect()
}

fn shoelace(v: &[Vec<f64>]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum::<f64>().abs()
}

fn c2_rigidity() -> Outcome {
    let cfg = JacobianConfig::default();
    let mut rng = sampling::rng(2024);
    let (mut cases, mut failures, mut oracle_gap): (usize, usize, f64) = (0, 0, 0.0);
    let mut min_bh = f64::INFINITY;
    let mut min_mstar = f64::INFINITY;
    while cases < 200 {
        // many facets and small spread give nearly round balls
        let k = rng.gen_range(3..40);
        let spread = rng.gen_range(0.01..0.4);
        // facet directions spread over a half turn so the polygon is bounded
        let mut facets: Vec<[f64; 2]> = (0..k)
            .map(|i| {
                let t = PI * (i as f64 + rng.gen_range(0.1..0.9)) / k as f64;
                let r = rng.gen_range(1.0..1.0 + spread);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        // rescale so the polygon touches the unit circle from inside
        let far = polygon_vertices(&facets).iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        for f in &mut facets {
            f[0] *= far;
            f[1] *= far;
        }
        let max_ratio = facets.iter().map(|f| f[0].hypot(f[1])).fold(0.0, f64::max);
        if max_ratio < 1.01 {
            continue;
        }
        cases += 1;
        let norm = polytopal_norm(facets.iter().map(|f| f.to_vec()).collect()).unwrap();
        let bh = jacobian(VolumeDefinition::Bh, &norm, &cfg).unwrap().value;
        let mstar = jacobian(VolumeDefinition::Mstar, &norm, &cfg).unwrap().value;
        let area = shoelace(&polygon_vertices(&facets));
        oracle_gap = oracle_gap.max((bh - PI / area).abs());
        min_bh = min_bh.min(bh);
        min_mstar = min_mstar.min(mstar);
        if !(bh > 1.0 && mstar > 1.0) {
            failures += 1;
        }
    }
    let pass = failures == 0 && oracle_gap < 1e-9;
    outcome(
        pass,
        format!("{cases} norms, {failures} failures, min J_bh {min_bh:.6}, min J_mstar {min_mstar:.6}, |J_bh − π/area| ≤ {oracle_gap:.1e}"),
        json!([min_bh, min_mstar, oracle_gap]),
    )
}

fn c3_sr_counterexample() -> Outcome {
    let cfg = JacobianConfig::default();
    let norm = regular_2ngon_norm(4).unwrap();
    let v = rigidity_test(VolumeDefinition::Sr, &norm, &RigidityTolerances::default(), &cfg).unwrap();
    let expected = 1.0 / (PI / 8.0).cos();
    let pass = (v.jacobian - 1.0).abs() <= 1e-4 && (v.max_ratio - expected).abs() <= 1e-4 && v.hypotheses_hold && !v.conclusion_holds;
    outcome(pass, format!("J_sr {:.8}, max_ratio {:.8} (1/cos(π/8) = {expected:.8})", v.jacobian, v.max_ratio), json!([v.jacobian, v.max_ratio]))
}

fn c4_area_formula() -> Outcome {
    let dc = DerivativeConfig::default();
    let jc = JacobianConfig::default();
    let params = AreaParams::default();
    let unit = linear_chart(DMatrix::identity(2, 2), vec![0.0, 0.0], vec![1.0, 1.0], Ambient::Euclidean).unwrap();
    let strip = linear_chart(DMatrix::identity(2, 2), vec![0.0, 0.0], vec![2.0, 1.0], Ambient::Euclidean).unwrap();
    let smooth = |y: &[f64]| (-(y[0] * y[0] + y[1] * y[1])).exp();
    let fold = MapSpec::new("fold", 1.0, Ambient::Euclidean, |p| vec![p[0].min(2.0 - p[0]), p[1]]);
    let shear = MapSpec::new("det3", 3.0, Ambient::Euclidean, |p| vec![2.0 * p[0] + p[1], p[0] + 2.0 * p[1]]);
    let cases = [
        ("identity", area_formula_check(&Atlas::single(unit.clone()), &MapSpec::identity(Ambient::Euclidean), smooth, VolumeDefinition::Bh, &params, &dc, &jc)),
        ("fold", area_formula_check(&Atlas::single(strip), &fold, smooth, VolumeDefinition::Bh, &params, &dc, &jc)),
        ("det3", area_formula_check(&Atlas::single(unit), &shear, |y: &[f64]| if y[0] < 1.5 { 1.0 } else { 0.0 }, VolumeDefinition::Bh, &params, &dc, &jc)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut payload = Vec::new();
    for (name, r) in cases {
        let r = r.unwrap();
        let ok = r.finest_residual() <= 1e-3 && r.order_ok;
        pass &= ok;
        let order = r.observed_order.map_or("round-off".to_string(), |o| format!("{o:.2}"));
        parts.push(format!("{name} residual {:.1e} order {order}", r.finest_residual()));
        payload.push(json!(r));
    }
    outcome(pass, parts.join("; "), json!(payload))
}

fn c5_sphere_area() -> Outcome {
    let v = mu_measure(&sphere_atlas(), VolumeDefinition::Bh, |_| true, 64, &DerivativeConfig::default(), &JacobianConfig::default()).unwrap();
    let rel = (v.value - 4.0 * PI).abs() / (4.0 * PI);
    outcome(rel <= 5e-3, format!("area {:.6} vs 4π {:.6}, relative error {rel:.2e}", v.value, 4.0 * PI), json!(v.value))
}

fn c6_shortcut_sphere() -> Outcome {
    let s = ShortcutSphere::new(256).unwrap();
    let axioms = check_metric_axioms(&s, 10_000, 1e-9, 6);
    let pairs = sample_pairs(&RoundSphere, 10_000, 66);
    let prof = lipschitz_profile(&RoundSphere, &s, |p| p.to_vec(), &pairs);
    let two_sided = prof.max_ratio <= 1.0 + 1e-12 && prof.min_ratio >= 0.5 - 1e-12;
    // infinitesimal isometry of the identity S² → 𝒮 away from C
    let target = Arc::new(s.clone());
    let id = MapSpec::new("id", 1.0, Ambient::Metric(target.clone()), |x| x.to_vec());
    let atlas = sphere_atlas();
    let mut rng = sampling::rng(606);
    let (mut passing, mut reliable) = (0usize, 0usize);
    for chart in &atlas.charts {
        let mut xs = Vec::new();
        while xs.len() < 50 {
            let x = vec![rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
            if s.distance_to_circle(&chart.eval(&x)) > 0.01 {
                xs.push(x);
            }
        }
        let r = infinitesimal_isometry_check(chart, &id, &xs, 1e-3, &DerivativeConfig::default()).unwrap();
        passing += r.passing;
        reliable += r.reliable_samples;
    }
    let fraction = passing as f64 / reliable.max(1) as f64;
    let antipodal = s.dist(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]);
    let pass = axioms.passed && two_sided && fraction >= 0.99 && (antipodal / (PI / 2.0) - 1.0).abs() <= 0.01 && prof.min_ratio <= 0.51;
    outcome(
        pass,
        format!(
            "axioms {} on {} triples; ratios in [{:.4}, {:.4}]; isometry off C {:.3}; d(antipodes on C) {:.6}",
            if axioms.passed { "hold" } else { "fail" },
            axioms.triples,
            prof.min_ratio,
            prof.max_ratio,
            fraction,
            antipodal
        ),
        json!([axioms.worst_excess, prof.min_ratio, prof.max_ratio, fraction, antipodal]),
    )
}

fn c7_zigzag() -> Outcome {
    let zz = build_zigzag_surface(6, 1.0).unwrap();
    let h = zz.truncation;
    let surface = Arc::new(zz.surface);
    let (p, q) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
    let mut rows = Vec::new();
    for level in [4, 5] {
        let g = graph_distance(&surface, &p, &q, level).unwrap().value;
        let e = essential_distance(&surface, &p, &q, &zigzag_null_set(h), level).unwrap().value;
        rows.push((level, g, e, e - g));
    }
    let graph_ok = rows.iter().all(|r| (r.1 - 1.0).abs() <= 0.02);
    let gaps: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let stable = (gaps[1] - gaps[0]).abs() <= 0.1 * gaps[0];
    let gap_ok = gaps.iter().all(|g| *g >= 0.05);
    // d ≤ d_i ≤ L·d on node pairs of the induced oracle
    let oracle = GraphOracle::new("induced", surface.clone(), 3, NullSet::default()).unwrap();
    let pairs = sample_pairs(&oracle, 100, 77);
    let prof = lipschitz_profile(&EuclideanMetric, &oracle, |x| x.to_vec(), &pairs);
    let lower_ok = prof.min_ratio >= 1.0 - 1e-12;
    let pass = graph_ok && gap_ok && stable && lower_ok && prof.max_ratio.is_finite();
    outcome(
        pass,
        format!(
            "d_i {:.6}/{:.6}, d_ess {:.6}/{:.6} at levels 4/5, gap {:.4}/{:.4}; d ≤ d_i ≤ L·d with L = {:.4}",
            rows[0].1, rows[1].1, rows[0].2, rows[1].2, gaps[0], gaps[1], prof.max_ratio
        ),
        json!([rows, prof.min_ratio, prof.max_ratio]),
    )
}

fn c8_map_diagnostic() -> Outcome {
    let cfg = DiagnosticConfig::default();
    let flat = map_rigidity_diagnostic(&flat_square_identity_case(200, 8).unwrap(), &cfg).unwrap();
    let sphere = map_rigidity_diagnostic(&shortcut_sphere_case(256, 400, 8).unwrap(), &cfg).unwrap();
    let zig = map_rigidity_diagnostic(&zigzag_case(6, 3, 40, 8).unwrap(), &cfg).unwrap();
    let flat_ok = flat.hypotheses_hold && flat.isometry_observed && flat.flags.is_empty();
    let counter_ok = |r: &MapDiagnosticReport| r.hypotheses_hold && !r.isometry_observed && r.flags.iter().any(|f| f == NOT_ESSENTIAL_FLAG);
    let pass = flat_ok && counter_ok(&sphere) && counter_ok(&zig);
    outcome(
        pass,
        format!(
            "flat: all pass {flat_ok}; S²→𝒮: hypotheses {} min ratio {:.4}; zigzag: hypotheses {} min ratio {:.4}",
            sphere.hypotheses_hold, sphere.distance.min_ratio, zig.hypotheses_hold, zig.distance.min_ratio
        ),
        json!([flat, sphere, zig]),
    )
}

// Runs without the libtest harness so the per-criterion lines always print.
fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 normalization", c1_normalization),
        ("2 rigidity of bh and mstar", c2_rigidity),
        ("3 sr non-rigidity", c3_sr_counterexample),
        ("4 area formula", c4_area_formula),
        ("5 sphere area", c5_sphere_area),
        ("6 shortcut sphere", c6_shortcut_sphere),
        ("7 zigzag surface", c7_zigzag),
        ("8 map diagnostic", c8_map_diagnostic),
    ];
    let mut all = true;
    let mut payloads = Vec::new();
    for (name, run) in criteria {
        let t = Instant::now();
        let o = run();
        all &= o.pass;
        println!("criterion {name}: {} ({:.1}s) {}", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), o.detail);
        payloads.push(serde_json::to_string(&o.payload).unwrap());
    }
    let mut identical = true;
    for ((name, run), first) in criteria.iter().zip(&payloads) {
        let again = serde_json::to_string(&run().payload).unwrap();
        if &again != first {
            identical = false;
            println!("  rerun of criterion {name} differs");
        }
    }
    println!("criterion 9 determinism: {} (all payloads byte-identical on rerun: {identical})", if identical { "PASS" } else { "FAIL" });
    if !(all && identical) {
        std::process::exit(1);
    }
}

//! The zigzag surface: a Lipschitz graph over the plane whose oscillations
//! shrink geometrically towards the x-axis.
//!
//! With z(t) the distance from t to the nearest integer and
//! z_n(s) = 2^{-n} z(2^n s), the height at y = ±2^{-n} is z_n, and between
//! consecutive dyadic heights it interpolates linearly in y:
//! f(s, λ2^{-n} + (1−λ)2^{-n-1}) = λ z_n(s) + (1−λ) z_{n+1}(s), f(s, 0) = 0.
//! Truncating at n_max replaces the band |y| < 2^{-n_max} by the linear ramp
//! (|y|/2^{-n_max})·z_{n_max}(s).

use super::surface::{PolyhedralSurface, P3};
use crate::error::{Error, Result};

/// Vertex limit for [`build_zigzag_surface`].
pub const ZIGZAG_VERTEX_BUDGET: usize = 2_000_000;

pub fn z(t: f64) -> f64 {
    (t - t.round()).abs()
}

pub fn z_n(n: i32, s: f64) -> f64 {
    let scale = 2f64.powi(n);
    z(scale * s) / scale
}

/// Height of the zigzag graph; `n_max = None` is the untruncated surface.
pub fn zigzag_height(x: f64, y: f64, n_max: Option<i32>) -> f64 {
    let a = y.abs();
    if a == 0.0 {
        return 0.0;
    }
    if let Some(nm) = n_max {
        let h = 2f64.powi(-nm);
        if a < h {
            return a / h * z_n(nm, x);
        }
    }
    // 2^{-n-1} < a ≤ 2^{-n}
    let mut n = (-a.log2()).floor() as i32;
    if 2f64.powi(-n) < a {
        n -= 1;
    }
    if 2f64.powi(-n - 1) >= a {
        n += 1;
    }
    let lo = 2f64.powi(-n - 1);
    let lambda = (a - lo) / lo;
    lambda * z_n(n, x) + (1.0 - lambda) * z_n(n + 1, x)
}

/// Lipschitz constant of the height: |∂_x f| ≤ 1 and |∂_y f| ≤ 1.
pub const ZIGZAG_HEIGHT_LIPSCHITZ: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct ZigzagSurface {
    pub surface: PolyhedralSurface,
    pub n_max: i32,
    pub extent: f64,
    /// Truncation height 2^{-n_max}.
    pub truncation: f64,
}

/// Rows of the graded mesh for y ≥ 0 as (y, column spacing).
fn rows(n_max: i32, e: i32) -> Vec<(f64, f64)> {
    let h = 2f64.powi(-n_max);
    let strip_spacing = 2f64.powi(-n_max - 1);
    let band_spacing = |n: i32| 2f64.powi(-n - 2);
    let mut rows = vec![(0.0, strip_spacing), (0.5 * h, strip_spacing)];
    // bands n = n_max − 1 down to −e, from the axis upwards
    for n in (-e..n_max).rev() {
        let lo = 2f64.powi(-n - 1);
        let below = if n + 1 < n_max { band_spacing(n + 1) } else { strip_spacing };
        rows.push((lo, below.min(band_spacing(n))));
        for q in 1..4 {
            rows.push((lo * (1.0 + q as f64 / 4.0), band_spacing(n)));
        }
    }
    rows.push((2f64.powi(e), band_spacing(-e)));
    rows
}

/// Triangulated graph of the truncated zigzag height over
/// [−extent, extent]², with vertex columns on every breakpoint of the z_n
/// in use. `extent` must be a power of two ≥ 1.
pub fn build_zigzag_surface(n_max: i32, extent: f64) -> Result<ZigzagSurface> {
    if n_max < 1 {
        return Err(Error::InvalidArgument(format!("n_max must be ≥ 1, got {n_max}")));
    }
    let e = extent.log2().round() as i32;
    if !(extent >= 1.0) || 2f64.powi(e) != extent {
        return Err(Error::InvalidArgument(format!("extent must be a power of two ≥ 1, got {extent}")));
    }
    let half = rows(n_max, e);
    let estimate: usize = half.iter().map(|(_, s)| (2.0 * extent / s) as usize + 1).sum::<usize>() * 2;
    if estimate > ZIGZAG_VERTEX_BUDGET {
        return Err(Error::MemoryBudget { estimated: estimate, limit: ZIGZAG_VERTEX_BUDGET });
    }
    // full row list from y = −extent to y = extent
    let mut all: Vec<(f64, f64)> = half.iter().rev().filter(|r| r.0 > 0.0).map(|&(y, s)| (-y, s)).collect();
    all.extend(half.iter().copied());
    let mut vertices: Vec<P3> = Vec::with_capacity(estimate);
    let mut row_ids: Vec<Vec<usize>> = Vec::with_capacity(all.len());
    for &(y, s) in &all {
        let count = (2.0 * extent / s).round() as usize;
        let mut ids = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let x = -extent + i as f64 * s;
            ids.push(vertices.len());
            vertices.push([x, y, zigzag_height(x, y, Some(n_max))]);
        }
        row_ids.push(ids);
    }
    let mut triangles = Vec::new();
    for r in 0..row_ids.len() - 1 {
        zipper(&vertices, &row_ids[r], &row_ids[r + 1], &mut triangles);
    }
    let surface = PolyhedralSurface::new(vertices, triangles)?;
    Ok(ZigzagSurface { surface, n_max, extent, truncation: 2f64.powi(-n_max) })
}

/// Triangulates the strip between two rows of increasing x that share
/// their first and last x coordinates.
fn zipper(v: &[P3], bottom: &[usize], top: &[usize], out: &mut Vec<[usize; 3]>) {
    let (mut i, mut j) = (0, 0);
    while i + 1 < bottom.len() || j + 1 < top.len() {
        let advance_bottom = if i + 1 >= bottom.len() {
            false
        } else if j + 1 >= top.len() {
            true
        } else {
            v[bottom[i + 1]][0] <= v[top[j + 1]][0]
        };
        if advance_bottom {
            out.push([bottom[i], bottom[i + 1], top[j]]);
            i += 1;
        } else {
            out.push([bottom[i], top[j + 1], top[j]]);
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn height_examples() {
        assert_eq!(zigzag_height(0.25, 2.0, None), 0.25);
        assert_eq!(z_n(1, 0.25), 0.25);
        for x in [-0.9, -0.3, 0.0, 0.1, 0.77] {
            assert_eq!(zigzag_height(x, 0.0, None), 0.0);
            assert_eq!(zigzag_height(x, 0.0, Some(4)), 0.0);
            for y in [0.01, 0.3, 0.5, 0.9, 1.0] {
                assert_eq!(zigzag_height(x, y, None), zigzag_height(x, -y, None));
            }
        }
        // dyadic rows carry z_n exactly
        for n in 0..6 {
            for k in 0..20 {
                let x = -1.0 + 0.1 * k as f64;
                let y = 2f64.powi(-n);
                assert!((zigzag_height(x, y, None) - z_n(n, x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn height_is_lipschitz() {
        let mut rng = crate::sampling::rng(3);
        use rand::Rng;
        let mut worst: f64 = 0.0;
        for _ in 0..20_000 {
            let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (dx, dy): (f64, f64) = (rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3));
            let d = (dx * dx + dy * dy).sqrt();
            let r = (zigzag_height(x + dx, y + dy, None) - zigzag_height(x, y, None)).abs() / d;
            worst = worst.max(r);
        }
        assert!(worst <= ZIGZAG_HEIGHT_LIPSCHITZ + 1e-9, "{worst}");
    }

    #[test]
    fn mesh_is_exact_on_rows_and_symmetric() {
        let zz = build_zigzag_surface(3, 1.0).unwrap();
        let v = zz.surface.vertices();
        for p in v {
            assert_eq!(p[2], zigzag_height(p[0], p[1], Some(3)));
            assert!(p[0].abs() <= 1.0 && p[1].abs() <= 1.0);
        }
        let top = v.iter().filter(|p| p[1] == 1.0).count();
        let bottom = v.iter().filter(|p| p[1] == -1.0).count();
        assert_eq!(top, bottom);
        // mesh covers the square
        let flat: f64 = zz
            .surface
            .triangles()
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| v[i]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
            })
            .sum();
        assert!((flat - 4.0).abs() < 1e-12);
        assert!(build_zigzag_surface(0, 1.0).is_err());
        assert!(build_zigzag_surface(3, 1.5).is_err());
        assert!(matches!(build_zigzag_surface(40, 1.0), Err(Error::MemoryBudget { .. })));
    }
}

//! Triangulated surfaces in R³ and their OFF encoding.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

pub type P3 = [f64; 3];

pub(crate) fn dist3(a: &P3, b: &P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub(crate) fn lerp3(a: &P3, b: &P3, t: f64) -> P3 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// A manifold triangulation with its edge structure.
#[derive(Debug, Clone)]
pub struct PolyhedralSurface {
    vertices: Vec<P3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    vertex_tris: Vec<Vec<usize>>,
    edge_tris: Vec<Vec<usize>>,
}

impl PolyhedralSurface {
    /// Validates that every edge has positive length and borders at most two
    /// triangles.
    pub fn new(vertices: Vec<P3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[e].push(t);
                if edge_tris[e].len() > 2 {
                    return Err(Error::InvalidMesh(format!("edge {key:?} borders more than two triangles")));
                }
                if dist3(&vertices[a], &vertices[b]) <= 0.0 {
                    return Err(Error::InvalidMesh(format!("edge {key:?} has zero length")));
                }
                te[k] = e;
            }
            tri_edges.push(te);
            for &v in tri {
                vertex_tris[v].push(t);
            }
        }
        Ok(Self { vertices, triangles, edges, tri_edges, vertex_tris, edge_tris })
    }

    pub fn vertices(&self) -> &[P3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub(crate) fn tri_edges(&self) -> &[[usize; 3]] {
        &self.tri_edges
    }

    pub(crate) fn vertex_tris(&self) -> &[Vec<usize>] {
        &self.vertex_tris
    }

    pub(crate) fn edge_tris(&self) -> &[Vec<usize>] {
        &self.edge_tris
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist3(&self.vertices[a], &self.vertices[b])
    }

    pub fn min_edge_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
            })
            .sum()
    }

    pub fn write_off<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} 0", self.vertices.len(), self.triangles.len())?;
        for v in &self.vertices {
            writeln!(w, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads an OFF mesh; polygonal faces are fan-triangulated.
    pub fn read_off<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("");
            tokens.extend(body.split_whitespace().map(str::to_string));
        }
        let mut it = tokens.into_iter();
        match it.next().as_deref() {
            Some("OFF") => {}
            other => return Err(Error::Parse(format!("expected OFF header, found {other:?}"))),
        }
        let mut next_num = |what: &str| -> Result<String> { it.next().ok_or_else(|| Error::Parse(format!("OFF ended before {what}"))) };
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(format!("OFF count `{s}`: {e}")));
        let nv = parse_usize(next_num("vertex count")?)?;
        let nf = parse_usize(next_num("face count")?)?;
        let _ne = next_num("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let mut p = [0.0; 3];
            for c in p.iter_mut() {
                let s = next_num("vertex coordinates")?;
                *c = s.parse::<f64>().map_err(|e| Error::Parse(format!("OFF coordinate `{s}`: {e}")))?;
            }
            vertices.push(p);
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let k = parse_usize(next_num("face size")?)?;
            if k < 3 {
                return Err(Error::Parse(format!("OFF face with {k} vertices")));
            }
            let mut idx = Vec::with_capacity(k);
            for _ in 0..k {
                idx.push(parse_usize(next_num("face indices")?)?);
            }
            for j in 1..k - 1 {
                triangles.push([idx[0], idx[j], idx[j + 1]]);
            }
        }
        Self::new(vertices, triangles)
    }
}

/// Flat `[0, side]²` square split into `n × n` cells, each cut along the
/// main diagonal direction (or the anti-diagonal when `anti` is set).
pub fn flat_square_mesh(n: usize, side: f64, anti: bool) -> Result<PolyhedralSurface> {
    if n == 0 {
        return Err(Error::InvalidArgument("flat square needs n ≥ 1".into()));
    }
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([side * i as f64 / n as f64, side * j as f64 / n as f64, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if anti {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            } else {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
    }
    PolyhedralSurface::new(vertices, triangles)
}

/// Unit sphere from an octahedron by `level` rounds of 4-to-1 subdivision.
/// The coordinate great circles run along mesh edges and ±e_i are vertices.
pub fn sphere_mesh(level: usize) -> Result<PolyhedralSurface> {
    let mut verts: Vec<P3> = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                mid[k] = *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let p = crate::sampling::unit3([
                        verts[a][0] + verts[b][0],
                        verts[a][1] + verts[b][1],
                        verts[a][2] + verts[b][2],
                    ]);
                    verts.push(p);
                    verts.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    PolyhedralSurface::new(verts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_round_trip() {
        let s = flat_square_mesh(3, 1.0, false).unwrap();
        let mut buf = Vec::new();
        s.write_off(&mut buf).unwrap();
        let r = PolyhedralSurface::read_off(buf.as_slice()).unwrap();
        assert_eq!(r.vertices(), s.vertices());
        assert_eq!(r.triangles(), s.triangles());
    }

    #[test]
    fn off_quads_are_fanned() {
        let text = "OFF\n# a unit quad\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let s = PolyhedralSurface::read_off(text.as_bytes()).unwrap();
        assert_eq!(s.triangles().len(), 2);
        assert!((s.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_manifold_and_degenerate() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
        let t = vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]];
        assert!(matches!(PolyhedralSurface::new(v.clone(), t), Err(Error::InvalidMesh(_))));
        let v2 = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(PolyhedralSurface::new(v2, vec![[0, 1, 2]]).is_err());
        assert!(PolyhedralSurface::read_off("OFF\n3 1 0\n0 0 0\n".as_bytes()).is_err());
    }

    #[test]
    fn sphere_mesh_shape() {
        let s = sphere_mesh(3).unwrap();
        assert_eq!(s.triangles().len(), 8 * 64);
        assert_eq!(s.vertices().len(), 4 * 64 + 2);
        assert!(s.edges().iter().all(|&[a, b]| s.edge_tris()[s.edges().iter().position(|e| *e == [a, b]).unwrap()].len() == 2));
        // the equator is made of mesh edges
        let on_equator = s.edges().iter().filter(|&&[a, b]| s.vertices()[a][2] == 0.0 && s.vertices()[b][2] == 0.0).count();
        assert_eq!(on_equator, 4 * 8);
        // inscribed, so slightly below 4π
        let full = 4.0 * std::f64::consts::PI;
        assert!(s.area() < full && s.area() > 0.97 * full, "{}", s.area());
    }
}

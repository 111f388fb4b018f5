//! Finite weighted point measures, pushforwards and the Hardy-Littlewood
//! maximal function.

use crate::error::{Error, Result};
use crate::sampling::{norm2, sub, unit_ball_volume};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    total_mass: f64,
}

impl DiscreteMeasure {
    pub fn empty(dim: usize) -> Self {
        Self { dim, atoms: Vec::new(), total_mass: 0.0 }
    }

    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let mut m = Self::empty(dim);
        for a in atoms {
            m.push(a.point, a.weight)?;
        }
        Ok(m)
    }

    /// Adds an atom; weights must be positive and finite.
    pub fn push(&mut self, point: Vec<f64>, weight: f64) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: point.len() });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("atom weight must be positive, got {weight}")));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("atom coordinates must be finite".into()));
        }
        self.total_mass += weight;
        self.atoms.push(Atom { point, weight });
        Ok(())
    }

    pub fn with_atom(&self, point: Vec<f64>, weight: f64) -> Result<Self> {
        let mut m = self.clone();
        m.push(point, weight)?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// μ(closed ball(x, r)).
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        self.atoms.iter().filter(|a| norm2(&sub(&a.point, x)) <= r).map(|a| a.weight).sum()
    }

    /// Reads `x1,…,xm,weight` rows; an optional header row is skipped when
    /// its first field is not numeric.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut measure: Option<Self> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("measure CSV row {}: {e}", line + 1))),
            };
            if values.len() < 2 {
                return Err(Error::Parse(format!("measure CSV row {} needs coordinates and a weight", line + 1)));
            }
            let (point, weight) = values.split_at(values.len() - 1);
            let m = measure.get_or_insert_with(|| Self::empty(point.len()));
            m.push(point.to_vec(), weight[0])?;
        }
        measure.ok_or_else(|| Error::Parse("measure CSV contains no atoms".into()))
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for a in &self.atoms {
            let mut row: Vec<String> = a.point.iter().map(|x| format!("{x:e}")).collect();
            row.push(format!("{:e}", a.weight));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Geometric radius grid `r_min·q^k` up to `r_max`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RadiusSchedule {
    pub r_min: f64,
    pub r_max: f64,
    pub ratio: f64,
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        Self { r_min: 1e-6, r_max: 1e3, ratio: 2.0 }
    }
}

impl RadiusSchedule {
    pub fn radii(&self) -> Result<Vec<f64>> {
        if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.ratio > 1.0) {
            return Err(Error::InvalidArgument(format!("invalid radius schedule {self:?}")));
        }
        let mut out = Vec::new();
        let mut r = self.r_min;
        while r < self.r_max {
            out.push(r);
            r *= self.ratio;
        }
        out.push(self.r_max);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MaximalValue {
    /// `f64::INFINITY` when unbounded.
    pub value: f64,
    /// x carries an atom, so μ(B(x,r))/(α_m r^m) diverges as r → 0.
    pub unbounded: bool,
    /// Radius attaining the reported value (0 when unbounded or empty).
    pub radius: f64,
}

/// sup_r μ(B̄(x,r)) / (α_m r^m) over the schedule augmented with every atom
/// distance. For a discrete measure the ratio is maximized at an atom
/// distance, so the result is the exact supremum.
pub fn maximal_function(measure: &DiscreteMeasure, x: &[f64], schedule: &RadiusSchedule) -> Result<MaximalValue> {
    if x.len() != measure.dim {
        return Err(Error::DimensionMismatch { expected: measure.dim, got: x.len() });
    }
    if measure.is_empty() {
        return Ok(MaximalValue { value: 0.0, unbounded: false, radius: 0.0 });
    }
    let mut dists: Vec<(f64, f64)> = measure.atoms.iter().map(|a| (norm2(&sub(&a.point, x)), a.weight)).collect();
    if dists.iter().any(|&(d, _)| d == 0.0) {
        return Ok(MaximalValue { value: f64::INFINITY, unbounded: true, radius: 0.0 });
    }
    dists.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut radii = schedule.radii()?;
    radii.extend(dists.iter().map(|d| d.0));
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let alpha = unit_ball_volume(measure.dim);
    let m = measure.dim as i32;
    let mut best = MaximalValue { value: 0.0, unbounded: false, radius: 0.0 };
    // sweep radii in increasing order, accumulating the closed-ball mass
    let mut k = 0;
    let mut mass = 0.0;
    for r in radii {
        while k < dists.len() && dists[k].0 <= r {
            mass += dists[k].1;
            k += 1;
        }
        let v = mass / (alpha * r.powi(m));
        if v > best.value {
            best = MaximalValue { value: v, unbounded: false, radius: r };
        }
    }
    Ok(best)
}

/// Image measure under `map`; atoms landing on the same point are merged.
pub fn pushforward<F>(measure: &DiscreteMeasure, map: F) -> Result<DiscreteMeasure>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut merged: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    let mut dim = None;
    for a in &measure.atoms {
        let y = map(&a.point)?;
        match dim {
            None => dim = Some(y.len()),
            Some(d) if d != y.len() => return Err(Error::DimensionMismatch { expected: d, got: y.len() }),
            _ => {}
        }
        let key: Vec<u64> = y.iter().map(|v| (v + 0.0).to_bits()).collect();
        match merged.get_mut(&key) {
            Some(e) => e.1 += a.weight,
            None => {
                order.push(key.clone());
                merged.insert(key, (y, a.weight));
            }
        }
    }
    let mut out = DiscreteMeasure::empty(dim.unwrap_or(measure.dim));
    for key in order {
        let (p, w) = merged.remove(&key).expect("key recorded on insert");
        out.atoms.push(Atom { point: p, weight: w });
    }
    // carry the source total exactly rather than re-summing merged weights
    out.total_mass = measure.total_mass;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn point_mass(p: Vec<f64>) -> DiscreteMeasure {
        DiscreteMeasure::new(p.len(), vec![Atom { point: p, weight: 1.0 }]).unwrap()
    }

    #[test]
    fn maximal_function_examples() {
        let s = RadiusSchedule::default();
        let m = point_mass(vec![0.0]);
        let v = maximal_function(&m, &[1.0], &s).unwrap();
        assert_eq!(v.value, 0.5);
        assert_eq!(v.radius, 1.0);
        let v = maximal_function(&m, &[0.0], &s).unwrap();
        assert!(v.unbounded && v.value.is_infinite());

        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let sq = DiscreteMeasure::new(2, corners.iter().map(|c| Atom { point: c.to_vec(), weight: 0.25 }).collect()).unwrap();
        let v = maximal_function(&sq, &[0.5, 0.5], &s).unwrap();
        assert!((v.value - 2.0 / PI).abs() < 1e-15);
        assert!((v.radius - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_measure_is_zero() {
        let v = maximal_function(&DiscreteMeasure::empty(3), &[0.0; 3], &RadiusSchedule::default()).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn brute_force_radius_sweep_agrees() {
        let atoms: Vec<Atom> = (0..7)
            .map(|k| {
                let t = k as f64 * 0.9;
                Atom { point: vec![t.cos() * (1.0 + 0.1 * k as f64), t.sin()], weight: 0.1 + 0.05 * k as f64 }
            })
            .collect();
        let m = DiscreteMeasure::new(2, atoms).unwrap();
        let x = [0.2, -0.1];
        let exact = maximal_function(&m, &x, &RadiusSchedule::default()).unwrap().value;
        // independent oracle: a fine scan over radii never exceeds the exact sup
        // and comes within the scan resolution of it
        let mut scan: f64 = 0.0;
        for i in 1..200_000 {
            let r = i as f64 * 2e-5;
            scan = scan.max(m.ball_mass(&x, r) / (PI * r * r));
        }
        assert!(scan <= exact * (1.0 + 1e-12));
        assert!(scan >= exact * (1.0 - 1e-3));
    }

    #[test]
    fn pushforward_examples() {
        let m = DiscreteMeasure::new(1, vec![Atom { point: vec![0.0], weight: 1.0 }, Atom { point: vec![1.0], weight: 1.0 }]).unwrap();
        let id = pushforward(&m, |x| Ok(x.to_vec())).unwrap();
        assert_eq!(id, m);
        let c = pushforward(&m, |_| Ok(vec![3.0])).unwrap();
        assert_eq!(c.atoms().len(), 1);
        assert_eq!(c.atoms()[0].weight, 2.0);
        let d = pushforward(&m, |x| Ok(vec![2.0 * x[0]])).unwrap();
        assert_eq!(d.atoms()[1].point, vec![2.0]);
        assert_eq!(d.total_mass(), 2.0);
        assert!(pushforward(&m, |_| Err(Error::InvalidArgument("boom".into()))).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let mut m = DiscreteMeasure::empty(1);
        assert!(m.push(vec![0.0], 0.0).is_err());
        assert!(m.push(vec![0.0], -1.0).is_err());
        assert!(m.push(vec![0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "x,y,w\n0,0,0.5\n1,2,1.5\n";
        let m = DiscreteMeasure::from_csv(text.as_bytes()).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.total_mass(), 2.0);
        let mut buf = Vec::new();
        m.to_csv(&mut buf).unwrap();
        assert_eq!(DiscreteMeasure::from_csv(buf.as_slice()).unwrap(), m);
        assert!(DiscreteMeasure::from_csv("0,0,-1\n".as_bytes()).is_err());
        assert!(DiscreteMeasure::from_csv("1,2\n3\n".as_bytes()).is_err());
    }
}

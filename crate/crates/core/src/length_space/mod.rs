//! Length and essential length distances on polyhedral surfaces, the
//! shortcut sphere, the zigzag surface and the map diagnostic.

pub mod diagnostic;
pub mod shortcut;
pub mod steiner;
pub mod surface;
pub mod zigzag;

pub use diagnostic::*;
pub use shortcut::*;
pub use steiner::*;
pub use surface::*;
pub use zigzag::*;

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One row of a distance table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceRow {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub value: f64,
    pub level: u32,
}

/// Writes `source,target,value,level` rows; points are space-separated
/// coordinates.
pub fn write_distance_csv<W: Write>(w: W, rows: &[DistanceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["source", "target", "value", "level"])?;
    let fmt = |p: &[f64]| p.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" ");
    for r in rows {
        out.write_record([fmt(&r.source), fmt(&r.target), format!("{}", r.value), r.level.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

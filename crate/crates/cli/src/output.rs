use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::path::Path;

/// Errors by exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("computation failed: {0}")]
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Computation(_) => 4,
        }
    }
}

/// Exit code when a run finishes but a hard invariant failed.
pub const EXIT_INVARIANT: i32 = 5;

impl From<finsler_core::Error> for CliError {
    fn from(e: finsler_core::Error) -> Self {
        use finsler_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Parse(_) | E::MemoryBudget { .. } => CliError::Config(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Computation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// What a command produces before it is wrapped in the envelope.
#[derive(Debug, Default)]
pub struct Run {
    pub results: Value,
    pub warnings: Vec<String>,
    /// Hard invariant violations; any entry makes the exit code nonzero.
    pub violations: Vec<String>,
    /// CSV tables as (file stem, bytes).
    pub tables: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Serialize)]
pub struct ResultEnvelope {
    pub command: String,
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub results: Value,
    pub warnings: Vec<String>,
    pub violations: Vec<String>,
    /// Excluded from determinism comparisons.
    pub wall_time_s: f64,
}

pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_outputs(dir: &Path, envelope: &ResultEnvelope, tables: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    fs::create_dir_all(dir.join("tables"))?;
    for (name, bytes) in tables {
        write_atomic(&dir.join("tables").join(format!("{name}.csv")), bytes)?;
    }
    let json = serde_json::to_vec_pretty(envelope).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("result.json"), &json)
}

//! `finsler`: command-line experiments on Finsler volumes, rectifiable sets
//! and length spaces.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::CounterexampleName;
use config::{ExperimentConfig, SCHEMA_VERSION};
use output::{write_outputs, CliError, ResultEnvelope, Run, EXIT_INVARIANT};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "finsler", version, about = "Finsler volume and length-space experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for result.json and tables/.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steiner refinement level for graph distances.
    #[arg(long)]
    level: Option<u32>,
    /// Print the result envelope to stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Jacobians of norms under each volume definition.
    Jacobian(Common),
    /// Rigidity verdicts for norms.
    Rigidity(Common),
    /// Area formula residuals under grid refinement.
    AreaCheck(Common),
    /// Graph and essential distances on a polyhedral surface.
    Geodesic(Common),
    /// Certificates for the counterexamples.
    Counterexample {
        #[arg(value_enum)]
        name: CounterexampleName,
        #[command(flatten)]
        common: Common,
    },
    /// Volume and distance diagnostic for a map.
    DiagnoseMap(Common),
    /// Maximal function of a discrete measure.
    Maximal(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Jacobian(_) => "jacobian",
            Command::Rigidity(_) => "rigidity",
            Command::AreaCheck(_) => "area-check",
            Command::Geodesic(_) => "geodesic",
            Command::Counterexample { .. } => "counterexample",
            Command::DiagnoseMap(_) => "diagnose-map",
            Command::Maximal(_) => "maximal",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Jacobian(c)
            | Command::Rigidity(c)
            | Command::AreaCheck(c)
            | Command::Geodesic(c)
            | Command::DiagnoseMap(c)
            | Command::Maximal(c) => c,
            Command::Counterexample { common, .. } => common,
        }
    }
}

fn load_config(common: &Common, command: &str) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if cfg.schema != SCHEMA_VERSION {
        return Err(CliError::Config(format!("unsupported schema {} (expected {SCHEMA_VERSION})", cfg.schema)));
    }
    if let Some(c) = &cfg.command {
        if c != command {
            return Err(CliError::Config(format!("config is for command `{c}`, not `{command}`")));
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(level) = common.level {
        cfg.geodesic.levels = vec![level];
        cfg.diagnose_map.level = level;
        cfg.counterexample.zigzag_levels = vec![level.saturating_sub(1), level];
    }
    let seed = cfg.seed.unwrap_or(finsler_core::sampling::DEFAULT_SEED);
    cfg.seed = Some(seed);
    cfg.jacobian.settings.seed = seed;
    cfg.rigidity.settings.seed = seed;
    cfg.diagnose_map.settings.jacobian.seed = seed;
    cfg.command = Some(command.to_string());
    Ok(cfg)
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<Run, CliError> {
    let seed = cfg.seed.unwrap_or_default();
    match cmd {
        Command::Jacobian(_) => commands::cmd_jacobian(&cfg.jacobian),
        Command::Rigidity(_) => commands::cmd_rigidity(&cfg.rigidity),
        Command::AreaCheck(_) => commands::cmd_area_check(&cfg.area_check),
        Command::Geodesic(_) => commands::cmd_geodesic(&cfg.geodesic),
        Command::Counterexample { name, .. } => commands::cmd_counterexample(*name, &cfg.counterexample, seed),
        Command::DiagnoseMap(_) => commands::cmd_diagnose_map(&cfg.diagnose_map, seed),
        Command::Maximal(_) => commands::cmd_maximal(&cfg.maximal),
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let common = cli.command.common();
    let cfg = load_config(common, cli.command.name())?;
    let run = dispatch(&cli.command, &cfg)?;
    let envelope = ResultEnvelope {
        command: cli.command.name().to_string(),
        schema: SCHEMA_VERSION,
        config_hash: config_hash(&cfg),
        seed: cfg.seed.unwrap_or_default(),
        results: run.results,
        warnings: run.warnings,
        violations: run.violations,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    for w in &envelope.warnings {
        eprintln!("warning: {w}");
    }
    for v in &envelope.violations {
        eprintln!("invariant violated: {v}");
    }
    if let Some(dir) = &common.out {
        write_outputs(dir, &envelope, &run.tables)?;
    }
    if common.json {
        let text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Io(e.to_string()))?;
        // a closed pipe (e.g. `| head`) is not an error for the run
        let _ = writeln!(std::io::stdout().lock(), "{text}");
    }
    Ok(if envelope.violations.is_empty() { 0 } else { EXIT_INVARIANT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

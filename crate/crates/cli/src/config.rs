//! Experiment manifests: a flat `key = value` file plus command-line
//! overrides. Flags always win over file values; unknown keys are errors
//! so a typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use cepre_core::solver::InitStrategy;
use cepre_core::{Error, ExperimentConfig, Method, Result};
use clap::Args;

/// Flags shared by the experiment-driving subcommands. Every field mirrors
/// a manifest key; `None` means "keep the file value or the default".
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment manifest: one `key = value` per line, `#` starts a comment.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed for channels, symbols, noise, and solver starts.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Independent channel realizations.
    #[arg(long)]
    pub trials: Option<usize>,

    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', value_name = "DB,...")]
    pub snr: Option<Vec<f64>>,

    /// Comma-separated methods: zf, ce-zf, mui-min, pg, fpg.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, value_name = "NAME,...")]
    pub methods: Option<Vec<Method>>,

    /// Single-antenna users.
    #[arg(long = "K")]
    pub users: Option<usize>,

    /// Slots per transmission block.
    #[arg(long = "T")]
    pub slots: Option<usize>,

    /// Constellation half-levels: 1 = QPSK, 2 = 16-QAM, 4 = 64-QAM.
    #[arg(long = "L")]
    pub half_levels: Option<usize>,

    /// Temperature of the smoothed margin surrogate.
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Stopping tolerance for the iterative methods.
    #[arg(long)]
    pub tol: Option<f64>,

    /// Iteration budget for the iterative methods.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,

    /// Momentum acceleration for the margin solver (`true` / `false`).
    #[arg(long)]
    pub accelerate: Option<bool>,

    /// Drop momentum and retry a plain step when the surrogate increases.
    #[arg(long)]
    pub restart: Option<bool>,

    /// Solver start: `random` or `ce-zf`.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitStrategy>,

    /// Worker threads for the trial loop (0 = default pool).
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn parse_method(s: &str) -> Result<Method> {
    s.parse()
}

pub fn parse_init(s: &str) -> Result<InitStrategy> {
    match s {
        "random" => Ok(InitStrategy::RandomPhase),
        "ce-zf" => Ok(InitStrategy::CeZfWarmStart),
        other => Err(Error::Parse(format!(
            "unknown init strategy '{other}' (expected random or ce-zf)"
        ))),
    }
}

/// A fully resolved invocation: the experiment plus where its CSV goes.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub experiment: ExperimentConfig,
    pub out: Option<PathBuf>,
}

/// Defaults, then the manifest file if given, then flag overrides.
pub fn build(common: &CommonArgs) -> Result<Manifest> {
    let mut cfg = ExperimentConfig::default();
    let mut out = None;
    if let Some(path) = &common.config {
        apply_file(&mut cfg, &mut out, path)?;
    }
    apply_flags(&mut cfg, common);
    Ok(Manifest { experiment: cfg, out })
}

fn apply_file(cfg: &mut ExperimentConfig, out: &mut Option<PathBuf>, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(format!("cannot read config file '{}': {e}", path.display()))
    })?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!(
                "{}:{}: expected `key = value`, got '{}'",
                path.display(),
                idx + 1,
                raw.trim()
            ))
        })?;
        set_key(cfg, out, key.trim(), value.trim())
            .map_err(|msg| Error::config(format!("{}:{}: {msg}", path.display(), idx + 1)))?;
    }
    Ok(())
}

fn set_key(
    cfg: &mut ExperimentConfig,
    out: &mut Option<PathBuf>,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    match key {
        "N" => cfg.antennas = int(key, value)?,
        "K" => cfg.users = int(key, value)?,
        "T" => cfg.slots = int(key, value)?,
        "L" => cfg.half_levels = int(key, value)?,
        "P" => cfg.power = float(key, value)?,
        "snr" => {
            cfg.snr_db = value
                .split(',')
                .map(|v| float("snr", v.trim()))
                .collect::<std::result::Result<_, _>>()?
        }
        "methods" => {
            cfg.methods = value
                .split(',')
                .map(|v| v.trim().parse::<Method>().map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        "trials" => cfg.trials = int(key, value)?,
        "seed" => cfg.seed = int(key, value)?,
        "sigma" => cfg.solver.sigma = float(key, value)?,
        "tol" => {
            let v = float(key, value)?;
            cfg.solver.tol = v;
            cfg.mui.tol = v;
        }
        "max_iters" => {
            let v = int(key, value)?;
            cfg.solver.max_iters = v;
            cfg.mui.max_iters = v;
        }
        "accelerate" => cfg.solver.accelerate = boolean(key, value)?,
        "restart" => cfg.solver.restart_on_increase = boolean(key, value)?,
        "init" => cfg.solver.init = parse_init(value).map_err(|e| e.to_string())?,
        "workers" => cfg.workers = int(key, value)?,
        "measure_runtime" => cfg.measure_runtime = boolean(key, value)?,
        "out" => *out = Some(PathBuf::from(value)),
        other => return Err(format!("unknown key '{other}'")),
    }
    Ok(())
}

fn int<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("key '{key}': invalid integer '{value}'"))
}

fn float(key: &str, value: &str) -> std::result::Result<f64, String> {
    value.parse().map_err(|_| format!("key '{key}': invalid number '{value}'"))
}

fn boolean(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("key '{key}': expected true or false, got '{other}'")),
    }
}

fn apply_flags(cfg: &mut ExperimentConfig, c: &CommonArgs) {
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = &c.snr {
        cfg.snr_db = v.clone();
    }
    if let Some(v) = &c.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = c.users {
        cfg.users = v;
    }
    if let Some(v) = c.slots {
        cfg.slots = v;
    }
    if let Some(v) = c.half_levels {
        cfg.half_levels = v;
    }
    if let Some(v) = c.sigma {
        cfg.solver.sigma = v;
    }
    if let Some(v) = c.tol {
        cfg.solver.tol = v;
        cfg.mui.tol = v;
    }
    if let Some(v) = c.max_iters {
        cfg.solver.max_iters = v;
        cfg.mui.max_iters = v;
    }
    if let Some(v) = c.accelerate {
        cfg.solver.accelerate = v;
    }
    if let Some(v) = c.restart {
        cfg.solver.restart_on_increase = v;
    }
    if let Some(v) = c.init {
        cfg.solver.init = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
}

//! Monte-Carlo experiment orchestration: SNR sweeps over random channels,
//! runtime benchmarking, and CSV reporting.
//!
//! Determinism contract: a sweep is a pure function of its config. Every
//! trial derives its own RNG streams from (master seed, trial index), the
//! channel and symbol block are shared by all methods within a trial, and
//! the per-SNR noise block is shared by all methods (common random
//! numbers), so method comparisons are paired. Aggregation always reduces
//! in trial order, which makes the output byte-identical for any worker
//! count. Wall-clock measurement is off by default so the runtime column
//! does not break byte-level reproducibility; the bench entry point always
//! times.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{ce_zf_precode, mui_min_precode, zf_precode, MuiMinConfig, PrecodeOutput};
use crate::channel::{lift, rayleigh_channel, stack_real, Channel, SymbolBlock};
use crate::constellation::QamConstellation;
use crate::error::{Error, Result};
use crate::metrics::{count_block_errors, noise_variance, ErrorCounts};
use crate::objective::exact_objective;
use crate::rng::{mix_seed, stream_rng};
use crate::solver::{solve, InitStrategy, SolverConfig};

/// The precoders the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Zf,
    CeZf,
    MuiMin,
    Pg,
    Fpg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Zf => "zf",
            Method::CeZf => "ce-zf",
            Method::MuiMin => "mui-min",
            Method::Pg => "pg",
            Method::Fpg => "fpg",
        }
    }

    pub fn all() -> [Method; 5] {
        [Method::Zf, Method::CeZf, Method::MuiMin, Method::Pg, Method::Fpg]
    }

    /// Whether the method needs the channel rows to be invertible
    /// (at least as many antennas as users).
    fn needs_full_rank(self) -> bool {
        matches!(self, Method::Zf | Method::CeZf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zf" => Ok(Method::Zf),
            "ce-zf" => Ok(Method::CeZf),
            "mui-min" => Ok(Method::MuiMin),
            "pg" => Ok(Method::Pg),
            "fpg" => Ok(Method::Fpg),
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected zf, ce-zf, mui-min, pg, or fpg)"
            ))),
        }
    }
}

/// Full description of one sweep: sizes, constellation, SNR grid, methods,
/// trial count, seeding, and solver settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Transmit antennas N.
    pub antennas: usize,
    /// Single-antenna users K.
    pub users: usize,
    /// Slots per transmission block T.
    pub slots: usize,
    /// Constellation size parameter (amplitude levels per half-axis).
    pub half_levels: usize,
    /// Total transmit power P.
    pub power: f64,
    /// SNR grid in dB (transmit power over noise variance).
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    /// Independent channel realizations.
    pub trials: usize,
    pub seed: u64,
    /// Settings for the margin solvers; `accelerate` is ignored here
    /// because the method choice decides it.
    pub solver: SolverConfig,
    /// Settings for the interference-minimizing baseline.
    pub mui: MuiMinConfig,
    /// Worker threads for the trial loop; 0 uses the global default pool.
    pub workers: usize,
    /// Time each precoder and report mean seconds. Off by default: timing
    /// breaks byte-level rerun reproducibility of the CSV.
    pub measure_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            antennas: 64,
            users: 8,
            slots: 10,
            half_levels: 2,
            power: 1.0,
            snr_db: vec![20.0, 25.0, 30.0],
            methods: Method::all().to_vec(),
            trials: 100,
            seed: 0,
            solver: SolverConfig { record_trace: false, ..SolverConfig::default() },
            mui: MuiMinConfig::default(),
            workers: 0,
            measure_runtime: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.users == 0 || self.slots == 0 {
            return Err(Error::config("N, K, and T must all be positive"));
        }
        QamConstellation::new(self.half_levels)?;
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::config(format!("power must be positive, got {}", self.power)));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("the SNR list must not be empty"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("every SNR point must be finite"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("the method list must not be empty"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config(format!("method {m} listed more than once")));
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        let needs_rank = self.methods.iter().any(|m| m.needs_full_rank())
            || (self.methods.iter().any(|m| matches!(m, Method::Pg | Method::Fpg))
                && self.solver.init == InitStrategy::CeZfWarmStart);
        if needs_rank && self.antennas < self.users {
            return Err(Error::config(format!(
                "zero-forcing-based methods need N ≥ K, got N={} K={}",
                self.antennas, self.users
            )));
        }
        self.solver.validate()?;
        self.mui.validate()?;
        Ok(())
    }
}

/// One aggregated result cell: a method at one SNR point.
#[derive(Debug, Clone)]
pub struct BerRecord {
    pub method: Method,
    pub antennas: usize,
    pub users: usize,
    pub half_levels: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub avg_ber: f64,
    pub worst_user_ser: f64,
    pub ci_halfwidth: f64,
    pub mean_iters: f64,
    pub mean_runtime_s: f64,
    pub mean_final_exact_obj: f64,
}

struct MethodOutcome {
    counts: Vec<ErrorCounts>,
    iterations: usize,
    runtime_s: f64,
    exact_obj: f64,
}

struct TrialOutcome {
    per_method: Vec<MethodOutcome>,
}

/// Complex Gaussian noise block with total per-sample variance `sigma_n²`.
fn draw_noise(users: usize, slots: usize, sigma_n: f64, rng: &mut impl Rng) -> Array2<Complex64> {
    let scale = sigma_n * std::f64::consts::FRAC_1_SQRT_2;
    let mut w = Array2::zeros((users, slots));
    for i in 0..users {
        for t in 0..slots {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            w[(i, t)] = Complex64::new(re * scale, im * scale);
        }
    }
    w
}

/// Run one method on one instance. Returns the transmit block with its
/// receiver gains plus the exact margin objective (NaN where no shared
/// gain exists to evaluate it).
fn precode_one(
    method: Method,
    cfg: &ExperimentConfig,
    h: &Channel,
    block: &SymbolBlock,
    solver_seed: u64,
) -> Result<(PrecodeOutput, f64)> {
    let (out, exact) = match method {
        Method::Zf => (zf_precode(h, block, cfg.power)?, f64::NAN),
        Method::CeZf => {
            let out = ce_zf_precode(h, block, cfg.power)?;
            let exact = shared_gain_objective(h, block, &out)?;
            (out, exact)
        }
        Method::MuiMin => {
            let mcfg = MuiMinConfig { seed: solver_seed, ..cfg.mui.clone() };
            let out = mui_min_precode(h, block, cfg.power, &mcfg)?;
            let exact = shared_gain_objective(h, block, &out)?;
            (out, exact)
        }
        Method::Pg | Method::Fpg => {
            let scfg = SolverConfig {
                accelerate: method == Method::Fpg,
                seed: solver_seed,
                record_trace: false,
                ..cfg.solver.clone()
            };
            let report = solve(h, block, cfg.power, &scfg)?;
            let out = PrecodeOutput {
                x: report.xbar.to_complex(),
                gains: vec![report.d; block.slots()],
                iterations: report.iterations,
            };
            (out, report.final_exact)
        }
    };
    // The interference-minimizing alternation can legitimately end in its
    // zero-gain attractor; that outcome belongs in the error counts, not in
    // a crash. For every other method a nonpositive gain means the run is
    // broken, so fail loudly.
    if method != Method::MuiMin {
        for g in &out.gains {
            if !(*g > 0.0) {
                return Err(Error::domain(format!(
                    "{method} produced a nonpositive receiver gain {g}"
                )));
            }
        }
    }
    Ok((out, exact))
}

fn shared_gain_objective(h: &Channel, block: &SymbolBlock, out: &PrecodeOutput) -> Result<f64> {
    let d = out
        .shared_gain()
        .ok_or_else(|| Error::domain("expected one shared receiver gain across the block"))?;
    let xbar = stack_real(&out.x);
    Ok(exact_objective(&lift(h), block.stacked(), xbar.view(), d))
}

fn run_trial(
    cfg: &ExperimentConfig,
    constellation: &QamConstellation,
    trial: u64,
) -> Result<TrialOutcome> {
    let trial_master = mix_seed(cfg.seed, trial);
    let mut channel_rng = stream_rng(trial_master, 0);
    let h = rayleigh_channel(cfg.users, cfg.antennas, &mut channel_rng)?;
    let mut symbol_rng = stream_rng(trial_master, 1);
    let block = SymbolBlock::draw_uniform(constellation, cfg.users, cfg.slots, &mut symbol_rng)?;
    let solver_seed = mix_seed(trial_master, 2);

    // Precode once per method; the designs do not depend on the noise
    // level, so one solve serves every SNR point.
    let mut designs = Vec::with_capacity(cfg.methods.len());
    for m in &cfg.methods {
        let start = Instant::now();
        let (out, exact) = precode_one(*m, cfg, &h, &block, solver_seed)
            .map_err(|e| Error::domain(format!("trial {trial}: {e}")))?;
        let runtime_s = if cfg.measure_runtime {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let noiseless = h.matrix().dot(&out.x);
        designs.push((out, exact, runtime_s, noiseless));
    }

    let mut per_method: Vec<MethodOutcome> = designs
        .iter()
        .map(|(out, exact, runtime_s, _)| MethodOutcome {
            counts: Vec::with_capacity(cfg.snr_db.len()),
            iterations: out.iterations,
            runtime_s: *runtime_s,
            exact_obj: *exact,
        })
        .collect();

    for (si, snr) in cfg.snr_db.iter().enumerate() {
        let sigma_n = noise_variance(cfg.power, *snr).sqrt();
        let mut noise_rng = stream_rng(trial_master, 3 + si as u64);
        let w = draw_noise(cfg.users, cfg.slots, sigma_n, &mut noise_rng);
        for (mi, (out, _, _, noiseless)) in designs.iter().enumerate() {
            let mut counts = ErrorCounts::new(cfg.users);
            if out.gains.iter().all(|g| *g > 0.0) {
                let y = noiseless + &w;
                count_block_errors(y.view(), &out.gains, &block, constellation, &mut counts)?;
            } else {
                // No positive gain, no decision rule: the block is lost.
                counts.charge_undecodable_block(cfg.slots, constellation.bits_per_symbol());
            }
            per_method[mi].counts.push(counts);
        }
    }
    Ok(TrialOutcome { per_method })
}

/// Run the full sweep and aggregate one record per (method, SNR) cell,
/// methods outermost in their configured order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let constellation = QamConstellation::new(cfg.half_levels)?;

    let run = || -> Result<Vec<TrialOutcome>> {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| run_trial(cfg, &constellation, trial))
            .collect()
    };
    let trials = if cfg.workers == 0 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("could not build a {}-thread pool: {e}", cfg.workers)))?;
        pool.install(run)?
    };

    let mut records = Vec::with_capacity(cfg.methods.len() * cfg.snr_db.len());
    for (mi, m) in cfg.methods.iter().enumerate() {
        let inv_trials = 1.0 / cfg.trials as f64;
        let mut iters_sum = 0.0;
        let mut runtime_sum = 0.0;
        let mut obj_sum = 0.0;
        for t in &trials {
            iters_sum += t.per_method[mi].iterations as f64;
            runtime_sum += t.per_method[mi].runtime_s;
            obj_sum += t.per_method[mi].exact_obj;
        }
        for (si, snr) in cfg.snr_db.iter().enumerate() {
            let mut counts = ErrorCounts::new(cfg.users);
            for t in &trials {
                counts.merge(&t.per_method[mi].counts[si]);
            }
            records.push(BerRecord {
                method: *m,
                antennas: cfg.antennas,
                users: cfg.users,
                half_levels: cfg.half_levels,
                snr_db: *snr,
                trials: cfg.trials,
                avg_ber: counts.avg_ber(),
                worst_user_ser: counts.worst_user_ser(),
                ci_halfwidth: counts.ber_ci_halfwidth(),
                mean_iters: iters_sum * inv_trials,
                mean_runtime_s: runtime_sum * inv_trials,
                mean_final_exact_obj: obj_sum * inv_trials,
            });
        }
    }
    Ok(records)
}

/// One runtime-bench cell: a method at one antenna count.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub method: Method,
    pub antennas: usize,
    pub mean_runtime_s: f64,
    pub median_iters: f64,
}

/// Time each method over `cfg.trials` fresh instances at each antenna
/// count. Always wall-clock timed, sequential so measurements do not
/// contend, with one untimed warm-up instance per cell.
pub fn run_runtime_bench(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(Error::config("the size list must not be empty"));
    }
    let needs_rank = cfg.methods.iter().any(|m| m.needs_full_rank())
        || cfg.solver.init == InitStrategy::CeZfWarmStart;
    for &n in sizes {
        if n == 0 {
            return Err(Error::config("antenna counts must be positive"));
        }
        if needs_rank && n < cfg.users {
            return Err(Error::config(format!(
                "zero-forcing-based methods need N ≥ K, got N={n} K={}",
                cfg.users
            )));
        }
    }
    let constellation = QamConstellation::new(cfg.half_levels)?;
    let mut records = Vec::with_capacity(cfg.methods.len() * sizes.len());
    for m in &cfg.methods {
        for &n in sizes {
            let mut times = Vec::with_capacity(cfg.trials);
            let mut iters = Vec::with_capacity(cfg.trials);
            for r in 0..=cfg.trials as u64 {
                let trial_master = mix_seed(mix_seed(cfg.seed, n as u64), r);
                let mut channel_rng = stream_rng(trial_master, 0);
                let h = rayleigh_channel(cfg.users, n, &mut channel_rng)?;
                let mut symbol_rng = stream_rng(trial_master, 1);
                let block =
                    SymbolBlock::draw_uniform(&constellation, cfg.users, cfg.slots, &mut symbol_rng)?;
                let solver_seed = mix_seed(trial_master, 2);
                let start = Instant::now();
                let (out, _) = precode_one(*m, cfg, &h, &block, solver_seed)?;
                let elapsed = start.elapsed().as_secs_f64();
                if r > 0 {
                    times.push(elapsed);
                    iters.push(out.iterations);
                }
            }
            iters.sort_unstable();
            let mid = iters.len() / 2;
            let median_iters = if iters.len() % 2 == 1 {
                iters[mid] as f64
            } else {
                (iters[mid - 1] as f64 + iters[mid] as f64) / 2.0
            };
            records.push(BenchRecord {
                method: *m,
                antennas: n,
                mean_runtime_s: times.iter().sum::<f64>() / times.len() as f64,
                median_iters,
            });
        }
    }
    Ok(records)
}

/// Format with 8 significant digits: plain decimal notation in a readable
/// magnitude range, scientific outside it, trailing zeros trimmed, and
/// `nan` for missing values. Deterministic and locale-free, so equal
/// records always serialize to identical bytes.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    let sci = format!("{x:.7e}");
    let (mantissa, exponent) = sci.split_once('e').expect("float in scientific notation");
    let exponent: i32 = exponent.parse().expect("decimal exponent");
    if (-4..=7).contains(&exponent) {
        let fixed = format!("{x:.*}", (7 - exponent) as usize);
        let trimmed = fixed.trim_end_matches('0').trim_end_matches('.');
        if trimmed == "-0" {
            "0".to_string()
        } else {
            trimmed.to_string()
        }
    } else {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

pub const CSV_HEADER: &str = "method,N,K,L,snr_db,trials,avg_ber,worst_user_ser,ci_halfwidth,mean_iters,mean_runtime_s,mean_final_exact_obj";

/// Serialize records to CSV, header first, one line per record.
pub fn csv_string(records: &[BerRecord]) -> String {
    use std::fmt::Write;
    let mut out = String::with_capacity(96 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.antennas,
            r.users,
            r.half_levels,
            fmt_sig(r.snr_db),
            r.trials,
            fmt_sig(r.avg_ber),
            fmt_sig(r.worst_user_ser),
            fmt_sig(r.ci_halfwidth),
            fmt_sig(r.mean_iters),
            fmt_sig(r.mean_runtime_s),
            fmt_sig(r.mean_final_exact_obj),
        )
        .expect("writing to a string cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            antennas: 8,
            users: 2,
            slots: 3,
            half_levels: 1,
            snr_db: vec![8.0, 12.0],
            methods: vec![Method::Zf, Method::CeZf, Method::Pg],
            trials: 6,
            seed: 42,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::all() {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("zf2".parse::<Method>().is_err());
        assert!("ZF".parse::<Method>().is_err());
        assert_eq!(Method::CeZf.to_string(), "ce-zf");
        assert_eq!(Method::MuiMin.to_string(), "mui-min");
    }

    #[test]
    fn config_validation_catches_bad_setups() {
        let base = small_config();
        let cases: Vec<ExperimentConfig> = vec![
            ExperimentConfig { antennas: 0, ..base.clone() },
            ExperimentConfig { half_levels: 3, ..base.clone() },
            ExperimentConfig { power: 0.0, ..base.clone() },
            ExperimentConfig { snr_db: vec![], ..base.clone() },
            ExperimentConfig { snr_db: vec![f64::NAN], ..base.clone() },
            ExperimentConfig { methods: vec![], ..base.clone() },
            ExperimentConfig { methods: vec![Method::Pg, Method::Pg], ..base.clone() },
            ExperimentConfig { trials: 0, ..base.clone() },
            // Zero-forcing with more users than antennas fails up front.
            ExperimentConfig { antennas: 2, users: 4, ..base.clone() },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err());
        }
        assert!(base.validate().is_ok());
        // Without rank-dependent methods an underdetermined setup is fine.
        let fat = ExperimentConfig {
            antennas: 2,
            users: 4,
            methods: vec![Method::MuiMin, Method::Fpg],
            ..base
        };
        assert!(fat.validate().is_ok());
    }

    #[test]
    fn single_method_sweep_bookkeeping() {
        let cfg = ExperimentConfig {
            antennas: 2,
            users: 2,
            slots: 3,
            half_levels: 1,
            snr_db: vec![10.0],
            methods: vec![Method::Zf],
            trials: 10,
            seed: 7,
            ..ExperimentConfig::default()
        };
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.method, Method::Zf);
        assert_eq!(r.trials, 10);
        assert_eq!(r.mean_iters, 0.0);
        assert_eq!(r.mean_runtime_s, 0.0);
        assert!(r.mean_final_exact_obj.is_nan());
        assert!((0.0..=1.0).contains(&r.avg_ber));
        assert!((0.0..=1.0).contains(&r.worst_user_ser));
        assert!(r.ci_halfwidth.is_finite());
    }

    #[test]
    fn sweep_is_byte_identical_across_runs_and_worker_counts() {
        let base = small_config();
        let one = ExperimentConfig { workers: 1, ..base.clone() };
        let four = ExperimentConfig { workers: 4, ..base.clone() };
        let a = csv_string(&run_sweep(&one).unwrap());
        let b = csv_string(&run_sweep(&one).unwrap());
        let c = csv_string(&run_sweep(&four).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(a.starts_with(
            "method,N,K,L,snr_db,trials,avg_ber,worst_user_ser,ci_halfwidth,mean_iters,mean_runtime_s,mean_final_exact_obj\n"
        ));
        // One row per (method, snr), methods outermost.
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("zf,8,2,1,8,6,"));
        assert!(lines[2].starts_with("zf,8,2,1,12,6,"));
        assert!(lines[3].starts_with("ce-zf,8,2,1,8,6,"));
        assert!(lines[5].starts_with("pg,8,2,1,8,6,"));
    }

    #[test]
    fn method_rows_do_not_depend_on_which_other_methods_run() {
        let solo = ExperimentConfig {
            methods: vec![Method::Zf],
            ..small_config()
        };
        let both = ExperimentConfig {
            methods: vec![Method::Zf, Method::Fpg],
            ..small_config()
        };
        let solo_rows = csv_string(&run_sweep(&solo).unwrap());
        let both_rows = csv_string(&run_sweep(&both).unwrap());
        let solo_zf: Vec<&str> = solo_rows.lines().skip(1).collect();
        let both_zf: Vec<&str> = both_rows
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("zf,"))
            .collect();
        assert_eq!(solo_zf, both_zf);
    }

    #[test]
    fn converged_design_is_error_free_when_noise_vanishes() {
        let cfg = ExperimentConfig {
            antennas: 16,
            users: 2,
            slots: 5,
            half_levels: 2,
            snr_db: vec![300.0],
            methods: vec![Method::Fpg],
            trials: 5,
            seed: 3,
            ..ExperimentConfig::default()
        };
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records[0].avg_ber, 0.0);
        assert_eq!(records[0].worst_user_ser, 0.0);
        assert!(records[0].mean_final_exact_obj < 0.0);
    }

    #[test]
    fn runtime_column_is_zero_unless_measurement_is_enabled() {
        let cfg = ExperimentConfig {
            methods: vec![Method::CeZf],
            ..small_config()
        };
        let silent = run_sweep(&cfg).unwrap();
        assert!(silent.iter().all(|r| r.mean_runtime_s == 0.0));
        let timed_cfg = ExperimentConfig { measure_runtime: true, ..cfg };
        let timed = run_sweep(&timed_cfg).unwrap();
        assert!(timed.iter().all(|r| r.mean_runtime_s > 0.0));
    }

    #[test]
    fn bench_reports_one_cell_per_method_and_size() {
        let cfg = ExperimentConfig {
            antennas: 8,
            users: 2,
            slots: 3,
            half_levels: 1,
            snr_db: vec![10.0],
            methods: vec![Method::Pg],
            trials: 3,
            seed: 11,
            ..ExperimentConfig::default()
        };
        let table = run_runtime_bench(&cfg, &[8, 12]).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].antennas, 8);
        assert_eq!(table[1].antennas, 12);
        for cell in &table {
            assert!(cell.mean_runtime_s > 0.0);
            assert!(cell.median_iters >= 1.0);
        }
        assert!(run_runtime_bench(&cfg, &[]).is_err());
        assert!(run_runtime_bench(&cfg, &[0]).is_err());
        let zf_cfg = ExperimentConfig { methods: vec![Method::Zf], ..cfg };
        assert!(run_runtime_bench(&zf_cfg, &[1]).is_err());
    }

    #[test]
    fn fmt_sig_frozen_strings() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(0.25), "0.25");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.33333333");
        assert_eq!(fmt_sig(2.5e-3), "0.0025");
        assert_eq!(fmt_sig(1.23456789e-5), "1.2345679e-5");
        assert_eq!(fmt_sig(123456789.0), "1.2345679e8");
        assert_eq!(fmt_sig(-1.5), "-1.5");
        assert_eq!(fmt_sig(20.0), "20");
        assert_eq!(fmt_sig(0.05), "0.05");
        assert_eq!(fmt_sig(1e8), "1e8");
        assert_eq!(fmt_sig(1e-4), "0.0001");
        assert_eq!(fmt_sig(f64::NAN), "nan");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_sig(0.9999999995), "1");
    }

    // Exact per-dimension decision analysis for the identity channel:
    // after gain normalization each coordinate is the sent amplitude plus
    // N(0, s²) noise, so every transition probability is a difference of
    // Gaussian tails at the decision boundaries. Validates the whole
    // receive-decide-count path against closed-form probabilities.
    #[test]
    fn zf_identity_channel_matches_transition_probability_oracle() {
        use crate::metrics::q_func;
        let users = 4;
        let slots = 5;
        let q = QamConstellation::new(2).unwrap();
        let eye = Array2::from_shape_fn((users, users), |(i, j)| {
            if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let h = Channel::new(eye).unwrap();
        let mut rng = stream_rng(77, 1);
        let block = SymbolBlock::draw_uniform(&q, users, slots, &mut rng).unwrap();
        let power = 1.0;
        let zf = zf_precode(&h, &block, power).unwrap();
        let sigma_n = noise_variance(power, 14.0).sqrt();

        // Per-dimension transition probabilities at noise std `s`.
        let levels: Vec<f64> = (0..4).map(|l| 2.0 * l as f64 - 3.0).collect();
        let cell = |target: f64, sent: f64, s: f64| -> f64 {
            let lo = if target <= -3.0 { f64::NEG_INFINITY } else { target - 1.0 };
            let hi = if target >= 3.0 { f64::INFINITY } else { target + 1.0 };
            let p_hi = if hi.is_infinite() { 0.0 } else { q_func((hi - sent) / s) };
            let p_lo = if lo.is_infinite() { 1.0 } else { q_func((lo - sent) / s) };
            p_lo - p_hi
        };

        // Expected symbol-error probability per (user, slot).
        let mut expected = Array2::<f64>::zeros((users, slots));
        for t in 0..slots {
            let s_dim = sigma_n / (std::f64::consts::SQRT_2 * zf.gains[t]);
            for i in 0..users {
                let sym = block.symbols()[(i, t)];
                let p_ok_re: f64 = cell(sym.re, sym.re, s_dim);
                let p_ok_im: f64 = cell(sym.im, sym.im, s_dim);
                expected[(i, t)] = 1.0 - p_ok_re * p_ok_im;
                // Sanity: probabilities decompose over the alphabet.
                let total: f64 = levels.iter().map(|&b| cell(b, sym.re, s_dim)).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }

        let draws = 4000usize;
        let noiseless = h.matrix().dot(&zf.x);
        let mut noise_rng = stream_rng(77, 2);
        let mut counts = ErrorCounts::new(users);
        for _ in 0..draws {
            let w = draw_noise(users, slots, sigma_n, &mut noise_rng);
            let y = &noiseless + &w;
            count_block_errors(y.view(), &zf.gains, &block, &q, &mut counts).unwrap();
        }
        let cells = (users * slots) as f64;
        let expected_ser: f64 = expected.iter().sum::<f64>() / cells;
        let empirical_ser = counts.avg_ser();
        // Exact standard error of the mean over independent cells.
        let var_sum: f64 = expected.iter().map(|p| p * (1.0 - p)).sum();
        let se = (var_sum / draws as f64).sqrt() / cells;
        assert!(
            (empirical_ser - expected_ser).abs() <= 3.5 * se,
            "empirical {empirical_ser} vs expected {expected_ser} (se {se})"
        );
        assert!(counts.symbol_errors > 0);
    }

    // Doubling the power budget by 4 scales every design by exactly 2 (a
    // power of two, so floating-point operations commute with the scaling)
    // and leaves noiseless decisions untouched.
    #[test]
    fn baseline_designs_scale_exactly_with_the_power_budget() {
        let mut rng = stream_rng(21, 5);
        let h = rayleigh_channel(3, 9, &mut rng).unwrap();
        let q = QamConstellation::new(2).unwrap();
        let block = SymbolBlock::draw_uniform(&q, 3, 4, &mut rng).unwrap();

        let zf1 = zf_precode(&h, &block, 1.0).unwrap();
        let zf4 = zf_precode(&h, &block, 4.0).unwrap();
        for (a, b) in zf1.x.iter().zip(zf4.x.iter()) {
            assert_eq!(b, &(a * 2.0));
        }
        for (g1, g4) in zf1.gains.iter().zip(zf4.gains.iter()) {
            assert_eq!(*g4, 2.0 * g1);
        }

        let ce1 = ce_zf_precode(&h, &block, 1.0).unwrap();
        let ce4 = ce_zf_precode(&h, &block, 4.0).unwrap();
        for (a, b) in ce1.x.iter().zip(ce4.x.iter()) {
            assert_eq!(b, &(a * 2.0));
        }
        assert_eq!(ce4.shared_gain().unwrap(), 2.0 * ce1.shared_gain().unwrap());

        let mui1 = MuiMinConfig { seed: 9, tol: 1e-6, ..MuiMinConfig::default() };
        // The residual energy is quadratic in the scale, so the stopping
        // threshold must scale by 4 to keep the trajectories congruent.
        let mui4 = MuiMinConfig { tol: 4e-6, ..mui1.clone() };
        let m1 = mui_min_precode(&h, &block, 1.0, &mui1).unwrap();
        let m4 = mui_min_precode(&h, &block, 4.0, &mui4).unwrap();
        assert_eq!(m1.iterations, m4.iterations);
        for (a, b) in m1.x.iter().zip(m4.x.iter()) {
            assert_eq!(b, &(a * 2.0));
        }
        assert_eq!(m4.shared_gain().unwrap(), 2.0 * m1.shared_gain().unwrap());
    }

    #[test]
    fn solver_designs_scale_exactly_when_temperature_scales_too() {
        let mut rng = stream_rng(22, 5);
        let h = rayleigh_channel(2, 8, &mut rng).unwrap();
        let q = QamConstellation::new(1).unwrap();
        let block = SymbolBlock::draw_uniform(&q, 2, 3, &mut rng).unwrap();
        for accelerate in [false, true] {
            let base = SolverConfig {
                accelerate,
                seed: 31,
                record_trace: false,
                ..SolverConfig::default()
            };
            // The margin objective is 1-homogeneous in (x, d), so scaling
            // power by 4, temperature and tolerance and initial step by 2
            // reproduces the run exactly, times two.
            let scaled = SolverConfig {
                sigma: 2.0 * base.sigma,
                tol: 2.0 * base.tol,
                gamma_init: 2.0 * base.gamma_init,
                ..base.clone()
            };
            let r1 = solve(&h, &block, 1.0, &base).unwrap();
            let r4 = solve(&h, &block, 4.0, &scaled).unwrap();
            assert_eq!(r1.iterations, r4.iterations, "accelerate={accelerate}");
            assert_eq!(r4.d, 2.0 * r1.d);
            for (a, b) in r1.xbar.stacked().iter().zip(r4.xbar.stacked().iter()) {
                assert_eq!(*b, 2.0 * a);
            }
            assert_eq!(r4.final_exact, 2.0 * r1.final_exact);
        }
    }
}

//! Projected-gradient solvers for the smoothed minimax margin design.
//!
//! The feasible set couples a nonnegative gain `d` with a constant-envelope
//! block: each antenna's (Re, Im) pair must sit on the circle of radius
//! sqrt(P/N). Projection onto that set is closed-form (rescale each pair,
//! clip `d` at zero), so a projected-gradient iteration with backtracking
//! line search is cheap. The accelerated variant adds momentum extrapolation
//! with the classic `beta` recursion; it is not monotone, but typically
//! converges in far fewer iterations.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::baselines;
use crate::channel::{lift, CEPoint, Channel, RealChannel, SymbolBlock};
use crate::error::{Error, Result};
use crate::objective::{DecisionPoint, Gradient, SmoothedObjective};

/// How the iterate is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Uniform random phase per antenna sample, gain from a least-squares
    /// fit of the resulting receive points.
    RandomPhase,
    /// Start from the envelope-projected zero-forcing solution.
    CeZfWarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Objective improvement stayed below `tol` for `stall_iters`
    /// consecutive iterations.
    Tolerance,
    /// Iteration budget exhausted.
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Log-sum-exp temperature of the surrogate objective.
    pub sigma: f64,
    /// Improvement threshold: an iteration whose |f_l − f_{l+1}| falls
    /// below this counts toward a stall.
    pub tol: f64,
    /// Stop once this many consecutive iterations each improve by less
    /// than `tol`. One small step says little — an accepted step only
    /// bounds its own decrease, and the next one may be large again — so a
    /// single-iteration test routinely fires far from stationarity. A short
    /// run of sub-`tol` iterations is the meaningful stall signal.
    pub stall_iters: usize,
    pub max_iters: usize,
    /// Step size tried first on the first iteration; later iterations
    /// start from twice the last accepted step.
    pub gamma_init: f64,
    /// Step shrink factor per backtrack, in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease constant c in
    /// `f(trial) ≤ f(base) − (c/gamma)·‖trial − base‖²`. The loose default
    /// admits long steps that only just descend, which is what lets plain
    /// gradient iterations slide quickly along the shallow valleys this
    /// landscape is full of; c = 0.5 would demand a majorization-grade
    /// decrease from every step and slows those traversals to a crawl. The
    /// price of a loose bar — accepted steps whose improvement is tiny — is
    /// paid by `stall_iters`, not here.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Momentum extrapolation (FISTA-style) when true.
    pub accelerate: bool,
    /// When accelerating, drop momentum and redo a plain descent step
    /// whenever the extrapolated step fails to improve the surrogate by at
    /// least `tol`. This serves two purposes. It keeps the accelerated
    /// iteration from running away: the sufficient-decrease test is anchored
    /// at the extrapolated point, which unlike the iterate is free to drift,
    /// so without the safeguard the step size can grow unboundedly while the
    /// objective climbs. It also keeps the improvement-based stop honest:
    /// the momentum sequence ripples, and a single flat ripple crest must
    /// not read as convergence, so the stop can only fire after a plain
    /// descent step stalls too. Disable only to study the textbook
    /// non-monotone sequence on well-behaved instances.
    pub restart_on_increase: bool,
    pub init: InitStrategy,
    /// Seed for the random-phase initialization.
    pub seed: u64,
    /// Record a per-iteration trace in the report.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            tol: 1e-4,
            stall_iters: 5,
            max_iters: 5000,
            gamma_init: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
            accelerate: false,
            restart_on_increase: true,
            init: InitStrategy::RandomPhase,
            seed: 0,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.stall_iters == 0 {
            return Err(Error::config("stall_iters must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.gamma_init > 0.0) || !self.gamma_init.is_finite() {
            return Err(Error::config(format!(
                "gamma_init must be positive, got {}",
                self.gamma_init
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config(format!(
                "shrink must lie strictly between 0 and 1, got {}",
                self.shrink
            )));
        }
        if !(self.sufficient_decrease >= 0.0) || !self.sufficient_decrease.is_finite() {
            return Err(Error::config(format!(
                "sufficient_decrease must be nonnegative, got {}",
                self.sufficient_decrease
            )));
        }
        if self.max_backtracks == 0 {
            return Err(Error::config("max_backtracks must be at least 1"));
        }
        Ok(())
    }
}

/// One row of the iteration trace. Row 0 is the initial point (gamma and
/// backtracks zero); row l reflects the l-th update.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub f_smooth: f64,
    pub f_exact: f64,
    pub gamma: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    /// Fitted receiver gain, nonnegative.
    pub d: f64,
    /// Final envelope-feasible transmit block.
    pub xbar: CEPoint,
    /// Number of update steps performed.
    pub iterations: usize,
    pub stop: StopReason,
    /// Empty unless `record_trace` was set.
    pub trace: Vec<TraceRow>,
    pub wall_seconds: f64,
    pub total_backtracks: usize,
    pub final_smooth: f64,
    pub final_exact: f64,
}

/// Next momentum coefficient: `(1 + sqrt(1 + 4·beta²)) / 2`.
pub fn momentum_beta_next(beta: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * beta * beta).sqrt()) / 2.0
}

/// Euclidean projection onto the feasible set: the gain clips at zero and
/// every antenna pair rescales onto the circle of radius sqrt(P/N). An
/// all-zero pair (projection is ambiguous) maps to the fixed point
/// (sqrt(P/N), 0).
pub fn project_envelope(z: &DecisionPoint, power: f64) -> DecisionPoint {
    assert!(power > 0.0, "power must be positive");
    let n = z.xbar.nrows() / 2;
    let radius = (power / n as f64).sqrt();
    let mut xbar = z.xbar.clone();
    for t in 0..xbar.ncols() {
        for j in 0..n {
            let a = xbar[(j, t)];
            let b = xbar[(j + n, t)];
            let r = (a * a + b * b).sqrt();
            if r > 0.0 {
                let scale = radius / r;
                xbar[(j, t)] = a * scale;
                xbar[(j + n, t)] = b * scale;
            } else {
                xbar[(j, t)] = radius;
                xbar[(j + n, t)] = 0.0;
            }
        }
    }
    DecisionPoint::new(z.d.max(0.0), xbar)
}

/// Objective interface for the line search: the value driving descent plus
/// a diagnostic exact-margin value carried into traces.
pub(crate) trait Cost {
    fn value2(&self, z: &DecisionPoint) -> (f64, f64);
    fn value_and_grad(&self, z: &DecisionPoint) -> (f64, Gradient);
}

impl Cost for SmoothedObjective {
    fn value2(&self, z: &DecisionPoint) -> (f64, f64) {
        self.eval_unchecked(z)
    }

    fn value_and_grad(&self, z: &DecisionPoint) -> (f64, Gradient) {
        let (f, _, g) = self.eval_grad_unchecked(z);
        (f, g)
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub gamma: f64,
    pub point: DecisionPoint,
    /// Smooth (or search) objective at `point`.
    pub value: f64,
    /// Exact margin objective at `point`.
    pub exact: f64,
    pub backtracks: usize,
    /// False when no tried step satisfied sufficient decrease; `point` is
    /// then the smallest tried step and the caller decides what to do.
    pub accepted: bool,
}

/// Backtracking state. Each accepted step doubles the next initial step,
/// so the search adapts to local curvature in both directions.
pub(crate) struct LineSearch {
    gamma_next: f64,
    shrink: f64,
    c: f64,
    max_backtracks: usize,
}

impl LineSearch {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        Self::with_params(cfg.gamma_init, cfg.shrink, cfg.sufficient_decrease, cfg.max_backtracks)
    }

    pub(crate) fn with_params(gamma_init: f64, shrink: f64, c: f64, max_backtracks: usize) -> Self {
        Self { gamma_next: gamma_init, shrink, c, max_backtracks }
    }

    /// Largest step `gamma_next·shrink^k` (k ≤ max_backtracks) whose
    /// projected step satisfies
    /// `f(trial) ≤ f(base) − (c/gamma)·‖trial − base‖²`.
    pub(crate) fn search<C: Cost>(
        &mut self,
        cost: &C,
        project: &impl Fn(&DecisionPoint) -> DecisionPoint,
        base: &DecisionPoint,
        f_base: f64,
        grad: &Gradient,
    ) -> LineSearchOutcome {
        let mut gamma = self.gamma_next;
        let mut last = None;
        for k in 0..=self.max_backtracks {
            let trial = project(&base.step(grad, gamma));
            let (f, fe) = cost.value2(&trial);
            let dist = trial.dist_sq(base);
            if f <= f_base - (self.c / gamma) * dist {
                self.gamma_next = 2.0 * gamma;
                return LineSearchOutcome {
                    gamma,
                    point: trial,
                    value: f,
                    exact: fe,
                    backtracks: k,
                    accepted: true,
                };
            }
            last = Some((gamma, trial, f, fe, k));
            gamma *= self.shrink;
        }
        let (gamma, point, value, exact, backtracks) = last.expect("at least one step tried");
        self.gamma_next = 2.0 * gamma;
        LineSearchOutcome { gamma, point, value, exact, backtracks, accepted: false }
    }
}

/// ⟨grad, a − b⟩ over the full decision vector.
fn grad_dot_diff(grad: &Gradient, a: &DecisionPoint, b: &DecisionPoint) -> f64 {
    grad.d * (a.d - b.d)
        + Zip::from(&grad.xbar)
            .and(&a.xbar)
            .and(&b.xbar)
            .fold(0.0, |acc, g, x, y| acc + g * (x - y))
}

/// Backtracking for steps anchored at a momentum-extrapolated point, which
/// generally sits off the feasible set. A decrease test of the form
/// `f(trial) ≤ f(base) − (c/γ)·‖trial − base‖²` is unsatisfiable there: as γ
/// shrinks the projected trial converges to the projection of the base, so
/// the distance term stays bounded away from zero and the bar diverges.
/// Instead accept when the local quadratic model still majorizes the trial,
///
/// `f(trial) ≤ f(base) + ⟨∇f(base), trial − base⟩ + ‖trial − base‖²/(2γ)`,
///
/// which holds for every γ below the inverse curvature and, because the
/// quadratic term dominates as γ → 0, can never exhaust the backtrack
/// budget in practice. The step size never grows back: momentum already
/// supplies the long strides, and a non-increasing γ keeps the extrapolated
/// sequence from re-triggering the same overshoot every iteration.
pub(crate) struct MomentumSearch {
    gamma: f64,
    shrink: f64,
    max_backtracks: usize,
}

impl MomentumSearch {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        Self { gamma: cfg.gamma_init, shrink: cfg.shrink, max_backtracks: cfg.max_backtracks }
    }

    pub(crate) fn search<C: Cost>(
        &mut self,
        cost: &C,
        project: &impl Fn(&DecisionPoint) -> DecisionPoint,
        base: &DecisionPoint,
        f_base: f64,
        grad: &Gradient,
    ) -> LineSearchOutcome {
        let mut gamma = self.gamma;
        let mut last = None;
        for k in 0..=self.max_backtracks {
            let trial = project(&base.step(grad, gamma));
            let (f, fe) = cost.value2(&trial);
            let dist = trial.dist_sq(base);
            let model = f_base + grad_dot_diff(grad, &trial, base) + dist / (2.0 * gamma);
            if f <= model {
                self.gamma = gamma;
                return LineSearchOutcome {
                    gamma,
                    point: trial,
                    value: f,
                    exact: fe,
                    backtracks: k,
                    accepted: true,
                };
            }
            last = Some((gamma, trial, f, fe, k));
            gamma *= self.shrink;
        }
        let (gamma, point, value, exact, backtracks) = last.expect("at least one step tried");
        self.gamma = gamma;
        LineSearchOutcome { gamma, point, value, exact, backtracks, accepted: false }
    }
}

/// One projected-gradient step from `z` with a fixed step size.
pub fn pg_step(
    obj: &SmoothedObjective,
    z: &DecisionPoint,
    gamma: f64,
    power: f64,
) -> Result<DecisionPoint> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::config(format!("gamma must be positive, got {gamma}")));
    }
    let (_, _, grad) = obj.value_and_gradient(z)?;
    Ok(project_envelope(&z.step(&grad, gamma), power))
}

/// One backtracking search from `z` using the config's initial step.
/// Returns the accepted step; `accepted = false` flags exhaustion.
pub fn backtracking_stepsize(
    obj: &SmoothedObjective,
    z: &DecisionPoint,
    power: f64,
    cfg: &SolverConfig,
) -> Result<LineSearchOutcome> {
    cfg.validate()?;
    if !(power > 0.0) {
        return Err(Error::config(format!("power must be positive, got {power}")));
    }
    let (f, _, grad) = obj.value_and_gradient(z)?;
    let mut ls = LineSearch::new(cfg);
    Ok(ls.search(obj, &|p: &DecisionPoint| project_envelope(p, power), z, f, &grad))
}

/// Random-phase envelope block: every antenna sample gets an independent
/// uniform phase at radius sqrt(P/N).
pub(crate) fn random_phase_block(
    antennas: usize,
    slots: usize,
    power: f64,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let radius = (power / antennas as f64).sqrt();
    let mut xbar = Array2::zeros((2 * antennas, slots));
    for t in 0..slots {
        for j in 0..antennas {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            xbar[(j, t)] = radius * theta.cos();
            xbar[(j + antennas, t)] = radius * theta.sin();
        }
    }
    xbar
}

/// Least-squares gain for a fixed block: argmin_d ‖Hbar·Xbar − d·Sbar‖².
pub(crate) fn ls_gain(hbar: &RealChannel, sbar: ndarray::ArrayView2<'_, f64>, xbar: &Array2<f64>) -> f64 {
    let y = hbar.matrix().dot(xbar);
    let num: f64 = y.iter().zip(sbar.iter()).map(|(a, s)| a * s).sum();
    let den: f64 = sbar.iter().map(|s| s * s).sum();
    num / den
}

fn initial_point(
    channel: &Channel,
    block: &SymbolBlock,
    obj: &SmoothedObjective,
    power: f64,
    cfg: &SolverConfig,
) -> Result<DecisionPoint> {
    match cfg.init {
        InitStrategy::RandomPhase => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let xbar = random_phase_block(channel.antennas(), block.slots(), power, &mut rng);
            let d = ls_gain(obj.channel(), obj.stacked_symbols(), &xbar).max(0.0);
            Ok(DecisionPoint::new(d, xbar))
        }
        InitStrategy::CeZfWarmStart => {
            let warm = baselines::ce_zf_precode(channel, block, power)?;
            let xbar = crate::channel::stack_real(&warm.x);
            Ok(DecisionPoint::new(warm.shared_gain().unwrap_or(0.0), xbar))
        }
    }
}

/// Minimize the smoothed worst-case margin objective over the envelope set.
/// Plain projected gradient by default; set `cfg.accelerate` for momentum.
pub fn solve(
    channel: &Channel,
    block: &SymbolBlock,
    power: f64,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::config(format!("power must be positive, got {power}")));
    }
    if block.users() != channel.users() {
        return Err(Error::domain(format!(
            "symbol block has {} users but the channel has {}",
            block.users(),
            channel.users()
        )));
    }
    let start = Instant::now();
    let obj = SmoothedObjective::new(lift(channel), block, cfg.sigma)?;
    let project = |p: &DecisionPoint| project_envelope(p, power);
    let mut z = project(&initial_point(channel, block, &obj, power, cfg)?);
    let (mut f, mut fe) = obj.value2(&z);

    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(TraceRow { iter: 0, f_smooth: f, f_exact: fe, gamma: 0.0, backtracks: 0 });
    }

    let mut ls = LineSearch::new(cfg);
    let mut ls_momentum = MomentumSearch::new(cfg);
    let mut total_backtracks = 0;
    let mut iterations = 0;
    let mut stall = 0usize;
    let mut stop = StopReason::MaxIters;

    // Momentum state (only read when accelerating).
    let mut z_prev = z.clone();
    let mut beta = 1.0f64;

    for l in 1..=cfg.max_iters {
        // Extrapolation coefficient for this iteration: zero when not
        // accelerating, on the first iteration, and right after a restart —
        // in all of which the update is exactly a plain descent step.
        let coef = if cfg.accelerate {
            let beta_next = momentum_beta_next(beta);
            let coef = (beta - 1.0) / beta_next;
            beta = beta_next;
            coef
        } else {
            0.0
        };

        let (mut z_next, mut f_next, mut fe_next, mut gamma, mut backtracks);
        if coef != 0.0 {
            // w = z + coef·(z − z_prev)
            let mut w_xbar = z.xbar.clone();
            w_xbar.zip_mut_with(&z_prev.xbar, |a, b| *a += coef * (*a - b));
            let w = DecisionPoint::new(z.d + coef * (z.d - z_prev.d), w_xbar);
            let (f_w, grad) = obj.value_and_grad(&w);
            let out = ls_momentum.search(&obj, &project, &w, f_w, &grad);
            total_backtracks += out.backtracks;
            z_next = out.point;
            f_next = out.value;
            fe_next = out.exact;
            gamma = out.gamma;
            backtracks = out.backtracks;
            if cfg.restart_on_increase && (!out.accepted || f_next > f - cfg.tol) {
                // Momentum failed to clear the stopping tolerance (the
                // extrapolated sequence ripples, so a flat step here says
                // nothing about stationarity). Discard the extrapolation and
                // take a plain descent step from z; the tolerance stop below
                // then fires only when that plain step stalls as well. The
                // plain search keeps its own step-size state so a rejected
                // extrapolation cannot shrink it.
                let (f_z, grad_z) = obj.value_and_grad(&z);
                let out = ls.search(&obj, &project, &z, f_z, &grad_z);
                total_backtracks += out.backtracks;
                gamma = out.gamma;
                backtracks += out.backtracks;
                if out.accepted || out.value <= f {
                    z_next = out.point;
                    f_next = out.value;
                    fe_next = out.exact;
                } else {
                    z_next = z.clone();
                    f_next = f;
                    fe_next = fe;
                }
                beta = 1.0;
            }
        } else {
            let (f_z, grad) = obj.value_and_grad(&z);
            let out = ls.search(&obj, &project, &z, f_z, &grad);
            total_backtracks += out.backtracks;
            gamma = out.gamma;
            backtracks = out.backtracks;
            if out.accepted || out.value <= f {
                z_next = out.point;
                f_next = out.value;
                fe_next = out.exact;
            } else {
                // Exhausted search going uphill: hold the iterate so the
                // descent trace stays monotone; the tolerance stop fires.
                z_next = z.clone();
                f_next = f;
                fe_next = fe;
            }
        }

        if cfg.record_trace {
            trace.push(TraceRow {
                iter: l,
                f_smooth: f_next,
                f_exact: fe_next,
                gamma,
                backtracks,
            });
        }
        let improvement = (f - f_next).abs();
        z_prev = std::mem::replace(&mut z, z_next);
        f = f_next;
        fe = fe_next;
        iterations = l;
        stall = if improvement < cfg.tol { stall + 1 } else { 0 };
        if stall >= cfg.stall_iters {
            stop = StopReason::Tolerance;
            break;
        }
    }

    let xbar = CEPoint::new(z.xbar, power)?;
    Ok(SolverReport {
        d: z.d,
        xbar,
        iterations,
        stop,
        trace,
        wall_seconds: start.elapsed().as_secs_f64(),
        total_backtracks,
        final_smooth: f,
        final_exact: fe,
    })
}

/// Plain projected gradient.
pub fn solve_pg(
    channel: &Channel,
    block: &SymbolBlock,
    power: f64,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let cfg = SolverConfig { accelerate: false, ..cfg.clone() };
    solve(channel, block, power, &cfg)
}

/// Momentum-accelerated projected gradient.
pub fn solve_fpg(
    channel: &Channel,
    block: &SymbolBlock,
    power: f64,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let cfg = SolverConfig { accelerate: true, ..cfg.clone() };
    solve(channel, block, power, &cfg)
}

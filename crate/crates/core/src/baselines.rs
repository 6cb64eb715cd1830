//! Reference precoders the margin solvers are measured against.
//!
//! * `zf_precode` — per-slot zero-forcing with a total-power scale. No
//!   envelope constraint; it needs at least as many antennas as users.
//! * `ce_zf_precode` — zero-forcing phases forced onto the envelope, with
//!   a block least-squares receiver gain.
//! * `mui_min_precode` — alternating scheme that minimizes the residual
//!   multiuser interference energy over the envelope set, refitting the
//!   gain in closed form between gradient steps.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{lift, unstack_complex, Channel, RealChannel, SymbolBlock};
use crate::error::{Error, Result};
use crate::objective::{DecisionPoint, Gradient};
use crate::solver::{project_envelope, random_phase_block, Cost, LineSearch};

/// A computed transmit block plus what the receiver needs to undo it.
#[derive(Debug, Clone)]
pub struct PrecodeOutput {
    /// Transmit block, one column per slot.
    pub x: Array2<Complex64>,
    /// Receiver scaling, one entry per slot. Designs that fit a single
    /// gain across the block repeat it.
    pub gains: Vec<f64>,
    /// Update steps spent producing the block; zero for closed forms.
    pub iterations: usize,
}

impl PrecodeOutput {
    /// The common gain when every slot shares one, else `None`.
    pub fn shared_gain(&self) -> Option<f64> {
        let first = *self.gains.first()?;
        self.gains.iter().all(|g| *g == first).then_some(first)
    }
}

fn check_instance(channel: &Channel, block: &SymbolBlock, power: f64) -> Result<()> {
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
    Ok(())
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite
/// matrix. Fails when a pivot collapses relative to the largest diagonal.
fn cholesky(g: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let k = g.nrows();
    let scale = (0..k).map(|j| g[(j, j)].re).fold(0.0f64, f64::max).max(1e-300);
    let mut l: Array2<Complex64> = Array2::zeros((k, k));
    for j in 0..k {
        let mut diag = g[(j, j)].re;
        for p in 0..j {
            diag -= l[(j, p)].norm_sqr();
        }
        if !(diag > scale * 1e-13) {
            return Err(Error::domain(
                "channel Gram matrix is numerically singular; users are not separable",
            ));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..k {
            let mut v = g[(i, j)];
            for p in 0..j {
                v -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Solve `L·Lᴴ·u = b` by forward/backward substitution.
fn chol_solve(l: &Array2<Complex64>, b: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
    let k = l.nrows();
    let mut y: Array1<Complex64> = Array1::zeros(k);
    for i in 0..k {
        let mut v = b[i];
        for p in 0..i {
            v -= l[(i, p)] * y[p];
        }
        y[i] = v / l[(i, i)];
    }
    let mut u: Array1<Complex64> = Array1::zeros(k);
    for i in (0..k).rev() {
        let mut v = y[i];
        for p in (i + 1)..k {
            v -= l[(p, i)].conj() * u[p];
        }
        u[i] = v / l[(i, i)];
    }
    u
}

/// Zero-forcing: each slot sends the pseudoinverse direction scaled to the
/// power budget, so the noiseless receive point is exactly `c_t·s_t`.
pub fn zf_precode(channel: &Channel, block: &SymbolBlock, power: f64) -> Result<PrecodeOutput> {
    check_instance(channel, block, power)?;
    let (users, antennas) = (channel.users(), channel.antennas());
    if antennas < users {
        return Err(Error::domain(format!(
            "zero-forcing needs at least as many antennas as users, got {antennas} antennas for {users} users"
        )));
    }
    let h = channel.matrix();
    let hherm = h.t().mapv(|z| z.conj());
    let gram = h.dot(&hherm);
    let l = cholesky(&gram)?;

    let slots = block.slots();
    let mut x: Array2<Complex64> = Array2::zeros((antennas, slots));
    let mut gains = Vec::with_capacity(slots);
    for t in 0..slots {
        let u = chol_solve(&l, block.symbols().column(t));
        let xt = hherm.dot(&u);
        let norm = xt.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::domain("zero-forcing direction collapsed to zero"));
        }
        let c = power.sqrt() / norm;
        for j in 0..antennas {
            x[(j, t)] = xt[j] * c;
        }
        gains.push(c);
    }
    Ok(PrecodeOutput { x, gains, iterations: 0 })
}

/// Block least-squares receiver gain for a fixed complex transmit block,
/// clipped at zero.
fn block_ls_gain(channel: &Channel, block: &SymbolBlock, x: &Array2<Complex64>) -> f64 {
    let y = channel.matrix().dot(x);
    let num: f64 = y
        .iter()
        .zip(block.symbols().iter())
        .map(|(a, s)| (s.conj() * a).re)
        .sum();
    let den: f64 = block.symbols().iter().map(|s| s.norm_sqr()).sum();
    (num / den).max(0.0)
}

/// Envelope-projected zero-forcing: keep each antenna sample's phase, force
/// its magnitude to sqrt(P/N), then refit one receiver gain for the block.
pub fn ce_zf_precode(channel: &Channel, block: &SymbolBlock, power: f64) -> Result<PrecodeOutput> {
    let zf = zf_precode(channel, block, power)?;
    let radius = (power / channel.antennas() as f64).sqrt();
    let mut x = zf.x;
    for v in x.iter_mut() {
        let m = v.norm();
        *v = if m > 0.0 {
            *v * (radius / m)
        } else {
            Complex64::new(radius, 0.0)
        };
    }
    let d = block_ls_gain(channel, block, &x);
    Ok(PrecodeOutput { x, gains: vec![d; block.slots()], iterations: 0 })
}

#[derive(Debug, Clone)]
pub struct MuiMinConfig {
    /// An iteration whose interference-energy improvement falls below this
    /// counts toward a stall.
    pub tol: f64,
    /// Stop once this many consecutive iterations each improve by less
    /// than `tol` (same stall rule as the margin solvers).
    pub stall_iters: usize,
    pub max_iters: usize,
    pub gamma_init: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Seed for the random-phase start.
    pub seed: u64,
}

impl Default for MuiMinConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            stall_iters: 5,
            max_iters: 5000,
            gamma_init: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
            seed: 0,
        }
    }
}

impl MuiMinConfig {
    pub fn validate(&self) -> Result<()> {
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

/// Residual interference energy `‖Hbar·Xbar − d·Sbar‖²` (squared Frobenius).
pub(crate) fn mui_value(
    hbar: &RealChannel,
    sbar: ArrayView2<'_, f64>,
    xbar: &Array2<f64>,
    d: f64,
) -> f64 {
    let mut r = hbar.matrix().dot(xbar);
    r.zip_mut_with(&sbar, |a, s| *a -= d * s);
    r.iter().map(|v| v * v).sum()
}

struct MuiCost<'a> {
    hbar: &'a RealChannel,
    sbar: ArrayView2<'a, f64>,
}

impl Cost for MuiCost<'_> {
    fn value2(&self, z: &DecisionPoint) -> (f64, f64) {
        let g = mui_value(self.hbar, self.sbar, &z.xbar, z.d);
        (g, g)
    }

    fn value_and_grad(&self, z: &DecisionPoint) -> (f64, Gradient) {
        let mut r = self.hbar.matrix().dot(&z.xbar);
        r.zip_mut_with(&self.sbar, |a, s| *a -= z.d * s);
        let g: f64 = r.iter().map(|v| v * v).sum();
        let gx = self.hbar.matrix().t().dot(&r) * 2.0;
        // The gain is refit in closed form between steps, never by descent.
        (g, Gradient { d: 0.0, xbar: gx })
    }
}

/// Random-phase start with the gain opened at the coherent array scale
/// `√(P·N/K)`. Fitting the gain to the random block instead would start it
/// near zero — a random envelope block is almost orthogonal to the symbol
/// block — and the alternation cannot escape that attractor: the block step
/// chases the near-origin target d·S while the refit keeps d pinned there.
/// An ambitious start has no such trap; the refit walks the gain down to
/// whatever alignment the block step actually achieves.
pub(crate) fn mui_init(
    antennas: usize,
    users: usize,
    slots: usize,
    power: f64,
    seed: u64,
) -> (Array2<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xbar = random_phase_block(antennas, slots, power, &mut rng);
    let d = (power * antennas as f64 / users as f64).sqrt();
    (xbar, d)
}

/// Minimize residual interference energy over the envelope set by
/// alternating projected-gradient steps on the block with closed-form
/// gain refits, from a random-phase start.
///
/// Pure interference minimization is a weaker design than the margin
/// objective: it balances nothing against the gain, and the alternation
/// inherits the landscape's bad basins. In particular it has a degenerate
/// attractor at (HX = 0, d = 0): once the refit gain falls near zero the
/// target d·S is almost the origin, the block step steers HX toward the
/// channel's null space, and the refit keeps the gain pinned. Runs that end
/// there are returned as-is, gain and all — callers decide how to score an
/// undecodable design; masking the failure here would misrepresent how
/// often the method lands in a useless basin.
pub fn mui_min_precode(
    channel: &Channel,
    block: &SymbolBlock,
    power: f64,
    cfg: &MuiMinConfig,
) -> Result<PrecodeOutput> {
    cfg.validate()?;
    check_instance(channel, block, power)?;
    let hbar = lift(channel);
    let sbar = block.stacked();
    let (xbar, d) = mui_init(
        channel.antennas(),
        channel.users(),
        block.slots(),
        power,
        cfg.seed,
    );
    let mut z = DecisionPoint::new(d, xbar);
    let mut g = mui_value(&hbar, sbar, &z.xbar, z.d);

    let cost = MuiCost { hbar: &hbar, sbar };
    let project = |p: &DecisionPoint| project_envelope(p, power);
    let mut ls = LineSearch::with_params(
        cfg.gamma_init,
        cfg.shrink,
        cfg.sufficient_decrease,
        cfg.max_backtracks,
    );
    let mut iterations = 0;
    let mut stall = 0usize;
    for l in 1..=cfg.max_iters {
        let (g_z, grad) = cost.value_and_grad(&z);
        let out = ls.search(&cost, &project, &z, g_z, &grad);
        if out.accepted || out.value <= g {
            z = out.point;
        }
        // Closed-form gain refit never increases the residual.
        z.d = crate::solver::ls_gain(&hbar, sbar, &z.xbar).max(0.0);
        let g_new = mui_value(&hbar, sbar, &z.xbar, z.d);
        let improvement = (g - g_new).abs();
        g = g_new;
        iterations = l;
        stall = if improvement < cfg.tol { stall + 1 } else { 0 };
        if stall >= cfg.stall_iters {
            break;
        }
    }

    let x = unstack_complex(&z.xbar.view());
    Ok(PrecodeOutput {
        x,
        gains: vec![z.d; block.slots()],
        iterations,
    })
}

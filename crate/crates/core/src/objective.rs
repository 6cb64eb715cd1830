//! Worst-case symbol-margin objective and its smooth surrogate.
//!
//! For a real-lifted channel `Hbar` (2K×2N), stacked symbols `Sbar` (2K×T),
//! a transmit block `Xbar` (2N×T) and a receiver gain `d ≥ 0`, the exact
//! objective is
//!
//! ```text
//! max_{i,t} | hbar_i' xbar_t − d sbar_{i,t} | − d
//! ```
//!
//! i.e. worst distortion minus decision margin; driving it down pushes every
//! user's decision variable away from its nearest thresholds. The max is
//! non-smooth, so the solvers work on a log-sum-exp surrogate with
//! temperature `sigma`: each of the 2K·T residuals contributes two
//! exponentials (one per sign), 4KT in total, and
//!
//! ```text
//! exact ≤ smooth ≤ exact + sigma · ln(4KT).
//! ```
//!
//! All exponentials are evaluated with the running maximum subtracted, so
//! small temperatures do not overflow.

use ndarray::{Array2, ArrayView2};

use crate::channel::{RealChannel, SymbolBlock};
use crate::error::{Error, Result};

/// A candidate solution: receiver gain plus a real-stacked transmit block.
/// Not necessarily envelope-feasible; the objective is defined everywhere.
#[derive(Debug, Clone)]
pub struct DecisionPoint {
    pub d: f64,
    pub xbar: Array2<f64>,
}

impl DecisionPoint {
    pub fn new(d: f64, xbar: Array2<f64>) -> Self {
        Self { d, xbar }
    }

    /// Move along the negative of `g` with step `gamma`.
    pub fn step(&self, g: &Gradient, gamma: f64) -> DecisionPoint {
        let mut xbar = self.xbar.clone();
        xbar.scaled_add(-gamma, &g.xbar);
        DecisionPoint { d: self.d - gamma * g.d, xbar }
    }

    /// Squared Euclidean distance over all coordinates, gain included.
    pub fn dist_sq(&self, other: &DecisionPoint) -> f64 {
        let mut acc = (self.d - other.d).powi(2);
        for (a, b) in self.xbar.iter().zip(other.xbar.iter()) {
            acc += (a - b).powi(2);
        }
        acc
    }

    fn all_finite(&self) -> bool {
        self.d.is_finite() && self.xbar.iter().all(|v| v.is_finite())
    }
}

/// Gradient of the smooth objective at a `DecisionPoint`, same layout.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub d: f64,
    pub xbar: Array2<f64>,
}

impl Gradient {
    pub fn norm_sq(&self) -> f64 {
        self.d * self.d + self.xbar.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Exact worst-case margin objective. `xbar` must be 2N×T for a 2K×2N
/// channel with 2K×T stacked symbols.
pub fn exact_objective(
    hbar: &RealChannel,
    sbar: ArrayView2<'_, f64>,
    xbar: ArrayView2<'_, f64>,
    d: f64,
) -> f64 {
    let a = hbar.matrix().dot(&xbar);
    let mut worst = 0.0f64;
    for (av, sv) in a.iter().zip(sbar.iter()) {
        let e = (av - d * sv).abs();
        if e > worst {
            worst = e;
        }
    }
    worst - d
}

/// The smooth surrogate, bound to one channel/symbol instance.
#[derive(Debug, Clone)]
pub struct SmoothedObjective {
    hbar: RealChannel,
    sbar: Array2<f64>,
    sigma: f64,
}

impl SmoothedObjective {
    pub fn new(hbar: RealChannel, block: &SymbolBlock, sigma: f64) -> Result<Self> {
        Self::from_stacked(hbar, block.stacked().to_owned(), sigma)
    }

    /// Build from an already-stacked 2K×T symbol matrix.
    pub fn from_stacked(hbar: RealChannel, sbar: Array2<f64>, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::config(format!("smoothing sigma must be positive, got {sigma}")));
        }
        if sbar.nrows() != 2 * hbar.users() {
            return Err(Error::domain(format!(
                "stacked symbols have {} rows, expected {} for {} users",
                sbar.nrows(),
                2 * hbar.users(),
                hbar.users()
            )));
        }
        if sbar.ncols() == 0 {
            return Err(Error::domain("symbol block must have at least one slot"));
        }
        if !sbar.iter().all(|v| v.is_finite()) || !hbar.matrix().iter().all(|v| v.is_finite()) {
            return Err(Error::domain("channel and symbols must be finite"));
        }
        Ok(Self { hbar, sbar, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn channel(&self) -> &RealChannel {
        &self.hbar
    }

    pub fn stacked_symbols(&self) -> ArrayView2<'_, f64> {
        self.sbar.view()
    }

    pub fn slots(&self) -> usize {
        self.sbar.ncols()
    }

    /// Gap between the surrogate and the exact objective: `sigma·ln(4KT)`.
    pub fn smoothing_gap(&self) -> f64 {
        self.sigma * (4.0 * self.hbar.users() as f64 * self.slots() as f64).ln()
    }

    fn check_point(&self, z: &DecisionPoint) -> Result<()> {
        if z.xbar.nrows() != 2 * self.hbar.antennas() || z.xbar.ncols() != self.sbar.ncols() {
            return Err(Error::domain(format!(
                "point is {}×{}, expected {}×{}",
                z.xbar.nrows(),
                z.xbar.ncols(),
                2 * self.hbar.antennas(),
                self.sbar.ncols()
            )));
        }
        if !z.all_finite() {
            return Err(Error::domain("point coordinates must be finite"));
        }
        Ok(())
    }

    /// Residual field `Hbar·Xbar − d·Sbar`, 2K×T.
    fn residual(&self, z: &DecisionPoint) -> Array2<f64> {
        let mut e = self.hbar.matrix().dot(&z.xbar);
        e.scaled_add(-z.d, &self.sbar);
        e
    }

    pub(crate) fn eval_unchecked(&self, z: &DecisionPoint) -> (f64, f64) {
        let e = self.residual(z);
        let m_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Shifting both exponentials by the top exponent (m_abs − d)
        // cancels the −d term, so only residual magnitudes enter.
        let mut sum = 0.0;
        for &v in e.iter() {
            sum += ((v - m_abs) / self.sigma).exp() + ((-v - m_abs) / self.sigma).exp();
        }
        let exact = m_abs - z.d;
        let smooth = exact + self.sigma * sum.ln();
        (smooth, exact)
    }

    pub(crate) fn eval_grad_unchecked(&self, z: &DecisionPoint) -> (f64, f64, Gradient) {
        let e = self.residual(z);
        let m_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (rows, cols) = e.dim();
        let mut diff = Array2::zeros((rows, cols));
        let mut denom = 0.0;
        let mut grad_d = 0.0;
        for i in 0..rows {
            for t in 0..cols {
                let v = e[(i, t)];
                let wp = ((v - m_abs) / self.sigma).exp();
                let wn = ((-v - m_abs) / self.sigma).exp();
                denom += wp + wn;
                diff[(i, t)] = wp - wn;
                let s = self.sbar[(i, t)];
                grad_d += -wp * (s + 1.0) + wn * (s - 1.0);
            }
        }
        let mut grad_x = self.hbar.matrix().t().dot(&diff);
        grad_x.mapv_inplace(|v| v / denom);
        let exact = m_abs - z.d;
        let smooth = exact + self.sigma * denom.ln();
        (smooth, exact, Gradient { d: grad_d / denom, xbar: grad_x })
    }

    /// Smooth and exact objective values at `z`.
    pub fn value(&self, z: &DecisionPoint) -> Result<(f64, f64)> {
        self.check_point(z)?;
        Ok(self.eval_unchecked(z))
    }

    /// Exact objective only.
    pub fn exact(&self, z: &DecisionPoint) -> Result<f64> {
        self.check_point(z)?;
        Ok(exact_objective(&self.hbar, self.sbar.view(), z.xbar.view(), z.d))
    }

    /// Smooth value, exact value, and the analytic gradient of the smooth
    /// surrogate. The weights are softmax factors of the shifted
    /// exponentials; the shift cancels in every ratio.
    pub fn value_and_gradient(&self, z: &DecisionPoint) -> Result<(f64, f64, Gradient)> {
        self.check_point(z)?;
        Ok(self.eval_grad_unchecked(z))
    }
}

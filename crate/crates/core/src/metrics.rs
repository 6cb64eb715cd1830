//! Error-rate metrics: the Gaussian tail function, an analytic per-user
//! symbol-error bound driven by the worst-case margin, Monte-Carlo error
//! counters, and peak-to-average power.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::channel::{RealChannel, SymbolBlock};
use crate::constellation::QamConstellation;
use crate::error::{Error, Result};

/// Standard Gaussian tail probability `∫ₓ^∞ φ(z) dz`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Noise variance for a given transmit power and SNR in dB (power over
/// noise variance).
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

/// 95% normal-approximation confidence half-width for a rate estimated
/// from `n` Bernoulli observations.
pub fn ci_halfwidth(p_hat: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Analytic symbol-error bounds for one precoded block under additive
/// complex Gaussian noise of total variance `sigma_n²`.
///
/// Per user `i` and slot `t` the real-dimension factor is
/// `2·Q((d − |e_re|)·√2/σ_n)` with `e_re` the real-part distortion of the
/// noiseless receive point, and likewise for the imaginary dimension. The
/// per-slot symbol bound doubles the worse factor and clips at 2 (it bounds
/// a probability, so values above that carry no information). The
/// construction assumes two-sided decision regions, so it is meaningful for
/// interior constellation points; on boundary points it is merely
/// conservative.
#[derive(Debug, Clone)]
pub struct SerBound {
    /// Real-dimension factors, users × slots.
    pub m_re: Array2<f64>,
    /// Imaginary-dimension factors, users × slots.
    pub m_im: Array2<f64>,
    /// Clipped per-slot symbol bound `min(2, 2·max(m_re, m_im))`.
    pub combined: Array2<f64>,
    /// Worst slot per user.
    pub per_user: Vec<f64>,
}

pub fn ser_upper_bound(
    hbar: &RealChannel,
    sbar: ArrayView2<'_, f64>,
    xbar: ArrayView2<'_, f64>,
    d: f64,
    sigma_n: f64,
) -> Result<SerBound> {
    if !(sigma_n > 0.0) || !sigma_n.is_finite() {
        return Err(Error::domain(format!("sigma_n must be positive, got {sigma_n}")));
    }
    if !(d >= 0.0) {
        return Err(Error::domain(format!("gain must be nonnegative, got {d}")));
    }
    let users = hbar.users();
    if sbar.nrows() != 2 * users || xbar.nrows() != 2 * hbar.antennas() {
        return Err(Error::domain("stacked shapes do not match the channel"));
    }
    let slots = sbar.ncols();
    let y = hbar.matrix().dot(&xbar);
    let mut m_re = Array2::zeros((users, slots));
    let mut m_im = Array2::zeros((users, slots));
    let mut combined = Array2::zeros((users, slots));
    let mut per_user = vec![0.0f64; users];
    let scale = std::f64::consts::SQRT_2 / sigma_n;
    for i in 0..users {
        for t in 0..slots {
            let e_re = y[(i, t)] - d * sbar[(i, t)];
            let e_im = y[(i + users, t)] - d * sbar[(i + users, t)];
            let mr = 2.0 * q_func((d - e_re.abs()) * scale);
            let mi = 2.0 * q_func((d - e_im.abs()) * scale);
            m_re[(i, t)] = mr;
            m_im[(i, t)] = mi;
            let c = (2.0 * mr.max(mi)).min(2.0);
            combined[(i, t)] = c;
            if c > per_user[i] {
                per_user[i] = c;
            }
        }
    }
    Ok(SerBound { m_re, m_im, combined, per_user })
}

/// Error counters over one or many blocks. Merging is associative, so
/// trial results can be combined in any grouping as long as the final
/// reduction order is fixed.
#[derive(Debug, Clone)]
pub struct ErrorCounts {
    pub bit_errors: u64,
    pub total_bits: u64,
    pub symbol_errors: u64,
    pub total_symbols: u64,
    pub per_user_symbol_errors: Vec<u64>,
    pub per_user_symbols: Vec<u64>,
}

impl ErrorCounts {
    pub fn new(users: usize) -> Self {
        Self {
            bit_errors: 0,
            total_bits: 0,
            symbol_errors: 0,
            total_symbols: 0,
            per_user_symbol_errors: vec![0; users],
            per_user_symbols: vec![0; users],
        }
    }

    pub fn merge(&mut self, other: &ErrorCounts) {
        assert_eq!(self.per_user_symbols.len(), other.per_user_symbols.len());
        self.bit_errors += other.bit_errors;
        self.total_bits += other.total_bits;
        self.symbol_errors += other.symbol_errors;
        self.total_symbols += other.total_symbols;
        for (a, b) in self
            .per_user_symbol_errors
            .iter_mut()
            .zip(&other.per_user_symbol_errors)
        {
            *a += b;
        }
        for (a, b) in self.per_user_symbols.iter_mut().zip(&other.per_user_symbols) {
            *a += b;
        }
    }

    /// Charge one whole block as lost: every symbol and every bit errored
    /// for every user. Used for designs the receiver cannot decode at all
    /// (no positive detection gain) — deterministic, and it never flatters
    /// the design being scored.
    pub fn charge_undecodable_block(&mut self, slots: usize, bits_per_symbol: usize) {
        let slots = slots as u64;
        let bps = bits_per_symbol as u64;
        let users = self.per_user_symbols.len() as u64;
        self.bit_errors += users * slots * bps;
        self.total_bits += users * slots * bps;
        self.symbol_errors += users * slots;
        self.total_symbols += users * slots;
        for (e, n) in self
            .per_user_symbol_errors
            .iter_mut()
            .zip(self.per_user_symbols.iter_mut())
        {
            *e += slots;
            *n += slots;
        }
    }

    pub fn avg_ber(&self) -> f64 {
        if self.total_bits == 0 {
            return f64::NAN;
        }
        self.bit_errors as f64 / self.total_bits as f64
    }

    pub fn avg_ser(&self) -> f64 {
        if self.total_symbols == 0 {
            return f64::NAN;
        }
        self.symbol_errors as f64 / self.total_symbols as f64
    }

    /// Largest per-user symbol error rate.
    pub fn worst_user_ser(&self) -> f64 {
        let mut worst = f64::NAN;
        for (e, n) in self.per_user_symbol_errors.iter().zip(&self.per_user_symbols) {
            if *n > 0 {
                let r = *e as f64 / *n as f64;
                if worst.is_nan() || r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    /// Normal-approximation half-width on the average bit error rate.
    pub fn ber_ci_halfwidth(&self) -> f64 {
        ci_halfwidth(self.avg_ber(), self.total_bits)
    }
}

/// Decide every received sample against the transmitted block and add the
/// symbol and Gray-bit errors into `counts`. `gains` holds the receiver
/// scaling per slot.
pub fn count_block_errors(
    y: ArrayView2<'_, Complex64>,
    gains: &[f64],
    block: &SymbolBlock,
    constellation: &QamConstellation,
    counts: &mut ErrorCounts,
) -> Result<()> {
    let (users, slots) = (block.users(), block.slots());
    if y.nrows() != users || y.ncols() != slots {
        return Err(Error::domain(format!(
            "received block is {}×{}, expected {}×{}",
            y.nrows(),
            y.ncols(),
            users,
            slots
        )));
    }
    if gains.len() != slots {
        return Err(Error::domain(format!(
            "got {} slot gains for {} slots",
            gains.len(),
            slots
        )));
    }
    if counts.per_user_symbols.len() != users {
        return Err(Error::domain("counter user dimension does not match the block"));
    }
    let bps = constellation.bits_per_symbol() as u64;
    for t in 0..slots {
        for i in 0..users {
            let sent = block.symbols()[(i, t)];
            let decided = constellation.decide(y[(i, t)], gains[t])?;
            let sent_label = constellation.bit_label(sent)?;
            let decided_label = constellation.bit_label(decided)?;
            counts.bit_errors += u64::from((sent_label ^ decided_label).count_ones());
            counts.total_bits += bps;
            counts.total_symbols += 1;
            counts.per_user_symbols[i] += 1;
            if decided != sent {
                counts.symbol_errors += 1;
                counts.per_user_symbol_errors[i] += 1;
            }
        }
    }
    Ok(())
}

/// Worst per-antenna peak-to-average power over the block: for each
/// antenna, the peak slot power divided by that antenna's mean slot power;
/// the maximum over antennas is returned. Exactly 1 for any
/// constant-envelope block and for any single-slot block.
pub fn papr(x: ArrayView2<'_, Complex64>) -> f64 {
    let mut worst = f64::NAN;
    for row in x.rows() {
        let mut peak = 0.0f64;
        let mut sum = 0.0f64;
        for v in row.iter() {
            let p = v.norm_sqr();
            peak = peak.max(p);
            sum += p;
        }
        let mean = sum / row.len() as f64;
        let r = peak / mean;
        if worst.is_nan() || r > worst {
            worst = r;
        }
    }
    worst
}

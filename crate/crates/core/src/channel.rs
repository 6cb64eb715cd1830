//! Downlink channel model and the real-valued lifting used by the solvers.
//!
//! A `Channel` is the complex K×N matrix between N transmit antennas and K
//! single-antenna users. The optimization runs on the real lifting
//! `Hbar = [[Re H, −Im H], [Im H, Re H]]` with stacked vectors
//! `v̄ = [Re v; Im v]`, which turns complex products into real ones while
//! preserving norms.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, BufReader, Read, Write};

use crate::constellation::QamConstellation;
use crate::error::{Error, Result};

/// Complex downlink channel, one row per user.
#[derive(Debug, Clone)]
pub struct Channel {
    h: Array2<Complex64>,
}

impl Channel {
    pub fn new(h: Array2<Complex64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::config("channel must have at least one user and one antenna"));
        }
        Ok(Self { h })
    }

    /// Users (rows).
    pub fn users(&self) -> usize {
        self.h.nrows()
    }

    /// Transmit antennas (columns).
    pub fn antennas(&self) -> usize {
        self.h.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, Complex64> {
        self.h.view()
    }

    /// Write the matrix as CSV, row-major, each entry as a `re,im` pair.
    pub fn dump_csv(&self, mut w: impl Write) -> Result<()> {
        for row in self.h.rows() {
            let line: Vec<String> =
                row.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Read a matrix written by `dump_csv`. Dimensions are inferred from
    /// the file: rows = users, columns = antennas.
    pub fn load_csv(r: impl Read) -> Result<Self> {
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for (ln, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() % 2 != 0 {
                return Err(Error::Parse(format!(
                    "line {}: expected re,im pairs, got {} fields",
                    ln + 1,
                    fields.len()
                )));
            }
            let mut row = Vec::with_capacity(fields.len() / 2);
            for pair in fields.chunks_exact(2) {
                let re: f64 = pair[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad float {:?}", ln + 1, pair[0])))?;
                let im: f64 = pair[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad float {:?}", ln + 1, pair[1])))?;
                row.push(Complex64::new(re, im));
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse(format!("line {}: ragged row", ln + 1)));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty channel file".into()));
        }
        let k = rows.len();
        let n = rows[0].len();
        let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
        let h = Array2::from_shape_vec((k, n), flat)
            .map_err(|e| Error::Parse(format!("bad channel shape: {e}")))?;
        Channel::new(h)
    }
}

/// Real lifting of a complex channel. Only constructed through `lift`, so
/// the block structure `[[Re, −Im], [Im, Re]]` always holds.
#[derive(Debug, Clone)]
pub struct RealChannel {
    m: Array2<f64>,
    users: usize,
    antennas: usize,
}

impl RealChannel {
    /// 2K×2N real matrix.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }

    /// Users of the underlying complex channel.
    pub fn users(&self) -> usize {
        self.users
    }

    /// Antennas of the underlying complex channel.
    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// Real lifting: complex products `Hx` become `Hbar x̄` with
/// `x̄ = [Re x; Im x]`, and Euclidean norms are preserved.
pub fn lift(h: &Channel) -> RealChannel {
    let (k, n) = (h.users(), h.antennas());
    let mut m = Array2::zeros((2 * k, 2 * n));
    for i in 0..k {
        for j in 0..n {
            let z = h.h[(i, j)];
            m[(i, j)] = z.re;
            m[(i, j + n)] = -z.im;
            m[(i + k, j)] = z.im;
            m[(i + k, j + n)] = z.re;
        }
    }
    RealChannel { m, users: k, antennas: n }
}

/// Stack a complex matrix column-wise into its real form `[Re; Im]`.
pub fn stack_real(x: &Array2<Complex64>) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let mut out = Array2::zeros((2 * rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = x[(r, c)].re;
            out[(r + rows, c)] = x[(r, c)].im;
        }
    }
    out
}

/// Inverse of `stack_real`.
pub fn unstack_complex(xbar: &ArrayView2<'_, f64>) -> Array2<Complex64> {
    let rows = xbar.nrows() / 2;
    let cols = xbar.ncols();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        Complex64::new(xbar[(r, c)], xbar[(r + rows, c)])
    })
}

/// i.i.d. complex normal channel: each entry has independent real and
/// imaginary parts of variance 1/2, so E|h|² = 1.
pub fn rayleigh_channel(users: usize, antennas: usize, rng: &mut impl Rng) -> Result<Channel> {
    if users == 0 || antennas == 0 {
        return Err(Error::config("channel must have at least one user and one antenna"));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let h = Array2::from_shape_fn((users, antennas), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    Channel::new(h)
}

/// Noisy downlink: `Y = H X + W` with i.i.d. `W ~ CN(0, sigma_n²)` per
/// entry (`sigma_n²` is the total complex variance, split evenly between
/// real and imaginary parts). `sigma_n = 0` returns the exact product.
pub fn receive(
    h: &Channel,
    x: &Array2<Complex64>,
    sigma_n: f64,
    rng: &mut impl Rng,
) -> Result<Array2<Complex64>> {
    if x.nrows() != h.antennas() {
        return Err(Error::domain(format!(
            "transmit matrix has {} rows but the channel has {} antennas",
            x.nrows(),
            h.antennas()
        )));
    }
    if sigma_n < 0.0 {
        return Err(Error::domain(format!("sigma_n must be nonnegative, got {sigma_n}")));
    }
    let mut y = h.h.dot(x);
    if sigma_n > 0.0 {
        let s = sigma_n * std::f64::consts::FRAC_1_SQRT_2;
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * s, im * s);
        }
    }
    Ok(y)
}

/// One block of uncoded symbols: K users × T slots, with the real stacking
/// kept alongside for the solvers.
#[derive(Debug, Clone)]
pub struct SymbolBlock {
    s: Array2<Complex64>,
    sbar: Array2<f64>,
}

impl SymbolBlock {
    /// Wrap existing symbols, checking every entry against the alphabet.
    pub fn from_symbols(s: Array2<Complex64>, constellation: &QamConstellation) -> Result<Self> {
        if s.nrows() == 0 || s.ncols() == 0 {
            return Err(Error::config("symbol block must have at least one user and one slot"));
        }
        for &v in s.iter() {
            constellation.bit_label(v)?;
        }
        let sbar = stack_real(&s);
        Ok(Self { s, sbar })
    }

    /// Draw K×T symbols uniformly from the alphabet.
    pub fn draw_uniform(
        constellation: &QamConstellation,
        users: usize,
        slots: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if users == 0 || slots == 0 {
            return Err(Error::config("symbol block must have at least one user and one slot"));
        }
        let pts = constellation.points();
        let s = Array2::from_shape_fn((users, slots), |_| pts[rng.random_range(0..pts.len())]);
        let sbar = stack_real(&s);
        Ok(Self { s, sbar })
    }

    pub fn users(&self) -> usize {
        self.s.nrows()
    }

    pub fn slots(&self) -> usize {
        self.s.ncols()
    }

    pub fn symbols(&self) -> ArrayView2<'_, Complex64> {
        self.s.view()
    }

    /// Real stacking, 2K×T.
    pub fn stacked(&self) -> ArrayView2<'_, f64> {
        self.sbar.view()
    }
}

/// How tightly per-antenna power must match P/N for a point to count as
/// constant-envelope feasible (relative).
pub const CE_FEASIBILITY_TOL: f64 = 1e-12;

/// A constant-envelope transmit block in real coordinates: 2N×T, where the
/// pair (row j, row j+N) is one antenna's (Re, Im) sample and must sit on
/// the circle of radius sqrt(P/N).
#[derive(Debug, Clone)]
pub struct CEPoint {
    xbar: Array2<f64>,
    power: f64,
}

impl CEPoint {
    pub fn new(xbar: Array2<f64>, power: f64) -> Result<Self> {
        if power <= 0.0 {
            return Err(Error::config(format!("total power must be positive, got {power}")));
        }
        if xbar.nrows() == 0 || xbar.nrows() % 2 != 0 || xbar.ncols() == 0 {
            return Err(Error::domain(
                "constant-envelope block must be 2N×T with N ≥ 1, T ≥ 1",
            ));
        }
        let n = xbar.nrows() / 2;
        let target = power / n as f64;
        for t in 0..xbar.ncols() {
            for j in 0..n {
                let p = xbar[(j, t)].powi(2) + xbar[(j + n, t)].powi(2);
                if (p - target).abs() > CE_FEASIBILITY_TOL * target {
                    return Err(Error::domain(format!(
                        "antenna {j}, slot {t}: per-antenna power {p} is off the envelope {target}"
                    )));
                }
            }
        }
        Ok(Self { xbar, power })
    }

    /// Wrap a complex N×T block, checking the envelope.
    pub fn from_complex(x: &Array2<Complex64>, power: f64) -> Result<Self> {
        Self::new(stack_real(x), power)
    }

    pub fn antennas(&self) -> usize {
        self.xbar.nrows() / 2
    }

    pub fn slots(&self) -> usize {
        self.xbar.ncols()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn stacked(&self) -> ArrayView2<'_, f64> {
        self.xbar.view()
    }

    /// Complex N×T transmit matrix.
    pub fn to_complex(&self) -> Array2<Complex64> {
        unstack_complex(&self.xbar.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lift_of_real_unit_channel_is_identity() {
        let h = Channel::new(array![[c(1.0, 0.0)]]).unwrap();
        let hbar = lift(&h);
        assert_eq!(hbar.matrix(), array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn lift_of_imaginary_unit_is_a_rotation() {
        let h = Channel::new(array![[c(0.0, 1.0)]]).unwrap();
        let hbar = lift(&h);
        assert_eq!(hbar.matrix(), array![[0.0, -1.0], [1.0, 0.0]]);
    }

    // Oracle: multiply in complex arithmetic coordinate by coordinate and
    // compare against the lifted real product.
    #[test]
    fn lifted_product_matches_complex_product() {
        let mut rng = stream_rng(11, 0);
        let h = rayleigh_channel(4, 8, &mut rng).unwrap();
        let hbar = lift(&h);
        for _ in 0..100 {
            let x = Array2::from_shape_fn((8, 1), |_| {
                c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
            });
            let mut y_oracle = vec![c(0.0, 0.0); 4];
            for i in 0..4 {
                for j in 0..8 {
                    y_oracle[i] += h.matrix()[(i, j)] * x[(j, 0)];
                }
            }
            let xbar = stack_real(&x);
            let ybar = hbar.matrix().dot(&xbar);
            for i in 0..4 {
                assert_abs_diff_eq!(ybar[(i, 0)], y_oracle[i].re, epsilon = 1e-12);
                assert_abs_diff_eq!(ybar[(i + 4, 0)], y_oracle[i].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lift_preserves_norms() {
        let mut rng = stream_rng(12, 0);
        let h = rayleigh_channel(3, 5, &mut rng).unwrap();
        let hbar = lift(&h);
        let x = Array2::from_shape_fn((5, 2), |_| {
            c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
        });
        let xbar = stack_real(&x);
        let norm_c: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let norm_r: f64 = xbar.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm_c, norm_r, epsilon = 1e-12);

        let y = h.matrix().dot(&x);
        let ybar = hbar.matrix().dot(&xbar);
        let yn_c: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        let yn_r: f64 = ybar.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(yn_c, yn_r, epsilon = 1e-10);
    }

    #[test]
    fn stack_roundtrip() {
        let mut rng = stream_rng(13, 0);
        let x = Array2::from_shape_fn((6, 3), |_| {
            c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
        });
        let back = unstack_complex(&stack_real(&x).view());
        assert_eq!(x, back);
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = stream_rng(14, 0);
        let h = rayleigh_channel(100, 1000, &mut rng).unwrap();
        let n = (100 * 1000) as f64;
        let mean_power: f64 = h.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((mean_power - 1.0).abs() < 0.02, "mean |h|^2 = {mean_power}");
        let mean_re: f64 = h.matrix().iter().map(|z| z.re).sum::<f64>() / n;
        let var_re: f64 = h.matrix().iter().map(|z| (z.re - mean_re).powi(2)).sum::<f64>() / n;
        assert!(mean_re.abs() < 0.01, "mean re = {mean_re}");
        assert!((var_re - 0.5).abs() < 0.01, "var re = {var_re}");
    }

    #[test]
    fn rayleigh_is_deterministic_per_seed() {
        let a = rayleigh_channel(4, 6, &mut stream_rng(9, 1)).unwrap();
        let b = rayleigh_channel(4, 6, &mut stream_rng(9, 1)).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = rayleigh_channel(4, 6, &mut stream_rng(9, 2)).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn noiseless_receive_is_exact() {
        let mut rng = stream_rng(15, 0);
        let h = rayleigh_channel(3, 4, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 5), |_| {
            c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
        });
        let y = receive(&h, &x, 0.0, &mut rng).unwrap();
        assert_eq!(y, h.matrix().dot(&x));
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let mut rng = stream_rng(16, 0);
        let h = Channel::new(array![[c(1.0, 0.0)]]).unwrap();
        let x = Array2::from_elem((1, 100_000), c(0.0, 0.0));
        let sigma_n = 0.7;
        let y = receive(&h, &x, sigma_n, &mut rng).unwrap();
        let n = y.len() as f64;
        let total: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((total - sigma_n * sigma_n).abs() < 0.02 * sigma_n * sigma_n, "var = {total}");
        let re_var: f64 = y.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((re_var - 0.5 * sigma_n * sigma_n).abs() < 0.02 * sigma_n * sigma_n);
    }

    #[test]
    fn receive_rejects_mismatched_dimensions() {
        let mut rng = stream_rng(17, 0);
        let h = rayleigh_channel(2, 3, &mut rng).unwrap();
        let x = Array2::from_elem((4, 1), c(0.0, 0.0));
        assert!(receive(&h, &x, 0.1, &mut rng).is_err());
        assert!(receive(&h, &Array2::from_elem((3, 1), c(0.0, 0.0)), -0.1, &mut rng).is_err());
    }

    #[test]
    fn symbol_block_draws_from_alphabet_and_stacks() {
        let q = QamConstellation::new(2).unwrap();
        let mut rng = stream_rng(18, 0);
        let b = SymbolBlock::draw_uniform(&q, 8, 10, &mut rng).unwrap();
        assert_eq!(b.users(), 8);
        assert_eq!(b.slots(), 10);
        for &s in b.symbols().iter() {
            q.bit_label(s).unwrap();
        }
        for i in 0..8 {
            for t in 0..10 {
                assert_eq!(b.stacked()[(i, t)], b.symbols()[(i, t)].re);
                assert_eq!(b.stacked()[(i + 8, t)], b.symbols()[(i, t)].im);
            }
        }
    }

    #[test]
    fn symbol_block_rejects_foreign_points() {
        let q = QamConstellation::new(2).unwrap();
        let s = array![[c(0.5, 1.0)]];
        assert!(SymbolBlock::from_symbols(s, &q).is_err());
        let s5 = array![[c(5.0, 1.0)]];
        assert!(SymbolBlock::from_symbols(s5, &q).is_err());
    }

    #[test]
    fn ce_point_checks_the_envelope() {
        // N = 2, T = 1, P = 1: each antenna pair must have power 1/2.
        let r = (0.5f64).sqrt();
        let good = array![[r * 0.6], [r * 1.0], [r * 0.8], [0.0]];
        let p = CEPoint::new(good, 1.0).unwrap();
        assert_eq!(p.antennas(), 2);
        let x = p.to_complex();
        assert_abs_diff_eq!(x[(0, 0)].norm_sqr(), 0.5, epsilon = 1e-15);

        let bad = array![[0.6], [1.0], [0.8], [0.1]];
        assert!(CEPoint::new(bad, 1.0).is_err());
        let empty: Array2<f64> = Array2::zeros((4, 0));
        assert!(CEPoint::new(empty, 1.0).is_err());
        assert!(CEPoint::new(Array2::zeros((3, 1)), 1.0).is_err());
    }

    #[test]
    fn ce_point_complex_roundtrip() {
        let r = (0.25f64).sqrt();
        let x = array![
            [c(r, 0.0), c(0.0, -r)],
            [c(-r, 0.0), c(r * 0.6, r * 0.8)],
            [c(0.0, r), c(r, 0.0)],
            [c(r * 0.8, -r * 0.6), c(0.0, r)],
        ];
        let p = CEPoint::from_complex(&x, 1.0).unwrap();
        assert_eq!(p.to_complex(), x);
    }

    #[test]
    fn channel_csv_roundtrip() {
        let mut rng = stream_rng(19, 0);
        let h = rayleigh_channel(3, 7, &mut rng).unwrap();
        let mut buf = Vec::new();
        h.dump_csv(&mut buf).unwrap();
        let back = Channel::load_csv(&buf[..]).unwrap();
        assert_eq!(h.matrix(), back.matrix());
    }

    #[test]
    fn channel_csv_rejects_garbage() {
        assert!(Channel::load_csv(&b""[..]).is_err());
        assert!(Channel::load_csv(&b"1.0,2.0,3.0"[..]).is_err());
        assert!(Channel::load_csv(&b"1.0,x"[..]).is_err());
        assert!(Channel::load_csv(&b"1.0,2.0\n1.0,2.0,3.0,4.0"[..]).is_err());
    }
}

//! Square QAM alphabets on the odd-integer grid.
//!
//! A constellation with `half_levels = L` has per-dimension amplitudes
//! `{±1, ±3, …, ±(2L−1)}`, so `(2L)²` points in total: L = 1 is QPSK,
//! L = 2 is 16-QAM, L = 4 is 64-QAM. Each real dimension carries an
//! independent Gray label, so neighboring decisions differ in one bit.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QamConstellation {
    half_levels: usize,
    bits_per_level: usize,
    points: Vec<Complex64>,
}

/// Reflected-binary Gray code of a level index.
fn gray(v: usize) -> usize {
    v ^ (v >> 1)
}

/// Inverse of `gray` for indices of any width.
fn gray_inv(g: usize) -> usize {
    let mut v = g;
    let mut shift = 1;
    while (v >> shift) != 0 {
        v ^= v >> shift;
        shift <<= 1;
    }
    v
}

impl QamConstellation {
    /// A square QAM alphabet with `half_levels` amplitudes per side of zero.
    /// `2 * half_levels` must be a power of two so that every level maps to
    /// a whole number of bits.
    pub fn new(half_levels: usize) -> Result<Self> {
        if half_levels == 0 {
            return Err(Error::config("half_levels must be at least 1"));
        }
        let levels = 2 * half_levels;
        if !levels.is_power_of_two() {
            return Err(Error::config(format!(
                "2 * half_levels = {levels} must be a power of two (got half_levels = {half_levels})"
            )));
        }
        let bits_per_level = levels.trailing_zeros() as usize;
        let mut points = Vec::with_capacity(levels * levels);
        for re_level in 0..levels {
            for im_level in 0..levels {
                points.push(Complex64::new(
                    Self::amplitude_of(re_level, half_levels),
                    Self::amplitude_of(im_level, half_levels),
                ));
            }
        }
        Ok(Self { half_levels, bits_per_level, points })
    }

    fn amplitude_of(level: usize, half_levels: usize) -> f64 {
        (2 * level + 1) as f64 - (2 * half_levels) as f64
    }

    pub fn half_levels(&self) -> usize {
        self.half_levels
    }

    /// Largest per-dimension amplitude, `2L − 1`.
    pub fn max_amplitude(&self) -> f64 {
        (2 * self.half_levels - 1) as f64
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_level
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Average symbol energy over the alphabet: `2(4L² − 1)/3`.
    pub fn mean_symbol_energy(&self) -> f64 {
        let l = self.half_levels as f64;
        2.0 * (4.0 * l * l - 1.0) / 3.0
    }

    /// True if either coordinate of `s` sits at the outermost amplitude.
    /// Decisions for such coordinates have a one-sided error region.
    pub fn is_boundary(&self, s: Complex64) -> bool {
        let m = self.max_amplitude();
        s.re.abs() == m || s.im.abs() == m
    }

    /// Nearest level index (0 ..= 2L−1) for a received coordinate already
    /// divided by the gain. Rounds to the nearest odd integer, then clips
    /// to the grid. NaN input (0/0 from a degenerate gain) maps to level 0
    /// so error counting stays deterministic.
    fn nearest_level(&self, c: f64) -> usize {
        if c.is_nan() {
            return 0;
        }
        let m = self.max_amplitude();
        let odd = (2.0 * ((c - 1.0) / 2.0).round() + 1.0).clamp(-m, m);
        ((odd + m) / 2.0) as usize
    }

    /// Level index of an exact alphabet amplitude.
    fn level_of(&self, coord: f64) -> Result<usize> {
        let m = self.max_amplitude();
        let idx = (coord + m) / 2.0;
        let level = idx.round();
        if (idx - level).abs() > 1e-9 || !(0.0..=(2 * self.half_levels - 1) as f64).contains(&level)
        {
            return Err(Error::domain(format!(
                "coordinate {coord} is not a {}-QAM amplitude",
                self.num_points()
            )));
        }
        Ok(level as usize)
    }

    /// Minimum-distance decision: scale `y` by the gain `d` and round each
    /// coordinate to the nearest grid amplitude.
    pub fn decide(&self, y: Complex64, d: f64) -> Result<Complex64> {
        if d <= 0.0 {
            return Err(Error::domain(format!("decision gain must be positive, got {d}")));
        }
        let re_level = self.nearest_level(y.re / d);
        let im_level = self.nearest_level(y.im / d);
        Ok(Complex64::new(
            Self::amplitude_of(re_level, self.half_levels),
            Self::amplitude_of(im_level, self.half_levels),
        ))
    }

    /// Gray bit label of an alphabet point: the real-dimension label in the
    /// high bits, imaginary in the low bits. Bit errors between two points
    /// are the Hamming distance between their labels.
    pub fn bit_label(&self, s: Complex64) -> Result<u32> {
        let re_level = self.level_of(s.re)?;
        let im_level = self.level_of(s.im)?;
        Ok(((gray(re_level) << self.bits_per_level) | gray(im_level)) as u32)
    }

    /// Map a bit stream (values 0/1, MSB first within each symbol) onto
    /// alphabet points. The length must be a multiple of `bits_per_symbol`.
    pub fn bits_to_symbols(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(Error::domain(format!(
                "bit stream length {} is not a multiple of {bps}",
                bits.len()
            )));
        }
        bits.chunks_exact(bps)
            .map(|chunk| {
                let mut label = 0usize;
                for &b in chunk {
                    if b > 1 {
                        return Err(Error::domain(format!("bit value {b} is not 0 or 1")));
                    }
                    label = (label << 1) | b as usize;
                }
                let re_level = gray_inv(label >> self.bits_per_level);
                let im_level = gray_inv(label & ((1 << self.bits_per_level) - 1));
                Ok(Complex64::new(
                    Self::amplitude_of(re_level, self.half_levels),
                    Self::amplitude_of(im_level, self.half_levels),
                ))
            })
            .collect()
    }

    /// Inverse of `bits_to_symbols`.
    pub fn symbols_to_bits(&self, symbols: &[Complex64]) -> Result<Vec<u8>> {
        let bps = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(symbols.len() * bps);
        for &s in symbols {
            let label = self.bit_label(s)?;
            for k in (0..bps).rev() {
                bits.push(((label >> k) & 1) as u8);
            }
        }
        Ok(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sixteen_qam_shape() {
        let q = QamConstellation::new(2).unwrap();
        assert_eq!(q.num_points(), 16);
        assert_eq!(q.bits_per_symbol(), 4);
        for p in q.points() {
            assert!([-3.0, -1.0, 1.0, 3.0].contains(&p.re));
            assert!([-3.0, -1.0, 1.0, 3.0].contains(&p.im));
        }
        assert_eq!(q.mean_symbol_energy(), 10.0);
    }

    #[test]
    fn qpsk_and_sixty_four_qam_shape() {
        let qpsk = QamConstellation::new(1).unwrap();
        assert_eq!(qpsk.num_points(), 4);
        assert_eq!(qpsk.bits_per_symbol(), 2);
        for p in qpsk.points() {
            assert_eq!(p.re.abs(), 1.0);
            assert_eq!(p.im.abs(), 1.0);
        }

        let q64 = QamConstellation::new(4).unwrap();
        assert_eq!(q64.num_points(), 64);
        assert_eq!(q64.bits_per_symbol(), 6);
        assert_eq!(q64.max_amplitude(), 7.0);
        assert_eq!(q64.mean_symbol_energy(), 42.0);
    }

    #[test]
    fn rejects_sizes_with_fractional_bits() {
        assert!(QamConstellation::new(0).is_err());
        assert!(QamConstellation::new(3).is_err());
        assert!(QamConstellation::new(5).is_err());
        assert!(QamConstellation::new(8).is_ok());
    }

    #[test]
    fn decide_rounds_to_nearest_point() {
        let q = QamConstellation::new(2).unwrap();
        assert_eq!(q.decide(c(2.2, 0.9), 1.0).unwrap(), c(3.0, 1.0));
        // Same receive point, gain 2: coordinates halve before rounding.
        assert_eq!(q.decide(c(2.2, 0.9), 2.0).unwrap(), c(1.0, 1.0));
    }

    #[test]
    fn decide_clips_to_the_grid() {
        let q = QamConstellation::new(2).unwrap();
        assert_eq!(q.decide(c(100.0, 100.0), 1.0).unwrap(), c(3.0, 3.0));
        assert_eq!(q.decide(c(-50.0, 0.2), 1.0).unwrap(), c(-3.0, 1.0));
    }

    #[test]
    fn decide_is_identity_on_scaled_alphabet_points() {
        let q = QamConstellation::new(4).unwrap();
        for &s in q.points() {
            assert_eq!(q.decide(s * 0.37, 0.37).unwrap(), s);
        }
    }

    #[test]
    fn decide_rejects_nonpositive_gain() {
        let q = QamConstellation::new(2).unwrap();
        assert!(q.decide(c(1.0, 1.0), 0.0).is_err());
        assert!(q.decide(c(1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn bits_roundtrip_all_labels() {
        for half in [1usize, 2, 4] {
            let q = QamConstellation::new(half).unwrap();
            let bps = q.bits_per_symbol();
            for label in 0..q.num_points() {
                let bits: Vec<u8> = (0..bps).rev().map(|k| ((label >> k) & 1) as u8).collect();
                let syms = q.bits_to_symbols(&bits).unwrap();
                assert_eq!(syms.len(), 1);
                assert_eq!(q.symbols_to_bits(&syms).unwrap(), bits);
            }
        }
    }

    #[test]
    fn six_thousand_bits_make_one_thousand_symbols() {
        let q = QamConstellation::new(4).unwrap();
        let bits: Vec<u8> = (0..6000).map(|i| ((i * 7 + i / 13) % 2) as u8).collect();
        let syms = q.bits_to_symbols(&bits).unwrap();
        assert_eq!(syms.len(), 1000);
        assert_eq!(q.symbols_to_bits(&syms).unwrap(), bits);
    }

    #[test]
    fn rejects_misaligned_bit_streams_and_bad_points() {
        let q = QamConstellation::new(2).unwrap();
        assert!(q.bits_to_symbols(&[0, 1, 0]).is_err());
        assert!(q.bits_to_symbols(&[0, 1, 2, 0]).is_err());
        assert!(q.bit_label(c(0.5, 1.0)).is_err());
        assert!(q.bit_label(c(5.0, 1.0)).is_err());
    }

    #[test]
    fn gray_labels_of_adjacent_levels_differ_in_one_bit() {
        for half in [1usize, 2, 4] {
            let q = QamConstellation::new(half).unwrap();
            let m = q.max_amplitude() as i64;
            // Walk one amplitude step along each dimension separately.
            for re in (-m..=m).step_by(2) {
                for im in (-m..=m).step_by(2) {
                    let here = q.bit_label(c(re as f64, im as f64)).unwrap();
                    if re + 2 <= m {
                        let right = q.bit_label(c((re + 2) as f64, im as f64)).unwrap();
                        assert_eq!((here ^ right).count_ones(), 1);
                    }
                    if im + 2 <= m {
                        let up = q.bit_label(c(re as f64, (im + 2) as f64)).unwrap();
                        assert_eq!((here ^ up).count_ones(), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_tagging() {
        let q = QamConstellation::new(2).unwrap();
        assert!(q.is_boundary(c(3.0, 1.0)));
        assert!(q.is_boundary(c(1.0, -3.0)));
        assert!(!q.is_boundary(c(1.0, -1.0)));
    }

    proptest! {
        // Perturbations smaller than the gain never change the decision.
        #[test]
        fn decide_tolerates_sub_gain_noise(
            idx in 0usize..16,
            d in 0.1f64..10.0,
            eps_re in -0.99f64..0.99,
            eps_im in -0.99f64..0.99,
        ) {
            let q = QamConstellation::new(2).unwrap();
            let s = q.points()[idx];
            let y = s * d + c(eps_re * d, eps_im * d);
            prop_assert_eq!(q.decide(y, d).unwrap(), s);
        }

        // Decisions depend only on y/d.
        #[test]
        fn decide_is_scale_consistent(
            re in -8.0f64..8.0,
            im in -8.0f64..8.0,
            d in 0.05f64..20.0,
            alpha in 0.05f64..20.0,
        ) {
            let q = QamConstellation::new(2).unwrap();
            let base = q.decide(c(re, im), d).unwrap();
            let scaled = q.decide(c(re * alpha, im * alpha), d * alpha).unwrap();
            prop_assert_eq!(base, scaled);
        }
    }
}

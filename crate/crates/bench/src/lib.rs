//! Shared fixtures for the criterion benches: deterministic instances at
//! the sizes the benchmarks sweep.

use cepre_core::channel::{lift, rayleigh_channel, stack_real};
use cepre_core::objective::{DecisionPoint, SmoothedObjective};
use cepre_core::rng::stream_rng;
use cepre_core::{Channel, QamConstellation, SymbolBlock};

/// One seeded 16-QAM instance: channel, symbol block, and a generic
/// (unprojected) decision point for kernel benchmarks.
pub fn instance(antennas: usize, users: usize, slots: usize, seed: u64) -> Instance {
    let mut rng = stream_rng(seed, 0);
    let channel = rayleigh_channel(users, antennas, &mut rng).expect("valid sizes");
    let constellation = QamConstellation::new(2).expect("16-QAM");
    let block = SymbolBlock::draw_uniform(&constellation, users, slots, &mut rng)
        .expect("valid sizes");
    let probe = rayleigh_channel(antennas, slots, &mut rng).expect("valid sizes");
    let mut xbar = stack_real(&probe.matrix().to_owned());
    xbar.mapv_inplace(|v| 0.2 * v);
    let point = DecisionPoint::new(0.4, xbar);
    Instance { channel, block, point }
}

pub struct Instance {
    pub channel: Channel,
    pub block: SymbolBlock,
    pub point: DecisionPoint,
}

impl Instance {
    pub fn objective(&self, sigma: f64) -> SmoothedObjective {
        SmoothedObjective::new(lift(&self.channel), &self.block, sigma).expect("valid instance")
    }
}

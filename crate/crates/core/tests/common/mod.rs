#![allow(dead_code)]

use impulsive_noise::chain::{ChainConfig, StatesPerSystem, SystemConfig};

/// Six-state chain at 5 GS/s oscillating at 0.16 cycles/sample (800 MHz).
///
/// Amplitudes are `scale * (2, 5, 9)` background deviations, every system is
/// left with probability `exit_prob` per sample and every group is entered
/// with probability `entry`.
pub fn chain_config(scale: f64, exit_prob: f64, entry: f64) -> ChainConfig {
    ChainConfig {
        states_per_system: StatesPerSystem::Six,
        background_variance: 1.0,
        stay_prob: 0.04,
        entry_probs: [entry; 3],
        sampling_rate_hz: 5e9,
        systems: [2.0, 5.0, 9.0].map(|m| SystemConfig {
            amplitude_mean: m * scale,
            amplitude_variance: 0.25,
            exit_prob,
        }),
    }
}

/// Amplitudes well clear of the detection threshold and ~900 impulses in
/// 10^7 samples.
pub fn detectable_config() -> ChainConfig {
    chain_config(4.0, 0.05, 3e-5)
}

/// The detectable chain scaled down to the recorded amplitudes, with about
/// one impulsive sample in 10^4.
pub fn recorded_scale_config() -> ChainConfig {
    chain_config(1.0, 0.05, 1e-4 / 120.0)
}

//! AWGN channel with carrier-frequency offset and random initial phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    /// Maximum |CFO| as a fraction of the sample rate.
    pub max_cfo: f64,
    pub random_phase: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            max_cfo: 100e-6,
            random_phase: true,
        }
    }
}

impl ChannelConfig {
    /// AWGN only.
    pub fn noise_only() -> Self {
        ChannelConfig {
            max_cfo: 0.0,
            random_phase: false,
        }
    }
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Channel output split into its rotated signal and additive noise.
#[derive(Clone, Debug)]
pub struct Impaired {
    pub signal: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl Impaired {
    pub fn combined(&self) -> Vec<Complex64> {
        self.signal.iter().zip(&self.noise).map(|(s, n)| s + n).collect()
    }
}

pub fn impair_parts(x: &[Complex64], snr_db: f64, seed: u64, cfg: &ChannelConfig) -> Impaired {
    let mut rng = rng::stream(seed, &[0xC4A7]);
    let cfo = if cfg.max_cfo > 0.0 {
        rng.random_range(-cfg.max_cfo..=cfg.max_cfo)
    } else {
        0.0
    };
    let phase0 = if cfg.random_phase {
        rng.random_range(0.0..2.0 * PI)
    } else {
        0.0
    };
    let sigma = (noise_variance(snr_db) / 2.0).sqrt();
    let signal = x
        .iter()
        .enumerate()
        .map(|(n, v)| v * Complex64::from_polar(1.0, phase0 + 2.0 * PI * cfo * n as f64))
        .collect();
    let noise = (0..x.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    Impaired { signal, noise }
}

/// Applies the channel to a unit-power sequence: complex AWGN with total
/// variance `10^(-snr_db/10)` plus CFO and phase rotation per `cfg`.
pub fn impair(x: &[Complex64], snr_db: f64, seed: u64, cfg: &ChannelConfig) -> Vec<Complex64> {
    impair_parts(x, snr_db, seed, cfg).combined()
}

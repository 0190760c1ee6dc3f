//! Baseband waveform synthesis for the eleven modulation classes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::ModulationClass;
use crate::rng;

pub const SAMPLES_PER_SYMBOL: usize = 8;
pub const RRC_ROLLOFF: f64 = 0.35;
/// Root-raised-cosine span in symbols; the filter has `span * sps + 1` taps.
pub const RRC_SPAN: usize = 8;
pub const RRC_TAPS: usize = RRC_SPAN * SAMPLES_PER_SYMBOL + 1;
/// Modulation index of both frequency-shift classes.
pub const FSK_INDEX: f64 = 0.5;
pub const GFSK_BT: f64 = 0.35;
pub const AM_INDEX: f64 = 0.5;
/// Peak frequency deviation of WBFM in cycles per sample (75 kHz at a
/// nominal 1 MS/s).
pub const WBFM_DEVIATION: f64 = 0.075;
/// Message low-pass cutoff: 15 % of Nyquist, in cycles per sample.
pub const MESSAGE_CUTOFF: f64 = 0.15 * 0.5;

fn gray_to_index(g: u32) -> u32 {
    let mut n = g;
    let mut shift = g >> 1;
    while shift != 0 {
        n ^= shift;
        shift >>= 1;
    }
    n
}

fn bits_to_int(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u32::from(b & 1))
}

/// Gray-coded PAM level `2p - (L-1)` for the given bits, unnormalized.
fn gray_pam(bits: &[u8]) -> f64 {
    let levels = 1u32 << bits.len();
    let p = gray_to_index(bits_to_int(bits));
    2.0 * p as f64 - (levels - 1) as f64
}

/// Maps bits to unit-average-power constellation symbols. Returns `None`
/// for the analog classes and the frequency-shift classes, which are not
/// built from a constellation.
pub fn map_bits(class: ModulationClass, bits: &[u8]) -> Option<Vec<Complex64>> {
    let k = class.bits_per_symbol()?;
    let mut out = Vec::with_capacity(bits.len() / k);
    for chunk in bits.chunks_exact(k) {
        let s = match class {
            ModulationClass::Bpsk => Complex64::new(if chunk[0] == 0 { 1.0 } else { -1.0 }, 0.0),
            ModulationClass::Qpsk => {
                let i = 1.0 - 2.0 * f64::from(chunk[1]);
                let q = 1.0 - 2.0 * f64::from(chunk[0]);
                Complex64::new(i, q) / 2f64.sqrt()
            }
            ModulationClass::Psk8 => {
                let p = gray_to_index(bits_to_int(chunk));
                Complex64::from_polar(1.0, 2.0 * PI * p as f64 / 8.0)
            }
            ModulationClass::Pam4 => Complex64::new(gray_pam(chunk) / 5f64.sqrt(), 0.0),
            ModulationClass::Qam16 | ModulationClass::Qam64 => {
                let half = k / 2;
                let m = (1usize << k) as f64;
                let norm = (2.0 * (m - 1.0) / 3.0).sqrt();
                Complex64::new(gray_pam(&chunk[..half]), gray_pam(&chunk[half..])) / norm
            }
            _ => unreachable!("bits_per_symbol is None for non-constellation classes"),
        };
        out.push(s);
    }
    Some(out)
}

/// Every point of a constellation, in code order.
pub fn constellation(class: ModulationClass) -> Option<Vec<Complex64>> {
    let k = class.bits_per_symbol()?;
    let bits: Vec<u8> = (0..1u32 << k)
        .flat_map(|c| (0..k).rev().map(move |b| ((c >> b) & 1) as u8))
        .collect();
    map_bits(class, &bits)
}

/// Root-raised-cosine impulse response, unit energy.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n / 2) as f64;
    let b = rolloff;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let energy = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= energy);
    h
}

/// Hamming-windowed sinc low-pass with unit DC gain.
fn lowpass_taps(cutoff: f64, n: usize) -> Vec<f64> {
    let mid = (n - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Hamming-windowed ideal Hilbert transformer (odd length).
fn hilbert_taps(n: usize) -> Vec<f64> {
    let mid = (n / 2) as isize;
    (0..n)
        .map(|i| {
            let k = i as isize - mid;
            let ideal = if k % 2 == 0 { 0.0 } else { 2.0 / (PI * k as f64) };
            ideal * (0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        })
        .collect()
}

/// Gaussian frequency pulse for GFSK, unit area.
fn gaussian_taps(bt: f64, sps: usize, span: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n / 2) as f64;
    let alpha = (2f64.ln() / 2.0).sqrt() / bt;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            (-(PI * t / alpha).powi(2)).exp()
        })
        .collect();
    let area: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= area);
    h
}

/// Full linear convolution.
fn convolve<T>(x: &[T], h: &[f64]) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let mut y = vec![T::default(); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            y[i + j] = y[i + j] + xi * hj;
        }
    }
    y
}

pub(crate) fn normalize_power(x: &mut [Complex64]) {
    let p = average_power(x);
    if p > 0.0 {
        let s = p.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    }
}

pub fn average_power(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

fn random_bits(rng: &mut rng::Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}

/// Low-pass Gaussian message scaled to unit peak magnitude.
fn message(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    let taps = lowpass_taps(MESSAGE_CUTOFF, 65);
    let raw: Vec<f64> = (0..n + taps.len() - 1)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let filtered = convolve(&raw, &taps);
    let mut m: Vec<f64> = filtered[taps.len() - 1..taps.len() - 1 + n].to_vec();
    let peak = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        m.iter_mut().for_each(|v| *v /= peak);
    }
    m
}

/// Steady-state burst of `len` samples for `class`, unit average power.
/// Shaping transients (twice the filter length) are discarded before the
/// burst starts.
pub fn modulate(class: ModulationClass, len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rng::stream(seed, &[class.id() as u64]);
    let sps = SAMPLES_PER_SYMBOL;
    let skip = 2 * RRC_TAPS;
    let mut out = match class.bits_per_symbol() {
        Some(k) => {
            let n_sym = (len + 2 * skip).div_ceil(sps) + RRC_SPAN;
            let bits = random_bits(&mut rng, n_sym * k);
            let symbols = map_bits(class, &bits).expect("constellation class");
            let mut up = vec![Complex64::default(); symbols.len() * sps];
            for (i, s) in symbols.iter().enumerate() {
                up[i * sps] = *s;
            }
            let shaped = convolve(&up, &rrc_taps(RRC_ROLLOFF, sps, RRC_SPAN));
            shaped[skip..skip + len].to_vec()
        }
        None => match class {
            ModulationClass::Gfsk | ModulationClass::Cpfsk => {
                let n_sym = (len + 2 * skip).div_ceil(sps) + 1;
                let bits = random_bits(&mut rng, n_sym);
                let nrz: Vec<f64> = bits
                    .iter()
                    .flat_map(|&b| std::iter::repeat_n(if b == 0 { -1.0 } else { 1.0 }, sps))
                    .collect();
                let freq = if class == ModulationClass::Gfsk {
                    let g = gaussian_taps(GFSK_BT, sps, 4);
                    let f = convolve(&nrz, &g);
                    f[g.len() / 2..g.len() / 2 + nrz.len()].to_vec()
                } else {
                    nrz
                };
                let step = PI * FSK_INDEX / sps as f64;
                let mut phase = 0.0;
                let wave: Vec<Complex64> = freq
                    .iter()
                    .map(|f| {
                        phase += step * f;
                        Complex64::from_polar(1.0, phase)
                    })
                    .collect();
                wave[skip..skip + len].to_vec()
            }
            ModulationClass::Wbfm => {
                let m = message(&mut rng, len + skip);
                let mut phase = 0.0;
                let wave: Vec<Complex64> = m
                    .iter()
                    .map(|v| {
                        phase += 2.0 * PI * WBFM_DEVIATION * v;
                        Complex64::from_polar(1.0, phase)
                    })
                    .collect();
                wave[skip..].to_vec()
            }
            ModulationClass::AmDsb => message(&mut rng, len)
                .into_iter()
                .map(|v| Complex64::new(1.0 + AM_INDEX * v, 0.0))
                .collect(),
            ModulationClass::AmSsb => {
                let h = hilbert_taps(63);
                let m = message(&mut rng, len + h.len() - 1);
                let quad = convolve(&m, &h);
                let delay = h.len() / 2;
                (0..len)
                    .map(|i| {
                        let re = m[i + delay];
                        let im = quad[i + 2 * delay];
                        Complex64::new(1.0 + AM_INDEX * re, AM_INDEX * im)
                    })
                    .collect()
            }
            _ => unreachable!("constellation classes handled above"),
        },
    };
    normalize_power(&mut out);
    out
}

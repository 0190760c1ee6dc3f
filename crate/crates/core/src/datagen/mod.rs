//! Synthetic labelled IQ frames shaped like the public 11-class benchmark:
//! 2×128 frames, 20 SNR levels from −20 dB to 18 dB.

mod channel;
mod io;
pub mod modulate;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{par, rng};

pub use channel::{impair, impair_parts, noise_variance, ChannelConfig, Impaired};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use modulate::modulate;

pub const FRAME_LEN: usize = 128;
pub const NUM_CLASSES: usize = 11;
pub const SNR_LEVELS: [i8; 20] = [
    -20, -18, -16, -14, -12, -10, -8, -6, -4, -2, 0, 2, 4, 6, 8, 10, 12, 14, 16, 18,
];
/// Length of each modulated burst a frame window is cut from.
const BURST_LEN: usize = 2 * FRAME_LEN;

/// The eleven modulation classes. Ids follow the names in sorted order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModulationClass {
    Psk8,
    AmDsb,
    AmSsb,
    Bpsk,
    Cpfsk,
    Gfsk,
    Pam4,
    Qam16,
    Qam64,
    Qpsk,
    Wbfm,
}

impl ModulationClass {
    pub const ALL: [ModulationClass; NUM_CLASSES] = [
        Self::Psk8,
        Self::AmDsb,
        Self::AmSsb,
        Self::Bpsk,
        Self::Cpfsk,
        Self::Gfsk,
        Self::Pam4,
        Self::Qam16,
        Self::Qam64,
        Self::Qpsk,
        Self::Wbfm,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::param(format!("unknown modulation class id {id}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Psk8 => "8PSK",
            Self::AmDsb => "AM-DSB",
            Self::AmSsb => "AM-SSB",
            Self::Bpsk => "BPSK",
            Self::Cpfsk => "CPFSK",
            Self::Gfsk => "GFSK",
            Self::Pam4 => "PAM4",
            Self::Qam16 => "QAM16",
            Self::Qam64 => "QAM64",
            Self::Qpsk => "QPSK",
            Self::Wbfm => "WBFM",
        }
    }

    /// Bits per constellation symbol; `None` for classes not built from a
    /// constellation.
    pub fn bits_per_symbol(self) -> Option<usize> {
        match self {
            Self::Bpsk => Some(1),
            Self::Qpsk | Self::Pam4 => Some(2),
            Self::Psk8 => Some(3),
            Self::Qam16 => Some(4),
            Self::Qam64 => Some(6),
            _ => None,
        }
    }
}

pub fn snr_index(snr_db: i8) -> Option<usize> {
    SNR_LEVELS.iter().position(|&s| s == snr_db)
}

/// One 2×128 frame: in-phase row then quadrature row.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFrame {
    pub iq: Vec<f32>,
    pub label: u8,
    pub snr_db: i8,
}

impl SignalFrame {
    pub fn class(&self) -> ModulationClass {
        ModulationClass::ALL[self.label as usize]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![2, FRAME_LEN], self.iq.iter().map(|&v| f64::from(v)).collect())
            .expect("frame has 256 samples")
    }

    pub fn average_power(&self) -> f64 {
        self.iq.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / FRAME_LEN as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Frames with a disjoint, stratified train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    frames: Vec<SignalFrame>,
    split_seed: u64,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl Dataset {
    /// Wraps frames and derives the stratified 50/50 split from `split_seed`.
    pub fn from_frames(frames: Vec<SignalFrame>, split_seed: u64) -> Self {
        let (train_idx, test_idx) = stratified_halves(&frames, split_seed);
        Dataset {
            frames,
            split_seed,
            train_idx,
            test_idx,
        }
    }

    /// Uses an explicit split. Indices must be in range and disjoint.
    pub fn with_split(
        frames: Vec<SignalFrame>,
        split_seed: u64,
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self> {
        let mut seen = vec![false; frames.len()];
        for &i in train_idx.iter().chain(&test_idx) {
            if i >= frames.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param(format!("split index {i} out of range or repeated")));
            }
        }
        Ok(Dataset {
            frames,
            split_seed,
            train_idx,
            test_idx,
        })
    }

    pub fn frames(&self) -> &[SignalFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_idx,
            Split::Test => &self.test_idx,
        }
    }

    /// Stacks frames into a `[B, shape...]` tensor; `shape` must hold 256
    /// elements.
    pub fn batch(&self, idx: &[usize], shape: [usize; 3]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * 2 * FRAME_LEN);
        for &i in idx {
            data.extend(self.frames[i].iq.iter().map(|&v| f64::from(v)));
        }
        Tensor::new(vec![idx.len(), shape[0], shape[1], shape[2]], data)
            .expect("frame shape holds 256 samples")
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.frames[i].label as usize).collect()
    }

    /// Keeps a stratified `fraction` of each (class, SNR) cell of the train
    /// split; the test split is unchanged. Returns the subset and the cells
    /// that ended up with no training frames.
    pub fn subset(&self, fraction: f64, seed: u64) -> Result<(Dataset, Vec<(u8, i8)>)> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::param(format!("subset fraction {fraction} outside (0, 1]")));
        }
        if fraction == 1.0 {
            return Ok((self.clone(), Vec::new()));
        }
        let cells = group_by_cell(&self.frames, &self.train_idx);
        let mut keep = Vec::new();
        let mut empty = Vec::new();
        for (cell, mut members) in cells {
            let mut r = rng::stream(seed, &[cell.0 as u64, cell.1 as u8 as u64, 0x5B5E7]);
            members.shuffle(&mut r);
            let n = (fraction * members.len() as f64).round() as usize;
            if n == 0 {
                empty.push(cell);
            }
            keep.extend_from_slice(&members[..n]);
        }
        keep.sort_unstable();
        let d = Dataset::with_split(self.frames.clone(), self.split_seed, keep, self.test_idx.clone())?;
        Ok((d, empty))
    }
}

fn group_by_cell(frames: &[SignalFrame], idx: &[usize]) -> BTreeMap<(u8, i8), Vec<usize>> {
    let mut cells: BTreeMap<(u8, i8), Vec<usize>> = BTreeMap::new();
    for &i in idx {
        let f = &frames[i];
        cells.entry((f.label, f.snr_db)).or_default().push(i);
    }
    cells
}

/// Per (class, SNR) cell: shuffle, first half to train. Odd cells alternate
/// which side receives the spare frame so the totals stay balanced.
fn stratified_halves(frames: &[SignalFrame], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..frames.len()).collect();
    let mut train = Vec::with_capacity(frames.len() / 2 + 1);
    let mut test = Vec::with_capacity(frames.len() / 2 + 1);
    let mut odd_cells = 0usize;
    for (cell, mut members) in group_by_cell(frames, &all) {
        let mut r = rng::stream(seed, &[cell.0 as u64, cell.1 as u8 as u64, 0x5917]);
        members.shuffle(&mut r);
        let mut n_train = members.len() / 2;
        if members.len() % 2 == 1 {
            if odd_cells.is_multiple_of(2) {
                n_train += 1;
            }
            odd_cells += 1;
        }
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Clean and noisy versions of one frame before quantization to `f32`.
#[derive(Clone, Debug)]
pub struct FrameParts {
    /// Rotated signal window, unit average power.
    pub clean: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl FrameParts {
    /// Final frame: signal plus noise rescaled to unit average power.
    pub fn frame(&self, class: ModulationClass, snr_db: i8) -> SignalFrame {
        let mut x: Vec<Complex64> = self.clean.iter().zip(&self.noise).map(|(s, n)| s + n).collect();
        modulate::normalize_power(&mut x);
        let mut iq = vec![0f32; 2 * FRAME_LEN];
        for (i, v) in x.iter().enumerate() {
            iq[i] = v.re as f32;
            iq[FRAME_LEN + i] = v.im as f32;
        }
        SignalFrame {
            iq,
            label: class.id() as u8,
            snr_db,
        }
    }
}

/// Seed for frame `index` of the (class, SNR) cell under `master`.
pub fn frame_seed(master: u64, class: ModulationClass, snr_db: i8, index: usize) -> u64 {
    let snr_idx = snr_index(snr_db).unwrap_or(usize::MAX) as u64;
    rng::derive(master, &[class.id() as u64, snr_idx, index as u64])
}

pub fn synthesize_parts(class: ModulationClass, snr_db: i8, seed: u64) -> FrameParts {
    let burst = modulate(class, BURST_LEN, seed);
    let mut r = rng::stream(seed, &[0x0FF5E7]);
    let start = r.random_range(0..=BURST_LEN - FRAME_LEN);
    let mut window = burst[start..start + FRAME_LEN].to_vec();
    modulate::normalize_power(&mut window);
    let Impaired { signal, noise } =
        impair_parts(&window, f64::from(snr_db), seed, &ChannelConfig::default());
    FrameParts {
        clean: signal,
        noise,
    }
}

pub fn synthesize_frame(class: ModulationClass, snr_db: i8, seed: u64) -> SignalFrame {
    synthesize_parts(class, snr_db, seed).frame(class, snr_db)
}

/// `11 × 20 × frames_per_cell` frames ordered by (class, SNR, index) with a
/// stratified 50/50 split keyed by `seed`.
pub fn build_dataset(frames_per_cell: usize, seed: u64) -> Result<Dataset> {
    if frames_per_cell == 0 {
        return Err(Error::param("frames_per_class_per_snr must be at least 1"));
    }
    let per_class = SNR_LEVELS.len() * frames_per_cell;
    let total = NUM_CLASSES * per_class;
    let frames = par::map_range(total, |i| {
        let class = ModulationClass::ALL[i / per_class];
        let snr = SNR_LEVELS[(i % per_class) / frames_per_cell];
        let k = i % frames_per_cell;
        synthesize_frame(class, snr, frame_seed(seed, class, snr, k))
    });
    Ok(Dataset::from_frames(frames, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ids_follow_sorted_names() {
        let names: Vec<&str> = ModulationClass::ALL.iter().map(|c| c.name()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for (i, c) in ModulationClass::ALL.iter().enumerate() {
            assert_eq!(c.id(), i);
            assert_eq!(ModulationClass::from_id(i).unwrap(), *c);
        }
        assert!(ModulationClass::from_id(11).is_err());
    }

    #[test]
    fn snr_grid() {
        assert_eq!(SNR_LEVELS.len(), 20);
        assert!(SNR_LEVELS.windows(2).all(|w| w[1] - w[0] == 2));
    }

    #[test]
    fn small_dataset_counts_and_split() {
        let d = build_dataset(10, 7).unwrap();
        assert_eq!(d.len(), 2200);
        assert_eq!(d.indices(Split::Train).len(), 1100);
        assert_eq!(d.indices(Split::Test).len(), 1100);
        let mut seen = vec![0u8; d.len()];
        for &i in d.indices(Split::Train).iter().chain(d.indices(Split::Test)) {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&s| s == 1));
        let tr = group_by_cell(d.frames(), d.indices(Split::Train));
        let te = group_by_cell(d.frames(), d.indices(Split::Test));
        assert_eq!(tr.len(), 220);
        for (cell, members) in &tr {
            assert!((members.len() as isize - te[cell].len() as isize).abs() <= 1);
        }
        assert!(build_dataset(0, 1).is_err());
    }

    #[test]
    fn odd_cells_stay_balanced() {
        let d = build_dataset(3, 1).unwrap();
        assert_eq!(d.indices(Split::Train).len(), d.indices(Split::Test).len());
    }

    #[test]
    fn frames_are_unit_power_and_deterministic() {
        let a = synthesize_frame(ModulationClass::Qam16, -10, 42);
        let b = synthesize_frame(ModulationClass::Qam16, -10, 42);
        assert_eq!(a, b);
        assert!((a.average_power() - 1.0).abs() < 1e-5);
        let parts = synthesize_parts(ModulationClass::Wbfm, 4, 3);
        assert!((modulate::average_power(&parts.clean) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn subset_fractions() {
        let d = build_dataset(10, 7).unwrap();
        let (same, empty) = d.subset(1.0, 3).unwrap();
        assert_eq!(same, d);
        assert!(empty.is_empty());
        let (a, _) = d.subset(0.5, 3).unwrap();
        let (b, _) = d.subset(0.5, 3).unwrap();
        assert_eq!(a, b);
        let (tenth, _) = d.subset(0.1, 3).unwrap();
        assert_eq!(tenth.indices(Split::Train).len(), 220);
        assert_eq!(tenth.indices(Split::Test), d.indices(Split::Test));
        assert!(d.subset(0.0, 1).is_err());
        assert!(d.subset(1.5, 1).is_err());
    }
}

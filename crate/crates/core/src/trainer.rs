//! Supervised training, evaluation, and their CSV outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::datagen::{Dataset, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};
use crate::zoo::{ForwardOptions, ModelGraph};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Layers whose parameters stay fixed.
    pub frozen: BTreeSet<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 0,
            frozen: BTreeSet::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        Ok(())
    }
}

/// Builds the scalar training loss for one batch from the model's logits.
pub trait Objective: Sync {
    fn loss(&self, tape: &mut Tape, logits: Var, idx: &[usize], d: &Dataset) -> Result<Var>;
}

/// Softmax followed by mean cross-entropy against the frame labels.
pub struct CrossEntropy;

impl Objective for CrossEntropy {
    fn loss(&self, tape: &mut Tape, logits: Var, idx: &[usize], d: &Dataset) -> Result<Var> {
        let p = tape.softmax_t(logits, 1.0)?;
        tape.cross_entropy(p, &d.labels(idx))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelGraph,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.loss_history.iter().enumerate() {
            writeln!(s, "{},{l}", e + 1).unwrap();
        }
        s
    }
}

/// Trains on the dataset's train split with cross-entropy.
pub fn train(m: &ModelGraph, d: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(m, d, d.indices(Split::Train), cfg, &CrossEntropy)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Mini-batch training on `indices` with an arbitrary objective.
pub fn train_with(
    m: &ModelGraph,
    d: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
    objective: &dyn Objective,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    if m.input_shape().iter().product::<usize>() != 2 * crate::datagen::FRAME_LEN {
        return Err(Error::dim(format!("model input {:?} does not hold a 2x128 frame", m.input_shape())));
    }
    for name in &cfg.frozen {
        if m.layer(name).is_none() {
            return Err(Error::Config(format!("frozen layer {name:?} does not exist")));
        }
    }
    let mut model = m.clone();
    let mut state: BTreeMap<String, AdamState> = BTreeMap::new();
    let mut step = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = indices.to_vec();
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(indices);
        order.shuffle(&mut rng::stream(cfg.seed, &[epoch as u64, 0x5AFF]));
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let x = tape.constant(d.batch(idx, model.input_shape()));
            let opts = ForwardOptions {
                training: true,
                dropout_seed: rng::derive(cfg.seed, &[epoch as u64, b as u64, 0xD0]),
                frozen: cfg.frozen.clone(),
                no_grad: false,
            };
            let fwd = model.forward(&mut tape, x, &opts)?;
            let loss = objective.loss(&mut tape, fwd.logits, idx, d)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {value} at epoch {} batch {b}; the learning rate is likely too high",
                    epoch + 1
                )));
            }
            total += value * idx.len() as f64;
            tape.backward(loss)?;
            step += 1;
            for (key, var) in &fwd.params {
                let Some(g) = tape.grad(*var) else { continue };
                let p = model.param_mut(key).expect("forward only uses stored params");
                apply(cfg, step, p, g, state.entry(key.clone()).or_insert_with(|| AdamState {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                }));
                if !p.is_finite() {
                    return Err(Error::Numerical(format!(
                        "parameter {key} diverged at epoch {} batch {b}; the learning rate is likely too high",
                        epoch + 1
                    )));
                }
            }
        }
        history.push(total / indices.len() as f64);
    }
    model.set_trained();
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

fn apply(cfg: &TrainConfig, step: i32, p: &mut Tensor, g: &[f64], s: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (w, gi) in p.data_mut().iter_mut().zip(g) {
                *w -= lr * gi;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for (((w, &gi), m), v) in p.data_mut().iter_mut().zip(g).zip(&mut s.m).zip(&mut s.v) {
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

const EVAL_BATCH: usize = 256;

/// Eval-mode `softmax(logits / t)` rows for the given frames, in order.
pub fn probabilities(m: &ModelGraph, d: &Dataset, idx: &[usize], t: f64) -> Result<Vec<f64>> {
    let chunks: Vec<&[usize]> = idx.chunks(EVAL_BATCH).collect();
    let parts = crate::par::map_range(chunks.len(), |i| -> Result<Vec<f64>> {
        let mut logits = m.logits(d.batch(chunks[i], m.input_shape()))?;
        for row in logits.data_mut().chunks_mut(NUM_CLASSES) {
            crate::tensor::softmax_row(row, t);
        }
        Ok(logits.into_data())
    });
    let mut out = Vec::with_capacity(idx.len() * NUM_CLASSES);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Predicted class per frame.
pub fn predict(m: &ModelGraph, d: &Dataset, idx: &[usize]) -> Result<Vec<usize>> {
    let chunks: Vec<&[usize]> = idx.chunks(EVAL_BATCH).collect();
    let parts = crate::par::map_range(chunks.len(), |i| -> Result<Vec<usize>> {
        Ok(m.logits(d.batch(chunks[i], m.input_shape()))?.argmax_rows())
    });
    let mut out = Vec::with_capacity(idx.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub overall_acc: f64,
    pub acc_by_snr: BTreeMap<i8, f64>,
    pub count_by_snr: BTreeMap<i8, u64>,
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl EvalResult {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("snr_db,accuracy\n");
        for (snr, acc) in &self.acc_by_snr {
            writeln!(s, "{snr},{acc}").unwrap();
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in crate::datagen::ModulationClass::ALL {
            write!(s, ",{}", c.name()).unwrap();
        }
        s.push('\n');
        for (c, row) in crate::datagen::ModulationClass::ALL.iter().zip(&self.confusion) {
            s.push_str(c.name());
            for n in row {
                write!(s, ",{n}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Scores predictions against labels and groups accuracy by SNR.
pub fn score(d: &Dataset, idx: &[usize], predicted: &[usize]) -> Result<EvalResult> {
    if idx.is_empty() {
        return Err(Error::param("evaluation split is empty"));
    }
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut hits: BTreeMap<i8, (u64, u64)> = BTreeMap::new();
    let mut correct = 0u64;
    for (&i, &p) in idx.iter().zip(predicted) {
        let f = &d.frames()[i];
        let y = f.label as usize;
        confusion[y][p] += 1;
        let e = hits.entry(f.snr_db).or_default();
        e.1 += 1;
        if y == p {
            e.0 += 1;
            correct += 1;
        }
    }
    Ok(EvalResult {
        overall_acc: correct as f64 / idx.len() as f64,
        acc_by_snr: hits.iter().map(|(&s, &(c, n))| (s, c as f64 / n as f64)).collect(),
        count_by_snr: hits.iter().map(|(&s, &(_, n))| (s, n)).collect(),
        confusion,
    })
}

pub fn evaluate(m: &ModelGraph, d: &Dataset, split: Split) -> Result<EvalResult> {
    let idx = d.indices(split);
    if idx.is_empty() {
        return Err(Error::param("evaluation split is empty"));
    }
    score(d, idx, &predict(m, d, idx)?)
}

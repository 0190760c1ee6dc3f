//! Knowledge distillation and the two pipelines built on it: distill then
//! prune, and distill then quantize.

use std::fmt::Write as _;

use crate::datagen::{Dataset, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nettrim::{self, NetTrimConfig, PruneReport};
use crate::pq::{self, PqConfig, QuantReport};
use crate::tensor::{Tape, Tensor, Var};
use crate::trainer::{self, CrossEntropy, Objective, TrainConfig, TrainOutcome};
use crate::zoo::{count_params, Architecture, ModelGraph};

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight of the distillation term; `1 − alpha` weighs cross-entropy.
    pub alpha: f64,
    /// Multiply the distillation term by `T²`.
    pub t2_scaling: bool,
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            temperature: 10.0,
            alpha: 0.5,
            t2_scaling: true,
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        self.train.validate()
    }

    fn kd_weight(&self) -> f64 {
        let t2 = if self.t2_scaling {
            self.temperature * self.temperature
        } else {
            1.0
        };
        self.alpha * t2
    }
}

/// `α·T²·KL(p_teacher,T ‖ p_student,T) + (1−α)·CE(p_student,1)` with the
/// teacher's softened outputs precomputed per frame.
pub struct KdLoss {
    teacher_probs: Vec<f64>,
    /// Row of each dataset frame in `teacher_probs`.
    row_of: Vec<usize>,
    cfg: DistillConfig,
}

impl KdLoss {
    pub fn new(teacher: &ModelGraph, d: &Dataset, idx: &[usize], cfg: &DistillConfig) -> Result<Self> {
        let teacher_probs = if cfg.alpha > 0.0 {
            trainer::probabilities(teacher, d, idx, cfg.temperature)?
        } else {
            Vec::new()
        };
        let mut row_of = vec![usize::MAX; d.len()];
        for (r, &i) in idx.iter().enumerate() {
            row_of[i] = r;
        }
        Ok(KdLoss {
            teacher_probs,
            row_of,
            cfg: cfg.clone(),
        })
    }

    fn teacher_batch(&self, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * NUM_CLASSES);
        for &i in idx {
            let r = self.row_of[i];
            data.extend_from_slice(&self.teacher_probs[r * NUM_CLASSES..(r + 1) * NUM_CLASSES]);
        }
        Tensor::new(vec![idx.len(), NUM_CLASSES], data)
    }

    /// The distillation term alone, unweighted.
    pub fn kl_term(&self, tape: &mut Tape, logits: Var, idx: &[usize]) -> Result<Var> {
        let q = tape.softmax_t(logits, self.cfg.temperature)?;
        let p = tape.constant(self.teacher_batch(idx)?);
        tape.kl_divergence(p, q)
    }
}

impl Objective for KdLoss {
    fn loss(&self, tape: &mut Tape, logits: Var, idx: &[usize], d: &Dataset) -> Result<Var> {
        let a = self.cfg.alpha;
        if a == 0.0 {
            return CrossEntropy.loss(tape, logits, idx, d);
        }
        let kl = self.kl_term(tape, logits, idx)?;
        let kd = tape.scale(kl, self.cfg.kd_weight());
        if a == 1.0 {
            return Ok(kd);
        }
        let ce = CrossEntropy.loss(tape, logits, idx, d)?;
        let ce = tape.scale(ce, 1.0 - a);
        tape.add(kd, ce)
    }
}

/// Trains `student` against the frozen `teacher` on the train split.
pub fn distill(teacher: &ModelGraph, student: &ModelGraph, d: &Dataset, cfg: &DistillConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !teacher.provenance.trained {
        return Err(Error::param("teacher model has not been trained"));
    }
    let idx = d.indices(Split::Train);
    let loss = KdLoss::new(teacher, d, idx, cfg)?;
    let mut out = trainer::train_with(student, d, idx, &cfg.train, &loss)?;
    out.model.provenance.record(
        "distill",
        [
            ("teacher", teacher.arch.id().to_string()),
            ("teacher_hash", teacher.hash()),
            ("temperature", cfg.temperature.to_string()),
            ("alpha", cfg.alpha.to_string()),
            ("t2_scaling", cfg.t2_scaling.to_string()),
            ("epochs", cfg.train.epochs.to_string()),
            ("seed", cfg.train.seed.to_string()),
        ],
    );
    Ok(out)
}

/// Student/teacher pairing with its parameter reduction ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct KdCase {
    pub name: String,
    pub student: Architecture,
    pub teacher: Architecture,
    pub student_params: u64,
    pub teacher_params: u64,
    pub reduction_ratio: f64,
}

impl KdCase {
    pub fn new(name: &str, student: Architecture, student_params: u64, teacher: Architecture, teacher_params: u64) -> Result<Self> {
        if student_params == 0 || student_params >= teacher_params {
            return Err(Error::param(format!(
                "student ({student_params} params) must be smaller than teacher ({teacher_params})"
            )));
        }
        Ok(KdCase {
            name: name.into(),
            student,
            teacher,
            student_params,
            teacher_params,
            reduction_ratio: student_params as f64 / teacher_params as f64,
        })
    }

    /// Case from the published full-size parameter counts.
    pub fn reference(name: &str, student: Architecture, teacher: Architecture) -> Result<Self> {
        KdCase::new(
            name,
            student,
            student.reference_params().round() as u64,
            teacher,
            teacher.reference_params().round() as u64,
        )
    }

    /// Case from the counts of two actual models.
    pub fn from_models(name: &str, student: &ModelGraph, teacher: &ModelGraph) -> Result<Self> {
        KdCase::new(
            name,
            student.arch,
            count_params(student).total,
            teacher.arch,
            count_params(teacher).total,
        )
    }
}

/// The three pairings: VTCNN2 from Inception, VTCNN2 from ResNet, ResNet
/// from Inception.
pub fn standard_cases() -> [(&'static str, Architecture, Architecture); 3] {
    [
        ("I", Architecture::Vtcnn2, Architecture::InceptionMini),
        ("II", Architecture::Vtcnn2, Architecture::ResnetMini),
        ("III", Architecture::ResnetMini, Architecture::InceptionMini),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdCaseRow {
    pub case: KdCase,
    pub baseline_acc: Option<f64>,
    pub distilled_acc: Option<f64>,
}

impl KdCaseRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.distilled_acc? - self.baseline_acc?)
    }
}

pub fn kd_case_table(rows: &[KdCaseRow]) -> String {
    let mut s = String::from(
        "case,student,teacher,student_params,teacher_params,reduction_ratio,baseline_acc,distilled_acc,delta\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let c = &r.case;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.name,
            c.student.id(),
            c.teacher.id(),
            c.student_params,
            c.teacher_params,
            c.reduction_ratio,
            opt(r.baseline_acc),
            opt(r.distilled_acc),
            opt(r.delta())
        )
        .unwrap();
    }
    s
}

/// Distills the student, then prunes its first FC layer.
pub fn distilled_pruning(
    teacher: &ModelGraph,
    student: &ModelGraph,
    d: &Dataset,
    kd: &DistillConfig,
    n_samples: usize,
    nt: &NetTrimConfig,
) -> Result<(ModelGraph, PruneReport)> {
    let distilled = distill(teacher, student, d, kd)?.model;
    nettrim::prune_model(&distilled, d, n_samples, kd.train.seed, nt)
}

/// Distills the student, then product-quantizes its first FC layer.
pub fn distilled_quantization(
    teacher: &ModelGraph,
    student: &ModelGraph,
    d: &Dataset,
    kd: &DistillConfig,
    pq_cfg: &PqConfig,
) -> Result<(ModelGraph, QuantReport)> {
    let distilled = distill(teacher, student, d, kd)?.model;
    let fc = distilled.first_fc().to_string();
    pq::quantize_model(&distilled, &fc, pq_cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_ratios() {
        let r = |s, t| KdCase::reference("x", s, t).unwrap().reduction_ratio;
        assert!((r(Architecture::Vtcnn2, Architecture::InceptionMini) - 0.28).abs() < 0.005);
        assert!((r(Architecture::Vtcnn2, Architecture::ResnetMini) - 0.82).abs() < 0.005);
        assert!((r(Architecture::ResnetMini, Architecture::InceptionMini) - 0.34).abs() < 0.005);
        assert!(KdCase::reference("x", Architecture::Vtcnn2, Architecture::Vtcnn2).is_err());
    }

    #[test]
    fn config_ranges() {
        let bad = DistillConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DistillConfig {
            temperature: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(DistillConfig::default().validate().is_ok());
    }

    #[test]
    fn untrained_teacher_rejected() {
        let d = crate::datagen::build_dataset(1, 1).unwrap();
        let t = crate::zoo::build_resnet_mini(0.125, 0).unwrap();
        let s = crate::zoo::build_resnet_mini(0.125, 1).unwrap();
        assert!(distill(&t, &s, &d, &DistillConfig::default()).is_err());
    }
}

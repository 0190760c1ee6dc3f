//! The `edgeamc` command line: one subcommand per pipeline stage, each
//! writing a run directory of deterministic artifacts.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datagen::{build_dataset, load_dataset, save_dataset, Dataset, Split};
use crate::distill::{self, DistillConfig};
use crate::error::{Error, Result};
use crate::nettrim::{self, NetTrimConfig};
use crate::pq::{self, PqConfig};
use crate::report::{self, CompressionReport, Method, Series};
use crate::trainer::{self, EvalResult, Optimizer, TrainConfig};
use crate::zoo::{load_model, save_model, Architecture, ModelGraph};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FILE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "edgeamc", version, about = "Train and compress CNN modulation classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a labelled IQ dataset.
    #[command(allow_negative_numbers = true)]
    GenData(GenDataArgs),
    /// Train a model from scratch.
    #[command(allow_negative_numbers = true)]
    Train(TrainArgs),
    /// Evaluate a model per SNR.
    #[command(allow_negative_numbers = true)]
    Eval(EvalArgs),
    /// Net-Trim the first FC layer.
    #[command(allow_negative_numbers = true)]
    Prune(PruneArgs),
    /// Product-quantize the first FC layer.
    #[command(allow_negative_numbers = true)]
    Quantize(QuantizeArgs),
    /// Retrain a quantized model with its PQ layer frozen.
    #[command(allow_negative_numbers = true)]
    Retrain(RetrainArgs),
    /// Distill a student from a trained teacher.
    #[command(allow_negative_numbers = true)]
    Distill(DistillArgs),
    /// Distill, then prune.
    #[command(allow_negative_numbers = true)]
    Dp(DpArgs),
    /// Distill, then quantize.
    #[command(allow_negative_numbers = true)]
    Dq(DqArgs),
    /// Tabulate finished runs.
    #[command(allow_negative_numbers = true)]
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Frames per (class, SNR) cell.
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug, Clone)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainingFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            optimizer: match self.optimizer {
                OptimizerArg::Adam => Optimizer::adam(),
                OptimizerArg::Sgd => Optimizer::Sgd,
            },
            seed: self.seed,
            frozen: Default::default(),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value = "vtcnn2")]
    pub arch: String,
    #[arg(long, default_value_t = 1.0)]
    pub width_scale: f64,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainingFlags,
    /// Seed for weight initialization (defaults to --seed).
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct TrimFlags {
    /// ε relative to ‖Y‖_F.
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    /// Absolute ε; overrides --epsilon.
    #[arg(long)]
    pub epsilon_abs: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl TrimFlags {
    fn config(&self) -> NetTrimConfig {
        NetTrimConfig {
            epsilon_rel: self.epsilon,
            epsilon_abs: self.epsilon_abs,
            rho: self.rho,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub trim: TrimFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PqFlags {
    #[arg(long, default_value_t = 2)]
    pub subspaces: usize,
    #[arg(long, default_value_t = 256)]
    pub centroids: usize,
    #[arg(long, default_value_t = 100)]
    pub kmeans_iter: usize,
}

impl PqFlags {
    fn config(&self, seed: u64) -> PqConfig {
        PqConfig {
            kmeans_max_iter: self.kmeans_iter,
            ..PqConfig::new(self.subspaces, self.centroids, seed)
        }
    }
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub pq: PqFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RetrainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[command(flatten)]
    pub train: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct KdFlags {
    /// Trained teacher model or run directory.
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long, default_value = "vtcnn2")]
    pub student_arch: String,
    #[arg(long, default_value_t = 1.0)]
    pub width_scale: f64,
    #[arg(long, default_value_t = 10.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Don't multiply the distillation loss by T².
    #[arg(long)]
    pub no_t2: bool,
    /// Seed for the student's initialization (defaults to --seed).
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Run directory of the benchmark model, for accuracy deltas.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainingFlags,
}

impl KdFlags {
    fn config(&self) -> DistillConfig {
        DistillConfig {
            temperature: self.temperature,
            alpha: self.alpha,
            t2_scaling: !self.no_t2,
            train: self.train.config(),
        }
    }

    /// Accuracy of `--baseline`, else of the teacher's own run.
    fn baseline_accuracy(&self) -> Option<f64> {
        recorded_accuracy(self.baseline.as_deref().unwrap_or(&self.teacher))
    }

    fn student(&self) -> Result<ModelGraph> {
        Architecture::parse(&self.student_arch)?.build(self.width_scale, self.init_seed.unwrap_or(self.train.seed))
    }
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    #[command(flatten)]
    pub kd: KdFlags,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DpArgs {
    #[command(flatten)]
    pub kd: KdFlags,
    #[command(flatten)]
    pub trim: TrimFlags,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DqArgs {
    #[command(flatten)]
    pub kd: KdFlags,
    #[command(flatten)]
    pub pq: PqFlags,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories holding report.json.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Summary CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG overlay of every run's accuracy curve.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Format(_) => EXIT_FILE,
        Error::Numerical(_) | Error::NoConvergence { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "dimension",
        Error::Parameter(_) => "parameter",
        Error::Index(_) => "index",
        Error::Contract(_) => "contract",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::Numerical(_) => "numerical",
        Error::NoConvergence { .. } => "no-convergence",
        Error::Io { .. } => "io",
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit code. Errors go to stderr as a single `error[kind]: message` line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let text = e.render().to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", line.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", kind(&e));
            exit_code(&e)
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Prune(a) => prune(a),
        Command::Quantize(a) => quantize(a),
        Command::Retrain(a) => retrain(a),
        Command::Distill(a) => distill_cmd(a),
        Command::Dp(a) => dp(a),
        Command::Dq(a) => dq(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Accepts a model container or a run directory holding `model/`.
fn model_dir(path: &Path) -> PathBuf {
    let nested = path.join("model");
    if nested.join("manifest.json").is_file() {
        nested
    } else {
        path.to_path_buf()
    }
}

fn open_model(path: &Path) -> Result<ModelGraph> {
    load_model(model_dir(path))
}

/// Overall accuracy recorded in a run directory, if any.
fn recorded_accuracy(path: &Path) -> Option<f64> {
    CompressionReport::load(path).ok().map(|r| r.accuracy_overall)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    parameters: BTreeMap<&'a str, String>,
    inputs: BTreeMap<&'a str, String>,
    outputs: Vec<&'a str>,
}

struct Run<'a> {
    dir: PathBuf,
    manifest: RunManifest<'a>,
}

impl<'a> Run<'a> {
    fn new(dir: &Path, command: &'a str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command,
                parameters: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
            },
        })
    }

    fn param(&mut self, k: &'a str, v: impl ToString) -> &mut Self {
        self.manifest.parameters.insert(k, v.to_string());
        self
    }

    fn data(&mut self, path: &Path) -> Result<Dataset> {
        self.manifest.inputs.insert("data", file_hash(path)?);
        load_dataset(path)
    }

    fn model(&mut self, key: &'a str, path: &Path) -> Result<ModelGraph> {
        let m = open_model(path)?;
        self.manifest.inputs.insert(key, m.hash());
        Ok(m)
    }

    fn file(&mut self, name: &'a str, bytes: impl AsRef<[u8]>) -> Result<()> {
        write(&self.dir.join(name), bytes)?;
        self.manifest.outputs.push(name);
        Ok(())
    }

    fn save_model(&mut self, m: &ModelGraph) -> Result<()> {
        save_model(m, self.dir.join("model"))?;
        self.manifest.outputs.push("model/");
        Ok(())
    }

    fn eval(&mut self, m: &ModelGraph, d: &Dataset, label: &str) -> Result<EvalResult> {
        let e = trainer::evaluate(m, d, Split::Test)?;
        self.file("eval.csv", e.csv())?;
        self.file("confusion.csv", e.confusion_csv())?;
        let svg = report::accuracy_vs_snr_svg(&[Series::from_eval(label, &e)], label)?;
        self.file("accuracy_vs_snr.svg", svg)?;
        Ok(e)
    }

    fn report(&mut self, r: &CompressionReport) -> Result<()> {
        r.save(&self.dir)?;
        self.manifest.outputs.push(report::REPORT_FILE);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write(&self.dir.join("run.json"), json)
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    if a.frames == 0 {
        return Err(Error::param("--frames must be at least 1"));
    }
    let d = build_dataset(a.frames, a.seed)?;
    save_dataset(&d, &a.out)
}

fn train(a: TrainArgs) -> Result<()> {
    let arch = Architecture::parse(&a.arch)?;
    let mut run = Run::new(&a.out, "train")?;
    let d = run.data(&a.data)?;
    let cfg = a.train.config();
    let init = a.init_seed.unwrap_or(cfg.seed);
    run.param("arch", arch.id())
        .param("width_scale", a.width_scale)
        .param("epochs", cfg.epochs)
        .param("batch_size", cfg.batch_size)
        .param("lr", cfg.learning_rate)
        .param("seed", cfg.seed)
        .param("init_seed", init);
    let m = arch.build(a.width_scale, init)?;
    let mut out = trainer::train(&m, &d, &cfg)?;
    out.model.provenance.record(
        "train",
        [
            ("epochs", cfg.epochs.to_string()),
            ("batch_size", cfg.batch_size.to_string()),
            ("lr", cfg.learning_rate.to_string()),
            ("seed", cfg.seed.to_string()),
            ("data", run.manifest.inputs["data"].clone()),
        ],
    );
    run.save_model(&out.model)?;
    run.file("loss.csv", out.loss_csv())?;
    let e = run.eval(&out.model, &d, arch.id())?;
    let mut r = CompressionReport::new(Method::Benchmark, arch.id(), &e);
    r.provenance = run.manifest.parameters.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    run.report(&r)?;
    run.finish()
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "eval")?;
    let d = run.data(&a.data)?;
    let m = run.model("model", &a.model)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    run.param("split", format!("{:?}", split).to_lowercase());
    let e = trainer::evaluate(&m, &d, split)?;
    run.file("eval.csv", e.csv())?;
    run.file("confusion.csv", e.confusion_csv())?;
    run.file(
        "accuracy_vs_snr.svg",
        report::accuracy_vs_snr_svg(&[Series::from_eval(m.arch.id(), &e)], m.arch.id())?,
    )?;
    run.finish()
}

fn prune(a: PruneArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "prune")?;
    let d = run.data(&a.data)?;
    let m = run.model("model", &a.model)?;
    let cfg = a.trim.config();
    run.param("epsilon", cfg.epsilon_rel)
        .param("epsilon_abs", format!("{:?}", cfg.epsilon_abs))
        .param("samples", a.trim.samples)
        .param("rho", cfg.rho)
        .param("max_iter", cfg.max_iter)
        .param("seed", a.seed);
    let (pruned, rep) = nettrim::prune_model(&m, &d, a.trim.samples, a.seed, &cfg)?;
    run.save_model(&pruned)?;
    run.file("prune.csv", rep.csv())?;
    let base = trainer::evaluate(&m, &d, Split::Test)?;
    let e = run.eval(&pruned, &d, "pruned")?;
    run.file(
        "comparison.svg",
        report::accuracy_vs_snr_svg(
            &[
                Series::from_eval("benchmark", &base),
                Series::from_eval(&format!("eps={}", cfg.epsilon_rel), &e),
            ],
            "Net-Trim",
        )?,
    )?;
    let mut r = CompressionReport::new(Method::Nt, m.arch.id(), &e);
    r.p_e = Some(rep.p_e);
    r.baseline_accuracy = Some(base.overall_acc);
    r.provenance.insert("epsilon".into(), cfg.epsilon_rel.to_string());
    run.report(&r)?;
    run.finish()
}

fn quant_csv(rep: &pq::QuantReport, acc: f64) -> String {
    format!(
        "P,K_s,C_Q,mse,accuracy\n{},{},{},{},{}\n",
        rep.subspaces, rep.num_centroids, rep.c_q, rep.reconstruction_mse, acc
    )
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "quantize")?;
    let d = run.data(&a.data)?;
    let m = run.model("model", &a.model)?;
    let cfg = a.pq.config(a.seed);
    run.param("subspaces", cfg.num_subspaces)
        .param("centroids", cfg.num_centroids)
        .param("kmeans_iter", cfg.kmeans_max_iter)
        .param("seed", cfg.seed);
    let fc = m.first_fc().to_string();
    let (q, rep) = pq::quantize_model(&m, &fc, &cfg)?;
    run.save_model(&q)?;
    let base = trainer::evaluate(&m, &d, Split::Test)?;
    let e = run.eval(&q, &d, "quantized")?;
    run.file("quantize.csv", quant_csv(&rep, e.overall_acc))?;
    let mut r = CompressionReport::new(Method::Pq, m.arch.id(), &e);
    r.c_q = Some(rep.c_q);
    r.baseline_accuracy = Some(base.overall_acc);
    r.provenance.insert("subspaces".into(), cfg.num_subspaces.to_string());
    run.report(&r)?;
    run.finish()
}

fn retrain(a: RetrainArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "retrain")?;
    let d = run.data(&a.data)?;
    let m = run.model("model", &a.model)?;
    let cfg = a.train.config();
    run.param("fraction", a.fraction)
        .param("epochs", cfg.epochs)
        .param("lr", cfg.learning_rate)
        .param("seed", cfg.seed);
    let out = pq::retrain_quantized(&m, &d, a.fraction, &cfg)?;
    run.save_model(&out.model)?;
    run.file("loss.csv", out.loss_csv())?;
    let e = run.eval(&out.model, &d, "retrained")?;
    let fc = m.first_fc();
    let cb = &out.model.pq_layers()[fc];
    let mut r = CompressionReport::new(Method::Pq, m.arch.id(), &e);
    r.c_q = Some(pq::compression_rate(pq::FLOAT_BITS, cb.rows(), cb.cols(), cb.num_centroids(), cb.subspaces()));
    // The quantize run recorded the dense model's accuracy.
    r.baseline_accuracy = CompressionReport::load(&a.model).ok().and_then(|p| p.baseline_accuracy);
    run.report(&r)?;
    run.finish()
}

fn kd_params<'a>(run: &mut Run<'a>, kd: &KdFlags) {
    run.param("student_arch", &kd.student_arch)
        .param("width_scale", kd.width_scale)
        .param("temperature", kd.temperature)
        .param("alpha", kd.alpha)
        .param("t2_scaling", !kd.no_t2)
        .param("epochs", kd.train.epochs)
        .param("lr", kd.train.lr)
        .param("seed", kd.train.seed)
        .param("init_seed", kd.init_seed.unwrap_or(kd.train.seed));
}

fn distill_cmd(a: DistillArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "distill")?;
    let d = run.data(&a.data)?;
    let teacher = run.model("teacher", &a.kd.teacher)?;
    kd_params(&mut run, &a.kd);
    let student = a.kd.student()?;
    let out = distill::distill(&teacher, &student, &d, &a.kd.config())?;
    run.save_model(&out.model)?;
    run.file("loss.csv", out.loss_csv())?;
    let e = run.eval(&out.model, &d, "distilled")?;
    let mut r = CompressionReport::new(Method::Kd, out.model.arch.id(), &e);
    r.baseline_accuracy = a.kd.baseline_accuracy();
    let case = distill::KdCase::from_models("run", &out.model, &teacher)?;
    r.provenance.insert("reduction_ratio".into(), case.reduction_ratio.to_string());
    run.report(&r)?;
    run.finish()
}

fn dp(a: DpArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "dp")?;
    let d = run.data(&a.data)?;
    let teacher = run.model("teacher", &a.kd.teacher)?;
    kd_params(&mut run, &a.kd);
    let cfg = a.trim.config();
    run.param("epsilon", cfg.epsilon_rel).param("samples", a.trim.samples);
    let (m, rep) = distill::distilled_pruning(&teacher, &a.kd.student()?, &d, &a.kd.config(), a.trim.samples, &cfg)?;
    run.save_model(&m)?;
    run.file("prune.csv", rep.csv())?;
    let e = run.eval(&m, &d, "DP")?;
    let mut r = CompressionReport::new(Method::Dp, m.arch.id(), &e);
    r.p_e = Some(rep.p_e);
    r.baseline_accuracy = a.kd.baseline_accuracy();
    run.report(&r)?;
    run.finish()
}

fn dq(a: DqArgs) -> Result<()> {
    let mut run = Run::new(&a.out, "dq")?;
    let d = run.data(&a.data)?;
    let teacher = run.model("teacher", &a.kd.teacher)?;
    kd_params(&mut run, &a.kd);
    let cfg = a.pq.config(a.kd.train.seed);
    run.param("subspaces", cfg.num_subspaces).param("centroids", cfg.num_centroids);
    let (m, rep) = distill::distilled_quantization(&teacher, &a.kd.student()?, &d, &a.kd.config(), &cfg)?;
    run.save_model(&m)?;
    let e = run.eval(&m, &d, "DQ")?;
    run.file("quantize.csv", quant_csv(&rep, e.overall_acc))?;
    let mut r = CompressionReport::new(Method::Dq, m.arch.id(), &e);
    r.c_q = Some(rep.c_q);
    r.baseline_accuracy = a.kd.baseline_accuracy();
    run.report(&r)?;
    run.finish()
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let reports = a
        .runs
        .iter()
        .map(|p| CompressionReport::load(p))
        .collect::<Result<Vec<_>>>()?;
    write(&a.out, report::summary_csv(&reports)?)?;
    if let Some(plot) = &a.plot {
        let series: Vec<Series> = reports
            .iter()
            .map(|r| Series {
                label: format!("{} {}", r.method.label(), r.network),
                points: r.acc_by_snr.clone(),
            })
            .collect();
        write(plot, report::accuracy_vs_snr_svg(&series, "Accuracy vs SNR")?)?;
    }
    Ok(())
}

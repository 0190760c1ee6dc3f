//! Model definitions: layer graph, parameter store, the three shipped
//! architectures, parameter accounting, and the forward pass.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pq::PqCodebook;
use crate::rng;
use crate::tensor::{SparseMatrix, Tape, Tensor, Var};

pub use io::{load_model, save_model};

pub const NUM_OUTPUTS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Vtcnn2,
    ResnetMini,
    InceptionMini,
}

impl Architecture {
    pub fn id(self) -> &'static str {
        match self {
            Architecture::Vtcnn2 => "vtcnn2",
            Architecture::ResnetMini => "resnet-mini",
            Architecture::InceptionMini => "inception-mini",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vtcnn2" => Ok(Architecture::Vtcnn2),
            "resnet-mini" | "resnet" => Ok(Architecture::ResnetMini),
            "inception-mini" | "inception" => Ok(Architecture::InceptionMini),
            _ => Err(Error::param(format!("unknown architecture {s:?}"))),
        }
    }

    /// Published total parameter counts of the full-size reference networks.
    pub fn reference_params(self) -> f64 {
        match self {
            Architecture::Vtcnn2 => 2.83e6,
            Architecture::ResnetMini => 3.45e6,
            Architecture::InceptionMini => 10.14e6,
        }
    }

    pub fn build(self, width_scale: f64, seed: u64) -> Result<ModelGraph> {
        match self {
            Architecture::Vtcnn2 => build_vtcnn2(seed),
            Architecture::ResnetMini => build_resnet_mini(width_scale, seed),
            Architecture::InceptionMini => build_inception_mini(width_scale, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        padding: [usize; 2],
    },
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    DenseSparse {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    DensePq {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    Relu {
        name: String,
    },
    Dropout {
        name: String,
        rate: f64,
    },
    Flatten {
        name: String,
    },
    /// `body(x) + x`.
    AddResidual {
        name: String,
        body: Vec<LayerSpec>,
    },
    /// Runs each branch on the same input and concatenates channels.
    ConcatBranches {
        name: String,
        branches: Vec<Vec<LayerSpec>>,
    },
    Softmax {
        name: String,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Dense { name, .. }
            | LayerSpec::DenseSparse { name, .. }
            | LayerSpec::DensePq { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::Dropout { name, .. }
            | LayerSpec::Flatten { name }
            | LayerSpec::AddResidual { name, .. }
            | LayerSpec::ConcatBranches { name, .. }
            | LayerSpec::Softmax { name } => name,
        }
    }

    fn children(&self) -> Vec<&LayerSpec> {
        match self {
            LayerSpec::AddResidual { body, .. } => body.iter().collect(),
            LayerSpec::ConcatBranches { branches, .. } => branches.iter().flatten().collect(),
            _ => Vec::new(),
        }
    }

    /// Dense-family layer dims, if any.
    pub fn dense_dims(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Dense { inputs, outputs, .. }
            | LayerSpec::DenseSparse { inputs, outputs, .. }
            | LayerSpec::DensePq { inputs, outputs, .. } => Some((*inputs, *outputs)),
            _ => None,
        }
    }
}

fn conv(name: &str, cin: usize, cout: usize, kernel: [usize; 2], padding: [usize; 2]) -> LayerSpec {
    LayerSpec::Conv {
        name: name.into(),
        in_channels: cin,
        out_channels: cout,
        kernel,
        padding,
    }
}

fn dense(name: &str, inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense {
        name: name.into(),
        inputs,
        outputs,
    }
}

fn relu(name: &str) -> LayerSpec {
    LayerSpec::Relu { name: name.into() }
}

fn dropout(name: &str, rate: f64) -> LayerSpec {
    LayerSpec::Dropout {
        name: name.into(),
        rate,
    }
}

fn flatten(name: &str) -> LayerSpec {
    LayerSpec::Flatten { name: name.into() }
}

fn softmax() -> LayerSpec {
    LayerSpec::Softmax {
        name: "softmax".into(),
    }
}

/// Record of how a model came to be.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub init_seed: u64,
    pub trained: bool,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub stage: String,
    pub details: BTreeMap<String, String>,
}

impl Provenance {
    pub fn record<I, K, V>(&mut self, stage: &str, details: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: ToString,
    {
        self.steps.push(Step {
            stage: stage.into(),
            details: details
                .into_iter()
                .map(|(k, v)| (k.into(), v.to_string()))
                .collect(),
        });
    }
}

/// Layer graph plus its parameters. Dense parameters live in `params` under
/// `<layer>.weight` / `<layer>.bias`; CSR and PQ weights live in their own
/// maps keyed by layer name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub arch: Architecture,
    pub width_scale: f64,
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    params: BTreeMap<String, Tensor>,
    sparse: BTreeMap<String, Arc<SparseMatrix>>,
    pq: BTreeMap<String, Arc<PqCodebook>>,
    first_fc: String,
    pub provenance: Provenance,
}

pub fn weight_key(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_key(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Activation shape inside the network, without the batch axis.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Shape {
    Image([usize; 3]),
    Flat(usize),
}

fn infer(layers: &[LayerSpec], mut s: Shape) -> Result<Shape> {
    for l in layers {
        s = match (l, s) {
            (
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                    name,
                },
                Shape::Image([c, h, w]),
            ) => {
                if c != *in_channels || kernel[0] > h + 2 * padding[0] || kernel[1] > w + 2 * padding[1] {
                    return Err(Error::dim(format!("layer {name}: input [{c},{h},{w}] does not fit")));
                }
                Shape::Image([
                    *out_channels,
                    h + 2 * padding[0] + 1 - kernel[0],
                    w + 2 * padding[1] + 1 - kernel[1],
                ])
            }
            (LayerSpec::Flatten { .. }, Shape::Image([c, h, w])) => Shape::Flat(c * h * w),
            (LayerSpec::Flatten { .. }, Shape::Flat(n)) => Shape::Flat(n),
            (l, Shape::Flat(n)) if l.dense_dims().is_some() => {
                let (i, o) = l.dense_dims().unwrap();
                if i != n {
                    return Err(Error::dim(format!("layer {}: expects {i} inputs, gets {n}", l.name())));
                }
                Shape::Flat(o)
            }
            (LayerSpec::Relu { .. } | LayerSpec::Dropout { .. } | LayerSpec::Softmax { .. }, s) => s,
            (LayerSpec::AddResidual { body, name }, s) => {
                let out = infer(body, s.clone())?;
                if out != s {
                    return Err(Error::dim(format!("residual {name}: body changes shape")));
                }
                s
            }
            (LayerSpec::ConcatBranches { branches, name }, Shape::Image([c, h, w])) => {
                let mut channels = 0;
                for b in branches {
                    match infer(b, Shape::Image([c, h, w]))? {
                        Shape::Image([bc, bh, bw]) if bh == h && bw == w => channels += bc,
                        _ => return Err(Error::dim(format!("branch of {name} changes spatial size"))),
                    }
                }
                Shape::Image([channels, h, w])
            }
            (l, s) => {
                return Err(Error::dim(format!("layer {} cannot take input {s:?}", l.name())));
            }
        };
    }
    Ok(s)
}

fn visit<'a>(layers: &'a [LayerSpec], out: &mut Vec<&'a LayerSpec>) {
    for l in layers {
        out.push(l);
        for c in l.children() {
            visit(std::slice::from_ref(c), out);
        }
    }
}

fn replace_in(layers: &mut [LayerSpec], name: &str, new: &LayerSpec) -> bool {
    for l in layers {
        if l.name() == name {
            *l = new.clone();
            return true;
        }
        let hit = match l {
            LayerSpec::AddResidual { body, .. } => replace_in(body, name, new),
            LayerSpec::ConcatBranches { branches, .. } => {
                branches.iter_mut().any(|b| replace_in(b, name, new))
            }
            _ => false,
        };
        if hit {
            return true;
        }
    }
    false
}

fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, seed: u64, name: &str) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut r = rng::stream(seed, &[name_hash(name)]);
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl ModelGraph {
    /// Validates the graph and initialises every parameter (Glorot-uniform
    /// weights, zero biases) from `seed`.
    pub fn new(
        arch: Architecture,
        width_scale: f64,
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        first_fc: &str,
        seed: u64,
    ) -> Result<Self> {
        let mut all = Vec::new();
        visit(&layers, &mut all);
        let mut names = BTreeSet::new();
        for l in &all {
            if !names.insert(l.name().to_string()) {
                return Err(Error::param(format!("duplicate layer name {:?}", l.name())));
            }
        }
        match infer(&layers, Shape::Image(input_shape))? {
            Shape::Flat(NUM_OUTPUTS) => {}
            s => return Err(Error::dim(format!("network ends in {s:?}, expected {NUM_OUTPUTS} outputs"))),
        }
        if !all
            .iter()
            .any(|l| l.name() == first_fc && matches!(l, LayerSpec::Dense { .. }))
        {
            return Err(Error::param(format!("first_fc {first_fc:?} is not a dense layer")));
        }
        let mut params = BTreeMap::new();
        for l in &all {
            match l {
                LayerSpec::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let k = kernel[0] * kernel[1];
                    let w = glorot(
                        &[*out_channels, *in_channels, kernel[0], kernel[1]],
                        in_channels * k,
                        out_channels * k,
                        seed,
                        name,
                    );
                    params.insert(weight_key(name), w);
                    params.insert(bias_key(name), Tensor::zeros(&[*out_channels]));
                }
                LayerSpec::Dense { name, inputs, outputs } => {
                    params.insert(weight_key(name), glorot(&[*inputs, *outputs], *inputs, *outputs, seed, name));
                    params.insert(bias_key(name), Tensor::zeros(&[*outputs]));
                }
                LayerSpec::DenseSparse { .. } | LayerSpec::DensePq { .. } => {
                    return Err(Error::param("compressed layers are created by conversion, not construction"));
                }
                _ => {}
            }
        }
        Ok(ModelGraph {
            arch,
            width_scale,
            input_shape,
            layers,
            params,
            sparse: BTreeMap::new(),
            pq: BTreeMap::new(),
            first_fc: first_fc.into(),
            provenance: Provenance {
                init_seed: seed,
                trained: false,
                steps: Vec::new(),
            },
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Every layer, nested ones included, in definition order.
    pub fn all_layers(&self) -> Vec<&LayerSpec> {
        let mut v = Vec::new();
        visit(&self.layers, &mut v);
        v
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.all_layers().into_iter().find(|l| l.name() == name)
    }

    pub fn first_fc(&self) -> &str {
        &self.first_fc
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<&Tensor> {
        self.params.get(key)
    }

    pub fn param_mut(&mut self, key: &str) -> Option<&mut Tensor> {
        self.params.get_mut(key)
    }

    pub fn sparse_layers(&self) -> &BTreeMap<String, Arc<SparseMatrix>> {
        &self.sparse
    }

    pub fn pq_layers(&self) -> &BTreeMap<String, Arc<PqCodebook>> {
        &self.pq
    }

    /// Layer that owns parameter `key`.
    pub fn layer_of(key: &str) -> &str {
        key.rsplit_once('.').map_or(key, |(l, _)| l)
    }

    /// Analytic parameter count from the layer dims alone.
    pub fn analytic_params(&self) -> u64 {
        self.all_layers()
            .iter()
            .map(|l| match l {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (in_channels * out_channels * kernel[0] * kernel[1] + out_channels) as u64,
                LayerSpec::Dense { inputs, outputs, .. } => (inputs * outputs + outputs) as u64,
                LayerSpec::DenseSparse { name, outputs, .. } => {
                    (self.sparse[name.as_str()].nnz() + outputs) as u64
                }
                LayerSpec::DensePq { name, outputs, .. } => {
                    (self.pq[name.as_str()].centroid_count() + outputs) as u64
                }
                _ => 0,
            })
            .sum()
    }

    pub(crate) fn set_trained(&mut self) {
        self.provenance.trained = true;
    }

    fn replace_layer(&mut self, name: &str, new: LayerSpec) -> Result<()> {
        if replace_in(&mut self.layers, name, &new) {
            Ok(())
        } else {
            Err(Error::param(format!("no layer named {name:?}")))
        }
    }

    fn dense_layer_dims(&self, name: &str) -> Result<(usize, usize)> {
        self.layer(name)
            .and_then(LayerSpec::dense_dims)
            .ok_or_else(|| Error::param(format!("{name:?} is not a dense layer")))
    }

    /// Replaces a dense layer's weight with a CSR matrix of the same dims.
    /// The bias is kept.
    pub fn to_sparse_layer(&self, name: &str, w: SparseMatrix) -> Result<ModelGraph> {
        let (inputs, outputs) = self.dense_layer_dims(name)?;
        if (w.rows(), w.cols()) != (inputs, outputs) {
            return Err(Error::dim(format!(
                "sparse weight {}x{} for layer {name} of {inputs}x{outputs}",
                w.rows(),
                w.cols()
            )));
        }
        let mut m = self.clone();
        m.replace_layer(
            name,
            LayerSpec::DenseSparse {
                name: name.into(),
                inputs,
                outputs,
            },
        )?;
        m.params.remove(&weight_key(name));
        m.pq.remove(name);
        m.sparse.insert(name.into(), Arc::new(w));
        Ok(m)
    }

    /// Replaces a dense layer's weight with a PQ codebook of the same dims.
    pub fn to_pq_layer(&self, name: &str, cb: PqCodebook) -> Result<ModelGraph> {
        let (inputs, outputs) = self.dense_layer_dims(name)?;
        if (cb.rows(), cb.cols()) != (inputs, outputs) {
            return Err(Error::dim(format!(
                "codebook for {}x{} applied to layer {name} of {inputs}x{outputs}",
                cb.rows(),
                cb.cols()
            )));
        }
        let mut m = self.clone();
        m.replace_layer(
            name,
            LayerSpec::DensePq {
                name: name.into(),
                inputs,
                outputs,
            },
        )?;
        m.params.remove(&weight_key(name));
        m.sparse.remove(name);
        m.pq.insert(name.into(), Arc::new(cb));
        Ok(m)
    }

    /// Weight matrix of a dense-family layer as a dense `[in,out]` buffer.
    pub fn dense_weight(&self, name: &str) -> Result<Vec<f64>> {
        match self.layer(name) {
            Some(LayerSpec::Dense { .. }) => Ok(self.params[&weight_key(name)].data().to_vec()),
            Some(LayerSpec::DenseSparse { .. }) => Ok(self.sparse[name].to_dense()),
            Some(LayerSpec::DensePq { .. }) => Ok(self.pq[name].reconstruct()),
            _ => Err(Error::param(format!("{name:?} is not a dense layer"))),
        }
    }

    /// SHA-256 over architecture, layers, and every parameter blob.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.arch.id().as_bytes());
        h.update(serde_json::to_vec(&self.layers).expect("layers serialize"));
        for (k, t) in &self.params {
            h.update(k.as_bytes());
            h.update(t.to_blob());
        }
        for (k, s) in &self.sparse {
            h.update(k.as_bytes());
            h.update(s.to_blob());
        }
        for (k, c) in &self.pq {
            h.update(k.as_bytes());
            h.update(c.to_blob());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Forward pass on a `[B, c, h, w]` input, stopping before the final
    /// softmax.
    pub fn forward(&self, tape: &mut Tape, input: Var, opts: &ForwardOptions) -> Result<Forward> {
        let mut ctx = Ctx {
            model: self,
            opts,
            vars: BTreeMap::new(),
            dropout_rng: rng::stream(opts.dropout_seed, &[0xD80F]),
            fc_input: None,
            fc_pre: None,
        };
        let logits = ctx.run(tape, &self.layers, input)?;
        Ok(Forward {
            logits,
            params: ctx.vars,
            fc_input: ctx.fc_input,
            fc_pre: ctx.fc_pre,
        })
    }

    /// Eval-mode logits for a batch tensor.
    pub fn logits(&self, x: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x);
        let fwd = self.forward(&mut tape, input, &ForwardOptions::eval())?;
        Ok(tape.value(fwd.logits).clone())
    }

    /// Eval-mode class probabilities (`softmax` at temperature 1).
    pub fn predict(&self, x: Tensor) -> Result<Tensor> {
        let mut logits = self.logits(x)?;
        let cols = *logits.shape().last().unwrap();
        for row in logits.data_mut().chunks_mut(cols) {
            crate::tensor::softmax_row(row, 1.0);
        }
        Ok(logits)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    pub training: bool,
    pub dropout_seed: u64,
    /// Layers whose parameters are not differentiated.
    pub frozen: BTreeSet<String>,
    /// Don't differentiate any parameter (inference only).
    pub no_grad: bool,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        ForwardOptions {
            no_grad: true,
            ..Default::default()
        }
    }
}

pub struct Forward {
    pub logits: Var,
    /// Tape handle of every dense parameter that was used.
    pub params: BTreeMap<String, Var>,
    /// Input to the first FC layer (flattened features).
    pub fc_input: Option<Var>,
    /// First FC layer output before its activation.
    pub fc_pre: Option<Var>,
}

struct Ctx<'a> {
    model: &'a ModelGraph,
    opts: &'a ForwardOptions,
    vars: BTreeMap<String, Var>,
    dropout_rng: rng::Rng,
    fc_input: Option<Var>,
    fc_pre: Option<Var>,
}

impl Ctx<'_> {
    fn param(&mut self, tape: &mut Tape, key: &str) -> Var {
        if let Some(&v) = self.vars.get(key) {
            return v;
        }
        let layer = ModelGraph::layer_of(key);
        let grad = !self.opts.no_grad && !self.opts.frozen.contains(layer);
        let t = self.model.params[key].clone().with_requires_grad(grad);
        let v = tape.leaf(t);
        self.vars.insert(key.to_string(), v);
        v
    }

    fn run(&mut self, tape: &mut Tape, layers: &[LayerSpec], mut x: Var) -> Result<Var> {
        for l in layers {
            x = match l {
                LayerSpec::Conv { name, padding, .. } => {
                    let w = self.param(tape, &weight_key(name));
                    let b = self.param(tape, &bias_key(name));
                    tape.conv2d(x, w, Some(b), *padding)?
                }
                LayerSpec::Dense { name, .. } => {
                    let w = self.param(tape, &weight_key(name));
                    let b = self.param(tape, &bias_key(name));
                    self.fc(tape, name, x, |tape, x| tape.dense(x, w, Some(b)))?
                }
                LayerSpec::DenseSparse { name, .. } => {
                    let w = self.model.sparse[name.as_str()].clone();
                    let b = self.param(tape, &bias_key(name));
                    self.fc(tape, name, x, |tape, x| tape.sparse_dense(x, w, Some(b)))?
                }
                LayerSpec::DensePq { name, inputs, outputs } => {
                    let cb = &self.model.pq[name.as_str()];
                    let w = tape.constant(Tensor::new(vec![*inputs, *outputs], cb.reconstruct())?);
                    let b = self.param(tape, &bias_key(name));
                    self.fc(tape, name, x, |tape, x| tape.dense(x, w, Some(b)))?
                }
                LayerSpec::Relu { .. } => tape.relu(x),
                LayerSpec::Dropout { rate, .. } => {
                    if self.opts.training && *rate > 0.0 {
                        tape.dropout(x, *rate, &mut self.dropout_rng)?
                    } else {
                        x
                    }
                }
                LayerSpec::Flatten { .. } => tape.flatten(x)?,
                LayerSpec::AddResidual { body, .. } => {
                    let y = self.run(tape, body, x)?;
                    tape.add(y, x)?
                }
                LayerSpec::ConcatBranches { branches, .. } => {
                    let mut outs = Vec::with_capacity(branches.len());
                    for b in branches {
                        outs.push(self.run(tape, b, x)?);
                    }
                    tape.concat_channels(&outs)?
                }
                LayerSpec::Softmax { .. } => x,
            };
        }
        Ok(x)
    }

    fn fc<F>(&mut self, tape: &mut Tape, name: &str, x: Var, f: F) -> Result<Var>
    where
        F: FnOnce(&mut Tape, Var) -> Result<Var>,
    {
        let y = f(tape, x)?;
        if name == self.model.first_fc {
            self.fc_input = Some(x);
            self.fc_pre = Some(y);
        }
        Ok(y)
    }
}

/// VTCNN2: two convolutions (256 filters 1×3, 80 filters 2×3, width padding
/// 2 each), a 10560→256 dense layer and a 256→11 classifier, dropout 0.5.
pub fn build_vtcnn2(seed: u64) -> Result<ModelGraph> {
    let layers = vec![
        conv("conv1", 1, 256, [1, 3], [0, 2]),
        relu("relu1"),
        dropout("drop1", 0.5),
        conv("conv2", 256, 80, [2, 3], [0, 2]),
        relu("relu2"),
        dropout("drop2", 0.5),
        flatten("flatten"),
        dense("fc1", 80 * 132, 256),
        relu("relu3"),
        dropout("drop3", 0.5),
        dense("fc2", 256, NUM_OUTPUTS),
        softmax(),
    ];
    ModelGraph::new(Architecture::Vtcnn2, 1.0, [1, 2, 128], layers, "fc1", seed)
}

fn check_scale(width_scale: f64) -> Result<()> {
    if !(width_scale > 0.0 && width_scale <= 1.0) {
        return Err(Error::param(format!("width_scale {width_scale} outside (0, 1]")));
    }
    Ok(())
}

fn scaled(base: usize, s: f64) -> usize {
    ((base as f64 * s).round() as usize).max(1)
}

const MINI_FILTERS: usize = 32;
const MINI_FC_WIDTH: usize = 768;

/// Two identity-skip residual blocks of 1-D convolutions, then a wide dense
/// layer that holds almost all parameters.
pub fn build_resnet_mini(width_scale: f64, seed: u64) -> Result<ModelGraph> {
    check_scale(width_scale)?;
    let f = scaled(MINI_FILTERS, width_scale);
    let d = scaled(MINI_FC_WIDTH, width_scale);
    let block = |i: usize| LayerSpec::AddResidual {
        name: format!("res{i}"),
        body: vec![
            conv(&format!("res{i}.conv_a"), f, f, [1, 3], [0, 1]),
            relu(&format!("res{i}.relu_a")),
            conv(&format!("res{i}.conv_b"), f, f, [1, 3], [0, 1]),
        ],
    };
    let layers = vec![
        conv("stem", 2, f, [1, 3], [0, 1]),
        relu("stem_relu"),
        block(1),
        relu("res1_relu"),
        block(2),
        relu("res2_relu"),
        flatten("flatten"),
        dense("fc1", f * 128, d),
        relu("fc1_relu"),
        dropout("fc1_drop", 0.5),
        dense("fc2", d, NUM_OUTPUTS),
        softmax(),
    ];
    ModelGraph::new(Architecture::ResnetMini, width_scale, [2, 1, 128], layers, "fc1", seed)
}

/// Two inception blocks (parallel 1×1, 1×3, 1×5 convolution branches,
/// concatenated), then a wide dense layer.
pub fn build_inception_mini(width_scale: f64, seed: u64) -> Result<ModelGraph> {
    check_scale(width_scale)?;
    let b = scaled(MINI_FILTERS, width_scale);
    let d = scaled(MINI_FC_WIDTH, width_scale);
    let block = |i: usize, cin: usize| LayerSpec::ConcatBranches {
        name: format!("inc{i}"),
        branches: [1usize, 3, 5]
            .iter()
            .map(|&k| {
                vec![
                    conv(&format!("inc{i}.k{k}"), cin, b, [1, k], [0, k / 2]),
                    relu(&format!("inc{i}.k{k}_relu")),
                ]
            })
            .collect(),
    };
    let layers = vec![
        block(1, 2),
        block(2, 3 * b),
        flatten("flatten"),
        dense("fc1", 3 * b * 128, d),
        relu("fc1_relu"),
        dropout("fc1_drop", 0.5),
        dense("fc2", d, NUM_OUTPUTS),
        softmax(),
    ];
    ModelGraph::new(Architecture::InceptionMini, width_scale, [2, 1, 128], layers, "fc1", seed)
}

/// Per-model parameter accounting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamCount {
    pub total: u64,
    /// Stored parameters per parametrised layer: weights + bias for dense
    /// and conv, nnz + bias for CSR, centroid entries + bias for PQ.
    pub per_layer: BTreeMap<String, u64>,
    /// PQ code storage in bytes, per PQ layer.
    pub pq_code_bytes: BTreeMap<String, u64>,
}

pub fn count_params(m: &ModelGraph) -> ParamCount {
    let mut c = ParamCount::default();
    for l in m.all_layers() {
        let name = l.name();
        let bias = m.params.get(&bias_key(name)).map_or(0, |t| t.numel() as u64);
        let n = match l {
            LayerSpec::Conv { .. } | LayerSpec::Dense { .. } => {
                m.params[&weight_key(name)].numel() as u64 + bias
            }
            LayerSpec::DenseSparse { .. } => m.sparse[name].nnz() as u64 + bias,
            LayerSpec::DensePq { .. } => {
                let cb = &m.pq[name];
                c.pq_code_bytes.insert(name.into(), cb.code_bytes() as u64);
                cb.centroid_count() as u64 + bias
            }
            _ => continue,
        };
        c.per_layer.insert(name.into(), n);
        c.total += n;
    }
    c
}

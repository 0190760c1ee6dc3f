//! Central-difference gradient checking.

use edgeamc::datagen::{build_dataset, Split};
use edgeamc::rng;
use edgeamc::tensor::{Tape, Tensor, Var};
use edgeamc::zoo::{ForwardOptions, ModelGraph};
use rand::Rng;

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, &[]);
    let n = shape.iter().product();
    // Keep values away from zero so ReLU kinks are never straddled.
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(0.1..1.0);
            if r.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any output to a scalar through a fixed random projection.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let r = random(tape.shape(out), seed ^ 0xFACE);
    let rv = tape.constant(r);
    let p = tape.mul(out, rv).unwrap();
    tape.sum(p)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 { diff } else { diff / scale }
}

/// Builds `f` on fresh leaves for `inputs`, compares analytic gradients of
/// every input with central differences.
pub fn check<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let out = f(&mut tape, &vars);
    assert!(tape.value(out).is_scalar(), "{name}: output not scalar");
    tape.backward(out).unwrap();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = tape.grad(v).expect("gradient reached input").to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * H);
        }
        let e = rel_err(&analytic, &numeric);
        assert!(e < TOL, "{name}: input {k} relative error {e:e}");
    }
}

/// Gradient of the cross-entropy loss of a whole model with respect to a
/// sample of coordinates in every parameter tensor.
pub fn model_check(m: &ModelGraph, coords_per_param: usize) {
    // Zero-initialized biases put dead-ReLU windows exactly on the kink
    // (0 + 0), where a central difference sees the averaged slope.
    let mut m = m.clone();
    let keys: Vec<String> = m.params().keys().filter(|k| k.ends_with(".bias")).cloned().collect();
    for (i, k) in keys.iter().enumerate() {
        let shape = m.param(k).unwrap().shape().to_vec();
        let jitter = random(&shape, 900 + i as u64);
        for (b, j) in m.param_mut(k).unwrap().data_mut().iter_mut().zip(jitter.data()) {
            *b += 0.05 * j;
        }
    }
    let m = &m;
    let d = build_dataset(1, 41).unwrap();
    let idx: Vec<usize> = d.indices(Split::Train)[..3].to_vec();
    let x = d.batch(&idx, m.input_shape());
    let labels = d.labels(&idx);
    let opts = ForwardOptions {
        training: true,
        dropout_seed: 42,
        ..Default::default()
    };
    let loss_of = |m: &ModelGraph| -> f64 {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let f = m.forward(&mut tape, input, &opts).unwrap();
        let p = tape.softmax_t(f.logits, 1.0).unwrap();
        let l = tape.cross_entropy(p, &labels).unwrap();
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let f = m.forward(&mut tape, input, &opts).unwrap();
    let p = tape.softmax_t(f.logits, 1.0).unwrap();
    let l = tape.cross_entropy(p, &labels).unwrap();
    tape.backward(l).unwrap();

    let mut pick = rng::stream(43, &[]);
    for (key, &var) in &f.params {
        let grad = tape.grad(var).unwrap().to_vec();
        let n = grad.len();
        // Always include the largest-gradient coordinate so the check is
        // never vacuous for layers whose gradient is mostly zero.
        let top = (0..n).max_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs())).unwrap();
        let mut coords = vec![top];
        coords.extend((0..coords_per_param).map(|_| pick.random_range(0..n)));
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &coords {
            let mut plus = m.clone();
            plus.param_mut(key).unwrap().data_mut()[i] += H;
            let mut minus = m.clone();
            minus.param_mut(key).unwrap().data_mut()[i] -= H;
            numeric.push((loss_of(&plus) - loss_of(&minus)) / (2.0 * H));
            analytic.push(grad[i]);
        }
        let e = rel_err(&analytic, &numeric);
        assert!(e < TOL, "{key}: relative error {e:e} ({analytic:?} vs {numeric:?})");
    }
}

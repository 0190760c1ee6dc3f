//! Central-difference gradient checks for every differentiable op and for
//! whole models.

mod common;

use std::sync::Arc;

use common::grad::{check, model_check, project, random};
use edgeamc::rng;
use edgeamc::tensor::{SparseMatrix, Tape};
use edgeamc::zoo::Architecture;

#[test]
fn matmul_grad() {
    check("matmul", &[random(&[3, 4], 1), random(&[4, 5], 2)], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        project(t, y, 3)
    });
}

#[test]
fn dense_grad_batched_and_single() {
    check("dense", &[random(&[4, 6], 4), random(&[6, 3], 5), random(&[3], 6)], |t, v| {
        let y = t.dense(v[0], v[1], Some(v[2])).unwrap();
        project(t, y, 7)
    });
    check("dense-1d", &[random(&[6], 8), random(&[6, 3], 9)], |t, v| {
        let y = t.dense(v[0], v[1], None).unwrap();
        project(t, y, 10)
    });
}

#[test]
fn sparse_dense_grad() {
    let mut w = random(&[7, 4], 11).into_data();
    for (i, x) in w.iter_mut().enumerate() {
        if i % 3 == 0 {
            *x = 0.0;
        }
    }
    let sp = Arc::new(SparseMatrix::from_dense(7, 4, &w).unwrap());
    check("sparse_dense", &[random(&[3, 7], 12), random(&[4], 13)], |t, v| {
        let y = t.sparse_dense(v[0], sp.clone(), Some(v[1])).unwrap();
        project(t, y, 14)
    });
}

#[test]
fn conv2d_grad_with_padding() {
    let x = random(&[2, 3, 2, 9], 15);
    let k = random(&[4, 3, 2, 3], 16);
    let b = random(&[4], 17);
    check("conv2d", &[x, k, b], |t, v| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), [1, 2]).unwrap();
        project(t, y, 18)
    });
    check("conv2d-unbatched", &[random(&[1, 2, 8], 19), random(&[2, 1, 1, 3], 20)], |t, v| {
        let y = t.conv2d(v[0], v[1], None, [0, 2]).unwrap();
        project(t, y, 21)
    });
}

#[test]
fn elementwise_grads() {
    check("relu", &[random(&[5, 4], 22)], |t, v| {
        let y = t.relu(v[0]);
        project(t, y, 23)
    });
    check("add-mul-scale", &[random(&[3, 3], 24), random(&[3, 3], 25)], |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let m = t.mul(a, v[1]).unwrap();
        let s = t.scale(m, -2.5);
        project(t, s, 26)
    });
    check("sum", &[random(&[2, 5], 27)], |t, v| {
        let sq = t.mul(v[0], v[0]).unwrap();
        t.sum(sq)
    });
    check("reshape-flatten", &[random(&[2, 3, 4], 28)], |t, v| {
        let r = t.reshape(v[0], &[2, 12]).unwrap();
        let b = t.reshape(r, &[2, 3, 4]).unwrap();
        let f = t.flatten(b).unwrap();
        project(t, f, 29)
    });
}

#[test]
fn dropout_grad_with_fixed_mask() {
    check("dropout", &[random(&[6, 5], 30)], |t, v| {
        let mut r = rng::stream(31, &[]);
        let y = t.dropout(v[0], 0.4, &mut r).unwrap();
        project(t, y, 32)
    });
}

#[test]
fn softmax_cross_entropy_kl_grads() {
    for temp in [1.0, 4.0, 10.0] {
        check("softmax", &[random(&[3, 5], 33)], |t, v| {
            let p = t.softmax_t(v[0], temp).unwrap();
            project(t, p, 34)
        });
        check("cross-entropy", &[random(&[4, 5], 35)], |t, v| {
            let p = t.softmax_t(v[0], temp).unwrap();
            t.cross_entropy(p, &[0, 4, 2, 2]).unwrap()
        });
    }
    let target = {
        let mut t = Tape::new();
        let x = t.constant(random(&[3, 5], 36));
        let p = t.softmax_t(x, 3.0).unwrap();
        t.value(p).clone()
    };
    check("kl", &[random(&[3, 5], 37)], |t, v| {
        let p = t.constant(target.clone());
        let q = t.softmax_t(v[0], 3.0).unwrap();
        t.kl_divergence(p, q).unwrap()
    });
}

#[test]
fn residual_block_grad() {
    let inputs = [
        random(&[2, 3, 1, 8], 47),
        random(&[3, 3, 1, 3], 48),
        random(&[3], 49),
        random(&[3, 3, 1, 3], 50),
        random(&[3], 51),
    ];
    check("residual", &inputs, |t, v| {
        let a = t.conv2d(v[0], v[1], Some(v[2]), [0, 1]).unwrap();
        let a = t.relu(a);
        let b = t.conv2d(a, v[3], Some(v[4]), [0, 1]).unwrap();
        let s = t.add(v[0], b).unwrap();
        let r = t.relu(s);
        let f = t.flatten(r).unwrap();
        project(t, f, 52)
    });
}

#[test]
fn concat_grad() {
    check("concat", &[random(&[2, 1, 2, 3], 38), random(&[2, 3, 2, 3], 39)], |t, v| {
        let c = t.concat_channels(&[v[0], v[1], v[0]]).unwrap();
        project(t, c, 40)
    });
}

#[test]
fn vtcnn2_end_to_end_gradient() {
    let m = Architecture::Vtcnn2.build(1.0, 44).unwrap();
    model_check(&m, 4);
}

#[test]
fn mini_architectures_end_to_end_gradient() {
    model_check(&Architecture::ResnetMini.build(0.125, 45).unwrap(), 6);
    model_check(&Architecture::InceptionMini.build(0.125, 46).unwrap(), 6);
}

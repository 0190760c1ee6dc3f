//! On-disk model container: a directory holding `manifest.json` and one
//! binary blob per parameter tensor, CSR matrix, or PQ codebook.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Architecture, LayerSpec, ModelGraph, Provenance};
use crate::error::{Error, Result};
use crate::pq::PqCodebook;
use crate::tensor::{SparseMatrix, Tensor};

const FORMAT: &str = "edgeamc-model";
const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    architecture: Architecture,
    width_scale: f64,
    input_shape: [usize; 3],
    first_fc: String,
    layers: Vec<LayerSpec>,
    params: BTreeMap<String, String>,
    sparse: BTreeMap<String, String>,
    pq: BTreeMap<String, String>,
    provenance: Provenance,
    hash: String,
}

fn write(dir: &Path, file: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(file);
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
}

fn read_blob(dir: &Path, file: &str) -> Result<Vec<u8>> {
    if file.contains('/') || file.contains('\\') || file.starts_with('.') {
        return Err(Error::format(format!("blob name {file:?} escapes the model directory")));
    }
    let p = dir.join(file);
    if !p.is_file() {
        return Err(Error::format(format!("manifest references missing blob {file}")));
    }
    fs::read(&p).map_err(|e| Error::io(&p, e))
}

pub fn save_model(m: &ModelGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut params = BTreeMap::new();
    for (k, t) in &m.params {
        let f = format!("{k}.tnsr");
        write(dir, &f, &t.to_blob())?;
        params.insert(k.clone(), f);
    }
    let mut sparse = BTreeMap::new();
    for (k, s) in &m.sparse {
        let f = format!("{k}.csrw");
        write(dir, &f, &s.to_blob())?;
        sparse.insert(k.clone(), f);
    }
    let mut pq = BTreeMap::new();
    for (k, c) in &m.pq {
        let f = format!("{k}.pqcb");
        write(dir, &f, &c.to_blob())?;
        pq.insert(k.clone(), f);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        architecture: m.arch,
        width_scale: m.width_scale,
        input_shape: m.input_shape,
        first_fc: m.first_fc.clone(),
        layers: m.layers.clone(),
        params,
        sparse,
        pq,
        provenance: m.provenance.clone(),
        hash: m.hash(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write(dir, MANIFEST, &json)
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<ModelGraph> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let man: Manifest =
        serde_json::from_slice(&text).map_err(|e| Error::format(format!("manifest: {e}")))?;
    if man.format != FORMAT || man.version != VERSION {
        return Err(Error::format(format!(
            "unsupported model container {} v{}",
            man.format, man.version
        )));
    }
    let mut params = BTreeMap::new();
    for (k, f) in &man.params {
        params.insert(k.clone(), Tensor::from_blob(&read_blob(dir, f)?)?);
    }
    let mut sparse = BTreeMap::new();
    for (k, f) in &man.sparse {
        sparse.insert(k.clone(), Arc::new(SparseMatrix::from_blob(&read_blob(dir, f)?)?));
    }
    let mut pq = BTreeMap::new();
    for (k, f) in &man.pq {
        pq.insert(k.clone(), Arc::new(PqCodebook::from_blob(&read_blob(dir, f)?)?));
    }
    let m = ModelGraph {
        arch: man.architecture,
        width_scale: man.width_scale,
        input_shape: man.input_shape,
        layers: man.layers,
        params,
        sparse,
        pq,
        first_fc: man.first_fc,
        provenance: man.provenance,
    };
    m.check_storage()?;
    if m.hash() != man.hash {
        return Err(Error::format("model hash does not match its manifest"));
    }
    Ok(m)
}

impl ModelGraph {
    /// Every layer has exactly the storage its kind requires, with matching
    /// shapes, and no storage is orphaned.
    fn check_storage(&self) -> Result<()> {
        let mut expected_params = 0;
        for l in self.all_layers() {
            let name = l.name();
            let need = |key: String, shape: &[usize]| -> Result<()> {
                match self.params.get(&key) {
                    Some(t) if t.shape() == shape => Ok(()),
                    Some(t) => Err(Error::format(format!("{key} has shape {:?}, expected {shape:?}", t.shape()))),
                    None => Err(Error::format(format!("missing parameter {key}"))),
                }
            };
            match l {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    need(super::weight_key(name), &[*out_channels, *in_channels, kernel[0], kernel[1]])?;
                    need(super::bias_key(name), &[*out_channels])?;
                    expected_params += 2;
                }
                LayerSpec::Dense { inputs, outputs, .. } => {
                    need(super::weight_key(name), &[*inputs, *outputs])?;
                    need(super::bias_key(name), &[*outputs])?;
                    expected_params += 2;
                }
                LayerSpec::DenseSparse { inputs, outputs, .. } => {
                    need(super::bias_key(name), &[*outputs])?;
                    expected_params += 1;
                    match self.sparse.get(name) {
                        Some(s) if (s.rows(), s.cols()) == (*inputs, *outputs) => {}
                        _ => return Err(Error::format(format!("layer {name} lacks a matching CSR weight"))),
                    }
                }
                LayerSpec::DensePq { inputs, outputs, .. } => {
                    need(super::bias_key(name), &[*outputs])?;
                    expected_params += 1;
                    match self.pq.get(name) {
                        Some(c) if (c.rows(), c.cols()) == (*inputs, *outputs) => {}
                        _ => return Err(Error::format(format!("layer {name} lacks a matching codebook"))),
                    }
                }
                _ => {}
            }
        }
        let n_sparse = self.all_layers().iter().filter(|l| matches!(l, LayerSpec::DenseSparse { .. })).count();
        let n_pq = self.all_layers().iter().filter(|l| matches!(l, LayerSpec::DensePq { .. })).count();
        if self.params.len() != expected_params || self.sparse.len() != n_sparse || self.pq.len() != n_pq {
            return Err(Error::format("model container holds unreferenced storage"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{build_resnet_mini, build_vtcnn2};

    #[test]
    fn roundtrip_preserves_hash_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_resnet_mini(0.25, 9).unwrap();
        let w = m.dense_weight("fc1").unwrap();
        let (i, o) = m.layer("fc1").unwrap().dense_dims().unwrap();
        let pruned: Vec<f64> = w.iter().enumerate().map(|(k, &v)| if k % 3 == 0 { v } else { 0.0 }).collect();
        let m = m.to_sparse_layer("fc1", SparseMatrix::from_dense(i, o, &pruned).unwrap()).unwrap();
        save_model(&m, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.hash(), m.hash());
        assert_eq!(back, m);
        let x = Tensor::full(&[2, 2, 1, 128], 0.3);
        assert_eq!(back.logits(x.clone()).unwrap(), m.logits(x).unwrap());
    }

    #[test]
    fn missing_or_corrupt_blob_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&build_vtcnn2(1).unwrap(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("fc2.bias.tnsr")).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));

        let dir = tempfile::tempdir().unwrap();
        save_model(&build_vtcnn2(1).unwrap(), dir.path()).unwrap();
        let p = dir.path().join("fc2.weight.tnsr");
        let mut b = fs::read(&p).unwrap();
        b.truncate(b.len() - 5);
        fs::write(&p, b).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));
    }
}

//! Versioned checkpoint container.
//!
//! One JSON file holds a format version, an arbitrary config snapshot, the
//! SHA-256 of the vocabulary the parameters were trained against, and every
//! parameter tensor with its shape. JSON serializes f64 exactly (shortest
//! round-trip representation), so load ∘ save restores bitwise-identical
//! parameters and therefore bitwise-identical predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor shape {shape:?} wants {expect} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// What produced this: "student" or "ran".
    pub kind: String,
    /// Config snapshot, stored as raw JSON so the container does not depend
    /// on any one config type.
    pub config: Value,
    /// SHA-256 of the vocabulary file the parameters index into.
    pub vocab_sha256: String,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new<C: Serialize>(kind: &str, config: &C, vocab_sha256: &str) -> Result<Checkpoint> {
        Ok(Checkpoint {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            config: serde_json::to_value(config)?,
            vocab_sha256: vocab_sha256.to_string(),
            tensors: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
        }
        self.tensors.insert(name.to_string(), Tensor::new(shape, data)?);
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
    }

    /// Fetch a tensor and check its shape against what the consumer expects.
    pub fn tensor_with_shape(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self.tensor(name)?;
        if t.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    pub fn config_as<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::atomic_write(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {} (this build reads {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        for (name, t) in &ckpt.tensors {
            let expect: usize = t.shape.iter().product();
            if expect != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} shape {:?} disagrees with {} stored values",
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let mut r = crate::rng::stream(7, "ckpt-test", 0);
        let data: Vec<f64> = (0..60)
            .map(|_| rand::Rng::gen::<f64>(&mut r) * 2.0 - 1.0)
            .collect();
        let mut ckpt = Checkpoint::new("student", &serde_json::json!({"d": 4}), "ab12").unwrap();
        ckpt.insert("w", vec![6, 10], data.clone()).unwrap();
        ckpt.insert("b", vec![6], data[..6].to_vec()).unwrap();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.kind, "student");
        assert_eq!(back.vocab_sha256, "ab12");
        assert_eq!(back.tensor("w").unwrap().data, data);
        assert_eq!(back.tensor("w").unwrap().shape, vec![6, 10]);
        assert_eq!(back.tensor_with_shape("b", &[6]).unwrap().data, &data[..6]);
        assert!(back.tensor_with_shape("b", &[7]).is_err());
        assert!(back.tensor("nope").is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let mut ckpt = Checkpoint::new("ran", &(), "x").unwrap();
        ckpt.insert("a", vec![2], vec![0.0, 1.0]).unwrap();
        assert!(ckpt.insert("a", vec![2], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.ckpt.json");
        let mut ckpt = Checkpoint::new("student", &(), "x").unwrap();
        ckpt.format_version = 99;
        ckpt.save(&path).unwrap();
        match Checkpoint::load(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("99")),
            other => panic!("expected version error, got {other:?}"),
        }
    }
}

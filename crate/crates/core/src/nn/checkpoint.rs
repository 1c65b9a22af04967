use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{Error, Result};
use crate::util::write_string_atomic;

pub const CHECKPOINT_FORMAT: &str = "dagcd-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

/// JSON parameter checkpoint: named row-major tensors, a hash of the
/// configuration that produced them, and free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub tensors: Vec<NamedTensor>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash: config_hash.into(),
            tensors: Vec::new(),
            meta: serde_json::Value::Null,
        }
    }

    /// Appends every tensor of `model`, names prefixed by `prefix`.
    pub fn push_model(&mut self, prefix: &str, model: &Model) {
        model.visit(|_, name, shape, data| {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}{name}"),
                shape: shape.to_vec(),
                data: data.to_vec(),
            })
        });
    }

    /// Fills `model` from tensors named `prefix + name`. Missing tensors and
    /// shape mismatches are errors.
    pub fn load_model(&self, prefix: &str, model: &mut Model) -> Result<()> {
        let by_name: BTreeMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut shapes = BTreeMap::new();
        model.visit(|_, name, shape, _| {
            shapes.insert(name.to_string(), shape.to_vec());
        });
        for (name, shape) in &shapes {
            let full = format!("{prefix}{name}");
            let t = by_name
                .get(full.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{full}`")))?;
            if &t.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{full}` has shape {:?}, model expects {shape:?}",
                    t.shape
                )));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{full}` has wrong element count"
                )));
            }
        }
        model.visit_mut(|_, name, dst| {
            let t = by_name[format!("{prefix}{name}").as_str()];
            dst.copy_from_slice(&t.data);
        });
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        write_string_atomic(path.as_ref(), &text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}`",
                ck.format
            )));
        }
        Ok(ck)
    }
}

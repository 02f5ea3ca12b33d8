use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};

use super::{Param, ParamSet, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameter snapshot. Floats are written in shortest round-trip form and
/// parsed back to the identical bit pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture<M: ParamSet + ?Sized>(model: &M) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            params: model
                .params()
                .into_iter()
                .map(|p: &Param| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Copy values into `model`, matching parameters by position and
    /// checking names and shapes.
    pub fn restore<M: ParamSet + ?Sized>(&self, model: &mut M) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let mut params = model.params_mut();
        if params.len() != self.params.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} params, model expects {}",
                self.params.len(),
                params.len()
            )));
        }
        for (p, rec) in params.iter_mut().zip(&self.params) {
            if p.name != rec.name {
                return Err(Error::Data(format!(
                    "checkpoint param `{}` where `{}` expected",
                    rec.name, p.name
                )));
            }
            if p.value.shape() != rec.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: p.value.shape().to_vec(),
                    actual: rec.shape.clone(),
                });
            }
            p.value = Tensor::from_vec(&rec.shape, rec.data.clone())?;
            p.zero_grad();
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&ParamRecord> {
        self.params.iter().find(|r| r.name == name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

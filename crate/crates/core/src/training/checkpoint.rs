//! Checkpoint container:
//!
//! ```text
//! "S2CK" header_len:u32 header:JSON params:f64* [adam_m:f64* adam_v:f64*]
//! ```
//!
//! Floats are little-endian, in parameter order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use s2c_tensor::Tensor;

use super::optim::{Adam, AdamConfig};
use crate::config::ModelConfig;
use crate::error::{Result, S2cError};
use crate::model::Model;

pub const MAGIC: &[u8; 4] = b"S2CK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    adam: Option<(AdamConfig, u64)>,
    params: Vec<(String, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Optimizer steps completed.
    pub step: u64,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<Adam>,
}

fn push_floats(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn of_model(model: &Model, step: u64, optimizer: Option<&Adam>) -> Self {
        Self {
            config: model.config.clone(),
            step,
            params: model.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            step: self.step,
            adam: self.optimizer.as_ref().map(|o| (o.config, o.t)),
            params: self.params.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend(json);
        for (_, t) in &self.params {
            push_floats(&mut out, t);
        }
        if let Some(o) = &self.optimizer {
            o.m.iter().chain(&o.v).for_each(|t| push_floats(&mut out, t));
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let bad = |m: &str| S2cError::Incompatible(format!("checkpoint: {m}"));
        if data.len() < 8 || &data[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let len = u32::from_le_bytes(data[4..8].try_into().expect("4 bytes")) as usize;
        let json = data.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!("format version {}", header.format_version)));
        }
        let mut floats = data[8 + len..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        if (data.len() - 8 - len) % 8 != 0 {
            return Err(bad("payload is not a whole number of floats"));
        }
        let mut read = |shape: &[usize]| -> Result<Tensor> {
            let n = shape.iter().product();
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            if v.len() != n {
                return Err(bad("truncated payload"));
            }
            Ok(Tensor::from_vec(shape, v))
        };
        let params = header
            .params
            .iter()
            .map(|(n, s)| Ok((n.clone(), read(s)?)))
            .collect::<Result<Vec<_>>>()?;
        let optimizer = match header.adam {
            None => None,
            Some((config, t)) => {
                let m = params.iter().map(|(_, p)| read(p.shape())).collect::<Result<_>>()?;
                let v = params.iter().map(|(_, p)| read(p.shape())).collect::<Result<_>>()?;
                Some(Adam { config, t, m, v })
            }
        };
        if floats.next().is_some() {
            return Err(bad("trailing data"));
        }
        Ok(Self {
            config: header.config,
            step: header.step,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an interrupted save never clobbers the last good file
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| S2cError::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| S2cError::io(&tmp, e))?;
        f.sync_all().map_err(|e| S2cError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| S2cError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| S2cError::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Rebuild the model this checkpoint was written from.
    pub fn into_model(self) -> Result<(Model, u64, Option<Adam>)> {
        let mut model = Model::new(self.config, 0)?;
        model.params.load_from(&self.params)?;
        Ok((model, self.step, self.optimizer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_hybrid;

    #[test]
    fn round_trip_with_optimizer_state() {
        let model = Model::new(tiny_hybrid(), 3).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), model.params.tensors());
        adam.t = 17;
        adam.m[0].data_mut()[0] = 0.25;
        adam.v[1].data_mut()[0] = 1e-9;
        let ck = Checkpoint::of_model(&model, 17, Some(&adam));
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.step, 17);
        assert_eq!(back.optimizer.as_ref(), Some(&adam));
        let (m2, _, _) = back.into_model().unwrap();
        assert_eq!(m2.params.tensors(), model.params.tensors());
    }

    #[test]
    fn damage_is_reported() {
        let model = Model::new(tiny_hybrid(), 3).unwrap();
        let bytes = Checkpoint::of_model(&model, 0, None).to_bytes();
        for cut in [0, 6, 20, bytes.len() - 8, bytes.len() - 3] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        // a config whose parameter list differs cannot absorb these tensors
        let mut ck = Checkpoint::from_bytes(&bytes).unwrap();
        ck.params.pop();
        assert!(matches!(ck.into_model(), Err(S2cError::Incompatible(_))));
    }
}

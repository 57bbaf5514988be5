//! Binary checkpoints: `SWCK`, a little-endian `u32` version, a `u64`
//! byte length followed by a JSON header, then every tensor as raw
//! little-endian `f64` in header order (parameters, batch-norm running
//! statistics, optimizer moments).

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::BatchNormStats;
use crate::error::{Error, Result};
use crate::models::{ArchitectureConfig, Model, Param};
use crate::tensor::Tensor;

use super::optim::{OptimizerKind, OptimizerState};
use super::{EpochRecord, TrainConfig};

pub const MAGIC: &[u8; 4] = b"SWCK";
pub const VERSION: u32 = 1;

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// `u128` word position, as decimal text.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad RNG word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ArchitectureConfig,
    pub train: Option<TrainConfig>,
    pub params: Vec<Param>,
    pub bn_stats: Vec<BatchNormStats>,
    pub optimizer: Option<OptimizerState>,
    pub rng: Option<RngState>,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BnEntry {
    channels: usize,
    momentum: f64,
    eps: f64,
    updates: u64,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: u64,
    moments: usize,
    second_moments: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ArchitectureConfig,
    train: Option<TrainConfig>,
    /// Every payload tensor, in file order.
    tensors: Vec<TensorEntry>,
    params: usize,
    batch_norm: Vec<BnEntry>,
    optimizer: Option<OptimizerEntry>,
    rng: Option<RngState>,
    history: Vec<EpochRecord>,
}

impl Checkpoint {
    /// Snapshot of a model's weights and running statistics.
    pub fn of_model(model: &Model) -> Self {
        Checkpoint {
            model: model.config.clone(),
            train: None,
            params: model.params.clone(),
            bn_stats: model.bn_stats.clone(),
            optimizer: None,
            rng: None,
            history: Vec::new(),
        }
    }

    /// Rebuilds the model; names and shapes must match the architecture.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::build(&self.model, 0)?;
        if model.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "architecture has {} parameter tensors, checkpoint {}",
                model.params.len(),
                self.params.len()
            )));
        }
        for (dst, src) in model.params.iter_mut().zip(&self.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    src.name,
                    src.value.shape(),
                    dst.name,
                    dst.value.shape()
                )));
            }
            dst.value = src.value.clone();
        }
        if model.bn_stats.len() != self.bn_stats.len()
            || model.bn_stats.iter().zip(&self.bn_stats).any(|(a, b)| a.mean.len() != b.mean.len())
        {
            return Err(Error::Checkpoint("batch-norm layout does not match the architecture".into()));
        }
        model.bn_stats = self.bn_stats.clone();
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bn_shapes: Vec<[usize; 1]> = self.bn_stats.iter().map(|s| [s.mean.len()]).collect();
        let mut tensors: Vec<(String, &[usize], &[f64])> = Vec::new();
        for p in &self.params {
            tensors.push((p.name.clone(), p.value.shape(), p.value.data()));
        }
        for (i, s) in self.bn_stats.iter().enumerate() {
            tensors.push((format!("bn{i}.mean"), &bn_shapes[i][..], &s.mean));
            tensors.push((format!("bn{i}.var"), &bn_shapes[i][..], &s.var));
        }
        if let Some(o) = &self.optimizer {
            for (i, m) in o.m.iter().enumerate() {
                tensors.push((format!("opt.m{i}"), m.shape(), m.data()));
            }
            for (i, v) in o.v.iter().enumerate() {
                tensors.push((format!("opt.v{i}"), v.shape(), v.data()));
            }
        }
        let header = Header {
            model: self.model.clone(),
            train: self.train.clone(),
            tensors: tensors
                .iter()
                .map(|(n, s, _)| TensorEntry {
                    name: n.clone(),
                    shape: s.to_vec(),
                })
                .collect(),
            params: self.params.len(),
            batch_norm: self
                .bn_stats
                .iter()
                .map(|s| BnEntry {
                    channels: s.mean.len(),
                    momentum: s.momentum,
                    eps: s.eps,
                    updates: s.updates,
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerEntry {
                kind: o.kind,
                lr: o.lr,
                weight_decay: o.weight_decay,
                step: o.step,
                moments: o.m.len(),
                second_moments: o.v.len(),
            }),
            rng: self.rng.clone(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let payload: usize = tensors.iter().map(|(_, _, d)| d.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, d) in &tensors {
            for v in *d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing SWCK magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut payload = &body[hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let n: usize = t.shape.iter().product();
            if payload.len() < 8 * n {
                return Err(Error::Checkpoint(format!("truncated payload at {}", t.name)));
            }
            let data = payload[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            payload = &payload[8 * n..];
            tensors.push((t.name.clone(), Tensor::new(&t.shape, data)?));
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        let nbn = 2 * header.batch_norm.len();
        let (nm, nv) = header.optimizer.as_ref().map_or((0, 0), |o| (o.moments, o.second_moments));
        if tensors.len() != header.params + nbn + nm + nv {
            return Err(bad("tensor count does not match header"));
        }
        let mut it = tensors.into_iter();
        let params = it
            .by_ref()
            .take(header.params)
            .map(|(name, value)| Param { name, value })
            .collect();
        let mut bn_stats = Vec::with_capacity(header.batch_norm.len());
        for b in &header.batch_norm {
            let (mean, var) = (it.next().unwrap().1, it.next().unwrap().1);
            if mean.len() != b.channels || var.len() != b.channels {
                return Err(bad("batch-norm channel mismatch"));
            }
            bn_stats.push(BatchNormStats {
                mean: mean.into_data(),
                var: var.into_data(),
                momentum: b.momentum,
                eps: b.eps,
                updates: b.updates,
            });
        }
        let optimizer = header.optimizer.map(|o| OptimizerState {
            kind: o.kind,
            lr: o.lr,
            weight_decay: o.weight_decay,
            m: it.by_ref().take(o.moments).map(|t| t.1).collect(),
            v: it.by_ref().take(o.second_moments).map(|t| t.1).collect(),
            step: o.step,
        });
        Ok(Checkpoint {
            model: header.model,
            train: header.train,
            params,
            bn_stats,
            optimizer,
            rng: header.rng,
            history: header.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::preset;
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        let model = Model::build(&preset("desk-wnet").unwrap(), 3).unwrap();
        let mut ck = Checkpoint::of_model(&model);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 1e-3, 1e-4, &model.params);
        opt.step = 7;
        opt.m[0].data_mut()[0] = 0.1 + 0.2;
        ck.optimizer = Some(opt);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        rng.random::<u64>();
        ck.rng = Some(RngState::capture(&rng));
        ck.bn_stats[0].mean[0] = std::f64::consts::PI;
        ck.train = Some(TrainConfig::default());
        ck
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SWCK");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn rng_resumes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..13 {
            rng.random::<u32>();
        }
        let mut restored = RngState::capture(&rng).restore().unwrap();
        assert_eq!(rng.random::<u64>(), restored.random::<u64>());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let mut ck = sample();
        ck.params[0].value = Tensor::zeros(&[1]);
        assert!(matches!(ck.to_model(), Err(Error::Checkpoint(_))));
    }
}

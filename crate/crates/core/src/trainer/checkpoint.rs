//! Binary checkpoint record.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"DROCKPT1"
//! u64 layer-size count D, then D × u64 layer sizes
//! per layer: out×in f64 weights (row-major), then out f64 biases
//! u64 completed epochs
//! u8  mode (0 = erm, 1 = erm_replacement, 2 = dro)
//! dro only: f64 beta, w_min, w_max, init_loss; u64 sampler seed; u64 n;
//!           n × f64 stale losses; n × u64 draw counts
//! 32 B rng seed, u64 rng stream, u128 rng word position
//! 32 B SHA-256 of the training config (with `epochs` zeroed)
//! ```

use sha2::{Digest, Sha256};

use super::{ArmState, TrainConfig, TrainMode};
use crate::error::{DroError, Result};
use crate::model::Mlp;
use crate::rng::RngSnapshot;
use crate::sampler::{SamplerConfig, SamplerState, UniformSampler};

pub const MAGIC: &[u8; 8] = b"DROCKPT1";

/// Digest identifying the training law of a config. `epochs` is excluded so
/// that a run can be extended from a checkpoint.
pub fn config_digest(config: &TrainConfig) -> [u8; 32] {
    let canonical = TrainConfig { epochs: 0, ..config.clone() };
    let json = serde_json::to_vec(&canonical).expect("config serializes");
    Sha256::digest(&json).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRecord {
    pub config: SamplerConfig,
    pub seed: u64,
    pub stale_losses: Vec<f64>,
    pub draw_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Mlp,
    pub epoch: usize,
    pub mode: TrainMode,
    pub sampler: Option<SamplerRecord>,
    pub rng: RngSnapshot,
    pub config_hash: [u8; 32],
}

impl Checkpoint {
    pub(crate) fn capture(params: &Mlp, epoch: usize, arm: &ArmState, config: &TrainConfig) -> Self {
        let (rng, sampler) = match arm {
            ArmState::Shuffle(r) => (RngSnapshot::capture(r), None),
            ArmState::Uniform(u) => (u.rng_snapshot(), None),
            ArmState::Hardness(s) => (
                s.rng_snapshot(),
                Some(SamplerRecord {
                    config: *s.config(),
                    seed: s.seed(),
                    stale_losses: s.stale_losses().to_vec(),
                    draw_counts: s.draw_counts().to_vec(),
                }),
            ),
        };
        Checkpoint {
            params: params.clone(),
            epoch,
            mode: config.mode,
            sampler,
            rng,
            config_hash: config_digest(config),
        }
    }

    pub(crate) fn arm_state(&self, config: &TrainConfig, n: usize) -> Result<ArmState> {
        if self.mode != config.mode {
            return Err(DroError::Checkpoint("mode mismatch".into()));
        }
        Ok(match (self.mode, &self.sampler) {
            (TrainMode::Erm, None) => ArmState::Shuffle(self.rng.restore()),
            (TrainMode::ErmReplacement, None) => ArmState::Uniform(UniformSampler::from_snapshot(n, self.rng)),
            (TrainMode::Dro, Some(rec)) => {
                if rec.stale_losses.len() != n {
                    return Err(DroError::Checkpoint(format!(
                        "sampler covers {} samples, dataset has {n}",
                        rec.stale_losses.len()
                    )));
                }
                ArmState::Hardness(SamplerState::from_parts(
                    rec.stale_losses.clone(),
                    rec.draw_counts.clone(),
                    rec.seed,
                    rec.config,
                    self.rng,
                )?)
            }
            _ => return Err(DroError::Checkpoint("sampler block does not match mode".into())),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        encode_params(&self.params, &mut out);
        put_u64(&mut out, self.epoch as u64);
        out.push(match self.mode {
            TrainMode::Erm => 0,
            TrainMode::ErmReplacement => 1,
            TrainMode::Dro => 2,
        });
        if let Some(rec) = &self.sampler {
            for v in [rec.config.beta, rec.config.w_min, rec.config.w_max, rec.config.init_loss] {
                put_f64(&mut out, v);
            }
            put_u64(&mut out, rec.seed);
            put_u64(&mut out, rec.stale_losses.len() as u64);
            rec.stale_losses.iter().for_each(|&v| put_f64(&mut out, v));
            rec.draw_counts.iter().for_each(|&v| put_u64(&mut out, v));
        }
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(DroError::Checkpoint("bad magic".into()));
        }
        let params = decode_params(&mut r)?;
        let epoch = r.u64()? as usize;
        let mode = match r.take(1)?[0] {
            0 => TrainMode::Erm,
            1 => TrainMode::ErmReplacement,
            2 => TrainMode::Dro,
            t => return Err(DroError::Checkpoint(format!("unknown mode tag {t}"))),
        };
        let sampler = if mode == TrainMode::Dro {
            let config = SamplerConfig { beta: r.f64()?, w_min: r.f64()?, w_max: r.f64()?, init_loss: r.f64()? };
            let seed = r.u64()?;
            let n = r.len_prefix(16)?;
            let stale_losses = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
            let draw_counts = (0..n).map(|_| r.u64()).collect::<Result<_>>()?;
            Some(SamplerRecord { config, seed, stale_losses, draw_counts })
        } else {
            None
        };
        let rng = RngSnapshot {
            seed: r.take(32)?.try_into().unwrap(),
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.take(16)?.try_into().unwrap()),
        };
        let config_hash = r.take(32)?.try_into().unwrap();
        if r.pos != bytes.len() {
            return Err(DroError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { params, epoch, mode, sampler, rng, config_hash })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| DroError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| DroError::io(path, e))?)
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_params(params: &Mlp, out: &mut Vec<u8>) {
    let dims = params.dims();
    put_u64(out, dims.len() as u64);
    dims.iter().for_each(|&d| put_u64(out, d as u64));
    params.params().for_each(|&v| put_f64(out, v));
}

fn decode_params(r: &mut Cursor<'_>) -> Result<Mlp> {
    let count = r.len_prefix(8)?;
    let dims = (0..count).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let mut mlp = Mlp::zeros(&dims).map_err(|e| DroError::Checkpoint(e.to_string()))?;
    let total = mlp.num_params();
    if r.remaining() < total * 8 {
        return Err(DroError::Checkpoint("truncated parameters".into()));
    }
    for p in mlp.params_mut() {
        *p = r.f64()?;
    }
    Ok(mlp)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(DroError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count whose items take at least `item_bytes` each; rejects counts
    /// the remaining buffer could not hold.
    fn len_prefix(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.remaining() / item_bytes) as u64 {
            return Err(DroError::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_stratified, GenerationConfig};
    use crate::trainer::Trainer;

    fn small() -> crate::data::StratifiedDataset {
        generate_stratified(&GenerationConfig { n: 120, d: 4, ..GenerationConfig::default() }, 3).unwrap()
    }

    #[test]
    fn bytes_round_trip_for_every_mode() {
        let ds = small();
        for mode in [TrainMode::Erm, TrainMode::ErmReplacement, TrainMode::Dro] {
            let cfg = TrainConfig { mode, ..TrainConfig::erm(2, 16) }.with_seed(4);
            let mut t = Trainer::new(&ds, &[4, 8, 3], &cfg).unwrap();
            t.run().unwrap();
            let ck = t.checkpoint();
            let bytes = ck.to_bytes();
            assert_eq!(&bytes[..8], MAGIC);
            assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        }
    }

    #[test]
    fn resume_is_bit_identical() {
        let ds = small();
        for mode in [TrainMode::Erm, TrainMode::ErmReplacement, TrainMode::Dro] {
            let full_cfg = TrainConfig { mode, ..TrainConfig::erm(5, 16) }.with_seed(8);
            let mut full = Trainer::new(&ds, &[4, 8, 3], &full_cfg).unwrap();
            full.run().unwrap();

            let first_cfg = TrainConfig { epochs: 2, ..full_cfg.clone() };
            let mut first = Trainer::new(&ds, &[4, 8, 3], &first_cfg).unwrap();
            first.run().unwrap();
            let bytes = first.checkpoint().to_bytes();
            let ck = Checkpoint::from_bytes(&bytes).unwrap();
            let mut resumed = Trainer::resume(&ds, &full_cfg, &ck).unwrap();
            assert_eq!(resumed.epoch(), 2);
            resumed.run().unwrap();
            assert_eq!(resumed.checkpoint().to_bytes(), full.checkpoint().to_bytes(), "{mode:?}");
        }
    }

    #[test]
    fn rejects_corruption_and_foreign_configs() {
        let ds = small();
        let cfg = TrainConfig::dro(1, 16, SamplerConfig::default());
        let mut t = Trainer::new(&ds, &[4, 8, 3], &cfg).unwrap();
        t.run().unwrap();
        let bytes = t.checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let other = TrainConfig { learning_rate: 0.1, ..cfg.clone() };
        assert!(Trainer::resume(&ds, &other, &ck).is_err());
        assert_eq!(config_digest(&cfg), config_digest(&TrainConfig { epochs: 99, ..cfg }));
    }
}

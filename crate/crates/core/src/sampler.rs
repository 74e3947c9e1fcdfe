//! Hardness-weighted sampling.
//!
//! The sampler keeps a stale estimate of every training sample's loss, draws
//! mini-batch indices i.i.d. from `q = softmax(β·stale_losses)` and attaches
//! an importance weight `clip(n·q_i, w_min, w_max)` to each draw. Stale
//! losses are refreshed with whatever loss the trainer observed in the
//! forward pass of the step that drew the sample.
//!
//! As `β → 0` the distribution becomes uniform, every weight becomes 1 and
//! the whole thing reduces to with-replacement ERM.

use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};
use crate::model::max_sample_loss;
use crate::rng::{self, DetRng, RngSnapshot, Stream};
use crate::robust::{check_beta, softmax_scaled, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub beta: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Stale loss assigned to samples that have not been drawn yet.
    /// Defaults to the largest loss the model can report, so every sample
    /// gets drawn at least once before the sampler starts to discriminate.
    #[serde(default = "max_sample_loss")]
    pub init_loss: f64,
}

impl Default for SamplerConfig {
    /// `β = 100` with weights clipped to `[0.1, 10]`.
    fn default() -> Self {
        SamplerConfig { beta: 100.0, w_min: 0.1, w_max: 10.0, init_loss: max_sample_loss() }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.w_min > 0.0 && self.w_min <= self.w_max && self.w_max.is_finite()) {
            return Err(DroError::invalid(format!(
                "clipping bounds must satisfy 0 < w_min <= w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        if !self.init_loss.is_finite() {
            return Err(DroError::invalid("init_loss must be finite"));
        }
        Ok(())
    }
}

/// Indices drawn for one step and their importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Single-writer sampler state; owned by one training loop.
#[derive(Debug, Clone)]
pub struct SamplerState {
    stale_losses: Vec<f64>,
    draw_counts: Vec<u64>,
    seed: u64,
    config: SamplerConfig,
    rng: DetRng,
}

impl PartialEq for SamplerState {
    fn eq(&self, other: &Self) -> bool {
        self.stale_losses.iter().map(|l| l.to_bits()).eq(other.stale_losses.iter().map(|l| l.to_bits()))
            && self.draw_counts == other.draw_counts
            && self.seed == other.seed
            && self.config == other.config
            && RngSnapshot::capture(&self.rng) == RngSnapshot::capture(&other.rng)
    }
}

impl SamplerState {
    pub fn new(n: usize, config: SamplerConfig, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(DroError::invalid("sampler needs at least one sample"));
        }
        config.validate()?;
        Ok(SamplerState {
            stale_losses: vec![config.init_loss; n],
            draw_counts: vec![0; n],
            seed,
            config,
            rng: rng::seeded(seed, Stream::Batches),
        })
    }

    pub fn len(&self) -> usize {
        self.stale_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stale_losses(&self) -> &[f64] {
        &self.stale_losses
    }

    pub fn draw_counts(&self) -> &[u64] {
        &self.draw_counts
    }

    pub fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(&self.rng)
    }

    /// Rebuilds a state from checkpointed parts.
    pub fn from_parts(
        stale_losses: Vec<f64>,
        draw_counts: Vec<u64>,
        seed: u64,
        config: SamplerConfig,
        rng: RngSnapshot,
    ) -> Result<Self> {
        config.validate()?;
        if stale_losses.is_empty() || stale_losses.len() != draw_counts.len() {
            return Err(DroError::invalid("stale losses and draw counts disagree in length"));
        }
        if stale_losses.iter().any(|l| !l.is_finite()) {
            return Err(DroError::invalid("stale losses must be finite"));
        }
        Ok(SamplerState { stale_losses, draw_counts, seed, config, rng: rng.restore() })
    }

    pub fn update_loss(&mut self, index: usize, loss: f64) -> Result<()> {
        let n = self.len();
        let slot = self
            .stale_losses
            .get_mut(index)
            .ok_or_else(|| DroError::invalid(format!("sample index {index} out of range 0..{n}")))?;
        if !loss.is_finite() {
            return Err(DroError::invalid(format!("loss for sample {index} is not finite")));
        }
        *slot = loss;
        Ok(())
    }

    /// The adversary's weights `softmax(β·stale_losses)`.
    pub fn sampling_distribution(&self) -> WeightVector {
        let q = softmax_scaled(&self.stale_losses, self.config.beta);
        WeightVector::new(q).expect("softmax of finite values lies on the simplex")
    }

    pub fn importance_weight(&self, q_i: f64) -> f64 {
        (self.len() as f64 * q_i).clamp(self.config.w_min, self.config.w_max)
    }

    /// Draws `batch_size` indices with replacement from the current
    /// distribution, one uniform variate per draw, by CDF inversion.
    pub fn draw_batch(&mut self, batch_size: usize) -> Result<Batch> {
        if batch_size == 0 {
            return Err(DroError::invalid("batch size must be positive"));
        }
        let q = self.sampling_distribution().into_inner();
        let cdf: Vec<f64> = q
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let last_live = q.iter().rposition(|&p| p > 0.0).expect("distribution has mass");
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let u = rng::unit(&mut self.rng);
            let i = cdf.partition_point(|&c| c <= u).min(last_live);
            self.draw_counts[i] += 1;
            indices.push(i);
            weights.push(self.importance_weight(q[i]));
        }
        Ok(Batch { indices, weights })
    }
}

/// Uniform with-replacement sampler obeying the same RNG contract as
/// [`SamplerState::draw_batch`]: one `[0,1)` variate per draw, index
/// `floor(u·n)`. Used by the with-replacement ERM arm.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    n: usize,
    rng: DetRng,
}

impl UniformSampler {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(DroError::invalid("sampler needs at least one sample"));
        }
        Ok(UniformSampler { n, rng: rng::seeded(seed, Stream::Batches) })
    }

    pub(crate) fn from_snapshot(n: usize, rng: RngSnapshot) -> Self {
        UniformSampler { n, rng: rng.restore() }
    }

    pub fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(&self.rng)
    }

    pub fn draw(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size)
            .map(|_| ((rng::unit(&mut self.rng) * self.n as f64) as usize).min(self.n - 1))
            .collect()
    }
}

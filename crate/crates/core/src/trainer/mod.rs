//! ERM and hardness-weighted DRO training loops, k-fold orchestration and
//! ensembling.
//!
//! Three sampling laws share one SGD step:
//!
//! * [`TrainMode::Erm`] shuffles the data every epoch and walks it in
//!   mini-batches, without replacement.
//! * [`TrainMode::ErmReplacement`] draws every batch uniformly with
//!   replacement; it is the apples-to-apples baseline for DRO, which cannot
//!   avoid replacement.
//! * [`TrainMode::Dro`] draws from the hardness-weighted sampler, scales each
//!   sample's gradient by its importance weight and feeds the raw loss back
//!   into the sampler.
//!
//! Every run is a pure function of (data, dims, config), and a run can be
//! checkpointed between epochs and resumed bit-exactly.

mod checkpoint;

pub use checkpoint::{config_digest, Checkpoint, MAGIC};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ScoreRow, ScoreTable, StratifiedDataset};
use crate::error::{DroError, Result};
use crate::model::{correct_class_probability, init_params, per_sample_gradient, softmax, Mlp, Sample};
use crate::rng::{self, DetRng, Stream};
use crate::sampler::{SamplerConfig, SamplerState, UniformSampler};

/// Region label used for score tables produced by this crate.
pub const SCORE_REGION: &str = "all";

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Erm,
    ErmReplacement,
    Dro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    pub mode: TrainMode,
    /// Only consulted in [`TrainMode::Dro`].
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_folds() -> usize {
    5
}

impl TrainConfig {
    pub fn erm(epochs: usize, batch_size: usize) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            learning_rate: DEFAULT_LEARNING_RATE,
            mode: TrainMode::Erm,
            sampler: SamplerConfig::default(),
            folds: 5,
            seed: 0,
        }
    }

    pub fn dro(epochs: usize, batch_size: usize, sampler: SamplerConfig) -> Self {
        TrainConfig { mode: TrainMode::Dro, sampler, ..TrainConfig::erm(epochs, batch_size) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(DroError::invalid(format!(
                "batch_size must lie in 1..={n}, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DroError::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.folds == 0 {
            return Err(DroError::invalid("folds must be at least 1"));
        }
        if self.mode == TrainMode::Dro {
            self.sampler.validate()?;
        }
        Ok(())
    }
}

/// Per-mode sampling state carried between epochs.
#[derive(Debug, Clone)]
pub(crate) enum ArmState {
    Shuffle(DetRng),
    Uniform(UniformSampler),
    Hardness(SamplerState),
}

/// A training run that can be advanced epoch by epoch.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    samples: &'a [Sample],
    config: TrainConfig,
    params: Mlp,
    epoch: usize,
    arm: ArmState,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a StratifiedDataset, dims: &[usize], config: &TrainConfig) -> Result<Self> {
        let params = init_params(dims, config.seed)?;
        let arm = match config.mode {
            TrainMode::Erm => ArmState::Shuffle(rng::seeded(config.seed, Stream::Batches)),
            TrainMode::ErmReplacement => ArmState::Uniform(UniformSampler::new(data.len(), config.seed)?),
            TrainMode::Dro => ArmState::Hardness(SamplerState::new(data.len(), config.sampler, config.seed)?),
        };
        Trainer::assemble(data, config, params, 0, arm)
    }

    fn assemble(
        data: &'a StratifiedDataset,
        config: &TrainConfig,
        params: Mlp,
        epoch: usize,
        arm: ArmState,
    ) -> Result<Self> {
        config.validate(data.len())?;
        if params.input_dim() != data.feature_dim() {
            return Err(DroError::invalid(format!(
                "model expects {} features, data has {}",
                params.input_dim(),
                data.feature_dim()
            )));
        }
        if params.num_classes() < data.num_classes() {
            return Err(DroError::invalid(format!(
                "model has {} outputs, data has {} classes",
                params.num_classes(),
                data.num_classes()
            )));
        }
        Ok(Trainer { samples: &data.samples, config: config.clone(), params, epoch, arm })
    }

    /// Resumes from a checkpoint taken with a config that differs at most
    /// in `epochs`.
    pub fn resume(data: &'a StratifiedDataset, config: &TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.config_hash != config_digest(config) {
            return Err(DroError::Checkpoint("checkpoint was written for a different config".into()));
        }
        let arm = ckpt.arm_state(config, data.len())?;
        Trainer::assemble(data, config, ckpt.params.clone(), ckpt.epoch, arm)
    }

    pub fn params(&self) -> &Mlp {
        &self.params
    }

    pub fn into_params(self) -> Mlp {
        self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn sampler(&self) -> Option<&SamplerState> {
        match &self.arm {
            ArmState::Hardness(s) => Some(s),
            _ => None,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.params, self.epoch, &self.arm, &self.config)
    }

    /// Runs one full epoch.
    pub fn run_epoch(&mut self) -> Result<()> {
        let n = self.samples.len();
        let b = self.config.batch_size;
        match &mut self.arm {
            ArmState::Shuffle(rng) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                for chunk in order.chunks(b) {
                    sgd_on_batch(&mut self.params, self.samples, chunk, None, self.config.learning_rate)?;
                }
            }
            ArmState::Uniform(sampler) => {
                for _ in 0..n.div_ceil(b) {
                    let idx = sampler.draw(b);
                    sgd_on_batch(&mut self.params, self.samples, &idx, None, self.config.learning_rate)?;
                }
            }
            ArmState::Hardness(sampler) => {
                for _ in 0..n.div_ceil(b) {
                    let batch = sampler.draw_batch(b)?;
                    let losses = sgd_on_batch(
                        &mut self.params,
                        self.samples,
                        &batch.indices,
                        Some(&batch.weights),
                        self.config.learning_rate,
                    )?;
                    for (&i, &l) in batch.indices.iter().zip(&losses) {
                        sampler.update_loss(i, l)?;
                    }
                }
            }
        }
        self.epoch += 1;
        Ok(())
    }

    /// Runs epochs until `config.epochs` have been completed in total.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }
}

/// One SGD step on the (optionally weighted) mean gradient of a batch.
/// Returns the raw per-sample losses, measured before the update.
fn sgd_on_batch(
    params: &mut Mlp,
    samples: &[Sample],
    indices: &[usize],
    weights: Option<&[f64]>,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    let mut total = params.zeros_like();
    let mut losses = Vec::with_capacity(indices.len());
    for (j, &i) in indices.iter().enumerate() {
        let (loss, grad) = per_sample_gradient(params, &samples[i])?;
        let w = weights.map_or(1.0, |w| w[j]);
        total.add_scaled(&grad, w)?;
        losses.push(loss);
    }
    params.add_scaled(&total, -learning_rate / indices.len() as f64)?;
    Ok(losses)
}

/// Trains with shuffled, without-replacement mini-batches.
pub fn train_erm(dataset: &StratifiedDataset, dims: &[usize], config: &TrainConfig) -> Result<Mlp> {
    if config.mode == TrainMode::Dro {
        return Err(DroError::invalid("train_erm called with mode = dro"));
    }
    train(dataset, dims, config)
}

/// Trains with the hardness-weighted sampler.
pub fn train_dro(dataset: &StratifiedDataset, dims: &[usize], config: &TrainConfig) -> Result<Mlp> {
    if config.mode != TrainMode::Dro {
        return Err(DroError::invalid("train_dro requires mode = dro"));
    }
    train(dataset, dims, config)
}

/// Trains with whatever law `config.mode` names.
pub fn train(dataset: &StratifiedDataset, dims: &[usize], config: &TrainConfig) -> Result<Mlp> {
    let mut t = Trainer::new(dataset, dims, config)?;
    t.run()?;
    Ok(t.into_params())
}

/// Splits `0..n` into `k` disjoint validation folds whose sizes differ by at
/// most one. Each fold is sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(DroError::invalid(format!("cannot split {n} cases into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, Stream::Split));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Random validation subset of `round(fraction·n)` cases (at least one, and
/// at least one case left for training).
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n < 2 || !(fraction > 0.0 && fraction < 1.0) {
        return Err(DroError::invalid(format!("cannot hold out {fraction} of {n} cases")));
    }
    let size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, Stream::Split));
    let mut val = order[..size].to_vec();
    val.sort_unstable();
    Ok(val)
}

/// Mean of the members' softmax probability vectors.
pub fn ensemble_predict(models: &[Mlp], features: &[f64]) -> Result<Vec<f64>> {
    let first = models.first().ok_or_else(|| DroError::invalid("empty ensemble"))?;
    let mut avg = vec![0.0; first.num_classes()];
    for m in models {
        if !m.same_shape(first) {
            return Err(DroError::invalid("ensemble members have different shapes"));
        }
        let p = softmax(&m.forward(features)?);
        avg.iter_mut().zip(&p).for_each(|(a, p)| *a += p);
    }
    let k = models.len() as f64;
    avg.iter_mut().for_each(|a| *a /= k);
    Ok(avg)
}

/// A trained fold member and the cases it was validated on.
#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub validation: Vec<usize>,
    pub checkpoint: Checkpoint,
}

impl FoldModel {
    pub fn params(&self) -> &Mlp {
        &self.checkpoint.params
    }
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub folds: Vec<FoldModel>,
    /// Correct-class probability of every validation case under its fold's
    /// model, in case order.
    pub scores: ScoreTable,
}

/// Validation folds for a run seeded with `seed`: k-fold when `folds > 1`,
/// otherwise a single holdout of `holdout_fraction`.
pub fn validation_folds(n: usize, folds: usize, holdout_fraction: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds == 1 {
        Ok(vec![holdout_split(n, holdout_fraction, seed)?])
    } else {
        kfold_split(n, folds, seed)
    }
}

/// Trains one model per fold (in parallel, on at most `jobs` threads) and
/// scores each case with the model that did not see it.
///
/// The split depends only on `config.seed`, so arms run with the same seed
/// share their folds. Fold `f` is initialized from `derive_seed(seed, f)`.
pub fn cross_validate(
    dataset: &StratifiedDataset,
    dims: &[usize],
    config: &TrainConfig,
    holdout_fraction: f64,
    jobs: usize,
) -> Result<CrossValidation> {
    config.validate(dataset.len())?;
    let splits = validation_folds(dataset.len(), config.folds, holdout_fraction, config.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| DroError::invalid(format!("thread pool: {e}")))?;
    let folds: Vec<FoldModel> = pool.install(|| {
        splits
            .par_iter()
            .enumerate()
            .map(|(f, validation)| {
                let train_idx: Vec<usize> =
                    (0..dataset.len()).filter(|i| validation.binary_search(i).is_err()).collect();
                let train_set = dataset.subset(&train_idx)?;
                let fold_cfg = config.clone().with_seed(rng::derive_seed(config.seed, f as u64));
                let mut t = Trainer::new(&train_set, dims, &fold_cfg)?;
                t.run()?;
                Ok(FoldModel { fold: f, validation: validation.clone(), checkpoint: t.checkpoint() })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut owner = vec![None; dataset.len()];
    for fm in &folds {
        for &i in &fm.validation {
            owner[i] = Some(fm.fold);
        }
    }
    let mut scores = ScoreTable::default();
    for (i, o) in owner.iter().enumerate() {
        if let Some(f) = *o {
            let s = &dataset.samples[i];
            scores.push(ScoreRow {
                case_id: dataset.case_ids[i].clone(),
                group: s.group.clone(),
                region: SCORE_REGION.into(),
                score: correct_class_probability(folds[f].params(), s)?,
            })?;
        }
    }
    Ok(CrossValidation { folds, scores })
}

/// Scores every case of `dataset` with the fold ensemble.
pub fn ensemble_scores(models: &[Mlp], dataset: &StratifiedDataset) -> Result<ScoreTable> {
    let mut table = ScoreTable::default();
    for (s, id) in dataset.samples.iter().zip(&dataset.case_ids) {
        let p = ensemble_predict(models, &s.features)?;
        let score = *p.get(s.target).ok_or_else(|| DroError::invalid("target out of range"))?;
        table.push(ScoreRow {
            case_id: id.clone(),
            group: s.group.clone(),
            region: SCORE_REGION.into(),
            score: score.clamp(0.0, 1.0),
        })?;
    }
    Ok(table)
}

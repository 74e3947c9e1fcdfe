//! Percentile-loss training toolkit.
//!
//! Instead of the mean per-sample loss, train on the log-sum-exp relaxation
//! of a loss percentile, equivalently a KL-regularized distributionally
//! robust objective, by drawing mini-batches from a hardness-weighted
//! sampler. Evaluate the outcome per subpopulation with percentile tables.
//!
//! | module      | contents                                                        |
//! |-------------|-----------------------------------------------------------------|
//! | [`robust`]  | mean, percentile, log-sum-exp, Chernoff bound, closed-form weights |
//! | [`sampler`] | hardness-weighted sampler with clipped importance weights       |
//! | [`model`]   | rectifier MLP with exact gradients and SGD                      |
//! | [`data`]    | synthetic stratified data, dataset and score CSV files          |
//! | [`trainer`] | ERM / DRO loops, k-fold, ensembling, checkpoints                |
//! | [`metrics`] | Dice score, percentile reports and comparisons                  |
//! | [`cli`]     | experiment config and the `generate` / `train` / `report` commands |
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run --release -p hardness-dro --example robust_objectives
//! cargo run --release -p hardness-dro --example hardness_sampler
//! cargo run --release -p hardness-dro --example gradient_check
//! cargo run --release -p hardness-dro --example stratified_data
//! cargo run --release -p hardness-dro --example erm_vs_dro
//! cargo run --release -p hardness-dro --example kfold_ensemble
//! cargo run --release -p hardness-dro --example checkpoint_resume
//! cargo run --release -p hardness-dro --example score_report
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod robust;
pub mod sampler;
pub mod trainer;

pub use error::{DroError, Result};

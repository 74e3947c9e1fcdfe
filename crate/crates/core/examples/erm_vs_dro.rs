//! ERM against hardness-weighted DRO on data with a small, shifted and harder
//! minority. Prints the per-group percentile tables and their difference.
//!
//! ```bash
//! cargo run --release --example erm_vs_dro -- [seed]
//! ```

use hardness_dro::data::{generate_stratified, GenerationConfig};
use hardness_dro::metrics::{compare_reports, percentile_report};
use hardness_dro::sampler::SamplerConfig;
use hardness_dro::trainer::{cross_validate, TrainConfig, TrainMode};

fn main() -> hardness_dro::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let data = GenerationConfig { radius: 4.0, minority_radius: 2.5, shift: 6.0, ..GenerationConfig::default() };
    let ds = generate_stratified(&data, seed)?;
    let dims = [ds.feature_dim(), 32, 32, ds.num_classes()];

    let erm = TrainConfig { learning_rate: 0.005, ..TrainConfig::erm(20, 32) }.with_seed(seed);
    // unvisited samples start at roughly the loss of an untrained model
    let sampler = SamplerConfig { init_loss: 1.0, ..SamplerConfig::default() };
    let dro = TrainConfig { mode: TrainMode::Dro, sampler, ..erm.clone() };

    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let erm_report = percentile_report(&cross_validate(&ds, &dims, &erm, 0.0, jobs)?.scores)?;
    let dro_report = percentile_report(&cross_validate(&ds, &dims, &dro, 0.0, jobs)?.scores)?;

    println!("ERM, correct-class probability (%)\n{}", erm_report.render_text());
    println!("DRO, beta = 100, weights in [0.1, 10]\n{}", dro_report.render_text());
    println!("DRO - ERM (pp)\n{}", compare_reports(&erm_report, &dro_report)?.render_text());
    Ok(())
}

//! Five-fold training, out-of-fold scores, and a fold ensemble on fresh data.
//!
//! ```bash
//! cargo run --release --example kfold_ensemble
//! ```

use hardness_dro::data::{generate_stratified, GenerationConfig};
use hardness_dro::metrics::percentile_report;
use hardness_dro::trainer::{cross_validate, ensemble_scores, kfold_split, TrainConfig};

fn main() -> hardness_dro::Result<()> {
    let data = GenerationConfig { n: 1000, radius: 4.0, minority_radius: 2.5, shift: 6.0, ..GenerationConfig::default() };
    let train = generate_stratified(&data, 10)?;
    let test = generate_stratified(&data, 11)?;

    let folds = kfold_split(train.len(), 5, 3)?;
    println!("fold sizes {:?}", folds.iter().map(Vec::len).collect::<Vec<_>>());

    let config = TrainConfig { learning_rate: 0.01, ..TrainConfig::erm(15, 32) }.with_seed(3);
    let dims = [train.feature_dim(), 32, train.num_classes()];
    let cv = cross_validate(&train, &dims, &config, 0.0, 2)?;
    println!("\nout-of-fold scores\n{}", percentile_report(&cv.scores)?.render_text());

    let models: Vec<_> = cv.folds.iter().map(|f| f.params().clone()).collect();
    let test_scores = ensemble_scores(&models, &test)?;
    println!("{}-model ensemble on held-out data\n{}", models.len(), percentile_report(&test_scores)?.render_text());
    Ok(())
}

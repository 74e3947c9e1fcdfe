//! Stop a DRO run half way, save it, resume from disk, and land on exactly
//! the parameters of an uninterrupted run.
//!
//! ```bash
//! cargo run --release --example checkpoint_resume
//! ```

use hardness_dro::data::{generate_stratified, GenerationConfig};
use hardness_dro::sampler::SamplerConfig;
use hardness_dro::trainer::{Checkpoint, TrainConfig, Trainer};

fn main() -> hardness_dro::Result<()> {
    let ds = generate_stratified(&GenerationConfig { n: 500, ..GenerationConfig::default() }, 5)?;
    let dims = [ds.feature_dim(), 16, ds.num_classes()];
    let config = TrainConfig { learning_rate: 0.005, ..TrainConfig::dro(6, 25, SamplerConfig::default()) }.with_seed(9);

    let mut straight = Trainer::new(&ds, &dims, &config)?;
    straight.run()?;

    let mut first = Trainer::new(&ds, &dims, &config)?;
    for _ in 0..3 {
        first.run_epoch()?;
    }
    let path = std::env::temp_dir().join(format!("dro-example-{}.ckpt", std::process::id()));
    first.checkpoint().save(&path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("saved epoch {} to {} ({size} bytes)", first.epoch(), path.display());

    let ckpt = Checkpoint::load(&path)?;
    std::fs::remove_file(&path).ok();
    let mut resumed = Trainer::resume(&ds, &config, &ckpt)?;
    resumed.run()?;

    let same = straight.params().params().zip(resumed.params().params()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("resumed to epoch {}; parameters bit-identical to the uninterrupted run: {same}", resumed.epoch());
    let sampler = resumed.sampler().expect("dro run has a sampler");
    let hardest = sampler
        .stale_losses()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, l)| (i, *l))
        .unwrap();
    println!("hardest sample by stale loss: #{} ({:.4}), drawn {} times", hardest.0, hardest.1, sampler.draw_counts()[hardest.0]);
    assert!(same);
    Ok(())
}

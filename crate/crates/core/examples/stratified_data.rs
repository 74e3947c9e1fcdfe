//! The synthetic two-group generator and its CSV form.
//!
//! ```bash
//! cargo run --release --example stratified_data
//! ```

use hardness_dro::data::{generate_stratified, GenerationConfig, StratifiedDataset, MAJORITY, MINORITY};

fn main() -> hardness_dro::Result<()> {
    let config = GenerationConfig { radius: 4.0, minority_radius: 2.5, shift: 6.0, ..GenerationConfig::default() };
    let ds = generate_stratified(&config, 1)?;
    println!(
        "{} samples, d = {}, {} classes: {} majority, {} minority",
        ds.len(),
        ds.feature_dim(),
        ds.num_classes(),
        ds.group_count(MAJORITY),
        ds.group_count(MINORITY)
    );
    for (g, p) in &ds.prevalence {
        println!("  prevalence {g}: {p:.4}");
    }

    for (name, radius, shift) in [(MAJORITY, config.radius, 0.0), (MINORITY, config.minority_radius, config.shift)] {
        println!("{name} class means (first 4 coordinates):");
        for k in 0..config.classes {
            let m = config.class_mean(k, radius, shift);
            println!("  class {k}: {:.3?}", &m[..4]);
        }
    }

    let csv = ds.to_csv();
    println!("\nfirst lines of the CSV:");
    for line in csv.lines().take(4) {
        println!("  {line}");
    }
    let back = StratifiedDataset::from_csv(&csv)?;
    assert_eq!(back.samples, ds.samples);
    println!("round trip through CSV: identical samples");
    Ok(())
}

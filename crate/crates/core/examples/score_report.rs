//! Percentile tables from an external score file, and a comparison of two
//! methods cell by cell.
//!
//! ```bash
//! cargo run --release --example score_report
//! ```

use hardness_dro::data::{parse_scores, GroupTag, ScoreRow, ScoreTable};
use hardness_dro::metrics::{compare_reports, dice, percentile_report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, len: usize, p: f64) -> Vec<bool> {
    (0..len).map(|_| rng.random::<f64>() < p).collect()
}

/// Dice of a reference mask against a copy with a share of voxels flipped.
fn noisy_dice(rng: &mut ChaCha8Rng, flip: f64) -> f64 {
    let gt = random_mask(rng, 400, 0.3);
    let pred: Vec<bool> = gt.iter().map(|&g| if rng.random::<f64>() < flip { !g } else { g }).collect();
    dice(&pred, &gt).unwrap()
}

fn method(seed: u64, abnormal_flip: f64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for case in 0..40 {
        let abnormal = case % 4 == 0;
        let group = GroupTag::new(if abnormal { "abnormal" } else { "control" }).unwrap();
        for region in ["white_matter", "ventricles", "cerebellum"] {
            let flip = if abnormal && region == "cerebellum" { abnormal_flip } else { 0.05 };
            rows.push(ScoreRow {
                case_id: format!("case{case:02}"),
                group: group.clone(),
                region: region.into(),
                score: noisy_dice(&mut rng, flip),
            });
        }
    }
    ScoreTable::new(rows).unwrap().to_csv()
}

fn main() -> hardness_dro::Result<()> {
    let baseline_csv = method(1, 0.35);
    let robust_csv = method(2, 0.15);
    println!("score file head:\n{}", baseline_csv.lines().take(3).collect::<Vec<_>>().join("\n"));

    let baseline = percentile_report(&parse_scores(baseline_csv.as_bytes())?)?;
    let robust = percentile_report(&parse_scores(robust_csv.as_bytes())?)?;
    println!("\nbaseline (Dice %)\n{}", baseline.render_text());
    println!("robust (Dice %)\n{}", robust.render_text());
    println!("robust - baseline (pp)\n{}", compare_reports(&baseline, &robust)?.render_text());
    Ok(())
}

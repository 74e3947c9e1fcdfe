//! Hardness-weighted sampling: draw frequencies follow softmax(beta * stale loss),
//! and clipped importance weights keep the step sizes bounded.
//!
//! ```bash
//! cargo run --release --example hardness_sampler
//! ```

use hardness_dro::sampler::{SamplerConfig, SamplerState};

fn main() -> hardness_dro::Result<()> {
    let n = 8;
    let mut sampler = SamplerState::new(n, SamplerConfig::default(), 42)?;
    // stale losses as they might look mid-training
    let stale = [0.40, 0.41, 0.43, 0.42, 0.40, 0.44, 0.46, 0.47];
    for (i, &l) in stale.iter().enumerate() {
        sampler.update_loss(i, l)?;
    }

    let q = sampler.sampling_distribution();
    let draws = 100_000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws / 500 {
        for i in sampler.draw_batch(500)?.indices {
            counts[i] += 1;
        }
    }
    println!("{:>3}  {:>6}  {:>8}  {:>8}  {:>6}", "i", "loss", "q_i", "freq", "w_i");
    for i in 0..n {
        println!(
            "{i:>3}  {:>6.3}  {:>8.4}  {:>8.4}  {:>6.2}",
            stale[i],
            q.as_slice()[i],
            counts[i] as f64 / draws as f64,
            sampler.importance_weight(q.as_slice()[i])
        );
    }

    let one = sampler.draw_batch(6)?;
    println!("\none batch of 6: indices {:?}", one.indices);
    println!("                weights {:.2?}", one.weights);

    let flat = SamplerState::new(n, SamplerConfig { beta: 1e-8, ..SamplerConfig::default() }, 42)?;
    let uq = flat.sampling_distribution();
    println!("\nbeta = 1e-8: q = {:.4?}", uq.as_slice());
    Ok(())
}

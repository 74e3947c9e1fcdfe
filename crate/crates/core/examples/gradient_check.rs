//! Backpropagated gradients of the clamped cross-entropy against central
//! differences, then a few SGD steps on a single sample.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use hardness_dro::data::{GroupTag, MAJORITY};
use hardness_dro::model::{init_params, per_sample_gradient, per_sample_loss, sgd_step, Sample};

fn main() -> hardness_dro::Result<()> {
    let dims = [4, 16, 16, 3];
    let params = init_params(&dims, 7)?;
    let sample = Sample { features: vec![0.5, -1.2, 0.3, 2.0], target: 2, group: GroupTag::new(MAJORITY)? };
    println!("network {dims:?}, {} parameters", params.num_params());

    let (loss, grad) = per_sample_gradient(&params, &sample)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, g) in grad.params().enumerate() {
        let mut plus = params.clone();
        *plus.params_mut().nth(k).unwrap() += h;
        let mut minus = params.clone();
        *minus.params_mut().nth(k).unwrap() -= h;
        let fd = (per_sample_loss(&plus, &sample)? - per_sample_loss(&minus, &sample)?) / (2.0 * h);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
    }
    println!("loss {loss:.6}, worst relative gradient error {worst:.2e}");

    let mut p = params;
    for step in 0..=5 {
        let (l, g) = per_sample_gradient(&p, &sample)?;
        println!("step {step}: loss {l:.6}");
        p = sgd_step(&p, &g, 0.1)?;
    }
    Ok(())
}

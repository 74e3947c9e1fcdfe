//! Mean, percentile, log-sum-exp and the adversary's weights on one loss vector.
//!
//! ```bash
//! cargo run --release --example robust_objectives
//! ```

use hardness_dro::robust::{
    chernoff_percentile_bound, dro_inner_objective, empirical_percentile, kl_divergence, lse_robust_loss, mean_loss,
    optimal_weights, LossVector, RobustConfig, WeightVector,
};

fn main() -> hardness_dro::Result<()> {
    // nine easy samples and one hard one
    let mut raw = vec![0.1; 9];
    raw.push(2.0);
    let losses = LossVector::new(raw.clone())?;
    let n = losses.len() as f64;

    println!("losses          {raw:?}");
    println!("mean            {:.4}", mean_loss(&losses));
    println!("max             {:.4}", losses.max());
    // the 90th percentile of the losses is the 10% upper tail
    println!("p90             {:.4}", empirical_percentile(&raw, 0.9)?);
    println!();
    println!("{:>6}  {:>8}  {:>10}  {:>10}  {:>8}  {:>8}", "beta", "lse", "bound a=.2", "dro(q*)", "q_hard", "KL");
    for beta in [0.1, 1.0, 10.0, 100.0] {
        let lse = lse_robust_loss(&losses, beta)?;
        let bound = chernoff_percentile_bound(&losses, &RobustConfig::new(beta, 0.2)?)?;
        let q = optimal_weights(&losses, beta)?;
        let value = dro_inner_objective(&losses, &q, beta)?;
        let kl = kl_divergence(&q, &WeightVector::uniform(losses.len())?)?;
        println!(
            "{beta:>6}  {lse:>8.4}  {bound:>10.4}  {value:>10.4}  {:>8.4}  {kl:>8.4}",
            q.as_slice()[9]
        );
        // the optimum of the inner problem and the relaxation differ by ln(n)/beta
        assert!((value + n.ln() / beta - lse).abs() < 1e-12);
    }
    Ok(())
}

//! Estimated versus hard conditional mutual information as the temperature
//! of the smoothed indicator grows.

use cmid::cmi::{estimated_cmi_value, hard_cmi, CmiConfig};
use cmid::math::{RngStream, Tensor};

fn main() -> anyhow::Result<()> {
    let mut rng = RngStream::new(3);
    let n = 2000;
    let y: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
    // the simple model copies the label 80% of the time; the final model
    // agrees with the simple one 70% of the time, so they share information
    // beyond the label
    let simple: Vec<f64> = y.iter().map(|&c| if (rng.next_f64() < 0.8) == (c == 1) { 0.9 } else { 0.1 }).collect();
    let fin: Vec<f64> = simple.iter().map(|&p| if rng.next_f64() < 0.7 { p } else { 1.0 - p }).collect();
    let (m, ms) = (Tensor::matrix(n, 1, fin.clone())?, Tensor::matrix(n, 1, simple.clone())?);

    let hard = |p: &[f64]| p.iter().map(|&v| usize::from(v > 0.5)).collect::<Vec<_>>();
    let exact = hard_cmi(&hard(&fin), &hard(&simple), &y, 2)?;
    println!("hard CMI: {exact:.5} nats");
    for t in [1.0, 5.0, 12.5, 50.0, 500.0] {
        let cfg = CmiConfig { temperature: t, ..CmiConfig::new(2) };
        println!("T = {t:>5}: estimated {:.5}", estimated_cmi_value(&m, &ms, &y, &cfg)?);
    }
    Ok(())
}

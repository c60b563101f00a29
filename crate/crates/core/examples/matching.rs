//! Match an instance vector to prototypes: negative Euclidean distance,
//! softmax per task, argmax prediction and the weighted joint loss.
//!
//! cargo run --example matching

use ndarray::array;
use protomatch::autograd::Reduction;
use protomatch::matcher::{joint_loss, predict, probabilities, similarity, task_loss, LossWeights};

fn main() -> anyhow::Result<()> {
    // three causal prototypes: None, Precondition, Cause
    let protos = array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
    for x in [[0.1, 0.1], [1.8, 0.3], [0.2, 2.5], [1.0, 1.0]] {
        let sims: Vec<f64> = protos.rows().into_iter().map(|p| similarity(&x, p.as_slice().unwrap()).unwrap()).collect();
        let p = probabilities(&x, &protos)?;
        println!("x = {x:?}  scores {:.3?}  probs {:.3?}  -> class {}", sims, p, predict(&p));
    }

    let rows = vec![probabilities(&[1.8, 0.3], &protos)?, probabilities(&[0.2, 2.5], &protos)?];
    let causal = task_loss(&rows, &[1, 2], Reduction::Mean)?;
    println!("\ncausal loss {causal:.4}");
    let w = LossWeights::default();
    println!("joint with unit task losses: {}", joint_loss([1.0; 4], &w));
    println!("joint with causal only: {:.4}", joint_loss([0.0, 0.0, causal, 0.0], &w));
    Ok(())
}

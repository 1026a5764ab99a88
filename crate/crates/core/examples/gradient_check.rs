//! Checks backpropagation of a small MLP against central differences, for
//! several step sizes and activations.

use lskd::gradcore::{grad_check_report, init_model, Activation, CrossEntropyLoss, NetworkSpec};
use lskd::labels::smooth_labels;
use lskd::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lskd::Result<()> {
    let (rows, dim, k) = (16, 8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let mut targets = Matrix::zeros(rows, k);
    for r in 0..rows {
        targets.row_mut(r).copy_from_slice(smooth_labels(r % k, 0.1, k)?.values());
    }
    let loss = CrossEntropyLoss { targets };

    println!("activation  eps     max rel err  probes  kink skips");
    for act in [Activation::None, Activation::Relu, Activation::Tanh] {
        let model = init_model(&NetworkSpec::mlp(dim, &[16, 16], k, act)?, 1)?;
        for eps in [1e-3, 1e-5, 1e-7] {
            let r = grad_check_report(&model, &loss, &batch, eps, 100, 2)?;
            println!(
                "{:<10}  {eps:.0e}  {:.3e}    {:>6}  {:>10}",
                format!("{act:?}"),
                r.max_relative_error,
                r.probes,
                r.kink_skips
            );
        }
    }
    Ok(())
}

//! Channel-wise weight binarization, and a sign-activation MLP trained with the
//! clipped straight-through estimator on two Gaussian classes.
//!
//! ```text
//! cargo run --release --example binary_mlp -- [separation] [seeds]
//! ```

use lskd::binarize::{binarize_weights, channel_scale};
use lskd::datagen::gen_two_gaussians;
use lskd::gradcore::{fit, init_model, NetworkSpec, TargetCrossEntropy, TrainConfig};
use lskd::linalg::Matrix;

fn main() -> lskd::Result<()> {
    let mut args = std::env::args().skip(1);
    let separation: f64 = args.next().map_or(3.0, |s| s.parse().expect("separation"));
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seed count"));

    let w = Matrix::from_rows(&[[0.5, -0.25, 1.0, -0.25], [-2.0, 0.0, 1.0, 1.0]])?;
    let b = binarize_weights(&w)?;
    for r in 0..w.rows() {
        println!("channel {r}: s = {:.4}, W_b = {:?}", channel_scale(w.row(r)), b.row(r));
    }

    for seed in 0..seeds {
        let data = gen_two_gaussians(500, 2, separation, seed)?;
        let mut targets = Matrix::zeros(data.len(), 2);
        for (i, &y) in data.labels().iter().enumerate() {
            targets.set(i, y, 1.0);
        }
        let mut model = init_model(&NetworkSpec::binary_mlp(2, &[16], 2)?, 1000 + seed)?;
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 50,
            learning_rate: 0.01,
            lr_decay_epochs: vec![],
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            ..TrainConfig::default()
        };
        let stats = fit(&mut model, data.features(), &mut TargetCrossEntropy::new(&targets), &cfg, |_, _| Ok(()))?;
        let z = model.logits(data.features())?;
        let hits = z.iter_rows().zip(data.labels()).filter(|(r, &y)| r[y] >= r[1 - y]).count();
        println!(
            "seed {seed}: final loss {:.4}, accuracy {:.1}%",
            stats.last().map_or(f64::NAN, |s| s.train_loss),
            100.0 * hits as f64 / data.len() as f64
        );
    }
    Ok(())
}

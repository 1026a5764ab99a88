//! Per-seed accuracy gain from training the teacher with label smoothing, i.e.
//! val top-1 at α = 0.1 minus val top-1 at α = 0, for a given config.
//!
//! ```text
//! cargo run --release --example smoothing_gain -- [config.toml] [seeds]
//! ```

use lskd::pipeline::{prepare_data, train_teacher, ExperimentConfig};

fn main() -> lskd::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(n) = args.next() {
        cfg.seeds = (0..n.parse().expect("seed count")).collect();
    }
    let alpha = cfg.teacher.alpha;
    let mut gains = Vec::new();
    println!("seed  hard    smoothed  gain");
    for &seed in &cfg.seeds {
        let data = prepare_data(&cfg.data, seed)?;
        let (_, hard) = train_teacher(&cfg, &data, 0.0, seed)?;
        let (_, ls) = train_teacher(&cfg, &data, alpha, seed)?;
        let gain = ls.final_val_top1 - hard.final_val_top1;
        println!("{seed:4}  {:.4}  {:.4}    {gain:+.4}", hard.final_val_top1, ls.final_val_top1);
        gains.push(gain);
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let positive = gains.iter().filter(|&&g| g > 0.0).count();
    println!("mean gain {mean:+.5}, positive in {positive}/{}", gains.len());
    Ok(())
}

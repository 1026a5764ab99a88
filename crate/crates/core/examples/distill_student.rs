//! Distils one student from a hard and from a smoothed teacher across a few
//! hard/soft mixes and temperatures, printing final losses and accuracy.
//!
//! ```text
//! cargo run --release --example distill_student -- [seed]
//! ```

use lskd::labels::DistillConfig;
use lskd::pipeline::{distill_student, prepare_data, train_teacher, ExperimentConfig};

fn main() -> lskd::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let cfg = ExperimentConfig::desk_default();
    let data = prepare_data(&cfg.data, seed)?;
    let settings = [
        DistillConfig { lambda: 0.0, temperature: 1.0, rescale_grad_by_t2: false },
        DistillConfig { lambda: 0.5, temperature: 1.0, rescale_grad_by_t2: false },
        DistillConfig { lambda: 0.0, temperature: 4.0, rescale_grad_by_t2: true },
    ];
    println!("teacher_alpha  lambda  T    student_loss  student_val_top1");
    for alpha in [0.0, cfg.teacher.alpha] {
        let (teacher, tlog) = train_teacher(&cfg, &data, alpha, seed)?;
        println!("teacher alpha={alpha}: val top-1 {:.4}", tlog.final_val_top1);
        for s in &settings {
            let (_, log) = distill_student(&teacher, &cfg, &data, s, seed)?;
            println!(
                "{alpha:<13}  {:<6}  {:<3}  {:<12.5}  {:.4}",
                s.lambda,
                s.temperature,
                log.final_train_loss().unwrap_or(f64::NAN),
                log.final_val_top1
            );
        }
    }
    Ok(())
}

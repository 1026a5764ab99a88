//! Runs the desk-scale default matrix and prints the sign tests.
//!
//! ```text
//! cargo run --release --example seed_matrix -- [seeds] [workers] [out_dir]
//! ```

use std::path::PathBuf;

use lskd::pipeline::{run_matrix, CellRole, ExperimentConfig};

fn main() -> lskd::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    let workers: usize = args.next().map_or(1, |s| s.parse().expect("worker count"));
    let out = args.next().map(PathBuf::from);

    let mut cfg = ExperimentConfig::desk_default();
    cfg.seeds = (0..seeds).collect();
    let t0 = std::time::Instant::now();
    let outcome = run_matrix(&cfg, workers, out.as_deref())?;
    let s = &outcome.summary;
    println!("{} cells ok, {} failed in {:.1}s", s.cells_ok, s.cells_failed, t0.elapsed().as_secs_f64());
    for g in &s.groups {
        let role = match g.role {
            CellRole::Teacher => "teacher",
            CellRole::Student => "student",
        };
        println!("{role} alpha={} setting={:?}", g.teacher_alpha, g.setting_index);
        for (k, st) in &g.metrics {
            println!("    {k:<22} {:.5} ± {:.5}", st.mean, st.std);
        }
    }
    for t in &s.sign_tests {
        println!("{:<52} {}/{} (ties {})", t.claim, t.wins, t.pairs(), t.ties);
    }
    Ok(())
}

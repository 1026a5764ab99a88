//! Penultimate-layer geometry of a hard and a smoothed teacher: the similar
//! pair and a reference class projected onto their template plane. Writes one
//! SVG and one points CSV per teacher.
//!
//! ```text
//! cargo run --release --example geometry_svg -- [out_dir] [seed]
//! ```

use std::path::PathBuf;

use lskd::geometry::analyze;
use lskd::pipeline::experiment::geometry_reference;
use lskd::pipeline::{prepare_data, train_teacher, ExperimentConfig};

fn main() -> lskd::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "geometry-out".into()));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    std::fs::create_dir_all(&out)?;

    let cfg = ExperimentConfig::desk_default();
    let data = prepare_data(&cfg.data, seed)?;
    let pair = data.pair.expect("generated data has a similar pair");
    let reference = geometry_reference(&cfg, pair, data.num_classes()).expect("at least three classes");
    for alpha in [0.0, cfg.teacher.alpha] {
        let (teacher, _) = train_teacher(&cfg, &data, alpha, seed)?;
        let g = analyze(&teacher, &data.train, pair, reference)?;
        println!("alpha={alpha}: {}", g.summary_line());
        let stem = format!("alpha-{alpha}");
        std::fs::write(out.join(format!("{stem}.svg")), g.to_svg())?;
        g.write_points_csv(std::fs::File::create(out.join(format!("{stem}.csv")))?)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

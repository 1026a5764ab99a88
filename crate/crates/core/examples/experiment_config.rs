//! Prints a built-in experiment config as TOML, ready to edit and pass to
//! `lskd matrix --config`.
//!
//! ```text
//! cargo run --example experiment_config -- [desk-default | long-tail | long-tail-balanced | classes-50 | classes-10-of-50]
//! ```

use lskd::pipeline::ExperimentConfig;

fn main() -> lskd::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "desk-default".into());
    let cfg = match name.as_str() {
        "desk-default" => ExperimentConfig::desk_default(),
        "long-tail" => ExperimentConfig::long_tail_study(true),
        "long-tail-balanced" => ExperimentConfig::long_tail_study(false),
        "classes-50" => ExperimentConfig::class_count_study(None),
        "classes-10-of-50" => ExperimentConfig::class_count_study(Some(10)),
        other => {
            eprintln!("unknown preset {other:?}");
            std::process::exit(2);
        }
    };
    let text = cfg.to_toml()?;
    // round-trip check: what we print is what the loader accepts
    assert_eq!(ExperimentConfig::from_toml(&text)?, cfg);
    print!("{text}");
    Ok(())
}

//! Stability report for a probability dump (`example_id,label,p_0,...`), such
//! as the `teacher_probs.csv` written by `lskd train`. Without an argument, a
//! hard and a smoothed teacher are trained on the default data and compared.
//!
//! ```text
//! cargo run --release --example stability_metrics -- [teacher_probs.csv]
//! ```

use std::io::BufReader;

use lskd::metrics::{class_mean_profile, group_records, read_prob_dump, stability_report, GroupedProbs, StdConvention};
use lskd::pipeline::{prepare_data, probabilities, train_teacher, ExperimentConfig};

fn describe(name: &str, g: &GroupedProbs) {
    let r = stability_report(g, StdConvention::Sample);
    println!(
        "{name}: 1-S_eq2 = {:.6}, S_alg1 = {:.6}, S_inter = {:.6}, mean class max = {:.4}",
        r.intra_variance(),
        r.stability_alg1,
        r.inter_stability,
        class_mean_profile(g).mean_max_entry()
    );
}

fn main() -> lskd::Result<()> {
    if let Some(path) = std::env::args().nth(1) {
        let f = std::fs::File::open(&path)?;
        let g = group_records(&read_prob_dump(BufReader::new(f))?)?;
        print!("{}", stability_report(&g, StdConvention::Sample).to_text());
        return Ok(());
    }
    let cfg = ExperimentConfig::desk_default();
    let data = prepare_data(&cfg.data, 0)?;
    for alpha in [0.0, cfg.teacher.alpha] {
        let (teacher, _) = train_teacher(&cfg, &data, alpha, 0)?;
        let p = probabilities(&teacher, data.val.features())?;
        let g = GroupedProbs::from_labeled(data.val.labels(), &p, data.num_classes())?;
        describe(&format!("alpha={alpha}"), &g);
    }
    Ok(())
}

//! Gaussian class clusters, Pareto long-tail resampling, class curation and
//! the stratified split, with class counts at each step.

use lskd::datagen::{curate_subset, gen_clusters, pareto_resample, split, ClusterSpec, LongTailSpec};
use lskd::linalg::dist;

fn main() -> lskd::Result<()> {
    let spec = ClusterSpec { n_per_class: 400, ..ClusterSpec::default() };
    let means = spec.means()?;
    let (a, b) = spec.similar_pair;
    println!(
        "{} classes in {} dims; similar pair ({a},{b}) at distance {:.2}, others at {:.2}",
        spec.num_classes,
        spec.dim,
        dist(&means[a], &means[b]),
        dist(&means[2], &means[3])
    );

    let d = gen_clusters(&spec)?;
    let (train, val) = split(&d, 0.5, 1)?;
    println!("balanced train {:?}", train.class_counts());
    println!("balanced val   {:?}", val.class_counts());

    let lt = LongTailSpec { pareto_power: 6.0, max_per_class: 200, min_per_class: 5, seed: 2 };
    println!("Pareto(6) train {:?}", pareto_resample(&train, &lt)?.class_counts());

    let curated = curate_subset(&d, 4, 3)?;
    println!("curated 4 of {}: {} examples, counts {:?}", spec.num_classes, curated.len(), curated.class_counts());
    Ok(())
}

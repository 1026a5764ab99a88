//! Deterministic synthetic datasets: Gaussian class clusters with one
//! designated near pair, Pareto long-tail resampling, class-subset curation
//! and stratified splitting.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub sigma: f64,
    /// Classes whose means sit `delta_near` apart.
    pub similar_pair: (usize, usize),
    pub delta_near: f64,
    /// Lower bound on every other pairwise mean distance.
    pub delta_far: f64,
    pub n_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 32,
            sigma: 1.0,
            similar_pair: (0, 1),
            delta_near: 2.0,
            delta_far: 8.0,
            n_per_class: 200,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.similar_pair;
        let k = self.num_classes;
        if k < 2 {
            return Err(LabError::Spec(format!("need at least 2 classes, got {k}")));
        }
        if a == b || a >= k || b >= k {
            return Err(LabError::Spec(format!(
                "similar pair ({a}, {b}) must name two distinct classes below {k}"
            )));
        }
        if !(self.delta_near > 0.0 && self.delta_near < self.delta_far) {
            return Err(LabError::Spec(format!(
                "need 0 < delta_near < delta_far, got {} and {}",
                self.delta_near, self.delta_far
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(LabError::Spec(format!("sigma must be ≥ 0, got {}", self.sigma)));
        }
        if self.n_per_class < 2 {
            return Err(LabError::Spec("n_per_class must be at least 2".into()));
        }
        if self.dim == 0 || k - 1 > self.dim {
            return Err(LabError::Spec(format!(
                "cannot place {k} class means with the distance constraints in {} dimensions \
                 (need dim ≥ K − 1)",
                self.dim
            )));
        }
        Ok(())
    }

    /// Class means. Every class except `b` sits on its own scaled basis axis, so
    /// those pairs are exactly `delta_far` apart; `b` is `a` shifted by
    /// `delta_near` along a direction that moves it no closer to anyone else.
    pub fn means(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let k = self.num_classes;
        let (a, b) = self.similar_pair;
        let scale = self.delta_far / std::f64::consts::SQRT_2;
        let mut means = vec![vec![0.0; self.dim]; k];
        let mut axis = 0;
        for (c, m) in means.iter_mut().enumerate() {
            if c != b {
                m[axis] = scale;
                axis += 1;
            }
        }
        let dir: Vec<f64> = if self.dim > axis {
            let mut e = vec![0.0; self.dim];
            e[axis] = 1.0;
            e
        } else {
            // no spare axis: push away from the centroid of the other far classes
            let others: Vec<&Vec<f64>> = means
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != a && c != b)
                .map(|(_, m)| m)
                .collect();
            let mut d = means[a].clone();
            if !others.is_empty() {
                let centroid = crate::linalg::mean_vector(&others);
                d.iter_mut().zip(&centroid).for_each(|(x, c)| *x -= c);
            }
            let n = crate::linalg::norm(&d);
            d.iter_mut().for_each(|x| *x /= n);
            d
        };
        means[b] = means[a]
            .iter()
            .zip(&dir)
            .map(|(m, u)| m + self.delta_near * u)
            .collect();
        Ok(means)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    #[serde(default = "default_power")]
    pub pareto_power: f64,
    pub max_per_class: usize,
    pub min_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_power() -> f64 {
    6.0
}

impl LongTailSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_per_class >= self.min_per_class && self.min_per_class >= 1) {
            return Err(LabError::Spec(format!(
                "need max_per_class ≥ min_per_class ≥ 1, got {} and {}",
                self.max_per_class, self.min_per_class
            )));
        }
        if !(self.pareto_power > 0.0) {
            return Err(LabError::Spec(format!(
                "pareto power must be positive, got {}",
                self.pareto_power
            )));
        }
        Ok(())
    }

    /// Target class sizes by rank. Sizes are Pareto quantiles at evenly spaced
    /// ranks, `max · (1 + r·s)^(−1/power)`, with `s` chosen so the last rank
    /// lands on `min`. An infinite power keeps every class at `max`.
    pub fn counts(&self, num_classes: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let (max, min) = (self.max_per_class, self.min_per_class);
        if self.pareto_power.is_infinite() || num_classes == 1 || max == min {
            return Ok(vec![max; num_classes]);
        }
        let p = self.pareto_power;
        // ln((max/min)^p): the rank variable spans [1, (max/min)^p]
        let ln_span = p * (max as f64 / min as f64).ln();
        let last = (num_classes - 1) as f64;
        let counts = (0..num_classes)
            .map(|r| {
                if r == 0 {
                    return max;
                }
                if r == num_classes - 1 {
                    return min;
                }
                let f = r as f64 / last;
                let ln_x = if ln_span > 30.0 {
                    f.ln() + ln_span + (1.0 + (1.0 / f - 1.0) * (-ln_span).exp()).ln()
                } else {
                    (1.0 + f * ln_span.exp_m1()).ln()
                };
                let n = (max as f64 * (-ln_x / p).exp()).round() as usize;
                n.clamp(min, max)
            })
            .collect();
        Ok(counts)
    }
}

/// Features, integer labels and the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(LabError::Shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(LabError::Data("features must be finite".into()));
        }
        let mut seen = vec![false; num_classes];
        for &y in &labels {
            *seen.get_mut(y).ok_or_else(|| {
                LabError::Data(format!("label {y} out of range for {num_classes} classes"))
            })? = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(LabError::Data(format!("class {c} has no examples")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Row indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            idx[y].push(i);
        }
        idx
    }

    fn subset(&self, rows: &[usize], relabel: impl Fn(usize) -> usize, k: usize) -> Result<Self> {
        let labels = rows.iter().map(|&i| relabel(self.labels[i])).collect();
        Self::new(self.features.select_rows(rows), labels, k)
    }

    /// Writes `label,f_0,...,f_{dim−1}` with six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("f_{j}")).collect();
        writeln!(w, "label,{}", header.join(","))?;
        for (y, row) in self.labels.iter().zip(self.features.iter_rows()) {
            write!(w, "{y}")?;
            for v in row {
                write!(w, ",{v:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the CSV format above. `num_classes` defaults to `max(label) + 1`.
    pub fn read_csv<R: BufRead>(r: R, num_classes: Option<usize>) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LabError::Data("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols[0] != "label" {
            return Err(LabError::Data(format!(
                "dataset header must be label,f_0,..., got {header:?}"
            )));
        }
        let dim = cols.len() - 1;
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != dim + 1 {
                return Err(LabError::Data(format!(
                    "line {}: expected {} fields, got {}",
                    n + 2,
                    dim + 1,
                    f.len()
                )));
            }
            labels.push(
                f[0].parse::<usize>()
                    .map_err(|e| LabError::Data(format!("line {}: {e}", n + 2)))?,
            );
            for s in &f[1..] {
                data.push(
                    s.parse::<f64>()
                        .map_err(|e| LabError::Data(format!("line {}: {e}", n + 2)))?,
                );
            }
        }
        let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(Matrix::from_vec(labels.len(), dim, data)?, labels, k)
    }
}

/// Draws `n_per_class` points per class from `Normal(mean_c, σ²I)`, class-major.
pub fn gen_clusters(spec: &ClusterSpec) -> Result<LabeledDataset> {
    let means = spec.means()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes * spec.n_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spec.sigma * z);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, spec.dim, data)?, labels, spec.num_classes)
}

/// Two unit-variance Gaussian classes in `dim` dimensions whose means sit
/// `separation` apart along the first axis; labels alternate `0, 1, 0, …`.
pub fn gen_two_gaussians(n: usize, dim: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 || dim == 0 {
        return Err(LabError::Spec("need at least two points and one dimension".into()));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(LabError::InvalidInput(format!("separation must be finite and ≥ 0, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for &y in &labels {
        let shift = if y == 0 { -separation / 2.0 } else { separation / 2.0 };
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(if j == 0 { z + shift } else { z });
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, dim, data)?, labels, 2)
}

/// Keeps a Pareto-shaped number of examples per class (class index = rank).
///
/// Each class must hold at least its target count. Kept rows retain their
/// original relative order and values.
pub fn pareto_resample(d: &LabeledDataset, spec: &LongTailSpec) -> Result<LabeledDataset> {
    let targets = spec.counts(d.num_classes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keep = Vec::new();
    for (c, (members, &want)) in d.class_indices().iter().zip(&targets).enumerate() {
        if members.len() < want {
            return Err(LabError::Data(format!(
                "class {c} has {} examples, long-tail profile needs {want}",
                members.len()
            )));
        }
        let mut chosen: Vec<usize> = sample(&mut rng, members.len(), want)
            .into_iter()
            .map(|j| members[j])
            .collect();
        chosen.sort_unstable();
        keep.extend(chosen);
    }
    keep.sort_unstable();
    d.subset(&keep, |y| y, d.num_classes())
}

/// The sorted original class ids `curate_subset` keeps for this seed.
pub fn curated_class_ids(total: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, total, k.min(total)).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Keeps `k` uniformly chosen classes, relabelled `0..k` in original class order.
pub fn curate_subset(d: &LabeledDataset, k: usize, seed: u64) -> Result<LabeledDataset> {
    let total = d.num_classes();
    if k < 2 || k > total {
        return Err(LabError::Spec(format!(
            "cannot keep {k} of {total} classes (need 2 ≤ k ≤ K)"
        )));
    }
    let chosen = curated_class_ids(total, k, seed);
    let mut new_label = vec![usize::MAX; total];
    for (j, &c) in chosen.iter().enumerate() {
        new_label[c] = j;
    }
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| new_label[d.labels()[i]] != usize::MAX)
        .collect();
    d.subset(&rows, |y| new_label[y], k)
}

/// Stratified split: each class sends `round(n_c · val_fraction)` examples to validation.
pub fn split(
    d: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(LabError::InvalidCoefficient(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; d.len()];
    for (c, members) in d.class_indices().iter().enumerate() {
        let n_val = (members.len() as f64 * val_fraction).round() as usize;
        if n_val == 0 || n_val >= members.len() {
            return Err(LabError::Data(format!(
                "class {c} with {} examples cannot be stratified at fraction {val_fraction}",
                members.len()
            )));
        }
        for j in sample(&mut rng, members.len(), n_val) {
            is_val[members[j]] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| is_val[i]);
    let k = d.num_classes();
    Ok((d.subset(&train, |y| y, k)?, d.subset(&val, |y| y, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist;

    fn small(k: usize, n: usize) -> ClusterSpec {
        ClusterSpec {
            num_classes: k,
            dim: 12,
            n_per_class: n,
            seed: 3,
            ..ClusterSpec::default()
        }
    }

    #[test]
    fn zero_sigma_collapses_classes() {
        let spec = ClusterSpec {
            sigma: 0.0,
            ..small(4, 5)
        };
        let d = gen_clusters(&spec).unwrap();
        for members in d.class_indices() {
            for &i in &members {
                assert_eq!(d.features().row(i), d.features().row(members[0]));
            }
        }
    }

    #[test]
    fn three_classes_in_the_plane() {
        let spec = ClusterSpec {
            num_classes: 3,
            dim: 2,
            delta_near: 1.0,
            delta_far: 5.0,
            ..ClusterSpec::default()
        };
        let m = spec.means().unwrap();
        assert!((dist(&m[0], &m[1]) - 1.0).abs() < 1e-12);
        assert!(dist(&m[0], &m[2]) >= 5.0 - 1e-12);
        assert!(dist(&m[1], &m[2]) >= 5.0 - 1e-12);
    }

    #[test]
    fn default_geometry_distances() {
        let spec = ClusterSpec {
            similar_pair: (3, 7),
            ..ClusterSpec::default()
        };
        let m = spec.means().unwrap();
        for i in 0..10 {
            for j in (i + 1)..10 {
                let d = dist(&m[i], &m[j]);
                if (i, j) == (3, 7) {
                    assert!((d - 2.0).abs() < 1e-12);
                } else {
                    assert!(d >= 8.0 - 1e-12, "pair ({i},{j}) at {d}");
                }
            }
        }
    }

    #[test]
    fn infeasible_geometry_is_spec_error() {
        let spec = ClusterSpec {
            num_classes: 5,
            dim: 3,
            ..ClusterSpec::default()
        };
        assert_eq!(gen_clusters(&spec).unwrap_err().kind(), "spec-error");
        let spec = ClusterSpec {
            delta_near: 9.0,
            ..ClusterSpec::default()
        };
        assert_eq!(gen_clusters(&spec).unwrap_err().kind(), "spec-error");
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(gen_clusters(&small(3, 10)).unwrap(), gen_clusters(&small(3, 10)).unwrap());
        let other = ClusterSpec {
            seed: 4,
            ..small(3, 10)
        };
        assert_ne!(gen_clusters(&small(3, 10)).unwrap(), gen_clusters(&other).unwrap());
    }

    #[test]
    fn pareto_profile_endpoints_and_ratio() {
        let lt = LongTailSpec {
            pareto_power: 6.0,
            max_per_class: 100,
            min_per_class: 5,
            seed: 0,
        };
        let c = lt.counts(10).unwrap();
        assert_eq!(c[0], 100);
        assert_eq!(c[9], 5);
        assert_eq!(c[0] / c[9], 20);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        // direct evaluation of max·(1 + r·s)^(−1/6) with s = (20^6 − 1)/9
        let s = (20f64.powi(6) - 1.0) / 9.0;
        for (r, &n) in c.iter().enumerate() {
            let want = (100.0 * (1.0 + r as f64 * s).powf(-1.0 / 6.0)).round() as usize;
            assert_eq!(n, want.clamp(5, 100));
        }
    }

    #[test]
    fn infinite_power_is_balanced() {
        let lt = LongTailSpec {
            pareto_power: f64::INFINITY,
            max_per_class: 8,
            min_per_class: 2,
            seed: 0,
        };
        let d = gen_clusters(&small(4, 8)).unwrap();
        let r = pareto_resample(&d, &lt).unwrap();
        assert_eq!(r, d);
    }

    #[test]
    fn resample_keeps_rows_and_counts() {
        let d = gen_clusters(&small(5, 20)).unwrap();
        let lt = LongTailSpec {
            pareto_power: 6.0,
            max_per_class: 20,
            min_per_class: 2,
            seed: 9,
        };
        let r = pareto_resample(&d, &lt).unwrap();
        assert_eq!(r.class_counts(), lt.counts(5).unwrap());
        for (row, &y) in r.features().iter_rows().zip(r.labels()) {
            assert!(d
                .features()
                .iter_rows()
                .zip(d.labels())
                .any(|(src, &sy)| src == row && sy == y));
        }
        let too_big = LongTailSpec {
            max_per_class: 21,
            ..lt
        };
        assert_eq!(pareto_resample(&d, &too_big).unwrap_err().kind(), "data-error");
    }

    #[test]
    fn curation() {
        let d = gen_clusters(&small(10, 6)).unwrap();
        assert_eq!(curate_subset(&d, 10, 1).unwrap(), d);
        assert_eq!(curate_subset(&d, 1, 1).unwrap_err().kind(), "spec-error");
        assert_eq!(curate_subset(&d, 11, 1).unwrap_err().kind(), "spec-error");
        let c = curate_subset(&d, 5, 1).unwrap();
        assert_eq!(c.num_classes(), 5);
        assert_eq!(c.class_counts(), vec![6; 5]);
    }

    #[test]
    fn stratified_split() {
        let d = gen_clusters(&small(4, 10)).unwrap();
        let (tr, va) = split(&d, 0.2, 5).unwrap();
        assert_eq!(va.class_counts(), vec![2; 4]);
        assert_eq!(tr.class_counts(), vec![8; 4]);
        let mut all: Vec<String> = tr
            .features()
            .iter_rows()
            .chain(va.features().iter_rows())
            .map(|r| format!("{r:?}"))
            .collect();
        let mut orig: Vec<String> = d.features().iter_rows().map(|r| format!("{r:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);

        let (_, va2) = split(&d, 0.2, 6).unwrap();
        assert_eq!(va2.class_counts(), va.class_counts());
        assert_ne!(va2, va);

        let tiny = gen_clusters(&small(3, 2)).unwrap();
        assert_eq!(split(&tiny, 0.1, 0).unwrap_err().kind(), "data-error");
    }

    #[test]
    fn csv_round_trip_at_six_decimals() {
        let d = gen_clusters(&small(3, 4)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(buf.as_slice(), Some(3)).unwrap();
        assert_eq!(back.labels(), d.labels());
        for (a, b) in back.features().as_slice().iter().zip(d.features().as_slice()) {
            assert!((a - b).abs() <= 5e-7);
        }
    }
}

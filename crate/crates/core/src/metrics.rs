//! Stability metrics over a teacher's output distributions, grouped by true class.
//!
//! * intra-class stability: `1 − (1/K) Σ_c (1/n_c) Σ_i ‖p_{i,c} − p̄_c‖²`
//! * reference-code variant: `1 − (1/K) Σ_c std_i(p_{i,c}[c])`, the spread of
//!   the target-class probability only
//! * inter-class stability: `1 − (1/K) Σ_c ‖p̄_c − p̄_all‖²`, with `p̄_all`
//!   the mean over every example in the dataset
//!
//! Lower `1 − S` means less relative information left between logits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{mean_vector, sq_dist, Matrix};

/// Normalization of the per-class standard deviation in the reference variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdConvention {
    /// Divide by `n_c − 1`; singleton classes contribute 0.
    #[default]
    Sample,
    /// Divide by `n_c`.
    Population,
}

/// Probability vectors bucketed by true class. Every class has at least one member.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedProbs {
    num_classes: usize,
    groups: Vec<Vec<Vec<f64>>>,
}

impl GroupedProbs {
    pub fn new(groups: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let k = groups.len();
        if k < 2 {
            return Err(LabError::Grouping(format!("need at least 2 classes, got {k}")));
        }
        for (c, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(LabError::Grouping(format!("class {c} has no members")));
            }
            if let Some(v) = g.iter().find(|v| v.len() != k) {
                return Err(LabError::Shape(format!(
                    "class {c} holds a vector of length {}, expected {k}",
                    v.len()
                )));
            }
        }
        Ok(Self {
            num_classes: k,
            groups,
        })
    }

    /// Groups the rows of `probs` (one per example) by `labels`.
    pub fn from_labeled(labels: &[usize], probs: &Matrix, num_classes: usize) -> Result<Self> {
        if labels.len() != probs.rows() {
            return Err(LabError::Shape(format!(
                "{} labels for {} probability rows",
                labels.len(),
                probs.rows()
            )));
        }
        let mut groups = vec![Vec::new(); num_classes];
        for (&y, row) in labels.iter().zip(probs.iter_rows()) {
            let slot = groups.get_mut(y).ok_or_else(|| {
                LabError::Grouping(format!("label {y} out of range for {num_classes} classes"))
            })?;
            slot.push(row.to_vec());
        }
        Self::new(groups)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class(&self, c: usize) -> &[Vec<f64>] {
        &self.groups[c]
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    fn class_means(&self) -> Vec<Vec<f64>> {
        self.groups.iter().map(|g| mean_vector(g)).collect()
    }
}

/// Mean squared deviation of each class's members from the class mean.
pub fn per_class_variance(g: &GroupedProbs) -> Vec<f64> {
    g.groups
        .iter()
        .map(|members| {
            let mean = mean_vector(members);
            members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>() / members.len() as f64
        })
        .collect()
}

pub fn intra_stability_eq2(g: &GroupedProbs) -> f64 {
    let v = per_class_variance(g);
    1.0 - v.iter().sum::<f64>() / g.num_classes as f64
}

fn std_dev(xs: &[f64], convention: StdConvention) -> f64 {
    let n = xs.len();
    let denom = match convention {
        StdConvention::Sample if n < 2 => return 0.0,
        StdConvention::Sample => (n - 1) as f64,
        StdConvention::Population => n as f64,
    };
    let mean = xs.iter().sum::<f64>() / n as f64;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / denom).sqrt()
}

pub fn intra_stability_alg1(g: &GroupedProbs, convention: StdConvention) -> f64 {
    let total: f64 = g
        .groups
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let target: Vec<f64> = members.iter().map(|p| p[c]).collect();
            std_dev(&target, convention)
        })
        .sum();
    1.0 - total / g.num_classes as f64
}

pub fn inter_stability(g: &GroupedProbs) -> f64 {
    let means = g.class_means();
    let all: Vec<&Vec<f64>> = g.groups.iter().flatten().collect();
    let global = mean_vector(&all);
    let dev: f64 = means.iter().map(|m| sq_dist(m, &global)).sum();
    1.0 - dev / g.num_classes as f64
}

/// Class-mean output distributions and their "minor probability" view.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeanProfile {
    /// Row `c` is the mean distribution over class `c`'s members.
    pub means: Matrix,
    /// Row `c` with its own entry `c` removed (length `K − 1`).
    pub minor: Vec<Vec<f64>>,
}

impl ClassMeanProfile {
    /// Largest entry of each row.
    pub fn max_entries(&self) -> Vec<f64> {
        self.means
            .iter_rows()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn mean_max_entry(&self) -> f64 {
        let m = self.max_entries();
        m.iter().sum::<f64>() / m.len() as f64
    }
}

pub fn class_mean_profile(g: &GroupedProbs) -> ClassMeanProfile {
    let means = g.class_means();
    let minor = means
        .iter()
        .enumerate()
        .map(|(c, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect();
    ClassMeanProfile {
        means: Matrix::from_rows(&means).expect("class means share length K"),
        minor,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stability_eq2: f64,
    pub stability_alg1: f64,
    pub std_convention: StdConvention,
    pub inter_stability: f64,
    pub per_class_variance: Vec<f64>,
    pub per_class_count: Vec<usize>,
    pub per_class_mean: Matrix,
}

impl StabilityReport {
    pub fn intra_variance(&self) -> f64 {
        1.0 - self.stability_eq2
    }

    /// Structured-text rendering (TOML).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_classes = {}", self.per_class_count.len());
        let _ = writeln!(s, "stability_eq2 = {:.12}", self.stability_eq2);
        let _ = writeln!(s, "intra_variance_eq2 = {:.12}", 1.0 - self.stability_eq2);
        let _ = writeln!(s, "stability_alg1 = {:.12}", self.stability_alg1);
        let conv = match self.std_convention {
            StdConvention::Sample => "sample",
            StdConvention::Population => "population",
        };
        let _ = writeln!(s, "alg1_std_convention = \"{conv}\"");
        let _ = writeln!(s, "inter_stability = {:.12}", self.inter_stability);
        let _ = writeln!(s, "inter_variance = {:.12}", 1.0 - self.inter_stability);
        for (c, row) in self.per_class_mean.iter_rows().enumerate() {
            let _ = writeln!(s, "\n[[class]]");
            let _ = writeln!(s, "index = {c}");
            let _ = writeln!(s, "count = {}", self.per_class_count[c]);
            let _ = writeln!(s, "variance = {:.12}", self.per_class_variance[c]);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(s, "mean_target_prob = {:.12}", row[c]);
            let _ = writeln!(s, "mean_max_prob = {max:.12}");
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "mean_distribution = [{}]", cells.join(", "));
        }
        s
    }
}

pub fn stability_report(g: &GroupedProbs, convention: StdConvention) -> StabilityReport {
    StabilityReport {
        stability_eq2: intra_stability_eq2(g),
        stability_alg1: intra_stability_alg1(g, convention),
        std_convention: convention,
        inter_stability: inter_stability(g),
        per_class_variance: per_class_variance(g),
        per_class_count: g.groups.iter().map(Vec::len).collect(),
        per_class_mean: class_mean_profile(g).means,
    }
}

/// One row of a probability dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRecord {
    pub example_id: usize,
    pub label: usize,
    pub probs: Vec<f64>,
}

/// Writes `example_id,label,p_0,...,p_{K−1}` with six decimals.
pub fn write_prob_dump<W: Write>(mut w: W, labels: &[usize], probs: &Matrix) -> Result<()> {
    let k = probs.cols();
    let header: Vec<String> = (0..k).map(|c| format!("p_{c}")).collect();
    writeln!(w, "example_id,label,{}", header.join(","))?;
    for (i, (y, row)) in labels.iter().zip(probs.iter_rows()).enumerate() {
        write!(w, "{i},{y}")?;
        for v in row {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_prob_dump<R: BufRead>(r: R) -> Result<Vec<ProbRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::Data("empty probability dump".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[0] != "example_id" || cols[1] != "label" {
        return Err(LabError::Data(format!(
            "probability dump header must be example_id,label,p_0,..., got {header:?}"
        )));
    }
    let k = cols.len() - 2;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != k + 2 {
            return Err(LabError::Data(format!(
                "line {}: expected {} fields, got {}",
                n + 2,
                k + 2,
                f.len()
            )));
        }
        let parse_err = |e: &dyn std::fmt::Display| LabError::Data(format!("line {}: {e}", n + 2));
        let example_id = f[0].parse().map_err(|e| parse_err(&e))?;
        let label = f[1].parse().map_err(|e| parse_err(&e))?;
        let probs = f[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(&e)))
            .collect::<Result<Vec<_>>>()?;
        out.push(ProbRecord {
            example_id,
            label,
            probs,
        });
    }
    Ok(out)
}

/// Groups dump rows by label. Six-decimal rounding is undone by renormalizing each row.
pub fn group_records(records: &[ProbRecord]) -> Result<GroupedProbs> {
    let k = records
        .first()
        .map(|r| r.probs.len())
        .ok_or_else(|| LabError::Data("probability dump has no rows".into()))?;
    let mut groups = vec![Vec::new(); k];
    for r in records {
        let s: f64 = r.probs.iter().sum();
        if !(s > 0.0) {
            return Err(LabError::Data(format!(
                "example {} has non-positive probability mass",
                r.example_id
            )));
        }
        let slot = groups.get_mut(r.label).ok_or_else(|| {
            LabError::Grouping(format!("label {} out of range for {k} classes", r.label))
        })?;
        slot.push(r.probs.iter().map(|p| p / s).collect());
    }
    GroupedProbs::new(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> GroupedProbs {
        GroupedProbs::new(vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5]],
        ])
        .unwrap()
    }

    #[test]
    fn eq2_worked_example() {
        assert!((intra_stability_eq2(&worked_example()) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn alg1_worked_example() {
        let g = GroupedProbs::new(vec![
            vec![vec![0.9, 0.1], vec![0.7, 0.3]],
            vec![vec![0.2, 0.8]],
        ])
        .unwrap();
        assert!((intra_stability_alg1(&g, StdConvention::Population) - 0.95).abs() < 1e-12);
        let sample_std = (0.02f64).sqrt();
        let want = 1.0 - sample_std / 2.0;
        assert!((intra_stability_alg1(&g, StdConvention::Sample) - want).abs() < 1e-12);
    }

    #[test]
    fn inter_worked_example() {
        let g = GroupedProbs::new(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]).unwrap();
        assert!((inter_stability(&g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inter_uses_dataset_wide_mean() {
        // unequal counts: p̄_all weights examples, not classes
        let g = GroupedProbs::new(vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0]],
        ])
        .unwrap();
        let all = [0.75, 0.25];
        let want = 1.0 - (sq_dist(&[1.0, 0.0], &all) + sq_dist(&[0.0, 1.0], &all)) / 2.0;
        assert!((inter_stability(&g) - want).abs() < 1e-12);
    }

    #[test]
    fn point_masses_are_perfectly_stable() {
        let g = GroupedProbs::new(vec![
            vec![vec![0.6, 0.4]; 3],
            vec![vec![0.1, 0.9]; 2],
        ])
        .unwrap();
        assert_eq!(intra_stability_eq2(&g), 1.0);
        assert_eq!(intra_stability_alg1(&g, StdConvention::Sample), 1.0);
        assert_eq!(intra_stability_alg1(&g, StdConvention::Population), 1.0);
    }

    #[test]
    fn shared_means_give_unit_inter_stability() {
        let g = GroupedProbs::new(vec![
            vec![vec![0.6, 0.4], vec![0.4, 0.6]],
            vec![vec![0.5, 0.5]],
        ])
        .unwrap();
        assert!((inter_stability(&g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_rejected() {
        let err = GroupedProbs::new(vec![vec![vec![1.0, 0.0]], vec![]]).unwrap_err();
        assert_eq!(err.kind(), "grouping-error");
    }

    #[test]
    fn profile_rows_and_minor_view() {
        let p = class_mean_profile(&worked_example());
        assert_eq!(p.means.row(0), &[0.5, 0.5]);
        assert_eq!(p.minor[0], vec![0.5]);
        for r in p.means.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let single = GroupedProbs::new(vec![vec![vec![0.7, 0.3]], vec![vec![0.2, 0.8]]]).unwrap();
        let p = class_mean_profile(&single);
        assert_eq!(p.means.row(1), &[0.2, 0.8]);
        assert_eq!(p.max_entries(), vec![0.7, 0.8]);
    }

    #[test]
    fn dump_round_trip() {
        let probs = Matrix::from_rows(&[[0.25, 0.75], [0.5, 0.5], [0.9, 0.1]]).unwrap();
        let labels = [1, 0, 0];
        let mut buf = Vec::new();
        write_prob_dump(&mut buf, &labels, &probs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("example_id,label,p_0,p_1\n0,1,0.250000,0.750000\n"));
        let recs = read_prob_dump(buf.as_slice()).unwrap();
        let g = group_records(&recs).unwrap();
        assert_eq!(g.class(0).len(), 2);
        assert_eq!(g.class(1)[0], vec![0.25, 0.75]);
    }

    #[test]
    fn report_text_parses_as_toml() {
        let r = stability_report(&worked_example(), StdConvention::Sample);
        let v: toml::Table = toml::from_str(&r.to_text()).unwrap();
        assert_eq!(v["stability_eq2"].as_float().unwrap(), 0.75);
        assert_eq!(v["class"].as_array().unwrap().len(), 2);
    }
}

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ExperimentConfig, NetConfig, Split};
use super::derive_seed;
use crate::datagen::{self, LabeledDataset};
use crate::error::{LabError, Result};
use crate::geometry::{self, GeometryReport};
use crate::gradcore::{checkpoint, fit, init_model, Model, Objective, TargetCrossEntropy};
use crate::labels::{
    check_alpha, cross_entropy_slice, distill_loss_grad_slice, fill_smoothed, softmax_into,
    DistillConfig, DistillScratch,
};
use crate::linalg::Matrix;
use crate::metrics::{class_mean_profile, stability_report, GroupedProbs, StabilityReport};

/// Training and validation splits for one seed, plus the tracked near pair.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    /// The similar pair after any class curation (absent if curation dropped it).
    pub pair: Option<(usize, usize)>,
}

impl PreparedData {
    pub fn split(&self, which: Split) -> &LabeledDataset {
        match which {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

/// Generate (or load), curate, split, then long-tail the training split only,
/// so validation always stays balanced.
pub fn prepare_data(cfg: &DataConfig, seed: u64) -> Result<PreparedData> {
    let (mut full, mut pair) = match (&cfg.clusters, &cfg.file) {
        (Some(spec), None) => {
            let spec = datagen::ClusterSpec {
                seed: derive_seed(seed, "data"),
                ..spec.clone()
            };
            (datagen::gen_clusters(&spec)?, Some(spec.similar_pair))
        }
        (None, Some(path)) => {
            let f = std::fs::File::open(path).map_err(|e| {
                LabError::Data(format!("cannot open dataset {}: {e}", path.display()))
            })?;
            (LabeledDataset::read_csv(std::io::BufReader::new(f), None)?, None)
        }
        _ => {
            return Err(LabError::Config(
                "data needs exactly one of clusters or file".into(),
            ))
        }
    };
    if let Some(k) = cfg.curate_classes {
        let curate_seed = derive_seed(seed, "curate");
        let before = full.num_classes();
        full = datagen::curate_subset(&full, k, curate_seed)?;
        pair = pair.and_then(|(a, b)| {
            let kept = datagen::curated_class_ids(before, k, curate_seed);
            let pos = |c| kept.iter().position(|&x| x == c);
            Some((pos(a)?, pos(b)?))
        });
    }
    let (mut train, val) = datagen::split(&full, cfg.val_fraction, derive_seed(seed, "split"))?;
    if let Some(lt) = &cfg.long_tail {
        let lt = datagen::LongTailSpec {
            seed: derive_seed(seed, "long-tail"),
            ..lt.clone()
        };
        train = datagen::pareto_resample(&train, &lt)?;
    }
    Ok(PreparedData { train, val, pair })
}

/// Top-k hit test with ties broken towards the lower class index.
pub fn in_top_k(logits: &[f64], label: usize, k: usize) -> bool {
    let zy = logits[label];
    let rank = logits
        .iter()
        .enumerate()
        .filter(|&(j, &z)| z > zy || (z == zy && j < label))
        .count();
    rank < k
}

/// Fraction of examples whose label is among the `k` largest logits, for each `k`.
pub fn evaluate(model: &Model, data: &LabeledDataset, topk: &[usize]) -> Result<Vec<(usize, f64)>> {
    let num_classes = model.spec().num_classes;
    if let Some(&k) = topk.iter().find(|&&k| k == 0 || k > num_classes) {
        return Err(LabError::Spec(format!(
            "top-{k} accuracy undefined for {num_classes} classes"
        )));
    }
    let logits = model.logits(data.features())?;
    Ok(topk
        .iter()
        .map(|&k| {
            let hits = logits
                .iter_rows()
                .zip(data.labels())
                .filter(|(z, &y)| in_top_k(z, y, k))
                .count();
            (k, hits as f64 / data.len().max(1) as f64)
        })
        .collect())
}

pub fn accuracy(model: &Model, data: &LabeledDataset) -> Result<f64> {
    Ok(evaluate(model, data, &[1])?[0].1)
}

pub fn probabilities(model: &Model, features: &Matrix) -> Result<Matrix> {
    let mut p = model.logits(features)?;
    let mut buf = vec![0.0; p.cols()];
    for r in 0..p.rows() {
        softmax_into(p.row(r), 1.0, &mut buf);
        p.row_mut(r).copy_from_slice(&buf);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_top1: f64,
    pub val_topk: f64,
}

/// Compact geometry numbers carried in logs and summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub d_c_full: f64,
    pub d_c_plane: f64,
    pub spread_full: f64,
    pub spread_plane: f64,
}

impl From<&GeometryReport> for GeometrySummary {
    fn from(g: &GeometryReport) -> Self {
        Self {
            d_c_full: g.full.d_c,
            d_c_plane: g.planar.d_c,
            spread_full: g.full.mean_spread(),
            spread_plane: g.planar.mean_spread(),
        }
    }
}

/// Teacher analysis attached to a teacher log.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherAnalysis {
    pub stability: StabilityReport,
    pub mean_max_class_prob: f64,
    pub geometry: Option<GeometrySummary>,
}

/// Per-epoch series and final metrics of one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentLog {
    pub topk: usize,
    pub epochs: Vec<EpochRecord>,
    pub final_train_top1: f64,
    pub final_val_top1: f64,
    pub param_hash: String,
    pub teacher: Option<TeacherAnalysis>,
    pub wall_time_secs: f64,
}

impl ExperimentLog {
    pub fn new(topk: usize) -> Self {
        Self {
            topk,
            ..Self::default()
        }
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// `epoch,train_loss,val_top1,val_topk`, six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_top1,val_topk")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6}",
                e.epoch, e.train_loss, e.val_top1, e.val_topk
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

fn clamp_topk(topk: usize, num_classes: usize) -> usize {
    topk.min(num_classes)
}

fn train_with_logging<O: Objective>(
    model: &mut Model,
    net: &NetConfig,
    data: &PreparedData,
    objective: &mut O,
    shuffle_seed: u64,
    log: &mut ExperimentLog,
) -> Result<()> {
    let mut train_cfg = net.train.clone();
    train_cfg.seed = shuffle_seed;
    let k = log.topk;
    fit(model, data.train.features(), objective, &train_cfg, |stats, m| {
        let acc = evaluate(m, &data.val, &[1, k])?;
        log.epochs.push(EpochRecord {
            epoch: stats.epoch,
            train_loss: stats.train_loss,
            val_top1: acc[0].1,
            val_topk: acc[1].1,
        });
        Ok(())
    })?;
    log.final_train_top1 = accuracy(model, &data.train)?;
    log.final_val_top1 = log.epochs.last().map_or(0.0, |e| e.val_top1);
    log.param_hash = model.param_hash();
    Ok(())
}

/// Smoothed (or one-hot when `alpha = 0`) target rows for `labels`.
pub fn smoothed_targets(labels: &[usize], num_classes: usize, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    let mut t = Matrix::zeros(labels.len(), num_classes);
    for (i, &y) in labels.iter().enumerate() {
        fill_smoothed(y, alpha, t.row_mut(i));
    }
    Ok(t)
}

/// Picks the geometry reference class: configured, or the first class outside the pair.
pub fn geometry_reference(cfg: &ExperimentConfig, pair: (usize, usize), k: usize) -> Option<usize> {
    cfg.analysis
        .geometry_reference
        .or_else(|| (0..k).find(|&c| c != pair.0 && c != pair.1))
}

/// Stability and class-mean profile on the configured split, geometry on the
/// training split. Also returns the probabilities the stability was computed from.
pub fn analyze_teacher(
    model: &Model,
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(TeacherAnalysis, Option<GeometryReport>, Matrix)> {
    let split = data.split(cfg.analysis.stability_split);
    let probs = probabilities(model, split.features())?;
    let grouped = GroupedProbs::from_labeled(split.labels(), &probs, data.num_classes())?;
    let stability = stability_report(&grouped, cfg.analysis.std_convention);
    let mean_max_class_prob = class_mean_profile(&grouped).mean_max_entry();
    let geometry = match data.pair {
        Some(pair) => match geometry_reference(cfg, pair, data.num_classes()) {
            Some(r) => Some(geometry::analyze(model, &data.train, pair, r)?),
            None => None,
        },
        None => None,
    };
    Ok((
        TeacherAnalysis {
            stability,
            mean_max_class_prob,
            geometry: geometry.as_ref().map(GeometrySummary::from),
        },
        geometry,
        probs,
    ))
}

/// Trains a teacher with smoothing coefficient `alpha`, filling `log` as it goes
/// so a divergence still leaves the epochs completed so far.
pub fn train_teacher_logged(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    alpha: f64,
    seed: u64,
    log: &mut ExperimentLog,
) -> Result<Model> {
    let start = Instant::now();
    let k = data.num_classes();
    log.topk = clamp_topk(cfg.analysis.topk, k);
    let spec = cfg.teacher.net.network_spec(data.dim(), k)?;
    let mut model = init_model(&spec, derive_seed(seed, "teacher-init"))?;
    let targets = smoothed_targets(data.train.labels(), k, alpha)?;
    let mut objective = TargetCrossEntropy::new(&targets);
    train_with_logging(
        &mut model,
        &cfg.teacher.net,
        data,
        &mut objective,
        derive_seed(seed, "teacher-shuffle"),
        log,
    )?;
    let (analysis, _, _) = analyze_teacher(&model, cfg, data)?;
    log.teacher = Some(analysis);
    log.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(model)
}

pub fn train_teacher(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    alpha: f64,
    seed: u64,
) -> Result<(Model, ExperimentLog)> {
    let mut log = ExperimentLog::new(cfg.analysis.topk);
    let model = train_teacher_logged(cfg, data, alpha, seed, &mut log)?;
    Ok((model, log))
}

/// Mixed hard/soft distillation objective against precomputed teacher logits.
pub struct DistillObjective<'a> {
    teacher_logits: &'a Matrix,
    hard_targets: &'a Matrix,
    cfg: DistillConfig,
    scratch: DistillScratch,
}

impl<'a> DistillObjective<'a> {
    pub fn new(teacher_logits: &'a Matrix, hard_targets: &'a Matrix, cfg: DistillConfig) -> Self {
        Self {
            teacher_logits,
            hard_targets,
            cfg,
            scratch: DistillScratch::new(teacher_logits.cols()),
        }
    }
}

impl Objective for DistillObjective<'_> {
    fn loss_grad(&mut self, idx: &[usize], logits: &Matrix, grad: &mut Matrix) -> f64 {
        idx.iter()
            .enumerate()
            .map(|(r, &i)| {
                distill_loss_grad_slice(
                    logits.row(r),
                    self.teacher_logits.row(i),
                    self.hard_targets.row(i),
                    &self.cfg,
                    &mut self.scratch,
                    grad.row_mut(r),
                )
            })
            .sum()
    }
}

/// Mean distillation objective of `student` over the training split.
pub fn distill_objective_value(
    student: &Model,
    teacher: &Model,
    data: &PreparedData,
    cfg: &DistillConfig,
) -> Result<f64> {
    cfg.validate()?;
    let zt = teacher.logits(data.train.features())?;
    let zs = student.logits(data.train.features())?;
    let hard = smoothed_targets(data.train.labels(), data.num_classes(), 0.0)?;
    let mut obj = DistillObjective::new(&zt, &hard, *cfg);
    let idx: Vec<usize> = (0..data.train.len()).collect();
    let mut grad = Matrix::zeros(zs.rows(), zs.cols());
    Ok(obj.loss_grad(&idx, &zs, &mut grad) / data.train.len() as f64)
}

/// Mean entropy of the teacher's output distribution on the training split.
pub fn teacher_mean_entropy(teacher: &Model, data: &PreparedData) -> Result<f64> {
    let p = probabilities(teacher, data.train.features())?;
    Ok(p.iter_rows().map(crate::labels::entropy).sum::<f64>() / p.rows() as f64)
}

/// Distils a student from a frozen teacher. `student_init` overrides the
/// seeded initialization.
pub fn distill_student_logged(
    teacher: &Model,
    cfg: &ExperimentConfig,
    data: &PreparedData,
    distill: &DistillConfig,
    seed: u64,
    student_init: Option<Model>,
    log: &mut ExperimentLog,
) -> Result<Model> {
    distill.validate()?;
    let start = Instant::now();
    let k = data.num_classes();
    log.topk = clamp_topk(cfg.analysis.topk, k);
    let mut student = match student_init {
        Some(m) => m,
        None => {
            let spec = cfg.student.network_spec(data.dim(), k)?;
            init_model(&spec, derive_seed(seed, "student-init"))?
        }
    };
    if student.spec().num_classes != k || student.spec().input_dim != data.dim() {
        return Err(LabError::Shape("student does not match the dataset".into()));
    }
    let teacher_logits = teacher.logits(data.train.features())?;
    let hard = smoothed_targets(data.train.labels(), k, 0.0)?;
    let mut objective = DistillObjective::new(&teacher_logits, &hard, *distill);
    train_with_logging(
        &mut student,
        &cfg.student,
        data,
        &mut objective,
        derive_seed(seed, "student-shuffle"),
        log,
    )?;
    log.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(student)
}

pub fn distill_student(
    teacher: &Model,
    cfg: &ExperimentConfig,
    data: &PreparedData,
    distill: &DistillConfig,
    seed: u64,
) -> Result<(Model, ExperimentLog)> {
    let mut log = ExperimentLog::new(cfg.analysis.topk);
    let m = distill_student_logged(teacher, cfg, data, distill, seed, None, &mut log)?;
    Ok((m, log))
}

/// Writes a teacher's checkpoint, log CSV, stability report, probability dump
/// (on the stability split) and, when a similar pair is known, its geometry.
pub fn write_teacher_outputs(
    dir: &Path,
    model: &Model,
    log: &ExperimentLog,
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    checkpoint::save(model, log.epochs.len(), &dir.join("teacher.ckpt"))?;
    std::fs::write(dir.join("teacher.csv"), log.to_csv_string())?;
    let (analysis, geometry, probs) = analyze_teacher(model, cfg, data)?;
    let split = data.split(cfg.analysis.stability_split);
    let mut dump = Vec::new();
    crate::metrics::write_prob_dump(&mut dump, split.labels(), &probs)?;
    std::fs::write(dir.join("teacher_probs.csv"), dump)?;
    std::fs::write(dir.join("teacher_stability.toml"), analysis.stability.to_text())?;
    if let Some(g) = geometry {
        write_geometry_outputs(dir, &g)?;
    }
    Ok(())
}

/// `points.csv`, `geometry.svg` and a one-line `geometry.txt` summary.
pub fn write_geometry_outputs(dir: &Path, g: &GeometryReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut pts = Vec::new();
    g.write_points_csv(&mut pts)?;
    std::fs::write(dir.join("points.csv"), pts)?;
    std::fs::write(dir.join("geometry.svg"), g.to_svg())?;
    std::fs::write(dir.join("geometry.txt"), format!("{}\n", g.summary_line()))?;
    Ok(())
}

/// Cross-entropy of a model against one-hot labels (for plain evaluation reports).
pub fn mean_cross_entropy(model: &Model, data: &LabeledDataset) -> Result<f64> {
    let p = probabilities(model, data.features())?;
    let t = smoothed_targets(data.labels(), data.num_classes(), 0.0)?;
    Ok(p.iter_rows()
        .zip(t.iter_rows())
        .map(|(pr, tr)| cross_entropy_slice(pr, tr))
        .sum::<f64>()
        / data.len() as f64)
}

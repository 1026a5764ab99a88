//! Seed matrices: every (seed × teacher α × distillation setting) cell runs the
//! full teacher → student chain. Cells are independent and run on a worker pool;
//! aggregation folds over cells sorted by id, so results do not depend on the
//! pool size.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{
    distill_student_logged, prepare_data, train_teacher_logged, write_teacher_outputs,
    ExperimentLog, GeometrySummary, PreparedData,
};
use super::manifest::{sha256_hex, write_manifest, TIMING_FILE};
use crate::error::{LabError, Result};
use crate::gradcore::{checkpoint, Model};
use crate::labels::DistillConfig;

pub const CELL_FILE: &str = "cell.toml";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellRole {
    Teacher,
    Student,
}

/// Everything deterministic about one finished (or failed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub seed: u64,
    pub teacher_alpha: f64,
    pub role: CellRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<DistillConfig>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub epochs_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    pub final_train_top1: f64,
    pub final_val_top1: f64,
    pub final_val_topk: f64,
    pub topk: usize,
    #[serde(default)]
    pub param_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_alg1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_stability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_max_class_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySummary>,
}

impl CellRecord {
    fn from_log(
        id: String,
        seed: u64,
        teacher_alpha: f64,
        role: CellRole,
        setting: Option<(usize, DistillConfig)>,
        log: &ExperimentLog,
        outcome: std::result::Result<(), &LabError>,
    ) -> Self {
        let teacher = log.teacher.as_ref();
        Self {
            id,
            seed,
            teacher_alpha,
            role,
            setting_index: setting.map(|s| s.0),
            setting: setting.map(|s| s.1),
            ok: outcome.is_ok(),
            error: outcome.err().map(ToString::to_string),
            epochs_completed: log.epochs.len(),
            final_train_loss: log.final_train_loss(),
            final_train_top1: log.final_train_top1,
            final_val_top1: log.final_val_top1,
            final_val_topk: log.epochs.last().map_or(0.0, |e| e.val_topk),
            topk: log.topk,
            param_hash: log.param_hash.clone(),
            intra_variance: teacher.map(|t| t.stability.intra_variance()),
            stability_alg1: teacher.map(|t| t.stability.stability_alg1),
            inter_stability: teacher.map(|t| t.stability.inter_stability),
            mean_max_class_prob: teacher.map(|t| t.mean_max_class_prob),
            geometry: teacher.and_then(|t| t.geometry),
        }
    }

    fn failed(id: String, seed: u64, alpha: f64, setting: Option<(usize, DistillConfig)>, err: &LabError) -> Self {
        let role = if setting.is_some() { CellRole::Student } else { CellRole::Teacher };
        Self::from_log(id, seed, alpha, role, setting, &ExperimentLog::default(), Err(err))
    }

    /// Named scalar metrics used by the summary.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut m = vec![
            ("final_train_top1", self.final_train_top1),
            ("final_val_top1", self.final_val_top1),
            ("final_val_topk", self.final_val_topk),
        ];
        let opt = [
            ("final_train_loss", self.final_train_loss),
            ("intra_variance", self.intra_variance),
            ("stability_alg1", self.stability_alg1),
            ("inter_stability", self.inter_stability),
            ("mean_max_class_prob", self.mean_max_class_prob),
            ("d_c_full", self.geometry.map(|g| g.d_c_full)),
            ("spread_full", self.geometry.map(|g| g.spread_full)),
            ("d_c_plane", self.geometry.map(|g| g.d_c_plane)),
            ("spread_plane", self.geometry.map(|g| g.spread_plane)),
        ];
        m.extend(opt.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        m
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics().into_iter().find(|(k, _)| *k == name).map(|(_, v)| v)
    }
}

pub fn cell_dir_name(seed: u64, alpha: f64) -> String {
    format!("seed-{seed}_alpha-{alpha}")
}

fn cell_id(seed: u64, alpha: f64, setting: Option<usize>) -> String {
    match setting {
        None => format!("{}/teacher", cell_dir_name(seed, alpha)),
        Some(j) => format!("{}/student-{j}", cell_dir_name(seed, alpha)),
    }
}

/// Mean and sample standard deviation of a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub role: CellRole,
    pub teacher_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting_index: Option<usize>,
    pub cells_ok: usize,
    pub metrics: BTreeMap<String, Stat>,
}

/// Per-seed comparison of a smoothed-teacher cell against its α = 0 twin.
/// `wins` counts seeds where the metric moved in the expected direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub claim: String,
    pub metric: String,
    pub role: CellRole,
    pub teacher_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting_index: Option<usize>,
    /// "lower" or "higher" under smoothing.
    pub expected: String,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl SignTest {
    pub fn pairs(&self) -> usize {
        self.wins + self.losses + self.ties
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub name: String,
    pub config_hash: String,
    /// Loss values are per-example means over each epoch's mini-batches.
    pub loss_normalization: String,
    pub cells_ok: usize,
    pub cells_failed: usize,
    #[serde(default)]
    pub failures: Vec<String>,
    #[serde(default)]
    pub groups: Vec<GroupSummary>,
    #[serde(default)]
    pub sign_tests: Vec<SignTest>,
}

impl MatrixSummary {
    pub fn group(&self, role: CellRole, alpha: f64, setting: Option<usize>) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.role == role && g.teacher_alpha == alpha && g.setting_index == setting)
    }

    pub fn sign_test(&self, metric: &str, alpha: f64, setting: Option<usize>) -> Option<&SignTest> {
        self.sign_tests
            .iter()
            .find(|s| s.metric == metric && s.teacher_alpha == alpha && s.setting_index == setting)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(format!("cannot render summary: {e}")))
    }
}

/// Directional claims checked per seed: (claim, metric, role, smoothed value expected lower?).
const CLAIMS: [(&str, &str, CellRole, bool); 6] = [
    ("smoothing lowers intra-class variance", "intra_variance", CellRole::Teacher, true),
    ("smoothing lowers mean max class probability", "mean_max_class_prob", CellRole::Teacher, true),
    ("smoothing enlarges similar-pair separation", "d_c_full", CellRole::Teacher, false),
    ("smoothing tightens within-class spread", "spread_full", CellRole::Teacher, true),
    ("distilling a smoothed teacher ends at higher loss", "final_train_loss", CellRole::Student, false),
    ("smoothed teacher distils a better student", "final_val_top1", CellRole::Student, false),
];

/// Deterministic fold of cell records into means, deviations and sign tests.
pub fn summarize(name: &str, config_hash: &str, cells: &[CellRecord]) -> MatrixSummary {
    let mut sorted: Vec<&CellRecord> = cells.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    type Key = (CellRole, u64, Option<usize>); // alpha as bits so keys order totally
    let mut groups: BTreeMap<Key, Vec<&CellRecord>> = BTreeMap::new();
    for c in sorted.iter().filter(|c| c.ok) {
        groups
            .entry((c.role, c.teacher_alpha.to_bits(), c.setting_index))
            .or_default()
            .push(c);
    }
    let group_summaries = groups
        .iter()
        .map(|(&(role, bits, setting_index), members)| {
            let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for c in members {
                for (k, v) in c.metrics() {
                    cols.entry(k.to_string()).or_default().push(v);
                }
            }
            GroupSummary {
                role,
                teacher_alpha: f64::from_bits(bits),
                setting_index,
                cells_ok: members.len(),
                metrics: cols.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect(),
            }
        })
        .collect();

    let by_key: BTreeMap<(CellRole, u64, u64, Option<usize>), &CellRecord> = sorted
        .iter()
        .filter(|c| c.ok)
        .map(|c| ((c.role, c.seed, c.teacher_alpha.to_bits(), c.setting_index), *c))
        .collect();
    let mut sign_tests = Vec::new();
    let mut smoothed: Vec<(CellRole, u64, Option<usize>)> = groups
        .keys()
        .filter(|k| f64::from_bits(k.1) != 0.0)
        .copied()
        .collect();
    smoothed.dedup();
    for (role, bits, setting_index) in smoothed {
        for (claim, metric, claim_role, lower) in CLAIMS {
            if claim_role != role {
                continue;
            }
            let (mut wins, mut losses, mut ties) = (0, 0, 0);
            for (&(r, seed, b, s), cell) in &by_key {
                if r != role || b != bits || s != setting_index {
                    continue;
                }
                let Some(base) = by_key.get(&(role, seed, 0f64.to_bits(), setting_index)) else {
                    continue;
                };
                let (Some(x), Some(y)) = (cell.metric(metric), base.metric(metric)) else {
                    continue;
                };
                if x == y {
                    ties += 1;
                } else if (x < y) == lower {
                    wins += 1;
                } else {
                    losses += 1;
                }
            }
            if wins + losses + ties > 0 {
                sign_tests.push(SignTest {
                    claim: claim.into(),
                    metric: metric.into(),
                    role,
                    teacher_alpha: f64::from_bits(bits),
                    setting_index,
                    expected: if lower { "lower" } else { "higher" }.into(),
                    wins,
                    losses,
                    ties,
                });
            }
        }
    }

    let failures: Vec<String> = sorted
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{}: {}", c.id, c.error.as_deref().unwrap_or("unknown")))
        .collect();
    MatrixSummary {
        name: name.into(),
        config_hash: config_hash.into(),
        loss_normalization: "per-example mean".into(),
        cells_ok: sorted.len() - failures.len(),
        cells_failed: failures.len(),
        failures,
        groups: group_summaries,
        sign_tests,
    }
}

/// Result of a matrix run: all cell records sorted by id plus their summary.
#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub cells: Vec<CellRecord>,
    pub summary: MatrixSummary,
    pub out_dir: Option<PathBuf>,
}

impl MatrixOutcome {
    pub fn cell(&self, seed: u64, alpha: f64, setting: Option<usize>) -> Option<&CellRecord> {
        let id = cell_id(seed, alpha, setting);
        self.cells.iter().find(|c| c.id == id)
    }
}

struct GroupResult {
    cells: Vec<CellRecord>,
    wall: Vec<(String, f64)>,
}

fn write_cell(dir: &Path, rec: &CellRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string(rec).map_err(|e| LabError::Config(format!("cannot render cell: {e}")))?;
    std::fs::write(dir.join(CELL_FILE), text)?;
    Ok(())
}

/// Teacher followed by each of its distillation settings, for one (seed, α).
fn run_group(
    cfg: &ExperimentConfig,
    seed: u64,
    alpha: f64,
    settings: &[DistillConfig],
    out_dir: Option<&Path>,
) -> GroupResult {
    let mut cells = Vec::with_capacity(settings.len() + 1);
    let mut wall = Vec::new();
    let group_dir = out_dir.map(|d| d.join("cells").join(cell_dir_name(seed, alpha)));
    let student_ids = |cells: &mut Vec<CellRecord>, err: &LabError| {
        for (j, s) in settings.iter().enumerate() {
            cells.push(CellRecord::failed(cell_id(seed, alpha, Some(j)), seed, alpha, Some((j, *s)), err));
        }
    };
    let result = (|| -> Result<()> {
        let data = match prepare_data(&cfg.data, seed) {
            Ok(d) => d,
            Err(e) => {
                cells.push(CellRecord::failed(cell_id(seed, alpha, None), seed, alpha, None, &e));
                student_ids(&mut cells, &e);
                return Ok(());
            }
        };
        let teacher = run_teacher_cell(cfg, &data, seed, alpha, group_dir.as_deref(), &mut cells, &mut wall)?;
        let Some(teacher) = teacher else {
            let err = LabError::Divergence("teacher did not finish".into());
            student_ids(&mut cells, &err);
            return Ok(());
        };
        let hash_before = teacher.param_hash();
        for (j, setting) in settings.iter().enumerate() {
            let id = cell_id(seed, alpha, Some(j));
            let start = Instant::now();
            let mut log = ExperimentLog::new(cfg.analysis.topk);
            let res = distill_student_logged(&teacher, cfg, &data, setting, seed, None, &mut log);
            let rec = CellRecord::from_log(
                id.clone(),
                seed,
                alpha,
                CellRole::Student,
                Some((j, *setting)),
                &log,
                res.as_ref().map(|_| ()),
            );
            if let Some(dir) = &group_dir {
                let cdir = dir.join(format!("student-{j}"));
                write_cell(&cdir, &rec)?;
                std::fs::write(cdir.join("student.csv"), log.to_csv_string())?;
                if let Ok(student) = &res {
                    checkpoint::save(student, log.epochs.len(), &cdir.join("student.ckpt"))?;
                }
            }
            wall.push((id, start.elapsed().as_secs_f64()));
            cells.push(rec);
        }
        debug_assert_eq!(hash_before, teacher.param_hash(), "teacher must stay frozen");
        Ok(())
    })();
    if let Err(e) = result {
        // an I/O failure while writing outputs: record it against every missing cell
        let have: Vec<String> = cells.iter().map(|c| c.id.clone()).collect();
        let mut all = vec![(cell_id(seed, alpha, None), None)];
        all.extend(settings.iter().enumerate().map(|(j, s)| (cell_id(seed, alpha, Some(j)), Some((j, *s)))));
        for (id, setting) in all {
            if !have.contains(&id) {
                cells.push(CellRecord::failed(id, seed, alpha, setting, &e));
            }
        }
    }
    GroupResult { cells, wall }
}

fn run_teacher_cell(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
    alpha: f64,
    group_dir: Option<&Path>,
    cells: &mut Vec<CellRecord>,
    wall: &mut Vec<(String, f64)>,
) -> Result<Option<Model>> {
    let id = cell_id(seed, alpha, None);
    let start = Instant::now();
    let mut log = ExperimentLog::new(cfg.analysis.topk);
    let res = train_teacher_logged(cfg, data, alpha, seed, &mut log);
    let rec = CellRecord::from_log(
        id.clone(),
        seed,
        alpha,
        CellRole::Teacher,
        None,
        &log,
        res.as_ref().map(|_| ()),
    );
    if let Some(dir) = group_dir {
        let tdir = dir.join("teacher");
        write_cell(&tdir, &rec)?;
        match &res {
            Ok(model) => write_teacher_outputs(&tdir, model, &log, cfg, data)?,
            Err(_) => std::fs::write(tdir.join("teacher.csv"), log.to_csv_string())?,
        }
    }
    wall.push((id, start.elapsed().as_secs_f64()));
    cells.push(rec);
    Ok(res.ok())
}

/// Runs every cell of the matrix on `workers` threads. With `out_dir`, writes
/// per-cell logs, checkpoints and probability dumps, `summary.toml`, the
/// resolved config and a manifest.
pub fn run_matrix(cfg: &ExperimentConfig, workers: usize, out_dir: Option<&Path>) -> Result<MatrixOutcome> {
    cfg.validate()?;
    if workers == 0 {
        return Err(LabError::Config("worker count must be at least 1".into()));
    }
    let config_text = cfg.to_toml()?;
    let config_hash = sha256_hex(config_text.as_bytes());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), &config_text)?;
    }
    let settings = cfg.distill_settings();
    let jobs: Vec<(u64, f64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.teacher_alphas().into_iter().map(move |a| (s, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<GroupResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, alpha)| run_group(cfg, seed, alpha, &settings, out_dir))
            .collect()
    });
    let mut cells: Vec<CellRecord> = Vec::new();
    let mut wall: Vec<(String, f64)> = Vec::new();
    for r in results {
        cells.extend(r.cells);
        wall.extend(r.wall);
    }
    cells.sort_by(|a, b| a.id.cmp(&b.id));
    wall.sort_by(|a, b| a.0.cmp(&b.0));
    let summary = summarize(&cfg.name, &config_hash, &cells);
    if let Some(dir) = out_dir {
        std::fs::write(dir.join(SUMMARY_FILE), summary.to_toml()?)?;
        let mut timing = String::from("# wall-clock seconds per cell; varies between runs\n");
        for (id, secs) in &wall {
            timing.push_str(&format!("\"{id}\" = {secs:.3}\n"));
        }
        std::fs::write(dir.join(TIMING_FILE), timing)?;
        write_manifest(dir, &config_text)?;
    }
    Ok(MatrixOutcome {
        cells,
        summary,
        out_dir: out_dir.map(Path::to_path_buf),
    })
}

/// Reads every `cell.toml` under `dir/cells`, sorted by id.
pub fn read_cells(dir: &Path) -> Result<Vec<CellRecord>> {
    let mut cells = Vec::new();
    let root = dir.join("cells");
    let mut stack = vec![root.clone()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d)
            .map_err(|e| LabError::Data(format!("cannot read {}: {e}", d.display())))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == CELL_FILE) {
                let text = std::fs::read_to_string(&path)?;
                let rec: CellRecord = toml::from_str(&text).map_err(|e| {
                    LabError::Data(format!("malformed cell file {}: {e}", path.display()))
                })?;
                cells.push(rec);
            }
        }
    }
    if cells.is_empty() {
        return Err(LabError::Data(format!("no cell files under {}", root.display())));
    }
    cells.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cells)
}

/// Re-aggregates a finished matrix directory without retraining.
pub fn report(dir: &Path) -> Result<MatrixSummary> {
    let config_text = std::fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| LabError::Data(format!("missing {CONFIG_FILE} in {}: {e}", dir.display())))?;
    let cfg = ExperimentConfig::from_toml(&config_text)?;
    let cells = read_cells(dir)?;
    Ok(summarize(&cfg.name, &sha256_hex(config_text.as_bytes()), &cells))
}

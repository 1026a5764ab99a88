//! The `lskd` command line. Every subcommand reads one experiment config (flags
//! only override seeds and paths), writes its outputs under one directory and
//! finishes with a manifest of those files.
//!
//! Exit status: 0 on success, 1 on a domain error (the message starts with the
//! error kind, e.g. `invalid-coefficient`), 2 on a usage error.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry;
use crate::gradcore::checkpoint;
use crate::labels::{linspace, smoothed_logistic_curve};
use crate::metrics::{group_records, read_prob_dump, stability_report, StdConvention};
use crate::pipeline::experiment::{self, geometry_reference};
use crate::pipeline::{self, manifest::write_manifest, ExperimentConfig};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LSKD_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "lskd-out";

#[derive(Debug, Parser)]
#[command(name = "lskd", version, about = "Label smoothing and knowledge distillation at desk scale")]
pub struct Cli {
    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; defaults to `$LSKD_OUTPUT_ROOT/<name>/<subcommand>`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Run with this seed instead of the first configured one.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or load), curate and split the dataset; write train.csv, val.csv and dataset.toml.
    GenData(RunArgs),
    /// Train a teacher and write its checkpoint, curve, probability dump and stability report.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Override the teacher's smoothing coefficient.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Distil a student from a frozen teacher checkpoint.
    Distill {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Top-k accuracy of a checkpoint on the validation split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        topk: Vec<usize>,
    },
    /// Stability metrics of a probability dump.
    Metrics {
        #[arg(long)]
        probs: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sample")]
        std_convention: ConventionArg,
    },
    /// Penultimate-layer projection of the similar pair onto the template plane.
    Geometry {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        /// Pair of classes as `a,b`; defaults to the configured similar pair.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        pair: Option<Vec<usize>>,
        #[arg(long)]
        reference: Option<usize>,
    },
    /// Smoothed binary logistic loss curves as `alpha,z,loss`.
    Curves {
        /// Smoothing coefficients (repeatable or comma-separated).
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        zmin: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        zmax: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the seed × teacher α × distillation-setting matrix.
    Matrix {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Use seeds `0..N` instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Worker threads; outputs do not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Re-aggregate the summary of a finished matrix directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionArg {
    Sample,
    Population,
}

impl From<ConventionArg> for StdConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Sample => StdConvention::Sample,
            ConventionArg::Population => StdConvention::Population,
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(dir) => {
            if cli.verbose > 0 {
                eprintln!("outputs written to {}", dir.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

fn out_dir(explicit: &Option<PathBuf>, name: &str, sub: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| output_root().join(name).join(sub))
}

fn load(run: &RunArgs) -> Result<(ExperimentConfig, u64)> {
    let cfg = ExperimentConfig::load(&run.config)?;
    let seed = run.seed.unwrap_or(cfg.seeds[0]);
    Ok((cfg, seed))
}

fn resolved(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let mut c = cfg.clone();
    c.seeds = vec![seed];
    c.to_toml()
}

fn args_text<T: Serialize>(args: &T) -> Result<String> {
    toml::to_string(args).map_err(|e| LabError::Config(format!("cannot render arguments: {e}")))
}

/// Sidecar record for generated datasets: the data config, seed and class counts.
fn dataset_record(cfg: &ExperimentConfig, seed: u64, data: &pipeline::PreparedData) -> Result<String> {
    #[derive(Serialize)]
    struct Record<'a> {
        seed: u64,
        num_classes: usize,
        dim: usize,
        train_counts: Vec<usize>,
        val_counts: Vec<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        similar_pair: Option<(usize, usize)>,
        data: &'a pipeline::DataConfig,
    }
    args_text(&Record {
        seed,
        num_classes: data.num_classes(),
        dim: data.dim(),
        train_counts: data.train.class_counts(),
        val_counts: data.val.class_counts(),
        similar_pair: data.pair,
        data: &cfg.data,
    })
}

fn load_model(path: &Path) -> Result<crate::gradcore::Model> {
    Ok(checkpoint::load(path)?.0)
}

/// Runs one parsed invocation and returns its output directory.
pub fn dispatch(cli: &Cli) -> Result<PathBuf> {
    let verbose = cli.verbose > 0;
    match &cli.command {
        Command::GenData(run) => {
            let (cfg, seed) = load(run)?;
            let dir = out_dir(&run.out, &cfg.name, "gen-data");
            let data = pipeline::prepare_data(&cfg.data, seed)?;
            std::fs::create_dir_all(&dir)?;
            let mut buf = Vec::new();
            data.train.write_csv(&mut buf)?;
            std::fs::write(dir.join("train.csv"), &buf)?;
            buf.clear();
            data.val.write_csv(&mut buf)?;
            std::fs::write(dir.join("val.csv"), &buf)?;
            std::fs::write(dir.join("dataset.toml"), dataset_record(&cfg, seed, &data)?)?;
            write_manifest(&dir, &resolved(&cfg, seed)?)?;
            Ok(dir)
        }
        Command::Train { run, alpha } => {
            let (mut cfg, seed) = load(run)?;
            if let Some(a) = alpha {
                cfg.teacher.alpha = *a;
                cfg.validate()?;
            }
            let dir = out_dir(&run.out, &cfg.name, "train");
            let data = pipeline::prepare_data(&cfg.data, seed)?;
            let mut log = pipeline::ExperimentLog::new(cfg.analysis.topk);
            let res = pipeline::train_teacher_logged(&cfg, &data, cfg.teacher.alpha, seed, &mut log);
            std::fs::create_dir_all(&dir)?;
            let model = match res {
                Ok(m) => m,
                Err(e) => {
                    std::fs::write(dir.join("teacher.csv"), log.to_csv_string())?;
                    return Err(e);
                }
            };
            experiment::write_teacher_outputs(&dir, &model, &log, &cfg, &data)?;
            if verbose {
                eprintln!(
                    "teacher alpha={} train top1={:.4} val top1={:.4}",
                    cfg.teacher.alpha, log.final_train_top1, log.final_val_top1
                );
            }
            write_manifest(&dir, &resolved(&cfg, seed)?)?;
            Ok(dir)
        }
        Command::Distill { run, teacher, lambda, temperature } => {
            let (mut cfg, seed) = load(run)?;
            if let Some(l) = lambda {
                cfg.distill.lambda = *l;
            }
            if let Some(t) = temperature {
                cfg.distill.temperature = *t;
            }
            cfg.validate()?;
            let dir = out_dir(&run.out, &cfg.name, "distill");
            let teacher = load_model(teacher)?;
            let data = pipeline::prepare_data(&cfg.data, seed)?;
            let mut log = pipeline::ExperimentLog::new(cfg.analysis.topk);
            let res =
                pipeline::distill_student_logged(&teacher, &cfg, &data, &cfg.distill, seed, None, &mut log);
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("student.csv"), log.to_csv_string())?;
            let student = res?;
            checkpoint::save(&student, log.epochs.len(), &dir.join("student.ckpt"))?;
            if verbose {
                eprintln!("student val top1={:.4}", log.final_val_top1);
            }
            write_manifest(&dir, &resolved(&cfg, seed)?)?;
            Ok(dir)
        }
        Command::Evaluate { run, model, topk } => {
            let (cfg, seed) = load(run)?;
            let dir = out_dir(&run.out, &cfg.name, "evaluate");
            let model = load_model(model)?;
            let data = pipeline::prepare_data(&cfg.data, seed)?;
            let acc = pipeline::evaluate(&model, &data.val, topk)?;
            let mut text = String::from("split = \"val\"\n");
            for (k, a) in &acc {
                text.push_str(&format!("top{k} = {a:.6}\n"));
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("evaluation.toml"), &text)?;
            print!("{text}");
            write_manifest(&dir, &resolved(&cfg, seed)?)?;
            Ok(dir)
        }
        Command::Metrics { probs, out, std_convention } => {
            let dir = out_dir(out, "metrics", "metrics");
            let f = std::fs::File::open(probs)
                .map_err(|e| LabError::Data(format!("cannot open {}: {e}", probs.display())))?;
            let grouped = group_records(&read_prob_dump(BufReader::new(f))?)?;
            let report = stability_report(&grouped, (*std_convention).into());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("stability.toml"), report.to_text())?;
            if verbose {
                eprintln!("stability (eq2) = {:.6}", report.stability_eq2);
            }
            #[derive(Serialize)]
            struct A<'a> {
                probs: &'a Path,
                std_convention: ConventionArg,
            }
            write_manifest(&dir, &args_text(&A { probs, std_convention: *std_convention })?)?;
            Ok(dir)
        }
        Command::Geometry { run, model, pair, reference } => {
            let (cfg, seed) = load(run)?;
            let dir = out_dir(&run.out, &cfg.name, "geometry");
            let model = load_model(model)?;
            let data = pipeline::prepare_data(&cfg.data, seed)?;
            let pair = match pair {
                Some(p) => (p[0], p[1]),
                None => data.pair.ok_or_else(|| {
                    LabError::Config("no similar pair known for this dataset; pass --pair".into())
                })?,
            };
            let r = reference
                .or_else(|| geometry_reference(&cfg, pair, data.num_classes()))
                .ok_or_else(|| LabError::Spec("need a third class for the template plane".into()))?;
            let g = geometry::analyze(&model, &data.train, pair, r)?;
            experiment::write_geometry_outputs(&dir, &g)?;
            println!("{}", g.summary_line());
            write_manifest(&dir, &resolved(&cfg, seed)?)?;
            Ok(dir)
        }
        Command::Curves { alpha, zmin, zmax, steps, out } => {
            let dir = out_dir(out, "curves", "curves");
            if *steps < 2 || !(zmin < zmax) {
                return Err(LabError::InvalidInput(
                    "curves need steps ≥ 2 and zmin < zmax".into(),
                ));
            }
            let grid = linspace(*zmin, *zmax, *steps);
            let mut csv = String::from("alpha,z,loss\n");
            for &a in alpha {
                for (z, l) in smoothed_logistic_curve(&grid, a)? {
                    csv.push_str(&format!("{a:.6},{z:.6},{l:.6}\n"));
                }
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("curves.csv"), csv)?;
            #[derive(Serialize)]
            struct A<'a> {
                alpha: &'a [f64],
                zmin: f64,
                zmax: f64,
                steps: usize,
            }
            write_manifest(
                &dir,
                &args_text(&A { alpha, zmin: *zmin, zmax: *zmax, steps: *steps })?,
            )?;
            Ok(dir)
        }
        Command::Matrix { config, out, seeds, workers } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(n) = seeds {
                cfg.seeds = (0..*n).collect();
                cfg.validate()?;
            }
            let dir = out_dir(out, &cfg.name, "matrix");
            let outcome = pipeline::run_matrix(&cfg, *workers, Some(&dir))?;
            let s = &outcome.summary;
            if verbose {
                eprintln!("{} cells ok, {} failed", s.cells_ok, s.cells_failed);
                for t in &s.sign_tests {
                    eprintln!(
                        "alpha={} setting={:?} {}: {}/{} (ties {})",
                        t.teacher_alpha, t.setting_index, t.claim, t.wins, t.pairs(), t.ties
                    );
                }
            }
            Ok(dir)
        }
        Command::Report { dir } => {
            let summary = pipeline::report(dir)?;
            let text = summary.to_toml()?;
            print!("{text}");
            Ok(dir.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["lskd", "frobnicate"]), 2);
    }

    #[test]
    fn missing_subcommand_is_usage_error() {
        assert_eq!(run(["lskd"]), 2);
    }

    #[test]
    fn curve_arguments_parse_negative_bounds() {
        let cli = Cli::try_parse_from(["lskd", "curves", "--alpha", "0.1", "--zmin", "-10", "--zmax", "10", "--steps", "200"])
            .unwrap();
        match cli.command {
            Command::Curves { alpha, zmin, steps, .. } => {
                assert_eq!(alpha, vec![0.1]);
                assert_eq!(zmin, -10.0);
                assert_eq!(steps, 200);
            }
            other => panic!("parsed as {other:?}"),
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lskd::datagen::ClusterSpec;
use lskd::pipeline::{ExperimentConfig, Manifest};

fn lskd(args: &[&str]) -> Output {
    lskd_in(args, None)
}

fn lskd_in(args: &[&str], output_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lskd"));
    cmd.args(args);
    match output_root {
        Some(root) => cmd.env("LSKD_OUTPUT_ROOT", root),
        None => cmd.env_remove("LSKD_OUTPUT_ROOT"),
    };
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config_file(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.name = "cli-tiny".into();
    cfg.seeds = vec![7];
    cfg.data.clusters = Some(ClusterSpec { num_classes: 4, dim: 6, n_per_class: 40, ..ClusterSpec::default() });
    cfg.teacher.net.hidden = vec![16];
    cfg.teacher.net.train.epochs = 3;
    cfg.teacher.net.train.lr_decay_epochs = vec![2];
    cfg.student.hidden = vec![8];
    cfg.student.train.epochs = 3;
    cfg.student.train.lr_decay_epochs = vec![2];
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn curves_write_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves");
    let o = lskd(&["curves", "--alpha", "0.1", "--zmin", "-10", "--zmax", "10", "--steps", "200", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("alpha,z,loss"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][1], -10.0);
    assert_eq!(rows[199][1], 10.0);
    assert!(rows.iter().all(|r| r[0] == 0.1 && r[2] >= 0.0));
    assert!(out.join("manifest.toml").is_file());
}

#[test]
fn out_of_range_smoothing_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lskd(&["curves", "--alpha", "1.2", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid-coefficient"), "{}", stderr(&o));

    let cfg = tiny_config_file(dir.path());
    let o = lskd(&["train", "--config", s(&cfg), "--alpha", "1.2", "--out", s(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid-coefficient"), "{}", stderr(&o));

    let text = std::fs::read_to_string(&cfg).unwrap();
    let mut table: toml::Table = text.parse().unwrap();
    table["teacher"].as_table_mut().unwrap().insert("alpha".into(), toml::Value::Float(1.2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, toml::to_string(&table).unwrap()).unwrap();
    let o = lskd(&["train", "--config", s(&bad), "--out", s(&dir.path().join("t2"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid-coefficient"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(lskd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lskd(&[]).status.code(), Some(2));
    assert_eq!(lskd(&["curves", "--steps", "many"]).status.code(), Some(2));
}

#[test]
fn missing_config_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lskd(&["gen-data", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config_file(dir.path());
    let root = dir.path().join("root");
    let o = lskd_in(&["gen-data", "--config", s(&cfg)], Some(&root));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = root.join("cli-tiny").join("gen-data");
    for f in ["train.csv", "val.csv", "dataset.toml", "manifest.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn matrix_runs_every_cell_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = tiny_config_file(dir.path());
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("m{i}"))).collect();
    for out in &runs {
        let o = lskd(&["matrix", "--config", s(&cfg_path), "--seeds", "2", "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let expected = 2 * cfg.teacher_alphas().len() * (1 + cfg.distill_settings().len());
    let summary: toml::Table = std::fs::read_to_string(runs[0].join("summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["cells_ok"].as_integer(), Some(expected as i64));
    let cells = walk(&runs[0].join("cells")).into_iter().filter(|p| p.ends_with("cell.toml")).count();
    assert_eq!(cells, expected);

    let a = Manifest::load(&runs[0]).unwrap();
    let b = Manifest::load(&runs[1]).unwrap();
    assert!(!a.files.is_empty());
    assert_eq!(a.files, b.files);
    assert_eq!(a.config_hash, b.config_hash);

    let o = lskd(&["report", "--dir", s(&runs[0])]);
    assert!(o.status.success());
    let printed: toml::Table = String::from_utf8(o.stdout).unwrap().parse().unwrap();
    assert_eq!(printed, summary);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn single_run_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config_file(dir.path());
    let d = |sub: &str| dir.path().join(sub);

    let o = lskd(&["train", "--config", s(&cfg), "--alpha", "0.1", "--out", s(&d("train"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = d("train").join("teacher.ckpt");
    for f in ["teacher.csv", "teacher_probs.csv", "teacher_stability.toml", "points.csv", "geometry.svg"] {
        assert!(d("train").join(f).is_file(), "missing {f}");
    }

    let o = lskd(&["evaluate", "--config", s(&cfg), "--model", s(&ckpt), "--topk", "1,2", "--out", s(&d("eval"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: toml::Table = std::fs::read_to_string(d("eval").join("evaluation.toml")).unwrap().parse().unwrap();
    let top1 = eval["top1"].as_float().unwrap();
    let top2 = eval["top2"].as_float().unwrap();
    assert!(top2 >= top1 && top1 > 0.25);

    let o = lskd(&[
        "distill", "--config", s(&cfg), "--teacher", s(&ckpt), "--lambda", "0.5", "--temperature", "2",
        "--out", s(&d("distill")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d("distill").join("student.ckpt").is_file());

    let o = lskd(&["geometry", "--config", s(&cfg), "--model", s(&ckpt), "--out", s(&d("geo"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("d_c_full="));

    let o = lskd(&[
        "metrics", "--probs", s(&d("train").join("teacher_probs.csv")), "--std-convention", "population",
        "--out", s(&d("metrics")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(d("metrics").join("stability.toml")).unwrap();
    let report: toml::Table = text.parse().unwrap();
    assert!(report.contains_key("stability_eq2"), "{text}");
}

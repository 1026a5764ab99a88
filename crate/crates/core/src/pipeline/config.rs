//! Experiment configuration, one TOML file per experiment.
//!
//! ```toml
//! name = "desk-default"
//! seeds = [0, 1, 2]
//!
//! [data]
//! val_fraction = 0.2
//! # curate_classes = 10          # keep a random subset of classes
//! [data.clusters]                 # or: file = "dataset.csv"
//! num_classes = 10
//! dim = 32
//! sigma = 1.0
//! similar_pair = [0, 1]
//! delta_near = 2.0
//! delta_far = 8.0
//! n_per_class = 200
//! # [data.long_tail]              # Pareto resampling of the training split
//! # pareto_power = 6.0
//! # max_per_class = 160
//! # min_per_class = 5
//!
//! [teacher]
//! hidden = [128, 128]
//! activation = "relu"
//! alpha = 0.1
//! [teacher.train]
//! epochs = 30
//! batch_size = 64
//! learning_rate = 0.05
//! lr_decay_epochs = [10, 20]
//! momentum = 0.9
//! weight_decay = 5e-4
//!
//! [student]
//! hidden = [64]
//! [student.train]
//! epochs = 60
//! ...
//!
//! [distill]
//! lambda = 0.0
//! temperature = 1.0
//!
//! [matrix]
//! teacher_alphas = [0.0, 0.1]
//! settings = [{ lambda = 0.0, temperature = 1.0 }]
//!
//! [analysis]
//! topk = 3
//! std_convention = "sample"
//! stability_split = "val"         # geometry always uses the training split
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{ClusterSpec, LongTailSpec};
use crate::error::{LabError, Result};
use crate::gradcore::{Activation, NetworkSpec, TrainConfig};
use crate::labels::{check_alpha, DistillConfig};
use crate::metrics::StdConvention;

/// Label-smoothing coefficient used wherever smoothing is switched on.
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub clusters: Option<ClusterSpec>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub long_tail: Option<LongTailSpec>,
    #[serde(default)]
    pub curate_classes: Option<usize>,
}

fn default_val_fraction() -> f64 {
    0.2
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            clusters: Some(ClusterSpec::default()),
            file: None,
            val_fraction: default_val_fraction(),
            long_tail: None,
            curate_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Build a binary MLP (sign activations, binarized inner weights).
    #[serde(default)]
    pub binary: bool,
    pub train: TrainConfig,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl NetConfig {
    pub fn network_spec(&self, input_dim: usize, num_classes: usize) -> Result<NetworkSpec> {
        if self.binary {
            NetworkSpec::binary_mlp(input_dim, &self.hidden, num_classes)
        } else {
            NetworkSpec::mlp(input_dim, &self.hidden, num_classes, self.activation)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    #[serde(flatten)]
    pub net: NetConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Teacher smoothing coefficients to sweep; defaults to `[0, teacher.alpha]`.
    #[serde(default)]
    pub teacher_alphas: Vec<f64>,
    /// Distillation settings to sweep; defaults to `[distill]`.
    #[serde(default)]
    pub settings: Vec<DistillConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_topk")]
    pub topk: usize,
    #[serde(default)]
    pub std_convention: StdConvention,
    /// Split whose teacher outputs feed the stability metrics and class-mean profile.
    #[serde(default = "default_stability_split")]
    pub stability_split: Split,
    /// Third template for the geometry plane; defaults to the first class outside the pair.
    #[serde(default)]
    pub geometry_reference: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
}

fn default_stability_split() -> Split {
    Split::Val
}

fn default_topk() -> usize {
    3
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            topk: default_topk(),
            std_convention: StdConvention::default(),
            stability_split: default_stability_split(),
            geometry_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub student: NetConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub matrix: MatrixConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    /// The built-in desk-scale experiment on the default cluster geometry.
    pub fn desk_default() -> Self {
        let teacher_epochs = 30;
        let student_epochs = 60;
        Self {
            name: "desk-default".into(),
            seeds: (0..10).collect(),
            data: DataConfig::default(),
            teacher: TeacherConfig {
                net: NetConfig {
                    hidden: vec![128, 128],
                    activation: Activation::Relu,
                    binary: false,
                    train: TrainConfig {
                        epochs: teacher_epochs,
                        batch_size: 64,
                        learning_rate: 0.05,
                        lr_decay_epochs: TrainConfig::scaled_milestones(
                            teacher_epochs,
                            &[1.0 / 3.0, 2.0 / 3.0],
                        ),
                        lr_decay_factor: 0.1,
                        momentum: 0.9,
                        weight_decay: 5e-4,
                        seed: 0,
                    },
                },
                alpha: DEFAULT_ALPHA,
            },
            student: NetConfig {
                hidden: vec![64],
                activation: Activation::Relu,
                binary: false,
                train: TrainConfig {
                    epochs: student_epochs,
                    batch_size: 64,
                    learning_rate: 0.05,
                    lr_decay_epochs: TrainConfig::scaled_milestones(student_epochs, &[0.4, 0.8]),
                    lr_decay_factor: 0.1,
                    momentum: 0.9,
                    weight_decay: 5e-4,
                    seed: 0,
                },
            },
            distill: DistillConfig::default(),
            matrix: MatrixConfig {
                teacher_alphas: vec![0.0, DEFAULT_ALPHA],
                settings: vec![DistillConfig::default()],
            },
            analysis: AnalysisConfig::default(),
        }
    }

    /// Long-tail study: a harder member of the default family (far classes at
    /// 4σ, half of every class held out for a balanced validation set), with
    /// the training split optionally resampled to a Pareto(6) profile from 200
    /// down to 5 examples per class.
    pub fn long_tail_study(long_tail: bool) -> Self {
        let mut cfg = Self::desk_default();
        cfg.name = if long_tail { "long-tail" } else { "long-tail-balanced" }.into();
        cfg.data = DataConfig {
            clusters: Some(ClusterSpec {
                delta_far: 4.0,
                n_per_class: 400,
                ..ClusterSpec::default()
            }),
            val_fraction: 0.5,
            long_tail: long_tail.then_some(LongTailSpec {
                pareto_power: 6.0,
                max_per_class: 200,
                min_per_class: 5,
                seed: 0,
            }),
            ..DataConfig::default()
        };
        cfg
    }

    /// Class-count study: 50 classes from the same harder family, or a curated
    /// subset of `curated` of them.
    pub fn class_count_study(curated: Option<usize>) -> Self {
        let mut cfg = Self::desk_default();
        cfg.name = match curated {
            Some(k) => format!("classes-{k}-of-50"),
            None => "classes-50".into(),
        };
        cfg.data = DataConfig {
            clusters: Some(ClusterSpec {
                num_classes: 50,
                dim: 64,
                delta_far: 4.0,
                n_per_class: 200,
                ..ClusterSpec::default()
            }),
            val_fraction: 0.5,
            curate_classes: curated,
            ..DataConfig::default()
        };
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| LabError::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_toml(&text)?;
        // relative dataset paths resolve against the config file's directory
        if let (Some(file), Some(dir)) = (cfg.data.file.as_mut(), path.parent()) {
            if file.is_relative() {
                *file = dir.join(&*file);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(format!("cannot render config: {e}")))
    }

    pub fn teacher_alphas(&self) -> Vec<f64> {
        if self.matrix.teacher_alphas.is_empty() {
            if self.teacher.alpha == 0.0 {
                vec![0.0]
            } else {
                vec![0.0, self.teacher.alpha]
            }
        } else {
            self.matrix.teacher_alphas.clone()
        }
    }

    pub fn distill_settings(&self) -> Vec<DistillConfig> {
        if self.matrix.settings.is_empty() {
            vec![self.distill]
        } else {
            self.matrix.settings.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LabError::Config("seeds must not be empty".into()));
        }
        check_alpha(self.teacher.alpha)?;
        for &a in &self.matrix.teacher_alphas {
            check_alpha(a)?;
        }
        self.distill.validate()?;
        for s in &self.matrix.settings {
            s.validate()?;
        }
        self.teacher.net.train.validate()?;
        self.student.train.validate()?;
        match (&self.data.clusters, &self.data.file) {
            (Some(c), None) => c.validate()?,
            (None, Some(_)) => {}
            _ => {
                return Err(LabError::Config(
                    "data needs exactly one of [data.clusters] or data.file".into(),
                ))
            }
        }
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return Err(LabError::InvalidCoefficient(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.data.val_fraction
            )));
        }
        if let Some(lt) = &self.data.long_tail {
            lt.validate()?;
        }
        if self.analysis.topk == 0 {
            return Err(LabError::Config("analysis.topk must be at least 1".into()));
        }
        if self.teacher.net.hidden.is_empty() || self.student.hidden.is_empty() {
            return Err(LabError::Spec(
                "teacher and student need at least one hidden layer".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::desk_default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn bad_alpha_is_invalid_coefficient() {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.teacher.alpha = 1.2;
        let text = cfg.to_toml().unwrap();
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(err.kind(), "invalid-coefficient");
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"
            seeds = [3]
            [teacher]
            hidden = [16]
            [teacher.train]
            epochs = 2
            batch_size = 8
            learning_rate = 0.1
            [student]
            hidden = [8]
            [student.train]
            epochs = 2
            batch_size = 8
            learning_rate = 0.1
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.teacher.alpha, 0.1);
        assert_eq!(cfg.teacher_alphas(), vec![0.0, 0.1]);
        assert_eq!(cfg.distill_settings(), vec![DistillConfig::default()]);
        assert_eq!(cfg.data.clusters, Some(ClusterSpec::default()));
    }

    #[test]
    fn study_presets_validate() {
        for cfg in [
            ExperimentConfig::long_tail_study(true),
            ExperimentConfig::long_tail_study(false),
            ExperimentConfig::class_count_study(None),
            ExperimentConfig::class_count_study(Some(10)),
        ] {
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
    }
}

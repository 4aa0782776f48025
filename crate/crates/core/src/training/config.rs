use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augmentation::{validate_disjointness, B1Config, B2Config};
use crate::data::{DatasetSpec, LoadOptions, DEFAULT_SYNTHETIC_TEST, DEFAULT_SYNTHETIC_TRAIN};
use crate::error::{Error, Result};
use crate::evaluation::LinearEvalConfig;
use crate::geometry::TransformMode;
use crate::model::{BundleSpec, HeadInput, HeadSpec, ModelConfig, Placement};
use crate::nn::{OptimizerConfig, OptimizerKind};
use crate::objectives::RegressionLoss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Simclr,
    Byol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

/// Which transformation-regression module is attached, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    None,
    #[default]
    Affine,
    Homography,
    Rotation,
    Translation,
    Scale,
    Shear,
}

impl ModuleKind {
    pub fn mode(self) -> Option<TransformMode> {
        match self {
            ModuleKind::None => None,
            ModuleKind::Affine => Some(TransformMode::Affine),
            ModuleKind::Homography => Some(TransformMode::Homography),
            ModuleKind::Rotation => Some(TransformMode::Rotation),
            ModuleKind::Translation => Some(TransformMode::Translation),
            ModuleKind::Scale => Some(TransformMode::Scale),
            ModuleKind::Shear => Some(TransformMode::Shear),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// `h(l1 - l1')` regresses the transformation parameters.
    #[default]
    Regression,
    /// Minimizes the distance between `f(x1)` and `f(x1')` instead.
    Invariant,
    /// `h([l1; l1'])` regresses the parameters.
    Concat,
}

/// Network that embeds `x1'` in BYOL runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSource {
    #[default]
    Online,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    /// Seed of procedural datasets (independent of the run seed).
    pub seed: u64,
    pub download: bool,
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            root: self.root.clone(),
            download: self.download,
            train_size: self.train_size,
            test_size: self.test_size,
            seed: self.seed,
            sources: None,
        }
    }
}

/// Full declarative description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub preset: Preset,
    pub method: Method,
    pub module: ModuleKind,
    pub loss_variant: LossVariant,
    pub placement: Placement,
    pub two_modules: bool,
    pub regression_loss: RegressionLoss,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub temperature: f64,
    pub tau: f64,
    pub lambda: f64,
    /// BYOL: average the loss over both view orderings.
    pub symmetric: bool,
    /// BYOL: network that embeds `x1'` for the regression stream.
    pub head_source: LatentSource,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub precision: Precision,
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
    pub b1: B1Config,
    pub b2: B2Config,
    pub data: DataConfig,
    pub eval: LinearEvalConfig,
}

impl ExperimentConfig {
    /// Defaults for a preset/method/module combination.
    pub fn preset_defaults(preset: Preset, method: Method, module: ModuleKind) -> Self {
        let optimizer = match method {
            Method::Simclr => OptimizerConfig { kind: OptimizerKind::Adam, lr: 3e-4, weight_decay: 1e-6, ..Default::default() },
            Method::Byol => OptimizerConfig {
                kind: OptimizerKind::Sgd,
                lr: 0.03,
                momentum: 0.9,
                weight_decay: 4e-4,
                ..Default::default()
            },
        };
        let b2 = B2Config::with_mode(module.mode().unwrap_or(TransformMode::Affine));
        let (batch_size, epochs, warmup_epochs, model, eval, data) = match preset {
            Preset::Desk => (
                64,
                20,
                2,
                ModelConfig::desk(),
                LinearEvalConfig::desk(),
                DataConfig {
                    dataset: "synthetic-shapes".into(),
                    root: None,
                    train_size: Some(DEFAULT_SYNTHETIC_TRAIN),
                    test_size: Some(DEFAULT_SYNTHETIC_TEST),
                    seed: 7,
                    download: false,
                },
            ),
            Preset::Paper => (
                256,
                100,
                10,
                ModelConfig::paper(),
                LinearEvalConfig::paper(),
                DataConfig {
                    dataset: "cifar10".into(),
                    root: None,
                    train_size: None,
                    test_size: None,
                    seed: 7,
                    download: false,
                },
            ),
        };
        Self {
            name: "run".into(),
            preset,
            method,
            module,
            loss_variant: LossVariant::Regression,
            placement: Placement::OnF,
            two_modules: false,
            regression_loss: RegressionLoss::Mse,
            batch_size,
            epochs,
            warmup_epochs,
            temperature: 0.5,
            tau: 0.99,
            lambda: 1.0,
            symmetric: true,
            head_source: LatentSource::Online,
            checkpoint_every: 10,
            seed: 0,
            precision: Precision::F32,
            optimizer,
            model,
            b1: B1Config::default(),
            b2,
            data,
            eval,
        }
    }

    pub fn desk(method: Method, module: ModuleKind) -> Self {
        Self::preset_defaults(Preset::Desk, method, module)
    }

    /// Builds a config from optional file text and `key=value` overrides.
    /// Precedence: overrides, then file, then the preset defaults selected
    /// by the effective `preset`, `method` and `module`.
    pub fn resolve(file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let file_table = match file {
            Some(text) => toml::from_str::<toml::Table>(text).map_err(|e| Error::Config(format!("config parse: {e}")))?,
            None => toml::Table::new(),
        };
        let overrides = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
        let pick = |key: &str| -> Option<toml::Value> {
            overrides.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.clone()).or_else(|| file_table.get(key).cloned())
        };
        let preset: Preset = pick("preset").map(|v| v.try_into()).transpose().map_err(cfg_err)?.unwrap_or_default();
        let method: Method = pick("method").map(|v| v.try_into()).transpose().map_err(cfg_err)?.unwrap_or_default();
        let module: ModuleKind = pick("module").map(|v| v.try_into()).transpose().map_err(cfg_err)?.unwrap_or_default();

        let defaults = Self::preset_defaults(preset, method, module);
        let mut merged = toml::Value::try_from(&defaults).map_err(cfg_err)?;
        merge(&mut merged, toml::Value::Table(file_table));
        for (path, value) in overrides {
            set_path(&mut merged, &path, value)?;
        }
        let cfg: Self = merged.try_into().map_err(cfg_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(cfg_err)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.module == ModuleKind::None {
            if self.loss_variant != LossVariant::Regression {
                return err(format!("loss_variant = {:?} requires a module (module = none)", self.loss_variant).to_lowercase());
            }
            if self.two_modules {
                return err("two_modules requires a module (module = none)".into());
            }
            if self.placement != Placement::OnF {
                return err("placement = on_g requires a module (module = none)".into());
            }
        }
        if let Some(mode) = self.module.mode() {
            if self.b2.mode != mode {
                return err(format!("b2.mode = {} conflicts with module = {mode}", self.b2.mode));
            }
        }
        if self.head_source == LatentSource::Target && self.method != Method::Byol {
            return err("head_source = target is only meaningful for byol".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return err("epochs must be positive".into());
        }
        if self.warmup_epochs >= self.epochs {
            return err(format!("warmup_epochs ({}) must be below epochs ({})", self.warmup_epochs, self.epochs));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return err("temperature must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return err("tau must lie in [0, 1]".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return err("lambda must be finite and non-negative".into());
        }
        if self.checkpoint_every == 0 {
            return err("checkpoint_every must be positive".into());
        }
        self.optimizer.validate()?;
        self.model.validate()?;
        self.b1.validate()?;
        self.b2.validate()?;
        validate_disjointness(&self.b1, &self.b2)?;
        self.data.dataset.parse::<DatasetSpec>()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn bundle_spec(&self) -> BundleSpec {
        let head = match (self.module.mode(), self.loss_variant) {
            (Some(mode), LossVariant::Regression | LossVariant::Concat) => Some(HeadSpec {
                mode,
                input: if self.loss_variant == LossVariant::Concat { HeadInput::Concat } else { HeadInput::Difference },
                placement: self.placement,
                two_modules: self.two_modules,
            }),
            _ => None,
        };
        BundleSpec { in_channels: 3, model: self.model.clone(), head, byol: self.method == Method::Byol }
    }

    /// True when a transformed view `x1'` is needed.
    pub fn uses_module(&self) -> bool {
        self.module != ModuleKind::None
    }
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Splits `a.b.c=value`; the value is read as a TOML literal, or taken as
/// a bare string when it is not one.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{k}`")));
    }
    let v = v.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

/// Reads a value at a dotted path of the serialized config.
pub fn get_path(cfg: &ExperimentConfig, path: &str) -> Result<toml::Value> {
    let mut cur = toml::Value::try_from(cfg).map_err(cfg_err)?;
    for part in path.split('.') {
        cur = cur
            .as_table_mut()
            .and_then(|t| t.remove(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?;
    }
    Ok(cur)
}

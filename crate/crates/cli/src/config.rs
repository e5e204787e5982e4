//! `key = value` run configuration for `slimconv train`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use slimconv::augment::{AugmentKind, AugmentOp};
use slimconv::train::{MixupDelta, TrainConfig};
use slimconv::zoo::{Arch, BuildOptions};

/// Baseline augmentations toggled by name; cutout has its own keys.
const BASELINE_AUGMENTATIONS: [&str; 7] =
    ["hflip", "vflip", "rotation", "gaussian_blur", "shift_scale_rotate", "random_crop", "brightness_contrast"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: Arch,
    pub blurpool: bool,
    pub se: bool,
    pub se_reduction: usize,
    pub swa: bool,
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub label_smoothing: bool,
    pub smoothing_alpha: f64,
    pub cutout: bool,
    pub cutout_size: usize,
    /// Toggles for [`BASELINE_AUGMENTATIONS`], in that order.
    pub augment: [bool; 7],
    pub augment_probability: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub eval_fraction: f64,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            arch: Arch::Custom590Dw,
            blurpool: false,
            se: false,
            se_reduction: slimconv::zoo::DEFAULT_SE_REDUCTION,
            swa: false,
            mixup: false,
            mixup_alpha: 0.2,
            label_smoothing: false,
            smoothing_alpha: slimconv::train::DEFAULT_LABEL_SMOOTHING,
            cutout: false,
            cutout_size: 5,
            augment: [false; 7],
            augment_probability: 0.5,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            min_learning_rate: t.min_learning_rate,
            momentum: t.momentum,
            grad_clip: t.grad_clip,
            target_accuracy: None,
            eval_fraction: 0.2,
            seed: t.seed,
            data: None,
            out: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{key}` expects {what}, got `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{key}` expects true or false, got `{value}`")),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>, String> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value, "a number or `none`").map(Some)
    }
}

fn fmt_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line: Some(i + 1), message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if let Some(i) = BASELINE_AUGMENTATIONS.iter().position(|&n| n == key) {
            self.augment[i] = parse_bool(key, value)?;
            return Ok(());
        }
        match key {
            "arch" => self.arch = value.parse().map_err(|e: slimconv::Error| e.to_string())?,
            "blurpool" => self.blurpool = parse_bool(key, value)?,
            "se" => self.se = parse_bool(key, value)?,
            "se_reduction" => self.se_reduction = parse(key, value, "a positive integer")?,
            "swa" => self.swa = parse_bool(key, value)?,
            "mixup" => self.mixup = parse_bool(key, value)?,
            "mixup_alpha" => self.mixup_alpha = parse(key, value, "a number")?,
            "label_smoothing" => self.label_smoothing = parse_bool(key, value)?,
            "smoothing_alpha" => self.smoothing_alpha = parse(key, value, "a number")?,
            "cutout" => self.cutout = parse_bool(key, value)?,
            "cutout_size" => self.cutout_size = parse(key, value, "a positive integer")?,
            "augment_probability" => self.augment_probability = parse(key, value, "a number")?,
            "epochs" => self.epochs = parse(key, value, "an integer")?,
            "batch_size" => self.batch_size = parse(key, value, "a positive integer")?,
            "learning_rate" => self.learning_rate = parse(key, value, "a number")?,
            "min_learning_rate" => self.min_learning_rate = parse(key, value, "a number")?,
            "momentum" => self.momentum = parse(key, value, "a number")?,
            "grad_clip" => self.grad_clip = parse_optional(key, value)?,
            "target_accuracy" => self.target_accuracy = parse_optional(key, value)?,
            "eval_fraction" => self.eval_fraction = parse(key, value, "a number")?,
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// The full effective configuration in the same `key = value` syntax.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("arch", self.arch.to_string());
        kv("blurpool", self.blurpool.to_string());
        kv("se", self.se.to_string());
        kv("se_reduction", self.se_reduction.to_string());
        kv("swa", self.swa.to_string());
        kv("mixup", self.mixup.to_string());
        kv("mixup_alpha", self.mixup_alpha.to_string());
        kv("label_smoothing", self.label_smoothing.to_string());
        kv("smoothing_alpha", self.smoothing_alpha.to_string());
        kv("cutout", self.cutout.to_string());
        kv("cutout_size", self.cutout_size.to_string());
        for (name, on) in BASELINE_AUGMENTATIONS.iter().zip(self.augment) {
            kv(name, on.to_string());
        }
        kv("augment_probability", self.augment_probability.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("min_learning_rate", self.min_learning_rate.to_string());
        kv("momentum", self.momentum.to_string());
        kv("grad_clip", fmt_optional(self.grad_clip));
        kv("target_accuracy", fmt_optional(self.target_accuracy));
        kv("eval_fraction", self.eval_fraction.to_string());
        kv("seed", self.seed.to_string());
        kv("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv("out", self.out.display().to_string());
        out
    }

    pub fn build_options(&self, input_size: usize, num_classes: usize) -> BuildOptions {
        BuildOptions { se_reduction: self.se_reduction, ..BuildOptions::default() }
            .with_blurpool(self.blurpool)
            .with_squeeze_excite(self.se)
            .with_input_size(input_size)
            .with_classes(num_classes)
    }

    /// Translates to the engine's training configuration, validating ranges.
    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let err = |message: String| ConfigError { line: None, message };
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(err(format!("eval_fraction must be in [0, 1), got {}", self.eval_fraction)));
        }
        let mut augment = Vec::new();
        for (name, on) in BASELINE_AUGMENTATIONS.iter().zip(self.augment) {
            if on {
                let kind: AugmentKind = name.parse().map_err(|e: slimconv::Error| err(e.to_string()))?;
                augment.push(AugmentOp::new(kind, self.augment_probability).map_err(|e| err(e.to_string()))?);
            }
        }
        if self.cutout {
            let op = AugmentOp::new(AugmentKind::Cutout { size: self.cutout_size }, self.augment_probability);
            augment.push(op.map_err(|e| err(e.to_string()))?);
        }
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            min_learning_rate: self.min_learning_rate,
            momentum: self.momentum,
            grad_clip: self.grad_clip,
            label_smoothing: self.label_smoothing.then_some(self.smoothing_alpha),
            mixup: self.mixup.then_some(MixupDelta::Beta { a: self.mixup_alpha, b: self.mixup_alpha }),
            swa: self.swa,
            augment,
            seed: self.seed,
            target_train_accuracy: self.target_accuracy,
        };
        cfg.validate().map_err(|e| err(e.to_string()))?;
        Ok(cfg)
    }
}

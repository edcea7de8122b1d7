use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::ProcShapesConfig;
use crate::error::{Error, Result};
use crate::eval::{LogisticConfig, ProbeConfig, ProbeKind};
use crate::regimes::{MimView, MomentumSchedule, Regime, RegimeConfig, StagePlan, STAGE_LR_GRID};
use crate::vit::ViTConfig;

/// Environment variable overriding `out_dir`.
pub const OUT_DIR_ENV: &str = "GRAFTLAB_OUT";

/// File name of the resolved configuration inside a run directory.
pub const CONFIG_FILE: &str = "config.txt";

/// Settings of the trained probes (10% few-shot, fine-tuning, partial and
/// block-feature probes).
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub layer_decay: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub warmup_frac: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            base_lr: 3e-3,
            layer_decay: 0.6,
            batch_size: 32,
            weight_decay: 0.05,
            warmup_frac: 0.1,
        }
    }
}

/// Which representation diagnostics a run emits.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    /// Batches per gradient-conflict measurement in joint phases (0 = off).
    pub conflict_batches: usize,
    pub vic: bool,
    pub attn: bool,
    /// Evaluation images used by the VIC and attention diagnostics.
    pub samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            conflict_batches: 8,
            vic: true,
            attn: true,
            samples: 128,
        }
    }
}

/// Settings of the stage learning-rate grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub values: Vec<f64>,
    /// Also fine-tune every cell.
    pub finetune: bool,
    /// Cells evaluated concurrently.
    pub workers: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            values: STAGE_LR_GRID.to_vec(),
            finetune: false,
            workers: 1,
        }
    }
}

/// Every setting of a run, serialized as flat dotted `key=value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub vit: ViTConfig,
    /// Dataset; its image size follows `vit.image_size`.
    pub data: ProcShapesConfig,
    /// Pre-training; its seed and conflict batches follow `seed` and
    /// `diag.conflict_batches`.
    pub train: RegimeConfig,
    pub probes: Vec<ProbeKind>,
    pub logistic: LogisticConfig,
    pub finetune: FinetuneConfig,
    pub diag: DiagnosticsConfig,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let vit = ViTConfig::default();
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: ProcShapesConfig {
                n_train: 1000,
                n_eval: 500,
                image_size: vit.image_size,
                ..ProcShapesConfig::default()
            },
            vit,
            train: RegimeConfig {
                mim_epochs: 4,
                cl_epochs: 2,
                mtl_epochs: 2,
                ..RegimeConfig::default()
            },
            probes: ProbeKind::SUITE.to_vec(),
            logistic: LogisticConfig::default(),
            finetune: FinetuneConfig::default(),
            diag: DiagnosticsConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfigValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    parse(key, value, "true or false")
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    parse(key, value, "a non-negative integer")
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value, "a number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidConfigValue {
            key: key.into(),
            value: value.into(),
            expected: "a finite number".into(),
        })
    }
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| item(key, v.trim())).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn mim_view_name(v: MimView) -> &'static str {
    match v {
        MimView::ThirdMinimal => "third_minimal",
        MimView::ReuseView1 => "reuse_view1",
    }
}

fn momentum_schedule_name(s: MomentumSchedule) -> &'static str {
    match s {
        MomentumSchedule::Constant => "constant",
        MomentumSchedule::Cosine => "cosine",
    }
}

impl ExperimentConfig {
    /// Every key in file order.
    pub const KEYS: [&'static str; 52] = [
        "seed",
        "out_dir",
        "regime",
        "vit.image_size",
        "vit.patch_size",
        "vit.channels",
        "vit.embed_dim",
        "vit.depth",
        "vit.heads",
        "vit.mlp_ratio",
        "vit.decoder_dim",
        "vit.decoder_depth",
        "vit.proj_dim",
        "vit.use_class_token",
        "data.n_classes",
        "data.n_train",
        "data.n_eval",
        "data.seed",
        "train.mim_epochs",
        "train.cl_epochs",
        "train.mtl_epochs",
        "train.batch_size",
        "train.warmup_epochs",
        "train.cosine_decay",
        "train.base_lr",
        "train.lr_scale",
        "train.weight_decay",
        "mim.mask_ratio",
        "mim.norm_target",
        "mim.view",
        "cl.temperature",
        "cl.momentum",
        "cl.momentum_schedule",
        "graft.stage_lr",
        "graft.l2_anchor_weight",
        "probe.kinds",
        "probe.l2",
        "probe.tolerance",
        "probe.max_iter",
        "finetune.epochs",
        "finetune.base_lr",
        "finetune.layer_decay",
        "finetune.batch_size",
        "finetune.weight_decay",
        "finetune.warmup_frac",
        "diag.conflict_batches",
        "diag.vic",
        "diag.attn",
        "diag.samples",
        "grid.values",
        "grid.finetune",
        "grid.workers",
    ];

    /// Current value of `key` in its textual form.
    pub fn get(&self, key: &str) -> Result<String> {
        let (v, d, t) = (&self.vit, &self.data, &self.train);
        Ok(match key {
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "regime" => t.regime.to_string(),
            "vit.image_size" => v.image_size.to_string(),
            "vit.patch_size" => v.patch_size.to_string(),
            "vit.channels" => v.channels.to_string(),
            "vit.embed_dim" => v.embed_dim.to_string(),
            "vit.depth" => v.depth.to_string(),
            "vit.heads" => v.heads.to_string(),
            "vit.mlp_ratio" => v.mlp_ratio.to_string(),
            "vit.decoder_dim" => v.decoder_dim.to_string(),
            "vit.decoder_depth" => v.decoder_depth.to_string(),
            "vit.proj_dim" => v.proj_dim.to_string(),
            "vit.use_class_token" => v.use_class_token.to_string(),
            "data.n_classes" => d.n_classes.to_string(),
            "data.n_train" => d.n_train.to_string(),
            "data.n_eval" => d.n_eval.to_string(),
            "data.seed" => d.seed.to_string(),
            "train.mim_epochs" => t.mim_epochs.to_string(),
            "train.cl_epochs" => t.cl_epochs.to_string(),
            "train.mtl_epochs" => t.mtl_epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.warmup_epochs" => t.warmup_epochs.to_string(),
            "train.cosine_decay" => t.cosine_decay.to_string(),
            "train.base_lr" => t.base_lr.to_string(),
            "train.lr_scale" => t.lr_scale.to_string(),
            "train.weight_decay" => t.weight_decay.to_string(),
            "mim.mask_ratio" => t.mask_ratio.to_string(),
            "mim.norm_target" => t.norm_target.to_string(),
            "mim.view" => mim_view_name(t.mim_view).to_string(),
            "cl.temperature" => t.temperature.to_string(),
            "cl.momentum" => t.momentum.to_string(),
            "cl.momentum_schedule" => momentum_schedule_name(t.momentum_schedule).to_string(),
            "graft.stage_lr" => join(&t.stage_plan.base_lr),
            "graft.l2_anchor_weight" => t.l2_anchor_weight.to_string(),
            "probe.kinds" => join(&self.probes),
            "probe.l2" => self.logistic.l2.to_string(),
            "probe.tolerance" => self.logistic.tolerance.to_string(),
            "probe.max_iter" => self.logistic.max_iter.to_string(),
            "finetune.epochs" => self.finetune.epochs.to_string(),
            "finetune.base_lr" => self.finetune.base_lr.to_string(),
            "finetune.layer_decay" => self.finetune.layer_decay.to_string(),
            "finetune.batch_size" => self.finetune.batch_size.to_string(),
            "finetune.weight_decay" => self.finetune.weight_decay.to_string(),
            "finetune.warmup_frac" => self.finetune.warmup_frac.to_string(),
            "diag.conflict_batches" => self.diag.conflict_batches.to_string(),
            "diag.vic" => self.diag.vic.to_string(),
            "diag.attn" => self.diag.attn.to_string(),
            "diag.samples" => self.diag.samples.to_string(),
            "grid.values" => join(&self.grid.values),
            "grid.finetune" => self.grid.finetune.to_string(),
            "grid.workers" => self.grid.workers.to_string(),
            _ => return Err(Error::UnknownConfigKey(key.to_string())),
        })
    }

    /// Sets one key from its textual form. Cross-field checks happen in
    /// [`Self::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let (k, s) = (key, value);
        let u = || parse_usize(k, s);
        let f = || parse_f64(k, s);
        let b = || parse_bool(k, s);
        match key {
            "seed" => self.seed = parse(k, s, "an unsigned 64-bit integer")?,
            "out_dir" => self.out_dir = PathBuf::from(s),
            "regime" => {
                self.train.regime = s.parse().map_err(|_| Error::InvalidConfigValue {
                    key: k.into(),
                    value: s.into(),
                    expected: "mim, cl, mtl, layer_grafted or graft_{mim_cl|cl_mim}_{freeze|stage_lr}".into(),
                })?
            }
            "vit.image_size" => {
                self.vit.image_size = u()?;
                self.data.image_size = self.vit.image_size;
            }
            "vit.patch_size" => self.vit.patch_size = u()?,
            "vit.channels" => self.vit.channels = u()?,
            "vit.embed_dim" => self.vit.embed_dim = u()?,
            "vit.depth" => self.vit.depth = u()?,
            "vit.heads" => self.vit.heads = u()?,
            "vit.mlp_ratio" => self.vit.mlp_ratio = u()?,
            "vit.decoder_dim" => self.vit.decoder_dim = u()?,
            "vit.decoder_depth" => self.vit.decoder_depth = u()?,
            "vit.proj_dim" => self.vit.proj_dim = u()?,
            "vit.use_class_token" => self.vit.use_class_token = b()?,
            "data.n_classes" => self.data.n_classes = u()?,
            "data.n_train" => self.data.n_train = u()?,
            "data.n_eval" => self.data.n_eval = u()?,
            "data.seed" => self.data.seed = parse(k, s, "an unsigned 64-bit integer")?,
            "train.mim_epochs" => self.train.mim_epochs = u()?,
            "train.cl_epochs" => self.train.cl_epochs = u()?,
            "train.mtl_epochs" => self.train.mtl_epochs = u()?,
            "train.batch_size" => self.train.batch_size = u()?,
            "train.warmup_epochs" => self.train.warmup_epochs = f()?,
            "train.cosine_decay" => self.train.cosine_decay = b()?,
            "train.base_lr" => self.train.base_lr = f()?,
            "train.lr_scale" => self.train.lr_scale = f()?,
            "train.weight_decay" => self.train.weight_decay = f()?,
            "mim.mask_ratio" => self.train.mask_ratio = f()?,
            "mim.norm_target" => self.train.norm_target = b()?,
            "mim.view" => {
                self.train.mim_view = match s {
                    "third_minimal" => MimView::ThirdMinimal,
                    "reuse_view1" => MimView::ReuseView1,
                    _ => return Err(invalid(k, s, "third_minimal or reuse_view1")),
                }
            }
            "cl.temperature" => self.train.temperature = f()?,
            "cl.momentum" => self.train.momentum = f()?,
            "cl.momentum_schedule" => {
                self.train.momentum_schedule = match s {
                    "constant" => MomentumSchedule::Constant,
                    "cosine" => MomentumSchedule::Cosine,
                    _ => return Err(invalid(k, s, "constant or cosine")),
                }
            }
            "graft.stage_lr" => self.train.stage_plan = StagePlan { base_lr: parse_list(k, s, parse_f64)? },
            "graft.l2_anchor_weight" => self.train.l2_anchor_weight = f()?,
            "probe.kinds" => {
                self.probes = parse_list(k, s, |k, v| {
                    v.parse().map_err(|_| invalid(k, v, "probe names such as linear,fewshot_1pct,fewshot_10pct"))
                })?
            }
            "probe.l2" => self.logistic.l2 = f()?,
            "probe.tolerance" => self.logistic.tolerance = f()?,
            "probe.max_iter" => self.logistic.max_iter = u()?,
            "finetune.epochs" => self.finetune.epochs = u()?,
            "finetune.base_lr" => self.finetune.base_lr = f()?,
            "finetune.layer_decay" => self.finetune.layer_decay = f()?,
            "finetune.batch_size" => self.finetune.batch_size = u()?,
            "finetune.weight_decay" => self.finetune.weight_decay = f()?,
            "finetune.warmup_frac" => self.finetune.warmup_frac = f()?,
            "diag.conflict_batches" => self.diag.conflict_batches = u()?,
            "diag.vic" => self.diag.vic = b()?,
            "diag.attn" => self.diag.attn = b()?,
            "diag.samples" => self.diag.samples = u()?,
            "grid.values" => self.grid.values = parse_list(k, s, parse_f64)?,
            "grid.finetune" => self.grid.finetune = b()?,
            "grid.workers" => self.grid.workers = u()?,
            _ => return Err(Error::UnknownConfigKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and lines starting with `#`
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Every key with its resolved value, one `key=value` per line.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("listed keys are known")))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        self.data_config().validate()?;
        self.regime_config().validate()?;
        if self.data.n_classes > self.data.n_train {
            return Err(invalid("data.n_train", &self.data.n_train.to_string(), "at least data.n_classes"));
        }
        for kind in &self.probes {
            self.probe_config(*kind).validate(self.vit.depth)?;
        }
        if self.grid.values.is_empty() {
            return Err(invalid("grid.values", "", "a non-empty comma-separated list"));
        }
        if let Some(v) = self.grid.values.iter().find(|v| **v <= 0.0) {
            return Err(invalid("grid.values", &v.to_string(), "positive learning rates"));
        }
        if self.grid.workers == 0 {
            return Err(invalid("grid.workers", "0", "at least 1"));
        }
        if (self.diag.vic || self.diag.attn) && self.diag.samples < 2 {
            return Err(invalid("diag.samples", &self.diag.samples.to_string(), "at least 2"));
        }
        Ok(())
    }

    pub fn data_config(&self) -> ProcShapesConfig {
        ProcShapesConfig {
            image_size: self.vit.image_size,
            ..self.data.clone()
        }
    }

    pub fn regime_config(&self) -> RegimeConfig {
        RegimeConfig {
            seed: self.seed,
            conflict_batches: self.diag.conflict_batches,
            ..self.train.clone()
        }
    }

    /// Probe settings for `kind`; logistic probes ignore the trained-probe
    /// fields.
    pub fn probe_config(&self, kind: ProbeKind) -> ProbeConfig {
        let f = &self.finetune;
        ProbeConfig {
            kind,
            epochs: f.epochs,
            base_lr: f.base_lr,
            layer_decay: f.layer_decay,
            batch_size: f.batch_size,
            weight_decay: f.weight_decay,
            warmup_frac: f.warmup_frac,
            seed: self.seed,
            logistic: self.logistic.clone(),
        }
    }

    /// Identifier of this configuration's run in metrics files.
    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.train.regime, self.seed)
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        let mut c = self.clone();
        c.train.regime = regime;
        c
    }
}

fn invalid(key: &str, value: &str, expected: &str) -> Error {
    Error::InvalidConfigValue {
        key: key.into(),
        value: value.into(),
        expected: expected.into(),
    }
}

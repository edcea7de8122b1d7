use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::model::{build_views, Model, ViewNeeds, MOMENTUM_PREFIXES};
use super::momentum::{MomentumEncoder, MomentumSchedule};
use super::optim::{AdamW, AdamWConfig};
use super::schedule::LrSchedule;
use super::stage::StagePlan;
use super::l2_anchor_penalty;
use crate::checkpoint::Checkpoint;
use crate::data::ProcShapesConfig;
use crate::diagnostics::{grad_conflict, GradConflictRecord};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Element as _, NamedParamStore, Tensor};
use crate::vit::{DECODER, ENCODER, PREDICTOR, PROJECTOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    Mim,
    Cl,
    Mtl,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mim => "mim",
            Self::Cl => "cl",
            Self::Mtl => "mtl",
        }
    }

    fn uses_mim(&self) -> bool {
        matches!(self, Self::Mim | Self::Mtl)
    }

    fn uses_cl(&self) -> bool {
        matches!(self, Self::Cl | Self::Mtl)
    }

    /// Module prefixes freshly initialized when a phase starts.
    fn head_prefixes(&self) -> &'static [&'static str] {
        match self {
            Self::Mim => &[DECODER],
            Self::Cl => &[PROJECTOR, PREDICTOR],
            Self::Mtl => &[DECODER, PROJECTOR, PREDICTOR],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraftOrder {
    MimCl,
    ClMim,
}

impl GraftOrder {
    pub fn phases(&self) -> (Objective, Objective) {
        match self {
            Self::MimCl => (Objective::Mim, Objective::Cl),
            Self::ClMim => (Objective::Cl, Objective::Mim),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LowerMode {
    /// Lower stages keep their phase-1 weights.
    Freeze,
    /// Every stage trains at its own learning rate.
    StageLr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Mim,
    Cl,
    Mtl,
    Graft { order: GraftOrder, lower: LowerMode },
    LayerGrafted,
}

impl Regime {
    /// The six regimes compared by the suite.
    pub const SUITE: [Regime; 6] = [
        Regime::Mim,
        Regime::Cl,
        Regime::Mtl,
        Regime::Graft { order: GraftOrder::ClMim, lower: LowerMode::Freeze },
        Regime::Graft { order: GraftOrder::MimCl, lower: LowerMode::Freeze },
        Regime::LayerGrafted,
    ];

    /// Two-phase regimes as `(order, lower mode)`.
    pub fn graft(&self) -> Option<(GraftOrder, LowerMode)> {
        match *self {
            Self::Graft { order, lower } => Some((order, lower)),
            Self::LayerGrafted => Some((GraftOrder::MimCl, LowerMode::StageLr)),
            _ => None,
        }
    }

    /// Display name used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Mim => "MIM",
            Self::Cl => "CL",
            Self::Mtl => "MTL",
            Self::Graft { order: GraftOrder::ClMim, lower: LowerMode::Freeze } => "CL->MIM",
            Self::Graft { order: GraftOrder::MimCl, lower: LowerMode::Freeze } => "MIM->CL",
            Self::Graft { order: GraftOrder::ClMim, lower: LowerMode::StageLr } => "CL->MIM (stage LR)",
            Self::Graft { order: GraftOrder::MimCl, lower: LowerMode::StageLr } => "MIM->CL (stage LR)",
            Self::LayerGrafted => "LayerGrafted",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mim => write!(f, "mim"),
            Self::Cl => write!(f, "cl"),
            Self::Mtl => write!(f, "mtl"),
            Self::LayerGrafted => write!(f, "layer_grafted"),
            Self::Graft { order, lower } => {
                let o = match order {
                    GraftOrder::MimCl => "mim_cl",
                    GraftOrder::ClMim => "cl_mim",
                };
                let l = match lower {
                    LowerMode::Freeze => "freeze",
                    LowerMode::StageLr => "stage_lr",
                };
                write!(f, "graft_{o}_{l}")
            }
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// Accepts `mim`, `cl`, `mtl`, `layer_grafted` and
    /// `graft_{mim_cl|cl_mim}_{freeze|stage_lr}`.
    fn from_str(s: &str) -> Result<Self> {
        let r = match s {
            "mim" => Self::Mim,
            "cl" => Self::Cl,
            "mtl" => Self::Mtl,
            "layer_grafted" => Self::LayerGrafted,
            _ => {
                let rest = s
                    .strip_prefix("graft_")
                    .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))?;
                let (order, rest) = if let Some(r) = rest.strip_prefix("mim_cl_") {
                    (GraftOrder::MimCl, r)
                } else if let Some(r) = rest.strip_prefix("cl_mim_") {
                    (GraftOrder::ClMim, r)
                } else {
                    return Err(Error::Config(format!("unknown regime {s:?}")));
                };
                let lower = match rest {
                    "freeze" => LowerMode::Freeze,
                    "stage_lr" => LowerMode::StageLr,
                    _ => return Err(Error::Config(format!("unknown regime {s:?}"))),
                };
                Self::Graft { order, lower }
            }
        };
        Ok(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MimView {
    /// A third, minimally augmented view.
    ThirdMinimal,
    /// The first strong view.
    ReuseView1,
}

/// Settings shared by every pre-training regime.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub mim_epochs: usize,
    pub cl_epochs: usize,
    pub mtl_epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: f64,
    pub cosine_decay: bool,
    /// Base learning rate of single-objective and joint phases.
    pub base_lr: f64,
    /// Multiplier applied to every base learning rate.
    pub lr_scale: f64,
    pub weight_decay: f64,
    pub mask_ratio: f64,
    pub norm_target: bool,
    pub temperature: f64,
    pub momentum: f64,
    pub momentum_schedule: MomentumSchedule,
    pub mim_view: MimView,
    pub l2_anchor_weight: f64,
    pub stage_plan: StagePlan,
    /// Batches per gradient-conflict measurement in joint phases (0 = off).
    pub conflict_batches: usize,
    pub seed: u64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            regime: Regime::LayerGrafted,
            mim_epochs: 2,
            cl_epochs: 1,
            mtl_epochs: 1,
            batch_size: 32,
            warmup_epochs: 0.2,
            cosine_decay: true,
            base_lr: 1.5e-4,
            lr_scale: 10.0,
            weight_decay: 0.05,
            mask_ratio: 0.75,
            norm_target: true,
            temperature: 0.2,
            momentum: 0.99,
            momentum_schedule: MomentumSchedule::Constant,
            mim_view: MimView::ThirdMinimal,
            l2_anchor_weight: 0.0,
            stage_plan: StagePlan::default(),
            conflict_batches: 0,
            seed: 0,
        }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage_plan.validate()?;
        let bad = |k: &str, v: String| Err(Error::Config(format!("{k}: {v}")));
        if self.batch_size < 2 {
            return bad("train.batch_size", format!("{} < 2", self.batch_size));
        }
        if !(self.base_lr > 0.0 && self.lr_scale > 0.0) {
            return bad("train.base_lr", "learning rates must be positive".into());
        }
        if !(self.warmup_epochs >= 0.0) {
            return bad("train.warmup_epochs", format!("{}", self.warmup_epochs));
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad("mim.mask_ratio", format!("{}", self.mask_ratio));
        }
        if !(self.temperature > 0.0) {
            return bad("cl.temperature", format!("{}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad("cl.momentum", format!("{}", self.momentum));
        }
        if !(self.l2_anchor_weight >= 0.0) {
            return bad("graft.l2_anchor_weight", format!("{}", self.l2_anchor_weight));
        }
        Ok(())
    }

    fn epochs(&self, objective: Objective) -> usize {
        match objective {
            Objective::Mim => self.mim_epochs,
            Objective::Cl => self.cl_epochs,
            Objective::Mtl => self.mtl_epochs,
        }
    }
}

/// How a phase assigns learning rates.
#[derive(Clone, Debug, PartialEq)]
pub enum LrMode {
    /// One base rate for every parameter.
    Uniform(f64),
    /// Per-stage base rates.
    Staged(StagePlan),
    /// Only the last stage trains, at its base rate.
    FreezeLower(StagePlan),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan {
    pub name: String,
    pub objective: Objective,
    pub epochs: usize,
    pub lr: LrMode,
}

impl PhasePlan {
    /// Base learning rate of `path`; zero means frozen.
    pub fn base_lr(&self, path: &str, depth: usize) -> Result<f64> {
        match &self.lr {
            LrMode::Uniform(lr) => Ok(*lr),
            LrMode::Staged(plan) => Ok(plan.base_lr[plan.stage_of(path, depth)?]),
            LrMode::FreezeLower(plan) => {
                let s = plan.stage_of(path, depth)?;
                Ok(if s == plan.last() { plan.base_lr[s] } else { 0.0 })
            }
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub phase: String,
    pub epoch: usize,
    pub step: usize,
    pub loss_total: f64,
    pub loss_mim: Option<f64>,
    pub loss_cl: Option<f64>,
    /// Effective learning rate of each stage at this step.
    pub lr_stage: Vec<f64>,
}

pub enum TrainEvent<'a> {
    /// After the optimizer and momentum updates of a step.
    Step {
        row: &'a TrainLogRow,
        store: &'a NamedParamStore<f32>,
    },
    /// Gradient conflict measured at the end of an epoch of a joint phase.
    Conflict {
        phase: &'a str,
        epoch: usize,
        records: &'a [GradConflictRecord],
        skipped: usize,
    },
}

/// Losses of one step. `total` is `mim + cl` when both are present.
pub struct StepLosses<T: crate::tensor::Element> {
    pub total: Tensor<T>,
    pub mim: Option<Tensor<T>>,
    pub cl: Option<Tensor<T>>,
}

/// Forward pass of one step for `objective`.
pub fn step_losses<T: crate::tensor::Element>(
    model: &Model,
    cfg: &RegimeConfig,
    objective: Objective,
    store: &NamedParamStore<T>,
    shadow: Option<&NamedParamStore<T>>,
    views: &super::model::Views<T>,
) -> Result<StepLosses<T>> {
    let mim = if objective.uses_mim() {
        let images = match (objective, cfg.mim_view, &views.minimal, &views.strong) {
            (Objective::Mtl, MimView::ReuseView1, _, Some((a, _))) => a,
            (_, _, Some(m), _) => m,
            _ => return Err(Error::invalid("mtl_step", "reconstruction view missing")),
        };
        let masks = views
            .masks
            .as_ref()
            .ok_or_else(|| Error::invalid("mtl_step", "masks missing"))?;
        Some(model.mim_loss(store, images, masks, cfg.norm_target)?)
    } else {
        None
    };
    let cl = if objective.uses_cl() {
        let (a, b) = views
            .strong
            .as_ref()
            .ok_or_else(|| Error::invalid("mtl_step", "contrastive views missing"))?;
        let shadow = shadow.ok_or_else(|| Error::invalid("mtl_step", "momentum encoder missing"))?;
        Some(model.cl_loss(store, shadow, a, b, cfg.temperature)?)
    } else {
        None
    };
    let total = match (&mim, &cl) {
        (Some(m), Some(c)) => m.add(c)?,
        (Some(m), None) => m.clone(),
        (None, Some(c)) => c.clone(),
        (None, None) => unreachable!("every objective has a loss"),
    };
    Ok(StepLosses { total, mim, cl })
}

pub(crate) fn view_needs(cfg: &RegimeConfig, objective: Objective) -> ViewNeeds {
    ViewNeeds {
        strong_pair: objective.uses_cl() || (objective == Objective::Mtl && cfg.mim_view == MimView::ReuseView1),
        minimal: objective == Objective::Mim || (objective == Objective::Mtl && cfg.mim_view == MimView::ThirdMinimal),
        masks: objective.uses_mim(),
    }
}

const SHUFFLE_STREAM: u64 = 0x7368_7566;
const HEAD_STREAM: u64 = 0x6865_6164;
const ENCODER_STREAM: u64 = 0x656e_6364;
const CONFLICT_KEY_BASE: u64 = 1 << 48;

/// Seed of the encoder initialization shared by every regime.
pub fn encoder_init_seed(seed: u64) -> u64 {
    rng::derive(seed, &[ENCODER_STREAM])
}

/// Runs one phase from `init` (whose encoder weights are used; heads of
/// the phase's objective are freshly initialized) and returns the trained
/// encoder plus that phase's heads.
pub fn run_phase(
    model: &Model,
    cfg: &RegimeConfig,
    data: &ProcShapesConfig,
    plan: &PhasePlan,
    init: &Checkpoint<f32>,
    anchor: Option<&Checkpoint<f32>>,
    observer: &mut dyn FnMut(&TrainEvent<'_>),
) -> Result<Checkpoint<f32>> {
    cfg.validate()?;
    let depth = model.config.depth;
    let objective = plan.objective;
    let phase_seed = rng::derive(cfg.seed, &[rng::fnv1a(&plan.name)]);

    let enc = init.subset(&[ENCODER]);
    let expected: NamedParamStore<f32> = model.encoder.init_params(0)?;
    let frozen = |p: &str| plan.base_lr(p, depth).map(|lr| lr == 0.0);
    let mut store = enc.to_store_with(|p| !frozen(p).unwrap_or(false))?;
    expected.check_same_paths(&store)?;
    for p in store.paths() {
        plan.base_lr(p, depth)?;
    }
    let head_seed = rng::derive(phase_seed, &[HEAD_STREAM]);
    for prefix in objective.head_prefixes() {
        let fresh: NamedParamStore<f32> = match *prefix {
            DECODER => model.decoder.init_params(head_seed)?,
            PROJECTOR => model.heads.projector.init_params(head_seed)?,
            _ => model.heads.predictor.init_params(head_seed)?,
        };
        store.extend(fresh)?;
    }

    let anchor_prefixes: Vec<String> = match (&plan.lr, anchor) {
        (LrMode::Staged(sp) | LrMode::FreezeLower(sp), Some(_)) if cfg.l2_anchor_weight > 0.0 => {
            let stages = sp.block_stages(depth)?;
            let mut v = vec![format!("{ENCODER}.patch_embed")];
            if model.config.use_class_token {
                v.push(format!("{ENCODER}.cls_token"));
            }
            v.extend(
                (1..=depth)
                    .filter(|&b| stages[b - 1] < sp.last())
                    .map(crate::vit::ViTEncoder::block_prefix),
            );
            v
        }
        _ => Vec::new(),
    };

    let mut momentum = if objective.uses_cl() {
        Some(MomentumEncoder::new(&store, &MOMENTUM_PREFIXES, cfg.momentum)?)
    } else {
        None
    };
    let adam_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..if objective == Objective::Mim { AdamWConfig::for_mim() } else { AdamWConfig::default() }
    };
    let mut opt = AdamW::new(adam_cfg);

    let indices = data.train_indices();
    let steps_per_epoch = indices.len() / cfg.batch_size;
    let total = steps_per_epoch * plan.epochs;
    if total == 0 {
        return Err(Error::Config(format!(
            "phase {} has no steps ({} samples, batch {}, {} epochs)",
            plan.name,
            indices.len(),
            cfg.batch_size,
            plan.epochs
        )));
    }
    let warmup = ((cfg.warmup_epochs * steps_per_epoch as f64).round() as usize).min(total);
    let schedule = LrSchedule::new(total, warmup, cfg.cosine_decay)?;
    let base: HashMap<String, f64> = store
        .paths()
        .map(|p| Ok((p.to_string(), plan.base_lr(p, depth)?)))
        .collect::<Result<_>>()?;
    let stage_base: Vec<f64> = (0..cfg.stage_plan.n_stages())
        .map(|s| match &plan.lr {
            LrMode::Uniform(lr) => *lr,
            LrMode::Staged(sp) => sp.base_lr.get(s).copied().unwrap_or(0.0),
            LrMode::FreezeLower(sp) => {
                if s == sp.last() {
                    sp.base_lr[s]
                } else {
                    0.0
                }
            }
        })
        .collect();
    let needs = view_needs(cfg, objective);
    let n_patch = model.config.num_patches();
    let n_total = data.total() as u64;

    let mut step = 0usize;
    for epoch in 0..plan.epochs {
        let mut order = indices.clone();
        order.shuffle(&mut rng::stream(phase_seed, &[SHUFFLE_STREAM, epoch as u64]));
        for chunk in order.chunks_exact(cfg.batch_size) {
            let keys: Vec<u64> = chunk.iter().map(|&i| epoch as u64 * n_total + i as u64).collect();
            let views = build_views::<f32>(data, chunk, &keys, phase_seed, needs, cfg.mask_ratio, n_patch)?;
            let losses = step_losses(model, cfg, objective, &store, momentum.as_ref().map(|m| &m.shadow), &views)?;
            let loss = if anchor_prefixes.is_empty() {
                losses.total.clone()
            } else {
                let a = anchor.expect("anchor present");
                losses.total.add(&l2_anchor_penalty(&store, a, &anchor_prefixes, cfg.l2_anchor_weight)?)?
            };
            store.zero_grad();
            loss.backward()?;
            let factor = schedule.at(step, 1.0)? * cfg.lr_scale;
            let lr_of = |p: &str| base.get(p).map_or(0.0, |b| b * factor);
            opt.step(&mut store, &lr_of)?;
            if let Some(m) = momentum.as_mut() {
                let mv = cfg.momentum_schedule.at(cfg.momentum, step, total);
                m.update_with(&store, mv)?;
            }
            let row = TrainLogRow {
                phase: plan.name.clone(),
                epoch,
                step,
                loss_total: losses.total.item().as_f64(),
                loss_mim: losses.mim.as_ref().map(|t| t.item().as_f64()),
                loss_cl: losses.cl.as_ref().map(|t| t.item().as_f64()),
                lr_stage: stage_base.iter().map(|b| b * factor).collect(),
            };
            observer(&TrainEvent::Step { row: &row, store: &store });
            step += 1;
        }
        if objective == Objective::Mtl && cfg.conflict_batches > 0 {
            let shadow = &momentum.as_ref().expect("joint phase has a momentum encoder").shadow;
            let (records, skipped) = measure_conflict(model, cfg, data, &store, shadow, phase_seed)?;
            observer(&TrainEvent::Conflict { phase: &plan.name, epoch, records: &records, skipped });
        }
    }
    store.zero_grad();
    Ok(Checkpoint::from_store(&store))
}

/// Per-block cosine between reconstruction and contrastive gradients over
/// `cfg.conflict_batches` fixed batches.
pub fn measure_conflict(
    model: &Model,
    cfg: &RegimeConfig,
    data: &ProcShapesConfig,
    store: &NamedParamStore<f32>,
    shadow: &NamedParamStore<f32>,
    seed: u64,
) -> Result<(Vec<GradConflictRecord>, usize)> {
    let mut order = data.train_indices();
    order.shuffle(&mut rng::stream(seed, &[SHUFFLE_STREAM, u64::MAX]));
    let needs = ViewNeeds {
        strong_pair: true,
        minimal: cfg.mim_view == MimView::ThirdMinimal,
        masks: true,
    };
    let groups = model.encoder.block_groups.blocks.clone();
    let (mut records, mut skipped) = (Vec::new(), 0);
    for (b, chunk) in order.chunks_exact(cfg.batch_size).take(cfg.conflict_batches).enumerate() {
        let keys: Vec<u64> = chunk.iter().map(|&i| CONFLICT_KEY_BASE + i as u64).collect();
        let views = build_views::<f32>(data, chunk, &keys, seed, needs, cfg.mask_ratio, model.config.num_patches())?;
        let mim = || Ok(step_losses(model, cfg, Objective::Mim, store, None, &views)?.total);
        let cl = || Ok(step_losses(model, cfg, Objective::Cl, store, Some(shadow), &views)?.total);
        let out = grad_conflict(store, &groups, b, &mim, &cl)?;
        records.extend(out.records);
        skipped += out.skipped;
    }
    Ok((records, skipped))
}

/// Result of a regime: its final checkpoint, and for two-phase regimes
/// the phase-1 checkpoint it started from.
pub struct RegimeOutput {
    pub checkpoint: Checkpoint<f32>,
    pub phase1: Option<Checkpoint<f32>>,
}

/// Phase list of a regime.
pub fn regime_phases(cfg: &RegimeConfig) -> Vec<PhasePlan> {
    let uniform = |o: Objective| PhasePlan {
        name: o.name().to_string(),
        objective: o,
        epochs: cfg.epochs(o),
        lr: LrMode::Uniform(cfg.base_lr),
    };
    match cfg.regime.graft() {
        None => {
            let o = match cfg.regime {
                Regime::Mim => Objective::Mim,
                Regime::Cl => Objective::Cl,
                _ => Objective::Mtl,
            };
            vec![uniform(o)]
        }
        Some((order, lower)) => {
            let (first, second) = order.phases();
            let lr = match lower {
                LowerMode::Freeze => LrMode::FreezeLower(cfg.stage_plan.clone()),
                LowerMode::StageLr => LrMode::Staged(cfg.stage_plan.clone()),
            };
            vec![
                uniform(first),
                PhasePlan {
                    name: second.name().to_string(),
                    objective: second,
                    epochs: cfg.epochs(second),
                    lr,
                },
            ]
        }
    }
}

/// Runs a regime from the shared encoder initialization. Two-phase regimes
/// use `phase1` when given instead of training phase 1 themselves.
pub fn run_regime(
    model: &Model,
    cfg: &RegimeConfig,
    data: &ProcShapesConfig,
    phase1: Option<&Checkpoint<f32>>,
    observer: &mut dyn FnMut(&TrainEvent<'_>),
) -> Result<RegimeOutput> {
    cfg.validate()?;
    data.validate()?;
    let phases = regime_phases(cfg);
    let init = Checkpoint::from_store(&model.encoder.init_params::<f32>(encoder_init_seed(cfg.seed))?);
    match phases.as_slice() {
        [single] => Ok(RegimeOutput {
            checkpoint: run_phase(model, cfg, data, single, &init, None, observer)?,
            phase1: None,
        }),
        [first, second] => {
            let p1 = match phase1 {
                Some(c) => c.clone(),
                None => run_phase(model, cfg, data, first, &init, None, observer)?,
            };
            let anchor = p1.subset(&[ENCODER]);
            let checkpoint = run_phase(model, cfg, data, second, &p1, Some(&anchor), observer)?;
            Ok(RegimeOutput {
                checkpoint,
                phase1: Some(p1),
            })
        }
        _ => unreachable!("regimes have one or two phases"),
    }
}

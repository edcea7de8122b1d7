use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, CONFIG_FILE};
use super::metrics::{
    attn_table, conflict_table, train_log_table, vic_table, Table, ATTN_FILE, CONFLICT_FILE,
    TRAIN_LOG_FILE, VIC_FILE,
};
use crate::checkpoint::Checkpoint;
use crate::diagnostics::{attention_distance, vic_per_block, AttnDistRow, GradConflictRecord, VicRow};
use crate::error::{Error, Result};
use crate::eval::{evaluate, suite_probes, EvalResult, ProbeKind};
use crate::regimes::{build_views, measure_conflict, run_regime, Model, Regime, TrainEvent, TrainLogRow, ViewNeeds};
use crate::rng;
use crate::tensor::NamedParamStore;
use crate::vit::{DECODER, ENCODER, PREDICTOR, PROJECTOR};

pub const CHECKPOINT_FILE: &str = "checkpoint.lgpt";
pub const PHASE1_FILE: &str = "phase1.lgpt";

const DIAG_STREAM: u64 = 0x6469_6167;

/// Everything a training run logged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainRecord {
    pub log: Vec<TrainLogRow>,
    /// Conflict records with the epoch they were measured after.
    pub conflicts: Vec<(usize, GradConflictRecord)>,
    pub skipped_conflict_blocks: usize,
}

impl TrainRecord {
    pub fn observer(&mut self) -> impl FnMut(&TrainEvent<'_>) + '_ {
        move |e| match e {
            TrainEvent::Step { row, .. } => self.log.push((*row).clone()),
            TrainEvent::Conflict { epoch, records, skipped, .. } => {
                self.conflicts.extend(records.iter().map(|r| (*epoch, r.clone())));
                self.skipped_conflict_blocks += skipped;
            }
        }
    }
}

/// Outputs of one pre-training run.
#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub run_id: String,
    pub checkpoint: Checkpoint<f32>,
    pub phase1: Option<Checkpoint<f32>>,
    pub train: TrainRecord,
    pub vic: Vec<VicRow>,
    pub attn: Vec<AttnDistRow>,
}

/// Trains `cfg.train.regime`; two-phase regimes start from `phase1` when
/// given. VIC and attention diagnostics follow the `diag` toggles.
pub fn train_run(cfg: &ExperimentConfig, phase1: Option<&Checkpoint<f32>>) -> Result<PretrainOutput> {
    cfg.validate()?;
    let model = Model::new(cfg.vit.clone())?;
    let mut train = TrainRecord::default();
    let out = run_regime(&model, &cfg.regime_config(), &cfg.data_config(), phase1, &mut train.observer())?;
    let vic = if cfg.diag.vic { vic_rows(cfg, &out.checkpoint)? } else { Vec::new() };
    let attn = if cfg.diag.attn { attn_rows(cfg, &out.checkpoint)? } else { Vec::new() };
    Ok(PretrainOutput {
        run_id: cfg.run_id(),
        checkpoint: out.checkpoint,
        phase1: out.phase1,
        train,
        vic,
        attn,
    })
}

impl PretrainOutput {
    pub fn train_log(&self, n_stages: usize) -> Table {
        train_log_table(n_stages, &self.run_id, &self.train.log)
    }

    pub fn conflict(&self) -> Table {
        conflict_table(&self.run_id, &self.train.conflicts)
    }

    /// Writes the resolved config, checkpoints and metrics into `dir`,
    /// replacing earlier outputs of the same files.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        let n_stages = cfg.train.stage_plan.n_stages();
        prepare_dir(cfg, dir)?;
        self.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        if let Some(p1) = &self.phase1 {
            p1.save(&dir.join(PHASE1_FILE))?;
        }
        write_table(&self.train_log(n_stages), &dir.join(TRAIN_LOG_FILE))?;
        if !self.train.conflicts.is_empty() {
            write_table(&self.conflict(), &dir.join(CONFLICT_FILE))?;
        }
        if cfg.diag.vic {
            write_table(&vic_table(&self.run_id, &self.vic), &dir.join(VIC_FILE))?;
        }
        if cfg.diag.attn {
            write_table(&attn_table(&self.run_id, &self.attn), &dir.join(ATTN_FILE))?;
        }
        Ok(())
    }
}

/// Creates `dir` and writes the resolved config into it.
pub fn prepare_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    cfg.save(&dir.join(CONFIG_FILE))
}

/// Replaces `path` with `table`.
pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    table.append_to(path)
}

/// Runs the configured probes on `ckpt`. The suite's three probes share
/// one feature extraction.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, ckpt: &Checkpoint<f32>, regime: &str) -> Result<Vec<EvalResult>> {
    cfg.validate()?;
    let data = cfg.data_config();
    if cfg.probes == ProbeKind::SUITE {
        return suite_probes(
            ckpt,
            &cfg.vit,
            &data,
            &cfg.probe_config(ProbeKind::Linear),
            &cfg.probe_config(ProbeKind::FewShot10Pct),
            regime,
        );
    }
    cfg.probes
        .iter()
        .map(|&k| evaluate(ckpt, &cfg.vit, &data, &cfg.probe_config(k), regime))
        .collect()
}

fn encoder_store(cfg: &ExperimentConfig, ckpt: &Checkpoint<f32>, trainable: bool) -> Result<NamedParamStore<f32>> {
    let store = ckpt.subset(&[ENCODER]).to_store(trainable)?;
    let expected: NamedParamStore<f32> = Model::new(cfg.vit.clone())?.encoder.init_params(0)?;
    expected.check_same_paths(&store)?;
    Ok(store)
}

/// Minimal view plus two strong views of the first `diag.samples`
/// evaluation images.
fn diag_views(
    cfg: &ExperimentConfig,
) -> Result<(crate::Tensor<f32>, crate::Tensor<f32>, crate::Tensor<f32>)> {
    let data = cfg.data_config();
    let indices: Vec<usize> = data.eval_indices().into_iter().take(cfg.diag.samples).collect();
    if indices.len() < 2 {
        return Err(Error::Config(format!("diag.samples: need at least 2 evaluation images, have {}", indices.len())));
    }
    let keys: Vec<u64> = indices.iter().map(|&i| i as u64).collect();
    let needs = ViewNeeds { strong_pair: true, minimal: true, masks: false };
    let seed = rng::derive(cfg.seed, &[DIAG_STREAM]);
    let v = build_views::<f32>(&data, &indices, &keys, seed, needs, 0.0, cfg.vit.num_patches())?;
    let (a, b) = v.strong.expect("strong views requested");
    Ok((v.minimal.expect("minimal view requested"), a, b))
}

/// VIC statistics of every block on paired strong views.
pub fn vic_rows(cfg: &ExperimentConfig, ckpt: &Checkpoint<f32>) -> Result<Vec<VicRow>> {
    let store = encoder_store(cfg, ckpt, false)?;
    let encoder = Model::new(cfg.vit.clone())?.encoder;
    let (_, a, b) = diag_views(cfg)?;
    (1..=cfg.vit.depth).map(|blk| vic_per_block(&encoder, &store, &a, &b, blk)).collect()
}

/// Attention distance of every head on minimally augmented images.
pub fn attn_rows(cfg: &ExperimentConfig, ckpt: &Checkpoint<f32>) -> Result<Vec<AttnDistRow>> {
    let store = encoder_store(cfg, ckpt, false)?;
    let encoder = Model::new(cfg.vit.clone())?.encoder;
    let (images, _, _) = diag_views(cfg)?;
    attention_distance(&encoder, &store, &images)
}

/// Per-block gradient conflict of `ckpt` over `diag.conflict_batches`
/// batches. Heads missing from the checkpoint are freshly initialized and
/// the momentum encoder equals the online one.
pub fn conflict_rows(cfg: &ExperimentConfig, ckpt: &Checkpoint<f32>) -> Result<(Vec<GradConflictRecord>, usize)> {
    cfg.validate()?;
    if cfg.diag.conflict_batches == 0 {
        return Err(Error::Config("diag.conflict_batches must be positive for a conflict measurement".into()));
    }
    let model = Model::new(cfg.vit.clone())?;
    let mut store = encoder_store(cfg, ckpt, true)?;
    let seed = rng::derive(cfg.seed, &[DIAG_STREAM]);
    for prefix in [DECODER, PROJECTOR, PREDICTOR] {
        let fresh: NamedParamStore<f32> = match prefix {
            DECODER => model.decoder.init_params(seed)?,
            PROJECTOR => model.heads.projector.init_params(seed)?,
            _ => model.heads.predictor.init_params(seed)?,
        };
        for (p, t) in fresh.iter() {
            let t = match ckpt.get(p) {
                Some(e) if e.shape == t.shape() => crate::Tensor::parameter(&e.shape, e.values.clone())?,
                Some(e) => {
                    return Err(Error::Checkpoint(format!(
                        "{p} has shape {:?}, config expects {:?}",
                        e.shape,
                        t.shape()
                    )))
                }
                None => t.to_leaf(true),
            };
            store.insert(p.to_string(), t)?;
        }
    }
    let shadow = Checkpoint::from_store(&store).to_store(false)?;
    measure_conflict(&model, &cfg.regime_config(), &cfg.data_config(), &store, &shadow, seed)
}

/// Output directory: `--out` beats the environment variable, which beats
/// the config.
pub fn resolve_out_dir(cfg: &ExperimentConfig, flag: Option<&Path>, env: Option<&str>) -> PathBuf {
    match (flag, env) {
        (Some(f), _) => f.to_path_buf(),
        (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
        _ => cfg.out_dir.clone(),
    }
}

/// The seed recorded next to a checkpoint, when its run directory holds a
/// resolved config.
pub fn checkpoint_config(ckpt_path: &Path) -> Result<Option<ExperimentConfig>> {
    let cfg_path = ckpt_path.parent().map(|d| d.join(CONFIG_FILE));
    match cfg_path {
        Some(p) if p.exists() => Ok(Some(ExperimentConfig::load(&p)?)),
        _ => Ok(None),
    }
}

/// Rejects runs whose seed differs from the seed a checkpoint was trained
/// with.
pub fn check_seed(cfg: &ExperimentConfig, ckpt_cfg: Option<&ExperimentConfig>) -> Result<()> {
    match ckpt_cfg {
        Some(c) if c.seed != cfg.seed => Err(Error::SeedConflict {
            checkpoint: c.seed,
            requested: cfg.seed,
        }),
        _ => Ok(()),
    }
}

/// Phase-1 regime a grafted run expects its starting checkpoint to come
/// from.
pub fn phase1_regime(regime: Regime) -> Option<Regime> {
    regime.graft().map(|(order, _)| match order.phases().0 {
        crate::regimes::Objective::Mim => Regime::Mim,
        _ => Regime::Cl,
    })
}

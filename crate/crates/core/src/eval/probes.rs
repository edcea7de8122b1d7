use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::features::{extract_features, extract_tokens, FEATURE_BATCH};
use super::finetune::{layer_decay_table, LrRow};
use super::logistic::{accuracy, argmax, fit_logistic, LogisticConfig};
use super::{EvalResult, ProbeConfig, ProbeKind};
use crate::checkpoint::Checkpoint;
use crate::data::{self, few_shot_indices, ProcShapesConfig};
use crate::error::{Error, Result};
use crate::regimes::{AdamW, AdamWConfig, LrSchedule};
use crate::rng;
use crate::tensor::{NamedParamStore, Tensor};
use crate::vit::layers::{block_forward, init_block, init_layernorm, layernorm};
use crate::vit::{batch_standardize, Classifier, Heads, ViTConfig, ViTEncoder, BN_EPS, CLASSIFIER, ENCODER, PROJECTOR};

const SHUFFLE_STREAM: u64 = 0x7072_6f62;
const INIT_STREAM: u64 = 0x7072_696e;
const PROBE: &str = "probe";

/// Frozen features of the train and eval splits.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFeatures {
    pub dim: usize,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub eval_x: Vec<f64>,
    pub eval_y: Vec<usize>,
}

impl ProbeFeatures {
    pub fn extract(
        encoder: &ViTEncoder,
        store: &NamedParamStore<f32>,
        data: &ProcShapesConfig,
        train: &[usize],
        block: usize,
    ) -> Result<Self> {
        let (train_x, train_y) = extract_features(encoder, store, data, train, block)?;
        let (eval_x, eval_y) = extract_features(encoder, store, data, &data.eval_indices(), block)?;
        Ok(Self {
            dim: encoder.config.embed_dim,
            train_x,
            train_y,
            eval_x,
            eval_y,
        })
    }

    /// Rows of the training split at `positions`.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        let d = self.dim;
        Self {
            dim: d,
            train_x: positions.iter().flat_map(|&i| self.train_x[i * d..(i + 1) * d].to_vec()).collect(),
            train_y: positions.iter().map(|&i| self.train_y[i]).collect(),
            eval_x: self.eval_x.clone(),
            eval_y: self.eval_y.clone(),
        }
    }
}

/// Logistic regression on frozen features; top-1 on the eval split.
/// Features that are constant in every dimension are rejected.
pub fn linear_probe_on_features(f: &ProbeFeatures, classes: usize, cfg: &LogisticConfig) -> Result<f64> {
    let (d, n) = (f.dim, f.train_y.len());
    let degenerate = n > 0
        && (0..d).all(|j| {
            let first = f.train_x[j];
            f.train_x.chunks_exact(d).all(|row| row[j] == first)
        });
    if degenerate {
        return Err(Error::invalid("linear_probe", "features have zero variance in every dimension"));
    }
    let fit = fit_logistic(&f.train_x, n, d, &f.train_y, classes, cfg)?;
    Ok(fit.accuracy(&f.eval_x, &f.eval_y))
}

fn load_encoder(ckpt: &Checkpoint<f32>, vit: &ViTConfig) -> Result<(ViTEncoder, NamedParamStore<f32>)> {
    let encoder = ViTEncoder::new(vit.clone())?;
    let store = ckpt.subset(&[ENCODER]).to_store(false)?;
    let expected: NamedParamStore<f32> = encoder.init_params(0)?;
    expected.check_same_paths(&store)?;
    Ok((encoder, store))
}

fn result(regime: &str, probe: String, cfg: &ProbeConfig, top1: f64, n_eval: usize) -> EvalResult {
    EvalResult {
        regime: regime.to_string(),
        probe,
        seed: cfg.seed,
        top1,
        n_eval,
    }
}

fn pct_tag(fraction: f64) -> String {
    format!("fewshot_{}pct", (fraction * 1e4).round() / 1e2)
}

/// Logistic regression on the final frozen features of every training image.
pub fn linear_probe(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    let (encoder, store) = load_encoder(ckpt, vit)?;
    let f = ProbeFeatures::extract(&encoder, &store, data, &data.train_indices(), vit.depth)?;
    let top1 = linear_probe_on_features(&f, data.n_classes, &cfg.logistic)?;
    Ok(result(regime, ProbeKind::Linear.to_string(), cfg, top1, f.eval_y.len()))
}

/// The linear probe restricted to a class-balanced `fraction` of the
/// training split.
pub fn fewshot_logistic(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    fraction: f64,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    let subset = few_shot_indices(data, fraction, cfg.seed)?;
    let (encoder, store) = load_encoder(ckpt, vit)?;
    let f = ProbeFeatures::extract(&encoder, &store, data, &subset, vit.depth)?;
    let top1 = linear_probe_on_features(&f, data.n_classes, &cfg.logistic)?;
    Ok(result(regime, pct_tag(fraction), cfg, top1, f.eval_y.len()))
}

/// Training loop shared by the fine-tuning probes. `forward` maps training
/// positions to logits.
fn fit_classifier(
    store: &mut NamedParamStore<f32>,
    base_lr: &HashMap<String, f64>,
    labels: &[usize],
    forward: &dyn Fn(&NamedParamStore<f32>, &[usize]) -> Result<Tensor<f32>>,
    cfg: &ProbeConfig,
) -> Result<()> {
    let n = labels.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_frac * total as f64).round() as usize;
    let schedule = LrSchedule::new(total, warmup.min(total), true)?;
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let loss = forward(store, chunk)?.cross_entropy(&ys)?;
            store.zero_grad();
            loss.backward()?;
            let factor = schedule.at(step, 1.0)?;
            opt.step(store, &|p| base_lr.get(p).map_or(0.0, |b| b * factor))?;
            step += 1;
        }
    }
    store.zero_grad();
    Ok(())
}

fn predict(
    store: &NamedParamStore<f32>,
    n: usize,
    forward: &dyn Fn(&NamedParamStore<f32>, &[usize]) -> Result<Tensor<f32>>,
) -> Result<Vec<usize>> {
    let positions: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for chunk in positions.chunks(FEATURE_BATCH) {
        let logits = forward(store, chunk)?.detach();
        let k = logits.shape()[1];
        out.extend(logits.to_f64_vec().chunks_exact(k).map(argmax));
    }
    Ok(out)
}

/// Fixed per-dimension standardization of classifier inputs with the
/// statistics of the training split.
struct Standardizer {
    shift: Tensor<f32>,
    scale: Tensor<f32>,
}

impl Standardizer {
    /// Population mean and variance of `features` over positions `0..n`.
    fn fit(n: usize, features: &dyn Fn(&[usize]) -> Result<Tensor<f32>>) -> Result<Self> {
        let positions: Vec<usize> = (0..n).collect();
        let (mut sum, mut sq): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        for chunk in positions.chunks(FEATURE_BATCH) {
            let f = features(chunk)?.detach();
            let d = f.shape()[1];
            if sum.is_empty() {
                (sum, sq) = (vec![0.0; d], vec![0.0; d]);
            }
            for row in f.to_f64_vec().chunks_exact(d) {
                for (j, v) in row.iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let shift: Vec<f64> = mean.iter().map(|m| -m).collect();
        let scale: Vec<f64> =
            sq.iter().zip(&mean).map(|(q, m)| 1.0 / ((q / n as f64 - m * m).max(0.0) + BN_EPS).sqrt()).collect();
        Ok(Self {
            shift: Tensor::from_f64(&[shift.len()], &shift)?,
            scale: Tensor::from_f64(&[scale.len()], &scale)?,
        })
    }

    fn apply(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        x.add_row(&self.shift)?.mul_row(&self.scale)
    }
}

fn images(data: &ProcShapesConfig, indices: &[usize]) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    indices.iter().map(|&i| data::generate(data, i)).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
}

/// Fine-tunes encoder (and optionally the projector's first layer) plus a
/// fresh linear classifier on un-augmented images.
fn finetune_images(
    encoder: &ViTEncoder,
    mut store: NamedParamStore<f32>,
    base_lr: &HashMap<String, f64>,
    fc1: Option<&crate::vit::MlpHead>,
    data: &ProcShapesConfig,
    train: &[usize],
    cfg: &ProbeConfig,
) -> Result<(f64, usize, NamedParamStore<f32>)> {
    let in_dim = fc1.map_or(encoder.config.embed_dim, |h| h.hidden);
    let classifier = Classifier::new(in_dim, data.n_classes);
    store.extend(classifier.init_params()?)?;
    let mut lr = base_lr.clone();
    for p in [format!("{CLASSIFIER}.weight"), format!("{CLASSIFIER}.bias")] {
        lr.insert(p, cfg.base_lr);
    }
    let size = data.image_size;
    let features = |store: &NamedParamStore<f32>, x: &Tensor<f32>| -> Result<Tensor<f32>> {
        let f = encoder.feature(store, x)?;
        match fc1 {
            Some(m) => m.first_layer(store, &f),
            None => Ok(f),
        }
    };
    let (train_imgs, train_y) = images(data, train)?;
    let train_batch = |pos: &[usize]| {
        let batch: Vec<Vec<f32>> = pos.iter().map(|&i| train_imgs[i].clone()).collect();
        data::stack(&batch, size)
    };
    let fwd_train = |s: &NamedParamStore<f32>, pos: &[usize]| {
        classifier.forward(s, &batch_standardize(&features(s, &train_batch(pos)?)?)?)
    };
    fit_classifier(&mut store, &lr, &train_y, &fwd_train, cfg)?;
    let stats = Standardizer::fit(train_y.len(), &|pos| features(&store, &train_batch(pos)?))?;
    let (eval_imgs, eval_y) = images(data, &data.eval_indices())?;
    let fwd_eval = |s: &NamedParamStore<f32>, pos: &[usize]| {
        let batch: Vec<Vec<f32>> = pos.iter().map(|&i| eval_imgs[i].clone()).collect();
        classifier.forward(s, &stats.apply(&features(s, &data::stack(&batch, size)?)?)?)
    };
    let pred = predict(&store, eval_y.len(), &fwd_eval)?;
    Ok((accuracy(&pred, &eval_y), eval_y.len(), store))
}

/// Linear classifier trained by AdamW on cached frozen features.
fn head_on_features(f: &ProbeFeatures, classes: usize, cfg: &ProbeConfig) -> Result<f64> {
    let d = f.dim;
    let classifier = Classifier::new(d, classes);
    let mut store: NamedParamStore<f32> = classifier.init_params()?;
    let lr: HashMap<String, f64> = store.paths().map(|p| (p.to_string(), cfg.base_lr)).collect();
    let rows = |x: &[f64], pos: &[usize]| -> Result<Tensor<f32>> {
        let v: Vec<f32> = pos.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().map(|&a| a as f32)).collect();
        Tensor::from_vec(&[pos.len(), d], v)
    };
    let stats = Standardizer::fit(f.train_y.len(), &|pos| rows(&f.train_x, pos))?;
    let fwd_train =
        |s: &NamedParamStore<f32>, pos: &[usize]| classifier.forward(s, &stats.apply(&rows(&f.train_x, pos)?)?);
    fit_classifier(&mut store, &lr, &f.train_y, &fwd_train, cfg)?;
    let fwd_eval =
        |s: &NamedParamStore<f32>, pos: &[usize]| classifier.forward(s, &stats.apply(&rows(&f.eval_x, pos)?)?);
    let pred = predict(&store, f.eval_y.len(), &fwd_eval)?;
    Ok(accuracy(&pred, &f.eval_y))
}

/// Fine-tunes the encoder and the projector's first layer on a
/// class-balanced `fraction` of the training split. A checkpoint without
/// a projector gets a freshly initialized first layer.
pub fn fewshot_finetune(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    fraction: f64,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    let subset = few_shot_indices(data, fraction, cfg.seed)?;
    let (encoder, frozen) = load_encoder(ckpt, vit)?;
    let mut store = Checkpoint::from_store(&frozen).to_store(true)?;
    let projector = Heads::new(vit).projector;
    let fc1 = [format!("{PROJECTOR}.fc1.weight"), format!("{PROJECTOR}.fc1.bias")];
    let fresh: NamedParamStore<f32> = projector.init_params(rng::derive(cfg.seed, &[INIT_STREAM]))?;
    for p in &fc1 {
        let t = match ckpt.get(p) {
            Some(e) => Tensor::parameter(&e.shape, e.values.clone())?,
            None => fresh.get(p)?.to_leaf(true),
        };
        store.insert(p.clone(), t)?;
    }
    let lr: HashMap<String, f64> = store.paths().map(|p| (p.to_string(), cfg.base_lr)).collect();
    let (top1, n_eval, _) = finetune_images(&encoder, store, &lr, Some(&projector), data, &subset, cfg)?;
    Ok(result(regime, pct_tag(fraction), cfg, top1, n_eval))
}

/// Full fine-tuning with layer-wise learning-rate decay.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutput {
    pub result: EvalResult,
    pub lr_table: Vec<LrRow>,
}

pub fn finetune(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<FinetuneOutput> {
    cfg.validate(vit.depth)?;
    let (encoder, frozen) = load_encoder(ckpt, vit)?;
    let store = Checkpoint::from_store(&frozen).to_store(true)?;
    let mut paths: Vec<String> = store.paths().map(str::to_string).collect();
    paths.extend([format!("{CLASSIFIER}.weight"), format!("{CLASSIFIER}.bias")]);
    let lr_table = layer_decay_table(paths.iter().map(String::as_str), vit.depth, cfg.base_lr, cfg.layer_decay)?;
    let lr: HashMap<String, f64> = lr_table.iter().map(|r| (r.path.clone(), r.lr)).collect();
    let (top1, n_eval, _) = finetune_images(&encoder, store, &lr, None, data, &data.train_indices(), cfg)?;
    Ok(FinetuneOutput {
        result: result(regime, ProbeKind::Finetune.to_string(), cfg, top1, n_eval),
        lr_table,
    })
}

/// Fine-tuning with the patch embedding and the first `k_frozen` blocks
/// frozen; the rest train at the uniform base rate. Freezing every block
/// freezes the whole encoder and trains the classifier on cached features.
pub fn partial_finetune(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    k_frozen: usize,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    Ok(partial_finetune_with_store(ckpt, vit, data, k_frozen, cfg, regime)?.0)
}

/// [`partial_finetune`] that also returns the fine-tuned parameters (none
/// when the whole encoder is frozen).
pub(crate) fn partial_finetune_with_store(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    k_frozen: usize,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<(EvalResult, Option<NamedParamStore<f32>>)> {
    let probe = ProbeConfig { kind: ProbeKind::Partial { k_frozen }, ..cfg.clone() };
    probe.validate(vit.depth)?;
    let tag = probe.kind.to_string();
    let (encoder, frozen) = load_encoder(ckpt, vit)?;
    if k_frozen == vit.depth {
        let f = ProbeFeatures::extract(&encoder, &frozen, data, &data.train_indices(), vit.depth)?;
        let top1 = head_on_features(&f, data.n_classes, cfg)?;
        return Ok((result(regime, tag, cfg, top1, f.eval_y.len()), None));
    }
    let trainable = |p: &str| {
        crate::vit::layer_index(p, vit.depth).map_or(true, |l| k_frozen == 0 || l > k_frozen)
    };
    let store = Checkpoint::from_store(&frozen).to_store_with(trainable)?;
    let lr: HashMap<String, f64> = store
        .iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(p, _)| (p.to_string(), cfg.base_lr))
        .collect();
    let (top1, n_eval, tuned) = finetune_images(&encoder, store, &lr, None, data, &data.train_indices(), cfg)?;
    Ok((result(regime, tag, cfg, top1, n_eval), Some(tuned)))
}

/// Frozen features at the output of `block` with `k_tunable` fresh
/// transformer blocks, a layernorm and a linear classifier trained on top.
/// With no tunable blocks this is the linear probe at that block.
pub fn block_feature_eval(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    block: usize,
    k_tunable: usize,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    let probe = ProbeConfig { kind: ProbeKind::BlockFeature { block, k_tunable }, ..cfg.clone() };
    probe.validate(vit.depth)?;
    let tag = probe.kind.to_string();
    let (encoder, frozen) = load_encoder(ckpt, vit)?;
    if k_tunable == 0 {
        let f = ProbeFeatures::extract(&encoder, &frozen, data, &data.train_indices(), block)?;
        let top1 = linear_probe_on_features(&f, data.n_classes, &cfg.logistic)?;
        return Ok(result(regime, tag, cfg, top1, f.eval_y.len()));
    }
    let d = vit.embed_dim;
    let (train_tok, seq, train_y) = extract_tokens(&encoder, &frozen, data, &data.train_indices(), block)?;
    let (eval_tok, _, eval_y) = extract_tokens(&encoder, &frozen, data, &data.eval_indices(), block)?;
    let seed = rng::derive(cfg.seed, &[INIT_STREAM, block as u64, k_tunable as u64]);
    let mut store = NamedParamStore::new();
    for i in 1..=k_tunable {
        init_block(&mut store, seed, &format!("{PROBE}.block{i}"), d, vit.mlp_ratio)?;
    }
    init_layernorm(&mut store, &format!("{PROBE}.norm"), d)?;
    let classifier = Classifier::new(d, data.n_classes);
    store.extend(classifier.init_params()?)?;
    let lr: HashMap<String, f64> = store.paths().map(|p| (p.to_string(), cfg.base_lr)).collect();
    let pooled = |tokens: &[f32], s: &NamedParamStore<f32>, pos: &[usize]| -> Result<Tensor<f32>> {
        let b = pos.len();
        let v: Vec<f32> = pos.iter().flat_map(|&i| tokens[i * seq * d..(i + 1) * seq * d].to_vec()).collect();
        let mut x = Tensor::from_vec(&[b * seq, d], v)?;
        for i in 1..=k_tunable {
            x = block_forward(s, &format!("{PROBE}.block{i}"), &x, b, seq, vit.heads)?.0;
        }
        let x = layernorm(s, &format!("{PROBE}.norm"), &x)?;
        encoder.pool(&x, b, seq)
    };
    let fwd_train = |s: &NamedParamStore<f32>, p: &[usize]| {
        classifier.forward(s, &batch_standardize(&pooled(&train_tok, s, p)?)?)
    };
    fit_classifier(&mut store, &lr, &train_y, &fwd_train, cfg)?;
    let stats = Standardizer::fit(train_y.len(), &|p| pooled(&train_tok, &store, p))?;
    let fwd_eval = |s: &NamedParamStore<f32>, p: &[usize]| classifier.forward(s, &stats.apply(&pooled(&eval_tok, s, p)?)?);
    let pred = predict(&store, eval_y.len(), &fwd_eval)?;
    Ok(result(regime, tag, cfg, accuracy(&pred, &eval_y), eval_y.len()))
}

/// Blocks `{depth/2, 3·depth/4, depth}` × `k ∈ {0, 1, 2}`.
pub fn block_feature_grid(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<Vec<EvalResult>> {
    let d = vit.depth;
    let mut blocks = vec![(d / 2).max(1), (3 * d / 4).max(1), d];
    blocks.dedup();
    let mut out = Vec::new();
    for &b in &blocks {
        for k in 0..=2 {
            out.push(block_feature_eval(ckpt, vit, data, b, k, cfg, regime)?);
        }
    }
    Ok(out)
}

/// Runs the probe selected by `cfg.kind`.
pub fn evaluate(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    cfg: &ProbeConfig,
    regime: &str,
) -> Result<EvalResult> {
    cfg.validate(vit.depth)?;
    match cfg.kind {
        ProbeKind::Linear => linear_probe(ckpt, vit, data, cfg, regime),
        ProbeKind::FewShot1Pct => fewshot_logistic(ckpt, vit, data, 0.01, cfg, regime),
        ProbeKind::FewShot10Pct => fewshot_finetune(ckpt, vit, data, 0.1, cfg, regime),
        ProbeKind::Finetune => Ok(finetune(ckpt, vit, data, cfg, regime)?.result),
        ProbeKind::Partial { k_frozen } => partial_finetune(ckpt, vit, data, k_frozen, cfg, regime),
        ProbeKind::BlockFeature { block, k_tunable } => {
            block_feature_eval(ckpt, vit, data, block, k_tunable, cfg, regime)
        }
    }
}

/// The linear, 1% and 10% probes of one checkpoint. The two logistic
/// probes share one feature extraction; `logistic` configures them and
/// `trained` the 10% fine-tune.
pub fn suite_probes(
    ckpt: &Checkpoint<f32>,
    vit: &ViTConfig,
    data: &ProcShapesConfig,
    logistic: &ProbeConfig,
    trained: &ProbeConfig,
    regime: &str,
) -> Result<Vec<EvalResult>> {
    trained.validate(vit.depth)?;
    let (encoder, store) = load_encoder(ckpt, vit)?;
    let train = data.train_indices();
    let f = ProbeFeatures::extract(&encoder, &store, data, &train, vit.depth)?;
    let linear = linear_probe_on_features(&f, data.n_classes, &logistic.logistic)?;
    let position: HashMap<usize, usize> = train.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let subset = few_shot_indices(data, 0.01, logistic.seed)?;
    let few = f.restrict(&subset.iter().map(|i| position[i]).collect::<Vec<_>>());
    let one_pct = linear_probe_on_features(&few, data.n_classes, &logistic.logistic)?;
    let n_eval = f.eval_y.len();
    Ok(vec![
        result(regime, ProbeKind::Linear.to_string(), logistic, linear, n_eval),
        result(regime, ProbeKind::FewShot1Pct.to_string(), logistic, one_pct, n_eval),
        fewshot_finetune(ckpt, vit, data, 0.1, trained, regime)?,
    ])
}

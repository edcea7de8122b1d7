//! Linear and few-shot probes, fine-tuning with layer-wise learning-rate
//! decay, partial fine-tuning with frozen blocks and the frozen-feature
//! study at intermediate blocks.

mod features;
mod finetune;
mod logistic;
mod probes;

use std::fmt;
use std::str::FromStr;

pub use features::{extract_features, extract_tokens, FEATURE_BATCH};
pub use finetune::{finetune_layer, layer_decay_table, LrRow};
pub use logistic::{fit_logistic, logistic_objective, standardizer, LogisticConfig, LogisticFit};
pub use probes::{
    block_feature_eval, block_feature_grid, evaluate, fewshot_finetune, fewshot_logistic, finetune, linear_probe,
    linear_probe_on_features, partial_finetune, suite_probes, FinetuneOutput, ProbeFeatures,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    Linear,
    FewShot1Pct,
    FewShot10Pct,
    Finetune,
    Partial { k_frozen: usize },
    BlockFeature { block: usize, k_tunable: usize },
}

impl ProbeKind {
    /// The three probes compared by the suite.
    pub const SUITE: [ProbeKind; 3] = [ProbeKind::Linear, ProbeKind::FewShot1Pct, ProbeKind::FewShot10Pct];
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => write!(f, "linear"),
            Self::FewShot1Pct => write!(f, "fewshot_1pct"),
            Self::FewShot10Pct => write!(f, "fewshot_10pct"),
            Self::Finetune => write!(f, "finetune"),
            Self::Partial { k_frozen } => write!(f, "partial_{k_frozen}"),
            Self::BlockFeature { block, k_tunable } => write!(f, "block{block}_k{k_tunable}"),
        }
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    /// Accepts the names produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown probe {s:?}"));
        Ok(match s {
            "linear" => Self::Linear,
            "fewshot_1pct" => Self::FewShot1Pct,
            "fewshot_10pct" => Self::FewShot10Pct,
            "finetune" => Self::Finetune,
            _ => {
                if let Some(k) = s.strip_prefix("partial_") {
                    Self::Partial { k_frozen: k.parse().map_err(|_| bad())? }
                } else if let Some(rest) = s.strip_prefix("block") {
                    let (b, k) = rest.split_once("_k").ok_or_else(bad)?;
                    Self::BlockFeature {
                        block: b.parse().map_err(|_| bad())?,
                        k_tunable: k.parse().map_err(|_| bad())?,
                    }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Epochs of the trained probes (everything except the logistic ones).
    pub epochs: usize,
    pub base_lr: f64,
    /// Per-layer learning-rate ratio of full fine-tuning.
    pub layer_decay: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Fraction of the steps spent in linear warmup.
    pub warmup_frac: f64,
    pub seed: u64,
    pub logistic: LogisticConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Linear,
            epochs: 10,
            base_lr: 5e-4,
            layer_decay: 0.6,
            batch_size: 32,
            weight_decay: 0.05,
            warmup_frac: 0.1,
            seed: 0,
            logistic: LogisticConfig::default(),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self, depth: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.kind {
            ProbeKind::Partial { k_frozen } if k_frozen > depth => {
                return bad(format!("partial probe freezes {k_frozen} of {depth} blocks"));
            }
            ProbeKind::BlockFeature { block, .. } if block == 0 || block > depth => {
                return bad(format!("feature block {block} not in 1..={depth}"));
            }
            _ => {}
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("probe epochs and batch size must be positive".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("probe.base_lr: {}", self.base_lr));
        }
        if !(self.layer_decay > 0.0 && self.layer_decay <= 1.0) {
            return bad(format!("probe.layer_decay {} not in (0, 1]", self.layer_decay));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad(format!("probe.warmup_frac {} not in [0, 1]", self.warmup_frac));
        }
        Ok(())
    }
}

/// Top-1 accuracy of one probe on the fixed evaluation split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub regime: String,
    pub probe: String,
    pub seed: u64,
    pub top1: f64,
    pub n_eval: usize,
}

#[cfg(test)]
mod tests;

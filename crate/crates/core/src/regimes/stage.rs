use crate::error::{Error, Result};
use crate::vit::layer_index;

/// Learning-rate values searched per stage by the grid search.
pub const STAGE_LR_GRID: [f64; 3] = [1.5e-6, 1.5e-5, 1.5e-4];

/// Contiguous partition of the encoder blocks into stages, each with its
/// own base learning rate. The patch embedding and class token belong to
/// the first stage; the final norm and every non-encoder parameter belong
/// to the last.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    pub base_lr: Vec<f64>,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            base_lr: vec![1.5e-5, 1.5e-5, 1.5e-4],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageAssignment {
    pub path: String,
    /// 0-based stage.
    pub stage: usize,
    pub base_lr: f64,
}

impl StagePlan {
    pub fn new(base_lr: Vec<f64>) -> Result<Self> {
        let plan = Self { base_lr };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_lr.is_empty() {
            return Err(Error::Config("stage plan needs at least one stage".into()));
        }
        if let Some(lr) = self.base_lr.iter().find(|lr| !(lr.is_finite() && **lr > 0.0)) {
            return Err(Error::Config(format!("stage learning rates must be positive, got {lr}")));
        }
        Ok(())
    }

    pub fn n_stages(&self) -> usize {
        self.base_lr.len()
    }

    pub fn last(&self) -> usize {
        self.n_stages() - 1
    }

    /// Stage of each block `1..=depth` (index `i` holds block `i + 1`).
    /// Sizes differ by at most one; earlier stages take the extra blocks.
    pub fn block_stages(&self, depth: usize) -> Result<Vec<usize>> {
        let n = self.n_stages();
        if depth < n {
            return Err(Error::Config(format!("{n} stages need at least {n} blocks, got {depth}")));
        }
        let (base, extra) = (depth / n, depth % n);
        let mut out = Vec::with_capacity(depth);
        for s in 0..n {
            let size = base + usize::from(s < extra);
            out.extend(std::iter::repeat(s).take(size));
        }
        Ok(out)
    }

    pub fn stage_of(&self, path: &str, depth: usize) -> Result<usize> {
        let layer = layer_index(path, depth)?;
        Ok(match layer {
            0 => 0,
            l if l <= depth => self.block_stages(depth)?[l - 1],
            _ => self.last(),
        })
    }

    /// Stage and base learning rate of every path.
    pub fn resolve<'a>(&self, paths: impl IntoIterator<Item = &'a str>, depth: usize) -> Result<Vec<StageAssignment>> {
        paths
            .into_iter()
            .map(|p| {
                let stage = self.stage_of(p, depth)?;
                Ok(StageAssignment {
                    path: p.to_string(),
                    stage,
                    base_lr: self.base_lr[stage],
                })
            })
            .collect()
    }
}

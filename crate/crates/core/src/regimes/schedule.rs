use crate::error::{Error, Result};

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then a half
/// cosine down to 0 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> Result<f64> {
    LrSchedule::new(total_steps, warmup_steps, true)?.at(step, base_lr)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
    /// Without decay the rate stays at its base after warmup.
    pub cosine: bool,
}

impl LrSchedule {
    pub fn new(total_steps: usize, warmup_steps: usize, cosine: bool) -> Result<Self> {
        if warmup_steps > total_steps {
            return Err(Error::invalid(
                "lr_schedule",
                format!("warmup {warmup_steps} exceeds total {total_steps}"),
            ));
        }
        Ok(Self {
            total_steps,
            warmup_steps,
            cosine,
        })
    }

    pub fn at(&self, step: usize, base_lr: f64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::invalid(
                "lr_schedule",
                format!("step {step} beyond total {}", self.total_steps),
            ));
        }
        Ok(base_lr * self.factor(step))
    }

    fn factor(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return step as f64 / self.warmup_steps as f64;
        }
        if !self.cosine || self.total_steps == self.warmup_steps {
            return 1.0;
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

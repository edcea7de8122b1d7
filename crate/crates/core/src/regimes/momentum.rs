use crate::error::{Error, Result};
use crate::tensor::{c, prefix_matches, Element, NamedParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentumSchedule {
    Constant,
    /// Increases from the base value to 1 along a half cosine.
    Cosine,
}

impl MomentumSchedule {
    pub fn at(&self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => {
                let progress = if total == 0 { 1.0 } else { step as f64 / total as f64 };
                1.0 - (1.0 - base) * ((std::f64::consts::PI * progress).cos() + 1.0) / 2.0
            }
        }
    }
}

/// Exponential moving average of a subset of the online parameters,
/// stored under identical paths.
#[derive(Clone, Debug)]
pub struct MomentumEncoder<T: Element> {
    pub shadow: NamedParamStore<T>,
    pub momentum: f64,
}

impl<T: Element> MomentumEncoder<T> {
    pub fn new(online: &NamedParamStore<T>, prefixes: &[&str], momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::invalid("momentum", format!("{momentum} not in [0, 1]")));
        }
        let mut shadow = NamedParamStore::new();
        for (p, t) in online.iter() {
            if prefixes.iter().any(|pre| prefix_matches(p, pre)) {
                shadow.insert(p, t.to_leaf(false))?;
            }
        }
        if shadow.is_empty() {
            return Err(Error::NoMatchingParam(prefixes.join(",")));
        }
        Ok(Self { shadow, momentum })
    }

    pub fn update(&mut self, online: &NamedParamStore<T>) -> Result<()> {
        self.update_with(online, self.momentum)
    }

    /// `shadow ← m·shadow + (1−m)·online`, elementwise.
    pub fn update_with(&mut self, online: &NamedParamStore<T>, m: f64) -> Result<()> {
        let paths: Vec<String> = self.shadow.paths().map(str::to_string).collect();
        for p in paths {
            let s = self.shadow.get(&p)?;
            let o = online.get(&p)?;
            if s.shape() != o.shape() {
                return Err(Error::shape("momentum_update", s.shape(), o.shape()));
            }
            let data = s
                .data()
                .iter()
                .zip(o.data())
                .map(|(&sv, &ov)| c::<T>(m * sv.as_f64() + (1.0 - m) * ov.as_f64()))
                .collect();
            let shape = s.shape().to_vec();
            self.shadow.replace(&p, Tensor::from_vec(&shape, data)?)?;
        }
        Ok(())
    }
}

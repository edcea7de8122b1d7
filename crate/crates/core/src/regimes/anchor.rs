use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::tensor::{Element, NamedParamStore, Tensor};

/// `weight · Σ ‖p − p_anchor‖²` over the parameters matched by `prefixes`.
pub fn l2_anchor_penalty<T: Element>(
    store: &NamedParamStore<T>,
    anchor: &Checkpoint<T>,
    prefixes: &[String],
    weight: f64,
) -> Result<Tensor<T>> {
    let mut total: Option<Tensor<T>> = None;
    for path in store.matching(prefixes)? {
        let p = store.get(path)?;
        let a = anchor
            .get(path)
            .ok_or_else(|| Error::UnknownParam(format!("anchor has no {path}")))?;
        let a = Tensor::from_vec(&a.shape, a.values.clone())?;
        let term = p.sub(&a)?.square().sum();
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| Error::NoMatchingParam(prefixes.join(",")))?;
    Ok(total.scale(weight))
}

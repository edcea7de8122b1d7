use super::MaskSpec;
use crate::error::{Error, Result};
use crate::tensor::{c, Element, Tensor};

const NORM_EPS: f64 = 1e-6;

/// Standardizes each patch vector of `[.., P]` to mean 0 and (population)
/// variance 1: `(x − μ) / sqrt(σ² + 1e-6)`.
pub fn normalize_patches<T: Element>(patches: &[T], patch_dim: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(patches.len());
    let inv: T = c(1.0 / patch_dim as f64);
    for row in patches.chunks(patch_dim) {
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv;
        let mut var = T::zero();
        for &v in row {
            var = var + (v - mean) * (v - mean);
        }
        var = var * inv;
        let denom = (var + c(NORM_EPS)).sqrt();
        out.extend(row.iter().map(|&v| (v - mean) / denom));
    }
    out
}

/// Mean squared error over masked patches only.
///
/// `pred` and `target` are `[B, N, P]`; `masks[b]` lists the hidden
/// patches of sample `b`. The target is treated as a constant.
pub fn mim_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    masks: &[MaskSpec],
    normalize_target: bool,
) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() || pred.ndim() != 3 {
        return Err(Error::shape("mim_loss", pred.shape(), target.shape()));
    }
    let (b, n, p) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
    if masks.len() != b {
        return Err(Error::invalid("mim_loss", format!("{} masks for batch of {b}", masks.len())));
    }
    let rows: Vec<usize> = masks
        .iter()
        .enumerate()
        .flat_map(|(bi, m)| m.masked_indices.iter().map(move |&i| bi * n + i))
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("mim_loss", "mask hides no patch"));
    }
    if masks.iter().any(|m| m.masked_indices.iter().any(|&i| i >= n)) {
        return Err(Error::invalid("mim_loss", "mask index beyond patch count"));
    }
    let td = target.data();
    let mut tsel = Vec::with_capacity(rows.len() * p);
    for &r in &rows {
        tsel.extend_from_slice(&td[r * p..(r + 1) * p]);
    }
    if normalize_target {
        tsel = normalize_patches(&tsel, p);
    }
    let t = Tensor::from_vec(&[rows.len(), p], tsel)?;
    let ps = pred.reshape(&[b * n, p])?.gather_rows(&rows)?;
    Ok(ps.sub(&t)?.square().mean())
}

use crate::error::Result;
use crate::rng;
use crate::tensor::{c, Element, NamedParamStore, Tensor};

const INIT_STD: f64 = 0.02;
pub(crate) const LN_EPS: f64 = 1e-6;
pub(crate) const BN_EPS: f64 = 1e-5;

/// Truncated-normal tensor; the stream is keyed by the parameter path so
/// initialization does not depend on construction order.
pub(crate) fn trunc_normal_param<T: Element>(seed: u64, path: &str, shape: &[usize]) -> Result<Tensor<T>> {
    let mut r = rng::stream(seed, &[rng::fnv1a(path)]);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| c::<T>(rng::trunc_normal(&mut r, INIT_STD))).collect();
    Tensor::parameter(shape, data)
}

/// `{prefix}.weight [in, out]` and `{prefix}.bias [out]`.
pub fn init_linear<T: Element>(
    store: &mut NamedParamStore<T>,
    seed: u64,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    let w = format!("{prefix}.weight");
    store.insert(&w, trunc_normal_param(seed, &w, &[fan_in, fan_out])?)?;
    store.insert(format!("{prefix}.bias"), Tensor::parameter(&[fan_out], vec![T::zero(); fan_out])?)
}

/// `{prefix}.gain` (ones) and `{prefix}.bias` (zeros).
pub fn init_layernorm<T: Element>(store: &mut NamedParamStore<T>, prefix: &str, dim: usize) -> Result<()> {
    store.insert(format!("{prefix}.gain"), Tensor::parameter(&[dim], vec![T::one(); dim])?)?;
    store.insert(format!("{prefix}.bias"), Tensor::parameter(&[dim], vec![T::zero(); dim])?)
}

pub(crate) fn linear<T: Element>(store: &NamedParamStore<T>, prefix: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let w = store.get(&format!("{prefix}.weight"))?;
    let b = store.get(&format!("{prefix}.bias"))?;
    x.linear(w, Some(b))
}

pub(crate) fn layernorm<T: Element>(store: &NamedParamStore<T>, prefix: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let g = store.get(&format!("{prefix}.gain"))?;
    let b = store.get(&format!("{prefix}.bias"))?;
    x.layernorm(LN_EPS)?.mul_row(g)?.add_row(b)
}

/// Standardizes every column of `[B, D]` over the batch (population
/// variance, batch statistics only).
pub(crate) fn batch_standardize<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.transpose()?.layernorm(BN_EPS)?.transpose()
}

/// [`batch_standardize`] followed by `{prefix}.gain` and `{prefix}.bias`.
pub(crate) fn batch_norm<T: Element>(store: &NamedParamStore<T>, prefix: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let g = store.get(&format!("{prefix}.gain"))?;
    let b = store.get(&format!("{prefix}.bias"))?;
    batch_standardize(x)?.mul_row(g)?.add_row(b)
}

/// Creates the parameters of one pre-norm transformer block.
pub(crate) fn init_block<T: Element>(
    store: &mut NamedParamStore<T>,
    seed: u64,
    prefix: &str,
    dim: usize,
    mlp_ratio: usize,
) -> Result<()> {
    init_layernorm(store, &format!("{prefix}.norm1"), dim)?;
    for name in ["q", "k", "v", "o"] {
        let w = format!("{prefix}.attn.{name}.weight");
        store.insert(&w, trunc_normal_param(seed, &w, &[dim, dim])?)?;
        store.insert(format!("{prefix}.attn.{name}.bias"), Tensor::parameter(&[dim], vec![T::zero(); dim])?)?;
    }
    init_layernorm(store, &format!("{prefix}.norm2"), dim)?;
    init_linear(store, seed, &format!("{prefix}.mlp.fc1"), dim, dim * mlp_ratio)?;
    init_linear(store, seed, &format!("{prefix}.mlp.fc2"), dim * mlp_ratio, dim)?;
    Ok(())
}

fn attn_proj<T: Element>(store: &NamedParamStore<T>, prefix: &str, name: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let w = store.get(&format!("{prefix}.attn.{name}.weight"))?;
    let b = store.get(&format!("{prefix}.attn.{name}.bias"))?;
    x.linear(w, Some(b))
}

/// `[B·L, d]` → `[B·H, L, d/H]`
fn split_heads<T: Element>(x: &Tensor<T>, b: usize, l: usize, h: usize) -> Result<Tensor<T>> {
    let dh = x.shape()[1] / h;
    x.reshape(&[b, l, h, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b * h, l, dh])
}

fn merge_heads<T: Element>(x: &Tensor<T>, b: usize, l: usize, h: usize) -> Result<Tensor<T>> {
    let dh = x.shape()[2];
    x.reshape(&[b, h, l, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b * l, h * dh])
}

/// One pre-norm block over `x: [B·L, d]`. Returns the block output and the
/// attention probabilities `[B·H, L, L]`.
pub(crate) fn block_forward<T: Element>(
    store: &NamedParamStore<T>,
    prefix: &str,
    x: &Tensor<T>,
    batch: usize,
    seq: usize,
    heads: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let dim = x.shape()[1];
    let h = layernorm(store, &format!("{prefix}.norm1"), x)?;
    let q = split_heads(&attn_proj(store, prefix, "q", &h)?, batch, seq, heads)?;
    let k = split_heads(&attn_proj(store, prefix, "k", &h)?, batch, seq, heads)?;
    let v = split_heads(&attn_proj(store, prefix, "v", &h)?, batch, seq, heads)?;
    let scale = 1.0 / ((dim / heads) as f64).sqrt();
    let attn = q.matmul(&k.transpose()?)?.scale(scale).softmax(2)?;
    let ctx = merge_heads(&attn.matmul(&v)?, batch, seq, heads)?;
    let x = x.add(&attn_proj(store, prefix, "o", &ctx)?)?;

    let h = layernorm(store, &format!("{prefix}.norm2"), &x)?;
    let h = linear(store, &format!("{prefix}.mlp.fc1"), &h)?.gelu();
    let h = linear(store, &format!("{prefix}.mlp.fc2"), &h)?;
    Ok((x.add(&h)?, attn))
}

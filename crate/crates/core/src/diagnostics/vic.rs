use crate::error::{Error, Result};
use crate::tensor::{Element, NamedParamStore, Tensor};
use crate::vit::ViTEncoder;

#[derive(Clone, Debug, PartialEq)]
pub struct VicRow {
    pub block: usize,
    /// Mean over dimensions of the per-dimension standard deviation.
    pub variance: f64,
    /// Mean squared distance between paired embeddings.
    pub invariance: f64,
    /// Sum of squared off-diagonal covariances divided by the dimension.
    pub covariance: f64,
}

fn normalize_rows(z: &[f64], d: usize) -> Vec<f64> {
    let mut out = z.to_vec();
    for row in out.chunks_exact_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    out
}

/// Statistics of `[n, d]` embeddings `za` (and their pairs `zb`) after
/// L2-normalizing every row. Variances use the `n − 1` denominator.
pub fn vic_stats(za: &[f64], zb: &[f64], n: usize, d: usize) -> Result<(f64, f64, f64)> {
    if n < 2 {
        return Err(Error::invalid("vic", format!("need at least 2 pairs, got {n}")));
    }
    if za.len() != n * d || zb.len() != n * d {
        return Err(Error::shape("vic", &[za.len()], &[zb.len()]));
    }
    let (a, b) = (normalize_rows(za, d), normalize_rows(zb, d));
    let invariance = a
        .chunks_exact(d)
        .zip(b.chunks_exact(d))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| a[i * d + j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        for j in 0..d {
            let cj = a[i * d + j] - mean[j];
            for k in 0..d {
                cov[j * d + k] += cj * (a[i * d + k] - mean[k]);
            }
        }
    }
    for v in &mut cov {
        *v /= (n - 1) as f64;
    }
    let variance = (0..d).map(|j| cov[j * d + j].max(0.0).sqrt()).sum::<f64>() / d as f64;
    let mut off = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k {
                off += cov[j * d + k] * cov[j * d + k];
            }
        }
    }
    Ok((variance, invariance, off / d as f64))
}

/// VIC statistics of the token-mean features at the output of `block`
/// for two batches of paired views.
pub fn vic_per_block<T: Element>(
    encoder: &ViTEncoder,
    store: &NamedParamStore<T>,
    view_a: &Tensor<T>,
    view_b: &Tensor<T>,
    block: usize,
) -> Result<VicRow> {
    let n = view_a.shape()[0];
    let d = encoder.config.embed_dim;
    let mean_tokens = |v: &Tensor<T>| -> Result<Vec<f64>> {
        let (tok, seq) = encoder.tokens_at(store, v, block)?;
        Ok(tok.detach().reshape(&[n, seq, d])?.mean_axis(1)?.to_f64_vec())
    };
    let (za, zb) = (mean_tokens(view_a)?, mean_tokens(view_b)?);
    let (variance, invariance, covariance) = vic_stats(&za, &zb, n, d)?;
    Ok(VicRow { block, variance, invariance, covariance })
}

use crate::error::{Error, Result};
use crate::tensor::{Element, NamedParamStore, Tensor};
use crate::vit::ViTEncoder;

#[derive(Clone, Debug, PartialEq)]
pub struct AttnDistRow {
    /// 1-based block index.
    pub block: usize,
    pub head: usize,
    pub mean_distance_px: f64,
}

/// Mean attention distance per block and head from `[B, H, L, L]` maps.
///
/// For every patch query, the attention-weighted pixel distance to every
/// patch key is summed; queries and batch are averaged uniformly. The
/// first `cls` tokens are left out as queries and as keys.
pub fn attention_distance_from_maps<T: Element>(
    maps: &[Tensor<T>],
    grid: usize,
    patch_size: usize,
    cls: usize,
) -> Result<Vec<AttnDistRow>> {
    let n = grid * grid;
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|p| (((p / grid) * patch_size) as f64, ((p % grid) * patch_size) as f64))
        .collect();
    let dist: Vec<f64> = (0..n * n)
        .map(|qk| {
            let (a, b) = (coords[qk / n], coords[qk % n]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .collect();
    let mut rows = Vec::new();
    for (bi, m) in maps.iter().enumerate() {
        let s = m.shape();
        if s.len() != 4 || s[2] != n + cls || s[3] != n + cls {
            return Err(Error::invalid(
                "attention_distance",
                format!("map shape {s:?} does not match {n} patches and {cls} class tokens"),
            ));
        }
        let (batch, heads, l) = (s[0], s[1], s[2]);
        let a = m.data();
        for h in 0..heads {
            let mut total = 0.0;
            for b in 0..batch {
                for q in 0..n {
                    let row = &a[((b * heads + h) * l + cls + q) * l..][..l];
                    total += (0..n).map(|k| row[cls + k].as_f64() * dist[q * n + k]).sum::<f64>();
                }
            }
            rows.push(AttnDistRow {
                block: bi + 1,
                head: h,
                mean_distance_px: total / (batch * n) as f64,
            });
        }
    }
    Ok(rows)
}

/// Mean attention distance of an unmasked forward of `images`.
pub fn attention_distance<T: Element>(
    encoder: &ViTEncoder,
    store: &NamedParamStore<T>,
    images: &Tensor<T>,
) -> Result<Vec<AttnDistRow>> {
    let maps = encoder.attention_maps(store, images)?;
    let cfg = &encoder.config;
    attention_distance_from_maps(&maps, cfg.grid(), cfg.patch_size, cfg.cls_tokens())
}

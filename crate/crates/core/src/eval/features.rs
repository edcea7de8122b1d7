use crate::data::{self, ProcShapesConfig};
use crate::error::Result;
use crate::tensor::NamedParamStore;
use crate::vit::ViTEncoder;

/// Images per forward pass during feature extraction.
pub const FEATURE_BATCH: usize = 64;

/// Pooled features `[n, d]` at the output of `block` for un-augmented
/// images, with their labels.
pub fn extract_features(
    encoder: &ViTEncoder,
    store: &NamedParamStore<f32>,
    data: &ProcShapesConfig,
    indices: &[usize],
    block: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut x = Vec::with_capacity(indices.len() * encoder.config.embed_dim);
    let mut y = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(FEATURE_BATCH) {
        let (images, labels) = data::batch::<f32>(data, chunk)?;
        let f = encoder.feature_at(store, &images.detach(), block)?;
        x.extend(f.to_f64_vec());
        y.extend(labels);
    }
    Ok((x, y))
}

/// Token features `[n·L, d]` at the output of `block`, with `L` and labels.
pub fn extract_tokens(
    encoder: &ViTEncoder,
    store: &NamedParamStore<f32>,
    data: &ProcShapesConfig,
    indices: &[usize],
    block: usize,
) -> Result<(Vec<f32>, usize, Vec<usize>)> {
    let mut x = Vec::new();
    let mut y = Vec::with_capacity(indices.len());
    let mut seq = encoder.config.tokens();
    for chunk in indices.chunks(FEATURE_BATCH) {
        let (images, labels) = data::batch::<f32>(data, chunk)?;
        let (t, l) = encoder.tokens_at(store, &images, block)?;
        seq = l;
        x.extend_from_slice(t.data());
        y.extend(labels);
    }
    Ok((x, seq, y))
}

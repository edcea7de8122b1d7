//! Miniature vision transformer: patch tokenizer, encoder with per-block
//! parameter groups, MAE-style decoder and the contrastive heads.
//!
//! Architecture structs hold no weights. Every forward takes the
//! [`NamedParamStore`] to read from, so the online and momentum encoders
//! share one implementation and differ only in their stores.

mod encoder;
mod heads;
pub(crate) mod layers;

pub use encoder::{layer_index, BlockGroups, EncoderTrace, ViTEncoder, ENCODER};
pub use heads::{Classifier, Heads, MaeDecoder, MlpHead, CLASSIFIER, DECODER, PREDICTOR, PROJECTOR};
pub use layers::{init_layernorm, init_linear};
pub(crate) use layers::{batch_standardize, BN_EPS};

use crate::error::{Error, Result};
use crate::tensor::{c, Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub proj_dim: usize,
    pub use_class_token: bool,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 4,
            channels: 3,
            embed_dim: 64,
            depth: 6,
            heads: 4,
            mlp_ratio: 4,
            decoder_dim: 32,
            decoder_depth: 2,
            proj_dim: 32,
            use_class_token: true,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.decoder_dim % self.decoder_heads() != 0 {
            return bad(format!("decoder_dim {} has no valid head split", self.decoder_dim));
        }
        if self.depth == 0 || self.channels == 0 || self.mlp_ratio == 0 || self.proj_dim == 0 {
            return bad("depth, channels, mlp_ratio and proj_dim must be positive".into());
        }
        if self.decoder_dim == 0 {
            return bad("decoder_dim must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn cls_tokens(&self) -> usize {
        usize::from(self.use_class_token)
    }

    /// Sequence length of an unmasked forward.
    pub fn tokens(&self) -> usize {
        self.num_patches() + self.cls_tokens()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Decoder uses the encoder head count when it divides the decoder
    /// width, otherwise a single head.
    pub fn decoder_heads(&self) -> usize {
        if self.heads > 0 && self.decoder_dim % self.heads == 0 {
            self.heads
        } else {
            1
        }
    }

    /// Hidden width of the projector and predictor MLPs.
    pub fn head_hidden_dim(&self) -> usize {
        2 * self.embed_dim
    }

    fn block_params(dim: usize, mlp_ratio: usize) -> usize {
        // two layernorms, four attention projections, two MLP layers
        (4 + 2 * mlp_ratio) * dim * dim + (9 + mlp_ratio) * dim
    }

    /// Encoder parameter count:
    /// `P·d + d + [d] + depth·((4+2r)·d² + (9+r)·d) + 2d`.
    pub fn encoder_param_count(&self) -> usize {
        let d = self.embed_dim;
        self.patch_dim() * d
            + d
            + self.cls_tokens() * d
            + self.depth * Self::block_params(d, self.mlp_ratio)
            + 2 * d
    }

    /// Decoder parameter count:
    /// `d·e + e + e + depth_dec·((4+2r)·e² + (9+r)·e) + 2e + e·P + P`.
    pub fn decoder_param_count(&self) -> usize {
        let (d, e, p) = (self.embed_dim, self.decoder_dim, self.patch_dim());
        d * e + e + e + self.decoder_depth * Self::block_params(e, self.mlp_ratio) + 2 * e + e * p + p
    }

    /// Projector `d→h→p` plus predictor `p→h→p`, each with a `2h` batch
    /// norm after the first layer.
    pub fn heads_param_count(&self) -> usize {
        let (d, h, p) = (self.embed_dim, self.head_hidden_dim(), self.proj_dim);
        (d * h + 3 * h + h * p + p) + (p * h + 3 * h + h * p + p)
    }
}

/// `[B, C, H, W]` images to `[B, N, p·p·C]` patch vectors. Patches are
/// visited row-major over the grid; inside a patch values are ordered
/// (row, column, channel).
pub fn patchify<T: Element>(images: &Tensor<T>, cfg: &ViTConfig) -> Result<Tensor<T>> {
    let s = images.shape();
    let expect = [cfg.channels, cfg.image_size, cfg.image_size];
    if s.len() != 4 || s[1..] != expect {
        return Err(Error::shape("patchify", s, &expect));
    }
    let b = s[0];
    let (ch, hw, p, g) = (cfg.channels, cfg.image_size, cfg.patch_size, cfg.grid());
    let pd = cfg.patch_dim();
    let x = images.data();
    let mut out = vec![T::zero(); b * g * g * pd];
    for bi in 0..b {
        for gy in 0..g {
            for gx in 0..g {
                let base = ((bi * g + gy) * g + gx) * pd;
                for py in 0..p {
                    for px in 0..p {
                        for cc in 0..ch {
                            let src = ((bi * ch + cc) * hw + gy * p + py) * hw + gx * p + px;
                            out[base + (py * p + px) * ch + cc] = x[src];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, g * g, pd], out)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Element>(patches: &Tensor<T>, cfg: &ViTConfig) -> Result<Tensor<T>> {
    let s = patches.shape();
    let expect = [cfg.num_patches(), cfg.patch_dim()];
    if s.len() != 3 || s[1..] != expect {
        return Err(Error::shape("unpatchify", s, &expect));
    }
    let b = s[0];
    let (ch, hw, p, g) = (cfg.channels, cfg.image_size, cfg.patch_size, cfg.grid());
    let pd = cfg.patch_dim();
    let x = patches.data();
    let mut out = vec![T::zero(); b * ch * hw * hw];
    for bi in 0..b {
        for gy in 0..g {
            for gx in 0..g {
                let base = ((bi * g + gy) * g + gx) * pd;
                for py in 0..p {
                    for px in 0..p {
                        for cc in 0..ch {
                            let dst = ((bi * ch + cc) * hw + gy * p + py) * hw + gx * p + px;
                            out[dst] = x[base + (py * p + px) * ch + cc];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, ch, hw, hw], out)
}

fn sincos_1d(dim: usize, pos: f64, out: &mut [f64]) {
    let half = dim / 2;
    for i in 0..half {
        let omega = 1.0 / 10000f64.powf(i as f64 / half as f64);
        out[i] = (pos * omega).sin();
        out[half + i] = (pos * omega).cos();
    }
}

/// Fixed 2-D sine-cosine positional table `[N, dim]` for a `grid×grid`
/// layout: the first half of each row encodes the row index, the second
/// half the column index.
pub fn sincos_pos_embed(dim: usize, grid: usize) -> Vec<f64> {
    let quarter_dims = dim / 2;
    let mut table = vec![0.0; grid * grid * dim];
    for gy in 0..grid {
        for gx in 0..grid {
            let row = &mut table[(gy * grid + gx) * dim..(gy * grid + gx + 1) * dim];
            sincos_1d(quarter_dims, gy as f64, &mut row[..quarter_dims]);
            sincos_1d(dim - quarter_dims, gx as f64, &mut row[quarter_dims..]);
        }
    }
    table
}

pub(crate) fn pos_rows<T: Element>(table: &[f64], dim: usize, batch: usize) -> Result<Tensor<T>> {
    let n = table.len() / dim;
    let mut data = Vec::with_capacity(batch * table.len());
    for _ in 0..batch {
        data.extend(table.iter().map(|&v| c::<T>(v)));
    }
    Tensor::from_vec(&[batch * n, dim], data)
}

#[cfg(test)]
mod tests;

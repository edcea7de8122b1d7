use super::layers::{self, block_forward, init_block, init_layernorm, init_linear, trunc_normal_param};
use super::{patchify, pos_rows, sincos_pos_embed, ViTConfig};
use crate::error::{Error, Result};
use crate::objectives::MaskSpec;
use crate::tensor::{Element, NamedParamStore, Tensor};

pub const ENCODER: &str = "encoder";

/// Depth position of a parameter: `0` for the patch embedding and class
/// token, `i` for block `i`, `depth` for the final norm and `depth + 1`
/// for anything outside the encoder.
pub fn layer_index(path: &str, depth: usize) -> Result<usize> {
    let Some(rest) = path.strip_prefix(ENCODER).and_then(|r| r.strip_prefix('.')) else {
        return Ok(depth + 1);
    };
    let head = rest.split('.').next().unwrap_or("");
    match head {
        "patch_embed" | "cls_token" => Ok(0),
        "norm" => Ok(depth),
        _ => match head.strip_prefix("block").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if (1..=depth).contains(&k) => Ok(k),
            _ => Err(Error::UnknownParam(path.to_string())),
        },
    }
}

/// Path-prefix groups partitioning the encoder parameters. The final
/// layernorm belongs to the last block's group.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGroups {
    pub embed: Vec<String>,
    /// Empty when the encoder has no class token.
    pub cls: Vec<String>,
    /// One entry per transformer block, in depth order.
    pub blocks: Vec<Vec<String>>,
}

impl BlockGroups {
    /// `(label, prefixes)` for every group: `embed`, `cls` (if present),
    /// then `block1..blockN`.
    pub fn labelled(&self) -> Vec<(String, Vec<String>)> {
        let mut out = vec![("embed".to_string(), self.embed.clone())];
        if !self.cls.is_empty() {
            out.push(("cls".to_string(), self.cls.clone()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{}", i + 1), b.clone()));
        }
        out
    }
}

/// Activations recorded during an encoder forward.
pub struct EncoderTrace<T: Element> {
    /// Output of each executed block, `[B·L, d]`.
    pub block_outputs: Vec<Tensor<T>>,
    /// Attention probabilities of each executed block, `[B·H, L, L]`.
    pub attention: Vec<Tensor<T>>,
    pub batch: usize,
    pub seq: usize,
}

#[derive(Clone, Debug)]
pub struct ViTEncoder {
    pub config: ViTConfig,
    pub block_groups: BlockGroups,
    pos_table: Vec<f64>,
}

impl ViTEncoder {
    pub fn new(config: ViTConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks: Vec<Vec<String>> = (1..=config.depth)
            .map(|i| vec![Self::block_prefix(i)])
            .collect();
        blocks
            .last_mut()
            .expect("depth ≥ 1")
            .push(format!("{ENCODER}.norm"));
        let cls = if config.use_class_token {
            vec![format!("{ENCODER}.cls_token")]
        } else {
            Vec::new()
        };
        let pos_table = sincos_pos_embed(config.embed_dim, config.grid());
        Ok(Self {
            block_groups: BlockGroups {
                embed: vec![format!("{ENCODER}.patch_embed")],
                cls,
                blocks,
            },
            config,
            pos_table,
        })
    }

    /// `encoder.block{i}` with `i` counted from 1.
    pub fn block_prefix(i: usize) -> String {
        format!("{ENCODER}.block{i}")
    }

    pub fn init_params<T: Element>(&self, seed: u64) -> Result<NamedParamStore<T>> {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let mut s = NamedParamStore::new();
        init_linear(&mut s, seed, &format!("{ENCODER}.patch_embed"), cfg.patch_dim(), d)?;
        if cfg.use_class_token {
            let p = format!("{ENCODER}.cls_token");
            s.insert(&p, trunc_normal_param(seed, &p, &[1, d])?)?;
        }
        for i in 1..=cfg.depth {
            init_block(&mut s, seed, &Self::block_prefix(i), d, cfg.mlp_ratio)?;
        }
        init_layernorm(&mut s, &format!("{ENCODER}.norm"), d)?;
        Ok(s)
    }

    fn check_masks(&self, batch: usize, masks: Option<&[MaskSpec]>) -> Result<Option<usize>> {
        let Some(masks) = masks else { return Ok(None) };
        let n = self.config.num_patches();
        if masks.len() != batch {
            return Err(Error::invalid("encode", format!("{} masks for batch of {batch}", masks.len())));
        }
        let count = masks[0].count();
        for m in masks {
            if m.n_patch != n || m.count() != count {
                return Err(Error::invalid("encode", "masks must share patch count and mask count"));
            }
        }
        if count >= n {
            return Err(Error::invalid("encode", format!("mask hides {count} of {n} patches")));
        }
        Ok(Some(n - count))
    }

    /// Patch embedding + positions, optional masking, class token.
    /// Returns `[B·L, d]` and `L`.
    pub(crate) fn embed<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        masks: Option<&[MaskSpec]>,
    ) -> Result<(Tensor<T>, usize)> {
        let cfg = &self.config;
        let (d, n) = (cfg.embed_dim, cfg.num_patches());
        let patches = patchify(images, cfg)?;
        let b = patches.shape()[0];
        let visible = self.check_masks(b, masks)?;
        let x = patches.reshape(&[b * n, cfg.patch_dim()])?;
        let x = layers::linear(store, &format!("{ENCODER}.patch_embed"), &x)?;
        let mut x = x.add(&pos_rows(&self.pos_table, d, b)?)?;
        let mut n_vis = n;
        if let (Some(masks), Some(v)) = (masks, visible) {
            let idx: Vec<usize> = masks
                .iter()
                .enumerate()
                .flat_map(|(bi, m)| m.visible_indices().into_iter().map(move |p| bi * n + p))
                .collect();
            x = x.gather_rows(&idx)?;
            n_vis = v;
        }
        if cfg.use_class_token {
            let cls = store.get(&format!("{ENCODER}.cls_token"))?.gather_rows(&vec![0; b])?;
            let both = Tensor::concat(&[cls, x], 0)?;
            let order: Vec<usize> = (0..b)
                .flat_map(|bi| std::iter::once(bi).chain((0..n_vis).map(move |j| b + bi * n_vis + j)))
                .collect();
            x = both.gather_rows(&order)?;
        }
        Ok((x, n_vis + cfg.cls_tokens()))
    }

    /// Runs blocks `1..=upto` (the final norm is not applied).
    pub fn trace<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        masks: Option<&[MaskSpec]>,
        upto: usize,
    ) -> Result<EncoderTrace<T>> {
        if upto > self.config.depth {
            return Err(Error::invalid(
                "encode",
                format!("block {upto} beyond depth {}", self.config.depth),
            ));
        }
        let (mut x, seq) = self.embed(store, images, masks)?;
        let batch = images.shape()[0];
        let mut trace = EncoderTrace {
            block_outputs: Vec::with_capacity(upto),
            attention: Vec::with_capacity(upto),
            batch,
            seq,
        };
        for i in 1..=upto {
            let (y, attn) = block_forward(store, &Self::block_prefix(i), &x, batch, seq, self.config.heads)?;
            trace.block_outputs.push(y.clone());
            trace.attention.push(attn);
            x = y;
        }
        if upto == 0 {
            trace.block_outputs.push(x);
        }
        Ok(trace)
    }

    fn final_norm<T: Element>(&self, store: &NamedParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        layers::layernorm(store, &format!("{ENCODER}.norm"), x)
    }

    /// Token features `[B, L, d]` after the final norm. With masks only
    /// the visible patches (and the class token) are encoded.
    pub fn encode<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        masks: Option<&[MaskSpec]>,
    ) -> Result<Tensor<T>> {
        let t = self.trace(store, images, masks, self.config.depth)?;
        let x = self.final_norm(store, t.block_outputs.last().expect("depth ≥ 1"))?;
        x.reshape(&[t.batch, t.seq, self.config.embed_dim])
    }

    /// Token features `[B·L, d]` at the output of `block`; `block == depth`
    /// includes the final norm, `block == 0` is the embedding.
    pub fn tokens_at<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        block: usize,
    ) -> Result<(Tensor<T>, usize)> {
        let t = self.trace(store, images, None, block)?;
        let x = t.block_outputs.last().expect("non-empty").clone();
        let x = if block == self.config.depth { self.final_norm(store, &x)? } else { x };
        Ok((x, t.seq))
    }

    /// Mean over patch tokens (class token excluded) of `[B·L, d]` tokens.
    pub fn pool<T: Element>(&self, tokens: &Tensor<T>, batch: usize, seq: usize) -> Result<Tensor<T>> {
        let d = self.config.embed_dim;
        let cls = self.config.cls_tokens();
        tokens
            .reshape(&[batch, seq, d])?
            .narrow(1, cls, seq - cls)?
            .mean_axis(1)
    }

    /// Frozen feature `[B, d]` of the full encoder.
    pub fn feature<T: Element>(&self, store: &NamedParamStore<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.feature_at(store, images, self.config.depth)
    }

    /// Mean-pooled patch features `[B, d]` at the output of `block`.
    pub fn feature_at<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        block: usize,
    ) -> Result<Tensor<T>> {
        let (x, seq) = self.tokens_at(store, images, block)?;
        self.pool(&x, images.shape()[0], seq)
    }

    /// Pooled feature of a masked forward (used by heads during training).
    pub fn pooled<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        masks: Option<&[MaskSpec]>,
    ) -> Result<Tensor<T>> {
        let t = self.encode(store, images, masks)?;
        let (b, l, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        self.pool(&t.reshape(&[b * l, d])?, b, l)
    }

    /// Attention probabilities of an unmasked forward, one `[B, H, L, L]`
    /// tensor per block.
    pub fn attention_maps<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let t = self.trace(store, images, None, self.config.depth)?;
        let (b, l, h) = (t.batch, t.seq, self.config.heads);
        t.attention
            .iter()
            .map(|a| a.detach().reshape(&[b, h, l, l]))
            .collect()
    }

    /// Every encoder parameter path, in init order.
    pub fn param_paths(&self) -> Vec<String> {
        let s: NamedParamStore<f32> = self.init_params(0).expect("valid config");
        s.paths().map(str::to_string).collect()
    }
}

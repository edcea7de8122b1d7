use super::layers::{self, block_forward, init_block, init_layernorm, init_linear, trunc_normal_param};
use super::{pos_rows, sincos_pos_embed, ViTConfig};
use crate::error::{Error, Result};
use crate::objectives::MaskSpec;
use crate::tensor::{Element, NamedParamStore, Tensor};

pub const DECODER: &str = "decoder";
pub const PROJECTOR: &str = "heads.projector";
pub const PREDICTOR: &str = "heads.predictor";
pub const CLASSIFIER: &str = "classifier";

/// MAE-style decoder: visible encoder tokens plus shared mask tokens are
/// re-assembled in patch order, get fixed positions, pass through a few
/// narrow blocks and are projected back to pixels.
#[derive(Clone, Debug)]
pub struct MaeDecoder {
    pub config: ViTConfig,
    pos_table: Vec<f64>,
}

impl MaeDecoder {
    pub fn new(config: ViTConfig) -> Result<Self> {
        config.validate()?;
        let pos_table = sincos_pos_embed(config.decoder_dim, config.grid());
        Ok(Self { config, pos_table })
    }

    pub fn init_params<T: Element>(&self, seed: u64) -> Result<NamedParamStore<T>> {
        let cfg = &self.config;
        let e = cfg.decoder_dim;
        let mut s = NamedParamStore::new();
        init_linear(&mut s, seed, &format!("{DECODER}.embed"), cfg.embed_dim, e)?;
        let mt = format!("{DECODER}.mask_token");
        s.insert(&mt, trunc_normal_param(seed, &mt, &[1, e])?)?;
        for i in 1..=cfg.decoder_depth {
            init_block(&mut s, seed, &format!("{DECODER}.block{i}"), e, cfg.mlp_ratio)?;
        }
        init_layernorm(&mut s, &format!("{DECODER}.norm"), e)?;
        init_linear(&mut s, seed, &format!("{DECODER}.pred"), e, cfg.patch_dim())?;
        Ok(s)
    }

    /// `tokens: [B, L_vis, d]` from a masked encode → pixel predictions
    /// `[B, N, p·p·C]` for every patch.
    pub fn forward<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        tokens: &Tensor<T>,
        masks: &[MaskSpec],
    ) -> Result<Tensor<T>> {
        let cfg = &self.config;
        let (e, n, cls) = (cfg.decoder_dim, cfg.num_patches(), cfg.cls_tokens());
        let s = tokens.shape();
        let (b, lv) = (s[0], s[1]);
        if masks.len() != b || masks.iter().any(|m| lv != n - m.count() + cls) {
            return Err(Error::invalid("decoder", "masks do not match visible token count"));
        }
        let m = n + cls - lv;
        let x = tokens.reshape(&[b * lv, s[2]])?;
        let x = layers::linear(store, &format!("{DECODER}.embed"), &x)?;
        let seq = cls + n;
        let x = if m > 0 {
            let mtok = store
                .get(&format!("{DECODER}.mask_token"))?
                .gather_rows(&vec![0; b * m])?;
            let all = Tensor::concat(&[x, mtok], 0)?;
            let mut order = Vec::with_capacity(b * seq);
            for (bi, mask) in masks.iter().enumerate() {
                if cls == 1 {
                    order.push(bi * lv);
                }
                let (mut vis_rank, mut mask_rank) = (0, 0);
                for p in 0..n {
                    if mask.is_masked(p) {
                        order.push(b * lv + bi * m + mask_rank);
                        mask_rank += 1;
                    } else {
                        order.push(bi * lv + cls + vis_rank);
                        vis_rank += 1;
                    }
                }
            }
            all.gather_rows(&order)?
        } else {
            x
        };

        let mut pos = Vec::with_capacity(seq * e);
        pos.extend(std::iter::repeat(0.0).take(cls * e));
        pos.extend_from_slice(&self.pos_table);
        let mut x = x.add(&pos_rows(&pos, e, b)?)?;
        for i in 1..=cfg.decoder_depth {
            x = block_forward(store, &format!("{DECODER}.block{i}"), &x, b, seq, cfg.decoder_heads())?.0;
        }
        let x = layers::layernorm(store, &format!("{DECODER}.norm"), &x)?;
        let x = layers::linear(store, &format!("{DECODER}.pred"), &x)?;
        let x = if cls == 1 {
            let keep: Vec<usize> = (0..b).flat_map(|bi| (1..seq).map(move |j| bi * seq + j)).collect();
            x.gather_rows(&keep)?
        } else {
            x
        };
        x.reshape(&[b, n, cfg.patch_dim()])
    }
}

/// Two-layer MLP `in → hidden → out`: linear, batch norm, GELU, linear,
/// and with `out_norm` an affine-free batch norm on the output.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub prefix: String,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub out_norm: bool,
}

impl MlpHead {
    pub fn init_params<T: Element>(&self, seed: u64) -> Result<NamedParamStore<T>> {
        let mut s = NamedParamStore::new();
        init_linear(&mut s, seed, &format!("{}.fc1", self.prefix), self.in_dim, self.hidden)?;
        init_layernorm(&mut s, &format!("{}.bn1", self.prefix), self.hidden)?;
        init_linear(&mut s, seed, &format!("{}.fc2", self.prefix), self.hidden, self.out_dim)?;
        Ok(s)
    }

    /// First linear layer and GELU, `[B, hidden]`, without the batch norm
    /// so the output of one sample does not depend on the others.
    pub fn first_layer<T: Element>(&self, store: &NamedParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(layers::linear(store, &format!("{}.fc1", self.prefix), x)?.gelu())
    }

    /// Training forward with batch statistics; needs at least 2 rows.
    pub fn forward<T: Element>(&self, store: &NamedParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.ndim() != 2 || x.shape()[0] < 2 {
            return Err(Error::invalid(
                "mlp_head",
                format!("batch norm needs a [B >= 2, D] input, got {:?}", x.shape()),
            ));
        }
        let h = layers::linear(store, &format!("{}.fc1", self.prefix), x)?;
        let h = layers::batch_norm(store, &format!("{}.bn1", self.prefix), &h)?.gelu();
        let y = layers::linear(store, &format!("{}.fc2", self.prefix), &h)?;
        if self.out_norm {
            layers::batch_standardize(&y)
        } else {
            Ok(y)
        }
    }
}

/// Contrastive projector and predictor.
#[derive(Clone, Debug)]
pub struct Heads {
    pub projector: MlpHead,
    pub predictor: MlpHead,
}

impl Heads {
    pub fn new(cfg: &ViTConfig) -> Self {
        let h = cfg.head_hidden_dim();
        Self {
            projector: MlpHead {
                prefix: PROJECTOR.into(),
                in_dim: cfg.embed_dim,
                hidden: h,
                out_dim: cfg.proj_dim,
                out_norm: true,
            },
            predictor: MlpHead {
                prefix: PREDICTOR.into(),
                in_dim: cfg.proj_dim,
                hidden: h,
                out_dim: cfg.proj_dim,
                out_norm: false,
            },
        }
    }

    pub fn init_params<T: Element>(&self, seed: u64) -> Result<NamedParamStore<T>> {
        let mut s = self.projector.init_params(seed)?;
        s.extend(self.predictor.init_params(seed)?)?;
        Ok(s)
    }
}

/// Linear classifier, zero-initialized.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub prefix: String,
    pub in_dim: usize,
    pub n_classes: usize,
}

impl Classifier {
    pub fn new(in_dim: usize, n_classes: usize) -> Self {
        Self {
            prefix: CLASSIFIER.into(),
            in_dim,
            n_classes,
        }
    }

    pub fn init_params<T: Element>(&self) -> Result<NamedParamStore<T>> {
        let mut s = NamedParamStore::new();
        s.insert(
            format!("{}.weight", self.prefix),
            Tensor::parameter(&[self.in_dim, self.n_classes], vec![T::zero(); self.in_dim * self.n_classes])?,
        )?;
        s.insert(
            format!("{}.bias", self.prefix),
            Tensor::parameter(&[self.n_classes], vec![T::zero(); self.n_classes])?,
        )?;
        Ok(s)
    }

    pub fn forward<T: Element>(&self, store: &NamedParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        layers::linear(store, &self.prefix, x)
    }
}

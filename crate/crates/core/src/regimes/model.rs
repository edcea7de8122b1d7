use crate::data::{self, augment, AugPolicy, ProcShapesConfig};
use crate::error::Result;
use crate::objectives::{contrastive_loss, make_mask, mim_loss, ContrastiveBatch, MaskSpec};
use crate::rng;
use crate::tensor::{Element, NamedParamStore, Tensor};
use crate::vit::{patchify, Heads, MaeDecoder, ViTConfig, ViTEncoder, ENCODER, PROJECTOR};

/// Encoder, reconstruction decoder and contrastive heads of one ViT.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ViTConfig,
    pub encoder: ViTEncoder,
    pub decoder: MaeDecoder,
    pub heads: Heads,
}

/// Prefixes mirrored by the momentum encoder.
pub const MOMENTUM_PREFIXES: [&str; 2] = [ENCODER, PROJECTOR];

impl Model {
    pub fn new(config: ViTConfig) -> Result<Self> {
        Ok(Self {
            encoder: ViTEncoder::new(config.clone())?,
            decoder: MaeDecoder::new(config.clone())?,
            heads: Heads::new(&config),
            config,
        })
    }

    /// Reconstruction loss of a masked forward.
    pub fn mim_loss<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        images: &Tensor<T>,
        masks: &[MaskSpec],
        normalize_target: bool,
    ) -> Result<Tensor<T>> {
        let tokens = self.encoder.encode(store, images, Some(masks))?;
        let pred = self.decoder.forward(store, &tokens, masks)?;
        let target = patchify(&images.detach(), &self.config)?;
        mim_loss(&pred, &target, masks, normalize_target)
    }

    /// Online branch: encoder, projector, predictor.
    pub fn queries<T: Element>(&self, store: &NamedParamStore<T>, view: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.encoder.pooled(store, view, None)?;
        let z = self.heads.projector.forward(store, &f)?;
        self.heads.predictor.forward(store, &z)
    }

    /// Momentum branch: encoder and projector, detached.
    pub fn keys<T: Element>(&self, shadow: &NamedParamStore<T>, view: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.encoder.pooled(shadow, view, None)?;
        Ok(self.heads.projector.forward(shadow, &f)?.detach())
    }

    /// Symmetric InfoNCE between two views.
    pub fn cl_loss<T: Element>(
        &self,
        store: &NamedParamStore<T>,
        shadow: &NamedParamStore<T>,
        view_a: &Tensor<T>,
        view_b: &Tensor<T>,
        temperature: f64,
    ) -> Result<Tensor<T>> {
        let (qa, qb) = (self.queries(store, view_a)?, self.queries(store, view_b)?);
        let (ka, kb) = (self.keys(shadow, view_a)?, self.keys(shadow, view_b)?);
        contrastive_loss(
            &ContrastiveBatch { queries: qa, keys: kb, temperature },
            Some(&ContrastiveBatch { queries: qb, keys: ka, temperature }),
        )
    }
}

/// Which inputs a training step needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewNeeds {
    pub strong_pair: bool,
    pub minimal: bool,
    pub masks: bool,
}

/// Augmented inputs for one batch.
pub struct Views<T: Element> {
    pub strong: Option<(Tensor<T>, Tensor<T>)>,
    pub minimal: Option<Tensor<T>>,
    pub masks: Option<Vec<MaskSpec>>,
    pub labels: Vec<usize>,
}

const AUG_STREAM: u64 = 0x6175_6773;
const MASK_STREAM: u64 = 0x6d61_736b;

/// Builds the views of `indices`. `keys[i]` identifies the draw (for
/// example epoch and sample) so every view is reproducible on its own.
pub fn build_views<T: Element>(
    data_cfg: &ProcShapesConfig,
    indices: &[usize],
    keys: &[u64],
    seed: u64,
    needs: ViewNeeds,
    mask_ratio: f64,
    n_patch: usize,
) -> Result<Views<T>> {
    let size = data_cfg.image_size;
    let aug_seed = rng::derive(seed, &[AUG_STREAM]);
    let mask_seed = rng::derive(seed, &[MASK_STREAM]);
    let (strong, minimal) = (AugPolicy::strong(), AugPolicy::minimal());
    let (mut v0, mut v1, mut vm, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&i, &k) in indices.iter().zip(keys) {
        let (img, label) = data::generate(data_cfg, i)?;
        labels.push(label);
        if needs.strong_pair {
            v0.push(augment(&img, size, &strong, aug_seed, k, 0));
            v1.push(augment(&img, size, &strong, aug_seed, k, 1));
        }
        if needs.minimal {
            vm.push(augment(&img, size, &minimal, aug_seed, k, 2));
        }
    }
    let strong = if needs.strong_pair {
        Some((data::stack(&v0, size)?, data::stack(&v1, size)?))
    } else {
        None
    };
    let minimal = if needs.minimal { Some(data::stack(&vm, size)?) } else { None };
    let masks = if needs.masks {
        Some(keys.iter().map(|&k| make_mask(n_patch, mask_ratio, mask_seed, k)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(Views { strong, minimal, masks, labels })
}

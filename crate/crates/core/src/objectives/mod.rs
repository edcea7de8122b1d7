//! Self-supervised objectives: InfoNCE, masked-patch reconstruction and a
//! VICReg-style alternative, plus random patch masking.

mod contrastive;
mod mask;
mod mim;
mod vicreg;

pub use contrastive::{contrastive_loss, info_nce, ContrastiveBatch, ContrastiveConfig};
pub use mask::{make_mask, mask_count, MaskSpec};
pub use mim::{mim_loss, normalize_patches};
pub use vicreg::{vicreg_loss, VICRegConfig, VicTerms};

use crate::error::Result;
use crate::vit::{layer_index, ENCODER};

/// Learning rate resolved for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct LrRow {
    pub path: String,
    pub layer: usize,
    pub lr: f64,
}

/// Fine-tuning depth of a parameter: `0` for the patch embedding and class
/// token, `i` for block `i` and `depth + 1` for the final norm and heads.
pub fn finetune_layer(path: &str, depth: usize) -> Result<usize> {
    let l = layer_index(path, depth)?;
    let is_norm = path
        .strip_prefix(ENCODER)
        .is_some_and(|r| r.starts_with(".norm."));
    Ok(if is_norm { depth + 1 } else { l })
}

/// `base · decay^(L − l)` with `L = depth + 1`.
pub fn layer_decay_table<'a>(
    paths: impl IntoIterator<Item = &'a str>,
    depth: usize,
    base: f64,
    decay: f64,
) -> Result<Vec<LrRow>> {
    paths
        .into_iter()
        .map(|p| {
            let layer = finetune_layer(p, depth)?;
            Ok(LrRow {
                path: p.to_string(),
                layer,
                lr: base * decay.powi((depth + 1 - layer) as i32),
            })
        })
        .collect()
}

//! Procedural labelled image dataset and the two augmentation pipelines.
//!
//! Each class is a (shape, texture) template. Hue, background brightness,
//! position and scale are drawn per image and carry no label information,
//! so a good representation has to ignore color.

mod augment;
mod dump;

pub use augment::{augment, AugKind, AugPolicy};
pub use dump::{read_dump, write_dump, DumpHeader, DUMP_MAGIC, DUMP_VERSION};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{c, Element, Tensor};

pub const CHANNELS: usize = 3;
const N_SHAPES: usize = 5;
const N_TEXTURES: usize = 4;
pub const MAX_CLASSES: usize = N_SHAPES * N_TEXTURES;

#[derive(Clone, Debug, PartialEq)]
pub struct ProcShapesConfig {
    pub n_classes: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for ProcShapesConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_train: 10_000,
            n_eval: 2_000,
            image_size: 32,
            seed: 0,
        }
    }
}

impl ProcShapesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > MAX_CLASSES {
            return Err(Error::Config(format!(
                "data.n_classes must be in 2..={MAX_CLASSES}, got {}",
                self.n_classes
            )));
        }
        if self.n_train < self.n_classes || self.n_eval == 0 {
            return Err(Error::Config("dataset splits too small".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Config("data.image_size must be at least 8".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_eval
    }

    pub fn pixels(&self) -> usize {
        CHANNELS * self.image_size * self.image_size
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.n_train).collect()
    }

    /// The evaluation split follows the training split by index.
    pub fn eval_indices(&self) -> Vec<usize> {
        (self.n_train..self.total()).collect()
    }

    pub fn label(&self, index: usize) -> usize {
        index % self.n_classes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Disc,
    Square,
    Triangle,
    Cross,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Texture {
    Solid,
    DiagonalStripes,
    HorizontalStripes,
    Checker,
}

fn class_template(class: usize) -> (Shape, Texture) {
    let shape = [Shape::Disc, Shape::Square, Shape::Triangle, Shape::Cross, Shape::Ring][class % N_SHAPES];
    let texture = [
        Texture::Solid,
        Texture::DiagonalStripes,
        Texture::HorizontalStripes,
        Texture::Checker,
    ][(class / N_SHAPES) % N_TEXTURES];
    (shape, texture)
}

fn inside(shape: Shape, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        Shape::Disc => dx * dx + dy * dy <= r * r,
        Shape::Square => dx.abs().max(dy.abs()) <= 0.8 * r,
        Shape::Triangle => {
            // apex up, base at dy = 0.8r
            let h = 1.6 * r;
            let t = (dy + 0.8 * r) / h;
            (0.0..=1.0).contains(&t) && dx.abs() <= t * r
        }
        Shape::Cross => {
            let arm = 0.35 * r;
            (dx.abs() <= arm && dy.abs() <= r) || (dy.abs() <= arm && dx.abs() <= r)
        }
        Shape::Ring => {
            let d2 = dx * dx + dy * dy;
            d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r)
        }
    }
}

fn texture_on(texture: Texture, x: usize, y: usize) -> bool {
    match texture {
        Texture::Solid => true,
        Texture::DiagonalStripes => ((x + y) / 2) % 2 == 0,
        Texture::HorizontalStripes => (y / 2) % 2 == 0,
        Texture::Checker => ((x / 3) + (y / 3)) % 2 == 0,
    }
}

/// HSV (all in `[0, 1]`) to RGB.
pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Renders sample `index` as a `[3, H, W]` buffer (row-major) and its label.
pub fn generate(cfg: &ProcShapesConfig, index: usize) -> Result<(Vec<f32>, usize)> {
    if index >= cfg.total() {
        return Err(Error::Dataset(format!(
            "index {index} out of range for {} samples",
            cfg.total()
        )));
    }
    let label = cfg.label(index);
    let (shape, texture) = class_template(label);
    let size = cfg.image_size;
    let sf = size as f64;
    let mut r = rng::stream(cfg.seed, &[0x6461_7461, index as u64]);

    let hue: f64 = r.gen();
    let fg = hsv_to_rgb(hue, r.gen_range(0.55..1.0), r.gen_range(0.65..1.0));
    let shade = 0.35;
    let bg_level: f64 = r.gen_range(0.0..0.45);
    let bg_tint = hsv_to_rgb(r.gen(), r.gen_range(0.0..0.3), 1.0);
    let bg = [bg_level * bg_tint[0], bg_level * bg_tint[1], bg_level * bg_tint[2]];
    let radius = sf * r.gen_range(0.26..0.38);
    let jitter = sf * 0.12;
    let cx = sf / 2.0 + r.gen_range(-jitter..jitter);
    let cy = sf / 2.0 + r.gen_range(-jitter..jitter);

    let mut img = vec![0f32; CHANNELS * size * size];
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let px = if inside(shape, dx, dy, radius) {
                if texture_on(texture, x, y) {
                    fg
                } else {
                    [fg[0] * shade, fg[1] * shade, fg[2] * shade]
                }
            } else {
                bg
            };
            for ch in 0..CHANNELS {
                let noise: f64 = r.gen_range(-0.02..0.02);
                img[(ch * size + y) * size + x] = (px[ch] + noise).clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok((img, label))
}

/// Renders a batch as a `[B, 3, H, W]` tensor plus labels.
pub fn batch<T: Element>(cfg: &ProcShapesConfig, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
    let mut data = Vec::with_capacity(indices.len() * cfg.pixels());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let (img, l) = generate(cfg, i)?;
        data.extend(img.iter().map(|&v| c::<T>(v as f64)));
        labels.push(l);
    }
    let s = cfg.image_size;
    Ok((Tensor::from_vec(&[indices.len(), CHANNELS, s, s], data)?, labels))
}

/// Converts raw `[3, H, W]` images to a batch tensor.
pub fn stack<T: Element>(images: &[Vec<f32>], size: usize) -> Result<Tensor<T>> {
    let data: Vec<T> = images
        .iter()
        .flat_map(|img| img.iter().map(|&v| c::<T>(v as f64)))
        .collect();
    Tensor::from_vec(&[images.len(), CHANNELS, size, size], data)
}

/// Class-balanced training subset of `fraction · n_train` samples.
/// Subsets for the same seed are nested: a smaller fraction is a prefix of
/// every class list of a larger one.
pub fn few_shot_indices(cfg: &ProcShapesConfig, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("few_shot_indices", format!("fraction {fraction} not in (0, 1]")));
    }
    let total = (fraction * cfg.n_train as f64).round() as usize;
    let per_class = total / cfg.n_classes;
    if per_class == 0 {
        return Err(Error::invalid(
            "few_shot_indices",
            format!("{fraction} of {} leaves no sample per class", cfg.n_train),
        ));
    }
    let mut out = Vec::with_capacity(per_class * cfg.n_classes);
    for class in 0..cfg.n_classes {
        let mut members: Vec<usize> = (class..cfg.n_train).step_by(cfg.n_classes).collect();
        members.shuffle(&mut rng::stream(seed, &[0x6665_7773, class as u64]));
        if members.len() < per_class {
            return Err(Error::invalid("few_shot_indices", "class has too few samples"));
        }
        out.extend_from_slice(&members[..per_class]);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests;

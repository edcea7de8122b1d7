use rand::Rng;

use super::CHANNELS;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugKind {
    Strong,
    Minimal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugPolicy {
    pub kind: AugKind,
    pub crop_scale: (f64, f64),
    pub hflip_prob: f64,
    pub color_jitter: f64,
    pub grayscale_prob: f64,
}

impl AugPolicy {
    /// Contrastive views.
    pub fn strong() -> Self {
        Self {
            kind: AugKind::Strong,
            crop_scale: (0.3, 1.0),
            hflip_prob: 0.5,
            color_jitter: 0.4,
            grayscale_prob: 0.2,
        }
    }

    /// Reconstruction view: crop only.
    pub fn minimal() -> Self {
        Self {
            kind: AugKind::Minimal,
            crop_scale: (0.8, 1.0),
            hflip_prob: 0.0,
            color_jitter: 0.0,
            grayscale_prob: 0.0,
        }
    }
}

const JITTER_PROB: f64 = 0.8;
const ASPECT: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

/// Crop box `(x0, y0, w, h)` in pixels; falls back to the full image.
fn sample_crop(r: &mut impl Rng, size: usize, scale: (f64, f64)) -> (usize, usize, usize, usize) {
    let area = (size * size) as f64;
    if scale.0 < scale.1 || scale.0 < 1.0 {
        for _ in 0..10 {
            let s = if scale.0 < scale.1 { r.gen_range(scale.0..=scale.1) } else { scale.0 };
            let log_ratio = r.gen_range(ASPECT.0.ln()..=ASPECT.1.ln());
            let ratio = log_ratio.exp();
            let w = (area * s * ratio).sqrt().round() as usize;
            let h = (area * s / ratio).sqrt().round() as usize;
            if w >= 1 && h >= 1 && w <= size && h <= size {
                let x0 = r.gen_range(0..=size - w);
                let y0 = r.gen_range(0..=size - h);
                return (x0, y0, w, h);
            }
        }
    }
    (0, 0, size, size)
}

/// Bilinear resize of a crop back to `size × size` (half-pixel centers).
fn resized_crop(img: &[f32], size: usize, crop: (usize, usize, usize, usize)) -> Vec<f32> {
    let (x0, y0, w, h) = crop;
    if w == size && h == size {
        return img.to_vec();
    }
    let mut out = vec![0f32; img.len()];
    let (sx, sy) = (w as f64 / size as f64, h as f64 / size as f64);
    for oy in 0..size {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let (y1, wy) = (fy.floor() as usize, fy - fy.floor());
        let y2 = (y1 + 1).min(h - 1);
        for ox in 0..size {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (x1, wx) = (fx.floor() as usize, fx - fx.floor());
            let x2 = (x1 + 1).min(w - 1);
            for ch in 0..CHANNELS {
                let at = |yy: usize, xx: usize| img[(ch * size + y0 + yy) * size + x0 + xx] as f64;
                let top = at(y1, x1) * (1.0 - wx) + at(y1, x2) * wx;
                let bot = at(y2, x1) * (1.0 - wx) + at(y2, x2) * wx;
                out[(ch * size + oy) * size + ox] = (top * (1.0 - wy) + bot * wy) as f32;
            }
        }
    }
    out
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let mx = r.max(g).max(b);
    let mn = r.min(g).min(b);
    let d = mx - mn;
    let h = if d <= 0.0 {
        0.0
    } else if mx == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if mx == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if mx <= 0.0 { 0.0 } else { d / mx };
    (h, s, mx)
}

fn color_jitter(img: &mut [f32], size: usize, strength: f64, r: &mut impl Rng) {
    let plane = size * size;
    let brightness = r.gen_range(1.0 - strength..=1.0 + strength);
    let contrast = r.gen_range(1.0 - strength..=1.0 + strength);
    let saturation = r.gen_range(1.0 - strength / 2.0..=1.0 + strength / 2.0);
    let hue = r.gen_range(-strength / 4.0..=strength / 4.0);

    let mut mean_l = 0.0;
    for i in 0..plane {
        mean_l += luma(img[i] as f64, img[plane + i] as f64, img[2 * plane + i] as f64);
    }
    mean_l = mean_l * brightness / plane as f64;

    for i in 0..plane {
        let mut px = [img[i] as f64, img[plane + i] as f64, img[2 * plane + i] as f64];
        for v in &mut px {
            *v = (*v * brightness).clamp(0.0, 1.0);
        }
        for v in &mut px {
            *v = ((*v - mean_l) * contrast + mean_l).clamp(0.0, 1.0);
        }
        let l = luma(px[0], px[1], px[2]);
        for v in &mut px {
            *v = ((*v - l) * saturation + l).clamp(0.0, 1.0);
        }
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let rgb = super::hsv_to_rgb(h + hue, s, v);
        for ch in 0..CHANNELS {
            img[ch * plane + i] = rgb[ch].clamp(0.0, 1.0) as f32;
        }
    }
}

/// Augments one `[3, H, W]` image. The result depends only on
/// `(seed, step, view)` and the input.
pub fn augment(image: &[f32], size: usize, policy: &AugPolicy, seed: u64, step: u64, view: u32) -> Vec<f32> {
    debug_assert_eq!(image.len(), CHANNELS * size * size);
    let mut r = rng::stream(seed, &[0x6175_676d, step, view as u64]);
    let crop = sample_crop(&mut r, size, policy.crop_scale);
    let mut img = resized_crop(image, size, crop);

    if policy.hflip_prob > 0.0 && r.gen_bool(policy.hflip_prob.min(1.0)) {
        for ch in 0..CHANNELS {
            for y in 0..size {
                img[(ch * size + y) * size..(ch * size + y + 1) * size].reverse();
            }
        }
    }
    if policy.color_jitter > 0.0 && r.gen_bool(JITTER_PROB) {
        color_jitter(&mut img, size, policy.color_jitter, &mut r);
    }
    if policy.grayscale_prob > 0.0 && r.gen_bool(policy.grayscale_prob.min(1.0)) {
        let plane = size * size;
        for i in 0..plane {
            let l = luma(img[i] as f64, img[plane + i] as f64, img[2 * plane + i] as f64) as f32;
            for ch in 0..CHANNELS {
                img[ch * plane + i] = l;
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    /// Coefficient of `λ/2·‖W‖²` (the bias is not penalized).
    pub l2: f64,
    /// Stop once the gradient norm falls below this value.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iter: 500,
        }
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    pub dim: usize,
    pub classes: usize,
    /// `[dim, classes]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Per-dimension mean and standard deviation (1 for constant dimensions).
pub fn standardizer(x: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn standardize(x: &[f64], d: usize, mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.chunks_exact(d)
        .flat_map(|row| row.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s))
        .collect()
}

fn softmax_row(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Largest eigenvalue of `X̃ᵀX̃ / n` with `X̃ = [X, 1]`, by power iteration.
fn gram_top_eigenvalue(x: &[f64], n: usize, d: usize) -> f64 {
    let m = d + 1;
    let mut g = vec![0.0; m * m];
    let mut row_ext = vec![1.0; m];
    for row in x.chunks_exact(d) {
        row_ext[..d].copy_from_slice(row);
        for i in 0..m {
            let ri = row_ext[i];
            for j in 0..m {
                g[i * m + j] += ri * row_ext[j];
            }
        }
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..m).map(|i| (0..m).map(|j| g[i * m + j] * v[j]).sum()).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.into_iter().map(|a| a / norm).collect();
    }
    let gershgorin = (0..m)
        .map(|i| (0..m).map(|j| g[i * m + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (lambda * 1.01).min(gershgorin)
}

/// Mean cross-entropy plus `λ/2·‖W‖²` and its gradient at `(w, b)` for
/// already standardized features.
pub fn logistic_objective(
    x: &[f64],
    labels: &[usize],
    d: usize,
    k: usize,
    l2: f64,
    w: &[f64],
    b: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = labels.len();
    let mut gw = vec![0.0; d * k];
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (row, &y) in x.chunks_exact(d).zip(labels) {
        z.copy_from_slice(b);
        for (xi, wrow) in row.iter().zip(w.chunks_exact(k)) {
            for (zj, wj) in z.iter_mut().zip(wrow) {
                *zj += xi * wj;
            }
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        softmax_row(&mut z);
        z[y] -= 1.0;
        for (xi, grow) in row.iter().zip(gw.chunks_exact_mut(k)) {
            for (g, r) in grow.iter_mut().zip(&z) {
                *g += xi * r;
            }
        }
        for (g, r) in gb.iter_mut().zip(&z) {
            *g += r;
        }
    }
    let inv = 1.0 / n as f64;
    gw.iter_mut().zip(w).for_each(|(g, wi)| *g = *g * inv + l2 * wi);
    gb.iter_mut().for_each(|g| *g *= inv);
    let reg = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss * inv + reg, gw, gb)
}

/// Full-batch gradient descent with step `1/L`, `L` bounding the
/// curvature of the objective.
pub fn fit_logistic(
    x: &[f64],
    n: usize,
    d: usize,
    labels: &[usize],
    classes: usize,
    cfg: &LogisticConfig,
) -> Result<LogisticFit> {
    if n == 0 || x.len() != n * d || labels.len() != n {
        return Err(Error::invalid(
            "logistic",
            format!("{} values and {} labels for {n} rows of dim {d}", x.len(), labels.len()),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid("logistic", format!("label {y} not below {classes}")));
    }
    let (mean, scale) = standardizer(x, n, d);
    let xs = standardize(x, d, &mean, &scale);
    let lipschitz = 0.5 * gram_top_eigenvalue(&xs, n, d) + cfg.l2;
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; d * classes];
    let mut b = vec![0.0; classes];
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    while iterations < cfg.max_iter {
        let (_, gw, gb) = logistic_objective(&xs, labels, d, classes, cfg.l2, &w, &b);
        grad_norm = gw.iter().chain(&gb).map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < cfg.tolerance {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(p, g)| *p -= step * g);
        b.iter_mut().zip(&gb).for_each(|(p, g)| *p -= step * g);
        iterations += 1;
    }
    Ok(LogisticFit {
        dim: d,
        classes,
        weights: w,
        bias: b,
        mean,
        scale,
        iterations,
        grad_norm,
    })
}

impl LogisticFit {
    /// Most probable class of each row of raw (unstandardized) `x`; ties go
    /// to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Vec<usize> {
        let (d, k) = (self.dim, self.classes);
        x.chunks_exact(d)
            .map(|row| {
                let mut z = self.bias.clone();
                for (i, wrow) in self.weights.chunks_exact(k).enumerate() {
                    let xi = (row[i] - self.mean[i]) / self.scale[i];
                    for (zj, wj) in z.iter_mut().zip(wrow) {
                        *zj += xi * wj;
                    }
                }
                argmax(&z)
            })
            .collect()
    }

    pub fn accuracy(&self, x: &[f64], labels: &[usize]) -> f64 {
        accuracy(&self.predict(x), labels)
    }
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

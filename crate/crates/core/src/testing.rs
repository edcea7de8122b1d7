//! Test oracles shared by unit, integration and acceptance tests.
//!
//! Nothing here calls [`Tensor::backward`]; the finite-difference checker
//! only evaluates forward values.

use crate::tensor::{NamedParamStore, Tensor};
use crate::Result;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, 1e-12)
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub n_checked: usize,
}

/// Central finite differences of a scalar function of `inputs`.
pub fn numeric_grad(
    inputs: &[Vec<f64>],
    shapes: &[Vec<usize>],
    step: f64,
    f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<Vec<Vec<f64>>> {
    let eval = |vals: &[Vec<f64>]| -> Result<f64> {
        let ts: Vec<Tensor<f64>> = vals
            .iter()
            .zip(shapes)
            .map(|(v, s)| Tensor::from_vec(s, v.clone()))
            .collect::<Result<_>>()?;
        Ok(f(&ts)?.item())
    };
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let orig = work[i][j];
            work[i][j] = orig + step;
            let fp = eval(&work)?;
            work[i][j] = orig - step;
            let fm = eval(&work)?;
            work[i][j] = orig;
            g[j] = (fp - fm) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    let mut max_abs: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
        max_abs = max_abs.max((a - n).abs());
    }
    GradCheck {
        rel_error: diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12),
        max_abs_error: max_abs,
        n_checked: analytic.len(),
    }
}

/// Autodiff vs central differences for a function of plain tensors.
pub fn check_fn(
    inputs: &[(Vec<usize>, Vec<f64>)],
    step: f64,
    f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<GradCheck> {
    let params: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(s, v)| Tensor::parameter(s, v.clone()))
        .collect::<Result<_>>()?;
    let loss = f(&params)?;
    loss.backward()?;
    let analytic: Vec<f64> = params
        .iter()
        .flat_map(|p| p.grad_vec().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|(s, _)| s.clone()).collect();
    let vals: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let numeric: Vec<f64> = numeric_grad(&vals, &shapes, step, f)?.concat();
    Ok(compare(&analytic, &numeric))
}

/// Autodiff vs central differences over every scalar of a parameter store.
///
/// `loss` must be a pure function of the store it is given.
pub fn check_store(
    store: &NamedParamStore<f64>,
    step: f64,
    loss: &dyn Fn(&NamedParamStore<f64>) -> Result<Tensor<f64>>,
) -> Result<GradCheck> {
    let live = store.fresh_copy(true);
    let l = loss(&live)?;
    l.backward()?;
    let mut analytic = Vec::new();
    for (_, t) in live.iter() {
        analytic.extend(t.grad_vec().unwrap_or_else(|| vec![0.0; t.numel()]));
    }

    let paths: Vec<String> = store.paths().map(str::to_string).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = store.fresh_copy(false);
    for path in &paths {
        let base = store.get(path)?.clone();
        let mut vals = base.to_vec();
        for j in 0..vals.len() {
            let orig = vals[j];
            vals[j] = orig + step;
            work.replace(path, Tensor::from_vec(base.shape(), vals.clone())?)?;
            let fp = loss(&work)?.item();
            vals[j] = orig - step;
            work.replace(path, Tensor::from_vec(base.shape(), vals.clone())?)?;
            let fm = loss(&work)?.item();
            vals[j] = orig;
            numeric.push((fp - fm) / (2.0 * step));
        }
        work.replace(path, base.to_leaf(false))?;
    }
    Ok(compare(&analytic, &numeric))
}

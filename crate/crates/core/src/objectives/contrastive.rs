use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Average the loss over both view orderings.
    pub symmetric: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            symmetric: true,
        }
    }
}

/// Queries from one view, keys from the other. Row `i` of `keys` is the
/// positive for row `i` of `queries`; every other key is a negative.
pub struct ContrastiveBatch<T: Element> {
    pub queries: Tensor<T>,
    pub keys: Tensor<T>,
    pub temperature: f64,
}

/// InfoNCE for one view ordering:
/// `mean_i −log( exp(q_i·k_i/τ) / Σ_j exp(q_i·k_j/τ) )`
/// with `q`, `k` L2-normalized and keys detached.
pub fn info_nce<T: Element>(batch: &ContrastiveBatch<T>) -> Result<Tensor<T>> {
    let (q, k) = (&batch.queries, &batch.keys);
    if q.ndim() != 2 || q.shape() != k.shape() {
        return Err(Error::shape("contrastive_loss", q.shape(), k.shape()));
    }
    let n = q.shape()[0];
    if n < 2 {
        return Err(Error::invalid("contrastive_loss", "need at least 2 samples for negatives"));
    }
    if !(batch.temperature > 0.0) {
        return Err(Error::invalid(
            "contrastive_loss",
            format!("temperature must be positive, got {}", batch.temperature),
        ));
    }
    let qn = q.l2_normalize(1)?;
    let kn = k.detach().l2_normalize(1)?;
    let logits = qn.matmul(&kn.transpose()?)?.scale(1.0 / batch.temperature);
    let labels: Vec<usize> = (0..n).collect();
    logits.cross_entropy(&labels)
}

/// One ordering, or the mean of both orderings when `second` is given.
pub fn contrastive_loss<T: Element>(
    first: &ContrastiveBatch<T>,
    second: Option<&ContrastiveBatch<T>>,
) -> Result<Tensor<T>> {
    let a = info_nce(first)?;
    match second {
        Some(b) => Ok(a.add(&info_nce(b)?)?.scale(0.5)),
        None => Ok(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_fn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(q: Vec<f64>, k: Vec<f64>, n: usize, d: usize, tau: f64) -> ContrastiveBatch<f64> {
        ContrastiveBatch {
            queries: Tensor::from_vec(&[n, d], q).unwrap(),
            keys: Tensor::from_vec(&[n, d], k).unwrap(),
            temperature: tau,
        }
    }

    #[test]
    fn uniform_logits_give_ln_n() {
        for n in [2usize, 5, 16] {
            let v = vec![1.0; n * 3];
            let loss = info_nce(&batch(v.clone(), v, n, 3, 0.2)).unwrap().item();
            assert!((loss - (n as f64).ln()).abs() <= 1e-10, "n={n}: {loss}");
        }
    }

    #[test]
    fn hand_evaluated_two_sample_case() {
        // q1·k1 = 1, q1·k2 = −1 and symmetric, τ = 1
        let q = vec![1.0, 0.0, -1.0, 0.0];
        let k = vec![1.0, 0.0, -1.0, 0.0];
        let loss = info_nce(&batch(q, k, 2, 2, 1.0)).unwrap().item();
        let expected = -(1f64.exp() / (1f64.exp() + (-1f64).exp())).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn large_positive_margin_drives_loss_to_zero() {
        let q = vec![1.0, 0.0, 0.0, 1.0];
        let k = vec![1.0, 0.0, 0.0, 1.0];
        let loss = info_nce(&batch(q, k, 2, 2, 1e-3)).unwrap().item();
        assert!(loss < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(info_nce(&batch(vec![1.0, 0.0], vec![1.0, 0.0], 1, 2, 0.2)).is_err());
        let v = vec![1.0, 0.0, 0.0, 1.0];
        assert!(info_nce(&batch(v.clone(), v.clone(), 2, 2, 0.0)).is_err());
        assert!(info_nce(&batch(v.clone(), v, 2, 2, -1.0)).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (6, 4);
        let q: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = info_nce(&batch(q.clone(), k.clone(), n, d, 0.2)).unwrap().item();
        let perm = [3, 0, 5, 1, 4, 2];
        let pq: Vec<f64> = perm.iter().flat_map(|&i| q[i * d..(i + 1) * d].to_vec()).collect();
        let pk: Vec<f64> = perm.iter().flat_map(|&i| k[i * d..(i + 1) * d].to_vec()).collect();
        let permuted = info_nce(&batch(pq, pk, n, d, 0.2)).unwrap().item();
        assert!((base - permuted).abs() <= 1e-10);
    }

    #[test]
    fn raising_a_positive_similarity_lowers_the_loss() {
        // sample 0: query rotates towards its key, everything else fixed
        let k = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let mut last = f64::INFINITY;
        for step in 0..5 {
            let a = 1.5 - 0.3 * step as f64; // angle to k0
            let q = vec![a.cos(), a.sin(), 0.3, 1.0, -1.0, 0.2];
            let loss = info_nce(&batch(q, k.clone(), 3, 2, 0.5)).unwrap().item();
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn gradient_reaches_queries_only() {
        let q = Tensor::<f64>::parameter(&[3, 2], vec![1., 0.2, -0.3, 1., 0.5, 0.5]).unwrap();
        let k = Tensor::<f64>::parameter(&[3, 2], vec![0.9, 0.1, -0.2, 1.1, 0.4, 0.6]).unwrap();
        let b = ContrastiveBatch { queries: q.clone(), keys: k.clone(), temperature: 0.2 };
        info_nce(&b).unwrap().backward().unwrap();
        assert!(q.grad_vec().is_some());
        assert!(k.grad_vec().is_none());
    }

    #[test]
    fn symmetric_loss_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, d) = (4, 3);
        let mut r = || (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (k1, k2) = (r(), r());
        let inputs = vec![(vec![n, d], r()), (vec![n, d], r())];
        let res = check_fn(&inputs, 1e-5, &|x| {
            let a = ContrastiveBatch {
                queries: x[0].clone(),
                keys: Tensor::from_vec(&[n, d], k2.clone())?,
                temperature: 0.2,
            };
            let b = ContrastiveBatch {
                queries: x[1].clone(),
                keys: Tensor::from_vec(&[n, d], k1.clone())?,
                temperature: 0.2,
            };
            contrastive_loss(&a, Some(&b))
        })
        .unwrap();
        assert!(res.rel_error <= 1e-4, "{res:?}");
    }
}

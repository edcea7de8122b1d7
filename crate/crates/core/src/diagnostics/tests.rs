use super::*;
use crate::tensor::{NamedParamStore, Tensor};
use proptest::prelude::*;

fn two_param_store() -> NamedParamStore<f64> {
    let mut s = NamedParamStore::new();
    s.insert("encoder.block1.w", Tensor::parameter(&[3], vec![0.3, -1.2, 0.7]).unwrap()).unwrap();
    s.insert("encoder.block2.w", Tensor::parameter(&[2], vec![1.5, 0.4]).unwrap()).unwrap();
    s
}

fn groups() -> Vec<Vec<String>> {
    vec![vec!["encoder.block1".to_string()], vec!["encoder.block2".to_string()]]
}

fn quadratic(store: &NamedParamStore<f64>, sign: f64) -> crate::Result<Tensor<f64>> {
    let a = store.get("encoder.block1.w")?.square().sum();
    let b = store.get("encoder.block2.w")?.mul(store.get("encoder.block2.w")?)?.sum().scale(3.0);
    Ok(a.add(&b)?.scale(sign))
}

#[test]
fn identical_losses_have_cosine_one() {
    let s = two_param_store();
    let out = grad_conflict(&s, &groups(), 4, &|| quadratic(&s, 1.0), &|| quadratic(&s, 1.0)).unwrap();
    assert_eq!(out.skipped, 0);
    assert_eq!(out.records.len(), 2);
    for (i, r) in out.records.iter().enumerate() {
        assert_eq!(r.block, i + 1);
        assert_eq!(r.batch, 4);
        assert!((r.cosine - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn negated_losses_have_cosine_minus_one() {
    let s = two_param_store();
    let out = grad_conflict(&s, &groups(), 0, &|| quadratic(&s, 1.0), &|| quadratic(&s, -1.0)).unwrap();
    assert!(out.records.iter().all(|r| (r.cosine + 1.0).abs() <= 1e-12));
}

#[test]
fn orthogonal_and_missing_gradients() {
    let s = two_param_store();
    let only1 = || Ok(s.get("encoder.block1.w")?.sum());
    let both = || quadratic(&s, 1.0);
    let out = grad_conflict(&s, &groups(), 0, &only1, &both).unwrap();
    assert_eq!(out.skipped, 1);
    assert_eq!(out.records.len(), 1);
    let g = [0.6, -2.4, 1.4];
    let dot: f64 = g.iter().sum();
    let expected = dot / (3f64.sqrt() * g.iter().map(|v| v * v).sum::<f64>().sqrt());
    assert!((out.records[0].cosine - expected).abs() <= 1e-12);
}

#[test]
fn quantiles_follow_linear_interpolation() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_r7(&v, 0.25), 1.75);
    assert_eq!(quantile_r7(&v, 0.5), 2.5);
    assert_eq!(quantile_r7(&v, 0.75), 3.25);
    assert_eq!(quantile_r7(&[7.0], 0.3), 7.0);
}

fn rec(block: usize, cosine: f64) -> GradConflictRecord {
    GradConflictRecord { block, batch: 0, cosine }
}

#[test]
fn box_stats_whiskers_and_regression() {
    let mut records: Vec<_> = [0.1, 0.2, 0.3, 0.4, 5.0].iter().map(|&c| rec(1, c)).collect();
    records.extend([0.0, 0.1, 0.2].iter().map(|&c| rec(2, c)));
    let s = box_stats(&records, 2).unwrap();
    let b1 = &s.blocks[0];
    assert_eq!((b1.q1, b1.median, b1.q3), (0.2, 0.3, 0.4));
    assert_eq!(b1.whisker_high, 0.4);
    assert_eq!(b1.max, 5.0);
    assert_eq!(b1.whisker_low, 0.1);
    assert!((s.slope - (0.1 - 0.3)).abs() < 1e-15);
    assert!(box_stats(&records, 3).is_err());
}

#[test]
fn box_stats_recovers_linear_trend() {
    let records: Vec<_> = (1..=6).flat_map(|b| (0..5).map(move |k| rec(b, 0.5 - 0.1 * b as f64 + 0.01 * k as f64))).collect();
    let s = box_stats(&records, 6).unwrap();
    assert!((s.slope + 0.1).abs() < 1e-12);
    assert!((s.intercept - 0.52).abs() < 1e-12);
}

proptest! {
    #[test]
    fn box_stats_are_ordered(vals in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
        let records: Vec<_> = vals.iter().map(|&c| rec(1, c)).collect();
        let b = &box_stats(&records, 1).unwrap().blocks[0];
        prop_assert!(b.min <= b.whisker_low && b.whisker_low <= b.whisker_high && b.whisker_high <= b.max);
        prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        prop_assert!(b.whisker_low <= b.median && b.median <= b.whisker_high);
    }

    #[test]
    fn cosine_is_bounded(a in proptest::collection::vec(-2.0f64..2.0, 3), b in proptest::collection::vec(-2.0f64..2.0, 3)) {
        let mut s = NamedParamStore::new();
        s.insert("encoder.block1.w", Tensor::parameter(&[3], vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        let (ta, tb) = (Tensor::from_vec(&[3], a).unwrap(), Tensor::from_vec(&[3], b).unwrap());
        let la = || Ok(s.get("encoder.block1.w")?.mul(&ta)?.sum());
        let lb = || Ok(s.get("encoder.block1.w")?.mul(&tb)?.sum());
        let out = grad_conflict(&s, &groups()[..1], 0, &la, &lb).unwrap();
        for r in &out.records {
            prop_assert!(r.cosine.abs() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn vic_identical_views() {
    let z = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
    let (var, inv, cov) = vic_stats(&z, &z, 2, 3).unwrap();
    assert_eq!(var, 0.0);
    assert_eq!(inv, 0.0);
    assert_eq!(cov, 0.0);
}

#[test]
fn vic_one_hot_covariance_oracle() {
    let d = 4;
    let z: Vec<f64> = (0..d * d).map(|i| if i / d == i % d { 1.0 } else { 0.0 }).collect();
    let (var, inv, cov) = vic_stats(&z, &z, d, d).unwrap();
    let mean = 1.0 / d as f64;
    let mut brute = 0.0;
    let mut diag = 0.0;
    for j in 0..d {
        for k in 0..d {
            let c: f64 = (0..d)
                .map(|i| (z[i * d + j] - mean) * (z[i * d + k] - mean))
                .sum::<f64>()
                / (d - 1) as f64;
            if j == k {
                diag += c.sqrt();
            } else {
                brute += c * c;
            }
        }
    }
    assert!((cov - brute / d as f64).abs() <= 1e-8);
    assert!((var - diag / d as f64).abs() <= 1e-8);
    assert_eq!(inv, 0.0);
}

#[test]
fn vic_is_scale_invariant() {
    let za = vec![0.3, -1.0, 2.0, 0.5, 1.5, -0.2, 0.9, 0.1, -0.7];
    let zb = vec![0.1, -0.8, 1.7, 0.4, 1.9, -0.5, 1.2, 0.0, -0.3];
    let scaled: Vec<f64> = za.iter().map(|v| v * 10.0).collect();
    let (a, b) = (vic_stats(&za, &zb, 3, 3).unwrap(), vic_stats(&scaled, &zb, 3, 3).unwrap());
    assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12);
    assert!(a.1 > 0.0);
    assert!(vic_stats(&za[..3], &zb[..3], 1, 3).is_err());
}

fn brute_mean_pairwise(n: usize, patch: usize) -> f64 {
    let mut total = 0.0;
    for a in 0..n * n {
        for b in 0..n * n {
            let dy = (a / n) as f64 - (b / n) as f64;
            let dx = (a % n) as f64 - (b % n) as f64;
            total += (dx * dx + dy * dy).sqrt() * patch as f64;
        }
    }
    total / (n * n * n * n) as f64
}

#[test]
fn uniform_attention_gives_mean_pairwise_distance() {
    for n in [2usize, 3, 4] {
        let l = n * n;
        let map = Tensor::<f64>::full(&[2, 1, l, l], 1.0 / l as f64);
        let rows = attention_distance_from_maps(&[map], n, 4, 0).unwrap();
        assert!((rows[0].mean_distance_px - brute_mean_pairwise(n, 4)).abs() <= 1e-8);
    }
}

#[test]
fn self_attention_has_zero_distance_and_class_token_is_ignored() {
    let (n, cls) = (3usize, 1usize);
    let l = n * n + cls;
    let mut a = vec![0.0; l * l];
    for q in 0..l {
        a[q * l + q] = 0.5;
        a[q * l] += 0.5;
    }
    let map = Tensor::<f64>::from_vec(&[1, 1, l, l], a).unwrap();
    let rows = attention_distance_from_maps(&[map.clone(), map], n, 2, cls).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].block, 2);
    assert!(rows.iter().all(|r| r.mean_distance_px == 0.0));
    let bad = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
    assert!(attention_distance_from_maps(&[bad], n, 2, cls).is_err());
}

#[test]
fn encoder_diagnostics_run() {
    use crate::vit::{ViTConfig, ViTEncoder};
    let cfg = ViTConfig { image_size: 8, embed_dim: 16, depth: 2, heads: 2, ..Default::default() };
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f64> = enc.init_params(0).unwrap();
    let data: Vec<f64> = (0..3 * 3 * 64).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let images = Tensor::from_vec(&[3, 3, 8, 8], data).unwrap();
    let rows = attention_distance(&enc, &store, &images).unwrap();
    assert_eq!(rows.len(), cfg.depth * cfg.heads);
    let max = brute_mean_pairwise(2, 4) * 4.0;
    assert!(rows.iter().all(|r| r.mean_distance_px >= 0.0 && r.mean_distance_px <= max));
    let v = vic_per_block(&enc, &store, &images, &images, 1).unwrap();
    assert_eq!(v.invariance, 0.0);
    assert!(v.variance > 0.0);
}

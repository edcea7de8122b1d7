use super::probes::partial_finetune_with_store;
use super::*;
use crate::checkpoint::Checkpoint;
use crate::data::ProcShapesConfig;
use crate::rng;
use crate::vit::{ViTConfig, ViTEncoder};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn one_hot(labels: &[usize], k: usize) -> Vec<f64> {
    labels.iter().flat_map(|&y| (0..k).map(move |j| if j == y { 1.0 } else { 0.0 })).collect()
}

#[test]
fn one_hot_features_are_separable() {
    let k = 5;
    let train: Vec<usize> = (0..50).map(|i| i % k).collect();
    let eval: Vec<usize> = (0..20).map(|i| (i * 3) % k).collect();
    let fit = fit_logistic(&one_hot(&train, k), train.len(), k, &train, k, &LogisticConfig::default()).unwrap();
    assert_eq!(fit.accuracy(&one_hot(&eval, k), &eval), 1.0);
}

#[test]
fn ten_per_class_one_hot_is_separable() {
    let k = 10;
    let train: Vec<usize> = (0..10 * k).map(|i| i % k).collect();
    let eval: Vec<usize> = (0..200).map(|i| i % k).collect();
    let fit = fit_logistic(&one_hot(&train, k), train.len(), k, &train, k, &LogisticConfig::default()).unwrap();
    assert_eq!(fit.accuracy(&one_hot(&eval, k), &eval), 1.0);
}

#[test]
fn constant_features_give_chance() {
    let k = 4;
    let train: Vec<usize> = (0..80).map(|i| i % k).collect();
    let eval: Vec<usize> = (0..400).map(|i| i % k).collect();
    let x = vec![0.7; 80 * 3];
    let fit = fit_logistic(&x, 80, 3, &train, k, &LogisticConfig::default()).unwrap();
    let acc = fit.accuracy(&vec![0.7; 400 * 3], &eval);
    assert!((acc - 1.0 / k as f64).abs() <= 0.05);
    let f = ProbeFeatures { dim: 3, train_x: x, train_y: train, eval_x: vec![0.7; 400 * 3], eval_y: eval };
    assert!(linear_probe_on_features(&f, k, &LogisticConfig::default()).is_err());
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let (n, d, k) = (7, 3, 4);
    let mut r = rng::stream(5, &[1]);
    let x: Vec<f64> = (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let y: Vec<usize> = (0..n).map(|i| i % k).collect();
    let w: Vec<f64> = (0..d * k).map(|_| r.gen_range(-0.5..0.5)).collect();
    let b: Vec<f64> = (0..k).map(|_| r.gen_range(-0.5..0.5)).collect();
    let (_, gw, gb) = logistic_objective(&x, &y, d, k, 0.1, &w, &b);
    let h = 1e-6;
    for i in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[i] += h;
        wm[i] -= h;
        let num = (logistic_objective(&x, &y, d, k, 0.1, &wp, &b).0 - logistic_objective(&x, &y, d, k, 0.1, &wm, &b).0)
            / (2.0 * h);
        assert!((num - gw[i]).abs() < 1e-8);
    }
    for j in 0..k {
        let (mut bp, mut bm) = (b.clone(), b.clone());
        bp[j] += h;
        bm[j] -= h;
        let num = (logistic_objective(&x, &y, d, k, 0.1, &w, &bp).0 - logistic_objective(&x, &y, d, k, 0.1, &w, &bm).0)
            / (2.0 * h);
        assert!((num - gb[j]).abs() < 1e-8);
    }
}

/// Damped Newton on the same objective, over `[W; b]` flattened row-major.
fn newton_reference(x: &[f64], y: &[usize], d: usize, k: usize, l2: f64) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let m = (d + 1) * k;
    let split = |theta: &DVector<f64>| (theta.as_slice()[..d * k].to_vec(), theta.as_slice()[d * k..].to_vec());
    let mut theta = DVector::<f64>::zeros(m);
    for _ in 0..100 {
        let (w, b) = split(&theta);
        let (f0, gw, gb) = logistic_objective(x, y, d, k, l2, &w, &b);
        let g = DVector::from_iterator(m, gw.into_iter().chain(gb));
        if g.norm() < 1e-12 {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for (row, _) in x.chunks_exact(d).zip(y) {
            let mut z = b.clone();
            for (i, xi) in row.iter().enumerate() {
                for j in 0..k {
                    z[j] += xi * w[i * k + j];
                }
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let p: Vec<f64> = z.iter().map(|v| (v - max).exp() / s).collect();
            let feat = |i: usize| if i < d { row[i] } else { 1.0 };
            for a in 0..=d {
                for c1 in 0..k {
                    let ia = if a < d { a * k + c1 } else { d * k + c1 };
                    for bb in 0..=d {
                        for c2 in 0..k {
                            let ib = if bb < d { bb * k + c2 } else { d * k + c2 };
                            let curv = if c1 == c2 { p[c1] * (1.0 - p[c1]) } else { -p[c1] * p[c2] };
                            hess[(ia, ib)] += feat(a) * feat(bb) * curv / n as f64;
                        }
                    }
                }
            }
        }
        for i in 0..d * k {
            hess[(i, i)] += l2;
        }
        for i in d * k..m {
            hess[(i, i)] += 1e-12;
        }
        let dir = hess.lu().solve(&g).expect("positive definite");
        let mut t = 1.0;
        loop {
            let cand = &theta - &dir * t;
            let (cw, cb) = split(&cand);
            if logistic_objective(x, y, d, k, l2, &cw, &cb).0 <= f0 - 1e-4 * t * g.dot(&dir) || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    split(&theta)
}

fn blobs(seed: u64, n: usize, d: usize, k: usize, spread: f64) -> (Vec<f64>, Vec<usize>) {
    let mut r = rng::stream(seed, &[2]);
    let centers: Vec<f64> = (0..k * d).map(|i| if i % (d + 1) == 0 { 3.0 } else { 0.0 }).collect();
    let y: Vec<usize> = (0..n).map(|i| i % k).collect();
    let x = y
        .iter()
        .flat_map(|&c| (0..d).map(|j| centers[c * d + j] + spread * r.gen_range(-1.0..1.0)).collect::<Vec<_>>())
        .collect();
    (x, y)
}

#[test]
fn gradient_descent_matches_newton_reference() {
    let (d, k) = (4, 3);
    let (xt, yt) = blobs(1, 240, d, k, 1.4);
    let (xe, ye) = blobs(2, 600, d, k, 1.4);
    let cfg = LogisticConfig::default();
    let fit = fit_logistic(&xt, 240, d, &yt, k, &cfg).unwrap();
    let xs: Vec<f64> = xt
        .chunks_exact(d)
        .flat_map(|r| r.iter().enumerate().map(|(j, v)| (v - fit.mean[j]) / fit.scale[j]).collect::<Vec<_>>())
        .collect();
    let (w, b) = newton_reference(&xs, &yt, d, k, cfg.l2);
    let reference = LogisticFit { weights: w.clone(), bias: b.clone(), ..fit.clone() };
    let (acc_gd, acc_ref) = (fit.accuracy(&xe, &ye), reference.accuracy(&xe, &ye));
    assert!((acc_gd - acc_ref).abs() <= 0.005, "gd {acc_gd} vs reference {acc_ref}");
    let f_gd = logistic_objective(&xs, &yt, d, k, cfg.l2, &fit.weights, &fit.bias).0;
    let f_ref = logistic_objective(&xs, &yt, d, k, cfg.l2, &w, &b).0;
    assert!(f_ref <= f_gd + 1e-12);
}

#[test]
fn layer_decay_closed_form() {
    let cfg = ViTConfig::default();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let mut paths = enc.param_paths();
    paths.push("classifier.weight".into());
    let table = layer_decay_table(paths.iter().map(String::as_str), 6, 5e-4, 0.6).unwrap();
    for row in &table {
        assert_eq!(row.lr, 5e-4 * 0.6f64.powi((7 - row.layer) as i32), "{}", row.path);
    }
    let lr = |p: &str| table.iter().find(|r| r.path == p).unwrap().lr;
    assert!((lr("encoder.block1.mlp.fc1.weight") - 2.3328e-5).abs() < 1e-15);
    assert_eq!(lr("classifier.weight"), 5e-4);
    assert_eq!(lr("encoder.norm.gain"), 5e-4);
    assert_eq!(lr("encoder.patch_embed.weight"), 5e-4 * std::hint::black_box(0.6f64).powi(std::hint::black_box(7)));
    let mut sorted = table.clone();
    sorted.sort_by_key(|r| r.layer);
    assert!(sorted.windows(2).all(|w| w[0].lr <= w[1].lr));
    let flat = layer_decay_table(paths.iter().map(String::as_str), 6, 5e-4, 1.0).unwrap();
    assert!(flat.iter().all(|r| r.lr == 5e-4));
}

#[test]
fn probe_names_round_trip() {
    for k in [
        ProbeKind::Linear,
        ProbeKind::FewShot1Pct,
        ProbeKind::FewShot10Pct,
        ProbeKind::Finetune,
        ProbeKind::Partial { k_frozen: 3 },
        ProbeKind::BlockFeature { block: 4, k_tunable: 2 },
    ] {
        assert_eq!(k.to_string().parse::<ProbeKind>().unwrap(), k);
    }
    assert!("knn".parse::<ProbeKind>().is_err());
    let bad = ProbeConfig { kind: ProbeKind::Partial { k_frozen: 7 }, ..Default::default() };
    assert!(bad.validate(6).is_err());
    let bad = ProbeConfig { kind: ProbeKind::BlockFeature { block: 7, k_tunable: 0 }, ..Default::default() };
    assert!(bad.validate(6).is_err());
}

fn tiny_vit() -> ViTConfig {
    ViTConfig { image_size: 8, embed_dim: 16, depth: 3, heads: 2, decoder_dim: 8, decoder_depth: 1, proj_dim: 8, ..Default::default() }
}

fn tiny_data() -> ProcShapesConfig {
    ProcShapesConfig { n_classes: 4, n_train: 40, n_eval: 20, image_size: 8, seed: 1 }
}

fn tiny_ckpt(vit: &ViTConfig) -> Checkpoint<f32> {
    Checkpoint::from_store(&ViTEncoder::new(vit.clone()).unwrap().init_params::<f32>(9).unwrap())
}

fn quick() -> ProbeConfig {
    ProbeConfig { epochs: 2, batch_size: 8, base_lr: 1e-3, ..Default::default() }
}

#[test]
fn fewshot_full_fraction_is_linear_probe() {
    let (vit, data) = (tiny_vit(), tiny_data());
    let ckpt = tiny_ckpt(&vit);
    let lin = linear_probe(&ckpt, &vit, &data, &quick(), "r").unwrap();
    let few = fewshot_logistic(&ckpt, &vit, &data, 1.0, &quick(), "r").unwrap();
    assert_eq!(lin.top1.to_bits(), few.top1.to_bits());
    assert_eq!(lin.probe, "linear");
    assert_eq!(few.probe, "fewshot_100pct");
    assert_eq!(lin.n_eval, 20);
    assert!(fewshot_logistic(&ckpt, &vit, &data, 0.0, &quick(), "r").is_err());
    assert!(fewshot_logistic(&ckpt, &vit, &data, 1.5, &quick(), "r").is_err());
}

#[test]
fn fewshot_probes_are_deterministic() {
    let vit = tiny_vit();
    let data = ProcShapesConfig { n_train: 400, ..tiny_data() };
    let ckpt = tiny_ckpt(&vit);
    let a = evaluate(&ckpt, &vit, &data, &ProbeConfig { kind: ProbeKind::FewShot1Pct, ..quick() }, "r").unwrap();
    let b = evaluate(&ckpt, &vit, &data, &ProbeConfig { kind: ProbeKind::FewShot1Pct, ..quick() }, "r").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.probe, "fewshot_1pct");
    let c = evaluate(&ckpt, &vit, &data, &ProbeConfig { kind: ProbeKind::FewShot10Pct, ..quick() }, "r").unwrap();
    let d = evaluate(&ckpt, &vit, &data, &ProbeConfig { kind: ProbeKind::FewShot10Pct, ..quick() }, "r").unwrap();
    assert_eq!(c, d);
    assert_eq!(c.probe, "fewshot_10pct");
    assert!((0.0..=1.0).contains(&c.top1));
}

#[test]
fn degenerate_encoder_is_rejected() {
    let vit = tiny_vit();
    let mut ckpt = tiny_ckpt(&vit);
    for e in &mut ckpt.entries {
        if e.path == "encoder.norm.gain" {
            e.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    assert!(linear_probe(&ckpt, &vit, &tiny_data(), &quick(), "r").is_err());
}

#[test]
fn partial_zero_equals_flat_finetune_and_checkpoint_is_untouched() {
    let (vit, data) = (tiny_vit(), tiny_data());
    let ckpt = tiny_ckpt(&vit);
    let hash = ckpt.content_hash();
    let flat = ProbeConfig { layer_decay: 1.0, ..quick() };
    let ft = finetune(&ckpt, &vit, &data, &flat, "r").unwrap();
    let p0 = partial_finetune(&ckpt, &vit, &data, 0, &flat, "r").unwrap();
    assert_eq!(ft.result.top1.to_bits(), p0.top1.to_bits());
    assert_eq!(ckpt.content_hash(), hash);
}

#[test]
fn partial_freezes_lower_blocks_bitwise() {
    let (vit, data) = (tiny_vit(), tiny_data());
    let ckpt = tiny_ckpt(&vit);
    let (_, tuned) = partial_finetune_with_store(&ckpt, &vit, &data, 2, &quick(), "r").unwrap();
    let tuned = tuned.unwrap();
    for e in &ckpt.entries {
        let now = tuned.get(&e.path).unwrap().data();
        let same = now.iter().zip(&e.values).all(|(a, b)| a.to_bits() == b.to_bits());
        let layer = crate::vit::layer_index(&e.path, vit.depth).unwrap();
        assert_eq!(same, layer <= 2, "{}", e.path);
    }
}

#[test]
fn block_feature_at_top_without_tuning_is_linear_probe() {
    let (vit, data) = (tiny_vit(), tiny_data());
    let ckpt = tiny_ckpt(&vit);
    let lin = linear_probe(&ckpt, &vit, &data, &quick(), "r").unwrap();
    let top = block_feature_eval(&ckpt, &vit, &data, vit.depth, 0, &quick(), "r").unwrap();
    assert_eq!(lin.top1.to_bits(), top.top1.to_bits());
    let grid = block_feature_grid(&ckpt, &vit, &data, &quick(), "r").unwrap();
    let tags: Vec<&str> = grid.iter().map(|r| r.probe.as_str()).collect();
    assert_eq!(
        tags,
        ["block1_k0", "block1_k1", "block1_k2", "block2_k0", "block2_k1", "block2_k2", "block3_k0", "block3_k1", "block3_k2"]
    );
    let again = block_feature_eval(&ckpt, &vit, &data, 2, 1, &quick(), "r").unwrap();
    assert_eq!(again, grid[4]);
}

#[test]
fn suite_probes_match_individual_probes() {
    let vit = tiny_vit();
    let data = ProcShapesConfig { n_train: 400, ..tiny_data() };
    let ckpt = tiny_ckpt(&vit);
    let (logistic, trained) = (ProbeConfig::default(), quick());
    let got = suite_probes(&ckpt, &vit, &data, &logistic, &trained, "r").unwrap();
    let expected = [
        linear_probe(&ckpt, &vit, &data, &logistic, "r").unwrap(),
        fewshot_logistic(&ckpt, &vit, &data, 0.01, &logistic, "r").unwrap(),
        fewshot_finetune(&ckpt, &vit, &data, 0.1, &trained, "r").unwrap(),
    ];
    assert_eq!(got, expected);
    let names: Vec<String> = ProbeKind::SUITE.iter().map(ToString::to_string).collect();
    assert_eq!(got.iter().map(|r| r.probe.clone()).collect::<Vec<_>>(), names);
}

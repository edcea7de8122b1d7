use std::collections::HashSet;

use super::*;
use crate::objectives::make_mask;
use crate::tensor::{prefix_matches, NamedParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_images(seed: u64, b: usize, cfg: &ViTConfig) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b * cfg.channels * cfg.image_size * cfg.image_size;
    Tensor::from_vec(
        &[b, cfg.channels, cfg.image_size, cfg.image_size],
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap()
}

fn small_cfg() -> ViTConfig {
    ViTConfig {
        image_size: 8,
        patch_size: 4,
        embed_dim: 16,
        depth: 3,
        heads: 2,
        decoder_dim: 8,
        decoder_depth: 1,
        proj_dim: 8,
        ..Default::default()
    }
}

#[test]
fn patchify_sizes() {
    let cfg = ViTConfig { image_size: 8, ..Default::default() };
    let p = patchify(&rand_images(0, 1, &cfg), &cfg).unwrap();
    assert_eq!(p.shape(), &[1, 4, 48]);
}

#[test]
fn constant_image_gives_equal_patches() {
    let cfg = ViTConfig { image_size: 8, ..Default::default() };
    let img = Tensor::<f32>::full(&[1, 3, 8, 8], 0.25);
    let p = patchify(&img, &cfg).unwrap();
    let rows: Vec<&[f32]> = p.data().chunks(48).collect();
    assert!(rows.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn patchify_layout() {
    let cfg = ViTConfig { image_size: 8, ..Default::default() };
    let data: Vec<f32> = (0..3 * 64).map(|i| i as f32).collect();
    let img = Tensor::from_vec(&[1, 3, 8, 8], data).unwrap();
    let p = patchify(&img, &cfg).unwrap();
    // patch 1 = grid (0,1); its first value is pixel (0,4) of channel 0,
    // the next is the same pixel in channel 1
    assert_eq!(p.data()[48], 4.0);
    assert_eq!(p.data()[49], 64.0 + 4.0);
    assert!(patchify(&Tensor::<f32>::zeros(&[1, 3, 8, 4]), &cfg).is_err());
}

proptest! {
    #[test]
    fn unpatchify_inverts_patchify(seed in any::<u64>(), b in 1usize..3) {
        let cfg = ViTConfig { image_size: 8, patch_size: 2, ..Default::default() };
        let img = rand_images(seed, b, &cfg);
        let back = unpatchify(&patchify(&img, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn config_validation() {
    assert!(ViTConfig { image_size: 30, ..Default::default() }.validate().is_err());
    assert!(ViTConfig { embed_dim: 66, ..Default::default() }.validate().is_err());
    assert!(ViTConfig::default().validate().is_ok());
    assert_eq!(ViTConfig::default().tokens(), 65);
    assert_eq!(ViTConfig { use_class_token: false, ..Default::default() }.tokens(), 64);
}

#[test]
fn default_shapes() {
    let cfg = ViTConfig::default();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f32> = enc.init_params(1).unwrap();
    let imgs = rand_images(1, 2, &cfg);
    assert_eq!(enc.encode(&store, &imgs, None).unwrap().shape(), &[2, 65, 64]);

    let masks: Vec<_> = (0..2).map(|i| make_mask(64, 0.75, 9, i).unwrap()).collect();
    assert_eq!(enc.encode(&store, &imgs, Some(&masks)).unwrap().shape(), &[2, 17, 64]);

    let maps = enc.attention_maps(&store, &imgs).unwrap();
    assert_eq!(maps.len(), 6);
    assert_eq!(maps[0].shape(), &[2, 4, 65, 65]);
    for m in &maps {
        for row in m.data().chunks(65) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-5);
        }
    }
    assert_eq!(enc.feature(&store, &imgs).unwrap().shape(), &[2, 64]);
}

#[test]
fn parameter_counts_match_closed_form() {
    for cfg in [ViTConfig::default(), small_cfg(), ViTConfig { use_class_token: false, mlp_ratio: 2, ..small_cfg() }] {
        let enc = ViTEncoder::new(cfg.clone()).unwrap();
        let s: NamedParamStore<f32> = enc.init_params(0).unwrap();
        assert_eq!(s.num_scalars(), cfg.encoder_param_count());
        let dec: NamedParamStore<f32> = MaeDecoder::new(cfg.clone()).unwrap().init_params(0).unwrap();
        assert_eq!(dec.num_scalars(), cfg.decoder_param_count());
        let heads: NamedParamStore<f32> = Heads::new(&cfg).init_params(0).unwrap();
        assert_eq!(heads.num_scalars(), cfg.heads_param_count());
    }
    // 48·64+64 + 64 + 6·(12·64²+13·64) + 128
    assert_eq!(ViTConfig::default().encoder_param_count(), 3136 + 64 + 6 * 49_984 + 128);
}

#[test]
fn block_groups_partition_encoder_paths() {
    for cfg in [ViTConfig::default(), ViTConfig { use_class_token: false, ..small_cfg() }] {
        let enc = ViTEncoder::new(cfg).unwrap();
        let paths = enc.param_paths();
        let groups = enc.block_groups.labelled();
        let mut seen = HashSet::new();
        for p in &paths {
            let owners: Vec<&String> = groups
                .iter()
                .filter(|(_, prefixes)| prefixes.iter().any(|pre| prefix_matches(p, pre)))
                .map(|(l, _)| l)
                .collect();
            assert_eq!(owners.len(), 1, "{p} owned by {owners:?}");
            seen.insert(p.clone());
        }
        assert_eq!(seen.len(), paths.len());
    }
}

#[test]
fn batch_permutation_permutes_outputs() {
    let cfg = small_cfg();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f32> = enc.init_params(3).unwrap();
    let imgs = rand_images(5, 3, &cfg);
    let per = imgs.numel() / 3;
    let perm = [2usize, 0, 1];
    let pdata: Vec<f32> = perm.iter().flat_map(|&i| imgs.data()[i * per..(i + 1) * per].to_vec()).collect();
    let pimgs = Tensor::from_vec(imgs.shape(), pdata).unwrap();
    let a = enc.encode(&store, &imgs, None).unwrap();
    let b = enc.encode(&store, &pimgs, None).unwrap();
    let tok = a.numel() / 3;
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(&b.data()[j * tok..(j + 1) * tok], &a.data()[i * tok..(i + 1) * tok]);
    }
}

#[test]
fn duplicated_images_give_identical_features() {
    let cfg = small_cfg();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f32> = enc.init_params(3).unwrap();
    let one = rand_images(7, 1, &cfg);
    let two = Tensor::concat(&[one.clone(), one], 0).unwrap();
    let f = enc.feature(&store, &two).unwrap();
    let d = cfg.embed_dim;
    assert_eq!(&f.data()[..d], &f.data()[d..]);
    for k in 0..=cfg.depth {
        assert_eq!(enc.feature_at(&store, &two, k).unwrap().shape(), &[2, d]);
    }
    assert!(enc.feature_at(&store, &two, cfg.depth + 1).is_err());
}

#[test]
fn masked_encode_equals_forward_on_gathered_tokens() {
    let cfg = small_cfg();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f64> = enc.init_params(11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let imgs = Tensor::<f64>::from_vec(&[2, 3, 8, 8], (0..384).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let masks: Vec<_> = (0..2).map(|i| make_mask(4, 0.5, 1, i).unwrap()).collect();
    let masked = enc.encode(&store, &imgs, Some(&masks)).unwrap();

    // Reference: embed everything, then keep the class token and visible
    // patches by hand and run the blocks on that shorter sequence.
    let (full, seq) = enc.embed(&store, &imgs, None).unwrap();
    let mut keep = Vec::new();
    for (b, m) in masks.iter().enumerate() {
        keep.push(b * seq);
        keep.extend(m.visible_indices().into_iter().map(|p| b * seq + 1 + p));
    }
    let mut x = full.gather_rows(&keep).unwrap();
    let l = 1 + masks[0].visible_indices().len();
    for i in 1..=cfg.depth {
        x = layers::block_forward(&store, &ViTEncoder::block_prefix(i), &x, 2, l, cfg.heads).unwrap().0;
    }
    let x = layers::layernorm(&store, "encoder.norm", &x).unwrap();
    for (a, b) in masked.data().iter().zip(x.data()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn mask_validation() {
    let cfg = small_cfg();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let store: NamedParamStore<f32> = enc.init_params(0).unwrap();
    let imgs = rand_images(0, 2, &cfg);
    let one = vec![make_mask(4, 0.5, 0, 0).unwrap()];
    assert!(enc.encode(&store, &imgs, Some(&one)).is_err());
    let all = crate::objectives::MaskSpec {
        mask_ratio: 1.0,
        n_patch: 4,
        masked_indices: vec![0, 1, 2, 3],
        rng_seed: 0,
    };
    assert!(enc.encode(&store, &imgs, Some(&[all.clone(), all])).is_err());
}

#[test]
fn decoder_predicts_every_patch() {
    let cfg = ViTConfig::default();
    let enc = ViTEncoder::new(cfg.clone()).unwrap();
    let dec = MaeDecoder::new(cfg.clone()).unwrap();
    let mut store: NamedParamStore<f32> = enc.init_params(0).unwrap();
    store.extend(dec.init_params(0).unwrap()).unwrap();
    let imgs = rand_images(0, 2, &cfg);
    let masks: Vec<_> = (0..2).map(|i| make_mask(64, 0.75, 0, i).unwrap()).collect();
    let tokens = enc.encode(&store, &imgs, Some(&masks)).unwrap();
    let pred = dec.forward(&store, &tokens, &masks).unwrap();
    assert_eq!(pred.shape(), &[2, 64, 48]);
}

#[test]
fn init_is_order_independent_and_seeded() {
    let enc = ViTEncoder::new(small_cfg()).unwrap();
    let a: NamedParamStore<f32> = enc.init_params(5).unwrap();
    let b: NamedParamStore<f32> = enc.init_params(5).unwrap();
    let c: NamedParamStore<f32> = enc.init_params(6).unwrap();
    assert!(a.bitwise_eq(&b));
    assert!(!a.bitwise_eq(&c));
    let w = a.get("encoder.block1.attn.q.weight").unwrap();
    assert!(w.data().iter().all(|v| v.abs() <= 0.04 + 1e-7));
    assert!(a.get("encoder.block1.norm1.gain").unwrap().data().iter().all(|&v| v == 1.0));
    assert!(a.get("encoder.block1.attn.q.bias").unwrap().data().iter().all(|&v| v == 0.0));
}

use proptest::prelude::*;

use super::*;

fn small() -> ProcShapesConfig {
    ProcShapesConfig { n_train: 400, n_eval: 100, ..Default::default() }
}

#[test]
fn generation_is_pure_and_labels_cycle() {
    let cfg = small();
    let (a, la) = generate(&cfg, 17).unwrap();
    let (b, lb) = generate(&cfg, 17).unwrap();
    assert_eq!(a, b);
    assert_eq!((la, lb), (7, 7));
    assert_eq!(a.len(), 3 * 32 * 32);
    let other = generate(&ProcShapesConfig { seed: 1, ..cfg.clone() }, 17).unwrap().0;
    assert_ne!(a, other);
    assert!(generate(&cfg, cfg.total()).is_err());
}

#[test]
fn labels_are_balanced() {
    let cfg = small();
    let mut counts = [0usize; 10];
    for i in cfg.train_indices() {
        counts[generate(&cfg, i).unwrap().1] += 1;
    }
    assert!(counts.iter().all(|&c| c == 40));
}

#[test]
fn pixel_histogram_is_spread() {
    let cfg = small();
    let mut hist = [0usize; 10];
    for i in 0..100 {
        for v in generate(&cfg, i).unwrap().0 {
            hist[((v * 10.0) as usize).min(9)] += 1;
        }
    }
    let total: usize = hist.iter().sum();
    // no single decile holds most of the mass and both ends are used
    assert!(hist.iter().all(|&h| h < total / 2), "{hist:?}");
    assert!(hist[0] > 0 && hist[9] > 0, "{hist:?}");
}

#[test]
fn hue_does_not_predict_the_label() {
    let cfg = small();
    // mean red-minus-blue per class stays near the global mean
    let mut per_class = vec![(0f64, 0usize); 10];
    for i in 0..cfg.n_train {
        let (img, l) = generate(&cfg, i).unwrap();
        let plane = 32 * 32;
        let rb: f64 = (0..plane).map(|p| img[p] as f64 - img[2 * plane + p] as f64).sum::<f64>() / plane as f64;
        per_class[l].0 += rb;
        per_class[l].1 += 1;
    }
    let means: Vec<f64> = per_class.iter().map(|(s, n)| s / *n as f64).collect();
    let spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1, "{means:?}");
}

#[test]
fn minimal_full_crop_is_identity() {
    let cfg = small();
    let img = generate(&cfg, 3).unwrap().0;
    let policy = AugPolicy { crop_scale: (1.0, 1.0), ..AugPolicy::minimal() };
    for step in 0..5 {
        assert_eq!(augment(&img, 32, &policy, 9, step, 0), img);
    }
}

#[test]
fn augment_is_deterministic_per_view() {
    let img = generate(&small(), 5).unwrap().0;
    let p = AugPolicy::strong();
    assert_eq!(augment(&img, 32, &p, 1, 2, 0), augment(&img, 32, &p, 1, 2, 0));
    assert_ne!(augment(&img, 32, &p, 1, 2, 0), augment(&img, 32, &p, 1, 2, 1));
    assert_ne!(augment(&img, 32, &p, 1, 2, 0), augment(&img, 32, &p, 1, 3, 0));
}

#[test]
fn few_shot_is_balanced_and_nested() {
    let cfg = ProcShapesConfig::default();
    let one = few_shot_indices(&cfg, 0.01, 4).unwrap();
    let ten = few_shot_indices(&cfg, 0.10, 4).unwrap();
    assert_eq!(one.len(), 100);
    assert_eq!(ten.len(), 1000);
    for c in 0..10 {
        assert_eq!(one.iter().filter(|&&i| cfg.label(i) == c).count(), 10);
    }
    assert!(one.iter().all(|i| ten.contains(i)));
    assert!(one.iter().all(|&i| i < cfg.n_train));
    assert_eq!(few_shot_indices(&cfg, 1.0, 0).unwrap().len(), cfg.n_train);
    assert!(few_shot_indices(&cfg, 0.0005, 0).is_err());
    assert!(few_shot_indices(&cfg, 1.5, 0).is_err());
}

#[test]
fn dump_round_trip() {
    let cfg = small();
    let mut buf = Vec::new();
    write_dump(&cfg, &[0, 1, 2], &mut buf).unwrap();
    assert_eq!(&buf[..4], b"PSHP");
    assert_eq!(buf.len(), 4 + 16 + 3 * (1 + 4 * 3072));
    let (h, samples) = read_dump(&mut buf.as_slice()).unwrap();
    assert_eq!(h, DumpHeader { version: DUMP_VERSION, count: 3, height: 32, width: 32 });
    for (i, (l, px)) in samples.iter().enumerate() {
        let (img, label) = generate(&cfg, i).unwrap();
        assert_eq!(*l as usize, label);
        assert_eq!(px, &img);
    }
    buf[0] = b'X';
    assert!(read_dump(&mut buf.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn pixels_stay_in_unit_range(index in 0usize..500, seed in 0u64..4, step in 0u64..1000, strong in any::<bool>()) {
        let cfg = ProcShapesConfig { seed, ..small() };
        let img = generate(&cfg, index).unwrap().0;
        prop_assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        let policy = if strong { AugPolicy::strong() } else { AugPolicy::minimal() };
        let out = augment(&img, 32, &policy, seed, step, 0);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

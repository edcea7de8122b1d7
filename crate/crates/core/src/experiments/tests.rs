use super::*;
use crate::error::Error;
use crate::eval::ProbeKind;
use crate::regimes::Regime;
use proptest::prelude::*;

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    for kv in [
        "vit.image_size=8",
        "vit.embed_dim=16",
        "vit.depth=3",
        "vit.heads=2",
        "vit.decoder_dim=8",
        "vit.decoder_depth=1",
        "vit.proj_dim=8",
        "data.n_classes=4",
        "data.n_train=400",
        "data.n_eval=40",
        "train.mim_epochs=1",
        "train.cl_epochs=1",
        "train.mtl_epochs=1",
        "train.batch_size=50",
        "finetune.epochs=1",
        "finetune.batch_size=16",
        "diag.conflict_batches=2",
        "diag.samples=16",
        "seed=3",
    ] {
        c.apply_override(kv).unwrap();
    }
    c.validate().unwrap();
    c
}

#[test]
fn resolved_text_round_trips() {
    for cfg in [ExperimentConfig::default(), tiny()] {
        let text = cfg.to_text();
        assert_eq!(text.lines().count(), ExperimentConfig::KEYS.len());
        assert_eq!(ExperimentConfig::from_text(&text).unwrap(), cfg);
    }
}

#[test]
fn every_key_reads_and_writes() {
    let cfg = ExperimentConfig::default();
    for key in ExperimentConfig::KEYS {
        let mut c = cfg.clone();
        c.set(key, &cfg.get(key).unwrap()).unwrap();
        assert_eq!(c, cfg, "{key}");
    }
}

#[test]
fn unknown_keys_and_bad_values_name_the_key() {
    let mut c = ExperimentConfig::default();
    match c.apply_override("vit.depht=6") {
        Err(Error::UnknownConfigKey(k)) => assert_eq!(k, "vit.depht"),
        other => panic!("unexpected {other:?}"),
    }
    let err = c.apply_override("vit.depth=abc").unwrap_err();
    assert!(matches!(&err, Error::InvalidConfigValue { key, .. } if key == "vit.depth"));
    assert!(err.to_string().contains("vit.depth"));
    assert!(ExperimentConfig::from_text("train.base_lr=NaN").is_err());
    assert!(ExperimentConfig::from_text("regime=mtl\nnot a pair").is_err());
}

#[test]
fn later_assignments_win_and_comments_are_ignored() {
    let c = ExperimentConfig::from_text("# comment\n\nvit.depth=4\nregime=mtl\nvit.depth=8\n").unwrap();
    assert_eq!(c.vit.depth, 8);
    assert_eq!(c.train.regime, Regime::Mtl);
    assert_eq!(c.data_config().image_size, c.vit.image_size);
    assert!(ExperimentConfig::from_text("vit.depth=5\nvit.heads=3").is_err());
}

#[test]
fn derived_settings_follow_global_keys() {
    let c = tiny();
    assert_eq!(c.regime_config().seed, 3);
    assert_eq!(c.regime_config().conflict_batches, 2);
    assert_eq!(c.probe_config(ProbeKind::Linear).seed, 3);
    assert_eq!(c.data_config().image_size, 8);
    assert_eq!(c.run_id(), "layer_grafted-s3");
}

proptest! {
    #[test]
    fn random_configs_round_trip(
        seed in any::<u64>(),
        depth in 1usize..12,
        lr in 1e-7f64..1e-1,
        ratio in 0.0f64..0.99,
        stages in proptest::collection::vec(1e-7f64..1e-2, 1..5),
        regime in 0usize..6,
    ) {
        let mut c = ExperimentConfig::default();
        c.seed = seed;
        c.vit.depth = depth;
        c.train.base_lr = lr;
        c.train.mask_ratio = ratio;
        c.train.stage_plan.base_lr = stages;
        c.train.regime = Regime::SUITE[regime];
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn golden_headers() {
    assert_eq!(
        train_log_header(3).join(","),
        "run_id,phase,epoch,step,loss_total,loss_mim,loss_cl,lr_stage1,lr_stage2,lr_stage3"
    );
    assert_eq!(CONFLICT_HEADER.join(","), "run_id,epoch,block,batch,cosine");
    assert_eq!(VIC_HEADER.join(","), "run_id,block,variance,invariance,covariance");
    assert_eq!(ATTN_HEADER.join(","), "run_id,block,head,mean_distance_px");
    assert_eq!(RESULTS_HEADER.join(","), "run_id,regime,probe,seed,top1");
    assert_eq!(grid_header(3).join(","), "run_id,lr_stage1,lr_stage2,lr_stage3,linear_top1,finetune_top1");
}

#[test]
fn missing_values_are_empty_fields() {
    let row = crate::regimes::TrainLogRow {
        phase: "mim".into(),
        epoch: 0,
        step: 4,
        loss_total: 0.5,
        loss_mim: Some(0.5),
        loss_cl: None,
        lr_stage: vec![1e-4, f64::NAN],
    };
    let csv = train_log_table(3, "r", &[row]).to_csv();
    assert_eq!(csv.lines().nth(1).unwrap(), "r,mim,0,4,0.5,0.5,,0.0001,,");
    assert!(!csv.contains("NaN"));
    assert_eq!(opt(Some(f64::INFINITY)), "");
}

#[test]
fn appending_keeps_one_header_and_rejects_a_different_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut t = Table::new(&RESULTS_HEADER);
    t.push(vec!["a".into(), "mim".into(), "linear".into(), "0".into(), "0.5".into()]);
    t.append_to(&path).unwrap();
    t.append_to(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "run_id,regime,probe,seed,top1\na,mim,linear,0,0.5\na,mim,linear,0,0.5\n");
    assert!(Table::new(&VIC_HEADER).append_to(&path).is_err());
}

#[test]
fn grid_enumeration() {
    let cells = grid_cells(&crate::regimes::STAGE_LR_GRID, 3);
    assert_eq!(cells.len(), 27);
    assert_eq!(cells[0], vec![1.5e-6; 3]);
    assert_eq!(cells[1], vec![1.5e-6, 1.5e-6, 1.5e-5]);
    assert_eq!(cells[26], vec![1.5e-4; 3]);
    assert_eq!(grid_cells(&[2.0], 3), vec![vec![2.0; 3]]);
}

#[test]
fn seed_conflicts_are_rejected() {
    let (a, mut b) = (tiny(), tiny());
    assert!(check_seed(&a, Some(&b)).is_ok());
    b.seed = 9;
    assert!(matches!(check_seed(&a, Some(&b)), Err(Error::SeedConflict { checkpoint: 9, requested: 3 })));
    assert!(check_seed(&a, None).is_ok());
}

#[test]
fn out_dir_precedence() {
    let c = tiny();
    let flag = std::path::Path::new("flag");
    assert_eq!(resolve_out_dir(&c, Some(flag), Some("env")), flag);
    assert_eq!(resolve_out_dir(&c, None, Some("env")), std::path::Path::new("env"));
    assert_eq!(resolve_out_dir(&c, None, None), c.out_dir);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let mut cfg = tiny().with_regime(Regime::Mtl);
    cfg.diag.vic = false;
    let a = train_run(&cfg, None).unwrap();
    let b = train_run(&ExperimentConfig::from_text(&cfg.to_text()).unwrap(), None).unwrap();
    assert!(a.checkpoint.bitwise_eq(&b.checkpoint));
    assert_eq!(a.train, b.train);
    assert_eq!(a.attn, b.attn);
    assert!(a.train.log.iter().all(|r| r.loss_mim.is_some() && r.loss_cl.is_some()));
    assert_eq!(a.train.conflicts.len(), 2 * cfg.vit.depth);
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny().with_regime(Regime::Mtl);
    let out = train_run(&cfg, None).unwrap();
    out.write(&cfg, dir.path()).unwrap();
    for f in [CONFIG_FILE, CHECKPOINT_FILE, TRAIN_LOG_FILE, CONFLICT_FILE, VIC_FILE, ATTN_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = checkpoint_config(&dir.path().join(CHECKPOINT_FILE)).unwrap().unwrap();
    assert_eq!(back, cfg);
    let vic = std::fs::read_to_string(dir.path().join(VIC_FILE)).unwrap();
    assert_eq!(vic.lines().count(), 1 + cfg.vit.depth);
    let attn = std::fs::read_to_string(dir.path().join(ATTN_FILE)).unwrap();
    assert_eq!(attn.lines().count(), 1 + cfg.vit.depth * cfg.vit.heads);
}

#[test]
fn checkpoint_conflict_has_depth_rows_per_batch() {
    let cfg = tiny().with_regime(Regime::Mim);
    let mut quick = cfg.clone();
    quick.diag.vic = false;
    quick.diag.attn = false;
    let out = train_run(&quick, None).unwrap();
    let (records, skipped) = conflict_rows(&cfg, &out.checkpoint).unwrap();
    assert_eq!(skipped, 0);
    assert_eq!(records.len(), cfg.diag.conflict_batches * cfg.vit.depth);
    for b in 0..cfg.diag.conflict_batches {
        let blocks: Vec<usize> = records.iter().filter(|r| r.batch == b).map(|r| r.block).collect();
        assert_eq!(blocks, (1..=cfg.vit.depth).collect::<Vec<_>>());
    }
    assert!(records.iter().all(|r| r.cosine.abs() <= 1.0 + 1e-6));
}

fn phase1(cfg: &ExperimentConfig) -> crate::checkpoint::Checkpoint<f32> {
    let mut c = cfg.with_regime(Regime::Mim);
    c.diag.vic = false;
    c.diag.attn = false;
    train_run(&c, None).unwrap().checkpoint
}

#[test]
fn single_value_grid_is_a_layer_grafted_run() {
    let mut cfg = tiny();
    cfg.grid.values = vec![1.5e-4];
    let p1 = phase1(&cfg);
    let g = lr_grid_search(&cfg, &p1, None).unwrap();
    assert_eq!(g.cells.len(), 1);
    assert_eq!(g.table(&cfg).rows.len(), 1);
    let mut plain = cfg.with_regime(Regime::LayerGrafted);
    plain.train.stage_plan.base_lr = vec![1.5e-4; 3];
    plain.diag.vic = false;
    plain.diag.attn = false;
    let run = train_run(&plain, Some(&p1)).unwrap();
    assert_eq!(g.cells[0].checkpoint_hash, run.checkpoint.content_hash());
    let probe = crate::eval::evaluate(
        &run.checkpoint,
        &plain.vit,
        &plain.data_config(),
        &plain.probe_config(ProbeKind::Linear),
        "x",
    )
    .unwrap();
    assert_eq!(g.cells[0].linear_top1, probe.top1);
}

#[test]
fn grid_cells_are_order_and_worker_invariant() {
    let mut cfg = tiny();
    cfg.grid.values = vec![1.5e-5, 1.5e-4];
    let p1 = phase1(&cfg);
    let forward = lr_grid_search(&cfg, &p1, None).unwrap();
    assert_eq!(forward.cells.len(), 8);
    let reversed: Vec<usize> = (0..8).rev().collect();
    cfg.grid.workers = 3;
    let shuffled = lr_grid_search(&cfg, &p1, Some(&reversed)).unwrap();
    assert_eq!(forward, shuffled);
    assert!(lr_grid_search(&cfg, &p1, Some(&[0, 1])).is_err());
    let best = forward.best_cell().linear_top1;
    assert!(forward.cells.iter().all(|c| c.linear_top1 <= best));
}

#[test]
fn suite_is_complete_and_deterministic() {
    let cfg = tiny();
    let mut lines = Vec::new();
    let a = reproduce_suite_with(&cfg, &mut |l| lines.push(l.to_string())).unwrap();
    assert_eq!(lines.len(), 12);
    assert_eq!(a.results.len(), 18);
    for (i, r) in a.results.iter().enumerate() {
        assert_eq!(r.regime, Regime::SUITE[i / 3].to_string());
        assert_eq!(r.probe, ProbeKind::SUITE[i % 3].to_string());
    }
    assert!(a.mtl_losses_logged && a.mtl_losses_add_up);
    let c = a.conflict.as_ref().unwrap();
    assert_eq!(c.boxes.blocks.len(), cfg.vit.depth);
    assert!(c.boxes.slope.is_finite());
    assert_eq!(a.trends.len(), 3);
    assert_eq!(a.results_table.rows.len(), 18);
    assert!(a.render().contains("| LayerGrafted |"));
    let b = reproduce_suite(&cfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    a.write(&cfg, dir.path()).unwrap();
    let results = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(results.lines().count(), 19);
}

#[test]
fn suite_reuses_single_objective_checkpoints_as_phase_one() {
    let cfg = tiny();
    let mut off = cfg.clone();
    off.diag.vic = false;
    off.diag.attn = false;
    let mim = train_run(&off.with_regime(Regime::Mim), None).unwrap();
    let graft = train_run(&off.with_regime(Regime::LayerGrafted), None).unwrap();
    assert!(graft.phase1.unwrap().bitwise_eq(&mim.checkpoint));
}

use kcr::training::{parse_csv, run_pipeline, run_retrain, run_search, to_csv, ExperimentConfig, Phase};

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 5;
    cfg.data.synthetic.n_train = 96;
    cfg.data.synthetic.n_val = 48;
    cfg.data.synthetic.image_side = 8;
    cfg.model.image_side = 8;
    cfg.model.dim = 16;
    cfg.model.heads = 2;
    cfg.model.depth = 1;
    cfg.model.d_min = 2;
    cfg.run.batch = 32;
    cfg.run.t_search = 2;
    cfg.run.t_train = 3;
    cfg.run.t_warm = 1;
    cfg.run.m_land = 24;
    cfg.run.eval_chunk = 40;
    cfg.validate().unwrap();
    cfg
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = tiny();
    let splits = cfg.load_data().unwrap();
    let a = to_csv(&run_pipeline(&cfg, &splits).unwrap().records);
    let b = to_csv(&run_pipeline(&cfg, &splits).unwrap().records);
    assert_eq!(a, b);
    let rows = parse_csv(&a).unwrap();
    assert_eq!(rows.len(), 5);
    let phases: Vec<Phase> = rows.iter().map(|r| r.phase).collect();
    assert_eq!(phases, [Phase::Search, Phase::Search, Phase::Warmup, Phase::Regularized, Phase::Regularized]);
}

#[test]
fn records_carry_consistent_bounds() {
    let cfg = tiny();
    let splits = cfg.load_data().unwrap();
    let out = run_pipeline(&cfg, &splits).unwrap();
    let n = splits.train.len() as f64;
    for r in &out.records {
        let w = r.akc + cfg.run.x / n;
        assert_eq!(r.bound.upper, r.bound.train_residual + w);
        assert_eq!(r.bound.lower, r.bound.train_residual - w);
        assert_eq!(r.bound.train_residual, r.train_sq);
        assert!(r.bound.kc >= 0.0 && r.akc >= 0.0);
        assert!((0.0..=1.0).contains(&r.val_acc));
    }
    for r in out.records.iter().filter(|r| r.phase != Phase::Search) {
        assert_eq!(r.flops, out.architecture.total_flops);
    }
    assert_eq!(out.net.hard_widths(), out.architecture.blocks.iter().map(|b| b.d_tilde).collect::<Vec<_>>());
}

#[test]
fn no_search_and_no_cost_is_plain_training() {
    let mut cfg = tiny();
    cfg.run.t_search = 0;
    cfg.run.lambda = 0.0;
    let splits = cfg.load_data().unwrap();
    let out = run_pipeline(&cfg, &splits).unwrap();
    assert!(out.architecture.blocks.iter().all(|b| b.mask.iter().all(|&g| g == 1)));
    assert_eq!(out.records.len(), cfg.run.t_train);
    assert!(out.records.iter().all(|r| r.phase != Phase::Search));
}

#[test]
fn zero_weight_leaves_the_kcr_column_empty() {
    let mut cfg = tiny();
    cfg.run.kcr_weight = 0.0;
    let splits = cfg.load_data().unwrap();
    let search = run_search(&cfg, &splits).unwrap();
    let out = run_retrain(&cfg, &splits, &search).unwrap();
    assert!(out.records.iter().all(|r| r.kcr == 0.0));

    cfg.run.kcr_weight = 1.0;
    let reg = run_retrain(&cfg, &splits, &search).unwrap();
    assert!(reg.records.iter().filter(|r| r.phase == Phase::Regularized).all(|r| r.kcr != 0.0));
    // identical until the regularizer switches on
    let warm = |o: &kcr::training::PipelineOutput| {
        o.records.iter().filter(|r| r.phase != Phase::Regularized).map(|r| r.to_csv_row()).collect::<Vec<_>>()
    };
    assert_eq!(warm(&out), warm(&reg));
}

#[test]
fn warm_start_of_zero_regularizes_from_the_first_epoch() {
    let mut cfg = tiny();
    cfg.run.t_warm = 0;
    let splits = cfg.load_data().unwrap();
    let out = run_pipeline(&cfg, &splits).unwrap();
    let retrain: Vec<_> = out.records.iter().filter(|r| r.phase != Phase::Search).collect();
    assert!(retrain.iter().all(|r| r.phase == Phase::Regularized));
}

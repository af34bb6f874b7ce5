use hmsf_core::cpf::{cpf_predict, cpf_train, extract_alpha, mlp_distill, CpfConfig, CpfContext};
use hmsf_core::graphdata::make_split;
use hmsf_core::hmsf::{run_pipeline, PipelineSettings};
use hmsf_core::models::{evaluate, grid_search, train_supervised, GnnGrid, GraphInputs};
use hmsf_core::synthetic::{two_clusters, BlockModel};
use hmsf_core::{Activation, FinalChoice, ModelKind, SplitScheme, TrainConfig, TrainReport};

fn strip_time(mut r: TrainReport) -> TrainReport {
    r.wall_time_secs = 0.0;
    r
}

fn quick(model: ModelKind) -> TrainConfig {
    TrainConfig {
        max_epochs: 200,
        patience: 50,
        ..TrainConfig::new(model)
    }
}

#[test]
fn gcn_fits_two_clusters() {
    let g = two_clusters(10, true);
    let split = make_split(&g, SplitScheme::H2gcn, 0).unwrap();
    let inputs = GraphInputs::new(&g);
    let cfg = TrainConfig {
        patience: 200,
        ..quick(ModelKind::Gcn)
    };
    let (net, report) = train_supervised(&inputs, &split, &cfg).unwrap();
    let pred = net.predict(&inputs).unwrap();
    assert_eq!(evaluate(&pred, g.labels(), &split.train).unwrap(), 1.0);
    assert!(report.test_acc >= 0.95);
    assert!(report.best_val_epoch <= report.final_epoch);
    for r in 0..pred.rows() {
        let s: f64 = pred.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn h2gcn_fits_two_clusters() {
    for hops in [1, 2] {
        let g = two_clusters(10, true);
        let split = make_split(&g, SplitScheme::H2gcn, 1).unwrap();
        let inputs = GraphInputs::new(&g);
        let cfg = TrainConfig {
            hops,
            ..quick(ModelKind::H2gcn)
        };
        let (_, report) = train_supervised(&inputs, &split, &cfg).unwrap();
        assert!(report.test_acc >= 0.95, "K={hops}: {}", report.test_acc);
    }
}

#[test]
fn training_is_deterministic() {
    let g = BlockModel::default().generate(3).unwrap();
    let split = make_split(&g, SplitScheme::H2gcn, 3).unwrap();
    let inputs = GraphInputs::new(&g);
    for model in [ModelKind::Gcn, ModelKind::H2gcn, ModelKind::Mlp] {
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 30,
            seed: 3,
            ..TrainConfig::new(model)
        };
        let (a, ra) = train_supervised(&inputs, &split, &cfg).unwrap();
        let (b, rb) = train_supervised(&inputs, &split, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(strip_time(ra), strip_time(rb));
    }
}

#[test]
fn early_stopping_respects_patience() {
    let g = BlockModel::default().generate(4).unwrap();
    let split = make_split(&g, SplitScheme::H2gcn, 0).unwrap();
    let inputs = GraphInputs::new(&g);
    for patience in [0, 5, 20] {
        let cfg = TrainConfig {
            max_epochs: 400,
            patience,
            ..TrainConfig::new(ModelKind::Gcn)
        };
        let (_, r) = train_supervised(&inputs, &split, &cfg).unwrap();
        assert!(r.final_epoch - r.best_val_loss_epoch <= patience.max(1));
        assert!(r.final_epoch < 399, "patience {patience} never triggered");
        assert_eq!(r.val_loss.len(), r.final_epoch + 1);
        let best = r.val_acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.val_acc[r.best_val_epoch], best);
        assert!(r.val_acc[..r.best_val_epoch].iter().all(|&a| a < best));
    }
}

#[test]
fn grid_search_picks_best_validation_point() {
    let g = BlockModel {
        nodes: 120,
        ..BlockModel::default()
    }
    .generate(5)
    .unwrap();
    let split = make_split(&g, SplitScheme::H2gcn, 0).unwrap();
    let inputs = GraphInputs::new(&g);
    let base = TrainConfig {
        max_epochs: 60,
        patience: 60,
        ..TrainConfig::new(ModelKind::Gcn)
    };
    let single = GnnGrid {
        dropout: vec![0.5],
        weight_decay: vec![5e-4],
        activation: vec![Activation::Relu],
        hops: vec![1],
    };
    let (chosen, points) = grid_search(&inputs, &split, &base, &single).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(chosen.dropout, 0.5);

    let grid = GnnGrid::standard(ModelKind::Gcn);
    let (chosen, points) = grid_search(&inputs, &split, &base, &grid).unwrap();
    let best = points
        .iter()
        .map(|p| p.val_acc)
        .fold(f64::NEG_INFINITY, f64::max);
    let first_best = points.iter().find(|p| p.val_acc == best).unwrap();
    assert_eq!(chosen, first_best.config);
    let (again, _) = grid_search(&inputs, &split, &base, &grid).unwrap();
    assert_eq!(again, chosen);

    let empty = GnnGrid {
        dropout: vec![],
        ..grid
    };
    assert!(grid_search(&inputs, &split, &base, &empty).is_err());
}

#[test]
fn distillation_loss_decreases_and_is_deterministic() {
    let g = two_clusters(5, true);
    let split = make_split(&g, SplitScheme::H2gcn, 0).unwrap();
    let inputs = GraphInputs::new(&g);
    // one-hot labels stand in for a teacher
    let mut teacher = hmsf_core::DenseMatrix::zeros(g.num_nodes(), 2);
    for v in 0..g.num_nodes() {
        teacher.set(v, g.label(v).unwrap(), 1.0);
    }
    let cfg = CpfConfig {
        max_epochs: 30,
        patience: 30,
        mlp_dropout: 0.0,
        plp_dropout: 0.0,
        ..CpfConfig::default()
    };
    let (params, report) = cpf_train(&inputs, &split, &teacher, &cfg).unwrap();
    for w in report.train_loss[..5].windows(2) {
        assert!(w[1] < w[0], "loss went {} -> {}", w[0], w[1]);
    }
    let (params2, report2) = cpf_train(&inputs, &split, &teacher, &cfg).unwrap();
    assert_eq!(params, params2);
    assert_eq!(report.train_loss, report2.train_loss);
    assert!(extract_alpha(&params).iter().all(|&a| a > 0.0 && a < 1.0));

    let ctx = CpfContext::new(&inputs, &split).unwrap();
    let pred = cpf_predict(&params, &inputs, &ctx, &cfg).unwrap();
    for (i, &v) in split.train.iter().enumerate() {
        let y = g.label(v).unwrap();
        assert_eq!(pred.get(v, y), 1.0, "train row {i} not clamped");
    }
}

#[test]
fn cpf_patience_zero_stops_one_past_best() {
    let g = BlockModel::default().generate(8).unwrap();
    let split = make_split(&g, SplitScheme::H2gcn, 0).unwrap();
    let inputs = GraphInputs::new(&g);
    let teacher = hmsf_core::DenseMatrix::filled(g.num_nodes(), g.num_classes(), 1.0 / 3.0);
    let cfg = CpfConfig {
        max_epochs: 200,
        patience: 0,
        ..CpfConfig::default()
    };
    let (_, r) = cpf_train(&inputs, &split, &teacher, &cfg).unwrap();
    assert!(r.final_epoch - r.best_val_loss_epoch <= 1);
}

#[test]
fn zero_share_student_is_mlp_distillation() {
    let g = BlockModel {
        nodes: 90,
        ..BlockModel::default()
    }
    .generate(2)
    .unwrap();
    let split = make_split(&g, SplitScheme::H2gcn, 2).unwrap();
    let inputs = GraphInputs::new(&g);
    let teacher_cfg = TrainConfig {
        max_epochs: 40,
        patience: 40,
        ..TrainConfig::new(ModelKind::Gcn)
    };
    let (net, _) = train_supervised(&inputs, &split, &teacher_cfg).unwrap();
    let teacher = net.predict(&inputs).unwrap();
    let cfg = CpfConfig {
        max_epochs: 40,
        patience: 40,
        force_alpha_zero: true,
        seed: 2,
        ..CpfConfig::default()
    };
    let (params, _) = cpf_train(&inputs, &split, &teacher, &cfg).unwrap();
    let (mlp, mlp_pred) = mlp_distill(&inputs, &split, &teacher, &cfg).unwrap();
    assert_eq!(params.mlp, mlp);
    let ctx = CpfContext::new(&inputs, &split).unwrap();
    let pred = cpf_predict(&params, &inputs, &ctx, &cfg).unwrap();
    for v in split.unlabeled(g.num_nodes()) {
        assert_eq!(pred.row(v), mlp_pred.row(v));
    }
}

#[test]
fn pipeline_on_sparse_homophilous_toy_distills_h2gcn() {
    let g = two_clusters(10, false);
    let splits: Vec<_> = (0..2)
        .map(|s| make_split(&g, SplitScheme::H2gcn, s).unwrap())
        .collect();
    let inputs = GraphInputs::new(&g);
    let mut settings = PipelineSettings::default();
    settings.gnn_base.max_epochs = 100;
    settings.gnn_base.patience = 100;
    settings.cpf_base.max_epochs = 60;
    settings.cpf_base.patience = 60;
    settings.h2gcn_grid = GnnGrid {
        dropout: vec![0.0],
        weight_decay: vec![5e-4],
        activation: vec![Activation::Relu],
        hops: vec![1],
    };
    settings.cpf_grid.mlp_dropout = vec![0.5];
    settings.cpf_grid.lr = vec![0.01];
    let out = run_pipeline(&inputs, &splits, &settings).unwrap();
    for d in &out.decisions {
        assert!(d.is_consistent());
        assert_eq!(d.teacher, ModelKind::H2gcn);
        assert_eq!(d.final_choice, FinalChoice::CpfOfTeacher);
        assert_eq!(d.h_true, Some(1.0));
    }
    let again = run_pipeline(&inputs, &splits, &settings).unwrap();
    assert_eq!(out.decisions, again.decisions);
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hmsf_core::analysis::{alpha_vs_homophily, hop_aggregate_variance, summarize_variance};
use hmsf_core::checkpoint::{Checkpoint, Payload};
use hmsf_core::cpf::{cpf_grid_search, effective_alpha, write_alpha_tsv, CpfConfig, CpfGrid};
use hmsf_core::graphdata::{
    average_degree, build_neighborhoods, edge_homophily, load_graph, load_or_make_split,
    make_split, node_homophily,
};
use hmsf_core::hmsf::{
    estimate_homophily, evaluate_arms, run_pipeline, score_thresholds, sweep_thresholds,
    train_student, train_teacher, ArmSeed, PipelineSettings, Strategy,
};
use hmsf_core::models::{grid_search, GnnGrid, GraphInputs};
use hmsf_core::synthetic::BlockModel;
use hmsf_core::{Graph, ModelKind, Split, SplitScheme, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::report::{
    create_dir, hash_dataset, write_csv, write_json, Fixed4, Manifest, Pct, SummaryRow,
};
use crate::{
    resolve_data, AnalysisKind, AnalyzeArgs, CpfGridArgs, DataArgs, DistillArgs, GnnGridArgs,
    IndicatorsArgs, SelectArgs, SplitArgs, SweepArgs, SynthArgs, TrainArgs,
};

struct Dataset {
    dir: PathBuf,
    graph: Graph,
}

impl Dataset {
    fn open(data: &str, root: Option<&PathBuf>, row_normalize: bool) -> Result<Self> {
        let dir = resolve_data(data, root).context("load")?;
        let graph = load_graph(&dir).with_context(|| format!("load: {}", dir.display()))?;
        let graph = if row_normalize {
            graph.row_normalized()
        } else {
            graph
        };
        Ok(Self { dir, graph })
    }

    fn from_args(a: &DataArgs) -> Result<Self> {
        Self::open(&a.data, a.data_root.as_ref(), a.row_normalize)
    }

    fn name(&self) -> &str {
        self.graph.name()
    }

    fn splits(&self, scheme: SplitScheme, seeds: &[u64]) -> Result<Vec<Split>> {
        seeds
            .iter()
            .map(|&s| load_or_make_split(&self.dir, &self.graph, scheme, s))
            .collect::<hmsf_core::Result<_>>()
            .with_context(|| format!("split: {} ({scheme})", self.name()))
    }

    fn record(&self) -> Result<crate::report::DatasetRecord> {
        hash_dataset(self.name(), &self.dir).context("manifest")
    }
}

impl GnnGridArgs {
    fn base(&self, kind: ModelKind) -> TrainConfig {
        let d = TrainConfig::new(kind);
        let max_epochs = self.max_epochs.unwrap_or(d.max_epochs);
        TrainConfig {
            lr: self.lr.unwrap_or(d.lr),
            hidden: self.hidden.unwrap_or(d.hidden),
            max_epochs,
            patience: self.patience.unwrap_or(d.patience.min(max_epochs)),
            ..d
        }
    }

    fn grid(&self, kind: ModelKind) -> GnnGrid {
        let std = GnnGrid::standard(kind);
        let pick = |given: &[f64], default: Vec<f64>| {
            if given.is_empty() {
                default
            } else {
                given.to_vec()
            }
        };
        GnnGrid {
            dropout: pick(&self.dropout, std.dropout),
            weight_decay: pick(&self.weight_decay, std.weight_decay),
            activation: if self.activation.is_empty() {
                std.activation
            } else {
                self.activation.iter().map(|&a| a.into()).collect()
            },
            hops: if self.hops.is_empty() {
                std.hops
            } else {
                self.hops.clone()
            },
        }
    }
}

impl CpfGridArgs {
    fn base(&self) -> CpfConfig {
        let d = CpfConfig::default();
        let max_epochs = self.max_epochs.unwrap_or(d.max_epochs);
        CpfConfig {
            iterations: self.iterations.unwrap_or(d.iterations),
            plp_dropout: self.plp_dropout.unwrap_or(d.plp_dropout),
            max_epochs,
            patience: self.patience.unwrap_or(d.patience.min(max_epochs)),
            ..d
        }
    }

    fn grid(&self) -> CpfGrid {
        let d = CpfGrid::default();
        let pick = |given: &[f64], default: Vec<f64>| {
            if given.is_empty() {
                default
            } else {
                given.to_vec()
            }
        };
        CpfGrid {
            mlp_dropout: pick(&self.mlp_dropout, d.mlp_dropout),
            lr: pick(&self.lr, d.lr),
            weight_decay: pick(&self.weight_decay, d.weight_decay),
        }
    }
}

fn settings(beta: f64, gamma: f64, gnn: &GnnGridArgs, cpf: &CpfGridArgs) -> PipelineSettings {
    PipelineSettings {
        beta,
        gamma,
        gcn_grid: gnn.grid(ModelKind::Gcn),
        h2gcn_grid: gnn.grid(ModelKind::H2gcn),
        cpf_grid: cpf.grid(),
        gnn_base: gnn.base(ModelKind::Gcn),
        cpf_base: cpf.base(),
    }
}

#[derive(Serialize)]
struct IndicatorRow<'a> {
    dataset: &'a str,
    nodes: usize,
    edges: usize,
    classes: usize,
    features: usize,
    avg_degree: Fixed4,
    edge_homophily: Option<Fixed4>,
    estimated_homophily: Option<Fixed4>,
}

pub fn indicators(a: IndicatorsArgs) -> Result<()> {
    let teacher = a
        .teacher
        .as_deref()
        .map(|p| Checkpoint::load(p).with_context(|| format!("checkpoint: {}", p.display())))
        .transpose()?;
    let datasets: Vec<Dataset> = a
        .data
        .iter()
        .map(|d| Dataset::open(d, a.data_root.as_ref(), false))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for ds in &datasets {
        let g = &ds.graph;
        let d = average_degree(g).with_context(|| format!("indicators: {}", ds.name()))?;
        let estimated = match &teacher {
            Some(ck) => {
                ck.check_graph(g).context("checkpoint")?;
                let (_, net) = ck.supervised().context("checkpoint")?;
                let pred = net
                    .predict(&GraphInputs::new(g))
                    .context("indicators: teacher predictions")?;
                Some(Fixed4(estimate_homophily(g, &pred).context("indicators")?))
            }
            None => None,
        };
        rows.push(IndicatorRow {
            dataset: ds.name(),
            nodes: g.num_nodes(),
            edges: g.num_edges(),
            classes: g.num_classes(),
            features: g.num_features(),
            avg_degree: Fixed4(d),
            edge_homophily: edge_homophily(g).ok().map(Fixed4),
            estimated_homophily: estimated,
        });
    }
    let fmt = |x: Option<Fixed4>| x.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v.0));
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<14} {:>8} {:>9} {:>4} {:>6} {:>8} {:>6} {:>6}",
        "dataset", "n", "|E|", "|Y|", "F", "degree", "h", "h'"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:<14} {:>8} {:>9} {:>4} {:>6} {:>8.2} {:>6} {:>6}",
            r.dataset,
            r.nodes,
            r.edges,
            r.classes,
            r.features,
            r.avg_degree.0,
            fmt(r.edge_homophily),
            fmt(r.estimated_homophily)
        )?;
    }
    if let Some(path) = &a.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_csv(path, &rows).context("output")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainRow<'a> {
    dataset: &'a str,
    model: String,
    scheme: &'a str,
    seed: u64,
    val_acc: Pct,
    test_acc: Pct,
    best_val_epoch: usize,
    final_epoch: usize,
}

#[derive(Serialize)]
struct GridRow {
    dropout: f64,
    weight_decay: f64,
    activation: String,
    hops: usize,
    val_acc: Pct,
    test_acc: Pct,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::from_args(&a.data)?;
    let scheme: SplitScheme = a.seeds.scheme.into();
    let seeds = &a.seeds.seeds.0;
    let splits = ds.splits(scheme, seeds)?;
    let inputs = GraphInputs::new(&ds.graph);
    let kind: ModelKind = a.model.into();
    let grid = a.grid.grid(kind);
    let base = TrainConfig {
        seed: splits[0].seed,
        ..a.grid.base(kind)
    };
    base.validate().context("config")?;
    let (chosen, points) = grid_search(&inputs, &splits[0], &base, &grid).context("grid search")?;
    log::info!(
        "{}: chose dropout {} weight decay {} activation {} hops {}",
        ds.name(),
        chosen.dropout,
        chosen.weight_decay,
        chosen.activation,
        chosen.hops
    );
    let runs = splits
        .par_iter()
        .map(|s| train_teacher(&inputs, s, &chosen))
        .collect::<hmsf_core::Result<Vec<_>>>()
        .context("training")?;

    create_dir(&a.out.join("checkpoints"))?;
    let mut rows = Vec::new();
    for run in &runs {
        let seed = run.config.seed;
        let ck = Checkpoint::new(
            &ds.graph,
            scheme,
            seed,
            Payload::Supervised {
                config: run.config.clone(),
                network: run.network.clone(),
            },
        );
        ck.save(
            &a.out
                .join("checkpoints")
                .join(format!("{kind}_seed{seed}.json")),
        )
        .context("checkpoint")?;
        rows.push(TrainRow {
            dataset: ds.name(),
            model: kind.to_string(),
            scheme: scheme.as_str(),
            seed,
            val_acc: Pct(run.report.val_acc_selected),
            test_acc: Pct(run.report.test_acc),
            best_val_epoch: run.report.best_val_epoch,
            final_epoch: run.report.final_epoch,
        });
    }
    write_csv(&a.out.join("results.csv"), &rows).context("output")?;
    let accs: Vec<f64> = runs.iter().map(|r| r.report.test_acc).collect();
    let summary = SummaryRow::new(ds.name(), kind.as_str(), scheme.as_str(), &accs);
    println!(
        "{} {} ({}): {} seeds, test {} ± {}",
        ds.name(),
        kind,
        scheme,
        accs.len(),
        fmt_pct(summary.mean_test_acc),
        fmt_pct(summary.std_test_acc)
    );
    write_csv(&a.out.join("summary.csv"), [summary]).context("output")?;
    write_csv(
        &a.out.join("grid.csv"),
        points.iter().map(|p| GridRow {
            dropout: p.config.dropout,
            weight_decay: p.config.weight_decay,
            activation: p.config.activation.to_string(),
            hops: p.config.hops,
            val_acc: Pct(p.val_acc),
            test_acc: Pct(p.test_acc),
        }),
    )
    .context("output")?;

    #[derive(Serialize)]
    struct Hyper<'a> {
        scheme: SplitScheme,
        row_normalize: bool,
        base: &'a TrainConfig,
        grid: &'a GnnGrid,
        chosen: &'a TrainConfig,
    }
    Manifest::new(
        "train",
        seeds,
        vec![ds.record()?],
        Hyper {
            scheme,
            row_normalize: a.data.row_normalize,
            base: &base,
            grid: &grid,
            chosen: &chosen,
        },
    )
    .write(&a.out)
}

fn fmt_pct(p: Pct) -> String {
    format!("{:.2}", 100.0 * p.0)
}

/// A checkpoint file, or every `*.json` checkpoint in a directory, sorted by seed.
fn load_checkpoints(path: &Path) -> Result<Vec<Checkpoint>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("checkpoint: listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        bail!("checkpoint: no checkpoints in {}", path.display());
    }
    let mut cks = files
        .iter()
        .map(|f| Checkpoint::load(f).with_context(|| format!("checkpoint: {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    cks.sort_by_key(|c| c.seed);
    Ok(cks)
}

#[derive(Serialize)]
struct DistillRow<'a> {
    dataset: &'a str,
    teacher: String,
    scheme: &'a str,
    seed: u64,
    teacher_test_acc: Pct,
    val_acc: Pct,
    test_acc: Pct,
    mean_alpha: Fixed4,
    final_epoch: usize,
}

pub fn distill(a: DistillArgs) -> Result<()> {
    let ds = Dataset::from_args(&a.data)?;
    let cks = load_checkpoints(&a.teacher)?;
    let inputs = GraphInputs::new(&ds.graph);
    let kind = cks[0].supervised().context("checkpoint")?.1.kind();
    let mut teachers = Vec::new();
    for ck in &cks {
        ck.check_graph(&ds.graph).context("checkpoint")?;
        let (_, net) = ck.supervised().context("checkpoint")?;
        if net.kind() != kind || ck.scheme != cks[0].scheme {
            bail!(
                "checkpoint: teachers in {} mix models or split schemes",
                a.teacher.display()
            );
        }
        let split = ds.splits(ck.scheme, &[ck.seed])?.remove(0);
        let pred = net.predict(&inputs).context("teacher predictions")?;
        let teacher_acc = hmsf_core::models::evaluate(&pred, ds.graph.labels(), &split.test)
            .context("teacher predictions")?;
        teachers.push((split, pred, teacher_acc));
    }
    let scheme = cks[0].scheme;
    let seeds: Vec<u64> = cks.iter().map(|c| c.seed).collect();

    let base = CpfConfig {
        force_alpha_zero: a.force_alpha_zero,
        seed: seeds[0],
        ..a.grid.base()
    };
    base.validate().context("config")?;
    let grid = a.grid.grid();
    let (first_split, first_pred, _) = &teachers[0];
    let chosen = cpf_grid_search(&inputs, first_split, first_pred, &base, &grid)
        .context("student grid search")?;
    let students = teachers
        .par_iter()
        .map(|(split, pred, _)| train_student(&inputs, split, pred, &chosen))
        .collect::<hmsf_core::Result<Vec<_>>>()
        .context("student training")?;

    create_dir(&a.out.join("checkpoints"))?;
    create_dir(&a.out.join("alpha"))?;
    let mut rows = Vec::new();
    for ((split, _, teacher_acc), (params, report, cfg)) in teachers.iter().zip(&students) {
        let seed = split.seed;
        let alpha = effective_alpha(params, cfg);
        let path = a.out.join("alpha").join(format!("alpha_seed{seed}.tsv"));
        let file =
            fs::File::create(&path).with_context(|| format!("output: {}", path.display()))?;
        write_alpha_tsv(&alpha, std::io::BufWriter::new(file))
            .with_context(|| format!("output: {}", path.display()))?;
        let ck = Checkpoint::new(
            &ds.graph,
            scheme,
            seed,
            Payload::Student {
                config: cfg.clone(),
                teacher: kind,
                params: params.clone(),
            },
        );
        ck.save(
            &a.out
                .join("checkpoints")
                .join(format!("cpf_{kind}_seed{seed}.json")),
        )
        .context("checkpoint")?;
        rows.push(DistillRow {
            dataset: ds.name(),
            teacher: kind.to_string(),
            scheme: scheme.as_str(),
            seed,
            teacher_test_acc: Pct(*teacher_acc),
            val_acc: Pct(report.val_acc_final),
            test_acc: Pct(report.test_acc),
            mean_alpha: Fixed4(alpha.iter().sum::<f64>() / alpha.len() as f64),
            final_epoch: report.final_epoch,
        });
    }
    write_csv(&a.out.join("results.csv"), &rows).context("output")?;
    let teacher_accs: Vec<f64> = teachers.iter().map(|t| t.2).collect();
    let student_accs: Vec<f64> = students.iter().map(|s| s.1.test_acc).collect();
    let student_name = format!("cpf_{kind}");
    let summary = [
        SummaryRow::new(ds.name(), kind.as_str(), scheme.as_str(), &teacher_accs),
        SummaryRow::new(ds.name(), &student_name, scheme.as_str(), &student_accs),
    ];
    println!(
        "{} ({}): {} {} -> {} {}",
        ds.name(),
        scheme,
        kind,
        fmt_pct(summary[0].mean_test_acc),
        student_name,
        fmt_pct(summary[1].mean_test_acc)
    );
    write_csv(&a.out.join("summary.csv"), summary).context("output")?;

    #[derive(Serialize)]
    struct Hyper<'a> {
        scheme: SplitScheme,
        teacher: ModelKind,
        row_normalize: bool,
        base: &'a CpfConfig,
        grid: &'a CpfGrid,
        chosen: &'a CpfConfig,
    }
    Manifest::new(
        "distill",
        &seeds,
        vec![ds.record()?],
        Hyper {
            scheme,
            teacher: kind,
            row_normalize: a.data.row_normalize,
            base: &base,
            grid: &grid,
            chosen: &chosen,
        },
    )
    .write(&a.out)
}

#[derive(Serialize)]
struct SelectRow<'a> {
    dataset: &'a str,
    scheme: &'a str,
    seed: u64,
    avg_degree: Fixed4,
    teacher: String,
    edge_homophily: Option<Fixed4>,
    estimated_homophily: Fixed4,
    #[serde(rename = "final")]
    final_choice: String,
    test_acc: Pct,
}

#[derive(Serialize)]
struct ArmRow<'a> {
    dataset: &'a str,
    seed: u64,
    strategy: &'a str,
    val_acc: Pct,
    test_acc: Pct,
}

fn arm_rows<'a>(dataset: &'a str, seeds: &'a [ArmSeed]) -> impl Iterator<Item = ArmRow<'a>> + 'a {
    seeds.iter().flat_map(move |s| {
        Strategy::ALL.iter().map(move |&st| ArmRow {
            dataset,
            seed: s.seed,
            strategy: st.as_str(),
            val_acc: Pct(s.val(st)),
            test_acc: Pct(s.test(st)),
        })
    })
}

pub fn select(a: SelectArgs) -> Result<()> {
    let ds = Dataset::from_args(&a.data)?;
    let scheme: SplitScheme = a.seeds.scheme.into();
    let seeds = &a.seeds.seeds.0;
    let splits = ds.splits(scheme, seeds)?;
    let inputs = GraphInputs::new(&ds.graph);
    let settings = settings(a.beta, a.gamma, &a.grid, &a.cpf);
    settings.validate().context("config")?;
    let outcome = run_pipeline(&inputs, &splits, &settings).context("pipeline")?;

    create_dir(&a.out)?;
    write_json(&a.out.join("decisions.json"), &outcome.decisions)?;
    let rows: Vec<SelectRow> = outcome
        .decisions
        .iter()
        .map(|d| SelectRow {
            dataset: ds.name(),
            scheme: scheme.as_str(),
            seed: d.seed,
            avg_degree: Fixed4(d.avg_degree),
            teacher: d.teacher.to_string(),
            edge_homophily: d.h_true.map(Fixed4),
            estimated_homophily: Fixed4(d.h_est),
            final_choice: Strategy::of(d.teacher, d.final_choice).as_str().to_string(),
            test_acc: Pct(d.test_acc),
        })
        .collect();
    write_csv(&a.out.join("results.csv"), &rows).context("output")?;
    let accs: Vec<f64> = outcome.decisions.iter().map(|d| d.test_acc).collect();
    let mut summary = vec![SummaryRow::new(ds.name(), "hmsf", scheme.as_str(), &accs)];
    println!(
        "{} ({}): selector {}",
        ds.name(),
        scheme,
        fmt_pct(summary[0].mean_test_acc)
    );

    let arms = if a.all_strategies {
        let (configs, arms) =
            evaluate_arms(&inputs, &splits, &settings).context("fixed strategies")?;
        write_csv(&a.out.join("strategies.csv"), arm_rows(ds.name(), &arms)).context("output")?;
        Some((configs, arms))
    } else {
        None
    };
    if let Some((_, arms)) = &arms {
        for st in Strategy::ALL {
            let accs: Vec<f64> = arms.iter().map(|s| s.test(st)).collect();
            summary.push(SummaryRow::new(
                ds.name(),
                st.as_str(),
                scheme.as_str(),
                &accs,
            ));
            println!(
                "{} ({}): {} {}",
                ds.name(),
                scheme,
                st,
                fmt_pct(summary.last().unwrap().mean_test_acc)
            );
        }
    }
    write_csv(&a.out.join("summary.csv"), summary).context("output")?;

    #[derive(Serialize)]
    struct Hyper<'a> {
        scheme: SplitScheme,
        row_normalize: bool,
        settings: &'a PipelineSettings,
        strategy_configs: Option<&'a hmsf_core::hmsf::ArmConfigs>,
    }
    Manifest::new(
        "select",
        seeds,
        vec![ds.record()?],
        Hyper {
            scheme,
            row_normalize: a.data.row_normalize,
            settings: &settings,
            strategy_configs: arms.as_ref().map(|(c, _)| c),
        },
    )
    .write(&a.out)
}

#[derive(Serialize)]
struct VarianceRow {
    node: usize,
    hop: usize,
    degree: usize,
    variance: f64,
}

#[derive(Serialize)]
struct HopRow {
    hop: usize,
    nodes: usize,
    mean_variance: f64,
    share_above: f64,
    threshold: f64,
}

#[derive(Serialize)]
struct AlphaRow {
    node: usize,
    node_homophily: f64,
    alpha: f64,
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    // variance is always computed on the raw features
    let ds = Dataset::open(&a.data.data, a.data.data_root.as_ref(), false)?;
    create_dir(&a.out)?;
    let g = &ds.graph;
    match a.kind {
        AnalysisKind::Variance => {
            let records = hop_aggregate_variance(g, &build_neighborhoods(g));
            write_csv(
                &a.out.join("variance.csv"),
                records.iter().map(|r| VarianceRow {
                    node: r.node,
                    hop: r.hop,
                    degree: r.degree,
                    variance: r.variance,
                }),
            )
            .context("output")?;
            let summary = summarize_variance(&records, a.threshold);
            for s in &summary {
                println!(
                    "{} hop {}: {} nodes, mean variance {:.5}, share above {} {:.3}",
                    ds.name(),
                    s.hop,
                    s.nodes,
                    s.mean_variance,
                    s.threshold,
                    s.share_above
                );
            }
            write_csv(
                &a.out.join("variance_summary.csv"),
                summary.iter().map(|s| HopRow {
                    hop: s.hop,
                    nodes: s.nodes,
                    mean_variance: s.mean_variance,
                    share_above: s.share_above,
                    threshold: s.threshold,
                }),
            )
            .context("output")?;
            let mut m = Manifest::new(
                "analyze variance",
                &[],
                vec![ds.record()?],
                serde_json::json!({ "threshold": a.threshold }),
            );
            m.variance = Some("population");
            m.write(&a.out)
        }
        AnalysisKind::Alpha => {
            let path = a.cpf.as_deref().ok_or_else(|| {
                anyhow!("analyze: alpha needs a trained student checkpoint (--cpf)")
            })?;
            let ck = Checkpoint::load(path)
                .with_context(|| format!("checkpoint: {}", path.display()))?;
            ck.check_graph(g).context("checkpoint")?;
            let (cfg, teacher, params) = ck.student().context("checkpoint")?;
            let nh = node_homophily(g).context("analyze")?;
            let (records, summary) =
                alpha_vs_homophily(&effective_alpha(params, cfg), &nh).context("analyze")?;
            write_csv(
                &a.out.join("alpha.csv"),
                records.iter().map(|r| AlphaRow {
                    node: r.node,
                    node_homophily: r.node_homophily,
                    alpha: r.alpha,
                }),
            )
            .context("output")?;
            println!(
                "{} cpf_{teacher} seed {}: {} nodes, mean alpha {:.4}, mean node homophily {:.4}",
                ds.name(),
                ck.seed,
                summary.nodes,
                summary.mean_alpha,
                summary.mean_node_homophily
            );
            write_json(&a.out.join("alpha_summary.json"), &summary)?;
            Manifest::new(
                "analyze alpha",
                &[ck.seed],
                vec![ds.record()?],
                serde_json::json!({ "checkpoint": path }),
            )
            .write(&a.out)
        }
    }
}

pub fn split(a: SplitArgs) -> Result<()> {
    let ds = Dataset::from_args(&a.data)?;
    let scheme: SplitScheme = a.seeds.scheme.into();
    for &seed in &a.seeds.seeds.0 {
        let path = Split::path_in(&ds.dir, scheme, seed);
        if path.exists() && !a.force {
            log::info!("keeping {}", path.display());
            continue;
        }
        let split = make_split(&ds.graph, scheme, seed)
            .with_context(|| format!("split: {} seed {seed}", ds.name()))?;
        let written = split.save(&ds.dir).context("output")?;
        println!(
            "{}: train {} val {} test {}",
            written.display(),
            split.train.len(),
            split.val.len(),
            split.test.len()
        );
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let model = BlockModel {
        name: a.name,
        nodes: a.nodes,
        classes: a.classes,
        avg_degree: a.degree,
        homophily: a.homophily,
        features: a.features,
        small: a.small,
        ..BlockModel::default()
    };
    let g = model.generate(a.seed).context("synth")?;
    g.write_dir(&a.out).context("output")?;
    println!(
        "{}: {} nodes, {} edges, average degree {:.2}, edge homophily {:.2}",
        a.out.display(),
        g.num_nodes(),
        g.num_edges(),
        average_degree(&g).unwrap_or(0.0),
        edge_homophily(&g).unwrap_or(0.0)
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    beta: f64,
    gamma: f64,
    val_acc: Pct,
    test_acc: Pct,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let scheme: SplitScheme = a.seeds.scheme.into();
    let seeds = &a.seeds.seeds.0;
    let settings = settings(
        hmsf_core::hmsf::DEFAULT_BETA,
        hmsf_core::hmsf::DEFAULT_GAMMA,
        &a.grid,
        &a.cpf,
    );
    create_dir(&a.out)?;
    let mut all = Vec::new();
    let mut records = Vec::new();
    let mut arm_csv = csv::Writer::from_path(a.out.join("strategies.csv")).context("output")?;
    for name in &a.data {
        let ds = Dataset::open(name, a.data_root.as_ref(), a.row_normalize)?;
        let splits = ds.splits(scheme, seeds)?;
        let (_, arms) = evaluate_arms(&GraphInputs::new(&ds.graph), &splits, &settings)
            .with_context(|| format!("fixed strategies: {}", ds.name()))?;
        for row in arm_rows(ds.name(), &arms) {
            arm_csv.serialize(row).context("output")?;
        }
        records.push(ds.record()?);
        all.push(arms);
    }
    arm_csv.flush().context("output")?;
    let mut rows = Vec::new();
    for &beta in &a.betas {
        for &gamma in &a.gammas {
            let (val, test) = score_thresholds(&all, beta, gamma);
            rows.push(SweepRow {
                beta,
                gamma,
                val_acc: Pct(val),
                test_acc: Pct(test),
            });
        }
    }
    write_csv(&a.out.join("sweep.csv"), &rows).context("output")?;
    let ((beta, gamma), (val, test)) = sweep_thresholds(&all, &a.betas, &a.gammas)
        .ok_or_else(|| anyhow!("sweep: empty threshold grid"))?;
    println!(
        "best beta {beta} gamma {gamma}: validation {:.2}, test {:.2}",
        100.0 * val,
        100.0 * test
    );
    write_json(
        &a.out.join("best.json"),
        &serde_json::json!({ "beta": beta, "gamma": gamma, "val_acc": 100.0 * val, "test_acc": 100.0 * test }),
    )?;

    #[derive(Serialize)]
    struct Hyper<'a> {
        scheme: SplitScheme,
        row_normalize: bool,
        betas: &'a [f64],
        gammas: &'a [f64],
        settings: &'a PipelineSettings,
    }
    Manifest::new(
        "sweep",
        seeds,
        records,
        Hyper {
            scheme,
            row_normalize: a.row_normalize,
            betas: &a.betas,
            gammas: &a.gammas,
            settings: &settings,
        },
    )
    .write(&a.out)
}

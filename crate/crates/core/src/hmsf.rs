//! Two-step model selection: the average degree picks the teacher, then the
//! teacher's estimated edge homophily decides whether to distill into CPF.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpf::{cpf_grid_search, cpf_train, CpfConfig, CpfGrid, CpfReport};
use crate::error::{Error, Result};
use crate::graphdata::{average_degree, edge_homophily, homophily_of_assignment, Graph, Split};
use crate::models::{
    grid_search, train_supervised, GnnGrid, GraphInputs, ModelKind, TrainConfig, TrainReport,
};
use crate::tensorcore::DenseMatrix;

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_GAMMA: f64 = 0.6;
pub const BETA_SWEEP: [f64; 4] = [2.0, 10.0, 50.0, 100.0];
pub const GAMMA_SWEEP: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Whether the teacher is used directly or distilled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalChoice {
    Teacher,
    CpfOfTeacher,
}

impl fmt::Display for FinalChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalChoice::Teacher => "teacher",
            FinalChoice::CpfOfTeacher => "cpf_of_teacher",
        })
    }
}

/// GCN when `beta <= avg_degree`, H2GCN otherwise.
pub fn select_teacher(avg_degree: f64, beta: f64) -> ModelKind {
    if beta <= avg_degree {
        ModelKind::Gcn
    } else {
        ModelKind::H2gcn
    }
}

/// CPF when `gamma <= h_est`, the bare teacher otherwise.
pub fn select_final(h_est: f64, gamma: f64) -> FinalChoice {
    if gamma <= h_est {
        FinalChoice::CpfOfTeacher
    } else {
        FinalChoice::Teacher
    }
}

/// Edge homophily of the argmax predictions (ties to the lowest class).
pub fn estimate_homophily(g: &Graph, pred: &DenseMatrix) -> Result<f64> {
    if pred.rows() != g.num_nodes() {
        return Err(Error::shape(
            "estimate_homophily",
            format!(
                "{} prediction rows for {} nodes",
                pred.rows(),
                g.num_nodes()
            ),
        ));
    }
    homophily_of_assignment(g, &pred.argmax_rows())
}

/// One seed's selection and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmsfDecision {
    pub dataset: String,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
    pub avg_degree: f64,
    pub teacher: ModelKind,
    /// Label homophily, when every node is labeled.
    pub h_true: Option<f64>,
    pub h_est: f64,
    #[serde(rename = "final")]
    pub final_choice: FinalChoice,
    /// Test accuracy in [0, 1].
    pub test_acc: f64,
    pub config_chosen: ChosenConfig,
}

impl HmsfDecision {
    /// The type-level consistency rules between thresholds and choices.
    pub fn is_consistent(&self) -> bool {
        (self.teacher == ModelKind::Gcn) == (self.beta <= self.avg_degree)
            && (self.final_choice == FinalChoice::CpfOfTeacher) == (self.gamma <= self.h_est)
            && (0.0..=1.0).contains(&self.h_est)
    }
}

/// Hyperparameters actually used for the selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenConfig {
    pub teacher: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student: Option<CpfConfig>,
}

/// Grids and fixed settings shared by every pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub beta: f64,
    pub gamma: f64,
    pub gcn_grid: GnnGrid,
    pub h2gcn_grid: GnnGrid,
    pub cpf_grid: CpfGrid,
    pub gnn_base: TrainConfig,
    pub cpf_base: CpfConfig,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            gcn_grid: GnnGrid::standard(ModelKind::Gcn),
            h2gcn_grid: GnnGrid::standard(ModelKind::H2gcn),
            cpf_grid: CpfGrid::default(),
            gnn_base: TrainConfig::new(ModelKind::Gcn),
            cpf_base: CpfConfig::default(),
        }
    }
}

impl PipelineSettings {
    pub fn grid_for(&self, kind: ModelKind) -> &GnnGrid {
        match kind {
            ModelKind::H2gcn => &self.h2gcn_grid,
            _ => &self.gcn_grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Hyperparameters tuned once on the first seed's split and reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedConfigs {
    pub teacher: TrainConfig,
    pub student: Option<CpfConfig>,
}

/// Trained teacher for one seed.
pub struct TeacherRun {
    pub config: TrainConfig,
    pub report: TrainReport,
    pub network: crate::models::Network,
    pub pred: DenseMatrix,
}

/// Trains `cfg` (with the split's seed) and returns its eval-mode predictions.
pub fn train_teacher(
    inputs: &GraphInputs<'_>,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TeacherRun> {
    let cfg = TrainConfig {
        seed: split.seed,
        ..cfg.clone()
    };
    let (network, report) = train_supervised(inputs, split, &cfg)?;
    let pred = network.predict(inputs)?;
    Ok(TeacherRun {
        config: cfg,
        report,
        network,
        pred,
    })
}

/// Trains the student on one seed.
pub fn train_student(
    inputs: &GraphInputs<'_>,
    split: &Split,
    teacher_pred: &DenseMatrix,
    cfg: &CpfConfig,
) -> Result<(crate::cpf::CpfParams, CpfReport, CpfConfig)> {
    let cfg = CpfConfig {
        seed: split.seed,
        ..cfg.clone()
    };
    let (params, report) = cpf_train(inputs, split, teacher_pred, &cfg)?;
    Ok((params, report, cfg))
}

/// Grid-searches a supervised model on `split`.
pub fn tune_teacher(
    inputs: &GraphInputs<'_>,
    split: &Split,
    kind: ModelKind,
    settings: &PipelineSettings,
) -> Result<TrainConfig> {
    let base = TrainConfig {
        model: kind,
        seed: split.seed,
        ..settings.gnn_base.clone()
    };
    let (best, _) = grid_search(inputs, split, &base, settings.grid_for(kind))
        .map_err(|e| e.in_stage("teacher grid search"))?;
    Ok(best)
}

/// Grid-searches the student against a teacher's predictions on `split`.
pub fn tune_student(
    inputs: &GraphInputs<'_>,
    split: &Split,
    teacher_pred: &DenseMatrix,
    settings: &PipelineSettings,
) -> Result<CpfConfig> {
    let base = CpfConfig {
        seed: split.seed,
        ..settings.cpf_base.clone()
    };
    cpf_grid_search(inputs, split, teacher_pred, &base, &settings.cpf_grid)
        .map_err(|e| e.in_stage("student grid search"))
}

/// Pipeline output: one decision per split, in the order given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub decisions: Vec<HmsfDecision>,
    pub mean_test_acc: f64,
}

/// Runs the selection pipeline over `splits` (one per seed). Hyperparameters
/// are tuned on the first split and reused for the rest; the student grid is
/// searched only if some seed selects distillation. Seeds run in parallel on
/// the current rayon pool and results come back in split order.
pub fn run_pipeline(
    inputs: &GraphInputs<'_>,
    splits: &[Split],
    settings: &PipelineSettings,
) -> Result<PipelineOutcome> {
    settings.validate()?;
    let first = splits
        .first()
        .ok_or_else(|| Error::Config("no seeds requested".into()))?;
    let g = inputs.graph();
    let avg_degree = average_degree(g).map_err(|e| e.in_stage("average degree"))?;
    let teacher_kind = select_teacher(avg_degree, settings.beta);
    log::info!(
        "{}: average degree {avg_degree:.2}, teacher {teacher_kind}",
        g.name()
    );
    let h_true = edge_homophily(g).ok();
    let teacher_cfg = tune_teacher(inputs, first, teacher_kind, settings)?;

    let teachers: Vec<(TeacherRun, f64)> = splits
        .par_iter()
        .map(|split| {
            let teacher = train_teacher(inputs, split, &teacher_cfg)
                .map_err(|e| e.in_stage("teacher training"))?;
            let h_est = estimate_homophily(g, &teacher.pred)
                .map_err(|e| e.in_stage("homophily estimate"))?;
            Ok((teacher, h_est))
        })
        .collect::<Result<_>>()?;

    let distill = teachers
        .iter()
        .any(|(_, h)| select_final(*h, settings.gamma) == FinalChoice::CpfOfTeacher);
    let student_cfg = if distill {
        Some(tune_student(inputs, first, &teachers[0].0.pred, settings)?)
    } else {
        None
    };

    let decisions: Vec<HmsfDecision> = splits
        .par_iter()
        .zip(&teachers)
        .map(|(split, (teacher, h_est))| {
            let final_choice = select_final(*h_est, settings.gamma);
            let (test_acc, student) = match (final_choice, &student_cfg) {
                (FinalChoice::CpfOfTeacher, Some(tuned)) => {
                    let (_, report, cfg) = train_student(inputs, split, &teacher.pred, tuned)
                        .map_err(|e| e.in_stage("student training"))?;
                    (report.test_acc, Some(cfg))
                }
                _ => (teacher.report.test_acc, None),
            };
            log::info!(
                "{} seed {}: h' {:.3}, final {}, test {:.4}",
                g.name(),
                split.seed,
                h_est,
                final_choice,
                test_acc
            );
            let decision = HmsfDecision {
                dataset: g.name().to_string(),
                seed: split.seed,
                beta: settings.beta,
                gamma: settings.gamma,
                avg_degree,
                teacher: teacher_kind,
                h_true,
                h_est: *h_est,
                final_choice,
                test_acc,
                config_chosen: ChosenConfig {
                    teacher: teacher.config.clone(),
                    student,
                },
            };
            debug_assert!(decision.is_consistent());
            Ok(decision)
        })
        .collect::<Result<_>>()?;
    let mean_test_acc = decisions.iter().map(|d| d.test_acc).sum::<f64>() / decisions.len() as f64;
    Ok(PipelineOutcome {
        decisions,
        mean_test_acc,
    })
}

/// Fixed strategies compared against the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Gcn,
    H2gcn,
    CpfGcn,
    CpfH2gcn,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Gcn,
        Strategy::H2gcn,
        Strategy::CpfGcn,
        Strategy::CpfH2gcn,
    ];

    pub fn teacher(self) -> ModelKind {
        match self {
            Strategy::Gcn | Strategy::CpfGcn => ModelKind::Gcn,
            Strategy::H2gcn | Strategy::CpfH2gcn => ModelKind::H2gcn,
        }
    }

    pub fn distills(self) -> bool {
        matches!(self, Strategy::CpfGcn | Strategy::CpfH2gcn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Gcn => "gcn",
            Strategy::H2gcn => "h2gcn",
            Strategy::CpfGcn => "cpf_gcn",
            Strategy::CpfH2gcn => "cpf_h2gcn",
        }
    }

    /// The strategy a selector decision amounts to.
    pub fn of(teacher: ModelKind, final_choice: FinalChoice) -> Self {
        match (teacher, final_choice) {
            (ModelKind::H2gcn, FinalChoice::Teacher) => Strategy::H2gcn,
            (ModelKind::H2gcn, FinalChoice::CpfOfTeacher) => Strategy::CpfH2gcn,
            (_, FinalChoice::Teacher) => Strategy::Gcn,
            (_, FinalChoice::CpfOfTeacher) => Strategy::CpfGcn,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-seed metrics of all four fixed strategies on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmSeed {
    pub seed: u64,
    pub avg_degree: f64,
    /// Estimated homophily from each teacher kind's predictions.
    pub h_est_gcn: f64,
    pub h_est_h2gcn: f64,
    pub val_acc: [f64; 4],
    pub test_acc: [f64; 4],
}

impl ArmSeed {
    pub fn test(&self, s: Strategy) -> f64 {
        self.test_acc[s as usize]
    }

    pub fn val(&self, s: Strategy) -> f64 {
        self.val_acc[s as usize]
    }

    pub fn h_est(&self, teacher: ModelKind) -> f64 {
        if teacher == ModelKind::H2gcn {
            self.h_est_h2gcn
        } else {
            self.h_est_gcn
        }
    }

    /// Decision the selector would make for this seed with `(beta, gamma)`.
    pub fn decide(&self, beta: f64, gamma: f64) -> Strategy {
        let teacher = select_teacher(self.avg_degree, beta);
        Strategy::of(teacher, select_final(self.h_est(teacher), gamma))
    }
}

/// Configurations tuned for every arm of one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmConfigs {
    pub gcn: TrainConfig,
    pub h2gcn: TrainConfig,
    pub cpf_gcn: CpfConfig,
    pub cpf_h2gcn: CpfConfig,
}

/// Tunes all four strategies on the first split, then trains each on every
/// split. Because selection only ever picks among these arms, any
/// `(beta, gamma)` can be scored from the result without retraining.
pub fn evaluate_arms(
    inputs: &GraphInputs<'_>,
    splits: &[Split],
    settings: &PipelineSettings,
) -> Result<(ArmConfigs, Vec<ArmSeed>)> {
    let first = splits
        .first()
        .ok_or_else(|| Error::Config("no seeds requested".into()))?;
    let g = inputs.graph();
    let avg_degree = average_degree(g)?;
    let gcn = tune_teacher(inputs, first, ModelKind::Gcn, settings)?;
    let h2gcn = tune_teacher(inputs, first, ModelKind::H2gcn, settings)?;
    let gcn_first = train_teacher(inputs, first, &gcn)?;
    let h2_first = train_teacher(inputs, first, &h2gcn)?;
    let configs = ArmConfigs {
        cpf_gcn: tune_student(inputs, first, &gcn_first.pred, settings)?,
        cpf_h2gcn: tune_student(inputs, first, &h2_first.pred, settings)?,
        gcn,
        h2gcn,
    };
    let seeds = splits
        .par_iter()
        .map(|split| {
            let tg =
                train_teacher(inputs, split, &configs.gcn).map_err(|e| e.in_stage("gcn arm"))?;
            let th = train_teacher(inputs, split, &configs.h2gcn)
                .map_err(|e| e.in_stage("h2gcn arm"))?;
            let (_, sg, _) = train_student(inputs, split, &tg.pred, &configs.cpf_gcn)
                .map_err(|e| e.in_stage("cpf(gcn) arm"))?;
            let (_, sh, _) = train_student(inputs, split, &th.pred, &configs.cpf_h2gcn)
                .map_err(|e| e.in_stage("cpf(h2gcn) arm"))?;
            Ok(ArmSeed {
                seed: split.seed,
                avg_degree,
                h_est_gcn: estimate_homophily(g, &tg.pred)?,
                h_est_h2gcn: estimate_homophily(g, &th.pred)?,
                val_acc: [
                    tg.report.val_acc_selected,
                    th.report.val_acc_selected,
                    sg.val_acc_final,
                    sh.val_acc_final,
                ],
                test_acc: [
                    tg.report.test_acc,
                    th.report.test_acc,
                    sg.test_acc,
                    sh.test_acc,
                ],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((configs, seeds))
}

/// Mean validation and test accuracy of the selector with `(beta, gamma)`
/// across datasets, each dataset weighted equally.
pub fn score_thresholds(arms: &[Vec<ArmSeed>], beta: f64, gamma: f64) -> (f64, f64) {
    let mut val = 0.0;
    let mut test = 0.0;
    for seeds in arms {
        let k = seeds.len() as f64;
        val += seeds
            .iter()
            .map(|s| s.val(s.decide(beta, gamma)))
            .sum::<f64>()
            / k;
        test += seeds
            .iter()
            .map(|s| s.test(s.decide(beta, gamma)))
            .sum::<f64>()
            / k;
    }
    let d = arms.len() as f64;
    (val / d, test / d)
}

/// Threshold pair with the best mean validation accuracy over the sweep
/// grids (first in grid order on ties), with its (val, test) means.
pub fn sweep_thresholds(
    arms: &[Vec<ArmSeed>],
    betas: &[f64],
    gammas: &[f64],
) -> Option<((f64, f64), (f64, f64))> {
    let mut best: Option<((f64, f64), (f64, f64))> = None;
    for &b in betas {
        for &c in gammas {
            let score = score_thresholds(arms, b, c);
            if best.is_none_or(|(_, (v, _))| score.0 > v) {
                best = Some(((b, c), score));
            }
        }
    }
    best
}

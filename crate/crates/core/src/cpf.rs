//! The CPF student: parameterized label propagation mixed per node with an
//! MLP, fitted to a frozen teacher by an L2 distillation objective.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{Graph, Split};
use crate::models::{evaluate, EarlyStopper, GraphInputs, MlpParams, Parameterized};
use crate::tensorcore::{
    l2_distill_loss, sigmoid, AdamState, CsrMatrix, DenseMatrix, Mode, Tape, Var,
};

/// Trainable state of the student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpfParams {
    pub mlp: MlpParams,
    /// Per-node confidence score (`n x 1`).
    pub confidence: DenseMatrix,
    /// Per-node logit of the propagation share (`n x 1`).
    pub balance: DenseMatrix,
}

impl CpfParams {
    /// Glorot MLP, zero confidence, zero balance logits (share 0.5).
    pub fn init<R: Rng + ?Sized>(
        nodes: usize,
        features: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            mlp: MlpParams::init(features, hidden, classes, rng),
            confidence: DenseMatrix::zeros(nodes, 1),
            balance: DenseMatrix::zeros(nodes, 1),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.confidence.rows()
    }
}

impl Parameterized for CpfParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut t = self.mlp.tensors();
        t.push(&self.confidence);
        t.push(&self.balance);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut t = self.mlp.tensors_mut();
        t.push(&mut self.confidence);
        t.push(&mut self.balance);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpfConfig {
    /// Propagation iterations.
    pub iterations: usize,
    pub hidden: usize,
    pub mlp_dropout: f64,
    pub plp_dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Drops the propagation branch entirely (share fixed at 0).
    #[serde(default)]
    pub force_alpha_zero: bool,
}

impl Default for CpfConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            hidden: 64,
            mlp_dropout: 0.5,
            plp_dropout: 0.8,
            lr: 0.01,
            weight_decay: 0.001,
            max_epochs: 2000,
            patience: 200,
            seed: 0,
            force_alpha_zero: false,
        }
    }
}

impl CpfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config(
                "propagation needs at least one iteration".into(),
            ));
        }
        for (name, rate) in [
            ("mlp_dropout", self.mlp_dropout),
            ("plp_dropout", self.plp_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0,1)")));
            }
        }
        if self.max_epochs == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "max_epochs and hidden must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max_epochs".into()));
        }
        Ok(())
    }
}

/// Propagation weights over `N(v) ∪ {v}`: row `v` holds
/// `exp(c_u) / sum_{u'} exp(c_u')`.
pub fn plp_weights(g: &Graph, confidence: &[f64]) -> Result<CsrMatrix> {
    if confidence.len() != g.num_nodes() {
        return Err(Error::shape(
            "plp_weights",
            format!("{} scores for {} nodes", confidence.len(), g.num_nodes()),
        ));
    }
    let pattern = Arc::new(crate::tensorcore::self_loop_pattern(g));
    let mut tape = Tape::new();
    let c = tape.constant(DenseMatrix::from_vec(
        confidence.len(),
        1,
        confidence.to_vec(),
    )?)?;
    let w = tape.edge_softmax(&pattern, c)?;
    Ok(pattern.with_values(tape.value(w).data().to_vec()))
}

/// Fixed data a student needs besides its parameters.
#[derive(Debug, Clone)]
pub struct CpfContext {
    pattern: Arc<CsrMatrix>,
    train: Arc<Vec<usize>>,
    onehot: DenseMatrix,
    start: DenseMatrix,
}

impl CpfContext {
    /// `F0` is one-hot on training nodes and uniform elsewhere.
    pub fn new(inputs: &GraphInputs<'_>, split: &Split) -> Result<Self> {
        let g = inputs.graph();
        let (n, classes) = (g.num_nodes(), g.num_classes());
        let mut onehot = DenseMatrix::zeros(split.train.len(), classes);
        let mut start = DenseMatrix::filled(n, classes, 1.0 / classes as f64);
        for (i, &v) in split.train.iter().enumerate() {
            let y = g.label(v).ok_or(Error::Unlabeled(v))?;
            onehot.set(i, y, 1.0);
            start.row_mut(v).copy_from_slice(onehot.row(i));
        }
        Ok(Self {
            pattern: Arc::clone(inputs.self_loop_pattern()),
            train: Arc::new(split.train.clone()),
            onehot,
            start,
        })
    }
}

/// Records the student's forward pass. Each iteration computes
/// `F = ft + alpha * (dropout(W F) - ft)` and re-clamps training rows.
#[allow(clippy::too_many_arguments)]
pub fn cpf_forward<R: Rng + ?Sized>(
    params: &CpfParams,
    inputs: &GraphInputs<'_>,
    ctx: &CpfContext,
    cfg: &CpfConfig,
    tape: &mut Tape,
    mode: Mode,
    mlp_rng: &mut R,
    plp_rng: &mut R,
) -> Result<(Vec<Var>, Var)> {
    if cfg.iterations == 0 {
        return Err(Error::Config(
            "propagation needs at least one iteration".into(),
        ));
    }
    if params.num_nodes() != inputs.graph().num_nodes() {
        return Err(Error::shape(
            "cpf_forward",
            "parameter rows differ from node count",
        ));
    }
    let mlp = params
        .mlp
        .forward(tape, inputs.features(), cfg.mlp_dropout, mode, mlp_rng)?;
    let confidence = tape.param(params.confidence.clone())?;
    let balance = tape.param(params.balance.clone())?;
    let mut vars = mlp.params;
    vars.push(confidence);
    vars.push(balance);

    let ft = tape.row_softmax(mlp.output)?;
    if cfg.force_alpha_zero {
        let out = tape.clamp_rows(ft, &ctx.train, &ctx.onehot)?;
        return Ok((vars, out));
    }
    let weights = tape.edge_softmax(&ctx.pattern, confidence)?;
    let alpha = tape.sigmoid(balance)?;
    let mut f = tape.constant(ctx.start.clone())?;
    for _ in 0..cfg.iterations {
        let p = tape.propagate(&ctx.pattern, weights, f)?;
        let p = tape.dropout(p, cfg.plp_dropout, mode, plp_rng)?;
        let diff = tape.sub(p, ft)?;
        let mixed = tape.row_scale(alpha, diff)?;
        let next = tape.add(ft, mixed)?;
        f = tape.clamp_rows(next, &ctx.train, &ctx.onehot)?;
    }
    Ok((vars, f))
}

/// Eval-mode student output for every node.
pub fn cpf_predict(
    params: &CpfParams,
    inputs: &GraphInputs<'_>,
    ctx: &CpfContext,
    cfg: &CpfConfig,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let mut a = ChaCha8Rng::seed_from_u64(0);
    let mut b = ChaCha8Rng::seed_from_u64(0);
    let (_, out) = cpf_forward(
        params,
        inputs,
        ctx,
        cfg,
        &mut tape,
        Mode::Eval,
        &mut a,
        &mut b,
    )?;
    Ok(tape.value(out).clone())
}

/// Per-node propagation shares `sigmoid(balance)`.
pub fn extract_alpha(params: &CpfParams) -> Vec<f64> {
    params.balance.data().iter().map(|&a| sigmoid(a)).collect()
}

/// Shares the student actually uses: all zero when propagation is disabled.
pub fn effective_alpha(params: &CpfParams, cfg: &CpfConfig) -> Vec<f64> {
    if cfg.force_alpha_zero {
        vec![0.0; params.num_nodes()]
    } else {
        extract_alpha(params)
    }
}

/// Curves and outcome of a distillation session. The selected student is
/// the one at `final_epoch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpfReport {
    pub final_epoch: usize,
    /// Epoch with the lowest validation distillation loss.
    pub best_val_loss_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub val_acc_final: f64,
    pub test_acc: f64,
    pub wall_time_secs: f64,
}

/// Fits the student to `teacher` (row-stochastic, one row per node) on every
/// node outside `split.train`, stopping once the validation distillation
/// loss has not decreased for `cfg.patience` epochs.
pub fn cpf_train(
    inputs: &GraphInputs<'_>,
    split: &Split,
    teacher: &DenseMatrix,
    cfg: &CpfConfig,
) -> Result<(CpfParams, CpfReport)> {
    cfg.validate()?;
    let g = inputs.graph();
    if teacher.shape() != (g.num_nodes(), g.num_classes()) {
        return Err(Error::shape(
            "cpf_train",
            format!(
                "teacher is {:?}, graph needs {:?}",
                teacher.shape(),
                (g.num_nodes(), g.num_classes())
            ),
        ));
    }
    let unlabeled = split.unlabeled(g.num_nodes());
    if unlabeled.is_empty() {
        return Err(Error::EmptyMask("unlabeled set"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyMask("validation set"));
    }
    if split.test.is_empty() {
        return Err(Error::EmptyMask("test set"));
    }
    let start = Instant::now();
    let ctx = CpfContext::new(inputs, split)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mlp_rng.set_stream(1);
    let mut plp_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    plp_rng.set_stream(2);

    let mut params = CpfParams::init(
        g.num_nodes(),
        g.num_features(),
        cfg.hidden,
        g.num_classes(),
        &mut init_rng,
    );
    let mut adam = AdamState::new(params.tensors(), cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut report = CpfReport {
        final_epoch: 0,
        best_val_loss_epoch: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_acc: Vec::new(),
        val_acc_final: 0.0,
        test_acc: 0.0,
        wall_time_secs: 0.0,
    };
    let mut last_pred = None;

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let (vars, out) = cpf_forward(
            &params,
            inputs,
            &ctx,
            cfg,
            &mut tape,
            Mode::Train,
            &mut mlp_rng,
            &mut plp_rng,
        )?;
        let (loss, seed) = l2_distill_loss(tape.value(out), teacher, &unlabeled)?;
        let mut grads = tape.backward(out, seed)?;
        let grads: Vec<DenseMatrix> = vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.take_or_zeros(v, t.shape()))
            .collect();
        adam.step(params.tensors_mut(), &grads)?;

        let pred = cpf_predict(&params, inputs, &ctx, cfg)?;
        let (val_loss, _) = l2_distill_loss(&pred, teacher, &split.val)?;
        report.train_loss.push(loss);
        report.val_loss.push(val_loss);
        report
            .val_acc
            .push(evaluate(&pred, g.labels(), &split.val)?);
        report.final_epoch = epoch;
        let stop = stopper.observe(epoch, val_loss);
        last_pred = Some(pred);
        if stop {
            break;
        }
    }
    let pred = last_pred.expect("at least one epoch runs");
    report.best_val_loss_epoch = stopper.best_epoch();
    report.val_acc_final = evaluate(&pred, g.labels(), &split.val)?;
    report.test_acc = evaluate(&pred, g.labels(), &split.test)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Plain MLP fitted to the teacher with the same objective, seed and
/// random streams as [`cpf_train`]. Used to check the zero-share collapse.
pub fn mlp_distill(
    inputs: &GraphInputs<'_>,
    split: &Split,
    teacher: &DenseMatrix,
    cfg: &CpfConfig,
) -> Result<(MlpParams, DenseMatrix)> {
    cfg.validate()?;
    let g = inputs.graph();
    let unlabeled = split.unlabeled(g.num_nodes());
    if unlabeled.is_empty() {
        return Err(Error::EmptyMask("unlabeled set"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mlp_rng.set_stream(1);
    let mut params = MlpParams::init(g.num_features(), cfg.hidden, g.num_classes(), &mut init_rng);
    let mut adam = AdamState::new(params.tensors(), cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let val_loss_of = |p: &MlpParams| -> Result<(f64, DenseMatrix)> {
        let pred = crate::models::mlp_forward(p, inputs.features())?;
        Ok((l2_distill_loss(&pred, teacher, &split.val)?.0, pred))
    };
    let mut pred = DenseMatrix::zeros(0, 0);
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let fwd = params.forward(
            &mut tape,
            inputs.features(),
            cfg.mlp_dropout,
            Mode::Train,
            &mut mlp_rng,
        )?;
        let out = tape.row_softmax(fwd.output)?;
        let (_, seed) = l2_distill_loss(tape.value(out), teacher, &unlabeled)?;
        let mut grads = tape.backward(out, seed)?;
        let grads: Vec<DenseMatrix> = fwd
            .params
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.take_or_zeros(v, t.shape()))
            .collect();
        adam.step(params.tensors_mut(), &grads)?;
        let (val_loss, p) = val_loss_of(&params)?;
        pred = p;
        if stopper.observe(epoch, val_loss) {
            break;
        }
    }
    Ok((params, pred))
}

/// Grid for the student's hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpfGrid {
    pub mlp_dropout: Vec<f64>,
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

impl Default for CpfGrid {
    /// MLP dropout {0.5, 0.8}, lr {0.01, 0.001}, weight decay {0.01, 0.001}.
    fn default() -> Self {
        Self {
            mlp_dropout: vec![0.5, 0.8],
            lr: vec![0.01, 0.001],
            weight_decay: vec![0.01, 0.001],
        }
    }
}

impl CpfGrid {
    pub fn configs(&self, base: &CpfConfig) -> Vec<CpfConfig> {
        let mut out = Vec::new();
        for &mlp_dropout in &self.mlp_dropout {
            for &lr in &self.lr {
                for &weight_decay in &self.weight_decay {
                    out.push(CpfConfig {
                        mlp_dropout,
                        lr,
                        weight_decay,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

/// Picks the grid point whose final student has the best validation
/// accuracy (first in grid order on ties).
pub fn cpf_grid_search(
    inputs: &GraphInputs<'_>,
    split: &Split,
    teacher: &DenseMatrix,
    base: &CpfConfig,
    grid: &CpfGrid,
) -> Result<CpfConfig> {
    let mut best: Option<(f64, CpfConfig)> = None;
    for cfg in grid.configs(base) {
        let (_, report) = cpf_train(inputs, split, teacher, &cfg)?;
        log::debug!(
            "cpf grid mlp_dropout={} lr={} wd={} -> val {:.4}",
            cfg.mlp_dropout,
            cfg.lr,
            cfg.weight_decay,
            report.val_acc_final
        );
        if best
            .as_ref()
            .is_none_or(|(acc, _)| report.val_acc_final > *acc)
        {
            best = Some((report.val_acc_final, cfg));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::Config("empty hyperparameter grid".into()))
}

/// Writes `node<TAB>alpha` lines.
pub fn write_alpha_tsv<W: std::io::Write>(alpha: &[f64], mut out: W) -> std::io::Result<()> {
    for (v, a) in alpha.iter().enumerate() {
        writeln!(out, "{v}\t{a}")?;
    }
    Ok(())
}

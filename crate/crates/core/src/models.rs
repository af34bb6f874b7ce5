//! GCN, H2GCN and MLP classifiers and the shared supervised training loop.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{build_neighborhoods, Graph, Hoods, Split};
use crate::tensorcore::{
    argmax, cross_entropy, gcn_normalize, glorot_uniform, h2gcn_normalize, self_loop_pattern,
    AdamState, CsrMatrix, DenseMatrix, Mode, SparseLinear, Tape, Var,
};

/// Supervised architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    H2gcn,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::H2gcn => "h2gcn",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "h2gcn" => Ok(ModelKind::H2gcn),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "none" | "identity" => Ok(Activation::None),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        })
    }
}

/// Hyperparameters of one supervised training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Activation of the H2GCN embedding; GCN and MLP always use ReLU.
    pub activation: Activation,
    /// H2GCN aggregation rounds `K`.
    pub hops: usize,
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults: lr 0.01, 64 hidden units, 1000 epochs, patience 200.
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            activation: Activation::Relu,
            hops: 1,
            hidden: 64,
            max_epochs: 1000,
            patience: 200,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max_epochs".into()));
        }
        if self.max_epochs == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "max_epochs and hidden must be positive".into(),
            ));
        }
        if self.model == ModelKind::H2gcn && !(1..=2).contains(&self.hops) {
            return Err(Error::Config(format!(
                "H2GCN rounds must be 1 or 2, got {}",
                self.hops
            )));
        }
        Ok(())
    }
}

/// Graph-derived operators, built on first use and shared across sessions.
pub struct GraphInputs<'g> {
    graph: &'g Graph,
    features: SparseLinear,
    gcn: OnceLock<SparseLinear>,
    hoods: OnceLock<Hoods>,
    h2gcn: OnceLock<(SparseLinear, SparseLinear)>,
    pattern: OnceLock<Arc<CsrMatrix>>,
}

impl<'g> GraphInputs<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Self {
            graph,
            features: SparseLinear::new(graph.features().clone()),
            gcn: OnceLock::new(),
            hoods: OnceLock::new(),
            h2gcn: OnceLock::new(),
            pattern: OnceLock::new(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn features(&self) -> &SparseLinear {
        &self.features
    }

    pub fn gcn_operator(&self) -> &SparseLinear {
        self.gcn
            .get_or_init(|| SparseLinear::symmetric(gcn_normalize(self.graph)))
    }

    pub fn hoods(&self) -> &Hoods {
        self.hoods.get_or_init(|| build_neighborhoods(self.graph))
    }

    /// Depth-1 and depth-2 H2GCN operators.
    pub fn h2gcn_operators(&self) -> &(SparseLinear, SparseLinear) {
        self.h2gcn.get_or_init(|| {
            let h = self.hoods();
            (
                SparseLinear::symmetric(h2gcn_normalize(h, 1)),
                SparseLinear::symmetric(h2gcn_normalize(h, 2)),
            )
        })
    }

    /// Pattern of `A + I`.
    pub fn self_loop_pattern(&self) -> &Arc<CsrMatrix> {
        self.pattern
            .get_or_init(|| Arc::new(self_loop_pattern(self.graph)))
    }
}

/// Inverted dropout on the stored entries of a sparse matrix.
pub(crate) fn sparse_dropout<R: Rng + ?Sized>(
    x: &SparseLinear,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<SparseLinear> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0,1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    let values = x
        .matrix()
        .values()
        .iter()
        .map(|&v| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                v * keep
            }
        })
        .collect();
    Ok(x.with_values(values))
}

/// Access to a model's trainable tensors in a fixed order.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&DenseMatrix>;
    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }
}

/// Trainable leaves and the output of one forward pass.
#[derive(Debug)]
pub struct Forward {
    pub params: Vec<Var>,
    pub output: Var,
}

fn record_params<P: Parameterized + ?Sized>(p: &P, tape: &mut Tape) -> Result<Vec<Var>> {
    p.tensors()
        .into_iter()
        .map(|t| tape.param(t.clone()))
        .collect()
}

/// Two-layer GCN without biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub weights: Vec<DenseMatrix>,
}

impl GcnParams {
    pub fn init<R: Rng + ?Sized>(
        features: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weights: vec![
                glorot_uniform(features, hidden, rng),
                glorot_uniform(hidden, classes, rng),
            ],
        }
    }

    /// Records the forward pass and returns logits. Hidden layers apply
    /// ReLU; dropout hits the input of every layer in train mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        a: &SparseLinear,
        x: &SparseLinear,
        dropout: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        if self.weights.is_empty() {
            return Err(Error::shape("gcn_forward", "no layers"));
        }
        let params = record_params(self, tape)?;
        let xd = sparse_dropout(x, dropout, mode, rng)?;
        let xw = tape.spmm(&xd, params[0])?;
        let mut h = tape.spmm(a, xw)?;
        for &w in &params[1..] {
            h = tape.relu(h)?;
            let hd = tape.dropout(h, dropout, mode, rng)?;
            let hw = tape.matmul(hd, w)?;
            h = tape.spmm(a, hw)?;
        }
        Ok(Forward { params, output: h })
    }
}

impl Parameterized for GcnParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        self.weights.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.weights.iter_mut().collect()
    }
}

/// H2GCN with an embedding `W_e (F x p)` and classifier `W_c ((2^{K+1}-1)p x |Y|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2gcnParams {
    pub embed: DenseMatrix,
    pub classifier: DenseMatrix,
    pub hops: usize,
    pub activation: Activation,
}

/// Width multiplier of the concatenated representation: `2^{K+1} - 1`.
pub fn h2gcn_final_blocks(hops: usize) -> usize {
    (1usize << (hops + 1)) - 1
}

impl H2gcnParams {
    pub fn init<R: Rng + ?Sized>(
        features: usize,
        hidden: usize,
        classes: usize,
        hops: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            embed: glorot_uniform(features, hidden, rng),
            classifier: glorot_uniform(h2gcn_final_blocks(hops) * hidden, classes, rng),
            hops,
            activation,
        }
    }

    /// `r0 = act(X W_e)`; each round maps the previous representation `R`
    /// to `[S1 R | S2 R]`; logits are `dropout([r0 | R1 | .. | RK]) W_c`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        s1: &SparseLinear,
        s2: &SparseLinear,
        x: &SparseLinear,
        dropout: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        let p = self.embed.cols();
        if self.classifier.rows() != h2gcn_final_blocks(self.hops) * p {
            return Err(Error::shape(
                "h2gcn_forward",
                format!(
                    "classifier has {} rows, expected {}",
                    self.classifier.rows(),
                    h2gcn_final_blocks(self.hops) * p
                ),
            ));
        }
        let params = record_params(self, tape)?;
        let xe = tape.spmm(x, params[0])?;
        let r0 = match self.activation {
            Activation::Relu => tape.relu(xe)?,
            Activation::None => tape.identity(xe),
        };
        let mut rounds = vec![r0];
        let mut prev = r0;
        for _ in 0..self.hops {
            let one = tape.spmm(s1, prev)?;
            let two = tape.spmm(s2, prev)?;
            prev = tape.concat(&[one, two])?;
            rounds.push(prev);
        }
        let fin = tape.concat(&rounds)?;
        let fin = tape.dropout(fin, dropout, mode, rng)?;
        let output = tape.matmul(fin, params[1])?;
        Ok(Forward { params, output })
    }
}

impl Parameterized for H2gcnParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        vec![&self.embed, &self.classifier]
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.embed, &mut self.classifier]
    }
}

/// Two-layer perceptron with biases: `F -> hidden -> |Y|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

impl MlpParams {
    pub fn init<R: Rng + ?Sized>(
        features: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: glorot_uniform(features, hidden, rng),
            b1: DenseMatrix::zeros(1, hidden),
            w2: glorot_uniform(hidden, classes, rng),
            b2: DenseMatrix::zeros(1, classes),
        }
    }

    /// Logits of the MLP; dropout on the input and hidden layer in train mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: &SparseLinear,
        dropout: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        let params = record_params(self, tape)?;
        let xd = sparse_dropout(x, dropout, mode, rng)?;
        let h = tape.spmm(&xd, params[0])?;
        let h = tape.add_bias(h, params[1])?;
        let h = tape.relu(h)?;
        let h = tape.dropout(h, dropout, mode, rng)?;
        let out = tape.matmul(h, params[2])?;
        let output = tape.add_bias(out, params[3])?;
        Ok(Forward { params, output })
    }
}

impl Parameterized for MlpParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// A trained or freshly initialized supervised model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Network {
    Gcn(GcnParams),
    H2gcn(H2gcnParams),
    Mlp(MlpParams),
}

impl Network {
    pub fn init<R: Rng + ?Sized>(
        cfg: &TrainConfig,
        features: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        match cfg.model {
            ModelKind::Gcn => Network::Gcn(GcnParams::init(features, cfg.hidden, classes, rng)),
            ModelKind::H2gcn => Network::H2gcn(H2gcnParams::init(
                features,
                cfg.hidden,
                classes,
                cfg.hops,
                cfg.activation,
                rng,
            )),
            ModelKind::Mlp => Network::Mlp(MlpParams::init(features, cfg.hidden, classes, rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Network::Gcn(_) => ModelKind::Gcn,
            Network::H2gcn(_) => ModelKind::H2gcn,
            Network::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Records a forward pass producing logits.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &GraphInputs<'_>,
        tape: &mut Tape,
        dropout: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        match self {
            Network::Gcn(p) => p.forward(
                tape,
                inputs.gcn_operator(),
                inputs.features(),
                dropout,
                mode,
                rng,
            ),
            Network::H2gcn(p) => {
                let (s1, s2) = inputs.h2gcn_operators();
                p.forward(tape, s1, s2, inputs.features(), dropout, mode, rng)
            }
            Network::Mlp(p) => p.forward(tape, inputs.features(), dropout, mode, rng),
        }
    }

    /// Eval-mode logits for every node.
    pub fn logits(&self, inputs: &GraphInputs<'_>) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = self.forward(inputs, &mut tape, 0.0, Mode::Eval, &mut rng)?;
        Ok(tape.value(fwd.output).clone())
    }

    /// Eval-mode class distributions (row-stochastic) for every node.
    pub fn predict(&self, inputs: &GraphInputs<'_>) -> Result<DenseMatrix> {
        Ok(self.logits(inputs)?.row_softmax())
    }
}

impl Parameterized for Network {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        match self {
            Network::Gcn(p) => p.tensors(),
            Network::H2gcn(p) => p.tensors(),
            Network::Mlp(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            Network::Gcn(p) => p.tensors_mut(),
            Network::H2gcn(p) => p.tensors_mut(),
            Network::Mlp(p) => p.tensors_mut(),
        }
    }
}

/// Eval-mode GCN class distributions.
pub fn gcn_forward(params: &GcnParams, a: &SparseLinear, x: &SparseLinear) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = params.forward(&mut tape, a, x, 0.0, Mode::Eval, &mut rng)?;
    Ok(tape.value(fwd.output).row_softmax())
}

/// Eval-mode H2GCN class distributions.
pub fn h2gcn_forward(
    params: &H2gcnParams,
    s1: &SparseLinear,
    s2: &SparseLinear,
    x: &SparseLinear,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = params.forward(&mut tape, s1, s2, x, 0.0, Mode::Eval, &mut rng)?;
    Ok(tape.value(fwd.output).row_softmax())
}

/// Eval-mode MLP class distributions.
pub fn mlp_forward(params: &MlpParams, x: &SparseLinear) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = params.forward(&mut tape, x, 0.0, Mode::Eval, &mut rng)?;
    Ok(tape.value(fwd.output).row_softmax())
}

/// Fraction of `mask` whose argmax prediction equals the label (ties go
/// to the lowest class id).
pub fn evaluate(pred: &DenseMatrix, labels: &[Option<usize>], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("evaluate"));
    }
    let mut correct = 0usize;
    for &v in mask {
        let y = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or(Error::Unlabeled(v))?;
        if argmax(pred.row(v)) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// Learning curves and the selected epoch of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epoch with the highest validation accuracy (earliest on ties).
    pub best_val_epoch: usize,
    /// Epoch with the lowest validation loss (earliest on ties).
    pub best_val_loss_epoch: usize,
    pub final_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
    /// Validation accuracy of the selected model.
    pub val_acc_selected: f64,
    /// Test accuracy of the selected model.
    pub test_acc: f64,
    pub wall_time_secs: f64,
}

/// Tracks the early-stopping rule: stop once the monitored loss has not
/// decreased for `patience` consecutive epochs (at least one).
#[derive(Debug, Clone)]
pub(crate) struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub(crate) fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Feeds one epoch's loss; returns true when training should stop.
    pub(crate) fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale >= self.patience.max(1)
        }
    }

    pub(crate) fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Full-batch Adam on cross-entropy over `split.train` with early stopping
/// on validation loss. Returns the parameters of the epoch with the highest
/// validation accuracy.
pub fn train_supervised(
    inputs: &GraphInputs<'_>,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyMask("training set"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyMask("validation set"));
    }
    if split.test.is_empty() {
        return Err(Error::EmptyMask("test set"));
    }
    let g = inputs.graph();
    let labels = g.labels();
    let start = Instant::now();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drop_rng.set_stream(1);

    let mut net = Network::init(cfg, g.num_features(), g.num_classes(), &mut init_rng);
    let mut adam = AdamState::new(net.tensors(), cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience);

    let mut report = TrainReport {
        best_val_epoch: 0,
        best_val_loss_epoch: 0,
        final_epoch: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_acc: Vec::new(),
        val_acc_selected: f64::NEG_INFINITY,
        test_acc: 0.0,
        wall_time_secs: 0.0,
    };
    let mut best_net = net.clone();

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let fwd = net.forward(inputs, &mut tape, cfg.dropout, Mode::Train, &mut drop_rng)?;
        let (loss, dlogits) = cross_entropy(tape.value(fwd.output), labels, &split.train)?;
        let mut grads = tape.backward(fwd.output, dlogits)?;
        let grads: Vec<DenseMatrix> = fwd
            .params
            .iter()
            .zip(net.tensors())
            .map(|(&v, t)| grads.take_or_zeros(v, t.shape()))
            .collect();
        adam.step(net.tensors_mut(), &grads)?;

        let logits = net.logits(inputs)?;
        let (val_loss, _) = cross_entropy(&logits, labels, &split.val)?;
        let probs = logits.row_softmax();
        let val_acc = evaluate(&probs, labels, &split.val)?;
        report.train_loss.push(loss);
        report.val_loss.push(val_loss);
        report.val_acc.push(val_acc);
        report.final_epoch = epoch;
        if val_acc > report.val_acc_selected {
            report.val_acc_selected = val_acc;
            report.best_val_epoch = epoch;
            report.test_acc = evaluate(&probs, labels, &split.test)?;
            best_net = net.clone();
        }
        if stopper.observe(epoch, val_loss) {
            break;
        }
    }
    report.best_val_loss_epoch = stopper.best_epoch();
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((best_net, report))
}

/// Hyperparameter grid for the supervised models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnGrid {
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub activation: Vec<Activation>,
    pub hops: Vec<usize>,
}

impl GnnGrid {
    /// Dropout {0, 0.5}, weight decay {5e-4, 1e-5}; for H2GCN also
    /// activation {relu, none} and rounds {1, 2}.
    pub fn standard(kind: ModelKind) -> Self {
        let h2 = kind == ModelKind::H2gcn;
        Self {
            dropout: vec![0.0, 0.5],
            weight_decay: vec![5e-4, 1e-5],
            activation: if h2 {
                vec![Activation::Relu, Activation::None]
            } else {
                vec![Activation::Relu]
            },
            hops: if h2 { vec![1, 2] } else { vec![1] },
        }
    }

    /// Grid points in deterministic order, filled into copies of `base`.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &dropout in &self.dropout {
            for &weight_decay in &self.weight_decay {
                for &activation in &self.activation {
                    for &hops in &self.hops {
                        out.push(TrainConfig {
                            dropout,
                            weight_decay,
                            activation,
                            hops,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: TrainConfig,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Trains every grid point and returns the one with the highest validation
/// accuracy (first in grid order on ties), plus all outcomes.
pub fn grid_search(
    inputs: &GraphInputs<'_>,
    split: &Split,
    base: &TrainConfig,
    grid: &GnnGrid,
) -> Result<(TrainConfig, Vec<GridPoint>)> {
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut points = Vec::with_capacity(configs.len());
    for cfg in configs {
        let (_, report) = train_supervised(inputs, split, &cfg)?;
        log::debug!(
            "grid {} dropout={} wd={} act={} K={} -> val {:.4}",
            cfg.model,
            cfg.dropout,
            cfg.weight_decay,
            cfg.activation,
            cfg.hops,
            report.val_acc_selected
        );
        points.push(GridPoint {
            config: cfg,
            val_acc: report.val_acc_selected,
            test_acc: report.test_acc,
        });
    }
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.val_acc > points[best].val_acc {
            best = i;
        }
    }
    Ok((points[best].config.clone(), points))
}

//! Numerical kernels: dense and CSR matrices, graph normalization
//! operators, reverse-mode tape, losses and Adam.

mod adam;
mod dense;
mod init;
mod loss;
mod normalize;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use dense::{argmax, DenseMatrix};
pub use init::glorot_uniform;
pub use loss::{cross_entropy, l2_distill_loss, PROB_FLOOR};
pub use normalize::{gcn_normalize, h2gcn_normalize, self_loop_pattern};
pub use sparse::{CsrMatrix, SparseLinear};
pub use tape::{sigmoid, Gradients, Mode, Tape, Var};

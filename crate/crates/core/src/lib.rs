//! Node classification with GCN, H2GCN and a CPF student, plus a two-step
//! selector that picks among them from the average degree and the edge
//! homophily estimated from a teacher's predictions.
//!
//! ```no_run
//! use hmsf_core::{graphdata, hmsf, models::GraphInputs, SplitScheme};
//!
//! let g = graphdata::load_graph("data/cora".as_ref())?;
//! let splits: Vec<_> = (0..10)
//!     .map(|s| graphdata::make_split(&g, SplitScheme::H2gcn, s))
//!     .collect::<Result<_, _>>()?;
//! let outcome = hmsf::run_pipeline(&GraphInputs::new(&g), &splits, &Default::default())?;
//! println!("{:.2}", 100.0 * outcome.mean_test_acc);
//! # Ok::<(), hmsf_core::Error>(())
//! ```

pub mod analysis;
pub mod checkpoint;
pub mod cpf;
mod error;
pub mod graphdata;
pub mod hmsf;
pub mod models;
pub mod synthetic;
pub mod tensorcore;

pub use error::{Error, Result};
pub use graphdata::{Graph, GraphMeta, Hoods, Split, SplitScheme};
pub use hmsf::{FinalChoice, HmsfDecision, Strategy};
pub use models::{Activation, ModelKind, Network, TrainConfig, TrainReport};
pub use tensorcore::{CsrMatrix, DenseMatrix};

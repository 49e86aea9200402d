//! Learn low-dimensional latent representations of entities from a sparse
//! symmetric binary interaction matrix by importance-weighted logistic
//! matrix factorization, optionally regularized by the graph Laplacians of
//! k-nearest-neighbor similarity graphs, and rank unobserved pairs by
//! predicted interaction probability.
//!
//! Module map:
//! - [`data`]: entity index, interaction/similarity stores, file I/O
//! - [`graph`]: k-NN adjacency and graph Laplacians
//! - [`weights`]: importance-weight schemes over the positive set
//! - [`factor`]: loss, gradient, the training loop, model persistence
//! - [`metrics`]: AUC and AUPR with exact tie handling
//! - [`eval`]: cross-validation harness and candidate ranking
//! - [`synth`]: planted low-rank instances with known ground truth

pub mod data;
mod error;
pub mod eval;
pub mod factor;
pub mod graph;
pub mod metrics;
pub mod synth;
pub mod weights;

pub use data::{Dataset, EntityIndex, InteractionStore, SimilarityStore};
pub use error::{Error, Result};
pub use eval::{CvOptions, FoldPlan, MetricReport, RankedPredictions};
pub use factor::{FactorModel, Hyperparameters, TrainOptions};
pub use graph::{GraphLaplacian, KnnAdjacency};
pub use metrics::{AuprMode, CurvePoint};
pub use synth::SyntheticSpec;
pub use weights::{WeightKind, WeightScheme, WeightView};

//! Sparse spectra graph classification of time-series segments.
//!
//! The pipeline: load labeled time series, cut them into fixed-length
//! segments, transform each segment into a frequency-magnitude spectrum,
//! connect nearby spectrum bins into a sparse weighted neighborhood field
//! graph (WNFG), classify the graphs with a small graph-convolutional
//! network trained by manual backpropagation, and compress the trained
//! network with ADMM cardinality-constrained weight pruning followed by
//! hard masking and retraining.
//!
//! Modules:
//! - [`signal`]: record loading, segmentation, spectra.
//! - [`graph`]: WNFG construction, CSR storage, matvec, build stats.
//! - [`nn`]: layers, forward/backward passes, Adam, parameter accounting.
//! - [`prune`]: cardinality projection and the ADMM w/z/eta splitting.
//! - [`train`]: end-to-end training, evaluation metrics, sweep experiments.
//! - [`checkpoint`]: binary parameter/mask persistence.
//! - [`report`]: run reports and CSV/JSON emission.
//! - [`oracle`]: independent brute-force reference implementations used by
//!   the test suites and the `verify` command.

pub mod checkpoint;
pub mod graph;
pub mod nn;
pub mod oracle;
pub mod prune;
pub mod report;
pub mod signal;
pub mod train;

pub use graph::SparseGraph;
pub use nn::{ModelSpec, ParamSet};
pub use prune::{PruneConfig, PruneState};
pub use signal::{RawRecord, Segment, Spectrum};
pub use train::{Metrics, TaskSpec, TrainConfig};

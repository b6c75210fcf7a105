//! Classifying new accounts in a labeled directed network from the
//! requests they send and receive, under a multi-class preferential
//! attachment model.

pub mod alpha;
pub mod bounds;
pub mod classifier;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
mod index;
pub mod io;
pub mod math;
pub mod oracle;
pub mod report;
pub mod sim;
pub mod synth;
pub mod tables;

pub use alpha::{AlphaSpec, AlphaTensor};
pub use bounds::{bound_for, compute_bounds, max_batch, BatchReport, BoundOptions, BoundReport};
pub use classifier::{
    classify, classify_multiclass, classify_prefixes, classify_sharded, Mode, PosteriorReport, PrefixReports,
};
pub use config::{ExperimentConfig, RawConfig};
pub use error::{Error, ErrorKind, Result};
pub use eval::{auc, run_experiment, ConvergenceCurve, Experiment, SeedPoint, Variant};
pub use graph::{
    ClassLabel, Direction, EdgeEvent, EdgeStream, IdRange, LabelSet, LabeledNetwork, NetworkBuilder, Prior, UserId,
};
pub use oracle::{exact_posterior, Evidence, ExactPosterior, OracleOptions};
pub use sim::{sample_labels, sample_stream, Activity, SimConfig};
pub use synth::{generate_network, E0Model, NetworkSpec, SyntheticNetwork};
pub use tables::{
    build_homophily_table, build_plusplus_table, build_preattack_table, estimate_alpha_tensor, PATable, TableKind,
    Touched,
};

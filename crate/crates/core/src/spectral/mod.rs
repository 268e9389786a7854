//! Spectral bipartition filtering of proposals over a Gaussian HOG
//! similarity graph.

mod filter;
mod graph;
mod laplacian;
mod partition;

pub use filter::{iterate_filter, FilterOutcome, FilterParams, StopReason, TraceStep};
pub use graph::{build_graph, PairwiseDistances, SimilarityGraph, DEFAULT_SIGMA_SCALE};
pub use laplacian::{
    fiedler_vector, laplacian_spectrum, normalized_laplacian, FiedlerVector, Laplacian, LaplacianSpectrum,
    RESIDUAL_TOL,
};
pub use partition::{bipartition, normalized_cut, Bipartition, Cluster};

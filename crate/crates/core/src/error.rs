use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("loop edge at vertex {0}")]
    Loop(usize),
    #[error("vertex {vertex} out of range for a graph with {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not a partition: {0}")]
    InvalidPartition(String),
    #[error("partition tuple {finer} does not refine {coarser} at layer {layer}")]
    NotRefinement {
        finer: String,
        coarser: String,
        layer: usize,
    },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("cocycle is inconsistent on edge ({0}, {1})")]
    InconsistentCocycle(usize, usize),
    #[error("solver did not converge after {resamples} resamples")]
    NotConverged { resamples: u64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;

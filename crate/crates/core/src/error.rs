use std::path::PathBuf;

use crate::lattice::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("window must have positive width and height, got {height}x{width}")]
    EmptyWindow { height: usize, width: usize },
    #[error("site {0} lies outside the window")]
    SiteOutsideWindow(Site),
    #[error("spin value {0} is not in {{-1, +1}}")]
    InvalidSpin(i64),
    #[error("expected {expected} spins for the window, got {got}")]
    SpinCountMismatch { expected: usize, got: usize },
    #[error("configurations live on different windows")]
    WindowMismatch,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("no self-avoiding path of {length} sites fits in the window")]
    NoPathFits { length: usize },
    #[error("operation requires an all-plus boundary condition")]
    RequiresPlusBoundary,
    #[error("neighbor spin sum {0} is not one of -4, -2, 0, 2, 4")]
    InvalidNeighborSum(i32),
    #[error("inverse temperature must be finite and nonnegative, got {0}")]
    InvalidBeta(f64),
    #[error("noise level must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(f64),
    #[error("region of {size} sites exceeds the enumeration cap of {cap}; use the MCMC sampler")]
    EnumerationCap { size: usize, cap: usize },
    #[error("exterior configuration does not supply a spin for {0}")]
    MissingExterior(Site),
    #[error("inner region is not a subset of the outer region")]
    NotSubset,
    #[error("region is empty")]
    EmptyRegion,
    #[error("boundary site {0} carries spin -1; phi needs an all-plus boundary")]
    BoundaryNotPlus(Site),
    #[error("context of {0} is truncated by the window")]
    TruncatedContext(Site),
    #[error("intersection of qualifying sets does not itself qualify at {0}")]
    IntersectionNotQualifying(Site),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("unknown plot kind {0:?}")]
    UnknownPlotKind(String),
    #[error("I/O failure on {path} ({context})")]
    Io {
        path: PathBuf,
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

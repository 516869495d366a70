use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty projection: detection box does not intersect the image")]
    EmptyProjection,
    #[error("empty RoI: box does not cover any feature map pixel")]
    EmptyRoi,
    #[error("degenerate bin: pooling bin has zero area")]
    DegenerateBin,
    #[error("infinite loss: probability at the true label is zero")]
    InfiniteLoss,
    #[error("stream mismatch: {0}")]
    StreamMismatch(String),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("zero descriptor: region mean has zero norm and cannot be normalized")]
    ZeroDescriptor,
    #[error("empty mask: operation requires at least one foreground pixel")]
    EmptyMask,
    #[error("no surround: bounding box leaves no background ring to sample")]
    NoSurround,
    #[error("no color match: target background differs by {distance:.4} (tolerance {tolerance})")]
    NoColorMatch { distance: f64, tolerance: f64 },
    #[error("occludes instance: target region touches existing foreground")]
    OccludesInstance,
    #[error("image too small: {0}")]
    ImageTooSmall(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("missing ground truth for: {0}")]
    MissingGroundTruth(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: String, message: String },
}

impl Error {
    /// True for I/O-level failures, false for validation/content errors.
    ///
    /// The CLI maps I/O failures to exit code 1 and everything else to 2.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

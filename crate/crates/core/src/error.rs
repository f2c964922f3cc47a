use std::fmt;

use thiserror::Error;

/// Pipeline stage names used to tag failures surfaced by [`crate::pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Segmentation,
    Enhancement,
    Initialization,
    Fitting,
    Frontalization,
    Vesselness,
    Matching,
    Training,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Segmentation => "segmentation",
            Stage::Enhancement => "enhancement",
            Stage::Initialization => "initialization",
            Stage::Fitting => "fitting",
            Stage::Frontalization => "frontalization",
            Stage::Vesselness => "vesselness",
            Stage::Matching => "matching",
            Stage::Training => "training",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("constant image: intensities have no separable classes")]
    ConstantImage,

    #[error("mask has {found} foreground pixels, at least {required} required")]
    TooFewPixels { found: usize, required: usize },

    #[error("structuring element radius {0:.3} px is below 1 px")]
    StructuringElementTooSmall(f64),

    #[error("degenerate triangle {0} (zero or negative area)")]
    DegenerateTriangle(usize),

    #[error("degenerate shape: all landmarks coincide")]
    DegenerateShape,

    #[error("symmetry map is not an involution on point indices")]
    NonInvolutive,

    #[error("singular Gauss-Newton Hessian (condition number {0:e})")]
    SingularHessian(f64),

    #[error("canonical frame has no overlap with the image")]
    NoOverlap,

    #[error("zero-variance signature over the evaluation support")]
    ZeroVariance,

    #[error("config hash mismatch: gallery has {expected}, signature has {found}")]
    HashMismatch { expected: String, found: String },

    #[error("duplicate enrollment for subject {subject}, image {image}")]
    DuplicateEnrollment { subject: String, image: String },

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("probe label {0:?} is not enrolled in the gallery")]
    UnknownLabel(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// The pipeline stage this error was raised in, if it was tagged.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Extension for tagging a result with the stage that produced it.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}

use std::path::PathBuf;

/// Every failure the pipeline can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("seed ({x}, {y}) lies outside the {width}x{height} image")]
    SeedOutsideImage {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("tracking lost at frame {frame}: {reason}")]
    TrackingLost { frame: usize, reason: String },
    #[error("image {width}x{height} is too small (need at least {min}x{min})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("kernel size {0} must be odd and at least 3")]
    BadKernel(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("radial search found {found} boundary points (need at least 5)")]
    TooFewBoundaryPoints { found: usize },
    #[error("ellipse fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("shrunken ellipse too small: a={a:.3}, b={b:.3} (need >= 2 px)")]
    EllipseTooSmall { a: f64, b: f64 },
    #[error("level set evolution produced non-finite values at iteration {iteration}")]
    NumericalBlowup { iteration: usize },
    #[error("level set has no zero crossing")]
    NoZeroCrossing,

    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("no cluster roots inside the search region")]
    NoRootsInRegion,

    #[error("contour is self-intersecting or degenerate")]
    SelfIntersectingContour,
    #[error("both masks are empty")]
    BothEmpty,
    #[error("contour is empty")]
    EmptyContour,
    #[error("mask is empty")]
    EmptyMask,

    #[error("vessel leaves the image at frame {frame}")]
    VesselOutOfBounds { frame: usize },

    #[error("frame {path} is {got:?}, expected {expected:?}")]
    MixedDimensions {
        path: PathBuf,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("unsupported pixel format in {path}: {detail}")]
    UnsupportedPixelFormat { path: PathBuf, detail: String },
    #[error("no frames found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case identifier, used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SeedOutsideImage { .. } => "seed_outside_image",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TrackingLost { .. } => "tracking_lost",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::BadKernel(_) => "bad_kernel",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::TooFewBoundaryPoints { .. } => "too_few_boundary_points",
            Error::TooFewPoints(_) => "too_few_points",
            Error::DegenerateConfiguration(_) => "degenerate_configuration",
            Error::EllipseTooSmall { .. } => "ellipse_too_small",
            Error::NumericalBlowup { .. } => "numerical_blowup",
            Error::NoZeroCrossing => "no_zero_crossing",
            Error::SingularInnovation => "singular_innovation",
            Error::NoRootsInRegion => "no_roots_in_region",
            Error::SelfIntersectingContour => "self_intersecting_contour",
            Error::BothEmpty => "both_empty",
            Error::EmptyContour => "empty_contour",
            Error::EmptyMask => "empty_mask",
            Error::VesselOutOfBounds { .. } => "vessel_out_of_bounds",
            Error::MixedDimensions { .. } => "mixed_dimensions",
            Error::UnsupportedPixelFormat { .. } => "unsupported_pixel_format",
            Error::EmptyDirectory(_) => "empty_directory",
            Error::Parse(_) => "parse_error",
            Error::Io(_) => "io_error",
        }
    }
}

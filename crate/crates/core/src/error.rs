use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("target is within {min_distance} m of anchor `{anchor_id}`")]
    DegenerateDistance { anchor_id: String, min_distance: f64 },

    #[error("frame references unknown anchor `{0}`")]
    UnknownAnchor(String),

    #[error("duplicate anchor `{0}` in frame")]
    DuplicateAnchor(String),

    #[error("log-density is not finite at v = {at}")]
    NonFiniteDensity { at: f64 },

    #[error("fisher information is singular (eigenvalues {eigenvalues:?}); geometry is unlocalizable")]
    SingularFim { eigenvalues: [f64; 2] },

    #[error("value {value} outside the open interval (0, 1)")]
    Domain { value: f64 },

    #[error("need at least 3 anchor readings, got {got}")]
    InsufficientAnchors { got: usize },

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("projected region lies outside the image")]
    RegionOutsideImage,

    #[error("timestamp {t} precedes previous frame at {previous}")]
    StreamOrderViolation { t: f64, previous: f64 },

    #[error("waypoint path has zero length")]
    DegenerateWaypoints,

    #[error("length mismatch: {left} predictions vs {right} ground-truth rows")]
    LengthMismatch { left: usize, right: usize },

    #[error("curve is empty")]
    EmptyCurve,

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name used in JSON error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateDistance { .. } => "DegenerateDistance",
            Error::UnknownAnchor(_) => "UnknownAnchor",
            Error::DuplicateAnchor(_) => "DuplicateAnchor",
            Error::NonFiniteDensity { .. } => "NonFiniteDensity",
            Error::SingularFim { .. } => "SingularFim",
            Error::Domain { .. } => "DomainError",
            Error::InsufficientAnchors { .. } => "InsufficientAnchors",
            Error::BehindCamera { .. } => "BehindCamera",
            Error::RegionOutsideImage => "RegionOutsideImage",
            Error::StreamOrderViolation { .. } => "StreamOrderViolation",
            Error::DegenerateWaypoints => "DegenerateWaypoints",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyCurve => "EmptyCurve",
            Error::Invalid { .. } => "Invalid",
        }
    }
}

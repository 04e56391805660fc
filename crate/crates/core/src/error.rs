use alloc::string::String;

/// Errors reported by the identification and allocation routines.
///
/// Coordinates carried by variants are 0-based.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate {coord} is out of range for state dimension {r}")]
    CoordinateOutOfRange { coord: usize, r: usize },

    #[error("Gram matrix for coordinate {coord} is numerically singular (insufficient excitation)")]
    SingularGram { coord: usize },

    #[error("matrix is numerically rank deficient: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("Hankel matrix has no clear rank-{r} gap: sigma_r / sigma_(r+1) = {ratio:.3e} below {required:.3e}")]
    RankGap { r: usize, ratio: f64, required: f64 },

    #[error("row {coord} was not estimated")]
    UnestimatedRow { coord: usize },

    #[error("candidate set cannot render the system observable (rank {rank} of {r})")]
    NotObservableWithinCandidates { rank: usize, r: usize },

    #[error("exhaustive search space too large: {size} candidates exceeds cap {cap}")]
    SearchSpaceTooLarge { size: usize, cap: usize },
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::CoordinateOutOfRange { .. } => "coordinate_out_of_range",
            Error::SingularGram { .. } => "singular_gram",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::RankGap { .. } => "rank_gap",
            Error::UnestimatedRow { .. } => "unestimated_row",
            Error::NotObservableWithinCandidates { .. } => "not_observable_within_candidates",
            Error::SearchSpaceTooLarge { .. } => "search_space_too_large",
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

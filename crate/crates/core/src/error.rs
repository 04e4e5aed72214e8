// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, CsasError>;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum CsasError {
    /// A count series contains a negative value.
    NegativeCount { index: usize, value: i64 },
    /// A series has no observations.
    EmptySeries,
    /// A value is NaN or infinite.
    NonFinite { what: &'static str, index: usize },
    /// Two series (or a series and its dates) differ in length.
    LengthMismatch { expected: usize, found: usize },
    /// Dates are not strictly increasing at `index`.
    DatesNotIncreasing { index: usize },
    /// A calendar day is missing before `index`.
    MissingDate { index: usize },
    /// Two series in a panel share a region id.
    DuplicateRegion(String),
    /// Not enough regions for the requested operation.
    TooFewRegions { needed: usize, found: usize },
    /// Not enough path edges to estimate a dispersion.
    TooFewEdges { needed: usize, found: usize },
    /// Two clusterings are defined over different region sets.
    UniverseMismatch { left: usize, right: usize },
    /// A fitting window has fewer points than parameters allow.
    SegmentTooShort { len: usize, min: usize },
    /// A time window lies outside the series or is inverted.
    InvalidWindow { t_minus: usize, t_plus: usize, len: usize },
    /// No split point satisfies the spacing rules inside the window.
    NoAdmissibleSplit { t_minus: usize, t_plus: usize },
    /// The parameter covariance could not be estimated.
    CovarianceUnavailable,
    /// A scalar argument is out of its domain.
    InvalidParameter { name: &'static str, reason: &'static str },
}

impl fmt::Display for CsasError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeCount { index, value } => {
                write!(f, "negative count {value} at index {index}")
            }
            Self::EmptySeries => f.write_str("series is empty"),
            Self::NonFinite { what, index } => write!(f, "non-finite {what} at index {index}"),
            Self::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Self::DatesNotIncreasing { index } => {
                write!(f, "dates are not strictly increasing at index {index}")
            }
            Self::MissingDate { index } => write!(f, "missing day(s) before index {index}"),
            Self::DuplicateRegion(id) => write!(f, "duplicate region id {id:?}"),
            Self::TooFewRegions { needed, found } => {
                write!(f, "need at least {needed} regions, found {found}")
            }
            Self::TooFewEdges { needed, found } => write!(
                f,
                "need at least {needed} path edges, found {found}; use the BIC selector or a trivial clustering"
            ),
            Self::UniverseMismatch { left, right } => {
                write!(f, "clusterings cover {left} and {right} regions")
            }
            Self::SegmentTooShort { len, min } => {
                write!(f, "segment has {len} points, at least {min} are required")
            }
            Self::InvalidWindow { t_minus, t_plus, len } => {
                write!(f, "window [{t_minus}, {t_plus}] is invalid for a series of length {len}")
            }
            Self::NoAdmissibleSplit { t_minus, t_plus } => {
                write!(f, "no admissible change point inside [{t_minus}, {t_plus}]")
            }
            Self::CovarianceUnavailable => f.write_str(
                "parameter covariance is unavailable; report the point fit without a band",
            ),
            Self::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
        }
    }
}

impl core::error::Error for CsasError {}

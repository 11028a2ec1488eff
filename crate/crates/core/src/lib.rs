//! Segmentation and clustering of interval-valued time series.
//!
//! Windows of an interval-valued series are assigned to `K` clusters, each
//! a Gaussian model on the lower and upper bound vectors with a shared
//! block-Toeplitz sparse precision matrix. Assignments come from a Viterbi
//! pass with a switching penalty; precisions from an ADMM solver with a
//! SCAD penalty. Fitted clusters can be exported as labeled recurrence-plot
//! image datasets, and interval forecasts scored with distance-based errors.

pub mod assignment;
pub mod error;
pub mod imaging;
pub mod ingest;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod precision;
pub mod synthetic;
pub mod toeplitz;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Which bound of the interval a window or image refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

impl BoundSide {
    pub const BOTH: [BoundSide; 2] = [BoundSide::Lower, BoundSide::Upper];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundSide::Lower => "lower",
            BoundSide::Upper => "upper",
        }
    }
}

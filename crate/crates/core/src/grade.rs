//! Four-level qualitative grading of a rating on `[0, 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("rating {0} outside [0, 1]")]
pub struct RatingOutOfRange(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    Excellent,
    Good,
    Fair,
    Poor,
}

impl Grade {
    /// 1 (best) to 4 (worst).
    pub fn rank(self) -> u8 {
        match self {
            Grade::Excellent => 1,
            Grade::Good => 2,
            Grade::Fair => 3,
            Grade::Poor => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Grade::Excellent => "Excellent",
            Grade::Good => "Good",
            Grade::Fair => "Fair",
            Grade::Poor => "Poor",
        }
    }

    pub fn all() -> [Grade; 4] {
        [Grade::Excellent, Grade::Good, Grade::Fair, Grade::Poor]
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Thresholds separating Poor/Fair, Fair/Good and Good/Excellent. A rating
/// equal to a threshold falls into the lower band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeTable {
    pub thresholds: [f64; 3],
}

impl Default for GradeTable {
    fn default() -> Self {
        Self {
            thresholds: [0.58, 0.8, 0.94],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendRow {
    pub rank: u8,
    pub grade: Grade,
    /// Human-readable rating band, e.g. `0.8 < R <= 0.94`.
    pub band: String,
    pub description: String,
}

impl GradeTable {
    pub fn new(thresholds: [f64; 3]) -> Option<Self> {
        let [a, b, c] = thresholds;
        (0.0 < a && a < b && b < c && c < 1.0).then_some(Self { thresholds })
    }

    pub fn grade(&self, rating: f64) -> Result<Grade, RatingOutOfRange> {
        if !(0.0..=1.0).contains(&rating) {
            return Err(RatingOutOfRange(rating));
        }
        let [poor, fair, good] = self.thresholds;
        Ok(if rating > good {
            Grade::Excellent
        } else if rating > fair {
            Grade::Good
        } else if rating > poor {
            Grade::Fair
        } else {
            Grade::Poor
        })
    }

    pub fn legend(&self) -> Vec<LegendRow> {
        let [poor, fair, good] = self.thresholds;
        vec![
            LegendRow {
                rank: 1,
                grade: Grade::Excellent,
                band: format!("R > {good}"),
                description: "Simulation reproduces the reference essentially completely.".into(),
            },
            LegendRow {
                rank: 2,
                grade: Grade::Good,
                band: format!("{fair} < R <= {good}"),
                description: "Main features reproduced; differences are visible but moderate.".into(),
            },
            LegendRow {
                rank: 3,
                grade: Grade::Fair,
                band: format!("{poor} < R <= {fair}"),
                description: "Overall trend reproduced; clear and substantial differences.".into(),
            },
            LegendRow {
                rank: 4,
                grade: Grade::Poor,
                band: format!("R <= {poor}"),
                description: "Little or no resemblance to the reference.".into(),
            },
        ]
    }
}

/// Grade with the default table (0.58 / 0.8 / 0.94).
pub fn grade(rating: f64) -> Result<Grade, RatingOutOfRange> {
    GradeTable::default().grade(rating)
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Result, StatsError};

/// The six NASA-TLX workload dimensions, in questionnaire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subscale {
    #[serde(rename = "MD")]
    MentalDemand,
    #[serde(rename = "PD")]
    PhysicalDemand,
    #[serde(rename = "TD")]
    TemporalDemand,
    #[serde(rename = "EF")]
    Effort,
    #[serde(rename = "PE")]
    Performance,
    #[serde(rename = "FR")]
    Frustration,
}

impl Subscale {
    pub const ALL: [Subscale; 6] = [
        Subscale::MentalDemand,
        Subscale::PhysicalDemand,
        Subscale::TemporalDemand,
        Subscale::Effort,
        Subscale::Performance,
        Subscale::Frustration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            Subscale::MentalDemand => "MD",
            Subscale::PhysicalDemand => "PD",
            Subscale::TemporalDemand => "TD",
            Subscale::Effort => "EF",
            Subscale::Performance => "PE",
            Subscale::Frustration => "FR",
        }
    }

    /// The 15 unordered pairs presented in the weighting phase, `(i, j)` with `i < j`.
    pub fn pairs() -> impl Iterator<Item = (Subscale, Subscale)> {
        (0..6).flat_map(|i| ((i + 1)..6).map(move |j| (Subscale::ALL[i], Subscale::ALL[j])))
    }
}

impl fmt::Display for Subscale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for Subscale {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self> {
        Subscale::ALL
            .into_iter()
            .find(|sc| sc.abbrev().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StatsError::InvalidTlx(format!("unknown subscale {s:?}")))
    }
}

/// One completed questionnaire: six 0–100 ratings and the tally of the
/// pairwise comparisons (each weight in 0..=5, summing to 15).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TlxFields")]
pub struct TlxResponse {
    ratings: [f64; 6],
    weights: [u8; 6],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TlxFields {
    ratings: [f64; 6],
    weights: [u8; 6],
}

impl TryFrom<TlxFields> for TlxResponse {
    type Error = StatsError;

    fn try_from(f: TlxFields) -> Result<Self> {
        Self::new(f.ratings, f.weights)
    }
}

/// Adjusted (weight × rating) score per subscale and the weighted overall workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlxScores {
    pub adjusted: [f64; 6],
    pub overall: f64,
}

impl TlxResponse {
    pub fn new(ratings: [f64; 6], weights: [u8; 6]) -> Result<Self> {
        for (sc, r) in Subscale::ALL.iter().zip(ratings) {
            if !(0.0..=100.0).contains(&r) {
                return Err(StatsError::InvalidTlx(format!("{sc} rating {r} outside [0, 100]")));
            }
        }
        if let Some(w) = weights.iter().find(|&&w| w > 5) {
            return Err(StatsError::InvalidTlx(format!("weight {w} exceeds 5")));
        }
        let total: u32 = weights.iter().map(|&w| u32::from(w)).sum();
        if total != 15 {
            return Err(StatsError::InvalidTlx(format!("weights sum to {total}, expected 15")));
        }
        Ok(Self { ratings, weights })
    }

    /// Builds a response from the 15 pairwise winners, given in [`Subscale::pairs`] order.
    pub fn from_pairwise(ratings: [f64; 6], winners: &[Subscale]) -> Result<Self> {
        if winners.len() != 15 {
            return Err(StatsError::InvalidTlx(format!(
                "expected 15 pairwise choices, got {}",
                winners.len()
            )));
        }
        let mut weights = [0u8; 6];
        for ((a, b), &w) in Subscale::pairs().zip(winners) {
            if w != a && w != b {
                return Err(StatsError::InvalidTlx(format!("{w} is not a member of pair {a}/{b}")));
            }
            weights[w.index()] += 1;
        }
        Self::new(ratings, weights)
    }

    pub fn ratings(&self) -> [f64; 6] {
        self.ratings
    }

    pub fn weights(&self) -> [u8; 6] {
        self.weights
    }

    pub fn adjusted(&self) -> TlxScores {
        let mut adjusted = [0.0; 6];
        for (i, a) in adjusted.iter_mut().enumerate() {
            *a = f64::from(self.weights[i]) * self.ratings[i];
        }
        let overall = adjusted.iter().sum::<f64>() / 15.0;
        TlxScores { adjusted, overall }
    }
}

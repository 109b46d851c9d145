//! Evaluation pipeline for teleoperated block-transfer trials.
//!
//! The crate covers three layers:
//!
//! - per-trial metrics: blocks transferred ([`blocks_transferred`]), kinetic
//!   energy spent per block ([`energy_per_block`]) and NASA-TLX workload
//!   ([`TlxResponse`]);
//! - the fractional-factorial view: the L4(2³) orthogonal array and its
//!   response tables for means, standard deviations and signal-to-noise
//!   ratios ([`taguchi`]);
//! - inferential statistics: balanced two-way ANOVA, Tukey HSD with grouping
//!   letters, Shapiro-Wilk (AS R94) and Mood's median test.
//!
//! Everything here is a pure function of its inputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anova;
mod condition;
pub mod io;
mod metrics;
pub mod mood;
pub mod report;
pub mod shapiro;
pub mod taguchi;
mod tlx;
pub mod tukey;

pub use anova::{anova_one_way, anova_two_way, OneWayAnova, TwoWayAnova};
pub use condition::{Condition, DisplayMode, Expertise, Haptics};
pub use metrics::{blocks_transferred, energy_per_block, TrialRecord, OMAV_MASS_KG};
pub use mood::{moods_median, MoodsMedian};
pub use shapiro::{shapiro_wilk, ShapiroWilk};
pub use taguchi::{taguchi_analyze, Objective, OrthogonalArray, TaguchiResult};
pub use tlx::{Subscale, TlxResponse, TlxScores};
pub use tukey::{studentized_range_cdf, studentized_range_quantile, tukey_hsd, TukeyHsd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("energy per block is undefined when no block was transferred")]
    NoBlocks,
    #[error("design run {0} has no responses")]
    MissingRun(usize),
    #[error("larger-is-better SNR requires positive responses, got {0}")]
    NonPositive(f64),
    #[error("ANOVA cell ({0}, {1}) has fewer than two observations")]
    DegenerateCells(usize, usize),
    #[error("ANOVA requires a balanced design: cell ({0}, {1}) has {2} observations, expected {3}")]
    Unbalanced(usize, usize, usize, usize),
    #[error("studentized range unsupported for k = {k}, df = {df}")]
    UnsupportedDf { k: usize, df: f64 },
    #[error("sample is constant")]
    ConstantSample,
    #[error("sample size {0} outside [3, 2000]")]
    SizeOutOfRange(usize),
    #[error("all values fall on one side of the grand median")]
    DegenerateMedian,
    #[error("need at least {expected} groups, got {got}")]
    TooFewGroups { expected: usize, got: usize },
    #[error("invalid TLX response: {0}")]
    InvalidTlx(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

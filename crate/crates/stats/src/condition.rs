use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::StatsError;

/// Visual feedback level: fixed 2D screen or 3D mixed-reality-style view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisplayMode {
    #[serde(rename = "SC")]
    Screen,
    #[serde(rename = "MR")]
    MixedReality,
}

/// Whether the interaction wrench is rendered to the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Haptics {
    #[serde(rename = "NoH")]
    Off,
    #[serde(rename = "H")]
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expertise {
    #[serde(rename = "B")]
    Beginner,
    #[serde(rename = "E")]
    Experienced,
}

/// The two within-subject factors of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Condition {
    pub display: DisplayMode,
    pub haptics: Haptics,
}

impl Default for Condition {
    fn default() -> Self {
        Self {
            display: DisplayMode::Screen,
            haptics: Haptics::On,
        }
    }
}

macro_rules! two_level {
    ($ty:ident, $lo:ident => $lo_s:literal, $hi:ident => $hi_s:literal) => {
        impl $ty {
            pub const LEVELS: [$ty; 2] = [$ty::$lo, $ty::$hi];

            /// Level index inside a two-level design column (0 or 1).
            pub fn index(self) -> usize {
                match self {
                    $ty::$lo => 0,
                    $ty::$hi => 1,
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $ty::$lo => $lo_s,
                    $ty::$hi => $hi_s,
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = StatsError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $lo_s => Ok($ty::$lo),
                    $hi_s => Ok($ty::$hi),
                    other => Err(StatsError::InvalidInput(format!(
                        "unknown {} level {other:?}",
                        stringify!($ty)
                    ))),
                }
            }
        }
    };
}

two_level!(DisplayMode, Screen => "SC", MixedReality => "MR");
two_level!(Haptics, Off => "NoH", On => "H");
two_level!(Expertise, Beginner => "B", Experienced => "E");

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.display, self.haptics)
    }
}

impl FromStr for Condition {
    type Err = StatsError;

    /// Parses `SC,H`, `MR,NoH`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (d, h) = s
            .split_once(',')
            .ok_or_else(|| StatsError::InvalidInput(format!("condition {s:?} is not <SC|MR>,<H|NoH>")))?;
        Ok(Self {
            display: d.parse()?,
            haptics: h.parse()?,
        })
    }
}

use serde::{Deserialize, Serialize};

use crate::{DisplayMode, Expertise, Haptics, Result, StatsError, TlxResponse};

/// Mass of the aerial vehicle used for the kinetic-energy metric.
pub const OMAV_MASS_KG: f64 = 4.82;

/// One experimental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant: String,
    pub expertise: Expertise,
    pub display: DisplayMode,
    pub haptics: Haptics,
    /// Task time budget in seconds; transfers after it do not count.
    pub duration: f64,
    /// Sampled `(t, |v|)` pairs of the vehicle, `t` non-decreasing.
    pub speed_trace: Vec<(f64, f64)>,
    /// Timestamps of completed block transfers.
    pub transfers: Vec<f64>,
    pub tlx: Option<TlxResponse>,
}

impl TrialRecord {
    pub fn new(
        participant: impl Into<String>,
        expertise: Expertise,
        display: DisplayMode,
        haptics: Haptics,
        duration: f64,
    ) -> Self {
        Self {
            participant: participant.into(),
            expertise,
            display,
            haptics,
            duration,
            speed_trace: Vec::new(),
            transfers: Vec::new(),
            tlx: None,
        }
    }
}

/// Number of blocks moved across the partition within the trial duration.
pub fn blocks_transferred(record: &TrialRecord) -> usize {
    record.transfers.iter().filter(|&&t| t <= record.duration).count()
}

/// `(∫ ½ m |v|² dt) / N` with the trapezoidal rule over the recorded speed trace.
///
/// Returns [`StatsError::NoBlocks`] when nothing was transferred; such trials
/// are excluded from the energy analysis.
pub fn energy_per_block(record: &TrialRecord, mass: f64) -> Result<f64> {
    let n = blocks_transferred(record);
    if n == 0 {
        return Err(StatsError::NoBlocks);
    }
    let energy: f64 = record
        .speed_trace
        .windows(2)
        .map(|w| {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            0.5 * (t1 - t0) * (0.5 * mass * v0 * v0 + 0.5 * mass * v1 * v1)
        })
        .sum();
    Ok(energy / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(speed: impl Fn(f64) -> f64, transfers: Vec<f64>) -> TrialRecord {
        let mut r = TrialRecord::new("p", Expertise::Beginner, DisplayMode::Screen, Haptics::Off, 80.0);
        r.speed_trace = (0..=8000).map(|i| i as f64 * 0.01).map(|t| (t, speed(t))).collect();
        r.transfers = transfers;
        r
    }

    #[test]
    fn constant_speed_energy_matches_closed_form() {
        let r = record(|_| 1.0, vec![10.0, 50.0]);
        let e = energy_per_block(&r, OMAV_MASS_KG).unwrap();
        assert!((e - 96.4).abs() / 96.4 < 1e-9, "{e}");
    }

    #[test]
    fn zero_velocity_gives_zero_energy() {
        let r = record(|_| 0.0, vec![3.0]);
        assert_eq!(energy_per_block(&r, OMAV_MASS_KG).unwrap(), 0.0);
    }

    #[test]
    fn no_blocks_is_undefined() {
        let r = record(|_| 1.0, vec![]);
        assert_eq!(energy_per_block(&r, OMAV_MASS_KG), Err(StatsError::NoBlocks));
    }

    #[test]
    fn transfers_after_cutoff_are_excluded() {
        let r = record(|_| 0.0, vec![1.0, 20.0, 79.9, 80.0, 80.5]);
        assert_eq!(blocks_transferred(&r), 4);
        assert_eq!(blocks_transferred(&record(|_| 0.0, vec![])), 0);
    }

    proptest! {
        #[test]
        fn energy_scales_linearly_in_mass_and_quadratically_in_speed(
            mass in 0.1f64..20.0, scale in 0.1f64..5.0, freq in 0.01f64..1.0,
        ) {
            let base = record(|t| (freq * t).sin().abs(), vec![5.0]);
            let scaled = record(|t| scale * (freq * t).sin().abs(), vec![5.0]);
            let e1 = energy_per_block(&base, mass).unwrap();
            let e2 = energy_per_block(&base, 2.0 * mass).unwrap();
            let e3 = energy_per_block(&scaled, mass).unwrap();
            prop_assert!((e2 - 2.0 * e1).abs() <= 1e-9 * e2.abs().max(1.0));
            prop_assert!((e3 - scale * scale * e1).abs() <= 1e-9 * e3.abs().max(1.0));
        }
    }
}

//! Trial CSV schema.
//!
//! One row per trial, header required:
//!
//! ```text
//! participant,expertise,display,haptics,duration_s,blocks,energy_j,
//! tlx_md,tlx_pd,tlx_td,tlx_ef,tlx_pe,tlx_fr,w_md,w_pd,w_td,w_ef,w_pe,w_fr
//! ```
//!
//! `expertise` is `B|E`, `display` is `SC|MR`, `haptics` is `H|NoH`.
//! `energy_j` is empty when no block was transferred. The twelve TLX columns
//! are either all empty (no questionnaire) or all filled.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{
    blocks_transferred, energy_per_block, DisplayMode, Expertise, Haptics, Result, StatsError, TlxResponse,
    TrialRecord,
};

/// Flat per-trial summary, the unit of analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub participant: String,
    pub expertise: Expertise,
    pub display: DisplayMode,
    pub haptics: Haptics,
    pub duration: f64,
    pub blocks: usize,
    pub energy: Option<f64>,
    pub tlx: Option<TlxResponse>,
}

impl TrialRow {
    pub fn from_record(record: &TrialRecord, mass: f64) -> Self {
        Self {
            participant: record.participant.clone(),
            expertise: record.expertise,
            display: record.display,
            haptics: record.haptics,
            duration: record.duration,
            blocks: blocks_transferred(record),
            energy: energy_per_block(record, mass).ok(),
            tlx: record.tlx,
        }
    }

    /// Configuration label such as `MR-H-E`.
    pub fn config_label(&self) -> String {
        format!("{}-{}-{}", self.display, self.haptics, self.expertise)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    participant: String,
    expertise: Expertise,
    display: DisplayMode,
    haptics: Haptics,
    duration_s: f64,
    blocks: usize,
    energy_j: Option<f64>,
    tlx_md: Option<f64>,
    tlx_pd: Option<f64>,
    tlx_td: Option<f64>,
    tlx_ef: Option<f64>,
    tlx_pe: Option<f64>,
    tlx_fr: Option<f64>,
    w_md: Option<u8>,
    w_pd: Option<u8>,
    w_td: Option<u8>,
    w_ef: Option<u8>,
    w_pe: Option<u8>,
    w_fr: Option<u8>,
}

impl From<&TrialRow> for CsvRow {
    fn from(r: &TrialRow) -> Self {
        let ratings = r.tlx.map(|t| t.ratings().map(Some)).unwrap_or([None; 6]);
        let weights = r.tlx.map(|t| t.weights().map(Some)).unwrap_or([None; 6]);
        CsvRow {
            participant: r.participant.clone(),
            expertise: r.expertise,
            display: r.display,
            haptics: r.haptics,
            duration_s: r.duration,
            blocks: r.blocks,
            energy_j: r.energy,
            tlx_md: ratings[0],
            tlx_pd: ratings[1],
            tlx_td: ratings[2],
            tlx_ef: ratings[3],
            tlx_pe: ratings[4],
            tlx_fr: ratings[5],
            w_md: weights[0],
            w_pd: weights[1],
            w_td: weights[2],
            w_ef: weights[3],
            w_pe: weights[4],
            w_fr: weights[5],
        }
    }
}

impl TryFrom<CsvRow> for TrialRow {
    type Error = StatsError;

    fn try_from(r: CsvRow) -> Result<Self> {
        let ratings = [r.tlx_md, r.tlx_pd, r.tlx_td, r.tlx_ef, r.tlx_pe, r.tlx_fr];
        let weights = [r.w_md, r.w_pd, r.w_td, r.w_ef, r.w_pe, r.w_fr];
        let filled = ratings.iter().filter(|v| v.is_some()).count() + weights.iter().filter(|v| v.is_some()).count();
        let tlx = match filled {
            0 => None,
            12 => Some(TlxResponse::new(ratings.map(Option::unwrap), weights.map(Option::unwrap))?),
            _ => {
                return Err(StatsError::InvalidInput(format!(
                    "participant {}: TLX columns partially filled",
                    r.participant
                )))
            }
        };
        Ok(TrialRow {
            participant: r.participant,
            expertise: r.expertise,
            display: r.display,
            haptics: r.haptics,
            duration: r.duration_s,
            blocks: r.blocks,
            energy: r.energy_j,
            tlx,
        })
    }
}

pub fn read_trials(reader: impl Read) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<CsvRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| StatsError::InvalidInput(format!("trial CSV record {}: {e}", i + 1)))?;
            TrialRow::try_from(row)
        })
        .collect()
}

pub fn write_trials(writer: impl Write, rows: &[TrialRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(CsvRow::from(row))
            .map_err(|e| StatsError::InvalidInput(e.to_string()))?;
    }
    wtr.flush().map_err(|e| StatsError::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
participant,expertise,display,haptics,duration_s,blocks,energy_j,tlx_md,tlx_pd,tlx_td,tlx_ef,tlx_pe,tlx_fr,w_md,w_pd,w_td,w_ef,w_pe,w_fr
p01,B,SC,NoH,80,2,310.5,70,20,55,60,40,35,5,1,3,2,4,0
p02,E,MR,H,80,0,,,,,,,,,,,,,
";

    #[test]
    fn parses_and_round_trips() {
        let rows = read_trials(SAMPLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].config_label(), "SC-NoH-B");
        assert_eq!(rows[0].tlx.unwrap().weights(), [5, 1, 3, 2, 4, 0]);
        assert_eq!(rows[1].energy, None);
        assert!(rows[1].tlx.is_none());

        let mut out = Vec::new();
        write_trials(&mut out, &rows).unwrap();
        assert_eq!(read_trials(out.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_partial_tlx_and_bad_levels() {
        let partial = SAMPLE.replace("p02,E,MR,H,80,0,,,", "p02,E,MR,H,80,0,,50,");
        assert!(read_trials(partial.as_bytes()).is_err());
        let bad = SAMPLE.replace("p01,B,SC", "p01,X,SC");
        assert!(read_trials(bad.as_bytes()).is_err());
    }
}

//! Two-level orthogonal arrays and Taguchi response tables.
//!
//! For every run the replicates are reduced to a mean, a sample standard
//! deviation and a signal-to-noise ratio. Each factor level then receives the
//! average of those per-run statistics over the runs that use the level, and
//! factors are ranked by the spread (`Delta`) between their levels.

use crate::{DisplayMode, Expertise, Haptics, Result, StatsError};

/// Which direction of the response is desirable; selects the SNR formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `SNR = -10 log10(mean(1 / y²))`
    LargerIsBetter,
    /// `SNR = -10 log10(mean(y²))`
    SmallerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthogonalArray {
    pub factors: Vec<String>,
    /// `rows[run][factor]` is the level index (0 or 1) used by that run.
    pub rows: Vec<Vec<usize>>,
}

impl OrthogonalArray {
    /// L4(2³) with columns display, haptics, expertise:
    ///
    /// | run | display | haptics | expertise |
    /// |-----|---------|---------|-----------|
    /// | 1   | SC      | NoH     | B         |
    /// | 2   | SC      | H       | E         |
    /// | 3   | MR      | NoH     | E         |
    /// | 4   | MR      | H       | B         |
    pub fn l4() -> Self {
        Self {
            factors: vec![
                "Display Technology".to_owned(),
                "Haptics".to_owned(),
                "Operator Expertise".to_owned(),
            ],
            rows: vec![vec![0, 0, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        }
    }

    /// Run index (0-based) of the L4 array that uses the given levels, if any.
    pub fn l4_run(display: DisplayMode, haptics: Haptics, expertise: Expertise) -> Option<usize> {
        let key = [display.index(), haptics.index(), expertise.index()];
        Self::l4().rows.iter().position(|r| r[..] == key[..])
    }

    pub fn runs(&self) -> usize {
        self.rows.len()
    }

    pub fn levels(&self, factor: usize) -> usize {
        self.rows.iter().map(|r| r[factor]).max().map_or(0, |m| m + 1)
    }
}

/// Level averages of one per-run statistic, plus Delta and Rank per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    /// `levels[factor][level]`
    pub levels: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    /// 1 = largest Delta. Ties keep factor order.
    pub rank: Vec<usize>,
}

impl ResponseTable {
    fn build(design: &OrthogonalArray, per_run: &[f64]) -> Self {
        let levels: Vec<Vec<f64>> = (0..design.factors.len())
            .map(|f| {
                (0..design.levels(f))
                    .map(|l| {
                        let vals: Vec<f64> = design
                            .rows
                            .iter()
                            .zip(per_run)
                            .filter(|(row, _)| row[f] == l)
                            .map(|(_, &v)| v)
                            .collect();
                        vals.iter().sum::<f64>() / vals.len() as f64
                    })
                    .collect()
            })
            .collect();
        let delta: Vec<f64> = levels
            .iter()
            .map(|lv| {
                let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = lv.iter().copied().fold(f64::INFINITY, f64::min);
                max - min
            })
            .collect();
        let mut order: Vec<usize> = (0..delta.len()).collect();
        order.sort_by(|&a, &b| delta[b].total_cmp(&delta[a]).then(a.cmp(&b)));
        let mut rank = vec![0; delta.len()];
        for (r, &f) in order.iter().enumerate() {
            rank[f] = r + 1;
        }
        Self { levels, delta, rank }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaguchiResult {
    pub run_means: Vec<f64>,
    /// Sample standard deviation per run; `None` for single-replicate runs.
    pub run_stdevs: Vec<Option<f64>>,
    pub run_snr: Vec<f64>,
    pub means: ResponseTable,
    /// Present only when every run has at least two replicates.
    pub stdevs: Option<ResponseTable>,
    pub snr: ResponseTable,
}

pub fn signal_to_noise(values: &[f64], objective: Objective) -> Result<f64> {
    let n = values.len() as f64;
    let msd = match objective {
        Objective::LargerIsBetter => {
            if let Some(&bad) = values.iter().find(|&&y| y <= 0.0) {
                return Err(StatsError::NonPositive(bad));
            }
            values.iter().map(|y| 1.0 / (y * y)).sum::<f64>() / n
        }
        Objective::SmallerIsBetter => values.iter().map(|y| y * y).sum::<f64>() / n,
    };
    Ok(-10.0 * msd.log10())
}

fn sample_stdev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Computes the response tables for means, standard deviations and SNR.
///
/// `responses[run]` holds the replicates observed for that design row.
pub fn taguchi_analyze(
    design: &OrthogonalArray,
    responses: &[Vec<f64>],
    objective: Objective,
) -> Result<TaguchiResult> {
    for run in 0..design.runs() {
        if responses.get(run).is_none_or(|r| r.is_empty()) {
            return Err(StatsError::MissingRun(run));
        }
    }
    let responses = &responses[..design.runs()];
    let run_means: Vec<f64> = responses
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let run_stdevs: Vec<Option<f64>> = responses.iter().map(|r| sample_stdev(r)).collect();
    let run_snr = responses
        .iter()
        .map(|r| signal_to_noise(r, objective))
        .collect::<Result<Vec<_>>>()?;

    let stdevs = run_stdevs
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|s| ResponseTable::build(design, &s));

    Ok(TaguchiResult {
        means: ResponseTable::build(design, &run_means),
        snr: ResponseTable::build(design, &run_snr),
        stdevs,
        run_means,
        run_stdevs,
        run_snr,
    })
}

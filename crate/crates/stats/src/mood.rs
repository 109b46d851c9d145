//! Mood's median test.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Result, StatsError};

#[derive(Debug, Clone, PartialEq)]
pub struct MoodsMedian {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub grand_median: f64,
    /// `counts[g] = (above, at_or_below)` for each group.
    pub counts: Vec<(usize, usize)>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pearson chi-square on the 2×k table of counts above / at-or-below the
/// pooled median, with `k − 1` degrees of freedom.
pub fn moods_median(groups: &[Vec<f64>]) -> Result<MoodsMedian> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { expected: 2, got: groups.len() });
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(StatsError::InvalidInput("Mood's median test needs non-empty groups".into()));
    }
    let mut pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand_median = median(&mut pooled);

    let counts: Vec<(usize, usize)> = groups
        .iter()
        .map(|g| {
            let above = g.iter().filter(|&&v| v > grand_median).count();
            (above, g.len() - above)
        })
        .collect();
    let total = pooled.len() as f64;
    let above_total: usize = counts.iter().map(|c| c.0).sum();
    let below_total = pooled.len() - above_total;
    if above_total == 0 || below_total == 0 {
        return Err(StatsError::DegenerateMedian);
    }

    let mut chi2 = 0.0;
    for (g, &(above, below)) in groups.iter().zip(&counts) {
        let size = g.len() as f64;
        for (observed, row_total) in [(above, above_total), (below, below_total)] {
            let expected = size * row_total as f64 / total;
            chi2 += (observed as f64 - expected).powi(2) / expected;
        }
    }
    let df = groups.len() - 1;
    let p = ChiSquared::new(df as f64).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);
    Ok(MoodsMedian { chi2, df, p, grand_median, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let g = vec![1.0, 2.0, 3.0, 4.0];
        let r = moods_median(&[g.clone(), g]).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_separated_groups_reach_n() {
        let r = moods_median(&[vec![1.0; 4], vec![9.0; 4]]).unwrap();
        assert!((r.chi2 - 8.0).abs() < 1e-12);
        assert_eq!(r.counts, vec![(0, 4), (4, 0)]);
    }

    #[test]
    fn all_equal_is_degenerate() {
        assert_eq!(moods_median(&[vec![2.0; 3], vec![2.0; 5]]), Err(StatsError::DegenerateMedian));
        assert!(matches!(moods_median(&[vec![1.0]]), Err(StatsError::TooFewGroups { .. })));
    }
}

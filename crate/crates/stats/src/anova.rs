//! Fixed-effects analysis of variance.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::{Result, StatsError};

/// One row of an ANOVA table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effect {
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayAnova {
    pub factor_a: Effect,
    pub factor_b: Effect,
    pub interaction: Effect,
    pub ss_error: f64,
    pub df_error: f64,
    pub ms_error: f64,
    pub ss_total: f64,
    /// `cell_means[a][b]`
    pub cell_means: Vec<Vec<f64>>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneWayAnova {
    pub between: Effect,
    pub ss_error: f64,
    pub df_error: f64,
    pub ms_error: f64,
    pub group_means: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn f_upper_tail(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(df1, df2)
        .map(|d| d.sf(f))
        .unwrap_or(f64::NAN)
}

fn effect(ss: f64, df: f64, ms_error: f64, df_error: f64) -> Effect {
    let ms = ss / df;
    let f = if ms_error > 0.0 {
        ms / ms_error
    } else if ms > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Effect { ss, df, ms, f, p: f_upper_tail(f, df, df_error) }
}

/// Balanced two-way ANOVA with interaction.
///
/// `cells[a][b]` holds the replicates for level `a` of the first factor and
/// level `b` of the second. Every cell needs the same number `n >= 2` of
/// observations.
pub fn anova_two_way(cells: &[Vec<Vec<f64>>]) -> Result<TwoWayAnova> {
    let a = cells.len();
    let b = cells.first().map_or(0, Vec::len);
    if a < 2 || b < 2 || cells.iter().any(|row| row.len() != b) {
        return Err(StatsError::InvalidInput(
            "two-way ANOVA needs a rectangular grid of at least 2x2 cells".into(),
        ));
    }
    let n = cells[0][0].len();
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell.len() < 2 {
                return Err(StatsError::DegenerateCells(i, j));
            }
            if cell.len() != n {
                return Err(StatsError::Unbalanced(i, j, cell.len(), n));
            }
        }
    }

    let cell_means: Vec<Vec<f64>> = cells.iter().map(|row| row.iter().map(|c| mean(c)).collect()).collect();
    let grand = cell_means.iter().flatten().sum::<f64>() / (a * b) as f64;
    let a_means: Vec<f64> = cell_means.iter().map(|row| mean(row)).collect();
    let b_means: Vec<f64> = (0..b).map(|j| cell_means.iter().map(|row| row[j]).sum::<f64>() / a as f64).collect();

    let nf = n as f64;
    let ss_a = (b as f64) * nf * a_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_b = (a as f64) * nf * b_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_e = 0.0;
    let mut ss_t = 0.0;
    for i in 0..a {
        for j in 0..b {
            let m = cell_means[i][j];
            ss_ab += nf * (m - a_means[i] - b_means[j] + grand).powi(2);
            for &y in &cells[i][j] {
                ss_e += (y - m).powi(2);
                ss_t += (y - grand).powi(2);
            }
        }
    }

    let df_e = (a * b * (n - 1)) as f64;
    let ms_e = ss_e / df_e;
    Ok(TwoWayAnova {
        factor_a: effect(ss_a, (a - 1) as f64, ms_e, df_e),
        factor_b: effect(ss_b, (b - 1) as f64, ms_e, df_e),
        interaction: effect(ss_ab, ((a - 1) * (b - 1)) as f64, ms_e, df_e),
        ss_error: ss_e,
        df_error: df_e,
        ms_error: ms_e,
        ss_total: ss_t,
        cell_means,
        replicates: n,
    })
}

/// One-way ANOVA; groups may differ in size.
pub fn anova_one_way(groups: &[Vec<f64>]) -> Result<OneWayAnova> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { expected: 2, got: groups.len() });
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::DegenerateCells(i, 0));
    }
    let total_n: usize = groups.iter().map(Vec::len).sum();
    if total_n <= groups.len() {
        return Err(StatsError::InvalidInput("one-way ANOVA needs replicates".into()));
    }
    let grand = groups.iter().flatten().sum::<f64>() / total_n as f64;
    let group_means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_error: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|y| (y - m).powi(2)).sum::<f64>())
        .sum();
    let df_error = (total_n - groups.len()) as f64;
    let ms_error = ss_error / df_error;
    Ok(OneWayAnova {
        between: effect(ss_between, (groups.len() - 1) as f64, ms_error, df_error),
        ss_error,
        df_error,
        ms_error,
        group_means,
    })
}

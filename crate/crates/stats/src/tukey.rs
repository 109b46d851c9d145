//! Tukey's honestly-significant-difference procedure.
//!
//! The studentized range distribution is evaluated by direct quadrature:
//!
//! ```text
//! P(Q < q; k, ∞) = k ∫ φ(z) [Φ(z) − Φ(z − q)]^(k−1) dz
//! P(Q < q; k, ν) = ∫₀^∞ f_ν(s) P(Q < q·s; k, ∞) ds
//! ```
//!
//! where `f_ν` is the density of `χ_ν / √ν`. Quantiles are found by a
//! bracketed Illinois iteration on the CDF.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::{Result, StatsError};

const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_8, 0.095_158_511_682_492_8),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
];

/// Composite 16-point Gauss-Legendre over `[a, b]` split into `panels`.
fn integrate(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for &(x, w) in &GL16 {
            total += w * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total * 0.5 * h
}

/// Above this the chi factor is indistinguishable from 1 at our tolerance.
const DF_INFINITE: f64 = 1e6;

fn range_cdf_infinite_df(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let std = Normal::standard();
    let km1 = (k - 1) as i32;
    let inner = integrate(-8.5, 8.5 + w, 32, |z| {
        let d = std.cdf(z) - std.cdf(z - w);
        (-0.5 * z * z).exp() * d.max(0.0).powi(km1)
    });
    (k as f64 * inner / (2.0 * std::f64::consts::PI).sqrt()).clamp(0.0, 1.0)
}

fn check(k: usize, df: f64) -> Result<()> {
    if !(2..=100).contains(&k) || df.is_nan() || df < 1.0 {
        return Err(StatsError::UnsupportedDf { k, df });
    }
    Ok(())
}

/// CDF of the studentized range for `k` means and `df` error degrees of
/// freedom (`f64::INFINITY` allowed).
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> Result<f64> {
    check(k, df)?;
    if q <= 0.0 {
        return Ok(0.0);
    }
    if df >= DF_INFINITE {
        return Ok(range_cdf_infinite_df(q, k));
    }
    let log_norm = 0.5 * df * df.ln() - ln_gamma(0.5 * df) - (0.5 * df - 1.0) * std::f64::consts::LN_2;
    let sigma = (0.5 / df).sqrt();
    let lo = (1.0 - 12.0 * sigma).max(0.0);
    let hi = 1.0 + 12.0 * sigma;
    let p = integrate(lo, hi, 32, |s| {
        if s <= 0.0 {
            return 0.0;
        }
        let log_f = log_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
        log_f.exp() * range_cdf_infinite_df(q * s, k)
    });
    Ok(p.clamp(0.0, 1.0))
}

/// Upper-α critical value `q(α, k, df)`.
pub fn studentized_range_quantile(alpha: f64, k: usize, df: f64) -> Result<f64> {
    check(k, df)?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(StatsError::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let target = 1.0 - alpha;
    let g = |q: f64| studentized_range_cdf(q, k, df).map(|p| p - target);

    let (mut a, mut fa) = (0.0, -target);
    let (mut b, mut fb) = (4.0, g(4.0)?);
    while fb < 0.0 {
        a = b;
        fa = fb;
        b *= 2.0;
        fb = g(b)?;
        if b > 1e4 {
            return table_q05(k, df)
                .filter(|_| (alpha - 0.05).abs() < 1e-12)
                .ok_or(StatsError::UnsupportedDf { k, df });
        }
    }
    // Illinois variant of regula falsi
    let mut side = 0;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = g(c)?;
        if fc.abs() < 1e-12 || (b - a).abs() < 1e-12 * c.abs().max(1.0) {
            return Ok(c);
        }
        if fc * fb > 0.0 {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Published α = 0.05 critical values, `k` = 2..=6 by df ∈ {5, 10, 20, 30, 60, ∞}.
const Q05_TABLE: [[f64; 6]; 5] = [
    [3.635, 3.151, 2.950, 2.888, 2.829, 2.772],
    [4.602, 3.877, 3.578, 3.486, 3.399, 3.314],
    [5.218, 4.327, 3.958, 3.845, 3.737, 3.633],
    [5.673, 4.654, 4.232, 4.102, 3.977, 3.858],
    [6.033, 4.912, 4.445, 4.302, 4.163, 4.030],
];

/// Table lookup for α = 0.05; only exact table entries are returned.
pub fn table_q05(k: usize, df: f64) -> Option<f64> {
    let col = match df {
        5.0 => 0,
        10.0 => 1,
        20.0 => 2,
        30.0 => 3,
        60.0 => 4,
        d if d.is_infinite() => 5,
        _ => return None,
    };
    Q05_TABLE.get(k.checked_sub(2)?).map(|row| row[col])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub i: usize,
    pub j: usize,
    /// `mean[i] - mean[j]`
    pub diff: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyHsd {
    pub q_crit: f64,
    /// Minimum significant difference `q · √(MS_e / n)`.
    pub hsd: f64,
    pub pairs: Vec<PairComparison>,
    /// Grouping letters per input mean; means that share no letter differ significantly.
    pub letters: Vec<String>,
}

/// Pairwise comparison of `means` (one per cell, `n` observations each).
pub fn tukey_hsd(means: &[f64], ms_error: f64, df_error: f64, n: usize, alpha: f64) -> Result<TukeyHsd> {
    let k = means.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups { expected: 2, got: k });
    }
    if n == 0 || !(ms_error >= 0.0) {
        return Err(StatsError::InvalidInput("Tukey HSD needs n > 0 and MS_error >= 0".into()));
    }
    let q_crit = studentized_range_quantile(alpha, k, df_error)?;
    let se = (ms_error / n as f64).sqrt();
    let hsd = q_crit * se;

    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = means[i] - means[j];
            let p = if se > 0.0 {
                1.0 - studentized_range_cdf(diff.abs() / se, k, df_error)?
            } else if diff == 0.0 {
                1.0
            } else {
                0.0
            };
            pairs.push(PairComparison { i, j, diff, p, significant: diff.abs() > hsd });
        }
    }

    Ok(TukeyHsd { q_crit, hsd, letters: grouping_letters(means, hsd), pairs })
}

/// Letters over means sorted in descending order: each maximal run of
/// consecutive means spanning at most `hsd` receives a fresh letter.
fn grouping_letters(means: &[f64], hsd: f64) -> Vec<String> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));

    let mut letters = vec![String::new(); means.len()];
    let mut last_end = None;
    let mut next = b'A';
    for start in 0..order.len() {
        let mut end = start;
        while end + 1 < order.len() && means[order[start]] - means[order[end + 1]] <= hsd {
            end += 1;
        }
        if last_end.is_some_and(|e| end <= e) {
            continue;
        }
        let letter = next as char;
        next = next.wrapping_add(1);
        for &idx in &order[start..=end] {
            letters[idx].push(letter);
        }
        last_end = Some(end);
    }
    letters
}

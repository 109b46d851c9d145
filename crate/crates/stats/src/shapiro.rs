//! Shapiro-Wilk normality test, Royston's AS R94 approximation.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p: f64,
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Half of the antisymmetric coefficient vector, `a[i]` pairing the
/// `i`-th smallest with the `i`-th largest observation.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let std = Normal::standard();
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| std.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// W statistic and its p-value for `3 <= n <= 2000`.
pub fn shapiro_wilk(sample: &[f64]) -> Result<ShapiroWilk> {
    let n = sample.len();
    if !(3..=2000).contains(&n) {
        return Err(StatsError::SizeOutOfRange(n));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] < f64::EPSILON * x[n - 1].abs().max(1.0) {
        return Err(StatsError::ConstantSample);
    }

    let a = coefficients(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ss).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let an = n as f64;
        let mut y = (1.0 - w).ln();
        let (m, s) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok(ShapiroWilk { w, p: 1e-99 });
            }
            y = -(gamma - y).ln();
            (poly(&C3, an), poly(&C4, an).exp())
        } else {
            let xx = an.ln();
            (poly(&C5, xx), poly(&C6, xx).exp())
        };
        Normal::new(m, s).map(|d| d.sf(y)).unwrap_or(f64::NAN)
    };
    Ok(ShapiroWilk { w, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_vector_is_unit_length() {
        for n in [3, 4, 5, 6, 11, 12, 50, 500] {
            let a = coefficients(n);
            let norm2 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((norm2 - 1.0).abs() < 1e-6, "n={n}: {norm2}");
        }
    }

    #[test]
    fn normal_quantile_grid_is_nearly_perfect() {
        let std = Normal::standard();
        let n = 50;
        let x: Vec<f64> = (1..=n).map(|i| std.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25))).collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.w > 0.99, "{r:?}");
        assert!(r.p > 0.5);
    }

    #[test]
    fn alternating_extremes_are_not_normal() {
        let x: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.p < 0.05, "{r:?}");
    }

    #[test]
    fn guards() {
        assert_eq!(shapiro_wilk(&[1.0, 2.0]), Err(StatsError::SizeOutOfRange(2)));
        assert_eq!(shapiro_wilk(&[2.0; 10]), Err(StatsError::ConstantSample));
    }

    #[test]
    fn three_points() {
        // equally spaced triple is as normal as three points get
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p - 1.0).abs() < 1e-9);
    }
}

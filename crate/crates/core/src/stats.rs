//! Small statistics toolkit: running moments, batch-means ratio intervals,
//! least-squares slope fits and the two-sample Kolmogorov–Smirnov test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{AoiError, Result};

/// Welford accumulator for mean, variance and raw second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
    sum_sq: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.sum_sq += x * x;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// `E[X²]` estimate.
    pub fn second_moment(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_sq / self.count as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = RunningMoments::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Two-sided Student-t critical value at the given confidence level.
pub fn t_critical(confidence: f64, dof: u64) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

/// Ratio estimate `Σ numerators / Σ denominators` with a batch-means
/// confidence half-width.
///
/// Observations are split into at most `batches` contiguous batches of equal
/// size (the remainder joins the last batch). With fewer than two batches the
/// half-width is reported as zero.
pub fn batch_means_ratio(num: &[f64], den: &[f64], batches: usize, confidence: f64) -> (f64, f64) {
    debug_assert_eq!(num.len(), den.len());
    let total = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let b = batches.min(num.len());
    if b < 2 {
        return (total, 0.0);
    }
    let size = num.len() / b;
    let ratios: RunningMoments = (0..b)
        .map(|i| {
            let lo = i * size;
            let hi = if i + 1 == b { num.len() } else { lo + size };
            num[lo..hi].iter().sum::<f64>() / den[lo..hi].iter().sum::<f64>()
        })
        .collect();
    let half = t_critical(confidence, (b - 1) as u64) * ratios.std_err();
    (total, half)
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Minimum number of points accepted by [`fit_line`].
pub const MIN_FIT_POINTS: usize = 4;

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(AoiError::Numeric("x and y lengths differ".into()));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(AoiError::Numeric(format!(
            "slope fit needs at least {MIN_FIT_POINTS} points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AoiError::Numeric("degenerate x values".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    let fit = SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: xs.len(),
    };
    if fit.slope.is_finite() && fit.intercept.is_finite() {
        Ok(fit)
    } else {
        Err(AoiError::Numeric("non-finite fit".into()))
    }
}

/// Fits `ln(Δ / ln n)` against `ln n`, isolating the polynomial exponent of an
/// `O(n^α log n)` law.
pub fn fit_scaling_exponent(ns: &[f64], ages: &[f64]) -> Result<SlopeFit> {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = ns.iter().zip(ages).map(|(n, d)| (d / n.ln()).ln()).collect();
    fit_line(&xs, &ys)
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsOutcome {
    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Two-sample KS test with the asymptotic Kolmogorov distribution.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    // Stephens' small-sample correction
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsOutcome {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2 j² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

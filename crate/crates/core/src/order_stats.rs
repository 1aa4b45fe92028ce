//! Order statistics of i.i.d. exponential random variables.
//!
//! For `n` i.i.d. `Exp(λ)` draws the `k`-th smallest value `X_{k:n}` is a sum of
//! independent spacings, `X_{k:n} = Σ_{i=1..k} E_i / (λ (n - i + 1))`, which gives
//!
//! * `E[X_{k:n}]   = (H_n - H_{n-k}) / λ`
//! * `Var[X_{k:n}] = (G_n - G_{n-k}) / λ²`
//!
//! with `H_m = Σ 1/j` and `G_m = Σ 1/j²`. Both partial sums are served by
//! [`HarmonicCache`].

use std::f64::consts::PI;
use std::sync::{LazyLock, RwLock};

use rand::Rng;
use rand_distr::{Exp1, Open01};

use crate::error::{check_rate, AoiError, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `π²/6`, the limit of `G_m`.
pub const ZETA2: f64 = PI * PI / 6.0;

/// Partial sums at or above this index use the asymptotic expansions.
pub const ASYMPTOTIC_THRESHOLD: u64 = 10_000_000;

/// Prefix tables are memoized up to this index; larger exact sums are
/// continued from the last cached entry without being stored.
const CACHE_CAP: u64 = 1 << 16;

/// Memoized harmonic sums `H_m` and `G_m`.
///
/// Below [`ASYMPTOTIC_THRESHOLD`] values are exact compensated partial sums.
/// Above it,
///
/// * `H_m = ln m + γ + 1/(2m) - 1/(12m²)`, truncation error below `1/(120 m⁴)`
/// * `G_m = π²/6 - 1/m + 1/(2m²) - 1/(6m³)`, truncation error below `1/(30 m⁵)`
///
/// which at `m ≥ 10⁷` is far under double-precision resolution. The cache is
/// safe to share between threads and behaves as a pure function.
#[derive(Debug)]
pub struct HarmonicCache {
    // prefix[m] = (H_m, G_m)
    prefix: RwLock<Vec<(f64, f64)>>,
}

impl Default for HarmonicCache {
    fn default() -> Self {
        Self::new()
    }
}

impl HarmonicCache {
    pub fn new() -> Self {
        HarmonicCache {
            prefix: RwLock::new(vec![(0.0, 0.0)]),
        }
    }

    /// `H_m = Σ_{j=1..m} 1/j`.
    pub fn harmonic(&self, m: u64) -> f64 {
        self.pair(m).0
    }

    /// `G_m = Σ_{j=1..m} 1/j²`.
    pub fn gsum(&self, m: u64) -> f64 {
        self.pair(m).1
    }

    /// `(H_m, G_m)` in one lookup.
    pub fn pair(&self, m: u64) -> (f64, f64) {
        if m >= ASYMPTOTIC_THRESHOLD {
            return (harmonic_asymptotic(m as f64), gsum_asymptotic(m as f64));
        }
        if m <= CACHE_CAP {
            if let Some(&v) = self.prefix.read().expect("cache poisoned").get(m as usize) {
                return v;
            }
            let mut table = self.prefix.write().expect("cache poisoned");
            extend_table(&mut table, m as usize);
            return table[m as usize];
        }
        let start = self.pair(CACHE_CAP);
        let mut h = Neumaier::from(start.0);
        let mut g = Neumaier::from(start.1);
        for j in (CACHE_CAP + 1)..=m {
            let x = 1.0 / j as f64;
            h.add(x);
            g.add(x * x);
        }
        (h.value(), g.value())
    }
}

fn extend_table(table: &mut Vec<(f64, f64)>, upto: usize) {
    if table.len() > upto {
        return;
    }
    // Restarting the compensated sums from the rounded last entry costs at
    // most one ulp per extension.
    let &(h0, g0) = table.last().expect("table holds m = 0");
    let mut h = Neumaier::from(h0);
    let mut g = Neumaier::from(g0);
    for j in table.len()..=upto {
        let x = 1.0 / j as f64;
        h.add(x);
        g.add(x * x);
        table.push((h.value(), g.value()));
    }
}

fn harmonic_asymptotic(m: f64) -> f64 {
    let inv = 1.0 / m;
    m.ln() + EULER_GAMMA + 0.5 * inv - inv * inv / 12.0
}

fn gsum_asymptotic(m: f64) -> f64 {
    let inv = 1.0 / m;
    ZETA2 - inv + 0.5 * inv * inv - inv * inv * inv / 6.0
}

#[derive(Debug, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn from(sum: f64) -> Self {
        Neumaier { sum, comp: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

static SHARED: LazyLock<HarmonicCache> = LazyLock::new(HarmonicCache::new);

/// Process-wide cache behind [`harmonic`] and [`gsum`].
pub fn shared_cache() -> &'static HarmonicCache {
    &SHARED
}

/// `H_m`, see [`HarmonicCache`].
pub fn harmonic(m: u64) -> f64 {
    SHARED.harmonic(m)
}

/// `G_m`, see [`HarmonicCache`].
pub fn gsum(m: u64) -> f64 {
    SHARED.gsum(m)
}

/// The `k`-th order statistic of `n` i.i.d. exponentials with parameter `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStatSpec {
    k: u64,
    n: u64,
    rate: f64,
}

impl OrderStatSpec {
    pub fn new(k: u64, n: u64, rate: f64) -> Result<Self> {
        if k < 1 || k > n {
            return Err(AoiError::OrderIndex { k, n });
        }
        check_rate(rate)?;
        Ok(OrderStatSpec { k, n, rate })
    }

    /// Maximum of `n` draws.
    pub fn max(n: u64, rate: f64) -> Result<Self> {
        Self::new(n, n, rate)
    }

    /// Minimum of `n` draws.
    pub fn min(n: u64, rate: f64) -> Result<Self> {
        Self::new(1, n, rate)
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `(H_n - H_{n-k}) / λ`
    pub fn mean(&self) -> f64 {
        if self.k == 1 {
            // X_{1:n} ~ Exp(nλ)
            return 1.0 / (self.n as f64 * self.rate);
        }
        (harmonic(self.n) - harmonic(self.n - self.k)) / self.rate
    }

    /// `(G_n - G_{n-k}) / λ²`
    pub fn variance(&self) -> f64 {
        if self.k == 1 {
            let r = self.n as f64 * self.rate;
            return 1.0 / (r * r);
        }
        (gsum(self.n) - gsum(self.n - self.k)) / (self.rate * self.rate)
    }

    /// `((H_n - H_{n-k})² + G_n - G_{n-k}) / λ²`
    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        m * m + self.variance()
    }

    /// One draw using the default spacings sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with(SamplingMethod::Spacings, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, method: SamplingMethod, rng: &mut R) -> f64 {
        match method {
            SamplingMethod::Spacings => {
                let mut acc = 0.0;
                for i in 0..self.k {
                    let e: f64 = rng.sample(Exp1);
                    acc += e / (self.rate * (self.n - i) as f64);
                }
                acc
            }
            SamplingMethod::Sorting => {
                let mut draws: Vec<f64> = (0..self.n).map(|_| rng.sample::<f64, _>(Exp1) / self.rate).collect();
                let idx = (self.k - 1) as usize;
                let (_, kth, _) = draws.select_nth_unstable_by(idx, f64::total_cmp);
                *kth
            }
        }
    }
}

/// [`OrderStatSpec::mean`] as a free function.
pub fn expected_order_stat(spec: &OrderStatSpec) -> f64 {
    spec.mean()
}

/// [`OrderStatSpec::variance`] as a free function.
pub fn variance_order_stat(spec: &OrderStatSpec) -> f64 {
    spec.variance()
}

/// [`OrderStatSpec::second_moment`] as a free function.
pub fn second_moment_order_stat(spec: &OrderStatSpec) -> f64 {
    spec.second_moment()
}

/// [`OrderStatSpec::sample`] as a free function.
pub fn sample_order_stat<R: Rng + ?Sized>(spec: &OrderStatSpec, rng: &mut R) -> f64 {
    spec.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMethod {
    /// Sum of `k` independent spacings, `O(k)`.
    #[default]
    Spacings,
    /// Materialize `n` draws and select the `k`-th, `O(n)`.
    Sorting,
}

/// Largest `m` sampled by spacings in [`sample_max`]; above it the closed-form
/// inverse CDF is used.
pub const MAX_SPACINGS_LIMIT: u64 = 16;

/// Draws the maximum of `m` i.i.d. `Exp(rate)` variables in `O(1)` for large `m`.
///
/// `P(max ≤ x) = (1 - e^{-rate·x})^m`, so `max = -ln(1 - U^{1/m}) / rate`,
/// evaluated as `-ln(-expm1(ln U / m)) / rate` to keep precision when
/// `U^{1/m}` is close to one. The maximum over zero draws is zero.
pub fn sample_max<R: Rng + ?Sized>(m: u64, rate: f64, rng: &mut R) -> f64 {
    match m {
        0 => 0.0,
        1 => rng.sample::<f64, _>(Exp1) / rate,
        m if m <= MAX_SPACINGS_LIMIT => {
            let mut acc = 0.0;
            for i in 1..=m {
                let e: f64 = rng.sample(Exp1);
                acc += e / (rate * i as f64);
            }
            acc
        }
        m => {
            let u: f64 = rng.sample(Open01);
            -(-(u.ln() / m as f64).exp_m1()).ln() / rate
        }
    }
}

/// `E[max of m Exp(rate)] = H_m / rate`, zero for `m = 0`.
pub fn mean_max(m: u64, rate: f64) -> f64 {
    harmonic(m) / rate
}

/// `Var[max of m Exp(rate)] = G_m / rate²`.
pub fn variance_max(m: u64, rate: f64) -> f64 {
    gsum(m) / (rate * rate)
}

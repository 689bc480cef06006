//! Statistical test battery: Student t (paired / one-sample), the
//! Wilcoxon-Mann-Whitney rank test (exact for small products of sample
//! sizes), Shapiro-Wilk normality and ordinary least squares.

pub mod shapiro;
pub mod special;

pub use shapiro::shapiro_wilk;

use crate::error::{Error, Result};
use special::{normal_cdf, normal_sf, t_sf};

/// Test sidedness.
///
/// `Less` / `Greater` state the alternative for the first sample relative to
/// the second (or to zero in one-sample mode). For exact rank tests the two
/// one-sided p-values do not generally sum to one; the two-sided p is
/// `min(1, 2 * min(less, greater))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tails {
    Two,
    Less,
    Greater,
}

impl Tails {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tails::Two => "two",
            Tails::Less => "less",
            Tails::Greater => "greater",
        }
    }
}

impl std::fmt::Display for Tails {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub test_name: String,
    pub tails: Tails,
    pub n: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TTestMode {
    Paired,
    OneSampleVsZero,
}

/// Student t test. Paired mode tests the mean of `a - b`; one-sample mode
/// tests the mean of `a` against zero.
pub fn t_test(a: &[f64], b: Option<&[f64]>, mode: TTestMode, tails: Tails) -> Result<TestResult> {
    let diffs: Vec<f64> = match mode {
        TTestMode::Paired => {
            let b = b.ok_or_else(|| Error::Config("paired t-test needs two samples".into()))?;
            if a.len() != b.len() {
                return Err(Error::LengthMismatch(a.len(), b.len()));
            }
            a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
        }
        TTestMode::OneSampleVsZero => a.to_vec(),
    };
    let n = diffs.len();
    if n < 2 {
        return Err(Error::SampleTooSmall(n));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let se = (var / n as f64).sqrt();
    let t = mean / se;
    let df = n as f64 - 1.0;
    let p = match tails {
        Tails::Two => (2.0 * t_sf(t.abs(), df)).min(1.0),
        Tails::Greater => t_sf(t, df),
        Tails::Less => 1.0 - t_sf(t, df),
    };
    Ok(TestResult {
        statistic: t,
        p_value: p,
        df: Some(df),
        test_name: match mode {
            TTestMode::Paired => "paired-t".to_string(),
            TTestMode::OneSampleVsZero => "t-vs-zero".to_string(),
        },
        tails,
        n,
    })
}

/// Largest `n_a * n_b` for which the exact null distribution is enumerated;
/// beyond it (or with ties) the tie-corrected normal approximation with
/// continuity correction is used.
pub const RANK_SUM_EXACT_LIMIT: usize = 400;

/// Wilcoxon-Mann-Whitney rank test. The statistic is U of the first sample.
pub fn rank_sum(a: &[f64], b: &[f64], tails: Tails) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let mut all: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0usize))
        .chain(b.iter().map(|&v| (v, 1usize)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // midranks + tie bookkeeping
    let mut ranks = vec![0.0f64; all.len()];
    let mut tie_term = 0.0f64;
    let mut has_ties = false;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = rank;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        i = j;
    }
    let r_a: f64 = ranks
        .iter()
        .zip(all.iter())
        .filter(|(_, (_, g))| *g == 0)
        .map(|(r, _)| *r)
        .sum();
    let u_a = r_a - (na * (na + 1)) as f64 / 2.0;

    let exact = !has_ties && na * nb <= RANK_SUM_EXACT_LIMIT;
    let (p_less, p_greater) = if exact {
        let u = u_a.round() as usize;
        let cdf = exact_u_cdf(na, nb);
        let total = cdf[na * nb];
        let p_le = cdf[u] / total;
        let p_ge = 1.0 - if u == 0 { 0.0 } else { cdf[u - 1] / total };
        (p_le, p_ge)
    } else {
        let n = (na + nb) as f64;
        let mu = (na * nb) as f64 / 2.0;
        let sigma = ((na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).sqrt();
        if sigma == 0.0 {
            (1.0, 1.0)
        } else {
            (
                normal_cdf((u_a - mu + 0.5) / sigma),
                normal_sf((u_a - mu - 0.5) / sigma),
            )
        }
    };
    let p = match tails {
        Tails::Two => (2.0 * p_less.min(p_greater)).min(1.0),
        Tails::Less => p_less,
        Tails::Greater => p_greater,
    };
    Ok(TestResult {
        statistic: u_a,
        p_value: p,
        df: None,
        test_name: if exact {
            "rank-sum-exact".to_string()
        } else {
            "rank-sum-normal".to_string()
        },
        tails,
        n: na + nb,
    })
}

/// Cumulative counts of rank arrangements by U value: `cdf[u]` = number of
/// ways to choose group labels with U <= u. Counts stay below 2^53 inside
/// the exact limit, so f64 arithmetic is lossless.
///
/// Recursion over the largest element: f(n, m, u) = f(n-1, m, u-m)
/// (largest is from A, beating all m B's) + f(n, m-1, u).
fn exact_u_cdf(na: usize, nb: usize) -> Vec<f64> {
    let max_u = na * nb;
    // table[b][u] = arrangements of (a_placed, b) items with U(A) = u
    let mut table = vec![vec![0.0f64; max_u + 1]; nb + 1];
    for row in table.iter_mut() {
        row[0] = 1.0; // only B items: U = 0
    }
    for _ in 1..=na {
        let mut next = vec![vec![0.0f64; max_u + 1]; nb + 1];
        for b_placed in 0..=nb {
            for u in 0..=max_u {
                let mut v = 0.0;
                if u >= b_placed {
                    v += table[b_placed][u - b_placed];
                }
                if b_placed > 0 {
                    v += next[b_placed - 1][u];
                }
                next[b_placed][u] = v;
            }
        }
        table = next;
    }
    let mut cdf = table[nb].clone();
    for u in 1..=max_u {
        cdf[u] += cdf[u - 1];
    }
    cdf
}

/// Ordinary least squares of y on x.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<RegressionResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::SampleTooSmall(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateX);
    }
    let sxy: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - mx) * (b - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
        n,
    })
}

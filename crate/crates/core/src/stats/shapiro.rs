//! Shapiro-Wilk W test, Royston's AS R94 formulation (the same algorithm
//! R's `shapiro.test` and scipy use). Coefficients come from normal order
//! statistics via the Royston polynomial corrections; p-values from the
//! log-normal transformation of 1 - W.

use crate::error::{Error, Result};
use crate::stats::special::{normal_quantile, normal_sf};
use crate::stats::{Tails, TestResult};

pub const MIN_N: usize = 3;
pub const MAX_N: usize = 50;

fn poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// W statistic and upper-tail p-value for 3 <= n <= 50.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if n < MIN_N {
        return Err(Error::SampleTooSmall(n));
    }
    if n > MAX_N {
        return Err(Error::SampleTooLarge(n));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sample contains non-finite values".into()));
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if x[n - 1] - x[0] <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let nn2 = n / 2;
    let mut a = vec![0.0f64; nn2 + 1]; // 1-based like the published algorithm

    if n == 3 {
        a[1] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let an = n as f64;
        let an25 = an + 0.25;
        let mut summ2 = 0.0;
        for i in 1..=nn2 {
            a[i] = normal_quantile((i as f64 - 0.375) / an25);
            summ2 += a[i] * a[i];
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();

        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - a[1] / ssumm2;
        let (i1, fac) = if n > 5 {
            let a2 = -a[2] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[2] = a2;
            (3, fac)
        } else {
            let fac = ((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (2, fac)
        };
        a[1] = a1;
        for v in a.iter_mut().skip(i1).take(nn2 + 1 - i1) {
            *v /= -fac;
        }
    }

    // W as the squared correlation between data and coefficients
    let range = x[n - 1] - x[0];
    let mut sx = 0.0;
    let mut sa = 0.0;
    for i in 0..n {
        sx += x[i] / range;
        let j = n - 1 - i;
        if i != j {
            let idx = i.min(j) + 1;
            sa += (if i > j { 1.0 } else { -1.0 }) * a[idx];
        }
    }
    sx /= n as f64;
    sa /= n as f64;

    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let j = n - 1 - i;
        let asa = if i != j {
            let idx = i.min(j) + 1;
            (if i > j { 1.0 } else { -1.0 }) * a[idx] - sa
        } else {
            -sa
        };
        let xsx = x[i] / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);

    let p = p_value(w, n);
    Ok(TestResult {
        statistic: w,
        p_value: p,
        df: None,
        test_name: "shapiro-wilk".to_string(),
        tails: Tails::Greater,
        n,
    })
}

fn p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        let stqr = std::f64::consts::FRAC_PI_3;
        let pi6 = 6.0 / std::f64::consts::PI;
        return (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0);
    }
    let an = n as f64;
    let y = (1.0 - w).ln();

    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -0.0006714];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

    let (z, m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 1e-99;
        }
        (-(gamma - y).ln(), poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (y, poly(&C5, xx), poly(&C6, xx).exp())
    };
    normal_sf((z - m) / s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sample_size_bounds() {
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(Error::SampleTooSmall(2))
        ));
        let big: Vec<f64> = (0..51).map(|i| i as f64).collect();
        assert!(matches!(shapiro_wilk(&big), Err(Error::SampleTooLarge(51))));
    }

    #[test]
    fn exact_normal_quantiles_score_as_normal() {
        // n = 9 sample placed at normal order-statistic positions;
        // scipy.stats.shapiro gives W = 0.9965069180, p = 0.9999273341
        let q: Vec<f64> = (1..=9)
            .map(|i| normal_quantile((i as f64 - 0.375) / 9.25))
            .collect();
        let r = shapiro_wilk(&q).unwrap();
        assert!(r.statistic > 0.98, "W = {}", r.statistic);
        assert!(r.p_value > 0.5, "p = {}", r.p_value);
        assert_abs_diff_eq!(r.statistic, 0.9965069180, epsilon = 1e-6);
        assert_abs_diff_eq!(r.p_value, 0.9999273341, epsilon = 1e-4);
    }

    #[test]
    fn skewed_sample_matches_reference() {
        // scipy.stats.shapiro reference: W = 0.8179969084, p = 0.0151181501
        let s = [
            0.05, 0.11, 0.18, 0.27, 0.39, 0.55, 0.77, 1.09, 1.61, 2.30, 3.22, 4.61,
        ];
        let r = shapiro_wilk(&s).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.8179969084, epsilon = 1e-6);
        assert_abs_diff_eq!(r.p_value, 0.0151181501, epsilon = 1e-4);
    }

    #[test]
    fn exponential_power_matches_reference_rates() {
        // Monte Carlo power against exponential data, frozen from the
        // reference implementation (scipy.stats.shapiro, 2000 trials):
        // n = 20 rejects 62% at alpha 0.01 and 85% at alpha 0.05;
        // n = 50 rejects 99.5% at alpha 0.01.
        use rand_core::{RngCore, SeedableRng};
        let draw = |seed: u64, n: usize| -> Vec<f64> {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                    -u.ln()
                })
                .collect()
        };
        let trials = 400;
        let (mut r01, mut r05, mut r01_n50) = (0, 0, 0);
        for seed in 0..trials {
            let p20 = shapiro_wilk(&draw(seed, 20)).unwrap().p_value;
            r01 += (p20 < 0.01) as usize;
            r05 += (p20 < 0.05) as usize;
            r01_n50 += (shapiro_wilk(&draw(10_000 + seed, 50)).unwrap().p_value < 0.01) as usize;
        }
        let rate01 = r01 as f64 / trials as f64;
        let rate05 = r05 as f64 / trials as f64;
        assert!((rate01 - 0.62).abs() < 0.10, "alpha 0.01 power {rate01}");
        assert!((rate05 - 0.85).abs() < 0.08, "alpha 0.05 power {rate05}");
        assert!(
            r01_n50 as f64 / trials as f64 > 0.95,
            "n=50 power {r01_n50}/{trials}"
        );
    }

    #[test]
    fn w_is_location_and_scale_invariant() {
        let s = [0.4, -1.2, 0.9, 2.2, -0.3, 0.0, 1.4, -2.0, 0.7];
        let base = shapiro_wilk(&s).unwrap().statistic;
        for &(mu, sd) in &[(10.0, 3.0), (-5.0, 0.01), (0.0, 100.0)] {
            let t: Vec<f64> = s.iter().map(|v| mu + sd * v).collect();
            let w = shapiro_wilk(&t).unwrap().statistic;
            assert_abs_diff_eq!(w, base, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_sample_is_zero_variance() {
        assert!(matches!(shapiro_wilk(&[4.0; 10]), Err(Error::ZeroVariance)));
    }
}

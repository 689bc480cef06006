//! Short-time Fourier analysis with pre-stimulus baseline normalization.
//!
//! 20 ms Hann windows centered every 5 ms, power averaged across epochs per
//! (center, bin), expressed as dB change against the mean power of the
//! windows centered in [-25, -15] ms (baseline data span [-35, -5] ms).
//! A 20 ms window puts the bin grid at exact 50 Hz multiples, so the gamma
//! measure sits on its own bin with zero offset.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::epochs::EpochSet;
use crate::error::{Error, Result};

pub const GAMMA_HZ: f64 = 50.0;
pub const DEFAULT_GAMMA_CENTERS_MS: [f64; 5] = [20.0, 25.0, 30.0, 35.0, 40.0];

#[derive(Debug, Clone)]
pub struct StftConfig {
    pub window_ms: f64,
    pub step_ms: f64,
    /// Window centers inside this interval define the baseline.
    pub baseline_centers_ms: (f64, f64),
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            step_ms: 5.0,
            baseline_centers_ms: (-25.0, -15.0),
        }
    }
}

/// dB power change per (window center, frequency bin).
#[derive(Debug, Clone)]
pub struct TimeFrequencyMap {
    pub centers_ms: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// power_db[center][freq]
    pub power_db: Vec<Vec<f64>>,
    /// Data span the baseline windows cover, ms.
    pub baseline_ms: (f64, f64),
    /// Frequency of the bin nearest the gamma measure.
    pub gamma_bin_hz: f64,
}

impl TimeFrequencyMap {
    pub fn gamma_bin_index(&self) -> usize {
        nearest_bin(&self.freqs_hz, GAMMA_HZ)
    }
}

fn nearest_bin(freqs: &[f64], target: f64) -> usize {
    freqs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - target)
                .abs()
                .partial_cmp(&(b.1 - target).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap()
}

/// Windowed power spectra averaged over epochs, normalized by the baseline
/// windows.
pub fn stft_power_db(set: &EpochSet, cfg: &StftConfig) -> Result<TimeFrequencyMap> {
    if set.epochs.is_empty() {
        return Err(Error::Empty);
    }
    let fs = set.fs;
    let nwin = (cfg.window_ms * fs / 1000.0).round() as usize;
    let hop = (cfg.step_ms * fs / 1000.0).round() as usize;
    if nwin < 2 || hop == 0 {
        return Err(Error::Config(format!(
            "degenerate STFT geometry: window {nwin} samples, hop {hop}"
        )));
    }
    let len = set.len_samples();
    let half = (nwin / 2) as i64;

    // centers at multiples of the step, relative to the pulse onset
    let first_rel = set.start_offset + half;
    let last_rel = set.start_offset + len as i64 - (nwin as i64 - half);
    let k_lo = (first_rel as f64 / hop as f64).ceil() as i64;
    let k_hi = (last_rel as f64 / hop as f64).floor() as i64;
    if k_lo > k_hi {
        return Err(Error::WindowTooShort(format!(
            "epoch of {len} samples cannot hold one {nwin}-sample window"
        )));
    }
    let centers_rel: Vec<i64> = (k_lo..=k_hi).map(|k| k * hop as i64).collect();
    let centers_ms: Vec<f64> = centers_rel
        .iter()
        .map(|&c| c as f64 * 1000.0 / fs)
        .collect();

    // baseline windows must exist
    let (b_lo, b_hi) = cfg.baseline_centers_ms;
    let baseline_idx: Vec<usize> = centers_ms
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= b_lo - 1e-9 && c <= b_hi + 1e-9)
        .map(|(i, _)| i)
        .collect();
    if baseline_idx.is_empty() {
        return Err(Error::WindowTooShort(format!(
            "epoch window does not cover baseline centers [{b_lo}, {b_hi}] ms"
        )));
    }

    let hann: Vec<f64> = (0..nwin)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / nwin as f64).cos()))
        .collect();
    let n_bins = nwin / 2 + 1;
    let freqs_hz: Vec<f64> = (0..n_bins).map(|k| k as f64 * fs / nwin as f64).collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nwin);
    let mut power = vec![vec![0.0f64; n_bins]; centers_ms.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); nwin];
    for epoch in &set.epochs {
        for (ci, &c_rel) in centers_rel.iter().enumerate() {
            let start = (c_rel - half - set.start_offset) as usize;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(epoch[start + i] * hann[i], 0.0);
            }
            fft.process(&mut buf);
            for (k, p) in power[ci].iter_mut().enumerate() {
                *p += buf[k].norm_sqr();
            }
        }
    }
    let inv_n = 1.0 / set.epochs.len() as f64;
    for row in power.iter_mut() {
        for p in row.iter_mut() {
            *p *= inv_n;
        }
    }

    // baseline power per bin
    let mut baseline = vec![0.0f64; n_bins];
    for &bi in &baseline_idx {
        for (k, b) in baseline.iter_mut().enumerate() {
            *b += power[bi][k];
        }
    }
    for b in baseline.iter_mut() {
        *b /= baseline_idx.len() as f64;
    }

    let power_db: Vec<Vec<f64>> = power
        .iter()
        .map(|row| {
            row.iter()
                .zip(baseline.iter())
                .map(|(&p, &b)| {
                    if p > 0.0 && b > 0.0 {
                        10.0 * (p / b).log10()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let half_ms = cfg.window_ms / 2.0;
    Ok(TimeFrequencyMap {
        gamma_bin_hz: freqs_hz[nearest_bin(&freqs_hz, GAMMA_HZ)],
        centers_ms,
        freqs_hz,
        power_db,
        baseline_ms: (b_lo - half_ms, b_hi + half_ms),
    })
}

/// Mean dB at the bin nearest 50 Hz over the requested window centers.
pub fn gamma_band_summary(map: &TimeFrequencyMap, centers_ms: &[f64]) -> Result<f64> {
    let bin = map.gamma_bin_index();
    let mut acc = 0.0;
    for &c in centers_ms {
        let idx = map
            .centers_ms
            .iter()
            .position(|&m| (m - c).abs() < 1e-6)
            .ok_or(Error::MissingCenter(c))?;
        acc += map.power_db[idx][bin];
    }
    Ok(acc / centers_ms.len() as f64)
}

//! Waveform metrics: N1 location and zero crossings, widths, signed area,
//! relaxation slope and per-pulse onset measurement.
//!
//! All measurements run on the trace after zero-phase low-pass filtering at
//! 200 Hz. Zero crossings are located with sub-sample linear interpolation;
//! with multiple crossings the one nearest the N1 peak wins on each side.

use crate::epochs::{EpochSet, EvokedPotential};
use crate::error::{Error, Result};
use crate::filter::{FilterSpec, IirFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationClass {
    Monotonic,
    AfterPositivity,
}

impl RelaxationClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelaxationClass::Monotonic => "monotonic",
            RelaxationClass::AfterPositivity => "after-positivity",
        }
    }
}

impl std::fmt::Display for RelaxationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct P0Summary {
    pub latency_ms: f64,
    pub amplitude_uv: f64,
}

/// The measured quantities for one evoked potential.
#[derive(Debug, Clone, Copy)]
pub struct WaveformMetrics {
    pub t_zc1_ms: Option<f64>,
    pub t_zc2_ms: Option<f64>,
    /// N1 width: t_zc2 - t_zc1.
    pub w_n1_ms: Option<f64>,
    /// Width of the interval around the peak where the trace stays below a
    /// quarter of the N1 depth.
    pub whq_n1_ms: Option<f64>,
    pub n1_latency_ms: f64,
    /// Signed; negative for a canonical N1.
    pub n1_maxamp_uv: f64,
    pub area_40_100_uvms: f64,
    pub min_slope_50_80: f64,
    pub relaxation_class: RelaxationClass,
    pub p0: Option<P0Summary>,
    /// True when the polarity normalization flipped the trace.
    pub inverted: bool,
}

#[derive(Debug, Clone)]
pub struct MetricConfig {
    /// N1 search window, ms.
    pub n1_search_ms: (f64, f64),
    /// End of the excised artifact span, ms (pulse width + excision tail).
    pub artifact_end_ms: f64,
    /// Floor for backward crossing scans, ms: pulse end plus a small
    /// margin. Early onsets legitimately fall inside the excised span (on
    /// the interpolated segment), so this sits below `artifact_end_ms`.
    pub crossing_floor_ms: f64,
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,
    pub area_window_ms: (f64, f64),
    pub slope_window_ms: (f64, f64),
    /// Flip the trace when the dominant extremum in the search window is
    /// positive (reversed-polarity responses). Off by default.
    pub invert: bool,
    /// N1 must dip below -(this factor) x baseline standard deviation.
    pub noise_floor_factor: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            n1_search_ms: (8.0, 35.0),
            artifact_end_ms: 5.0,
            crossing_floor_ms: 3.0,
            lp_cutoff_hz: 200.0,
            lp_order: 4,
            area_window_ms: (40.0, 100.0),
            slope_window_ms: (50.0, 80.0),
            invert: false,
            noise_floor_factor: 3.0,
        }
    }
}

/// Low-pass the trace for metric extraction (zero phase).
pub fn lowpass_for_metrics(
    ep: &EvokedPotential,
    cutoff_hz: f64,
    order: usize,
) -> Result<EvokedPotential> {
    let filter = IirFilter::design(&FilterSpec::low_pass(order, cutoff_hz), ep.fs)?;
    Ok(ep.with_trace(filter.filtfilt(&ep.trace)?))
}

/// Linear-interpolated crossing time of `level` between samples i and i+1.
fn crossing_time(ep: &EvokedPotential, i: usize, level: f64) -> f64 {
    let (a, b) = (ep.trace[i] - level, ep.trace[i + 1] - level);
    let frac = if (b - a).abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        a / (a - b)
    };
    ep.time_ms(i) + frac * 1000.0 / ep.fs
}

/// N1 peak with sub-sample refinement and its bounding level crossings.
#[derive(Debug, Clone, Copy)]
pub struct N1Location {
    pub latency_ms: f64,
    pub amplitude_uv: f64,
    pub t_zc1_ms: Option<f64>,
    pub t_zc2_ms: Option<f64>,
    pub w_n1_ms: Option<f64>,
    pub whq_n1_ms: Option<f64>,
}

/// Find the N1 (most negative extremum in the search window) on an already
/// low-passed trace, then its zero crossings and widths.
pub fn locate_n1(ep: &EvokedPotential, cfg: &MetricConfig) -> Result<N1Location> {
    let (s_lo, s_hi) = cfg.n1_search_ms;
    let lo = ep.index_at(s_lo).max(0) as usize;
    let hi = (ep.index_at(s_hi) + 1).clamp(0, ep.trace.len() as i64) as usize;
    if lo >= hi {
        return Err(Error::WindowOutOfRange(format!(
            "N1 search window [{s_lo}, {s_hi}] ms outside the trace"
        )));
    }

    // noise floor from the baseline interval
    let b_lo = ep.index_at(-5.0).max(0) as usize;
    let b_hi = ep.index_at(0.0).max(0) as usize;
    let floor = if b_hi > b_lo {
        let seg = &ep.trace[b_lo..b_hi];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / seg.len() as f64;
        cfg.noise_floor_factor * var.sqrt()
    } else {
        0.0
    };

    let (peak_idx, &peak_val) = ep.trace[lo..hi]
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, v)| (lo + i, v))
        .unwrap();
    if !(peak_val < -floor) {
        return Err(Error::NoN1);
    }

    // parabolic refinement of the peak
    let (latency_ms, amplitude_uv) = if peak_idx > 0 && peak_idx + 1 < ep.trace.len() {
        let (y0, y1, y2) = (
            ep.trace[peak_idx - 1],
            ep.trace[peak_idx],
            ep.trace[peak_idx + 1],
        );
        let denom = y0 - 2.0 * y1 + y2;
        if denom.abs() > 0.0 {
            let d = 0.5 * (y0 - y2) / denom;
            let d = d.clamp(-0.5, 0.5);
            (
                ep.time_ms(peak_idx) + d * 1000.0 / ep.fs,
                y1 - 0.25 * (y0 - y2) * d,
            )
        } else {
            (ep.time_ms(peak_idx), y1)
        }
    } else {
        (ep.time_ms(peak_idx), peak_val)
    };

    // last zero crossing before the peak, not earlier than the scan floor
    let scan_floor = ep.index_at(cfg.crossing_floor_ms).max(0) as usize;
    let mut t_zc1 = None;
    let mut i = peak_idx;
    while i > scan_floor {
        if ep.trace[i - 1] >= 0.0 && ep.trace[i] < 0.0 {
            t_zc1 = Some(crossing_time(ep, i - 1, 0.0));
            break;
        }
        i -= 1;
    }

    // first zero crossing after the peak
    let mut t_zc2 = None;
    for i in peak_idx..ep.trace.len() - 1 {
        if ep.trace[i] < 0.0 && ep.trace[i + 1] >= 0.0 {
            t_zc2 = Some(crossing_time(ep, i, 0.0));
            break;
        }
    }

    let w_n1 = match (t_zc1, t_zc2) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };

    // width at a quarter of the N1 depth
    let level = amplitude_uv / 4.0;
    let whq = {
        let mut left = None;
        let mut i = peak_idx;
        while i > scan_floor {
            if ep.trace[i - 1] >= level && ep.trace[i] < level {
                left = Some(crossing_time(ep, i - 1, level));
                break;
            }
            i -= 1;
        }
        let mut right = None;
        for i in peak_idx..ep.trace.len() - 1 {
            if ep.trace[i] < level && ep.trace[i + 1] >= level {
                right = Some(crossing_time(ep, i, level));
                break;
            }
        }
        match (left, right) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        }
    };

    Ok(N1Location {
        latency_ms,
        amplitude_uv,
        t_zc1_ms: t_zc1,
        t_zc2_ms: t_zc2,
        w_n1_ms: w_n1,
        whq_n1_ms: whq,
    })
}

/// N1 onset, erroring when the trace never crosses zero between the
/// artifact end and the peak.
pub fn onset_t_zc1(ep: &EvokedPotential, cfg: &MetricConfig) -> Result<f64> {
    locate_n1(ep, cfg)?.t_zc1_ms.ok_or(Error::NoZeroCrossing)
}

/// Trapezoidal integral of the trace over [t0, t1] ms, with interpolated
/// fractional endpoints.
pub fn signed_area(ep: &EvokedPotential, t0_ms: f64, t1_ms: f64) -> Result<f64> {
    let (w_lo, w_hi) = ep.window_ms();
    if t0_ms < w_lo || t1_ms > w_hi || t0_ms >= t1_ms {
        return Err(Error::WindowOutOfRange(format!(
            "area window [{t0_ms}, {t1_ms}] ms outside trace [{w_lo:.1}, {w_hi:.1}] ms"
        )));
    }
    let dt = 1000.0 / ep.fs;
    let pos = |t: f64| (t - ep.time_ms(0)) / dt; // fractional sample position
    let value_at = |p: f64| -> f64 {
        let i = p.floor() as usize;
        let frac = p - i as f64;
        if i + 1 < ep.trace.len() {
            ep.trace[i] * (1.0 - frac) + ep.trace[i + 1] * frac
        } else {
            ep.trace[i]
        }
    };
    let (p0, p1) = (pos(t0_ms), pos(t1_ms).min((ep.trace.len() - 1) as f64));
    let i0 = p0.ceil() as usize;
    let i1 = p1.floor() as usize;
    let mut area = 0.0;
    // whole-sample trapezoids
    for i in i0..i1 {
        area += 0.5 * (ep.trace[i] + ep.trace[i + 1]) * dt;
    }
    // fractional ends
    if (i0 as f64) > p0 {
        area += 0.5 * (value_at(p0) + ep.trace[i0]) * (i0 as f64 - p0) * dt;
    }
    if p1 > i1 as f64 {
        area += 0.5 * (ep.trace[i1] + value_at(p1)) * (p1 - i1 as f64) * dt;
    }
    Ok(area)
}

/// Minimum central-difference slope over [t0, t1] ms on an already
/// low-passed trace; negative means an after-positivity follows the N1.
pub fn relaxation_min_slope(
    ep: &EvokedPotential,
    t0_ms: f64,
    t1_ms: f64,
) -> Result<(f64, RelaxationClass)> {
    let (w_lo, w_hi) = ep.window_ms();
    if t0_ms < w_lo || t1_ms > w_hi || t0_ms >= t1_ms {
        return Err(Error::WindowOutOfRange(format!(
            "slope window [{t0_ms}, {t1_ms}] ms outside trace [{w_lo:.1}, {w_hi:.1}] ms"
        )));
    }
    let lo = ep.index_at(t0_ms).max(1) as usize;
    let hi = (ep.index_at(t1_ms) + 1).clamp(1, ep.trace.len() as i64 - 1) as usize;
    let dt = 1000.0 / ep.fs;
    let mut min_slope = f64::INFINITY;
    for i in lo..hi {
        let d = (ep.trace[i + 1] - ep.trace[i - 1]) / (2.0 * dt);
        if d < min_slope {
            min_slope = d;
        }
    }
    let class = if min_slope < 0.0 {
        RelaxationClass::AfterPositivity
    } else {
        RelaxationClass::Monotonic
    };
    Ok((min_slope, class))
}

/// Full metric extraction: 200 Hz low-pass, optional polarity
/// normalization, then every Table quantity.
pub fn compute_metrics(ep: &EvokedPotential, cfg: &MetricConfig) -> Result<WaveformMetrics> {
    let mut filtered = lowpass_for_metrics(ep, cfg.lp_cutoff_hz, cfg.lp_order)?;

    let mut inverted = false;
    if cfg.invert {
        let lo = filtered.index_at(cfg.n1_search_ms.0).max(0) as usize;
        let hi = (filtered.index_at(cfg.n1_search_ms.1) + 1).clamp(0, filtered.trace.len() as i64)
            as usize;
        let seg = &filtered.trace[lo.min(hi)..hi];
        let max = seg.iter().fold(f64::MIN, |m, &v| m.max(v));
        let min = seg.iter().fold(f64::MAX, |m, &v| m.min(v));
        if max > -min {
            filtered = filtered.with_trace(filtered.trace.iter().map(|v| -v).collect());
            inverted = true;
        }
    }

    let n1 = locate_n1(&filtered, cfg)?;
    let area = signed_area(&filtered, cfg.area_window_ms.0, cfg.area_window_ms.1)?;
    let (min_slope, class) =
        relaxation_min_slope(&filtered, cfg.slope_window_ms.0, cfg.slope_window_ms.1)?;

    // P0: positive extremum between the scan floor and the N1 onset
    let p0 = n1.t_zc1_ms.and_then(|zc1| {
        let lo = filtered.index_at(cfg.crossing_floor_ms).max(0) as usize;
        let hi = (filtered.index_at(zc1) + 1).clamp(0, filtered.trace.len() as i64) as usize;
        if lo >= hi {
            return None;
        }
        let (idx, &val) = filtered.trace[lo..hi]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, v)| (lo + i, v))?;
        if val > 0.0 {
            Some(P0Summary {
                latency_ms: filtered.time_ms(idx),
                amplitude_uv: val,
            })
        } else {
            None
        }
    });

    Ok(WaveformMetrics {
        t_zc1_ms: n1.t_zc1_ms,
        t_zc2_ms: n1.t_zc2_ms,
        w_n1_ms: n1.w_n1_ms,
        whq_n1_ms: n1.whq_n1_ms,
        n1_latency_ms: n1.latency_ms,
        n1_maxamp_uv: n1.amplitude_uv,
        area_40_100_uvms: area,
        min_slope_50_80: min_slope,
        relaxation_class: class,
        p0,
        inverted,
    })
}

/// Per-pulse N1 onsets and how they are measured.
#[derive(Debug, Clone)]
pub struct OnsetConfig {
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,
    /// End of the stimulation pulse itself, ms. Per-pulse onsets are
    /// measured from 2 ms after the pulse, which reaches earlier than the
    /// averaged-metric scan (early onsets sit inside the excision span,
    /// on the interpolated segment).
    pub pulse_end_ms: f64,
    /// Measurement starts this long after the pulse end.
    pub margin_ms: f64,
    pub n1_search_ms: (f64, f64),
    pub noise_floor_factor: f64,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        Self {
            lp_cutoff_hz: 250.0,
            lp_order: 3,
            pulse_end_ms: 1.0,
            margin_ms: 2.0,
            n1_search_ms: (8.0, 35.0),
            noise_floor_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOnsets {
    pub onsets_ms: Vec<f64>,
    /// Epochs where no onset could be measured.
    pub n_missing: usize,
}

/// Measure t_zc1 on every epoch individually: zero-phase low-pass at
/// 250 Hz, then the onset search restricted to
/// [artifact end + margin, window end].
pub fn per_train_onsets(set: &EpochSet, cfg: &OnsetConfig) -> Result<TrainOnsets> {
    if set.epochs.len() < 5 {
        return Err(Error::TooFewEpochs {
            got: set.epochs.len(),
            need: 5,
        });
    }
    let filter = IirFilter::design(
        &FilterSpec::low_pass(cfg.lp_order, cfg.lp_cutoff_hz),
        set.fs,
    )?;
    let scan_start = cfg.pulse_end_ms + cfg.margin_ms;
    let metric_cfg = MetricConfig {
        n1_search_ms: (cfg.n1_search_ms.0.max(scan_start), cfg.n1_search_ms.1),
        artifact_end_ms: scan_start,
        crossing_floor_ms: scan_start,
        noise_floor_factor: cfg.noise_floor_factor,
        ..MetricConfig::default()
    };

    let mut onsets = Vec::with_capacity(set.epochs.len());
    let mut n_missing = 0usize;
    for epoch in &set.epochs {
        let ep = EvokedPotential {
            trace: filter.filtfilt(epoch)?,
            start_offset: set.start_offset,
            fs: set.fs,
            n_averaged: 1,
            kind: set.kind,
        };
        match locate_n1(&ep, &metric_cfg) {
            Ok(loc) => match loc.t_zc1_ms {
                Some(t) => onsets.push(t),
                None => n_missing += 1,
            },
            Err(Error::NoN1) => n_missing += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOnsets {
        onsets_ms: onsets,
        n_missing,
    })
}

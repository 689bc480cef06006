//! Forward generator of canonical evoked potentials and full synthetic
//! recordings; the ground-truth oracle for the analysis chain.
//!
//! A response kernel is a sum of smooth continuous-time lobes:
//!
//! * P0 — a brief positive raised-cosine lobe;
//! * N1 — an asymmetric double-exponential (fast rise, slow decay) with a
//!   small slower relaxation-overshoot term, so the lobe re-crosses zero at
//!   a finite, analytically locatable time (a pure double exponential never
//!   returns to zero, which would leave the N1 end undefined on clean
//!   traces);
//! * an optional after-positivity raised-cosine lobe.
//!
//! Everything is shifted by the conduction delay. Because the kernel is a
//! closed-form function of time, zero crossings, extrema, widths, areas and
//! slopes can be computed to high precision by bisection on the kernel
//! itself, independently of any sampled trace — those values are exported
//! alongside generated data for use as test oracles.

use rand_core::{RngCore, SeedableRng};

use crate::epochs::EvokedPotential;
use crate::error::{Error, Result};
use crate::signal::{EpKind, Session, SignalBuffer, StimTrain};

/// Raised-cosine lobe: peak `amplitude_uv` at `latency_ms`, support
/// `latency ± width/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lobe {
    pub latency_ms: f64,
    pub amplitude_uv: f64,
    pub width_ms: f64,
}

impl Lobe {
    pub fn value_at(&self, t_ms: f64) -> f64 {
        let half = self.width_ms / 2.0;
        let d = t_ms - self.latency_ms;
        if d.abs() >= half {
            return 0.0;
        }
        self.amplitude_uv * 0.5 * (1.0 + (std::f64::consts::PI * d / half).cos())
    }

    pub fn derivative_at(&self, t_ms: f64) -> f64 {
        let half = self.width_ms / 2.0;
        let d = t_ms - self.latency_ms;
        if d.abs() >= half {
            return 0.0;
        }
        let k = std::f64::consts::PI / half;
        -self.amplitude_uv * 0.5 * k * (k * d).sin()
    }

    /// Closed-form integral over [a, b], microvolt-milliseconds.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let half = self.width_ms / 2.0;
        let lo = a.max(self.latency_ms - half);
        let hi = b.min(self.latency_ms + half);
        if hi <= lo {
            return 0.0;
        }
        let k = std::f64::consts::PI / half;
        let anti = |t: f64| {
            let d = t - self.latency_ms;
            self.amplitude_uv * 0.5 * (d + (k * d).sin() / k)
        };
        anti(hi) - anti(lo)
    }
}

/// Asymmetric double-exponential N1 with a slow relaxation overshoot.
///
/// Shape (s = time past onset):
/// `dexp(s; rise, decay) - rebound_frac * dexp(s; k*rise, k*decay)` with
/// `dexp(s; r, d) = exp(-s/d) - exp(-s/r)` and `k = rebound_stretch`.
/// The lobe is scaled so its extremum equals `amplitude_uv` (negative for a
/// canonical N1) at `latency_ms`. `rebound_frac = 0` recovers the pure
/// double exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct N1Kernel {
    pub latency_ms: f64,
    pub amplitude_uv: f64,
    pub rise_ms: f64,
    pub decay_ms: f64,
    pub rebound_frac: f64,
    pub rebound_stretch: f64,
}

impl N1Kernel {
    /// Squared-rise bi-exponential, expanded into three exponentials:
    /// (1 - e^{-s/r})^2 e^{-s/d} = e^{-s/d} - 2 e^{-s k1} + e^{-s k2}
    /// with k1 = 1/d + 1/r, k2 = 1/d + 2/r. The squared rise keeps the
    /// onset slope continuous, so zero-phase smoothing in the measurement
    /// path does not drag the onset crossing around.
    fn rates(r: f64, d: f64) -> [(f64, f64); 3] {
        [
            (1.0, 1.0 / d),
            (-2.0, 1.0 / d + 1.0 / r),
            (1.0, 1.0 / d + 2.0 / r),
        ]
    }

    fn shape(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let eval = |r: f64, d: f64| -> f64 {
            Self::rates(r, d)
                .iter()
                .map(|(c, k)| c * (-s * k).exp())
                .sum()
        };
        eval(self.rise_ms, self.decay_ms)
            - self.rebound_frac
                * eval(
                    self.rebound_stretch * self.rise_ms,
                    self.rebound_stretch * self.decay_ms,
                )
    }

    fn shape_derivative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let eval = |r: f64, d: f64| -> f64 {
            Self::rates(r, d)
                .iter()
                .map(|(c, k)| -c * k * (-s * k).exp())
                .sum()
        };
        eval(self.rise_ms, self.decay_ms)
            - self.rebound_frac
                * eval(
                    self.rebound_stretch * self.rise_ms,
                    self.rebound_stretch * self.decay_ms,
                )
    }

    fn shape_integral(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(0.0);
        if b <= lo {
            return 0.0;
        }
        let anti = |s: f64, r: f64, d: f64| -> f64 {
            Self::rates(r, d)
                .iter()
                .map(|(c, k)| -c / k * (-s * k).exp())
                .sum()
        };
        let full = |s: f64| {
            anti(s, self.rise_ms, self.decay_ms)
                - self.rebound_frac
                    * anti(
                        s,
                        self.rebound_stretch * self.rise_ms,
                        self.rebound_stretch * self.decay_ms,
                    )
        };
        full(b) - full(lo)
    }

    /// Offset of the shape extremum past onset, by bisection on the shape
    /// derivative.
    fn peak_offset(&self) -> f64 {
        // the derivative is positive at 0+, negative after the peak; bracket
        // by marching until it turns negative
        let mut hi = self.rise_ms;
        while self.shape_derivative(hi) > 0.0 {
            hi *= 1.5;
            if hi > 1e4 {
                return self.rise_ms; // degenerate parameters
            }
        }
        bisect(|s| self.shape_derivative(s), hi / 1.5, hi)
    }

    fn onset(&self) -> f64 {
        self.latency_ms - self.peak_offset()
    }

    /// Precompute onset and scale; evaluation inside sampling and root
    /// finding loops must not repeat the peak search.
    fn compiled(&self) -> CompiledN1 {
        let offset = self.peak_offset();
        CompiledN1 {
            kernel: *self,
            onset: self.latency_ms - offset,
            scale: self.amplitude_uv / self.shape(offset),
        }
    }

    pub fn value_at(&self, t_ms: f64) -> f64 {
        self.compiled().value_at(t_ms)
    }

    pub fn derivative_at(&self, t_ms: f64) -> f64 {
        self.compiled().derivative_at(t_ms)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.compiled().integral(a, b)
    }
}

#[derive(Debug, Clone, Copy)]
struct CompiledN1 {
    kernel: N1Kernel,
    onset: f64,
    scale: f64,
}

impl CompiledN1 {
    fn value_at(&self, t_ms: f64) -> f64 {
        self.scale * self.kernel.shape(t_ms - self.onset)
    }

    fn derivative_at(&self, t_ms: f64) -> f64 {
        self.scale * self.kernel.shape_derivative(t_ms - self.onset)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.scale * self.kernel.shape_integral(a - self.onset, b - self.onset)
    }
}

/// Bisection for a root of `f` in [lo, hi] (f changes sign there).
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect needs a bracketing interval");
    let neg_lo = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Parameterized response kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct EpKernelSpec {
    pub p0: Option<Lobe>,
    pub n1: N1Kernel,
    pub after_positivity: Option<Lobe>,
    pub conduction_delay_ms: f64,
    pub kind: EpKind,
}

/// Analytic metric values for a kernel, computed on the continuous-time
/// function (independent of sampling, filtering and the measurement path).
#[derive(Debug, Clone, Copy)]
pub struct KernelTruth {
    pub delay_ms: f64,
    pub t_zc1_ms: Option<f64>,
    pub t_zc2_ms: Option<f64>,
    pub w_n1_ms: Option<f64>,
    pub whq_n1_ms: Option<f64>,
    pub n1_latency_ms: f64,
    pub n1_amplitude_uv: f64,
    pub area_40_100_uvms: f64,
    pub min_slope_50_80_uv_per_ms: f64,
    /// True iff min_slope_50_80 < 0 (after-positivity).
    pub after_positivity: bool,
    pub p0_latency_ms: Option<f64>,
    pub p0_amplitude_uv: Option<f64>,
}

/// Evaluation handle with the N1 peak search done once.
pub struct KernelEval {
    p0: Option<Lobe>,
    n1: CompiledN1,
    after_positivity: Option<Lobe>,
    delay_ms: f64,
}

impl KernelEval {
    pub fn value_at(&self, t_ms: f64) -> f64 {
        let t = t_ms - self.delay_ms;
        let mut v = self.n1.value_at(t);
        if let Some(p0) = &self.p0 {
            v += p0.value_at(t);
        }
        if let Some(ap) = &self.after_positivity {
            v += ap.value_at(t);
        }
        v
    }

    pub fn derivative_at(&self, t_ms: f64) -> f64 {
        let t = t_ms - self.delay_ms;
        let mut v = self.n1.derivative_at(t);
        if let Some(p0) = &self.p0 {
            v += p0.derivative_at(t);
        }
        if let Some(ap) = &self.after_positivity {
            v += ap.derivative_at(t);
        }
        v
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a - self.delay_ms, b - self.delay_ms);
        let mut v = self.n1.integral(a, b);
        if let Some(p0) = &self.p0 {
            v += p0.integral(a, b);
        }
        if let Some(ap) = &self.after_positivity {
            v += ap.integral(a, b);
        }
        v
    }

    pub fn support_start_ms(&self) -> f64 {
        let mut start = self.n1.onset;
        if let Some(p0) = &self.p0 {
            start = start.min(p0.latency_ms - p0.width_ms / 2.0);
        }
        if let Some(ap) = &self.after_positivity {
            start = start.min(ap.latency_ms - ap.width_ms / 2.0);
        }
        start + self.delay_ms
    }
}

impl EpKernelSpec {
    pub fn compile(&self) -> KernelEval {
        KernelEval {
            p0: self.p0,
            n1: self.n1.compiled(),
            after_positivity: self.after_positivity,
            delay_ms: self.conduction_delay_ms,
        }
    }

    /// Kernel value at `t_ms` (milliseconds past the pulse onset), including
    /// the conduction delay.
    pub fn value_at(&self, t_ms: f64) -> f64 {
        self.compile().value_at(t_ms)
    }

    pub fn derivative_at(&self, t_ms: f64) -> f64 {
        self.compile().derivative_at(t_ms)
    }

    /// Closed-form integral over [a, b] ms.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.compile().integral(a, b)
    }

    /// Earliest time at which the kernel can be nonzero.
    pub fn support_start_ms(&self) -> f64 {
        self.compile().support_start_ms()
    }

    /// Analytic metric truth. `scan_end_ms` bounds the search for the N1
    /// end; anything later is reported as undefined.
    pub fn truth(&self, scan_end_ms: f64) -> KernelTruth {
        const STEP: f64 = 0.01;
        let eval = self.compile();
        let delay = self.conduction_delay_ms;
        let n1_abs_onset = eval.n1.onset + delay;

        // N1 extremum: scan then refine on the analytic derivative
        let scan_lo = n1_abs_onset;
        let mut t = scan_lo;
        let mut best = (eval.value_at(t), t);
        while t <= scan_end_ms {
            let v = eval.value_at(t);
            if v < best.0 {
                best = (v, t);
            }
            t += STEP;
        }
        let (lo, hi) = (best.1 - STEP, best.1 + STEP);
        let n1_latency = if eval.derivative_at(lo) * eval.derivative_at(hi) <= 0.0 {
            bisect(|t| eval.derivative_at(t), lo, hi)
        } else {
            best.1
        };
        let n1_amplitude = eval.value_at(n1_latency);

        // t_zc1: march back from the peak to the first sign change
        let t_zc1 = {
            let mut t = n1_latency;
            let floor = eval.support_start_ms() - STEP;
            let mut found = None;
            while t > floor {
                let prev = t - STEP;
                if eval.value_at(prev) >= 0.0 && eval.value_at(t) < 0.0 {
                    found = Some(bisect(|u| eval.value_at(u), prev, t));
                    break;
                }
                t = prev;
            }
            found
        };

        // t_zc2: march forward
        let t_zc2 = {
            let mut t = n1_latency;
            let mut found = None;
            while t < scan_end_ms {
                let next = t + STEP;
                if eval.value_at(t) < 0.0 && eval.value_at(next) >= 0.0 {
                    found = Some(bisect(|u| eval.value_at(u), t, next));
                    break;
                }
                t = next;
            }
            found
        };
        let w_n1 = match (t_zc1, t_zc2) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };

        // width at a quarter of the N1 depth
        let whq = {
            let level = n1_amplitude / 4.0;
            let g = |t: f64| eval.value_at(t) - level;
            let left = {
                let mut t = n1_latency;
                let floor = t_zc1.unwrap_or(eval.support_start_ms());
                let mut found = None;
                while t > floor - STEP {
                    let prev = t - STEP;
                    if g(prev) >= 0.0 && g(t) < 0.0 {
                        found = Some(bisect(g, prev, t));
                        break;
                    }
                    t = prev;
                }
                found
            };
            let right = {
                let mut t = n1_latency;
                let mut found = None;
                while t < scan_end_ms {
                    let next = t + STEP;
                    if g(t) < 0.0 && g(next) >= 0.0 {
                        found = Some(bisect(g, t, next));
                        break;
                    }
                    t = next;
                }
                found
            };
            match (left, right) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            }
        };

        // minimum slope on [50, 80] ms: fine scan over the analytic derivative
        let (mut min_slope, mut at) = (f64::INFINITY, 50.0);
        let mut t = 50.0;
        while t <= 80.0 {
            let d = eval.derivative_at(t);
            if d < min_slope {
                min_slope = d;
                at = t;
            }
            t += 0.005;
        }
        let _ = at;

        // P0: positive extremum before t_zc1
        let (p0_latency, p0_amplitude) = match (self.p0, t_zc1) {
            (Some(_), Some(zc)) => {
                let mut t = eval.support_start_ms();
                let mut best = (0.0f64, t);
                while t < zc {
                    let v = eval.value_at(t);
                    if v > best.0 {
                        best = (v, t);
                    }
                    t += STEP;
                }
                if best.0 > 0.0 {
                    (Some(best.1), Some(best.0))
                } else {
                    (None, None)
                }
            }
            _ => (None, None),
        };

        KernelTruth {
            delay_ms: delay,
            t_zc1_ms: t_zc1,
            t_zc2_ms: t_zc2,
            w_n1_ms: w_n1,
            whq_n1_ms: whq,
            n1_latency_ms: n1_latency,
            n1_amplitude_uv: n1_amplitude,
            area_40_100_uvms: eval.integral(40.0, 100.0),
            min_slope_50_80_uv_per_ms: min_slope,
            after_positivity: min_slope < 0.0,
            p0_latency_ms: p0_latency,
            p0_amplitude_uv: p0_amplitude,
        }
    }

    fn check_window(&self, window_ms: (f64, f64)) -> Result<()> {
        let (t_min, t_max) = window_ms;
        let delay = self.conduction_delay_ms;
        let inside = |lo: f64, hi: f64, what: &str| -> Result<()> {
            if lo < t_min || hi > t_max {
                return Err(Error::KernelOutOfWindow(format!(
                    "{what} spans [{lo:.2}, {hi:.2}] ms, window is [{t_min}, {t_max}] ms"
                )));
            }
            Ok(())
        };
        if let Some(p0) = &self.p0 {
            inside(
                delay + p0.latency_ms - p0.width_ms / 2.0,
                delay + p0.latency_ms + p0.width_ms / 2.0,
                "P0 lobe",
            )?;
        }
        if let Some(ap) = &self.after_positivity {
            inside(
                delay + ap.latency_ms - ap.width_ms / 2.0,
                delay + ap.latency_ms + ap.width_ms / 2.0,
                "after-positivity lobe",
            )?;
        }
        let onset = self.n1.onset() + delay;
        if onset < t_min || self.n1.latency_ms + delay > t_max {
            return Err(Error::KernelOutOfWindow(format!(
                "N1 (onset {onset:.2} ms, peak {:.2} ms) outside [{t_min}, {t_max}] ms",
                self.n1.latency_ms + delay
            )));
        }
        Ok(())
    }
}

/// Contaminants added on top of the tiled clean response.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub white_sigma_uv: f64,
    pub line_50hz_amp_uv: f64,
    pub line_phase_rad: f64,
    pub artifact_amp_uv: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            white_sigma_uv: 20.0,
            line_50hz_amp_uv: 50.0,
            line_phase_rad: 0.0,
            artifact_amp_uv: 2000.0,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.white_sigma_uv < 0.0 || self.line_50hz_amp_uv < 0.0 || self.artifact_amp_uv < 0.0 {
            return Err(Error::Config(
                "noise amplitudes must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Noise-free sampled kernel over `window_ms`, plus its analytic truth.
pub fn synth_canonical_ep(
    spec: &EpKernelSpec,
    fs: f64,
    window_ms: (f64, f64),
) -> Result<(EvokedPotential, KernelTruth)> {
    spec.check_window(window_ms)?;
    let start = (window_ms.0 * fs / 1000.0).round() as i64;
    let stop = (window_ms.1 * fs / 1000.0).round() as i64;
    let eval = spec.compile();
    let trace: Vec<f64> = (start..stop)
        .map(|i| eval.value_at(i as f64 * 1000.0 / fs))
        .collect();
    let ep = EvokedPotential {
        trace,
        start_offset: start,
        fs,
        n_averaged: 1,
        kind: spec.kind,
    };
    Ok((ep, spec.truth(window_ms.1.max(150.0) + 50.0)))
}

/// Kernel support used when tiling responses into a recording, ms.
const TILE_SUPPORT_MS: f64 = 300.0;

/// Full synthetic recording: clean kernel tiled at every pulse, biphasic
/// artifact stubs with alternating polarity, a 50 Hz sinusoid shared across
/// channels, and seeded white noise (ChaCha8 stream per channel, Box-Muller
/// variates). Deterministic for a fixed spec and seed.
pub fn synth_recording(
    spec: &EpKernelSpec,
    train: &StimTrain,
    noise: &NoiseSpec,
    fs: f64,
    duration_s: f64,
    n_channels: usize,
) -> Result<(Session, KernelTruth)> {
    noise.validate()?;
    train.validate(fs)?;
    let n = (duration_s * fs).round() as usize;
    let lead = (0.05 * fs) as usize;
    let tail = (0.15 * fs) as usize;
    let first = *train.pulse_onsets.first().unwrap();
    let last = *train.pulse_onsets.last().unwrap();
    if first < lead || last + tail > n {
        return Err(Error::TrainTooLong(format!(
            "pulses span [{first}, {last}] samples; need 50 ms lead and 150 ms tail inside {n} samples"
        )));
    }

    // clean template sampled once over the tiling support
    let support = (TILE_SUPPORT_MS * fs / 1000.0) as usize;
    let eval = spec.compile();
    let template: Vec<f64> = (0..support)
        .map(|i| eval.value_at(i as f64 * 1000.0 / fs))
        .collect();

    let pw_samples = (train.pulse_width_ms * fs / 1000.0).round() as usize;
    let half_pw = pw_samples / 2;

    let mut channels = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let mut x = vec![0.0f64; n];
        // evoked responses
        for &onset in &train.pulse_onsets {
            let end = (onset + support).min(n);
            for (k, v) in template[..end - onset].iter().enumerate() {
                x[onset + k] += v;
            }
        }
        // biphasic artifact stubs
        for (&onset, &pol) in train.pulse_onsets.iter().zip(&train.polarity_pattern) {
            let a = pol as f64 * noise.artifact_amp_uv;
            for i in 0..half_pw.min(n - onset) {
                x[onset + i] += a;
            }
            for i in half_pw..pw_samples.min(n - onset) {
                x[onset + i] -= a;
            }
        }
        // shared 50 Hz hum
        if noise.line_50hz_amp_uv > 0.0 {
            let w = 2.0 * std::f64::consts::PI * 50.0 / fs;
            for (i, v) in x.iter_mut().enumerate() {
                *v += noise.line_50hz_amp_uv * (w * i as f64 + noise.line_phase_rad).sin();
            }
        }
        // white noise, one RNG stream per channel
        if noise.white_sigma_uv > 0.0 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise.rng_seed);
            rng.set_stream(ch as u64);
            let mut pending: Option<f64> = None;
            for v in x.iter_mut() {
                let g = match pending.take() {
                    Some(g) => g,
                    None => {
                        let u1 = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                        let r = (-2.0 * u1.ln()).sqrt();
                        let th = 2.0 * std::f64::consts::PI * u2;
                        pending = Some(r * th.sin());
                        r * th.cos()
                    }
                };
                *v += noise.white_sigma_uv * g;
            }
        }
        channels.push(x);
    }

    let channel_ids: Vec<String> = (0..n_channels).map(|c| format!("ch{c}")).collect();
    let buffer = SignalBuffer::new(fs, channel_ids, channels)?;
    let session = Session {
        buffer,
        trains: vec![train.clone()],
        geometry: None,
        patient_label: String::new(),
        processing: vec![],
    };
    session.validate()?;
    Ok((session, spec.truth(TILE_SUPPORT_MS)))
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

/// Canonical direct-cortical-response kernel: slow N1 relaxation, no
/// after-positivity, monotone recovery.
pub fn dcr_preset() -> EpKernelSpec {
    EpKernelSpec {
        p0: Some(Lobe {
            latency_ms: 4.0,
            amplitude_uv: 20.0,
            width_ms: 6.0,
        }),
        n1: N1Kernel {
            latency_ms: 12.5,
            amplitude_uv: -150.0,
            rise_ms: 3.2,
            decay_ms: 26.2,
            rebound_frac: 0.30,
            rebound_stretch: 2.2,
        },
        after_positivity: None,
        conduction_delay_ms: 0.0,
        kind: EpKind::Dcr,
    }
}

/// Canonical axono-cortical kernel: conduction delay, faster N1 relaxation
/// and an after-positivity lobe.
pub fn acep_preset() -> EpKernelSpec {
    EpKernelSpec {
        p0: Some(Lobe {
            latency_ms: 4.0,
            amplitude_uv: 20.0,
            width_ms: 6.0,
        }),
        n1: N1Kernel {
            latency_ms: 11.5,
            amplitude_uv: -150.0,
            rise_ms: 3.2,
            decay_ms: 15.9,
            rebound_frac: 0.30,
            rebound_stretch: 2.2,
        },
        after_positivity: Some(Lobe {
            latency_ms: 63.0,
            amplitude_uv: 24.0,
            width_ms: 50.0,
        }),
        conduction_delay_ms: 1.8,
        kind: EpKind::Acep,
    }
}

pub fn preset(kind: EpKind) -> EpKernelSpec {
    match kind {
        EpKind::Dcr => dcr_preset(),
        EpKind::Acep => acep_preset(),
    }
}

/// N1 width alone (onset and end crossings), much cheaper than the full
/// truth scan; used by the calibration bisection.
fn w_n1_only(spec: &EpKernelSpec, scan_end_ms: f64) -> Option<f64> {
    let eval = spec.compile();
    let delay = spec.conduction_delay_ms;
    let onset = eval.n1.onset + delay;
    // N1 extremum: coarse scan, refine on the derivative
    let mut t = onset;
    let mut best = (f64::INFINITY, onset);
    while t <= scan_end_ms {
        let v = eval.value_at(t);
        if v < best.0 {
            best = (v, t);
        }
        t += 0.25;
    }
    let peak = best.1;

    // backward to the onset crossing
    let mut zc1 = None;
    let floor = eval.support_start_ms();
    let mut t = peak;
    while t > floor - 0.05 {
        let prev = t - 0.05;
        if eval.value_at(prev) >= 0.0 && eval.value_at(t) < 0.0 {
            zc1 = Some(bisect(|u| eval.value_at(u), prev, t));
            break;
        }
        t = prev;
    }
    // forward to the end crossing
    let mut zc2 = None;
    let mut t = peak;
    while t < scan_end_ms {
        let next = t + 0.1;
        if eval.value_at(t) < 0.0 && eval.value_at(next) >= 0.0 {
            zc2 = Some(bisect(|u| eval.value_at(u), t, next));
            break;
        }
        t = next;
    }
    Some(zc2? - zc1?)
}

/// Adjust the N1 decay so the kernel's true N1 width hits `target_w_ms`
/// (bisection on the analytic truth; the width grows monotonically with the
/// decay constant).
pub fn preset_with_w_n1(base: &EpKernelSpec, target_w_ms: f64) -> Result<EpKernelSpec> {
    let w_of = |decay: f64| -> Option<f64> {
        let mut k = base.clone();
        k.n1.decay_ms = decay;
        w_n1_only(&k, 400.0)
    };
    // the decay must stay slower than the rise for the lobe to keep its
    // orientation
    let (mut lo, mut hi) = (base.n1.rise_ms * 1.6, 80.0);
    let w_lo = w_of(lo).ok_or_else(|| Error::Config("kernel has no finite N1 width".into()))?;
    let w_hi = w_of(hi).ok_or_else(|| Error::Config("kernel has no finite N1 width".into()))?;
    if !(w_lo <= target_w_ms && target_w_ms <= w_hi) {
        return Err(Error::Config(format!(
            "target N1 width {target_w_ms} ms outside attainable [{w_lo:.1}, {w_hi:.1}] ms"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let w = w_of(mid).unwrap();
        if w < target_w_ms {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out = base.clone();
    out.n1.decay_ms = 0.5 * (lo + hi);
    Ok(out)
}

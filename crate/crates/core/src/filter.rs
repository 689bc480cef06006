//! Recursive filters: Butterworth design (maximally flat passband), cascaded
//! second-order sections, and zero-phase forward-backward application.
//!
//! The zero-phase path mirrors the usual `filtfilt` recipe: odd extension at
//! both ends, steady-state initial conditions matched to the first sample,
//! one forward and one backward pass, then trimming. The net phase response
//! is zero and the effective order doubles.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    BandPass { low_hz: f64, high_hz: f64 },
    LowPass { cutoff_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn band_pass(order: usize, low_hz: f64, high_hz: f64) -> Self {
        Self {
            kind: FilterKind::BandPass { low_hz, high_hz },
            order,
            zero_phase: true,
        }
    }

    pub fn low_pass(order: usize, cutoff_hz: f64) -> Self {
        Self {
            kind: FilterKind::LowPass { cutoff_hz },
            order,
            zero_phase: true,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidSpec("order must be >= 1".into()));
        }
        let nyquist = fs / 2.0;
        match self.kind {
            FilterKind::BandPass { low_hz, high_hz } => {
                if !(0.0 < low_hz && low_hz < high_hz && high_hz < nyquist) {
                    return Err(Error::InvalidSpec(format!(
                        "band-pass cutoffs must satisfy 0 < {low_hz} < {high_hz} < {nyquist}"
                    )));
                }
            }
            FilterKind::LowPass { cutoff_hz } => {
                if !(0.0 < cutoff_hz && cutoff_hz < nyquist) {
                    return Err(Error::InvalidSpec(format!(
                        "low-pass cutoff must satisfy 0 < {cutoff_hz} < {nyquist}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

/// A designed filter bound to its sampling rate.
#[derive(Debug, Clone)]
pub struct IirFilter {
    sections: Vec<Sos>,
    fs: f64,
    zero_phase: bool,
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

/// Analog Butterworth prototype poles (unit cutoff, gain 1, no zeros).
fn butter_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|i| {
            let m = -(order as f64) + 1.0 + 2.0 * i as f64;
            let theta = std::f64::consts::PI * m / (2.0 * order as f64);
            -Complex64::new(0.0, theta).exp()
        })
        .collect()
}

struct Zpk {
    z: Vec<Complex64>,
    p: Vec<Complex64>,
    k: f64,
}

fn lp2lp(proto_p: Vec<Complex64>, wo: f64) -> Zpk {
    let degree = proto_p.len();
    Zpk {
        z: vec![],
        p: proto_p.into_iter().map(|p| p * wo).collect(),
        k: wo.powi(degree as i32),
    }
}

fn lp2bp(proto_p: Vec<Complex64>, wo: f64, bw: f64) -> Zpk {
    let degree = proto_p.len();
    let scaled: Vec<Complex64> = proto_p.into_iter().map(|p| p * (bw / 2.0)).collect();
    let mut p = Vec::with_capacity(2 * degree);
    for &s in &scaled {
        let disc = (s * s - Complex64::new(wo * wo, 0.0)).sqrt();
        p.push(s + disc);
        p.push(s - disc);
    }
    // zeros at s = 0, one per prototype order
    Zpk {
        z: vec![Complex64::new(0.0, 0.0); degree],
        p,
        k: bw.powi(degree as i32),
    }
}

/// Bilinear transform with gain bookkeeping; zeros at infinity map to z = -1.
fn bilinear(zpk: Zpk, fs: f64) -> Zpk {
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let degree = zpk.p.len() - zpk.z.len();

    let mut num = Complex64::new(1.0, 0.0);
    for &z in &zpk.z {
        num *= fs2 - z;
    }
    let mut den = Complex64::new(1.0, 0.0);
    for &p in &zpk.p {
        den *= fs2 - p;
    }

    let mut z_d: Vec<Complex64> = zpk.z.iter().map(|&z| (fs2 + z) / (fs2 - z)).collect();
    z_d.resize(z_d.len() + degree, Complex64::new(-1.0, 0.0));
    let p_d: Vec<Complex64> = zpk.p.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    let k_d = zpk.k * (num / den).re;

    Zpk {
        z: z_d,
        p: p_d,
        k: k_d,
    }
}

/// Group roots into conjugate pairs (and real pairs / a trailing lone real).
fn group_roots(mut roots: Vec<Complex64>) -> Vec<Vec<Complex64>> {
    const IM_TOL: f64 = 1e-10;
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut reals: Vec<Complex64> = Vec::new();
    roots.retain(|r| {
        if r.im.abs() <= IM_TOL {
            reals.push(Complex64::new(r.re, 0.0));
            false
        } else {
            true
        }
    });
    // conjugate pairs: keep the upper-half root, synthesize its mirror
    let mut upper: Vec<Complex64> = roots.into_iter().filter(|r| r.im > 0.0).collect();
    upper.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    for r in upper {
        groups.push(vec![r, r.conj()]);
    }
    // pair the reals, most resonant first
    reals.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    let mut it = reals.into_iter().peekable();
    while let Some(first) = it.next() {
        match it.next() {
            Some(second) => groups.push(vec![first, second]),
            None => groups.push(vec![first]),
        }
    }
    groups
}

fn zpk_to_sos(zpk: Zpk) -> Vec<Sos> {
    let mut pole_groups = group_roots(zpk.p);
    // sections closest to the unit circle first so they get the nearest zeros
    pole_groups.sort_by(|a, b| {
        let ra = a.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let rb = b.iter().map(|p| p.norm()).fold(0.0, f64::max);
        rb.partial_cmp(&ra).unwrap()
    });

    let mut zeros = zpk.z;
    let mut sections = Vec::with_capacity(pole_groups.len());
    for group in &pole_groups {
        let mut picked: Vec<Complex64> = Vec::with_capacity(group.len());
        for &p in group {
            if zeros.is_empty() {
                break;
            }
            let (idx, _) = zeros
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| (**a - p).norm().partial_cmp(&(**b - p).norm()).unwrap())
                .unwrap();
            // keep conjugate zeros together
            let z = zeros.swap_remove(idx);
            picked.push(z);
            if z.im.abs() > 1e-10 {
                if let Some(cidx) = zeros.iter().position(|c| (c.conj() - z).norm() < 1e-8) {
                    picked.push(zeros.swap_remove(cidx));
                }
                break;
            }
        }
        let b = real_poly(&picked);
        let a = real_poly(group);
        sections.push(Sos { b, a });
    }
    if let Some(first) = sections.first_mut() {
        for c in first.b.iter_mut() {
            *c *= zpk.k;
        }
    }
    sections
}

/// Monic polynomial coefficients from up to two roots; padded to degree 2.
fn real_poly(roots: &[Complex64]) -> [f64; 3] {
    match roots.len() {
        0 => [1.0, 0.0, 0.0],
        1 => [1.0, -roots[0].re, 0.0],
        2 => {
            let s = roots[0] + roots[1];
            let p = roots[0] * roots[1];
            [1.0, -s.re, p.re]
        }
        _ => unreachable!("sections hold at most two roots"),
    }
}

impl IirFilter {
    pub fn design(spec: &FilterSpec, fs: f64) -> Result<Self> {
        spec.validate(fs)?;
        let warp = |f_hz: f64| 2.0 * fs * (std::f64::consts::PI * f_hz / fs).tan();
        let proto = butter_prototype(spec.order);
        let analog = match spec.kind {
            FilterKind::LowPass { cutoff_hz } => lp2lp(proto, warp(cutoff_hz)),
            FilterKind::BandPass { low_hz, high_hz } => {
                let (w1, w2) = (warp(low_hz), warp(high_hz));
                lp2bp(proto, (w1 * w2).sqrt(), w2 - w1)
            }
        };
        let digital = bilinear(analog, fs);
        Ok(Self {
            sections: zpk_to_sos(digital),
            fs,
            zero_phase: spec.zero_phase,
        })
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Complex frequency response of a single causal pass.
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.fs;
        let z1 = Complex64::new(0.0, -w).exp();
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
            let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
            h *= num / den;
        }
        h
    }

    /// Single causal pass from the given per-section state (DF2T).
    fn sosfilt(&self, x: &[f64], zi: Option<&[[f64; 2]]>) -> Vec<f64> {
        let mut state: Vec<[f64; 2]> = zi
            .map(|z| z.to_vec())
            .unwrap_or_else(|| vec![[0.0; 2]; self.sections.len()]);
        let mut y = x.to_vec();
        for (s, st) in self.sections.iter().zip(state.iter_mut()) {
            for v in y.iter_mut() {
                let x_n = *v;
                let y_n = s.b[0] * x_n + st[0];
                st[0] = s.b[1] * x_n - s.a[1] * y_n + st[1];
                st[1] = s.b[2] * x_n - s.a[2] * y_n;
                *v = y_n;
            }
        }
        y
    }

    /// Per-section steady-state response to a unit step, cascaded.
    fn sosfilt_zi(&self) -> Vec<[f64; 2]> {
        let mut zi = Vec::with_capacity(self.sections.len());
        let mut scale = 1.0;
        for s in &self.sections {
            let h1 = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
            zi.push([scale * (h1 - s.b[0]), scale * (s.b[2] - s.a[2] * h1)]);
            scale *= h1;
        }
        zi
    }

    /// One causal pass, state matched to the first sample's step response.
    fn pass(&self, x: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let scaled: Vec<[f64; 2]> = zi.iter().map(|s| [s[0] * x[0], s[1] * x[0]]).collect();
        self.sosfilt(x, Some(&scaled))
    }

    /// Same pass run backwards in time.
    fn rpass(&self, x: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let mut y = self.pass(&rev, zi);
        y.reverse();
        y
    }

    /// Zero-phase pass with odd extension.
    ///
    /// Averages the forward-then-backward and backward-then-forward runs, so
    /// the operator commutes exactly with time reversal; the amplitude
    /// response of either branch (and of the average) is |H|^2 with zero
    /// phase.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let padlen = 3 * (2 * self.sections.len() + 1);
        if x.len() <= padlen {
            return Err(Error::InvalidSpec(format!(
                "signal of {} samples is too short for filtfilt padding {padlen}",
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        for i in (1..=padlen).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=padlen {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let zi = self.sosfilt_zi();
        let fb = self.rpass(&self.pass(&ext, &zi), &zi);
        let bf = self.pass(&self.rpass(&ext, &zi), &zi);
        Ok((padlen..padlen + n)
            .map(|i| 0.5 * (fb[i] + bf[i]))
            .collect())
    }

    /// Apply per the spec's `zero_phase` flag.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.zero_phase {
            self.filtfilt(x)
        } else {
            Ok(self.sosfilt(x, None))
        }
    }
}

/// Filter every channel of a buffer; the input buffer is untouched.
pub fn apply_filter(buffer: &SignalBuffer, spec: &FilterSpec) -> Result<SignalBuffer> {
    let filter = IirFilter::design(spec, buffer.fs())?;
    let filtered = buffer
        .channels()
        .iter()
        .map(|ch| filter.apply(ch))
        .collect::<Result<Vec<_>>>()?;
    buffer.with_samples(filtered)
}

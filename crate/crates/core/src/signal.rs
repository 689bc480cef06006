//! Core data model: multichannel recordings, stimulation trains, electrode
//! geometry and the session container.
//!
//! Time is stored as sample indices internally; user-facing APIs speak
//! milliseconds and convert through the sampling rate, so repeated float
//! conversions cannot drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response kind tag: recorded at the stimulated gyrus (DCR) or evoked
/// through a white-matter pathway (ACEP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpKind {
    Dcr,
    Acep,
}

impl EpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpKind::Dcr => "DCR",
            EpKind::Acep => "ACEP",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DCR" => Ok(EpKind::Dcr),
            "ACEP" => Ok(EpKind::Acep),
            other => Err(Error::InvalidManifest(format!(
                "unknown response kind {other:?} (expected DCR or ACEP)"
            ))),
        }
    }
}

impl std::fmt::Display for EpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniformly sampled multichannel voltage time series, in microvolts.
///
/// Immutable after construction; all preprocessing operations return new
/// buffers.
#[derive(Debug, Clone)]
pub struct SignalBuffer {
    fs: f64,
    channel_ids: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl SignalBuffer {
    pub fn new(fs: f64, channel_ids: Vec<String>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidManifest(format!(
                "fs must be positive, got {fs}"
            )));
        }
        if channel_ids.is_empty() || channel_ids.len() != samples.len() {
            return Err(Error::InvalidManifest(format!(
                "channel count mismatch: {} ids vs {} sample rows",
                channel_ids.len(),
                samples.len()
            )));
        }
        let len = samples[0].len();
        if len == 0 {
            return Err(Error::InvalidManifest(
                "buffer must hold at least one sample".into(),
            ));
        }
        if samples.iter().any(|ch| ch.len() != len) {
            return Err(Error::InvalidManifest("channels differ in length".into()));
        }
        Ok(Self {
            fs,
            channel_ids,
            samples,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn n_channels(&self) -> usize {
        self.channel_ids.len()
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn channel_index(&self, id: &str) -> Result<usize> {
        self.channel_ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| Error::UnknownChannel(id.to_string()))
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.samples[index]
    }

    pub fn channel_by_id(&self, id: &str) -> Result<&[f64]> {
        Ok(self.channel(self.channel_index(id)?))
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Rebuild with the same rate and ids but new sample data.
    pub fn with_samples(&self, samples: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.fs, self.channel_ids.clone(), samples)
    }

    pub fn ms_to_samples(&self, ms: f64) -> i64 {
        (ms * self.fs / 1000.0).round() as i64
    }

    pub fn samples_to_ms(&self, samples: i64) -> f64 {
        samples as f64 * 1000.0 / self.fs
    }
}

/// Stimulation-train metadata: when each pulse landed and how it was shaped.
#[derive(Debug, Clone)]
pub struct StimTrain {
    pub pulse_onsets: Vec<usize>,
    pub f_des_hz: f64,
    pub pulse_width_ms: f64,
    pub polarity_pattern: Vec<i8>,
    pub site_mm: [f64; 3],
    pub kind: EpKind,
}

impl StimTrain {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.pulse_onsets.is_empty() {
            return Err(Error::InvalidManifest("train has no pulses".into()));
        }
        if !(self.pulse_width_ms > 0.0) {
            return Err(Error::InvalidManifest(format!(
                "pulse width must be positive, got {} ms",
                self.pulse_width_ms
            )));
        }
        if !(self.f_des_hz > 0.0) {
            return Err(Error::InvalidManifest(format!(
                "stimulation frequency must be positive, got {} Hz",
                self.f_des_hz
            )));
        }
        if self.polarity_pattern.len() != self.pulse_onsets.len() {
            return Err(Error::InvalidManifest(format!(
                "polarity pattern length {} != pulse count {}",
                self.polarity_pattern.len(),
                self.pulse_onsets.len()
            )));
        }
        if self.polarity_pattern.iter().any(|&p| p != 1 && p != -1) {
            return Err(Error::InvalidManifest(
                "polarity pattern entries must be +1 or -1".into(),
            ));
        }
        if self.site_mm.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let nominal = fs / self.f_des_hz;
        for w in self.pulse_onsets.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidManifest(
                    "pulse onsets must be strictly increasing".into(),
                ));
            }
            let spacing = (w[1] - w[0]) as f64;
            if (spacing - nominal).abs() > 0.01 * nominal {
                return Err(Error::InvalidManifest(format!(
                    "inter-pulse spacing {spacing} samples deviates >1% from fs/f_des = {nominal:.2}"
                )));
            }
        }
        Ok(())
    }

    /// Build a regular train: `n` pulses at `f_des_hz`, alternating polarity,
    /// first pulse at `start_sample`.
    pub fn regular(
        kind: EpKind,
        f_des_hz: f64,
        n_pulses: usize,
        pulse_width_ms: f64,
        fs: f64,
        start_sample: usize,
        site_mm: [f64; 3],
    ) -> Self {
        let onsets: Vec<usize> = (0..n_pulses)
            .map(|k| start_sample + (k as f64 * fs / f_des_hz).round() as usize)
            .collect();
        let polarity: Vec<i8> = (0..n_pulses)
            .map(|k| if k % 2 == 0 { 1 } else { -1 })
            .collect();
        Self {
            pulse_onsets: onsets,
            f_des_hz,
            pulse_width_ms,
            polarity_pattern: polarity,
            site_mm,
            kind,
        }
    }

    /// Sample span covered by the train, from first onset to the end of the
    /// last pulse.
    pub fn span(&self, fs: f64) -> (usize, usize) {
        let pw = (self.pulse_width_ms * fs / 1000.0).round() as usize;
        (
            *self.pulse_onsets.first().unwrap(),
            *self.pulse_onsets.last().unwrap() + pw,
        )
    }
}

/// Per-channel contact positions plus named stimulation sites, millimetres.
#[derive(Debug, Clone, Default)]
pub struct ElectrodeGeometry {
    /// One position per buffer channel, in channel order.
    pub positions_mm: Vec<[f64; 3]>,
    /// Named DES sites.
    pub des_sites: Vec<(String, [f64; 3])>,
}

impl ElectrodeGeometry {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if self.positions_mm.len() != n_channels {
            return Err(Error::InvalidManifest(format!(
                "geometry provides {} positions for {} channels",
                self.positions_mm.len(),
                n_channels
            )));
        }
        let finite = |p: &[f64; 3]| p.iter().all(|v| v.is_finite());
        if !self.positions_mm.iter().all(finite) || !self.des_sites.iter().all(|(_, p)| finite(p)) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

/// One recording plus its stimulation metadata.
#[derive(Debug, Clone)]
pub struct Session {
    pub buffer: SignalBuffer,
    pub trains: Vec<StimTrain>,
    pub geometry: Option<ElectrodeGeometry>,
    pub patient_label: String,
    /// Preprocessing steps already applied, in order (e.g. "excise",
    /// "line50", "bandpass"). Empty for raw sessions.
    pub processing: Vec<String>,
}

impl Session {
    pub fn validate(&self) -> Result<()> {
        let fs = self.buffer.fs();
        let len = self.buffer.len();
        for train in &self.trains {
            train.validate(fs)?;
            if train.pulse_onsets.iter().any(|&o| o >= len) {
                return Err(Error::InvalidManifest(format!(
                    "pulse onset {} lies outside the buffer (len {len})",
                    train.pulse_onsets.iter().find(|&&o| o >= len).unwrap()
                )));
            }
        }
        // trains must not overlap in time
        let mut spans: Vec<(usize, usize)> = self.trains.iter().map(|t| t.span(fs)).collect();
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidManifest(format!(
                    "trains overlap in time: [{}, {}) and [{}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        if let Some(geom) = &self.geometry {
            geom.validate(self.buffer.n_channels())?;
        }
        Ok(())
    }
}

/// Straight-line distance between two points, millimetres.
pub fn euclidean_distance(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

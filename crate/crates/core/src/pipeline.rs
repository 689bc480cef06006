//! End-to-end composition of the analysis chain plus its configuration.
//!
//! Config precedence: built-in defaults, then a TOML config file, then
//! command-line flags; the CLI applies the last two.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::epochs::{self, EpochSet, EvokedPotential, GateDecision, GateMode, StabilityReport};
use crate::error::{Error, Result};
use crate::filter::{self, FilterSpec};
use crate::metrics::{self, MetricConfig, OnsetConfig, WaveformMetrics};
use crate::preprocess::{self, LineNoiseTemplate};
use crate::signal::{Session, StimTrain};
use crate::timefreq::{self, StftConfig, TimeFrequencyMap};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub band_order: usize,
    pub excision_extra_ms: f64,
    pub epoch_window_ms: (f64, f64),
    pub amplitude_threshold_uv: f64,
    pub gate_window_end_ms: f64,
    pub gate_mode: GateMode,
    pub n1_search_ms: (f64, f64),
    pub metrics_lp_hz: f64,
    pub metrics_lp_order: usize,
    pub onset_lp_hz: f64,
    pub onset_lp_order: usize,
    pub onset_margin_ms: f64,
    pub stft_window_ms: f64,
    pub stft_step_ms: f64,
    pub baseline_centers_ms: (f64, f64),
    pub gamma_centers_ms: Vec<f64>,
    pub invert: bool,
    pub stability_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            band_lo_hz: 1.0,
            band_hi_hz: 1000.0,
            band_order: 4,
            excision_extra_ms: preprocess::DEFAULT_EXTRA_MS,
            epoch_window_ms: epochs::DEFAULT_EPOCH_WINDOW_MS,
            amplitude_threshold_uv: epochs::DEFAULT_AMPLITUDE_THRESHOLD_UV,
            gate_window_end_ms: 100.0,
            gate_mode: GateMode::AnyDeflection,
            n1_search_ms: (8.0, 35.0),
            metrics_lp_hz: 200.0,
            metrics_lp_order: 4,
            onset_lp_hz: 250.0,
            onset_lp_order: 3,
            onset_margin_ms: 2.0,
            stft_window_ms: 20.0,
            stft_step_ms: 5.0,
            baseline_centers_ms: (-25.0, -15.0),
            gamma_centers_ms: timefreq::DEFAULT_GAMMA_CENTERS_MS.to_vec(),
            invert: false,
            stability_threshold: epochs::DEFAULT_STABILITY_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let (t_min, t_max) = self.epoch_window_ms;
        if !(t_min < 0.0 && 0.0 < t_max) {
            return Err(Error::Config(format!(
                "epoch window [{t_min}, {t_max}] ms must straddle the pulse onset"
            )));
        }
        if t_min > -5.0 {
            return Err(Error::Config(
                "epoch window must contain the [-5, 0) ms baseline".into(),
            ));
        }
        // the time-frequency baseline is checked by the STFT itself, so a
        // narrow window stays usable for the time-domain commands
        if self.n1_search_ms.0 >= self.n1_search_ms.1 || self.n1_search_ms.1 > t_max {
            return Err(Error::Config(format!(
                "N1 search window [{}, {}] ms inconsistent with the epoch window",
                self.n1_search_ms.0, self.n1_search_ms.1
            )));
        }
        if self.amplitude_threshold_uv < 0.0 {
            return Err(Error::Config(
                "amplitude threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn band_pass(&self) -> FilterSpec {
        FilterSpec::band_pass(self.band_order, self.band_lo_hz, self.band_hi_hz)
    }

    pub fn metric_config(&self, train: &StimTrain) -> MetricConfig {
        MetricConfig {
            n1_search_ms: self.n1_search_ms,
            artifact_end_ms: train.pulse_width_ms + self.excision_extra_ms,
            crossing_floor_ms: train.pulse_width_ms + self.onset_margin_ms,
            lp_cutoff_hz: self.metrics_lp_hz,
            lp_order: self.metrics_lp_order,
            invert: self.invert,
            ..MetricConfig::default()
        }
    }

    pub fn onset_config(&self, train: &StimTrain) -> OnsetConfig {
        OnsetConfig {
            lp_cutoff_hz: self.onset_lp_hz,
            lp_order: self.onset_lp_order,
            pulse_end_ms: train.pulse_width_ms,
            margin_ms: self.onset_margin_ms,
            n1_search_ms: self.n1_search_ms,
            ..OnsetConfig::default()
        }
    }

    pub fn stft_config(&self) -> StftConfig {
        StftConfig {
            window_ms: self.stft_window_ms,
            step_ms: self.stft_step_ms,
            baseline_centers_ms: self.baseline_centers_ms,
        }
    }
}

/// What the preprocessing pass did.
#[derive(Debug, Clone)]
pub struct PreprocessReport {
    /// Channel whose 50 Hz estimate anchored the report (strongest hum).
    pub noisiest_channel: String,
    /// Fundamental amplitude of each channel's template, microvolts.
    pub line_amplitude_uv: BTreeMap<String, f64>,
    /// False when fs/50 is not an integer and templates were resampled.
    pub line_rate_exact: bool,
    pub n_excision_windows: usize,
}

pub const STEP_EXCISE: &str = "excise";
pub const STEP_LINE: &str = "line50";
pub const STEP_BANDPASS: &str = "bandpass";

/// Artifact excision, per-channel 50 Hz template subtraction, then the
/// band-pass. Returns a new session with its processing trail extended.
pub fn preprocess_session(
    session: &Session,
    cfg: &PipelineConfig,
) -> Result<(Session, PreprocessReport)> {
    cfg.validate()?;
    let fs = session.buffer.fs();
    let mut windows = Vec::new();
    for train in &session.trains {
        windows.extend(preprocess::excision_windows(
            train,
            cfg.excision_extra_ms,
            fs,
        ));
    }

    let excised = preprocess::excise_all(&session.buffer, &session.trains, cfg.excision_extra_ms)?;
    let (cleaned, noisiest, templates) = preprocess::clean_line_noise(&excised, &windows)?;
    let filtered = filter::apply_filter(&cleaned, &cfg.band_pass())?;

    let report = PreprocessReport {
        noisiest_channel: noisiest,
        line_amplitude_uv: templates
            .iter()
            .map(|(id, t): (&String, &LineNoiseTemplate)| (id.clone(), t.line_amplitude()))
            .collect(),
        line_rate_exact: templates.values().all(|t| t.rate_exact),
        n_excision_windows: windows.len(),
    };

    let mut processing = session.processing.clone();
    for step in [STEP_EXCISE, STEP_LINE, STEP_BANDPASS] {
        processing.push(step.to_string());
    }
    let out = Session {
        buffer: filtered,
        trains: session.trains.clone(),
        geometry: session.geometry.clone(),
        patient_label: session.patient_label.clone(),
        processing,
    };
    out.validate()?;
    Ok((out, report))
}

/// Epochs and their average for one channel of one train.
pub fn extract_and_average(
    session: &Session,
    channel: &str,
    train_index: usize,
    cfg: &PipelineConfig,
) -> Result<(EpochSet, EvokedPotential)> {
    let train = session
        .trains
        .get(train_index)
        .ok_or_else(|| Error::Config(format!("train index {train_index} out of range")))?;
    let set = epochs::extract_epochs(&session.buffer, train, channel, cfg.epoch_window_ms)?;
    let ep = epochs::average_epochs(&set)?;
    Ok((set, ep))
}

/// One metrics-table row.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub channel: String,
    pub train_index: usize,
    pub kind: crate::signal::EpKind,
    pub n_averaged: usize,
    pub stability: Option<StabilityReport>,
    pub metrics: WaveformMetrics,
}

/// Metrics for every accepted averaged EP across the requested channels and
/// trains. Returns the rows plus the count of gate-rejected EPs.
pub fn metrics_for_session(
    session: &Session,
    channel: Option<&str>,
    train_index: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<(Vec<MetricsRow>, usize)> {
    cfg.validate()?;
    let channels: Vec<String> = match channel {
        Some(c) => {
            session.buffer.channel_index(c)?;
            vec![c.to_string()]
        }
        None => session.buffer.channel_ids().to_vec(),
    };
    let trains: Vec<usize> = match train_index {
        Some(i) if i >= session.trains.len() => {
            return Err(Error::Config(format!("train index {i} out of range")))
        }
        Some(i) => vec![i],
        None => (0..session.trains.len()).collect(),
    };

    let mut rows = Vec::new();
    let mut n_rejected = 0usize;
    for ch in &channels {
        for &ti in &trains {
            let train = &session.trains[ti];
            let (set, ep) = extract_and_average(session, ch, ti, cfg)?;
            let artifact_end = train.pulse_width_ms + cfg.excision_extra_ms;
            if epochs::amplitude_gate(
                &ep,
                cfg.amplitude_threshold_uv,
                artifact_end,
                cfg.gate_window_end_ms,
                cfg.gate_mode,
            ) == GateDecision::Reject
            {
                n_rejected += 1;
                continue;
            }
            let stability = if set.epochs.len() >= 4 {
                Some(epochs::stability_check(&set, cfg.stability_threshold)?)
            } else {
                None
            };
            let metrics = metrics::compute_metrics(&ep, &cfg.metric_config(train))?;
            rows.push(MetricsRow {
                channel: ch.clone(),
                train_index: ti,
                kind: train.kind,
                n_averaged: ep.n_averaged,
                stability,
                metrics,
            });
        }
    }
    Ok((rows, n_rejected))
}

/// Time-frequency map for one channel of one train. Refuses sessions whose
/// 50 Hz noise has not been removed unless `allow_dirty` — a leftover hum
/// would masquerade as gamma activity.
pub fn tfr_for_session(
    session: &Session,
    channel: &str,
    train_index: usize,
    cfg: &PipelineConfig,
    allow_dirty: bool,
) -> Result<(TimeFrequencyMap, f64)> {
    cfg.validate()?;
    if !allow_dirty && !session.processing.iter().any(|s| s == STEP_LINE) {
        return Err(Error::Config(
            "session has no line-noise removal step; run preprocess first or pass --allow-dirty"
                .into(),
        ));
    }
    let (set, _) = extract_and_average(session, channel, train_index, cfg)?;
    let map = timefreq::stft_power_db(&set, &cfg.stft_config())?;
    let gamma = timefreq::gamma_band_summary(&map, &cfg.gamma_centers_ms)?;
    Ok((map, gamma))
}

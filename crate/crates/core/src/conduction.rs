//! Onset delays, conduction velocity and the empirical
//! velocity = 6 x diameter rule for myelinated fibers.
//!
//! Units line up so no factors appear: mm / ms = m/s.

use crate::error::{Error, Result};
use crate::metrics::WaveformMetrics;

/// One DCR/ACEP pairing. `velocity_mps` is present only for positive
/// delays; negative or zero delays are kept and flagged rather than
/// dropped, since they do occur and belong in the report.
#[derive(Debug, Clone, Copy)]
pub struct ConductionEstimate {
    pub delay_ms: f64,
    pub distance_mm: f64,
    pub velocity_mps: Option<f64>,
    pub valid: bool,
}

impl ConductionEstimate {
    pub fn new(distance_mm: f64, delay_ms: f64) -> Result<Self> {
        if !(distance_mm > 0.0) {
            return Err(Error::NonPositiveDistance(distance_mm));
        }
        let valid = delay_ms > 0.0;
        Ok(Self {
            delay_ms,
            distance_mm,
            velocity_mps: valid.then(|| distance_mm / delay_ms),
            valid,
        })
    }
}

/// Myelinated-fiber conduction model: velocity (m/s) = 6 x diameter (um).
#[derive(Debug, Clone, Copy)]
pub struct FiberModel {
    pub diameter_um: f64,
    pub velocity_mps: f64,
}

impl FiberModel {
    pub fn from_diameter(diameter_um: f64) -> Result<Self> {
        if !(diameter_um > 0.0) {
            return Err(Error::NonPositiveDiameter(diameter_um));
        }
        if diameter_um > 20.0 {
            return Err(Error::Config(format!(
                "diameter {diameter_um} um outside the plausible (0, 20] um range"
            )));
        }
        Ok(Self {
            diameter_um,
            velocity_mps: 6.0 * diameter_um,
        })
    }
}

/// Signed onset difference: ACEP t_zc1 minus DCR t_zc1, milliseconds.
pub fn onset_delay(dcr: &WaveformMetrics, acep: &WaveformMetrics) -> Result<f64> {
    match (dcr.t_zc1_ms, acep.t_zc1_ms) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(Error::UndefinedOnset),
    }
}

/// Straight-line conduction velocity, m/s.
pub fn velocity_from_delay(distance_mm: f64, delay_ms: f64) -> Result<f64> {
    if !(distance_mm > 0.0) {
        return Err(Error::NonPositiveDistance(distance_mm));
    }
    if !(delay_ms > 0.0) {
        return Err(Error::NonPositiveDelay(delay_ms));
    }
    Ok(distance_mm / delay_ms)
}

/// Predicted conduction delay for a fiber of the given diameter over the
/// given straight-line distance, milliseconds.
pub fn hursh_predicted_delay(diameter_um: f64, distance_mm: f64) -> Result<f64> {
    let fiber = FiberModel::from_diameter(diameter_um)?;
    if distance_mm < 0.0 {
        return Err(Error::NonPositiveDistance(distance_mm));
    }
    Ok(distance_mm / fiber.velocity_mps)
}

/// Patient-level aggregation over pairings. Mean/median over valid pairs
/// (positive delays) plus the same over all pairs with nonzero delay,
/// velocities signed — both views are reported because excluding the
/// negative-delay pairs changes the summary substantially.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityAggregate {
    pub n_pairs: usize,
    pub n_valid: usize,
    pub mean_valid_mps: Option<f64>,
    pub median_valid_mps: Option<f64>,
    pub mean_all_signed_mps: Option<f64>,
    pub median_all_signed_mps: Option<f64>,
}

pub fn aggregate(estimates: &[ConductionEstimate]) -> VelocityAggregate {
    let valid: Vec<f64> = estimates.iter().filter_map(|e| e.velocity_mps).collect();
    let all_signed: Vec<f64> = estimates
        .iter()
        .filter(|e| e.delay_ms != 0.0)
        .map(|e| e.distance_mm / e.delay_ms)
        .collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let median = |v: &[f64]| {
        (!v.is_empty()).then(|| {
            let mut s = v.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
            }
        })
    };
    VelocityAggregate {
        n_pairs: estimates.len(),
        n_valid: valid.len(),
        mean_valid_mps: mean(&valid),
        median_valid_mps: median(&valid),
        mean_all_signed_mps: mean(&all_signed),
        median_all_signed_mps: median(&all_signed),
    }
}

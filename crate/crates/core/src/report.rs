//! Plot-ready text emission and parsing: evoked traces, metrics tables,
//! time-frequency matrices, velocity and statistics reports, ground-truth
//! sidecars.
//!
//! All numbers print through one fixed-precision formatter so identical
//! inputs give byte-identical files.

use std::fmt::Write as _;

use crate::conduction::{ConductionEstimate, VelocityAggregate};
use crate::epochs::{EvokedPotential, StabilityReport};
use crate::error::{Error, Result};
use crate::pipeline::MetricsRow;
use crate::stats::{RegressionResult, TestResult};
use crate::synth::{EpKernelSpec, KernelTruth, NoiseSpec};
use crate::timefreq::TimeFrequencyMap;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

/// `time_ms<TAB>amplitude_uv` table with a metadata header.
pub fn write_evoked(ep: &EvokedPotential, stability: Option<&StabilityReport>) -> String {
    let (t_min, t_max) = ep.window_ms();
    let mut out = String::new();
    let _ = writeln!(out, "# kind = {}", ep.kind);
    let _ = writeln!(out, "# n_averaged = {}", ep.n_averaged);
    let _ = writeln!(out, "# fs_hz = {}", fmt_f64(ep.fs));
    let _ = writeln!(
        out,
        "# window_ms = [{}, {}]",
        fmt_f64(t_min),
        fmt_f64(t_max)
    );
    let _ = writeln!(out, "# polarity = {}", EvokedPotential::POLARITY_CONVENTION);
    if let Some(s) = stability {
        let _ = writeln!(out, "# stability_similarity = {}", fmt_f64(s.similarity));
        let _ = writeln!(out, "# stability_threshold = {}", fmt_f64(s.threshold));
        let _ = writeln!(out, "# stable = {}", s.stable);
    }
    let _ = writeln!(out, "time_ms\tamplitude_uv");
    for (i, &v) in ep.trace.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}", fmt_f64(ep.time_ms(i)), fmt_f64(v));
    }
    out
}

pub const METRICS_COLUMNS: [&str; 16] = [
    "channel",
    "train",
    "kind",
    "n_averaged",
    "stability",
    "inverted",
    "t_zc1_ms",
    "t_zc2_ms",
    "w_n1_ms",
    "whq_n1_ms",
    "n1_latency_ms",
    "n1_maxamp_uv",
    "area_40_100_uvms",
    "min_slope_50_80_uv_per_ms",
    "relaxation_class",
    "p0_latency_ms",
];

/// Tab-separated metrics table, one row per accepted EP. A final
/// `p0_amplitude_uv` column follows the named ones.
pub fn write_metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}\tp0_amplitude_uv", METRICS_COLUMNS.join("\t"));
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.channel,
            r.train_index,
            r.kind,
            r.n_averaged,
            fmt_opt(r.stability.map(|s| s.similarity)),
            r.metrics.inverted,
            fmt_opt(m.t_zc1_ms),
            fmt_opt(m.t_zc2_ms),
            fmt_opt(m.w_n1_ms),
            fmt_opt(m.whq_n1_ms),
            fmt_f64(m.n1_latency_ms),
            fmt_f64(m.n1_maxamp_uv),
            fmt_f64(m.area_40_100_uvms),
            fmt_f64(m.min_slope_50_80),
            m.relaxation_class,
            fmt_opt(m.p0.map(|p| p.latency_ms)),
            fmt_opt(m.p0.map(|p| p.amplitude_uv)),
        );
    }
    out
}

/// A parsed tab-separated table with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidManifest("empty table".into()))?;
        let columns: Vec<String> = header.split('\t').map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for line in lines {
            let cells: Vec<String> = line.split('\t').map(|s| s.to_string()).collect();
            if cells.len() != columns.len() {
                return Err(Error::InvalidManifest(format!(
                    "row has {} cells, header has {}",
                    cells.len(),
                    columns.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self { columns, rows })
    }

    /// Numeric column by name; "NA" parses to None.
    pub fn column_f64(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("no column named {name:?}")))?;
        self.rows
            .iter()
            .map(|r| {
                let cell = &r[idx];
                if cell == "NA" {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| {
                        Error::InvalidManifest(format!(
                            "cell {cell:?} in column {name:?} is not numeric"
                        ))
                    })
                }
            })
            .collect()
    }
}

/// Frequencies across the header row, one line per window center.
pub fn write_tf_map(map: &TimeFrequencyMap, gamma_centers: &[f64], gamma_db: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gamma_bin_hz = {}", fmt_f64(map.gamma_bin_hz));
    let _ = writeln!(
        out,
        "# baseline_ms = [{}, {}]",
        fmt_f64(map.baseline_ms.0),
        fmt_f64(map.baseline_ms.1)
    );
    let centers = gamma_centers
        .iter()
        .map(|c| fmt_f64(*c))
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(
        out,
        "# gamma_mean_db(centers_ms=[{centers}]) = {}",
        fmt_f64(gamma_db)
    );
    let freqs = map
        .freqs_hz
        .iter()
        .map(|f| fmt_f64(*f))
        .collect::<Vec<_>>()
        .join("\t");
    let _ = writeln!(out, "center_ms\\f_hz\t{freqs}");
    for (ci, row) in map.power_db.iter().enumerate() {
        let cells = row
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join("\t");
        let _ = writeln!(out, "{}\t{}", fmt_f64(map.centers_ms[ci]), cells);
    }
    out
}

/// Key = value record for one statistical test.
pub fn write_test_result(tr: &TestResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "test_name = {}", tr.test_name);
    let _ = writeln!(out, "statistic = {}", fmt_f64(tr.statistic));
    let _ = writeln!(out, "df = {}", fmt_opt(tr.df));
    let _ = writeln!(out, "p_value = {:.6e}", tr.p_value);
    let _ = writeln!(out, "tails = {}", tr.tails);
    let _ = writeln!(out, "n = {}", tr.n);
    out
}

pub fn write_regression_result(r: &RegressionResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "test_name = linear-regression");
    let _ = writeln!(out, "slope = {}", fmt_f64(r.slope));
    let _ = writeln!(out, "intercept = {}", fmt_f64(r.intercept));
    let _ = writeln!(out, "r_squared = {}", fmt_f64(r.r_squared));
    let _ = writeln!(out, "n = {}", r.n);
    out
}

/// Per-pair velocity records plus the aggregate header.
pub fn write_velocity_report(
    estimates: &[ConductionEstimate],
    agg: &VelocityAggregate,
    hursh: Option<(f64, f64)>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n_pairs = {}", agg.n_pairs);
    let _ = writeln!(out, "# n_valid = {}", agg.n_valid);
    let _ = writeln!(
        out,
        "# mean_velocity_valid_mps = {}",
        fmt_opt(agg.mean_valid_mps)
    );
    let _ = writeln!(
        out,
        "# median_velocity_valid_mps = {}",
        fmt_opt(agg.median_valid_mps)
    );
    let _ = writeln!(
        out,
        "# mean_velocity_all_signed_mps = {}",
        fmt_opt(agg.mean_all_signed_mps)
    );
    let _ = writeln!(
        out,
        "# median_velocity_all_signed_mps = {}",
        fmt_opt(agg.median_all_signed_mps)
    );
    if let Some((diameter, delay)) = hursh {
        let _ = writeln!(
            out,
            "# hursh_predicted_delay_ms(diameter_um={}) = {}",
            fmt_f64(diameter),
            fmt_f64(delay)
        );
    }
    let _ = writeln!(out, "pair\tdistance_mm\tdelay_ms\tvelocity_mps\tvalid");
    for (i, e) in estimates.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            i,
            fmt_f64(e.distance_mm),
            fmt_f64(e.delay_ms),
            fmt_opt(e.velocity_mps),
            e.valid
        );
    }
    out
}

/// Ground-truth sidecar for a simulated session.
pub fn write_truth_sidecar(
    spec: &EpKernelSpec,
    noise: &NoiseSpec,
    truth: &KernelTruth,
    pulses: usize,
    f_des_hz: f64,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {}", spec.kind);
    let _ = writeln!(out, "true_delay_ms = {}", fmt_f64(truth.delay_ms));
    let _ = writeln!(out, "pulses = {pulses}");
    let _ = writeln!(out, "f_des_hz = {}", fmt_f64(f_des_hz));
    if let Some(p0) = &spec.p0 {
        let _ = writeln!(
            out,
            "p0_kernel = latency_ms:{} amplitude_uv:{} width_ms:{}",
            fmt_f64(p0.latency_ms),
            fmt_f64(p0.amplitude_uv),
            fmt_f64(p0.width_ms)
        );
    }
    let n1 = &spec.n1;
    let _ = writeln!(
        out,
        "n1_kernel = latency_ms:{} amplitude_uv:{} rise_ms:{} decay_ms:{} rebound_frac:{} rebound_stretch:{}",
        fmt_f64(n1.latency_ms),
        fmt_f64(n1.amplitude_uv),
        fmt_f64(n1.rise_ms),
        fmt_f64(n1.decay_ms),
        fmt_f64(n1.rebound_frac),
        fmt_f64(n1.rebound_stretch)
    );
    if let Some(ap) = &spec.after_positivity {
        let _ = writeln!(
            out,
            "after_positivity_kernel = latency_ms:{} amplitude_uv:{} width_ms:{}",
            fmt_f64(ap.latency_ms),
            fmt_f64(ap.amplitude_uv),
            fmt_f64(ap.width_ms)
        );
    }
    let _ = writeln!(
        out,
        "noise_white_sigma_uv = {}",
        fmt_f64(noise.white_sigma_uv)
    );
    let _ = writeln!(
        out,
        "noise_line_50hz_amp_uv = {}",
        fmt_f64(noise.line_50hz_amp_uv)
    );
    let _ = writeln!(
        out,
        "noise_line_phase_rad = {}",
        fmt_f64(noise.line_phase_rad)
    );
    let _ = writeln!(out, "artifact_amp_uv = {}", fmt_f64(noise.artifact_amp_uv));
    let _ = writeln!(out, "rng_seed = {}", noise.rng_seed);
    let _ = writeln!(out, "true_t_zc1_ms = {}", fmt_opt(truth.t_zc1_ms));
    let _ = writeln!(out, "true_t_zc2_ms = {}", fmt_opt(truth.t_zc2_ms));
    let _ = writeln!(out, "true_w_n1_ms = {}", fmt_opt(truth.w_n1_ms));
    let _ = writeln!(out, "true_whq_n1_ms = {}", fmt_opt(truth.whq_n1_ms));
    let _ = writeln!(out, "true_n1_latency_ms = {}", fmt_f64(truth.n1_latency_ms));
    let _ = writeln!(
        out,
        "true_n1_amplitude_uv = {}",
        fmt_f64(truth.n1_amplitude_uv)
    );
    let _ = writeln!(
        out,
        "true_area_40_100_uvms = {}",
        fmt_f64(truth.area_40_100_uvms)
    );
    let _ = writeln!(
        out,
        "true_min_slope_50_80_uv_per_ms = {}",
        fmt_f64(truth.min_slope_50_80_uv_per_ms)
    );
    let _ = writeln!(
        out,
        "true_relaxation_class = {}",
        if truth.after_positivity {
            "after-positivity"
        } else {
            "monotonic"
        }
    );
    let _ = writeln!(out, "true_p0_latency_ms = {}", fmt_opt(truth.p0_latency_ms));
    let _ = writeln!(
        out,
        "true_p0_amplitude_uv = {}",
        fmt_opt(truth.p0_amplitude_uv)
    );
    out
}

/// Key = value parser for sidecars and test reports.
pub fn parse_key_values(text: &str) -> std::collections::BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::EpKind;

    #[test]
    fn evoked_export_round_trips_through_table() {
        let ep = EvokedPotential {
            trace: vec![0.0, 1.5, -2.25, 0.75],
            start_offset: -2,
            fs: 1000.0,
            n_averaged: 12,
            kind: EpKind::Acep,
        };
        let text = write_evoked(&ep, None);
        assert!(text.contains("# kind = ACEP"));
        assert!(text.contains("# n_averaged = 12"));
        let table = Table::parse(&text).unwrap();
        assert_eq!(table.columns, vec!["time_ms", "amplitude_uv"]);
        let amp = table.column_f64("amplitude_uv").unwrap();
        assert_eq!(amp[2], Some(-2.25));
        let t = table.column_f64("time_ms").unwrap();
        assert_eq!(t[0], Some(-2.0));
    }

    #[test]
    fn table_rejects_ragged_rows() {
        assert!(Table::parse("a\tb\n1\t2\t3\n").is_err());
    }

    #[test]
    fn na_cells_parse_to_none() {
        let table = Table::parse("x\ty\n1.5\tNA\n2.5\t7.0\n").unwrap();
        assert_eq!(table.column_f64("y").unwrap(), vec![None, Some(7.0)]);
    }

    #[test]
    fn key_value_parser() {
        let kv = parse_key_values("a = 1\n# comment without equals\nb = two\n");
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two");
    }
}

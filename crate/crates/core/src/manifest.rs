//! Session manifest I/O.
//!
//! A session on disk is a TOML manifest next to a raw binary signal file.
//! The raw file holds channel-major little-endian `f32` samples (all of
//! channel 0, then all of channel 1, ...). The manifest is canonical:
//! loading a session and re-serializing it reproduces the file byte for
//! byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ElectrodeGeometry, EpKind, Session, SignalBuffer, StimTrain};

pub const SAMPLE_FORMAT_F32LE: &str = "f32le";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub fs_hz: f64,
    pub n_samples: u64,
    pub raw_file: String,
    pub sample_format: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub patient_label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processing: Vec<String>,
    pub channels: Vec<ManifestChannel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub des_sites: Vec<ManifestDesSite>,
    pub trains: Vec<ManifestTrain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz_mm: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDesSite {
    pub name: String,
    pub xyz_mm: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestTrain {
    pub kind: String,
    pub f_des_hz: f64,
    pub pulse_width_ms: f64,
    pub pulse_onsets_samples: Vec<u64>,
    pub polarity_pattern: Vec<i8>,
    pub site_xyz_mm: [f64; 3],
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialization cannot fail")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidManifest(e.to_string()))
    }
}

/// Load and validate a session from its manifest path.
pub fn load_session(manifest_path: &Path) -> Result<Session> {
    if !manifest_path.is_file() {
        return Err(Error::MissingFile(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path)?;
    let manifest = Manifest::from_toml(&text)?;
    let raw_path = sibling(manifest_path, &manifest.raw_file);
    session_from_manifest(&manifest, &raw_path)
}

fn sibling(manifest_path: &Path, raw_file: &str) -> PathBuf {
    let raw = Path::new(raw_file);
    if raw.is_absolute() {
        raw.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(raw)
    }
}

pub fn session_from_manifest(manifest: &Manifest, raw_path: &Path) -> Result<Session> {
    if manifest.sample_format != SAMPLE_FORMAT_F32LE {
        return Err(Error::InvalidManifest(format!(
            "unsupported sample format {:?} (expected {SAMPLE_FORMAT_F32LE:?})",
            manifest.sample_format
        )));
    }
    if !(manifest.fs_hz > 0.0) || !manifest.fs_hz.is_finite() {
        return Err(Error::InvalidManifest(format!(
            "fs must be positive, got {}",
            manifest.fs_hz
        )));
    }
    if manifest.channels.is_empty() {
        return Err(Error::InvalidManifest(
            "manifest declares no channels".into(),
        ));
    }
    if !raw_path.is_file() {
        return Err(Error::MissingFile(raw_path.to_path_buf()));
    }

    let n_ch = manifest.channels.len();
    let declared = manifest.n_samples as usize;
    let bytes = fs::read(raw_path)?;
    let expected_bytes = n_ch
        .checked_mul(declared)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidManifest("sample count overflows".into()))?;
    if bytes.len() < expected_bytes {
        return Err(Error::TruncatedData(format!(
            "raw file holds {} bytes but the manifest claims {} ({} channels x {} samples x 4)",
            bytes.len(),
            expected_bytes,
            n_ch,
            declared
        )));
    }
    if bytes.len() > expected_bytes {
        return Err(Error::InvalidManifest(format!(
            "raw file holds {} bytes, more than the declared {}",
            bytes.len(),
            expected_bytes
        )));
    }

    let mut samples = Vec::with_capacity(n_ch);
    for ch in 0..n_ch {
        let start = ch * declared * 4;
        let row: Vec<f64> = bytes[start..start + declared * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        samples.push(row);
    }

    let channel_ids: Vec<String> = manifest.channels.iter().map(|c| c.id.clone()).collect();
    let buffer = SignalBuffer::new(manifest.fs_hz, channel_ids, samples)?;

    let geometry = if manifest.channels.iter().all(|c| c.xyz_mm.is_some()) {
        Some(ElectrodeGeometry {
            positions_mm: manifest
                .channels
                .iter()
                .map(|c| c.xyz_mm.unwrap())
                .collect(),
            des_sites: manifest
                .des_sites
                .iter()
                .map(|s| (s.name.clone(), s.xyz_mm))
                .collect(),
        })
    } else if manifest.channels.iter().any(|c| c.xyz_mm.is_some()) {
        return Err(Error::InvalidManifest(
            "either every channel carries xyz_mm or none does".into(),
        ));
    } else {
        None
    };

    let trains = manifest
        .trains
        .iter()
        .map(|t| {
            let onsets: Vec<usize> = t.pulse_onsets_samples.iter().map(|&o| o as usize).collect();
            Ok(StimTrain {
                pulse_onsets: onsets,
                f_des_hz: t.f_des_hz,
                pulse_width_ms: t.pulse_width_ms,
                polarity_pattern: t.polarity_pattern.clone(),
                site_mm: t.site_xyz_mm,
                kind: EpKind::parse(&t.kind)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let session = Session {
        buffer,
        trains,
        geometry,
        patient_label: manifest.patient_label.clone(),
        processing: manifest.processing.clone(),
    };
    session.validate()?;
    Ok(session)
}

pub fn manifest_from_session(session: &Session, raw_file: &str) -> Manifest {
    let geometry = session.geometry.as_ref();
    Manifest {
        fs_hz: session.buffer.fs(),
        n_samples: session.buffer.len() as u64,
        raw_file: raw_file.to_string(),
        sample_format: SAMPLE_FORMAT_F32LE.to_string(),
        patient_label: session.patient_label.clone(),
        processing: session.processing.clone(),
        channels: session
            .buffer
            .channel_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| ManifestChannel {
                id: id.clone(),
                xyz_mm: geometry.map(|g| g.positions_mm[i]),
            })
            .collect(),
        des_sites: geometry
            .map(|g| {
                g.des_sites
                    .iter()
                    .map(|(name, xyz)| ManifestDesSite {
                        name: name.clone(),
                        xyz_mm: *xyz,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        trains: session
            .trains
            .iter()
            .map(|t| ManifestTrain {
                kind: t.kind.as_str().to_string(),
                f_des_hz: t.f_des_hz,
                pulse_width_ms: t.pulse_width_ms,
                pulse_onsets_samples: t.pulse_onsets.iter().map(|&o| o as u64).collect(),
                polarity_pattern: t.polarity_pattern.clone(),
                site_xyz_mm: t.site_mm,
            })
            .collect(),
    }
}

/// Write a session into `dir` as `session.toml` + `signal.f32`.
/// Returns the manifest path.
pub fn save_session(session: &Session, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let raw_name = "signal.f32";
    let manifest = manifest_from_session(session, raw_name);

    let mut raw = fs::File::create(dir.join(raw_name))?;
    let mut bytes: Vec<u8> =
        Vec::with_capacity(session.buffer.len() * session.buffer.n_channels() * 4);
    for ch in session.buffer.channels() {
        for &v in ch {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    raw.write_all(&bytes)?;

    let manifest_path = dir.join("session.toml");
    fs::write(&manifest_path, manifest.to_toml())?;
    Ok(manifest_path)
}

/// Resolve a session argument: either a manifest file or a directory
/// containing `session.toml`.
pub fn resolve_manifest_path(arg: &Path) -> PathBuf {
    if arg.is_dir() {
        arg.join("session.toml")
    } else {
        arg.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn demo_session(fs: f64) -> Session {
        let n = (fs * 4.0) as usize;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 * 0.001).sin() * 40.0).collect();
        let buffer = SignalBuffer::new(
            fs,
            vec!["ch0".into(), "ch1".into()],
            vec![samples.clone(), samples],
        )
        .unwrap();
        let train = StimTrain::regular(
            EpKind::Dcr,
            9.0,
            20,
            1.0,
            fs,
            (fs * 0.5) as usize,
            [1.0, 2.0, 3.0],
        );
        Session {
            buffer,
            trains: vec![train],
            geometry: Some(ElectrodeGeometry {
                positions_mm: vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]],
                des_sites: vec![("site_a".into(), [21.0, 0.0, 0.0])],
            }),
            patient_label: "demo".into(),
            processing: vec![],
        }
    }

    #[test]
    fn round_trip_preserves_channel_count_and_rate() {
        let dir = tempdir().unwrap();
        let session = demo_session(19200.0);
        let path = save_session(&session, dir.path()).unwrap();
        let loaded = load_session(&path).unwrap();
        assert_eq!(loaded.buffer.n_channels(), 2);
        assert_eq!(loaded.buffer.fs(), 19200.0);
        assert_eq!(loaded.trains.len(), 1);
        assert_eq!(
            loaded.trains[0].pulse_onsets,
            session.trains[0].pulse_onsets
        );
    }

    #[test]
    fn reserialization_is_bit_identical() {
        let dir = tempdir().unwrap();
        let session = demo_session(19200.0);
        let path = save_session(&session, dir.path()).unwrap();
        let original = fs::read_to_string(&path).unwrap();

        let loaded = load_session(&path).unwrap();
        let again = manifest_from_session(&loaded, "signal.f32").to_toml();
        assert_eq!(original, again);
    }

    #[test]
    fn truncated_raw_file_is_rejected() {
        let dir = tempdir().unwrap();
        let session = demo_session(19200.0);
        let path = save_session(&session, dir.path()).unwrap();

        // chop 10% off the raw file
        let raw_path = dir.path().join("signal.f32");
        let bytes = fs::read(&raw_path).unwrap();
        fs::write(&raw_path, &bytes[..bytes.len() * 9 / 10]).unwrap();

        match load_session(&path) {
            Err(Error::TruncatedData(_)) => {}
            other => panic!("expected TruncatedData, got {other:?}"),
        }
    }

    #[test]
    fn missing_raw_file_is_rejected() {
        let dir = tempdir().unwrap();
        let session = demo_session(19200.0);
        let path = save_session(&session, dir.path()).unwrap();
        fs::remove_file(dir.path().join("signal.f32")).unwrap();
        assert!(matches!(load_session(&path), Err(Error::MissingFile(_))));
    }

    #[test]
    fn corrupt_manifests_never_produce_a_session() {
        let dir = tempdir().unwrap();
        let session = demo_session(19200.0);
        let path = save_session(&session, dir.path()).unwrap();
        let good = fs::read_to_string(&path).unwrap();

        let corruptions = [
            good.replace("fs_hz = 19200.0", "fs_hz = -19200.0"),
            good.replace("f_des_hz = 9.0", "f_des_hz = 0.0"),
            good.replace("pulse_width_ms = 1.0", "pulse_width_ms = -1.0"),
            good.replace("sample_format = \"f32le\"", "sample_format = \"i16be\""),
            good.replace("kind = \"DCR\"", "kind = \"XXX\""),
            "fs_hz = }{ not toml".to_string(),
        ];
        for text in corruptions {
            fs::write(&path, &text).unwrap();
            assert!(
                load_session(&path).is_err(),
                "accepted corrupt manifest: {text:.60}"
            );
        }

        // unordered pulses
        let mut m = Manifest::from_toml(&good).unwrap();
        m.trains[0].pulse_onsets_samples.swap(0, 1);
        fs::write(&path, m.to_toml()).unwrap();
        assert!(load_session(&path).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn fuzzed_manifests_never_yield_an_invalid_session(
            pos in 0usize..1000,
            replacement in proptest::prelude::prop::char::range('\u{21}', '\u{7e}'),
        ) {
            // byte-level corruption of a valid manifest: loading must either
            // fail cleanly or produce a session that still validates
            let dir = tempdir().unwrap();
            let path = save_session(&demo_session(19200.0), dir.path()).unwrap();
            let mut text = fs::read_to_string(&path).unwrap();
            let idx = pos % text.len();
            if text.is_char_boundary(idx) {
                let end = (idx + 1..=text.len()).find(|&e| text.is_char_boundary(e)).unwrap();
                text.replace_range(idx..end, &replacement.to_string());
            }
            fs::write(&path, &text).unwrap();
            if let Ok(session) = load_session(&path) {
                proptest::prop_assert!(session.validate().is_ok());
            }
        }
    }

    #[test]
    fn fs_19200_loads_with_that_rate() {
        let dir = tempdir().unwrap();
        let path = save_session(&demo_session(19200.0), dir.path()).unwrap();
        assert_eq!(load_session(&path).unwrap().buffer.fs(), 19200.0);
    }
}

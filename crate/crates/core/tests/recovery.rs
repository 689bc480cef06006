//! End-to-end oracle runs: the generator's clean template must come back
//! out of the full chain within the noise bounds the averaging law allows.

use epkit::epochs;
use epkit::pipeline::{self, PipelineConfig};
use epkit::signal::{EpKind, StimTrain};
use epkit::synth::{self, NoiseSpec};

const FS: f64 = 19200.0;
const WINDOW: (f64, f64) = (-40.0, 105.0);

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn line_noise_only_recording_recovers_the_template() {
    // 64 pulses, 50 uV hum, no white noise: preprocess + average lands
    // within 5 uV RMS of the clean template
    let spec = synth::dcr_preset();
    let train = StimTrain::regular(EpKind::Dcr, 9.0, 64, 1.0, FS, (0.5 * FS) as usize, [0.0; 3]);
    let noise = NoiseSpec {
        white_sigma_uv: 0.0,
        line_50hz_amp_uv: 50.0,
        line_phase_rad: 1.3,
        artifact_amp_uv: 2000.0,
        rng_seed: 0,
    };
    let (session, _) = synth::synth_recording(&spec, &train, &noise, FS, 8.0, 1).unwrap();
    let cfg = PipelineConfig::default();
    let (clean, _) = pipeline::preprocess_session(&session, &cfg).unwrap();
    let (_, ep) = pipeline::extract_and_average(&clean, "ch0", 0, &cfg).unwrap();
    assert_eq!(ep.n_averaged, 64);

    let (template, _) = synth::synth_canonical_ep(&spec, FS, WINDOW).unwrap();
    let diff: Vec<f64> = ep
        .trace
        .iter()
        .zip(template.trace.iter())
        .map(|(a, b)| a - b)
        .collect();
    let err = rms(&diff);
    assert!(
        err < 5.0,
        "recovered EP deviates {err:.2} uV RMS from the template"
    );
}

#[test]
fn white_noise_residual_follows_the_averaging_law() {
    // sigma 20 uV, n = 64, no hum, no artifact: extraction + averaging
    // leaves sigma/sqrt(n) = 2.5 uV RMS of residual noise (within 20%).
    // The clean expectation of the chain (including the tails the 9 Hz
    // spacing folds into every epoch) is the zero-noise run of the same
    // generator; by linearity the difference against it is pure averaged
    // noise.
    let spec = synth::dcr_preset();
    let train = StimTrain::regular(EpKind::Dcr, 9.0, 64, 1.0, FS, (0.5 * FS) as usize, [0.0; 3]);
    let average_of = |noise: &NoiseSpec| -> Vec<f64> {
        let (session, _) = synth::synth_recording(&spec, &train, noise, FS, 8.0, 1).unwrap();
        let set =
            epochs::extract_epochs(&session.buffer, &session.trains[0], "ch0", WINDOW).unwrap();
        epochs::average_epochs(&set).unwrap().trace
    };
    let quiet = NoiseSpec {
        white_sigma_uv: 0.0,
        line_50hz_amp_uv: 0.0,
        line_phase_rad: 0.0,
        artifact_amp_uv: 0.0,
        rng_seed: 0,
    };
    let clean_expectation = average_of(&quiet);

    let mut errs = Vec::new();
    for seed in 0..5 {
        let noisy = average_of(&NoiseSpec {
            white_sigma_uv: 20.0,
            rng_seed: seed,
            ..quiet
        });
        let diff: Vec<f64> = noisy
            .iter()
            .zip(clean_expectation.iter())
            .map(|(a, b)| a - b)
            .collect();
        errs.push(rms(&diff));
    }
    let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
    let expected = 20.0 / 64f64.sqrt();
    assert!(
        (mean_err - expected).abs() <= 0.2 * expected,
        "residual RMS {mean_err:.3} vs sigma/sqrt(n) {expected:.3} (runs: {errs:?})"
    );
}

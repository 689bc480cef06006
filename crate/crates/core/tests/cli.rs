//! End-to-end CLI tests: the full command chain on generated sessions,
//! byte-level determinism, config precedence and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn epkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epkit"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = epkit().args(args).output().expect("failed to spawn epkit");
    assert!(
        out.status.success(),
        "epkit {args:?} exited {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    epkit()
        .args(args)
        .output()
        .expect("failed to spawn epkit")
        .status
        .code()
        .unwrap_or(-1)
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("epkit-cli-{}-{name}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn full_chain_produces_consistent_artifacts() {
    let dir = workdir("chain");
    let raw_dcr = dir.join("raw_dcr");
    let raw_acep = dir.join("raw_acep");
    run_ok(&[
        "simulate",
        "--preset",
        "dcr",
        "--pulses",
        "16",
        "--seed",
        "11",
        "--out",
        &p(&raw_dcr),
    ]);
    run_ok(&[
        "simulate",
        "--preset",
        "acep",
        "--delay-ms",
        "2.4",
        "--pulses",
        "16",
        "--seed",
        "12",
        "--out",
        &p(&raw_acep),
    ]);
    assert!(raw_dcr.join("session.toml").is_file());
    assert!(raw_dcr.join("signal.f32").is_file());
    let truth = fs::read_to_string(raw_dcr.join("truth.txt")).unwrap();
    assert!(truth.contains("true_t_zc1_ms"));
    assert!(truth.contains("n1_kernel"));

    let clean_dcr = dir.join("clean_dcr");
    let clean_acep = dir.join("clean_acep");
    run_ok(&[
        "preprocess",
        "--session",
        &p(&raw_dcr),
        "--out",
        &p(&clean_dcr),
    ]);
    run_ok(&[
        "preprocess",
        "--session",
        &p(&raw_acep),
        "--out",
        &p(&clean_acep),
    ]);
    let manifest = fs::read_to_string(clean_dcr.join("session.toml")).unwrap();
    assert!(manifest.contains("processing = [\"excise\", \"line50\", \"bandpass\"]"));

    // epochs export
    let ep_file = dir.join("ep.txt");
    run_ok(&[
        "epochs",
        "--session",
        &p(&clean_dcr),
        "--channel",
        "ch0",
        "--out",
        &p(&ep_file),
    ]);
    let ep_text = fs::read_to_string(&ep_file).unwrap();
    assert!(ep_text.contains("# kind = DCR"));
    assert!(ep_text.contains("# n_averaged = 16"));
    assert!(ep_text.contains("time_ms\tamplitude_uv"));

    // metrics tables
    let m_dcr = dir.join("m_dcr.txt");
    let m_acep = dir.join("m_acep.txt");
    run_ok(&["metrics", "--session", &p(&clean_dcr), "--out", &p(&m_dcr)]);
    run_ok(&[
        "metrics",
        "--session",
        &p(&clean_acep),
        "--channel",
        "ch0",
        "--out",
        &p(&m_acep),
    ]);
    let table = fs::read_to_string(&m_dcr).unwrap();
    assert!(table.starts_with("channel\ttrain\tkind\t"));
    assert!(table.contains("t_zc1_ms"));
    assert_eq!(table.lines().count(), 2, "one header + one row");

    // tfr on the cleaned session
    let tf = dir.join("tf.txt");
    run_ok(&[
        "tfr",
        "--session",
        &p(&clean_dcr),
        "--channel",
        "ch0",
        "--out",
        &p(&tf),
    ]);
    let tf_text = fs::read_to_string(&tf).unwrap();
    assert!(tf_text.contains("# gamma_bin_hz = 50.000000"));
    assert!(tf_text.contains("# gamma_mean_db"));

    // velocity from the two tables
    let vel = dir.join("vel.txt");
    run_ok(&[
        "velocity",
        "--dcr",
        &p(&m_dcr),
        "--acep",
        &p(&m_acep),
        "--distance-mm",
        "21",
        "--diameter-um",
        "0.7",
        "--out",
        &p(&vel),
    ]);
    let vel_text = fs::read_to_string(&vel).unwrap();
    assert!(vel_text.contains("# n_pairs = 1"));
    assert!(vel_text.contains("# hursh_predicted_delay_ms(diameter_um=0.700000) = 5.000000"));

    // recovered delay close to the injected 2.4 ms
    let delay: f64 = vel_text
        .lines()
        .find(|l| l.starts_with("0\t"))
        .and_then(|l| l.split('\t').nth(2))
        .unwrap()
        .parse()
        .unwrap();
    assert!((delay - 2.4).abs() < 0.3, "recovered delay {delay} ms");

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn compare_runs_the_test_battery() {
    let dir = workdir("compare");
    // build cohort-style tables from nine simulated patients' metrics would
    // be slow here; synthesize tables directly in the documented format
    let mut a = String::from("t_zc1_ms\tw_n1_ms\tn1_maxamp_uv\n");
    let mut b = String::from("t_zc1_ms\tw_n1_ms\tn1_maxamp_uv\n");
    for i in 0..9 {
        let base = 5.0 + 0.3 * i as f64;
        a.push_str(&format!(
            "{:.6}\t{:.6}\t{:.6}\n",
            base,
            50.0 + i as f64,
            -120.0 - 5.0 * i as f64
        ));
        b.push_str(&format!(
            "{:.6}\t{:.6}\t{:.6}\n",
            base + 1.85 + 0.07 * (i % 3) as f64,
            34.0 + 0.8 * i as f64,
            -110.0 - 4.0 * i as f64
        ));
    }
    let a_path = dir.join("a.txt");
    let b_path = dir.join("b.txt");
    fs::write(&a_path, &a).unwrap();
    fs::write(&b_path, &b).unwrap();

    // paired t, one-tailed in the observed direction
    let out = run_ok(&[
        "compare",
        "--a",
        &p(&a_path),
        "--b",
        &p(&b_path),
        "--field",
        "t_zc1_ms",
        "--test",
        "paired-t",
        "--tails",
        "one",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("test_name = paired-t"));
    assert!(
        text.contains("tails = less"),
        "onsets of a precede b: {text}"
    );
    assert!(
        text.contains("shapiro_w = "),
        "normality precheck missing: {text}"
    );
    assert!(text.contains("n = 9"));

    // rank-sum
    let out = run_ok(&[
        "compare",
        "--a",
        &p(&a_path),
        "--b",
        &p(&b_path),
        "--field",
        "t_zc1_ms",
        "--test",
        "rank-sum",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rank-sum-exact"));

    // shapiro on one column
    let out = run_ok(&[
        "compare",
        "--a",
        &p(&a_path),
        "--field",
        "w_n1_ms",
        "--test",
        "shapiro",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("test_name = shapiro-wilk"));

    // regression of width on amplitude within one table
    let out = run_ok(&[
        "compare",
        "--a",
        &p(&a_path),
        "--field-x",
        "n1_maxamp_uv",
        "--field-y",
        "w_n1_ms",
        "--test",
        "regression",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("test_name = linear-regression"));
    assert!(text.contains("slope = "));
    assert!(text.contains("r_squared = "));

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = workdir("determinism");
    let mut artifacts: Vec<(PathBuf, PathBuf)> = Vec::new();

    for pass in ["one", "two"] {
        let root = dir.join(pass);
        let raw = root.join("raw");
        let clean = root.join("clean");
        run_ok(&[
            "simulate",
            "--preset",
            "acep",
            "--delay-ms",
            "2.4",
            "--pulses",
            "12",
            "--seed",
            "7",
            "--channels",
            "2",
            "--out",
            &p(&raw),
        ]);
        run_ok(&["preprocess", "--session", &p(&raw), "--out", &p(&clean)]);
        run_ok(&[
            "epochs",
            "--session",
            &p(&clean),
            "--channel",
            "ch1",
            "--out",
            &p(&root.join("ep.txt")),
        ]);
        run_ok(&[
            "metrics",
            "--session",
            &p(&clean),
            "--out",
            &p(&root.join("m.txt")),
        ]);
        run_ok(&[
            "tfr",
            "--session",
            &p(&clean),
            "--channel",
            "ch0",
            "--out",
            &p(&root.join("tf.txt")),
        ]);
    }
    for rel in [
        "raw/session.toml",
        "raw/signal.f32",
        "raw/truth.txt",
        "clean/session.toml",
        "clean/signal.f32",
        "ep.txt",
        "m.txt",
        "tf.txt",
    ] {
        artifacts.push((dir.join("one").join(rel), dir.join("two").join(rel)));
    }
    for (a, b) in artifacts {
        let bytes_a = fs::read(&a).unwrap_or_else(|_| panic!("missing {}", a.display()));
        let bytes_b = fs::read(&b).unwrap();
        assert_eq!(bytes_a, bytes_b, "outputs differ for {}", a.display());
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = workdir("config");
    let raw = dir.join("raw");
    run_ok(&[
        "simulate",
        "--preset",
        "dcr",
        "--pulses",
        "8",
        "--seed",
        "3",
        "--out",
        &p(&raw),
    ]);

    // config narrows the epoch window; flag narrows it further
    let cfg_path = dir.join("cfg.toml");
    fs::write(&cfg_path, "epoch_window_ms = [-30.0, 90.0]\n").unwrap();
    let out = run_ok(&[
        "epochs",
        "--session",
        &p(&raw),
        "--channel",
        "ch0",
        "--config",
        &p(&cfg_path),
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        text.contains("window_ms = [-30.000000, 90.000000]"),
        "{text}"
    );

    let out = run_ok(&[
        "epochs",
        "--session",
        &p(&raw),
        "--channel",
        "ch0",
        "--config",
        &p(&cfg_path),
        "--window-ms",
        "-35,70",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        text.contains("window_ms = [-35.000000, 70.000000]"),
        "{text}"
    );

    // unknown config keys are rejected
    fs::write(&cfg_path, "unknown_key = 3\n").unwrap();
    assert_eq!(
        exit_code(&[
            "epochs",
            "--session",
            &p(&raw),
            "--channel",
            "ch0",
            "--config",
            &p(&cfg_path)
        ]),
        1
    );
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn tfr_requires_a_cleaned_session() {
    let dir = workdir("dirty");
    let raw = dir.join("raw");
    run_ok(&[
        "simulate",
        "--preset",
        "dcr",
        "--pulses",
        "12",
        "--seed",
        "9",
        "--out",
        &p(&raw),
    ]);
    assert_eq!(
        exit_code(&["tfr", "--session", &p(&raw), "--channel", "ch0"]),
        1,
        "tfr must refuse sessions without line-noise removal"
    );
    let out = epkit()
        .args([
            "tfr",
            "--session",
            &p(&raw),
            "--channel",
            "ch0",
            "--allow-dirty",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "--allow-dirty must override");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = workdir("exitcodes");
    // 1: usage
    assert_eq!(exit_code(&["frobnicate"]), 1);
    assert_eq!(
        exit_code(&["simulate", "--preset", "dcr"]),
        1,
        "no --out and no $EPKIT_OUT"
    );

    // 2: data error (missing session)
    assert_eq!(
        exit_code(&[
            "metrics",
            "--session",
            "/nonexistent/sess",
            "--out",
            "/tmp/x.txt"
        ]),
        2
    );

    // 2: truncated raw file
    let raw = dir.join("raw");
    run_ok(&[
        "simulate",
        "--preset",
        "dcr",
        "--pulses",
        "8",
        "--seed",
        "2",
        "--out",
        &p(&raw),
    ]);
    let bytes = fs::read(raw.join("signal.f32")).unwrap();
    fs::write(raw.join("signal.f32"), &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(
        exit_code(&[
            "metrics",
            "--session",
            &p(&raw),
            "--out",
            &p(&dir.join("m.txt"))
        ]),
        2
    );

    // 3: numeric failure (constant differences -> zero variance)
    let a_path = dir.join("a.txt");
    let b_path = dir.join("b.txt");
    fs::write(&a_path, "v\n1.0\n2.0\n3.0\n").unwrap();
    fs::write(&b_path, "v\n2.0\n3.0\n4.0\n").unwrap();
    assert_eq!(
        exit_code(&[
            "compare",
            "--a",
            &p(&a_path),
            "--b",
            &p(&b_path),
            "--field",
            "v",
            "--test",
            "paired-t"
        ]),
        3
    );
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn out_dir_env_is_honored() {
    let dir = workdir("envout");
    let out = epkit()
        .args([
            "simulate", "--preset", "dcr", "--pulses", "8", "--seed", "4",
        ])
        .env("EPKIT_OUT", dir.join("via-env").as_os_str())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("via-env").join("session.toml").is_file());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_pipeline_metrics_recovers_injected_delay() {
    // the CLI-level variant of the delay round trip: simulate a pair with
    // the same kernel 2.4 ms apart, run the full chain, difference the
    // measured onsets
    let dir = workdir("roundtrip");
    let mut zc1 = Vec::new();
    for (name, delay, seed) in [("ref", "0", "21"), ("del", "2.4", "22")] {
        let raw = dir.join(format!("raw_{name}"));
        let clean = dir.join(format!("clean_{name}"));
        run_ok(&[
            "simulate",
            "--preset",
            "dcr",
            "--delay-ms",
            delay,
            "--pulses",
            "30",
            "--seed",
            seed,
            "--out",
            &p(&raw),
        ]);
        run_ok(&["preprocess", "--session", &p(&raw), "--out", &p(&clean)]);
        let m = dir.join(format!("m_{name}.txt"));
        run_ok(&["metrics", "--session", &p(&clean), "--out", &p(&m)]);
        let table = fs::read_to_string(&m).unwrap();
        let row = table.lines().nth(1).expect("one metrics row");
        let cols: Vec<&str> = row.split('\t').collect();
        // t_zc1_ms is the seventh column
        zc1.push(cols[6].parse::<f64>().unwrap());
    }
    let recovered = zc1[1] - zc1[0];
    assert!(
        (recovered - 2.4).abs() <= 0.15,
        "recovered delay {recovered} ms from onsets {zc1:?}"
    );
    fs::remove_dir_all(&dir).ok();
}

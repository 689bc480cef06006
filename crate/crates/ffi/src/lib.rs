//! C ABI for the epkit analysis chain.
//!
//! Conventions: every function returns an [`EpkStatus`]; results come back
//! through out-pointers. Sessions and evoked potentials are opaque handles
//! freed with their `_free` functions. On failure a thread-local message is
//! available from [`epk_last_error_message`] until the next failing call on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use epkit::epochs::EvokedPotential;
use epkit::error::{Error, ExitClass};
use epkit::manifest;
use epkit::metrics::{MetricConfig, RelaxationClass};
use epkit::pipeline::{self, PipelineConfig};
use epkit::signal::{EpKind, Session, StimTrain};
use epkit::stats::{self, TTestMode, Tails};
use epkit::synth::{self, NoiseSpec};

/// Status codes; zero is success, anything else names the failure class.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DataError = 4,
    NumericError = 5,
}

/// Response kind tag.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpkKind {
    Dcr = 0,
    Acep = 1,
}

/// Test sidedness. One-sided alternatives state the first sample's
/// direction relative to the second.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpkTails {
    Two = 0,
    Less = 1,
    Greater = 2,
}

/// Waveform metrics; missing optional quantities come back as NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpkMetrics {
    pub t_zc1_ms: f64,
    pub t_zc2_ms: f64,
    pub w_n1_ms: f64,
    pub whq_n1_ms: f64,
    pub n1_latency_ms: f64,
    pub n1_maxamp_uv: f64,
    pub area_40_100_uvms: f64,
    pub min_slope_50_80_uv_per_ms: f64,
    /// 1 when an after-positivity follows the N1 (negative minimum slope).
    pub after_positivity: i32,
    /// 1 when the polarity normalization flipped the trace.
    pub inverted: i32,
}

/// Statistic, p-value and context for one test; df is NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpkTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
    pub n: usize,
}

/// Least-squares fit summary.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpkRegression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Opaque recording session.
pub struct EpkSession {
    session: Session,
}

/// Opaque averaged evoked potential.
pub struct EpkEvoked {
    ep: EvokedPotential,
    metric_config: MetricConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(e: &Error) -> EpkStatus {
    let message = CString::new(e.to_string()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
    match e.exit_class() {
        ExitClass::Usage => EpkStatus::InvalidArgument,
        ExitClass::Data => EpkStatus::DataError,
        ExitClass::Numeric => EpkStatus::NumericError,
    }
}

fn set_error_text(status: EpkStatus, text: &str) -> EpkStatus {
    let message = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
    status
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn epk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
/// The returned session must be released with [`epk_session_free`].
#[no_mangle]
pub unsafe extern "C" fn epk_session_load(
    path: *const c_char,
    out: *mut *mut EpkSession,
) -> EpkStatus {
    if path.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => return set_error_text(EpkStatus::InvalidUtf8, "path is not UTF-8"),
    };
    match manifest::load_session(&manifest::resolve_manifest_path(Path::new(path))) {
        Ok(session) => {
            *out = Box::into_raw(Box::new(EpkSession { session }));
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Generate a synthetic session from the built-in kernel presets.
/// `delay_ms` overrides the preset conduction delay when non-negative.
///
/// # Safety
/// `out` must be a valid pointer; release the session with
/// [`epk_session_free`].
#[no_mangle]
pub unsafe extern "C" fn epk_session_simulate(
    kind: EpkKind,
    delay_ms: f64,
    pulses: u32,
    seed: u64,
    out: *mut *mut EpkSession,
) -> EpkStatus {
    if out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let mut spec = match kind {
        EpkKind::Dcr => synth::dcr_preset(),
        EpkKind::Acep => synth::acep_preset(),
    };
    if delay_ms >= 0.0 {
        spec.conduction_delay_ms = delay_ms;
    }
    let fs = 19200.0;
    let f_des = 9.0;
    let train = StimTrain::regular(
        spec.kind,
        f_des,
        pulses as usize,
        1.0,
        fs,
        (0.5 * fs) as usize,
        [0.0; 3],
    );
    let duration = 0.5 + pulses as f64 / f_des + 0.3;
    let noise = NoiseSpec {
        rng_seed: seed,
        ..NoiseSpec::default()
    };
    match synth::synth_recording(&spec, &train, &noise, fs, duration, 1) {
        Ok((session, _)) => {
            *out = Box::into_raw(Box::new(EpkSession { session }));
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Artifact excision, 50 Hz template subtraction and band-pass with default
/// settings; produces a new session handle.
///
/// # Safety
/// `session` must be a live handle from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epk_session_preprocess(
    session: *const EpkSession,
    out: *mut *mut EpkSession,
) -> EpkStatus {
    if session.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let cfg = PipelineConfig::default();
    match pipeline::preprocess_session(&(*session).session, &cfg) {
        Ok((clean, _)) => {
            *out = Box::into_raw(Box::new(EpkSession { session: clean }));
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Write the session as `session.toml` + `signal.f32` under `dir`.
///
/// # Safety
/// `session` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn epk_session_save(
    session: *const EpkSession,
    dir: *const c_char,
) -> EpkStatus {
    if session.is_null() || dir.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let dir = match CStr::from_ptr(dir).to_str() {
        Ok(s) => s,
        Err(_) => return set_error_text(EpkStatus::InvalidUtf8, "path is not UTF-8"),
    };
    match manifest::save_session(&(*session).session, Path::new(dir)) {
        Ok(_) => EpkStatus::Ok,
        Err(e) => set_error(&e),
    }
}

/// # Safety
/// `session` must be a live handle or NULL; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn epk_session_free(session: *mut EpkSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `session` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epk_session_fs_hz(session: *const EpkSession, out: *mut f64) -> EpkStatus {
    if session.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    *out = (*session).session.buffer.fs();
    EpkStatus::Ok
}

/// # Safety
/// `session` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epk_session_channel_count(
    session: *const EpkSession,
    out: *mut usize,
) -> EpkStatus {
    if session.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    *out = (*session).session.buffer.n_channels();
    EpkStatus::Ok
}

/// # Safety
/// `session` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epk_session_train_count(
    session: *const EpkSession,
    out: *mut usize,
) -> EpkStatus {
    if session.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    *out = (*session).session.trains.len();
    EpkStatus::Ok
}

/// Extract, baseline-correct and average the epochs of one channel/train.
///
/// # Safety
/// `session` must be a live handle; `out` a valid pointer. Release the
/// result with [`epk_evoked_free`].
#[no_mangle]
pub unsafe extern "C" fn epk_session_average(
    session: *const EpkSession,
    channel_index: usize,
    train_index: usize,
    out: *mut *mut EpkEvoked,
) -> EpkStatus {
    if session.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let s = &(*session).session;
    if channel_index >= s.buffer.n_channels() {
        return set_error_text(EpkStatus::InvalidArgument, "channel index out of range");
    }
    let channel = s.buffer.channel_ids()[channel_index].clone();
    let cfg = PipelineConfig::default();
    match pipeline::extract_and_average(s, &channel, train_index, &cfg) {
        Ok((_, ep)) => {
            let metric_config = cfg.metric_config(&s.trains[train_index]);
            *out = Box::into_raw(Box::new(EpkEvoked { ep, metric_config }));
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// # Safety
/// `evoked` must be a live handle or NULL; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn epk_evoked_free(evoked: *mut EpkEvoked) {
    if !evoked.is_null() {
        drop(Box::from_raw(evoked));
    }
}

/// Borrow the trace. The pointer belongs to the handle and stays valid until
/// `epk_evoked_free`.
///
/// # Safety
/// All pointers must be valid; `evoked` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn epk_evoked_trace(
    evoked: *const EpkEvoked,
    data: *mut *const f64,
    len: *mut usize,
) -> EpkStatus {
    if evoked.is_null() || data.is_null() || len.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let ep = &(*evoked).ep;
    *data = ep.trace.as_ptr();
    *len = ep.trace.len();
    EpkStatus::Ok
}

/// Time of the first trace sample relative to the pulse onset, ms.
///
/// # Safety
/// `evoked` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epk_evoked_start_ms(evoked: *const EpkEvoked, out: *mut f64) -> EpkStatus {
    if evoked.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    *out = (*evoked).ep.time_ms(0);
    EpkStatus::Ok
}

/// # Safety
/// `evoked` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epk_evoked_fs_hz(evoked: *const EpkEvoked, out: *mut f64) -> EpkStatus {
    if evoked.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    *out = (*evoked).ep.fs;
    EpkStatus::Ok
}

/// Full waveform metrics (200 Hz zero-phase low-pass applied internally).
///
/// # Safety
/// `evoked` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epk_evoked_metrics(
    evoked: *const EpkEvoked,
    out: *mut EpkMetrics,
) -> EpkStatus {
    if evoked.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let handle = &*evoked;
    match epkit::metrics::compute_metrics(&handle.ep, &handle.metric_config) {
        Ok(m) => {
            let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
            *out = EpkMetrics {
                t_zc1_ms: opt(m.t_zc1_ms),
                t_zc2_ms: opt(m.t_zc2_ms),
                w_n1_ms: opt(m.w_n1_ms),
                whq_n1_ms: opt(m.whq_n1_ms),
                n1_latency_ms: m.n1_latency_ms,
                n1_maxamp_uv: m.n1_maxamp_uv,
                area_40_100_uvms: m.area_40_100_uvms,
                min_slope_50_80_uv_per_ms: m.min_slope_50_80,
                after_positivity: (m.relaxation_class == RelaxationClass::AfterPositivity) as i32,
                inverted: m.inverted as i32,
            };
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Predicted conduction delay (ms) for a myelinated fiber:
/// distance / (6 x diameter).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epk_hursh_predicted_delay_ms(
    diameter_um: f64,
    distance_mm: f64,
    out: *mut f64,
) -> EpkStatus {
    if out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    match epkit::conduction::hursh_predicted_delay(diameter_um, distance_mm) {
        Ok(v) => {
            *out = v;
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Straight-line conduction velocity (m/s) from distance (mm) and a
/// positive delay (ms).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epk_velocity_from_delay_mps(
    distance_mm: f64,
    delay_ms: f64,
    out: *mut f64,
) -> EpkStatus {
    if out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    match epkit::conduction::velocity_from_delay(distance_mm, delay_ms) {
        Ok(v) => {
            *out = v;
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

fn tails_of(t: EpkTails) -> Tails {
    match t {
        EpkTails::Two => Tails::Two,
        EpkTails::Less => Tails::Less,
        EpkTails::Greater => Tails::Greater,
    }
}

fn fill_test(out: *mut EpkTestResult, r: &stats::TestResult) {
    unsafe {
        *out = EpkTestResult {
            statistic: r.statistic,
            p_value: r.p_value,
            df: r.df.unwrap_or(f64::NAN),
            n: r.n,
        };
    }
}

/// Paired Student t on two equal-length arrays.
///
/// # Safety
/// `a` and `b` must point to `len` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epk_paired_t_test(
    a: *const f64,
    b: *const f64,
    len: usize,
    tails: EpkTails,
    out: *mut EpkTestResult,
) -> EpkStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let a = std::slice::from_raw_parts(a, len);
    let b = std::slice::from_raw_parts(b, len);
    match stats::t_test(a, Some(b), TTestMode::Paired, tails_of(tails)) {
        Ok(r) => {
            fill_test(out, &r);
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Wilcoxon-Mann-Whitney rank test; the statistic is U of the first sample.
///
/// # Safety
/// `a`/`b` must point to `na`/`nb` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epk_rank_sum(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    tails: EpkTails,
    out: *mut EpkTestResult,
) -> EpkStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let a = std::slice::from_raw_parts(a, na);
    let b = std::slice::from_raw_parts(b, nb);
    match stats::rank_sum(a, b, tails_of(tails)) {
        Ok(r) => {
            fill_test(out, &r);
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Shapiro-Wilk normality test (upper-tail p), 3 <= n <= 50.
///
/// # Safety
/// `x` must point to `n` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epk_shapiro_wilk(
    x: *const f64,
    n: usize,
    out: *mut EpkTestResult,
) -> EpkStatus {
    if x.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let x = std::slice::from_raw_parts(x, n);
    match stats::shapiro_wilk(x) {
        Ok(r) => {
            fill_test(out, &r);
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Ordinary least squares of y on x.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn epk_linear_regression(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut EpkRegression,
) -> EpkStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        return set_error_text(EpkStatus::NullPointer, "null pointer");
    }
    let x = std::slice::from_raw_parts(x, n);
    let y = std::slice::from_raw_parts(y, n);
    match stats::linear_regression(x, y) {
        Ok(r) => {
            *out = EpkRegression {
                slope: r.slope,
                intercept: r.intercept,
                r_squared: r.r_squared,
                n: r.n,
            };
            EpkStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

// EpKind is not exposed directly; keep the compiler aware the import is the
// canonical mapping for EpkKind.
impl From<EpkKind> for EpKind {
    fn from(k: EpkKind) -> Self {
        match k {
            EpkKind::Dcr => EpKind::Dcr,
            EpkKind::Acep => EpKind::Acep,
        }
    }
}

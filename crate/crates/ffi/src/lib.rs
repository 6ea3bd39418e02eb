//! C ABI for the double-cavity sweep library.
//!
//! Every function returns a status code: 0 on success, 2 for invalid input,
//! 3 for numerical failure. Results come back through out-pointers. Handles
//! are opaque and must be released with the matching `_free` function.
//! `dc_last_error` retrieves the message for the most recent failure on the
//! calling thread. The matching declarations live in
//! `include/double_cavity.h`.

use double_cavity::couplings::fit_crossing_params;
use double_cavity::dynamics::Scheme;
use double_cavity::modes::{membrane_reflectivity, strength_for_reflectivity};
use double_cavity::observables::{
    landau_zener_probability, relativistic_correction_ratio, validity_ratio, SweepRecord,
};
use double_cavity::scenario::{prepare, run_scenario, ScenarioSpec};
use double_cavity::Error;
use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

pub const DC_OK: c_int = 0;
pub const DC_INVALID: c_int = 2;
pub const DC_NUMERICAL: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(e: &Error) -> c_int {
    LAST_ERROR.with(|m| *m.borrow_mut() = e.to_string());
    e.exit_code() as c_int
}

fn fail_invalid(msg: &str) -> c_int {
    LAST_ERROR.with(|m| *m.borrow_mut() = msg.to_string());
    DC_INVALID
}

fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail_invalid("internal panic"),
    }
}

/// Copy the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the untruncated length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (length query).
#[no_mangle]
pub unsafe extern "C" fn dc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|m| {
        let msg = m.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

unsafe fn write_out(out: *mut f64, value: f64) -> c_int {
    if out.is_null() {
        return fail_invalid("null output pointer");
    }
    *out = value;
    DC_OK
}

/// Membrane intensity reflectivity at wavenumber `k`.
///
/// # Safety
/// `out` must be a valid pointer to one f64.
#[no_mangle]
pub unsafe extern "C" fn dc_reflectivity(k: f64, strength: f64, out: *mut f64) -> c_int {
    match membrane_reflectivity(k, strength) {
        Ok(r) => write_out(out, r),
        Err(e) => fail(&e),
    }
}

/// Membrane strength reproducing reflectivity `r` at wavenumber `k`.
///
/// # Safety
/// `out` must be a valid pointer to one f64.
#[no_mangle]
pub unsafe extern "C" fn dc_strength_for_reflectivity(k: f64, r: f64, out: *mut f64) -> c_int {
    match strength_for_reflectivity(k, r) {
        Ok(a) => write_out(out, a),
        Err(e) => fail(&e),
    }
}

/// Landau-Zener survival probability for a crossing swept at `speed`.
///
/// # Safety
/// `out` must be a valid pointer to one f64.
#[no_mangle]
pub unsafe extern "C" fn dc_lz_probability(
    delta: f64,
    gamma: f64,
    speed: f64,
    out: *mut f64,
) -> c_int {
    write_out(out, landau_zener_probability(delta, gamma, speed))
}

/// Size of the leading relativistic correction relative to the kept terms.
///
/// # Safety
/// `out` must be a valid pointer to one f64.
#[no_mangle]
pub unsafe extern "C" fn dc_relativistic_correction_ratio(
    speed: f64,
    refractive_index: f64,
    out: *mut f64,
) -> c_int {
    write_out(out, relativistic_correction_ratio(speed, refractive_index))
}

/// Fitted avoided-crossing parameters. Opaque.
pub struct DcCrossing(double_cavity::couplings::CrossingParams);

/// Fit the two-level parameters of crossing pair `pair` and return a handle.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_fit(
    total_length: f64,
    strength: f64,
    pair: usize,
    fit_tolerance: f64,
    out: *mut *mut DcCrossing,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail_invalid("null output pointer");
        }
        match fit_crossing_params(total_length, strength, pair, fit_tolerance) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(DcCrossing(p)));
                DC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `h` must be a live handle from `dc_crossing_fit`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_delta(h: *const DcCrossing, out: *mut f64) -> c_int {
    if h.is_null() {
        return fail_invalid("null handle");
    }
    write_out(out, (*h).0.delta)
}

/// # Safety
/// `h` must be a live handle from `dc_crossing_fit`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_gamma(h: *const DcCrossing, out: *mut f64) -> c_int {
    if h.is_null() {
        return fail_invalid("null handle");
    }
    write_out(out, (*h).0.gamma)
}

/// # Safety
/// `h` must be a live handle from `dc_crossing_fit`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_omega_av(h: *const DcCrossing, out: *mut f64) -> c_int {
    if h.is_null() {
        return fail_invalid("null handle");
    }
    write_out(out, (*h).0.omega_av)
}

/// Classicality ratio at displacement `q` for a sweep at `speed`.
///
/// # Safety
/// `h` must be a live handle from `dc_crossing_fit`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_validity_ratio(
    h: *const DcCrossing,
    q: f64,
    speed: f64,
    out: *mut f64,
) -> c_int {
    if h.is_null() {
        return fail_invalid("null handle");
    }
    write_out(out, validity_ratio(&(*h).0, q, speed))
}

/// # Safety
/// `h` must come from `dc_crossing_fit` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dc_crossing_free(h: *mut DcCrossing) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// A loaded scenario. Opaque.
pub struct DcScenario(double_cavity::scenario::Scenario);

/// Load and validate a TOML scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_load(
    path: *const c_char,
    out: *mut *mut DcScenario,
) -> c_int {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail_invalid("null pointer");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => return fail_invalid("path is not valid UTF-8"),
        };
        let sc = ScenarioSpec::from_path(Path::new(path)).and_then(|s| s.resolve());
        match sc {
            Ok(sc) => {
                *out = Box::into_raw(Box::new(DcScenario(sc)));
                DC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Run every configured scheme, writing CSVs and a summary into `out_dir`.
///
/// # Safety
/// `h` must be a live scenario handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_run(h: *const DcScenario, out_dir: *const c_char) -> c_int {
    guarded(|| {
        if h.is_null() || out_dir.is_null() {
            return fail_invalid("null pointer");
        }
        let dir = match CStr::from_ptr(out_dir).to_str() {
            Ok(s) => s,
            Err(_) => return fail_invalid("out_dir is not valid UTF-8"),
        };
        match run_scenario(&(*h).0, Path::new(dir)) {
            Ok(_) => DC_OK,
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `h` must come from `dc_scenario_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dc_scenario_free(h: *mut DcScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// In-memory sweep results for one scheme. Opaque.
pub struct DcSweep {
    records: Vec<SweepRecord>,
    work_energy_residual: f64,
}

/// Integrate one scheme (0 = asoe, 1 = dsoe, 2 = dfoe) of a loaded scenario
/// and keep the sampled records in memory.
///
/// # Safety
/// `h` must be a live scenario handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_run(
    h: *const DcScenario,
    scheme: c_int,
    out: *mut *mut DcSweep,
) -> c_int {
    guarded(|| {
        if h.is_null() || out.is_null() {
            return fail_invalid("null pointer");
        }
        let scheme = match scheme {
            0 => Scheme::Asoe,
            1 => Scheme::Dsoe,
            2 => Scheme::Dfoe,
            other => return fail_invalid(&format!("unknown scheme id {other}")),
        };
        let run = prepare(&(*h).0)
            .and_then(|prep| double_cavity::scenario::run_scheme(&(*h).0, &prep, scheme));
        match run {
            Ok(r) => {
                *out = Box::into_raw(Box::new(DcSweep {
                    records: r.records,
                    work_energy_residual: r.summary.work_energy_residual,
                }));
                DC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of sampled rows.
///
/// # Safety
/// `h` must be a live handle from `dc_sweep_run`.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_len(h: *const DcSweep) -> usize {
    if h.is_null() {
        return 0;
    }
    (*h).records.len()
}

unsafe fn sweep_row(h: *const DcSweep, i: usize) -> Result<&'static SweepRecord, c_int> {
    if h.is_null() {
        return Err(fail_invalid("null handle"));
    }
    let records = &(*h).records;
    records.get(i).ok_or_else(|| fail_invalid("row index out of range"))
}

/// # Safety
/// `h` live sweep handle, `out` valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_tau(h: *const DcSweep, i: usize, out: *mut f64) -> c_int {
    match sweep_row(h, i) {
        Ok(r) => write_out(out, r.tau),
        Err(c) => c,
    }
}

/// # Safety
/// `h` live sweep handle, `mode` 0 or 1, `out` valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_population(
    h: *const DcSweep,
    i: usize,
    mode: c_int,
    out: *mut f64,
) -> c_int {
    if !(0..=1).contains(&mode) {
        return fail_invalid("mode must be 0 or 1");
    }
    match sweep_row(h, i) {
        Ok(r) => write_out(out, r.populations[mode as usize]),
        Err(c) => c,
    }
}

/// Relative energy change (E - E0)/E0 at row `i`.
///
/// # Safety
/// `h` live sweep handle, `out` valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_energy_change(
    h: *const DcSweep,
    i: usize,
    out: *mut f64,
) -> c_int {
    match sweep_row(h, i) {
        Ok(r) => write_out(out, r.energy_change),
        Err(c) => c,
    }
}

/// Radiation pressure per area at row `i`.
///
/// # Safety
/// `h` live sweep handle, `out` valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_pressure(h: *const DcSweep, i: usize, out: *mut f64) -> c_int {
    match sweep_row(h, i) {
        Ok(r) => write_out(out, r.pressure),
        Err(c) => c,
    }
}

/// Worst defect of the work-energy balance over the whole sweep.
///
/// # Safety
/// `h` live sweep handle, `out` valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_work_energy_residual(
    h: *const DcSweep,
    out: *mut f64,
) -> c_int {
    if h.is_null() {
        return fail_invalid("null handle");
    }
    write_out(out, (*h).work_energy_residual)
}

/// # Safety
/// `h` must come from `dc_sweep_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dc_sweep_free(h: *mut DcSweep) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

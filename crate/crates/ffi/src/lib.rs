//! C ABI over the core crate: run experiments, replay block logs through
//! an opaque ledger handle, and verify model ownership.
//!
//! Conventions: every fallible call returns an [`FcStatus`]; out-pointers
//! are written only on `FC_OK`; handles from `fc_ledger_open` must be
//! released with `fc_ledger_close` and never shared across threads
//! without external locking. All path arguments are NUL-terminated UTF-8.

use std::ffi::CStr;
use std::os::raw::c_char;
use std::path::Path;

use fedchain_core::cli;
use fedchain_core::contracts;
use fedchain_core::ledger::LedgerState;
use fedchain_core::watermark;

/// Status codes shared by every fallible call. The run/verify codes
/// mirror the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcStatus {
    FcOk = 0,
    /// Runtime failure: I/O, replay mismatch, unknown token.
    FcErrRuntime = 1,
    /// Invalid or unreadable task configuration.
    FcErrConfig = 2,
    /// The ownership claim did not match the on-chain commitment.
    FcErrNotOwned = 3,
    /// A required pointer argument was null.
    FcErrNullArgument = 4,
    /// A string argument was not valid UTF-8.
    FcErrInvalidUtf8 = 5,
}

/// Opaque replayed ledger. Created by `fc_ledger_open`, freed by
/// `fc_ledger_close`.
pub struct FcLedger {
    state: LedgerState,
}

fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, FcStatus> {
    if ptr.is_null() {
        return Err(FcStatus::FcErrNullArgument);
    }
    let s = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| FcStatus::FcErrInvalidUtf8)?;
    Ok(Path::new(s))
}

fn status_from_exit(code: i32) -> FcStatus {
    match code {
        0 => FcStatus::FcOk,
        2 => FcStatus::FcErrConfig,
        3 => FcStatus::FcErrNotOwned,
        _ => FcStatus::FcErrRuntime,
    }
}

/// Run a full experiment from a TOML config, writing report.json,
/// manifest.json, blocks.log and model.bin into `out_dir`.
#[no_mangle]
pub extern "C" fn fc_run(config_path: *const c_char, out_dir: *const c_char) -> FcStatus {
    let (config, out) = match (path_arg(config_path), path_arg(out_dir)) {
        (Ok(c), Ok(o)) => (c, o),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    status_from_exit(cli::cmd_run(config, out))
}

/// Replay a block log into a new ledger handle. On success writes the
/// handle to `out` and returns `FC_OK`.
#[no_mangle]
pub extern "C" fn fc_ledger_open(log_path: *const c_char, out: *mut *mut FcLedger) -> FcStatus {
    if out.is_null() {
        return FcStatus::FcErrNullArgument;
    }
    let path = match path_arg(log_path) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let state = match LedgerState::read_log(path).and_then(|log| LedgerState::replay_log(&log)) {
        Ok(s) => s,
        Err(_) => return FcStatus::FcErrRuntime,
    };
    let handle = Box::new(FcLedger { state });
    unsafe { *out = Box::into_raw(handle) };
    FcStatus::FcOk
}

/// Release a ledger handle. Passing null is a no-op.
#[no_mangle]
pub extern "C" fn fc_ledger_close(ledger: *mut FcLedger) {
    if !ledger.is_null() {
        drop(unsafe { Box::from_raw(ledger) });
    }
}

/// Chain height (block count including genesis); 0 for a null handle.
#[no_mangle]
pub extern "C" fn fc_ledger_height(ledger: *const FcLedger) -> u64 {
    match unsafe { ledger.as_ref() } {
        Some(l) => l.state.height(),
        None => 0,
    }
}

/// Copy the 32-byte state root of the last block into `out_root`.
#[no_mangle]
pub extern "C" fn fc_ledger_state_root(
    ledger: *const FcLedger,
    out_root: *mut u8,
) -> FcStatus {
    let Some(l) = (unsafe { ledger.as_ref() }) else {
        return FcStatus::FcErrNullArgument;
    };
    if out_root.is_null() {
        return FcStatus::FcErrNullArgument;
    }
    let root = l.state.last_block().state_root;
    unsafe { std::ptr::copy_nonoverlapping(root.as_ptr(), out_root, 32) };
    FcStatus::FcOk
}

/// Total incentive tokens minted so far; 0 for a null handle.
#[no_mangle]
pub extern "C" fn fc_ledger_total_minted(ledger: *const FcLedger) -> u64 {
    match unsafe { ledger.as_ref() } {
        Some(l) => l.state.contracts.total_minted(),
        None => 0,
    }
}

/// Number of model-ownership tokens minted; 0 for a null handle.
#[no_mangle]
pub extern "C" fn fc_ledger_token_count(ledger: *const FcLedger) -> u64 {
    match unsafe { ledger.as_ref() } {
        Some(l) => l.state.contracts.tokens().len() as u64,
        None => 0,
    }
}

/// Check an ownership claim against a token on an open ledger.
/// `claimed_bits` holds `k` values in {+1, -1}.
#[no_mangle]
pub extern "C" fn fc_ledger_verify_ownership(
    ledger: *const FcLedger,
    token_id: u64,
    claimed_bits: *const i8,
    k: usize,
    claimed_seed: u64,
) -> FcStatus {
    let Some(l) = (unsafe { ledger.as_ref() }) else {
        return FcStatus::FcErrNullArgument;
    };
    if claimed_bits.is_null() {
        return FcStatus::FcErrNullArgument;
    }
    let bits = unsafe { std::slice::from_raw_parts(claimed_bits, k) };
    match l.state.contracts.verify_ownership(token_id, bits, claimed_seed) {
        Ok(true) => FcStatus::FcOk,
        Ok(false) => FcStatus::FcErrNotOwned,
        Err(_) => FcStatus::FcErrRuntime,
    }
}

/// Offline ownership check over run artifacts, equivalent to the CLI
/// `verify` command: OK means OWNED.
#[no_mangle]
pub extern "C" fn fc_verify(
    model_path: *const c_char,
    log_path: *const c_char,
    token_id: u64,
    seed: u64,
) -> FcStatus {
    let (model, log) = match (path_arg(model_path), path_arg(log_path)) {
        (Ok(m), Ok(l)) => (m, l),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    status_from_exit(cli::cmd_verify(model, log, token_id, seed))
}

/// Compute the commitment digest binding `k` watermark bits (+1/-1) to a
/// key seed; writes 32 bytes to `out_digest`.
#[no_mangle]
pub extern "C" fn fc_commitment(
    bits: *const i8,
    k: usize,
    key_seed: u64,
    out_digest: *mut u8,
) -> FcStatus {
    if bits.is_null() || out_digest.is_null() {
        return FcStatus::FcErrNullArgument;
    }
    let slice = unsafe { std::slice::from_raw_parts(bits, k) };
    let digest = contracts::commitment_digest(slice, key_seed);
    unsafe { std::ptr::copy_nonoverlapping(digest.as_ptr(), out_digest, 32) };
    FcStatus::FcOk
}

/// Extract `k` watermark bits from a weight slice of length `d` using the
/// key derived from `key_seed`. Writes +1/-1 values into `out_bits`.
#[no_mangle]
pub extern "C" fn fc_extract_bits(
    weights: *const f64,
    d: usize,
    k: usize,
    key_seed: u64,
    out_bits: *mut i8,
) -> FcStatus {
    if weights.is_null() || out_bits.is_null() {
        return FcStatus::FcErrNullArgument;
    }
    let slice = unsafe { std::slice::from_raw_parts(weights, d) };
    let key = match watermark::WatermarkKey::derive(key_seed, k, d) {
        Ok(k) => k,
        Err(_) => return FcStatus::FcErrRuntime,
    };
    let bits = match watermark::extract(slice, &key) {
        Ok(b) => b,
        Err(_) => return FcStatus::FcErrRuntime,
    };
    unsafe { std::ptr::copy_nonoverlapping(bits.as_ptr(), out_bits, k) };
    FcStatus::FcOk
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    use fedchain_core::fl::config::default_benchmark_toml;

    fn c(path: &std::path::Path) -> CString {
        CString::new(path.to_str().unwrap()).unwrap()
    }

    #[test]
    fn run_open_and_verify_through_the_c_surface() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("task.toml");
        std::fs::write(&config, default_benchmark_toml()).unwrap();
        let out = dir.path().join("out");

        let status = fc_run(c(&config).as_ptr(), c(&out).as_ptr());
        assert_eq!(status, FcStatus::FcOk);

        let log = out.join("blocks.log");
        let mut handle: *mut FcLedger = std::ptr::null_mut();
        assert_eq!(fc_ledger_open(c(&log).as_ptr(), &mut handle), FcStatus::FcOk);
        assert!(!handle.is_null());
        assert_eq!(fc_ledger_height(handle), 9);
        assert_eq!(fc_ledger_token_count(handle), 1);
        assert!(fc_ledger_total_minted(handle) > 0);

        let mut root = [0u8; 32];
        assert_eq!(fc_ledger_state_root(handle, root.as_mut_ptr()), FcStatus::FcOk);
        assert_ne!(root, [0u8; 32]);

        // pull the true claim out of the replayed state and check both
        // the handle-based and the file-based verification paths
        let state = LedgerState::replay_log(&LedgerState::read_log(&log).unwrap()).unwrap();
        let token = state.contracts.tokens()[0];
        let spec = state.contracts.watermark_spec(&token.model_id).unwrap();
        assert_eq!(
            fc_ledger_verify_ownership(
                handle,
                token.token_id,
                spec.bits.as_ptr(),
                spec.bits.len(),
                spec.key_seed,
            ),
            FcStatus::FcOk
        );
        let mut flipped = spec.bits.clone();
        flipped[0] = -flipped[0];
        assert_eq!(
            fc_ledger_verify_ownership(
                handle,
                token.token_id,
                flipped.as_ptr(),
                flipped.len(),
                spec.key_seed,
            ),
            FcStatus::FcErrNotOwned
        );

        let model = out.join("model.bin");
        assert_eq!(
            fc_verify(c(&model).as_ptr(), c(&log).as_ptr(), token.token_id, spec.key_seed),
            FcStatus::FcOk
        );
        assert_eq!(
            fc_verify(c(&model).as_ptr(), c(&log).as_ptr(), token.token_id, spec.key_seed + 1),
            FcStatus::FcErrNotOwned
        );

        fc_ledger_close(handle);
    }

    #[test]
    fn commitment_matches_core() {
        let bits: Vec<i8> = vec![1, -1, 1, 1, -1];
        let mut digest = [0u8; 32];
        assert_eq!(fc_commitment(bits.as_ptr(), bits.len(), 7, digest.as_mut_ptr()), FcStatus::FcOk);
        assert_eq!(digest, contracts::commitment_digest(&bits, 7));
    }

    #[test]
    fn null_arguments_are_rejected() {
        assert_eq!(fc_run(std::ptr::null(), std::ptr::null()), FcStatus::FcErrNullArgument);
        assert_eq!(fc_ledger_open(std::ptr::null(), std::ptr::null_mut()), FcStatus::FcErrNullArgument);
        assert_eq!(fc_ledger_height(std::ptr::null()), 0);
        fc_ledger_close(std::ptr::null_mut());
        let bad = CString::new("/nonexistent/blocks.log").unwrap();
        let mut handle: *mut FcLedger = std::ptr::null_mut();
        assert_eq!(fc_ledger_open(bad.as_ptr(), &mut handle), FcStatus::FcErrRuntime);
    }

    #[test]
    fn extract_bits_roundtrip() {
        let (k, d) = (16usize, 128usize);
        let key = watermark::WatermarkKey::derive(99, k, d).unwrap();
        let weights: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        let expected = watermark::extract(&weights, &key).unwrap();
        let mut out = vec![0i8; k];
        assert_eq!(
            fc_extract_bits(weights.as_ptr(), d, k, 99, out.as_mut_ptr()),
            FcStatus::FcOk
        );
        assert_eq!(out, expected);
    }
}

//! C ABI for the agrag engine.
//!
//! Conventions: every fallible call returns an `AgragStatus`; out-params
//! are written only on `AGRAG_STATUS_OK`. The most recent error message is
//! retrievable per thread via `agrag_last_error`. Handles are opaque and
//! must be released with their matching `_free` function; strings returned
//! by the library must be released with `agrag_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use agrag_core::error::AgragError;
use agrag_core::{KnowledgeGraph, PipelineConfig};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgragStatus {
    AgragStatusOk = 0,
    AgragStatusConfig = 1,
    AgragStatusCorpus = 2,
    AgragStatusProvider = 3,
    AgragStatusIndex = 4,
    AgragStatusGraph = 5,
    AgragStatusIo = 6,
    AgragStatusInvalidArgument = 7,
    AgragStatusPanic = 8,
}

/// Opaque pipeline configuration handle.
pub struct AgragConfig(PipelineConfig);

/// Opaque loaded-index handle.
pub struct AgragIndex(KnowledgeGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(sanitized).unwrap());
    });
}

fn status_of(err: &AgragError) -> AgragStatus {
    match err {
        AgragError::Config(_) | AgragError::Selector(_) => AgragStatus::AgragStatusConfig,
        AgragError::Corpus(_) | AgragError::Stats(_) => AgragStatus::AgragStatusCorpus,
        AgragError::Provider { .. } | AgragError::DimensionMismatch { .. } => {
            AgragStatus::AgragStatusProvider
        }
        AgragError::IndexCorruption(_)
        | AgragError::IndexFormat(_)
        | AgragError::IndexVersion { .. }
        | AgragError::IndexChecksum => AgragStatus::AgragStatusIndex,
        AgragError::PprNonConvergence { .. }
        | AgragError::UnreachableTerminal(_)
        | AgragError::OracleSizeCap { .. } => AgragStatus::AgragStatusGraph,
        AgragError::Io(_) | AgragError::Json(_) => AgragStatus::AgragStatusIo,
    }
}

fn fail(err: AgragError) -> AgragStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Runs a closure with panic containment; a panic across the FFI boundary
/// would be undefined behavior.
fn guarded(f: impl FnOnce() -> AgragStatus) -> AgragStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            AgragStatus::AgragStatusPanic
        }
    }
}

/// SAFETY: `ptr` must be a valid NUL-terminated string or null.
unsafe fn read_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn give_string(out: *mut *mut c_char, value: String) -> AgragStatus {
    let sanitized = value.replace('\0', " ");
    let cstring = CString::new(sanitized).unwrap();
    unsafe { *out = cstring.into_raw() };
    AgragStatus::AgragStatusOk
}

/// Returns the last error message recorded on this thread, or null. The
/// pointer is owned by the library and valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn agrag_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Frees a string returned by this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn agrag_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Creates a configuration with built-in defaults (mock provider).
#[no_mangle]
pub unsafe extern "C" fn agrag_config_default(out: *mut *mut AgragConfig) -> AgragStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        let mut config = PipelineConfig::default();
        config.apply_env_overrides();
        *out = Box::into_raw(Box::new(AgragConfig(config)));
        AgragStatus::AgragStatusOk
    })
}

/// Loads a TOML configuration file.
#[no_mangle]
pub unsafe extern "C" fn agrag_config_load(
    path: *const c_char,
    out: *mut *mut AgragConfig,
) -> AgragStatus {
    guarded(|| {
        let Some(path) = read_str(path) else {
            set_error("path is null or not UTF-8");
            return AgragStatus::AgragStatusInvalidArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        match PipelineConfig::load(Path::new(path)) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(AgragConfig(config)));
                AgragStatus::AgragStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a configuration handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn agrag_config_free(config: *mut AgragConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Builds an index per the configuration (corpus_path and index_path must
/// be set) and writes the build report as JSON into `out_report_json`.
#[no_mangle]
pub unsafe extern "C" fn agrag_index_build(
    config: *const AgragConfig,
    out_report_json: *mut *mut c_char,
) -> AgragStatus {
    guarded(|| {
        if config.is_null() || out_report_json.is_null() {
            set_error("null argument");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        match agrag_core::index_command(&(*config).0) {
            Ok(report) => give_string(
                out_report_json,
                serde_json::to_string(&report).expect("report serializes"),
            ),
            Err(e) => fail(e),
        }
    })
}

/// Opens a saved index file.
#[no_mangle]
pub unsafe extern "C" fn agrag_index_open(
    path: *const c_char,
    out: *mut *mut AgragIndex,
) -> AgragStatus {
    guarded(|| {
        let Some(path) = read_str(path) else {
            set_error("path is null or not UTF-8");
            return AgragStatus::AgragStatusInvalidArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        match agrag_core::index_io::load_index(Path::new(path)) {
            Ok(graph) => {
                *out = Box::into_raw(Box::new(AgragIndex(graph)));
                AgragStatus::AgragStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases an index handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn agrag_index_free(index: *mut AgragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Answers a query. The full result (answer, reasoning graph, retrieved
/// chunks, trace) is written as a JSON document; `explain` attaches
/// per-stage timings. `out_degraded` (optional) receives 1 when graph
/// retrieval degraded to hybrid-only.
#[no_mangle]
pub unsafe extern "C" fn agrag_query(
    index: *const AgragIndex,
    config: *const AgragConfig,
    query: *const c_char,
    explain: i32,
    out_degraded: *mut i32,
    out_json: *mut *mut c_char,
) -> AgragStatus {
    guarded(|| {
        if index.is_null() || config.is_null() || out_json.is_null() {
            set_error("null argument");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        let Some(query) = read_str(query) else {
            set_error("query is null or not UTF-8");
            return AgragStatus::AgragStatusInvalidArgument;
        };
        match agrag_core::pipeline::query_loaded(&(*index).0, query, &(*config).0, explain != 0) {
            Ok(result) => {
                if !out_degraded.is_null() {
                    *out_degraded = result.degraded() as i32;
                }
                give_string(
                    out_json,
                    serde_json::to_string(&result).expect("result serializes"),
                )
            }
            Err(e) => fail(e),
        }
    })
}

/// Dumps index contents as JSON, narrowed by `selectors` (an array of
/// `selector_count` key=value strings; pass null/0 for a full dump).
#[no_mangle]
pub unsafe extern "C" fn agrag_inspect(
    index: *const AgragIndex,
    selectors: *const *const c_char,
    selector_count: usize,
    out_json: *mut *mut c_char,
) -> AgragStatus {
    guarded(|| {
        if index.is_null() || out_json.is_null() {
            set_error("null argument");
            return AgragStatus::AgragStatusInvalidArgument;
        }
        let mut parsed = Vec::with_capacity(selector_count);
        if selector_count > 0 {
            if selectors.is_null() {
                set_error("selectors is null but selector_count > 0");
                return AgragStatus::AgragStatusInvalidArgument;
            }
            for i in 0..selector_count {
                let Some(s) = read_str(*selectors.add(i)) else {
                    set_error("selector is null or not UTF-8");
                    return AgragStatus::AgragStatusInvalidArgument;
                };
                parsed.push(s.to_string());
            }
        }
        match agrag_core::pipeline::inspect_loaded(&(*index).0, &parsed) {
            Ok(value) => give_string(
                out_json,
                serde_json::to_string(&value).expect("value serializes"),
            ),
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn build_toy_index(dir: &Path) -> (CString, CString) {
        let corpus = dir.join("corpus");
        std::fs::create_dir_all(&corpus).unwrap();
        std::fs::write(corpus.join("a.txt"), "the kidney spread tumors rapidly").unwrap();
        std::fs::write(corpus.join("b.txt"), "the liver filters blood daily").unwrap();
        let index_path = dir.join("toy.agrag");
        let config_path = dir.join("config.toml");
        std::fs::write(
            &config_path,
            format!(
                "chunk_length = 16\nchunk_overlap = 4\nentity_threshold = 0.05\n\
                 corpus_path = \"{}\"\nindex_path = \"{}\"\n\n[provider]\nkind = \"mock\"\n\
                 embedding_dim = 32\n",
                corpus.display(),
                index_path.display()
            ),
        )
        .unwrap();
        (
            cstr(&config_path.display().to_string()),
            cstr(&index_path.display().to_string()),
        )
    }

    #[test]
    fn full_lifecycle_over_the_c_abi() {
        let dir = tempfile::tempdir().unwrap();
        let (config_path, index_path) = build_toy_index(dir.path());

        let mut config: *mut AgragConfig = ptr::null_mut();
        let status = unsafe { agrag_config_load(config_path.as_ptr(), &mut config) };
        assert_eq!(status, AgragStatus::AgragStatusOk);

        let mut report: *mut c_char = ptr::null_mut();
        let status = unsafe { agrag_index_build(config, &mut report) };
        assert_eq!(status, AgragStatus::AgragStatusOk);
        let report_json = unsafe { CStr::from_ptr(report) }.to_str().unwrap();
        assert!(report_json.contains("\"chunks\":2"));
        unsafe { agrag_string_free(report) };

        let mut index: *mut AgragIndex = ptr::null_mut();
        let status = unsafe { agrag_index_open(index_path.as_ptr(), &mut index) };
        assert_eq!(status, AgragStatus::AgragStatusOk);

        let query = cstr("kidney tumors");
        let mut degraded = -1;
        let mut json: *mut c_char = ptr::null_mut();
        let status =
            unsafe { agrag_query(index, config, query.as_ptr(), 0, &mut degraded, &mut json) };
        assert_eq!(status, AgragStatus::AgragStatusOk);
        assert_eq!(degraded, 0);
        let payload = unsafe { CStr::from_ptr(json) }.to_str().unwrap();
        assert!(payload.contains("\"answer\""));
        unsafe { agrag_string_free(json) };

        let selector = cstr("kind=pseudo");
        let selectors = [selector.as_ptr()];
        let mut inspect_json: *mut c_char = ptr::null_mut();
        let status =
            unsafe { agrag_inspect(index, selectors.as_ptr(), 1, &mut inspect_json) };
        assert_eq!(status, AgragStatus::AgragStatusOk);
        unsafe { agrag_string_free(inspect_json) };

        unsafe {
            agrag_index_free(index);
            agrag_config_free(config);
        }
    }

    #[test]
    fn errors_set_message_and_code() {
        let missing = cstr("/nonexistent/config.toml");
        let mut config: *mut AgragConfig = ptr::null_mut();
        let status = unsafe { agrag_config_load(missing.as_ptr(), &mut config) };
        assert_eq!(status, AgragStatus::AgragStatusIo);
        let message = unsafe { CStr::from_ptr(agrag_last_error()) }
            .to_str()
            .unwrap();
        assert!(message.contains("i/o"));

        let missing_index = cstr("/nonexistent/index.agrag");
        let mut index: *mut AgragIndex = ptr::null_mut();
        let status = unsafe { agrag_index_open(missing_index.as_ptr(), &mut index) };
        assert_eq!(status, AgragStatus::AgragStatusIo);
    }

    #[test]
    fn null_arguments_are_rejected() {
        let status = unsafe { agrag_config_default(ptr::null_mut()) };
        assert_eq!(status, AgragStatus::AgragStatusInvalidArgument);
        let mut json: *mut c_char = ptr::null_mut();
        let status = unsafe {
            agrag_query(
                ptr::null(),
                ptr::null(),
                ptr::null(),
                0,
                ptr::null_mut(),
                &mut json,
            )
        };
        assert_eq!(status, AgragStatus::AgragStatusInvalidArgument);
    }

    #[test]
    fn header_is_generated() {
        let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/agrag.h");
        let text = std::fs::read_to_string(header).unwrap();
        assert!(text.contains("agrag_query"));
        assert!(text.contains("AgragStatus"));
    }
}

//! C ABI over the search engine.
//!
//! Indexes are opaque `MvrIndex` handles. Every fallible call returns an
//! `MvrStatus`; on failure the message is kept per thread and can be read
//! with `mvr_last_error`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mvr_core::engine::{self, SearchIndex, SearchParams};
use mvr_core::Error;

/// Opaque index handle.
pub struct MvrIndex {
    inner: SearchIndex,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptIndex = 4,
    BufferTooSmall = 5,
    Internal = 6,
    Panic = 7,
}

/// Search knobs; start from `mvr_search_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvrSearchParams {
    pub centroids_per_token: usize,
    pub max_candidates: usize,
    pub prune_ratio: f32,
    pub ef_search: usize,
    pub k: usize,
}

impl From<MvrSearchParams> for SearchParams {
    fn from(p: MvrSearchParams) -> Self {
        SearchParams {
            centroids_per_token: p.centroids_per_token,
            max_candidates: p.max_candidates,
            prune_ratio: p.prune_ratio,
            ef_search: p.ef_search,
            k: p.k,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MvrStatus {
    match err {
        Error::Io { .. } | Error::MissingComponent(_) => MvrStatus::Io,
        Error::Config(_) | Error::Precondition(_) | Error::DimensionMismatch { .. } => MvrStatus::InvalidArgument,
        Error::Internal(_) => MvrStatus::Internal,
        _ => MvrStatus::CorruptIndex,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MvrStatus, String)>) -> MvrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside mvr");
            MvrStatus::Panic
        }
    }
}

fn fail<T>(status: MvrStatus, msg: impl Into<String>) -> Result<T, (MvrStatus, String)> {
    Err((status, msg.into()))
}

fn core_err(e: Error) -> (MvrStatus, String) {
    (status_of(&e), e.to_string())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next mvr call on the same thread.
#[no_mangle]
pub extern "C" fn mvr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn mvr_search_params_default() -> MvrSearchParams {
    let p = SearchParams::default();
    MvrSearchParams {
        centroids_per_token: p.centroids_per_token,
        max_candidates: p.max_candidates,
        prune_ratio: p.prune_ratio,
        ef_search: p.ef_search,
        k: p.k,
    }
}

/// Loads and verifies the index directory at `path` (UTF-8). On success
/// `*out` owns a handle to release with `mvr_index_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_open(path: *const c_char, out: *mut *mut MvrIndex) -> MvrStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(MvrStatus::NullPointer, "path and out must not be null");
        }
        *out = ptr::null_mut();
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(MvrStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let inner = SearchIndex::load(Path::new(path)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(MvrIndex { inner }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `index` must come from `mvr_index_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_free(index: *mut MvrIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Vector dimension, or 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_dim(index: *const MvrIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dim())
}

/// Number of documents, or 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_num_docs(index: *const MvrIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.num_docs())
}

/// Copies the external id of document `doc` into `buf` with a trailing NUL.
/// `*len` receives the id length without the NUL, also when the buffer is
/// too small.
///
/// # Safety
/// `buf` must hold `cap` bytes (it may be NULL when `cap` is 0) and `len`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_doc_id(
    index: *const MvrIndex,
    doc: u32,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> MvrStatus {
    guard(|| {
        let Some(index) = index.as_ref() else {
            return fail(MvrStatus::NullPointer, "index must not be null");
        };
        if len.is_null() || (buf.is_null() && cap > 0) {
            return fail(MvrStatus::NullPointer, "len must not be null and buf may only be null when cap is 0");
        }
        let Some(id) = index.inner.doc_ids().get(doc as usize) else {
            return fail(MvrStatus::InvalidArgument, format!("document {doc} out of range"));
        };
        *len = id.len();
        if cap < id.len() + 1 {
            return fail(MvrStatus::BufferTooSmall, format!("need {} bytes", id.len() + 1));
        }
        ptr::copy_nonoverlapping(id.as_ptr(), buf as *mut u8, id.len());
        *buf.add(id.len()) = 0;
        Ok(())
    })
}

/// Searches with a query of `num_tokens` row-major vectors. Up to
/// `capacity` hits are written best first to `docs` and `scores`;
/// `*count` receives the number written.
///
/// # Safety
/// `query` must hold `num_tokens * dim` floats, `docs` and `scores` must
/// hold `capacity` elements and `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvr_index_search(
    index: *const MvrIndex,
    query: *const f32,
    num_tokens: usize,
    params: *const MvrSearchParams,
    docs: *mut u32,
    scores: *mut f32,
    capacity: usize,
    count: *mut usize,
) -> MvrStatus {
    guard(|| {
        if index.is_null() || query.is_null() || params.is_null() || count.is_null() {
            return fail(MvrStatus::NullPointer, "index, query, params and count must not be null");
        }
        if capacity > 0 && (docs.is_null() || scores.is_null()) {
            return fail(MvrStatus::NullPointer, "output buffers must not be null");
        }
        *count = 0;
        let index = &(*index).inner;
        if num_tokens == 0 {
            return fail(MvrStatus::InvalidArgument, "query has no tokens");
        }
        let q = std::slice::from_raw_parts(query, num_tokens * index.dim());
        let params = SearchParams::from(*params);
        params.validate().map_err(core_err)?;
        let result = engine::search(index, q, &params).map_err(core_err)?;
        let n = result.hits.len().min(capacity);
        for (i, &(d, s)) in result.hits.iter().take(n).enumerate() {
            *docs.add(i) = d;
            *scores.add(i) = s;
        }
        *count = n;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_status() {
        assert_eq!(status_of(&Error::Config("x".into())), MvrStatus::InvalidArgument);
        assert_eq!(status_of(&Error::MissingComponent("a".into())), MvrStatus::Io);
        assert_eq!(status_of(&Error::Internal("x".into())), MvrStatus::Internal);
        assert_eq!(
            status_of(&Error::CorruptRecord { doc: 1, reason: "r".into() }),
            MvrStatus::CorruptIndex
        );
    }

    #[test]
    fn panics_are_contained() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, MvrStatus::Panic);
        assert!(!mvr_last_error().is_null());
        assert_eq!(guard(|| Ok(())), MvrStatus::Ok);
        assert!(mvr_last_error().is_null());
    }

    #[test]
    fn messages_with_nul_survive() {
        set_error("a\0b");
        let msg = unsafe { CStr::from_ptr(mvr_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "ab");
    }
}

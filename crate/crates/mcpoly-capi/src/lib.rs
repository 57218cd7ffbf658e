//! C ABI for the solver and codec. Strings cross the boundary as UTF-8
//! JSON; codes live behind an opaque handle. Every function returns a
//! status code and the last error message is kept per thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mcpoly::aifv::{
    self, decode, decode_exact, default_height_cap, symbol_char, symbol_index, Code, SourceSpec,
};
use mcpoly::io;
use mcpoly::solvers::{solve, Method, SolveError, SolveOptions};

pub const MCPOLY_OK: c_int = 0;
pub const MCPOLY_ERR_PARSE: c_int = 2;
pub const MCPOLY_ERR_VALIDATION: c_int = 3;
pub const MCPOLY_ERR_BUDGET: c_int = 4;
pub const MCPOLY_ERR_INTERNAL: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(code: c_int, message: impl Into<String>) -> c_int {
    let msg = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    code
}

fn solve_error(e: SolveError) -> c_int {
    let code = match e {
        SolveError::BudgetExceeded { .. } | SolveError::EllipsoidNoFeasiblePoint(_) => {
            MCPOLY_ERR_BUDGET
        }
        SolveError::EmptyRestrictedFamily(_) => MCPOLY_ERR_VALIDATION,
        _ => MCPOLY_ERR_INTERNAL,
    };
    fail(code, e.to_string())
}

fn io_error(e: io::IoError) -> c_int {
    match e {
        io::IoError::Parse(m) => fail(MCPOLY_ERR_PARSE, m),
        io::IoError::Validation(m) => fail(MCPOLY_ERR_VALIDATION, m),
    }
}

fn aifv_error(e: aifv::AifvError) -> c_int {
    let code = io::exit_code_for_aifv(&e) as c_int;
    fail(code, e.to_string())
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        return Err(fail(MCPOLY_ERR_PARSE, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(MCPOLY_ERR_PARSE, format!("{what} is not UTF-8")))
}

unsafe fn write_out(out: *mut *mut c_char, value: String) -> c_int {
    if out.is_null() {
        return fail(MCPOLY_ERR_PARSE, "output pointer is null");
    }
    match CString::new(value) {
        Ok(s) => {
            *out = s.into_raw();
            MCPOLY_OK
        }
        Err(_) => fail(MCPOLY_ERR_INTERNAL, "output contains a NUL byte"),
    }
}

fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(MCPOLY_ERR_INTERNAL, "internal panic"),
    }
}

fn parse_method(name: &str) -> Result<Method, c_int> {
    match name {
        "brute" => Ok(Method::BruteForce),
        "iterate" => Ok(Method::Iterate),
        "ellipsoid" => Ok(Method::Ellipsoid),
        other => Err(fail(
            MCPOLY_ERR_PARSE,
            format!("unknown method {other:?}, expected brute|iterate|ellipsoid"),
        )),
    }
}

/// Opaque handle to a built code plus its source distribution.
pub struct McpolyCode {
    code: Code,
    source: SourceSpec,
    n: usize,
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn mcpoly_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned through an `out` parameter.
///
/// # Safety
/// `s` must be a pointer previously returned by this library (or null).
#[no_mangle]
pub unsafe extern "C" fn mcpoly_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves a JSON chain instance with the named method ("brute", "iterate"
/// or "ellipsoid") and writes the report as JSON to `out_report`.
///
/// # Safety
/// Inputs must be valid NUL-terminated strings; `out_report` must be a
/// valid pointer. The result string is freed with `mcpoly_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_solve_json(
    instance_json: *const c_char,
    method: *const c_char,
    out_report: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        let text = match read_str(instance_json, "instance") {
            Ok(t) => t,
            Err(c) => return c,
        };
        let method = match read_str(method, "method").and_then(parse_method) {
            Ok(m) => m,
            Err(c) => return c,
        };
        let fams = match io::instance_from_json(text) {
            Ok(f) => f,
            Err(e) => return io_error(e),
        };
        match solve(&fams, method, &SolveOptions::default()) {
            Ok(report) => write_out(out_report, io::report_to_json(&report)),
            Err(e) => solve_error(e),
        }
    })
}

/// Builds a minimum-cost code with `m` trees for a source given either as
/// a JSON object or as "p/q" lines. `height_cap` of 0 picks the default.
///
/// # Safety
/// `source_text` must be a valid NUL-terminated string and `out_handle`
/// a valid pointer. The handle is freed with `mcpoly_code_free`.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_build(
    source_text: *const c_char,
    m: usize,
    height_cap: usize,
    out_handle: *mut *mut McpolyCode,
) -> c_int {
    guarded(|| {
        let text = match read_str(source_text, "source") {
            Ok(t) => t,
            Err(c) => return c,
        };
        if out_handle.is_null() {
            return fail(MCPOLY_ERR_PARSE, "output handle is null");
        }
        let source = match io::source_from_text(text) {
            Ok(s) => s,
            Err(e) => return io_error(e),
        };
        let n = source.n();
        let cap = if height_cap == 0 {
            default_height_cap(n, m)
        } else {
            height_cap
        };
        let fams = match aifv::families_from_source(&source, m, cap) {
            Ok(f) => f,
            Err(e) => return aifv_error(e),
        };
        let report = match solve(&fams, Method::Iterate, &SolveOptions::default()) {
            Ok(r) => r,
            Err(e) => return solve_error(e),
        };
        let code = match aifv::code_from_chain(&report.chain) {
            Ok(c) => c,
            Err(e) => return aifv_error(e),
        };
        *out_handle = Box::into_raw(Box::new(McpolyCode { code, source, n }));
        MCPOLY_OK
    })
}

/// Loads a code file produced by `mcpoly_code_to_json` or the CLI.
///
/// # Safety
/// `code_json` must be a valid NUL-terminated string and `out_handle` a
/// valid pointer. The handle is freed with `mcpoly_code_free`.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_from_json(
    code_json: *const c_char,
    out_handle: *mut *mut McpolyCode,
) -> c_int {
    guarded(|| {
        let text = match read_str(code_json, "code") {
            Ok(t) => t,
            Err(c) => return c,
        };
        if out_handle.is_null() {
            return fail(MCPOLY_ERR_PARSE, "output handle is null");
        }
        match io::code_from_json(text) {
            Ok((code, source)) => {
                let n = source.n();
                *out_handle = Box::into_raw(Box::new(McpolyCode { code, source, n }));
                MCPOLY_OK
            }
            Err(e) => io_error(e),
        }
    })
}

/// Serializes the code (trees plus source) to JSON.
///
/// # Safety
/// `handle` must come from this library and still be live; `out_json`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_to_json(
    handle: *const McpolyCode,
    out_json: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return fail(MCPOLY_ERR_PARSE, "handle is null");
        };
        write_out(out_json, io::code_to_json(&h.code, &h.source))
    })
}

/// Encodes a message of symbol letters ('a', 'b', ...) to a "0"/"1" string.
///
/// # Safety
/// `handle` must be live, `message` a valid NUL-terminated string and
/// `out_bits` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_encode(
    handle: *const McpolyCode,
    message: *const c_char,
    out_bits: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return fail(MCPOLY_ERR_PARSE, "handle is null");
        };
        let text = match read_str(message, "message") {
            Ok(t) => t,
            Err(c) => return c,
        };
        let mut symbols = Vec::with_capacity(text.len());
        for ch in text.chars() {
            match symbol_index(ch).filter(|&s| s < h.n) {
                Some(s) => symbols.push(s),
                None => {
                    return fail(MCPOLY_ERR_VALIDATION, format!("unknown symbol {ch:?}"))
                }
            }
        }
        match aifv::encode(&h.code, &symbols, h.n) {
            Ok(bits) => {
                let s: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
                write_out(out_bits, s)
            }
            Err(e) => fail(MCPOLY_ERR_VALIDATION, e.to_string()),
        }
    })
}

/// Decodes a "0"/"1" string back to symbol letters. A negative `count`
/// decodes until the bits run out; otherwise exactly `count` symbols are
/// produced (trailing empty codewords included).
///
/// # Safety
/// `handle` must be live, `bits` a valid NUL-terminated string and
/// `out_message` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_decode(
    handle: *const McpolyCode,
    bits: *const c_char,
    count: isize,
    out_message: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return fail(MCPOLY_ERR_PARSE, "handle is null");
        };
        let text = match read_str(bits, "bits") {
            Ok(t) => t,
            Err(c) => return c,
        };
        let mut stream = Vec::with_capacity(text.len());
        for ch in text.chars() {
            match ch {
                '0' => stream.push(0u8),
                '1' => stream.push(1u8),
                other => return fail(MCPOLY_ERR_PARSE, format!("bad bit {other:?}")),
            }
        }
        let outcome = if count < 0 {
            decode(&h.code, &stream)
        } else {
            decode_exact(&h.code, &stream, count as usize)
        };
        match outcome {
            Ok(out) => {
                let s: String = out.symbols.iter().map(|&i| symbol_char(i)).collect();
                write_out(out_message, s)
            }
            Err(e) => fail(MCPOLY_ERR_VALIDATION, e.to_string()),
        }
    })
}

/// Frees a code handle.
///
/// # Safety
/// `handle` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcpoly_code_free(handle: *mut McpolyCode) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

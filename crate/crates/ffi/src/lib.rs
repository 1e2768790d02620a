//! C ABI for netreg.
//!
//! Objects are opaque handles created by `netreg_*_new` style functions and
//! released with the matching `netreg_*_free`. Every fallible call returns a
//! `NetregStatus`; on failure `netreg_last_error` describes the cause. Error
//! messages are per thread and stay valid until the next failing call on the
//! same thread.
//!
//! Matrices are passed column-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use netreg::estimation::EstimationResult;
use netreg::graphs::{generate_mc_network, GroupedNetwork};
use netreg::identification::{eigenvalue_report, Verdict};
use netreg::io::{build_w, keys_from_edges, Edge};
use netreg::pipeline::{first_stage, InstrumentOptions, Method};
use netreg::regularization::SchemeKind;
use netreg::selection::Criterion;
use netreg::transforms::PanelData;
use netreg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetregStatus {
    Ok = 0,
    InvalidArgument = 1,
    Data = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetregVerdict {
    NotIdentified = 0,
    PossiblyIdentified = 1,
    Identified = 2,
    WeaklyIdentified = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetregMethod {
    Classical = 0,
    BiasCorrected = 1,
    Tikhonov = 2,
    LandweberFridman = 3,
    PrincipalComponents = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetregCriterion {
    MallowsCp = 0,
    Gcv = 1,
    LeaveOneOut = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetregEstimateOptions {
    pub method: NetregMethod,
    pub criterion: NetregCriterion,
    /// Regularization parameter; NaN selects it by `criterion`.
    pub parameter: f64,
    /// Highest power of W in the instrument set; 0 picks it automatically.
    pub order: usize,
    pub bonacich: bool,
    pub m_lags: bool,
}

pub struct NetregNetwork {
    inner: GroupedNetwork,
}

pub struct NetregData {
    inner: PanelData,
}

pub struct NetregResult {
    inner: EstimationResult,
    rho_degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NetregStatus {
    if e.is_numerical() {
        NetregStatus::Numerical
    } else if matches!(e, Error::InvalidArgument(_)) {
        NetregStatus::InvalidArgument
    } else {
        NetregStatus::Data
    }
}

struct Fail(NetregStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NetregStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> NetregStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NetregStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            NetregStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null.
#[no_mangle]
pub extern "C" fn netreg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn netreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a network from an edge list. `weight` may be null (unit weights).
/// Nodes are given by `node_group`/`node_id` of length `n_nodes`, or inferred
/// from the edges when both are null. Rows of any data attached later follow
/// nodes sorted by (group, id).
///
/// # Safety
/// Array arguments must be valid for their stated lengths; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_from_edges(
    n_edges: usize,
    group: *const u64,
    src: *const u64,
    dst: *const u64,
    weight: *const f64,
    n_nodes: usize,
    node_group: *const u64,
    node_id: *const u64,
    row_normalize: bool,
    out: *mut *mut NetregNetwork,
) -> NetregStatus {
    guard(|| {
        let g = slice(group, n_edges, "group")?;
        let s = slice(src, n_edges, "src")?;
        let d = slice(dst, n_edges, "dst")?;
        let w = if weight.is_null() { None } else { Some(slice(weight, n_edges, "weight")?) };
        let edges: Vec<Edge> = (0..n_edges)
            .map(|k| Edge {
                group: g[k],
                src: s[k],
                dst: d[k],
                weight: w.map_or(1.0, |w| w[k]),
            })
            .collect();
        let keys = if node_group.is_null() && node_id.is_null() {
            keys_from_edges(&edges)
        } else {
            let ng = slice(node_group, n_nodes, "node_group")?;
            let ni = slice(node_id, n_nodes, "node_id")?;
            let mut k: Vec<(u64, u64)> = ng.iter().copied().zip(ni.iter().copied()).collect();
            k.sort_unstable();
            k.dedup();
            k
        };
        let w = build_w(&edges, &keys, row_normalize)?;
        put(out, NetregNetwork { inner: GroupedNetwork::with_row_normalized_m(w)? })
    })
}

/// Random network of `groups` groups of `size` nodes with up to `max_links`
/// out-links per node.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_generate(
    groups: usize,
    size: usize,
    max_links: usize,
    seed: u64,
    out: *mut *mut NetregNetwork,
) -> NetregStatus {
    guard(|| put(out, NetregNetwork { inner: generate_mc_network(groups, size, max_links, seed)? }))
}

/// # Safety
/// `net` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_node_count(net: *const NetregNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.n())
}

/// # Safety
/// `net` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_group_count(net: *const NetregNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.group_count())
}

/// Eigenvalue-count identification check. Requires a symmetric network.
///
/// # Safety
/// `net` must be a handle from this library; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_identification(
    net: *const NetregNetwork,
    tol: f64,
    verdict: *mut NetregVerdict,
    distinct_eigenvalues: *mut usize,
) -> NetregStatus {
    guard(|| {
        let n = get(net, "network")?;
        if verdict.is_null() || distinct_eigenvalues.is_null() {
            return Err(null("output"));
        }
        let r = eigenvalue_report(n.inner.w(), tol)?;
        *verdict = match r.verdict {
            Verdict::NotIdentified => NetregVerdict::NotIdentified,
            Verdict::PossiblyIdentified => NetregVerdict::PossiblyIdentified,
            Verdict::Identified => NetregVerdict::Identified,
            Verdict::WeaklyIdentified => NetregVerdict::WeaklyIdentified,
        };
        *distinct_eigenvalues = r.distinct_eigenvalue_count;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn netreg_network_free(net: *mut NetregNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Panel on `net`: `y` has one entry per node, `x1` is `n × k1` and `x2` is
/// `n × k2`, both column-major.
///
/// # Safety
/// Arrays must be valid for their sizes; `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_data_new(
    net: *const NetregNetwork,
    n: usize,
    y: *const f64,
    k1: usize,
    x1: *const f64,
    k2: usize,
    x2: *const f64,
    out: *mut *mut NetregData,
) -> NetregStatus {
    guard(|| {
        let network = &get(net, "network")?.inner;
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let x1 = DMatrix::from_column_slice(n, k1, slice(x1, n * k1, "x1")?);
        let x2 = DMatrix::from_column_slice(n, k2, slice(x2, n * k2, "x2")?);
        put(out, NetregData { inner: PanelData::new(y, x1, x2, network)? })
    })
}

/// # Safety
/// `data` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn netreg_data_free(data: *mut NetregData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Tikhonov with the parameter chosen by Mallows' Cp, automatic instrument
/// order, Bonacich and M-lag columns included.
#[no_mangle]
pub extern "C" fn netreg_estimate_options_default() -> NetregEstimateOptions {
    NetregEstimateOptions {
        method: NetregMethod::Tikhonov,
        criterion: NetregCriterion::MallowsCp,
        parameter: f64::NAN,
        order: 0,
        bonacich: true,
        m_lags: true,
    }
}

/// Runs the full estimator. `options` may be null for the defaults.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn netreg_estimate(
    net: *const NetregNetwork,
    data: *const NetregData,
    options: *const NetregEstimateOptions,
    out: *mut *mut NetregResult,
) -> NetregStatus {
    guard(|| {
        let network = &get(net, "network")?.inner;
        let data = &get(data, "data")?.inner;
        let o = options.as_ref().copied().unwrap_or_else(|| netreg_estimate_options_default());
        let criterion = match o.criterion {
            NetregCriterion::MallowsCp => Criterion::MallowsCp,
            NetregCriterion::Gcv => Criterion::Gcv,
            NetregCriterion::LeaveOneOut => Criterion::LeaveOneOut,
        };
        let parameter = (!o.parameter.is_nan()).then_some(o.parameter);
        let regularized = |kind| Method::Regularized {
            kind,
            parameter,
            criterion,
            grid: None,
        };
        let method = match o.method {
            NetregMethod::Classical => Method::Classical,
            NetregMethod::BiasCorrected => Method::BiasCorrected,
            NetregMethod::Tikhonov => regularized(SchemeKind::Tikhonov),
            NetregMethod::LandweberFridman => regularized(SchemeKind::LandweberFridman),
            NetregMethod::PrincipalComponents => regularized(SchemeKind::PrincipalComponents),
        };
        let opts = InstrumentOptions {
            order: (o.order > 0).then_some(o.order),
            bonacich: o.bonacich,
            m_lags: o.m_lags,
            ..InstrumentOptions::default()
        };
        let fs = first_stage(network, data, &opts)?;
        let inner = fs.estimate(&method)?;
        put(
            out,
            NetregResult {
                inner,
                rho_degenerate: fs.rho.degenerate,
            },
        )
    })
}

/// Number of coefficients: 1 + k1 + k2.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_dim(r: *const NetregResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.delta.len())
}

unsafe fn copy_out(src: &DVector<f64>, dst: *mut f64, len: usize) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err(Fail(
            NetregStatus::InvalidArgument,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Writes (λ̂, β̂₁, β̂₂) into `buf`, which holds `len` doubles.
///
/// # Safety
/// `r` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_coefficients(r: *const NetregResult, buf: *mut f64, len: usize) -> NetregStatus {
    guard(|| copy_out(&get(r, "result")?.inner.delta, buf, len))
}

/// # Safety
/// `r` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_std_errors(r: *const NetregResult, buf: *mut f64, len: usize) -> NetregStatus {
    guard(|| copy_out(&get(r, "result")?.inner.std_errors, buf, len))
}

/// Preliminary ρ̃; NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_rho(r: *const NetregResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.rho_tilde)
}

/// True when the moment objective for ρ̃ was flat and ρ̃ fell back to 0.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_rho_degenerate(r: *const NetregResult) -> bool {
    r.as_ref().is_some_and(|r| r.rho_degenerate)
}

/// Regularization parameter α of the projector used: the Tikhonov penalty,
/// or the reciprocal of the iteration or component count. The bias-corrected
/// method reports its full principal-components projector. NaN for classical
/// 2SLS.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_alpha(r: *const NetregResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.alpha())
}

/// The parameter in its natural unit: α for Tikhonov, iterations for
/// Landweber-Fridman, components for principal components. NaN for classical
/// 2SLS.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_parameter(r: *const NetregResult) -> f64 {
    r.as_ref().and_then(|r| r.inner.scheme).map_or(f64::NAN, |s| s.parameter())
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_sigma2(r: *const NetregResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.sigma2_hat)
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn netreg_result_free(r: *mut NetregResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

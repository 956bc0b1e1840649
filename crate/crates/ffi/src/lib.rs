//! C ABI over `embedtube`.
//!
//! Operators and embeddings are opaque heap handles released with their
//! `*_free` function. Every fallible call returns an [`EtStatus`]; on failure
//! the message is kept per thread and can be copied out with
//! [`et_last_error_message`]. Point arrays are row-major `n x dim`.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use embedtube::bootstrap::bootstrap_operator;
use embedtube::concentration::{bernstein_bound, BernsteinInputs};
use embedtube::kernels::{embed_sample, mmd};
use embedtube::operator::operator_diff_norm;
use embedtube::tube::{propagate_tube, radius_recursion};
use embedtube::{Embedding, Error, FittedOperator, KernelSpec, OperatorNorms, PairedDataset, PointSet};
use nalgebra::DVector;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// Fitted embedded transfer operator.
pub struct EtOperator(FittedOperator);

/// Weighted kernel mean embedding.
pub struct EtEmbedding(Embedding);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> EtStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::KernelMismatch => EtStatus::DimensionMismatch,
        Error::LengthMismatch { .. } | Error::InvalidArgument { .. } | Error::Empty(_) => EtStatus::InvalidArgument,
        Error::NonFinite(_) | Error::NonFiniteDrift { .. } | Error::Factorization(_) => EtStatus::Numerical,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Format { .. } => EtStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EtStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            EtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            EtStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, name: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

unsafe fn points(data: *const f64, n: usize, dim: usize, name: &'static str) -> Result<PointSet, Failure> {
    let len = n.checked_mul(dim).ok_or(Failure::Lib(Error::Empty(name)))?;
    Ok(PointSet::new(input(data, len, name)?.to_vec(), dim)?)
}

fn spec_for(bandwidth: f64, x: &PointSet) -> Result<KernelSpec, Error> {
    if bandwidth > 0.0 {
        KernelSpec::gaussian_rbf(bandwidth)
    } else {
        KernelSpec::median_heuristic(x)
    }
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `capacity` bytes. Returns the full message length.
///
/// # Safety
/// `buffer` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn et_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buffer.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n) = 0;
        }
        msg.len()
    })
}

/// Fits an operator on `m` pairs. A `bandwidth <= 0` selects the median
/// heuristic on `x`.
///
/// # Safety
/// `x` and `y` must each hold `m * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_operator_fit(
    x: *const f64,
    y: *const f64,
    m: usize,
    dim: usize,
    lambda: f64,
    bandwidth: f64,
    out: *mut *mut EtOperator,
) -> EtStatus {
    guard(|| {
        let xs = points(x, m, dim, "x")?;
        let ys = points(y, m, dim, "y")?;
        let spec = spec_for(bandwidth, &xs)?;
        let data = PairedDataset::new(xs, ys, 1.0, 0)?;
        let op = FittedOperator::fit(&data, lambda, spec)?;
        write(out, Box::into_raw(Box::new(EtOperator(op))), "out")
    })
}

/// # Safety
/// `op` must be null or a handle from [`et_operator_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn et_operator_free(op: *mut EtOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Kernel length-scale used by the operator.
///
/// # Safety
/// `op` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_operator_bandwidth(op: *const EtOperator, out: *mut f64) -> EtStatus {
    guard(|| write(out, nonnull(op, "op")?.0.spec().bandwidth, "out"))
}

/// `|P|` over the embedding space.
///
/// # Safety
/// `op` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_operator_norm(op: *const EtOperator, out: *mut f64) -> EtStatus {
    guard(|| write(out, nonnull(op, "op")?.0.operator_norm(), "out"))
}

/// `|P_a - P_b|`; both operators must share kernel and dimension.
///
/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_operator_diff_norm(a: *const EtOperator, b: *const EtOperator, out: *mut f64) -> EtStatus {
    guard(|| {
        let d = operator_diff_norm(&nonnull(a, "a")?.0, &nonnull(b, "b")?.0)?;
        write(out, d, "out")
    })
}

/// Bootstrap quantile of the operator deviation. `deviations`, if not null,
/// receives the `m_b` sorted deviations.
///
/// # Safety
/// `op` must be a live handle, `delta` writable and `deviations` null or
/// writable for `m_b` doubles.
#[no_mangle]
pub unsafe extern "C" fn et_bootstrap_delta(
    op: *const EtOperator,
    m_b: usize,
    alpha: f64,
    seed: u64,
    delta: *mut f64,
    deviations: *mut f64,
) -> EtStatus {
    guard(|| {
        let summary = bootstrap_operator(&nonnull(op, "op")?.0, m_b, alpha, seed)?;
        if !deviations.is_null() {
            output(deviations, m_b, "deviations")?.copy_from_slice(&summary.deviations);
        }
        write(delta, summary.quantile_delta, "delta")
    })
}

/// Uniform-weight embedding of `n` sample points.
///
/// # Safety
/// `data` must hold `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_embedding_from_sample(
    data: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut EtEmbedding,
) -> EtStatus {
    guard(|| {
        let mu = embed_sample(points(data, n, dim, "data")?)?;
        write(out, Box::into_raw(Box::new(EtEmbedding(mu))), "out")
    })
}

/// Embedding with explicit weights.
///
/// # Safety
/// `data` must hold `n * dim` doubles and `weights` `n` doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn et_embedding_new(
    data: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut EtEmbedding,
) -> EtStatus {
    guard(|| {
        let anchors = Arc::new(points(data, n, dim, "data")?);
        let w = DVector::from_column_slice(input(weights, n, "weights")?);
        let mu = Embedding::new(anchors, w)?;
        write(out, Box::into_raw(Box::new(EtEmbedding(mu))), "out")
    })
}

/// # Safety
/// `mu` must be null or a live embedding handle.
#[no_mangle]
pub unsafe extern "C" fn et_embedding_free(mu: *mut EtEmbedding) {
    if !mu.is_null() {
        drop(Box::from_raw(mu));
    }
}

/// Number of anchors, 0 for a null handle.
///
/// # Safety
/// `mu` must be null or a live embedding handle.
#[no_mangle]
pub unsafe extern "C" fn et_embedding_len(mu: *const EtEmbedding) -> usize {
    mu.as_ref().map_or(0, |m| m.0.len())
}

/// Copies the weights into `buffer`, which must have room for
/// [`et_embedding_len`] doubles.
///
/// # Safety
/// `mu` must be a live handle and `buffer` writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn et_embedding_weights(mu: *const EtEmbedding, buffer: *mut f64, capacity: usize) -> EtStatus {
    guard(|| {
        let w = nonnull(mu, "mu")?.0.weights();
        if capacity < w.len() {
            return Err(Error::LengthMismatch { what: "weight buffer", left: capacity, right: w.len() }.into());
        }
        output(buffer, w.len(), "buffer")?.copy_from_slice(w.as_slice());
        Ok(())
    })
}

/// `P mu`, anchored at the operator's training outputs.
///
/// # Safety
/// `op`, `mu` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_pushforward(op: *const EtOperator, mu: *const EtEmbedding, out: *mut *mut EtEmbedding) -> EtStatus {
    guard(|| {
        let pushed = nonnull(op, "op")?.0.pushforward(&nonnull(mu, "mu")?.0)?;
        write(out, Box::into_raw(Box::new(EtEmbedding(pushed))), "out")
    })
}

/// MMD between two embeddings under a Gaussian RBF kernel of the given
/// length-scale.
///
/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn et_mmd(a: *const EtEmbedding, b: *const EtEmbedding, bandwidth: f64, out: *mut f64) -> EtStatus {
    guard(|| {
        let spec = KernelSpec::gaussian_rbf(bandwidth)?;
        write(out, mmd(&nonnull(a, "a")?.0, &nonnull(b, "b")?.0, &spec)?, "out")
    })
}

/// Radius recursion on given center norms: fills `radii[0..=n]`.
///
/// # Safety
/// `center_norms` must hold `n` doubles and `radii` have room for `n + 1`.
#[no_mangle]
pub unsafe extern "C" fn et_tube_radii(
    e_norm: f64,
    f_norm: f64,
    rho0: f64,
    center_norms: *const f64,
    n: usize,
    radii: *mut f64,
) -> EtStatus {
    guard(|| {
        let norms = OperatorNorms::new(e_norm, f_norm)?;
        let r = radius_recursion(&norms, rho0, input(center_norms, n, "center_norms")?)?;
        output(radii, n + 1, "radii")?.copy_from_slice(&r);
        Ok(())
    })
}

/// Propagates `initial` for `horizon` steps with `E = |P|` and the given
/// `F`, filling `radii` and `embedding_norms` (each `horizon + 1` long).
/// `embedding_norms` may be null.
///
/// # Safety
/// `op`, `initial` must be live handles; output buffers as described.
#[no_mangle]
pub unsafe extern "C" fn et_propagate_tube(
    op: *const EtOperator,
    initial: *const EtEmbedding,
    rho0: f64,
    horizon: usize,
    f_norm: f64,
    radii: *mut f64,
    embedding_norms: *mut f64,
) -> EtStatus {
    guard(|| {
        let op = &nonnull(op, "op")?.0;
        let norms = OperatorNorms::new(op.operator_norm(), f_norm)?;
        let tube = propagate_tube(op, &nonnull(initial, "initial")?.0, rho0, horizon, norms)?;
        output(radii, horizon + 1, "radii")?.copy_from_slice(&tube.radii());
        if !embedding_norms.is_null() {
            output(embedding_norms, horizon + 1, "embedding_norms")?.copy_from_slice(&tube.embedding_norms());
        }
        Ok(())
    })
}

/// Bernstein-type high-probability bound on the operator estimation error.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_bernstein_bound(
    lambda: f64,
    m: usize,
    delta_conf: f64,
    sigma_t: f64,
    sigma_0: f64,
    hs_norm_cyx: f64,
    l: f64,
    out: *mut f64,
) -> EtStatus {
    guard(|| {
        let b = bernstein_bound(&BernsteinInputs { lambda, m, delta_conf, sigma_t, sigma_0, hs_norm_cyx, l })?;
        write(out, b, "out")
    })
}

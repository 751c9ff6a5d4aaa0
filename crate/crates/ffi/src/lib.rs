//! C interface to `meshmorph`.
//!
//! Every fallible function returns an [`MmStatus`]; on failure the message is
//! kept per thread and can be fetched with [`mm_last_error_message`].
//! Objects cross the boundary as opaque handles released by their `_free`
//! function. Point arrays are row-major `n × dim` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use meshmorph::experiment::run_experiment;
use meshmorph::interpolation::{DeformationInterpolant, EvalShapeVector};
use meshmorph::io::{read_config, write_mesh, MeshFile};
use meshmorph::kernel::{find_shape_parameter, matern_c4, KernelConfig};
use meshmorph::mesh::{tessellate, QualityReport, SimplicialMesh, Stencils};
use meshmorph::smoothing::SmoothingRun;
use meshmorph::{Error, Points};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Degenerate = 4,
    Io = 5,
    Config = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> MmStatus {
    match err {
        Error::InvalidArgument(_) | Error::DistinctCenters { .. } | Error::NoBoundary | Error::OffBoundary { .. } => {
            MmStatus::InvalidArgument
        }
        Error::Degenerate(_) => MmStatus::Degenerate,
        Error::Io(_) => MmStatus::Io,
        Error::Config { .. } | Error::Parse { .. } => MmStatus::Config,
        Error::Bracket { .. } | Error::InfeasibleSpacing { .. } | Error::Numerical(_) => MmStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status plus stored message.
fn guard(f: impl FnOnce() -> Result<(), (MmStatus, String)>) -> MmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MmStatus::Panic
        }
    }
}

fn lib(e: Error) -> (MmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MmStatus, String) {
    (MmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (MmStatus, String) {
    (MmStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `data` must point to `n * dim` readable doubles when `n > 0`.
unsafe fn read_points(data: *const f64, n: usize, dim: usize, what: &str) -> Result<Points, (MmStatus, String)> {
    if dim != 2 && dim != 3 {
        return Err(invalid(format!("dimension must be 2 or 3, got {dim}")));
    }
    if n == 0 {
        return Ok(Points::empty(dim));
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(Points::new(dim, slice::from_raw_parts(data, n * dim).to_vec()))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), (MmStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, len: usize, what: &str) -> Result<(), (MmStatus, String)> {
    if len < src.len() {
        return Err((
            MmStatus::BufferTooSmall,
            format!("{what} needs {} entries, buffer holds {len}", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(null(what));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

unsafe fn read_path(p: *const c_char) -> Result<String, (MmStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating NUL; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn mm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copies the last error message (NUL-terminated) into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mm_last_error_message(buf: *mut c_char, len: usize) -> MmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone()).unwrap_or_default();
    let bytes = msg.as_bytes_with_nul();
    if buf.is_null() {
        return MmStatus::NullPointer;
    }
    if len < bytes.len() {
        return MmStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    MmStatus::Ok
}

/// φ(εr) = (3 + 3εr + ε²r²)e^{−εr}.
///
/// # Safety
/// `out` must be a valid pointer to one double.
#[no_mangle]
pub unsafe extern "C" fn mm_matern_c4(eps: f64, r: f64, out: *mut f64) -> MmStatus {
    guard(|| {
        let v = matern_c4(eps, r).map_err(lib)?;
        write_out(out, v, "out")
    })
}

/// Shape parameter ε* whose interpolation matrix on `centers` has one-norm
/// condition number `target_condition` (the default bracket is searched).
///
/// # Safety
/// `centers` must hold `n * dim` doubles; `out_eps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mm_find_shape_parameter(
    centers: *const f64,
    n: usize,
    dim: usize,
    target_condition: f64,
    out_eps: *mut f64,
) -> MmStatus {
    guard(|| {
        let x = read_points(centers, n, dim, "centers")?;
        let cfg = KernelConfig {
            target_condition,
            ..KernelConfig::default()
        };
        let eps = find_shape_parameter(&x, &cfg).map_err(lib)?;
        write_out(out_eps, eps, "out_eps")
    })
}

/// Fitted vector-valued interpolant.
pub struct MmInterpolant(DeformationInterpolant);

/// Fits an interpolant to `targets` (n × dim) at `sites` (n × dim).
///
/// # Safety
/// Arrays must hold `n * dim` doubles; `out` must be writable. The handle
/// written to `out` is released with [`mm_interpolant_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_interpolant_fit(
    sites: *const f64,
    targets: *const f64,
    n: usize,
    dim: usize,
    eps_star: f64,
    out: *mut *mut MmInterpolant,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = read_points(sites, n, dim, "sites")?;
        let y = read_points(targets, n, dim, "targets")?;
        let f = DeformationInterpolant::fit(&x, &y, eps_star).map_err(lib)?;
        out.write(Box::into_raw(Box::new(MmInterpolant(f))));
        Ok(())
    })
}

/// Evaluates at `n` points. `eps` holds one shape parameter per point, or is
/// null to use the fitted ε* everywhere. Writes `n * dim` doubles to `out`.
///
/// # Safety
/// `interp` must come from [`mm_interpolant_fit`]; `points` and `out` must
/// hold `n * dim` doubles and `eps` (if non-null) `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_interpolant_evaluate(
    interp: *const MmInterpolant,
    points: *const f64,
    n: usize,
    eps: *const f64,
    out: *mut f64,
) -> MmStatus {
    guard(|| {
        let f = &interp.as_ref().ok_or_else(|| null("interpolant"))?.0;
        let p = read_points(points, n, f.dim(), "points")?;
        let shape = if eps.is_null() {
            EvalShapeVector::uniform(f.eps_fit(), n)
        } else {
            EvalShapeVector::new(slice::from_raw_parts(eps, n).to_vec())
        }
        .map_err(lib)?;
        let y = f.evaluate_pointwise(&p, &shape).map_err(lib)?;
        copy_out(y.as_slice(), out, n * f.components(), "out")
    })
}

/// Shape parameter the interpolant was fitted with.
///
/// # Safety
/// `interp` must come from [`mm_interpolant_fit`] or be null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn mm_interpolant_eps(interp: *const MmInterpolant) -> f64 {
    interp.as_ref().map_or(f64::NAN, |f| f.0.eps_fit())
}

/// # Safety
/// `interp` must come from [`mm_interpolant_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mm_interpolant_free(interp: *mut MmInterpolant) {
    if !interp.is_null() {
        drop(Box::from_raw(interp));
    }
}

/// Simplicial mesh with its quality fields.
pub struct MmMesh {
    mesh: SimplicialMesh,
    report: QualityReport,
}

impl MmMesh {
    fn new(mesh: SimplicialMesh) -> Self {
        let report = QualityReport::compute(&mesh, &Stencils::build(&mesh));
        MmMesh { mesh, report }
    }
}

/// Delaunay tessellation of `n` points (triangles in 2D, tetrahedra in 3D).
///
/// # Safety
/// `points` must hold `n * dim` doubles; `out` must be writable. Release the
/// handle with [`mm_mesh_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_tessellate(points: *const f64, n: usize, dim: usize, out: *mut *mut MmMesh) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = read_points(points, n, dim, "points")?;
        let mesh = tessellate(&p).map_err(lib)?;
        out.write(Box::into_raw(Box::new(MmMesh::new(mesh))));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_num_vertices(mesh: *const MmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.num_vertices())
}

/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_num_elements(mesh: *const MmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.num_elements())
}

/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_dim(mesh: *const MmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.dim())
}

/// Copies the connectivity (`num_elements × (dim + 1)` indices) into `out`.
///
/// # Safety
/// `mesh` must be a live handle; `out` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_elements(mesh: *const MmMesh, out: *mut usize, len: usize) -> MmStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        copy_out(m.mesh.connectivity(), out, len, "out")
    })
}

/// Copies the per-element quality q_e (one value per element) into `out`.
///
/// # Safety
/// `mesh` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_element_quality(mesh: *const MmMesh, out: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        copy_out(&m.report.q_e, out, len, "out")
    })
}

/// Copies the per-vertex quality q_y (one value per vertex) into `out`.
///
/// # Safety
/// `mesh` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_vertex_quality(mesh: *const MmMesh, out: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        copy_out(&m.report.q_y, out, len, "out")
    })
}

/// Number of elements with nonpositive orientation.
///
/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_inverted_count(mesh: *const MmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.report.inverted_count)
}

/// Writes the mesh with `q_e` and `q_y` fields as legacy ASCII VTK.
///
/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_write_vtk(mesh: *const MmMesh, path: *const c_char) -> MmStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        let path = read_path(path)?;
        let file = MeshFile::new(m.mesh.clone())
            .with_point_field("q_y", m.report.q_y.clone())
            .with_cell_field("q_e", m.report.q_e.clone());
        write_mesh(path, &file).map_err(lib)
    })
}

/// # Safety
/// `mesh` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mm_mesh_free(mesh: *mut MmMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Finished smoothing run.
pub struct MmRun(SmoothingRun);

/// Runs the experiment described by a config file (output files are written
/// to its `output_dir`).
///
/// # Safety
/// `config_path` must be a NUL-terminated UTF-8 string; `out` must be
/// writable. Release the handle with [`mm_run_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_run_config(config_path: *const c_char, out: *mut *mut MmRun) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_path(config_path)?;
        let cfg = read_config(path, &[]).map_err(lib)?;
        let exp = run_experiment(&cfg).map_err(lib)?;
        out.write(Box::into_raw(Box::new(MmRun(exp.run))));
        Ok(())
    })
}

/// Number of recorded ‖q_e‖₂ values.
///
/// # Safety
/// `run` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_run_history_len(run: *const MmRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.history.len())
}

/// Copies the ‖q_e‖₂ history into `out`.
///
/// # Safety
/// `run` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mm_run_history(run: *const MmRun, out: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        copy_out(&r.0.history, out, len, "out")
    })
}

/// History index of the returned mesh.
///
/// # Safety
/// `run` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mm_run_best_iteration(run: *const MmRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.best)
}

/// # Safety
/// `run` must be a live handle or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn mm_run_eps_star(run: *const MmRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.0.eps_star)
}

/// New mesh handle holding a copy of the best mesh of the run.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mm_run_best_mesh(run: *const MmRun, out: *mut *mut MmMesh) -> MmStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(Box::into_raw(Box::new(MmMesh::new(r.0.best_mesh().clone()))));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`mm_run_config`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mm_run_free(run: *mut MmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

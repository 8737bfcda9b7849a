//! C ABI over the o3dsim engine.
//!
//! Every fallible function returns an [`O3dStatus`]; on failure the message
//! is available from [`o3d_last_error`] on the same thread. Maps are opaque
//! [`O3dMap`] handles released with [`o3d_map_free`]. Points are passed as
//! packed `x, y, z` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use o3dsim::embedding::semantic_similarity;
use o3dsim::frame::{parse_frame_record, parse_header};
use o3dsim::geometry::{nnratio, Point, PointCloud};
use o3dsim::map::{build_map, export_map, load_map, ExportOptions, InstanceMap, MergeConfig};
use o3dsim::nav::{answer, NavConfig, Query};
use o3dsim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum O3dStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    NotFound = 5,
    NoInstances = 6,
    RankOutOfRange = 7,
    InvalidStart = 8,
    Unreachable = 9,
    InvalidState = 10,
    Panic = 11,
}

/// Opaque instance map.
pub struct O3dMap {
    inner: InstanceMap,
}

/// Merge parameters. Background labels are always the engine defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O3dMergeConfig {
    pub delta_nn: f64,
    pub tau_geo: f64,
    pub tau_sem: f64,
    pub tau_refine: f64,
    pub voxel_size: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub min_points: usize,
    pub min_detections: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O3dNavConfig {
    pub cell_size: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub floor_z: f64,
    pub robot_radius: f64,
    pub grid_padding: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O3dGoal {
    pub x: f64,
    pub y: f64,
    pub row: usize,
    pub col: usize,
    pub node_id: u32,
    /// Cosine similarity of the selected node to the query.
    pub score: f64,
}

impl From<&O3dMergeConfig> for MergeConfig {
    fn from(c: &O3dMergeConfig) -> Self {
        MergeConfig {
            delta_nn: c.delta_nn,
            tau_geo: c.tau_geo,
            tau_sem: c.tau_sem,
            tau_refine: c.tau_refine,
            voxel_size: c.voxel_size,
            dbscan_eps: c.dbscan_eps,
            dbscan_min_pts: c.dbscan_min_pts,
            min_points: c.min_points,
            min_detections: c.min_detections,
            ..MergeConfig::default()
        }
    }
}

impl From<&O3dNavConfig> for NavConfig {
    fn from(c: &O3dNavConfig) -> Self {
        NavConfig {
            cell_size: c.cell_size,
            z_min: c.z_min,
            z_max: c.z_max,
            floor_z: c.floor_z,
            robot_radius: c.robot_radius,
            grid_padding: c.grid_padding,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> O3dStatus {
    match e {
        Error::Frame { .. } | Error::Header(_) | Error::Format { .. } => O3dStatus::ParseError,
        Error::Parameter { .. } | Error::UndefinedInput(_) | Error::Packing(_) => O3dStatus::InvalidArgument,
        Error::State(_) => O3dStatus::InvalidState,
        Error::NoInstances => O3dStatus::NoInstances,
        Error::RankOutOfRange { .. } => O3dStatus::RankOutOfRange,
        Error::NodeNotFound(_) | Error::MapNotFound(_) => O3dStatus::NotFound,
        Error::InvalidStart { .. } => O3dStatus::InvalidStart,
        Error::Unreachable => O3dStatus::Unreachable,
        Error::Io { .. } => O3dStatus::IoError,
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Engine(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Engine(e)
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> O3dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            O3dStatus::Ok
        }
        Ok(Err(Fail::Null(name))) => {
            set_last_error(&format!("`{name}` is null"));
            O3dStatus::NullArgument
        }
        Ok(Err(Fail::Utf8(name))) => {
            set_last_error(&format!("`{name}` is not valid UTF-8"));
            O3dStatus::InvalidArgument
        }
        Ok(Err(Fail::Engine(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            O3dStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn cloud_arg(p: *const f64, count: usize, name: &'static str) -> Result<PointCloud, Fail> {
    let xyz = slice_arg(p, count.checked_mul(3).ok_or(Fail::Null(name))?, name)?;
    Ok(xyz.chunks_exact(3).map(|c| Point::new(c[0], c[1], c[2])).collect())
}

fn merge_arg(cfg: *const O3dMergeConfig) -> MergeConfig {
    // SAFETY: callers pass either null or a valid config pointer.
    unsafe { cfg.as_ref() }.map_or_else(MergeConfig::default, MergeConfig::from)
}

fn store_map(out: *mut *mut O3dMap, inner: InstanceMap) {
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(O3dMap { inner })) };
}

#[no_mangle]
pub extern "C" fn o3d_merge_config_default() -> O3dMergeConfig {
    let d = MergeConfig::default();
    O3dMergeConfig {
        delta_nn: d.delta_nn,
        tau_geo: d.tau_geo,
        tau_sem: d.tau_sem,
        tau_refine: d.tau_refine,
        voxel_size: d.voxel_size,
        dbscan_eps: d.dbscan_eps,
        dbscan_min_pts: d.dbscan_min_pts,
        min_points: d.min_points,
        min_detections: d.min_detections,
    }
}

#[no_mangle]
pub extern "C" fn o3d_nav_config_default() -> O3dNavConfig {
    let d = NavConfig::default();
    O3dNavConfig {
        cell_size: d.cell_size,
        z_min: d.z_min,
        z_max: d.z_max,
        floor_z: d.floor_z,
        robot_radius: d.robot_radius,
        grid_padding: d.grid_padding,
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn o3d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn o3d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty map. `config` may be null for defaults.
///
/// # Safety
/// `config` must be null or point to a valid config; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_new(config: *const O3dMergeConfig, out: *mut *mut O3dMap) -> O3dStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        store_map(out, InstanceMap::new(merge_arg(config))?);
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle from this library that is not yet freed.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_free(map: *mut O3dMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Reads a frame-record file and runs the full pipeline: update with every
/// frame, refine, finalize.
///
/// # Safety
/// `path` must be a NUL-terminated string; `config` null or valid; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_build_from_file(
    path: *const c_char,
    config: *const O3dMergeConfig,
    out: *mut *mut O3dMap,
) -> O3dStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let seq = o3dsim::frame::read_frame_file(Path::new(path))?;
        let (map, _) = build_map(&seq.frames, merge_arg(config))?;
        store_map(out, map);
        Ok(())
    })
}

/// Integrates one frame: `header_json` is the sequence header line,
/// `frame_json` one frame-record line. Relative depth PNG paths resolve
/// against `base_dir`, which may be null when depth is inline.
///
/// # Safety
/// `map` must be a live handle; the strings NUL-terminated (or null where
/// allowed).
#[no_mangle]
pub unsafe extern "C" fn o3d_map_update_json(
    map: *mut O3dMap,
    header_json: *const c_char,
    frame_json: *const c_char,
    base_dir: *const c_char,
) -> O3dStatus {
    guard(|| {
        let map = map.as_mut().ok_or(Fail::Null("map"))?;
        let header = parse_header(str_arg(header_json, "header_json")?.as_bytes())?;
        let base = if base_dir.is_null() { None } else { Some(Path::new(str_arg(base_dir, "base_dir")?)) };
        let frame = parse_frame_record(str_arg(frame_json, "frame_json")?.as_bytes(), &header, base)?;
        map.inner.update(&frame)?;
        Ok(())
    })
}

/// # Safety
/// `map` must be a live handle; `absorbed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_refine(map: *mut O3dMap, absorbed: *mut usize) -> O3dStatus {
    guard(|| {
        let map = map.as_mut().ok_or(Fail::Null("map"))?;
        let n = map.inner.refine()?;
        if let Some(a) = absorbed.as_mut() {
            *a = n;
        }
        Ok(())
    })
}

/// # Safety
/// `map` must be a live handle; `dropped` null or writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_finalize(map: *mut O3dMap, dropped: *mut usize) -> O3dStatus {
    guard(|| {
        let map = map.as_mut().ok_or(Fail::Null("map"))?;
        let n = map.inner.finalize();
        if let Some(d) = dropped.as_mut() {
            *d = n;
        }
        Ok(())
    })
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_node_count(map: *const O3dMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.len())
}

/// Copies up to `capacity` node ids, ascending, into `ids` and stores the
/// total node count in `total`.
///
/// # Safety
/// `map` must be a live handle; `ids` writable for `capacity` elements;
/// `total` null or writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_node_ids(
    map: *const O3dMap,
    ids: *mut u32,
    capacity: usize,
    total: *mut usize,
) -> O3dStatus {
    guard(|| {
        let map = map.as_ref().ok_or(Fail::Null("map"))?;
        if capacity > 0 && ids.is_null() {
            return Err(Fail::Null("ids"));
        }
        for (i, n) in map.inner.nodes().take(capacity).enumerate() {
            *ids.add(i) = n.node_id;
        }
        if let Some(t) = total.as_mut() {
            *t = map.inner.len();
        }
        Ok(())
    })
}

/// Writes the map directory: manifest plus per-node and scene PLYs.
///
/// # Safety
/// `map` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_export(map: *const O3dMap, dir: *const c_char) -> O3dStatus {
    guard(|| {
        let map = map.as_ref().ok_or(Fail::Null("map"))?;
        export_map(&map.inner, Path::new(str_arg(dir, "dir")?), &ExportOptions::default())?;
        Ok(())
    })
}

/// # Safety
/// `dir` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_load(dir: *const c_char, out: *mut *mut O3dMap) -> O3dStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let (map, _) = load_map(Path::new(dir))?;
        store_map(out, map);
        Ok(())
    })
}

/// Ranks nodes against `embedding`, picks the `instance_rank`-th (1-based),
/// and returns the reachable goal cell nearest to it from `(start_x,
/// start_y)`. `nav` may be null for defaults.
///
/// # Safety
/// `map` must be a live handle; `embedding` readable for `dim` doubles;
/// `nav` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_map_query(
    map: *const O3dMap,
    embedding: *const f64,
    dim: usize,
    instance_rank: usize,
    start_x: f64,
    start_y: f64,
    nav: *const O3dNavConfig,
    out: *mut O3dGoal,
) -> O3dStatus {
    guard(|| {
        let map = map.as_ref().ok_or(Fail::Null("map"))?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let query = Query::new("", slice_arg(embedding, dim, "embedding")?, instance_rank)?;
        let nav = nav.as_ref().map_or_else(NavConfig::default, NavConfig::from);
        let a = answer(&map.inner, &query, [start_x, start_y], &nav)?;
        *out = O3dGoal {
            x: a.goal.x,
            y: a.goal.y,
            row: a.goal.row,
            col: a.goal.col,
            node_id: a.goal.node_id,
            score: a.ranked[query.instance_rank - 1].score,
        };
        Ok(())
    })
}

/// Fraction of `source` points with a `target` point within `delta`.
///
/// # Safety
/// `source` readable for `3 * n_source` doubles, `target` for
/// `3 * n_target`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_nnratio(
    source: *const f64,
    n_source: usize,
    target: *const f64,
    n_target: usize,
    delta: f64,
    out: *mut f64,
) -> O3dStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let s = cloud_arg(source, n_source, "source")?;
        let t = cloud_arg(target, n_target, "target")?;
        *out = nnratio(&s, &t, delta)?;
        Ok(())
    })
}

/// `(1 + cos(a, b)) / 2`.
///
/// # Safety
/// `a` and `b` readable for `dim` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn o3d_semantic_similarity(
    a: *const f64,
    b: *const f64,
    dim: usize,
    out: *mut f64,
) -> O3dStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        *out = semantic_similarity(slice_arg(a, dim, "a")?, slice_arg(b, dim, "b")?)?;
        Ok(())
    })
}

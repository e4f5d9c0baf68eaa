//! C ABI over `cdnsim`.
//!
//! Objects cross the boundary as opaque handles (`CdnTopology`, `CdnModel`)
//! created by `*_new`/`*_from_*` functions and released with the matching
//! `*_free`. Every fallible call returns a [`CdnStatus`]; on failure
//! [`cdn_last_error`] describes the problem. Strings handed out by the
//! library are NUL-terminated, owned by the caller and released with
//! [`cdn_string_free`].
//!
//! The header `include/cdnsim.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdnsim::assignment::{evaluate_assignment, greedy_correlation, relocate_servers};
use cdnsim::cache::{replay, CacheConfig, CacheStats, Policy};
use cdnsim::cli::load_topology;
use cdnsim::pareto::{front_sweep, write_front_csv};
use cdnsim::placement::{closest_assignment, dragoon};
use cdnsim::profiles::{generate_users, load_trace, spearman, Profile, Universe};
use cdnsim::simulation::{optimize, run_with, Scenario, Strategy};
use cdnsim::topology::{all_pairs_shortest_paths, GraphmlOptions};
use cdnsim::{DistanceMatrix, Error, Instance, Placement, Topology, UserGroup, ZipfModel};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdnStatus {
    Ok = 0,
    /// Invalid input data or configuration.
    Invalid = 1,
    /// Server count outside `1..=sites` or search space too large.
    Infeasible = 2,
    Io = 3,
    /// A required pointer argument was null or a string was not UTF-8.
    BadArgument = 4,
    /// Internal panic; the library state is unchanged.
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdnPolicy {
    Lru = 0,
    Lru2 = 1,
    Lfu = 2,
    Lirs = 3,
    Belady = 4,
}

impl From<CdnPolicy> for Policy {
    fn from(p: CdnPolicy) -> Self {
        match p {
            CdnPolicy::Lru => Policy::Lru,
            CdnPolicy::Lru2 => Policy::Lru2,
            CdnPolicy::Lfu => Policy::Lfu,
            CdnPolicy::Lirs => Policy::Lirs,
            CdnPolicy::Belady => Policy::Belady,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdnStrategy {
    Distance = 0,
    Correlation = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CdnCacheStats {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub cold_misses: u64,
    pub miss_ratio: f64,
}

impl From<CacheStats> for CdnCacheStats {
    fn from(s: CacheStats) -> Self {
        CdnCacheStats {
            requests: s.requests,
            hits: s.hits,
            misses: s.misses,
            cold_misses: s.cold_misses,
            miss_ratio: s.miss_ratio(),
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CdnSimSummary {
    pub cache: CdnCacheStats,
    pub max_user_distance: f64,
    pub avg_user_distance: f64,
    pub network_load: f64,
}

/// Opaque network graph.
pub struct CdnTopology {
    topology: Topology,
}

/// Opaque topology plus distances and user groups.
pub struct CdnModel {
    topology: Topology,
    dm: DistanceMatrix,
    users: Vec<UserGroup>,
}

impl CdnModel {
    fn new(topology: Topology, users: Vec<UserGroup>) -> cdnsim::Result<Self> {
        let dm = all_pairs_shortest_paths(&topology);
        Instance::new(&topology, &dm, &users)?;
        Ok(CdnModel { topology, dm, users })
    }

    fn instance(&self) -> Instance<'_> {
        Instance::new(&self.topology, &self.dm, &self.users).expect("validated at construction")
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Lib(Error),
    Arg(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CdnStatus::Ok
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            CdnStatus::BadArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            match e.exit_code() {
                2 => CdnStatus::Infeasible,
                3 => CdnStatus::Io,
                _ => CdnStatus::Invalid,
            }
        }
        Err(_) => {
            set_error("internal panic");
            CdnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Arg(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Arg(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cdn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cdn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a GraphML file, a JSON topology dump, or `random:NODES:EDGES[:SEED]`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_topology_load(spec: *const c_char, out: *mut *mut CdnTopology) -> CdnStatus {
    guard(|| {
        let out = out_arg(out, "out is null")?;
        let spec = str_arg(spec, "spec is null or not UTF-8")?;
        let topology = load_topology(spec, &GraphmlOptions::default())?;
        *out = Box::into_raw(Box::new(CdnTopology { topology }));
        Ok(())
    })
}

/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cdn_topology_node_count(t: *const CdnTopology) -> usize {
    t.as_ref().map_or(0, |t| t.topology.node_count())
}

/// # Safety
/// `t` must be null or a handle from [`cdn_topology_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdn_topology_free(t: *mut CdnTopology) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// One Zipf user group per node of `t`. The topology handle is copied and
/// stays owned by the caller.
///
/// # Safety
/// `t` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_model_zipf(
    t: *const CdnTopology,
    alpha: f64,
    universe: usize,
    profile_size: usize,
    seed: u64,
    out: *mut *mut CdnModel,
) -> CdnStatus {
    guard(|| {
        let t = handle(t, "topology is null")?;
        let out = out_arg(out, "out is null")?;
        let model = ZipfModel::new(alpha, universe, profile_size)?;
        let users = generate_users(&t.topology, &model, seed)?;
        *out = Box::into_raw(Box::new(CdnModel::new(t.topology.clone(), users)?));
        Ok(())
    })
}

/// User groups from a `node_id,service_id,count` CSV file.
///
/// # Safety
/// `t` must be a valid handle, `path` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_model_trace(
    t: *const CdnTopology,
    path: *const c_char,
    out: *mut *mut CdnModel,
) -> CdnStatus {
    guard(|| {
        let t = handle(t, "topology is null")?;
        let out = out_arg(out, "out is null")?;
        let path = str_arg(path, "path is null or not UTF-8")?;
        let users = load_trace(BufReader::new(File::open(path).map_err(Error::from)?))?;
        *out = Box::into_raw(Box::new(CdnModel::new(t.topology.clone(), users)?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a model handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdn_model_free(m: *mut CdnModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rank correlation of two probability vectors of length `n >= 2`, each
/// summing to one.
///
/// # Safety
/// `p` and `q` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_spearman(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> CdnStatus {
    guard(|| {
        let out = out_arg(out, "out is null")?;
        if p.is_null() || q.is_null() {
            return Err(Failure::Arg("input vector is null"));
        }
        let p = std::slice::from_raw_parts(p, n);
        let q = std::slice::from_raw_parts(q, n);
        let universe = Universe::numbered(n);
        let p = Profile::from_probs(universe.clone(), p.to_vec())?;
        let q = Profile::from_probs(universe, q.to_vec())?;
        *out = spearman(&p, &q)?;
        Ok(())
    })
}

/// Replays `len` item ids through a fresh cache.
///
/// # Safety
/// `trace` must point to `len` readable values (or be null with `len == 0`);
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_cache_replay(
    trace: *const u64,
    len: usize,
    policy: CdnPolicy,
    capacity: usize,
    out: *mut CdnCacheStats,
) -> CdnStatus {
    guard(|| {
        let out = out_arg(out, "out is null")?;
        let trace: &[u64] = if len == 0 {
            &[]
        } else if trace.is_null() {
            return Err(Failure::Arg("trace is null"));
        } else {
            std::slice::from_raw_parts(trace, len)
        };
        *out = replay(trace, &CacheConfig::new(policy.into(), capacity))?.into();
        Ok(())
    })
}

/// Dragoon placement of `k` servers; `placement_json` receives the sorted
/// server id list as JSON.
///
/// # Safety
/// `m` must be a valid handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_place(
    m: *const CdnModel,
    k: usize,
    placement_json: *mut *mut c_char,
    max_dist: *mut f64,
    avg_dist: *mut f64,
) -> CdnStatus {
    guard(|| {
        let m = handle(m, "model is null")?;
        let json = out_arg(placement_json, "placement_json is null")?;
        let max_dist = out_arg(max_dist, "max_dist is null")?;
        let avg_dist = out_arg(avg_dist, "avg_dist is null")?;
        let outcome = dragoon(&m.instance(), k)?;
        *json = into_c_string(outcome.placement.to_json()?);
        *max_dist = outcome.objective.max_dist;
        *avg_dist = outcome.objective.avg_dist;
        Ok(())
    })
}

/// Correlation greedy from closest assignment on `placement_json`, then
/// relocation. `assignment_json` receives a user-to-server JSON object.
///
/// # Safety
/// `m` must be a valid handle, `placement_json` NUL-terminated, out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_assign(
    m: *const CdnModel,
    placement_json: *const c_char,
    assignment_json: *mut *mut c_char,
    total_corr: *mut f64,
) -> CdnStatus {
    guard(|| {
        let m = handle(m, "model is null")?;
        let text = str_arg(placement_json, "placement_json is null or not UTF-8")?;
        let json = out_arg(assignment_json, "assignment_json is null")?;
        let total_corr = out_arg(total_corr, "total_corr is null")?;
        let inst = m.instance();
        let placement = Placement::from_json(text)?;
        let a0 = closest_assignment(&inst, &placement)?;
        let greedy = greedy_correlation(&inst, &placement, &a0)?;
        let (_, assignment) = relocate_servers(&inst, &greedy.assignment, &placement)?;
        *total_corr = evaluate_assignment(&inst, &assignment)?.total_corr;
        *json = into_c_string(assignment.to_json()?);
        Ok(())
    })
}

/// Optimizes `k` servers with `strategy` and simulates the result.
///
/// # Safety
/// `m` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_simulate(
    m: *const CdnModel,
    k: usize,
    strategy: CdnStrategy,
    policy: CdnPolicy,
    capacity: usize,
    requests_per_user: usize,
    seed: u64,
    out: *mut CdnSimSummary,
) -> CdnStatus {
    guard(|| {
        let m = handle(m, "model is null")?;
        let out = out_arg(out, "out is null")?;
        let strategy = match strategy {
            CdnStrategy::Distance => Strategy::Distance,
            CdnStrategy::Correlation => Strategy::Correlation,
        };
        let (placement, assignment) = optimize(&m.instance(), k, strategy)?;
        let scenario = Scenario {
            topology: m.topology.clone(),
            users: m.users.clone(),
            placement,
            assignment,
            cache_config: CacheConfig::new(policy.into(), capacity),
            origin: None,
            master_seed: seed,
            requests_per_user,
        };
        let r = run_with(&scenario, &m.dm)?;
        *out = CdnSimSummary {
            cache: r.overall.into(),
            max_user_distance: r.max_user_distance,
            avg_user_distance: r.avg_user_distance,
            network_load: r.network_load,
        };
        Ok(())
    })
}

/// Distance/correlation front as CSV text (same columns as the CLI's
/// `front.csv`); `points` receives the number of rows.
///
/// # Safety
/// `m` must be a valid handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdn_pareto(
    m: *const CdnModel,
    k: usize,
    steps: usize,
    seed: u64,
    csv: *mut *mut c_char,
    points: *mut usize,
) -> CdnStatus {
    guard(|| {
        let m = handle(m, "model is null")?;
        let csv = out_arg(csv, "csv is null")?;
        let points = out_arg(points, "points is null")?;
        let front = front_sweep(&m.instance(), k, steps, seed)?;
        let mut buf = Vec::new();
        write_front_csv(&front, &mut buf)?;
        *csv = into_c_string(String::from_utf8(buf).expect("csv writer emits UTF-8"));
        *points = front.len();
        Ok(())
    })
}

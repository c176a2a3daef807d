//! C ABI over the simulator.
//!
//! Configurations and reports are opaque heap handles owned by the caller
//! and released with the matching `_free` function. Every fallible call
//! returns an [`AgvStatus`]; on failure a description is available from
//! [`agv_last_error_message`] on the same thread until the next failing
//! call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use agv_sidelink::kpi::{export_csv, KpiRecord};
use agv_sidelink::link::TrafficClass;
use agv_sidelink::{Error, RunReport, ScenarioConfig};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidConfig = 4,
    ParseError = 5,
    Io = 6,
    Csv = 7,
    /// The requested value is undefined for this report (no PRR samples).
    NoData = 8,
    Internal = 9,
}

/// Opaque scenario configuration.
pub struct AgvConfig {
    inner: ScenarioConfig,
}

/// Opaque result of one run.
pub struct AgvReport {
    inner: RunReport,
}

/// Packet counters of one traffic class.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgvCounts {
    pub generated: u64,
    pub delivered: u64,
    pub partial: u64,
    pub expired: u64,
}

/// Traffic class selector for report getters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgvTraffic {
    A2a = 0,
    A2i = 1,
}

impl From<AgvTraffic> for TrafficClass {
    fn from(t: AgvTraffic) -> Self {
        match t {
            AgvTraffic::A2a => TrafficClass::A2aCam,
            AgvTraffic::A2i => TrafficClass::A2iData,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: AgvStatus, msg: impl Into<String>) -> AgvStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> AgvStatus {
    match e {
        Error::Config(_) => AgvStatus::InvalidConfig,
        Error::Domain(_) => AgvStatus::InvalidArgument,
        Error::ConfigParse(_) => AgvStatus::ParseError,
        Error::Io { .. } => AgvStatus::Io,
        Error::Csv(_) => AgvStatus::Csv,
    }
}

fn from_error(e: Error) -> AgvStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning a panic into [`AgvStatus::Internal`].
fn guard(f: impl FnOnce() -> AgvStatus) -> AgvStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AgvStatus::Internal, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AgvStatus> {
    if p.is_null() {
        return Err(fail(AgvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AgvStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn config_mut<'a>(cfg: *mut AgvConfig) -> Result<&'a mut AgvConfig, AgvStatus> {
    cfg.as_mut().ok_or_else(|| fail(AgvStatus::NullPointer, "config handle is null"))
}

unsafe fn report_ref<'a>(r: *const AgvReport) -> Result<&'a AgvReport, AgvStatus> {
    r.as_ref().ok_or_else(|| fail(AgvStatus::NullPointer, "report handle is null"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn agv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn agv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// New configuration holding the defaults. Never null.
#[no_mangle]
pub extern "C" fn agv_config_default() -> *mut AgvConfig {
    Box::into_raw(Box::new(AgvConfig {
        inner: ScenarioConfig::default(),
    }))
}

/// Parses a TOML scenario; unspecified fields keep their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agv_config_from_toml(toml: *const c_char, out: *mut *mut AgvConfig) -> AgvStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgvStatus::NullPointer, "output pointer is null");
        }
        let text = tri!(str_arg(toml, "toml"));
        match ScenarioConfig::from_toml_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(AgvConfig { inner }));
                AgvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn agv_config_free(cfg: *mut AgvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Checks every configuration invariant.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_validate(cfg: *const AgvConfig) -> AgvStatus {
    guard(|| {
        let c = tri!(cfg.as_ref().ok_or_else(|| fail(AgvStatus::NullPointer, "config handle is null")));
        c.inner.validate().map_or_else(from_error, |_| AgvStatus::Ok)
    })
}

/// Sets the allocation scheme: `random`, `mode1`, `mode2_noreeval`,
/// `mode2` or `cooperative`.
///
/// # Safety
/// `cfg` must be a live handle and `mode` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_mode(cfg: *mut AgvConfig, mode: *const c_char) -> AgvStatus {
    guard(|| {
        let c = tri!(config_mut(cfg));
        let s = tri!(str_arg(mode, "mode"));
        match s.parse() {
            Ok(m) => {
                c.inner.mac.alloc_mode = m;
                AgvStatus::Ok
            }
            Err(e) => fail(AgvStatus::InvalidArgument, format!("{e}")),
        }
    })
}

/// Sets the duplex mode: `half` or `full`.
///
/// # Safety
/// `cfg` must be a live handle and `duplex` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_duplex(cfg: *mut AgvConfig, duplex: *const c_char) -> AgvStatus {
    guard(|| {
        let c = tri!(config_mut(cfg));
        let s = tri!(str_arg(duplex, "duplex"));
        match s.parse() {
            Ok(d) => {
                c.inner.mac.duplex = d;
                AgvStatus::Ok
            }
            Err(e) => fail(AgvStatus::InvalidArgument, format!("{e}")),
        }
    })
}

/// Group size K. Checked by validation and at run time, not here.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_agvs(cfg: *mut AgvConfig, n: u32) -> AgvStatus {
    guard(|| {
        tri!(config_mut(cfg)).inner.layout.n_group_agvs = n as usize;
        AgvStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_period_ms(cfg: *mut AgvConfig, period_ms: u32) -> AgvStatus {
    guard(|| {
        tri!(config_mut(cfg)).inner.traffic.packet_period_ms = period_ms;
        AgvStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_harq(cfg: *mut AgvConfig, enabled: bool) -> AgvStatus {
    guard(|| {
        tri!(config_mut(cfg)).inner.mac.harq_enabled = enabled;
        AgvStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_seed(cfg: *mut AgvConfig, seed: u64) -> AgvStatus {
    guard(|| {
        tri!(config_mut(cfg)).inner.run.seed = seed;
        AgvStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agv_config_set_duration_s(cfg: *mut AgvConfig, seconds: f64) -> AgvStatus {
    guard(|| {
        tri!(config_mut(cfg)).inner.run.sim_duration_s = seconds;
        AgvStatus::Ok
    })
}

/// Validates and simulates `cfg`; on success `*out` receives a new report.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agv_run(cfg: *const AgvConfig, out: *mut *mut AgvReport) -> AgvStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgvStatus::NullPointer, "output pointer is null");
        }
        let c = tri!(cfg.as_ref().ok_or_else(|| fail(AgvStatus::NullPointer, "config handle is null")));
        match agv_sidelink::run(&c.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(AgvReport { inner }));
                AgvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn agv_report_free(report: *mut AgvReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// A2A packet reception ratio. [`AgvStatus::NoData`] when no packet was
/// counted.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agv_report_prr(report: *const AgvReport, out: *mut f64) -> AgvStatus {
    guard(|| {
        let r = tri!(report_ref(report));
        if out.is_null() {
            return fail(AgvStatus::NullPointer, "output pointer is null");
        }
        match r.inner.prr() {
            Some(v) => {
                *out = v;
                AgvStatus::Ok
            }
            None => fail(AgvStatus::NoData, "no packets were counted"),
        }
    })
}

/// Delivered unique-packet throughput of one class in Mbps.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agv_report_throughput_mbps(
    report: *const AgvReport,
    traffic: AgvTraffic,
    out: *mut f64,
) -> AgvStatus {
    guard(|| {
        let r = tri!(report_ref(report));
        if out.is_null() {
            return fail(AgvStatus::NullPointer, "output pointer is null");
        }
        *out = r.inner.throughput_mbps(traffic.into());
        AgvStatus::Ok
    })
}

/// Packet counters of one class.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agv_report_counts(
    report: *const AgvReport,
    traffic: AgvTraffic,
    out: *mut AgvCounts,
) -> AgvStatus {
    guard(|| {
        let r = tri!(report_ref(report));
        if out.is_null() {
            return fail(AgvStatus::NullPointer, "output pointer is null");
        }
        let c = r.inner.class(traffic.into());
        *out = AgvCounts {
            generated: c.generated,
            delivered: c.delivered,
            partial: c.partial,
            expired: c.expired,
        };
        AgvStatus::Ok
    })
}

/// Writes the report as a one-row KPI CSV file.
///
/// # Safety
/// `report` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn agv_report_export_csv(report: *const AgvReport, path: *const c_char) -> AgvStatus {
    guard(|| {
        let r = tri!(report_ref(report));
        let p = tri!(str_arg(path, "path"));
        let rec = KpiRecord::from_report(&r.inner);
        export_csv(&[rec], Path::new(p)).map_or_else(from_error, |_| AgvStatus::Ok)
    })
}

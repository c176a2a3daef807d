//! Experiment configuration, factory geometry and mobility.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocMode {
    Random,
    Mode1,
    Mode2Noreeval,
    Mode2,
    Cooperative,
}

impl AllocMode {
    pub const ALL: [AllocMode; 5] = [
        AllocMode::Random,
        AllocMode::Mode1,
        AllocMode::Mode2Noreeval,
        AllocMode::Mode2,
        AllocMode::Cooperative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AllocMode::Random => "random",
            AllocMode::Mode1 => "mode1",
            AllocMode::Mode2Noreeval => "mode2_noreeval",
            AllocMode::Mode2 => "mode2",
            AllocMode::Cooperative => "cooperative",
        }
    }

    /// Whether group members keep an SL-RSRP sensing history.
    pub fn uses_sensing(self) -> bool {
        matches!(
            self,
            AllocMode::Mode2Noreeval | AllocMode::Mode2 | AllocMode::Cooperative
        )
    }
}

impl std::str::FromStr for AllocMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AllocMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown allocation mode `{s}`")))
    }
}

impl std::fmt::Display for AllocMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    Half,
    Full,
}

impl Duplex {
    pub fn as_str(self) -> &'static str {
        match self {
            Duplex::Half => "half",
            Duplex::Full => "full",
        }
    }
}

impl std::str::FromStr for Duplex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(Duplex::Half),
            "full" => Ok(Duplex::Full),
            _ => Err(Error::Config(format!("unknown duplex mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Duplex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    AckNack,
    NackOnly,
}

/// Hall, formation and population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub hall_width_m: f64,
    pub hall_depth_m: f64,
    pub workpiece_edge_m: f64,
    /// Distance between the group trajectory and the walls.
    pub trajectory_margin_m: f64,
    pub n_group_agvs: usize,
    pub n_a2i_links: usize,
    pub group_speed_kmh: f64,
    pub a2i_speed_kmh: f64,
    /// Standard deviation of the A2I drop density around the gNB.
    pub a2i_spread_m: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            hall_width_m: 200.0,
            hall_depth_m: 200.0,
            workpiece_edge_m: 10.0,
            trajectory_margin_m: 20.0,
            n_group_agvs: 4,
            n_a2i_links: 10,
            group_speed_kmh: 6.0,
            a2i_speed_kmh: 16.0,
            a2i_spread_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Radio {
    pub carrier_freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub tx_power_dbm: f64,
    pub antenna_gain_tx_dbi: f64,
    pub antenna_gain_rx_dbi: f64,
    pub noise_figure_db: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_decorr_m: f64,
    /// Suppression of in-band emission seen on the other subchannels of a
    /// slot, relative to the in-band SL-RSRP of the transmission.
    pub ibe_suppression_db: f64,
}

impl Default for Radio {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 2.0,
            bandwidth_mhz: 20.0,
            tx_power_dbm: 23.0,
            antenna_gain_tx_dbi: 3.0,
            antenna_gain_rx_dbi: 3.0,
            noise_figure_db: 9.0,
            shadowing_sigma_db: 3.0,
            shadowing_decorr_m: 25.0,
            ibe_suppression_db: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub scs_khz: u32,
    pub n_subchannels: u32,
    pub subchannel_prbs: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            scs_khz: 60,
            n_subchannels: 2,
            subchannel_prbs: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Traffic {
    pub packet_period_ms: u32,
    pub packet_size_a2a_bits: u32,
    pub packet_size_a2i_bits: u32,
}

impl Default for Traffic {
    fn default() -> Self {
        Self {
            packet_period_ms: 10,
            packet_size_a2a_bits: 2400,
            packet_size_a2i_bits: 12000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mac {
    pub alloc_mode: AllocMode,
    pub harq_enabled: bool,
    pub feedback: FeedbackMode,
    /// NACK-only feedback range.
    pub min_range_m: f64,
    pub duplex: Duplex,
    /// Residual self-interference after cancellation (full duplex only).
    /// Absent means ideal cancellation.
    pub residual_si_db: Option<f64>,
    pub sensing_window_ms: u32,
    pub rsrp_threshold_dbm: f64,
    /// Reselection counter range for reservation periods of 100 ms and up.
    pub reselection_min: u32,
    pub reselection_max: u32,
    /// Stretch the counter range by ceil(100 / max(20, period)) for shorter
    /// periods, as sidelink SPS does.
    pub scale_reselection: bool,
    /// Re-evaluation lead before a scheduled transmission.
    pub t3_slots: u32,
    /// Periods between leader assignment rounds.
    pub coop_round_periods: u32,
    /// Periods between gNB re-grants.
    pub mode1_regrant_periods: u32,
    pub control_payload_bits: u32,
}

impl Default for Mac {
    fn default() -> Self {
        Self {
            alloc_mode: AllocMode::Mode2,
            harq_enabled: false,
            feedback: FeedbackMode::NackOnly,
            min_range_m: 20.0 * std::f64::consts::SQRT_2,
            duplex: Duplex::Half,
            residual_si_db: None,
            sensing_window_ms: 100,
            rsrp_threshold_dbm: -110.0,
            reselection_min: 5,
            reselection_max: 15,
            scale_reselection: true,
            t3_slots: 2,
            coop_round_periods: 10,
            mode1_regrant_periods: 10,
            control_payload_bits: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim_duration_s: f64,
    pub seed: u64,
    pub position_update_s: f64,
    /// Exclude the first sensing window from KPI accounting.
    pub warmup: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim_duration_s: 60.0,
            seed: 1,
            position_update_s: 0.1,
            warmup: true,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: Layout,
    pub radio: Radio,
    pub grid: GridConfig,
    pub traffic: Traffic,
    pub mac: Mac,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        let fail = |msg: String| Err(Error::Config(msg));
        if !(2..=8).contains(&l.n_group_agvs) {
            return fail(format!(
                "n_group_agvs must be in [2, 8], got {}",
                l.n_group_agvs
            ));
        }
        if !(l.hall_width_m > 0.0 && l.hall_depth_m > 0.0)
            || !l.hall_width_m.is_finite()
            || !l.hall_depth_m.is_finite()
        {
            return fail("hall dimensions must be positive and finite".into());
        }
        if !(l.workpiece_edge_m > 0.0) || !l.workpiece_edge_m.is_finite() {
            return fail("workpiece_edge_m must be positive".into());
        }
        let reach = l.trajectory_margin_m - l.workpiece_edge_m / 2.0;
        if reach < 0.0
            || 2.0 * l.trajectory_margin_m >= l.hall_width_m
            || 2.0 * l.trajectory_margin_m >= l.hall_depth_m
        {
            return fail("trajectory margin does not fit the workpiece inside the hall".into());
        }
        for (name, v) in [
            ("group_speed_kmh", l.group_speed_kmh),
            ("a2i_speed_kmh", l.a2i_speed_kmh),
            ("a2i_spread_m", l.a2i_spread_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and non-negative"));
            }
        }
        let r = &self.radio;
        for (name, v) in [
            ("carrier_freq_ghz", r.carrier_freq_ghz),
            ("bandwidth_mhz", r.bandwidth_mhz),
            ("tx_power_dbm", r.tx_power_dbm),
            ("antenna_gain_tx_dbi", r.antenna_gain_tx_dbi),
            ("antenna_gain_rx_dbi", r.antenna_gain_rx_dbi),
            ("noise_figure_db", r.noise_figure_db),
            ("shadowing_sigma_db", r.shadowing_sigma_db),
            ("shadowing_decorr_m", r.shadowing_decorr_m),
            ("ibe_suppression_db", r.ibe_suppression_db),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        if r.carrier_freq_ghz <= 0.0 || r.bandwidth_mhz <= 0.0 || r.shadowing_decorr_m <= 0.0 {
            return fail("carrier, bandwidth and decorrelation distance must be positive".into());
        }
        if r.tx_power_dbm > 23.0 {
            return fail(format!(
                "tx_power_dbm exceeds the 23 dBm maximum: {}",
                r.tx_power_dbm
            ));
        }
        if r.shadowing_sigma_db < 0.0 {
            return fail("shadowing_sigma_db must be non-negative".into());
        }
        let g = &self.grid;
        if !matches!(g.scs_khz, 15 | 30 | 60 | 120) {
            return fail(format!("scs_khz must be 15, 30, 60 or 120, got {}", g.scs_khz));
        }
        if g.n_subchannels == 0 || g.subchannel_prbs == 0 {
            return fail("grid needs at least one subchannel of at least one PRB".into());
        }
        let occupied_hz = g.n_subchannels as f64 * g.subchannel_prbs as f64 * 12.0 * g.scs_khz as f64 * 1e3;
        if occupied_hz > r.bandwidth_mhz * 1e6 {
            return fail(format!(
                "grid occupies {:.2} MHz, more than the {} MHz system bandwidth",
                occupied_hz / 1e6,
                r.bandwidth_mhz
            ));
        }
        let t = &self.traffic;
        if !matches!(t.packet_period_ms, 3 | 10) {
            return fail(format!(
                "packet_period_ms must be 3 or 10, got {}",
                t.packet_period_ms
            ));
        }
        let m = &self.mac;
        if !matches!(m.sensing_window_ms, 100 | 1100) {
            return fail(format!(
                "sensing_window_ms must be 100 or 1100, got {}",
                m.sensing_window_ms
            ));
        }
        if !m.rsrp_threshold_dbm.is_finite() || !m.min_range_m.is_finite() {
            return fail("rsrp_threshold_dbm and min_range_m must be finite".into());
        }
        if m.residual_si_db.is_some_and(|v| !v.is_finite()) {
            return fail("residual_si_db must be finite".into());
        }
        if m.reselection_min == 0 || m.reselection_min > m.reselection_max {
            return fail("reselection counter range must satisfy 1 <= min <= max".into());
        }
        if m.coop_round_periods == 0 || m.mode1_regrant_periods == 0 {
            return fail("round periods must be at least one".into());
        }
        let run = &self.run;
        if !(run.sim_duration_s >= 0.0) || !run.sim_duration_s.is_finite() {
            return fail("sim_duration_s must be finite and non-negative".into());
        }
        if !(run.position_update_s > 0.0) || !run.position_update_s.is_finite() {
            return fail("position_update_s must be positive".into());
        }
        let slot_us = self.slot_us();
        if (t.packet_period_ms * 1000) % slot_us != 0 {
            return fail("packet period is not a whole number of slots".into());
        }
        if self.period_slots() <= m.t3_slots {
            return fail("t3_slots must be shorter than the packet period".into());
        }
        Ok(())
    }

    /// Slot duration in microseconds for the configured numerology.
    pub fn slot_us(&self) -> u32 {
        1000 * 15 / self.grid.scs_khz.max(1)
    }

    pub fn slot_s(&self) -> f64 {
        self.slot_us() as f64 * 1e-6
    }

    pub fn period_slots(&self) -> u32 {
        self.traffic.packet_period_ms * 1000 / self.slot_us()
    }

    /// Reselection counter bounds for the configured period.
    pub fn reselection_range(&self) -> (u32, u32) {
        let p = self.traffic.packet_period_ms;
        let f = if self.mac.scale_reselection && p < 100 {
            100u32.div_ceil(p.max(20))
        } else {
            1
        };
        (self.mac.reselection_min * f, self.mac.reselection_max * f)
    }

    pub fn sensing_window_slots(&self) -> u32 {
        self.mac.sensing_window_ms * 1000 / self.slot_us()
    }

    pub fn subchannel_bw_hz(&self) -> f64 {
        self.grid.subchannel_prbs as f64 * 12.0 * self.grid.scs_khz as f64 * 1e3
    }

    /// Slots between position/channel refreshes (at least one).
    pub fn update_interval_slots(&self) -> u64 {
        ((self.run.position_update_s / self.slot_s()).round() as u64).max(1)
    }

    pub fn total_slots(&self) -> u64 {
        (self.run.sim_duration_s / self.slot_s()).round() as u64
    }

    pub fn warmup_slots(&self) -> u64 {
        if self.run.warmup {
            self.sensing_window_slots() as u64
        } else {
            0
        }
    }

    pub fn gnb_position(&self) -> Point {
        Point::new(self.layout.hall_width_m / 2.0, self.layout.hall_depth_m / 2.0)
    }

    pub fn hall(&self) -> Hall {
        Hall {
            width: self.layout.hall_width_m,
            depth: self.layout.hall_depth_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hall {
    pub width: f64,
    pub depth: f64,
}

impl Hall {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.depth).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.depth))
    }
}

pub type UeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UeKind {
    GroupAgv,
    LeaderAgv,
    A2iAgv,
    Gnb,
}

impl UeKind {
    pub fn is_group(self) -> bool {
        matches!(self, UeKind::GroupAgv | UeKind::LeaderAgv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub id: UeId,
    pub kind: UeKind,
    pub position: Point,
    pub velocity: Point,
}

pub fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Offsets of the group AGVs relative to the workpiece centre.
///
/// AGVs sit on the perimeter of the square workpiece. Corners are filled
/// first, then edge midpoints; two AGVs take opposite edge midpoints and three
/// take the midpoints of three edges.
pub fn build_formation(n_agvs: usize, edge_m: f64) -> Result<Vec<Point>> {
    if !(2..=8).contains(&n_agvs) {
        return Err(Error::Config(format!(
            "formation needs 2 to 8 AGVs, got {n_agvs}"
        )));
    }
    if !(edge_m > 0.0) || !edge_m.is_finite() {
        return Err(Error::Config(format!("workpiece edge must be positive, got {edge_m}")));
    }
    let h = edge_m / 2.0;
    let corners = [
        Point::new(h, h),
        Point::new(h, -h),
        Point::new(-h, -h),
        Point::new(-h, h),
    ];
    let mids = [
        Point::new(h, 0.0),
        Point::new(0.0, -h),
        Point::new(-h, 0.0),
        Point::new(0.0, h),
    ];
    let offsets = match n_agvs {
        2 => vec![mids[0], mids[2]],
        3 => vec![mids[0], mids[1], mids[2]],
        n => {
            let mut v = corners.to_vec();
            // Remaining AGVs go to midpoints, alternating opposite edges.
            v.extend([mids[0], mids[2], mids[1], mids[3]].into_iter().take(n - 4));
            v
        }
    };
    Ok(offsets)
}

/// Closed polyline followed by the workpiece centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
    pub looped: bool,
    cumulative: Vec<f64>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Point>, looped: bool) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Config("trajectory needs at least two waypoints".into()));
        }
        let n = waypoints.len();
        let segs = if looped { n } else { n - 1 };
        let mut cumulative = Vec::with_capacity(segs + 1);
        cumulative.push(0.0);
        for i in 0..segs {
            let a = waypoints[i];
            let b = waypoints[(i + 1) % n];
            let d = a.distance(b);
            if d <= 0.0 {
                return Err(Error::Config(format!("waypoints {i} and {} coincide", (i + 1) % n)));
            }
            cumulative.push(cumulative[i] + d);
        }
        Ok(Self {
            waypoints,
            looped,
            cumulative,
        })
    }

    /// Rectangular loop `margin_m` inside the walls, starting at the lower
    /// left corner and running counter-clockwise.
    pub fn rectangle(hall: Hall, margin_m: f64) -> Result<Self> {
        let (lo_x, lo_y) = (margin_m, margin_m);
        let (hi_x, hi_y) = (hall.width - margin_m, hall.depth - margin_m);
        Self::new(
            vec![
                Point::new(lo_x, lo_y),
                Point::new(hi_x, lo_y),
                Point::new(hi_x, hi_y),
                Point::new(lo_x, hi_y),
            ],
            true,
        )
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and unit heading at arc length `s` (wrapped for loops,
    /// clamped otherwise).
    pub fn at(&self, s: f64) -> (Point, Point) {
        let len = self.length();
        let s = if self.looped {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        };
        let n = self.waypoints.len();
        let seg = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.cumulative.len() - 2),
            Err(i) => i - 1,
        };
        let a = self.waypoints[seg];
        let b = self.waypoints[(seg + 1) % n];
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let dir = b.sub(a).scale(1.0 / seg_len);
        (a.add(dir.scale(s - self.cumulative[seg])), dir)
    }
}

/// Draws one position from the gNB-centred drop density, clipped to the hall
/// by rejection.
pub fn sample_around<R: Rng + ?Sized>(center: Point, spread_m: f64, hall: Hall, rng: &mut R) -> Point {
    if spread_m == 0.0 {
        return hall.clamp(center);
    }
    let normal = Normal::new(0.0, spread_m).expect("spread is finite");
    loop {
        let p = Point::new(center.x + normal.sample(rng), center.y + normal.sample(rng));
        if hall.contains(p) {
            return p;
        }
    }
}

/// Drops `m` A2I AGVs around the gNB.
pub fn drop_a2i_ues<R: Rng + ?Sized>(
    m: usize,
    first_id: UeId,
    gnb: Point,
    spread_m: f64,
    hall: Hall,
    rng: &mut R,
) -> Vec<UeState> {
    (0..m)
        .map(|i| UeState {
            id: first_id + i,
            kind: UeKind::A2iAgv,
            position: sample_around(gnb, spread_m, hall, rng),
            velocity: Point::default(),
        })
        .collect()
}

/// Mobility state for one run: the group rides the trajectory rigidly, A2I
/// AGVs follow random waypoints drawn from the drop density.
#[derive(Debug, Clone)]
pub struct Mobility {
    pub trajectory: Trajectory,
    pub formation: Vec<Point>,
    pub arc_length: f64,
    group_speed: f64,
    a2i_speed: f64,
    a2i_targets: Vec<Point>,
    gnb: Point,
    spread_m: f64,
    hall: Hall,
}

impl Mobility {
    pub fn new(cfg: &ScenarioConfig, a2i: &[UeState], rng: &mut impl Rng) -> Result<Self> {
        let hall = cfg.hall();
        let trajectory = Trajectory::rectangle(hall, cfg.layout.trajectory_margin_m)?;
        let formation = build_formation(cfg.layout.n_group_agvs, cfg.layout.workpiece_edge_m)?;
        let gnb = cfg.gnb_position();
        let spread_m = cfg.layout.a2i_spread_m;
        let a2i_targets = a2i
            .iter()
            .map(|_| sample_around(gnb, spread_m, hall, rng))
            .collect();
        Ok(Self {
            trajectory,
            formation,
            arc_length: 0.0,
            group_speed: kmh_to_ms(cfg.layout.group_speed_kmh),
            a2i_speed: kmh_to_ms(cfg.layout.a2i_speed_kmh),
            a2i_targets,
            gnb,
            spread_m,
            hall,
        })
    }

    /// Initial group states; the first AGV is the leader when `leader` is set.
    pub fn place_group(&self, leader: bool) -> Vec<UeState> {
        let (center, dir) = self.trajectory.at(self.arc_length);
        self.formation
            .iter()
            .enumerate()
            .map(|(id, off)| UeState {
                id,
                kind: if leader && id == 0 {
                    UeKind::LeaderAgv
                } else {
                    UeKind::GroupAgv
                },
                position: self.hall.clamp(center.add(*off)),
                velocity: dir.scale(self.group_speed),
            })
            .collect()
    }

    /// Moves every UE forward by `dt` seconds. Group AGVs are translated
    /// rigidly; A2I AGVs walk toward their waypoint and draw a new one on
    /// arrival. The gNB does not move.
    pub fn advance_positions(&mut self, ues: &mut [UeState], dt: f64, rng: &mut impl Rng) {
        if dt <= 0.0 {
            return;
        }
        self.arc_length = (self.arc_length + self.group_speed * dt).rem_euclid(self.trajectory.length());
        let (center, dir) = self.trajectory.at(self.arc_length);
        let mut a2i_idx = 0;
        for ue in ues.iter_mut() {
            match ue.kind {
                UeKind::GroupAgv | UeKind::LeaderAgv => {
                    ue.position = self.hall.clamp(center.add(self.formation[ue.id]));
                    ue.velocity = dir.scale(self.group_speed);
                }
                UeKind::A2iAgv => {
                    let mut budget = self.a2i_speed * dt;
                    let mut pos = ue.position;
                    let mut heading = Point::default();
                    while budget > 0.0 {
                        let target = self.a2i_targets[a2i_idx];
                        let to = target.sub(pos);
                        let d = to.norm();
                        if d <= budget {
                            pos = target;
                            budget -= d;
                            self.a2i_targets[a2i_idx] =
                                sample_around(self.gnb, self.spread_m, self.hall, rng);
                            if d == 0.0 && self.spread_m == 0.0 {
                                break;
                            }
                        } else {
                            heading = to.scale(1.0 / d);
                            pos = pos.add(heading.scale(budget));
                            budget = 0.0;
                        }
                    }
                    ue.position = self.hall.clamp(pos);
                    ue.velocity = heading.scale(self.a2i_speed);
                    a2i_idx += 1;
                }
                UeKind::Gnb => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn pairwise_min(points: &[Point]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.min(points[i].distance(points[j]));
            }
        }
        best
    }

    #[test]
    fn reselection_range_stretches_for_short_periods() {
        let mut c = ScenarioConfig::default();
        assert_eq!(c.reselection_range(), (25, 75));
        c.traffic.packet_period_ms = 3;
        assert_eq!(c.reselection_range(), (25, 75));
        c.mac.scale_reselection = false;
        assert_eq!(c.reselection_range(), (5, 15));
    }

    #[test]
    fn four_agvs_take_the_corners() {
        let f = build_formation(4, 10.0).unwrap();
        assert_eq!(
            f,
            vec![
                Point::new(5.0, 5.0),
                Point::new(5.0, -5.0),
                Point::new(-5.0, -5.0),
                Point::new(-5.0, 5.0)
            ]
        );
    }

    #[test]
    fn two_agvs_take_opposite_midpoints() {
        let f = build_formation(2, 10.0).unwrap();
        assert_eq!(f, vec![Point::new(5.0, 0.0), Point::new(-5.0, 0.0)]);
    }

    #[test]
    fn eight_agvs_fill_corners_and_midpoints() {
        let f = build_formation(8, 10.0).unwrap();
        // Enumeration oracle: the 8 perimeter points at multiples of 5 m.
        let mut expected = Vec::new();
        for x in [-5.0, 0.0, 5.0] {
            for y in [-5.0, 0.0, 5.0] {
                if x != 0.0 || y != 0.0 {
                    expected.push((x, y));
                }
            }
        }
        let mut got: Vec<_> = f.iter().map(|p| (p.x, p.y)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, expected);
        assert!((pairwise_min(&f) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn formation_rejects_bad_sizes() {
        assert!(build_formation(1, 10.0).is_err());
        assert!(build_formation(9, 10.0).is_err());
        assert!(build_formation(4, 0.0).is_err());
        for n in 2..=8 {
            let f = build_formation(n, 10.0).unwrap();
            assert_eq!(f.len(), n);
            for p in &f {
                assert!((p.x.abs() - 5.0).abs() < 1e-12 || (p.y.abs() - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml_str("[layout]\nn_group_agvs = 4\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)), "{err}");
        let err = ScenarioConfig::from_toml_str("[nope]\nx = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ScenarioConfig::default();
        cfg.mac.residual_si_db = Some(-110.0);
        cfg.run.seed = 77;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut cfg = ScenarioConfig::default();
        cfg.layout.n_group_agvs = 9;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.traffic.packet_period_ms = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.mac.sensing_window_ms = 200;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.radio.tx_power_dbm = 30.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.radio.noise_figure_db = f64::NAN;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.grid.n_subchannels = 20;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn group_advances_a_tenth_of_a_second() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(1, Stream::Mobility);
        let mut mob = Mobility::new(&cfg, &[], &mut rng).unwrap();
        let mut ues = mob.place_group(false);
        let s0 = mob.arc_length;
        mob.advance_positions(&mut ues, 0.1, &mut rng);
        assert!((mob.arc_length - s0 - 0.16667).abs() < 1e-4);
    }

    #[test]
    fn zero_dt_is_identity() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(1, Stream::Mobility);
        let mut mob = Mobility::new(&cfg, &[], &mut rng).unwrap();
        let mut ues = mob.place_group(false);
        let before = ues.clone();
        mob.advance_positions(&mut ues, 0.0, &mut rng);
        assert_eq!(ues, before);
    }

    #[test]
    fn full_loop_returns_to_start() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(1, Stream::Mobility);
        let mut mob = Mobility::new(&cfg, &[], &mut rng).unwrap();
        let mut ues = mob.place_group(false);
        let start = ues.clone();
        let v = kmh_to_ms(cfg.layout.group_speed_kmh);
        mob.advance_positions(&mut ues, mob.trajectory.length() / v, &mut rng);
        for (a, b) in ues.iter().zip(&start) {
            assert!(a.position.distance(b.position) < 1e-9);
        }
    }

    #[test]
    fn a2i_drop_edge_cases() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(3, Stream::Placement);
        assert!(drop_a2i_ues(0, 4, cfg.gnb_position(), 50.0, cfg.hall(), &mut rng).is_empty());
        let ten = drop_a2i_ues(10, 4, cfg.gnb_position(), 50.0, cfg.hall(), &mut rng);
        assert_eq!(ten.len(), 10);
        assert!(ten.iter().all(|u| cfg.hall().contains(u.position)));
    }

    #[test]
    fn a2i_drop_is_centred_on_the_gnb() {
        let cfg = ScenarioConfig::default();
        let mut rng = stream(11, Stream::Placement);
        let ues = drop_a2i_ues(1000, 0, cfg.gnb_position(), 50.0, cfg.hall(), &mut rng);
        let n = ues.len() as f64;
        let mean = ues
            .iter()
            .fold(Point::default(), |acc, u| acc.add(u.position))
            .scale(1.0 / n);
        assert!(mean.distance(cfg.gnb_position()) < 10.0, "{mean:?}");
    }
}

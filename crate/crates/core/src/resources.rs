//! Slot x subchannel resource grid, SL-RSRP sensing and mode-2 candidate
//! exclusion.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, UeId};

/// Fraction of the selection window that must survive exclusion.
pub const MIN_CANDIDATE_FRACTION: f64 = 0.2;
/// Threshold increment applied while too few resources survive.
pub const THRESHOLD_STEP_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceGrid {
    pub n_subchannels: u32,
    pub subchannel_prbs: u32,
    pub slot_duration_us: u32,
    pub scs_khz: u32,
}

impl ResourceGrid {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            n_subchannels: cfg.grid.n_subchannels,
            subchannel_prbs: cfg.grid.subchannel_prbs,
            slot_duration_us: cfg.slot_us(),
            scs_khz: cfg.grid.scs_khz,
        }
    }

    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.n_subchannels as f64 * self.subchannel_bw_hz()
    }

    pub fn subchannel_bw_hz(&self) -> f64 {
        self.subchannel_prbs as f64 * 12.0 * self.scs_khz as f64 * 1e3
    }
}

/// One subchannel in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceId {
    pub slot: u64,
    pub subchannel: u32,
}

impl ResourceId {
    pub const fn new(slot: u64, subchannel: u32) -> Self {
        Self { slot, subchannel }
    }
}

/// Row-major index of `(slot, subchannel)`.
pub fn resource_index(slot: u64, subchannel: u32, grid: &ResourceGrid) -> Result<u64> {
    if subchannel >= grid.n_subchannels {
        return Err(Error::Domain(format!(
            "subchannel {subchannel} outside [0, {})",
            grid.n_subchannels
        )));
    }
    Ok(slot * grid.n_subchannels as u64 + subchannel as u64)
}

pub fn resource_from_index(index: u64, grid: &ResourceGrid) -> ResourceId {
    let n = grid.n_subchannels as u64;
    ResourceId::new(index / n, (index % n) as u32)
}

/// Selection window `[now + t1, now + t2]` in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionWindow {
    pub t1_slots: u32,
    pub t2_slots: u32,
}

impl SelectionWindow {
    pub fn new(t1_slots: u32, t2_slots: u32) -> Result<Self> {
        if t1_slots < 1 || t1_slots > t2_slots {
            return Err(Error::Domain(format!(
                "selection window needs 1 <= t1 <= t2, got t1={t1_slots} t2={t2_slots}"
            )));
        }
        Ok(Self { t1_slots, t2_slots })
    }

    /// T1 = 1 slot, T2 = one packet period.
    pub fn for_period(period_slots: u32) -> Self {
        Self {
            t1_slots: 1,
            t2_slots: period_slots.max(1),
        }
    }

    pub fn span(&self, now: u64) -> SlotSpan {
        SlotSpan {
            first: now + self.t1_slots as u64,
            last: now + self.t2_slots as u64,
        }
    }
}

/// Inclusive slot range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSpan {
    pub first: u64,
    pub last: u64,
}

impl SlotSpan {
    pub fn len(&self) -> u64 {
        if self.last < self.first {
            0
        } else {
            self.last - self.first + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, slot: u64) -> bool {
        (self.first..=self.last).contains(&slot)
    }

    pub fn resources(&self, grid: &ResourceGrid) -> impl Iterator<Item = ResourceId> + '_ {
        let n = grid.n_subchannels;
        (self.first..=self.last)
            .filter(move |_| self.last >= self.first)
            .flat_map(move |slot| (0..n).map(move |c| ResourceId::new(slot, c)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Resource the measured power applies to. For an announced future
    /// reservation this slot lies after `measured_slot`.
    pub resource: ResourceId,
    pub rsrp_dbm: f64,
    pub measured_slot: u64,
    pub source: Option<UeId>,
}

/// SL-RSRP observations of one UE over its sensing window.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingHistory {
    pub window_slots: u64,
    pub half_duplex: bool,
    observations: VecDeque<Observation>,
    own_tx_slots: VecDeque<u64>,
}

impl SensingHistory {
    pub fn new(window_slots: u64, half_duplex: bool) -> Self {
        Self {
            window_slots,
            half_duplex,
            observations: VecDeque::new(),
            own_tx_slots: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    /// Notes that the owner transmitted in `slot`. Under half duplex nothing
    /// measured in that slot is kept.
    pub fn mark_transmission(&mut self, slot: u64) {
        if self.own_tx_slots.back() != Some(&slot) {
            self.own_tx_slots.push_back(slot);
        }
        if self.half_duplex {
            self.observations.retain(|o| o.measured_slot != slot);
        }
    }

    pub fn transmitted_in(&self, slot: u64) -> bool {
        self.own_tx_slots.contains(&slot)
    }

    /// Records a measurement taken in the resource's own slot.
    pub fn record_measurement(&mut self, res: ResourceId, rsrp_dbm: f64) -> bool {
        self.record(Observation {
            resource: res,
            rsrp_dbm,
            measured_slot: res.slot,
            source: None,
        })
    }

    /// Stores the observation unless the owner was transmitting when it was
    /// measured (half duplex). Returns whether it was stored.
    pub fn record(&mut self, obs: Observation) -> bool {
        self.evict(obs.measured_slot);
        if self.half_duplex && self.transmitted_in(obs.measured_slot) {
            return false;
        }
        self.observations.push_back(obs);
        true
    }

    /// Drops everything measured more than `window_slots` before `now`.
    /// Observations are expected in measurement order.
    pub fn evict(&mut self, now: u64) {
        let window = self.window_slots;
        let stale = move |slot: u64| now.saturating_sub(slot) > window;
        while self.observations.front().is_some_and(|o| stale(o.measured_slot)) {
            self.observations.pop_front();
        }
        while self.own_tx_slots.front().is_some_and(|s| stale(*s)) {
            self.own_tx_slots.pop_front();
        }
    }

    pub fn oldest_measured_slot(&self) -> Option<u64> {
        self.observations.iter().map(|o| o.measured_slot).min()
    }

    /// Copy without the observations for which `drop` holds.
    pub fn filtered(&self, drop: impl Fn(&Observation) -> bool) -> Self {
        Self {
            observations: self.observations.iter().filter(|o| !drop(o)).copied().collect(),
            ..self.clone()
        }
    }

    /// Highest SL-RSRP projected onto each resource of `span`. A past
    /// transmission at slot `m` reserves `m + period_slots`; only when it lies
    /// within the last period before `span` does the reservation keep
    /// repeating through the span. Observations at or after `span.first`
    /// (announced reservations) repeat every period. Resources with no
    /// projection get `-inf`. Order follows [`SlotSpan::resources`].
    pub fn projected_rsrp(&self, span: SlotSpan, grid: &ResourceGrid, period_slots: u64) -> Vec<f64> {
        let n = grid.n_subchannels as u64;
        let mut out = vec![f64::NEG_INFINITY; (span.len() * n) as usize];
        if span.is_empty() {
            return out;
        }
        for o in &self.observations {
            if o.resource.subchannel as u64 >= n {
                continue;
            }
            let s0 = o.resource.slot;
            let (mut slot, last) = if s0 >= span.first {
                (s0, span.last)
            } else if period_slots == 0 {
                continue;
            } else if span.first - s0 <= period_slots + 1 {
                // First repetition at or after the span start.
                (s0 + (span.first - s0).div_ceil(period_slots) * period_slots, span.last)
            } else {
                // Stale: one more period only, which may miss the span.
                (s0 + period_slots, span.last.min(s0 + period_slots))
            };
            if slot < span.first {
                continue;
            }
            while slot <= last {
                let idx = ((slot - span.first) * n + o.resource.subchannel as u64) as usize;
                if o.rsrp_dbm > out[idx] {
                    out[idx] = o.rsrp_dbm;
                }
                if period_slots == 0 {
                    break;
                }
                slot += period_slots;
            }
        }
        out
    }
}

/// Result of the exclusion procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Surviving resources with their projected SL-RSRP.
    pub resources: Vec<(ResourceId, f64)>,
    pub window_size: usize,
    pub final_threshold_dbm: f64,
    /// Number of exclusion passes, including the successful one.
    pub rounds: u32,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<ResourceId> {
        self.resources.iter().map(|(r, _)| *r).collect()
    }

    pub fn contains(&self, r: ResourceId) -> bool {
        self.resources.iter().any(|(c, _)| *c == r)
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }
}

/// Smallest survivor count accepted for a window of `window_size` resources.
pub fn candidate_floor(window_size: usize) -> usize {
    (MIN_CANDIDATE_FRACTION * window_size as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Mode-2 exclusion over `span`: drop resources whose projected SL-RSRP is
/// above the threshold, raising the threshold by 3 dB until at least 20 % of
/// the window survives.
pub fn candidate_resources(
    history: &SensingHistory,
    span: SlotSpan,
    grid: &ResourceGrid,
    threshold_dbm: f64,
    period_slots: u64,
) -> CandidateSet {
    let projected = history.projected_rsrp(span, grid, period_slots);
    let window: Vec<ResourceId> = span.resources(grid).collect();
    let floor = candidate_floor(window.len());
    let max_seen = projected
        .iter()
        .copied()
        .filter(|p| p.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut threshold = threshold_dbm;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let survivors: Vec<(ResourceId, f64)> = window
            .iter()
            .zip(&projected)
            .filter(|(_, p)| **p <= threshold)
            .map(|(r, p)| (*r, *p))
            .collect();
        if survivors.len() >= floor || threshold >= max_seen {
            return CandidateSet {
                resources: survivors,
                window_size: window.len(),
                final_threshold_dbm: threshold,
                rounds,
            };
        }
        threshold += THRESHOLD_STEP_DB;
    }
}

//! Traffic generation, per-slot transmission and reception, duplex
//! constraints and HARQ with chase combining.

use std::collections::{BTreeMap, VecDeque};

use crate::allocation::AllocationDecision;
use crate::channel::{sinr_on_resource, ActiveTx, ChannelGainMap, McsThreshold};
use crate::resources::ResourceId;
use crate::scenario::{Duplex, FeedbackMode, Point, UeId, UeKind};

/// Retransmissions allowed per packet.
pub const MAX_ATTEMPTS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficClass {
    A2aCam,
    A2iData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub src: UeId,
    pub gen_slot: u64,
    pub size_bits: u32,
    pub deadline_slot: u64,
    pub kind: TrafficClass,
}

impl Packet {
    pub fn expired_at(&self, now: u64) -> bool {
        now > self.deadline_slot
    }
}

/// Periodic traffic of one UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficSource {
    pub ue: UeId,
    /// Generation phase within the period.
    pub phase_slot: u64,
    pub period_slots: u64,
    pub size_bits: u32,
    pub kind: TrafficClass,
}

/// Packets generated in `now`; each source emits once per period at its
/// phase, with a deadline one period later.
pub fn generate_traffic(now: u64, sources: &[TrafficSource], next_id: &mut u64) -> Vec<Packet> {
    sources
        .iter()
        .filter(|s| now % s.period_slots == s.phase_slot)
        .map(|s| {
            let id = *next_id;
            *next_id += 1;
            Packet {
                id,
                src: s.ue,
                gen_slot: now,
                size_bits: s.size_bits,
                deadline_slot: now + s.period_slots,
                kind: s.kind,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplexMode {
    pub mode: Duplex,
    pub residual_si_db: Option<f64>,
}

impl DuplexMode {
    pub fn half() -> Self {
        Self {
            mode: Duplex::Half,
            residual_si_db: None,
        }
    }

    /// Residual self-interference power (mW) for a receiver that is itself
    /// transmitting at `tx_power_dbm`.
    pub fn residual_si_mw(&self, tx_power_dbm: f64) -> f64 {
        match (self.mode, self.residual_si_db) {
            (Duplex::Full, Some(db)) => crate::channel::db_to_linear(tx_power_dbm - db.abs()),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub ue: UeId,
    pub resource: ResourceId,
    pub packet: Packet,
    pub attempt: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqState {
    Pending,
    Acked,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxState {
    pub rx: UeId,
    /// Sum of the linear SINR of every attempt heard so far.
    pub accumulated_sinr: f64,
    pub decoded: bool,
    /// The receiver decoded the control part of some attempt, so it knows
    /// the packet exists and can report a failure.
    pub sci_decoded: bool,
}

/// Reception bookkeeping for one packet across its attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqProcess {
    pub packet: Packet,
    pub receivers: Vec<RxState>,
    pub attempts: u8,
    pub state: HarqState,
    pub last_tx_slot: u64,
    /// Set by feedback when a retransmission is wanted.
    pub retransmit: bool,
}

impl HarqProcess {
    pub fn new(packet: Packet, receivers: &[UeId]) -> Self {
        Self {
            packet,
            receivers: receivers
                .iter()
                .map(|&rx| RxState {
                    rx,
                    accumulated_sinr: 0.0,
                    decoded: false,
                    sci_decoded: false,
                })
                .collect(),
            attempts: 0,
            state: HarqState::Pending,
            last_tx_slot: packet.gen_slot,
            retransmit: false,
        }
    }

    pub fn decoded_count(&self) -> usize {
        self.receivers.iter().filter(|r| r.decoded).count()
    }

    pub fn all_decoded(&self) -> bool {
        self.receivers.iter().all(|r| r.decoded)
    }
}

/// Evicts expired packets, then picks this slot's transmissions: primaries
/// of UEs whose reservation lands in `now` with a queued packet, and
/// retransmissions of processes that asked for one on their reserved
/// retransmission resource before the deadline.
pub fn transmit_slot(
    now: u64,
    decisions: &BTreeMap<UeId, AllocationDecision>,
    queues: &mut BTreeMap<UeId, VecDeque<Packet>>,
    harq: &BTreeMap<UeId, HarqProcess>,
) -> (Vec<Transmission>, Vec<Packet>) {
    let mut expired = Vec::new();
    for q in queues.values_mut() {
        while q.front().is_some_and(|p| p.expired_at(now)) {
            expired.push(q.pop_front().unwrap());
        }
    }
    let mut out = Vec::new();
    for (&ue, d) in decisions {
        if d.resource.slot == now {
            if let Some(packet) = queues.get_mut(&ue).and_then(|q| q.pop_front()) {
                out.push(Transmission {
                    ue,
                    resource: d.resource,
                    packet,
                    attempt: 1,
                });
                continue;
            }
        }
        if let (Some(r), Some(p)) = (d.retx, harq.get(&ue)) {
            if r.slot == now
                && p.retransmit
                && p.state == HarqState::Pending
                && p.attempts < MAX_ATTEMPTS
                && !p.packet.expired_at(now)
            {
                out.push(Transmission {
                    ue,
                    resource: r,
                    packet: p.packet,
                    attempt: p.attempts + 1,
                });
            }
        }
    }
    (out, expired)
}

/// One (transmission, intended receiver) outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionEvent {
    pub slot: u64,
    pub packet_id: u64,
    pub kind: TrafficClass,
    pub tx: UeId,
    pub rx: UeId,
    pub attempt: u8,
    /// SINR of this attempt alone (0 when missed).
    pub sinr: f64,
    /// SINR used for the decode decision (combined under HARQ).
    pub effective_sinr: f64,
    /// Receiver was transmitting (half duplex) and heard nothing.
    pub missed: bool,
    pub success: bool,
}

pub struct ReceptionContext<'a> {
    pub kinds: &'a [UeKind],
    pub gains: &'a ChannelGainMap,
    pub noise_mw: f64,
    pub threshold_a2a: McsThreshold,
    pub threshold_a2i: McsThreshold,
    /// Decode threshold of the control part carried with each attempt.
    pub threshold_control: McsThreshold,
    pub duplex: DuplexMode,
    pub tx_power_dbm: f64,
    pub harq_combining: bool,
}

/// Intended receivers of a transmission: every other group member for A2A,
/// the gNB for A2I.
pub fn intended_receivers(tx: UeId, kind: TrafficClass, kinds: &[UeKind]) -> Vec<UeId> {
    match kind {
        TrafficClass::A2aCam => (0..kinds.len())
            .filter(|&u| u != tx && kinds[u].is_group())
            .collect(),
        TrafficClass::A2iData => (0..kinds.len()).filter(|&u| kinds[u] == UeKind::Gnb).collect(),
    }
}

/// Evaluates every transmission of the slot at each of its intended
/// receivers. Processes in `harq` are created on first attempts and
/// updated in place; receivers that already decoded are not re-evaluated.
pub fn receive_slot(
    now: u64,
    txs: &[Transmission],
    ctx: &ReceptionContext<'_>,
    harq: &mut BTreeMap<UeId, HarqProcess>,
) -> Vec<ReceptionEvent> {
    let power_mw = crate::channel::db_to_linear(ctx.tx_power_dbm);
    let active: Vec<ActiveTx> = txs
        .iter()
        .map(|t| ActiveTx {
            ue: t.ue,
            resource: t.resource,
            power_mw,
        })
        .collect();
    let transmitting = |u: UeId| txs.iter().any(|t| t.ue == u);
    let mut events = Vec::new();
    for t in txs {
        let process = harq.entry(t.ue).or_insert_with(|| HarqProcess::new(t.packet, &[]));
        if t.attempt == 1 || process.packet.id != t.packet.id {
            *process = HarqProcess::new(t.packet, &intended_receivers(t.ue, t.packet.kind, ctx.kinds));
        }
        process.attempts = t.attempt;
        process.last_tx_slot = now;
        process.retransmit = false;
        let threshold = match t.packet.kind {
            TrafficClass::A2aCam => ctx.threshold_a2a,
            TrafficClass::A2iData => ctx.threshold_a2i,
        };
        for rs in process.receivers.iter_mut().filter(|r| !r.decoded) {
            let rx_busy = transmitting(rs.rx);
            let missed = rx_busy && ctx.duplex.mode == Duplex::Half;
            let sinr = if missed {
                0.0
            } else {
                let si = if rx_busy {
                    ctx.duplex.residual_si_mw(ctx.tx_power_dbm)
                } else {
                    0.0
                };
                sinr_on_resource(rs.rx, t.ue, t.resource, ctx.gains, ctx.noise_mw, &active, si)
            };
            let effective = if ctx.harq_combining {
                rs.accumulated_sinr + sinr
            } else {
                sinr
            };
            rs.accumulated_sinr = effective;
            rs.decoded = !missed && threshold.decodes(effective);
            rs.sci_decoded |= !missed && ctx.threshold_control.decodes(sinr);
            events.push(ReceptionEvent {
                slot: now,
                packet_id: t.packet.id,
                kind: t.packet.kind,
                tx: t.ue,
                rx: rs.rx,
                attempt: t.attempt,
                sinr,
                effective_sinr: effective,
                missed,
                success: rs.decoded,
            });
        }
        if process.all_decoded() {
            process.state = HarqState::Acked;
        }
    }
    events
}

/// One-bit PSFCH verdict from a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ack,
    Nack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackEvent {
    pub packet_id: u64,
    pub receiver: UeId,
    pub verdict: Verdict,
    pub slot: u64,
}

/// Feedback for a process after its latest attempt, sent one slot after
/// reception. NACK-only: only failures are reported, and only by receivers
/// within `min_range_m` that decoded the control part of some attempt.
/// ACK/NACK: every receiver reports, and a missing report counts as a
/// failure.
pub fn feedback_events(
    process: &HarqProcess,
    mode: FeedbackMode,
    min_range_m: f64,
    positions: &[Point],
) -> Vec<FeedbackEvent> {
    let tx_pos = positions[process.packet.src];
    process
        .receivers
        .iter()
        .filter_map(|r| {
            let verdict = if r.decoded { Verdict::Ack } else { Verdict::Nack };
            let keep = match mode {
                FeedbackMode::AckNack => true,
                FeedbackMode::NackOnly => {
                    verdict == Verdict::Nack && r.sci_decoded && positions[r.rx].distance(tx_pos) <= min_range_m
                }
            };
            keep.then_some(FeedbackEvent {
                packet_id: process.packet.id,
                receiver: r.rx,
                verdict,
                slot: process.last_tx_slot + 1,
            })
        })
        .collect()
}

/// Whether the process should be retransmitted: some eligible receiver
/// reported a failure and an attempt is left.
pub fn harq_decision(process: &HarqProcess, mode: FeedbackMode, min_range_m: f64, positions: &[Point]) -> bool {
    process.attempts < MAX_ATTEMPTS
        && process.state == HarqState::Pending
        && feedback_events(process, mode, min_range_m, positions)
            .iter()
            .any(|f| f.verdict == Verdict::Nack)
}

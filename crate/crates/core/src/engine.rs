//! The slot-level simulation cycle: placement, random initial allocation,
//! periodic mobility/channel refresh and the per-slot MAC/PHY phases.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use crate::allocation::{
    cooperative_round, reevaluate_selection, select_mode2, select_random, slot_with_phase, AllocationDecision, LeaderState,
    Mode1Scheduler, Origin, SelectionContext, Sci3Message,
};
use crate::channel::{db_to_linear, linear_to_db, noise_power_dbm, sinr_threshold, ChannelGainMap, GainParams, McsThreshold};
use crate::error::Result;
use crate::link::{
    generate_traffic, harq_decision, intended_receivers, receive_slot, transmit_slot, DuplexMode, HarqProcess,
    HarqState, Packet, ReceptionContext, ReceptionEvent, TrafficClass, TrafficSource, Transmission, MAX_ATTEMPTS,
};
use crate::resources::{Observation, ResourceGrid, ResourceId, SelectionWindow, SensingHistory, SlotSpan};
use crate::rng::Streams;
use crate::scenario::{drop_a2i_ues, AllocMode, FeedbackMode, Mobility, ScenarioConfig, UeId, UeKind, UeState};

/// Gap between a primary transmission and its retransmission: reception,
/// one slot of feedback latency, then the retransmission.
pub const RETX_MIN_GAP_SLOTS: u64 = 2;

/// Phases of one slot, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Refresh,
    Generate,
    Select,
    Transmit,
    Sense,
    Receive,
    Feedback,
    Account,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Phase { slot: u64, phase: Phase },
    Reevaluation { slot: u64, ue: UeId, target_slot: u64 },
}

/// Raw per-slot records, kept only when enabled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub packets: Vec<Packet>,
    pub transmissions: Vec<Transmission>,
    pub receptions: Vec<ReceptionEvent>,
    pub trace: Vec<TraceEvent>,
}

/// Terminal state counters of one traffic class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounters {
    pub generated: u64,
    /// Decoded by every intended receiver.
    pub delivered: u64,
    /// Decoded by some but not all intended receivers.
    pub partial: u64,
    /// Decoded by nobody before the deadline.
    pub expired: u64,
    /// Successful (packet, receiver) pairs.
    pub success_pairs: u64,
    /// Intended (packet, receiver) pairs.
    pub receiver_pairs: u64,
    /// Bits of packets decoded by at least one receiver.
    pub delivered_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub a2a: ClassCounters,
    pub a2i: ClassCounters,
    /// Simulated time over which packets are counted.
    pub counted_duration_s: f64,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn class(&self, kind: TrafficClass) -> &ClassCounters {
        match kind {
            TrafficClass::A2aCam => &self.a2a,
            TrafficClass::A2iData => &self.a2i,
        }
    }
}

#[derive(Debug, Clone)]
struct PacketRecord {
    packet: Packet,
    receivers: usize,
    decoded_by: BTreeSet<UeId>,
}

/// Complete state of one run.
pub struct Simulation {
    cfg: ScenarioConfig,
    now: u64,
    total_slots: u64,
    warmup_slots: u64,
    period: u64,
    update_interval: u64,
    n_group: usize,
    ues: Vec<UeState>,
    kinds: Vec<UeKind>,
    mobility: Mobility,
    gain_params: GainParams,
    gains: ChannelGainMap,
    noise_mw: f64,
    threshold_a2a: McsThreshold,
    threshold_a2i: McsThreshold,
    threshold_control: McsThreshold,
    duplex: DuplexMode,
    ctx: SelectionContext,
    window: SelectionWindow,
    sources: Vec<TrafficSource>,
    decisions: BTreeMap<UeId, AllocationDecision>,
    /// Scheduled grants waiting for the UE's next packet arrival.
    pending_grants: BTreeMap<UeId, AllocationDecision>,
    queues: BTreeMap<UeId, VecDeque<Packet>>,
    harq: BTreeMap<UeId, HarqProcess>,
    histories: Vec<SensingHistory>,
    reevaluated: BTreeMap<UeId, u64>,
    gnb_scheduler: Mode1Scheduler,
    leader: LeaderState,
    streams: Streams,
    next_packet_id: u64,
    in_flight: BTreeMap<u64, PacketRecord>,
    a2a: ClassCounters,
    a2i: ClassCounters,
    log: Option<EventLog>,
    started: Instant,
}

impl Simulation {
    /// Validates the configuration, places every UE and draws the initial
    /// (random) allocation.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let mut streams = Streams::new(cfg.run.seed);
        let k = cfg.layout.n_group_agvs;
        let m = cfg.layout.n_a2i_links;
        let gnb = cfg.gnb_position();

        let a2i = drop_a2i_ues(m, k, gnb, cfg.layout.a2i_spread_m, cfg.hall(), &mut streams.placement);
        let mobility = Mobility::new(&cfg, &a2i, &mut streams.placement)?;
        let leader = cfg.mac.alloc_mode == AllocMode::Cooperative;
        let mut ues = mobility.place_group(leader);
        ues.extend(a2i);
        ues.push(UeState {
            id: k + m,
            kind: UeKind::Gnb,
            position: gnb,
            velocity: Default::default(),
        });
        let kinds: Vec<UeKind> = ues.iter().map(|u| u.kind).collect();

        let gain_params = GainParams {
            fc_ghz: cfg.radio.carrier_freq_ghz,
            antenna_gain_tx_dbi: cfg.radio.antenna_gain_tx_dbi,
            antenna_gain_rx_dbi: cfg.radio.antenna_gain_rx_dbi,
            sigma_db: cfg.radio.shadowing_sigma_db,
            decorr_m: cfg.radio.shadowing_decorr_m,
        };
        let gains = ChannelGainMap::new(&ues, &gain_params, &mut streams.shadowing);

        let bw = cfg.subchannel_bw_hz();
        let slot_s = cfg.slot_s();
        let noise_mw = db_to_linear(noise_power_dbm(bw, cfg.radio.noise_figure_db)?);
        let period = cfg.period_slots() as u64;
        let grid = ResourceGrid::from_config(&cfg);
        let ctx = SelectionContext {
            grid,
            threshold_dbm: cfg.mac.rsrp_threshold_dbm,
            period_slots: period,
            harq: cfg.mac.harq_enabled,
            retx_min_gap: RETX_MIN_GAP_SLOTS,
            counter_min: cfg.reselection_range().0,
            counter_max: cfg.reselection_range().1,
        };
        // The window ends one slot before the next arrival so that a
        // reservation never shares a slot with its own packet generation.
        let window = SelectionWindow::new(1, (period as u32).saturating_sub(1).max(1))?;

        let sources: Vec<TrafficSource> = ues
            .iter()
            .filter(|u| u.kind != UeKind::Gnb)
            .map(|u| {
                let (size_bits, kind) = if u.kind.is_group() {
                    (cfg.traffic.packet_size_a2a_bits, TrafficClass::A2aCam)
                } else {
                    (cfg.traffic.packet_size_a2i_bits, TrafficClass::A2iData)
                };
                TrafficSource {
                    ue: u.id,
                    phase_slot: rand::Rng::random_range(&mut streams.traffic, 0..period),
                    period_slots: period,
                    size_bits,
                    kind,
                }
            })
            .collect();

        let mut decisions = BTreeMap::new();
        for s in &sources {
            let span = window.span(s.phase_slot);
            let d = select_random(s.ue, span, &ctx, Origin::RandomInit, &mut streams.selection);
            decisions.insert(s.ue, d);
        }

        let window_slots = cfg.sensing_window_slots() as u64;
        let half = cfg.mac.duplex == crate::scenario::Duplex::Half;
        let histories = (0..k).map(|_| SensingHistory::new(window_slots, half)).collect();

        Ok(Self {
            now: 0,
            total_slots: cfg.total_slots(),
            warmup_slots: cfg.warmup_slots(),
            period,
            update_interval: cfg.update_interval_slots(),
            n_group: k,
            threshold_a2a: sinr_threshold(cfg.traffic.packet_size_a2a_bits, bw, slot_s),
            threshold_a2i: sinr_threshold(cfg.traffic.packet_size_a2i_bits, bw, slot_s),
            threshold_control: sinr_threshold(cfg.mac.control_payload_bits, bw, slot_s),
            duplex: DuplexMode {
                mode: cfg.mac.duplex,
                residual_si_db: cfg.mac.residual_si_db,
            },
            gnb_scheduler: Mode1Scheduler::new(period, cfg.mac.mode1_regrant_periods as u64),
            leader: LeaderState::new(0),
            ues,
            kinds,
            mobility,
            gain_params,
            gains,
            noise_mw,
            ctx,
            window,
            sources,
            decisions,
            pending_grants: BTreeMap::new(),
            queues: BTreeMap::new(),
            harq: BTreeMap::new(),
            histories,
            reevaluated: BTreeMap::new(),
            streams,
            next_packet_id: 0,
            in_flight: BTreeMap::new(),
            a2a: ClassCounters::default(),
            a2i: ClassCounters::default(),
            log: None,
            started: Instant::now(),
            cfg,
        })
    }

    /// Keeps every packet, transmission, reception and phase from now on.
    pub fn enable_event_log(&mut self) {
        self.log.get_or_insert_with(EventLog::default);
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.total_slots
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn gains(&self) -> &ChannelGainMap {
        &self.gains
    }

    pub fn decisions(&self) -> &BTreeMap<UeId, AllocationDecision> {
        &self.decisions
    }

    pub fn sources(&self) -> &[TrafficSource] {
        &self.sources
    }

    pub fn warmup_slots(&self) -> u64 {
        self.warmup_slots
    }

    /// Runs every remaining slot and returns the report.
    pub fn run_to_end(mut self) -> RunReport {
        while !self.is_finished() {
            self.step_slot();
        }
        self.report()
    }

    pub fn report(&self) -> RunReport {
        let counted_slots = self.total_slots.saturating_sub(self.warmup_slots);
        RunReport {
            config: self.cfg.clone(),
            a2a: self.a2a,
            a2i: self.a2i,
            counted_duration_s: counted_slots as f64 * self.cfg.slot_s(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        }
    }

    fn trace(&mut self, ev: TraceEvent) {
        if let Some(log) = self.log.as_mut() {
            log.trace.push(ev);
        }
    }

    fn enter(&mut self, phase: Phase) {
        let slot = self.now;
        self.trace(TraceEvent::Phase { slot, phase });
    }
}

/// Moves a periodic reservation to its first occurrence at or after
/// `from`, keeping the retransmission at the same offset.
fn rephase(mut d: AllocationDecision, from: u64, period: u64) -> AllocationDecision {
    let target = slot_with_phase(
        SlotSpan {
            first: from,
            last: from + period - 1,
        },
        d.resource.slot % period,
        period,
    );
    let old = d.resource.slot;
    d.resource.slot = target;
    if let Some(r) = d.retx.as_mut() {
        r.slot = r.slot.saturating_sub(old) + target;
    }
    d
}

/// Validates `cfg`, simulates it to the horizon and reports.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport> {
    Ok(Simulation::new(cfg)?.run_to_end())
}

impl Simulation {
    /// Processes the current slot and advances the clock by one.
    pub fn step_slot(&mut self) {
        let now = self.now;

        self.enter(Phase::Refresh);
        if now > 0 && now % self.update_interval == 0 {
            let dt = self.update_interval as f64 * self.cfg.slot_s();
            self.mobility
                .advance_positions(&mut self.ues, dt, &mut self.streams.mobility);
            self.gains
                .refresh(&self.ues, &self.gain_params, &mut self.streams.shadowing);
        }

        self.enter(Phase::Generate);
        let arrivals = generate_traffic(now, &self.sources, &mut self.next_packet_id);
        for p in &arrivals {
            let receivers = intended_receivers(p.src, p.kind, &self.kinds).len();
            self.in_flight.insert(
                p.id,
                PacketRecord {
                    packet: *p,
                    receivers,
                    decoded_by: BTreeSet::new(),
                },
            );
            self.queues.entry(p.src).or_default().push_back(*p);
        }
        if let Some(log) = self.log.as_mut() {
            log.packets.extend_from_slice(&arrivals);
        }

        self.enter(Phase::Select);
        self.select(now, &arrivals);

        self.enter(Phase::Transmit);
        let (txs, _expired) = transmit_slot(now, &self.decisions, &mut self.queues, &self.harq);
        for t in txs.iter().filter(|t| t.ue < self.n_group) {
            self.histories[t.ue].mark_transmission(now);
        }
        if let Some(log) = self.log.as_mut() {
            log.transmissions.extend_from_slice(&txs);
        }

        self.enter(Phase::Sense);
        self.sense(now, &txs);

        self.enter(Phase::Receive);
        let ctx = ReceptionContext {
            kinds: &self.kinds,
            gains: &self.gains,
            noise_mw: self.noise_mw,
            threshold_a2a: self.threshold_a2a,
            threshold_a2i: self.threshold_a2i,
            threshold_control: self.threshold_control,
            duplex: self.duplex,
            tx_power_dbm: self.cfg.radio.tx_power_dbm,
            harq_combining: self.cfg.mac.harq_enabled,
        };
        let events = receive_slot(now, &txs, &ctx, &mut self.harq);
        for e in events.iter().filter(|e| e.success) {
            if let Some(r) = self.in_flight.get_mut(&e.packet_id) {
                r.decoded_by.insert(e.rx);
            }
        }
        if let Some(log) = self.log.as_mut() {
            log.receptions.extend_from_slice(&events);
        }

        self.enter(Phase::Feedback);
        if self.cfg.mac.harq_enabled {
            self.feedback(&txs);
        }

        self.enter(Phase::Account);
        self.account(now);
        self.advance(now);
        self.now += 1;
    }

    fn select(&mut self, now: u64, arrivals: &[Packet]) {
        let mode = self.cfg.mac.alloc_mode;
        let k = self.n_group;
        let n_tx = self.sources.len();

        let regrant = self.period * self.cfg.mac.mode1_regrant_periods.max(1) as u64;
        if now % regrant == 0 && (mode == AllocMode::Mode1 || n_tx > k) {
            // A gNB scheduling the group as well knows every grant and keeps
            // the whole pool orthogonal.
            // Uplink HARQ is not reserved ahead, so only sidelink requesters
            // get retransmission grants.
            let first = if mode == AllocMode::Mode1 { 0 } else { k };
            let requesters: Vec<UeId> = (first..n_tx).collect();
            let grants = self.gnb_scheduler.assign_mode1(
                &requesters,
                k - first,
                now,
                &self.ctx,
                &mut self.streams.scheduler,
            );
            self.pending_grants.extend(grants.iter().map(|(u, d)| (*u, *d)));
        }

        let round = self.period * self.cfg.mac.coop_round_periods.max(1) as u64;
        if mode == AllocMode::Cooperative && now % round == 0 {
            self.cooperative(now);
        }

        // A grant replaces the current reservation only once the packet
        // served by that reservation is out, starting at the next arrival.
        for a in arrivals {
            if let Some(g) = self.pending_grants.remove(&a.src) {
                self.decisions.insert(a.src, rephase(g, now, self.period));
            }
        }

        if matches!(mode, AllocMode::Random | AllocMode::Mode2 | AllocMode::Mode2Noreeval) {
            for a in arrivals.iter().filter(|a| a.src < k) {
                if self.decisions[&a.src].reselection_counter > 0 {
                    continue;
                }
                let span = self.window.span(now);
                let rng = &mut self.streams.selection;
                let next = if mode == AllocMode::Random {
                    select_random(a.src, span, &self.ctx, Origin::Random, rng)
                } else {
                    self.histories[a.src].evict(now);
                    select_mode2(a.src, &self.histories[a.src], span, &self.ctx, rng)
                };
                self.decisions.insert(a.src, next);
            }
        }

        if mode == AllocMode::Mode2 {
            self.reevaluate(now);
        }
    }

    /// Re-evaluation `t3` slots before each pending primary transmission,
    /// once per packet.
    fn reevaluate(&mut self, now: u64) {
        let t3 = self.cfg.mac.t3_slots as u64;
        for ue in 0..self.n_group {
            let d = self.decisions[&ue];
            if d.resource.slot != now + t3 {
                continue;
            }
            let Some(head) = self.queues.get(&ue).and_then(|q| q.front()).copied() else {
                continue;
            };
            if self.reevaluated.get(&ue) == Some(&head.id) || head.deadline_slot < now + 2 {
                continue;
            }
            self.reevaluated.insert(ue, head.id);
            let span = SlotSpan {
                first: now + 1,
                last: head.deadline_slot - 1,
            };
            self.histories[ue].evict(now);
            let r = reevaluate_selection(d, &self.histories[ue], span, &self.ctx, &mut self.streams.selection);
            self.decisions.insert(ue, r.decision);
            self.trace(TraceEvent::Reevaluation {
                slot: now,
                ue,
                target_slot: d.resource.slot,
            });
        }
    }

    fn control_delivered(&self, from: UeId, to: UeId) -> bool {
        let snr = db_to_linear(self.cfg.radio.tx_power_dbm) * self.gains.gain(from, to) / self.noise_mw;
        self.threshold_control.decodes(snr)
    }

    /// Leader round: members report their selections, the leader assigns
    /// and sends the assignment back.
    fn cooperative(&mut self, now: u64) {
        let leader = self.leader.leader_id;
        let members: Vec<UeId> = (0..self.n_group).collect();
        // The leader's own entry needs no radio link.
        let msgs: Vec<Sci3Message> = members
            .iter()
            .map(|&u| {
                let d = self.decisions[&u];
                Sci3Message {
                    sender: u,
                    selected_resources: std::iter::once(d.resource).chain(d.retx).collect(),
                    slot_sent: now,
                    delivered: u == leader || self.control_delivered(u, leader),
                }
            })
            .collect();
        let delivered: Vec<bool> = members
            .iter()
            .map(|&u| u == leader || self.control_delivered(leader, u))
            .collect();
        self.histories[leader].evict(now);
        let out = cooperative_round(
            &mut self.leader,
            &msgs,
            &self.histories[leader],
            &members,
            &delivered,
            self.window.span(now),
            &self.ctx,
            self.cfg.mac.coop_round_periods,
            &mut self.streams.selection,
        );
        self.pending_grants.extend(out);
    }

    /// SL-RSRP bookkeeping of every group member: the in-band power of each
    /// transmission heard, its in-band emission on the other subchannels of
    /// the slot, and announced retransmission reservations.
    fn sense(&mut self, now: u64, txs: &[Transmission]) {
        if !self.cfg.mac.alloc_mode.uses_sensing() {
            return;
        }
        let n_sub = self.ctx.grid.n_subchannels;
        let ibe = self.cfg.radio.ibe_suppression_db;
        let tx_dbm = self.cfg.radio.tx_power_dbm;
        for listener in 0..self.n_group {
            for t in txs.iter().filter(|t| t.ue != listener) {
                let rsrp = tx_dbm + linear_to_db(self.gains.gain(t.ue, listener));
                let mut slots = vec![t.resource.slot];
                if t.attempt == 1 && t.ue < self.n_group {
                    if let Some(r) = self.decisions[&t.ue].retx.filter(|r| r.slot > now) {
                        slots.push(r.slot);
                    }
                }
                let hist = &mut self.histories[listener];
                for (i, &slot) in slots.iter().enumerate() {
                    let own = if i == 0 {
                        t.resource.subchannel
                    } else {
                        self.decisions[&t.ue].retx.map_or(0, |r| r.subchannel)
                    };
                    for c in 0..n_sub {
                        let p = if c == own { rsrp } else { rsrp - ibe };
                        hist.record(Observation {
                            resource: ResourceId::new(slot, c),
                            rsrp_dbm: p,
                            measured_slot: now,
                            source: Some(t.ue),
                        });
                    }
                }
            }
        }
    }

    fn feedback(&mut self, txs: &[Transmission]) {
        let positions: Vec<_> = self.ues.iter().map(|u| u.position).collect();
        for t in txs {
            // Uplink HARQ is driven by the gNB, which always reports.
            let mode = match t.packet.kind {
                TrafficClass::A2aCam => self.cfg.mac.feedback,
                TrafficClass::A2iData => FeedbackMode::AckNack,
            };
            if let Some(p) = self.harq.get_mut(&t.ue) {
                p.retransmit = harq_decision(p, mode, self.cfg.mac.min_range_m, &positions);
                if !p.retransmit && p.state == HarqState::Pending && (p.attempts >= MAX_ATTEMPTS || !p.all_decoded()) {
                    p.state = HarqState::Failed;
                }
            }
        }
    }

    /// Closes every packet whose deadline is this slot.
    fn account(&mut self, now: u64) {
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.get().packet.deadline_slot > now {
                break;
            }
            let r = entry.remove();
            let p = r.packet;
            if p.gen_slot < self.warmup_slots || p.deadline_slot >= self.total_slots {
                continue;
            }
            let c = match p.kind {
                TrafficClass::A2aCam => &mut self.a2a,
                TrafficClass::A2iData => &mut self.a2i,
            };
            let decoded = r.decoded_by.len();
            c.generated += 1;
            c.receiver_pairs += r.receivers as u64;
            c.success_pairs += decoded as u64;
            if decoded == 0 {
                c.expired += 1;
            } else {
                c.delivered_bits += p.size_bits as u64;
                if decoded == r.receivers {
                    c.delivered += 1;
                } else {
                    c.partial += 1;
                }
            }
        }
    }

    /// Moves every reservation that occurred in `now` to its next period.
    fn advance(&mut self, now: u64) {
        let p = self.period;
        for d in self.decisions.values_mut() {
            if d.resource.slot <= now {
                while d.resource.slot <= now {
                    d.resource.slot += p;
                }
                d.reselection_counter = d.reselection_counter.saturating_sub(1);
            }
            if let Some(r) = d.retx.as_mut() {
                while r.slot <= now {
                    r.slot += p;
                }
            }
        }
    }
}

//! Resource allocation strategies: random, gNB round robin (mode 1),
//! sensing-based mode 2 with optional re-evaluation, and leader-based
//! cooperative assignment.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::resources::{candidate_resources, CandidateSet, ResourceGrid, ResourceId, SensingHistory, SlotSpan};
use crate::scenario::UeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    RandomInit,
    Random,
    Mode2,
    Mode1,
    Cooperative,
    FallbackRandom,
}

/// A periodic reservation: the next primary transmission slot, an optional
/// HARQ retransmission resource in the same period, and the number of
/// transmission opportunities left before reselection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationDecision {
    pub ue: UeId,
    pub resource: ResourceId,
    pub retx: Option<ResourceId>,
    pub reselection_counter: u32,
    pub origin: Origin,
}

/// Parameters shared by every selection call in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionContext {
    pub grid: ResourceGrid,
    pub threshold_dbm: f64,
    pub period_slots: u64,
    /// Reserve a retransmission resource alongside the primary one.
    pub harq: bool,
    /// Minimum distance in slots between primary and retransmission
    /// (reception, one slot of feedback latency, then retransmission).
    pub retx_min_gap: u64,
    pub counter_min: u32,
    pub counter_max: u32,
}

impl SelectionContext {
    pub fn draw_counter<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.counter_min..=self.counter_max)
    }
}

/// Picks a primary uniformly from `pool` and, when HARQ is on, a second
/// resource at least `retx_min_gap` slots away; the earlier of the two
/// becomes the primary.
fn pick_pair<R: Rng + ?Sized>(
    pool: &[ResourceId],
    ctx: &SelectionContext,
    rng: &mut R,
) -> Option<(ResourceId, Option<ResourceId>)> {
    let first = *pool.choose(rng)?;
    if !ctx.harq {
        return Some((first, None));
    }
    let far: Vec<ResourceId> = pool
        .iter()
        .copied()
        .filter(|r| r.slot.abs_diff(first.slot) >= ctx.retx_min_gap)
        .collect();
    match far.choose(rng) {
        Some(&second) if second.slot < first.slot => Some((second, Some(first))),
        Some(&second) => Some((first, Some(second))),
        None => Some((first, None)),
    }
}

/// Chooses a retransmission resource after a fixed primary.
fn pick_retx<R: Rng + ?Sized>(
    primary: ResourceId,
    pool: &[ResourceId],
    ctx: &SelectionContext,
    rng: &mut R,
) -> Option<ResourceId> {
    if !ctx.harq {
        return None;
    }
    let later: Vec<ResourceId> = pool
        .iter()
        .copied()
        .filter(|r| r.slot >= primary.slot + ctx.retx_min_gap)
        .collect();
    later.choose(rng).copied()
}

/// Uniform draw over every resource of the window.
pub fn select_random<R: Rng + ?Sized>(
    ue: UeId,
    span: SlotSpan,
    ctx: &SelectionContext,
    origin: Origin,
    rng: &mut R,
) -> AllocationDecision {
    let pool: Vec<ResourceId> = span.resources(&ctx.grid).collect();
    let (resource, retx) = pick_pair(&pool, ctx, rng).expect("selection window is not empty");
    AllocationDecision {
        ue,
        resource,
        retx,
        reselection_counter: ctx.draw_counter(rng),
        origin,
    }
}

/// Uniform draw over the sensing-based candidate set. Falls back to a
/// random draw when nothing has been sensed yet.
pub fn select_mode2<R: Rng + ?Sized>(
    ue: UeId,
    history: &SensingHistory,
    span: SlotSpan,
    ctx: &SelectionContext,
    rng: &mut R,
) -> AllocationDecision {
    if history.is_empty() {
        return select_random(ue, span, ctx, Origin::FallbackRandom, rng);
    }
    let candidates = candidate_resources(history, span, &ctx.grid, ctx.threshold_dbm, ctx.period_slots);
    let pool = candidates.ids();
    let (resource, retx) = pick_pair(&pool, ctx, rng).expect("candidate set is never empty");
    AllocationDecision {
        ue,
        resource,
        retx,
        reselection_counter: ctx.draw_counter(rng),
        origin: Origin::Mode2,
    }
}

/// Outcome of a re-evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Reevaluation {
    pub decision: AllocationDecision,
    pub primary_changed: bool,
    pub candidates: CandidateSet,
}

/// Re-checks a scheduled primary (and retransmission) resource against the
/// current sensing picture over `span`, redrawing whatever was excluded.
pub fn reevaluate_selection<R: Rng + ?Sized>(
    decision: AllocationDecision,
    history: &SensingHistory,
    span: SlotSpan,
    ctx: &SelectionContext,
    rng: &mut R,
) -> Reevaluation {
    let candidates = candidate_resources(history, span, &ctx.grid, ctx.threshold_dbm, ctx.period_slots);
    let mut next = decision;
    let mut primary_changed = false;
    if !candidates.contains(decision.resource) {
        let pool = candidates.ids();
        if let Some(&r) = pool.choose(rng) {
            next.resource = r;
            primary_changed = true;
        }
    }
    if ctx.harq {
        let retx_ok = next.retx.is_some_and(|r| {
            r.slot >= next.resource.slot + ctx.retx_min_gap && (!span.contains(r.slot) || candidates.contains(r))
        });
        if !retx_ok {
            next.retx = pick_retx(next.resource, &candidates.ids(), ctx, rng);
        }
    }
    Reevaluation {
        decision: next,
        primary_changed,
        candidates,
    }
}

/// gNB round-robin scheduler shared by A2I grants and mode-1 sidelink
/// grants. Requesters take consecutive positions of a slot-major walk over
/// the `(slot, subchannel)` pairs of one period, starting at a per-epoch
/// offset; the map is stable within an epoch. UEs switch to a new grant
/// at their own next arrival, so a new offset must avoid every position of
/// the outgoing grants.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode1Scheduler {
    pub period_slots: u64,
    pub regrant_periods: u64,
    epoch: Option<u64>,
    offset: u64,
    /// Consecutive pool positions taken by the current grants.
    taken: u64,
    requesters: Vec<UeId>,
    grants: BTreeMap<UeId, AllocationDecision>,
}

impl Mode1Scheduler {
    pub fn new(period_slots: u64, regrant_periods: u64) -> Self {
        Self {
            period_slots,
            regrant_periods: regrant_periods.max(1),
            epoch: None,
            offset: 0,
            taken: 0,
            requesters: Vec::new(),
            grants: BTreeMap::new(),
        }
    }

    pub fn epoch_of(&self, now: u64) -> u64 {
        now / (self.period_slots * self.regrant_periods)
    }

    /// Grants for `requesters` valid from `now`. Requesters beyond the pool
    /// size get random fallback grants. With HARQ on, the first
    /// `harq_requesters` also get a retransmission grant when the pool has
    /// room for it.
    pub fn assign_mode1<R: Rng + ?Sized>(
        &mut self,
        requesters: &[UeId],
        harq_requesters: usize,
        now: u64,
        ctx: &SelectionContext,
        rng: &mut R,
    ) -> &BTreeMap<UeId, AllocationDecision> {
        let epoch = self.epoch_of(now);
        if self.epoch == Some(epoch) && self.requesters == requesters {
            return &self.grants;
        }
        let n_sub = ctx.grid.n_subchannels as u64;
        let slots = self.period_slots;
        let pool = slots * n_sub;
        let n_harq = harq_requesters.min(requesters.len());
        let with_retx = ctx.harq && (requesters.len() + n_harq) as u64 <= pool;
        let needed = (requesters.len() + if with_retx { n_harq } else { 0 }) as u64;
        if self.epoch != Some(epoch) {
            if self.taken == 0 {
                self.offset = rng.random_range(0..pool);
            } else {
                // Runs of `needed` positions that miss the outgoing run.
                let free = pool.saturating_sub(self.taken + needed) + 1;
                if self.taken + needed <= pool {
                    self.offset = (self.offset + self.taken + rng.random_range(0..free)) % pool;
                }
            }
        }
        self.taken = needed.min(pool);
        self.epoch = Some(epoch);
        self.requesters = requesters.to_vec();
        self.grants.clear();
        let span = SlotSpan {
            first: now + 1,
            last: now + slots,
        };
        let mut used: BTreeSet<ResourceId> = BTreeSet::new();
        for (i, &ue) in requesters.iter().enumerate() {
            let decision = if (i as u64) < pool {
                let pos = (self.offset + i as u64) % pool;
                let phase = pos % slots;
                let subchannel = ((pos / slots) % n_sub) as u32;
                let resource = ResourceId::new(slot_with_phase(span, phase, slots), subchannel);
                used.insert(resource);
                let retx = if with_retx && i < n_harq {
                    let rpos = (self.offset + (requesters.len() + i) as u64) % pool;
                    let r = ResourceId::new(
                        slot_with_phase(span, rpos % slots, slots),
                        ((rpos / slots) % n_sub) as u32,
                    );
                    (r.slot >= resource.slot + ctx.retx_min_gap).then_some(r)
                } else {
                    None
                };
                AllocationDecision {
                    ue,
                    resource,
                    retx,
                    reselection_counter: (self.regrant_periods) as u32,
                    origin: Origin::Mode1,
                }
            } else {
                select_random(ue, span, ctx, Origin::FallbackRandom, rng)
            };
            self.grants.insert(ue, decision);
        }
        &self.grants
    }
}

/// The slot of `span` whose index is congruent to `phase` modulo `period`.
pub fn slot_with_phase(span: SlotSpan, phase: u64, period: u64) -> u64 {
    let base = span.first - span.first % period + phase;
    if base >= span.first {
        base
    } else {
        base + period
    }
}

/// SCI-3: a member tells the leader which resources it currently holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Sci3Message {
    pub sender: UeId,
    pub selected_resources: Vec<ResourceId>,
    pub slot_sent: u64,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeaderState {
    pub leader_id: UeId,
    pub declared: BTreeMap<UeId, Vec<ResourceId>>,
    pub assignment: BTreeMap<UeId, ResourceId>,
}

impl LeaderState {
    pub fn new(leader_id: UeId) -> Self {
        Self {
            leader_id,
            ..Self::default()
        }
    }
}

/// One leader round.
///
/// The leader ingests the delivered SCI-3 messages, ignores the sensed
/// transmissions of those members (it is about to reassign them) and walks
/// the members in order, handing each the least-interfered candidate not
/// yet taken. A slot no other member uses matters more than interference:
/// under half duplex two members sharing a slot never hear each other. So
/// the leader takes the best candidate in a free slot, else the least
/// interfered resource of the window in a free slot, and only then shares a
/// slot. Members whose
/// assignment message is lost (`assignment_delivered[i] == false`) draw
/// randomly instead.
#[allow(clippy::too_many_arguments)]
pub fn cooperative_round<R: Rng + ?Sized>(
    leader: &mut LeaderState,
    msgs: &[Sci3Message],
    leader_history: &SensingHistory,
    members: &[UeId],
    assignment_delivered: &[bool],
    span: SlotSpan,
    ctx: &SelectionContext,
    counter: u32,
    rng: &mut R,
) -> BTreeMap<UeId, AllocationDecision> {
    debug_assert_eq!(members.len(), assignment_delivered.len());
    for m in msgs.iter().filter(|m| m.delivered) {
        leader
            .declared
            .insert(m.sender, m.selected_resources.clone());
    }
    let informed: BTreeSet<UeId> = msgs
        .iter()
        .filter(|m| m.delivered)
        .map(|m| m.sender)
        .chain(std::iter::once(leader.leader_id))
        .collect();
    let view = leader_history.filtered(|o| o.source.is_some_and(|s| informed.contains(&s)));
    let candidates = candidate_resources(&view, span, &ctx.grid, ctx.threshold_dbm, ctx.period_slots);

    let mut ranked = candidates.resources.clone();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    // The whole window, for when every candidate slot is already taken.
    let mut window: Vec<(ResourceId, f64)> = span
        .resources(&ctx.grid)
        .zip(view.projected_rsrp(span, &ctx.grid, ctx.period_slots))
        .collect();
    window.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    // Members move to their new resource at their own next arrival, so a
    // resource still held by another member stays off limits for a period.
    let p = ctx.period_slots.max(1);
    let held: BTreeMap<(u64, u32), UeId> = msgs
        .iter()
        .filter(|m| m.delivered)
        .flat_map(|m| m.selected_resources.iter().map(move |r| ((r.slot % p, r.subchannel), m.sender)))
        .collect();

    let mut taken: BTreeSet<ResourceId> = BTreeSet::new();
    let mut taken_slots: BTreeSet<u64> = BTreeSet::new();
    let pick = |ue: UeId, taken: &BTreeSet<ResourceId>, taken_slots: &BTreeSet<u64>, min_slot: u64| {
        let free = |r: &&(ResourceId, f64)| !taken.contains(&r.0) && r.0.slot >= min_slot;
        let unheld = |r: &&(ResourceId, f64)| held.get(&(r.0.slot % p, r.0.subchannel)).is_none_or(|&h| h == ue);
        let own_slot = |r: &&(ResourceId, f64)| !taken_slots.contains(&r.0.slot);
        ranked
            .iter()
            .filter(free)
            .filter(unheld)
            .find(own_slot)
            .or_else(|| window.iter().filter(free).filter(unheld).find(own_slot))
            .or_else(|| ranked.iter().filter(free).find(unheld))
            .or_else(|| window.iter().filter(free).find(unheld))
            .or_else(|| ranked.iter().find(free))
            .map(|r| r.0)
    };

    let mut primaries: Vec<Option<ResourceId>> = Vec::with_capacity(members.len());
    for &ue in members {
        let r = pick(ue, &taken, &taken_slots, 0);
        if let Some(r) = r {
            taken.insert(r);
            taken_slots.insert(r.slot);
        }
        primaries.push(r);
    }
    let mut retxs: Vec<Option<ResourceId>> = vec![None; members.len()];
    if ctx.harq {
        for (i, p) in primaries.iter().enumerate() {
            if let Some(p) = p {
                let r = pick(members[i], &taken, &taken_slots, p.slot + ctx.retx_min_gap);
                if let Some(r) = r {
                    taken.insert(r);
                    taken_slots.insert(r.slot);
                }
                retxs[i] = r;
            }
        }
    }

    leader.assignment.clear();
    let mut out = BTreeMap::new();
    for (i, &ue) in members.iter().enumerate() {
        let decision = match primaries[i] {
            Some(resource) if assignment_delivered[i] => {
                leader.assignment.insert(ue, resource);
                AllocationDecision {
                    ue,
                    resource,
                    retx: retxs[i],
                    reselection_counter: counter,
                    origin: Origin::Cooperative,
                }
            }
            _ => select_random(ue, span, ctx, Origin::FallbackRandom, rng),
        };
        out.insert(ue, decision);
    }
    out
}

//! Oracles and invariant checks shared by the property and acceptance
//! suites. Each check returns `Err` with a description on violation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use agv_sidelink::engine::{ClassCounters, EventLog, Phase, TraceEvent};
use agv_sidelink::link::TrafficClass;
use agv_sidelink::resources::{ResourceId, SensingHistory, SlotSpan};
use agv_sidelink::scenario::{Duplex, UeKind};
use agv_sidelink::{RunReport, ScenarioConfig, Simulation};

pub type Check = Result<(), String>;

/// A run with its raw event log.
pub struct Traced {
    pub cfg: ScenarioConfig,
    pub report: RunReport,
    pub log: EventLog,
    pub kinds: Vec<UeKind>,
    pub warmup: u64,
    pub total: u64,
}

pub fn traced(cfg: &ScenarioConfig) -> Traced {
    let mut sim = Simulation::new(cfg).expect("valid config");
    sim.enable_event_log();
    while !sim.is_finished() {
        sim.step_slot();
    }
    Traced {
        cfg: cfg.clone(),
        report: sim.report(),
        log: sim.event_log().expect("log enabled").clone(),
        kinds: sim.ues().iter().map(|u| u.kind).collect(),
        warmup: sim.warmup_slots(),
        total: cfg.total_slots(),
    }
}

pub fn short(mode: &str, agvs: usize, period_ms: u32, seconds: f64, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.mac.alloc_mode = mode.parse().unwrap();
    c.layout.n_group_agvs = agvs;
    c.traffic.packet_period_ms = period_ms;
    c.run.sim_duration_s = seconds;
    c.run.seed = seed;
    c
}

fn transmitters_by_slot(log: &EventLog) -> HashMap<u64, HashSet<usize>> {
    let mut m: HashMap<u64, HashSet<usize>> = HashMap::new();
    for t in &log.transmissions {
        m.entry(t.resource.slot).or_default().insert(t.ue);
    }
    m
}

/// Under half duplex a UE hears nothing in a slot it transmits in, and a
/// reception is marked missed only for that reason. Under full duplex
/// nothing is missed.
pub fn half_duplex_exclusive(t: &Traced) -> Check {
    let tx = transmitters_by_slot(&t.log);
    let hd = t.cfg.mac.duplex == Duplex::Half;
    for r in &t.log.receptions {
        let busy = tx.get(&r.slot).is_some_and(|s| s.contains(&r.rx));
        if hd && busy != r.missed {
            return Err(format!("slot {} rx {}: transmitting={busy} missed={}", r.slot, r.rx, r.missed));
        }
        if !hd && r.missed {
            return Err(format!("slot {} rx {} missed under full duplex", r.slot, r.rx));
        }
        if r.missed && r.success {
            return Err(format!("slot {} rx {} decoded while deaf", r.slot, r.rx));
        }
    }
    Ok(())
}

/// No two group AGVs transmit on the same resource.
pub fn group_orthogonal(t: &Traced) -> Check {
    let mut seen: HashMap<ResourceId, usize> = HashMap::new();
    for x in &t.log.transmissions {
        if !t.kinds[x.ue].is_group() {
            continue;
        }
        if let Some(other) = seen.insert(x.resource, x.ue) {
            return Err(format!("UEs {other} and {} share {:?}", x.ue, x.resource));
        }
    }
    Ok(())
}

/// At most two attempts per packet; the combined SINR never drops across
/// attempts and never falls below the attempt's own SINR; a receiver that
/// decoded is not evaluated again.
pub fn harq_bounded_and_monotone(t: &Traced) -> Check {
    let mut per_packet: HashMap<u64, Vec<u8>> = HashMap::new();
    for x in &t.log.transmissions {
        per_packet.entry(x.packet.id).or_default().push(x.attempt);
    }
    for (id, mut a) in per_packet {
        a.sort_unstable();
        let expected: Vec<u8> = (1..=a.len() as u8).collect();
        if a.len() > 2 || a != expected {
            return Err(format!("packet {id} attempts {a:?}"));
        }
    }
    let mut chains: BTreeMap<(u64, usize), Vec<(u8, f64, f64, bool)>> = BTreeMap::new();
    for r in &t.log.receptions {
        chains
            .entry((r.packet_id, r.rx))
            .or_default()
            .push((r.attempt, r.sinr, r.effective_sinr, r.success));
    }
    for ((id, rx), mut c) in chains {
        c.sort_by_key(|e| e.0);
        for e in &c {
            if e.2 + 1e-12 < e.1 {
                return Err(format!("packet {id} rx {rx}: combined {} below single {}", e.2, e.1));
            }
        }
        for w in c.windows(2) {
            if w[0].3 {
                return Err(format!("packet {id} rx {rx} re-evaluated after decoding"));
            }
            if w[1].2 + 1e-12 < w[0].2 {
                return Err(format!("packet {id} rx {rx}: combined SINR fell"));
            }
        }
    }
    Ok(())
}

fn conserved(name: &str, c: &ClassCounters) -> Check {
    if c.generated != c.delivered + c.partial + c.expired {
        return Err(format!("{name}: {c:?} does not add up"));
    }
    if c.success_pairs > c.receiver_pairs {
        return Err(format!("{name}: more successes than pairs"));
    }
    Ok(())
}

pub fn counters_conserved(r: &RunReport) -> Check {
    conserved("a2a", r.class(TrafficClass::A2aCam))?;
    conserved("a2i", r.class(TrafficClass::A2iData))
}

/// Successful and intended (packet, receiver) pairs recounted from the
/// raw log: counted packets start after warm-up and expire inside the run.
pub fn recount_pairs(t: &Traced) -> (u64, u64) {
    let members: Vec<usize> = (0..t.kinds.len()).filter(|&u| t.kinds[u].is_group()).collect();
    let mut ok: HashSet<(u64, usize)> = HashSet::new();
    for r in &t.log.receptions {
        if r.success && r.kind == TrafficClass::A2aCam {
            ok.insert((r.packet_id, r.rx));
        }
    }
    let (mut success, mut pairs) = (0, 0);
    for p in &t.log.packets {
        if p.kind != TrafficClass::A2aCam || p.gen_slot < t.warmup || p.deadline_slot >= t.total {
            continue;
        }
        for &rx in members.iter().filter(|&&u| u != p.src) {
            pairs += 1;
            success += ok.contains(&(p.id, rx)) as u64;
        }
    }
    (success, pairs)
}

pub fn prr_recount_matches(t: &Traced) -> Check {
    let (s, n) = recount_pairs(t);
    let c = t.report.class(TrafficClass::A2aCam);
    if (s, n) != (c.success_pairs, c.receiver_pairs) {
        return Err(format!("recount {s}/{n}, report {}/{}", c.success_pairs, c.receiver_pairs));
    }
    let expected = (n > 0).then(|| s as f64 / n as f64);
    if expected != t.report.prr() {
        return Err(format!("prr {:?} vs {:?}", t.report.prr(), expected));
    }
    Ok(())
}

/// Every slot runs all phases once, in order, and slots follow each other.
pub fn phases_in_order(t: &Traced) -> Check {
    const ORDER: [Phase; 8] = [
        Phase::Refresh,
        Phase::Generate,
        Phase::Select,
        Phase::Transmit,
        Phase::Sense,
        Phase::Receive,
        Phase::Feedback,
        Phase::Account,
    ];
    let phases: Vec<(u64, Phase)> = t
        .log
        .trace
        .iter()
        .filter_map(|e| match *e {
            TraceEvent::Phase { slot, phase } => Some((slot, phase)),
            _ => None,
        })
        .collect();
    if phases.len() as u64 != t.total * ORDER.len() as u64 {
        return Err(format!("{} phase events for {} slots", phases.len(), t.total));
    }
    for (i, (slot, phase)) in phases.iter().enumerate() {
        let want = ((i / ORDER.len()) as u64, ORDER[i % ORDER.len()]);
        if (*slot, *phase) != want {
            return Err(format!("event {i} is {:?}, expected {want:?}", (slot, phase)));
        }
    }
    Ok(())
}

/// Each re-evaluation happens `t3` slots ahead of its target and at most
/// once per packet.
pub fn reevaluation_once_per_packet(t: &Traced) -> Check {
    let t3 = t.cfg.mac.t3_slots as u64;
    let mut done: HashSet<u64> = HashSet::new();
    for e in &t.log.trace {
        let TraceEvent::Reevaluation { slot, ue, target_slot } = *e else {
            continue;
        };
        if target_slot != slot + t3 {
            return Err(format!("UE {ue} re-evaluated at {slot} for {target_slot}"));
        }
        let live = t
            .log
            .packets
            .iter()
            .filter(|p| p.src == ue && p.gen_slot <= slot && slot <= p.deadline_slot)
            .map(|p| p.id)
            .max()
            .ok_or_else(|| format!("UE {ue} re-evaluated at {slot} with no packet"))?;
        if !done.insert(live) {
            return Err(format!("packet {live} re-evaluated twice"));
        }
    }
    Ok(())
}

/// Exhaustive exclusion over `span`, written from the rule rather than the
/// production code path.
pub fn brute_candidates(
    history: &SensingHistory,
    span: SlotSpan,
    n_sub: u32,
    threshold_dbm: f64,
    period: u64,
) -> (BTreeSet<ResourceId>, f64) {
    let reserves = |s0: u64, slot: u64| -> bool {
        if slot < s0 {
            return false;
        }
        let d = slot - s0;
        if s0 >= span.first {
            d % period == 0
        } else if span.first - s0 <= period + 1 {
            d > 0 && d % period == 0
        } else {
            d == period
        }
    };
    let mut window = Vec::new();
    for slot in span.first..=span.last {
        for c in 0..n_sub {
            let r = ResourceId::new(slot, c);
            let p = history
                .observations()
                .filter(|o| o.resource.subchannel == c && reserves(o.resource.slot, slot))
                .map(|o| o.rsrp_dbm)
                .fold(f64::NEG_INFINITY, f64::max);
            window.push((r, p));
        }
    }
    let floor = window.len().div_ceil(5);
    let mut thr = threshold_dbm;
    loop {
        let kept: BTreeSet<ResourceId> = window.iter().filter(|(_, p)| *p <= thr).map(|(r, _)| *r).collect();
        if kept.len() >= floor || kept.len() == window.len() {
            return (kept, thr);
        }
        thr += 3.0;
    }
}

/// Sample std of the stationary shadowing and the correlation between the
/// start value and the value after 25 one-metre steps, over `n` chains.
pub fn shadowing_stats(n: usize, seed: u64) -> (f64, f64) {
    use agv_sidelink::channel::{shadowing_step, ShadowingState};
    use agv_sidelink::scenario::Point;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut s00, mut s01) = (0.0, 0.0);
    for _ in 0..n {
        let s = ShadowingState::new(Point { x: 0.0, y: 0.0 }, 3.0, 25.0, &mut rng);
        let mut e = s;
        for i in 1..=25 {
            e = shadowing_step(e, Point { x: i as f64, y: 0.0 }, &mut rng);
        }
        s00 += s.value_db * s.value_db;
        s01 += s.value_db * e.value_db;
    }
    ((s00 / n as f64).sqrt(), s01 / s00)
}

/// Chi-square p-value of `draws` random selections over a 10 x 2 window.
pub fn random_selection_p_value(draws: u64, seed: u64) -> f64 {
    use agv_sidelink::allocation::{select_random, Origin, SelectionContext};
    use agv_sidelink::resources::ResourceGrid;
    use rand::SeedableRng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    let ctx = SelectionContext {
        grid: ResourceGrid {
            n_subchannels: 2,
            subchannel_prbs: 12,
            slot_duration_us: 250,
            scs_khz: 60,
        },
        threshold_dbm: -110.0,
        period_slots: 40,
        harq: false,
        retx_min_gap: 2,
        counter_min: 25,
        counter_max: 75,
    };
    let span = SlotSpan { first: 1, last: 10 };
    let mut counts = [0u64; 20];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let d = select_random(0, span, &ctx, Origin::Random, &mut rng);
        counts[((d.resource.slot - 1) * 2 + d.resource.subchannel as u64) as usize] += 1;
    }
    let e = draws as f64 / 20.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2)
}

/// A random sensing history for the candidate oracle: up to 25
/// observations, mostly measured in their own slot, some announcing a
/// later one.
pub fn random_history<R: rand::Rng>(rng: &mut R, n_sub: u32) -> SensingHistory {
    let n = rng.random_range(0..25);
    let mut obs: Vec<(u64, u64, u32, f64)> = (0..n)
        .map(|_| {
            let off = if rng.random_bool(0.75) { 0 } else { rng.random_range(1..20) };
            (rng.random_range(0..60), off, rng.random_range(0..n_sub), rng.random_range(-130.0..-60.0))
        })
        .collect();
    obs.sort_by_key(|o| o.0);
    let mut h = SensingHistory::new(10_000, false);
    for (m, off, c, p) in obs {
        h.record(agv_sidelink::resources::Observation {
            resource: ResourceId::new(m + off, c),
            rsrp_dbm: p,
            measured_slot: m,
            source: None,
        });
    }
    h
}

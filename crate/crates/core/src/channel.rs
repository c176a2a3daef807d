//! Propagation, noise and the SINR link abstraction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::resources::ResourceId;
use crate::scenario::{Point, UeId, UeKind, UeState};

pub const THERMAL_DENSITY_DBM_HZ: f64 = -174.0;
/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    /// Between two AGVs on the floor: line of sight.
    A2aLos,
    /// Between an AGV and the gNB: non line of sight.
    A2iNlos,
}

impl LinkKind {
    pub fn between(a: UeKind, b: UeKind) -> Self {
        if a == UeKind::Gnb || b == UeKind::Gnb {
            LinkKind::A2iNlos
        } else {
            LinkKind::A2aLos
        }
    }
}

/// WINNER+ A1 indoor path loss in dB.
pub fn path_loss_db(kind: LinkKind, distance_m: f64, fc_ghz: f64) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M);
    let freq_term = 20.0 * (fc_ghz / 5.0).log10();
    match kind {
        LinkKind::A2aLos => 46.8 + 18.7 * d.log10() + freq_term,
        LinkKind::A2iNlos => 43.8 + 36.8 * d.log10() + freq_term,
    }
}

/// Thermal noise over `bw_hz` plus the receiver noise figure, in dBm.
pub fn noise_power_dbm(bw_hz: f64, nf_db: f64) -> Result<f64> {
    if !(bw_hz > 0.0) || !bw_hz.is_finite() {
        return Err(Error::Domain(format!("noise bandwidth must be positive, got {bw_hz}")));
    }
    Ok(THERMAL_DENSITY_DBM_HZ + 10.0 * bw_hz.log10() + nf_db)
}

/// Log-normal shadowing with exponential spatial correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingState {
    pub value_db: f64,
    pub last_update_position: Point,
    pub sigma_db: f64,
    pub decorr_m: f64,
}

impl ShadowingState {
    /// Fresh state drawn from the stationary distribution.
    pub fn new<R: Rng + ?Sized>(position: Point, sigma_db: f64, decorr_m: f64, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Self {
            value_db: sigma_db * z,
            last_update_position: position,
            sigma_db,
            decorr_m,
        }
    }
}

/// Gudmundson update: `v' = rho v + sqrt(1 - rho^2) N(0, sigma)` with
/// `rho = exp(-moved / decorr)`.
pub fn shadowing_step<R: Rng + ?Sized>(state: ShadowingState, new_position: Point, rng: &mut R) -> ShadowingState {
    let moved = state.last_update_position.distance(new_position);
    let rho = (-moved / state.decorr_m).exp();
    let value_db = if rho >= 1.0 {
        state.value_db
    } else {
        let z: f64 = StandardNormal.sample(rng);
        rho * state.value_db + (1.0 - rho * rho).sqrt() * state.sigma_db * z
    };
    ShadowingState {
        value_db,
        last_update_position: new_position,
        ..state
    }
}

/// Linear power gains between every pair of UEs for the current coherence
/// block. Gains are flat across resources.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGainMap {
    n: usize,
    gain: Vec<f64>,
    shadowing: Vec<ShadowingState>,
}

#[derive(Debug, Clone, Copy)]
pub struct GainParams {
    pub fc_ghz: f64,
    pub antenna_gain_tx_dbi: f64,
    pub antenna_gain_rx_dbi: f64,
    pub sigma_db: f64,
    pub decorr_m: f64,
}

fn midpoint(a: Point, b: Point) -> Point {
    a.add(b).scale(0.5)
}

impl ChannelGainMap {
    pub fn new<R: Rng + ?Sized>(ues: &[UeState], params: &GainParams, rng: &mut R) -> Self {
        let n = ues.len();
        let mut shadowing = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in i + 1..n {
                shadowing.push(ShadowingState::new(
                    midpoint(ues[i].position, ues[j].position),
                    params.sigma_db,
                    params.decorr_m,
                    rng,
                ));
            }
        }
        let mut map = Self {
            n,
            gain: vec![0.0; n * n],
            shadowing,
        };
        map.recompute(ues, params);
        map
    }

    /// Advances every pair's shadowing to the new positions and recomputes
    /// the gains.
    pub fn refresh<R: Rng + ?Sized>(&mut self, ues: &[UeState], params: &GainParams, rng: &mut R) {
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let mid = midpoint(ues[i].position, ues[j].position);
                self.shadowing[k] = shadowing_step(self.shadowing[k], mid, rng);
                k += 1;
            }
        }
        self.recompute(ues, params);
    }

    fn recompute(&mut self, ues: &[UeState], params: &GainParams) {
        let mut k = 0;
        for i in 0..self.n {
            self.gain[i * self.n + i] = 1.0;
            for j in i + 1..self.n {
                let kind = LinkKind::between(ues[i].kind, ues[j].kind);
                let pl = path_loss_db(kind, ues[i].position.distance(ues[j].position), params.fc_ghz);
                let db = params.antenna_gain_tx_dbi + params.antenna_gain_rx_dbi - pl - self.shadowing[k].value_db;
                let g = db_to_linear(db);
                self.gain[i * self.n + j] = g;
                self.gain[j * self.n + i] = g;
                k += 1;
            }
        }
    }

    /// Builds a map directly from a gain matrix (row-major, `n x n`).
    pub fn from_matrix(n: usize, gain: Vec<f64>) -> Self {
        assert_eq!(gain.len(), n * n);
        Self {
            n,
            gain,
            shadowing: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gain(&self, tx: UeId, rx: UeId) -> f64 {
        self.gain[tx * self.n + rx]
    }

    pub fn shadowing_db(&self, a: UeId, b: UeId) -> f64 {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        // Index of (i, j) in the upper-triangular enumeration.
        let k = i * (2 * self.n - i - 1) / 2 + (j - i - 1);
        self.shadowing[k].value_db
    }

    pub fn all_finite_positive(&self) -> bool {
        self.gain.iter().all(|g| g.is_finite() && *g > 0.0)
    }
}

/// A UE transmitting on a resource with the given power (mW).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveTx {
    pub ue: UeId,
    pub resource: ResourceId,
    pub power_mw: f64,
}

/// Received SINR (linear) at `rx` for the transmission of `tx` on
/// `resource`. Every other co-channel transmitter in `active` interferes,
/// whether A2A or A2I. `extra_mw` is added to the denominator (residual self
/// interference).
pub fn sinr_on_resource(
    rx: UeId,
    tx: UeId,
    resource: ResourceId,
    gains: &ChannelGainMap,
    noise_mw: f64,
    active: &[ActiveTx],
    extra_mw: f64,
) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for a in active.iter().filter(|a| a.resource == resource && a.ue != rx) {
        let p = a.power_mw * gains.gain(a.ue, rx);
        if a.ue == tx {
            signal += p;
        } else {
            interference += p;
        }
    }
    signal / (noise_mw + interference + extra_mw)
}

/// SINR needed to carry a transport block on one subchannel for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsThreshold {
    pub gamma_star_linear: f64,
    pub tb_bits: u32,
    pub subchannel_bw_hz: f64,
    pub slot_s: f64,
}

impl McsThreshold {
    pub fn gamma_star_db(&self) -> f64 {
        linear_to_db(self.gamma_star_linear)
    }

    pub fn decodes(&self, sinr_linear: f64) -> bool {
        sinr_linear >= self.gamma_star_linear
    }
}

/// Inverted Shannon capacity: `gamma* = 2^(bits / (B T)) - 1`.
pub fn sinr_threshold(tb_bits: u32, subchannel_bw_hz: f64, slot_s: f64) -> McsThreshold {
    let rate = tb_bits as f64 / (subchannel_bw_hz * slot_s);
    McsThreshold {
        gamma_star_linear: rate.exp2() - 1.0,
        tb_bits,
        subchannel_bw_hz,
        slot_s,
    }
}

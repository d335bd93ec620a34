//! Avalanche photodiode models: passive quench, active quench with a lumped
//! thermal node, and gated operation. All three share the damage latch and
//! the linear-mode threshold band.

mod active;
mod gated;
mod passive;
mod threshold;

pub use active::{active_bias, thermal_step, ActiveQuenchParams, ActiveQuenchState};
pub use gated::{AfterGateBand, GateRegion, GatedParams, GatedState};
pub use passive::{passive_recharge, passive_step, PassiveQuenchParams, PassiveQuenchState};
pub use threshold::{
    characterize_thresholds, CharacterizeError, DetectorThresholds, ProbeSpec, SampleBand,
    ThresholdProfile, DEFAULT_P_HI, DEFAULT_P_LO,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Planck constant × c, J·nm.
const HC_J_NM: f64 = 1.986_445_857e-16;

/// Photon energy at `wavelength_nm`.
pub fn photon_energy_j(wavelength_nm: f64) -> f64 {
    HC_J_NM / wavelength_nm
}

/// Light reaching one detector over a piecewise-constant interval.
/// Times are absolute ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub start_ns: u64,
    pub duration_ns: u64,
    /// Watts, or mean photon number when `quantum`.
    pub power: f64,
    pub quantum: bool,
}

impl Stimulus {
    pub fn end_ns(&self) -> u64 {
        self.start_ns + self.duration_ns
    }

    pub fn dark(start_ns: u64, duration_ns: u64) -> Self {
        Stimulus {
            start_ns,
            duration_ns,
            power: 0.0,
            quantum: false,
        }
    }

    pub fn bright(start_ns: u64, duration_ns: u64, power: f64) -> Self {
        Stimulus {
            start_ns,
            duration_ns,
            power,
            quantum: false,
        }
    }

    pub fn faint(start_ns: u64, duration_ns: u64, mu: f64) -> Self {
        Stimulus {
            start_ns,
            duration_ns,
            power: mu,
            quantum: true,
        }
    }

    fn classical_power(&self) -> f64 {
        if self.quantum {
            0.0
        } else {
            self.power
        }
    }
}

/// Slot timing that gated electronics and the window probe need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotClock {
    pub slot: u64,
    pub slot_start_ns: u64,
    pub period_ns: u64,
    /// Offset of Alice's pulse (and of the gate) inside the slot.
    pub pulse_offset_ns: u64,
}

impl SlotClock {
    pub fn for_slot(slot: u64, period_ns: u64, pulse_offset_ns: u64) -> Self {
        SlotClock {
            slot,
            slot_start_ns: slot * period_ns,
            period_ns,
            pulse_offset_ns,
        }
    }

    pub fn pulse_ns(&self) -> u64 {
        self.slot_start_ns + self.pulse_offset_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearCause {
    /// Photocurrent through the bias resistor pulled the diode below breakdown.
    BiasSag,
    /// Temperature raised the breakdown voltage above the fixed bias.
    Thermal,
    /// Gated diode outside its gate, biased below breakdown by design.
    BelowBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "cause")]
pub enum DetectorMode {
    Geiger,
    Linear(LinearCause),
    /// Passive diode whose capacitor has not recharged to the armed level.
    Blind,
    Dead,
}

/// Click-probability ramp of a diode in linear mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    /// Largest power that never clicks.
    pub p0: f64,
    /// Smallest power that always clicks.
    pub p100: f64,
}

impl Band {
    pub fn new(p0: f64, p100: f64) -> Self {
        Band { p0, p100 }
    }

    /// Linear ramp from 0 at `p0` to 1 at `p100`.
    pub fn click_probability(&self, power: f64) -> f64 {
        if power >= self.p100 {
            1.0
        } else if power <= self.p0 {
            0.0
        } else {
            (power - self.p0) / (self.p100 - self.p0)
        }
    }
}

/// Comparator decision for a pulse seen by a blinded diode.
pub fn linear_click<R: Rng + ?Sized>(pulse_power: f64, band: Band, rng: &mut R) -> bool {
    let p = band.click_probability(pulse_power);
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

/// Exponential waiting time in ns for a Poisson process of `rate_per_ns`.
pub(crate) fn exp_wait_ns<R: Rng + ?Sized>(rate_per_ns: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -u.ln() / rate_per_ns
}

/// Geiger-mode detection rate of classical light plus dark counts, per ns.
pub(crate) fn detection_rate_per_ns(
    power_w: f64,
    efficiency: f64,
    photon_energy: f64,
    dark_hz: f64,
) -> f64 {
    (power_w * efficiency / photon_energy + dark_hz) * 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DetectorEventKind {
    Damaged {
        incident_power_w: f64,
    },
    /// Breakdown voltage crossed the fixed bias (`above = true` on the way up).
    BreakdownCrossed {
        above: bool,
        temperature_k: f64,
    },
    ModeChange {
        mode: DetectorMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub slot: u64,
    pub time_ns: u64,
    #[serde(flatten)]
    pub kind: DetectorEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum DetectorParams {
    Passive(PassiveQuenchParams),
    Active(ActiveQuenchParams),
    Gated(GatedParams),
}

impl DetectorParams {
    pub fn damage_power_w(&self) -> f64 {
        match self {
            DetectorParams::Passive(p) => p.damage_power_w,
            DetectorParams::Active(p) => p.damage_power_w,
            DetectorParams::Gated(p) => p.damage_power_w,
        }
    }

    pub fn efficiency(&self) -> f64 {
        match self {
            DetectorParams::Passive(p) => p.efficiency,
            DetectorParams::Active(p) => p.efficiency,
            DetectorParams::Gated(p) => p.efficiency,
        }
    }

    pub fn dark_count_rate_hz(&self) -> f64 {
        match self {
            DetectorParams::Passive(p) => p.dark_count_rate_hz,
            DetectorParams::Active(p) => p.dark_count_rate_hz,
            DetectorParams::Gated(p) => p.dark_count_rate_hz,
        }
    }

    /// Continuous power at the diode that forces linear mode, if the model has one.
    pub fn blinding_power_w(&self) -> Option<f64> {
        match self {
            DetectorParams::Passive(p) => Some(p.hold_power_w),
            DetectorParams::Active(p) => Some(p.blinding_power(p.reference_temperature_k)),
            DetectorParams::Gated(p) => Some(p.blinding_power()),
        }
    }

    /// Linear-mode band the attacker must work within, per sample index.
    pub fn bands(&self) -> Option<Vec<Band>> {
        match self {
            DetectorParams::Passive(_) => None,
            DetectorParams::Active(p) => Some(vec![p.band]),
            DetectorParams::Gated(p) => Some(
                (0..p.after_gate_window_ns)
                    .map(|off| p.after_gate_band.at(off as f64))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Passive(PassiveQuenchParams, PassiveQuenchState),
    Active(ActiveQuenchParams, ActiveQuenchState),
    Gated(GatedParams, GatedState),
}

/// One physical detector: model state, damage latch and its event log.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorUnit {
    name: String,
    model: Model,
    damage_power_w: f64,
    dead: bool,
    raw_clicks: u64,
    events: Vec<DetectorEvent>,
    sampled_mode: Option<DetectorMode>,
    mode_changes: u64,
}

impl DetectorUnit {
    pub fn new(name: impl Into<String>, params: DetectorParams) -> Self {
        let damage_power_w = params.damage_power_w();
        let model = match params {
            DetectorParams::Passive(p) => {
                let s = PassiveQuenchState::charged(&p);
                Model::Passive(p, s)
            }
            DetectorParams::Active(p) => {
                let s = ActiveQuenchState::initial(&p);
                Model::Active(p, s)
            }
            DetectorParams::Gated(p) => Model::Gated(p, GatedState::default()),
        };
        DetectorUnit {
            name: name.into(),
            model,
            damage_power_w,
            dead: false,
            raw_clicks: 0,
            events: Vec::new(),
            sampled_mode: None,
            mode_changes: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    pub fn raw_clicks(&self) -> u64 {
        self.raw_clicks
    }

    pub fn events(&self) -> &[DetectorEvent] {
        &self.events
    }

    pub fn mode_changes(&self) -> u64 {
        self.mode_changes
    }

    pub fn temperature_k(&self) -> Option<f64> {
        match &self.model {
            Model::Active(_, s) => Some(s.temperature_k),
            _ => None,
        }
    }

    pub fn active_state(&self) -> Option<&ActiveQuenchState> {
        match &self.model {
            Model::Active(_, s) => Some(s),
            _ => None,
        }
    }

    pub fn passive_state(&self) -> Option<&PassiveQuenchState> {
        match &self.model {
            Model::Passive(_, s) => Some(s),
            _ => None,
        }
    }

    /// Latches the detector dead when `incident_w` reaches the damage power.
    pub fn check_damage(&mut self, incident_w: f64, slot: u64, time_ns: u64) {
        if self.dead || incident_w < self.damage_power_w {
            return;
        }
        self.dead = true;
        self.events.push(DetectorEvent {
            slot,
            time_ns,
            kind: DetectorEventKind::Damaged {
                incident_power_w: incident_w,
            },
        });
    }

    /// Mode the detector presents at the start of `stim`.
    pub fn mode_for(&self, stim: &Stimulus, clock: &SlotClock) -> DetectorMode {
        if self.dead {
            return DetectorMode::Dead;
        }
        match &self.model {
            Model::Passive(p, s) => s.mode_at(p, stim.start_ns),
            Model::Active(p, s) => s.mode_for(p, stim.classical_power(), stim.start_ns),
            Model::Gated(p, s) => s.mode_for(p, stim.classical_power(), stim.start_ns, clock),
        }
    }

    /// Steps the detector through one stimulus, appending click times (ns).
    /// `probe_ns` is the instant whose mode is sampled into the log.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        stim: &Stimulus,
        clock: &SlotClock,
        probe_ns: u64,
        rng: &mut R,
        clicks: &mut Vec<u64>,
    ) {
        if !stim.quantum {
            self.check_damage(stim.power, clock.slot, stim.start_ns);
        }
        if stim.start_ns <= probe_ns && probe_ns < stim.end_ns() {
            let mode = self.mode_for(stim, clock);
            if self.sampled_mode != Some(mode) {
                if self.sampled_mode.is_some() {
                    self.mode_changes += 1;
                }
                self.sampled_mode = Some(mode);
            }
        }
        if self.dead {
            return;
        }
        let before = clicks.len();
        match &mut self.model {
            Model::Passive(p, s) => passive_step(s, p, stim, rng, clicks),
            Model::Active(p, s) => s.step(p, stim, rng, clicks),
            Model::Gated(p, s) => s.step(p, stim, clock, rng, clicks),
        }
        self.raw_clicks += (clicks.len() - before) as u64;
    }

    /// Slot bookkeeping after all stimuli: the thermal node integrates the
    /// slot's average incident power.
    pub fn end_slot(&mut self, avg_power_w: f64, clock: &SlotClock) {
        if let Model::Active(p, s) = &mut self.model {
            let was_above = s.breakdown_above_bias(p);
            s.temperature_k = thermal_step(s.temperature_k, avg_power_w, clock.period_ns as f64, p);
            let above = s.breakdown_above_bias(p);
            if above != was_above {
                self.events.push(DetectorEvent {
                    slot: clock.slot,
                    time_ns: clock.slot_start_ns + clock.period_ns,
                    kind: DetectorEventKind::BreakdownCrossed {
                        above,
                        temperature_k: s.temperature_k,
                    },
                });
            }
        }
    }

    pub fn sampled_mode(&self) -> Option<DetectorMode> {
        self.sampled_mode
    }
}

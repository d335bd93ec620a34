//! Eve: intercept-resend measurement and the faked-state waveform generators
//! for each detector class.
//!
//! Nothing here reads Bob's basis or attenuator streams; Eve's inputs are her
//! own random draws, the public slot timing and the detector thresholds she
//! has characterized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::ThresholdProfile;
use crate::optics::{
    malus_fraction, photon_detected, Basis, OpticalSegment, Polarization, StationTopology, Waveform,
};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum EveVariant {
    None,
    InterceptResendOnly,
    /// Blank-and-resume against passively quenched diodes.
    PassiveBlind,
    /// CW bias-sag blinding plus a faked pulse.
    ActiveBlindCw,
    /// Blinding pulse train between Alice's pulses.
    ActiveBlindPulsed {
        rate_hz: f64,
    },
    /// Pulse train sized to overload the TEC.
    ThermalBlind {
        rate_hz: f64,
    },
    /// Faked pulse just after the gate of a gated diode.
    AfterGate,
    PowerCompensated {
        gain_db: f64,
        base: Box<EveVariant>,
    },
}

impl EveVariant {
    pub fn is_none(&self) -> bool {
        matches!(self, EveVariant::None)
    }

    /// The strategy beneath any power compensation.
    pub fn base(&self) -> &EveVariant {
        match self {
            EveVariant::PowerCompensated { base, .. } => base.base(),
            v => v,
        }
    }

    pub fn compensation_db(&self) -> f64 {
        match self {
            EveVariant::PowerCompensated { gain_db, base } => gain_db + base.compensation_db(),
            _ => 0.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EveVariant::None => "none",
            EveVariant::InterceptResendOnly => "intercept-resend",
            EveVariant::PassiveBlind => "passive-blind",
            EveVariant::ActiveBlindCw => "active-blind-cw",
            EveVariant::ActiveBlindPulsed { .. } => "active-blind-pulsed",
            EveVariant::ThermalBlind { .. } => "thermal-blind",
            EveVariant::AfterGate => "after-gate",
            EveVariant::PowerCompensated { .. } => "power-compensated",
        }
    }
}

/// Eve's full configuration, with all times already on the tick grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveStrategy {
    pub variant: EveVariant,
    /// Faked-state power referenced to the target detector; derived from the
    /// thresholds when absent.
    pub fake_power_w: Option<f64>,
    /// Blinding carrier (or blinding pulse peak) at Bob's input.
    pub blind_power_w: f64,
    pub blank: SimTime,
    /// How long the resumed light stays polarized after a blank.
    pub polarized: SimTime,
    pub blind_pulse_width: SimTime,
    pub blind_pulse_offset: SimTime,
    pub fake_pulse_width: SimTime,
    pub after_gate_offset: SimTime,
    pub efficiency: f64,
    /// Multiplicative error Eve makes on the faked-state power.
    pub knowledge_error: f64,
    /// Mean photon number of intercept-resend pulses.
    pub resend_mu: f64,
}

impl EveStrategy {
    pub fn none() -> Self {
        EveStrategy {
            variant: EveVariant::None,
            fake_power_w: None,
            blind_power_w: 0.0,
            blank: SimTime(2000),
            polarized: SimTime(2000),
            blind_pulse_width: SimTime(400),
            blind_pulse_offset: SimTime(0),
            fake_pulse_width: SimTime(1),
            after_gate_offset: SimTime(5),
            efficiency: 1.0,
            knowledge_error: 0.0,
            resend_mu: 0.1,
        }
    }
}

/// Public timing Eve aligns to: slot length, Alice's pulse offset and, for
/// gated receivers, the gate's falling-edge offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveTiming {
    pub period: SimTime,
    pub pulse_offset: SimTime,
    pub gate_end_offset: Option<SimTime>,
    /// Slot duration in ns (for pulse-train scheduling).
    pub period_ns: u64,
}

/// What Eve learned and what she sends on in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveSlotAction {
    pub basis: Basis,
    pub bit: bool,
    /// Eve's own detectors saw nothing.
    pub abstain: bool,
    pub resend: Waveform,
    /// The control interval was empty: wrong-basis detectors may fire.
    pub control_infeasible: bool,
}

/// Eve measures Alice's pulse in a random basis with her own detectors.
pub fn eve_intercept<B: Rng + ?Sized, M: Rng + ?Sized>(
    mu_at_eve: f64,
    alice_state: Polarization,
    efficiency: f64,
    basis_rng: &mut B,
    measure_rng: &mut M,
) -> (Basis, bool, bool) {
    let basis = Basis::from_bit(basis_rng.random::<bool>());
    let clicked = photon_detected(mu_at_eve, efficiency, measure_rng);
    if !clicked {
        return (basis, false, false);
    }
    let p0 = malus_fraction(alice_state.angle_deg - basis.analyzer_deg());
    let bit = measure_rng.random::<f64>() >= p0;
    (basis, bit, true)
}

/// Detector-referenced faked-state power: the midpoint of
/// `[max P_100%, 2·min P_0%]`, or `max P_100%` with the infeasible flag when empty.
pub fn faked_state_power(
    thresholds: &ThresholdProfile,
    index: Option<usize>,
) -> Option<(f64, bool)> {
    let (lo, hi) = thresholds.control_interval(index)?;
    if lo < hi {
        Some(((lo + hi) / 2.0, false))
    } else {
        Some((lo, true))
    }
}

fn fake_power(
    strategy: &EveStrategy,
    thresholds: Option<&ThresholdProfile>,
    index: Option<usize>,
) -> (f64, bool) {
    let (p, infeasible) = match (
        strategy.fake_power_w,
        thresholds.and_then(|t| faked_state_power(t, index)),
    ) {
        (Some(p), derived) => (p, derived.is_some_and(|(_, inf)| inf)),
        (None, Some(d)) => d,
        (None, None) => (0.0, true),
    };
    (p * (1.0 + strategy.knowledge_error), infeasible)
}

/// Whether a train at `rate_hz` fires during slot `slot`.
pub fn pulse_due(slot: u64, rate_hz: f64, period_ns: u64) -> bool {
    // Multiply before dividing so integral rates stay exact.
    let fired = |n: u64| (n as f64 * period_ns as f64 * rate_hz / 1e9).floor();
    fired(slot + 1) > fired(slot)
}

fn eve_state(action_basis: Basis, bit: bool) -> Polarization {
    Polarization::bb84(action_basis, bit)
}

/// Carrier segment with a superposed polarized pulse of `extra` watts.
fn carrier_with_pulse(
    start: SimTime,
    width: SimTime,
    carrier: f64,
    extra: f64,
    state: Polarization,
) -> OpticalSegment {
    let total = carrier + extra;
    let degree = if total > 0.0 { extra / total } else { 1.0 };
    OpticalSegment::classical(
        start,
        width,
        total,
        Polarization {
            angle_deg: state.angle_deg,
            degree,
        },
    )
}

/// CW or pulse-train blinding plus one faked pulse at Alice's pulse time.
pub fn generate_faked_state_active(
    slot: u64,
    basis: Basis,
    bit: bool,
    abstain: bool,
    strategy: &EveStrategy,
    thresholds: Option<&ThresholdProfile>,
    topology: StationTopology,
    timing: &EveTiming,
) -> (Waveform, bool) {
    let (p_fake, infeasible) = fake_power(strategy, thresholds, Some(0));
    let extra = p_fake / topology.matched_arm_fraction();
    let state = eve_state(basis, bit);
    let unpol = Polarization::unpolarized();
    let p = timing.pulse_offset;
    let w = strategy.fake_pulse_width;
    let mut segs = Vec::with_capacity(4);
    match strategy.variant.base() {
        EveVariant::ActiveBlindPulsed { rate_hz } | EveVariant::ThermalBlind { rate_hz } => {
            if pulse_due(slot, *rate_hz, timing.period_ns) {
                segs.push(OpticalSegment::classical(
                    strategy.blind_pulse_offset,
                    strategy.blind_pulse_width,
                    strategy.blind_power_w,
                    unpol,
                ));
            }
            if !abstain && extra > 0.0 {
                segs.push(OpticalSegment::classical(p, w, extra, state));
            }
        }
        _ => {
            let cw = strategy.blind_power_w;
            if abstain || extra <= 0.0 {
                segs.push(OpticalSegment::classical(
                    SimTime::ZERO,
                    timing.period,
                    cw,
                    unpol,
                ));
            } else {
                if p > SimTime::ZERO {
                    segs.push(OpticalSegment::classical(SimTime::ZERO, p, cw, unpol));
                }
                segs.push(carrier_with_pulse(p, w, cw, extra, state));
                if p + w < timing.period {
                    segs.push(OpticalSegment::classical(
                        p + w,
                        timing.period - (p + w),
                        cw,
                        unpol,
                    ));
                }
            }
        }
    }
    segs.retain(|s| s.duration > SimTime::ZERO);
    (Waveform::from_ordered(segs), infeasible)
}

/// CW light with a dark blank ending at Alice's pulse time, resumed polarized
/// in Eve's state for `strategy.polarized`, then unpolarized again.
pub fn generate_faked_state_passive(
    basis: Basis,
    bit: bool,
    abstain: bool,
    strategy: &EveStrategy,
    timing: &EveTiming,
) -> Waveform {
    let cw = strategy.blind_power_w;
    let unpol = Polarization::unpolarized();
    let period = timing.period;
    if abstain {
        return Waveform::from_ordered(vec![OpticalSegment::classical(
            SimTime::ZERO,
            period,
            cw,
            unpol,
        )]);
    }
    let edge = timing.pulse_offset;
    let blank_start = SimTime(edge.0.saturating_sub(strategy.blank.0));
    let pol_end = SimTime((edge + strategy.polarized).0.min(period.0));
    let mut segs = Vec::with_capacity(3);
    if blank_start > SimTime::ZERO {
        segs.push(OpticalSegment::classical(
            SimTime::ZERO,
            blank_start,
            cw,
            unpol,
        ));
    }
    if pol_end > edge {
        segs.push(OpticalSegment::classical(
            edge,
            pol_end - edge,
            cw,
            eve_state(basis, bit),
        ));
    }
    if pol_end < period {
        segs.push(OpticalSegment::classical(
            pol_end,
            period - pol_end,
            cw,
            unpol,
        ));
    }
    Waveform::from_ordered(segs)
}

/// Faked pulse placed `after_gate_offset` past the gate's falling edge; dark otherwise.
pub fn generate_after_gate(
    basis: Basis,
    bit: bool,
    abstain: bool,
    strategy: &EveStrategy,
    thresholds: Option<&ThresholdProfile>,
    topology: StationTopology,
    timing: &EveTiming,
) -> (Waveform, bool) {
    let offset = strategy.after_gate_offset;
    let (p_fake, infeasible) = fake_power(strategy, thresholds, Some(offset.0 as usize));
    if abstain {
        return (Waveform::empty(), infeasible);
    }
    let gate_end = timing.gate_end_offset.unwrap_or(timing.pulse_offset);
    let seg = OpticalSegment::classical(
        gate_end + offset,
        strategy.fake_pulse_width,
        p_fake / topology.matched_arm_fraction(),
        eve_state(basis, bit),
    );
    (Waveform::from_ordered(vec![seg]), infeasible)
}

/// Eve turns her output up by `gain_db` to pre-compensate Bob's attenuator.
pub fn apply_power_compensation(w: &Waveform, gain_db: f64) -> Waveform {
    if gain_db == 0.0 {
        return w.clone();
    }
    w.scaled(10f64.powf(gain_db / 10.0))
}

/// Eve's complete slot: measure Alice's pulse, then build the resend waveform.
#[allow(clippy::too_many_arguments)]
pub fn eve_slot_action<B: Rng + ?Sized, M: Rng + ?Sized>(
    slot: u64,
    mu_at_eve: f64,
    alice_state: Polarization,
    strategy: &EveStrategy,
    thresholds: Option<&ThresholdProfile>,
    topology: StationTopology,
    timing: &EveTiming,
    basis_rng: &mut B,
    measure_rng: &mut M,
) -> Option<EveSlotAction> {
    if strategy.variant.is_none() {
        return None;
    }
    let (basis, bit, clicked) = eve_intercept(
        mu_at_eve,
        alice_state,
        strategy.efficiency,
        basis_rng,
        measure_rng,
    );
    let abstain = !clicked;
    let (resend, infeasible) = match strategy.variant.base() {
        EveVariant::None => unreachable!(),
        EveVariant::InterceptResendOnly => {
            let w = if abstain {
                Waveform::empty()
            } else {
                Waveform::from_ordered(vec![OpticalSegment::quantum(
                    timing.pulse_offset,
                    SimTime(1),
                    strategy.resend_mu,
                    eve_state(basis, bit),
                )])
            };
            (w, false)
        }
        EveVariant::PassiveBlind => (
            generate_faked_state_passive(basis, bit, abstain, strategy, timing),
            false,
        ),
        EveVariant::AfterGate => {
            generate_after_gate(basis, bit, abstain, strategy, thresholds, topology, timing)
        }
        EveVariant::ActiveBlindCw
        | EveVariant::ActiveBlindPulsed { .. }
        | EveVariant::ThermalBlind { .. } => generate_faked_state_active(
            slot, basis, bit, abstain, strategy, thresholds, topology, timing,
        ),
        EveVariant::PowerCompensated { .. } => unreachable!("base() strips compensation"),
    };
    let gain = strategy.variant.compensation_db();
    let resend = apply_power_compensation(&resend, gain);
    Some(EveSlotAction {
        basis,
        bit,
        abstain,
        resend,
        control_infeasible: infeasible,
    })
}

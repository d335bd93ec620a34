//! Passively quenched Si SPAD: a capacitor that discharges through the
//! avalanche and recharges through the bias resistor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{detection_rate_per_ns, exp_wait_ns, photon_energy_j, DetectorMode, Stimulus};
use crate::optics::photon_detected;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassiveQuenchParams {
    /// Full recharge voltage above breakdown.
    pub excess_voltage_v: f64,
    pub recharge_tau_ns: f64,
    /// Fraction of the excess voltage needed before an avalanche can fire.
    pub armed_fraction: f64,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    /// CW power that keeps the junction conducting (capacitor held discharged).
    pub hold_power_w: f64,
    pub damage_power_w: f64,
    pub wavelength_nm: f64,
}

impl Default for PassiveQuenchParams {
    fn default() -> Self {
        PassiveQuenchParams {
            excess_voltage_v: 8.0,
            recharge_tau_ns: 434.0,
            armed_fraction: 0.9,
            efficiency: 0.5,
            dark_count_rate_hz: 0.0,
            hold_power_w: 1e-7,
            damage_power_w: 1e-2,
            wavelength_nm: 850.0,
        }
    }
}

impl PassiveQuenchParams {
    pub fn armed_voltage(&self) -> f64 {
        self.armed_fraction * self.excess_voltage_v
    }

    /// Time to recharge from `v_c` to the armed level, ns.
    pub fn time_to_arm_from(&self, v_c: f64) -> f64 {
        let remaining = self.excess_voltage_v - v_c;
        let needed = self.excess_voltage_v * (1.0 - self.armed_fraction);
        if remaining <= needed {
            0.0
        } else {
            self.recharge_tau_ns * (remaining / needed).ln()
        }
    }

    /// Recovery time of a fully discharged diode.
    pub fn arming_time_ns(&self) -> f64 {
        self.time_to_arm_from(0.0)
    }
}

/// Capacitor voltage after recharging for `dt_ns` from full discharge.
pub fn passive_recharge(dt_ns: f64, params: &PassiveQuenchParams) -> f64 {
    params.excess_voltage_v * -(-dt_ns / params.recharge_tau_ns).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassiveQuenchState {
    /// Volts above breakdown; 0 is fully discharged.
    pub v_c: f64,
    pub last_ns: u64,
    /// Held discharged by light at or above the hold power.
    pub illuminated: bool,
}

impl PassiveQuenchState {
    pub fn charged(params: &PassiveQuenchParams) -> Self {
        PassiveQuenchState {
            v_c: params.excess_voltage_v,
            last_ns: 0,
            illuminated: false,
        }
    }

    pub fn discharged() -> Self {
        PassiveQuenchState {
            v_c: 0.0,
            last_ns: 0,
            illuminated: false,
        }
    }

    pub fn armed(&self, params: &PassiveQuenchParams) -> bool {
        self.v_c >= params.armed_voltage()
    }

    fn voltage_at(&self, params: &PassiveQuenchParams, t_ns: u64) -> f64 {
        if t_ns <= self.last_ns {
            return self.v_c;
        }
        let dt = (t_ns - self.last_ns) as f64;
        let v = params.excess_voltage_v;
        v - (v - self.v_c) * (-dt / params.recharge_tau_ns).exp()
    }

    fn relax_to(&mut self, params: &PassiveQuenchParams, t_ns: u64) {
        self.v_c = self.voltage_at(params, t_ns);
        self.last_ns = self.last_ns.max(t_ns);
    }

    pub fn mode_at(&self, params: &PassiveQuenchParams, t_ns: u64) -> DetectorMode {
        if self.voltage_at(params, t_ns) >= params.armed_voltage() {
            DetectorMode::Geiger
        } else {
            DetectorMode::Blind
        }
    }

    /// Armed Poisson detection over `[from, to)`; the diode re-arms on the RC curve
    /// after every avalanche.
    fn run_poisson<R: Rng + ?Sized>(
        &mut self,
        params: &PassiveQuenchParams,
        from: u64,
        to: u64,
        rate_per_ns: f64,
        rng: &mut R,
        clicks: &mut Vec<u64>,
    ) {
        let mut t = from;
        self.relax_to(params, from);
        loop {
            if !self.armed(params) {
                t += params.time_to_arm_from(self.v_c).ceil() as u64;
                if t >= to {
                    break;
                }
                self.relax_to(params, t);
                self.v_c = self.v_c.max(params.armed_voltage());
            }
            if rate_per_ns <= 0.0 {
                break;
            }
            let wait = exp_wait_ns(rate_per_ns, rng);
            if wait >= (to - t) as f64 {
                break;
            }
            let tc = t + wait as u64;
            self.relax_to(params, tc);
            clicks.push(tc);
            self.v_c = 0.0;
            t = tc;
        }
        self.relax_to(params, to);
    }
}

/// Steps the passive diode through one stimulus.
///
/// Dark or faint light lets the capacitor recharge; light at or above the hold
/// power fires once on the rising edge if armed and then pins the capacitor at
/// zero; weaker classical light fires whenever the diode re-arms.
pub fn passive_step<R: Rng + ?Sized>(
    state: &mut PassiveQuenchState,
    params: &PassiveQuenchParams,
    stim: &Stimulus,
    rng: &mut R,
    clicks: &mut Vec<u64>,
) {
    let start = stim.start_ns;
    let end = stim.end_ns();
    // A hold ends at the previous segment's end; relaxation runs from there.
    state.relax_to(params, start);
    state.illuminated = false;
    let photon_energy = photon_energy_j(params.wavelength_nm);
    let dark_rate = detection_rate_per_ns(0.0, 0.0, photon_energy, params.dark_count_rate_hz);

    if stim.quantum {
        if stim.power > 0.0
            && state.armed(params)
            && photon_detected(stim.power, params.efficiency, rng)
        {
            clicks.push(start);
            state.v_c = 0.0;
        }
        state.run_poisson(params, start, end, dark_rate, rng, clicks);
    } else if stim.power >= params.hold_power_w && stim.power > 0.0 {
        if state.armed(params) {
            clicks.push(start);
        }
        state.v_c = 0.0;
        state.last_ns = end;
        state.illuminated = true;
    } else {
        // Bright light still detects at the photon rate whenever armed.
        let rate = detection_rate_per_ns(stim.power, 1.0, photon_energy, params.dark_count_rate_hz);
        state.run_poisson(params, start, end, rate, rng, clicks);
    }
}

//! Actively quenched diode on a fixed bias supply, with the bias resistor sag
//! and a single-node thermal model behind a saturating TEC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    detection_rate_per_ns, exp_wait_ns, linear_click, photon_energy_j, Band, DetectorMode,
    LinearCause, Stimulus,
};
use crate::optics::photon_detected;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveQuenchParams {
    pub bias_voltage_v: f64,
    /// Breakdown voltage at the reference temperature.
    pub breakdown_voltage_v: f64,
    pub reference_temperature_k: f64,
    pub bias_resistance_ohm: f64,
    pub responsivity_a_per_w: f64,
    pub band: Band,
    pub tec_max_w: f64,
    pub thermal_capacity_j_per_k: f64,
    pub tempco_v_per_k: f64,
    /// Heat deposited per watt of incident light.
    pub heat_fraction: f64,
    /// Passive conductance to the heat sink.
    pub heat_leak_w_per_k: f64,
    pub damage_power_w: f64,
    pub dead_time_ns: u64,
    /// How long the bias stays sagged after blinding light stops.
    pub bias_recovery_ns: u64,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub wavelength_nm: f64,
}

impl Default for ActiveQuenchParams {
    fn default() -> Self {
        ActiveQuenchParams {
            bias_voltage_v: 108.0,
            breakdown_voltage_v: 100.0,
            reference_temperature_k: 293.15,
            bias_resistance_ohm: 1e4,
            responsivity_a_per_w: 10.0,
            band: Band::new(4e-6, 7e-6),
            tec_max_w: 1e-3,
            thermal_capacity_j_per_k: 1e-7,
            tempco_v_per_k: 0.5,
            heat_fraction: 1.0,
            heat_leak_w_per_k: 2e-5,
            damage_power_w: 1e-2,
            dead_time_ns: 50,
            // 1 / 70 kHz, rounded up to the next ns.
            bias_recovery_ns: 14_286,
            efficiency: 0.5,
            dark_count_rate_hz: 0.0,
            wavelength_nm: 850.0,
        }
    }
}

impl ActiveQuenchParams {
    pub fn breakdown_at(&self, temperature_k: f64) -> f64 {
        self.breakdown_voltage_v
            + self.tempco_v_per_k * (temperature_k - self.reference_temperature_k)
    }

    /// CW power above which the bias sags below breakdown at `temperature_k`.
    pub fn blinding_power(&self, temperature_k: f64) -> f64 {
        (self.bias_voltage_v - self.breakdown_at(temperature_k))
            / (self.bias_resistance_ohm * self.responsivity_a_per_w)
    }

    /// Temperature rise at which breakdown reaches the fixed bias.
    pub fn thermal_margin_k(&self) -> f64 {
        (self.bias_voltage_v - self.breakdown_voltage_v) / self.tempco_v_per_k
    }
}

/// Diode voltage and mode under continuous illumination `p_cw` at temperature `t_k`.
pub fn active_bias(p_cw: f64, params: &ActiveQuenchParams, t_k: f64) -> (f64, DetectorMode) {
    let current = params.responsivity_a_per_w * p_cw;
    let v_apd = params.bias_voltage_v - current * params.bias_resistance_ohm;
    // V_apd < V_br(T)  ⟺  p_cw > P_blind(T); the second form is exact at the boundary.
    let mode = if params.breakdown_at(t_k) > params.bias_voltage_v {
        DetectorMode::Linear(LinearCause::Thermal)
    } else if p_cw > params.blinding_power(t_k) {
        DetectorMode::Linear(LinearCause::BiasSag)
    } else {
        DetectorMode::Geiger
    };
    (v_apd, mode)
}

/// Advances the diode temperature over `dt_ns` under constant average incident power.
///
/// While the heat load exceeds the cooler's capacity the surplus charges the
/// thermal mass against the sink leak (solved in closed form). Below capacity
/// the cooler's spare headroom pulls the node back toward the reference.
pub fn thermal_step(
    temperature_k: f64,
    avg_power_w: f64,
    dt_ns: f64,
    params: &ActiveQuenchParams,
) -> f64 {
    let t0 = params.reference_temperature_k;
    let c = params.thermal_capacity_j_per_k;
    let g = params.heat_leak_w_per_k;
    let dt = dt_ns * 1e-9;
    let q = params.heat_fraction * avg_power_w;
    if q >= params.tec_max_w {
        let surplus = q - params.tec_max_w;
        if g > 0.0 {
            let t_inf = t0 + surplus / g;
            t_inf + (temperature_k - t_inf) * (-g * dt / c).exp()
        } else {
            temperature_k + surplus * dt / c
        }
    } else {
        let stored = c * (temperature_k - t0).max(0.0);
        let removable = (params.tec_max_w - q) * dt;
        t0 + (stored - removable).max(0.0) / c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveQuenchState {
    pub temperature_k: f64,
    pub v_apd: f64,
    pub dead_until_ns: u64,
    /// Bias stays sagged until this instant.
    pub blind_until_ns: u64,
    prev_power_w: f64,
}

impl ActiveQuenchState {
    pub fn initial(params: &ActiveQuenchParams) -> Self {
        ActiveQuenchState {
            temperature_k: params.reference_temperature_k,
            v_apd: params.bias_voltage_v,
            dead_until_ns: 0,
            blind_until_ns: 0,
            prev_power_w: 0.0,
        }
    }

    pub fn breakdown_above_bias(&self, params: &ActiveQuenchParams) -> bool {
        params.breakdown_at(self.temperature_k) > params.bias_voltage_v
    }

    pub fn mode_for(
        &self,
        params: &ActiveQuenchParams,
        classical_power: f64,
        t_ns: u64,
    ) -> DetectorMode {
        match active_bias(classical_power, params, self.temperature_k).1 {
            DetectorMode::Geiger if t_ns < self.blind_until_ns => {
                DetectorMode::Linear(LinearCause::BiasSag)
            }
            m => m,
        }
    }

    pub(super) fn step<R: Rng + ?Sized>(
        &mut self,
        params: &ActiveQuenchParams,
        stim: &Stimulus,
        rng: &mut R,
        clicks: &mut Vec<u64>,
    ) {
        let power = stim.classical_power();
        let start = stim.start_ns;
        let end = stim.end_ns();
        let mode = self.mode_for(params, power, start);
        self.v_apd = active_bias(power, params, self.temperature_k).0;
        if power > params.blinding_power(self.temperature_k) {
            self.blind_until_ns = self.blind_until_ns.max(end + params.bias_recovery_ns);
        }
        match mode {
            DetectorMode::Linear(_) => {
                let rise = power - self.prev_power_w;
                if rise > 0.0 && start >= self.dead_until_ns && linear_click(rise, params.band, rng)
                {
                    clicks.push(start);
                    self.dead_until_ns = start + params.dead_time_ns;
                }
            }
            DetectorMode::Geiger => {
                let energy = photon_energy_j(params.wavelength_nm);
                if stim.quantum {
                    if stim.power > 0.0
                        && start >= self.dead_until_ns
                        && photon_detected(stim.power, params.efficiency, rng)
                    {
                        clicks.push(start);
                        self.dead_until_ns = start + params.dead_time_ns;
                    }
                    let dark = detection_rate_per_ns(0.0, 0.0, energy, params.dark_count_rate_hz);
                    self.run_poisson(params, start, end, dark, rng, clicks);
                } else {
                    let rate = detection_rate_per_ns(
                        power,
                        params.efficiency,
                        energy,
                        params.dark_count_rate_hz,
                    );
                    self.run_poisson(params, start, end, rate, rng, clicks);
                }
            }
            DetectorMode::Blind | DetectorMode::Dead => {}
        }
        self.prev_power_w = power;
    }

    fn run_poisson<R: Rng + ?Sized>(
        &mut self,
        params: &ActiveQuenchParams,
        from: u64,
        to: u64,
        rate_per_ns: f64,
        rng: &mut R,
        clicks: &mut Vec<u64>,
    ) {
        if rate_per_ns <= 0.0 {
            return;
        }
        let mut t = from.max(self.dead_until_ns);
        while t < to {
            let wait = exp_wait_ns(rate_per_ns, rng);
            if wait >= (to - t) as f64 {
                break;
            }
            let tc = t + wait as u64;
            clicks.push(tc);
            self.dead_until_ns = tc + params.dead_time_ns.max(1);
            t = self.dead_until_ns;
        }
    }
}

//! Gated InGaAs diode: DC-biased below breakdown, lifted into Geiger mode for
//! a short gate each slot. Right after the gate the comparator still reads
//! the linear photocurrent, which the after-gate attack uses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    detection_rate_per_ns, exp_wait_ns, linear_click, photon_energy_j, Band, DetectorMode,
    LinearCause, SlotClock, Stimulus,
};
use crate::optics::photon_detected;

/// Threshold band as a function of the offset after the gate's falling edge.
/// Points are `(offset_ns, band)`, linearly interpolated and clamped at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfterGateBand {
    pub points: Vec<(f64, Band)>,
}

impl AfterGateBand {
    pub fn constant(band: Band) -> Self {
        AfterGateBand {
            points: vec![(0.0, band)],
        }
    }

    pub fn at(&self, offset_ns: f64) -> Band {
        let pts = &self.points;
        match pts.len() {
            0 => Band::new(f64::INFINITY, f64::INFINITY),
            1 => pts[0].1,
            _ => {
                if offset_ns <= pts[0].0 {
                    return pts[0].1;
                }
                for w in pts.windows(2) {
                    let (x0, b0) = w[0];
                    let (x1, b1) = w[1];
                    if offset_ns <= x1 {
                        let f = (offset_ns - x0) / (x1 - x0);
                        return Band::new(
                            b0.p0 + f * (b1.p0 - b0.p0),
                            b0.p100 + f * (b1.p100 - b0.p100),
                        );
                    }
                }
                pts[pts.len() - 1].1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatedParams {
    pub gate_period_ns: u64,
    pub gate_width_ns: u64,
    pub after_gate_window_ns: u64,
    pub dc_below_breakdown_v: f64,
    pub gate_above_breakdown_v: f64,
    pub bias_resistance_ohm: f64,
    pub responsivity_a_per_w: f64,
    /// Linear-mode band inside a blinded gate.
    pub band: Band,
    pub after_gate_band: AfterGateBand,
    pub bias_recovery_ns: u64,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub damage_power_w: f64,
    pub wavelength_nm: f64,
}

impl Default for GatedParams {
    fn default() -> Self {
        let band = Band::new(4e-6, 7e-6);
        GatedParams {
            gate_period_ns: 1000,
            gate_width_ns: 3,
            after_gate_window_ns: 10,
            dc_below_breakdown_v: 2.0,
            gate_above_breakdown_v: 3.0,
            bias_resistance_ohm: 1e4,
            responsivity_a_per_w: 10.0,
            band,
            after_gate_band: AfterGateBand::constant(band),
            bias_recovery_ns: 14_286,
            efficiency: 0.5,
            dark_count_rate_hz: 0.0,
            damage_power_w: 1e-2,
            wavelength_nm: 1550.0,
        }
    }
}

impl GatedParams {
    /// CW power whose bias sag cancels the gate's excess voltage.
    pub fn blinding_power(&self) -> f64 {
        self.gate_above_breakdown_v / (self.bias_resistance_ohm * self.responsivity_a_per_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateRegion {
    InGate,
    /// Offset in ns after the gate's falling edge.
    AfterGate(u64),
    Outside,
}

impl GateRegion {
    pub fn at(params: &GatedParams, t_ns: u64, clock: &SlotClock) -> GateRegion {
        let gate_start = clock.pulse_ns();
        let gate_end = gate_start + params.gate_width_ns;
        if t_ns >= gate_start && t_ns < gate_end {
            GateRegion::InGate
        } else if t_ns >= gate_end && t_ns < gate_end + params.after_gate_window_ns {
            GateRegion::AfterGate(t_ns - gate_end)
        } else {
            GateRegion::Outside
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GatedState {
    pub blind_until_ns: u64,
    prev_power_w: f64,
    clicked_slot: Option<u64>,
}

impl GatedState {
    fn blinded(&self, params: &GatedParams, power: f64, t_ns: u64) -> bool {
        power > params.blinding_power() || t_ns < self.blind_until_ns
    }

    pub fn mode_for(
        &self,
        params: &GatedParams,
        power: f64,
        t_ns: u64,
        clock: &SlotClock,
    ) -> DetectorMode {
        match GateRegion::at(params, t_ns, clock) {
            GateRegion::InGate if self.blinded(params, power, t_ns) => {
                DetectorMode::Linear(LinearCause::BiasSag)
            }
            GateRegion::InGate => DetectorMode::Geiger,
            _ => DetectorMode::Linear(LinearCause::BelowBreakdown),
        }
    }

    fn click(&mut self, t: u64, clock: &SlotClock, clicks: &mut Vec<u64>) {
        self.clicked_slot = Some(clock.slot);
        clicks.push(t);
    }

    pub(super) fn step<R: Rng + ?Sized>(
        &mut self,
        params: &GatedParams,
        stim: &Stimulus,
        clock: &SlotClock,
        rng: &mut R,
        clicks: &mut Vec<u64>,
    ) {
        let power = stim.classical_power();
        let gate_start = clock.pulse_ns();
        let gate_end = gate_start + params.gate_width_ns;
        let window_end = gate_end + params.after_gate_window_ns;
        let mut cuts = [0u64; 5];
        let mut n = 0;
        cuts[n] = stim.start_ns;
        n += 1;
        for b in [gate_start, gate_end, window_end] {
            if b > stim.start_ns && b < stim.end_ns() {
                cuts[n] = b;
                n += 1;
            }
        }
        cuts[n] = stim.end_ns();
        n += 1;

        for (i, w) in cuts[..n].windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if self.clicked_slot == Some(clock.slot) {
                break;
            }
            let rise = if i == 0 {
                power - self.prev_power_w
            } else {
                0.0
            };
            match GateRegion::at(params, a, clock) {
                GateRegion::InGate => {
                    if self.blinded(params, power, a) {
                        if rise > 0.0 && linear_click(rise, params.band, rng) {
                            self.click(a, clock, clicks);
                        }
                    } else {
                        let energy = photon_energy_j(params.wavelength_nm);
                        if stim.quantum {
                            if i == 0
                                && stim.power > 0.0
                                && photon_detected(stim.power, params.efficiency, rng)
                            {
                                self.click(a, clock, clicks);
                                continue;
                            }
                        }
                        let rate = detection_rate_per_ns(
                            power,
                            params.efficiency,
                            energy,
                            params.dark_count_rate_hz,
                        );
                        if rate > 0.0 {
                            let wait = exp_wait_ns(rate, rng);
                            if wait < (b - a) as f64 {
                                self.click(a + wait as u64, clock, clicks);
                            }
                        }
                    }
                }
                GateRegion::AfterGate(offset) => {
                    if rise > 0.0
                        && linear_click(rise, params.after_gate_band.at(offset as f64), rng)
                    {
                        self.click(a, clock, clicks);
                    }
                }
                GateRegion::Outside => {}
            }
        }
        if power > params.blinding_power() {
            self.blind_until_ns = self
                .blind_until_ns
                .max(stim.end_ns() + params.bias_recovery_ns);
        }
        self.prev_power_w = power;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};

    fn clock(slot: u64) -> SlotClock {
        SlotClock::for_slot(slot, 1000, 500)
    }

    fn run(stims: &[Stimulus], slot: u64) -> Vec<u64> {
        let p = GatedParams::default();
        let mut s = GatedState::default();
        let r = RngStream::new(8, StreamId::DetectorNoise);
        let mut rng = r.at(slot);
        let mut clicks = vec![];
        for st in stims {
            s.step(&p, st, &clock(slot), &mut rng, &mut clicks);
        }
        clicks
    }

    #[test]
    fn faint_pulse_outside_gate_is_silent() {
        for off in [0u64, 100, 520, 900] {
            assert!(
                run(&[Stimulus::faint(off, 1, 1000.0)], 0).is_empty(),
                "{off}"
            );
        }
    }

    #[test]
    fn after_gate_pulse_clicks_within_window_only() {
        // Gate [500, 503); window [503, 513).
        assert_eq!(run(&[Stimulus::bright(508, 1, 7.5e-6)], 0), vec![508]);
        assert!(run(&[Stimulus::bright(518, 1, 7.5e-6)], 0).is_empty());
        assert!(run(&[Stimulus::bright(508, 1, 3.9e-6)], 0).is_empty());
    }

    #[test]
    fn bright_pulse_in_gate_avalanches() {
        assert_eq!(run(&[Stimulus::bright(501, 1, 3.75e-6)], 0), vec![501]);
    }

    #[test]
    fn cw_blinding_makes_gate_linear() {
        let p = GatedParams::default();
        let cw = 2.0 * p.blinding_power();
        let clicks = run(
            &[
                Stimulus::bright(0, 501, cw),
                Stimulus::bright(501, 1, cw + 3.75e-6),
                Stimulus::bright(502, 498, cw),
            ],
            0,
        );
        assert!(clicks.is_empty());
        let clicks = run(
            &[
                Stimulus::bright(0, 501, cw),
                Stimulus::bright(501, 1, cw + 7.5e-6),
            ],
            0,
        );
        assert_eq!(clicks, vec![501]);
    }

    #[test]
    fn one_click_per_gate() {
        let clicks = run(
            &[
                Stimulus::bright(500, 2, 1e-5),
                Stimulus::bright(505, 1, 1e-5),
            ],
            0,
        );
        assert_eq!(clicks, vec![500]);
    }

    #[test]
    fn band_interpolation() {
        let b = AfterGateBand {
            points: vec![(0.0, Band::new(2.0, 4.0)), (10.0, Band::new(4.0, 8.0))],
        };
        assert_eq!(b.at(-1.0), Band::new(2.0, 4.0));
        assert_eq!(b.at(5.0), Band::new(3.0, 6.0));
        assert_eq!(b.at(20.0), Band::new(4.0, 8.0));
    }
}

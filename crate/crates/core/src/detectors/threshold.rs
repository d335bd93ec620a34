//! Threshold bands of blinded diodes, by configuration or by measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    passive_step, Band, DetectorMode, DetectorParams, DetectorUnit, Model, SlotClock, Stimulus,
};
use crate::parallel;
use crate::rng::{RngStream, StreamId};

pub const DEFAULT_P_LO: f64 = 0.001;
pub const DEFAULT_P_HI: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBand {
    pub index: usize,
    pub p0: f64,
    pub p100: f64,
}

impl SampleBand {
    pub fn band(&self) -> Band {
        Band::new(self.p0, self.p100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorThresholds {
    pub detector: String,
    pub samples: Vec<SampleBand>,
}

/// P_0% / P_100% per detector and per sample index (time bin or gate offset).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub detectors: Vec<DetectorThresholds>,
}

impl ThresholdProfile {
    /// Profile built from constant per-detector bands over `samples` indices.
    pub fn uniform(names: &[&str], bands: &[Band], samples: usize) -> Self {
        ThresholdProfile {
            detectors: names
                .iter()
                .zip(bands)
                .map(|(n, b)| DetectorThresholds {
                    detector: n.to_string(),
                    samples: (0..samples)
                        .map(|i| SampleBand {
                            index: i,
                            p0: b.p0,
                            p100: b.p100,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Exact profile of the configured detectors; `None` when a model has no linear band.
    pub fn from_params(names: &[&str], params: &[DetectorParams]) -> Option<Self> {
        let mut detectors = Vec::with_capacity(names.len());
        for (n, p) in names.iter().zip(params) {
            let bands = p.bands()?;
            detectors.push(DetectorThresholds {
                detector: n.to_string(),
                samples: bands
                    .iter()
                    .enumerate()
                    .map(|(i, b)| SampleBand {
                        index: i,
                        p0: b.p0,
                        p100: b.p100,
                    })
                    .collect(),
            });
        }
        Some(ThresholdProfile { detectors })
    }

    pub fn sample_count(&self) -> usize {
        self.detectors
            .iter()
            .map(|d| d.samples.len())
            .min()
            .unwrap_or(0)
    }

    pub fn band(&self, detector: usize, index: usize) -> Option<Band> {
        self.detectors
            .get(detector)?
            .samples
            .iter()
            .find(|s| s.index == index)
            .map(SampleBand::band)
    }

    /// Every band satisfies P_0% < P_100%.
    pub fn is_ordered(&self) -> bool {
        self.detectors
            .iter()
            .flat_map(|d| &d.samples)
            .all(|s| s.p0 < s.p100)
    }

    /// (max P_100%, 2·min P_0%) over all detectors at `index`, or over all indices.
    pub fn control_interval(&self, index: Option<usize>) -> Option<(f64, f64)> {
        let mut max100 = f64::NEG_INFINITY;
        let mut min0 = f64::INFINITY;
        let mut any = false;
        for s in self.detectors.iter().flat_map(|d| &d.samples) {
            if index.is_some_and(|i| i != s.index) {
                continue;
            }
            any = true;
            max100 = max100.max(s.p100);
            min0 = min0.min(s.p0);
        }
        any.then_some((max100, 2.0 * min0))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CharacterizeError {
    #[error("power grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("{detector}[{index}]: grid does not reach down to a never-click power")]
    UnbracketedLow { detector: String, index: usize },
    #[error("{detector}[{index}]: grid does not reach up to an always-click power")]
    UnbracketedHigh { detector: String, index: usize },
    #[error("{detector}: not in linear mode at the probe (single photons click)")]
    NotInLinearMode { detector: String },
}

/// Power sweep used to measure a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub grid: Vec<f64>,
    pub trials: u32,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Apply the model's blinding light before probing.
    pub blind: bool,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn linear_grid(min: f64, max: f64, points: usize, trials: u32) -> Self {
        let grid = if points <= 1 {
            vec![min]
        } else {
            let n = (points - 1) as f64;
            (0..points)
                .map(|k| (min * (n - k as f64) + max * k as f64) / n)
                .collect()
        };
        ProbeSpec {
            grid,
            trials,
            p_lo: DEFAULT_P_LO,
            p_hi: DEFAULT_P_HI,
            blind: true,
            seed: 0,
        }
    }
}

const SETTLE_NS: u64 = 1000;
const PROBE_PERIOD_NS: u64 = 2000;

/// One probe: settle (optionally blinded), then a 1 ns pulse of `power` above
/// the settling light; returns whether the diode fired on the pulse.
struct Prober<'a> {
    unit: &'a DetectorUnit,
    carrier: f64,
    probe_ns: u64,
    clock: SlotClock,
}

impl<'a> Prober<'a> {
    fn new(unit: &'a DetectorUnit, index: usize, blind: bool) -> Self {
        let carrier_for = |p: &DetectorParams| {
            if blind {
                2.0 * p.blinding_power_w().unwrap_or(0.0)
            } else {
                0.0
            }
        };
        match &unit.model {
            Model::Gated(p, _) => {
                let clock =
                    SlotClock::for_slot(0, PROBE_PERIOD_NS.max(p.gate_period_ns), SETTLE_NS);
                let probe_ns = clock.pulse_ns() + p.gate_width_ns + index as u64;
                // After the gate the diode is naturally linear; no blinding light needed.
                Prober {
                    unit,
                    carrier: 0.0,
                    probe_ns,
                    clock,
                }
            }
            Model::Passive(p, _) => Prober {
                unit,
                carrier: carrier_for(&DetectorParams::Passive(p.clone())),
                probe_ns: SETTLE_NS,
                clock: SlotClock::for_slot(0, PROBE_PERIOD_NS, SETTLE_NS),
            },
            Model::Active(p, _) => Prober {
                unit,
                carrier: carrier_for(&DetectorParams::Active(p.clone())),
                probe_ns: SETTLE_NS,
                clock: SlotClock::for_slot(0, PROBE_PERIOD_NS, SETTLE_NS),
            },
        }
    }

    fn settle_stimulus(&self) -> Stimulus {
        Stimulus::bright(0, self.probe_ns, self.carrier)
    }

    fn pulse_stimulus(&self, power: f64) -> Stimulus {
        Stimulus::bright(self.probe_ns, 1, self.carrier + power)
    }

    fn mode_at_probe(&self) -> DetectorMode {
        if self.unit.is_dead() {
            return DetectorMode::Dead;
        }
        let mut clicks = Vec::new();
        let mut rng = RngStream::new(0, StreamId::Characterize).at(u64::MAX);
        let settle = self.settle_stimulus();
        let probe = Stimulus::bright(self.probe_ns, 1, self.carrier);
        match &self.unit.model {
            Model::Passive(p, s) => {
                let mut s = *s;
                passive_step(&mut s, p, &settle, &mut rng, &mut clicks);
                s.mode_at(p, self.probe_ns)
            }
            Model::Active(p, s) => {
                let mut s = *s;
                s.step(p, &settle, &mut rng, &mut clicks);
                s.mode_for(p, self.carrier, self.probe_ns)
            }
            Model::Gated(p, s) => s.mode_for(p, probe.power, probe.start_ns, &self.clock),
        }
    }

    fn fires<R: Rng>(&self, power: f64, rng: &mut R, clicks: &mut Vec<u64>) -> bool {
        if self.unit.is_dead() {
            return false;
        }
        clicks.clear();
        let settle = self.settle_stimulus();
        let pulse = self.pulse_stimulus(power);
        match &self.unit.model {
            Model::Passive(p, s) => {
                let mut s = *s;
                passive_step(&mut s, p, &settle, rng, clicks);
                clicks.clear();
                passive_step(&mut s, p, &pulse, rng, clicks);
            }
            Model::Active(p, s) => {
                let mut s = *s;
                s.step(p, &settle, rng, clicks);
                clicks.clear();
                s.step(p, &pulse, rng, clicks);
            }
            Model::Gated(p, s) => {
                let mut s = *s;
                if self.carrier > 0.0 {
                    s.step(p, &settle, &self.clock, rng, clicks);
                }
                clicks.clear();
                s.step(p, &pulse, &self.clock, rng, clicks);
            }
        }
        clicks.iter().any(|&t| t == self.probe_ns)
    }
}

fn sample_indices(unit: &DetectorUnit) -> usize {
    match &unit.model {
        Model::Gated(p, _) => p.after_gate_window_ns as usize,
        _ => 1,
    }
}

/// Measures P_0% / P_100% of one detector by sweeping the power grid.
///
/// P_0% is the top of the run of grid powers, from the bottom, whose click
/// fraction stays ≤ `p_lo`; P_100% the bottom of the run, from the top, whose
/// fraction stays ≥ `p_hi`.
pub fn characterize_thresholds(
    unit: &DetectorUnit,
    spec: &ProbeSpec,
) -> Result<DetectorThresholds, CharacterizeError> {
    let grid = &spec.grid;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CharacterizeError::BadGrid);
    }
    let name = unit.name().to_string();
    let stream = RngStream::new(spec.seed, StreamId::Characterize);
    let mut samples = Vec::new();
    for index in 0..sample_indices(unit) {
        let prober = Prober::new(unit, index, spec.blind);
        if prober.mode_at_probe() == DetectorMode::Geiger {
            return Err(CharacterizeError::NotInLinearMode { detector: name });
        }
        let points: Vec<(usize, f64)> = grid.iter().copied().enumerate().collect();
        let fractions = parallel::map_collect(&points, |&(j, power)| {
            let mut rng = stream.at(((index as u64) << 32) | j as u64);
            let mut clicks = Vec::with_capacity(4);
            let hits = (0..spec.trials)
                .filter(|_| prober.fires(power, &mut rng, &mut clicks))
                .count();
            hits as f64 / spec.trials.max(1) as f64
        });

        let low_run = fractions.iter().take_while(|&&f| f <= spec.p_lo).count();
        if low_run == 0 {
            return Err(CharacterizeError::UnbracketedLow {
                detector: name,
                index,
            });
        }
        let high_run = fractions
            .iter()
            .rev()
            .take_while(|&&f| f >= spec.p_hi)
            .count();
        if high_run == 0 {
            return Err(CharacterizeError::UnbracketedHigh {
                detector: name,
                index,
            });
        }
        samples.push(SampleBand {
            index,
            p0: grid[low_run - 1],
            p100: grid[grid.len() - high_run],
        });
    }
    Ok(DetectorThresholds {
        detector: name,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{ActiveQuenchParams, GatedParams, PassiveQuenchParams};

    fn active(p0: f64, p100: f64) -> DetectorUnit {
        DetectorUnit::new(
            "D0",
            DetectorParams::Active(ActiveQuenchParams {
                band: Band::new(p0, p100),
                ..Default::default()
            }),
        )
    }

    #[test]
    fn recovers_configured_band() {
        let spec = ProbeSpec::linear_grid(1e-6, 16e-6, 64, 10_000);
        let step = 15e-6 / 63.0;
        let t = characterize_thresholds(&active(4e-6, 8e-6), &spec).unwrap();
        let s = t.samples[0];
        assert!((s.p0 - 4e-6).abs() <= step, "{s:?}");
        assert!((s.p100 - 8e-6).abs() <= step, "{s:?}");
        assert!(s.p0 < s.p100);
    }

    #[test]
    fn grid_below_band_is_unbracketed() {
        let spec = ProbeSpec::linear_grid(0.1e-6, 3e-6, 16, 1000);
        assert!(matches!(
            characterize_thresholds(&active(4e-6, 8e-6), &spec),
            Err(CharacterizeError::UnbracketedHigh { .. })
        ));
    }

    #[test]
    fn dead_detector_is_unbracketed() {
        let mut d = active(4e-6, 8e-6);
        d.check_damage(1.0, 0, 0);
        let spec = ProbeSpec::linear_grid(1e-6, 16e-6, 16, 1000);
        assert!(matches!(
            characterize_thresholds(&d, &spec),
            Err(CharacterizeError::UnbracketedHigh { .. })
        ));
    }

    #[test]
    fn unblinded_geiger_detector_is_flagged() {
        let spec = ProbeSpec {
            blind: false,
            ..ProbeSpec::linear_grid(1e-9, 16e-6, 16, 100)
        };
        assert!(matches!(
            characterize_thresholds(&active(4e-6, 8e-6), &spec),
            Err(CharacterizeError::NotInLinearMode { .. })
        ));
    }

    #[test]
    fn bad_grid() {
        let mut spec = ProbeSpec::linear_grid(1e-6, 16e-6, 4, 10);
        spec.grid.swap(1, 2);
        assert_eq!(
            characterize_thresholds(&active(4e-6, 8e-6), &spec),
            Err(CharacterizeError::BadGrid)
        );
    }

    #[test]
    fn gated_profile_covers_after_gate_offsets() {
        let d = DetectorUnit::new("D0", DetectorParams::Gated(GatedParams::default()));
        let spec = ProbeSpec::linear_grid(1e-6, 16e-6, 64, 2000);
        let t = characterize_thresholds(&d, &spec).unwrap();
        assert_eq!(t.samples.len(), 10);
        let step = 15e-6 / 63.0;
        for s in &t.samples {
            assert!(
                (s.p0 - 4e-6).abs() <= step && (s.p100 - 7e-6).abs() <= step,
                "{s:?}"
            );
        }
    }

    #[test]
    fn passive_has_no_linear_band() {
        let d = DetectorUnit::new(
            "D0",
            DetectorParams::Passive(PassiveQuenchParams::default()),
        );
        let spec = ProbeSpec::linear_grid(1e-6, 16e-6, 8, 100);
        assert!(matches!(
            characterize_thresholds(&d, &spec),
            Err(CharacterizeError::UnbracketedHigh { .. })
        ));
        let spec = ProbeSpec {
            blind: false,
            ..spec
        };
        assert!(matches!(
            characterize_thresholds(&d, &spec),
            Err(CharacterizeError::NotInLinearMode { .. })
        ));
    }

    #[test]
    fn control_interval_examples() {
        let prof = ThresholdProfile::uniform(
            &["D0", "D1"],
            &[Band::new(4.0, 7.0), Band::new(4.0, 7.0)],
            1,
        );
        assert_eq!(prof.control_interval(None), Some((7.0, 8.0)));
        assert!(prof.is_ordered());
    }
}

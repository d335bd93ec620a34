//! Slot-by-slot driver: Alice emits, Eve intercepts and resends, Bob's
//! attenuator and detectors respond, the monitor accumulates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{eve_slot_action, EveSlotAction, EveTiming};
use crate::config::Config;
use crate::detectors::{
    DetectorEvent, DetectorEventKind, DetectorMode, DetectorParams, ThresholdProfile,
};
use crate::monitor::{
    compute_qber, eve_control_fraction, verdict, AttackVerdict, LegitModel, MonitorStats,
};
use crate::optics::Basis;
use crate::rng::{RngStream, StreamId, StreamSet};
use crate::station::{
    alice_emit, bob_voa_level, sifted_append, ClickOutcome, DetectorBank, SiftedKey, VoaMode,
    VoaSchedule,
};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("slot {requested} requested after slot {last}; slots must strictly increase")]
    OutOfOrder { requested: u64, last: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub basis: Basis,
    pub bit: bool,
    pub abstain: bool,
    pub control_infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub alice_bit: bool,
    pub alice_basis: Basis,
    pub eve: Option<EveRecord>,
    pub bob_basis: Option<Basis>,
    pub voa_db: f64,
    pub outcome: ClickOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorLog {
    pub name: String,
    pub raw_clicks: u64,
    pub mode_changes: u64,
    pub last_mode: Option<DetectorMode>,
    pub temperature_k: Option<f64>,
    pub dead: bool,
    pub events: Vec<DetectorEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub config: Config,
    pub records: Vec<SlotRecord>,
    pub stats: MonitorStats,
    pub key: SiftedKey,
    pub qber: Option<f64>,
    pub eve_control: Option<f64>,
    pub control_infeasible_slots: u64,
    pub detectors: Vec<DetectorLog>,
    pub verdict: AttackVerdict,
}

impl ScenarioReport {
    pub fn damage_events(&self) -> impl Iterator<Item = (&str, &DetectorEvent)> {
        self.detectors
            .iter()
            .flat_map(|d| d.events.iter().map(move |e| (d.name.as_str(), e)))
            .filter(|(_, e)| matches!(e.kind, DetectorEventKind::Damaged { .. }))
    }
}

pub struct Engine {
    config: Config,
    streams: StreamSet,
    voa: VoaSchedule,
    bank: DetectorBank,
    eve_thresholds: Option<ThresholdProfile>,
    eve_timing: EveTiming,
    last_slot: Option<u64>,
    stats: MonitorStats,
    key: SiftedKey,
    eve_bits: Vec<Option<bool>>,
    records: Vec<SlotRecord>,
    infeasible: u64,
}

impl Engine {
    pub fn new(config: Config) -> Engine {
        let streams = StreamSet::new(config.seed);
        let voa_stream = match config.voa_seed {
            Some(s) => RngStream::new(s, StreamId::BobVoa),
            None => streams.bob_voa,
        };
        let mode = match &config.voa {
            VoaMode::FrequencyScan { pattern_db, .. } => VoaMode::FrequencyScan {
                pattern_db: pattern_db.clone(),
                phase: config
                    .voa_scan_phase
                    .unwrap_or_else(|| VoaSchedule::secret_phase(&voa_stream, pattern_db.len())),
            },
            m => m.clone(),
        };
        let voa = VoaSchedule::new(mode, voa_stream);
        let bank = DetectorBank::new(
            config.topology,
            config.detectors.clone(),
            config.timebase,
            config.period,
            config.pulse_offset,
            config.window_ns,
        );
        let gate_end_offset = match &config.detectors[0] {
            DetectorParams::Gated(g) => Some(
                config.pulse_offset
                    + config
                        .timebase
                        .from_ns(g.gate_width_ns)
                        .unwrap_or(SimTime(0)),
            ),
            _ => None,
        };
        let eve_timing = EveTiming {
            period: config.period,
            pulse_offset: config.pulse_offset,
            gate_end_offset,
            period_ns: config.timebase.to_ns(config.period),
        };
        let eve_thresholds = config.eve_thresholds();
        let stats = MonitorStats::new(&config.voa_levels(), config.topology.detector_count());
        let capacity = config.slot_count.min(1 << 24) as usize;
        Engine {
            streams,
            voa,
            bank,
            eve_thresholds,
            eve_timing,
            last_slot: None,
            stats,
            key: SiftedKey::default(),
            eve_bits: if config.eve.variant.is_none() {
                Vec::new()
            } else {
                Vec::with_capacity(capacity)
            },
            records: Vec::with_capacity(capacity),
            infeasible: 0,
            config,
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn bank(&self) -> &DetectorBank {
        &self.bank
    }

    /// Eve's measurement and resend for `slot`. Depends only on Alice's and
    /// Eve's streams and public parameters.
    pub fn eve_action(&self, slot: u64) -> Option<EveSlotAction> {
        let alice = alice_emit(
            slot,
            &self.config.alice,
            &self.streams.alice_bits,
            &self.streams.alice_basis,
        );
        eve_slot_action(
            slot,
            alice.mu,
            alice.state,
            &self.config.eve,
            self.eve_thresholds.as_ref(),
            self.config.topology,
            &self.eve_timing,
            &mut self.streams.eve_basis.at(slot),
            &mut self.streams.eve_measure.at(slot),
        )
    }

    pub fn advance_slot(&mut self, slot: u64) -> Result<SlotRecord, EngineError> {
        if let Some(last) = self.last_slot {
            if slot <= last {
                return Err(EngineError::OutOfOrder {
                    requested: slot,
                    last,
                });
            }
        }
        self.last_slot = Some(slot);
        let alice = alice_emit(
            slot,
            &self.config.alice,
            &self.streams.alice_bits,
            &self.streams.alice_basis,
        );
        let action = self.eve_action(slot);
        let incoming = match &action {
            Some(a) => a.resend.clone(),
            None => alice.pulse(self.config.pulse_offset),
        };
        let chosen = match self.config.topology.ports()[0].arm {
            None => Some(Basis::from_bit(
                self.streams.bob_basis.at(slot).random::<bool>(),
            )),
            Some(_) => None,
        };
        let voa_db = bob_voa_level(slot, &self.voa);
        let mut noise = self.streams.detector_noise.at(slot);
        let outcome = self.bank.measure(
            slot,
            &incoming,
            chosen.unwrap_or(Basis::Rectilinear),
            chosen,
            voa_db,
            &mut noise,
        );
        self.stats.record(voa_db, &outcome);
        sifted_append(&mut self.key, slot, alice.bit, alice.basis, &outcome);
        let eve = action.map(|a| EveRecord {
            basis: a.basis,
            bit: a.bit,
            abstain: a.abstain,
            control_infeasible: a.control_infeasible,
        });
        if let Some(e) = &eve {
            let idx = slot as usize;
            if self.eve_bits.len() <= idx {
                self.eve_bits.resize(idx + 1, None);
            }
            self.eve_bits[idx] = (!e.abstain).then_some(e.bit);
            self.infeasible += e.control_infeasible as u64;
        }
        let record = SlotRecord {
            slot,
            alice_bit: alice.bit,
            alice_basis: alice.basis,
            eve,
            bob_basis: outcome.basis,
            voa_db,
            outcome,
        };
        self.records.push(record);
        Ok(record)
    }

    pub fn legit_model(&self) -> LegitModel {
        let n = self.config.detectors.len() as f64;
        let eta = self
            .config
            .detectors
            .iter()
            .map(|d| d.efficiency())
            .sum::<f64>()
            / n;
        let dark = self
            .config
            .detectors
            .iter()
            .map(|d| d.dark_count_rate_hz())
            .sum::<f64>()
            / n;
        LegitModel {
            topology: self.config.topology,
            mu: self.config.alice.mu_at_channel_end(),
            efficiency: eta,
            dark_per_window: dark * self.config.window_ns as f64 * 1e-9,
        }
    }

    pub fn finish(mut self) -> ScenarioReport {
        let detectors: Vec<DetectorLog> = self
            .bank
            .units()
            .iter()
            .map(|u| DetectorLog {
                name: u.name().to_string(),
                raw_clicks: u.raw_clicks(),
                mode_changes: u.mode_changes(),
                last_mode: u.sampled_mode(),
                temperature_k: u.temperature_k(),
                dead: u.is_dead(),
                events: u.events().to_vec(),
            })
            .collect();
        self.stats.damage_events = detectors
            .iter()
            .flat_map(|d| &d.events)
            .filter(|e| matches!(e.kind, DetectorEventKind::Damaged { .. }))
            .count() as u64;
        let model = self.legit_model();
        let verdict = verdict(
            &self.stats,
            self.eve_thresholds.as_ref(),
            &model,
            self.config.alpha,
            self.config.double_rate_threshold,
        );
        let qber = compute_qber(&self.key).ok();
        let eve_control = if self.config.eve.variant.is_none() {
            None
        } else {
            eve_control_fraction(&self.key, Some(&self.eve_bits))
        };
        ScenarioReport {
            config: self.config,
            records: self.records,
            stats: self.stats,
            key: self.key,
            qber,
            eve_control,
            control_infeasible_slots: self.infeasible,
            detectors,
            verdict,
        }
    }
}

/// Runs every slot of `config` in order.
pub fn run_scenario(config: &Config) -> ScenarioReport {
    let mut engine = Engine::new(config.clone());
    for slot in 0..config.slot_count {
        engine
            .advance_slot(slot)
            .expect("slots are visited in order");
    }
    engine.finish()
}

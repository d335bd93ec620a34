//! Scenario configuration: a sectioned TOML file, strictly parsed, resolved
//! onto the tick grid and validated.
//!
//! ```toml
//! [engine]
//! slot_period_ns = 1000
//! slot_count = 100000
//! pulse_offset_ns = 500
//!
//! [bob]
//! topology = "active-two-detector"
//! voa_mode = "iid-uniform"
//! voa_levels_db = [0, 10, 20, 30]
//!
//! [detector]
//! class = "active"
//!
//! [eve]
//! strategy = "blinding-faked-state"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::{EveStrategy, EveVariant};
use crate::detectors::{DetectorParams, ThresholdProfile};
use crate::optics::{BasisMechanism, StationTopology};
use crate::station::{AliceParams, VoaMode, VOA_CEILING_DB};
use crate::time::{SimTime, TimeBase};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}", self.render())]
pub struct ConfigError {
    /// Dotted key, e.g. `bob.voa_levels_db`; empty for whole-file errors.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn render(&self) -> String {
        match (self.field.is_empty(), self.line) {
            (true, Some(l)) => format!("line {l}: {}", self.message),
            (true, None) => self.message.clone(),
            (false, Some(l)) => format!("{} (line {l}): {}", self.field, self.message),
            (false, None) => format!("{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    engine: RawEngine,
    #[serde(default)]
    alice: RawAlice,
    #[serde(default)]
    bob: RawBob,
    detector: toml::Table,
    #[serde(default)]
    detectors: BTreeMap<String, toml::Table>,
    #[serde(default)]
    eve: RawEve,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    seed: Option<u64>,
    #[serde(default = "one")]
    tick_ns: u64,
    slot_period_ns: u64,
    slot_count: u64,
    pulse_offset_ns: u64,
    #[serde(default = "twenty")]
    window_ns: u64,
}

fn one() -> u64 {
    1
}

fn twenty() -> u64 {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAlice {
    mean_photon_number: f64,
    channel_loss_db: f64,
}

impl Default for RawAlice {
    fn default() -> Self {
        let a = AliceParams::default();
        RawAlice {
            mean_photon_number: a.mean_photon_number,
            channel_loss_db: a.channel_loss_db,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawBob {
    topology: BasisMechanism,
    voa_mode: String,
    voa_levels_db: Vec<f64>,
    voa_fixed_db: f64,
    voa_scan_pattern_db: Vec<f64>,
    voa_scan_phase: Option<usize>,
    voa_seed: Option<u64>,
    alpha: f64,
    double_rate_threshold: f64,
}

impl Default for RawBob {
    fn default() -> Self {
        RawBob {
            topology: BasisMechanism::PassiveFourDetector,
            voa_mode: "fixed".into(),
            voa_levels_db: vec![0.0, 10.0, 20.0, 30.0],
            voa_fixed_db: 0.0,
            voa_scan_pattern_db: vec![0.0, 10.0, 20.0, 30.0],
            voa_scan_phase: None,
            voa_seed: None,
            alpha: crate::monitor::DEFAULT_ALPHA,
            double_rate_threshold: crate::monitor::DEFAULT_DOUBLE_RATE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawEve {
    strategy: String,
    base_strategy: Option<String>,
    /// `cw`, `pulsed` or `thermal` for active and gated diodes.
    blinding: String,
    pulse_rate_hz: Option<f64>,
    compensation_db: f64,
    fake_power_w: Option<f64>,
    blind_power_w: Option<f64>,
    blank_ns: u64,
    polarized_ns: u64,
    blind_pulse_width_ns: u64,
    blind_pulse_offset_ns: u64,
    fake_pulse_width_ns: u64,
    after_gate_offset_ns: u64,
    efficiency: f64,
    knowledge_error: f64,
    resend_mu: Option<f64>,
}

impl Default for RawEve {
    fn default() -> Self {
        RawEve {
            strategy: "none".into(),
            base_strategy: None,
            blinding: "cw".into(),
            pulse_rate_hz: None,
            compensation_db: 0.0,
            fake_power_w: None,
            blind_power_w: None,
            blank_ns: 2000,
            polarized_ns: 2000,
            blind_pulse_width_ns: 400,
            blind_pulse_offset_ns: 0,
            fake_pulse_width_ns: 1,
            after_gate_offset_ns: 5,
            efficiency: 1.0,
            knowledge_error: 0.0,
            resend_mu: None,
        }
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub timebase: TimeBase,
    pub period: SimTime,
    pub slot_count: u64,
    pub pulse_offset: SimTime,
    pub window_ns: u64,
    pub alice: AliceParams,
    pub topology: StationTopology,
    pub voa: VoaMode,
    /// Scan phase when configured; otherwise drawn from Bob's secret stream.
    pub voa_scan_phase: Option<usize>,
    /// Separate seed for Bob's attenuator stream.
    pub voa_seed: Option<u64>,
    pub alpha: f64,
    pub double_rate_threshold: f64,
    pub detector_class: String,
    pub detectors: Vec<DetectorParams>,
    pub eve: EveStrategy,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: String::new(),
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Config::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Config, ConfigError> {
        let table: toml::Table = src
            .parse()
            .map_err(|e: toml::de::Error| parse_error(src, &e))?;
        Config::from_table(&table, src)
    }

    /// Resolves an already-parsed table; `src` is only used to locate errors.
    pub fn from_table(table: &toml::Table, src: &str) -> Result<Config, ConfigError> {
        let raw: RawConfig = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| field_error(src, "", e.message()))?;
        resolve(raw, src)
    }

    pub fn slot_period_s(&self) -> f64 {
        self.timebase.to_ns(self.period) as f64 * 1e-9
    }

    /// What Eve believes the detectors' bands are: the configured ones.
    pub fn eve_thresholds(&self) -> Option<ThresholdProfile> {
        let names: Vec<&str> = self.topology.ports().iter().map(|p| p.name).collect();
        ThresholdProfile::from_params(&names, &self.detectors)
    }

    /// Unique levels the VOA schedule can produce, ascending.
    pub fn voa_levels(&self) -> Vec<f64> {
        let mut v = match &self.voa {
            VoaMode::Fixed { level_db } => vec![*level_db],
            VoaMode::IidUniform { levels_db } => levels_db.clone(),
            VoaMode::FrequencyScan { pattern_db, .. } => pattern_db.clone(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

fn parse_error(src: &str, e: &toml::de::Error) -> ConfigError {
    let line = e.span().map(|s| line_of_offset(src, s.start));
    ConfigError {
        field: String::new(),
        line,
        message: e.message().to_string(),
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Finds the 1-based line of `key` inside `[section]` (or `[a.b]` sections).
pub fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn field_error(src: &str, field: &str, message: &str) -> ConfigError {
    // serde names the offending key in backticks; use it when no field is given.
    let field = if field.is_empty() {
        message
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_default()
    } else {
        field.to_string()
    };
    let line = match field.rsplit_once('.') {
        Some((section, key)) => locate(src, section, key),
        None => src
            .lines()
            .position(|l| {
                l.trim_start().starts_with(&format!("{field} "))
                    || l.trim_start().starts_with(&format!("{field}="))
            })
            .map(|i| i + 1),
    };
    ConfigError {
        field,
        line,
        message: message.to_string(),
    }
}

fn check(
    cond: bool,
    src: &str,
    field: &str,
    message: impl FnOnce() -> String,
) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(field_error(src, field, &message()))
    }
}

fn check_levels(levels: &[f64], src: &str, field: &str) -> Result<(), ConfigError> {
    check(!levels.is_empty(), src, field, || {
        "level list is empty".into()
    })?;
    for &l in levels {
        check((0.0..=VOA_CEILING_DB).contains(&l), src, field, || {
            format!("level {l} dB is outside [0, {VOA_CEILING_DB}] dB; the attenuator chain tops out at the {VOA_CEILING_DB} dB ceiling")
        })?;
    }
    Ok(())
}

fn ticks(tb: &TimeBase, ns: u64, src: &str, field: &str) -> Result<SimTime, ConfigError> {
    tb.from_ns(ns)
        .map_err(|e| field_error(src, field, &e.to_string()))
}

fn resolve(raw: RawConfig, src: &str) -> Result<Config, ConfigError> {
    let e = &raw.engine;
    let timebase = TimeBase::new(e.tick_ns)
        .map_err(|err| field_error(src, "engine.tick_ns", &err.to_string()))?;
    let period = ticks(&timebase, e.slot_period_ns, src, "engine.slot_period_ns")?;
    let pulse_offset = ticks(&timebase, e.pulse_offset_ns, src, "engine.pulse_offset_ns")?;
    check(period > SimTime::ZERO, src, "engine.slot_period_ns", || {
        "must be positive".into()
    })?;
    check(e.slot_count > 0, src, "engine.slot_count", || {
        "must be positive".into()
    })?;
    check(pulse_offset < period, src, "engine.pulse_offset_ns", || {
        "must lie inside the slot".into()
    })?;
    check(
        e.window_ns > 0 && e.pulse_offset_ns + e.window_ns <= e.slot_period_ns,
        src,
        "engine.window_ns",
        || "detection window must be positive and end inside the slot".into(),
    )?;

    let alice = AliceParams {
        mean_photon_number: raw.alice.mean_photon_number,
        channel_loss_db: raw.alice.channel_loss_db,
    };
    check(
        alice.mean_photon_number > 0.0 && alice.mean_photon_number.is_finite(),
        src,
        "alice.mean_photon_number",
        || "must be positive".into(),
    )?;
    check(
        alice.channel_loss_db >= 0.0,
        src,
        "alice.channel_loss_db",
        || "must be non-negative".into(),
    )?;

    let b = &raw.bob;
    let topology = StationTopology::new(b.topology);
    let voa = match b.voa_mode.as_str() {
        "fixed" => {
            check_levels(&[b.voa_fixed_db], src, "bob.voa_fixed_db")?;
            VoaMode::Fixed {
                level_db: b.voa_fixed_db,
            }
        }
        "iid-uniform" => {
            check_levels(&b.voa_levels_db, src, "bob.voa_levels_db")?;
            VoaMode::IidUniform {
                levels_db: b.voa_levels_db.clone(),
            }
        }
        "frequency-scan" => {
            check_levels(&b.voa_scan_pattern_db, src, "bob.voa_scan_pattern_db")?;
            VoaMode::FrequencyScan {
                pattern_db: b.voa_scan_pattern_db.clone(),
                phase: b.voa_scan_phase.unwrap_or(0),
            }
        }
        other => {
            return Err(field_error(
                src,
                "bob.voa_mode",
                &format!("unknown mode `{other}`; expected fixed, iid-uniform or frequency-scan"),
            ))
        }
    };
    check(b.alpha > 0.0 && b.alpha < 1.0, src, "bob.alpha", || {
        "must lie in (0, 1)".into()
    })?;
    check(
        b.double_rate_threshold >= 0.0,
        src,
        "bob.double_rate_threshold",
        || "must be non-negative".into(),
    )?;

    let (detector_class, detectors) = resolve_detectors(&raw, topology, src)?;
    if let DetectorParams::Gated(g) = &detectors[0] {
        check(
            g.gate_period_ns == e.slot_period_ns,
            src,
            "detector.gate_period_ns",
            || "gate period must equal the slot period".into(),
        )?;
    }

    let eve = resolve_eve(
        &raw.eve,
        &detector_class,
        &detectors,
        topology,
        &timebase,
        period,
        &alice,
        src,
    )?;

    Ok(Config {
        seed: e.seed.unwrap_or(0),
        timebase,
        period,
        slot_count: e.slot_count,
        pulse_offset,
        window_ns: e.window_ns,
        alice,
        topology,
        voa,
        voa_scan_phase: b.voa_scan_phase,
        voa_seed: b.voa_seed,
        alpha: b.alpha,
        double_rate_threshold: b.double_rate_threshold,
        detector_class,
        detectors,
        eve,
    })
}

fn resolve_detectors(
    raw: &RawConfig,
    topology: StationTopology,
    src: &str,
) -> Result<(String, Vec<DetectorParams>), ConfigError> {
    let mut base = raw.detector.clone();
    let class = match base.remove("class") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(field_error(src, "detector.class", "must be a string")),
        None => {
            return Err(field_error(
                src,
                "detector.class",
                "missing detector class (passive, active or gated)",
            ))
        }
    };
    for name in raw.detectors.keys() {
        check(topology.index_of(name).is_some(), src, "detectors", || {
            format!("no detector named `{name}` on this station")
        })?;
    }
    let mut out = Vec::with_capacity(topology.detector_count());
    for port in topology.ports() {
        let mut table = base.clone();
        let section = match raw.detectors.get(port.name) {
            Some(over) => {
                for (k, v) in over {
                    table.insert(k.clone(), v.clone());
                }
                format!("detectors.{}", port.name)
            }
            None => "detector".to_string(),
        };
        let value = toml::Value::Table(table);
        let err = |e: toml::de::Error| {
            let key = e.message().split('`').nth(1).unwrap_or("").to_string();
            let field = if key.is_empty() {
                section.clone()
            } else {
                format!("{section}.{key}")
            };
            let mut ce = field_error(src, &field, e.message());
            if ce.line.is_none() {
                ce.line = locate(src, "detector", &key);
            }
            ce
        };
        let params = match class.as_str() {
            "passive" => DetectorParams::Passive(value.try_into().map_err(err)?),
            "active" => DetectorParams::Active(value.try_into().map_err(err)?),
            "gated" => DetectorParams::Gated(value.try_into().map_err(err)?),
            other => {
                return Err(field_error(
                    src,
                    "detector.class",
                    &format!("unknown class `{other}`; expected passive, active or gated"),
                ))
            }
        };
        validate_detector(&params, &section, src)?;
        out.push(params);
    }
    Ok((class, out))
}

fn validate_detector(p: &DetectorParams, section: &str, src: &str) -> Result<(), ConfigError> {
    let f = |k: &str| format!("{section}.{k}");
    check(
        p.efficiency() > 0.0 && p.efficiency() <= 1.0,
        src,
        &f("efficiency"),
        || "must lie in (0, 1]".into(),
    )?;
    check(
        p.dark_count_rate_hz() >= 0.0,
        src,
        &f("dark_count_rate_hz"),
        || "must be non-negative".into(),
    )?;
    check(p.damage_power_w() > 0.0, src, &f("damage_power_w"), || {
        "must be positive".into()
    })?;
    match p {
        DetectorParams::Passive(q) => {
            check(q.recharge_tau_ns > 0.0, src, &f("recharge_tau_ns"), || {
                "must be positive".into()
            })?;
            check(
                q.armed_fraction > 0.0 && q.armed_fraction < 1.0,
                src,
                &f("armed_fraction"),
                || "must lie in (0, 1)".into(),
            )?;
            check(q.hold_power_w > 0.0, src, &f("hold_power_w"), || {
                "must be positive".into()
            })?;
        }
        DetectorParams::Active(a) => {
            check(
                a.band.p0 >= 0.0 && a.band.p0 < a.band.p100,
                src,
                &f("band"),
                || "needs 0 <= p0 < p100".into(),
            )?;
            check(
                a.thermal_capacity_j_per_k > 0.0,
                src,
                &f("thermal_capacity_j_per_k"),
                || "must be positive".into(),
            )?;
            check(
                a.bias_voltage_v > a.breakdown_voltage_v,
                src,
                &f("bias_voltage_v"),
                || "bias must exceed the breakdown voltage at the reference temperature".into(),
            )?;
        }
        DetectorParams::Gated(g) => {
            check(
                g.band.p0 >= 0.0 && g.band.p0 < g.band.p100,
                src,
                &f("band"),
                || "needs 0 <= p0 < p100".into(),
            )?;
            check(g.gate_width_ns > 0, src, &f("gate_width_ns"), || {
                "must be positive".into()
            })?;
            check(
                g.after_gate_band
                    .points
                    .iter()
                    .all(|(_, b)| b.p0 >= 0.0 && b.p0 < b.p100),
                src,
                &f("after_gate_band"),
                || "every point needs 0 <= p0 < p100".into(),
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn resolve_eve(
    raw: &RawEve,
    class: &str,
    detectors: &[DetectorParams],
    topology: StationTopology,
    tb: &TimeBase,
    period: SimTime,
    alice: &AliceParams,
    src: &str,
) -> Result<EveStrategy, ConfigError> {
    let period_s = tb.to_ns(period) as f64 * 1e-9;
    let slot_rate = 1.0 / period_s;
    let rate = |field: &str| -> Result<f64, ConfigError> {
        let r = raw.pulse_rate_hz.unwrap_or(slot_rate);
        check(
            r > 0.0 && r <= slot_rate * (1.0 + 1e-12),
            src,
            field,
            || {
                format!(
                    "pulse rate {r} Hz must be positive and at most the slot rate {slot_rate} Hz"
                )
            },
        )?;
        Ok(r)
    };
    let base_variant = |name: &str, field: &str| -> Result<EveVariant, ConfigError> {
        Ok(match name {
            "none" => EveVariant::None,
            "intercept-resend" => EveVariant::InterceptResendOnly,
            "after-gate" => {
                check(class == "gated", src, field, || {
                    "after-gate needs a gated detector".into()
                })?;
                EveVariant::AfterGate
            }
            "blinding-faked-state" => match (class, raw.blinding.as_str()) {
                ("passive", _) => EveVariant::PassiveBlind,
                (_, "cw") => EveVariant::ActiveBlindCw,
                (_, "pulsed") => EveVariant::ActiveBlindPulsed {
                    rate_hz: rate("eve.pulse_rate_hz")?,
                },
                ("active", "thermal") => EveVariant::ThermalBlind {
                    rate_hz: rate("eve.pulse_rate_hz")?,
                },
                (_, other) => {
                    return Err(field_error(
                        src,
                        "eve.blinding",
                        &format!("`{other}` blinding is not available for {class} detectors"),
                    ))
                }
            },
            other => {
                return Err(field_error(
                    src,
                    field,
                    &format!("unknown strategy `{other}`"),
                ))
            }
        })
    };
    let variant = if raw.strategy == "power-compensated" {
        check(
            (0.0..=VOA_CEILING_DB).contains(&raw.compensation_db),
            src,
            "eve.compensation_db",
            || format!("compensation must lie in [0, {VOA_CEILING_DB}] dB, the attenuator ceiling"),
        )?;
        let base_name = raw
            .base_strategy
            .as_deref()
            .unwrap_or("blinding-faked-state");
        check(
            base_name != "power-compensated",
            src,
            "eve.base_strategy",
            || "cannot nest power compensation".into(),
        )?;
        let base = base_variant(base_name, "eve.base_strategy")?;
        check(!base.is_none(), src, "eve.base_strategy", || {
            "power compensation needs a base strategy".into()
        })?;
        EveVariant::PowerCompensated {
            gain_db: raw.compensation_db,
            base: Box::new(base),
        }
    } else {
        base_variant(&raw.strategy, "eve.strategy")?
    };
    check(
        raw.efficiency > 0.0 && raw.efficiency <= 1.0,
        src,
        "eve.efficiency",
        || "must lie in (0, 1]".into(),
    )?;
    check(
        raw.knowledge_error > -1.0,
        src,
        "eve.knowledge_error",
        || "must exceed -1".into(),
    )?;

    let unpol = topology.unpolarized_fraction();
    let blind_power_w = match raw.blind_power_w {
        Some(p) => {
            check(p >= 0.0, src, "eve.blind_power_w", || {
                "must be non-negative".into()
            })?;
            p
        }
        None => auto_blind_power(variant.base(), &detectors[0], unpol, raw),
    };
    let t = |ns: u64, field: &str| ticks(tb, ns, src, field);
    let strategy = EveStrategy {
        variant,
        fake_power_w: raw.fake_power_w,
        blind_power_w,
        blank: t(raw.blank_ns, "eve.blank_ns")?,
        polarized: t(raw.polarized_ns, "eve.polarized_ns")?,
        blind_pulse_width: t(raw.blind_pulse_width_ns, "eve.blind_pulse_width_ns")?,
        blind_pulse_offset: t(raw.blind_pulse_offset_ns, "eve.blind_pulse_offset_ns")?,
        fake_pulse_width: t(raw.fake_pulse_width_ns, "eve.fake_pulse_width_ns")?,
        after_gate_offset: t(raw.after_gate_offset_ns, "eve.after_gate_offset_ns")?,
        efficiency: raw.efficiency,
        knowledge_error: raw.knowledge_error,
        resend_mu: raw.resend_mu.unwrap_or(alice.mu_at_channel_end()),
    };
    check(
        strategy.fake_pulse_width > SimTime::ZERO,
        src,
        "eve.fake_pulse_width_ns",
        || "must be positive".into(),
    )?;
    check(
        strategy.blind_pulse_offset + strategy.blind_pulse_width <= period,
        src,
        "eve.blind_pulse_width_ns",
        || "blinding pulse must fit in the slot".into(),
    )?;
    Ok(strategy)
}

/// Blinding power at Bob's input when not configured: twice what the diode
/// needs, after the station's split of unpolarized light.
fn auto_blind_power(variant: &EveVariant, det: &DetectorParams, unpol: f64, raw: &RawEve) -> f64 {
    let threshold = det.blinding_power_w().unwrap_or(0.0);
    match (variant, det) {
        (EveVariant::ThermalBlind { rate_hz }, DetectorParams::Active(a)) => {
            // Average heat twice the TEC capacity.
            let avg_at_diode = 2.0 * a.tec_max_w / a.heat_fraction;
            let width_s = raw.blind_pulse_width_ns as f64 * 1e-9;
            avg_at_diode / (rate_hz * width_s) / unpol
        }
        (
            EveVariant::PassiveBlind
            | EveVariant::ActiveBlindCw
            | EveVariant::ActiveBlindPulsed { .. },
            _,
        ) => 2.0 * threshold / unpol,
        _ => 0.0,
    }
}

/// Keys `sweep` may vary, with their TOML value kind.
pub const SWEEPABLE: &[(&str, SweepKind)] = &[
    ("engine.slot_count", SweepKind::Integer),
    ("alice.mean_photon_number", SweepKind::Float),
    ("alice.channel_loss_db", SweepKind::Float),
    ("bob.voa_fixed_db", SweepKind::Float),
    ("eve.pulse_rate_hz", SweepKind::Float),
    ("eve.compensation_db", SweepKind::Float),
    ("eve.fake_power_w", SweepKind::Float),
    ("eve.blind_power_w", SweepKind::Float),
    ("eve.knowledge_error", SweepKind::Float),
    ("eve.blank_ns", SweepKind::Integer),
    ("eve.after_gate_offset_ns", SweepKind::Integer),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Integer,
    Float,
}

pub fn sweep_kind(key: &str) -> Option<SweepKind> {
    SWEEPABLE.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

/// Copy of `table` with the dotted `key` set to `value`.
pub fn with_value(table: &toml::Table, key: &str, value: f64) -> Option<toml::Table> {
    let kind = sweep_kind(key)?;
    let (section, field) = key.split_once('.')?;
    let mut out = table.clone();
    let sec = out
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let v = match kind {
        SweepKind::Integer => toml::Value::Integer(value as i64),
        SweepKind::Float => toml::Value::Float(value),
    };
    sec.as_table_mut()?.insert(field.to_string(), v);
    Some(out)
}

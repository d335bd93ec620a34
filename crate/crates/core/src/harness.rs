//! Batch drivers behind the CLI: threshold calibration, parameter sweeps and
//! multi-seed runs. Independent runs are spread over the worker pool.

use crate::config::{sweep_kind, with_value, Config, ConfigError};
use crate::detectors::{
    characterize_thresholds, CharacterizeError, DetectorUnit, ProbeSpec, ThresholdProfile,
};
use crate::engine::{run_scenario, ScenarioReport};
use crate::export::SweepRow;
use crate::monitor::{control_condition, theta_list, ControlCondition, ThetaEntry};
use crate::parallel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),
    #[error("sweep needs at least one value")]
    NoValues,
    #[error("malformed grid `{0}`; expected min,max,points,trials")]
    BadGrid(String),
    #[error("no detector named `{0}`")]
    UnknownDetector(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Parses `min,max,points,trials`.
pub fn parse_grid(spec: &str) -> Result<ProbeSpec, HarnessError> {
    let bad = || HarnessError::BadGrid(spec.to_string());
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let min: f64 = parts[0].parse().map_err(|_| bad())?;
    let max: f64 = parts[1].parse().map_err(|_| bad())?;
    let points: usize = parts[2].parse().map_err(|_| bad())?;
    let trials: u32 = parts[3].parse().map_err(|_| bad())?;
    if !(min.is_finite() && max > min && points >= 2 && trials > 0) {
        return Err(bad());
    }
    Ok(ProbeSpec::linear_grid(min, max, points, trials))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub profile: ThresholdProfile,
    pub errors: Vec<CharacterizeError>,
    pub theta: Vec<ThetaEntry>,
    pub condition: Option<ControlCondition>,
}

/// Characterizes one detector (`Some(name)`) or all of them.
pub fn calibrate(
    config: &Config,
    detector: Option<&str>,
    mut spec: ProbeSpec,
) -> Result<Calibration, HarnessError> {
    spec.seed = config.seed;
    let ports = config.topology.ports();
    let selected: Vec<usize> = match detector {
        Some(name) if name != "all" => {
            vec![config
                .topology
                .index_of(name)
                .ok_or_else(|| HarnessError::UnknownDetector(name.to_string()))?]
        }
        _ => (0..ports.len()).collect(),
    };
    let results = parallel::map_collect(&selected, |&i| {
        let unit = DetectorUnit::new(ports[i].name, config.detectors[i].clone());
        characterize_thresholds(&unit, &spec)
    });
    let mut profile = ThresholdProfile::default();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(t) => profile.detectors.push(t),
            Err(e) => errors.push(e),
        }
    }
    let complete = errors.is_empty() && selected.len() == ports.len();
    let theta = if complete {
        theta_list(&profile, config.topology).unwrap_or_default()
    } else {
        Vec::new()
    };
    let condition = control_condition(&profile).ok();
    Ok(Calibration {
        profile,
        errors,
        theta,
        condition,
    })
}

/// Metrics reported per sweep value, in output order.
pub const SWEEP_METRICS: &[&str] = &[
    "click_rate",
    "coincidence_rate",
    "qber",
    "eve_control",
    "alarm",
    "scaling_p",
    "double_click_p",
    "damage_events",
    "max_temperature_k",
    "breakdown_crossed",
    "first_crossing_ns",
];

pub fn metrics(report: &ScenarioReport) -> Vec<(&'static str, f64)> {
    let s = &report.stats;
    let clicks = s.slots - s.outcome_none;
    let nan = f64::NAN;
    let crossing = report
        .detectors
        .iter()
        .flat_map(|d| &d.events)
        .filter_map(|e| match e.kind {
            crate::detectors::DetectorEventKind::BreakdownCrossed { above: true, .. } => {
                Some(e.time_ns)
            }
            _ => None,
        })
        .min();
    let max_t = report
        .detectors
        .iter()
        .filter_map(|d| d.temperature_k)
        .fold(f64::NAN, f64::max);
    vec![
        ("click_rate", clicks as f64 / s.slots as f64),
        ("coincidence_rate", s.coincidence_rate()),
        ("qber", report.qber.unwrap_or(nan)),
        ("eve_control", report.eve_control.unwrap_or(nan)),
        ("alarm", report.verdict.alarm as u8 as f64),
        (
            "scaling_p",
            report.verdict.scaling_test.p_value().unwrap_or(nan),
        ),
        (
            "double_click_p",
            report.verdict.double_click_test.p_value().unwrap_or(nan),
        ),
        ("damage_events", s.damage_events as f64),
        ("max_temperature_k", max_t),
        ("breakdown_crossed", crossing.is_some() as u8 as f64),
        ("first_crossing_ns", crossing.map_or(nan, |t| t as f64)),
    ]
}

/// One scenario per value of `key`; rows come back in value order.
pub fn sweep(
    table: &toml::Table,
    src: &str,
    key: &str,
    values: &[f64],
    seed: Option<u64>,
) -> Result<Vec<SweepRow>, HarnessError> {
    if sweep_kind(key).is_none() {
        return Err(HarnessError::UnknownParameter(key.to_string()));
    }
    if values.is_empty() {
        return Err(HarnessError::NoValues);
    }
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let t = with_value(table, key, v)
            .ok_or_else(|| HarnessError::UnknownParameter(key.to_string()))?;
        let mut c = Config::from_table(&t, src)?;
        if let Some(s) = seed {
            c.seed = s;
        }
        configs.push(c);
    }
    let per_value = parallel::map_collect(&configs, |c| metrics(&run_scenario(c)));
    let mut rows = Vec::with_capacity(values.len() * SWEEP_METRICS.len());
    for (&v, ms) in values.iter().zip(per_value) {
        for (metric, metric_value) in ms {
            rows.push(SweepRow {
                parameter: key.to_string(),
                value: v,
                metric,
                metric_value,
            });
        }
    }
    Ok(rows)
}

/// Runs `config` once per seed.
pub fn run_seeds(config: &Config, seeds: &[u64]) -> Vec<ScenarioReport> {
    parallel::map_collect(seeds, |&s| {
        let mut c = config.clone();
        c.seed = s;
        run_scenario(&c)
    })
}

/// Sequential twin of [`run_seeds`], for comparison.
pub fn run_seeds_sequential(config: &Config, seeds: &[u64]) -> Vec<ScenarioReport> {
    parallel::map_collect_sequential(seeds, |&s| {
        let mut c = config.clone();
        c.seed = s;
        run_scenario(&c)
    })
}

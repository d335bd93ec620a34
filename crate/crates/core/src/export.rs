//! Output files: CSV with a header row and LF endings, JSON with fields in
//! declaration order, and a manifest of SHA-256 digests.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::detectors::ThresholdProfile;
use crate::engine::{DetectorLog, ScenarioReport};
use crate::monitor::{ControlCondition, LevelCounts, ThetaEntry};
use crate::optics::Basis;

pub const SLOTS_HEADER: &str =
    "slot,alice_bit,alice_basis,eve_basis,eve_bit,eve_abstain,bob_basis,voa_db,outcome,detector,click_time_ns";

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn basis(b: Option<Basis>) -> &'static str {
    b.map_or("", Basis::symbol)
}

pub fn slots_csv(report: &ScenarioReport) -> String {
    let topo = report.config.topology;
    let mut out = String::with_capacity(64 * (report.records.len() + 1));
    out.push_str(SLOTS_HEADER);
    out.push('\n');
    for r in &report.records {
        let (eb, ebit, eab) = match &r.eve {
            Some(e) => (
                e.basis.symbol(),
                if e.abstain { "" } else { bit(e.bit) },
                bit(e.abstain),
            ),
            None => ("", "", ""),
        };
        let time = r.outcome.time_ns.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.slot,
            bit(r.alice_bit),
            r.alice_basis.symbol(),
            eb,
            ebit,
            eab,
            basis(r.bob_basis),
            r.voa_db,
            r.outcome.kind.label(),
            r.outcome.detector_names(topo),
            time
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub slot_count: u64,
    pub topology: crate::optics::BasisMechanism,
    pub detector_class: &'a str,
    pub eve_strategy: &'static str,
    pub outcomes: OutcomeCounts,
    pub levels: &'a [LevelCounts],
    pub detector_clicks: Vec<(&'a str, u64)>,
    pub sifted_bits: usize,
    pub qber: Option<f64>,
    pub eve_control: Option<f64>,
    pub control_infeasible_slots: u64,
    pub detectors: &'a [DetectorLog],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OutcomeCounts {
    pub none: u64,
    pub bit: u64,
    pub double: u64,
    pub multi: u64,
}

pub fn summary(report: &ScenarioReport) -> Summary<'_> {
    let s = &report.stats;
    Summary {
        seed: report.config.seed,
        slot_count: report.config.slot_count,
        topology: report.config.topology.mechanism,
        detector_class: &report.config.detector_class,
        eve_strategy: report.config.eve.variant.label(),
        outcomes: OutcomeCounts {
            none: s.outcome_none,
            bit: s.outcome_bit,
            double: s.doubles,
            multi: s.multis,
        },
        levels: &s.levels,
        detector_clicks: report
            .detectors
            .iter()
            .map(|d| d.name.as_str())
            .zip(s.detector_clicks.iter().copied())
            .collect(),
        sifted_bits: report.key.bits.len(),
        qber: report.qber,
        eve_control: report.eve_control,
        control_infeasible_slots: report.control_infeasible_slots,
        detectors: &report.detectors,
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn thresholds_csv(profile: &ThresholdProfile) -> String {
    let mut out = String::from("detector,index,P_0%,P_100%\n");
    for d in &profile.detectors {
        for s in &d.samples {
            let _ = writeln!(out, "{},{},{:e},{:e}", d.detector, s.index, s.p0, s.p100);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaFile<'a> {
    pub theta: &'a [ThetaEntry],
    pub condition: Option<ControlCondition>,
    pub errors: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub metric: &'static str,
    pub metric_value: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,metric,metric_value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.parameter, r.value, r.metric, r.metric_value
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_path: String,
    pub seed: u64,
    pub out_dir: String,
    pub files: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes named files into `dir`, then `manifest.json` listing their digests.
pub fn write_outputs(
    dir: &Path,
    config_path: &str,
    seed: u64,
    files: &[(&str, String)],
) -> io::Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut digests = Vec::with_capacity(files.len());
    for (name, body) in files {
        std::fs::write(dir.join(name), body.as_bytes())?;
        digests.push(FileDigest {
            name: name.to_string(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    let manifest = RunManifest {
        config_path: config_path.to_string(),
        seed,
        out_dir: dir.display().to_string(),
        files: digests,
    };
    std::fs::write(dir.join("manifest.json"), to_json(&manifest))?;
    Ok(manifest)
}

/// The three `run` outputs for a finished scenario.
pub fn run_files(report: &ScenarioReport) -> Vec<(&'static str, String)> {
    vec![
        ("slots.csv", slots_csv(report)),
        ("summary.json", to_json(&summary(report))),
        ("verdict.json", to_json(&report.verdict)),
    ]
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

//! Countermeasure analytics: controllability of a threshold profile, the VOA
//! scaling test, the coincidence test, key metrics and the alarm verdict.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::beta::beta_reg;

use crate::detectors::ThresholdProfile;
use crate::optics::{Basis, OpticalSegment, Polarization, StationTopology};
use crate::station::{ClickOutcome, OutcomeKind, SiftedKey};
use crate::time::SimTime;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_DOUBLE_RATE_THRESHOLD: f64 = 0.01;
/// Slots a level needs before it enters the scaling test.
pub const MIN_SLOTS_PER_LEVEL: u64 = 100;
/// Cells with a smaller expected count are pooled with their neighbour.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("threshold profile is empty or covers detectors unevenly")]
    IncompleteProfile,
    #[error("degenerate profile: max P_100% is zero for {arm} at index {index}")]
    Degenerate { arm: String, index: usize },
    #[error("sifted key is empty")]
    EmptyKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub level_db: f64,
    pub slots: u64,
    /// Slots with at least one in-window click.
    pub click_slots: u64,
    pub coincidences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorStats {
    pub slots: u64,
    pub levels: Vec<LevelCounts>,
    pub outcome_none: u64,
    pub outcome_bit: u64,
    pub doubles: u64,
    pub multis: u64,
    pub detector_clicks: Vec<u64>,
    pub damage_events: u64,
}

impl MonitorStats {
    pub fn new(levels_db: &[f64], detectors: usize) -> Self {
        MonitorStats {
            slots: 0,
            levels: levels_db
                .iter()
                .map(|&level_db| LevelCounts {
                    level_db,
                    slots: 0,
                    click_slots: 0,
                    coincidences: 0,
                })
                .collect(),
            outcome_none: 0,
            outcome_bit: 0,
            doubles: 0,
            multis: 0,
            detector_clicks: vec![0; detectors],
            damage_events: 0,
        }
    }

    pub fn record(&mut self, level_db: f64, outcome: &ClickOutcome) {
        self.slots += 1;
        let idx = match self.levels.iter().position(|l| l.level_db == level_db) {
            Some(i) => i,
            None => {
                self.levels.push(LevelCounts {
                    level_db,
                    slots: 0,
                    click_slots: 0,
                    coincidences: 0,
                });
                self.levels
                    .sort_by(|a, b| a.level_db.total_cmp(&b.level_db));
                self.levels
                    .iter()
                    .position(|l| l.level_db == level_db)
                    .unwrap()
            }
        };
        let l = &mut self.levels[idx];
        l.slots += 1;
        match outcome.kind {
            OutcomeKind::None => self.outcome_none += 1,
            OutcomeKind::Bit0 | OutcomeKind::Bit1 => self.outcome_bit += 1,
            OutcomeKind::Double => self.doubles += 1,
            OutcomeKind::Multi => self.multis += 1,
        }
        if outcome.kind != OutcomeKind::None {
            l.click_slots += 1;
        }
        if outcome.kind.is_coincidence() {
            l.coincidences += 1;
        }
        for (d, c) in self.detector_clicks.iter_mut().enumerate() {
            if outcome.detector_mask & (1 << d) != 0 {
                *c += 1;
            }
        }
    }

    pub fn coincidences(&self) -> u64 {
        self.doubles + self.multis
    }

    pub fn coincidence_rate(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.coincidences() as f64 / self.slots as f64
        }
    }
}

/// Bob's model of his own receiver without Eve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegitModel {
    pub topology: StationTopology,
    /// μ' at Bob's input.
    pub mu: f64,
    pub efficiency: f64,
    /// Mean dark counts per detector inside the detection window.
    pub dark_per_window: f64,
}

impl LegitModel {
    /// Mean photodetections per slot at 0 dB summed over detectors.
    pub fn mu_eta(&self) -> f64 {
        self.mu * self.efficiency
    }

    fn dark_total(&self) -> f64 {
        self.dark_per_window * self.topology.detector_count() as f64
    }

    /// P(at least one click) at `level_db` for a given μ'η.
    pub fn click_probability(&self, k: f64, level_db: f64) -> f64 {
        -(-(k * gain(level_db) + self.dark_total())).exp_m1()
    }

    /// P(two or more detectors click) at `level_db`, averaged over Alice's
    /// four states and Bob's basis choices.
    pub fn coincidence_probability(&self, level_db: f64) -> f64 {
        let n = self.topology.detector_count();
        let mut means = vec![0.0; n];
        let g = gain(level_db);
        let bob_bases: &[Basis] = match self.topology.ports()[0].arm {
            None => &[Basis::Rectilinear, Basis::Diagonal],
            Some(_) => &[Basis::Rectilinear],
        };
        let mut total = 0.0;
        let mut cases = 0u32;
        for alice_basis in [Basis::Rectilinear, Basis::Diagonal] {
            for bit in [false, true] {
                let seg = OpticalSegment::quantum(
                    SimTime(0),
                    SimTime(1),
                    self.mu_eta() * g,
                    Polarization::bb84(alice_basis, bit),
                );
                for &b in bob_bases {
                    self.topology.distribute(&seg, b, &mut means);
                    let q: Vec<f64> = means
                        .iter()
                        .map(|m| -(-(m + self.dark_per_window)).exp_m1())
                        .collect();
                    total += at_least_two(&q);
                    cases += 1;
                }
            }
        }
        total / cases as f64
    }
}

fn gain(level_db: f64) -> f64 {
    10f64.powf(-level_db / 10.0)
}

/// P(≥2 successes) for independent Bernoulli trials with probabilities `q`.
fn at_least_two(q: &[f64]) -> f64 {
    let none: f64 = q.iter().map(|p| 1.0 - p).product();
    let one: f64 = (0..q.len())
        .map(|i| {
            q[i] * q
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| 1.0 - p)
                .product::<f64>()
        })
        .sum();
    (1.0 - none - one).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCondition {
    /// max P_100% < 2·min P_0%.
    pub canonical: bool,
    /// The printed form, max P_0% < 2·min P_0%.
    pub literal: bool,
    pub max_p100: f64,
    pub min_p0: f64,
    pub max_p0: f64,
}

pub fn control_condition(profile: &ThresholdProfile) -> Result<ControlCondition, MonitorError> {
    let counts: Vec<usize> = profile.detectors.iter().map(|d| d.samples.len()).collect();
    if counts.is_empty() || counts[0] == 0 || counts.iter().any(|&c| c != counts[0]) {
        return Err(MonitorError::IncompleteProfile);
    }
    let samples = || profile.detectors.iter().flat_map(|d| &d.samples);
    let max_p100 = samples().map(|s| s.p100).fold(f64::NEG_INFINITY, f64::max);
    let min_p0 = samples().map(|s| s.p0).fold(f64::INFINITY, f64::min);
    let max_p0 = samples().map(|s| s.p0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ControlCondition {
        canonical: max_p100 < 2.0 * min_p0,
        literal: max_p0 < 2.0 * min_p0,
        max_p100,
        min_p0,
        max_p0,
    })
}

/// Θ = min P_0% / max P_100% over the two detectors of an arm at index `t`.
pub fn theta(p0: [f64; 2], p100: [f64; 2]) -> Option<f64> {
    let den = p100[0].max(p100[1]);
    (den > 0.0).then(|| p0[0].min(p0[1]) / den)
}

/// Strictly above one half.
pub fn controllable(theta: f64) -> bool {
    theta > 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub arm: String,
    pub index: usize,
    pub theta: f64,
    pub controllable: bool,
}

/// Θ_t for every arm pair and sample index of the profile.
pub fn theta_list(
    profile: &ThresholdProfile,
    topology: StationTopology,
) -> Result<Vec<ThetaEntry>, MonitorError> {
    let mut out = Vec::new();
    for &(a, b) in topology.arm_pairs() {
        let (da, db) = match (profile.detectors.get(a), profile.detectors.get(b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(MonitorError::IncompleteProfile),
        };
        let arm = format!("{}+{}", da.detector, db.detector);
        for sa in &da.samples {
            let sb = db
                .samples
                .iter()
                .find(|s| s.index == sa.index)
                .ok_or(MonitorError::IncompleteProfile)?;
            let th = theta([sa.p0, sb.p0], [sa.p100, sb.p100]).ok_or_else(|| {
                MonitorError::Degenerate {
                    arm: arm.clone(),
                    index: sa.index,
                }
            })?;
            out.push(ThetaEntry {
                arm: arm.clone(),
                index: sa.index,
                theta: th,
                controllable: controllable(th),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TestOutcome {
    Applied {
        statistic: f64,
        p_value: f64,
        dof: u32,
        fitted: f64,
    },
    Inapplicable {
        reason: String,
    },
}

impl TestOutcome {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            TestOutcome::Applied { p_value, .. } => Some(*p_value),
            TestOutcome::Inapplicable { .. } => None,
        }
    }
}

/// MLE of μ'η from per-level click counts under p(a) = 1 − exp(−k·10^(−a/10) − D).
fn fit_k(levels: &[LevelCounts], model: &LegitModel) -> f64 {
    let dark = model.dark_total();
    let score = |k: f64| -> f64 {
        levels
            .iter()
            .map(|l| {
                let g = gain(l.level_db);
                let x = k * g + dark;
                let c = l.click_slots as f64;
                let miss = (l.slots - l.click_slots) as f64;
                let hit = if c > 0.0 { c * g / x.exp_m1() } else { 0.0 };
                hit - miss * g
            })
            .sum()
    };
    // The score is decreasing in k; bracket its root on a log scale.
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    while score(hi) > 0.0 && hi < 1e12 {
        lo = hi;
        hi *= 10.0;
    }
    if score(lo) <= 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Chi-square test of per-level click counts against the attenuation law
/// with the overall rate fitted to the same data.
pub fn scaling_test(stats: &MonitorStats, model: &LegitModel) -> TestOutcome {
    let used: Vec<LevelCounts> = stats
        .levels
        .iter()
        .copied()
        .filter(|l| l.slots >= MIN_SLOTS_PER_LEVEL)
        .collect();
    if used.len() < 2 {
        return TestOutcome::Inapplicable {
            reason: "fewer than two attenuation levels with enough slots".into(),
        };
    }
    if used.iter().all(|l| l.level_db == used[0].level_db) {
        return TestOutcome::Inapplicable {
            reason: "all levels equal".into(),
        };
    }
    let total_clicks: u64 = used.iter().map(|l| l.click_slots).sum();
    if total_clicks == 0 {
        // No fit possible; the chance of total silence under Bob's own model decides.
        let expected: f64 = used
            .iter()
            .map(|l| l.slots as f64 * model.click_probability(model.mu_eta(), l.level_db))
            .sum();
        let log_p: f64 = used
            .iter()
            .map(|l| {
                l.slots as f64 * (-model.click_probability(model.mu_eta(), l.level_db)).ln_1p()
            })
            .sum();
        return TestOutcome::Applied {
            statistic: expected,
            p_value: log_p.exp(),
            dof: 0,
            fitted: 0.0,
        };
    }
    let k = fit_k(&used, model);
    // (observed, expected, variance), ordered from least to most attenuation.
    let mut cells: Vec<(f64, f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0, 0.0);
    for l in used.iter().rev() {
        let p = model.click_probability(k, l.level_db);
        let n = l.slots as f64;
        pending.0 += l.click_slots as f64;
        pending.1 += n * p;
        pending.2 += n * p * (1.0 - p);
        if pending.1 >= MIN_EXPECTED {
            cells.push(pending);
            pending = (0.0, 0.0, 0.0);
        }
    }
    if pending.1 > 0.0 || pending.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
                last.2 += pending.2;
            }
            None => cells.push(pending),
        }
    }
    if cells.len() < 2 {
        return TestOutcome::Inapplicable {
            reason: "too few expected clicks to compare levels".into(),
        };
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e, v)| {
            if v > 0.0 {
                (o - e).powi(2) / v
            } else if (o - e).abs() > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = (cells.len() - 1) as u32;
    let p_value = if statistic.is_finite() {
        ChiSquared::new(dof as f64)
            .map(|d| d.sf(statistic))
            .unwrap_or(0.0)
    } else {
        0.0
    };
    TestOutcome::Applied {
        statistic,
        p_value,
        dof,
        fitted: k,
    }
}

/// P(Bin(n, p) ≥ k).
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    beta_reg(k as f64, (n - k + 1) as f64, p)
}

/// One-sided binomial test of the coincidence count against Bob's own
/// accidental-coincidence expectation.
pub fn double_click_test(stats: &MonitorStats, model: &LegitModel) -> TestOutcome {
    if stats.slots == 0 {
        return TestOutcome::Inapplicable {
            reason: "no slots".into(),
        };
    }
    let expected: f64 = stats
        .levels
        .iter()
        .map(|l| l.slots as f64 * model.coincidence_probability(l.level_db))
        .sum();
    let observed = stats.coincidences();
    let p_value = binomial_upper_tail(stats.slots, expected / stats.slots as f64, observed);
    TestOutcome::Applied {
        statistic: observed as f64,
        p_value,
        dof: 0,
        fitted: expected,
    }
}

pub fn compute_qber(key: &SiftedKey) -> Result<f64, MonitorError> {
    if key.bits.is_empty() {
        return Err(MonitorError::EmptyKey);
    }
    let errors = key.bits.iter().filter(|b| b.alice_bit != b.bob_bit).count();
    Ok(errors as f64 / key.bits.len() as f64)
}

/// Fraction of sifted bits equal to the bit Eve resent. `eve_bits[slot]` is
/// `None` where Eve abstained; the whole argument is `None` without Eve.
pub fn eve_control_fraction(key: &SiftedKey, eve_bits: Option<&[Option<bool>]>) -> Option<f64> {
    let eve = eve_bits?;
    if key.bits.is_empty() {
        return None;
    }
    let matches = key
        .bits
        .iter()
        .filter(|b| eve.get(b.slot as usize).copied().flatten() == Some(b.bob_bit))
        .count();
    Some(matches as f64 / key.bits.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub alpha: f64,
    pub condition: Option<ControlCondition>,
    pub theta: Vec<ThetaEntry>,
    pub scaling_test: TestOutcome,
    pub double_click_test: TestOutcome,
    pub damage: bool,
    pub double_rate: f64,
    pub double_rate_threshold: f64,
    pub alarm: bool,
    pub reasons: Vec<String>,
}

/// Aggregates both tests (Bonferroni, α/2 each), damage and the coincidence-rate rule.
pub fn verdict(
    stats: &MonitorStats,
    profile: Option<&ThresholdProfile>,
    model: &LegitModel,
    alpha: f64,
    double_rate_threshold: f64,
) -> AttackVerdict {
    let scaling = scaling_test(stats, model);
    let doubles = double_click_test(stats, model);
    let condition = profile.and_then(|p| control_condition(p).ok());
    let theta = profile
        .and_then(|p| theta_list(p, model.topology).ok())
        .unwrap_or_default();
    let per_test = alpha / 2.0;
    let damage = stats.damage_events > 0;
    let double_rate = stats.coincidence_rate();
    let mut reasons = Vec::new();
    if scaling.p_value().is_some_and(|p| p < per_test) {
        reasons.push("scaling-test".to_string());
    }
    if doubles.p_value().is_some_and(|p| p < per_test) {
        reasons.push("double-click-test".to_string());
    }
    if damage {
        reasons.push("damage".to_string());
    }
    if double_rate > double_rate_threshold {
        reasons.push("double-rate".to_string());
    }
    AttackVerdict {
        alpha,
        condition,
        theta,
        scaling_test: scaling,
        double_click_test: doubles,
        damage,
        double_rate,
        double_rate_threshold,
        alarm: !reasons.is_empty(),
        reasons,
    }
}

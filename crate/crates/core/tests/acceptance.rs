//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;

use blindsim::config::Config;
use blindsim::detectors::{
    active_bias, passive_step, ActiveQuenchParams, DetectorEventKind, DetectorMode, DetectorParams,
    LinearCause, PassiveQuenchParams, PassiveQuenchState, Stimulus,
};
use blindsim::engine::{run_scenario, ScenarioReport};
use blindsim::export::run_files;
use blindsim::harness::{run_seeds, sweep};
use blindsim::monitor::{control_condition, controllable, theta};
use blindsim::optics::{
    Basis, BasisMechanism, OpticalSegment, Polarization, StationTopology, Waveform,
};
use blindsim::rng::{RngStream, StreamId};
use blindsim::station::{DetectorBank, OutcomeKind};
use blindsim::time::{SimTime, TimeBase};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

struct Verdict {
    pass: bool,
    detail: String,
}

fn scenario_src(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn scenario(name: &str) -> Config {
    Config::from_toml_str(&scenario_src(name)).expect("scenario parses")
}

fn sigma_ok(observed: u64, n: u64, p: f64) -> (bool, f64) {
    let expected = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let z = if sd > 0.0 {
        (observed as f64 - expected) / sd
    } else if observed as f64 == expected {
        0.0
    } else {
        f64::INFINITY
    };
    (z.abs() <= 3.0, z)
}

/// 1. A discharged passive diode can fire again about 1 µs later.
fn passive_recharge() -> Verdict {
    let p = PassiveQuenchParams::default();
    let oracle = -p.recharge_tau_ns * (1.0 - p.armed_fraction).ln();
    let mut rng = RngStream::new(0, StreamId::DetectorNoise).at(0);
    let mut first = None;
    for t in 1..3000u64 {
        let mut s = PassiveQuenchState::discharged();
        let mut clicks = Vec::new();
        passive_step(&mut s, &p, &Stimulus::dark(0, t), &mut rng, &mut clicks);
        passive_step(
            &mut s,
            &p,
            &Stimulus::bright(t, 1, 1e-6),
            &mut rng,
            &mut clicks,
        );
        if !clicks.is_empty() {
            first = Some(t);
            break;
        }
    }
    let Some(t) = first else {
        return Verdict {
            pass: false,
            detail: "never re-armed".into(),
        };
    };
    let within = (t as f64 - 1000.0).abs() <= 50.0 && (t as f64 - oracle).abs() <= 1.0;
    Verdict {
        pass: within,
        detail: format!("click-capable at {t} ns; closed form {oracle:.1} ns"),
    }
}

/// 2. Continuous bright light leaves a passive diode with only its onset avalanche.
fn passive_blinding() -> Verdict {
    let topo = StationTopology::new(BasisMechanism::ActiveTwoDetector);
    let mut bank = DetectorBank::new(
        topo,
        vec![DetectorParams::Passive(PassiveQuenchParams::default()); 2],
        TimeBase::default(),
        SimTime(10_000),
        SimTime(5000),
        20,
    );
    let cw = Waveform::new(
        vec![OpticalSegment::classical(
            SimTime(0),
            SimTime(10_000),
            1e-6,
            Polarization::unpolarized(),
        )],
        SimTime(10_000),
    )
    .unwrap();
    let noise = RngStream::new(2, StreamId::DetectorNoise);
    let mut in_window = 0u64;
    for slot in 0..10_000 {
        let o = bank.measure(
            slot,
            &cw,
            Basis::Rectilinear,
            Some(Basis::Rectilinear),
            0.0,
            &mut noise.at(slot),
        );
        in_window += (o.kind != OutcomeKind::None) as u64;
    }
    let raw: Vec<u64> = bank.units().iter().map(|u| u.raw_clicks()).collect();
    Verdict {
        pass: raw.iter().all(|&c| c <= 1) && in_window == 0,
        detail: format!("raw clicks per detector {raw:?} over 10^4 slots"),
    }
}

/// 3. Blank-and-resume: one click on Eve's target at the edge, or a double.
fn blank_and_click(report: &ScenarioReport) -> Verdict {
    let edge = report.config.timebase.to_ns(report.config.pulse_offset);
    let (mut matched, mut mismatched, mut exceptions) = (0u64, 0u64, 0u64);
    for r in &report.records {
        let e = r.eve.expect("Eve is active");
        if e.abstain {
            exceptions += (r.outcome.kind != OutcomeKind::None) as u64;
            continue;
        }
        if r.bob_basis == Some(e.basis) {
            matched += 1;
            let target = 1u8 << (e.bit as u8);
            let ok = r.outcome.kind.bit() == Some(e.bit)
                && r.outcome.detector_mask == target
                && r.outcome.time_ns == Some(edge);
            exceptions += !ok as u64;
        } else {
            mismatched += 1;
            exceptions += (r.outcome.kind != OutcomeKind::Double) as u64;
        }
    }
    Verdict {
        pass: exceptions == 0 && report.records.len() == 10_000 && matched > 0 && mismatched > 0,
        detail: format!(
            "{matched} matched, {mismatched} mismatched slots, {exceptions} exceptions"
        ),
    }
}

/// 4. Geiger to linear exactly at the bias-sag blinding power.
fn bias_sag_boundary() -> Verdict {
    let p = ActiveQuenchParams::default();
    let oracle = (p.bias_voltage_v - p.breakdown_voltage_v)
        / (p.bias_resistance_ohm * p.responsivity_a_per_w);
    let t = p.reference_temperature_k;
    let below = active_bias(oracle.next_down(), &p, t).1;
    let at = active_bias(oracle, &p, t).1;
    let above = active_bias(oracle.next_up(), &p, t).1;
    let pass = (oracle - 80e-6).abs() < 1e-18
        && below == DetectorMode::Geiger
        && at == DetectorMode::Geiger
        && above == DetectorMode::Linear(LinearCause::BiasSag);
    Verdict {
        pass,
        detail: format!(
            "P_blind = {oracle:e} W; below {below:?}, at {at:?}, one step above {above:?}"
        ),
    }
}

fn first_crossing_ns(report: &ScenarioReport) -> Option<u64> {
    report
        .detectors
        .iter()
        .flat_map(|d| &d.events)
        .filter_map(|e| match e.kind {
            DetectorEventKind::BreakdownCrossed { above: true, .. } => Some(e.time_ns),
            _ => None,
        })
        .min()
}

/// 5. TEC saturation at 1 MHz crosses breakdown on the closed-form schedule; 70 kHz never does.
fn thermal_blinding(fast: &ScenarioReport, slow: &ScenarioReport) -> Verdict {
    let DetectorParams::Active(a) = &fast.config.detectors[0] else {
        return Verdict {
            pass: false,
            detail: "scenario is not active".into(),
        };
    };
    // Average power on each diode: half the unpolarized 10 mW, 400 ns of every 1 µs.
    let avg = 0.5 * fast.config.eve.blind_power_w * 400e-9 * 1e6;
    let q = a.heat_fraction * avg;
    let g = a.heat_leak_w_per_k;
    let dt_star = (a.bias_voltage_v - a.breakdown_voltage_v) / a.tempco_v_per_k;
    let t_star_s = -(a.thermal_capacity_j_per_k / g) * (1.0 - g * dt_star / (q - a.tec_max_w)).ln();
    let t_star_ns = t_star_s * 1e9;
    let Some(crossed) = first_crossing_ns(fast) else {
        return Verdict {
            pass: false,
            detail: "1 MHz train never crossed breakdown".into(),
        };
    };
    let rel = (crossed as f64 - t_star_ns) / t_star_ns;
    let slow_crossed = first_crossing_ns(slow);
    let slow_max_t = slow
        .detectors
        .iter()
        .filter_map(|d| d.temperature_k)
        .fold(f64::NAN, f64::max);
    Verdict {
        pass: rel.abs() <= 0.02 && slow_crossed.is_none(),
        detail: format!(
            "1 MHz crossing at {:.4} ms vs closed form {:.4} ms ({:+.2}%); 70 kHz over {:.0} ms: {}, T_end = {:.3} K",
            crossed as f64 * 1e-6,
            t_star_ns * 1e-6,
            rel * 100.0,
            slow.config.slot_count as f64 * slow.config.slot_period_s() * 1e3,
            if slow_crossed.is_some() { "crossed" } else { "never crossed" },
            slow_max_t
        ),
    }
}

/// 6. Θ > 0.5: full control and no errors. Θ ≤ 0.5: wrong-basis anomalies at the band-predicted rates.
fn faked_state(good: &ScenarioReport, leaky: &ScenarioReport) -> Verdict {
    let control_ok = good.eve_control == Some(1.0) && good.qber == Some(0.0);
    let DetectorParams::Active(a) = &leaky.config.detectors[0] else {
        return Verdict {
            pass: false,
            detail: "scenario is not active".into(),
        };
    };
    // Eve sends max P_100%; each wrong-basis detector sees half of it.
    let half = a.band.p100 / 2.0;
    let q = ((half - a.band.p0) / (a.band.p100 - a.band.p0)).clamp(0.0, 1.0);
    let (mut n, mut double, mut single, mut none, mut matched_bad) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for r in &leaky.records {
        let e = r.eve.expect("Eve is active");
        if e.abstain {
            continue;
        }
        if r.bob_basis == Some(e.basis) {
            matched_bad += (r.outcome.kind.bit() != Some(e.bit)) as u64;
            continue;
        }
        n += 1;
        match r.outcome.detector_mask.count_ones() {
            0 => none += 1,
            1 => single += 1,
            _ => double += 1,
        }
    }
    let (d_ok, zd) = sigma_ok(double, n, q * q);
    let (s_ok, zs) = sigma_ok(single, n, 2.0 * q * (1.0 - q));
    let (n_ok, zn) = sigma_ok(none, n, (1.0 - q) * (1.0 - q));
    Verdict {
        pass: control_ok && d_ok && s_ok && n_ok && matched_bad == 0 && leaky.eve_control.is_some_and(|c| c < 1.0),
        detail: format!(
            "Θ>0.5: control {:?}, QBER {:?}; Θ≤0.5 over {n} wrong-basis slots: double z={zd:+.2}, single z={zs:+.2}, none z={zn:+.2}, control {:.4}",
            good.eve_control,
            good.qber,
            leaky.eve_control.unwrap_or(f64::NAN)
        ),
    }
}

/// 7. Θ arithmetic and its agreement with the controllability inequality.
fn theta_arithmetic() -> Verdict {
    let t1 = theta([4.0, 5.0], [7.0, 8.0]);
    let t2 = theta([4.0, 4.0], [7.0, 7.0]);
    let fixed =
        t1 == Some(0.5) && !controllable(0.5) && t2 == Some(4.0 / 7.0) && controllable(4.0 / 7.0);
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (1e-7f64..1e-4, 1e-7f64..1e-4, 1e-8f64..1e-4, 1e-8f64..1e-4);
    let prop = runner.run(&strategy, |(a0, a1, w0, w1)| {
        let prof = blindsim::detectors::ThresholdProfile::uniform(
            &["D0", "D1"],
            &[
                blindsim::detectors::Band::new(a0, a0 + w0),
                blindsim::detectors::Band::new(a1, a1 + w1),
            ],
            1,
        );
        let condition = control_condition(&prof).unwrap().canonical;
        let th = theta([a0, a1], [a0 + w0, a1 + w1]).unwrap();
        prop_assert_eq!(condition, controllable(th));
        Ok(())
    });
    Verdict {
        pass: fixed && prop.is_ok(),
        detail: format!(
            "Θ({{4,5}},{{7,8}}) = {t1:?}, Θ({{4,4}},{{7,7}}) = {t2:?}; 10^3 random profiles: {}",
            if prop.is_ok() { "agree" } else { "disagree" }
        ),
    }
}

/// 8. Alarm rates under the iid attenuator, legitimate vs blinded.
fn countermeasure(legit: &[ScenarioReport], attack: &[ScenarioReport]) -> Verdict {
    let false_alarms = legit.iter().filter(|r| r.verdict.alarm).count();
    let detected = attack.iter().filter(|r| r.verdict.alarm).count();
    let worst_attack_p = attack
        .iter()
        .filter_map(|r| r.verdict.scaling_test.p_value())
        .fold(0.0f64, f64::max);
    Verdict {
        pass: false_alarms <= 1 && detected >= 99,
        detail: format!(
            "legitimate: {false_alarms}/100 alarmed; blinded: {detected}/100 alarmed, largest scaling p = {worst_attack_p:e}"
        ),
    }
}

/// 9. Click rate falls by one decade per 10 dB.
fn scaling_law() -> Verdict {
    let src = scenario_src("legit-iid.toml")
        .replace("voa_mode = \"iid-uniform\"", "voa_mode = \"fixed\"");
    let table: toml::Table = src.parse().unwrap();
    let levels = [0.0, 10.0, 20.0, 30.0];
    let rows = sweep(&table, &src, "bob.voa_fixed_db", &levels, None).unwrap();
    let slots = 100_000.0;
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.metric == "click_rate")
        .map(|r| (r.value, r.metric_value.log10(), r.metric_value * slots))
        .collect();
    // Weighted least squares; the variance of log10(rate) is ∝ 1/clicks.
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let within = pts.iter().all(|p| p.2 > 0.0) && ((slope + 0.1) / 0.1).abs() <= 0.05;
    let clicks: Vec<u64> = pts.iter().map(|p| p.2.round() as u64).collect();
    Verdict {
        pass: within,
        detail: format!("slope {slope:.5} per dB (target -0.1 ± 5%), clicks per level {clicks:?}"),
    }
}

/// 10. 80 dB of compensation burns the detectors; nothing clicks afterwards.
fn damage(report: &ScenarioReport) -> Verdict {
    let deaths: Vec<(usize, u64)> = report
        .detectors
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            d.events.iter().find_map(|e| {
                matches!(e.kind, DetectorEventKind::Damaged { .. }).then_some((i, e.slot))
            })
        })
        .collect();
    let mut late_clicks = 0u64;
    for &(i, slot) in &deaths {
        late_clicks += report
            .records
            .iter()
            .filter(|r| r.slot > slot && r.outcome.detector_mask & (1 << i) != 0)
            .count() as u64;
    }
    let first = deaths.iter().map(|d| d.1).min();
    let voa = first.map(|s| report.records[s as usize].voa_db);
    Verdict {
        pass: !deaths.is_empty() && report.verdict.damage && report.verdict.alarm && late_clicks == 0,
        detail: format!(
            "{} detectors latched dead (first in slot {first:?} at {voa:?} dB), {late_clicks} clicks afterwards, alarm {}",
            deaths.len(),
            report.verdict.alarm
        ),
    }
}

/// 11. Byte-identical outputs across reruns with the same seed.
fn determinism(configs: &[(&str, Config)]) -> Verdict {
    let mut differing = Vec::new();
    for (name, c) in configs {
        let a = run_files(&run_scenario(c));
        let b = run_files(&run_scenario(c));
        if a != b {
            differing.push(*name);
        }
    }
    Verdict {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} scenarios reproduced byte for byte", configs.len())
        } else {
            format!("differences in {differing:?}")
        },
    }
}

fn main() -> ExitCode {
    blindsim::parallel::init_from_env();
    let passive = scenario("passive-blank.toml");
    let faked = scenario("active-faked-state.toml");
    let leaky = Config::from_toml_str(
        &scenario_src("active-faked-state.toml")
            .replace("p0 = 4e-6, p100 = 7e-6", "p0 = 3e-6, p100 = 7e-6"),
    )
    .unwrap();
    let thermal_fast = scenario("thermal-1mhz.toml");
    let thermal_slow = Config::from_toml_str(
        &scenario_src("thermal-1mhz.toml")
            .replace("pulse_rate_hz = 1e6", "pulse_rate_hz = 7e4")
            .replace("slot_count = 4000", "slot_count = 40000"),
    )
    .unwrap();
    let legit = scenario("legit-iid.toml");
    let blinded = scenario("blinding-iid.toml");
    let damaged = scenario("damage-80db.toml");
    let seeds: Vec<u64> = (0..100).collect();

    let passive_r = run_scenario(&passive);
    let faked_r = run_scenario(&faked);
    let leaky_r = run_scenario(&leaky);
    let fast_r = run_scenario(&thermal_fast);
    let slow_r = run_scenario(&thermal_slow);
    let legit_runs = run_seeds(&legit, &seeds);
    let attack_runs = run_seeds(&blinded, &seeds);
    let damage_r = run_scenario(&damaged);

    let results = [
        (1, "passive recharge timing", passive_recharge()),
        (2, "passive CW blinding", passive_blinding()),
        (3, "blank-and-click", blank_and_click(&passive_r)),
        (4, "active bias-sag boundary", bias_sag_boundary()),
        (
            5,
            "thermal blinding regimes",
            thermal_blinding(&fast_r, &slow_r),
        ),
        (6, "faked-state control", faked_state(&faked_r, &leaky_r)),
        (7, "controllability ratio", theta_arithmetic()),
        (
            8,
            "attenuator countermeasure",
            countermeasure(&legit_runs, &attack_runs),
        ),
        (9, "attenuation scaling law", scaling_law()),
        (10, "damage latch", damage(&damage_r)),
        (
            11,
            "determinism",
            determinism(&[
                ("passive-blank", passive),
                ("active-faked-state", faked),
                ("active-faked-state leaky", leaky),
                ("thermal 1 MHz", thermal_fast),
                ("thermal 70 kHz", thermal_slow),
                ("legit-iid", legit),
                ("blinding-iid", blinded),
                ("damage-80db", damaged),
            ]),
        ),
    ];
    let mut failed = 0;
    for (id, name, v) in &results {
        println!(
            "criterion {id:>2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += !v.pass as u32;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

//! Optical signals and the ideal linear optics of the receiver: attenuation,
//! polarization analysis, beam splitting and photon statistics.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Measurement bases of BB84.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// H/V, analyzer axis at 0°.
    Rectilinear,
    /// D/A, analyzer axis at 45°.
    Diagonal,
}

impl Basis {
    pub fn from_bit(b: bool) -> Basis {
        if b {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }

    /// Transmission axis of the PBS port carrying bit 0.
    pub fn analyzer_deg(self) -> f64 {
        match self {
            Basis::Rectilinear => 0.0,
            Basis::Diagonal => 45.0,
        }
    }

    /// HWP rotation that maps this analyzer onto a fixed H/V PBS.
    pub fn hwp_deg(self) -> f64 {
        self.analyzer_deg() / 2.0
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Basis::Rectilinear => "R",
            Basis::Diagonal => "D",
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Rectilinear => Basis::Diagonal,
            Basis::Diagonal => Basis::Rectilinear,
        }
    }
}

/// Linear polarization with a degree of polarization.
///
/// `degree = 1` is a pure linear state, `degree = 0` unpolarized light that
/// splits evenly at any analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polarization {
    pub angle_deg: f64,
    pub degree: f64,
}

impl Polarization {
    pub fn linear(angle_deg: f64) -> Self {
        Polarization {
            angle_deg,
            degree: 1.0,
        }
    }

    pub fn unpolarized() -> Self {
        Polarization {
            angle_deg: 0.0,
            degree: 0.0,
        }
    }

    /// The BB84 state encoding `bit` in `basis` (H, V, D, A).
    pub fn bb84(basis: Basis, bit: bool) -> Self {
        let angle = basis.analyzer_deg() + if bit { 90.0 } else { 0.0 };
        Polarization::linear(angle)
    }

    pub fn h() -> Self {
        Self::linear(0.0)
    }
    pub fn v() -> Self {
        Self::linear(90.0)
    }
    pub fn d() -> Self {
        Self::linear(45.0)
    }
    pub fn a() -> Self {
        Self::linear(135.0)
    }
}

/// One piecewise-constant piece of a waveform. Times are relative to the slot start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalSegment {
    pub start: SimTime,
    pub duration: SimTime,
    /// Watts, or mean photon number when `quantum` is set.
    pub power: f64,
    pub polarization: Polarization,
    pub quantum: bool,
}

impl OpticalSegment {
    pub fn classical(
        start: SimTime,
        duration: SimTime,
        power: f64,
        polarization: Polarization,
    ) -> Self {
        OpticalSegment {
            start,
            duration,
            power,
            polarization,
            quantum: false,
        }
    }

    pub fn quantum(start: SimTime, duration: SimTime, mu: f64, polarization: Polarization) -> Self {
        OpticalSegment {
            start,
            duration,
            power: mu,
            polarization,
            quantum: true,
        }
    }

    pub fn end(&self) -> SimTime {
        self.start + self.duration
    }

    pub fn scaled(&self, factor: f64) -> Self {
        OpticalSegment {
            power: self.power * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveformError {
    #[error("segment {0} has zero duration")]
    EmptySegment(usize),
    #[error("segment {0} has negative or non-finite power")]
    BadPower(usize),
    #[error("segment {0} overlaps or precedes its predecessor")]
    Overlap(usize),
    #[error("waveform extends past the {0}-tick slot")]
    TooLong(u64),
}

/// Time-ordered, non-overlapping segments covering (part of) a slot; gaps are dark.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Waveform {
    segments: Vec<OpticalSegment>,
}

impl Waveform {
    pub fn empty() -> Self {
        Waveform {
            segments: Vec::new(),
        }
    }

    pub fn new(segments: Vec<OpticalSegment>, slot_period: SimTime) -> Result<Self, WaveformError> {
        let mut cursor = SimTime::ZERO;
        for (i, s) in segments.iter().enumerate() {
            if s.duration == SimTime::ZERO {
                return Err(WaveformError::EmptySegment(i));
            }
            if !(s.power >= 0.0 && s.power.is_finite()) {
                return Err(WaveformError::BadPower(i));
            }
            if s.start < cursor {
                return Err(WaveformError::Overlap(i));
            }
            cursor = s.end();
        }
        if cursor > slot_period {
            return Err(WaveformError::TooLong(slot_period.ticks()));
        }
        Ok(Waveform { segments })
    }

    /// Builds a waveform from segments the caller guarantees are ordered.
    pub(crate) fn from_ordered(segments: Vec<OpticalSegment>) -> Self {
        debug_assert!(segments.windows(2).all(|w| w[0].end() <= w[1].start));
        Waveform { segments }
    }

    pub fn segments(&self) -> &[OpticalSegment] {
        &self.segments
    }

    pub fn is_dark(&self) -> bool {
        self.segments.iter().all(|s| s.power == 0.0)
    }

    pub fn peak_power(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| !s.quantum)
            .map(|s| s.power)
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Waveform {
            segments: self.segments.iter().map(|s| s.scaled(factor)).collect(),
        }
    }
}

/// Linear power factor of an attenuation in dB.
pub fn db_to_factor(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// VOA: scales every segment's power (or μ) by 10^(−a/10).
pub fn apply_attenuation(w: &Waveform, attenuation_db: f64) -> Waveform {
    debug_assert!(attenuation_db >= 0.0);
    if attenuation_db == 0.0 {
        return w.clone();
    }
    w.scaled(db_to_factor(attenuation_db))
}

/// cos² of the angle between polarization and analyzer, exact on multiples of 45°.
pub fn malus_fraction(delta_deg: f64) -> f64 {
    let r = delta_deg.rem_euclid(180.0);
    if r == 0.0 {
        1.0
    } else if r == 90.0 {
        0.0
    } else if r == 45.0 || r == 135.0 {
        0.5
    } else {
        r.to_radians().cos().powi(2)
    }
}

/// Fraction of a segment's power exiting the bit-0 port of a PBS analyzer set
/// to `analyzer_deg`, after an HWP at `hwp_deg` (the HWP rotates the analyzer by 2×).
pub fn port0_fraction(pol: Polarization, analyzer_deg: f64, hwp_deg: f64) -> f64 {
    let axis = analyzer_deg + 2.0 * hwp_deg;
    let polarized = malus_fraction(pol.angle_deg - axis);
    if pol.degree == 1.0 {
        polarized
    } else {
        (1.0 - pol.degree) * 0.5 + pol.degree * polarized
    }
}

/// Malus-law split of one segment at an analyzer: (power at D0, power at D1).
///
/// `analyzer` selects the measured basis on a fixed H/V PBS; the HWP angle adds
/// any extra rotation (0 for an aligned station).
pub fn project_onto_basis(seg: &OpticalSegment, analyzer: Basis, hwp_extra_deg: f64) -> (f64, f64) {
    let f0 = port0_fraction(seg.polarization, 0.0, analyzer.hwp_deg() + hwp_extra_deg);
    let p0 = seg.power * f0;
    (p0, seg.power - p0)
}

/// 50/50 beam splitter of the passive basis choice: (rectilinear arm, diagonal arm).
pub fn split_passive(seg: &OpticalSegment) -> (OpticalSegment, OpticalSegment) {
    let half = seg.scaled(0.5);
    (half, half)
}

/// Poisson photocount with mean μ·η.
pub fn sample_photocount<R: Rng + ?Sized>(mu: f64, eta: f64, rng: &mut R) -> u64 {
    let mean = mu * eta;
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails on non-positive or non-finite means, excluded above.
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

/// Bernoulli shortcut for "at least one photon", `1 − exp(−μη)`.
pub fn photon_detected<R: Rng + ?Sized>(mu: f64, eta: f64, rng: &mut R) -> bool {
    let mean = mu * eta;
    if mean <= 0.0 {
        return false;
    }
    rng.random::<f64>() < -(-mean).exp_m1()
}

/// Which receiver front end is installed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMechanism {
    /// Bob picks the basis per slot with an HWP; one PBS, detectors D0 and D1.
    ActiveTwoDetector,
    /// 50/50 BS picks the basis; two PBS arms, detectors D0_R, D1_R, D0_D, D1_D.
    PassiveFourDetector,
}

/// Bit value and arm a detector reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorPort {
    pub name: &'static str,
    pub bit: bool,
    /// `None` on the two-detector station, where the arm follows Bob's basis choice.
    pub arm: Option<Basis>,
}

/// Detector wiring of the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationTopology {
    pub mechanism: BasisMechanism,
}

const TWO_PORTS: [DetectorPort; 2] = [
    DetectorPort {
        name: "D0",
        bit: false,
        arm: None,
    },
    DetectorPort {
        name: "D1",
        bit: true,
        arm: None,
    },
];

const FOUR_PORTS: [DetectorPort; 4] = [
    DetectorPort {
        name: "D0_R",
        bit: false,
        arm: Some(Basis::Rectilinear),
    },
    DetectorPort {
        name: "D1_R",
        bit: true,
        arm: Some(Basis::Rectilinear),
    },
    DetectorPort {
        name: "D0_D",
        bit: false,
        arm: Some(Basis::Diagonal),
    },
    DetectorPort {
        name: "D1_D",
        bit: true,
        arm: Some(Basis::Diagonal),
    },
];

impl StationTopology {
    pub fn new(mechanism: BasisMechanism) -> Self {
        StationTopology { mechanism }
    }

    pub fn ports(&self) -> &'static [DetectorPort] {
        match self.mechanism {
            BasisMechanism::ActiveTwoDetector => &TWO_PORTS,
            BasisMechanism::PassiveFourDetector => &FOUR_PORTS,
        }
    }

    pub fn detector_count(&self) -> usize {
        self.ports().len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.ports().iter().position(|p| p.name == name)
    }

    /// Pairs of detector indices that share an arm.
    pub fn arm_pairs(&self) -> &'static [(usize, usize)] {
        match self.mechanism {
            BasisMechanism::ActiveTwoDetector => &[(0, 1)],
            BasisMechanism::PassiveFourDetector => &[(0, 1), (2, 3)],
        }
    }

    /// Power fraction an unpolarized beam delivers to each detector.
    pub fn unpolarized_fraction(&self) -> f64 {
        match self.mechanism {
            BasisMechanism::ActiveTwoDetector => 0.5,
            BasisMechanism::PassiveFourDetector => 0.25,
        }
    }

    /// Power ratio between Bob's input and a detector in the arm matching a pure state.
    pub fn matched_arm_fraction(&self) -> f64 {
        match self.mechanism {
            BasisMechanism::ActiveTwoDetector => 1.0,
            BasisMechanism::PassiveFourDetector => 0.5,
        }
    }

    /// Per-detector power of `seg`. `bob_basis` is only consulted on the
    /// two-detector station.
    pub fn distribute(&self, seg: &OpticalSegment, bob_basis: Basis, out: &mut [f64]) {
        match self.mechanism {
            BasisMechanism::ActiveTwoDetector => {
                let (d0, d1) = project_onto_basis(seg, bob_basis, 0.0);
                out[0] = d0;
                out[1] = d1;
            }
            BasisMechanism::PassiveFourDetector => {
                let (r, d) = split_passive(seg);
                let (r0, r1) = project_onto_basis(&r, Basis::Rectilinear, 0.0);
                let (d0, d1) = project_onto_basis(&d, Basis::Diagonal, 0.0);
                out[0] = r0;
                out[1] = r1;
                out[2] = d0;
                out[3] = d1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};
    use proptest::prelude::*;

    fn seg(power: f64, pol: Polarization) -> OpticalSegment {
        OpticalSegment::classical(SimTime(0), SimTime(1), power, pol)
    }

    #[test]
    fn attenuation_examples() {
        let w = Waveform::from_ordered(vec![seg(1e-3, Polarization::h())]);
        assert_eq!(apply_attenuation(&w, 0.0).segments()[0].power, 1e-3);
        let p = apply_attenuation(&w, 60.0).segments()[0].power;
        assert!((p - 1e-9).abs() < 1e-24);
        let q = Waveform::from_ordered(vec![OpticalSegment::quantum(
            SimTime(0),
            SimTime(1),
            0.1,
            Polarization::d(),
        )]);
        let a = apply_attenuation(&q, 10.0).segments()[0];
        assert!((a.power - 0.01).abs() < 1e-17);
        assert_eq!(a.polarization, Polarization::d());
    }

    #[test]
    fn projection_table() {
        // Independent evaluation: cos² of the angle between state and axis, by hand.
        let table = [
            (Polarization::h(), Basis::Rectilinear, 1.0),
            (Polarization::v(), Basis::Rectilinear, 0.0),
            (Polarization::d(), Basis::Rectilinear, 0.5),
            (Polarization::a(), Basis::Rectilinear, 0.5),
            (Polarization::h(), Basis::Diagonal, 0.5),
            (Polarization::v(), Basis::Diagonal, 0.5),
            (Polarization::d(), Basis::Diagonal, 1.0),
            (Polarization::a(), Basis::Diagonal, 0.0),
        ];
        for (pol, basis, f0) in table {
            let (d0, d1) = project_onto_basis(&seg(2.0, pol), basis, 0.0);
            assert_eq!(d0, 2.0 * f0, "{pol:?} {basis:?}");
            assert_eq!(d1, 2.0 * (1.0 - f0));
            assert_eq!(d0 + d1, 2.0);
        }
    }

    #[test]
    fn unpolarized_splits_evenly() {
        let (d0, d1) =
            project_onto_basis(&seg(4.0, Polarization::unpolarized()), Basis::Diagonal, 0.0);
        assert_eq!((d0, d1), (2.0, 2.0));
    }

    #[test]
    fn passive_split_examples() {
        let (r, d) = split_passive(&seg(2e-6, Polarization::h()));
        assert_eq!((r.power, d.power), (1e-6, 1e-6));
        let (r, d) = split_passive(&seg(0.0, Polarization::h()));
        assert_eq!((r.power, d.power), (0.0, 0.0));
    }

    #[test]
    fn cascade_quarter_power_for_d_state() {
        let topo = StationTopology::new(BasisMechanism::PassiveFourDetector);
        let mut out = [0.0; 4];
        // D state measured in the rectilinear arm: 1/2 (BS) × 1/2 (PBS).
        topo.distribute(&seg(1.0, Polarization::d()), Basis::Rectilinear, &mut out);
        assert_eq!(out, [0.25, 0.25, 0.5, 0.0]);
    }

    #[test]
    fn photocount_examples() {
        let s = RngStream::new(5, StreamId::DetectorNoise);
        let mut r = s.at(0);
        assert!((0..1000).all(|_| sample_photocount(0.0, 0.5, &mut r) == 0));
        assert!((0..1000).all(|_| sample_photocount(0.3, 0.0, &mut r) == 0));

        // P(n ≥ 1) = 1 − e^{−0.05} from the closed form.
        let expected = 1.0 - (-0.05f64).exp();
        assert!((expected - 0.04877).abs() < 1e-5);
        let n = 1_000_000u64;
        let mut hits = 0u64;
        let mut sum = 0u64;
        for i in 0..n {
            let mut r = s.at(i);
            let c = sample_photocount(0.1, 0.5, &mut r);
            sum += c;
            hits += (c >= 1) as u64;
        }
        let frac = hits as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() < 3.0 * sigma, "{frac}");
        let mean = sum as f64 / n as f64;
        assert!(
            (mean - 0.05).abs() < 3.0 * (0.05 / n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn waveform_validation() {
        let ok = Waveform::new(
            vec![
                OpticalSegment::classical(SimTime(0), SimTime(5), 1.0, Polarization::h()),
                OpticalSegment::classical(SimTime(7), SimTime(3), 1.0, Polarization::h()),
            ],
            SimTime(10),
        );
        assert!(ok.is_ok());
        let overlap = Waveform::new(
            vec![
                OpticalSegment::classical(SimTime(0), SimTime(5), 1.0, Polarization::h()),
                OpticalSegment::classical(SimTime(4), SimTime(3), 1.0, Polarization::h()),
            ],
            SimTime(10),
        );
        assert_eq!(overlap, Err(WaveformError::Overlap(1)));
        let long = Waveform::new(
            vec![OpticalSegment::classical(
                SimTime(0),
                SimTime(11),
                1.0,
                Polarization::h(),
            )],
            SimTime(10),
        );
        assert_eq!(long, Err(WaveformError::TooLong(10)));
        let neg = Waveform::new(
            vec![OpticalSegment::classical(
                SimTime(0),
                SimTime(1),
                -1.0,
                Polarization::h(),
            )],
            SimTime(10),
        );
        assert_eq!(neg, Err(WaveformError::BadPower(0)));
    }

    proptest! {
        #[test]
        fn attenuation_composes(p in 0.0f64..1.0, a in 0.0f64..40.0, b in 0.0f64..40.0) {
            let w = Waveform::from_ordered(vec![seg(p, Polarization::h())]);
            let twice = apply_attenuation(&apply_attenuation(&w, a), b).segments()[0].power;
            let once = apply_attenuation(&w, a + b).segments()[0].power;
            prop_assert!((twice - once).abs() <= 1e-12 * once.max(1e-300));
        }

        #[test]
        fn projections_bounded_and_conserving(p in 0.0f64..1.0, angle in -360.0f64..360.0, degree in 0.0f64..=1.0, diag in any::<bool>()) {
            let s = seg(p, Polarization { angle_deg: angle, degree });
            let (d0, d1) = project_onto_basis(&s, Basis::from_bit(diag), 0.0);
            prop_assert!(d0 >= 0.0 && d0 <= p);
            prop_assert!(d1 >= 0.0 && d1 <= p);
            prop_assert!((d0 + d1 - p).abs() <= 2.0 * f64::EPSILON * p);
        }

        #[test]
        fn four_detector_bank_conserves(p in 0.0f64..1.0, bit in any::<bool>(), diag in any::<bool>()) {
            let topo = StationTopology::new(BasisMechanism::PassiveFourDetector);
            let mut out = [0.0; 4];
            topo.distribute(&seg(p, Polarization::bb84(Basis::from_bit(diag), bit)), Basis::Rectilinear, &mut out);
            prop_assert!((out.iter().sum::<f64>() - p).abs() <= 4.0 * f64::EPSILON * p);
        }
    }
}

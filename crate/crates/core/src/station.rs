//! Alice's source, Bob's secret attenuator schedule, the detector bank and
//! click registration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorParams, DetectorUnit, SlotClock, Stimulus};
use crate::optics::{
    apply_attenuation, db_to_factor, Basis, OpticalSegment, Polarization, StationTopology, Waveform,
};
use crate::rng::RngStream;
use crate::time::{SimTime, TimeBase};

/// Largest attenuation the VOA and intensity modulator reach together.
pub const VOA_CEILING_DB: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceParams {
    pub mean_photon_number: f64,
    pub channel_loss_db: f64,
}

impl Default for AliceParams {
    fn default() -> Self {
        AliceParams {
            mean_photon_number: 0.1,
            channel_loss_db: 0.0,
        }
    }
}

impl AliceParams {
    /// Mean photon number arriving at Eve (and, without Eve, at Bob's VOA).
    pub fn mu_at_channel_end(&self) -> f64 {
        self.mean_photon_number * db_to_factor(self.channel_loss_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliceEmission {
    pub bit: bool,
    pub basis: Basis,
    pub mu: f64,
    pub state: Polarization,
}

impl AliceEmission {
    /// The faint pulse as a one-tick quantum segment at `offset`.
    pub fn pulse(&self, offset: SimTime) -> Waveform {
        Waveform::from_ordered(vec![OpticalSegment::quantum(
            offset,
            SimTime(1),
            self.mu,
            self.state,
        )])
    }
}

pub fn alice_emit(
    slot: u64,
    params: &AliceParams,
    bits: &RngStream,
    bases: &RngStream,
) -> AliceEmission {
    let bit = bits.at(slot).random::<bool>();
    let basis = Basis::from_bit(bases.at(slot).random::<bool>());
    AliceEmission {
        bit,
        basis,
        mu: params.mu_at_channel_end(),
        state: Polarization::bb84(basis, bit),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum VoaMode {
    Fixed { level_db: f64 },
    IidUniform { levels_db: Vec<f64> },
    FrequencyScan { pattern_db: Vec<f64>, phase: usize },
}

/// Bob's attenuator controller. Levels come from the `bob-voa` stream, which
/// the attack module never receives.
#[derive(Debug, Clone)]
pub struct VoaSchedule {
    mode: VoaMode,
    stream: RngStream,
}

impl VoaSchedule {
    pub fn new(mode: VoaMode, stream: RngStream) -> Self {
        VoaSchedule { mode, stream }
    }

    /// Scan phase drawn from the secret stream when not configured.
    pub fn secret_phase(stream: &RngStream, pattern_len: usize) -> usize {
        stream.at(u64::MAX).random_range(0..pattern_len.max(1))
    }

    pub fn mode(&self) -> &VoaMode {
        &self.mode
    }

    /// Distinct levels the schedule can emit, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let mut v = match &self.mode {
            VoaMode::Fixed { level_db } => vec![*level_db],
            VoaMode::IidUniform { levels_db } => levels_db.clone(),
            VoaMode::FrequencyScan { pattern_db, .. } => pattern_db.clone(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

pub fn bob_voa_level(slot: u64, schedule: &VoaSchedule) -> f64 {
    match &schedule.mode {
        VoaMode::Fixed { level_db } => *level_db,
        VoaMode::IidUniform { levels_db } => {
            levels_db[schedule.stream.at(slot).random_range(0..levels_db.len())]
        }
        VoaMode::FrequencyScan { pattern_db, phase } => {
            pattern_db[((slot as usize).wrapping_add(*phase)) % pattern_db.len()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    None,
    Bit0,
    Bit1,
    /// Both detectors of one arm.
    Double,
    /// More than one arm, or more than two detectors.
    Multi,
}

impl OutcomeKind {
    pub fn label(self) -> &'static str {
        match self {
            OutcomeKind::None => "none",
            OutcomeKind::Bit0 => "bit0",
            OutcomeKind::Bit1 => "bit1",
            OutcomeKind::Double => "double",
            OutcomeKind::Multi => "multi",
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            OutcomeKind::Bit0 => Some(false),
            OutcomeKind::Bit1 => Some(true),
            _ => None,
        }
    }

    pub fn is_coincidence(self) -> bool {
        matches!(self, OutcomeKind::Double | OutcomeKind::Multi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickOutcome {
    pub kind: OutcomeKind,
    /// Bit i set when detector i clicked inside the window.
    pub detector_mask: u8,
    /// Earliest in-window click, ns after the slot start.
    pub time_ns: Option<u64>,
    /// Basis Bob measured in: his choice on the two-detector station, the
    /// clicking arm on the four-detector one.
    pub basis: Option<Basis>,
}

impl ClickOutcome {
    pub fn none(basis: Option<Basis>) -> Self {
        ClickOutcome {
            kind: OutcomeKind::None,
            detector_mask: 0,
            time_ns: None,
            basis,
        }
    }

    pub fn detector_names(&self, topology: StationTopology) -> String {
        let names: Vec<&str> = topology
            .ports()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.detector_mask & (1 << i) != 0)
            .map(|(_, p)| p.name)
            .collect();
        names.join("+")
    }
}

/// Sorts the in-window detector set into an outcome.
pub fn classify(
    topology: StationTopology,
    chosen_basis: Option<Basis>,
    mask: u8,
    time_ns: Option<u64>,
) -> ClickOutcome {
    let ports = topology.ports();
    let n = mask.count_ones();
    let (kind, basis) = match n {
        0 => (OutcomeKind::None, chosen_basis),
        1 => {
            let port = &ports[mask.trailing_zeros() as usize];
            let kind = if port.bit {
                OutcomeKind::Bit1
            } else {
                OutcomeKind::Bit0
            };
            (kind, port.arm.or(chosen_basis))
        }
        2 if topology
            .arm_pairs()
            .iter()
            .any(|&(a, b)| mask == (1 << a) | (1 << b)) =>
        {
            let first = &ports[mask.trailing_zeros() as usize];
            (OutcomeKind::Double, first.arm.or(chosen_basis))
        }
        _ => (
            OutcomeKind::Multi,
            chosen_basis.filter(|_| ports[0].arm.is_none()),
        ),
    };
    ClickOutcome {
        kind,
        detector_mask: mask,
        time_ns,
        basis,
    }
}

/// Bob's detectors, stepped continuously through every slot.
#[derive(Debug, Clone)]
pub struct DetectorBank {
    topology: StationTopology,
    units: Vec<DetectorUnit>,
    timebase: TimeBase,
    period: SimTime,
    pulse_offset: SimTime,
    window_ns: u64,
    pieces: Vec<OpticalSegment>,
    powers: Vec<f64>,
    clicks: Vec<u64>,
    energy: Vec<f64>,
}

impl DetectorBank {
    pub fn new(
        topology: StationTopology,
        params: Vec<DetectorParams>,
        timebase: TimeBase,
        period: SimTime,
        pulse_offset: SimTime,
        window_ns: u64,
    ) -> Self {
        let n = topology.detector_count();
        assert_eq!(params.len(), n, "one parameter block per detector");
        let units = topology
            .ports()
            .iter()
            .zip(params)
            .map(|(port, p)| DetectorUnit::new(port.name, p))
            .collect();
        DetectorBank {
            topology,
            units,
            timebase,
            period,
            pulse_offset,
            window_ns,
            pieces: Vec::new(),
            powers: vec![0.0; n],
            clicks: Vec::new(),
            energy: vec![0.0; n],
        }
    }

    pub fn topology(&self) -> StationTopology {
        self.topology
    }

    pub fn units(&self) -> &[DetectorUnit] {
        &self.units
    }

    pub fn clock(&self, slot: u64) -> SlotClock {
        SlotClock::for_slot(
            slot,
            self.timebase.to_ns(self.period),
            self.timebase.to_ns(self.pulse_offset),
        )
    }

    /// Runs one slot: attenuate, split, step every detector across the whole
    /// slot, then classify the clicks inside the detection window.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        slot: u64,
        incoming: &Waveform,
        bob_basis: Basis,
        chosen_basis: Option<Basis>,
        voa_db: f64,
        rng: &mut R,
    ) -> ClickOutcome {
        let attenuated = apply_attenuation(incoming, voa_db);
        self.pieces.clear();
        let mut cursor = SimTime::ZERO;
        for seg in attenuated.segments() {
            if seg.start > cursor {
                self.pieces.push(OpticalSegment::classical(
                    cursor,
                    seg.start - cursor,
                    0.0,
                    Polarization::unpolarized(),
                ));
            }
            self.pieces.push(*seg);
            cursor = seg.end();
        }
        if cursor < self.period {
            self.pieces.push(OpticalSegment::classical(
                cursor,
                self.period - cursor,
                0.0,
                Polarization::unpolarized(),
            ));
        }

        let clock = self.clock(slot);
        let probe = clock.pulse_ns();
        let win_lo = probe;
        let win_hi = probe + self.window_ns;
        let tick = self.timebase.tick_ns();
        let mut mask = 0u8;
        let mut first: Option<u64> = None;
        self.energy.iter_mut().for_each(|e| *e = 0.0);

        for d in 0..self.units.len() {
            self.clicks.clear();
            for piece in &self.pieces {
                self.topology.distribute(piece, bob_basis, &mut self.powers);
                let stim = Stimulus {
                    start_ns: clock.slot_start_ns + piece.start.ticks() * tick,
                    duration_ns: piece.duration.ticks() * tick,
                    power: self.powers[d],
                    quantum: piece.quantum,
                };
                if !piece.quantum {
                    self.energy[d] += stim.power * stim.duration_ns as f64;
                }
                self.units[d].step(&stim, &clock, probe, rng, &mut self.clicks);
            }
            if let Some(&t) = self
                .clicks
                .iter()
                .filter(|&&t| (win_lo..win_hi).contains(&t))
                .min()
            {
                mask |= 1 << d;
                first = Some(first.map_or(t, |f: u64| f.min(t)));
            }
            let avg = self.energy[d] / clock.period_ns as f64;
            self.units[d].end_slot(avg, &clock);
        }
        classify(
            self.topology,
            chosen_basis,
            mask,
            first.map(|t| t - clock.slot_start_ns),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedBit {
    pub slot: u64,
    pub alice_bit: bool,
    pub bob_bit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiftedKey {
    pub bits: Vec<SiftedBit>,
    pub basis_mismatch: u64,
    pub coincidences: u64,
}

/// Keeps the slot iff bases match and Bob registered a single bit.
pub fn sifted_append(
    key: &mut SiftedKey,
    slot: u64,
    alice_bit: bool,
    alice_basis: Basis,
    outcome: &ClickOutcome,
) -> bool {
    if outcome.kind.is_coincidence() {
        key.coincidences += 1;
        return false;
    }
    let Some(bob_bit) = outcome.kind.bit() else {
        return false;
    };
    if outcome.basis != Some(alice_basis) {
        key.basis_mismatch += 1;
        return false;
    }
    key.bits.push(SiftedBit {
        slot,
        alice_bit,
        bob_bit,
    });
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{ActiveQuenchParams, PassiveQuenchParams};
    use crate::optics::BasisMechanism;
    use crate::rng::StreamId;

    fn bank(mech: BasisMechanism, eta: f64) -> DetectorBank {
        let topo = StationTopology::new(mech);
        let p = ActiveQuenchParams {
            efficiency: eta,
            ..Default::default()
        };
        DetectorBank::new(
            topo,
            vec![DetectorParams::Active(p); topo.detector_count()],
            TimeBase::default(),
            SimTime(1000),
            SimTime(500),
            20,
        )
    }

    #[test]
    fn alice_examples() {
        let b = RngStream::new(3, StreamId::AliceBits);
        let s = RngStream::new(3, StreamId::AliceBasis);
        let p = AliceParams {
            mean_photon_number: 0.1,
            channel_loss_db: 0.0,
        };
        assert_eq!(alice_emit(0, &p, &b, &s).mu, 0.1);
        let p10 = AliceParams {
            channel_loss_db: 10.0,
            ..p
        };
        assert!((alice_emit(0, &p10, &b, &s).mu - 0.01).abs() < 1e-15);
        let n = 100_000u64;
        let (mut ones, mut diag) = (0u64, 0u64);
        for i in 0..n {
            let e = alice_emit(i, &p, &b, &s);
            ones += e.bit as u64;
            diag += (e.basis == Basis::Diagonal) as u64;
        }
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
        assert!((diag as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn voa_examples() {
        let st = RngStream::new(9, StreamId::BobVoa);
        let fixed = VoaSchedule::new(VoaMode::Fixed { level_db: 0.0 }, st);
        assert!((0..100).all(|i| bob_voa_level(i, &fixed) == 0.0));
        let scan = VoaSchedule::new(
            VoaMode::FrequencyScan {
                pattern_db: vec![0.0, 30.0],
                phase: 1,
            },
            st,
        );
        assert_eq!(bob_voa_level(0, &scan), 30.0);
        assert_eq!(bob_voa_level(1, &scan), 0.0);
        let levels = vec![0.0, 10.0, 20.0, 30.0];
        let iid = VoaSchedule::new(
            VoaMode::IidUniform {
                levels_db: levels.clone(),
            },
            st,
        );
        let n = 100_000u64;
        let mut counts = [0u64; 4];
        for i in 0..n {
            let l = bob_voa_level(i, &iid);
            counts[levels.iter().position(|&x| x == l).unwrap()] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn classification_partition() {
        let two = StationTopology::new(BasisMechanism::ActiveTwoDetector);
        let four = StationTopology::new(BasisMechanism::PassiveFourDetector);
        let r = Some(Basis::Rectilinear);
        assert_eq!(classify(two, r, 0, None).kind, OutcomeKind::None);
        assert_eq!(classify(two, r, 0b01, Some(3)).kind, OutcomeKind::Bit0);
        assert_eq!(classify(two, r, 0b10, Some(3)).kind, OutcomeKind::Bit1);
        assert_eq!(classify(two, r, 0b11, Some(3)).kind, OutcomeKind::Double);
        let o = classify(four, None, 0b1000, Some(1));
        assert_eq!(
            (o.kind, o.basis),
            (OutcomeKind::Bit1, Some(Basis::Diagonal))
        );
        assert_eq!(
            classify(four, None, 0b1100, Some(1)).kind,
            OutcomeKind::Double
        );
        assert_eq!(
            classify(four, None, 0b0101, Some(1)).kind,
            OutcomeKind::Multi
        );
        assert_eq!(
            classify(four, None, 0b0111, Some(1)).kind,
            OutcomeKind::Multi
        );
        assert_eq!(
            classify(four, None, 0b0101, Some(1)).detector_names(four),
            "D0_R+D0_D"
        );
    }

    #[test]
    fn vacuum_gives_none() {
        let mut b = bank(BasisMechanism::PassiveFourDetector, 0.5);
        let mut rng = RngStream::new(1, StreamId::DetectorNoise).at(0);
        for slot in 0..100 {
            let o = b.measure(
                slot,
                &Waveform::empty(),
                Basis::Rectilinear,
                None,
                0.0,
                &mut rng,
            );
            assert_eq!(o.kind, OutcomeKind::None);
        }
    }

    #[test]
    fn matched_single_photon_rate() {
        let mut b = bank(BasisMechanism::ActiveTwoDetector, 1.0);
        let noise = RngStream::new(2, StreamId::DetectorNoise);
        let mu = 0.05;
        let pulse = Waveform::from_ordered(vec![OpticalSegment::quantum(
            SimTime(500),
            SimTime(1),
            mu,
            Polarization::h(),
        )]);
        let n = 100_000u64;
        let mut correct = 0u64;
        for slot in 0..n {
            let o = b.measure(
                slot,
                &pulse,
                Basis::Rectilinear,
                Some(Basis::Rectilinear),
                0.0,
                &mut noise.at(slot),
            );
            assert_ne!(o.kind, OutcomeKind::Bit1);
            correct += (o.kind == OutcomeKind::Bit0) as u64;
        }
        let p = -(-mu).exp_m1();
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((correct as f64 - n as f64 * p).abs() < 3.0 * sd);
    }

    #[test]
    fn passive_bank_rearms_across_slots() {
        let topo = StationTopology::new(BasisMechanism::ActiveTwoDetector);
        let mut b = DetectorBank::new(
            topo,
            vec![DetectorParams::Passive(PassiveQuenchParams::default()); 2],
            TimeBase::default(),
            SimTime(10_000),
            SimTime(5000),
            20,
        );
        let cw = Waveform::from_ordered(vec![OpticalSegment::classical(
            SimTime(0),
            SimTime(10_000),
            4e-7,
            Polarization::unpolarized(),
        )]);
        let mut rng = RngStream::new(1, StreamId::DetectorNoise).at(0);
        for slot in 0..50 {
            let o = b.measure(
                slot,
                &cw,
                Basis::Rectilinear,
                Some(Basis::Rectilinear),
                0.0,
                &mut rng,
            );
            assert_eq!(o.kind, OutcomeKind::None);
        }
        assert_eq!(b.units()[0].raw_clicks(), 1);
    }

    #[test]
    fn sifting_rules() {
        let mut key = SiftedKey::default();
        let two = StationTopology::new(BasisMechanism::ActiveTwoDetector);
        let bit0 = classify(two, Some(Basis::Rectilinear), 0b01, Some(0));
        assert!(!sifted_append(&mut key, 0, false, Basis::Diagonal, &bit0));
        let dbl = classify(two, Some(Basis::Rectilinear), 0b11, Some(0));
        assert!(!sifted_append(&mut key, 1, false, Basis::Rectilinear, &dbl));
        assert_eq!(key.coincidences, 1);
        assert!(sifted_append(&mut key, 2, false, Basis::Rectilinear, &bit0));
        assert_eq!(
            key.bits,
            vec![SiftedBit {
                slot: 2,
                alice_bit: false,
                bob_bit: false
            }]
        );
    }
}

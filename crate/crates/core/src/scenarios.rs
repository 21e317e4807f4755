//! Scripted recordings with ground truth: a single-body script builder, the
//! three worked decoding examples, per-class samples for labeled corpora and
//! randomized segmentation cases.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ethogram::{ClassId, Node};
use crate::sim::{
    build_activity_profile_with, ActivityKind, Direction, Kinematics, MicroMotion, RadarParams,
    ScattererTrack, Scenario, TruthInterval, TruthLabel,
};

/// Complex noise std giving roughly 10 dB per-sample SNR for a unit body.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.3;

/// Builds one body track by concatenating activities in time order.
#[derive(Debug, Clone)]
pub struct Script {
    kin: Kinematics,
    t: f64,
    range: f64,
    breakpoints: Vec<(f64, f64)>,
    micro_motion: Vec<MicroMotion>,
    truth: Vec<TruthInterval>,
}

impl Script {
    pub fn new(start_range: f64, kin: Kinematics) -> Self {
        Self {
            kin,
            t: 0.0,
            range: start_range,
            breakpoints: vec![(0.0, start_range)],
            micro_motion: Vec::new(),
            truth: Vec::new(),
        }
    }

    /// Current script time (s).
    pub fn time(&self) -> f64 {
        self.t
    }

    /// Current body range (m).
    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn truth(&self) -> &[TruthInterval] {
        &self.truth
    }

    /// Appends an unlabeled activity.
    pub fn then(
        &mut self,
        kind: ActivityKind,
        duration: f64,
        direction: Direction,
    ) -> Result<&mut Self> {
        let track =
            build_activity_profile_with(kind, self.t, duration, self.range, direction, &self.kin)?;
        for &(t, r) in &track.breakpoints {
            if t < self.t - 1e-12 {
                continue;
            }
            match self.breakpoints.last() {
                Some(&(last, _)) if t <= last + 1e-12 => {}
                _ => self.breakpoints.push((t, r)),
            }
        }
        self.range = track.final_range();
        self.micro_motion.extend(track.micro_motion);
        self.t += duration;
        Ok(self)
    }

    pub fn idle(&mut self, duration: f64) -> Result<&mut Self> {
        self.then(ActivityKind::Idle, duration, Direction::Toward)
    }

    /// Walking labeled with its direction.
    pub fn walk(&mut self, duration: f64, direction: Direction) -> Result<&mut Self> {
        let label = match direction {
            Direction::Toward => TruthLabel::WalkToward,
            Direction::Away => TruthLabel::WalkAway,
        };
        self.labeled(ActivityKind::Walk, duration, direction, label, 0.0)
    }

    /// Appends an activity whose truth interval starts `lead` seconds before
    /// the activity itself; the previous truth interval is trimmed to make
    /// room. Merged classes use a lead to cover the end of the walk.
    pub fn labeled(
        &mut self,
        kind: ActivityKind,
        duration: f64,
        direction: Direction,
        label: TruthLabel,
        lead: f64,
    ) -> Result<&mut Self> {
        let onset = (self.t - lead.max(0.0)).max(0.0);
        let offset = self.t + duration;
        self.then(kind, duration, direction)?;
        if let Some(prev) = self.truth.last_mut() {
            if prev.offset > onset {
                prev.offset = onset;
            }
        }
        self.truth.retain(|iv| iv.offset > iv.onset);
        self.truth.push(TruthInterval {
            label,
            onset,
            offset,
        });
        Ok(self)
    }

    pub fn class(
        &mut self,
        kind: ActivityKind,
        duration: f64,
        direction: Direction,
        class: ClassId,
    ) -> Result<&mut Self> {
        self.labeled(kind, duration, direction, TruthLabel::Class(class), 0.0)
    }

    /// Finishes the recording at `total` seconds, holding the final range.
    pub fn build(&self, total: f64, noise_sigma: f64) -> Result<Scenario> {
        if total < self.t - 1e-9 {
            return Err(Error::InvalidScenario(format!(
                "script runs {:.3} s but the recording is only {total:.3} s",
                self.t
            )));
        }
        let params = RadarParams::for_duration(total);
        let mut breakpoints = self.breakpoints.clone();
        let end = params.duration();
        if let Some(&(last, r)) = breakpoints.last() {
            if end > last + 1e-12 {
                breakpoints.push((end, r));
            }
        }
        let track = ScattererTrack {
            breakpoints,
            rcs: self.kin.body_rcs,
            label: "body".into(),
            micro_motion: self.micro_motion.clone(),
        };
        let scenario = Scenario {
            params,
            tracks: vec![track],
            noise_sigma,
            truth: self.truth.clone(),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Nominal duration of an in-place activity (s).
pub fn nominal_duration(kind: ActivityKind) -> f64 {
    match kind {
        ActivityKind::SitDown => 2.7,
        ActivityKind::StandUp => 2.8,
        ActivityKind::BendStanding | ActivityKind::BendSitting => 2.0,
        ActivityKind::Fall => 1.5,
        ActivityKind::Recover => 4.2,
        ActivityKind::StartWalk | ActivityKind::StandUpWalk => 3.0,
        ActivityKind::Idle | ActivityKind::Walk => 1.0,
    }
}

/// Truth lead of merged entry classes: the last second of walking.
const ENTRY_LEAD: f64 = 1.0;

/// The three worked decoding examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Walk, fall, lie, stand up, start walking.
    One,
    /// Example one with a sit/stand cycle and a turn before walking away.
    Two,
    /// Walk away, stop, bend, turn, sit, bend while sitting, stand and walk.
    Three,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::One, Example::Two, Example::Three];

    pub fn number(self) -> usize {
        match self {
            Example::One => 1,
            Example::Two => 2,
            Example::Three => 3,
        }
    }

    pub fn scenario(self, kin: &Kinematics, noise_sigma: f64) -> Result<Scenario> {
        use ActivityKind::*;
        use ClassId::*;
        use Direction::{Away, Toward};
        let lead = ENTRY_LEAD;
        let mut s;
        let total = match self {
            Example::One => {
                // about 8 s of walking toward in total
                s = Script::new(2.5 + 8.0 * kin.walk_speed, *kin);
                s.walk(5.0, Toward)?
                    .labeled(Fall, 1.5, Toward, TruthLabel::Class(II), lead)?
                    .idle(6.0)?
                    .class(Recover, 4.2, Toward, X)?
                    .idle(3.8)?
                    .class(StartWalk, 3.0, Toward, XV)?
                    .walk(1.5, Toward)?;
                25.0
            }
            Example::Two => {
                s = Script::new(10.0, *kin);
                s.walk(5.0, Toward)?
                    .labeled(Fall, 1.5, Toward, TruthLabel::Class(II), lead)?
                    .idle(6.0)?
                    .class(Recover, 4.2, Toward, X)?
                    .idle(3.4)?
                    .class(SitDown, 3.3, Toward, V)?
                    .idle(3.6)?
                    .class(StandUp, 2.8, Toward, XII)?
                    .idle(2.3)?
                    .walk(3.9, Away)?;
                36.0
            }
            Example::Three => {
                s = Script::new(3.0, *kin);
                s.walk(3.0, Away)?
                    .labeled(Idle, 1.5, Away, TruthLabel::Class(III), lead)?
                    .idle(1.0)?
                    .class(BendStanding, 2.0, Away, VII)?
                    .idle(1.5)?
                    .class(SitDown, 2.7, Toward, V)?
                    .idle(1.3)?
                    .class(BendSitting, 2.0, Toward, XIII)?
                    .idle(1.5)?
                    .class(StandUpWalk, 3.0, Toward, XIV)?
                    .walk(1.5, Toward)?;
                21.0
            }
        };
        s.build(total, noise_sigma)
    }

    /// State trace a correct decode visits.
    pub fn expected_trace(self) -> Vec<Node> {
        match self {
            Example::One => vec![Node::WS_T, Node::LS_T, Node::STS_T, Node::WS_T],
            Example::Two => vec![
                Node::WS_T,
                Node::LS_T,
                Node::STS_T,
                Node::SIS,
                Node::STS_T,
                Node::WS_A,
            ],
            Example::Three => vec![
                Node::WS_A,
                Node::STS_A,
                Node::STS_A,
                Node::SIS,
                Node::SIS,
                Node::WS_T,
            ],
        }
    }

    /// Event labels of a correct decode in time order; the final exit of
    /// example two is unclassified.
    pub fn expected_labels(self) -> Vec<Option<ClassId>> {
        use ClassId::*;
        match self {
            Example::One => vec![Some(II), Some(X), Some(XV)],
            Example::Two => vec![Some(II), Some(X), Some(V), Some(XII), None],
            Example::Three => vec![Some(III), Some(VII), Some(V), Some(XIII), Some(XIV)],
        }
    }
}

/// Label of the class interval overlapping `window` the most.
pub fn truth_class(truth: &[TruthInterval], window: (f64, f64)) -> Option<ClassId> {
    let mut best = (None, 0.0);
    for iv in truth {
        if let TruthLabel::Class(c) = iv.label {
            let ov = (iv.offset.min(window.1) - iv.onset.max(window.0)).max(0.0);
            if ov > best.1 {
                best = (Some(c), ov);
            }
        }
    }
    best.0
}

/// Subject-to-subject variation around the default kinematics.
pub fn jitter_kinematics<R: Rng + ?Sized>(rng: &mut R) -> Kinematics {
    Kinematics {
        walk_speed: rng.random_range(0.8..1.2),
        peak_scale: rng.random_range(0.85..1.15),
        limb_scale: rng.random_range(0.85..1.15),
        limb_amplitude: rng.random_range(0.12..0.18),
        limb_frequency: rng.random_range(1.7..2.3),
        ..Kinematics::default()
    }
}

/// Activity, facing direction and whether the class is a merged entry
/// (walk then stop/fall) or exit (rise/start then walk).
fn class_template(class: ClassId) -> (ActivityKind, Direction, Merge) {
    use ActivityKind::*;
    use ClassId::*;
    use Direction::{Away, Toward};
    match class {
        I => (Idle, Toward, Merge::Entry),
        II => (Fall, Toward, Merge::Entry),
        III => (Idle, Away, Merge::Entry),
        IV => (Fall, Away, Merge::Entry),
        V => (SitDown, Toward, Merge::None),
        VI => (BendStanding, Toward, Merge::None),
        VII => (BendStanding, Away, Merge::None),
        VIII => (Fall, Toward, Merge::None),
        IX => (Fall, Away, Merge::None),
        X => (Recover, Toward, Merge::None),
        XI => (Recover, Away, Merge::None),
        XII => (StandUp, Toward, Merge::None),
        XIII => (BendSitting, Toward, Merge::None),
        XIV => (StandUpWalk, Toward, Merge::Exit),
        XV => (StartWalk, Toward, Merge::Exit),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Merge {
    None,
    Entry,
    Exit,
}

/// One short labeled recording of `class` with randomized kinematics,
/// timing and range.
pub fn class_sample<R: Rng + ?Sized>(
    class: ClassId,
    rng: &mut R,
    noise_sigma: f64,
) -> Result<Scenario> {
    let kin = jitter_kinematics(rng);
    let (kind, dir, merge) = class_template(class);
    let stretch = |rng: &mut R| rng.random_range(0.85..1.15);
    let mut s;
    match merge {
        Merge::Entry => {
            let walk = 3.0 * stretch(rng);
            let travel = walk * kin.walk_speed;
            let start = match dir {
                Direction::Toward => rng.random_range(2.0..4.0) + travel,
                Direction::Away => rng.random_range(1.5..3.0),
            };
            s = Script::new(start, kin);
            s.walk(walk, dir)?;
            let d = if kind == ActivityKind::Idle {
                1.5
            } else {
                nominal_duration(kind) * stretch(rng)
            };
            s.labeled(kind, d, dir, TruthLabel::Class(class), ENTRY_LEAD)?;
        }
        Merge::Exit => {
            let idle = rng.random_range(1.8..2.4);
            let dur = nominal_duration(kind) * stretch(rng);
            // keep walking to the end so no stop follows the exit, and start
            // close enough that the whole motion stays in the summed bins
            let total = (idle + dur + 1.0).ceil();
            let rest = total - idle - dur;
            let travel = kin.walk_speed * (dur + rest);
            let start = match dir {
                Direction::Toward => rng.random_range(1.5..2.5) + travel,
                Direction::Away => rng.random_range(1.5..2.5),
            };
            s = Script::new(start, kin);
            s.idle(idle)?;
            s.class(kind, dur, dir, class)?;
            s.then(ActivityKind::Walk, rest, dir)?;
            return s.build(total, noise_sigma);
        }
        Merge::None => {
            s = Script::new(rng.random_range(3.0..6.0), kin);
            s.idle(rng.random_range(1.2..1.8))?;
            s.class(kind, nominal_duration(kind) * stretch(rng), dir, class)?;
        }
    }
    let total = (s.time() + 1.0).ceil();
    s.build(total, noise_sigma)
}

/// A walk that stops, for breakpoint localization; returns the scenario and
/// the true breakpoint time.
pub fn walk_stop_case<R: Rng + ?Sized>(rng: &mut R, noise_sigma: f64) -> Result<(Scenario, f64)> {
    let kin = Kinematics {
        walk_speed: rng.random_range(0.8..1.3),
        ..jitter_kinematics(rng)
    };
    let walk = rng.random_range(3.0..8.0);
    let dir = if rng.random_bool(0.5) {
        Direction::Toward
    } else {
        Direction::Away
    };
    let travel = walk * kin.walk_speed;
    let start = match dir {
        Direction::Toward => rng.random_range(1.5..3.0) + travel,
        Direction::Away => rng.random_range(1.5..3.0),
    };
    let mut s = Script::new(start, kin);
    s.walk(walk, dir)?;
    let rest = 12.0 - walk;
    if rest > 4.5 && rng.random_bool(0.5) {
        let gap = rng.random_range(1.0..1.5);
        let kind = [ActivityKind::BendStanding, ActivityKind::SitDown][rng.random_range(0..2)];
        let d = nominal_duration(kind).min(rest - gap - 0.5);
        s.idle(gap)?;
        s.then(kind, d, dir)?;
    }
    Ok((s.build(12.0, noise_sigma)?, walk))
}

/// A standing person performing one to three in-place activities separated
/// by idle gaps; returns the scenario and the activity intervals.
pub fn burst_case<R: Rng + ?Sized>(
    rng: &mut R,
    noise_sigma: f64,
) -> Result<(Scenario, Vec<(f64, f64)>)> {
    const KINDS: [ActivityKind; 6] = [
        ActivityKind::SitDown,
        ActivityKind::StandUp,
        ActivityKind::BendStanding,
        ActivityKind::BendSitting,
        ActivityKind::Fall,
        ActivityKind::Recover,
    ];
    const TOTAL: f64 = 12.0;
    let kin = jitter_kinematics(rng);
    let dir = if rng.random_bool(0.5) {
        Direction::Toward
    } else {
        Direction::Away
    };
    let mut s = Script::new(rng.random_range(2.0..7.0), kin);
    s.idle(rng.random_range(1.0..2.0))?;
    let wanted = rng.random_range(1..=3);
    let mut bursts = Vec::new();
    while bursts.len() < wanted {
        let kind = KINDS[rng.random_range(0..KINDS.len())];
        let d = nominal_duration(kind) * rng.random_range(0.85..1.15);
        if s.time() + d > TOTAL - 1.0 {
            break;
        }
        let onset = s.time();
        s.then(kind, d, dir)?;
        bursts.push((onset, onset + d));
        let gap = rng.random_range(1.5..2.5);
        if s.time() + gap > TOTAL {
            break;
        }
        s.idle(gap)?;
    }
    Ok((s.build(TOTAL, noise_sigma)?, bursts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn script_is_continuous_and_sorted() {
        let mut s = Script::new(5.0, Kinematics::default());
        s.walk(2.0, Direction::Toward).unwrap().idle(1.0).unwrap();
        s.class(ActivityKind::SitDown, 2.7, Direction::Toward, ClassId::V)
            .unwrap();
        let sc = s.build(7.0, 0.0).unwrap();
        let track = &sc.tracks[0];
        assert!((track.range_at(2.0) - 3.0).abs() < 1e-9);
        for w in track.breakpoints.windows(2) {
            assert!(w[1].0 > w[0].0);
            let speed = (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0);
            assert!(speed < 2.0, "jump at {:?}", w);
        }
        assert_eq!(sc.truth.len(), 2);
        assert_eq!(sc.truth[1].label, TruthLabel::Class(ClassId::V));
        assert_eq!(sc.params.m_slow, 7000);
    }

    #[test]
    fn lead_trims_previous_truth() {
        let mut s = Script::new(6.0, Kinematics::default());
        s.walk(3.0, Direction::Toward).unwrap();
        s.labeled(
            ActivityKind::Fall,
            1.5,
            Direction::Toward,
            TruthLabel::Class(ClassId::II),
            1.0,
        )
        .unwrap();
        let t = s.truth();
        assert_eq!((t[0].onset, t[0].offset), (0.0, 2.0));
        assert_eq!((t[1].onset, t[1].offset), (2.0, 4.5));
    }

    #[test]
    fn build_rejects_short_recordings() {
        let mut s = Script::new(4.0, Kinematics::default());
        s.idle(3.0).unwrap();
        assert!(s.build(2.0, 0.0).is_err());
    }

    #[test]
    fn examples_stay_in_view() {
        for ex in Example::ALL {
            let sc = ex
                .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
                .unwrap();
            let track = &sc.tracks[0];
            let (lo, hi) = track
                .breakpoints
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), b| {
                    (lo.min(b.1), hi.max(b.1))
                });
            assert!(
                lo > 1.0 && hi < 11.0,
                "example {} spans {lo:.2}..{hi:.2} m",
                ex.number()
            );
            let classes = sc
                .truth
                .iter()
                .filter(|t| matches!(t.label, TruthLabel::Class(_)))
                .count();
            let expected = ex.expected_labels().iter().flatten().count();
            assert_eq!(classes, expected);
        }
    }

    #[test]
    fn truth_class_picks_largest_overlap() {
        let truth = [
            TruthInterval {
                label: TruthLabel::WalkToward,
                onset: 0.0,
                offset: 4.0,
            },
            TruthInterval {
                label: TruthLabel::Class(ClassId::II),
                onset: 4.0,
                offset: 6.5,
            },
            TruthInterval {
                label: TruthLabel::Class(ClassId::X),
                onset: 7.0,
                offset: 9.0,
            },
        ];
        assert_eq!(truth_class(&truth, (3.0, 5.0)), Some(ClassId::II));
        assert_eq!(truth_class(&truth, (6.0, 9.0)), Some(ClassId::X));
        assert_eq!(truth_class(&truth, (0.0, 3.5)), None);
    }

    #[test]
    fn class_samples_carry_their_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for class in ClassId::ALL {
            let sc = class_sample(class, &mut rng, 0.0).unwrap();
            assert!(sc.truth.iter().any(|t| t.label == TruthLabel::Class(class)));
            let lo = sc.tracks[0]
                .breakpoints
                .iter()
                .map(|b| b.1)
                .fold(f64::INFINITY, f64::min);
            let hi = sc.tracks[0]
                .breakpoints
                .iter()
                .map(|b| b.1)
                .fold(0.0, f64::max);
            assert!(lo > 0.75 && hi < 9.6, "{class}: {lo:.2}..{hi:.2}");
        }
    }

    #[test]
    fn randomized_cases_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (sc, bp) = walk_stop_case(&mut rng, 0.1).unwrap();
            assert!((3.0..8.0).contains(&bp));
            assert_eq!(sc.params.m_slow, 12_000);
            let (sc, bursts) = burst_case(&mut rng, 0.1).unwrap();
            assert!(!bursts.is_empty() && bursts.len() <= 3);
            for w in bursts.windows(2) {
                assert!(w[1].0 - w[0].1 >= 1.5 - 1e-9);
            }
            sc.validate().unwrap();
        }
    }
}

//! Synthetic dechirped FMCW baseband data.
//!
//! A scenario is a set of point scatterers whose ranges follow piecewise
//! linear profiles in slow time. Each PRI `m` is synthesized directly in the
//! beat (dechirped) domain:
//!
//! ```text
//! s(n, m) = sum_k a_k * exp(j*2*pi*[ (2*alpha*R_k/c0) * n*Ts  -  2*fc*R_k/c0 ])
//! ```
//!
//! with `Ts = PRI/N`, so a scatterer at range `R` lands in range bin
//! `R / RR` after the fast-time DFT. Approaching scatterers yield positive
//! Doppler.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ShapeBuilder};
use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ethogram::ClassId;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_one() -> f64 {
    1.0
}

/// FMCW radar configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    /// Carrier frequency (Hz).
    pub fc: f64,
    /// Sweep bandwidth (Hz).
    #[serde(rename = "B")]
    pub bandwidth: f64,
    /// Pulse repetition interval (s).
    #[serde(rename = "PRI")]
    pub pri: f64,
    /// Fast-time samples per PRI.
    #[serde(rename = "N")]
    pub n_fast: usize,
    /// Number of PRIs.
    #[serde(rename = "M")]
    pub m_slow: usize,
    #[serde(rename = "Gtx", default = "default_one")]
    pub gain: f64,
    #[serde(rename = "Ptx", default = "default_one")]
    pub tx_power: f64,
    #[serde(rename = "Ls", default = "default_one")]
    pub system_loss: f64,
    #[serde(rename = "La", default = "default_one")]
    pub atmospheric_loss: f64,
    /// Apply the radar-equation `1/R^2` amplitude falloff.
    #[serde(default)]
    pub range_falloff: bool,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            fc: 25.0e9,
            bandwidth: 2.0e9,
            pri: 1.0e-3,
            n_fast: 512,
            m_slow: 12_000,
            gain: 1.0,
            tx_power: 1.0,
            system_loss: 1.0,
            atmospheric_loss: 1.0,
            range_falloff: false,
        }
    }
}

impl RadarParams {
    /// Default hardware configuration covering `seconds` of slow time.
    pub fn for_duration(seconds: f64) -> Self {
        let mut params = Self::default();
        params.m_slow = (seconds / params.pri).round() as usize;
        params
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.fc) || !positive(self.bandwidth) || !positive(self.pri) {
            return Err(Error::InvalidParams(
                "fc, B and PRI must be finite and positive".into(),
            ));
        }
        if self.n_fast < 2 || self.m_slow < 1 {
            return Err(Error::InvalidParams(format!(
                "need N >= 2 and M >= 1, got N={} M={}",
                self.n_fast, self.m_slow
            )));
        }
        for (name, v) in [
            ("Gtx", self.gain),
            ("Ptx", self.tx_power),
            ("Ls", self.system_loss),
            ("La", self.atmospheric_loss),
        ] {
            if !positive(v) {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Range resolution `c0 / (2B)` in meters.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Chirp rate `B / PRI` (Hz/s).
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth / self.pri
    }

    /// Fast-time sample period `PRI / N`.
    pub fn sample_period(&self) -> f64 {
        self.pri / self.n_fast as f64
    }

    pub fn prf(&self) -> f64 {
        1.0 / self.pri
    }

    /// Recording span `M * PRI` in seconds.
    pub fn duration(&self) -> f64 {
        self.m_slow as f64 * self.pri
    }

    /// Doppler shift (Hz) of a target approaching at `velocity` m/s.
    pub fn doppler_for_velocity(&self, velocity: f64) -> f64 {
        2.0 * velocity * self.fc / SPEED_OF_LIGHT
    }

    /// Received amplitude for a scatterer of cross-section `rcs` at `range`.
    pub fn amplitude(&self, rcs: f64, range: f64) -> f64 {
        if !self.range_falloff {
            return rcs;
        }
        let num = self.gain * self.wavelength() * (self.tx_power * rcs).sqrt();
        let den = (4.0 * PI).powi(3).sqrt()
            * range.powi(2)
            * self.system_loss.sqrt()
            * self.atmospheric_loss.sqrt();
        num / den
    }
}

/// Sinusoidal range perturbation of an extra limb scatterer, active over a
/// time window with short raised-cosine fades at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroMotion {
    /// Peak range offset (m).
    pub amplitude: f64,
    /// Oscillation frequency (Hz).
    pub frequency: f64,
    pub start: f64,
    pub end: f64,
    /// Scattering amplitude of the limb scatterer.
    pub rcs: f64,
}

impl MicroMotion {
    const FADE: f64 = 0.1;

    fn envelope(&self, t: f64) -> f64 {
        if t < self.start || t > self.end {
            return 0.0;
        }
        let fade = Self::FADE.min(0.5 * (self.end - self.start));
        if fade <= 0.0 {
            return 1.0;
        }
        let edge = (t - self.start).min(self.end - t);
        if edge >= fade {
            1.0
        } else {
            0.5 - 0.5 * (PI * edge / fade).cos()
        }
    }

    fn offset(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * (t - self.start)).sin()
    }
}

/// A point scatterer (one body) moving along a piecewise-linear range
/// profile, optionally carrying limb micro-motion scatterers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererTrack {
    /// `(t, R)` pairs with strictly increasing `t`; the range is held
    /// constant outside the first/last breakpoint.
    pub breakpoints: Vec<(f64, f64)>,
    pub rcs: f64,
    pub label: String,
    #[serde(default)]
    pub micro_motion: Vec<MicroMotion>,
}

impl ScattererTrack {
    pub fn stationary(range: f64, rcs: f64, duration: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, range), (duration, range)],
            rcs,
            label: "stationary".into(),
            micro_motion: Vec::new(),
        }
    }

    /// Constant radial velocity; positive `velocity` approaches the radar.
    pub fn constant_velocity(start_range: f64, velocity: f64, rcs: f64, duration: f64) -> Self {
        Self {
            breakpoints: vec![
                (0.0, start_range),
                (duration, start_range - velocity * duration),
            ],
            rcs,
            label: "constant-velocity".into(),
            micro_motion: Vec::new(),
        }
    }

    pub fn range_at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        match bp.len() {
            0 => f64::NAN,
            1 => bp[0].1,
            _ => {
                if t <= bp[0].0 {
                    return bp[0].1;
                }
                let last = bp[bp.len() - 1];
                if t >= last.0 {
                    return last.1;
                }
                let i = bp.partition_point(|&(bt, _)| bt <= t);
                let (t0, r0) = bp[i - 1];
                let (t1, r1) = bp[i];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn start_time(&self) -> f64 {
        self.breakpoints.first().map_or(0.0, |b| b.0)
    }

    pub fn end_time(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.0)
    }

    pub fn final_range(&self) -> f64 {
        self.breakpoints.last().map_or(f64::NAN, |b| b.1)
    }

    /// Extends the profile at its final range up to time `t`.
    pub fn hold_until(&mut self, t: f64) {
        if let Some(&(last_t, last_r)) = self.breakpoints.last() {
            if t > last_t {
                self.breakpoints.push((t, last_r));
            }
        }
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::InvalidScenario(format!(
                "track `{}` has no breakpoints",
                self.label
            )));
        }
        if !(self.rcs.is_finite() && self.rcs >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "track `{}` has invalid rcs",
                self.label
            )));
        }
        for w in self.breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidScenario(format!(
                    "track `{}` breakpoint times are not strictly increasing",
                    self.label
                )));
            }
        }
        if self
            .breakpoints
            .iter()
            .any(|&(t, r)| !t.is_finite() || !(r > 0.0) || !r.is_finite())
        {
            return Err(Error::InvalidScenario(format!(
                "track `{}` has a non-positive or non-finite range",
                self.label
            )));
        }
        if self.start_time() > 1e-9 || self.end_time() < duration - 1e-9 {
            return Err(Error::InvalidScenario(format!(
                "track `{}` covers [{:.3}, {:.3}] s but the recording spans [0, {:.3}] s",
                self.label,
                self.start_time(),
                self.end_time(),
                duration
            )));
        }
        for mm in &self.micro_motion {
            let lowest = self
                .breakpoints
                .iter()
                .map(|b| b.1)
                .fold(f64::INFINITY, f64::min);
            if !(mm.end > mm.start) || mm.rcs < 0.0 || lowest - mm.amplitude.abs() <= 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "track `{}` has an invalid micro-motion window",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth activity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TruthLabel {
    Class(ClassId),
    WalkToward,
    WalkAway,
}

impl fmt::Display for TruthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthLabel::Class(c) => write!(f, "{c}"),
            TruthLabel::WalkToward => f.write_str("walk_toward"),
            TruthLabel::WalkAway => f.write_str("walk_away"),
        }
    }
}

impl FromStr for TruthLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk_toward" => Ok(TruthLabel::WalkToward),
            "walk_away" => Ok(TruthLabel::WalkAway),
            other => other.parse().map(TruthLabel::Class),
        }
    }
}

impl Serialize for TruthLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TruthLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub label: TruthLabel,
    pub onset: f64,
    pub offset: f64,
}

/// A complete synthetic recording description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: RadarParams,
    pub tracks: Vec<ScattererTrack>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub truth: Vec<TruthInterval>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidScenario("noise_sigma must be >= 0".into()));
        }
        let duration = self.params.duration();
        for track in &self.tracks {
            track.validate(duration)?;
        }
        for w in self.truth.windows(2) {
            if w[1].onset < w[0].offset - 1e-9 {
                return Err(Error::InvalidScenario(
                    "truth intervals must be sorted and non-overlapping".into(),
                ));
            }
        }
        if self.truth.iter().any(|t| !(t.offset > t.onset)) {
            return Err(Error::InvalidScenario(
                "truth interval with offset <= onset".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Complex dechirped samples, `N` fast-time rows by `M` slow-time columns,
/// stored column-major so each PRI is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandMatrix {
    pub data: Array2<Complex32>,
    pub params: RadarParams,
}

impl BasebandMatrix {
    pub fn zeros(params: RadarParams) -> Self {
        let data = Array2::zeros((params.n_fast, params.m_slow).f());
        Self { data, params }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.data.dim() != (self.params.n_fast, self.params.m_slow) {
            return Err(Error::ShapeMismatch(format!(
                "baseband is {:?} but params say {}x{}",
                self.data.dim(),
                self.params.n_fast,
                self.params.m_slow
            )));
        }
        Ok(())
    }
}

/// Adds one scatterer's beat tone to a fast-time column.
fn accumulate_tone(column: &mut [Complex64], amplitude: f64, range: f64, params: &RadarParams) {
    if amplitude == 0.0 {
        return;
    }
    let n = column.len() as f64;
    let beat_cycles = range / params.range_resolution();
    let step = Complex64::from_polar(1.0, 2.0 * PI * beat_cycles / n);
    let carrier = -2.0 * PI * 2.0 * params.fc * range / SPEED_OF_LIGHT;
    let mut z = Complex64::from_polar(amplitude, carrier.rem_euclid(2.0 * PI));
    for sample in column.iter_mut() {
        *sample += z;
        z *= step;
    }
}

/// Synthesizes the baseband matrix for `scenario`. Noise for column `m`
/// is drawn from stream `m` of a ChaCha generator keyed by `seed`, so the
/// result is bit-identical for a fixed seed regardless of thread count.
pub fn synthesize_baseband(scenario: &Scenario, seed: u64) -> Result<BasebandMatrix> {
    scenario.validate()?;
    let params = &scenario.params;
    let n = params.n_fast;
    let m = params.m_slow;
    let sigma = scenario.noise_sigma / std::f64::consts::SQRT_2;
    let noise = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| Error::InvalidScenario(e.to_string()))?)
    } else {
        None
    };

    let mut buffer = vec![Complex32::new(0.0, 0.0); n * m];
    buffer.par_chunks_mut(n).enumerate().for_each(|(col, out)| {
        let t = col as f64 * params.pri;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for track in &scenario.tracks {
            let r = track.range_at(t);
            accumulate_tone(&mut acc, params.amplitude(track.rcs, r), r, params);
            for mm in &track.micro_motion {
                let env = mm.envelope(t);
                if env > 0.0 {
                    let rl = r + mm.offset(t);
                    accumulate_tone(&mut acc, env * params.amplitude(mm.rcs, rl), rl, params);
                }
            }
        }
        if let Some(dist) = &noise {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(col as u64);
            for v in acc.iter_mut() {
                v.re += dist.sample(&mut rng);
                v.im += dist.sample(&mut rng);
            }
        }
        for (o, v) in out.iter_mut().zip(acc) {
            *o = Complex32::new(v.re as f32, v.im as f32);
        }
    });

    let data = Array2::from_shape_vec((n, m).f(), buffer)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(BasebandMatrix {
        data,
        params: params.clone(),
    })
}

/// Radial direction of a motion relative to the radar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Toward,
    Away,
}

impl Direction {
    /// `+1` for toward (range decreasing), `-1` for away.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Toward => 1.0,
            Direction::Away => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Toward => Direction::Away,
            Direction::Away => Direction::Toward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Toward => "toward",
            Direction::Away => "away",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Direction::Toward),
            "away" => Ok(Direction::Away),
            other => Err(Error::Format(format!("unknown direction `{other}`"))),
        }
    }
}

/// Elementary kinematic building blocks for scripted scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    /// Standing, sitting or lying still.
    Idle,
    Walk,
    /// Walking that accelerates from rest.
    StartWalk,
    /// Rising from a seat while starting to walk.
    StandUpWalk,
    SitDown,
    StandUp,
    BendStanding,
    BendSitting,
    Fall,
    /// Standing up after a fall.
    Recover,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 10] = [
        ActivityKind::Idle,
        ActivityKind::Walk,
        ActivityKind::StartWalk,
        ActivityKind::StandUpWalk,
        ActivityKind::SitDown,
        ActivityKind::StandUp,
        ActivityKind::BendStanding,
        ActivityKind::BendSitting,
        ActivityKind::Fall,
        ActivityKind::Recover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivityKind::Idle => "idle",
            ActivityKind::Walk => "walk",
            ActivityKind::StartWalk => "start_walk",
            ActivityKind::StandUpWalk => "stand_walk",
            ActivityKind::SitDown => "sit",
            ActivityKind::StandUp => "stand",
            ActivityKind::BendStanding => "bend",
            ActivityKind::BendSitting => "bend_sitting",
            ActivityKind::Fall => "fall",
            ActivityKind::Recover => "recover",
        }
    }

    pub fn is_translation(self) -> bool {
        matches!(
            self,
            ActivityKind::Walk | ActivityKind::StartWalk | ActivityKind::StandUpWalk
        )
    }

    /// Velocity pulses `(center fraction, peak toward-speed m/s, sigma s)`
    /// plus limb `(amplitude m, frequency Hz, rcs fraction)` for in-place kinds,
    /// written for a subject facing the radar.
    fn template(self) -> Option<InPlaceTemplate> {
        let t = match self {
            ActivityKind::SitDown => InPlaceTemplate {
                pulses: &[(0.5, -0.5, 0.36)],
                limb: (0.05, 1.2, 0.6),
            },
            ActivityKind::StandUp => InPlaceTemplate {
                pulses: &[(0.5, 0.5, 0.36)],
                limb: (0.05, 1.6, 0.6),
            },
            ActivityKind::BendStanding => InPlaceTemplate {
                pulses: &[(0.3, 0.6, 0.24), (0.7, -0.6, 0.24)],
                limb: (0.04, 2.2, 0.6),
            },
            ActivityKind::BendSitting => InPlaceTemplate {
                pulses: &[(0.3, 0.3, 0.26), (0.7, -0.3, 0.26)],
                limb: (0.03, 0.8, 0.6),
            },
            ActivityKind::Fall => InPlaceTemplate {
                pulses: &[(0.45, 1.5, 0.17)],
                limb: (0.10, 3.0, 0.6),
            },
            ActivityKind::Recover => InPlaceTemplate {
                pulses: &[(0.25, -0.25, 0.22), (0.65, -0.7, 0.35)],
                limb: (0.06, 1.4, 0.6),
            },
            _ => return None,
        };
        Some(t)
    }
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownActivity(s.to_string()))
    }
}

struct InPlaceTemplate {
    pulses: &'static [(f64, f64, f64)],
    limb: (f64, f64, f64),
}

/// Calibration knobs for activity profiles. The defaults are simulator
/// choices, not measured human data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    /// Walking speed (m/s).
    pub walk_speed: f64,
    /// Time to reach walking speed for `StartWalk` (s).
    pub walk_accel_time: f64,
    /// Limb swing while walking.
    pub limb_amplitude: f64,
    pub limb_frequency: f64,
    /// Limb scatterer amplitude relative to the body.
    pub limb_rcs: f64,
    /// Multiplies every in-place velocity pulse peak.
    pub peak_scale: f64,
    /// Multiplies in-place limb amplitude and frequency.
    pub limb_scale: f64,
    pub body_rcs: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            walk_speed: 1.0,
            walk_accel_time: 1.2,
            limb_amplitude: 0.15,
            limb_frequency: 2.0,
            limb_rcs: 0.5,
            peak_scale: 1.0,
            limb_scale: 1.0,
            body_rcs: 1.0,
        }
    }
}

/// Rising pulse `(center s, peak toward-speed m/s, sigma s)` of `StandUpWalk`.
const STAND_WALK_RISE: (f64, f64, f64) = (0.6, 0.5, 0.25);

/// Profile sampling step for curved segments (s).
const PROFILE_STEP: f64 = 0.005;

/// Builds the body track for one activity with default kinematics.
pub fn build_activity_profile(
    kind: ActivityKind,
    start: f64,
    duration: f64,
    start_range: f64,
    direction: Direction,
) -> Result<ScattererTrack> {
    build_activity_profile_with(
        kind,
        start,
        duration,
        start_range,
        direction,
        &Kinematics::default(),
    )
}

/// Builds the body track for one activity over `[start, start + duration]`.
///
/// Walking ramps the range linearly at `walk_speed`; in-place kinds keep the
/// body near `start_range` and move it with kind-specific Gaussian velocity
/// pulses. If `start > 0` the profile is held at `start_range` from `t = 0`.
pub fn build_activity_profile_with(
    kind: ActivityKind,
    start: f64,
    duration: f64,
    start_range: f64,
    direction: Direction,
    kin: &Kinematics,
) -> Result<ScattererTrack> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidScenario(format!(
            "activity duration must be positive, got {duration}"
        )));
    }
    if !(start >= 0.0) || !(start_range > 0.0) {
        return Err(Error::InvalidScenario(
            "activity needs start >= 0 and a positive start range".into(),
        ));
    }
    let sign = direction.sign();
    let end = start + duration;
    let mut breakpoints = Vec::new();
    if start > 0.0 {
        breakpoints.push((0.0, start_range));
    }
    let mut micro_motion = Vec::new();

    match kind {
        ActivityKind::Idle => {
            breakpoints.push((start, start_range));
            breakpoints.push((end, start_range));
        }
        ActivityKind::Walk => {
            breakpoints.push((start, start_range));
            breakpoints.push((end, start_range - sign * kin.walk_speed * duration));
            micro_motion.push(MicroMotion {
                amplitude: kin.limb_amplitude,
                frequency: kin.limb_frequency,
                start,
                end,
                rcs: kin.limb_rcs * kin.body_rcs,
            });
        }
        ActivityKind::StartWalk | ActivityKind::StandUpWalk => {
            let accel = kin.walk_accel_time.min(duration);
            let rising = kind == ActivityKind::StandUpWalk;
            let speed = |tau: f64| {
                let walk = if accel > 0.0 && tau < accel {
                    // smoothstep ramp from rest to walking speed
                    let x = tau / accel;
                    kin.walk_speed * x * x * (3.0 - 2.0 * x)
                } else {
                    kin.walk_speed
                };
                let rise = if rising {
                    let x = (tau - STAND_WALK_RISE.0) / STAND_WALK_RISE.2;
                    STAND_WALK_RISE.1 * kin.peak_scale * (-0.5 * x * x).exp()
                } else {
                    0.0
                };
                walk + rise
            };
            sample_profile(&mut breakpoints, start, duration, start_range, |tau| {
                sign * speed(tau)
            });
            if rising {
                micro_motion.push(MicroMotion {
                    amplitude: 0.05 * kin.limb_scale,
                    frequency: 1.6 * kin.limb_scale,
                    start,
                    end: start + (2.0 * STAND_WALK_RISE.0).min(duration),
                    rcs: 0.6 * kin.body_rcs,
                });
            }
            micro_motion.push(MicroMotion {
                amplitude: kin.limb_amplitude,
                frequency: kin.limb_frequency,
                start,
                end,
                rcs: kin.limb_rcs * kin.body_rcs,
            });
        }
        _ => {
            let template = kind
                .template()
                .ok_or_else(|| Error::UnknownActivity(kind.to_string()))?;
            let velocity = |tau: f64| {
                template
                    .pulses
                    .iter()
                    .map(|&(c, peak, s)| {
                        let sigma = s;
                        let x = (tau - c * duration) / sigma;
                        peak * kin.peak_scale * (-0.5 * x * x).exp()
                    })
                    .sum::<f64>()
                    * sign
            };
            sample_profile(&mut breakpoints, start, duration, start_range, velocity);
            let (amp, freq, rcs) = template.limb;
            micro_motion.push(MicroMotion {
                amplitude: amp * kin.limb_scale,
                frequency: freq * kin.limb_scale,
                start,
                end,
                rcs: rcs * kin.body_rcs,
            });
        }
    }

    Ok(ScattererTrack {
        breakpoints,
        rcs: kin.body_rcs,
        label: kind.name().into(),
        micro_motion,
    })
}

/// Integrates a toward-velocity profile into range breakpoints.
fn sample_profile(
    breakpoints: &mut Vec<(f64, f64)>,
    start: f64,
    duration: f64,
    start_range: f64,
    toward_velocity: impl Fn(f64) -> f64,
) {
    let steps = ((duration / PROFILE_STEP).ceil() as usize).max(1);
    let dt = duration / steps as f64;
    let mut range = start_range;
    let mut prev_v = toward_velocity(0.0);
    breakpoints.push((start, range));
    for i in 1..=steps {
        let tau = i as f64 * dt;
        let v = toward_velocity(tau);
        range -= 0.5 * (prev_v + v) * dt;
        prev_v = v;
        breakpoints.push((start + tau, range));
    }
}

/// Peak radial speed (m/s) of a track estimated on its breakpoints.
pub fn peak_radial_speed(track: &ScattererTrack) -> f64 {
    track
        .breakpoints
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn short_params(m: usize) -> RadarParams {
        RadarParams {
            m_slow: m,
            ..RadarParams::default()
        }
    }

    fn one_track(track: ScattererTrack, m: usize, noise: f64) -> Scenario {
        Scenario {
            params: short_params(m),
            tracks: vec![track],
            noise_sigma: noise,
            truth: vec![],
        }
    }

    fn naive_dft_argmax(column: &[Complex32]) -> usize {
        let n = column.len();
        (0..n)
            .map(|p| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, v) in column.iter().enumerate() {
                    let ang = -2.0 * PI * (p * k) as f64 / n as f64;
                    acc +=
                        Complex64::new(v.re as f64, v.im as f64) * Complex64::from_polar(1.0, ang);
                }
                (p, acc.norm())
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn derived_quantities() {
        let p = RadarParams::default();
        assert!((p.range_resolution() - 0.075).abs() < 1e-4);
        assert!((p.chirp_rate() - 2.0e12).abs() < 1.0);
        assert!((p.wavelength() - 0.011_991_7).abs() < 1e-6);
    }

    #[test]
    fn stationary_scatterer_lands_in_bin_40() {
        let scenario = one_track(ScattererTrack::stationary(3.0, 1.0, 0.02), 20, 0.0);
        let bb = synthesize_baseband(&scenario, 1).unwrap();
        for m in [0, 7, 19] {
            let column: Vec<Complex32> = bb.data.column(m).to_vec();
            // 3.0 m / RR (~0.0749 m) sits just above bin 40
            assert_eq!(naive_dft_argmax(&column), 40);
        }
    }

    #[test]
    fn zero_tracks_without_noise_is_all_zero() {
        let scenario = Scenario {
            params: short_params(10),
            tracks: vec![],
            noise_sigma: 0.0,
            truth: vec![],
        };
        let bb = synthesize_baseband(&scenario, 3).unwrap();
        assert!(bb.data.iter().all(|v| v.re == 0.0 && v.im == 0.0));
    }

    #[test]
    fn approaching_scatterer_has_positive_doppler() {
        // STFT oracle on the slow-time signal of the peak range bin.
        let params = short_params(1024);
        let track = ScattererTrack::constant_velocity(3.0, 1.0, 1.0, params.duration());
        let bb = synthesize_baseband(&one_track(track, 1024, 0.0), 0).unwrap();
        // first fast-time sample carries only the carrier phase
        let v: Vec<Complex64> = (0..1024)
            .map(|m| {
                let z = bb.data[[0, m]];
                Complex64::new(z.re as f64, z.im as f64)
            })
            .collect();
        let mut buf = v[..256].to_vec();
        FftPlanner::new().plan_fft_forward(256).process(&mut buf);
        let k = buf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap()
            .0;
        let bin_hz = 1000.0 / 256.0;
        let freq = if k >= 128 { k as f64 - 256.0 } else { k as f64 } * bin_hz;
        let expected = params.doppler_for_velocity(1.0);
        assert!((expected - 166.78).abs() < 0.05);
        assert!((freq - expected).abs() <= bin_hz, "peak at {freq} Hz");
    }

    #[test]
    fn linearity_of_tracks() {
        let d = 0.03;
        let a = ScattererTrack::stationary(2.0, 1.0, d);
        let b = ScattererTrack::constant_velocity(5.0, -0.7, 0.4, d);
        let both = Scenario {
            params: short_params(30),
            tracks: vec![a.clone(), b.clone()],
            noise_sigma: 0.0,
            truth: vec![],
        };
        let sa = synthesize_baseband(&one_track(a, 30, 0.0), 0).unwrap();
        let sb = synthesize_baseband(&one_track(b, 30, 0.0), 0).unwrap();
        let sab = synthesize_baseband(&both, 0).unwrap();
        for ((x, y), z) in sa.data.iter().zip(sb.data.iter()).zip(sab.data.iter()) {
            assert!((x + y - z).norm() < 1e-5);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let track = ScattererTrack::constant_velocity(4.0, 0.5, 1.0, 0.05);
        let s = one_track(track, 50, 0.3);
        let a = synthesize_baseband(&s, 42).unwrap();
        let b = synthesize_baseband(&s, 42).unwrap();
        let c = synthesize_baseband(&s, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn short_track_is_invalid_scenario() {
        let s = one_track(ScattererTrack::stationary(3.0, 1.0, 0.005), 20, 0.0);
        assert!(matches!(
            synthesize_baseband(&s, 0),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn walk_ramp_drops_three_meters() {
        let t =
            build_activity_profile(ActivityKind::Walk, 0.0, 3.0, 6.0, Direction::Toward).unwrap();
        assert!((t.range_at(0.0) - 6.0).abs() < 1e-12);
        assert!((t.range_at(3.0) - 3.0).abs() < 1e-12);
        assert!(t.range_at(1.0) > t.range_at(2.0));
    }

    #[test]
    fn sit_stays_within_a_meter() {
        let t = build_activity_profile(ActivityKind::SitDown, 1.0, 2.0, 2.0, Direction::Toward)
            .unwrap();
        for &(_, r) in &t.breakpoints {
            assert!((r - 2.0).abs() < 1.0);
        }
    }

    #[test]
    fn in_place_kinds_move_less_than_a_meter() {
        for kind in ActivityKind::ALL
            .into_iter()
            .filter(|k| !k.is_translation())
        {
            for dir in [Direction::Toward, Direction::Away] {
                let t = build_activity_profile(kind, 0.0, 3.0, 4.0, dir).unwrap();
                let net = (t.final_range() - 4.0).abs();
                assert!(net < 1.0, "{kind} moved {net} m");
            }
        }
    }

    #[test]
    fn fall_peaks_above_bend() {
        let p = RadarParams::default();
        let fall =
            build_activity_profile(ActivityKind::Fall, 0.0, 1.0, 3.0, Direction::Toward).unwrap();
        let bend =
            build_activity_profile(ActivityKind::BendStanding, 0.0, 2.2, 3.0, Direction::Toward)
                .unwrap();
        let fd = p.doppler_for_velocity(peak_radial_speed(&fall));
        let bd = p.doppler_for_velocity(peak_radial_speed(&bend));
        assert!(fd > bd, "fall {fd} Hz vs bend {bd} Hz");
    }

    #[test]
    fn unknown_kind_and_bad_duration_fail() {
        assert!(matches!(
            "cartwheel".parse::<ActivityKind>(),
            Err(Error::UnknownActivity(_))
        ));
        assert!(
            build_activity_profile(ActivityKind::Fall, 0.0, 0.0, 3.0, Direction::Toward).is_err()
        );
        assert_eq!(
            "bend_sitting".parse::<ActivityKind>().unwrap(),
            ActivityKind::BendSitting
        );
    }

    #[test]
    fn scenario_json_round_trip() {
        let track =
            build_activity_profile(ActivityKind::Walk, 0.0, 0.05, 5.0, Direction::Away).unwrap();
        let s = Scenario {
            params: short_params(50),
            tracks: vec![track],
            noise_sigma: 0.1,
            truth: vec![TruthInterval {
                label: TruthLabel::WalkAway,
                onset: 0.0,
                offset: 0.05,
            }],
        };
        let text = s.to_json().unwrap();
        assert!(text.contains("\"PRI\""));
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
    }
}

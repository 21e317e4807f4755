//! Power burst curve: band-limited spectrogram energy for in-place motion
//! onset/offset detection, and merging with Radon breakpoints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radon::{MotionKind, Timeline};
use crate::rdmap::{ImageKind, RadarImage};
use crate::sim::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbcParams {
    /// Positive Doppler band `(K_P1, K_P2)` in Hz.
    pub pos_band: (f64, f64),
    /// Negative Doppler band `(K_N1, K_N2)` in Hz.
    pub neg_band: (f64, f64),
    /// Moving-average extent in frames.
    pub w: usize,
    pub threshold_frac: f64,
    /// Active runs shorter than this (s) are dropped.
    pub min_duration: f64,
    /// Active runs separated by a shorter gap (s) are joined.
    pub merge_gap: f64,
}

impl Default for PbcParams {
    fn default() -> Self {
        Self {
            pos_band: (20.0, 270.0),
            neg_band: (-270.0, -20.0),
            w: 5,
            threshold_frac: 0.03,
            min_duration: 0.3,
            merge_gap: 0.5,
        }
    }
}

impl PbcParams {
    pub fn validate(&self) -> Result<()> {
        let (p1, p2) = self.pos_band;
        let (n1, n2) = self.neg_band;
        if !(p1 < p2 && n1 < n2 && n2 < 0.0 && 0.0 < p1) {
            return Err(Error::InvalidParams(format!(
                "need K_N1 < K_N2 < 0 < K_P1 < K_P2, got {:?} {:?}",
                self.neg_band, self.pos_band
            )));
        }
        if self.w == 0
            || !(self.threshold_frac > 0.0 && self.threshold_frac < 1.0)
            || self.min_duration < 0.0
            || self.merge_gap < 0.0
        {
            return Err(Error::InvalidParams(
                "invalid PBC smoothing/threshold parameters".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentSource {
    Merged,
    Radon,
    Pbc,
}

impl SegmentSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentSource::Merged => "merged",
            SegmentSource::Radon => "radon",
            SegmentSource::Pbc => "pbc",
        }
    }
}

impl fmt::Display for SegmentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merged" => Ok(SegmentSource::Merged),
            "radon" => Ok(SegmentSource::Radon),
            "pbc" => Ok(SegmentSource::Pbc),
            other => Err(Error::Format(format!("unknown segment source `{other}`"))),
        }
    }
}

/// A detected motion interval with its classification window (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub onset: f64,
    pub offset: f64,
    pub kind: MotionKind,
    pub direction: Option<Direction>,
    pub source: SegmentSource,
    pub capture: (f64, f64),
}

impl MotionSegment {
    /// Whether this segment is sent to the classifier.
    pub fn is_event(&self) -> bool {
        self.source != SegmentSource::Radon
    }
}

fn band_rows(md: &RadarImage, lo_hz: f64, hi_hz: f64) -> Result<(usize, usize)> {
    let rows = md.rows() as isize;
    let lo = md.doppler_row(lo_hz);
    let hi = md.doppler_row(hi_hz);
    if lo < 0 || hi >= rows || lo > hi {
        let half = md.row_step * (md.rows() / 2) as f64;
        return Err(Error::BandOutOfSpan {
            lo: lo_hz,
            hi: hi_hz,
            span: half,
        });
    }
    Ok((lo as usize, hi as usize))
}

/// Per-frame sum of squared spectrogram pixels over both Doppler bands.
pub fn power_burst(md: &RadarImage, p: &PbcParams) -> Result<Vec<f64>> {
    p.validate()?;
    if md.kind != ImageKind::Spectrogram {
        return Err(Error::InvalidParams(
            "power burst needs a spectrogram".into(),
        ));
    }
    let (p_lo, p_hi) = band_rows(md, p.pos_band.0, p.pos_band.1)?;
    let (n_lo, n_hi) = band_rows(md, p.neg_band.0, p.neg_band.1)?;
    Ok(md
        .pixels
        .columns()
        .into_iter()
        .map(|col| {
            let pos: f64 = (p_lo..=p_hi).map(|r| col[r] * col[r]).sum();
            let neg: f64 = (n_lo..=n_hi).map(|r| col[r] * col[r]).sum();
            pos + neg
        })
        .collect())
}

/// Causal moving average; the first `w - 1` outputs average the samples
/// available so far.
pub fn smooth_pbc(pc: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..pc.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            pc[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Active mask `pcf >= min + frac * (max - min)`.
pub fn active_mask(pcf: &[f64], threshold_frac: f64) -> Vec<bool> {
    let lo = pcf.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pcf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = lo + threshold_frac * (hi - lo);
    pcf.iter().map(|&v| v >= threshold).collect()
}

/// Maximal active runs as in-place segments; a run over frames `i0..=i1`
/// spans `[i0 / frame_rate, (i1 + 1) / frame_rate]`.
pub fn threshold_segments(
    pcf: &[f64],
    threshold_frac: f64,
    frame_rate: f64,
    min_duration: f64,
) -> Vec<MotionSegment> {
    let mask = active_mask(pcf, threshold_frac);
    let mut segments = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        let onset = start as f64 / frame_rate;
        let offset = i as f64 / frame_rate;
        if offset - onset >= min_duration {
            segments.push(MotionSegment {
                onset,
                offset,
                kind: MotionKind::InPlace,
                direction: None,
                source: SegmentSource::Pbc,
                capture: (onset, offset),
            });
        }
    }
    segments
}

/// Joins consecutive segments whose gap is shorter than `max_gap` seconds.
pub fn bridge_gaps(segments: &[MotionSegment], max_gap: f64) -> Vec<MotionSegment> {
    let mut out: Vec<MotionSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match out.last_mut() {
            Some(last) if seg.onset - last.offset < max_gap => {
                last.offset = last.offset.max(seg.offset);
                last.capture = (last.onset, last.offset);
            }
            _ => out.push(*seg),
        }
    }
    out
}

/// Burst detection restricted to in-place spans `(onset, offset)` in
/// seconds: the threshold rule is applied to the smoothed curve inside each
/// span on its own, short gaps are bridged and short runs dropped. Returns
/// the segments and the per-frame activity mask.
pub fn span_bursts(
    pcf: &[f64],
    spans: &[(f64, f64)],
    p: &PbcParams,
    frame_rate: f64,
) -> (Vec<MotionSegment>, Vec<bool>) {
    let mut active = vec![false; pcf.len()];
    let mut segments = Vec::new();
    for &(a, b) in spans {
        let i0 = ((a * frame_rate).round().max(0.0) as usize).min(pcf.len());
        let i1 = ((b * frame_rate).round().max(0.0) as usize).min(pcf.len());
        if i1 <= i0 {
            continue;
        }
        let offset = i0 as f64 / frame_rate;
        let runs = threshold_segments(&pcf[i0..i1], p.threshold_frac, frame_rate, 0.0);
        let runs: Vec<MotionSegment> = runs
            .into_iter()
            .map(|mut s| {
                s.onset += offset;
                s.offset += offset;
                s.capture = (s.onset, s.offset);
                s
            })
            .collect();
        for s in bridge_gaps(&runs, p.merge_gap) {
            if s.offset - s.onset < p.min_duration {
                continue;
            }
            let f0 = (s.onset * frame_rate).round() as usize;
            let f1 = ((s.offset * frame_rate).round() as usize).min(pcf.len());
            active[f0..f1].iter_mut().for_each(|v| *v = true);
            segments.push(s);
        }
    }
    (segments, active)
}

/// Capture-window geometry around Radon breakpoints (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureParams {
    /// Translation-to-in-place: window starts this long before the breakpoint.
    pub before: f64,
    /// Translation-to-in-place: window ends this long after the breakpoint.
    pub after: f64,
    /// In-place-to-translation: window length from the breakpoint.
    pub exit_len: f64,
    /// PBC segments overlapping a merged window by more than this fraction
    /// of their own length are treated as part of that merged motion.
    pub max_merged_overlap: f64,
    /// PBC segments starting or ending within this distance (s) of a
    /// merged breakpoint run into the translation and belong to that merged
    /// motion.
    pub touch_tolerance: f64,
}

impl Default for CaptureParams {
    fn default() -> Self {
        Self {
            before: 1.5,
            after: 0.5,
            exit_len: 3.0,
            max_merged_overlap: 0.5,
            touch_tolerance: 0.1,
        }
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// In-place stretches of the timeline; adjacent in-place intervals (two
/// horizontal lines at slightly different ranges) form one span.
pub fn in_place_spans(timeline: &Timeline) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for iv in timeline
        .intervals
        .iter()
        .filter(|iv| iv.kind == MotionKind::InPlace)
    {
        match spans.last_mut() {
            Some(last) if (iv.onset - last.1).abs() < 1e-9 => last.1 = iv.offset,
            _ => spans.push((iv.onset, iv.offset)),
        }
    }
    spans
}

/// Combines the Radon timeline and PBC segments into the ordered event list.
///
/// The output holds every Radon interval (`source = radon`), one merged
/// segment per translation/in-place breakpoint, and the PBC segments that
/// lie inside in-place spans. Segments are ordered by onset; at equal
/// onsets merged segments come first.
pub fn merge_events(
    timeline: &Timeline,
    pbc_segments: &[MotionSegment],
    capture: &CaptureParams,
    t_max: f64,
) -> Vec<MotionSegment> {
    let clip = |a: f64, b: f64| (a.max(0.0), b.min(t_max));
    let spans = in_place_spans(timeline);
    let mut out = Vec::new();

    for iv in &timeline.intervals {
        out.push(MotionSegment {
            onset: iv.onset,
            offset: iv.offset,
            kind: iv.kind,
            direction: iv.direction,
            source: SegmentSource::Radon,
            capture: (iv.onset, iv.offset),
        });
    }

    let mut merged_windows = Vec::new();
    let mut merged_breaks = Vec::new();
    for w in timeline.intervals.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let t = next.onset;
        let (window, kind, direction) = match (prev.kind, next.kind) {
            (MotionKind::Translation, MotionKind::InPlace) => (
                clip(t - capture.before, t + capture.after),
                MotionKind::InPlace,
                prev.direction,
            ),
            (MotionKind::InPlace, MotionKind::Translation) => (
                clip(t, t + capture.exit_len),
                MotionKind::Translation,
                next.direction,
            ),
            _ => continue,
        };
        if window.1 <= window.0 {
            continue;
        }
        merged_windows.push(window);
        merged_breaks.push(t);
        out.push(MotionSegment {
            onset: window.0,
            offset: window.1,
            kind,
            direction,
            source: SegmentSource::Merged,
            capture: window,
        });
    }

    for seg in pbc_segments {
        let inside = spans
            .iter()
            .any(|&(a, b)| seg.onset >= a - 1e-9 && seg.offset <= b + 1e-9);
        let len = seg.offset - seg.onset;
        let absorbed = merged_windows
            .iter()
            .any(|&w| overlap((seg.onset, seg.offset), w) > capture.max_merged_overlap * len)
            || merged_breaks.iter().any(|&t| {
                (seg.onset - t).abs() <= capture.touch_tolerance
                    || (seg.offset - t).abs() <= capture.touch_tolerance
            });
        if inside && !absorbed {
            let mut s = *seg;
            s.capture = clip(s.onset, s.offset);
            s.source = SegmentSource::Pbc;
            out.push(s);
        }
    }

    out.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.source.cmp(&b.source)));
    out
}

//! Radon-transform line detection on cleaned range-maps.
//!
//! Coordinates: origin at pixel `(rows/2, cols/2)` (integer division),
//! `x` = column offset (slow time, rightward), `y` = row offset (increasing
//! range bin). A projection bin collects pixels with
//! `x' = y sin(theta) - x cos(theta)`, so the line through those pixels is
//! `y = cot(theta) x + x'/sin(theta)`. A horizontal (in-place) line peaks at
//! 90 degrees; walking toward the radar (range decreasing) has negative
//! slope and peaks in (90, 180) degrees.

use std::fmt;
use std::str::FromStr;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Direction;

/// Translation vs in-place activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    InPlace,
    Translation,
}

impl MotionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::InPlace => "inplace",
            MotionKind::Translation => "translation",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inplace" => Ok(MotionKind::InPlace),
            "translation" => Ok(MotionKind::Translation),
            other => Err(Error::Format(format!("unknown motion kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadonImage {
    /// `x'` bins by theta columns.
    pub values: Array2<f64>,
    pub theta_deg: Vec<f64>,
    /// `x'` of row 0; row `i` holds `xprime_min + i * xprime_step`.
    pub xprime_min: f64,
    pub xprime_step: f64,
    /// Image center `(row, col)` used as origin.
    pub center: (usize, usize),
    pub image_shape: (usize, usize),
}

impl RadonImage {
    pub fn xprime(&self, row: usize) -> f64 {
        self.xprime_min + row as f64 * self.xprime_step
    }
}

pub fn image_center(shape: (usize, usize)) -> (usize, usize) {
    (shape.0 / 2, shape.1 / 2)
}

fn nonzero_pixels(img: &Array2<f64>) -> Vec<(f64, f64, f64)> {
    let (cy, cx) = image_center(img.dim());
    img.indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((r, c), &v)| (c as f64 - cx as f64, r as f64 - cy as f64, v))
        .collect()
}

fn half_span(shape: (usize, usize)) -> usize {
    let (rows, cols) = shape;
    ((rows as f64).hypot(cols as f64) / 2.0).ceil() as usize + 2
}

/// Projection at one angle; pixel mass is split linearly between the two
/// nearest `x'` bins.
fn project_angle(pixels: &[(f64, f64, f64)], theta_deg: f64, half: usize) -> Vec<f64> {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let mut acc = vec![0.0; 2 * half + 1];
    for &(x, y, v) in pixels {
        let pos = y * s - x * c + half as f64;
        let i = pos.floor();
        let f = pos - i;
        let i = i as usize;
        acc[i] += v * (1.0 - f);
        if f > 0.0 {
            acc[i + 1] += v * f;
        }
    }
    acc
}

/// Radon transform on the integer 0..179 degree grid.
pub fn radon_transform(img: &Array2<f64>) -> Result<RadonImage> {
    if img.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "radon input contains non-finite pixels".into(),
        ));
    }
    let shape = img.dim();
    let half = half_span(shape);
    let pixels = nonzero_pixels(img);
    let theta_deg: Vec<f64> = (0..180).map(f64::from).collect();
    let cols: Vec<Vec<f64>> = theta_deg
        .par_iter()
        .map(|&t| project_angle(&pixels, t, half))
        .collect();
    let mut values = Array2::zeros((2 * half + 1, theta_deg.len()));
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[[i, j]] = *v;
        }
    }
    Ok(RadonImage {
        values,
        theta_deg,
        xprime_min: -(half as f64),
        xprime_step: 1.0,
        center: image_center(shape),
        image_shape: shape,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineParams {
    pub suppress_theta_deg: f64,
    pub suppress_xprime: f64,
    pub rel_threshold: f64,
    pub inplace_tolerance_deg: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        Self {
            suppress_theta_deg: 5.0,
            suppress_xprime: 10.0,
            rel_threshold: 0.2,
            inplace_tolerance_deg: 2.0,
        }
    }
}

/// A line `y = slope * x + intercept` in centered image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedLine {
    pub theta: f64,
    pub xprime: f64,
    pub slope: f64,
    pub intercept: f64,
    pub kind: MotionKind,
    pub strength: f64,
}

impl DetectedLine {
    pub fn from_peak(theta: f64, xprime: f64, strength: f64, inplace_tolerance_deg: f64) -> Self {
        let (slope, intercept) = if theta == 90.0 {
            (0.0, xprime)
        } else {
            let (s, c) = theta.to_radians().sin_cos();
            (c / s, xprime / s)
        };
        let kind = if (theta - 90.0).abs() <= inplace_tolerance_deg {
            MotionKind::InPlace
        } else {
            MotionKind::Translation
        };
        Self {
            theta,
            xprime,
            slope,
            intercept,
            kind,
            strength,
        }
    }

    /// Line through centered-coordinate points with the given slope.
    pub fn from_slope_intercept(slope: f64, intercept: f64, inplace_tolerance_deg: f64) -> Self {
        let theta = if slope == 0.0 {
            90.0
        } else {
            (1.0 / slope).atan().to_degrees().rem_euclid(180.0)
        };
        let xprime = intercept * theta.to_radians().sin();
        let mut line = Self::from_peak(theta, xprime, 0.0, inplace_tolerance_deg);
        line.slope = slope;
        line.intercept = intercept;
        line
    }

    /// Centered `y` at centered `x`.
    pub fn y_at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Toward for negative slope (range decreasing over time).
    pub fn direction(&self) -> Option<Direction> {
        match self.kind {
            MotionKind::InPlace => None,
            MotionKind::Translation if self.slope < 0.0 => Some(Direction::Toward),
            MotionKind::Translation => Some(Direction::Away),
        }
    }
}

/// Greedy peak picking with neighborhood suppression.
pub fn find_lines(ri: &RadonImage, max_lines: usize, params: &LineParams) -> Vec<DetectedLine> {
    let global = ri.values.iter().cloned().fold(0.0, f64::max);
    if max_lines == 0 || !(global > 0.0) {
        return Vec::new();
    }
    let mut work = ri.values.clone();
    let mut lines = Vec::new();
    while lines.len() < max_lines {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for ((i, j), &v) in work.indexed_iter() {
            if v > best.2 {
                best = (i, j, v);
            }
        }
        let (bi, bj, bv) = best;
        if !(bv > 0.0) || bv < params.rel_threshold * global {
            break;
        }
        let theta = ri.theta_deg[bj];
        let xprime = ri.xprime(bi);
        lines.push(DetectedLine::from_peak(
            theta,
            xprime,
            bv,
            params.inplace_tolerance_deg,
        ));
        for ((i, j), v) in work.indexed_iter_mut() {
            if (ri.theta_deg[j] - theta).abs() <= params.suppress_theta_deg
                && (ri.xprime(i) - xprime).abs() <= params.suppress_xprime
            {
                *v = 0.0;
            }
        }
    }
    lines
}

/// Refines a translation line's angle on a finer grid within +-1 degree,
/// keeping the peak near the original offset. In-place lines are returned
/// unchanged.
pub fn refine_line(img: &Array2<f64>, line: &DetectedLine, params: &LineParams) -> DetectedLine {
    if line.kind == MotionKind::InPlace {
        return *line;
    }
    let shape = img.dim();
    let half = half_span(shape);
    let pixels = nonzero_pixels(img);
    let mut best = (line.theta, line.xprime, f64::NEG_INFINITY);
    for step in -20..=20 {
        let theta = line.theta + step as f64 * 0.05;
        let proj = project_angle(&pixels, theta, half);
        let lo = (line.xprime - 3.0 + half as f64).max(0.0) as usize;
        let hi = ((line.xprime + 3.0 + half as f64) as usize).min(proj.len() - 1);
        for (i, &v) in proj.iter().enumerate().take(hi + 1).skip(lo) {
            if v > best.2 {
                best = (theta, i as f64 - half as f64, v);
            }
        }
    }
    let mut refined =
        DetectedLine::from_peak(best.0, best.1, line.strength, params.inplace_tolerance_deg);
    refined.kind = line.kind;
    refined
}

/// Intersection `(x, y)` of two lines in centered coordinates.
pub fn intersect(a: &DetectedLine, b: &DetectedLine) -> Result<(f64, f64)> {
    let dm = a.slope - b.slope;
    if !a.slope.is_finite() || !b.slope.is_finite() || dm.abs() < 1e-9 {
        return Err(Error::NoIntersection(a.slope, b.slope));
    }
    // [m_a -1; m_b -1] [x; y] = [-n_a; -n_b]
    let x = (b.intercept - a.intercept) / dm;
    let y = a.slope * x + a.intercept;
    Ok((x, y))
}

/// Pixels `(x, y)` visited by Bresenham's algorithm from `p0` to `p1`.
pub fn bresenham(p0: (i64, i64), p1: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = p0;
    let dx = (p1.0 - x).abs();
    let dy = -(p1.1 - y).abs();
    let sx = if x < p1.0 { 1 } else { -1 };
    let sy = if y < p1.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if x == p1.0 && y == p1.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Mean pixel value along the Bresenham segment; points are `(col, row)`.
pub fn segment_energy(img: &Array2<f64>, p0: (usize, usize), p1: (usize, usize)) -> Result<f64> {
    let (rows, cols) = img.dim();
    for &(c, r) in &[p0, p1] {
        if c >= cols || r >= rows {
            return Err(Error::InvalidParams(format!(
                "segment endpoint ({c}, {r}) outside {rows}x{cols} image"
            )));
        }
    }
    let path = bresenham((p0.0 as i64, p0.1 as i64), (p1.0 as i64, p1.1 as i64));
    let sum: f64 = path
        .iter()
        .map(|&(c, r)| img[[r as usize, c as usize]])
        .sum();
    Ok(sum / path.len() as f64)
}

/// One interval of the Radon timeline, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineInterval {
    pub onset: f64,
    pub offset: f64,
    pub kind: MotionKind,
    pub direction: Option<Direction>,
    /// Index into the line list that explains this interval.
    pub line: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakPoint {
    pub t: f64,
    pub from_kind: MotionKind,
    pub to_kind: MotionKind,
    pub chosen_segment_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub intervals: Vec<TimelineInterval>,
    pub breakpoints: Vec<BreakPoint>,
}

/// Tolerances of [`build_timeline_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineParams {
    /// Each path pixel scores the largest value within this many rows.
    pub band: usize,
    /// Lines scoring within this fraction of the best energy on a piece
    /// count as tied; ties go to the line with the larger Radon peak.
    pub tie_tolerance: f64,
    /// Intervals shorter than this (s) are absorbed by a neighbor.
    pub min_interval: f64,
    /// Translation intervals whose tracked range changes by less than this
    /// (m) are treated as in-place; see [`demote_small_swaths`].
    pub min_swath: f64,
}

impl Default for TimelineParams {
    fn default() -> Self {
        Self {
            band: 3,
            tie_tolerance: 0.05,
            min_interval: 0.6,
            min_swath: 1.0,
        }
    }
}

impl TimelineParams {
    /// Plain Bresenham energies, strict maximum, no interval pruning.
    pub fn exact() -> Self {
        Self {
            band: 0,
            tie_tolerance: 0.0,
            min_interval: 0.0,
            min_swath: 0.0,
        }
    }
}

/// Mean over the Bresenham path of the largest pixel within `band` rows of
/// each path pixel.
fn band_energy(
    img: &Array2<f64>,
    p0: (usize, usize),
    p1: (usize, usize),
    band: usize,
) -> Result<f64> {
    if band == 0 {
        return segment_energy(img, p0, p1);
    }
    let rows = img.nrows();
    let path = bresenham((p0.0 as i64, p0.1 as i64), (p1.0 as i64, p1.1 as i64));
    let sum: f64 = path
        .iter()
        .map(|&(c, r)| {
            let r = r as usize;
            (r.saturating_sub(band)..=(r + band).min(rows - 1))
                .map(|rr| img[[rr, c as usize]])
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(sum / path.len() as f64)
}

/// Range swath in rows of the track across columns `a..b`: the spread of the
/// per-column intensity centroid after a 9-column moving median. `None`
/// when no column carries any track.
pub fn track_swath(img: &Array2<f64>, a: usize, b: usize) -> Option<f64> {
    const HALF: usize = 4;
    let b = b.min(img.ncols());
    let cents: Vec<f64> = (a.min(b)..b)
        .filter_map(|c| {
            let col = img.column(c);
            let m: f64 = col.sum();
            (m > 0.0).then(|| {
                col.iter()
                    .enumerate()
                    .map(|(r, v)| r as f64 * v)
                    .sum::<f64>()
                    / m
            })
        })
        .collect();
    if cents.is_empty() {
        return None;
    }
    let smooth: Vec<f64> = (0..cents.len())
        .map(|i| {
            let mut w = cents[i.saturating_sub(HALF)..(i + HALF + 1).min(cents.len())].to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect();
    let hi = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    Some(hi - lo)
}

/// Relabels translation intervals whose track moves less than `min_rows`
/// rows as in-place, then merges neighbors of equal kind and direction.
/// Small range shifts from sitting, bending or falling otherwise show up as
/// shallow lines.
pub fn demote_small_swaths(
    img: &Array2<f64>,
    timeline: &Timeline,
    seconds_per_col: f64,
    min_rows: f64,
) -> Timeline {
    let mut intervals: Vec<TimelineInterval> = Vec::with_capacity(timeline.intervals.len());
    for iv in &timeline.intervals {
        let mut iv = *iv;
        if iv.kind == MotionKind::Translation {
            let a = (iv.onset / seconds_per_col).round() as usize;
            let b = (iv.offset / seconds_per_col).round() as usize;
            if track_swath(img, a, b).is_some_and(|sw| sw < min_rows) {
                iv.kind = MotionKind::InPlace;
                iv.direction = None;
            }
        }
        match intervals.last_mut() {
            Some(last) if last.kind == iv.kind && last.direction == iv.direction => {
                let (la, lb) = (last.offset - last.onset, iv.offset - iv.onset);
                last.energy = (last.energy * la + iv.energy * lb) / (la + lb);
                if lb > la {
                    last.line = iv.line;
                }
                last.offset = iv.offset;
            }
            _ => intervals.push(iv),
        }
    }
    let breakpoints = intervals
        .windows(2)
        .map(|w| BreakPoint {
            t: w[1].onset,
            from_kind: w[0].kind,
            to_kind: w[1].kind,
            chosen_segment_energy: w[1].energy,
        })
        .collect();
    Timeline {
        intervals,
        breakpoints,
    }
}

/// Per-column banded value of `line`: the largest pixel within `band` rows
/// of the line's row in each column.
fn column_profile(
    img: &Array2<f64>,
    line: &DetectedLine,
    band: usize,
    (cy, cx): (usize, usize),
) -> Vec<f64> {
    let (rows, cols) = img.dim();
    (0..cols)
        .map(|c| {
            let y = line.y_at(c as f64 - cx as f64) + cy as f64;
            if !y.is_finite() || y < -(band as f64) || y > (rows - 1 + band) as f64 {
                return 0.0;
            }
            let r = y.round().clamp(0.0, (rows - 1) as f64) as usize;
            (r.saturating_sub(band)..=(r + band).min(rows - 1))
                .map(|rr| img[[rr, c]])
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Re-picks each interval's line among equivalent candidates and moves every
/// cut to where the banded profiles of the two neighboring lines cross over.
fn refine_cuts(
    img: &Array2<f64>,
    lines: &[DetectedLine],
    usable: &[usize],
    pieces: &mut [(f64, f64, usize, f64)],
    band: usize,
    center: (usize, usize),
    same: &dyn Fn(usize, usize) -> bool,
) {
    let cols = img.ncols();
    let profiles: BTreeMap<usize, Vec<f64>> = usable
        .iter()
        .map(|&i| (i, column_profile(img, &lines[i], band, center)))
        .collect();
    let mean = |prof: &[f64], a: f64, b: f64| -> f64 {
        let lo = (a.round() as usize).min(cols);
        let hi = (b.round() as usize).clamp(lo, cols);
        if hi == lo {
            return 0.0;
        }
        prof[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
    };
    for q in pieces.iter_mut() {
        let mut best = (q.2, mean(&profiles[&q.2], q.0, q.1));
        for &i in usable {
            if same(i, q.2) {
                let e = mean(&profiles[&i], q.0, q.1);
                if e > best.1 + 1e-12 {
                    best = (i, e);
                }
            }
        }
        q.2 = best.0;
    }
    for k in 1..pieces.len() {
        let (a, b) = (pieces[k - 1].2, pieces[k].2);
        // the cut may move anywhere that leaves both neighbors a column
        let lo = (pieces[k - 1].0.round() as usize + 1).min(cols);
        let hi = (pieces[k].1.round() as usize).saturating_sub(1).max(lo);
        // columns the translation line fails to explain lean toward the
        // in-place neighbor, so a walk only claims the track it follows
        let lean = |inplace: &[f64], other: &[f64]| -> Vec<f64> {
            inplace
                .iter()
                .zip(other)
                .map(|(&p, &o)| p.max(0.5 * (1.0 - o.min(1.0))))
                .collect()
        };
        let (pa, pb) = match (lines[a].kind, lines[b].kind) {
            (MotionKind::InPlace, MotionKind::Translation) => {
                (lean(&profiles[&a], &profiles[&b]), profiles[&b].clone())
            }
            (MotionKind::Translation, MotionKind::InPlace) => {
                (profiles[&a].clone(), lean(&profiles[&b], &profiles[&a]))
            }
            _ => (profiles[&a].clone(), profiles[&b].clone()),
        };
        // score(c) = sum_{lo..c} pa + sum_{c..hi} pb; the cut is the middle
        // of the maximizing columns
        let mut score: f64 = pb[lo..hi].iter().sum();
        let mut best = score;
        let (mut first, mut last) = (lo, lo);
        for c in lo..hi {
            score += pa[c] - pb[c];
            if score > best + 1e-9 {
                best = score;
                first = c + 1;
                last = c + 1;
            } else if (score - best).abs() <= 1e-9 {
                last = c + 1;
            }
        }
        let cut = 0.5 * (first + last) as f64;
        pieces[k - 1].1 = cut;
        pieces[k].0 = cut;
    }
    for q in pieces.iter_mut() {
        q.3 = mean(&profiles[&q.2], q.0, q.1);
    }
}

/// Partitions the slow-time axis among the detected lines.
///
/// Candidate boundaries are the pairwise line intersections inside the
/// image; each piece between consecutive candidates is assigned to the line
/// with the highest normalized energy along it, and equal neighbors merge.
pub fn build_timeline(
    img: &Array2<f64>,
    lines: &[DetectedLine],
    seconds_per_col: f64,
) -> Result<Timeline> {
    build_timeline_with(img, lines, seconds_per_col, &TimelineParams::exact())
}

/// [`build_timeline`] with banded energies, tie-breaking by Radon peak
/// strength, and absorption of short intervals. Neighboring intervals of the
/// same kind and direction merge even when they come from different lines.
pub fn build_timeline_with(
    img: &Array2<f64>,
    lines: &[DetectedLine],
    seconds_per_col: f64,
    p: &TimelineParams,
) -> Result<Timeline> {
    let (rows, cols) = img.dim();
    let usable: Vec<usize> = (0..lines.len())
        .filter(|&i| lines[i].slope.is_finite())
        .collect();
    if usable.is_empty() || cols == 0 || rows == 0 {
        return Ok(Timeline::default());
    }
    let (cy, cx) = image_center((rows, cols));
    let t_max = cols as f64;

    let mut cuts = vec![0.0, t_max];
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            if let Ok((x, _)) = intersect(&lines[i], &lines[j]) {
                let px = x + cx as f64;
                if px > 0.0 && px < t_max {
                    cuts.push(px);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let pixel = |line: &DetectedLine, px: f64| -> (usize, usize) {
        let col = px.round().clamp(0.0, (cols - 1) as f64) as usize;
        let y = line.y_at(col as f64 - cx as f64) + cy as f64;
        let row = y.round().clamp(0.0, (rows - 1) as f64) as usize;
        (col, row)
    };

    // (start col, end col, line, energy)
    let mut pieces: Vec<(f64, f64, usize, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let scores: Vec<(usize, f64)> = usable
            .iter()
            .map(|&i| {
                band_energy(
                    img,
                    pixel(&lines[i], a),
                    pixel(&lines[i], (b - 1.0).max(a)),
                    p.band,
                )
                .map(|e| (i, e))
            })
            .collect::<Result<_>>()?;
        let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let mut best = scores[0];
        let mut best_strength = f64::NEG_INFINITY;
        for &(i, e) in &scores {
            let tied = e >= top * (1.0 - p.tie_tolerance);
            if e == top && p.tie_tolerance == 0.0 {
                best = (i, e);
                break;
            }
            if tied && lines[i].strength > best_strength {
                best = (i, e);
                best_strength = lines[i].strength;
            }
        }
        pieces.push((a, b, best.0, best.1));
    }

    let same = |x: usize, y: usize| {
        lines[x].kind == lines[y].kind && lines[x].direction() == lines[y].direction()
    };
    let merge = |pieces: &mut Vec<(f64, f64, usize, f64)>, strict: bool| {
        let mut out: Vec<(f64, f64, usize, f64)> = Vec::with_capacity(pieces.len());
        for &q in pieces.iter() {
            match out.last_mut() {
                Some(last) if last.2 == q.2 || (!strict && same(last.2, q.2)) => {
                    let la = last.1 - last.0;
                    let lb = q.1 - q.0;
                    last.3 = (last.3 * la + q.3 * lb) / (la + lb);
                    if lb > la {
                        last.2 = q.2;
                    }
                    last.1 = q.1;
                }
                _ => out.push(q),
            }
        }
        *pieces = out;
    };
    let strict = p.min_interval == 0.0 && p.tie_tolerance == 0.0 && p.band == 0;
    merge(&mut pieces, strict);

    // absorb the shortest sub-minimum interval into a neighbor until none is left
    let min_cols = p.min_interval / seconds_per_col;
    let absorb = |pieces: &mut Vec<(f64, f64, usize, f64)>| {
        while pieces.len() > 1 {
            let Some((k, _)) = pieces
                .iter()
                .enumerate()
                .filter(|(_, q)| q.1 - q.0 < min_cols)
                .min_by(|x, y| (x.1 .1 - x.1 .0).total_cmp(&(y.1 .1 - y.1 .0)))
            else {
                break;
            };
            let len = |q: &(f64, f64, usize, f64)| q.1 - q.0;
            let left = k.checked_sub(1);
            let right = (k + 1 < pieces.len()).then_some(k + 1);
            let target = match (left, right) {
                (Some(l), Some(r)) => {
                    if same(pieces[l].2, pieces[k].2) {
                        l
                    } else if same(pieces[r].2, pieces[k].2) {
                        r
                    } else if len(&pieces[l]) >= len(&pieces[r]) {
                        l
                    } else {
                        r
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => break,
            };
            let q = pieces.remove(k);
            let t = if target > k { target - 1 } else { target };
            pieces[t].0 = pieces[t].0.min(q.0);
            pieces[t].1 = pieces[t].1.max(q.1);
            merge(pieces, false);
        }
    };
    absorb(&mut pieces);

    if p.band > 0 && pieces.len() > 1 {
        refine_cuts(img, lines, &usable, &mut pieces, p.band, (cy, cx), &same);
        // moved cuts can leave slivers at the edges
        absorb(&mut pieces);
    }

    let intervals: Vec<TimelineInterval> = pieces
        .iter()
        .map(|&(a, b, i, e)| TimelineInterval {
            onset: a * seconds_per_col,
            offset: b * seconds_per_col,
            kind: lines[i].kind,
            direction: lines[i].direction(),
            line: i,
            energy: e,
        })
        .collect();
    let breakpoints = intervals
        .windows(2)
        .map(|w| BreakPoint {
            t: w[1].onset,
            from_kind: w[0].kind,
            to_kind: w[1].kind,
            chosen_segment_energy: w[1].energy,
        })
        .collect();
    Ok(Timeline {
        intervals,
        breakpoints,
    })
}

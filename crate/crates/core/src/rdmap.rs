//! Range-map and micro-Doppler spectrogram computation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::FftPlanner;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::BasebandMatrix;

/// Floor (dB) assigned to zero-magnitude pixels by [`log_magnitude`].
pub const DEFAULT_LOG_FLOOR_DB: f64 = -120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageKind {
    RangeMap,
    Spectrogram,
    Generic,
}

impl ImageKind {
    pub fn code(self) -> u8 {
        match self {
            ImageKind::RangeMap => 0,
            ImageKind::Spectrogram => 1,
            ImageKind::Generic => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ImageKind::RangeMap),
            1 => Ok(ImageKind::Spectrogram),
            2 => Ok(ImageKind::Generic),
            other => Err(Error::Format(format!("unknown image kind code {other}"))),
        }
    }
}

/// Real-valued image with axis calibration.
///
/// Row `i` of a range-map sits at range `i * row_step` meters. Row `k` of a
/// spectrogram sits at Doppler `(k - rows/2) * row_step` Hz. Column `j`
/// sits at slow time `j * col_step` seconds for both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarImage {
    pub pixels: Array2<f64>,
    pub row_step: f64,
    pub col_step: f64,
    pub kind: ImageKind,
}

impl RadarImage {
    pub fn new(pixels: Array2<f64>, row_step: f64, col_step: f64, kind: ImageKind) -> Result<Self> {
        let img = Self {
            pixels,
            row_step,
            col_step,
            kind,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.row_step > 0.0 && self.col_step > 0.0) {
            return Err(Error::InvalidParams(
                "image axis steps must be positive".into(),
            ));
        }
        if self.pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "image contains non-finite pixels".into(),
            ));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    /// Physical value of row `i` (meters or Hz).
    pub fn row_value(&self, i: usize) -> f64 {
        match self.kind {
            ImageKind::Spectrogram => (i as f64 - (self.rows() / 2) as f64) * self.row_step,
            _ => i as f64 * self.row_step,
        }
    }

    /// Slow time (s) of column `j`.
    pub fn col_time(&self, j: usize) -> f64 {
        j as f64 * self.col_step
    }

    /// Spectrogram row nearest to Doppler frequency `hz`.
    pub fn doppler_row(&self, hz: f64) -> isize {
        (hz / self.row_step).round() as isize + (self.rows() / 2) as isize
    }

    /// Total span covered by the columns (s).
    pub fn duration(&self) -> f64 {
        self.cols() as f64 * self.col_step
    }

    pub fn with_pixels(&self, pixels: Array2<f64>) -> Self {
        Self {
            pixels,
            row_step: self.row_step,
            col_step: self.col_step,
            kind: self.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Hann taper without zero endpoints, `0.5 - 0.5 cos(2 pi (n+1)/(L+1))`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * (n + 1) as f64 / (len + 1) as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" | "hanning" => Ok(Window::Hann),
            "rect" | "rectangular" => Ok(Window::Rectangular),
            other => Err(Error::InvalidStft(format!("unknown window `{other}`"))),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Hann => "hann",
            Window::Rectangular => "rect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            len: 128,
            hop: 8,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 || self.hop == 0 || self.hop > self.len {
            return Err(Error::InvalidStft(format!(
                "need 1 <= hop <= L, got L={} hop={}",
                self.len, self.hop
            )));
        }
        Ok(())
    }

    /// Fraction of each window shared with the next one.
    pub fn overlap(&self) -> f64 {
        (self.len - self.hop) as f64 / self.len as f64
    }

    pub fn frame_rate(&self, pri: f64) -> f64 {
        1.0 / (self.hop as f64 * pri)
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        samples.div_ceil(self.hop)
    }
}

/// Full range-map: per-column DFT with `1/N` scaling, `N x M` complex.
pub fn range_map(bb: &BasebandMatrix) -> Result<Array2<Complex64>> {
    range_map_truncated(bb, bb.params.n_fast)
}

/// Range-map keeping only the first `keep_rows` range bins.
pub fn range_map_truncated(bb: &BasebandMatrix, keep_rows: usize) -> Result<Array2<Complex64>> {
    bb.validate()?;
    let (n, m) = bb.data.dim();
    let keep = keep_rows.min(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let scale = 1.0 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); keep * m];
    out.par_chunks_mut(keep.max(1)).enumerate().for_each_init(
        || {
            (
                vec![Complex64::new(0.0, 0.0); n],
                vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            )
        },
        |(buf, scratch), (col, dst)| {
            for (b, s) in buf.iter_mut().zip(bb.data.column(col)) {
                *b = Complex64::new(s.re as f64, s.im as f64);
            }
            fft.process_with_scratch(buf, scratch);
            for (d, b) in dst.iter_mut().zip(buf.iter()) {
                *d = b * scale;
            }
        },
    );
    Array2::from_shape_vec((keep, m).f(), out).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Sums range bins `r1..=r2` of every column.
pub fn range_bin_sum(rm: &Array2<Complex64>, r1: usize, r2: usize) -> Result<Vec<Complex64>> {
    let bins = rm.nrows();
    if r1 > r2 || r2 >= bins {
        return Err(Error::RangeBinsOutOfBounds { r1, r2, bins });
    }
    Ok(rm
        .columns()
        .into_iter()
        .map(|c| c.iter().skip(r1).take(r2 - r1 + 1).sum())
        .collect())
}

/// Power spectrogram `|STFT|^2` of a slow-time sequence.
///
/// Frame `j` is centered on sample `j * hop` with zeros outside the
/// sequence, giving `ceil(len / hop)` frames. Rows are shifted so zero
/// Doppler sits at row `L/2`.
pub fn spectrogram(v: &[Complex64], p: &StftParams, pri: f64) -> Result<RadarImage> {
    p.validate()?;
    if v.len() < p.len {
        return Err(Error::SequenceTooShort {
            len: v.len(),
            window: p.len,
        });
    }
    if !(pri > 0.0) {
        return Err(Error::InvalidParams("PRI must be positive".into()));
    }
    let l = p.len;
    let half = (l / 2) as isize;
    let window = p.window.coefficients(l);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let frames = p.frame_count(v.len());

    let columns: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|j| {
            let center = (j * p.hop) as isize;
            let mut buf: Vec<Complex64> = (0..l)
                .map(|i| {
                    let idx = center - half + i as isize;
                    if idx >= 0 && (idx as usize) < v.len() {
                        v[idx as usize] * window[i]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            fft.process(&mut buf);
            (0..l)
                .map(|k| buf[(k + l - l / 2) % l].norm_sqr())
                .collect()
        })
        .collect();

    let mut pixels = Array2::zeros((l, frames));
    for (j, col) in columns.into_iter().enumerate() {
        pixels.column_mut(j).assign(&ArrayView1::from(&col));
    }
    RadarImage::new(
        pixels,
        1.0 / (pri * l as f64),
        p.hop as f64 * pri,
        ImageKind::Spectrogram,
    )
}

/// Anything with a magnitude.
pub trait Magnitude {
    fn magnitude(&self) -> f64;
}

impl Magnitude for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Magnitude for f32 {
    fn magnitude(&self) -> f64 {
        self.abs() as f64
    }
}

impl Magnitude for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Magnitude for Complex32 {
    fn magnitude(&self) -> f64 {
        (self.re as f64).hypot(self.im as f64)
    }
}

/// `10 log10 |x|` elementwise; zero magnitudes map to `floor_db`.
pub fn log_magnitude<T: Magnitude>(x: &Array2<T>, floor_db: f64) -> Array2<f64> {
    x.map(|v| {
        let m = v.magnitude();
        if m > 0.0 {
            (10.0 * m.log10()).max(floor_db)
        } else {
            floor_db
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMethod {
    /// Nearest source pixel on a uniform grid.
    Subsample,
    /// Bilinear interpolation on pixel centers.
    Linear,
}

fn source_coord(i: usize, inp: usize, out: usize) -> f64 {
    ((i as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64)
}

/// Source index used by [`ResizeMethod::Subsample`] for output index `i`.
pub fn subsample_index(i: usize, inp: usize, out: usize) -> usize {
    ((i as f64 * inp as f64 / out as f64).round() as usize).min(inp - 1)
}

/// Resamples an image to `rows x cols`; axis steps scale by `in/out`.
pub fn resize(
    img: &RadarImage,
    rows: usize,
    cols: usize,
    method: ResizeMethod,
) -> Result<RadarImage> {
    let pixels = resize_pixels(&img.pixels, rows, cols, method)?;
    let (r0, c0) = img.pixels.dim();
    Ok(RadarImage {
        pixels,
        row_step: img.row_step * r0 as f64 / rows as f64,
        col_step: img.col_step * c0 as f64 / cols as f64,
        kind: img.kind,
    })
}

pub fn resize_pixels(
    src: &Array2<f64>,
    rows: usize,
    cols: usize,
    method: ResizeMethod,
) -> Result<Array2<f64>> {
    let (r0, c0) = src.dim();
    if rows == 0 || cols == 0 || r0 == 0 || c0 == 0 {
        return Err(Error::InvalidParams(
            "resize needs non-empty input and output".into(),
        ));
    }
    Ok(match method {
        ResizeMethod::Subsample => {
            let ri: Vec<usize> = (0..rows).map(|i| subsample_index(i, r0, rows)).collect();
            let ci: Vec<usize> = (0..cols).map(|j| subsample_index(j, c0, cols)).collect();
            Array2::from_shape_fn((rows, cols), |(i, j)| src[[ri[i], ci[j]]])
        }
        ResizeMethod::Linear => {
            let taps = |n: usize, inp: usize| -> Vec<(usize, usize, f64)> {
                (0..n)
                    .map(|i| {
                        let x = source_coord(i, inp, n);
                        let lo = x.floor() as usize;
                        let hi = (lo + 1).min(inp - 1);
                        (lo, hi, x - lo as f64)
                    })
                    .collect()
            };
            let rt = taps(rows, r0);
            let ct = taps(cols, c0);
            Array2::from_shape_fn((rows, cols), |(i, j)| {
                let (r_lo, r_hi, fr) = rt[i];
                let (c_lo, c_hi, fc) = ct[j];
                let top = src[[r_lo, c_lo]] * (1.0 - fc) + src[[r_lo, c_hi]] * fc;
                let bottom = src[[r_hi, c_lo]] * (1.0 - fc) + src[[r_hi, c_hi]] * fc;
                top * (1.0 - fr) + bottom * fr
            })
        }
    })
}

/// 3x3 box smoothing; border pixels average their in-bounds neighbors.
pub fn smooth3x3(src: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = src.dim();
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in i.saturating_sub(1)..=(i + 1).min(rows - 1) {
            for c in j.saturating_sub(1)..=(j + 1).min(cols - 1) {
                sum += src[[r, c]];
                count += 1;
            }
        }
        sum / count as f64
    })
}

/// Magnitude range-map image from complex range bins.
pub fn range_map_image(
    rm: &Array2<Complex64>,
    range_resolution: f64,
    pri: f64,
) -> Result<RadarImage> {
    RadarImage::new(
        rm.map(|v| v.norm()),
        range_resolution,
        pri,
        ImageKind::RangeMap,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_baseband, RadarParams, ScattererTrack, Scenario};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tone(freq_norm: f64, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * freq_norm * m as f64))
            .collect()
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|p| {
                x.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (p * k) as f64 / n as f64)
                    })
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    fn baseband_from_columns(cols: &[Vec<Complex64>]) -> BasebandMatrix {
        let n = cols[0].len();
        let params = RadarParams {
            n_fast: n,
            m_slow: cols.len(),
            ..RadarParams::default()
        };
        let mut bb = BasebandMatrix::zeros(params);
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                bb.data[[i, j]] = Complex32::new(v.re as f32, v.im as f32);
            }
        }
        bb
    }

    #[test]
    fn range_map_matches_naive_dft() {
        let cols: Vec<Vec<Complex64>> = (0..3)
            .map(|j| {
                (0..32)
                    .map(|i| {
                        Complex64::new(((i * 7 + j) % 5) as f64 - 2.0, ((i * 3 + j) % 4) as f64)
                    })
                    .collect()
            })
            .collect();
        let bb = baseband_from_columns(&cols);
        let rm = range_map(&bb).unwrap();
        for (j, c) in cols.iter().enumerate() {
            let c32: Vec<Complex64> = c
                .iter()
                .map(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64))
                .collect();
            for (p, want) in naive_dft(&c32).iter().enumerate() {
                assert!((rm[[p, j]] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn basis_vector_peaks_at_row_40() {
        // the forward kernel is exp(-j2pi pn/N), so exp(+j2pi 40n/N) lands on row 40
        let n = 512;
        let col: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * 40.0 * i as f64 / n as f64))
            .collect();
        let rm = range_map(&baseband_from_columns(&[col])).unwrap();
        let arg = (0..n)
            .max_by(|&a, &b| rm[[a, 0]].norm().partial_cmp(&rm[[b, 0]].norm()).unwrap())
            .unwrap();
        assert_eq!(arg, 40);
    }

    #[test]
    fn walking_ridge_descends() {
        let params = RadarParams {
            m_slow: 1200,
            pri: 0.01,
            ..RadarParams::default()
        };
        // 3 m -> 1 m over 12 s
        let track = ScattererTrack::constant_velocity(3.0, 2.0 / 12.0, 1.0, 12.0);
        let s = Scenario {
            params,
            tracks: vec![track],
            noise_sigma: 0.0,
            truth: vec![],
        };
        let rm = range_map(&synthesize_baseband(&s, 0).unwrap()).unwrap();
        let argmax = |j: usize| {
            (0..rm.nrows())
                .max_by(|&a, &b| rm[[a, j]].norm().partial_cmp(&rm[[b, j]].norm()).unwrap())
                .unwrap()
        };
        assert!((argmax(0) as i64 - 40).abs() <= 1);
        assert!((argmax(1199) as i64 - 13).abs() <= 1);
        assert!(argmax(600) < argmax(100));
    }

    #[test]
    fn range_bin_sum_basics() {
        let rm = Array2::from_shape_fn((8, 4), |(i, j)| Complex64::new(i as f64, j as f64));
        let v = range_bin_sum(&rm, 5, 5).unwrap();
        for (j, x) in v.iter().enumerate() {
            assert_eq!(*x, rm[[5, j]]);
        }
        assert!(range_bin_sum(&Array2::<Complex64>::zeros((8, 3)), 0, 7)
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
        assert!(matches!(
            range_bin_sum(&rm, 2, 8),
            Err(Error::RangeBinsOutOfBounds { .. })
        ));
        assert!(range_bin_sum(&rm, 4, 3).is_err());
    }

    #[test]
    fn stationary_scatterer_gives_flat_bin_sum() {
        let params = RadarParams {
            m_slow: 200,
            ..RadarParams::default()
        };
        let s = Scenario {
            params,
            tracks: vec![ScattererTrack::stationary(3.0, 1.0, 0.2)],
            noise_sigma: 0.0,
            truth: vec![],
        };
        let rm = range_map(&synthesize_baseband(&s, 0).unwrap()).unwrap();
        let v = range_bin_sum(&rm, 10, 128).unwrap();
        let mean = v.iter().map(|z| z.norm()).sum::<f64>() / v.len() as f64;
        assert!(v.iter().all(|z| (z.norm() - mean).abs() <= 0.01 * mean));
    }

    #[test]
    fn tone_peaks_at_100_hz() {
        let p = StftParams::default();
        let img = spectrogram(&tone(0.1, 2000), &p, 1e-3).unwrap();
        assert_abs_diff_eq!(img.row_step, 7.8125);
        let want = img.doppler_row(100.0) as usize;
        assert_eq!(want, 77);
        for j in 0..img.cols() {
            let col = img.pixels.column(j);
            let arg = (0..img.rows())
                .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
                .unwrap();
            assert_eq!(arg, want, "frame {j}");
        }
        assert_eq!(img.cols(), 250);
        assert_abs_diff_eq!(p.frame_rate(1e-3), 125.0);
    }

    #[test]
    fn overlap_is_93_75_percent() {
        assert_abs_diff_eq!(StftParams::default().overlap(), 0.9375);
    }

    #[test]
    fn spectrogram_of_zeros_and_short_input() {
        let z = vec![Complex64::new(0.0, 0.0); 300];
        let img = spectrogram(&z, &StftParams::default(), 1e-3).unwrap();
        assert!(img.pixels.iter().all(|&v| v == 0.0));
        assert!(matches!(
            spectrogram(&z[..100], &StftParams::default(), 1e-3),
            Err(Error::SequenceTooShort { .. })
        ));
        let bad = StftParams {
            hop: 200,
            ..StftParams::default()
        };
        assert!(spectrogram(&z, &bad, 1e-3).is_err());
    }

    #[test]
    fn frame_energy_bound_and_tone_equality() {
        // Parseval: sum_k |X_k|^2 = L * sum_m |w_m v_m|^2 <= L * sum w^2 * sum |v|^2
        let p = StftParams::default();
        let v: Vec<Complex64> = (0..512)
            .map(|m| Complex64::new(((m * 37) % 11) as f64 - 5.0, ((m * 13) % 7) as f64 - 3.0))
            .collect();
        let img = spectrogram(&v, &p, 1e-3).unwrap();
        let w = p.window.coefficients(p.len);
        let wenergy: f64 = w.iter().map(|x| x * x).sum();
        for j in 0..img.cols() {
            let center = (j * p.hop) as isize;
            let seg: Vec<Complex64> = (0..p.len as isize)
                .map(|i| center - 64 + i)
                .filter(|&i| i >= 0 && (i as usize) < v.len())
                .map(|i| v[i as usize])
                .collect();
            let fenergy: f64 = seg.iter().map(|z| z.norm_sqr()).sum();
            let total: f64 = img.pixels.column(j).sum() / p.len as f64;
            assert!(total <= wenergy * fenergy * (1.0 + 1e-12));
        }
        // a unit tone fully inside the sequence has frame energy L * sum w^2
        let img = spectrogram(&tone(0.1, 512), &p, 1e-3).unwrap();
        let total: f64 = img.pixels.column(20).sum();
        assert!((total - p.len as f64 * wenergy).abs() < 1e-6 * total);
    }

    #[test]
    fn log_magnitude_values() {
        let x = Array2::from_shape_vec((1, 3), vec![1.0, 10.0, 0.0]).unwrap();
        let y = log_magnitude(&x, DEFAULT_LOG_FLOOR_DB);
        assert_eq!(y[[0, 0]], 0.0);
        assert_abs_diff_eq!(y[[0, 1]], 10.0);
        assert_eq!(y[[0, 2]], -120.0);
        let z = Array2::from_elem((2, 2), Complex64::new(0.0, 10.0));
        assert_abs_diff_eq!(log_magnitude(&z, -120.0)[[1, 1]], 10.0);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = RadarImage::new(
            Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64),
            0.1,
            0.01,
            ImageKind::Generic,
        )
        .unwrap();
        for m in [ResizeMethod::Subsample, ResizeMethod::Linear] {
            assert_eq!(resize(&img, 5, 7, m).unwrap(), img);
            let c = img.with_pixels(Array2::from_elem((5, 7), 3.5));
            let r = resize(&c, 9, 3, m).unwrap();
            assert_eq!(r.pixels.dim(), (9, 3));
            assert!(r.pixels.iter().all(|&v| (v - 3.5).abs() < 1e-12));
        }
    }

    #[test]
    fn subsample_matches_index_map_oracle() {
        let src = Array2::from_shape_fn((256, 12000), |(i, j)| (i * 100_000 + j) as f64);
        let img = RadarImage::new(src, 0.075, 1e-3, ImageKind::RangeMap).unwrap();
        let out = resize(&img, 128, 384, ResizeMethod::Subsample).unwrap();
        assert_eq!(out.pixels.dim(), (128, 384));
        assert_abs_diff_eq!(out.row_step, 0.15);
        assert_abs_diff_eq!(out.col_step, 1.0 / 32.0, epsilon = 1e-12);
        for i in 0..128 {
            for j in 0..384 {
                let oracle_r = 2 * i;
                let oracle_c = ((j as f64 * 31.25).round() as usize).min(11_999);
                assert_eq!(out.pixels[[i, j]], (oracle_r * 100_000 + oracle_c) as f64);
            }
        }
    }

    #[test]
    fn smooth3x3_preserves_constant_and_averages() {
        let c = Array2::from_elem((4, 5), 2.0);
        assert!(smooth3x3(&c).iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let mut d = Array2::zeros((3, 3));
        d[[1, 1]] = 9.0;
        let s = smooth3x3(&d);
        assert_abs_diff_eq!(s[[1, 1]], 1.0);
        assert_abs_diff_eq!(s[[0, 0]], 9.0 / 4.0);
    }

    proptest! {
        #[test]
        fn linear_resize_stays_within_bounds(
            vals in proptest::collection::vec(-50.0f64..50.0, 12),
            rows in 1usize..9,
            cols in 1usize..9,
        ) {
            let src = Array2::from_shape_vec((3, 4), vals).unwrap();
            let lo = src.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = resize_pixels(&src, rows, cols, ResizeMethod::Linear).unwrap();
            prop_assert!(out.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        }

        #[test]
        fn single_scatterer_within_one_bin(range in 0.8f64..18.0) {
            let params = RadarParams { m_slow: 2, ..RadarParams::default() };
            let s = Scenario {
                params: params.clone(),
                tracks: vec![ScattererTrack::stationary(range, 1.0, 0.002)],
                noise_sigma: 0.0,
                truth: vec![],
            };
            let rm = range_map(&synthesize_baseband(&s, 0).unwrap()).unwrap();
            let arg = (0..rm.nrows())
                .max_by(|&a, &b| rm[[a, 0]].norm().partial_cmp(&rm[[b, 0]].norm()).unwrap())
                .unwrap();
            let want = range / params.range_resolution();
            prop_assert!((arg as f64 - want).abs() <= 1.0);
        }
    }
}

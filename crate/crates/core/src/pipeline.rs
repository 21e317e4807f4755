//! End-to-end processing of one recording: range-map and micro-Doppler
//! images, cleaning, Radon and power-burst segmentation, and the snippets
//! fed to the classifier.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ethogram::{ClassId, ClassifierRegistry, DecoderOptions};
use crate::features::{Dims, FeatureModel, Snippet};
use crate::pbc::{
    in_place_spans, merge_events, power_burst, smooth_pbc, span_bursts, CaptureParams,
    MotionSegment, PbcParams,
};
use crate::preprocess::{
    clean_range_map, clean_spectrogram, CleanParams, RangeMapStages, SpectrogramStages,
};
use crate::radon::{
    build_timeline_with, demote_small_swaths, find_lines, radon_transform, refine_line,
    DetectedLine, LineParams, RadonImage, Timeline, TimelineParams,
};
use crate::rdmap::{
    log_magnitude, range_bin_sum, range_map_truncated, resize_pixels, smooth3x3, spectrogram,
    ImageKind, RadarImage, ResizeMethod, StftParams, DEFAULT_LOG_FLOOR_DB,
};
use crate::scenarios::{class_sample, truth_class};
use crate::sim::{
    synthesize_baseband, BasebandMatrix, RadarParams, Scenario, TruthInterval, TruthLabel,
};

/// Every tunable of the processing chain, loadable from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the radar parameters of simulated scenarios.
    pub radar: Option<RadarParams>,
    /// Range bins kept from each range DFT.
    pub range_bins: usize,
    /// Rows of the processed range-map image.
    pub range_rows: usize,
    /// Columns of the processed range-map image per second of slow time.
    pub cols_per_second: f64,
    /// Range bins summed for the micro-Doppler signature (inclusive).
    pub md_bins: (usize, usize),
    pub log_floor_db: f64,
    pub stft: StftParams,
    pub clean: CleanParams,
    pub lines: LineParams,
    pub max_lines: usize,
    pub timeline: TimelineParams,
    pub pbc: PbcParams,
    pub capture: CaptureParams,
    /// Side length of the square classifier snippets.
    pub snippet_size: usize,
    /// Clean each capture window on its own instead of cutting it from the
    /// cleaned recording, so snippets do not depend on what else happened.
    pub local_snippet_cleaning: bool,
    /// Per-classifier PCA dimension overrides keyed by classifier id.
    pub classifier_dims: BTreeMap<u8, Dims>,
    pub tau: f64,
    pub k: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            radar: None,
            range_bins: 256,
            range_rows: 128,
            cols_per_second: 32.0,
            md_bins: (10, 128),
            log_floor_db: DEFAULT_LOG_FLOOR_DB,
            stft: StftParams::default(),
            clean: CleanParams::default(),
            lines: LineParams::default(),
            max_lines: 6,
            timeline: TimelineParams::default(),
            pbc: PbcParams::default(),
            capture: CaptureParams::default(),
            snippet_size: 128,
            local_snippet_cleaning: true,
            classifier_dims: BTreeMap::new(),
            tau: 0.05,
            k: 1,
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(radar) = &self.radar {
            radar.validate()?;
        }
        self.stft.validate()?;
        self.clean.validate()?;
        self.pbc.validate()?;
        if self.range_bins < 2 || self.range_rows < 2 || !(self.cols_per_second > 0.0) {
            return Err(Error::InvalidParams(
                "range-map image needs at least 2 rows and a positive column rate".into(),
            ));
        }
        let (r1, r2) = self.md_bins;
        if r1 > r2 || r2 >= self.range_bins {
            return Err(Error::RangeBinsOutOfBounds {
                r1,
                r2,
                bins: self.range_bins,
            });
        }
        if self.snippet_size < 2 || self.k == 0 || !(self.tau >= 0.0) {
            return Err(Error::InvalidParams(
                "snippet size, k and tau must be positive".into(),
            ));
        }
        self.registry()?;
        Ok(())
    }

    /// Default classifier registry with the configured dimension overrides.
    pub fn registry(&self) -> Result<ClassifierRegistry> {
        let mut registry = ClassifierRegistry::default();
        for (&id, &dims) in &self.classifier_dims {
            registry.set_dims(id, dims)?;
        }
        Ok(registry)
    }

    pub fn decoder_options(&self) -> Result<DecoderOptions> {
        Ok(DecoderOptions {
            tau: self.tau,
            registry: self.registry()?,
        })
    }
}

/// All intermediate products of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub duration: f64,
    /// Smoothed dB range-map at the processing resolution.
    pub range_db: RadarImage,
    pub rm_stages: RangeMapStages,
    pub radon: RadonImage,
    pub lines: Vec<DetectedLine>,
    pub timeline: Timeline,
    /// Power spectrogram of the summed range bins.
    pub md_power: RadarImage,
    pub md_db: Array2<f64>,
    pub md_stages: SpectrogramStages,
    pub frame_rate: f64,
    pub pc: Vec<f64>,
    pub pcf: Vec<f64>,
    /// Frames inside a detected burst.
    pub pbc_active: Vec<bool>,
    pub pbc_segments: Vec<MotionSegment>,
    pub segments: Vec<MotionSegment>,
    /// Cleaning used for snippets; `None` cuts windows from the recording's
    /// cleaned images.
    pub snippet_clean: Option<CleanParams>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Processing-resolution dB range-map of a complex range-map: subsampled
/// to `range_rows` by `cols_per_second` and smoothed.
pub fn range_db_image(
    rm: &Array2<Complex64>,
    params: &RadarParams,
    cfg: &PipelineConfig,
) -> Result<RadarImage> {
    let duration = params.duration();
    let cols = (duration * cfg.cols_per_second).round() as usize;
    let db = log_magnitude(rm, cfg.log_floor_db);
    let resized = resize_pixels(&db, cfg.range_rows, cols, ResizeMethod::Subsample)?;
    let row_step = params.range_resolution() * rm.nrows() as f64 / cfg.range_rows as f64;
    RadarImage::new(
        smooth3x3(&resized),
        row_step,
        duration / cols as f64,
        ImageKind::RangeMap,
    )
}

/// Power spectrogram of the configured range bins.
pub fn md_power_image(
    rm: &Array2<Complex64>,
    params: &RadarParams,
    cfg: &PipelineConfig,
) -> Result<RadarImage> {
    let summed = range_bin_sum(rm, cfg.md_bins.0, cfg.md_bins.1)?;
    spectrogram(&summed, &cfg.stft, params.pri)
}

/// Runs the full chain on a baseband recording.
pub fn run_pipeline(bb: &BasebandMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    stage("config", cfg.validate())?;
    stage("input", bb.validate())?;
    let params = &bb.params;
    let duration = params.duration();
    let cols = (duration * cfg.cols_per_second).round() as usize;
    if cols < 2 || bb.data.ncols() < cfg.stft.len {
        return Err(Error::Stage {
            stage: "input",
            source: Box::new(Error::SequenceTooShort {
                len: bb.data.ncols(),
                window: cfg.stft.len,
            }),
        });
    }

    let rm = stage("range-map", range_map_truncated(bb, cfg.range_bins))?;
    let range_db = stage("range-map", range_db_image(&rm, params, cfg))?;
    let rm_stages = stage(
        "range-map cleaning",
        clean_range_map(&range_db.pixels, &cfg.clean),
    )?;

    let radon = stage("radon", radon_transform(&rm_stages.kernel_cleaned))?;
    let lines: Vec<DetectedLine> = find_lines(&radon, cfg.max_lines, &cfg.lines)
        .iter()
        .map(|l| refine_line(&rm_stages.kernel_cleaned, l, &cfg.lines))
        .collect();
    let timeline = stage(
        "radon",
        build_timeline_with(
            &rm_stages.kernel_cleaned,
            &lines,
            range_db.col_step,
            &cfg.timeline,
        ),
    )?;
    let timeline = demote_small_swaths(
        &rm_stages.kernel_cleaned,
        &timeline,
        range_db.col_step,
        cfg.timeline.min_swath / range_db.row_step,
    );

    let md_power = stage("spectrogram", md_power_image(&rm, params, cfg))?;
    let md_db = log_magnitude(&md_power.pixels, cfg.log_floor_db);
    let md_stages = stage(
        "spectrogram cleaning",
        clean_spectrogram(&md_db, &cfg.clean),
    )?;

    // the burst curve squares its input, so feed it cleaned magnitudes
    let mut magnitude = md_power.pixels.mapv(f64::sqrt);
    magnitude.zip_mut_with(&md_stages.outliers_removed, |m, &keep| {
        if keep == 0.0 {
            *m = 0.0;
        }
    });
    let frame_rate = cfg.stft.frame_rate(params.pri);
    let pc = stage(
        "pbc",
        power_burst(&md_power.with_pixels(magnitude), &cfg.pbc),
    )?;
    let pcf = smooth_pbc(&pc, cfg.pbc.w);
    let (pbc_segments, pbc_active) =
        span_bursts(&pcf, &in_place_spans(&timeline), &cfg.pbc, frame_rate);
    let segments = merge_events(&timeline, &pbc_segments, &cfg.capture, duration);

    Ok(PipelineOutput {
        duration,
        range_db,
        rm_stages,
        radon,
        lines,
        timeline,
        md_power,
        md_db,
        md_stages,
        frame_rate,
        pc,
        pcf,
        pbc_active,
        pbc_segments,
        segments,
        snippet_clean: cfg.local_snippet_cleaning.then_some(cfg.clean),
    })
}

/// Synthesizes `scenario` (with the configured radar override) and runs the
/// pipeline on it.
pub fn process_scenario(
    scenario: &Scenario,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(BasebandMatrix, PipelineOutput)> {
    let mut scenario = scenario.clone();
    if let Some(radar) = &cfg.radar {
        scenario.params = radar.clone();
    }
    let bb = stage("simulate", synthesize_baseband(&scenario, seed))?;
    let out = run_pipeline(&bb, cfg)?;
    Ok((bb, out))
}

fn scale_to_unit_max(mut img: Array2<f64>) -> Array2<f64> {
    let max = img.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        img.mapv_inplace(|v| v / max);
    }
    img
}

/// Shifts rows so the intensity-weighted mean row lands on the middle row;
/// vacated rows are zero.
fn recenter_rows(img: &Array2<f64>) -> Array2<f64> {
    let rows = img.nrows();
    let (mut mass, mut moment) = (0.0, 0.0);
    for (r, row) in img.rows().into_iter().enumerate() {
        let m: f64 = row.sum();
        mass += m;
        moment += m * r as f64;
    }
    if !(mass > 0.0) {
        return img.clone();
    }
    let shift = (rows / 2) as isize - (moment / mass).round() as isize;
    let mut out = Array2::zeros(img.dim());
    for r in 0..rows as isize {
        let dst = r + shift;
        if dst >= 0 && dst < rows as isize {
            out.row_mut(dst as usize).assign(&img.row(r as usize));
        }
    }
    out
}

fn column_span(window: (f64, f64), rate: f64, cols: usize) -> Option<(usize, usize)> {
    let c0 = ((window.0 * rate).floor().max(0.0) as usize).min(cols);
    let c1 = ((window.1 * rate).ceil().max(0.0) as usize).min(cols);
    (c1 >= c0 + 2).then_some((c0, c1))
}

impl PipelineOutput {
    /// Seconds per processed range-map column.
    pub fn rm_col_step(&self) -> f64 {
        self.range_db.col_step
    }

    /// Micro-Doppler and range-map snippet over a time window, or `None`
    /// when the window covers fewer than two columns of either image.
    ///
    /// With `snippet_clean` set, the window is cut from the dB images and
    /// cleaned on its own; otherwise it is sliced from the recording's
    /// cleaned stages. The range-map part is recentered on its mean row.
    /// Both are resized to `size x size` and scaled to a unit maximum.
    pub fn snippet(&self, window: (f64, f64), size: usize) -> Result<Option<Snippet>> {
        let Some((m0, m1)) = column_span(window, self.frame_rate, self.md_db.ncols()) else {
            return Ok(None);
        };
        let Some((r0, r1)) = column_span(
            window,
            1.0 / self.rm_col_step(),
            self.range_db.pixels.ncols(),
        ) else {
            return Ok(None);
        };
        let (md, rm) = match &self.snippet_clean {
            Some(p) => {
                let md = clean_spectrogram(&self.md_db.slice(s![.., m0..m1]).to_owned(), p)?
                    .outliers_removed;
                let rm =
                    clean_range_map(&self.range_db.pixels.slice(s![.., r0..r1]).to_owned(), p)?
                        .outliers_removed;
                (md, rm)
            }
            None => (
                self.md_stages
                    .outliers_removed
                    .slice(s![.., m0..m1])
                    .to_owned(),
                self.rm_stages
                    .outliers_removed
                    .slice(s![.., r0..r1])
                    .to_owned(),
            ),
        };
        let md = resize_pixels(&md, size, size, ResizeMethod::Linear)?;
        let rm = resize_pixels(&recenter_rows(&rm), size, size, ResizeMethod::Linear)?;
        Ok(Some(Snippet {
            md: scale_to_unit_max(md),
            rm: scale_to_unit_max(rm),
            label: None,
            center_shifted: true,
        }))
    }

    /// Indices of the segments sent to the classifier.
    pub fn event_indices(&self) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.segments[i].is_event())
            .collect()
    }

    /// One snippet per segment; Radon spans and too-short windows get `None`.
    pub fn segment_snippets(&self, size: usize) -> Result<Vec<Option<Snippet>>> {
        self.segments
            .iter()
            .map(|seg| {
                if seg.is_event() {
                    self.snippet(seg.capture, size)
                } else {
                    Ok(None)
                }
            })
            .collect()
    }

    /// Fused feature vectors aligned with [`PipelineOutput::segment_snippets`].
    pub fn segment_features(
        &self,
        model: &FeatureModel,
        size: usize,
    ) -> Result<Vec<Option<Vec<f64>>>> {
        self.segment_snippets(size)?
            .iter()
            .map(|s| s.as_ref().map(|s| model.features(s)).transpose())
            .collect()
    }

    /// Ground-truth class of every segment by capture-window overlap.
    pub fn segment_truth(&self, truth: &[TruthInterval]) -> Vec<Option<ClassId>> {
        self.segments
            .iter()
            .map(|seg| {
                if seg.is_event() {
                    truth_class(truth, seg.capture)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Detected event whose capture window overlaps `interval` the most.
    pub fn best_event(&self, interval: (f64, f64)) -> Option<usize> {
        let mut best = (None, 0.0);
        for i in self.event_indices() {
            let w = self.segments[i].capture;
            let ov = (w.1.min(interval.1) - w.0.max(interval.0)).max(0.0);
            if ov > best.1 {
                best = (Some(i), ov);
            }
        }
        best.0
    }
}

/// One labeled corpus entry.
#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub class: ClassId,
    pub seed: u64,
    pub snippet: Snippet,
    /// Whether the snippet window came from a detected segment rather than
    /// the truth interval.
    pub detected: bool,
}

/// Snippet for the truth interval of `class`: the best-overlapping detected
/// event if any, otherwise the truth interval itself.
pub fn class_snippet(
    out: &PipelineOutput,
    truth: &[TruthInterval],
    class: ClassId,
    size: usize,
) -> Result<(Snippet, bool)> {
    let iv = truth
        .iter()
        .find(|t| t.label == TruthLabel::Class(class))
        .ok_or_else(|| Error::MissingClass {
            class: class.to_string(),
        })?;
    let interval = (iv.onset, iv.offset);
    if let Some(i) = out.best_event(interval) {
        if let Some(mut s) = out.snippet(out.segments[i].capture, size)? {
            s.label = Some(class);
            return Ok((s, true));
        }
    }
    let mut s = out
        .snippet(interval, size)?
        .ok_or_else(|| Error::InvalidScenario(format!("truth interval of {class} is too short")))?;
    s.label = Some(class);
    Ok((s, false))
}

/// Seed of sample `index` of `class` in a corpus built from `base`.
pub fn corpus_seed(base: u64, class: ClassId, index: usize) -> u64 {
    base.wrapping_mul(1_000_003)
        .wrapping_add(class.number() as u64 * 10_007)
        .wrapping_add(index as u64)
}

/// Simulates `per_class` randomized recordings of every class and extracts
/// one labeled snippet from each.
pub fn build_corpus(
    classes: &[ClassId],
    per_class: usize,
    base_seed: u64,
    noise_sigma: f64,
    cfg: &PipelineConfig,
) -> Result<Vec<CorpusSample>> {
    let jobs: Vec<(ClassId, usize)> = classes
        .iter()
        .flat_map(|&c| (0..per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(class, i)| {
            let seed = corpus_seed(base_seed, class, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scenario = class_sample(class, &mut rng, noise_sigma)?;
            let (_, out) = process_scenario(&scenario, seed, cfg)?;
            let (snippet, detected) =
                class_snippet(&out, &scenario.truth, class, cfg.snippet_size)?;
            Ok(CorpusSample {
                class,
                seed,
                snippet,
                detected,
            })
        })
        .collect()
}

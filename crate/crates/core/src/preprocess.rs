//! Image cleaning for range-maps and spectrograms.
//!
//! Range-map chain: floor-relative dB, column normalization, histogram
//! thresholding (eCLEAN), small-cluster removal, kernel cleaning.
//! Spectrogram chain: floor-relative dB, eCLEAN, small-cluster removal.

use std::collections::VecDeque;

use ndarray::{s, Array2, Zip};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanParams {
    /// Upper histogram bins kept in range-map mode.
    pub keep_bins: usize,
    /// Fraction of upper histogram bins kept in spectrogram mode.
    pub keep_fraction: f64,
    pub histogram_bins: usize,
    pub outlier_min_pixels_rm: usize,
    pub outlier_min_pixels_md: usize,
    pub kernel_win: usize,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self {
            keep_bins: 20,
            keep_fraction: 0.6,
            histogram_bins: 100,
            outlier_min_pixels_rm: 50,
            outlier_min_pixels_md: 150,
            kernel_win: 6,
        }
    }
}

impl CleanParams {
    pub fn validate(&self) -> Result<()> {
        if self.keep_bins == 0
            || self.histogram_bins == 0
            || self.kernel_win == 0
            || !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0)
            || self.outlier_min_pixels_rm == 0
            || self.outlier_min_pixels_md == 0
        {
            return Err(Error::InvalidParams(format!(
                "invalid clean params {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of upper histogram bins kept for `mode`.
    pub fn kept_bins(&self, mode: CleanMode) -> usize {
        match mode {
            CleanMode::RangeMap => self.keep_bins,
            CleanMode::Spectrogram => {
                ((self.keep_fraction * self.histogram_bins as f64).round() as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanMode {
    RangeMap,
    Spectrogram,
}

/// Divides every element by its column maximum; all-zero columns stay zero.
pub fn column_normalize(img: &Array2<f64>) -> Array2<f64> {
    let mut out = img.clone();
    for mut col in out.columns_mut() {
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max != 0.0 && max.is_finite() {
            col.mapv_inplace(|v| v / max);
        }
    }
    out
}

/// dB image relative to its median level, clipped at zero, so background
/// noise becomes exact zeros and the target sits above.
pub fn floor_relative(db: &Array2<f64>) -> Array2<f64> {
    let mut sorted: Vec<f64> = db.iter().cloned().collect();
    if sorted.is_empty() {
        return db.clone();
    }
    let mid = sorted.len() / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let median = *median;
    db.mapv(|v| (v - median).max(0.0))
}

/// Histogram thresholding over the nonzero pixels: `histogram_bins` equal
/// bins span `[min, max]`, and pixels in the upper `kept_bins(mode)` bins
/// survive.
pub fn eclean(img: &Array2<f64>, params: &CleanParams, mode: CleanMode) -> Result<Array2<f64>> {
    params.validate()?;
    Ok(eclean_bins(
        img,
        params.histogram_bins,
        params.kept_bins(mode),
    ))
}

/// [`eclean`] with an explicit histogram size and number of kept bins.
pub fn eclean_bins(img: &Array2<f64>, bins: usize, keep: usize) -> Array2<f64> {
    let (lo, hi) = img
        .iter()
        .filter(|&&v| v != 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if keep >= bins || !lo.is_finite() {
        return img.clone();
    }
    let width = (hi - lo) / bins as f64;
    if width <= 0.0 {
        return img.clone();
    }
    let first_kept = bins - keep;
    img.mapv(|v| {
        if v == 0.0 {
            return 0.0;
        }
        let bin = (((v - lo) / width).floor() as usize).min(bins - 1);
        if bin >= first_kept {
            v
        } else {
            0.0
        }
    })
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels 8-connected components of nonzero pixels; returns labels
/// (0 = background) and component sizes indexed by `label - 1`.
pub fn label_components(img: &Array2<f64>) -> (Array2<u32>, Vec<usize>) {
    let (rows, cols) = img.dim();
    let mut labels = Array2::<u32>::zeros((rows, cols));
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            if img[[r, c]] == 0.0 || labels[[r, c]] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            let mut size = 0;
            labels[[r, c]] = label;
            queue.push_back((r, c));
            while let Some((y, x)) = queue.pop_front() {
                size += 1;
                for (dy, dx) in NEIGHBORS {
                    let ny = y as isize + dy;
                    let nx = x as isize + dx;
                    if ny < 0 || nx < 0 || ny >= rows as isize || nx >= cols as isize {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    if img[[ny, nx]] != 0.0 && labels[[ny, nx]] == 0 {
                        labels[[ny, nx]] = label;
                        queue.push_back((ny, nx));
                    }
                }
            }
            sizes.push(size);
        }
    }
    (labels, sizes)
}

/// Zeroes every 8-connected component with fewer than `min_pixels` pixels.
pub fn remove_outliers(img: &Array2<f64>, min_pixels: usize) -> Array2<f64> {
    let (labels, sizes) = label_components(img);
    let mut out = img.clone();
    Zip::from(&mut out).and(&labels).for_each(|v, &l| {
        if l != 0 && sizes[l as usize - 1] < min_pixels {
            *v = 0.0;
        }
    });
    out
}

fn block_sum(img: &Array2<f64>, top: usize, col: usize, win: usize) -> f64 {
    img.slice(s![top + 1 - win..=top, col..col + win]).sum()
}

/// Sliding-kernel line tracker.
///
/// Rows are range bins (row 0 nearest). The tracker finds the farthest row
/// with energy in the first `win`-column block that has any, then slides a `win x win` kernel
/// across slow time one column at a time. At each step it compares the
/// power of the kernel shifted one bin away, unshifted, and one bin nearer,
/// copies the strongest block into a zero image, and follows it. Ties
/// prefer the farther shift; where all three blocks are empty the kernel
/// holds its row.
pub fn kernel_clean(rm: &Array2<f64>, win: usize) -> Result<Array2<f64>> {
    if win == 0 {
        return Err(Error::InvalidParams("kernel window must be >= 1".into()));
    }
    let (rows, cols) = rm.dim();
    let mut out = Array2::zeros((rows, cols));
    if rows < win || cols < win {
        return Ok(out);
    }

    let start = (0..=cols - win).find_map(|n| {
        (0..rows)
            .rev()
            .find(|&r| rm.slice(s![r, n..n + win]).iter().any(|&v| v != 0.0))
            .map(|r| (n, r))
    });
    let Some((first, found)) = start else {
        return Ok(out);
    };
    // `edge` is the farthest row of the unshifted kernel
    let mut edge = found.saturating_sub(1).clamp(win - 1, rows - 1);

    for n in first..=cols - win {
        let away = (edge + 1 < rows).then(|| block_sum(rm, edge + 1, n, win));
        let stay = block_sum(rm, edge, n, win);
        let near = (edge >= win).then(|| block_sum(rm, edge - 1, n, win));
        let pa = away.unwrap_or(f64::NEG_INFINITY);
        let pn = near.unwrap_or(f64::NEG_INFINITY);
        if pa <= 0.0 && stay <= 0.0 && pn <= 0.0 {
            // nothing to follow; hold position across gaps in the track
        } else if away.is_some() && pa >= stay && pa >= pn {
            edge += 1;
        } else if pn > stay {
            edge -= 1;
        }
        let top = edge;
        out.slice_mut(s![top + 1 - win..=top, n..n + win])
            .assign(&rm.slice(s![top + 1 - win..=top, n..n + win]));
    }
    Ok(out)
}

/// Intermediate images of the range-map cleaning chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMapStages {
    pub normalized: Array2<f64>,
    pub ecleaned: Array2<f64>,
    pub outliers_removed: Array2<f64>,
    pub kernel_cleaned: Array2<f64>,
}

/// Full range-map chain on a dB image.
pub fn clean_range_map(db: &Array2<f64>, params: &CleanParams) -> Result<RangeMapStages> {
    params.validate()?;
    let normalized = column_normalize(&floor_relative(db));
    let ecleaned = eclean(&normalized, params, CleanMode::RangeMap)?;
    let outliers_removed = remove_outliers(&ecleaned, params.outlier_min_pixels_rm);
    let kernel_cleaned = kernel_clean(&outliers_removed, params.kernel_win)?;
    Ok(RangeMapStages {
        normalized,
        ecleaned,
        outliers_removed,
        kernel_cleaned,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramStages {
    pub ecleaned: Array2<f64>,
    pub outliers_removed: Array2<f64>,
}

/// Spectrogram chain on a dB image.
pub fn clean_spectrogram(db: &Array2<f64>, params: &CleanParams) -> Result<SpectrogramStages> {
    params.validate()?;
    let ecleaned = eclean(&floor_relative(db), params, CleanMode::Spectrogram)?;
    let outliers_removed = remove_outliers(&ecleaned, params.outlier_min_pixels_md);
    Ok(SpectrogramStages {
        ecleaned,
        outliers_removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob_image(seed: u64, rows: usize, cols: usize, density: f64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            if rng.random::<f64>() < density {
                rng.random_range(0.1..1.0)
            } else {
                0.0
            }
        })
    }

    /// Recursive-free flood fill written independently of `label_components`.
    fn flood_fill_oracle(img: &Array2<f64>, min_pixels: usize) -> Array2<f64> {
        let (rows, cols) = img.dim();
        let mut seen = vec![vec![false; cols]; rows];
        let mut out = img.clone();
        for r in 0..rows {
            for c in 0..cols {
                if img[[r, c]] == 0.0 || seen[r][c] {
                    continue;
                }
                let mut stack = vec![(r, c)];
                let mut members = Vec::new();
                seen[r][c] = true;
                while let Some((y, x)) = stack.pop() {
                    members.push((y, x));
                    for yy in y.saturating_sub(1)..=(y + 1).min(rows - 1) {
                        for xx in x.saturating_sub(1)..=(x + 1).min(cols - 1) {
                            if img[[yy, xx]] != 0.0 && !seen[yy][xx] {
                                seen[yy][xx] = true;
                                stack.push((yy, xx));
                            }
                        }
                    }
                }
                if members.len() < min_pixels {
                    for (y, x) in members {
                        out[[y, x]] = 0.0;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn column_normalize_examples() {
        let img = Array2::from_shape_vec((2, 3), vec![2.0, 3.0, 0.0, 4.0, 3.0, 0.0]).unwrap();
        let n = column_normalize(&img);
        assert_eq!(n.column(0).to_vec(), vec![0.5, 1.0]);
        assert_eq!(n.column(1).to_vec(), vec![1.0, 1.0]);
        assert_eq!(n.column(2).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn eclean_keep_all_is_identity() {
        let img = blob_image(1, 20, 20, 0.5);
        assert_eq!(eclean_bins(&img, 100, 100), img);
    }

    #[test]
    fn eclean_two_level_histogram() {
        let mut img = Array2::from_elem((25, 40), 1.0);
        for j in 0..5 {
            img[[0, j]] = 10.0;
        }
        let params = CleanParams::default();
        let out = eclean(&img, &params, CleanMode::RangeMap).unwrap();
        assert_eq!(out.iter().filter(|&&v| v == 10.0).count(), 5);
        assert_eq!(out.iter().filter(|&&v| v == 1.0).count(), 0);
    }

    #[test]
    fn eclean_matches_bin_edge_oracle() {
        let params = CleanParams::default();
        for seed in 0..10 {
            let img = blob_image(seed, 30, 40, 0.7);
            let out = eclean(&img, &params, CleanMode::RangeMap).unwrap();
            let nz: Vec<f64> = img.iter().cloned().filter(|&v| v != 0.0).collect();
            let lo = nz.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = nz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // histogram with 100 counted bins; keep the top 20
            let edges: Vec<f64> = (0..=100)
                .map(|k| lo + (hi - lo) * k as f64 / 100.0)
                .collect();
            for (a, b) in img.iter().zip(out.iter()) {
                let keep = *a != 0.0 && *a >= edges[80];
                assert_eq!(*b, if keep { *a } else { 0.0 });
            }
        }
    }

    #[test]
    fn spectrogram_mode_keeps_upper_sixty_percent() {
        let p = CleanParams::default();
        assert_eq!(p.kept_bins(CleanMode::Spectrogram), 60);
        let img = Array2::from_shape_fn((1, 101), |(_, j)| 1.0 + j as f64);
        let out = eclean(&img, &p, CleanMode::Spectrogram).unwrap();
        // range [1, 101], threshold 1 + 0.4*100 = 41
        for j in 0..101 {
            let v = 1.0 + j as f64;
            assert_eq!(out[[0, j]] != 0.0, v >= 41.0, "value {v}");
        }
    }

    #[test]
    fn outlier_boundary_cases() {
        let mut img = Array2::zeros((20, 20));
        img[[3, 3]] = 1.0;
        assert!(remove_outliers(&img, 50).iter().all(|&v| v == 0.0));

        let mut img = Array2::zeros((20, 20));
        for k in 0..50 {
            img[[k / 10 + 5, k % 10 + 2]] = 0.7;
        }
        assert_eq!(remove_outliers(&img, 50), img);
        assert!(remove_outliers(&img, 51).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let mut img = Array2::zeros((5, 5));
        for k in 0..5 {
            img[[k, k]] = 1.0;
        }
        assert_eq!(remove_outliers(&img, 5), img);
    }

    #[test]
    fn outliers_match_flood_fill_oracle() {
        for seed in 0..20 {
            let img = blob_image(seed, 40, 60, 0.35);
            for min in [1, 3, 10, 50] {
                assert_eq!(remove_outliers(&img, min), flood_fill_oracle(&img, min));
            }
        }
    }

    fn line_image(rows: usize, cols: usize, low: usize, height: usize) -> Array2<f64> {
        let mut img = Array2::zeros((rows, cols));
        img.slice_mut(s![low..low + height, ..]).fill(1.0);
        img
    }

    #[test]
    fn kernel_clean_reproduces_six_pixel_line() {
        let img = line_image(128, 384, 40, 6);
        assert_eq!(kernel_clean(&img, 6).unwrap(), img);
    }

    #[test]
    fn kernel_clean_zero_in_zero_out() {
        let z = Array2::zeros((128, 384));
        assert_eq!(kernel_clean(&z, 6).unwrap(), z);
    }

    #[test]
    fn kernel_clean_drops_disjoint_noise_line() {
        let mut img = line_image(128, 384, 80, 6);
        // weaker horizontal clutter line starting a third of the way in
        img.slice_mut(s![50..53, 128..]).fill(0.6);
        let out = kernel_clean(&img, 6).unwrap();
        assert!(out.slice(s![50..53, ..]).iter().all(|&v| v == 0.0));
        assert_eq!(out.slice(s![80..86, ..]), img.slice(s![80..86, ..]));
    }

    #[test]
    fn kernel_clean_follows_a_slope() {
        // descending ridge, one bin every second column
        let mut img = Array2::zeros((128, 120));
        for j in 0..120 {
            let top = 100 - j / 2;
            img.slice_mut(s![top - 3..=top, j]).fill(1.0);
        }
        let out = kernel_clean(&img, 6).unwrap();
        let kept: f64 = out.sum();
        assert!(kept >= 0.9 * img.sum(), "kept {kept} of {}", img.sum());
    }

    #[test]
    fn kernel_clean_bridges_gaps() {
        let mut img = Array2::zeros((64, 120));
        for c in (0..40).chain(70..120) {
            img[[30, c]] = 1.0;
        }
        let out = kernel_clean(&img, 6).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn kernel_clean_column_support_is_bounded() {
        // a column is covered by up to `win` kernels that drift one row per step
        for seed in 0..5 {
            let img = blob_image(seed, 64, 96, 0.3);
            let out = kernel_clean(&img, 6).unwrap();
            for c in 0..96 {
                let rows: Vec<usize> = (0..64).filter(|&r| out[[r, c]] != 0.0).collect();
                if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
                    assert!(last - first < 2 * 6 - 1);
                }
            }
        }
    }

    #[test]
    fn floor_relative_zeroes_the_lower_half() {
        let img = Array2::from_shape_fn((1, 9), |(_, j)| j as f64 * 3.0 - 60.0);
        let f = floor_relative(&img);
        assert_eq!(f.iter().filter(|&&v| v == 0.0).count(), 5);
        assert_eq!(f[[0, 8]], 12.0);
    }

    fn arb_image() -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 12 * 15)
            .prop_map(|v| Array2::from_shape_vec((12, 15), v).unwrap())
    }

    proptest! {
        #[test]
        fn eclean_shrinks_support_and_is_monotone(img in arb_image(), keep in 1usize..100) {
            let small = eclean_bins(&img, 100, keep);
            let large = eclean_bins(&img, 100, keep + 1);
            for ((a, s), l) in img.iter().zip(small.iter()).zip(large.iter()) {
                prop_assert!(*s == 0.0 || s == a);
                prop_assert!(*s == 0.0 || l == s);
            }
        }

        #[test]
        fn remove_outliers_is_idempotent(img in arb_image(), min in 1usize..12) {
            let once = remove_outliers(&img, min);
            prop_assert_eq!(remove_outliers(&once, min), once.clone());
            for (a, b) in img.iter().zip(once.iter()) {
                prop_assert!(*b == 0.0 || a == b);
            }
        }

        #[test]
        fn column_normalize_max_is_one(img in arb_image()) {
            let n = column_normalize(&img);
            for (c_in, c_out) in img.columns().into_iter().zip(n.columns()) {
                let max = c_out.iter().cloned().fold(0.0, f64::max);
                if c_in.iter().any(|&v| v != 0.0) {
                    prop_assert_eq!(max, 1.0);
                } else {
                    prop_assert!(c_out.iter().all(|&v| v == 0.0));
                }
                prop_assert!(c_out.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn kernel_clean_is_non_amplifying(img in arb_image()) {
            let out = kernel_clean(&img, 3).unwrap();
            for (a, b) in img.iter().zip(out.iter()) {
                prop_assert!(*b == 0.0 || a == b);
            }
        }
    }
}

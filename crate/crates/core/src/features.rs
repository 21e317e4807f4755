//! 2-D PCA features, fused nearest-neighbor classification and confusion
//! matrices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ethogram::ClassId;

/// Default square snippet size.
pub const DEFAULT_ETA: usize = 128;
pub const DEFAULT_D_MD: usize = 14;
pub const DEFAULT_D_RM: usize = 4;

/// A labeled pair of classifier inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub md: Array2<f64>,
    pub rm: Array2<f64>,
    pub label: Option<ClassId>,
    /// Range-map window recentered on the target.
    pub center_shifted: bool,
}

impl Snippet {
    pub fn eta(&self) -> usize {
        self.md.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.md.nrows();
        if self.md.dim() != (eta, eta) || self.rm.dim() != (eta, eta) {
            return Err(Error::ShapeMismatch(format!(
                "snippet images must both be square and equal, got {:?} and {:?}",
                self.md.dim(),
                self.rm.dim()
            )));
        }
        Ok(())
    }
}

/// Result of 2-D PCA training on one image family.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub mean: Array2<f64>,
    /// Top-`d` eigenvectors as columns.
    pub phi: Array2<f64>,
    /// All eigenvalues, descending.
    pub eigvals: Vec<f64>,
}

/// Image covariance `H = (1/I) sum (X - mean)^T (X - mean)`.
pub fn image_covariance(images: &[Array2<f64>]) -> Result<(Array2<f64>, Array2<f64>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParams("2-D PCA needs at least one image".into()))?;
    let (rows, cols) = first.dim();
    if images.iter().any(|x| x.dim() != (rows, cols)) {
        return Err(Error::ShapeMismatch(
            "training images differ in shape".into(),
        ));
    }
    let count = images.len() as f64;
    let mut mean = Array2::zeros((rows, cols));
    for x in images {
        mean += x;
    }
    mean /= count;
    let mut h = Array2::zeros((cols, cols));
    for x in images {
        let c = x - &mean;
        h += &c.t().dot(&c);
    }
    h /= count;
    // symmetrize away rounding
    let h = (&h + &h.t()) * 0.5;
    Ok((mean, h))
}

/// Trains 2-D PCA and keeps the top `d` eigenvectors. Each eigenvector's
/// largest-magnitude entry is made positive.
pub fn pca2d_train(images: &[Array2<f64>], d: usize) -> Result<Pca2d> {
    let (mean, h) = image_covariance(images)?;
    let eta = h.nrows();
    if d == 0 || d > eta {
        return Err(Error::TooManyComponents { d, eta });
    }
    let hm = DMatrix::from_fn(eta, eta, |i, j| h[[i, j]]);
    let eig = hm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eta).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigvals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut phi = Array2::zeros((eta, d));
    for (k, &src) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = (0..eta)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..eta {
            phi[[i, k]] = sign * v[i];
        }
    }
    Ok(Pca2d { mean, phi, eigvals })
}

/// `Y = X Phi`.
pub fn project(x: &Array2<f64>, phi: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != phi.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "cannot project {:?} with {:?}",
            x.dim(),
            phi.dim()
        )));
    }
    Ok(x.dot(phi))
}

/// `X_hat = Y Phi^+` with `Phi^+ = (Phi^T Phi)^-1 Phi^T`.
pub fn reconstruct(y: &Array2<f64>, phi: &Array2<f64>) -> Result<Array2<f64>> {
    if y.ncols() != phi.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cannot reconstruct {:?} with {:?}",
            y.dim(),
            phi.dim()
        )));
    }
    let gram = phi.t().dot(phi);
    let d = gram.nrows();
    let g = DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let min_eig = g
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > 1e-12 * scale) {
        return Err(Error::RankDeficient);
    }
    let inv = g.try_inverse().ok_or(Error::RankDeficient)?;
    let inv = Array2::from_shape_fn((d, d), |(i, j)| inv[(i, j)]);
    let pinv = inv.dot(&phi.t());
    Ok(y.dot(&pinv))
}

/// Column-major vectorization of both projections, micro-Doppler first.
pub fn fuse(y_md: &Array2<f64>, y_rm: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(y_md.len() + y_rm.len());
    for y in [y_md, y_rm] {
        for col in y.columns() {
            out.extend(col.iter());
        }
    }
    out
}

/// Inverse of [`fuse`] for `eta`-row projections.
pub fn unfuse(
    v: &[f64],
    eta: usize,
    d_md: usize,
    d_rm: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if v.len() != eta * (d_md + d_rm) {
        return Err(Error::ShapeMismatch(format!(
            "fused length {} != {eta} * ({d_md} + {d_rm})",
            v.len()
        )));
    }
    let split = eta * d_md;
    let md = Array2::from_shape_vec((d_md, eta), v[..split].to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?
        .reversed_axes();
    let rm = Array2::from_shape_vec((d_rm, eta), v[split..].to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?
        .reversed_axes();
    Ok((md, rm))
}

/// Component counts used by one classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub d_md: usize,
    pub d_rm: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d_md: DEFAULT_D_MD,
            d_rm: DEFAULT_D_RM,
        }
    }
}

/// Trained projections plus the fused training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel {
    pub eta: usize,
    pub d_md: usize,
    pub d_rm: usize,
    pub mean_md: Array2<f64>,
    pub mean_rm: Array2<f64>,
    pub phi_md: Array2<f64>,
    pub phi_rm: Array2<f64>,
    pub eigvals_md: Vec<f64>,
    pub eigvals_rm: Vec<f64>,
    pub train_set: Vec<(Vec<f64>, ClassId)>,
}

impl FeatureModel {
    /// Trains both projections and stores fused vectors at the maximum dims.
    pub fn train(snippets: &[Snippet], dims: Dims) -> Result<Self> {
        let mut labeled = Vec::with_capacity(snippets.len());
        for s in snippets {
            s.validate()?;
            let label = s
                .label
                .ok_or_else(|| Error::InvalidParams("training snippet without a label".into()))?;
            labeled.push((s, label));
        }
        let md: Vec<Array2<f64>> = labeled.iter().map(|(s, _)| s.md.clone()).collect();
        let rm: Vec<Array2<f64>> = labeled.iter().map(|(s, _)| s.rm.clone()).collect();
        let pmd = pca2d_train(&md, dims.d_md)?;
        let prm = pca2d_train(&rm, dims.d_rm)?;
        let eta = pmd.phi.nrows();
        if prm.phi.nrows() != eta {
            return Err(Error::ShapeMismatch(
                "micro-Doppler and range-map sizes differ".into(),
            ));
        }
        let mut model = Self {
            eta,
            d_md: dims.d_md,
            d_rm: dims.d_rm,
            mean_md: pmd.mean,
            mean_rm: prm.mean,
            phi_md: pmd.phi,
            phi_rm: prm.phi,
            eigvals_md: pmd.eigvals,
            eigvals_rm: prm.eigvals,
            train_set: Vec::new(),
        };
        model.train_set = labeled
            .iter()
            .map(|(s, label)| Ok((model.features(s)?, *label)))
            .collect::<Result<_>>()?;
        Ok(model)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d_md: self.d_md,
            d_rm: self.d_rm,
        }
    }

    /// Fused vector at the model's full dims.
    pub fn features(&self, s: &Snippet) -> Result<Vec<f64>> {
        s.validate()?;
        let y_md = project(&s.md, &self.phi_md)?;
        let y_rm = project(&s.rm, &self.phi_rm)?;
        Ok(fuse(&y_md, &y_rm))
    }

    /// Restricts a full fused vector to the leading `dims` components of
    /// each part.
    pub fn truncate(&self, v: &[f64], dims: Dims) -> Result<Vec<f64>> {
        if dims.d_md == 0 || dims.d_rm == 0 || dims.d_md > self.d_md || dims.d_rm > self.d_rm {
            return Err(Error::TooManyComponents {
                d: dims.d_md.max(dims.d_rm),
                eta: self.d_md.min(self.d_rm),
            });
        }
        if v.len() != self.eta * (self.d_md + self.d_rm) {
            return Err(Error::ShapeMismatch(format!(
                "fused vector has length {}",
                v.len()
            )));
        }
        let split = self.eta * self.d_md;
        let mut out = v[..self.eta * dims.d_md].to_vec();
        out.extend_from_slice(&v[split..split + self.eta * dims.d_rm]);
        Ok(out)
    }

    /// Classes present in the training set, sorted.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut c: Vec<ClassId> = self.train_set.iter().map(|(_, l)| *l).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts = BTreeMap::new();
        for (_, l) in &self.train_set {
            *counts.entry(*l).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: ClassId,
    /// `(d2 - d1) / d2` over the two nearest distinct classes.
    pub margin: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NnOptions {
    pub k: usize,
    pub dims: Dims,
}

impl Default for NnOptions {
    fn default() -> Self {
        Self {
            k: 1,
            dims: Dims::default(),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Nearest-neighbor label among training vectors whose labels are in
/// `class_set`. `query` is a full-dims fused vector.
pub fn nn_classify(
    query: &[f64],
    model: &FeatureModel,
    class_set: &[ClassId],
    opts: &NnOptions,
) -> Result<Classification> {
    if class_set.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    let q = model.truncate(query, opts.dims)?;
    let mut scored: Vec<(f64, ClassId)> = Vec::new();
    for (v, label) in &model.train_set {
        if class_set.contains(label) {
            let t = model.truncate(v, opts.dims)?;
            scored.push((euclidean(&q, &t), *label));
        }
    }
    if scored.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let k = opts.k.max(1).min(scored.len());
    let mut votes: BTreeMap<ClassId, (usize, f64)> = BTreeMap::new();
    for &(d, l) in &scored[..k] {
        let e = votes.entry(l).or_insert((0, d));
        e.0 += 1;
    }
    // most votes, then nearest member
    let (label, (_, distance)) = votes
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.total_cmp(&a.1 .1)))
        .expect("k >= 1");

    let mut per_class: BTreeMap<ClassId, f64> = BTreeMap::new();
    for &(d, l) in &scored {
        per_class.entry(l).or_insert(d);
    }
    let mut nearest: Vec<f64> = per_class.values().cloned().collect();
    nearest.sort_by(f64::total_cmp);
    let margin = match nearest.as_slice() {
        [_] => 1.0,
        [d1, d2, ..] if *d2 > 0.0 => (d2 - d1) / d2,
        _ => 0.0,
    };
    Ok(Classification {
        label,
        margin,
        distance,
    })
}

/// Row-normalized confusion matrix; rows are true classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    pub counts: Array2<usize>,
    /// Percentages per row; rows without samples are all zero.
    pub rates: Array2<f64>,
}

impl ConfusionMatrix {
    pub fn from_pairs(classes: &[ClassId], pairs: &[(ClassId, ClassId)]) -> Result<Self> {
        let n = classes.len();
        let index = |c: ClassId| {
            classes
                .iter()
                .position(|&x| x == c)
                .ok_or_else(|| Error::MissingClass {
                    class: c.to_string(),
                })
        };
        let mut counts = Array2::zeros((n, n));
        for &(truth, pred) in pairs {
            counts[[index(truth)?, index(pred)?]] += 1;
        }
        let mut rates = Array2::zeros((n, n));
        for (i, row) in counts.axis_iter(Axis(0)).enumerate() {
            let total: usize = row.sum();
            if total > 0 {
                for j in 0..n {
                    rates[[i, j]] = 100.0 * row[j] as f64 / total as f64;
                }
            }
        }
        Ok(Self {
            classes: classes.to_vec(),
            counts,
            rates,
        })
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.sum();
        if total == 0 {
            return 0.0;
        }
        let diag: usize = self.counts.diag().sum();
        diag as f64 / total as f64
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.rates.sum_axis(Axis(1))
    }
}

/// Classifies every labeled test vector restricted to `class_set`.
pub fn evaluate(
    model: &FeatureModel,
    test_set: &[(Vec<f64>, ClassId)],
    class_set: &[ClassId],
    opts: &NnOptions,
) -> Result<ConfusionMatrix> {
    let mut pairs = Vec::with_capacity(test_set.len());
    for (v, truth) in test_set {
        if !class_set.contains(truth) {
            return Err(Error::MissingClass {
                class: truth.to_string(),
            });
        }
        pairs.push((*truth, nn_classify(v, model, class_set, opts)?.label));
    }
    ConfusionMatrix::from_pairs(class_set, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((a.nrows(), b.ncols()));
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut s = 0.0;
                for k in 0..a.ncols() {
                    s += a[[i, k]] * b[[k, j]];
                }
                out[[i, j]] = s;
            }
        }
        out
    }

    fn frob(a: &Array2<f64>) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn single_image_has_zero_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pca2d_train(&[random_matrix(&mut rng, 6, 6)], 3).unwrap();
        assert!(p.eigvals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_by_two_hand_eigensolve() {
        // X1 = A, X2 = -A: mean 0, H = A^T A
        let a = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 0.0, 1.0]).unwrap();
        let p = pca2d_train(&[a.clone(), -&a], 2).unwrap();
        // A^T A = [[4, 2], [2, 2]]: eigenvalues 3 +- sqrt(5)
        let s5 = 5f64.sqrt();
        assert!((p.eigvals[0] - (3.0 + s5)).abs() < 1e-12);
        assert!((p.eigvals[1] - (3.0 - s5)).abs() < 1e-12);
        // top eigenvector proportional to (2, sqrt5 - 1), largest entry positive
        let norm = (4.0 + (s5 - 1.0).powi(2)).sqrt();
        assert!((p.phi[[0, 0]] - 2.0 / norm).abs() < 1e-12);
        assert!((p.phi[[1, 0]] - (s5 - 1.0) / norm).abs() < 1e-12);
    }

    #[test]
    fn too_many_components_fails() {
        let x = Array2::zeros((4, 4));
        assert!(matches!(
            pca2d_train(&[x], 5),
            Err(Error::TooManyComponents { .. })
        ));
    }

    #[test]
    fn covariance_is_symmetric_psd_and_phi_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imgs: Vec<Array2<f64>> = (0..12).map(|_| random_matrix(&mut rng, 10, 10)).collect();
        let (_, h) = image_covariance(&imgs).unwrap();
        assert_eq!(h, h.t());
        for _ in 0..20 {
            let v = Array1::from_shape_fn(10, |_| rng.random_range(-1.0..1.0));
            assert!(v.dot(&h.dot(&v)) >= -1e-12);
        }
        let p = pca2d_train(&imgs, 10).unwrap();
        let g = p.phi.t().dot(&p.phi);
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-9);
            }
        }
        for w in p.eigvals.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn project_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 5, 5);
        assert_eq!(project(&x, &Array2::eye(5)).unwrap(), x);
        assert!(
            project(&Array2::zeros((5, 5)), &random_matrix(&mut rng, 5, 2))
                .unwrap()
                .iter()
                .all(|&v| v == 0.0)
        );
        let phi = random_matrix(&mut rng, 5, 3);
        let y = project(&x, &phi).unwrap();
        let want = naive_matmul(&x, &phi);
        assert!(y
            .iter()
            .zip(want.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(project(&x, &random_matrix(&mut rng, 4, 2)).is_err());
    }

    #[test]
    fn reconstruction_error_monotone_and_exact_at_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let imgs: Vec<Array2<f64>> = (0..15).map(|_| random_matrix(&mut rng, 12, 12)).collect();
        let full = pca2d_train(&imgs, 12).unwrap();
        for x in imgs.iter().take(5) {
            let mut prev = f64::INFINITY;
            for d in 1..=12 {
                let phi = full.phi.slice(ndarray::s![.., ..d]).to_owned();
                let xh = reconstruct(&project(x, &phi).unwrap(), &phi).unwrap();
                let err = frob(&(x - &xh));
                assert!(err <= prev + 1e-9);
                prev = err;
            }
            assert!(prev / frob(x) < 1e-6);
        }
        assert!(reconstruct(
            &Array2::zeros((12, 3)),
            &full.phi.slice(ndarray::s![.., ..3]).to_owned()
        )
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
    }

    #[test]
    fn rank_deficient_phi_fails() {
        let phi = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            reconstruct(&Array2::zeros((3, 2)), &phi),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn fuse_lengths_and_round_trip() {
        let a = Array2::zeros((128, 14));
        let b = Array2::zeros((128, 4));
        let v = fuse(&a, &b);
        assert_eq!(v.len(), 2304);
        assert!(v.iter().all(|&x| x == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 6, 3);
        let b = random_matrix(&mut rng, 6, 2);
        let v = fuse(&a, &b);
        // column-major: second entry is a[1][0]
        assert_eq!(v[1], a[[1, 0]]);
        assert_eq!(unfuse(&v, 6, 3, 2).unwrap(), (a, b));
    }

    fn cluster_model(rng: &mut ChaCha8Rng, per_class: usize) -> (FeatureModel, Vec<Snippet>) {
        let eta = 8;
        let noise = Normal::new(0.0, 0.05).unwrap();
        let centers: Vec<(ClassId, f64)> = vec![(ClassId::I, 0.0), (ClassId::II, 1.0)];
        let make = |rng: &mut ChaCha8Rng, label: ClassId, c: f64| Snippet {
            md: Array2::from_shape_fn((eta, eta), |(i, j)| {
                c * ((i + j) % 3) as f64 + noise.sample(rng)
            }),
            rm: Array2::from_shape_fn((eta, eta), |(i, _)| c * (i % 2) as f64 + noise.sample(rng)),
            label: Some(label),
            center_shifted: true,
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &(l, c) in &centers {
            for _ in 0..per_class {
                train.push(make(rng, l, c));
                test.push(make(rng, l, c));
            }
        }
        let model = FeatureModel::train(&train, Dims { d_md: 3, d_rm: 2 }).unwrap();
        (model, test)
    }

    #[test]
    fn separated_clusters_classify_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (model, test) = cluster_model(&mut rng, 10);
        let opts = NnOptions {
            k: 1,
            dims: model.dims(),
        };
        let tests: Vec<(Vec<f64>, ClassId)> = test
            .iter()
            .map(|s| (model.features(s).unwrap(), s.label.unwrap()))
            .collect();
        let cm = evaluate(&model, &tests, &[ClassId::I, ClassId::II], &opts).unwrap();
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.rates[[0, 0]], 100.0);
        assert_eq!(cm.rates[[1, 1]], 100.0);
    }

    #[test]
    fn training_vectors_classify_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (model, _) = cluster_model(&mut rng, 6);
        let opts = NnOptions {
            k: 1,
            dims: model.dims(),
        };
        let all = model.classes();
        for (v, l) in &model.train_set {
            let c = nn_classify(v, &model, &all, &opts).unwrap();
            assert_eq!(c.label, *l);
            assert_eq!(c.distance, 0.0);
            assert!(c.margin > 0.0 && c.margin <= 1.0);
        }
    }

    #[test]
    fn class_set_filters_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (model, _) = cluster_model(&mut rng, 4);
        let opts = NnOptions {
            k: 1,
            dims: model.dims(),
        };
        let (v, l) = model.train_set[0].clone();
        assert_eq!(l, ClassId::I);
        let c = nn_classify(&v, &model, &[ClassId::II], &opts).unwrap();
        assert_eq!(c.label, ClassId::II);
        assert_eq!(c.margin, 1.0);
        assert!(matches!(
            nn_classify(&v, &model, &[], &opts),
            Err(Error::EmptyClassSet)
        ));
        assert!(matches!(
            nn_classify(&v, &model, &[ClassId::V], &opts),
            Err(Error::EmptyClassSet)
        ));
    }

    #[test]
    fn confusion_matrix_rows_and_dimension() {
        let classes = [ClassId::I, ClassId::II, ClassId::III];
        let pairs = [
            (ClassId::I, ClassId::I),
            (ClassId::I, ClassId::II),
            (ClassId::I, ClassId::I),
            (ClassId::II, ClassId::II),
            (ClassId::III, ClassId::I),
        ];
        let cm = ConfusionMatrix::from_pairs(&classes, &pairs).unwrap();
        assert_eq!(cm.counts.dim(), (3, 3));
        assert_eq!(cm.counts[[0, 0]], 2);
        for s in cm.row_sums() {
            assert!((s - 100.0).abs() < 0.1);
        }
        let perfect = ConfusionMatrix::from_pairs(
            &classes[..2],
            &[(ClassId::I, ClassId::I), (ClassId::II, ClassId::II)],
        )
        .unwrap();
        assert_eq!(
            perfect.rates,
            Array2::from_diag(&Array1::from_elem(2, 100.0))
        );
        assert!(ConfusionMatrix::from_pairs(&classes[..1], &pairs).is_err());
    }

    proptest! {
        #[test]
        fn projection_never_gains_energy(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let imgs: Vec<Array2<f64>> = (0..5).map(|_| random_matrix(&mut rng, 6, 6)).collect();
            let p = pca2d_train(&imgs, 3).unwrap();
            let x = random_matrix(&mut rng, 6, 6);
            prop_assert!(frob(&project(&x, &p.phi).unwrap()) <= frob(&x) + 1e-12);
        }

        #[test]
        fn unfuse_inverts_fuse(seed in 0u64..500, eta in 1usize..6, dm in 1usize..4, dr in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, eta, dm);
            let b = random_matrix(&mut rng, eta, dr);
            prop_assert_eq!(unfuse(&fuse(&a, &b), eta, dm, dr).unwrap(), (a, b));
        }
    }
}

//! Windowing and feature representations (raw, z-scored, PCA).
//!
//! Transform parameters are fitted on training windows only and then
//! applied unchanged to validation and test windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameLabels, Modality, Session};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::stable_hash;

pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_STRIDE: usize = 15;
pub const DEFAULT_PCA_VARIANCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub participant_id: String,
    pub start_frame: usize,
    pub features: BTreeMap<Modality, Matrix>,
    /// Stage label of the window's final frame.
    pub raw_label: u8,
}

impl Window {
    pub fn len(&self) -> usize {
        self.features.values().next().map_or(0, Matrix::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn modality(&self, m: Modality) -> Result<&Matrix> {
        self.features
            .get(&m)
            .ok_or_else(|| Error::MissingModality(m.to_string()))
    }
}

/// Windows of `length` frames starting at `0, stride, 2·stride, …` while the
/// window fits. Returns an empty list when `length` exceeds the session.
pub fn make_windows(
    session: &Session,
    labels: &FrameLabels,
    length: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if length == 0 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "window ({length}) and stride ({stride}) must be at least 1"
        )));
    }
    if labels.0.len() != session.num_frames {
        return Err(Error::Shape(format!(
            "{} labels for {} frames",
            labels.0.len(),
            session.num_frames
        )));
    }
    let t = session.num_frames;
    if length > t {
        return Ok(Vec::new());
    }
    Ok((0..=t - length)
        .step_by(stride)
        .map(|start| Window {
            participant_id: session.participant_id.clone(),
            start_frame: start,
            features: session
                .features
                .iter()
                .map(|(&m, x)| (m, x.slice_rows(start, length)))
                .collect(),
            raw_label: labels.0[start + length - 1],
        })
        .collect())
}

fn pooled_frames<'a>(
    train: &'a [Window],
    m: Modality,
) -> Result<impl Iterator<Item = &'a [f64]> + 'a> {
    for w in train {
        w.modality(m)?;
    }
    Ok(train.iter().flat_map(move |w| w.features[&m].iter_rows()))
}

fn modality_dim(train: &[Window], m: Modality) -> Result<usize> {
    let first = train.first().ok_or(Error::Empty("training windows"))?;
    let d = first.modality(m)?.cols();
    if train.iter().any(|w| w.features.get(&m).map(Matrix::cols) != Some(d)) {
        return Err(Error::Shape(format!("inconsistent {m} dimension across windows")));
    }
    Ok(d)
}

fn column_means(train: &[Window], m: Modality, d: usize) -> Result<(Vec<f64>, usize)> {
    let mut mean = vec![0.0; d];
    let mut n = 0usize;
    for row in pooled_frames(train, m)? {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
        n += 1;
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    Ok((mean, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub modality: Modality,
    pub mean: Vec<f64>,
    /// Population standard deviation per coordinate.
    pub sd: Vec<f64>,
}

pub fn fit_normalizer(train: &[Window], m: Modality) -> Result<NormParams> {
    let d = modality_dim(train, m)?;
    let (mean, n) = column_means(train, m, d)?;
    let mut var = vec![0.0; d];
    for row in pooled_frames(train, m)? {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let sd = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    Ok(NormParams {
        modality: m,
        mean,
        sd,
    })
}

impl NormParams {
    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = if *sd == 0.0 { 0.0 } else { (*v - mu) / sd };
            }
        }
        out
    }
}

pub fn apply_normalizer(params: &NormParams, window: &Window) -> Result<Window> {
    let x = window.modality(params.modality)?;
    if x.cols() != params.mean.len() {
        return Err(Error::Shape(format!(
            "{} normalizer expects {} columns, window has {}",
            params.modality,
            params.mean.len(),
            x.cols()
        )));
    }
    let mut out = window.clone();
    out.features.insert(params.modality, params.apply_matrix(x));
    Ok(out)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and eigenvectors as matrix columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut a = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaParams {
    pub modality: Modality,
    pub mean: Vec<f64>,
    /// `d × r` matrix with orthonormal columns, stored row-major.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the retained components, descending.
    pub eigenvalues: Vec<f64>,
    pub retained_variance: f64,
    /// Set when the training data had zero total variance.
    pub degenerate: bool,
}

impl PcaParams {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let r = self.rank();
        let mut out = Matrix::zeros(x.rows(), r);
        let mut centered = vec![0.0; self.mean.len()];
        for (i, row) in x.iter_rows().enumerate() {
            for ((c, v), mu) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - mu;
            }
            let proj = out.row_mut(i);
            for (j, comp_row) in self.components.iter().enumerate() {
                let cj = centered[j];
                for (p, u) in proj.iter_mut().zip(comp_row) {
                    *p += u * cj;
                }
            }
        }
        out
    }
}

/// Covariance (divisor n − 1) of frames pooled over `train`.
pub fn training_covariance(train: &[Window], m: Modality) -> Result<(Vec<f64>, Matrix, usize)> {
    let d = modality_dim(train, m)?;
    let (mean, n) = column_means(train, m, d)?;
    if n < 2 {
        return Err(Error::InsufficientClass(format!(
            "PCA needs at least 2 training frames, got {n}"
        )));
    }
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in pooled_frames(train, m)? {
        for ((c, v), mu) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - mu;
        }
        cov.add_outer(&centered, &centered);
    }
    for v in cov.as_mut_slice() {
        *v /= (n - 1) as f64;
    }
    Ok((mean, cov, n))
}

pub fn fit_pca(train: &[Window], m: Modality, variance_target: f64) -> Result<PcaParams> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "pca variance target {variance_target} outside (0, 1]"
        )));
    }
    let (mean, cov, _) = training_covariance(train, m)?;
    let d = mean.len();
    let (values, vectors) = symmetric_eigen(&cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let total: f64 = sorted.iter().sum();

    let degenerate = total <= 0.0;
    let rank = if degenerate {
        1
    } else {
        let mut cum = 0.0;
        let mut r = d;
        for (i, v) in sorted.iter().enumerate() {
            cum += v;
            if cum >= variance_target * total * (1.0 - 1e-12) {
                r = i + 1;
                break;
            }
        }
        r
    };

    let mut columns: Vec<Vec<f64>> = order[..rank]
        .iter()
        .map(|&c| (0..d).map(|r| vectors.get(r, c)).collect())
        .collect();
    for col in &mut columns {
        // Sign convention: the largest-magnitude coordinate is positive.
        let mut lead = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let components = (0..d)
        .map(|r| columns.iter().map(|col| col[r]).collect())
        .collect();
    let retained: f64 = sorted[..rank].iter().sum();
    Ok(PcaParams {
        modality: m,
        mean,
        components,
        eigenvalues: sorted[..rank].to_vec(),
        retained_variance: if degenerate { 0.0 } else { retained / total },
        degenerate,
    })
}

pub fn apply_pca(params: &PcaParams, window: &Window) -> Result<Window> {
    let x = window.modality(params.modality)?;
    if x.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "{} PCA expects {} columns, window has {}",
            params.modality,
            params.input_dim(),
            x.cols()
        )));
    }
    let mut out = window.clone();
    out.features.insert(params.modality, params.apply_matrix(x));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw,
    Normalized,
    Pca,
}

impl Representation {
    pub fn label(self) -> &'static str {
        match self {
            Representation::Raw => "Raw",
            Representation::Normalized => "Normalized",
            Representation::Pca => "PCA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    Identity { modality: Modality, dim: usize },
    Normalize(NormParams),
    Pca(PcaParams),
}

impl Transform {
    pub fn output_dim(&self) -> usize {
        match self {
            Transform::Identity { dim, .. } => *dim,
            Transform::Normalize(p) => p.mean.len(),
            Transform::Pca(p) => p.rank(),
        }
    }

    fn apply_matrix(&self, x: &Matrix) -> Matrix {
        match self {
            Transform::Identity { .. } => x.clone(),
            Transform::Normalize(p) => p.apply_matrix(x),
            Transform::Pca(p) => p.apply_matrix(x),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Transform::Identity { dim, .. } => *dim,
            Transform::Normalize(p) => p.mean.len(),
            Transform::Pca(p) => p.input_dim(),
        }
    }
}

/// Per-modality transforms fitted on one training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransforms {
    pub representation: Representation,
    pub transforms: BTreeMap<Modality, Transform>,
}

impl FittedTransforms {
    pub fn fit(
        representation: Representation,
        train: &[Window],
        modalities: &[Modality],
        pca_variance: f64,
    ) -> Result<Self> {
        let mut transforms = BTreeMap::new();
        for &m in modalities {
            let t = match representation {
                Representation::Raw => Transform::Identity {
                    modality: m,
                    dim: modality_dim(train, m)?,
                },
                Representation::Normalized => Transform::Normalize(fit_normalizer(train, m)?),
                Representation::Pca => Transform::Pca(fit_pca(train, m, pca_variance)?),
            };
            transforms.insert(m, t);
        }
        Ok(Self {
            representation,
            transforms,
        })
    }

    pub fn output_dims(&self) -> BTreeMap<Modality, usize> {
        self.transforms
            .iter()
            .map(|(&m, t)| (m, t.output_dim()))
            .collect()
    }

    /// Transformed copy of `window` holding only the fitted modalities.
    pub fn apply(&self, window: &Window) -> Result<Window> {
        let mut features = BTreeMap::new();
        for (&m, t) in &self.transforms {
            let x = window.modality(m)?;
            if x.cols() != t.input_dim() {
                return Err(Error::Shape(format!(
                    "{m} transform expects {} columns, window has {}",
                    t.input_dim(),
                    x.cols()
                )));
            }
            features.insert(m, t.apply_matrix(x));
        }
        Ok(Window {
            participant_id: window.participant_id.clone(),
            start_frame: window.start_frame,
            features,
            raw_label: window.raw_label,
        })
    }

    /// Hash of every fitted number's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for (m, t) in &self.transforms {
            bytes.extend_from_slice(m.name().as_bytes());
            let mut push = |xs: &[f64]| {
                for x in xs {
                    bytes.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            };
            match t {
                Transform::Identity { dim, .. } => push(&[*dim as f64]),
                Transform::Normalize(p) => {
                    push(&p.mean);
                    push(&p.sd);
                }
                Transform::Pca(p) => {
                    push(&p.mean);
                    for row in &p.components {
                        push(row);
                    }
                    push(&p.eigenvalues);
                }
            }
        }
        stable_hash(0, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::label_frames;
    use crate::rng::SplitMix64;

    fn session_with(num_frames: usize, onsets: Vec<usize>) -> Session {
        let mut x = Matrix::zeros(num_frames, 2);
        for f in 0..num_frames {
            x.set(f, 0, f as f64);
        }
        Session {
            participant_id: "P01".into(),
            frame_rate: 30.0,
            num_frames,
            features: BTreeMap::from([(Modality::Facial, x)]),
            error_onsets: onsets,
        }
    }

    fn window_of(rows: Vec<Vec<f64>>) -> Window {
        Window {
            participant_id: "P01".into(),
            start_frame: 0,
            features: BTreeMap::from([(Modality::Facial, Matrix::from_rows(&rows))]),
            raw_label: 0,
        }
    }

    fn random_windows(seed: u64, n_windows: usize, len: usize, d: usize) -> Vec<Window> {
        let mut rng = SplitMix64::new(seed);
        (0..n_windows)
            .map(|_| {
                window_of(
                    (0..len)
                        .map(|_| (0..d).map(|j| rng.normal() * (j + 1) as f64 + 3.0).collect())
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn window_starts_follow_stride() {
        let s = session_with(100, vec![]);
        let w = make_windows(&s, &label_frames(&s), 30, 15).unwrap();
        let starts: Vec<usize> = w.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 15, 30, 45, 60]);
        assert_eq!(w[1].features[&Modality::Facial].get(0, 0), 15.0);
    }

    #[test]
    fn full_length_window() {
        let s = session_with(50, vec![10, 20, 49]);
        let w = make_windows(&s, &label_frames(&s), 50, 7).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].raw_label, 3);
    }

    #[test]
    fn oversized_window_gives_nothing() {
        let s = session_with(10, vec![]);
        assert!(make_windows(&s, &label_frames(&s), 11, 1).unwrap().is_empty());
        assert!(make_windows(&s, &label_frames(&s), 0, 1).is_err());
    }

    #[test]
    fn class_counts_match_enumeration() {
        let s = session_with(800, vec![200, 400, 600]);
        let w = make_windows(&s, &label_frames(&s), 30, 15).unwrap();
        // Enumerate final frames independently.
        let mut expected = [0usize; 4];
        let mut start = 0;
        while start + 30 <= 800 {
            let last = start + 29;
            let stage = [200, 400, 600].iter().filter(|&&o| o <= last).count();
            expected[stage] += 1;
            start += 15;
        }
        let mut got = [0usize; 4];
        for w in &w {
            got[w.raw_label as usize] += 1;
        }
        assert_eq!(got, expected);
        assert_eq!(expected.iter().sum::<usize>(), 52);
    }

    #[test]
    fn normalizer_is_identity_on_standardized_data() {
        let w = window_of(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let p = fit_normalizer(std::slice::from_ref(&w), Modality::Facial).unwrap();
        let out = apply_normalizer(&p, &w).unwrap();
        for (a, b) in out.features[&Modality::Facial]
            .as_slice()
            .iter()
            .zip(w.features[&Modality::Facial].as_slice())
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_becomes_zero() {
        let w = window_of(vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 4.0]]);
        let p = fit_normalizer(std::slice::from_ref(&w), Modality::Facial).unwrap();
        assert_eq!(p.sd[0], 0.0);
        let out = apply_normalizer(&p, &w).unwrap();
        for r in 0..3 {
            assert_eq!(out.features[&Modality::Facial].get(r, 0), 0.0);
        }
    }

    #[test]
    fn normalized_training_moments() {
        let train = random_windows(11, 6, 20, 4);
        let p = fit_normalizer(&train, Modality::Facial).unwrap();
        let out: Vec<Window> = train.iter().map(|w| apply_normalizer(&p, w).unwrap()).collect();
        let rows: Vec<&[f64]> = out
            .iter()
            .flat_map(|w| w.features[&Modality::Facial].iter_rows())
            .collect();
        let n = rows.len() as f64;
        for j in 0..4 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalizer_needs_training_data() {
        assert!(matches!(fit_normalizer(&[], Modality::Facial), Err(Error::Empty(_))));
    }

    #[test]
    fn one_dimensional_pca() {
        let w = window_of(vec![vec![1.0], vec![3.0], vec![8.0]]);
        let p = fit_pca(std::slice::from_ref(&w), Modality::Facial, 0.95).unwrap();
        assert_eq!(p.rank(), 1);
        assert_eq!(p.components, vec![vec![1.0]]);
        let out = apply_pca(&p, &w).unwrap();
        let y = out.features[&Modality::Facial].as_slice().to_vec();
        let mean = y.iter().sum::<f64>() / 3.0;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((var - p.eigenvalues[0]).abs() < 1e-12);
        assert!((var - 13.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pca_keeps_one_component() {
        let w = window_of(vec![vec![2.0, 2.0]; 5]);
        let p = fit_pca(std::slice::from_ref(&w), Modality::Facial, 0.95).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.rank(), 1);
    }

    #[test]
    fn pca_sign_convention() {
        let train = random_windows(5, 4, 25, 6);
        let p = fit_pca(&train, Modality::Facial, 1.0).unwrap();
        assert_eq!(p.rank(), 6);
        for c in 0..p.rank() {
            let col: Vec<f64> = p.components.iter().map(|r| r[c]).collect();
            let lead = col.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 1.0],
        ]);
        let (vals, vecs) = symmetric_eigen(&a);
        for k in 0..3 {
            let v: Vec<f64> = (0..3).map(|r| vecs.get(r, k)).collect();
            let mut av = vec![0.0; 3];
            a.gemv_acc(&v, &mut av);
            for r in 0..3 {
                assert!((av[r] - vals[k] * v[r]).abs() < 1e-12);
            }
        }
        let trace: f64 = vals.iter().sum();
        assert!((trace - 8.0).abs() < 1e-12);
    }

    #[test]
    fn fitted_transforms_reject_wrong_width() {
        let train = random_windows(1, 2, 5, 3);
        let t = FittedTransforms::fit(Representation::Normalized, &train, &[Modality::Facial], 0.95)
            .unwrap();
        let bad = random_windows(2, 1, 5, 4);
        assert!(matches!(t.apply(&bad[0]), Err(Error::Shape(_))));
        assert!(matches!(
            FittedTransforms::fit(Representation::Raw, &train, &[Modality::Pose], 0.95),
            Err(Error::MissingModality(_))
        ));
    }
}

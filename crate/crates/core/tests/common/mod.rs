//! Helpers shared by integration test targets.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rupture::corpus::Modality;
use rupture::fusion::{build_model, Fusion, ModelConfig};
use rupture::matrix::Matrix;
use rupture::splits::Scheme;
use rupture::nn::{backward, CellKind, Example, Network, Parameters};
use rupture::rng::SplitMix64;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SAMPLES: usize = 120;
pub const HIDDEN: usize = 8;
pub const STEPS: usize = 7;
pub const BATCH: usize = 4;

pub struct Case {
    pub name: String,
    pub kind: CellKind,
    pub net: Network,
}

impl Case {
    pub fn input_sizes(&self) -> Vec<usize> {
        self.net.encoders.iter().map(|e| e.input_size()).collect()
    }

    pub fn classes(&self) -> usize {
        self.net.num_classes()
    }
}

/// Networks produced by each fusion assembly with H = 8 and at most five
/// features per modality. Late fusion contributes one case per submodel.
pub fn cases() -> Vec<Case> {
    let dims = BTreeMap::from([(Modality::Facial, 3), (Modality::Pose, 5), (Modality::Audio, 2)]);
    let mut out = Vec::new();
    for kind in [CellKind::Lstm, CellKind::Gru] {
        for (fusion, scheme, modalities) in [
            (Fusion::Early, Scheme::MultipleErrorDetection, vec![Modality::Facial, Modality::Audio]),
            (Fusion::Intermediate, Scheme::SuccessiveDiscrimination, vec![Modality::Facial, Modality::Pose, Modality::Audio]),
            (Fusion::Late, Scheme::ErrorDetection, vec![Modality::Facial, Modality::Pose]),
        ] {
            let cfg = ModelConfig {
                scheme,
                cell: kind,
                fusion,
                modalities,
                hidden: HIDDEN,
                seed: 11,
                ..ModelConfig::default()
            };
            let model = build_model(&cfg, &dims).unwrap();
            for (k, net) in model.networks.into_iter().enumerate() {
                let name = if fusion == Fusion::Late { format!("late-submodel-{k}") } else { fusion.to_string() };
                out.push(Case { name, kind, net });
            }
        }
    }
    out
}

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
}

pub fn batch_inputs(case: &Case, rng: &mut SplitMix64) -> (Vec<Vec<Matrix>>, Vec<usize>) {
    let xs = (0..BATCH)
        .map(|_| case.input_sizes().iter().map(|&d| random_matrix(rng, STEPS, d)).collect())
        .collect();
    let labels = (0..BATCH).map(|_| rng.below(case.classes())).collect();
    (xs, labels)
}

pub fn examples<'a>(xs: &'a [Vec<Matrix>], labels: &[usize]) -> Vec<Example<'a>> {
    xs.iter()
        .zip(labels)
        .map(|(groups, &label)| Example { inputs: groups.iter().collect(), label })
        .collect()
}

pub fn set_param(net: &mut Network, index: usize, value: f64) {
    let mut k = index;
    for s in net.param_slices_mut() {
        if k < s.len() {
            s[k] = value;
            return;
        }
        k -= s.len();
    }
    panic!("parameter index out of range");
}

pub fn flat(p: &impl Parameters) -> Vec<f64> {
    p.param_slices().concat()
}

pub fn max_relative_error(case: &Case, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let net = case.net.clone();
    let (xs, labels) = batch_inputs(case, &mut rng);
    let batch = examples(&xs, &labels);
    let (_, grads) = backward(&net, &batch).unwrap();
    let analytic = flat(&grads);
    let base = flat(&net);
    assert!(base.len() >= SAMPLES);

    let mut indices: Vec<usize> = (0..base.len()).collect();
    rng.shuffle(&mut indices);
    let mut worst: f64 = 0.0;
    for &i in indices.iter().take(SAMPLES) {
        let mut plus = net.clone();
        set_param(&mut plus, i, base[i] + STEP);
        let mut minus = net.clone();
        set_param(&mut minus, i, base[i] - STEP);
        let numeric = (plus.mean_loss(&batch).unwrap() - minus.mean_loss(&batch).unwrap()) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}


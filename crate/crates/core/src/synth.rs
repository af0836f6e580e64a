//! Seeded synthetic corpora with escalating reactions.
//!
//! Each session has four stages separated by three onsets. In stage `s`
//! every frame of modality `m` is `b + s·δ·u + ε`, where the baseline `b`
//! and unit direction `u` are drawn per (participant, modality) and `ε` is
//! i.i.d. Gaussian noise. The `null` profile sets `δ = 0`, so labels carry
//! no information about features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Modality, Session};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

pub const STAGES: usize = 4;
pub const FRAME_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Separable,
    Null,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Profile::Separable),
            "null" => Ok(Profile::Null),
            _ => Err(Error::InvalidConfig(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub participants: usize,
    pub frames_per_stage: usize,
    pub dims: BTreeMap<Modality, usize>,
    pub drift: f64,
    pub noise_sd: f64,
    pub onsets_jitter: usize,
    pub seed: u64,
    pub profile: Profile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            participants: 5,
            frames_per_stage: 200,
            dims: BTreeMap::from([
                (Modality::Facial, 20),
                (Modality::Pose, 16),
                (Modality::Audio, 24),
                (Modality::Text, 32),
            ]),
            drift: 1.0,
            noise_sd: 1.0,
            onsets_jitter: 20,
            seed: 42,
            profile: Profile::Separable,
        }
    }
}

impl SynthConfig {
    /// Default configuration with the given profile; `null` zeroes the drift.
    pub fn with_profile(profile: Profile) -> Self {
        let mut cfg = Self {
            profile,
            ..Self::default()
        };
        if profile == Profile::Null {
            cfg.drift = 0.0;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.participants == 0 {
            return bad("participants must be at least 1".into());
        }
        if self.frames_per_stage == 0 {
            return bad("frames_per_stage must be at least 1".into());
        }
        if self.dims.is_empty() || self.dims.values().any(|&d| d == 0) {
            return bad("every modality needs a positive dimension".into());
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if !(self.drift >= 0.0) || !self.drift.is_finite() {
            return bad(format!("drift must be non-negative, got {}", self.drift));
        }
        match self.profile {
            Profile::Null if self.drift != 0.0 => {
                return bad("null profile requires drift = 0".into())
            }
            Profile::Separable if self.drift == 0.0 => {
                return bad("separable profile requires drift > 0".into())
            }
            _ => {}
        }
        if 2 * self.onsets_jitter >= self.frames_per_stage {
            return bad(format!(
                "onsets_jitter {} must be below half of frames_per_stage {}",
                self.onsets_jitter, self.frames_per_stage
            ));
        }
        Ok(())
    }
}

pub fn participant_id(index: usize) -> String {
    format!("P{:02}", index + 1)
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let sessions = (0..cfg.participants)
        .map(|p| generate_session(cfg, &participant_id(p)))
        .collect();
    Corpus::new(sessions)
}

fn generate_session(cfg: &SynthConfig, id: &str) -> Session {
    let num_frames = STAGES * cfg.frames_per_stage;
    let participant_seed = derive_seed(cfg.seed, id);

    let mut onset_rng = SplitMix64::new(derive_seed(participant_seed, "onsets"));
    let jitter = cfg.onsets_jitter as i64;
    let onsets: Vec<usize> = (1..STAGES)
        .map(|s| {
            let base = (s * cfg.frames_per_stage) as i64;
            (base + onset_rng.range_inclusive(-jitter, jitter)) as usize
        })
        .collect();

    let mut stage_of = vec![0usize; num_frames];
    for &o in &onsets {
        for s in &mut stage_of[o..] {
            *s += 1;
        }
    }

    let features = cfg
        .dims
        .iter()
        .map(|(&modality, &dim)| {
            let mut rng = SplitMix64::new(derive_seed(participant_seed, modality.name()));
            let (baseline, direction) = draw_latents(&mut rng, dim);
            let mut x = Matrix::zeros(num_frames, dim);
            for (f, &stage) in stage_of.iter().enumerate() {
                let shift = stage as f64 * cfg.drift;
                for (j, v) in x.row_mut(f).iter_mut().enumerate() {
                    *v = baseline[j] + shift * direction[j] + cfg.noise_sd * rng.normal();
                }
            }
            (modality, x)
        })
        .collect();

    Session {
        participant_id: id.to_string(),
        frame_rate: FRAME_RATE,
        num_frames,
        features,
        error_onsets: onsets,
    }
}

fn unit_vector(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Recover `(baseline, direction)` for a generated session. Exposed so tests
/// can check projected stage means without re-implementing stream layout.
pub fn latent_parameters(cfg: &SynthConfig, id: &str, modality: Modality) -> Option<(Vec<f64>, Vec<f64>)> {
    let dim = *cfg.dims.get(&modality)?;
    let participant_seed = derive_seed(cfg.seed, id);
    let mut rng = SplitMix64::new(derive_seed(participant_seed, modality.name()));
    Some(draw_latents(&mut rng, dim))
}

fn draw_latents(rng: &mut SplitMix64, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let baseline = (0..dim).map(|_| rng.normal()).collect();
    (baseline, unit_vector(rng, dim))
}

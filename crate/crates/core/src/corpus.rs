//! Corpus data model, on-disk format, and frame labeling.
//!
//! A corpus directory holds `manifest.json` plus one CSV per
//! (participant, modality). Every CSV has a `frame,f0,f1,...` header and one
//! row per video frame, starting at frame 0. Non-video modalities must
//! already be resampled to the video clock.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest number of robot errors a session may record.
pub const MAX_ONSETS: usize = 3;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Facial,
    Pose,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Facial,
        Modality::Pose,
        Modality::Audio,
        Modality::Text,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Facial => "facial",
            Modality::Pose => "pose",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown modality `{s}`")))
    }
}

/// One participant's time-aligned feature streams and error onsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub participant_id: String,
    pub frame_rate: f64,
    pub num_frames: usize,
    pub features: BTreeMap<Modality, Matrix>,
    pub error_onsets: Vec<usize>,
}

impl Session {
    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        self.features.keys().copied()
    }

    pub fn dims(&self) -> BTreeMap<Modality, usize> {
        self.features.iter().map(|(&m, x)| (m, x.cols())).collect()
    }
}

/// Per-frame error-stage labels: 0 before the first onset, then the number
/// of onsets seen so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabels(pub Vec<u8>);

impl FrameLabels {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sessions: Vec<Session>,
}

impl Corpus {
    pub fn new(sessions: Vec<Session>) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for s in &sessions {
            if !seen.insert(s.participant_id.as_str()) {
                return Err(Error::DuplicateParticipant(s.participant_id.clone()));
            }
            let violations = validate_session(s);
            if !violations.is_empty() {
                return Err(Error::InvalidSession {
                    participant: s.participant_id.clone(),
                    violations,
                });
            }
        }
        Ok(Self { sessions })
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn session(&self, participant_id: &str) -> Option<&Session> {
        self.sessions
            .iter()
            .find(|s| s.participant_id == participant_id)
    }

    pub fn participant_ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.iter().map(|s| s.participant_id.as_str())
    }

    /// Modalities present in every session.
    pub fn common_modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|m| self.sessions.iter().all(|s| s.features.contains_key(m)))
            .collect()
    }
}

/// A broken session invariant and where it was found.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveFrameRate(f64),
    NoFrames,
    NoModalities,
    RowCount {
        modality: Modality,
        expected: usize,
        found: usize,
    },
    NonFinite {
        modality: Modality,
        row: usize,
        column: usize,
    },
    TooManyOnsets(usize),
    OnsetOutOfRange {
        onset: usize,
        num_frames: usize,
    },
    OnsetsNotIncreasing,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveFrameRate(r) => write!(f, "frame rate {r} is not positive"),
            Violation::NoFrames => f.write_str("session has no frames"),
            Violation::NoModalities => f.write_str("session has no modalities"),
            Violation::RowCount {
                modality,
                expected,
                found,
            } => write!(f, "{modality}: expected {expected} rows, found {found}"),
            Violation::NonFinite {
                modality,
                row,
                column,
            } => write!(f, "{modality}: non-finite value at row {row}, column {column}"),
            Violation::TooManyOnsets(n) => {
                write!(f, "too many onsets ({n} > {MAX_ONSETS})")
            }
            Violation::OnsetOutOfRange { onset, num_frames } => {
                write!(f, "onset {onset} outside [0, {num_frames})")
            }
            Violation::OnsetsNotIncreasing => f.write_str("onsets not strictly increasing"),
        }
    }
}

pub fn validate_session(session: &Session) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(session.frame_rate > 0.0) {
        out.push(Violation::NonPositiveFrameRate(session.frame_rate));
    }
    if session.num_frames == 0 {
        out.push(Violation::NoFrames);
    }
    if session.features.is_empty() {
        out.push(Violation::NoModalities);
    }
    for (&modality, x) in &session.features {
        if x.rows() != session.num_frames {
            out.push(Violation::RowCount {
                modality,
                expected: session.num_frames,
                found: x.rows(),
            });
        }
        for (row, values) in x.iter_rows().enumerate() {
            if let Some(column) = values.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite {
                    modality,
                    row,
                    column,
                });
            }
        }
    }
    let onsets = &session.error_onsets;
    if onsets.len() > MAX_ONSETS {
        out.push(Violation::TooManyOnsets(onsets.len()));
    }
    for &onset in onsets {
        if onset >= session.num_frames {
            out.push(Violation::OnsetOutOfRange {
                onset,
                num_frames: session.num_frames,
            });
        }
    }
    if onsets.windows(2).any(|w| w[0] >= w[1]) {
        out.push(Violation::OnsetsNotIncreasing);
    }
    out
}

/// `labels[f]` is the number of onsets `o` with `o <= f`.
pub fn label_frames(session: &Session) -> FrameLabels {
    let mut labels = Vec::with_capacity(session.num_frames);
    let mut passed = 0u8;
    let mut next = session.error_onsets.iter().peekable();
    for f in 0..session.num_frames {
        while next.next_if(|&&o| o <= f).is_some() {
            passed += 1;
        }
        labels.push(passed);
    }
    FrameLabels(labels)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub participants: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub frame_rate: f64,
    pub num_frames: usize,
    pub error_onsets: Vec<usize>,
    pub modalities: BTreeMap<Modality, PathBuf>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Load a corpus from a manifest file or a directory containing one.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::new(load_sessions(path, true)?)
}

/// Read every session without checking session invariants, so callers can
/// collect all violations. Unreadable or malformed files are still errors.
pub fn load_sessions_unchecked(path: impl AsRef<Path>) -> Result<Vec<Session>> {
    load_sessions(path, false)
}

fn load_sessions(path: impl AsRef<Path>, strict: bool) -> Result<Vec<Session>> {
    let manifest_file = manifest_path(path.as_ref());
    let root = manifest_file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&manifest_file).map_err(|e| Error::io(&manifest_file, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_file, e))?;

    let mut sessions = Vec::with_capacity(manifest.participants.len());
    for entry in manifest.participants {
        let mut features = BTreeMap::new();
        for (modality, rel) in &entry.modalities {
            let file = root.join(rel);
            let x = read_feature_csv(&file)?;
            if !strict {
                features.insert(*modality, x);
                continue;
            }
            for (row, values) in x.iter_rows().enumerate() {
                if let Some(column) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { path: file, row, column });
                }
            }
            if x.rows() != entry.num_frames {
                return Err(Error::RowCountMismatch {
                    path: file,
                    expected: entry.num_frames,
                    found: x.rows(),
                });
            }
            features.insert(*modality, x);
        }
        sessions.push(Session {
            participant_id: entry.id,
            frame_rate: entry.frame_rate,
            num_frames: entry.num_frames,
            features,
            error_onsets: entry.error_onsets,
        });
    }
    Ok(sessions)
}

/// Read a feature CSV into a `frames × dims` matrix. Rows keep file order.
/// Non-finite values are kept; [`load_corpus`] rejects them.
pub fn read_feature_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let header = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if header.get(0) != Some("frame") {
        return Err(Error::parse(path, "first header column must be `frame`"));
    }
    let dims = header.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.len() != dims + 1 {
            return Err(Error::parse(
                path,
                format!("row {rows}: expected {} fields, found {}", dims + 1, record.len()),
            ));
        }
        let frame: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("row {rows}: bad frame index")))?;
        if frame != rows {
            return Err(Error::parse(
                path,
                format!("row {rows}: frame index {frame} out of order"),
            ));
        }
        for (column, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, format!("row {rows}, column {column}: `{field}` is not a number"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, dims, data))
}

pub fn write_feature_csv(path: &Path, x: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(x.rows() * x.cols() * 24);
    out.push_str("frame");
    for j in 0..x.cols() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (f, row) in x.iter_rows().enumerate() {
        out.push_str(&f.to_string());
        for v in row {
            // 17 significant digits round-trips every f64.
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write `corpus` in the canonical directory layout.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut participants = Vec::new();
    for s in corpus.sessions() {
        let mut modalities = BTreeMap::new();
        for (&m, x) in &s.features {
            let rel = PathBuf::from(format!("{}_{}.csv", s.participant_id, m));
            write_feature_csv(&dir.join(&rel), x)?;
            modalities.insert(m, rel);
        }
        participants.push(ManifestEntry {
            id: s.participant_id.clone(),
            frame_rate: s.frame_rate,
            num_frames: s.num_frames,
            error_onsets: s.error_onsets.clone(),
            modalities,
        });
    }
    let manifest = serde_json::to_string_pretty(&Manifest { participants })
        .map_err(|e| Error::parse(dir, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))
}

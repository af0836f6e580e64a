//! Plain-text model checkpoints.
//!
//! ```text
//! rupture-checkpoint 1
//! config <ModelConfig as one-line JSON>
//! transforms <FittedTransforms as one-line JSON>
//! model <fusion> <num_classes> <num_networks>
//! network <encoders>
//! encoder <lstm|gru> <input_size> <hidden_size>
//! w_ih <rows> <cols>
//! <one line per row, values space-separated>
//! w_hh <rows> <cols>
//! ...
//! bias <len>
//! <values>
//! head <outputs> <inputs>
//! weight <rows> <cols>
//! ...
//! bias <len>
//! <values>
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip exponent form, so a checkpoint
//! reloads to bit-identical parameters and re-serializes to identical bytes.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::{Fusion, Model, ModelConfig};
use crate::matrix::Matrix;
use crate::nn::{CellKind, Dense, Network, RecurrentCell};
use crate::preprocess::FittedTransforms;
use crate::rng::stable_hash;

const MAGIC: &str = "rupture-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub transforms: FittedTransforms,
    pub model: Model,
}

fn push_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&format!("{v:e}"));
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, name: &str, m: &Matrix) {
    out.push_str(&format!("{name} {} {}\n", m.rows(), m.cols()));
    for row in m.iter_rows() {
        push_values(out, row);
    }
}

fn push_vector(out: &mut String, name: &str, v: &[f64]) {
    out.push_str(&format!("{name} {}\n", v.len()));
    push_values(out, v);
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        out.push_str("config ");
        out.push_str(&serde_json::to_string(&self.config).expect("config serializes"));
        out.push('\n');
        out.push_str("transforms ");
        out.push_str(&serde_json::to_string(&self.transforms).expect("transforms serialize"));
        out.push('\n');
        let m = &self.model;
        out.push_str(&format!("model {} {} {}\n", m.fusion, m.num_classes, m.networks.len()));
        for net in &m.networks {
            out.push_str(&format!("network {}\n", net.encoders.len()));
            for enc in &net.encoders {
                let kind = match enc.kind {
                    CellKind::Lstm => "lstm",
                    CellKind::Gru => "gru",
                };
                out.push_str(&format!("encoder {kind} {} {}\n", enc.input_size(), enc.hidden_size()));
                push_matrix(&mut out, "w_ih", &enc.w_ih);
                push_matrix(&mut out, "w_hh", &enc.w_hh);
                push_vector(&mut out, "bias", &enc.bias);
            }
            out.push_str(&format!("head {} {}\n", net.head.outputs(), net.head.inputs()));
            push_matrix(&mut out, "weight", &net.head.weight);
            push_vector(&mut out, "bias", &net.head.bias);
        }
        out.push_str("end\n");
        out
    }

    pub fn checksum(&self) -> u64 {
        stable_hash(0, self.to_text().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .inner
            .next()
            .ok_or_else(|| bad(self.line + 1, "unexpected end of file"))?;
        self.line = i + 1;
        Ok(l)
    }

    /// Next line split on its first space, checking the keyword.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if l == key => Ok(""),
            _ => Err(bad(self.line, format!("expected `{key}`"))),
        }
    }

    fn numbers<T: FromStr>(&mut self, key: &str, count: usize) -> Result<Vec<T>> {
        let rest = self.keyed(key)?;
        let vals = rest
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| bad(self.line, format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != count {
            return Err(bad(self.line, format!("`{key}` expects {count} fields")));
        }
        Ok(vals)
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let vals = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(self.line, format!("bad float `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(bad(self.line, format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&mut self, key: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let dims: Vec<usize> = self.numbers(key, 2)?;
        if dims != [rows, cols] {
            return Err(bad(self.line, format!("`{key}` must be {rows}×{cols}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values(cols)?);
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn vector(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let n: Vec<usize> = self.numbers(key, 1)?;
        if n[0] != len {
            return Err(bad(self.line, format!("`{key}` must have {len} values")));
        }
        self.values(len)
    }
}

impl FromStr for Checkpoint {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
            line: 0,
        };
        let version: Vec<u32> = lines.numbers(MAGIC, 1)?;
        if version[0] != VERSION {
            return Err(bad(1, format!("unsupported version {}", version[0])));
        }
        let config: ModelConfig = serde_json::from_str(lines.keyed("config")?)
            .map_err(|e| bad(lines.line, e))?;
        let transforms: FittedTransforms = serde_json::from_str(lines.keyed("transforms")?)
            .map_err(|e| bad(lines.line, e))?;

        let header: Vec<&str> = lines.keyed("model")?.split_whitespace().collect();
        let fusion = match header.first().copied() {
            Some("early") => Fusion::Early,
            Some("intermediate") => Fusion::Intermediate,
            Some("late") => Fusion::Late,
            _ => return Err(bad(lines.line, "unknown fusion")),
        };
        let parse_count = |s: Option<&&str>, line| {
            s.and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| bad(line, "bad model header"))
        };
        let num_classes = parse_count(header.get(1), lines.line)?;
        let num_networks = parse_count(header.get(2), lines.line)?;

        let mut networks = Vec::with_capacity(num_networks);
        for _ in 0..num_networks {
            let n_enc: Vec<usize> = lines.numbers("network", 1)?;
            let mut encoders = Vec::with_capacity(n_enc[0]);
            for _ in 0..n_enc[0] {
                let spec: Vec<&str> = lines.keyed("encoder")?.split_whitespace().collect();
                let kind = match spec.first().copied() {
                    Some("lstm") => CellKind::Lstm,
                    Some("gru") => CellKind::Gru,
                    _ => return Err(bad(lines.line, "unknown cell kind")),
                };
                let d = parse_count(spec.get(1), lines.line)?;
                let h = parse_count(spec.get(2), lines.line)?;
                let g = kind.gates() * h;
                encoders.push(RecurrentCell {
                    kind,
                    w_ih: lines.matrix("w_ih", g, d)?,
                    w_hh: lines.matrix("w_hh", g, h)?,
                    bias: lines.vector("bias", g)?,
                });
            }
            let head_dims: Vec<usize> = lines.numbers("head", 2)?;
            let head = Dense {
                weight: lines.matrix("weight", head_dims[0], head_dims[1])?,
                bias: lines.vector("bias", head_dims[0])?,
            };
            networks.push(Network { encoders, head });
        }
        lines.keyed("end")?;
        let modalities = config.sorted_modalities();
        Ok(Checkpoint {
            config,
            transforms,
            model: Model {
                fusion,
                modalities,
                networks,
                num_classes,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::Modality;
    use crate::fusion::build_model;
    use crate::preprocess::{Representation, Transform};

    fn sample(fusion: Fusion, cell: CellKind) -> Checkpoint {
        let config = ModelConfig {
            fusion,
            cell,
            modalities: vec![Modality::Facial, Modality::Audio],
            hidden: 3,
            ..ModelConfig::default()
        };
        let dims = BTreeMap::from([(Modality::Facial, 2), (Modality::Audio, 4)]);
        let model = build_model(&config, &dims).unwrap();
        let transforms = FittedTransforms {
            representation: Representation::Raw,
            transforms: dims
                .iter()
                .map(|(&m, &d)| (m, Transform::Identity { modality: m, dim: d }))
                .collect(),
        };
        Checkpoint {
            config,
            transforms,
            model,
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        for fusion in [Fusion::Early, Fusion::Intermediate, Fusion::Late] {
            for cell in [CellKind::Lstm, CellKind::Gru] {
                let ck = sample(fusion, cell);
                let text = ck.to_text();
                let back: Checkpoint = text.parse().unwrap();
                assert_eq!(back, ck);
                assert_eq!(back.to_text(), text);
            }
        }
    }

    #[test]
    fn fitted_transforms_reload_exactly() {
        let mut rng = crate::rng::SplitMix64::new(8);
        let x = Matrix::from_vec(40, 3, (0..120).map(|_| rng.normal() / 3.0 + 0.1).collect());
        let w = crate::preprocess::Window {
            participant_id: "P".into(),
            start_frame: 0,
            features: BTreeMap::from([(Modality::Facial, x.clone()), (Modality::Audio, x)]),
            raw_label: 0,
        };
        let mut ck = sample(Fusion::Early, CellKind::Gru);
        for rep in [Representation::Normalized, Representation::Pca] {
            ck.transforms =
                FittedTransforms::fit(rep, std::slice::from_ref(&w), &[Modality::Facial, Modality::Audio], 0.95).unwrap();
            let back: Checkpoint = ck.to_text().parse().unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let text = sample(Fusion::Early, CellKind::Lstm).to_text();
        let cut = &text[..text.len() / 2];
        assert!(cut.parse::<Checkpoint>().is_err());
        assert!(text.replacen("rupture-checkpoint 1", "rupture-checkpoint 9", 1).parse::<Checkpoint>().is_err());
    }
}

//! The four labeling/splitting schemes.
//!
//! All schemes shuffle with a seeded stream before partitioning. Schemes 1,
//! 2 and 4 hold out 20% of the included windows for testing; scheme 3's
//! partition is defined by class membership instead. Every scheme then
//! carves 10% of its training pool off for validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ErrorDetection,
    MultipleErrorDetection,
    FirstToSuccessive,
    SuccessiveDiscrimination,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::ErrorDetection,
        Scheme::MultipleErrorDetection,
        Scheme::FirstToSuccessive,
        Scheme::SuccessiveDiscrimination,
    ];

    pub fn num_classes(self) -> usize {
        match self {
            Scheme::ErrorDetection | Scheme::FirstToSuccessive => 2,
            Scheme::SuccessiveDiscrimination => 3,
            Scheme::MultipleErrorDetection => 4,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Scheme::ErrorDetection => "Error Detection",
            Scheme::MultipleErrorDetection => "Multiple Error Detection",
            Scheme::FirstToSuccessive => "First Error to Successive Errors Generalization",
            Scheme::SuccessiveDiscrimination => "Successive Error Discrimination",
        }
    }

    pub fn classification(self) -> &'static str {
        if self.num_classes() == 2 {
            "Binary"
        } else {
            "Multiclass"
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Scheme::ErrorDetection => "error_detection",
            Scheme::MultipleErrorDetection => "multiple_error_detection",
            Scheme::FirstToSuccessive => "first_to_successive",
            Scheme::SuccessiveDiscrimination => "successive_discrimination",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Class index of a raw stage label under `scheme`, or `None` if the scheme
/// excludes that label.
pub fn relabel(raw_label: u8, scheme: Scheme) -> Option<usize> {
    debug_assert!(raw_label <= 3);
    let raw = raw_label as usize;
    match scheme {
        Scheme::ErrorDetection | Scheme::FirstToSuccessive => Some(usize::from(raw > 0)),
        Scheme::MultipleErrorDetection => Some(raw),
        Scheme::SuccessiveDiscrimination => raw.checked_sub(1),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub class_of: BTreeMap<usize, usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn class(&self, index: usize) -> usize {
        self.class_of[&index]
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.class(i)).collect()
    }

    pub fn included_count(&self) -> usize {
        self.class_of.len()
    }
}

/// `round(n · num / den)` with halves rounded up, in exact integer math.
pub fn round_half_up(n: usize, num: usize, den: usize) -> usize {
    (2 * n * num + den) / (2 * den)
}

pub fn test_size(n: usize) -> usize {
    round_half_up(n, 1, 5)
}

pub fn val_size(pool: usize) -> usize {
    round_half_up(pool, 1, 10)
}

/// Partition windows, given by their raw stage labels, under `scheme`.
pub fn split(raw_labels: &[u8], scheme: Scheme, seed: u64) -> Result<SplitPlan> {
    let mut rng = SplitMix64::new(seed);
    let mut class_of = BTreeMap::new();
    let mut by_raw: [Vec<usize>; 4] = Default::default();
    for (i, &raw) in raw_labels.iter().enumerate() {
        if raw > 3 {
            return Err(Error::ClassOutOfRange {
                class: raw as usize,
                num_classes: 4,
            });
        }
        if let Some(c) = relabel(raw, scheme) {
            class_of.insert(i, c);
        }
        by_raw[raw as usize].push(i);
    }

    let empty = |what: &str| Err(Error::InsufficientClass(format!("{scheme}: no {what} windows")));
    let required: &[(usize, &str)] = match scheme {
        Scheme::ErrorDetection => &[(0, "NoError")],
        Scheme::MultipleErrorDetection => {
            &[(0, "NoError"), (1, "Error1"), (2, "Error2"), (3, "Error3")]
        }
        Scheme::FirstToSuccessive => &[(0, "NoError"), (1, "Error1")],
        Scheme::SuccessiveDiscrimination => &[(1, "Error1"), (2, "Error2"), (3, "Error3")],
    };
    for &(raw, name) in required {
        if by_raw[raw].is_empty() {
            return empty(name);
        }
    }
    let (train, val, test) = match scheme {
        Scheme::ErrorDetection => {
            if by_raw[1..].iter().all(Vec::is_empty) {
                return empty("error");
            }
            ratio_split(&class_of, &mut rng)
        }
        Scheme::MultipleErrorDetection | Scheme::SuccessiveDiscrimination => {
            ratio_split(&class_of, &mut rng)
        }
        Scheme::FirstToSuccessive => {
            if by_raw[2].is_empty() && by_raw[3].is_empty() {
                return empty("successive-error");
            }
            generalization_split(&by_raw, &mut rng)?
        }
    };
    Ok(SplitPlan {
        scheme,
        train,
        val,
        test,
        class_of,
        num_classes: scheme.num_classes(),
        seed,
    })
}

fn ratio_split(
    class_of: &BTreeMap<usize, usize>,
    rng: &mut SplitMix64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = class_of.keys().copied().collect();
    rng.shuffle(&mut order);
    let n = order.len();
    let test = order.split_off(n - test_size(n));
    let pool = order.len();
    let val = order.split_off(pool - val_size(pool));
    (order, val, test)
}

/// Train on NoError vs Error1 (NoError downsampled to balance), test on the
/// leftover NoError windows plus all Error2/Error3 windows.
fn generalization_split(
    by_raw: &[Vec<usize>; 4],
    rng: &mut SplitMix64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut no_error = by_raw[0].clone();
    let mut error1 = by_raw[1].clone();
    if no_error.len() < error1.len() {
        return Err(Error::UnsatisfiableDownsampling {
            no_error: no_error.len(),
            error1: error1.len(),
        });
    }
    rng.shuffle(&mut no_error);
    rng.shuffle(&mut error1);
    let e = error1.len();
    let remaining_no_error = no_error.split_off(e);

    // Stratified validation carve-out; an odd remainder goes to class 0.
    let n_val = val_size(2 * e);
    let val0 = n_val.div_ceil(2);
    let val1 = n_val / 2;
    let mut val: Vec<usize> = no_error[..val0].to_vec();
    val.extend_from_slice(&error1[..val1]);
    let mut train: Vec<usize> = no_error[val0..].to_vec();
    train.extend_from_slice(&error1[val1..]);
    rng.shuffle(&mut train);
    rng.shuffle(&mut val);

    let mut test = remaining_no_error;
    test.extend(by_raw[2].iter().chain(&by_raw[3]).copied());
    rng.shuffle(&mut test);
    Ok((train, val, test))
}

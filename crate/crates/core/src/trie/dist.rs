use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probabilities must sum to one within this absolute tolerance.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A next-hop label identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<u32>()
            .map(Label)
            .map_err(|_| Error::invalid(format!("label {s:?} is not a non-negative integer")))
    }
}

impl From<u32> for Label {
    fn from(v: u32) -> Self {
        Label(v)
    }
}

/// The distribution of next-hop labels over leaves.
///
/// Zero-probability labels are dropped at construction, so every stored
/// probability is strictly positive and `delta()` counts only labels that
/// can actually occur.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextHopDist {
    labels: Vec<Label>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl NextHopDist {
    pub fn new(labels: Vec<Label>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() {
            return Err(Error::invalid(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(**l)) {
            return Err(Error::invalid(format!("label {dup} listed twice")));
        }

        let (labels, probs): (Vec<_>, Vec<_>) = labels
            .into_iter()
            .zip(probs)
            .filter(|&(_, p)| p > 0.0)
            .unzip();
        if labels.is_empty() {
            return Err(Error::invalid("distribution has no labels"));
        }

        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // absorb rounding so every u in [0, 1) maps to some label
        *cumulative.last_mut().unwrap() = 1.0;

        Ok(NextHopDist {
            labels,
            probs,
            cumulative,
        })
    }

    /// Labels `0..probs.len()`, with zero-probability entries removed.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let labels = (0..probs.len() as u32).map(Label).collect();
        Self::new(labels, probs.to_vec())
    }

    pub fn uniform(delta: u32) -> Result<Self> {
        if delta == 0 {
            return Err(Error::invalid("uniform distribution needs delta >= 1"));
        }
        let p = 1.0 / delta as f64;
        let mut probs = vec![p; delta as usize];
        // keep the sum within tolerance for awkward deltas
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;
        Self::from_probs(&probs)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of labels with positive probability.
    pub fn delta(&self) -> usize {
        self.labels.len()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probs)
    }

    pub fn is_uniform(&self) -> bool {
        let p = 1.0 / self.delta() as f64;
        self.probs.iter().all(|q| (q - p).abs() <= SUM_TOLERANCE)
    }

    /// Inverse-CDF draw of a label index; ties go to the lower index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Label {
        self.labels[self.sample_index(rng)]
    }
}

/// `Σ p·log2(1/p)`, skipping zero terms.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Deterministic generator used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

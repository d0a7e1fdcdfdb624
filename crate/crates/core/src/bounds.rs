//! Analytic width and size bounds for folded DAGs.
//!
//! Everything here is a pure function of `(h, H_O, δ)` where `H_O` is the
//! next-hop entropy in bits. Caps of the form `δ^(2^j)` overflow almost
//! immediately, so they are carried as base-2 logarithms and only turned
//! back into numbers when they fit.

use serde::Serialize;

use crate::trie::{check_height, NextHopDist};
use crate::{Error, Result};

/// Raw probability lists (as opposed to [`NextHopDist`]) may drift this far
/// from summing to one, e.g. after forming product distributions.
pub const PROB_LIST_TOLERANCE: f64 = 1e-9;

/// log2 values above this are treated as `+inf`.
pub const LOG2_SATURATION: f64 = 1024.0;

fn from_log2(x: f64) -> f64 {
    if x > LOG2_SATURATION {
        f64::INFINITY
    } else {
        x.exp2()
    }
}

/// `δ^(2^j)`, exact for small integer results and saturated when huge.
fn delta_cap(delta: f64, j: u32) -> f64 {
    let log2 = delta_cap_log2(delta, j);
    if log2 <= 52.0 {
        delta.powi(1 << j)
    } else {
        from_log2(log2)
    }
}

fn delta_cap_log2(delta: f64, j: u32) -> f64 {
    (j as f64).exp2() * delta.log2()
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability list"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_LIST_TOLERANCE {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// `1 - (1 - p)^m`, the chance that a coupon of probability `p` shows up in
/// `m` draws.
pub fn presence_probability(p: f64, m: u64) -> f64 {
    if p >= 1.0 {
        return if m == 0 { 0.0 } else { 1.0 };
    }
    -((m as f64) * (-p).ln_1p()).exp_m1()
}

/// Expected number of distinct coupons among `m` i.i.d. draws.
pub fn expected_distinct_exact(probs: &[f64], m: u64) -> Result<f64> {
    check_probs(probs)?;
    Ok(probs.iter().map(|&p| presence_probability(p, m)).sum())
}

/// Same sum over coupon classes given as `(probability, multiplicity)`.
pub(crate) fn expected_distinct_classes<I>(classes: I, m: u64) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    classes
        .into_iter()
        .map(|(p, count)| count * presence_probability(p, m))
        .sum()
}

/// Upper bound on expected distinct coupons for `m >= 3` draws from a
/// distribution of entropy `h_c` over `2^n_coupons_log2` coupons:
/// `min(m/log2(m)·h_c + 3, m, n)`.
pub fn coupon_bound(m: u64, h_c: f64, n_coupons_log2: f64) -> Result<f64> {
    if m < 3 {
        return Err(Error::domain(format!("coupon bound needs m >= 3, got {m}")));
    }
    let m = m as f64;
    let entropy_term = m / m.log2() * h_c + 3.0;
    Ok(entropy_term.min(m).min(from_log2(n_coupons_log2)))
}

/// Entropy of a string of `2^j` i.i.d. symbols of entropy `h_o`.
pub fn string_entropy(h_o: f64, j: u32) -> f64 {
    h_o * (j as f64).exp2()
}

/// `H_O·2^h/(h-j) + 3`, infinite at the root level.
pub fn entropy_term(j: u32, h: u32, h_o: f64) -> f64 {
    if j >= h {
        f64::INFINITY
    } else {
        h_o * (h as f64).exp2() / (h - j) as f64 + 3.0
    }
}

/// The three caps on the width of one level and their minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelTerms {
    pub entropy_term: f64,
    pub pow2_cap: f64,
    pub delta_cap_log2: f64,
    pub min_bound: f64,
}

impl LevelTerms {
    pub fn new(j: u32, h: u32, h_o: f64, delta: f64) -> Self {
        let entropy = entropy_term(j, h, h_o);
        let pow2_log2 = (h - j) as f64;
        let delta_log2 = delta_cap_log2(delta, j);

        // pick the smallest term in log2 space, then report its exact value
        let candidates = [
            (entropy.log2(), entropy),
            (pow2_log2, pow2_log2.exp2()),
            (delta_log2, delta_cap(delta, j)),
        ];
        let min_bound = candidates
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|c| c.1)
            .unwrap();

        LevelTerms {
            entropy_term: entropy,
            pow2_cap: pow2_log2.exp2(),
            delta_cap_log2: delta_log2,
            min_bound,
        }
    }

    pub fn delta_cap(&self) -> f64 {
        from_log2(self.delta_cap_log2)
    }
}

/// Bound on the expected width of level `j` of the folded DAG.
pub fn level_bound(j: u32, h: u32, h_o: f64, delta: u64) -> Result<f64> {
    if j < 1 || j > h {
        return Err(Error::OutOfRange {
            what: "level",
            value: j as i64,
            min: 1,
            max: h as i64,
        });
    }
    if h_o < 0.0 {
        return Err(Error::domain(format!("entropy {h_o} is negative")));
    }
    if delta < 1 {
        return Err(Error::domain("delta must be at least 1"));
    }
    Ok(LevelTerms::new(j, h, h_o, delta as f64).min_bound)
}

/// Level in `1..=h` with the largest width bound, ties going to the larger
/// level.
pub fn compute_kstar(h: u32, h_o: f64, delta: u64) -> u32 {
    let delta = delta as f64;
    let mut best = (1, f64::NEG_INFINITY);
    for j in 1..=h {
        let b = LevelTerms::new(j, h, h_o, delta).min_bound;
        if b >= best.1 {
            best = (j, b);
        }
    }
    best.0
}

/// A critical level found by scanning, with its closed-form approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CriticalLevel {
    pub level: u32,
    /// Closed-form estimate; absent when the expression is undefined.
    pub anchor: Option<i64>,
}

impl CriticalLevel {
    /// True when the scanned level is within one of the anchor.
    pub fn agrees_with_anchor(&self) -> bool {
        self.anchor
            .is_some_and(|a| (self.level as i64 - a).abs() <= 1)
    }
}

fn check_entropy_floor(h: u32, h_o: f64) -> Result<()> {
    let floor = h as f64 / (h as f64).exp2();
    if h_o >= floor {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "entropy {h_o} below h/2^h = {floor} for h = {h}"
        )))
    }
}

fn scan_k(h: u32, h_o: f64) -> u32 {
    (1..=h)
        .find(|&j| entropy_term(j, h, h_o) > ((h - j) as f64).exp2())
        .unwrap_or(h)
}

fn scan_l(h: u32, h_o: f64, delta: f64) -> u32 {
    (1..h)
        .rev()
        .find(|&j| delta_cap_log2(delta, j) < entropy_term(j, h, h_o).log2())
        .unwrap_or(0)
}

/// Smallest level where the entropy term exceeds the `2^(h-j)` cap.
pub fn compute_k(h: u32, h_o: f64) -> Result<CriticalLevel> {
    check_height(h)?;
    check_entropy_floor(h, h_o)?;
    let anchor = (h as f64 / h_o).log2().ceil() as i64;
    Ok(CriticalLevel {
        level: scan_k(h, h_o),
        anchor: Some(anchor),
    })
}

/// Largest level below the root where `δ^(2^j)` is still smaller than the
/// entropy term, or 0 if there is none.
pub fn compute_l(h: u32, h_o: f64, delta: u64) -> Result<CriticalLevel> {
    check_height(h)?;
    if delta < 2 {
        return Err(Error::domain(format!("l needs delta >= 2, got {delta}")));
    }
    check_entropy_floor(h, h_o)?;
    let delta = delta as f64;
    let slack = h as f64 - (h as f64 / h_o).log2();
    let anchor = (slack > 0.0).then(|| (slack / delta.log2()).log2().floor() as i64);
    Ok(CriticalLevel {
        level: scan_l(h, h_o, delta),
        anchor,
    })
}

/// Bits needed for any single level: `2·H_O·2^h + 6h`.
pub fn width_bit_bound(h: u32, h_o: f64) -> f64 {
    2.0 * h_o * (h as f64).exp2() + 6.0 * h as f64
}

/// `2h·H_O·2^h + 6h²`.
pub fn total_bits_bound_basic(h: u32, h_o: f64) -> f64 {
    let h_f = h as f64;
    2.0 * h_f * h_o * h_f.exp2() + 6.0 * h_f * h_f
}

/// `(2 + log2 h - log2 H_O)·M`, valid for `H_O >= h/2^h`.
pub fn total_bits_bound_refined(h: u32, h_o: f64) -> Result<f64> {
    check_entropy_floor(h, h_o)?;
    Ok((2.0 + (h as f64).log2() - h_o.log2()) * width_bit_bound(h, h_o))
}

/// Size bound for a finite next-hop alphabet.
pub fn total_bits_bound_finite_delta(h: u32, h_o: f64, delta: u64) -> Result<f64> {
    check_entropy_floor(h, h_o)?;
    if delta < 2 {
        return Err(Error::domain(format!(
            "finite-delta bound needs delta >= 2, got {delta}"
        )));
    }
    let h_f = h as f64;
    let denom = h_f - h_f.log2() + h_o.log2();
    if denom <= 0.0 {
        return Err(Error::domain(format!(
            "h - log2 h + log2 H_O = {denom} is not positive"
        )));
    }
    let d = delta as f64;
    let factor = 1.0 + (h_f / denom).log2() - h_o.log2() + d.log2().log2() + d / (d - 1.0);
    Ok(factor * width_bit_bound(h, h_o))
}

/// Per-leaf limit of the finite-delta bound as `h` grows.
pub fn asymptotic_bits_per_leaf(h_o: f64, delta: u64) -> Result<f64> {
    if delta < 2 {
        return Err(Error::domain(format!(
            "per-leaf limit needs delta >= 2, got {delta}"
        )));
    }
    let d = delta as f64;
    if !(h_o > 0.0 && h_o <= d.log2() + 1e-12) {
        return Err(Error::domain(format!(
            "per-leaf limit needs 0 < H_O <= log2 delta, got {h_o}"
        )));
    }
    Ok((1.0 - h_o.log2() + d.log2().log2() + d / (d - 1.0)) * 2.0 * h_o)
}

/// The binary-alphabet form of [`asymptotic_bits_per_leaf`]:
/// `(6 - 2·log2 H_O)·H_O`.
pub fn asymptotic_bits_per_leaf_binary(h_o: f64) -> f64 {
    (6.0 - 2.0 * h_o.log2()) * h_o
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    /// `j >= k`: the `2^(h-j)` cap governs.
    Head,
    /// `l < j < k`: the entropy term governs.
    Body,
    /// `j <= l`: the `δ^(2^j)` cap governs.
    Tail,
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Zone::Head => "head",
            Zone::Body => "body",
            Zone::Tail => "tail",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelBound {
    pub level: u32,
    pub zone: Zone,
    #[serde(flatten)]
    pub terms: LevelTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalBounds {
    pub basic: f64,
    pub refined: Option<f64>,
    pub finite_delta: Option<f64>,
    pub per_leaf_asymptotic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundProfile {
    pub h: u32,
    pub entropy: f64,
    pub delta: u64,
    /// Levels `0..=h`.
    pub per_level: Vec<LevelBound>,
    pub kstar: u32,
    /// Absent when `H_O < h/2^h`.
    pub k: Option<CriticalLevel>,
    /// Absent when `H_O < h/2^h` or `δ < 2`.
    pub l: Option<CriticalLevel>,
    pub m_bits: f64,
    pub totals: TotalBounds,
}

impl BoundProfile {
    pub fn min_bound(&self, j: u32) -> f64 {
        self.per_level[j as usize].terms.min_bound
    }
}

/// Every bound for a trie of height `h` with leaves drawn from `dist`.
pub fn bound_profile(h: u32, dist: &NextHopDist) -> Result<BoundProfile> {
    profile_for(h, dist.entropy(), dist.delta() as u64)
}

/// [`bound_profile`] from the summary numbers alone.
pub fn profile_for(h: u32, h_o: f64, delta: u64) -> Result<BoundProfile> {
    check_height(h)?;
    if delta < 1 {
        return Err(Error::domain("delta must be at least 1"));
    }
    let k = compute_k(h, h_o).ok();
    let l = compute_l(h, h_o, delta).ok();

    // zones are drawn even where the theorems do not apply
    let head_from = k.map_or_else(|| scan_k(h, h_o), |k| k.level);
    let tail_to = l.map_or_else(|| scan_l(h, h_o, delta as f64), |l| l.level);

    let per_level = (0..=h)
        .map(|j| LevelBound {
            level: j,
            zone: if j >= head_from {
                Zone::Head
            } else if j <= tail_to {
                Zone::Tail
            } else {
                Zone::Body
            },
            terms: LevelTerms::new(j, h, h_o, delta as f64),
        })
        .collect();

    Ok(BoundProfile {
        h,
        entropy: h_o,
        delta,
        per_level,
        kstar: compute_kstar(h, h_o, delta),
        k,
        l,
        m_bits: width_bit_bound(h, h_o),
        totals: TotalBounds {
            basic: total_bits_bound_basic(h, h_o),
            refined: total_bits_bound_refined(h, h_o).ok(),
            finite_delta: total_bits_bound_finite_delta(h, h_o, delta).ok(),
            per_leaf_asymptotic: asymptotic_bits_per_leaf(h_o, delta).ok(),
        },
    })
}

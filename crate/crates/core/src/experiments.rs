//! Exact and Monte Carlo validation of the width and size bounds.
//!
//! Trials are independent: trial `i` of a run seeded with `s` uses the
//! generator seeded by [`trial_seed`]`(s, i)`, so any single trial can be
//! replayed. Trials run on a rayon pool and results are collected in trial
//! order, which keeps reports bit-for-bit deterministic.

use std::collections::HashSet;
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{self, BoundProfile};
use crate::folding::fold;
use crate::trie::{check_height, seeded_rng, LeafTrie, NextHopDist};
use crate::{Error, Result};

/// Levels whose string universe has at most `2^20` members get an exact
/// expected width.
pub const DEFAULT_EXACT_MAX_LOG2: f64 = 20.0;

/// One-sided violation threshold, in standard errors.
pub const SIGMA: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub h: u32,
    pub dist: NextHopDist,
    pub trials: usize,
    pub seed: u64,
    pub levels_exact_max_log2: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(h: u32, dist: NextHopDist, trials: usize, seed: u64) -> Result<Self> {
        check_height(h)?;
        if trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        Ok(ExperimentConfig {
            h,
            dist,
            trials,
            seed,
            levels_exact_max_log2: DEFAULT_EXACT_MAX_LOG2,
            threads: None,
        })
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }
}

/// SplitMix64 of `seed + index`.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_trials<T, F>(trials: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let work = || (0..trials as u64).into_par_iter().map(&f).collect();
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Mean and sample standard deviation of a set of observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SampleStats {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return SampleStats {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        SampleStats { mean, std, n }
    }

    pub fn stderr(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

fn count_distinct<T: Hash + Eq>(seen: &mut HashSet<T>, items: impl Iterator<Item = T>) -> usize {
    seen.clear();
    seen.extend(items);
    seen.len()
}

/// Draws `m` coupons per trial and reports the distinct-count statistics.
pub fn simulate_coupons(probs: &[f64], m: u64, trials: usize, seed: u64) -> Result<SampleStats> {
    // validates the list
    bounds::expected_distinct_exact(probs, 0)?;
    if m == 0 || trials == 0 {
        return Err(Error::invalid(
            "simulate_coupons needs m >= 1 and trials >= 1",
        ));
    }
    let total: f64 = probs.iter().sum();
    let normalized: Vec<f64> = probs.iter().map(|p| p / total).collect();
    let dist = NextHopDist::from_probs(&normalized)?;

    let counts = run_trials(trials, None, |t| {
        let mut rng = seeded_rng(trial_seed(seed, t));
        let mut seen = HashSet::new();
        count_distinct(&mut seen, (0..m).map(|_| dist.sample_index(&mut rng))) as f64
    })?;
    Ok(SampleStats::from_values(counts))
}

fn for_each_composition(
    n: u32,
    parts: usize,
    prefix: &mut Vec<u32>,
    visit: &mut impl FnMut(&[u32]),
) {
    if parts == 1 {
        prefix.push(n);
        visit(prefix);
        prefix.pop();
        return;
    }
    for c in 0..=n {
        prefix.push(c);
        for_each_composition(n - c, parts - 1, prefix, visit);
        prefix.pop();
    }
}

fn multinomial(counts: &[u32]) -> f64 {
    let mut total = 0u32;
    let mut coef = 1.0;
    for &c in counts {
        for i in 1..=c {
            total += 1;
            coef = coef * total as f64 / i as f64;
        }
    }
    coef
}

/// Exact expected width of level `j`, or `None` above the enumeration gate.
///
/// A level-`j` subtree is a string of `2^j` i.i.d. labels and the level has
/// `2^(h-j)` of them, so its width is the distinct count of that many
/// draws. Strings with the same label counts share a probability, so the
/// sum runs over count vectors weighted by their multinomial multiplicity.
pub fn level_expectation_exact(dist: &NextHopDist, h: u32, j: u32, max_log2: f64) -> Option<f64> {
    assert!(j <= h);
    let delta = dist.delta();
    let len = 1u32 << j;
    let m = 1u64 << (h - j);
    if delta == 1 {
        return Some(1.0);
    }
    if len as f64 * (delta as f64).log2() > max_log2 {
        return None;
    }
    let ln_p: Vec<f64> = dist.probs().iter().map(|p| p.ln()).collect();
    let mut classes = Vec::new();
    for_each_composition(len, delta, &mut Vec::with_capacity(delta), &mut |counts| {
        let ln: f64 = counts.iter().zip(&ln_p).map(|(&c, lp)| c as f64 * lp).sum();
        classes.push((ln.exp(), multinomial(counts)));
    });
    Some(bounds::expected_distinct_classes(classes, m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: u32,
    pub empirical_mean_width: f64,
    pub empirical_std: f64,
    pub stderr: f64,
    pub bound: f64,
    pub exact_expectation: Option<f64>,
}

/// One total-size bound against the observed mean; `bound` is `None` when
/// the bound's preconditions do not hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalCheck {
    pub bound: Option<f64>,
    /// `bound - mean`; negative means the mean exceeds the bound.
    pub slack: Option<f64>,
}

impl TotalCheck {
    fn new(bound: Option<f64>, mean: f64) -> Self {
        TotalCheck {
            bound,
            slack: bound.map(|b| b - mean),
        }
    }

    pub fn skipped(&self) -> bool {
        self.bound.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeTotals {
    pub kstar: u32,
    /// `kstar == h`, so the uniform bit model charges nothing.
    pub degenerate: bool,
    pub mean_paper_model_bits: f64,
    pub std_paper_model_bits: f64,
    pub mean_exact_bits: f64,
    pub bound_basic: TotalCheck,
    pub bound_refined: TotalCheck,
    pub bound_finite_delta: TotalCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Level(u32),
    TotalBasic,
    TotalRefined,
    TotalFiniteDelta,
}

/// A bound exceeded by more than [`SIGMA`] standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: Check,
    /// `mean - SIGMA·stderr - bound`, positive.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub h: u32,
    pub delta: usize,
    pub entropy: f64,
    pub trials: usize,
    pub seed: u64,
    pub per_level: Vec<LevelReport>,
    pub totals: Option<SizeTotals>,
    pub violations: Vec<Violation>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct TrialOutcome {
    widths: Vec<usize>,
    paper_model_bits: u64,
    exact_bits: u64,
}

/// Generates and folds `cfg.trials` random tries, then checks every level
/// width and every total-size bound.
pub fn run_validation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    check_height(cfg.h)?;
    let profile = bounds::bound_profile(cfg.h, &cfg.dist)?;
    let kstar = profile.kstar;

    let outcomes = run_trials(cfg.trials, cfg.threads, |t| -> Result<TrialOutcome> {
        let trie = LeafTrie::random(cfg.h, &cfg.dist, trial_seed(cfg.seed, t))?;
        let account = fold(&trie).account_memory(kstar)?;
        Ok(TrialOutcome {
            widths: account.per_level_widths,
            paper_model_bits: account.paper_model_bits,
            exact_bits: account.exact_bits,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut violations = Vec::new();
    let per_level = level_reports(cfg, &profile, &outcomes, &mut violations);
    let totals = size_totals(&profile, &outcomes, &mut violations);

    Ok(ExperimentReport {
        h: cfg.h,
        delta: cfg.dist.delta(),
        entropy: cfg.dist.entropy(),
        trials: cfg.trials,
        seed: cfg.seed,
        per_level,
        totals: Some(totals),
        violations,
    })
}

/// Width checks only.
pub fn run_level_validation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = run_validation(cfg)?;
    report.totals = None;
    report
        .violations
        .retain(|v| matches!(v.check, Check::Level(_)));
    Ok(report)
}

/// Total-size checks only.
pub fn run_size_validation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = run_validation(cfg)?;
    report.per_level.clear();
    report
        .violations
        .retain(|v| !matches!(v.check, Check::Level(_)));
    Ok(report)
}

fn level_reports(
    cfg: &ExperimentConfig,
    profile: &BoundProfile,
    outcomes: &[TrialOutcome],
    violations: &mut Vec<Violation>,
) -> Vec<LevelReport> {
    (0..=cfg.h)
        .map(|j| {
            let stats =
                SampleStats::from_values(outcomes.iter().map(|o| o.widths[j as usize] as f64));
            let bound = profile.min_bound(j);
            let margin = stats.mean - SIGMA * stats.stderr() - bound;
            if margin > 0.0 {
                violations.push(Violation {
                    check: Check::Level(j),
                    margin,
                });
            }
            LevelReport {
                level: j,
                empirical_mean_width: stats.mean,
                empirical_std: stats.std,
                stderr: stats.stderr(),
                bound,
                exact_expectation: level_expectation_exact(
                    &cfg.dist,
                    cfg.h,
                    j,
                    cfg.levels_exact_max_log2,
                ),
            }
        })
        .collect()
}

fn size_totals(
    profile: &BoundProfile,
    outcomes: &[TrialOutcome],
    violations: &mut Vec<Violation>,
) -> SizeTotals {
    let bits = SampleStats::from_values(outcomes.iter().map(|o| o.paper_model_bits as f64));
    let exact = SampleStats::from_values(outcomes.iter().map(|o| o.exact_bits as f64));
    let totals = &profile.totals;
    let checks = [
        (Check::TotalBasic, Some(totals.basic)),
        (Check::TotalRefined, totals.refined),
        (Check::TotalFiniteDelta, totals.finite_delta),
    ];
    for (check, bound) in checks {
        if let Some(b) = bound {
            let margin = bits.mean - SIGMA * bits.stderr() - b;
            if margin > 0.0 {
                violations.push(Violation { check, margin });
            }
        }
    }
    SizeTotals {
        kstar: profile.kstar,
        degenerate: profile.kstar == profile.h,
        mean_paper_model_bits: bits.mean,
        std_paper_model_bits: bits.std,
        mean_exact_bits: exact.mean,
        bound_basic: TotalCheck::new(Some(totals.basic), bits.mean),
        bound_refined: TotalCheck::new(totals.refined, bits.mean),
        bound_finite_delta: TotalCheck::new(totals.finite_delta, bits.mean),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub h: u32,
    pub level: u32,
    pub fold: SampleStats,
    pub coupons: SampleStats,
    pub mean_difference: f64,
    pub combined_stderr: f64,
    pub passed: bool,
}

/// Compares level-`j` widths of folded random tries with a direct coupon
/// simulation that draws `2^(h-j)` strings of `2^j` labels each.
pub fn coupon_vs_fold_crosscheck(
    h: u32,
    dist: &NextHopDist,
    j: u32,
    trials: usize,
    seed: u64,
) -> Result<CrosscheckReport> {
    check_height(h)?;
    if j < 1 || j >= h {
        return Err(Error::OutOfRange {
            what: "level",
            value: j as i64,
            min: 1,
            max: h as i64 - 1,
        });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }

    let widths = run_trials(trials, None, |t| -> Result<f64> {
        let trie = LeafTrie::random(h, dist, trial_seed(seed, t))?;
        Ok(fold(&trie).level_widths()[j as usize] as f64)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // a separate seed stream keeps the two samples independent
    let coupon_seed = trial_seed(seed, u64::MAX);
    let len = 1usize << j;
    let m = 1usize << (h - j);
    let distinct = run_trials(trials, None, |t| {
        let mut rng = seeded_rng(trial_seed(coupon_seed, t));
        let mut seen = HashSet::with_capacity(m);
        let draws = (0..m).map(|_| (0..len).map(|_| dist.sample(&mut rng)).collect::<Vec<_>>());
        count_distinct(&mut seen, draws) as f64
    })?;

    let fold_stats = SampleStats::from_values(widths);
    let coupon_stats = SampleStats::from_values(distinct);
    let mean_difference = fold_stats.mean - coupon_stats.mean;
    let combined_stderr = fold_stats.stderr().hypot(coupon_stats.stderr());
    Ok(CrosscheckReport {
        h,
        level: j,
        fold: fold_stats,
        coupons: coupon_stats,
        mean_difference,
        combined_stderr,
        passed: mean_difference.abs() <= SIGMA * combined_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> NextHopDist {
        NextHopDist::from_probs(p).unwrap()
    }

    #[test]
    fn trivial_coupon_runs() {
        let s = simulate_coupons(&[1.0], 37, 50, 1).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 0.0));
        let s = simulate_coupons(&[0.5, 0.5], 1, 50, 1).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 0.0));
        assert!(simulate_coupons(&[0.5, 0.4], 3, 5, 1).is_err());
        assert!(simulate_coupons(&[1.0], 0, 5, 1).is_err());
    }

    #[test]
    fn coupon_simulation_matches_exact() {
        let s = simulate_coupons(&[0.9, 0.1], 16, 100_000, 99).unwrap();
        let exact = bounds::expected_distinct_exact(&[0.9, 0.1], 16).unwrap();
        assert!(
            (s.mean - exact).abs() <= SIGMA * s.stderr(),
            "{s:?} vs {exact}"
        );
    }

    #[test]
    fn seeds_are_spread() {
        let seeds: HashSet<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(0, 0), trial_seed(1, 0));
    }

    #[test]
    fn sample_stats() {
        let s = SampleStats::from_values([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(SampleStats::from_values([3.0]).std, 0.0);
    }

    #[test]
    fn multinomials() {
        assert_eq!(multinomial(&[2, 2]), 6.0);
        assert_eq!(multinomial(&[1, 1, 1]), 6.0);
        assert_eq!(multinomial(&[0, 4]), 1.0);
        assert_eq!(multinomial(&[8, 8]), 12870.0);
    }

    /// Brute force over every string of the level.
    fn enumerate_level(probs: &[f64], j: u32, m: u64) -> f64 {
        let len = 1usize << j;
        let delta = probs.len();
        let total = delta.pow(len as u32);
        (0..total)
            .map(|mut s| {
                let mut p = 1.0;
                for _ in 0..len {
                    p *= probs[s % delta];
                    s /= delta;
                }
                1.0 - (1.0 - p).powf(m as f64)
            })
            .sum()
    }

    #[test]
    fn class_sum_matches_enumeration() {
        for probs in [
            &[0.5, 0.5][..],
            &[0.9, 0.1],
            &[0.7, 0.2, 0.05, 0.05],
            &[0.2, 0.3, 0.5],
        ] {
            let d = dist(probs);
            for h in [6u32, 12] {
                for j in 0..=3u32 {
                    if (1usize << j) as f64 * (probs.len() as f64).log2() > 20.0 {
                        continue;
                    }
                    let got = level_expectation_exact(&d, h, j, 20.0).unwrap();
                    let want = enumerate_level(probs, j, 1 << (h - j));
                    assert!(
                        (got - want).abs() < 1e-9,
                        "{probs:?} h={h} j={j}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn level_one_skewed_example() {
        let d = dist(&[0.9, 0.1]);
        let got = level_expectation_exact(&d, 12, 1, 20.0).unwrap();
        let direct: f64 = [0.81, 0.09, 0.09, 0.01]
            .iter()
            .map(|p: &f64| 1.0 - (1.0 - p).powi(2048))
            .sum();
        assert!((got - direct).abs() < 1e-12);
        assert!((got - 4.0).abs() < 1e-6);
    }

    #[test]
    fn gate_and_singleton() {
        let d = dist(&[0.5, 0.5]);
        assert!(level_expectation_exact(&d, 12, 5, 20.0).is_none());
        assert!(level_expectation_exact(&d, 12, 4, 20.0).is_some());
        let one = dist(&[1.0]);
        assert_eq!(level_expectation_exact(&one, 12, 11, 20.0), Some(1.0));
    }

    #[test]
    fn constant_trie_report() {
        let cfg = ExperimentConfig::new(4, dist(&[1.0]), 10, 3).unwrap();
        let r = run_validation(&cfg).unwrap();
        assert!(r.passed());
        for lv in &r.per_level {
            assert_eq!(lv.empirical_mean_width, 1.0);
            assert_eq!(lv.empirical_std, 0.0);
        }
        let t = r.totals.unwrap();
        assert!(t.degenerate);
        assert_eq!(t.mean_paper_model_bits, 0.0);
        assert!(t.bound_refined.skipped());
        assert!(t.bound_finite_delta.skipped());
        assert_eq!(t.bound_basic.bound, Some(96.0));
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = ExperimentConfig::new(8, dist(&[0.6, 0.3, 0.1]), 20, 17).unwrap();
        let a = run_validation(&cfg).unwrap();
        let b = run_validation(&cfg.clone().with_threads(Some(1))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_reports() {
        let cfg = ExperimentConfig::new(6, dist(&[0.5, 0.5]), 5, 1).unwrap();
        let lv = run_level_validation(&cfg).unwrap();
        assert!(lv.totals.is_none() && lv.per_level.len() == 7);
        let sz = run_size_validation(&cfg).unwrap();
        assert!(sz.totals.is_some() && sz.per_level.is_empty());
    }

    #[test]
    fn crosscheck_singleton_is_constant() {
        let r = coupon_vs_fold_crosscheck(6, &dist(&[1.0]), 2, 20, 5).unwrap();
        assert_eq!(r.fold.mean, 1.0);
        assert_eq!(r.coupons.mean, 1.0);
        assert!(r.passed);
        assert!(coupon_vs_fold_crosscheck(6, &dist(&[1.0]), 6, 20, 5).is_err());
        assert!(coupon_vs_fold_crosscheck(6, &dist(&[1.0]), 0, 20, 5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::new(0, dist(&[1.0]), 1, 0).is_err());
        assert!(ExperimentConfig::new(4, dist(&[1.0]), 0, 0).is_err());
    }
}

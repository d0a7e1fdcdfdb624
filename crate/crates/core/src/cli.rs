//! The `prefix-dag` command line.
//!
//! Exit status: 0 on success, 1 when a validation finds violations (or a
//! lookup disagrees between trie and DAG), 2 on usage or input errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, BoundProfile};
use crate::experiments::{self, ExperimentConfig, ExperimentReport};
use crate::folding::{fold, FoldedDag, MemoryAccount};
use crate::trie::{self, Address, Label, LeafTrie, NextHopDist, IPV4_HEIGHT};
use crate::{Error, Result};

/// Caps the worker threads used by `validate`.
pub const THREADS_ENV: &str = "PREFIX_DAG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "prefix-dag",
    version,
    about = "Fold leaf-labeled tries into prefix DAGs and check their size bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Trie height h.
    #[arg(long, global = true, default_value_t = IPV4_HEIGHT)]
    pub height: u32,
    /// Next-hop probabilities, comma separated; labels are 0, 1, ...
    /// Without --probs or --delta the labels are uniform over delta = 2.
    #[arg(long, global = true, value_delimiter = ',', conflicts_with = "delta")]
    pub probs: Option<Vec<f64>>,
    /// Uniform distribution over this many labels.
    #[arg(long, global = true)]
    pub delta: Option<u32>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Trie file or prefix table to read instead of generating a random trie.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Label for addresses no prefix-table rule covers.
    #[arg(long, global = true, default_value_t = 0)]
    pub default_label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random trie file.
    Generate,
    /// Fold a trie and print the DAG dump and its memory account.
    Fold {
        /// Pointer level for the uniform bit model; defaults to the bound maximum.
        #[arg(long)]
        kstar: Option<u32>,
    },
    /// Print every analytic bound for the given height and distribution.
    Bounds,
    /// Monte Carlo distinct-coupon counts for m draws.
    Simulate {
        #[arg(long)]
        m: u64,
    },
    /// Check level widths and total sizes of random folded tries against the bounds.
    Validate,
    /// Look up one address in the trie and in its DAG.
    Lookup {
        /// Address as a string of h bits.
        #[arg(long)]
        address: String,
    },
    /// Observed widths next to the bounds, as plotting CSV.
    Report,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Runs one subcommand. `Ok(false)` means the command ran but found a
/// violation.
pub fn dispatch(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    let mut out: Box<dyn Write> = match &c.output {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let ok = match &cli.command {
        Command::Generate => {
            let dist = c.dist()?;
            let trie = LeafTrie::random(c.height, &dist, c.seed)?;
            trie.write_to(dist.delta(), &mut out)?;
            true
        }
        Command::Fold { kstar } => {
            let trie = c.load_trie()?;
            let profile = c.profile_for_trie(&trie)?;
            let dag = fold(&trie);
            let account = dag.account_memory(kstar.unwrap_or(profile.kstar))?;
            if account.degenerate {
                eprintln!(
                    "warning: kstar = h = {}, uniform bit model charges 0 bits",
                    trie.height()
                );
            }
            write_fold(&mut out, c.format, &dag, &account, &profile)?;
            true
        }
        Command::Bounds => {
            let dist = c.dist()?;
            let profile = bounds::bound_profile(c.height, &dist)?;
            write_bounds(&mut out, c.format, &profile)?;
            true
        }
        Command::Simulate { m } => {
            let dist = c.dist()?;
            write_simulation(&mut out, c.format, &dist, *m, c.trials, c.seed)?;
            true
        }
        Command::Validate => {
            let cfg = ExperimentConfig::new(c.height, c.dist()?, c.trials, c.seed)?
                .with_threads(threads_from_env()?);
            let report = experiments::run_validation(&cfg)?;
            write_validation(&mut out, c.format, &report)?;
            for v in &report.violations {
                eprintln!("violation: {:?} exceeds its bound by {}", v.check, v.margin);
            }
            report.passed()
        }
        Command::Lookup { address } => {
            let trie = c.load_trie()?;
            let address: Address = address.parse()?;
            let from_trie = trie.lookup(&address)?;
            let from_dag = fold(&trie).lookup(&address)?;
            match c.format {
                Format::Json => writeln!(
                    out,
                    "{}",
                    serde_json::json!({
                        "address": address.to_string(),
                        "trie": from_trie,
                        "dag": from_dag,
                        "agree": from_trie == from_dag,
                    })
                )?,
                Format::Csv => {
                    writeln!(out, "address,trie,dag")?;
                    writeln!(out, "{address},{from_trie},{from_dag}")?;
                }
                Format::Text => writeln!(out, "{address} trie={from_trie} dag={from_dag}")?,
            }
            if from_trie != from_dag {
                eprintln!("error: trie and DAG disagree on {address}");
            }
            from_trie == from_dag
        }
        Command::Report => {
            let trie = c.load_trie()?;
            let profile = c.profile_for_trie(&trie)?;
            let rows = plot_rows(&fold(&trie).level_widths(), &profile);
            match c.format {
                Format::Json => json_line(&mut out, &rows)?,
                _ => write_csv(&mut out, &rows)?,
            }
            true
        }
    };
    out.flush()?;
    Ok(ok)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .map(Some)
            .ok_or_else(|| {
                Error::invalid(format!("{THREADS_ENV}={v:?} is not a positive integer"))
            }),
        Err(_) => Ok(None),
    }
}

impl CommonArgs {
    fn dist(&self) -> Result<NextHopDist> {
        match (&self.probs, self.delta) {
            (Some(p), None) => NextHopDist::from_probs(p),
            (None, Some(d)) => NextHopDist::uniform(d),
            (None, None) => NextHopDist::uniform(2),
            (Some(_), Some(_)) => Err(Error::invalid("--probs and --delta are mutually exclusive")),
        }
    }

    fn load_trie(&self) -> Result<LeafTrie> {
        let Some(path) = &self.input else {
            return LeafTrie::random(self.height, &self.dist()?, self.seed);
        };
        let text = fs::read_to_string(path)?;
        if trie::is_trie_file(&text) {
            Ok(LeafTrie::read_from(text.as_bytes())?.0)
        } else {
            let rules = trie::parse_prefix_table(&text)?;
            LeafTrie::from_prefix_table(&rules, self.height, Label(self.default_label))
        }
    }

    /// Bounds for a trie: from --probs/--delta when given, otherwise from
    /// the trie's own label frequencies.
    fn profile_for_trie(&self, trie: &LeafTrie) -> Result<BoundProfile> {
        let dist = if self.probs.is_some() || self.delta.is_some() || self.input.is_none() {
            self.dist()?
        } else {
            empirical_dist(trie)?
        };
        bounds::bound_profile(trie.height(), &dist)
    }
}

/// Label frequencies of the leaves.
pub fn empirical_dist(trie: &LeafTrie) -> Result<NextHopDist> {
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for &l in trie.leaves() {
        *counts.entry(l).or_default() += 1;
    }
    let n = trie.leaves().len() as f64;
    let (labels, mut probs): (Vec<_>, Vec<_>) =
        counts.into_iter().map(|(l, c)| (l, c as f64 / n)).unzip();
    let rest: f64 = probs[1..].iter().sum();
    probs[0] = 1.0 - rest;
    NextHopDist::new(labels, probs)
}

fn json_line<W: Write + ?Sized, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn write_csv<W: Write + ?Sized, T: Serialize>(out: &mut W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

/// Row of the width-versus-bound plotting CSV.
#[derive(Debug, Serialize)]
pub struct PlotRow {
    pub level: u32,
    pub width: usize,
    pub cap_pow2: f64,
    pub cap_delta: f64,
    pub entropy_bound: f64,
    pub min_bound: f64,
}

pub fn plot_rows(widths: &[usize], profile: &BoundProfile) -> Vec<PlotRow> {
    profile
        .per_level
        .iter()
        .zip(widths)
        .map(|(lb, &width)| PlotRow {
            level: lb.level,
            width,
            cap_pow2: lb.terms.pow2_cap,
            cap_delta: lb.terms.delta_cap(),
            entropy_bound: lb.terms.entropy_term,
            min_bound: lb.terms.min_bound,
        })
        .collect()
}

fn write_fold<W: Write + ?Sized>(
    out: &mut W,
    format: Format,
    dag: &FoldedDag,
    account: &MemoryAccount,
    profile: &BoundProfile,
) -> Result<()> {
    match format {
        Format::Text => {
            write!(out, "{dag}")?;
            let widths: Vec<String> = account
                .per_level_widths
                .iter()
                .map(|w| w.to_string())
                .collect();
            writeln!(out, "# widths: {}", widths.join(" "))?;
            writeln!(
                out,
                "# kstar={} paper_model_bits={} exact_bits={}",
                account.kstar, account.paper_model_bits, account.exact_bits
            )?;
        }
        Format::Json => json_line(out, &serde_json::json!({ "dag": dag, "memory": account }))?,
        Format::Csv => write_csv(out, &plot_rows(&account.per_level_widths, profile))?,
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    level: u32,
    zone: String,
    entropy_term: f64,
    pow2_cap: f64,
    delta_cap_log2: f64,
    min_bound: f64,
}

fn write_bounds<W: Write + ?Sized>(out: &mut W, format: Format, p: &BoundProfile) -> Result<()> {
    match format {
        Format::Json => json_line(out, p)?,
        Format::Csv => {
            let rows: Vec<BoundRow> = p
                .per_level
                .iter()
                .map(|lb| BoundRow {
                    level: lb.level,
                    zone: lb.zone.to_string(),
                    entropy_term: lb.terms.entropy_term,
                    pow2_cap: lb.terms.pow2_cap,
                    delta_cap_log2: lb.terms.delta_cap_log2,
                    min_bound: lb.terms.min_bound,
                })
                .collect();
            write_csv(out, &rows)?;
        }
        Format::Text => {
            writeln!(out, "h={} H_O={} delta={}", p.h, p.entropy, p.delta)?;
            let show = |c: Option<bounds::CriticalLevel>| match c {
                Some(c) => match c.anchor {
                    Some(a) => format!("{} (closed form {a})", c.level),
                    None => c.level.to_string(),
                },
                None => "n/a".to_string(),
            };
            writeln!(out, "kstar={} k={} l={}", p.kstar, show(p.k), show(p.l))?;
            writeln!(out, "M={}", p.m_bits)?;
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| v.to_string());
            writeln!(out, "total_basic={}", p.totals.basic)?;
            writeln!(out, "total_refined={}", opt(p.totals.refined))?;
            writeln!(out, "total_finite_delta={}", opt(p.totals.finite_delta))?;
            writeln!(
                out,
                "bits_per_leaf_limit={}",
                opt(p.totals.per_leaf_asymptotic)
            )?;
            writeln!(
                out,
                "{:>5} {:>4} {:>14} {:>12} {:>14} {:>12}",
                "level", "zone", "entropy_term", "pow2_cap", "delta_cap_log2", "min_bound"
            )?;
            for lb in &p.per_level {
                let t = &lb.terms;
                writeln!(
                    out,
                    "{:>5} {:>4} {:>14.3} {:>12} {:>14.3} {:>12.3}",
                    lb.level, lb.zone, t.entropy_term, t.pow2_cap, t.delta_cap_log2, t.min_bound
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationRow {
    m: u64,
    trials: usize,
    mean: f64,
    std: f64,
    exact: f64,
    bound: Option<f64>,
}

fn write_simulation<W: Write + ?Sized>(
    out: &mut W,
    format: Format,
    dist: &NextHopDist,
    m: u64,
    trials: usize,
    seed: u64,
) -> Result<()> {
    let stats = experiments::simulate_coupons(dist.probs(), m, trials, seed)?;
    let row = SimulationRow {
        m,
        trials,
        mean: stats.mean,
        std: stats.std,
        exact: bounds::expected_distinct_exact(dist.probs(), m)?,
        bound: bounds::coupon_bound(m, dist.entropy(), (dist.delta() as f64).log2()).ok(),
    };
    match format {
        Format::Json => json_line(out, &row)?,
        Format::Csv => write_csv(out, &[row])?,
        Format::Text => writeln!(
            out,
            "m={} trials={} mean={} std={} exact={} bound={}",
            row.m,
            row.trials,
            row.mean,
            row.std,
            row.exact,
            row.bound.map_or("n/a".into(), |b| b.to_string())
        )?,
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationRow {
    level: u32,
    mean_width: f64,
    std: f64,
    stderr: f64,
    bound: f64,
    exact_expectation: Option<f64>,
}

fn write_validation<W: Write + ?Sized>(
    out: &mut W,
    format: Format,
    r: &ExperimentReport,
) -> Result<()> {
    match format {
        Format::Json => json_line(out, r)?,
        Format::Csv => {
            let rows: Vec<ValidationRow> = r
                .per_level
                .iter()
                .map(|l| ValidationRow {
                    level: l.level,
                    mean_width: l.empirical_mean_width,
                    std: l.empirical_std,
                    stderr: l.stderr,
                    bound: l.bound,
                    exact_expectation: l.exact_expectation,
                })
                .collect();
            write_csv(out, &rows)?;
        }
        Format::Text => {
            writeln!(
                out,
                "h={} delta={} H_O={} trials={} seed={}",
                r.h, r.delta, r.entropy, r.trials, r.seed
            )?;
            writeln!(
                out,
                "{:>5} {:>12} {:>10} {:>12} {:>12}",
                "level", "mean_width", "stderr", "bound", "exact"
            )?;
            for l in &r.per_level {
                let exact = l
                    .exact_expectation
                    .map_or("-".into(), |e| format!("{e:.3}"));
                writeln!(
                    out,
                    "{:>5} {:>12.3} {:>10.3} {:>12.3} {:>12}",
                    l.level, l.empirical_mean_width, l.stderr, l.bound, exact
                )?;
            }
            if let Some(t) = &r.totals {
                writeln!(
                    out,
                    "kstar={} mean_paper_model_bits={} mean_exact_bits={}",
                    t.kstar, t.mean_paper_model_bits, t.mean_exact_bits
                )?;
                for (name, c) in [
                    ("basic", &t.bound_basic),
                    ("refined", &t.bound_refined),
                    ("finite_delta", &t.bound_finite_delta),
                ] {
                    match (c.bound, c.slack) {
                        (Some(b), Some(s)) => writeln!(out, "bound_{name}={b} slack={s}")?,
                        _ => writeln!(out, "bound_{name}=skipped")?,
                    }
                }
            }
            writeln!(out, "violations={}", r.violations.len())?;
        }
    }
    Ok(())
}

//! AUC-versus-request-count curves on simulated data.
//!
//! Each seed generates a preexisting network (or reuses a file-backed one),
//! draws labels and a request stream, scores every new user after its first
//! `x` counted requests, and measures ROC AUC against the sampled labels at
//! each checkpoint `x`. A user is scored at `x` only if it made at least `x`
//! counted requests.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::{classify_prefixes, Mode};
use crate::config::{load_file_network, ExperimentConfig, NetworkSource};
use crate::error::{Error, Result};
use crate::graph::{ClassLabel, EdgeStream, LabelSet, LabeledNetwork};
use crate::sim::{sample_labels, sample_stream};
use crate::synth::generate_network;
use crate::tables::{build_homophily_table, build_plusplus_table, build_preattack_table, TableKind, Touched};

pub const CURVES_MAGIC: &str = "#preattack-curves v1 truth=simulated-labels";

const SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;
const MAX_RESEEDS: u64 = 64;

/// ROC AUC by the Mann-Whitney statistic, ties counted as one half.
/// `true` marks the positive class.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Degenerate("NaN score".into()));
    }
    let n_pos = scores.iter().filter(|(_, t)| *t).count() as u128;
    let n_neg = scores.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC needs both classes".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the positives' rank sum keeps average ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let pos = sorted[i..j].iter().filter(|(_, t)| *t).count() as u128;
        twice_rank_sum += pos * (i as u128 + 1 + j as u128);
        i = j;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub kind: TableKind,
    pub mode: Mode,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::new(TableKind::PreAttack, Mode::Full),
        Variant::new(TableKind::PreAttack, Mode::SendOnly),
        Variant::new(TableKind::PlusPlus, Mode::Full),
        Variant::new(TableKind::PlusPlus, Mode::SendOnly),
        Variant::new(TableKind::Homophily, Mode::Full),
        Variant::new(TableKind::Homophily, Mode::SendOnly),
    ];

    pub const fn new(kind: TableKind, mode: Mode) -> Self {
        Variant { kind, mode }
    }

    /// `all`, or a comma-separated list of variant names.
    pub fn parse_list(s: &str) -> Result<Vec<Variant>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut out: Vec<Variant> = Vec::new();
        for name in s.split(',').map(str::trim) {
            let v: Variant = name.parse()?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            TableKind::PreAttack => "preattack",
            TableKind::PlusPlus => "preattack_pp",
            TableKind::Homophily => "homophily",
        };
        match self.mode {
            Mode::Full => f.write_str(base),
            Mode::SendOnly => write!(f, "{base}-send"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// One `(variant, checkpoint, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPoint {
    pub variant: Variant,
    pub checkpoint: usize,
    pub seed: u64,
    /// NaN when fewer than one user of each class reached the checkpoint.
    pub auc: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub checkpoint: usize,
    /// Mean AUC over the seeds where it was defined.
    pub auc: f64,
    pub n_users: usize,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub variant: Variant,
    pub points: Vec<CurvePoint>,
    pub seeds: Vec<u64>,
}

impl ConvergenceCurve {
    pub fn at(&self, checkpoint: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.checkpoint == checkpoint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub rows: Vec<SeedPoint>,
    pub curves: Vec<ConvergenceCurve>,
}

impl Experiment {
    pub fn curve(&self, variant: Variant) -> Option<&ConvergenceCurve> {
        self.curves.iter().find(|c| c.variant == variant)
    }
}

/// `n` run seeds derived from `base`.
pub fn seed_sequence(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i.wrapping_mul(SEED_STEP))).collect()
}

pub fn run_experiment(config: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<Experiment> {
    if variants.is_empty() {
        return Err(Error::Config("no variants selected".into()));
    }
    let shared = load_file_network(&config.network)?;
    let per_seed: Vec<Vec<SeedPoint>> = seeds
        .par_iter()
        .map(|&seed| run_seed(config, variants, seed, shared.as_ref()))
        .collect::<Result<_>>()?;
    let rows: Vec<SeedPoint> = per_seed.into_iter().flatten().collect();
    let curves = variants
        .iter()
        .map(|&variant| {
            let points = config
                .checkpoints
                .iter()
                .map(|&checkpoint| {
                    let cells: Vec<&SeedPoint> = rows
                        .iter()
                        .filter(|r| r.variant == variant && r.checkpoint == checkpoint)
                        .collect();
                    let defined: Vec<f64> = cells.iter().map(|r| r.auc).filter(|a| !a.is_nan()).collect();
                    CurvePoint {
                        checkpoint,
                        auc: if defined.is_empty() {
                            f64::NAN
                        } else {
                            defined.iter().sum::<f64>() / defined.len() as f64
                        },
                        n_users: cells.iter().map(|r| r.n_users).sum(),
                        n_seeds: defined.len(),
                    }
                })
                .collect();
            ConvergenceCurve {
                variant,
                points,
                seeds: seeds.to_vec(),
            }
        })
        .collect();
    Ok(Experiment { rows, curves })
}

fn all_one_class(labels: &LabelSet) -> bool {
    let mut it = labels.labels.values();
    let first = it.next();
    it.all(|l| Some(l) == first)
}

/// New-user labels and a request stream for one seed on `network`. Labels
/// that come out single-class are redrawn, with a warning, so AUC is defined.
pub fn simulate(config: &ExperimentConfig, network: &LabeledNetwork, seed: u64) -> Result<(LabelSet, EdgeStream)> {
    if network.k() != config.k {
        return Err(Error::ClassMismatch {
            expected: config.k,
            got: network.k(),
        });
    }
    let max_id = network.max_user_id().map_or(0, |u| u.0);
    let mut sim = config.sim_config(seed, max_id)?;
    let mut labels = sample_labels(&sim)?;
    let mut attempt = 0;
    while all_one_class(&labels) {
        attempt += 1;
        if attempt > MAX_RESEEDS {
            return Err(Error::Degenerate(format!(
                "labels for seed {seed} stayed single-class after {MAX_RESEEDS} redraws"
            )));
        }
        let next = seed.wrapping_add(attempt.wrapping_mul(SEED_STEP.rotate_left(17)));
        log::warn!("seed {seed}: all new users share one class, redrawing labels with seed {next}");
        sim.seed = next;
        labels = sample_labels(&sim)?;
    }
    let stream = sample_stream(network, &labels, &sim)?;
    Ok((labels, stream))
}

/// One seed's rows, variant-major then checkpoint order.
pub fn run_seed(
    config: &ExperimentConfig,
    variants: &[Variant],
    seed: u64,
    shared: Option<&LabeledNetwork>,
) -> Result<Vec<SeedPoint>> {
    let owned;
    let network = match (&config.network, shared) {
        (_, Some(net)) => net,
        (NetworkSource::Synthetic(spec), None) => {
            owned = generate_network(spec, seed)?.network;
            &owned
        }
        (NetworkSource::Files { .. }, None) => {
            owned = load_file_network(&config.network)?.expect("file source");
            &owned
        }
    };
    let (labels, stream) = simulate(config, network, seed)?;
    let touched = Touched::from_events(&stream.events);
    let tensor = config.classifier_tensor(network)?;

    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for &v in variants {
        let table = match tables.iter().position(|(k, _)| *k == v.kind) {
            Some(i) => i,
            None => {
                let t = match v.kind {
                    TableKind::PreAttack => build_preattack_table(network, config.classifier_alpha, &touched)?,
                    TableKind::PlusPlus => build_plusplus_table(network, &tensor, &touched)?,
                    TableKind::Homophily => build_homophily_table(network, &tensor, &touched)?,
                };
                tables.push((v.kind, t));
                tables.len() - 1
            }
        };
        let prefixes = classify_prefixes(&tables[table].1, &stream.events, &config.prior, v.mode, &config.checkpoints)?;
        for (i, &checkpoint) in config.checkpoints.iter().enumerate() {
            let scores: Vec<(f64, bool)> = prefixes
                .at(i)
                .filter(|r| r.edge_count() as usize >= checkpoint)
                .map(|r| (r.p_fake(), labels.get(r.user) == Some(ClassLabel::FAKE)))
                .collect();
            let auc = auc(&scores).unwrap_or(f64::NAN);
            rows.push(SeedPoint {
                variant: v,
                checkpoint,
                seed,
                auc,
                n_users: scores.len(),
            });
        }
    }
    Ok(rows)
}

/// `variant,checkpoint,seed,auc,n_users` rows after a versioned header.
pub fn write_curves_csv<W: Write>(rows: &[SeedPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CURVES_MAGIC}")?;
    writeln!(w, "variant,checkpoint,seed,auc,n_users")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.variant, r.checkpoint, r.seed, r.auc, r.n_users)?;
    }
    Ok(())
}

/// Mean curves as whitespace-separated columns for gnuplot.
pub fn write_curves_dat<W: Write>(curves: &[ConvergenceCurve], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CURVES_MAGIC}")?;
    write!(w, "# checkpoint")?;
    for c in curves {
        write!(w, " {}", c.variant)?;
    }
    writeln!(w)?;
    let Some(first) = curves.first() else {
        return Ok(());
    };
    for (i, p) in first.points.iter().enumerate() {
        write!(w, "{}", p.checkpoint)?;
        for c in curves {
            write!(w, " {}", c.points[i].auc)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

//! PreAttacK posterior engine.
//!
//! Each new user's class log-likelihood is the sum of frozen table
//! log-probabilities over the user's requests; the posterior is the softmax of
//! log-likelihood plus log prior. A single pass over the stream suffices.

use rustc_hash::{FxHashMap, FxHashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Direction, EdgeEvent, Prior, UserId};
use crate::index::SlotIndex;
use crate::math::softmax;
use crate::tables::PATable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Full,
    /// Ignore requests the new user received.
    SendOnly,
}

impl Mode {
    #[inline]
    fn counts(self, direction: Direction) -> bool {
        !(self == Mode::SendOnly && direction == Direction::Receive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub user: UserId,
    pub posterior: Vec<f64>,
    /// Per-class log-likelihood of the counted requests.
    pub log_joint: Vec<f64>,
    pub edge_count_send: u32,
    pub edge_count_recv: u32,
}

impl PosteriorReport {
    /// Binary posterior probability of being fake.
    pub fn p_fake(&self) -> f64 {
        self.posterior[1]
    }

    pub fn edge_count(&self) -> u32 {
        self.edge_count_send + self.edge_count_recv
    }
}

/// Posterior from per-class log-likelihoods. Equal likelihoods return the
/// prior unchanged; all-impossible evidence is an error.
pub fn posterior_from_log_joint(user: UserId, log_joint: &[f64], prior: &Prior) -> Result<Vec<f64>> {
    let first = log_joint[0];
    if log_joint.iter().all(|&x| x == first) {
        if first == f64::NEG_INFINITY {
            return Err(Error::ImpossibleEvidence(user));
        }
        return Ok(prior.probs().to_vec());
    }
    let scores: Vec<f64> = log_joint
        .iter()
        .zip(prior.probs())
        .map(|(lj, p)| lj + p.ln())
        .collect();
    softmax(&scores).ok_or(Error::ImpossibleEvidence(user))
}

#[derive(Debug, Clone)]
struct Slot {
    user: UserId,
    n_send: u32,
    n_recv: u32,
}

/// Per-user running log sums, laid out `[slot * k + class]`.
struct Accumulator<'t> {
    table: &'t PATable,
    mode: Mode,
    k: usize,
    index: SlotIndex,
    slots: Vec<Slot>,
    sums: Vec<f64>,
}

impl<'t> Accumulator<'t> {
    fn new(table: &'t PATable, mode: Mode, events: &[EdgeEvent]) -> Self {
        let lo = events.iter().map(|e| e.new_user.0).min().unwrap_or(0);
        let hi = events.iter().map(|e| e.new_user.0).max().unwrap_or(0);
        Accumulator {
            table,
            mode,
            k: table.k(),
            // Sized as if every event came from a distinct user.
            index: SlotIndex::for_range(lo, hi, events.len()),
            slots: Vec::new(),
            sums: Vec::new(),
        }
    }

    fn slot_of(&mut self, user: UserId) -> (usize, bool) {
        let (s, fresh) = self.index.insert(user);
        let s = s as usize;
        if !fresh {
            return (s, false);
        }
        self.slots.push(Slot {
            user,
            n_send: 0,
            n_recv: 0,
        });
        self.sums.extend(std::iter::repeat_n(0.0, self.k));
        (s, true)
    }

    /// Adds one event; returns the user's slot and whether it was counted.
    #[inline]
    fn push(&mut self, e: &EdgeEvent) -> Result<(usize, bool, bool)> {
        let (s, fresh) = self.slot_of(e.new_user);
        if !self.mode.counts(e.direction) {
            return Ok((s, fresh, false));
        }
        let row = self
            .table
            .log_probs(e.preexisting_user, e.direction)
            .ok_or(Error::MissingTableEntry {
                user: e.preexisting_user,
                direction: e.direction.as_str(),
            })?;
        let k = self.k;
        for (acc, lp) in self.sums[s * k..(s + 1) * k].iter_mut().zip(row) {
            *acc += lp;
        }
        let slot = &mut self.slots[s];
        match e.direction {
            Direction::Send => slot.n_send += 1,
            Direction::Receive => slot.n_recv += 1,
        }
        Ok((s, fresh, true))
    }

    fn sums(&self, s: usize) -> &[f64] {
        &self.sums[s * self.k..(s + 1) * self.k]
    }

    fn report(&self, s: usize, prior: &Prior) -> Result<PosteriorReport> {
        let slot = &self.slots[s];
        let log_joint = self.sums(s).to_vec();
        Ok(PosteriorReport {
            user: slot.user,
            posterior: posterior_from_log_joint(slot.user, &log_joint, prior)?,
            log_joint,
            edge_count_send: slot.n_send,
            edge_count_recv: slot.n_recv,
        })
    }
}

fn check_k(table: &PATable, prior: &Prior) -> Result<()> {
    if table.k() != prior.k() {
        return Err(Error::ClassMismatch {
            expected: table.k(),
            got: prior.k(),
        });
    }
    Ok(())
}

/// One report per new user, in order of first appearance in `events`.
pub fn classify(
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    mode: Mode,
) -> Result<Vec<PosteriorReport>> {
    check_k(table, prior)?;
    let mut acc = Accumulator::new(table, mode, events);
    for e in events {
        acc.push(e)?;
    }
    (0..acc.slots.len()).map(|s| acc.report(s, prior)).collect()
}

/// k-class posterior over all requests.
pub fn classify_multiclass(
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
) -> Result<Vec<PosteriorReport>> {
    classify(table, events, prior, Mode::Full)
}

/// Same output as [`classify`], with users partitioned into `shards` groups
/// that are accumulated in parallel. Each user's events are still summed in
/// stream order, so the result is bit-identical for every shard count.
pub fn classify_sharded(
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    mode: Mode,
    shards: usize,
) -> Result<Vec<PosteriorReport>> {
    if shards <= 1 {
        return classify(table, events, prior, mode);
    }
    check_k(table, prior)?;
    let mut parts: Vec<Vec<EdgeEvent>> = vec![Vec::new(); shards];
    let mut order = Vec::new();
    let mut seen = FxHashSet::default();
    for e in events {
        if seen.insert(e.new_user) {
            order.push(e.new_user);
        }
        parts[(e.new_user.0 % shards as u64) as usize].push(*e);
    }
    let results: Vec<Vec<PosteriorReport>> = parts
        .par_iter()
        .map(|p| classify(table, p, prior, mode))
        .collect::<Result<_>>()?;
    let mut by_user: FxHashMap<UserId, PosteriorReport> = results
        .into_iter()
        .flatten()
        .map(|r| (r.user, r))
        .collect();
    Ok(order
        .into_iter()
        .map(|u| by_user.remove(&u).expect("every user lands in one shard"))
        .collect())
}

/// Snapshots of every user's posterior after their first `x` counted requests,
/// for each checkpoint `x`.
#[derive(Debug, Clone)]
pub struct PrefixReports {
    checkpoints: Vec<usize>,
    users: Vec<UserId>,
    // `[user * checkpoints.len() + i]`
    reports: Vec<PosteriorReport>,
}

impl PrefixReports {
    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn get(&self, user: UserId, checkpoint: usize) -> Option<&PosteriorReport> {
        let u = self.users.iter().position(|&x| x == user)?;
        let i = self.checkpoints.iter().position(|&c| c == checkpoint)?;
        self.reports.get(u * self.checkpoints.len() + i)
    }

    /// Reports at checkpoint index `i`, one per user.
    pub fn at(&self, i: usize) -> impl Iterator<Item = &PosteriorReport> {
        let n = self.checkpoints.len();
        self.reports.iter().skip(i).step_by(n)
    }

    /// `(checkpoint, report)` pairs, user-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &PosteriorReport)> {
        let cps = &self.checkpoints;
        self.reports
            .iter()
            .enumerate()
            .map(move |(j, r)| (cps[j % cps.len()], r))
    }
}

/// Incremental prefix classification: running sums are snapshotted when a
/// user's counted-request count reaches each checkpoint. Checkpoints beyond a
/// user's total saturate at the full-stream report.
pub fn classify_prefixes(
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    mode: Mode,
    checkpoints: &[usize],
) -> Result<PrefixReports> {
    check_k(table, prior)?;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("checkpoints must be sorted ascending".into()));
    }
    let n_cp = checkpoints.len();
    let mut acc = Accumulator::new(table, mode, events);
    // Per slot: next checkpoint index and the snapshots taken so far.
    let mut next: Vec<usize> = Vec::new();
    let mut snaps: Vec<Vec<PosteriorReport>> = Vec::new();

    let snapshot = |acc: &Accumulator, s: usize, next: &mut usize, out: &mut Vec<PosteriorReport>| -> Result<()> {
        let slot = &acc.slots[s];
        let counted = (slot.n_send + slot.n_recv) as usize;
        while *next < n_cp && checkpoints[*next] == counted {
            out.push(acc.report(s, prior)?);
            *next += 1;
        }
        Ok(())
    };

    for e in events {
        let (s, fresh, counted) = acc.push(e)?;
        if fresh {
            next.push(0);
            snaps.push(Vec::with_capacity(n_cp));
            // Checkpoint 0 is the prior, taken before this event counts.
            let mut n0 = 0;
            let mut zero = Vec::new();
            while n0 < n_cp && checkpoints[n0] == 0 {
                zero.push(PosteriorReport {
                    user: e.new_user,
                    posterior: prior.probs().to_vec(),
                    log_joint: vec![0.0; table.k()],
                    edge_count_send: 0,
                    edge_count_recv: 0,
                });
                n0 += 1;
            }
            next[s] = n0;
            snaps[s] = zero;
        }
        if counted {
            snapshot(&acc, s, &mut next[s], &mut snaps[s])?;
        }
    }

    let mut reports = Vec::with_capacity(acc.slots.len() * n_cp);
    for (s, mut got) in snaps.into_iter().enumerate() {
        if got.len() < n_cp {
            let last = acc.report(s, prior)?;
            got.resize(n_cp, last);
        }
        reports.extend(got);
    }
    Ok(PrefixReports {
        checkpoints: checkpoints.to_vec(),
        users: acc.slots.iter().map(|s| s.user).collect(),
        reports,
    })
}

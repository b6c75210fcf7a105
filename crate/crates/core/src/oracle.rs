//! Exact posterior by brute force over the other new users' labels.
//!
//! The replay evaluates the sequential model: every request's partner is drawn
//! with probability proportional to `alpha + running count`, where the running
//! counts include earlier new requests. The `(user, direction)` draws are
//! label-independent and are left out, since they cancel in any posterior.
//! Desk scale only: cost is `k^(m-1)` replays of the stream.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::alpha::AlphaSpec;
use crate::error::{Error, Result};
use crate::graph::{distinct_new_users, ClassLabel, Direction, EdgeEvent, LabeledNetwork, Prior, UserId};
use crate::math::LogSumExp;

pub const DEFAULT_CAP: usize = 12;

/// Which requests count as evidence about the target's class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evidence {
    /// Only the target's own requests, evaluated under exact running counts.
    /// Other users' labels are marginalized under the prior.
    #[default]
    TargetOnly,
    /// The full joint probability of the whole stream.
    FullJoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    /// Maximum number of distinct new users in the stream.
    pub cap: usize,
    pub evidence: Evidence,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            cap: DEFAULT_CAP,
            evidence: Evidence::TargetOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    pub user: UserId,
    pub p_star: Vec<f64>,
    pub enumerated_combinations: u64,
}

impl ExactPosterior {
    pub fn p_fake(&self) -> f64 {
        self.p_star[1]
    }
}

/// Running model state for one replay.
struct Replay<'a> {
    network: &'a LabeledNetwork,
    alpha: &'a AlphaSpec,
    k: usize,
    // Extra counts from new requests, keyed by (preexisting user, class).
    recv_extra: HashMap<(UserId, usize), u64>,
    sent_extra: HashMap<(UserId, usize), u64>,
    // Per class: total normalizing weight over all of V.
    send_norm: Vec<f64>,
    recv_norm: Vec<f64>,
}

impl<'a> Replay<'a> {
    fn new(network: &'a LabeledNetwork, alpha: &'a AlphaSpec) -> Self {
        let k = network.k();
        let mut send_norm = vec![0.0; k];
        let mut recv_norm = vec![0.0; k];
        // Sum the unnormalized weights over V directly.
        for idx in 0..network.user_count() {
            let l = network.label_at(idx).index();
            for c in 0..k {
                send_norm[c] += alpha.weight(Direction::Send, c, l) + network.recv_from_at(idx, c) as f64;
                recv_norm[c] += alpha.weight(Direction::Receive, c, l) + network.sent_to_at(idx, c) as f64;
            }
        }
        Replay {
            network,
            alpha,
            k,
            recv_extra: HashMap::new(),
            sent_extra: HashMap::new(),
            send_norm,
            recv_norm,
        }
    }

    /// Log-probability of drawing `e`'s partner given the new user's class,
    /// then applies the event to the running counts.
    fn step(&mut self, e: &EdgeEvent, class: usize, step: usize) -> Result<f64> {
        let v = e.preexisting_user;
        let idx = self.network.index_of(v).ok_or(Error::UnknownUser(v))?;
        let l = self.network.label_at(idx).index();
        let (base, extra, norm) = match e.direction {
            Direction::Send => (
                self.network.recv_from_at(idx, class),
                &mut self.recv_extra,
                &mut self.send_norm,
            ),
            Direction::Receive => (
                self.network.sent_to_at(idx, class),
                &mut self.sent_extra,
                &mut self.recv_norm,
            ),
        };
        let slot = extra.entry((v, class)).or_insert(0);
        let num = self.alpha.weight(e.direction, class, l) + (base + *slot) as f64;
        let den = norm[class];
        if den <= 0.0 {
            return Err(Error::ZeroDrawDistribution {
                step,
                class,
                direction: e.direction.as_str(),
            });
        }
        *slot += 1;
        norm[class] += 1.0;
        Ok((num / den).ln())
    }
}

fn label_of(labels: &HashMap<UserId, ClassLabel>, u: UserId, k: usize) -> Result<usize> {
    let l = labels
        .get(&u)
        .ok_or(Error::UnlabeledEndpoint(u))?
        .index();
    if l >= k {
        return Err(Error::ClassOutOfRange { class: l, k });
    }
    Ok(l)
}

fn replay(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    events: &[EdgeEvent],
    labels: &HashMap<UserId, ClassLabel>,
    only: Option<UserId>,
) -> Result<f64> {
    alpha.validate(network.k())?;
    let mut r = Replay::new(network, alpha);
    let mut total = 0.0;
    for (i, e) in events.iter().enumerate() {
        let c = label_of(labels, e.new_user, r.k)?;
        let lp = r.step(e, c, i + 1)?;
        if only.is_none_or(|t| t == e.new_user) {
            total += lp;
        }
    }
    Ok(total)
}

/// Log-probability of every partner draw in `events` under the exact model,
/// given labels for all new users.
pub fn sequence_log_prob(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    events: &[EdgeEvent],
    labels: &HashMap<UserId, ClassLabel>,
) -> Result<f64> {
    replay(network, alpha, events, labels, None)
}

/// Log-probability of `target`'s own partner draws under the exact model; the
/// other users' requests still update the running counts.
pub fn target_log_prob(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    events: &[EdgeEvent],
    labels: &HashMap<UserId, ClassLabel>,
    target: UserId,
) -> Result<f64> {
    replay(network, alpha, events, labels, Some(target))
}

/// Posterior of `target` with every other new user's label held fixed.
pub fn conditional_posterior(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    events: &[EdgeEvent],
    prior: &Prior,
    target: UserId,
    others: &HashMap<UserId, ClassLabel>,
    evidence: Evidence,
) -> Result<Vec<f64>> {
    let k = network.k();
    check_prior(prior, k)?;
    let mut labels = others.clone();
    let mut scores = Vec::with_capacity(k);
    for c in 0..k {
        labels.insert(target, ClassLabel(c as u16));
        let ll = match evidence {
            Evidence::TargetOnly => target_log_prob(network, alpha, events, &labels, target)?,
            Evidence::FullJoint => sequence_log_prob(network, alpha, events, &labels)?,
        };
        scores.push(ll + prior.probs()[c].ln());
    }
    crate::math::softmax(&scores).ok_or(Error::ImpossibleEvidence(target))
}

fn check_prior(prior: &Prior, k: usize) -> Result<()> {
    if prior.k() != k {
        return Err(Error::ClassMismatch {
            expected: k,
            got: prior.k(),
        });
    }
    Ok(())
}

/// Exact posterior of `target`, enumerating the other new users' labels in
/// lexicographic order.
pub fn exact_posterior(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    events: &[EdgeEvent],
    prior: &Prior,
    target: UserId,
    opts: OracleOptions,
) -> Result<ExactPosterior> {
    let k = network.k();
    check_prior(prior, k)?;
    alpha.validate(k)?;
    let users = distinct_new_users(events);
    if !users.contains(&target) {
        return Err(Error::UserNotInStream(target));
    }
    if users.len() > opts.cap {
        return Err(Error::CapExceeded {
            users: users.len(),
            cap: opts.cap,
        });
    }
    let others: Vec<UserId> = users.into_iter().filter(|&u| u != target).collect();
    let combos = (k as u64).pow(others.len() as u32);
    let log_prior = prior.log_probs();

    // One row of per-class log weights per label combination.
    let rows: Vec<Vec<f64>> = (0..combos)
        .into_par_iter()
        .map(|code| -> Result<Vec<f64>> {
            let mut labels = HashMap::with_capacity(others.len() + 1);
            let mut rest = code;
            let mut log_w = 0.0;
            // Most significant digit is the first other user.
            for &u in others.iter().rev() {
                let c = (rest % k as u64) as usize;
                rest /= k as u64;
                log_w += log_prior[c];
                labels.insert(u, ClassLabel(c as u16));
            }
            let mut row = vec![f64::NEG_INFINITY; k];
            if log_w == f64::NEG_INFINITY {
                return Ok(row);
            }
            for (c, out) in row.iter_mut().enumerate() {
                if log_prior[c] == f64::NEG_INFINITY {
                    continue;
                }
                labels.insert(target, ClassLabel(c as u16));
                let ll = match opts.evidence {
                    Evidence::TargetOnly => target_log_prob(network, alpha, events, &labels, target)?,
                    Evidence::FullJoint => sequence_log_prob(network, alpha, events, &labels)?,
                };
                *out = log_w + log_prior[c] + ll;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut acc = vec![LogSumExp::default(); k];
    for row in &rows {
        for (a, &x) in acc.iter_mut().zip(row) {
            a.push(x);
        }
    }
    let per_class: Vec<f64> = acc.iter().map(LogSumExp::value).collect();
    let p_star = crate::math::softmax(&per_class).ok_or(Error::ImpossibleEvidence(target))?;
    Ok(ExactPosterior {
        user: target,
        p_star,
        enumerated_combinations: combos,
    })
}

/// Every distinct new user in `events`, used by callers sizing the cap.
pub fn new_user_count(events: &[EdgeEvent]) -> usize {
    events.iter().map(|e| e.new_user).collect::<HashSet<_>>().len()
}

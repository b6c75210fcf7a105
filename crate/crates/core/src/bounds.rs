//! Instance-specific worst-case bounds `f_lower <= P_hat / P* <= f_upper`.
//!
//! Every new request that precedes one of `u`'s requests is attributed to a
//! distinct phantom new user whose label is chosen adversarially. For the
//! lower bound, phantoms that share `u`'s partner `v` are fake and all others
//! real; the upper bound flips this. With `n_eq` earlier new requests
//! touching `v` (in the same role) and `n_ne` other earlier new requests, the
//! fake/real factors for a request `u -> v` are
//!
//! ```text
//! lower:  F = (a_F + n_eq) / (D_F + n_eq)    R = a_R / (D_R + n_ne)
//! upper:  F = a_F / (D_F + n_ne)             R = (a_R + n_eq) / (D_R + n_eq)
//! ```
//!
//! where `a_c / D_c` is the frozen `E0` fraction. Receive-side requests use the
//! same shapes with per-user sent counts. Binary (k = 2) only.

use std::collections::HashSet;

use rustc_hash::FxHashMap;

use crate::alpha::AlphaSpec;
use crate::classifier::posterior_from_log_joint;
use crate::error::{Error, Result};
use crate::graph::{ClassLabel, Direction, EdgeEvent, LabeledNetwork, Prior, UserId};
use crate::math::log_fraction;
use crate::tables::PATable;

const R: usize = ClassLabel::REAL.0 as usize;
const F: usize = ClassLabel::FAKE.0 as usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundOptions {
    /// Use the receive-bound fake-send denominator exactly as printed, with an
    /// extra `alpha` per `E0` edge. Off by default.
    pub literal_wcr_alpha: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub user: UserId,
    pub p_hat: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub worst_case_posterior_f: f64,
    pub worst_case_posterior_r: f64,
}

/// Frozen numerator/denominator pieces for one preexisting user and direction.
struct Fractions {
    num: [f64; 2],
    den: [f64; 2],
}

struct Model<'a> {
    network: &'a LabeledNetwork,
    alpha: &'a AlphaSpec,
    mass: [[f64; 2]; 2],
    literal_extra: f64,
}

impl<'a> Model<'a> {
    fn new(network: &'a LabeledNetwork, alpha: &'a AlphaSpec, opts: BoundOptions) -> Result<Self> {
        if network.k() != 2 {
            return Err(Error::ClassMismatch {
                expected: 2,
                got: network.k(),
            });
        }
        alpha.validate(2)?;
        let sizes = network.class_sizes();
        let mut mass = [[0.0; 2]; 2];
        for d in [Direction::Send, Direction::Receive] {
            for c in [R, F] {
                mass[d.slot()][c] = alpha.mass(d, c, sizes);
            }
        }
        let literal_extra = if opts.literal_wcr_alpha {
            // sum over E0 of alpha; with a tensor the fake->fake send weight stands in.
            alpha.weight(Direction::Send, F, F) * network.edge_count() as f64
        } else {
            0.0
        };
        Ok(Model {
            network,
            alpha,
            mass,
            literal_extra,
        })
    }

    fn fractions(&self, user: UserId, direction: Direction) -> Result<Fractions> {
        let net = self.network;
        let idx = net.index_of(user).ok_or(Error::UnknownUser(user))?;
        let label = net.label_at(idx).index();
        let mut f = Fractions {
            num: [0.0; 2],
            den: [0.0; 2],
        };
        for c in [R, F] {
            let (count, total) = match direction {
                Direction::Send => (net.recv_from_at(idx, c), net.total_sent_by(c)),
                Direction::Receive => (net.sent_to_at(idx, c), net.total_recv_by(c)),
            };
            f.num[c] = self.alpha.weight(direction, c, label) + count as f64;
            f.den[c] = self.mass[direction.slot()][c] + total as f64;
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Default)]
struct UserAcc {
    // [lower, upper] x [R, F]
    wc: [[f64; 2]; 2],
    touched: bool,
}

/// Running phantom counters: earlier new requests per (partner, role).
#[derive(Default)]
struct Phantoms {
    into: FxHashMap<UserId, u64>,
    from: FxHashMap<UserId, u64>,
    total: u64,
}

impl Phantoms {
    fn split(&self, e: &EdgeEvent) -> (f64, f64) {
        let map = match e.direction {
            Direction::Send => &self.into,
            Direction::Receive => &self.from,
        };
        let eq = map.get(&e.preexisting_user).copied().unwrap_or(0);
        (eq as f64, (self.total - eq) as f64)
    }

    fn record(&mut self, e: &EdgeEvent) {
        let map = match e.direction {
            Direction::Send => &mut self.into,
            Direction::Receive => &mut self.from,
        };
        *map.entry(e.preexisting_user).or_insert(0) += 1;
        self.total += 1;
    }
}

struct Pass<'a> {
    model: Model<'a>,
    phantoms: Phantoms,
    frac_cache: FxHashMap<(UserId, Direction), Fractions>,
}

impl<'a> Pass<'a> {
    /// Folds one event into `acc` (when given) and then into the counters.
    fn step(&mut self, e: &EdgeEvent, acc: Option<&mut UserAcc>) -> Result<()> {
        if let Some(acc) = acc {
            let (n_eq, n_ne) = self.phantoms.split(e);
            let key = (e.preexisting_user, e.direction);
            if !self.frac_cache.contains_key(&key) {
                let fr = self.model.fractions(e.preexisting_user, e.direction)?;
                self.frac_cache.insert(key, fr);
            }
            let fr = &self.frac_cache[&key];
            let extra = match e.direction {
                Direction::Send => self.model.literal_extra,
                Direction::Receive => 0.0,
            };
            let lower_f = log_fraction(fr.num[F] + n_eq, fr.den[F] + n_eq);
            let lower_r = log_fraction(fr.num[R], fr.den[R] + n_ne);
            let upper_f = log_fraction(fr.num[F], fr.den[F] + extra + n_ne);
            let upper_r = log_fraction(fr.num[R] + n_eq, fr.den[R] + n_eq);
            acc.wc[0][F] += lower_f;
            acc.wc[0][R] += lower_r;
            acc.wc[1][F] += upper_f;
            acc.wc[1][R] += upper_r;
            acc.touched = true;
        }
        self.phantoms.record(e);
        Ok(())
    }
}

fn p_hat_of(table: &PATable, user: UserId, events: &[EdgeEvent], prior: &Prior) -> Result<f64> {
    let mut lj = [0.0; 2];
    for e in events.iter().filter(|e| e.new_user == user) {
        let row = table
            .log_probs(e.preexisting_user, e.direction)
            .ok_or(Error::MissingTableEntry {
                user: e.preexisting_user,
                direction: e.direction.as_str(),
            })?;
        lj[R] += row[R];
        lj[F] += row[F];
    }
    Ok(posterior_from_log_joint(user, &lj, prior)?[F])
}

fn finish(user: UserId, p_hat: f64, acc: &UserAcc, prior: &Prior) -> Result<BoundReport> {
    let p_wcf = posterior_from_log_joint(user, &acc.wc[0], prior)?[F];
    let p_wcr = posterior_from_log_joint(user, &acc.wc[1], prior)?[F];
    if p_wcf == 0.0 || p_wcr == 0.0 {
        return Err(Error::Degenerate(format!(
            "zero worst-case posterior for user {user}"
        )));
    }
    Ok(BoundReport {
        user,
        p_hat,
        f_lower: p_hat / p_wcf,
        f_upper: p_hat / p_wcr,
        worst_case_posterior_f: p_wcf,
        worst_case_posterior_r: p_wcr,
    })
}

/// Bounds for every target user (all new users when `targets` is `None`), in
/// order of first appearance. `table` supplies `P_hat` and must be built from
/// the same network and alpha.
pub fn compute_bounds(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    targets: Option<&HashSet<UserId>>,
    opts: BoundOptions,
) -> Result<Vec<BoundReport>> {
    if prior.k() != 2 {
        return Err(Error::ClassMismatch {
            expected: 2,
            got: prior.k(),
        });
    }
    let mut pass = Pass {
        model: Model::new(network, alpha, opts)?,
        phantoms: Phantoms::default(),
        frac_cache: FxHashMap::default(),
    };
    let mut index: FxHashMap<UserId, usize> = FxHashMap::default();
    let mut accs: Vec<(UserId, UserAcc, [f64; 2])> = Vec::new();
    for e in events {
        let wanted = targets.is_none_or(|t| t.contains(&e.new_user));
        let slot = if wanted {
            let s = *index.entry(e.new_user).or_insert_with(|| {
                accs.push((e.new_user, UserAcc::default(), [0.0; 2]));
                accs.len() - 1
            });
            let row = table
                .log_probs(e.preexisting_user, e.direction)
                .ok_or(Error::MissingTableEntry {
                    user: e.preexisting_user,
                    direction: e.direction.as_str(),
                })?;
            accs[s].2[R] += row[R];
            accs[s].2[F] += row[F];
            Some(s)
        } else {
            None
        };
        pass.step(e, slot.map(|s| &mut accs[s].1))?;
    }
    if let Some(t) = targets {
        if let Some(missing) = t.iter().find(|u| !index.contains_key(u)) {
            return Err(Error::UserNotInStream(*missing));
        }
    }
    accs.iter()
        .map(|(u, acc, lj)| {
            let p_hat = posterior_from_log_joint(*u, lj, prior)?[F];
            finish(*u, p_hat, acc, prior)
        })
        .collect()
}

/// Bounds for a single user; convenience over [`compute_bounds`].
pub fn bound_for(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    user: UserId,
    opts: BoundOptions,
) -> Result<BoundReport> {
    let target: HashSet<UserId> = [user].into_iter().collect();
    let mut r = compute_bounds(network, alpha, table, events, prior, Some(&target), opts)?;
    debug_assert_eq!(r.len(), 1);
    let r = r.remove(0);
    debug_assert_eq!(r.p_hat, p_hat_of(table, user, events, prior)?);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    /// Longest stream prefix for which every user seen so far stays within the thresholds.
    pub prefix_len: usize,
    pub users_in_prefix: usize,
    /// Share of all users within thresholds on the full stream.
    pub fraction_within_full: f64,
}

/// Largest batch (stream prefix) for which every new user's bounds satisfy
/// `f_lower >= min_lower` and `f_upper <= max_upper`.
#[allow(clippy::too_many_arguments)]
pub fn max_batch(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    table: &PATable,
    events: &[EdgeEvent],
    prior: &Prior,
    min_lower: f64,
    max_upper: f64,
    opts: BoundOptions,
) -> Result<BatchReport> {
    let mut pass = Pass {
        model: Model::new(network, alpha, opts)?,
        phantoms: Phantoms::default(),
        frac_cache: FxHashMap::default(),
    };
    let mut index: FxHashMap<UserId, usize> = FxHashMap::default();
    let mut accs: Vec<(UserId, UserAcc, [f64; 2], bool)> = Vec::new();
    let mut violating = 0usize;
    let mut prefix_len = None;
    for (i, e) in events.iter().enumerate() {
        let s = *index.entry(e.new_user).or_insert_with(|| {
            accs.push((e.new_user, UserAcc::default(), [0.0; 2], false));
            accs.len() - 1
        });
        let row = table
            .log_probs(e.preexisting_user, e.direction)
            .ok_or(Error::MissingTableEntry {
                user: e.preexisting_user,
                direction: e.direction.as_str(),
            })?;
        accs[s].2[R] += row[R];
        accs[s].2[F] += row[F];
        pass.step(e, Some(&mut accs[s].1))?;
        let (u, acc, lj, was_bad) = &mut accs[s];
        let p_hat = posterior_from_log_joint(*u, lj, prior)?[F];
        let rep = finish(*u, p_hat, acc, prior)?;
        let bad = rep.f_lower < min_lower || rep.f_upper > max_upper;
        match (*was_bad, bad) {
            (false, true) => violating += 1,
            (true, false) => violating -= 1,
            _ => {}
        }
        *was_bad = bad;
        if violating > 0 && prefix_len.is_none() {
            prefix_len = Some(i);
        }
    }
    let prefix_len = prefix_len.unwrap_or(events.len());
    let users_in_prefix = crate::graph::distinct_new_users(&events[..prefix_len]).len();
    let fraction_within_full = if accs.is_empty() {
        1.0
    } else {
        accs.iter().filter(|a| !a.3).count() as f64 / accs.len() as f64
    };
    Ok(BatchReport {
        prefix_len,
        users_in_prefix,
        fraction_within_full,
    })
}

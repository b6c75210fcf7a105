//! Frozen-`E0` attachment probability tables.
//!
//! For a preexisting user `v`, class `c` and direction, the table stores
//!
//! ```text
//! send:    ln P(v | c, send) = ln(alpha+(c, l_v) + recv_from[v][c]) - ln(sum_w alpha+(c, l_w) + total_sent_by[c])
//! receive: ln P(v | c, recv) = ln(alpha-(l_v, c) + sent_to[v][c])   - ln(sum_w alpha-(l_w, c) + total_recv_by[c])
//! ```
//!
//! The scalar-alpha table is the special case with every alpha equal, and the
//! homophily table drops the `E0` counts entirely. Only users touched by the
//! stream are materialized.

use rustc_hash::FxHashSet;
use std::io::Write;

use crate::alpha::{AlphaSpec, AlphaTensor};
use crate::error::{Error, Result};
use crate::graph::{Direction, EdgeEvent, LabeledNetwork, UserId};
use crate::index::SlotIndex;
use crate::math::log_fraction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    PreAttack,
    PlusPlus,
    Homophily,
}

/// Preexisting users that need table rows, per direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Touched {
    /// Users who receive a request from a new user.
    pub send: FxHashSet<UserId>,
    /// Users who send a request to a new user.
    pub recv: FxHashSet<UserId>,
}

impl Touched {
    pub fn from_events(events: &[EdgeEvent]) -> Self {
        let mut t = Touched::default();
        for e in events {
            match e.direction {
                Direction::Send => t.send.insert(e.preexisting_user),
                Direction::Receive => t.recv.insert(e.preexisting_user),
            };
        }
        t
    }

    /// Every preexisting user in both directions.
    pub fn all(network: &LabeledNetwork) -> Self {
        let users: FxHashSet<UserId> = network.users().iter().copied().collect();
        Touched {
            send: users.clone(),
            recv: users,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Side {
    index: SlotIndex,
    // `[row * k + class]`
    log_prob: Vec<f64>,
    log_den: Vec<f64>,
}

impl Side {
    fn row(&self, user: UserId, k: usize) -> Option<&[f64]> {
        self.index.get(user).map(|r| {
            let r = r as usize;
            &self.log_prob[r * k..(r + 1) * k]
        })
    }
}

#[derive(Debug, Clone)]
pub struct PATable {
    kind: TableKind,
    k: usize,
    sides: [Side; 2],
}

impl PATable {
    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Per-class log probabilities for `user` in `direction`.
    #[inline]
    pub fn log_probs(&self, user: UserId, direction: Direction) -> Option<&[f64]> {
        self.sides[direction.slot()].row(user, self.k)
    }

    /// Linear-space probability; intended for audits and tests.
    pub fn prob(&self, user: UserId, class: usize, direction: Direction) -> Option<f64> {
        self.log_probs(user, direction).map(|r| r[class].exp())
    }

    /// Log of the global normalizer for `class` in `direction`.
    pub fn log_denominator(&self, direction: Direction, class: usize) -> f64 {
        self.sides[direction.slot()].log_den[class]
    }

    pub fn len(&self, direction: Direction) -> usize {
        self.sides[direction.slot()].index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.iter().all(|s| s.index.is_empty())
    }

    /// Writes `nu,class,direction,log_prob` rows sorted by user, class, direction.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nu,class,direction,log_prob")?;
        let mut users: Vec<UserId> = self
            .sides
            .iter()
            .flat_map(|s| s.index.users())
            .collect();
        users.sort_unstable();
        users.dedup();
        for u in users {
            for c in 0..self.k {
                for d in [Direction::Send, Direction::Receive] {
                    if let Some(row) = self.log_probs(u, d) {
                        writeln!(w, "{u},{c},{},{}", d.as_str(), row[c])?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// PreAttacK table with a single smoothing constant.
pub fn build_preattack_table(
    network: &LabeledNetwork,
    alpha: f64,
    touched: &Touched,
) -> Result<PATable> {
    build(network, &AlphaSpec::Scalar(alpha), touched, true, TableKind::PreAttack)
}

/// PreAttacK++ table with label-dependent smoothing.
pub fn build_plusplus_table(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    touched: &Touched,
) -> Result<PATable> {
    build(network, alpha, touched, true, TableKind::PlusPlus)
}

/// Homophily table: the PreAttacK++ table of the same users with `E0` removed.
pub fn build_homophily_table(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    touched: &Touched,
) -> Result<PATable> {
    build(network, alpha, touched, false, TableKind::Homophily)
}

fn build(
    network: &LabeledNetwork,
    alpha: &AlphaSpec,
    touched: &Touched,
    use_counts: bool,
    kind: TableKind,
) -> Result<PATable> {
    let k = network.k();
    alpha.validate(k)?;
    let mut sides: [Side; 2] = Default::default();
    for (direction, users) in [(Direction::Send, &touched.send), (Direction::Receive, &touched.recv)]
    {
        let dens: Vec<f64> = (0..k)
            .map(|c| {
                let total = match (use_counts, direction) {
                    (false, _) => 0,
                    (true, Direction::Send) => network.total_sent_by(c),
                    (true, Direction::Receive) => network.total_recv_by(c),
                };
                alpha.mass(direction, c, network.class_sizes()) + total as f64
            })
            .collect();
        if !users.is_empty() {
            if let Some(c) = dens.iter().position(|&d| d <= 0.0) {
                return Err(Error::ZeroDenominator {
                    class: c,
                    direction: direction.as_str(),
                });
            }
        }

        let side = &mut sides[direction.slot()];
        side.log_den = dens.iter().map(|d| d.ln()).collect();
        side.log_prob.reserve(users.len() * k);
        let lo = users.iter().map(|u| u.0).min().unwrap_or(0);
        let hi = users.iter().map(|u| u.0).max().unwrap_or(0);
        side.index = SlotIndex::for_range(lo, hi, users.len());
        for &user in users {
            let idx = network.index_of(user).ok_or(Error::UnknownUser(user))?;
            let label = network.label_at(idx).index();
            side.index.insert(user);
            for (c, &den) in dens.iter().enumerate() {
                let count = match (use_counts, direction) {
                    (false, _) => 0,
                    (true, Direction::Send) => network.recv_from_at(idx, c),
                    (true, Direction::Receive) => network.sent_to_at(idx, c),
                };
                let num = alpha.weight(direction, c, label) + count as f64;
                side.log_prob.push(log_fraction(num, den));
            }
        }
    }
    Ok(PATable { kind, k, sides })
}

/// Label-dependent alpha estimated from class-level request rates in `E0`.
///
/// `alpha+[c][l] = base * |V| * P(recipient class l | sender class c) / n_l`, with
/// the class-pair frequencies smoothed by `k` pseudo-edges spread in proportion
/// to class sizes. The smoothing mass over all of `V` stays `base * |V|`, and an
/// empty `E0` reproduces the scalar `base`.
pub fn estimate_alpha_tensor(network: &LabeledNetwork, base: f64) -> Result<AlphaTensor> {
    let k = network.k();
    let sizes = network.class_sizes();
    let n_users = network.user_count() as f64;
    // pair[src class][dst class]
    let mut pair = vec![0u64; k * k];
    for idx in 0..network.user_count() {
        let dst = network.label_at(idx).index();
        for src in 0..k {
            pair[src * k + dst] += network.recv_from_at(idx, src);
        }
    }
    let pseudo = k as f64;
    let share = |l: usize| sizes[l] as f64 / n_users;
    let rate = |p: f64, l: usize| {
        if sizes[l] == 0 {
            0.0
        } else {
            base * n_users * p / sizes[l] as f64
        }
    };

    let mut send = vec![0.0; k * k];
    for new in 0..k {
        let row: f64 = (0..k).map(|l| pair[new * k + l] as f64).sum();
        for pre in 0..k {
            let p = (pair[new * k + pre] as f64 + pseudo * share(pre)) / (row + pseudo);
            send[new * k + pre] = rate(p, pre);
        }
    }
    // recv is row-major (pre, new): who sends to users of class `new`.
    let mut recv = vec![0.0; k * k];
    for new in 0..k {
        let col: f64 = (0..k).map(|l| pair[l * k + new] as f64).sum();
        for pre in 0..k {
            let p = (pair[pre * k + new] as f64 + pseudo * share(pre)) / (col + pseudo);
            recv[pre * k + new] = rate(p, pre);
        }
    }
    AlphaTensor::new(k, send, recv)
}

//! Domain types shared by every stage: users, labels, request events and the
//! preexisting labeled request network with its attachment-count summaries.

use std::collections::BTreeMap;

use rustc_hash::FxHashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::index::SlotIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Class index in `[0, k)`. In binary mode index 0 is Real and 1 is Fake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(pub u16);

impl ClassLabel {
    pub const REAL: ClassLabel = ClassLabel(0);
    pub const FAKE: ClassLabel = ClassLabel(1);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Orientation of a request relative to the new user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// The new user sent a request to a preexisting user.
    Send,
    /// A preexisting user sent a request to the new user.
    Receive,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Receive => "receive",
        }
    }

    pub(crate) fn slot(self) -> usize {
        match self {
            Direction::Send => 0,
            Direction::Receive => 1,
        }
    }
}

/// Inclusive id range reserved for new users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdRange {
    pub lo: u64,
    pub hi: u64,
}

impl IdRange {
    pub fn new(lo: u64, hi: u64) -> Self {
        IdRange { lo, hi }
    }

    #[inline]
    pub fn contains(&self, id: UserId) -> bool {
        self.lo <= id.0 && id.0 <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEvent {
    pub seq: u64,
    pub new_user: UserId,
    pub preexisting_user: UserId,
    pub direction: Direction,
}

/// A sequence-ordered stream of requests between new and preexisting users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeStream {
    pub new_range: IdRange,
    pub events: Vec<EdgeEvent>,
}

impl EdgeStream {
    /// Checks seq monotonicity and the new/preexisting endpoint split. When a
    /// network is supplied every preexisting endpoint must be one of its users.
    pub fn validate(&self, network: Option<&LabeledNetwork>) -> Result<()> {
        let mut prev: Option<u64> = None;
        for ev in &self.events {
            if let Some(p) = prev {
                if ev.seq <= p {
                    return Err(Error::OutOfOrder { prev: p, seq: ev.seq });
                }
            }
            prev = Some(ev.seq);
            if !self.new_range.contains(ev.new_user) {
                return Err(Error::NotANewUser {
                    seq: ev.seq,
                    user: ev.new_user,
                });
            }
            if self.new_range.contains(ev.preexisting_user) {
                return Err(Error::NewToNewEdge {
                    seq: ev.seq,
                    a: ev.new_user,
                    b: ev.preexisting_user,
                });
            }
            if let Some(net) = network {
                if net.index_of(ev.preexisting_user).is_none() {
                    return Err(Error::UnknownUser(ev.preexisting_user));
                }
            }
        }
        Ok(())
    }

    /// New users in order of first appearance.
    pub fn new_users(&self) -> Vec<UserId> {
        distinct_new_users(&self.events)
    }
}

pub(crate) fn distinct_new_users(events: &[EdgeEvent]) -> Vec<UserId> {
    let mut seen = FxHashSet::default();
    events
        .iter()
        .filter(|e| seen.insert(e.new_user))
        .map(|e| e.new_user)
        .collect()
}

/// Labels of a set of users for a k-class problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub k: usize,
    pub labels: BTreeMap<UserId, ClassLabel>,
}

impl LabelSet {
    pub fn new(k: usize) -> Self {
        LabelSet {
            k,
            labels: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, user: UserId, label: ClassLabel) -> Result<()> {
        if label.index() >= self.k {
            return Err(Error::ClassOutOfRange {
                class: label.index(),
                k: self.k,
            });
        }
        if self.labels.insert(user, label).is_some() {
            return Err(Error::DuplicateLabel(user));
        }
        Ok(())
    }

    pub fn get(&self, user: UserId) -> Option<ClassLabel> {
        self.labels.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Class prior. Binary priors are stored as `[P(real), P(fake)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    probs: Vec<f64>,
}

impl Prior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Config(format!(
                "prior needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!("prior entries must lie in [0,1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("prior sums to {sum}, not 1")));
        }
        Ok(Prior { probs })
    }

    /// Binary prior from the probability of being fake.
    pub fn binary(pi_fake: f64) -> Result<Self> {
        Prior::new(vec![1.0 - pi_fake, pi_fake])
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }
}

/// The preexisting request network `E0` reduced to per-user and per-class
/// attachment counts. Edges themselves are not retained.
#[derive(Debug, Clone)]
pub struct LabeledNetwork {
    k: usize,
    index: SlotIndex,
    ids: Vec<UserId>,
    labels: Vec<ClassLabel>,
    // Flattened `[user * k + class]`.
    recv_from: Vec<u64>,
    sent_to: Vec<u64>,
    total_sent_by: Vec<u64>,
    total_recv_by: Vec<u64>,
    class_sizes: Vec<u64>,
    edge_count: u64,
}

impl LabeledNetwork {
    pub fn builder(k: usize) -> NetworkBuilder {
        NetworkBuilder::new(k)
    }

    /// Convenience constructor from in-memory labels and edges.
    pub fn from_parts<E>(labels: &LabelSet, edges: E) -> Result<Self>
    where
        E: IntoIterator<Item = (UserId, UserId)>,
    {
        let mut b = NetworkBuilder::new(labels.k);
        for (&u, &l) in &labels.labels {
            b.add_user(u, l)?;
        }
        for (src, dst) in edges {
            b.add_edge(src, dst)?;
        }
        Ok(b.finish())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn user_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn index_of(&self, user: UserId) -> Option<usize> {
        self.index.get(user).map(|i| i as usize)
    }

    pub fn user_at(&self, idx: usize) -> UserId {
        self.ids[idx]
    }

    pub fn users(&self) -> &[UserId] {
        &self.ids
    }

    pub fn label(&self, user: UserId) -> Option<ClassLabel> {
        self.index_of(user).map(|i| self.labels[i])
    }

    pub fn label_at(&self, idx: usize) -> ClassLabel {
        self.labels[idx]
    }

    /// `#{x -> user in E0 : label(x) = class}`
    pub fn recv_from(&self, user: UserId, class: usize) -> u64 {
        self.index_of(user)
            .map_or(0, |i| self.recv_from_at(i, class))
    }

    /// `#{user -> y in E0 : label(y) = class}`
    pub fn sent_to(&self, user: UserId, class: usize) -> u64 {
        self.index_of(user).map_or(0, |i| self.sent_to_at(i, class))
    }

    #[inline]
    pub fn recv_from_at(&self, idx: usize, class: usize) -> u64 {
        self.recv_from[idx * self.k + class]
    }

    #[inline]
    pub fn sent_to_at(&self, idx: usize, class: usize) -> u64 {
        self.sent_to[idx * self.k + class]
    }

    /// Number of `E0` edges whose sender has `class`.
    pub fn total_sent_by(&self, class: usize) -> u64 {
        self.total_sent_by[class]
    }

    /// Number of `E0` edges whose recipient has `class`.
    pub fn total_recv_by(&self, class: usize) -> u64 {
        self.total_recv_by[class]
    }

    /// Number of preexisting users per class.
    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn max_user_id(&self) -> Option<UserId> {
        self.ids.iter().copied().max()
    }

    pub fn label_set(&self) -> LabelSet {
        LabelSet {
            k: self.k,
            labels: self.ids.iter().copied().zip(self.labels.iter().copied()).collect(),
        }
    }

    /// Same users and labels with every `E0` count zeroed.
    pub fn without_edges(&self) -> LabeledNetwork {
        LabeledNetwork {
            recv_from: vec![0; self.recv_from.len()],
            sent_to: vec![0; self.sent_to.len()],
            total_sent_by: vec![0; self.k],
            total_recv_by: vec![0; self.k],
            edge_count: 0,
            ..self.clone()
        }
    }
}

/// Accumulates labels then edges into a [`LabeledNetwork`] in one pass.
#[derive(Debug)]
pub struct NetworkBuilder {
    net: LabeledNetwork,
}

impl NetworkBuilder {
    pub fn new(k: usize) -> Self {
        NetworkBuilder {
            net: LabeledNetwork {
                k,
                index: SlotIndex::default(),
                ids: Vec::new(),
                labels: Vec::new(),
                recv_from: Vec::new(),
                sent_to: Vec::new(),
                total_sent_by: vec![0; k],
                total_recv_by: vec![0; k],
                class_sizes: vec![0; k],
                edge_count: 0,
            },
        }
    }

    pub fn add_user(&mut self, user: UserId, label: ClassLabel) -> Result<()> {
        let net = &mut self.net;
        if label.index() >= net.k {
            return Err(Error::ClassOutOfRange {
                class: label.index(),
                k: net.k,
            });
        }
        if !net.index.insert(user).1 {
            return Err(Error::DuplicateLabel(user));
        }
        net.ids.push(user);
        net.labels.push(label);
        net.recv_from.extend(std::iter::repeat_n(0, net.k));
        net.sent_to.extend(std::iter::repeat_n(0, net.k));
        net.class_sizes[label.index()] += 1;
        Ok(())
    }

    pub fn add_edge(&mut self, src: UserId, dst: UserId) -> Result<()> {
        let net = &mut self.net;
        let s = net.index_of(src).ok_or(Error::UnlabeledEndpoint(src))?;
        let d = net.index_of(dst).ok_or(Error::UnlabeledEndpoint(dst))?;
        let (ls, ld) = (net.labels[s].index(), net.labels[d].index());
        net.recv_from[d * net.k + ls] += 1;
        net.sent_to[s * net.k + ld] += 1;
        net.total_sent_by[ls] += 1;
        net.total_recv_by[ld] += 1;
        net.edge_count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> LabeledNetwork {
        self.net.index = SlotIndex::from_ids(&self.net.ids);
        self.net
    }
}

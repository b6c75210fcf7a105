//! Shared fixtures and a from-scratch reference model.
//!
//! The reference functions recount everything from the raw edge list on every
//! step and work in linear space. They share no code with the library beyond
//! the input types.
#![allow(dead_code)]

use std::collections::HashMap;

use preattack::{AlphaSpec, AlphaTensor, ClassLabel, Direction, EdgeEvent, LabelSet, LabeledNetwork, Prior, UserId};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NEW_BASE: u64 = 1000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ev(seq: u64, u: u64, v: u64, d: Direction) -> EdgeEvent {
    EdgeEvent {
        seq,
        new_user: UserId(u),
        preexisting_user: UserId(v),
        direction: d,
    }
}

pub fn slot(d: Direction) -> usize {
    match d {
        Direction::Send => 0,
        Direction::Receive => 1,
    }
}

/// A small problem with both raw and library views of the same data.
#[derive(Clone, Debug)]
pub struct Inst {
    pub k: usize,
    pub labels: Vec<(u64, usize)>,
    pub edges: Vec<(u64, u64)>,
    /// `[dir][new class][pre class]`, flattened.
    pub alpha: Vec<f64>,
    pub prior: Vec<f64>,
    pub events: Vec<EdgeEvent>,
    pub network: LabeledNetwork,
    pub alpha_spec: AlphaSpec,
    pub prior_lib: Prior,
}

impl Inst {
    pub fn new(
        k: usize,
        labels: Vec<(u64, usize)>,
        edges: Vec<(u64, u64)>,
        alpha: AlphaChoice,
        prior: Vec<f64>,
        events: Vec<EdgeEvent>,
    ) -> Self {
        let mut ls = LabelSet::new(k);
        for &(u, c) in &labels {
            ls.insert(UserId(u), ClassLabel(c as u16)).unwrap();
        }
        let network =
            LabeledNetwork::from_parts(&ls, edges.iter().map(|&(a, b)| (UserId(a), UserId(b)))).unwrap();
        let (flat, alpha_spec) = match alpha {
            AlphaChoice::Scalar(a) => (vec![a; 2 * k * k], AlphaSpec::Scalar(a)),
            AlphaChoice::Tensor(flat) => {
                assert_eq!(flat.len(), 2 * k * k);
                let send = flat[..k * k].to_vec();
                // library takes recv row-major as (pre, new)
                let mut recv = vec![0.0; k * k];
                for new in 0..k {
                    for pre in 0..k {
                        recv[pre * k + new] = flat[k * k + new * k + pre];
                    }
                }
                (flat, AlphaSpec::Tensor(AlphaTensor::new(k, send, recv).unwrap()))
            }
        };
        let prior_lib = Prior::new(prior.clone()).unwrap();
        Inst {
            k,
            labels,
            edges,
            alpha: flat,
            prior,
            events,
            network,
            alpha_spec,
            prior_lib,
        }
    }

    pub fn alpha_at(&self, d: Direction, new: usize, pre: usize) -> f64 {
        self.alpha[slot(d) * self.k * self.k + new * self.k + pre]
    }

    pub fn label_of(&self, v: u64) -> usize {
        self.labels.iter().find(|(u, _)| *u == v).unwrap().1
    }

    pub fn new_users(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for e in &self.events {
            if !out.contains(&e.new_user.0) {
                out.push(e.new_user.0);
            }
        }
        out
    }

    pub fn with_events(&self, events: Vec<EdgeEvent>) -> Inst {
        Inst {
            events,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub enum AlphaChoice {
    Scalar(f64),
    Tensor(Vec<f64>),
}

/// The fixed four-user network: a, b, c real (1, 2, 3), f fake (4);
/// edges f->a, b->a, c->b.
pub fn t1(events: Vec<EdgeEvent>, prior_fake: f64) -> Inst {
    Inst::new(
        2,
        vec![(1, 0), (2, 0), (3, 0), (4, 1)],
        vec![(4, 1), (2, 1), (3, 2)],
        AlphaChoice::Scalar(1.0),
        vec![1.0 - prior_fake, prior_fake],
        events,
    )
}

pub struct Shape {
    pub max_users: usize,
    pub max_edges: usize,
    pub max_new: usize,
    pub max_events: usize,
    pub alphas: &'static [f64],
    pub priors: &'static [f64],
    pub tensor: bool,
}

pub const SMALL: Shape = Shape {
    max_users: 20,
    max_edges: 40,
    max_new: 4,
    max_events: 10,
    alphas: &[0.5, 1.0, 2.0],
    priors: &[0.2, 0.5],
    tensor: false,
};

/// Random binary instance; every preexisting id is in `1..=n`, new ids start
/// at [`NEW_BASE`].
pub fn random_inst(r: &mut ChaCha8Rng, shape: &Shape) -> Inst {
    let n = r.random_range(2..=shape.max_users);
    let labels: Vec<(u64, usize)> = (1..=n as u64).map(|u| (u, r.random_range(0..2))).collect();
    let n_edges = r.random_range(0..=shape.max_edges);
    let mut edges = Vec::with_capacity(n_edges);
    while edges.len() < n_edges {
        let a = r.random_range(1..=n as u64);
        let b = r.random_range(1..=n as u64);
        if a != b {
            edges.push((a, b));
        }
    }
    let alpha = if shape.tensor && r.random_bool(0.5) {
        AlphaChoice::Tensor((0..8).map(|_| r.random_range(0.1..3.0)).collect())
    } else {
        AlphaChoice::Scalar(*shape.alphas.choose(r).unwrap())
    };
    let pi = *shape.priors.choose(r).unwrap();
    let m = r.random_range(1..=shape.max_new);
    let n_events = r.random_range(1..=shape.max_events);
    let events = random_events(r, n as u64, m as u64, n_events);
    Inst::new(2, labels, edges, alpha, vec![1.0 - pi, pi], events)
}

/// Uniform events over preexisting ids `1..=n` and `m` new users.
pub fn random_events(r: &mut ChaCha8Rng, n: u64, m: u64, count: usize) -> Vec<EdgeEvent> {
    (0..count)
        .map(|i| {
            let d = if r.random_bool(0.5) { Direction::Send } else { Direction::Receive };
            ev(i as u64 + 1, NEW_BASE + r.random_range(0..m), r.random_range(1..=n), d)
        })
        .collect()
}

/// Random interleaving that keeps each user's own events in order; sequence
/// numbers are reassigned.
pub fn reinterleave(r: &mut ChaCha8Rng, events: &[EdgeEvent]) -> Vec<EdgeEvent> {
    let mut queues: Vec<(UserId, std::collections::VecDeque<EdgeEvent>)> = Vec::new();
    for e in events {
        match queues.iter_mut().find(|(u, _)| *u == e.new_user) {
            Some((_, q)) => q.push_back(*e),
            None => queues.push((e.new_user, [*e].into_iter().collect())),
        }
    }
    let mut owners: Vec<usize> = queues
        .iter()
        .enumerate()
        .flat_map(|(i, (_, q))| std::iter::repeat_n(i, q.len()))
        .collect();
    owners.shuffle(r);
    owners
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            let mut e = queues[o].1.pop_front().unwrap();
            e.seq = i as u64 + 1;
            e
        })
        .collect()
}

/// Draw weights over the preexisting users (in `inst.labels` order) for a new
/// user of `class` at the step after `prefix`, with `new_labels` giving the
/// classes of the new users in `prefix`.
pub fn ref_weights(
    inst: &Inst,
    prefix: &[EdgeEvent],
    new_labels: &HashMap<u64, usize>,
    class: usize,
    d: Direction,
) -> Vec<f64> {
    inst.labels
        .iter()
        .map(|&(v, lv)| {
            let mut w = inst.alpha_at(d, class, lv);
            for &(a, b) in &inst.edges {
                match d {
                    Direction::Send if b == v && inst.label_of(a) == class => w += 1.0,
                    Direction::Receive if a == v && inst.label_of(b) == class => w += 1.0,
                    _ => {}
                }
            }
            for e in prefix {
                if e.direction == d && e.preexisting_user.0 == v && new_labels[&e.new_user.0] == class {
                    w += 1.0;
                }
            }
            w
        })
        .collect()
}

/// Exact probability of event `i` given its user's class and the labels of
/// every earlier user.
pub fn ref_step_prob(inst: &Inst, i: usize, new_labels: &HashMap<u64, usize>) -> f64 {
    let e = inst.events[i];
    let w = ref_weights(inst, &inst.events[..i], new_labels, new_labels[&e.new_user.0], e.direction);
    let pos = inst.labels.iter().position(|&(v, _)| v == e.preexisting_user.0).unwrap();
    w[pos] / w.iter().sum::<f64>()
}

/// Posterior of `target` from its own requests under exact running counts,
/// averaging over every labelling of the other new users with prior weights.
pub fn ref_posterior(inst: &Inst, target: u64) -> Vec<f64> {
    let others: Vec<u64> = inst.new_users().into_iter().filter(|&u| u != target).collect();
    let k = inst.k;
    let combos = k.pow(others.len() as u32);
    let mut num = vec![0.0; k];
    for code in 0..combos {
        let mut labels = HashMap::new();
        let mut w = 1.0;
        let mut rest = code;
        for &u in &others {
            let c = rest % k;
            rest /= k;
            labels.insert(u, c);
            w *= inst.prior[c];
        }
        for (c, out) in num.iter_mut().enumerate() {
            labels.insert(target, c);
            let mut p = w * inst.prior[c];
            for (i, e) in inst.events.iter().enumerate() {
                if e.new_user.0 == target {
                    p *= ref_step_prob(inst, i, &labels);
                }
            }
            *out += p;
        }
    }
    let z: f64 = num.iter().sum();
    num.iter().map(|x| x / z).collect()
}

/// Frozen-count posterior computed directly from the edge list.
pub fn ref_frozen_posterior(inst: &Inst, target: u64) -> Vec<f64> {
    let none = HashMap::new();
    let k = inst.k;
    let mut p: Vec<f64> = inst.prior.clone();
    for e in inst.events.iter().filter(|e| e.new_user.0 == target) {
        let pos = inst.labels.iter().position(|&(v, _)| v == e.preexisting_user.0).unwrap();
        for (c, pc) in p.iter_mut().enumerate().take(k) {
            let w = ref_weights(inst, &[], &none, c, e.direction);
            *pc *= w[pos] / w.iter().sum::<f64>();
        }
    }
    let z: f64 = p.iter().sum();
    p.iter().map(|x| x / z).collect()
}

/// Phantom-user bounds `(f_lower, f_upper)` for a binary instance.
pub fn ref_bounds(inst: &Inst, target: u64) -> (f64, f64) {
    let none = HashMap::new();
    let (mut wcf, mut wcr) = ([inst.prior[0], inst.prior[1]], [inst.prior[0], inst.prior[1]]);
    for (i, e) in inst.events.iter().enumerate() {
        if e.new_user.0 != target {
            continue;
        }
        let n_eq = inst.events[..i]
            .iter()
            .filter(|p| p.direction == e.direction && p.preexisting_user == e.preexisting_user)
            .count() as f64;
        let n_ne = i as f64 - n_eq;
        let pos = inst.labels.iter().position(|&(v, _)| v == e.preexisting_user.0).unwrap();
        let frozen = |c: usize| {
            let w = ref_weights(inst, &[], &none, c, e.direction);
            (w[pos], w.iter().sum::<f64>())
        };
        let (nr, dr) = frozen(0);
        let (nf, df) = frozen(1);
        wcf[1] *= (nf + n_eq) / (df + n_eq);
        wcf[0] *= nr / (dr + n_ne);
        wcr[1] *= nf / (df + n_ne);
        wcr[0] *= (nr + n_eq) / (dr + n_eq);
    }
    let p_hat = ref_frozen_posterior(inst, target)[1];
    let p_wcf = wcf[1] / (wcf[0] + wcf[1]);
    let p_wcr = wcr[1] / (wcr[0] + wcr[1]);
    (p_hat / p_wcf, p_hat / p_wcr)
}

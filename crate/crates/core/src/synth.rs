//! Synthetic preexisting networks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ClassLabel, LabelSet, LabeledNetwork, UserId};
use crate::sim::rng_for;

const STRUCTURE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum E0Model {
    /// Endpoints uniform over all users.
    Uniform,
    /// Each class has its own popular recipients and popular senders.
    Planted { set_size: usize, focus: f64 },
    /// Popular users within every class, with edges laid down in blocks that
    /// give every user identical counts toward each class.
    Mirrored { set_size: usize, focus: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub users: usize,
    /// Class shares; class sizes are `floor(p * users)` with the remainder
    /// assigned to class 0.
    pub class_probs: Vec<f64>,
    pub edges: usize,
    pub model: E0Model,
    pub first_id: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticNetwork {
    pub labels: LabelSet,
    pub edges: Vec<(UserId, UserId)>,
    pub network: LabeledNetwork,
}

pub fn generate_network(spec: &NetworkSpec, seed: u64) -> Result<SyntheticNetwork> {
    let k = spec.class_probs.len();
    if k < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if spec.users < 2 && spec.edges > 0 {
        return Err(Error::Config("edges need at least two users".into()));
    }
    if spec.class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("class shares must lie in [0, 1]".into()));
    }
    let mut rng = rng_for(seed, STRUCTURE_STREAM);

    let mut classes = Vec::with_capacity(spec.users);
    for (c, p) in spec.class_probs.iter().enumerate().skip(1) {
        let n = (p * spec.users as f64).floor() as usize;
        classes.extend(std::iter::repeat_n(c, n.min(spec.users - classes.len())));
    }
    classes.resize(spec.users, 0);
    classes.shuffle(&mut rng);

    let ids: Vec<UserId> = (0..spec.users).map(|i| UserId(spec.first_id + i as u64)).collect();
    let mut labels = LabelSet::new(k);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in classes.iter().enumerate() {
        labels.insert(ids[i], ClassLabel(c as u16))?;
        members[c].push(i);
    }

    let n = spec.users;
    let mut edges = Vec::with_capacity(spec.edges);
    let uniform_other = |rng: &mut rand_chacha::ChaCha8Rng, not: usize| loop {
        let y = rng.random_range(0..n);
        if y != not {
            return y;
        }
    };

    match spec.model {
        E0Model::Uniform => {
            for _ in 0..spec.edges {
                let x = rng.random_range(0..n);
                let y = uniform_other(&mut rng, x);
                edges.push((ids[x], ids[y]));
            }
        }
        E0Model::Planted { set_size, focus } => {
            check_focus(focus)?;
            // Every popular set mirrors the overall class mix, so the sets differ
            // only in which individuals they hold.
            let quota: Vec<usize> = members.iter().map(|m| set_size * m.len() / n).collect();
            let short = set_size - quota.iter().sum::<usize>();
            let quota: Vec<usize> = quota
                .iter()
                .enumerate()
                .map(|(c, &q)| if c == 0 { q + short } else { q })
                .collect();
            if set_size == 0 || members.iter().zip(&quota).any(|(m, &q)| 2 * k * q > m.len()) {
                return Err(Error::Config(format!(
                    "planted sets of size {set_size} do not fit {n} users"
                )));
            }
            let mut pools: Vec<Vec<usize>> = members.clone();
            for p in &mut pools {
                p.shuffle(&mut rng);
            }
            let mut sets: Vec<Vec<usize>> = Vec::with_capacity(2 * k);
            for _ in 0..2 * k {
                let mut set = Vec::with_capacity(set_size);
                for (pool, &q) in pools.iter_mut().zip(&quota) {
                    set.extend(pool.drain(pool.len() - q..));
                }
                sets.push(set);
            }
            let popular_recv: Vec<&[usize]> = sets[..k].iter().map(Vec::as_slice).collect();
            let popular_send: Vec<&[usize]> = sets[k..].iter().map(Vec::as_slice).collect();
            for i in 0..spec.edges {
                if i % 2 == 0 {
                    let x = rng.random_range(0..n);
                    let y = loop {
                        let y = if rng.random::<f64>() < focus {
                            let set = popular_recv[classes[x]];
                            set[rng.random_range(0..set_size)]
                        } else {
                            rng.random_range(0..n)
                        };
                        if y != x {
                            break y;
                        }
                    };
                    edges.push((ids[x], ids[y]));
                } else {
                    let y = rng.random_range(0..n);
                    let x = loop {
                        let x = if rng.random::<f64>() < focus {
                            let set = popular_send[classes[y]];
                            set[rng.random_range(0..set_size)]
                        } else {
                            rng.random_range(0..n)
                        };
                        if x != y {
                            break x;
                        }
                    };
                    edges.push((ids[x], ids[y]));
                }
            }
        }
        E0Model::Mirrored { set_size, focus } => {
            check_focus(focus)?;
            if set_size < 2 {
                return Err(Error::Config("popular set size must be at least 2".into()));
            }
            if let Some(c) = members.iter().position(|m| m.len() < 2) {
                return Err(Error::Config(format!("mirrored model needs two members in class {c}")));
            }
            // Blocks of k senders and k receivers, one of each class per side,
            // fully connected. Every user then sends to and receives from all
            // classes equally often.
            let popular: Vec<Vec<usize>> = members
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    m.shuffle(&mut rng);
                    m.truncate(set_size);
                    m
                })
                .collect();
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, c: usize, hot: bool| {
                let group = if hot && rng.random::<f64>() < focus { &popular[c] } else { &members[c] };
                group[rng.random_range(0..group.len())]
            };
            for block in 0..spec.edges / (k * k) {
                let hot_recv = block % 2 == 0;
                let senders: Vec<usize> = (0..k).map(|c| draw(&mut rng, c, !hot_recv)).collect();
                let receivers: Vec<usize> = (0..k)
                    .map(|c| loop {
                        let y = draw(&mut rng, c, hot_recv);
                        if y != senders[c] {
                            break y;
                        }
                    })
                    .collect();
                for &x in &senders {
                    for &y in &receivers {
                        edges.push((ids[x], ids[y]));
                    }
                }
            }
        }
    }

    let network = LabeledNetwork::from_parts(&labels, edges.iter().copied())?;
    Ok(SyntheticNetwork { labels, edges, network })
}

fn check_focus(focus: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&focus) {
        return Err(Error::Config(format!("focus {focus} outside [0, 1]")));
    }
    Ok(())
}

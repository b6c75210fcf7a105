//! Sampler for the multi-class directed preferential attachment process.
//!
//! New users draw i.i.d. labels from the prior. Each step draws a
//! `(new user, direction)` pair from the activity distribution, then a
//! preexisting partner `v` with probability proportional to
//! `alpha(class, label(v)) + count`, where `count` is the number of requests `v`
//! has so far received from (send) or sent to (receive) users of the new
//! user's class, earlier new requests included.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; labels and events use
//! separate ChaCha streams so the two draws never interleave.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alpha::AlphaSpec;
use crate::error::{Error, Result};
use crate::graph::{ClassLabel, Direction, EdgeEvent, EdgeStream, IdRange, LabelSet, LabeledNetwork, Prior, UserId};

const LABEL_STREAM: u64 = 1;
const EVENT_STREAM: u64 = 2;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How new users are picked at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum Activity {
    /// Independent send/receive weights per new user, indexed by position.
    Weights { send: Vec<f64>, recv: Vec<f64> },
    /// Explicit `(new user position, direction)` per step.
    Schedule(Vec<(usize, Direction)>),
}

impl Activity {
    /// Every user equally active, with a fixed share of sends.
    pub fn uniform(users: usize, send_fraction: f64) -> Self {
        Activity::Weights {
            send: vec![send_fraction; users],
            recv: vec![1.0 - send_fraction; users],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub prior: Prior,
    pub alpha: AlphaSpec,
    pub activity: Activity,
    pub n_events: usize,
    pub seed: u64,
    pub new_users: usize,
    /// Id of the first new user; new ids are contiguous.
    pub new_id_base: u64,
}

impl SimConfig {
    pub fn new_range(&self) -> IdRange {
        IdRange::new(self.new_id_base, self.new_id_base + self.new_users as u64 - 1)
    }

    pub fn new_user(&self, pos: usize) -> UserId {
        UserId(self.new_id_base + pos as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.new_users == 0 {
            return Err(Error::Config("need at least one new user".into()));
        }
        self.alpha.validate(self.prior.k())?;
        match &self.activity {
            Activity::Weights { send, recv } => {
                if send.len() != self.new_users || recv.len() != self.new_users {
                    return Err(Error::Config(format!(
                        "activity weights must cover all {} new users",
                        self.new_users
                    )));
                }
                if send.iter().chain(recv).any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::Config("activity weights must be nonnegative".into()));
                }
                if !send.iter().chain(recv).any(|&w| w > 0.0) {
                    return Err(Error::Config("at least one activity weight must be positive".into()));
                }
            }
            Activity::Schedule(s) => {
                if s.len() != self.n_events {
                    return Err(Error::Config(format!(
                        "schedule has {} steps but n_events is {}",
                        s.len(),
                        self.n_events
                    )));
                }
                if let Some(&(p, _)) = s.iter().find(|(p, _)| *p >= self.new_users) {
                    return Err(Error::Config(format!("schedule names new user #{p}")));
                }
            }
        }
        Ok(())
    }
}

/// Draws each new user's class i.i.d. from the prior.
pub fn sample_labels(config: &SimConfig) -> Result<LabelSet> {
    config.validate()?;
    let mut rng = rng_for(config.seed, LABEL_STREAM);
    let probs = config.prior.probs();
    let mut labels = LabelSet::new(probs.len());
    for pos in 0..config.new_users {
        let c = categorical(&mut rng, probs);
        labels.insert(config.new_user(pos), ClassLabel(c as u16))?;
    }
    Ok(labels)
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = c;
        if x < cum {
            return c;
        }
    }
    last
}

/// Binary indexed tree over nonnegative integer weights.
#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    pub(crate) fn from_weights(weights: impl IntoIterator<Item = u64>) -> Self {
        let mut tree: Vec<u64> = std::iter::once(0).chain(weights).collect();
        let n = tree.len() - 1;
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        let mut f = Fenwick { tree, total: 0 };
        f.total = f.prefix(n);
        f
    }

    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    pub(crate) fn add(&mut self, idx: usize, delta: u64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
        self.total += delta;
    }

    pub(crate) fn total(&self) -> u64 {
        self.total
    }

    /// Index `i` such that `prefix(i) <= r < prefix(i + 1)`; requires `r < total`.
    pub(crate) fn find(&self, mut r: u64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= r {
                pos = next;
                r -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Partner sampler for one direction and new-user class.
struct PartnerDraw {
    counts: Fenwick,
    // Smoothing mass per preexisting class, `alpha * class size`.
    class_mass: Vec<f64>,
    mass: f64,
}

struct Sampler<'a> {
    members: Vec<Vec<usize>>,
    draws: Vec<PartnerDraw>, // [direction slot * k + class]
    k: usize,
    network: &'a LabeledNetwork,
}

impl<'a> Sampler<'a> {
    fn new(network: &'a LabeledNetwork, alpha: &AlphaSpec) -> Self {
        let k = network.k();
        let mut members = vec![Vec::new(); k];
        for idx in 0..network.user_count() {
            members[network.label_at(idx).index()].push(idx);
        }
        let mut draws = Vec::with_capacity(2 * k);
        for d in [Direction::Send, Direction::Receive] {
            for c in 0..k {
                let counts = Fenwick::from_weights((0..network.user_count()).map(|idx| match d {
                    Direction::Send => network.recv_from_at(idx, c),
                    Direction::Receive => network.sent_to_at(idx, c),
                }));
                let class_mass = (0..k)
                    .map(|l| alpha.weight(d, c, l) * members[l].len() as f64)
                    .collect();
                draws.push(PartnerDraw {
                    counts,
                    class_mass,
                    mass: alpha.mass(d, c, network.class_sizes()),
                });
            }
        }
        Sampler {
            members,
            draws,
            k,
            network,
        }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R, d: Direction, class: usize, step: usize) -> Result<usize> {
        let pd = &mut self.draws[d.slot() * self.k + class];
        let counted = pd.counts.total();
        let total = pd.mass + counted as f64;
        if total <= 0.0 {
            return Err(Error::ZeroDrawDistribution {
                step,
                class,
                direction: d.as_str(),
            });
        }
        let x = rng.random::<f64>() * total;
        let idx = if x < pd.mass || counted == 0 {
            let mut rest = x;
            let mut pick = None;
            for (l, &m) in pd.class_mass.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                pick = Some(l);
                if rest < m {
                    break;
                }
                rest -= m;
            }
            let l = pick.expect("positive smoothing mass implies a nonempty class");
            let group = &self.members[l];
            group[rng.random_range(0..group.len())]
        } else {
            pd.counts.find(rng.random_range(0..counted))
        };
        pd.counts.add(idx, 1);
        Ok(idx)
    }
}

/// Samples `n_events` requests. `labels` must cover every new user of `config`.
/// Chooses the acting new user and direction for a step.
type Picker = Box<dyn FnMut(&mut ChaCha8Rng, usize) -> (usize, Direction)>;

pub fn sample_stream(network: &LabeledNetwork, labels: &LabelSet, config: &SimConfig) -> Result<EdgeStream> {
    config.validate()?;
    if network.k() != config.prior.k() || labels.k != network.k() {
        return Err(Error::ClassMismatch {
            expected: network.k(),
            got: config.prior.k(),
        });
    }
    let range = config.new_range();
    if let Some(u) = network.users().iter().find(|&&u| range.contains(u)) {
        return Err(Error::Config(format!(
            "preexisting user {u} falls inside the new-user id range"
        )));
    }
    let classes: Vec<usize> = (0..config.new_users)
        .map(|p| {
            let u = config.new_user(p);
            labels.get(u).map(|l| l.index()).ok_or(Error::UnlabeledEndpoint(u))
        })
        .collect::<Result<_>>()?;

    let mut rng = rng_for(config.seed, EVENT_STREAM);
    let mut sampler = Sampler::new(network, &config.alpha);
    let mut events = Vec::with_capacity(config.n_events);

    let pick: Picker = match &config.activity {
        Activity::Weights { send, recv } => {
            let w: Vec<f64> = send.iter().zip(recv).flat_map(|(&s, &r)| [s, r]).collect();
            let dist = WeightedIndex::new(&w).map_err(|e| Error::Config(format!("activity weights: {e}")))?;
            Box::new(move |rng, _| {
                let i = dist.sample(rng);
                let d = if i % 2 == 0 { Direction::Send } else { Direction::Receive };
                (i / 2, d)
            })
        }
        Activity::Schedule(s) => {
            let s = s.clone();
            Box::new(move |_, step| s[step])
        }
    };
    let mut pick = pick;

    for step in 0..config.n_events {
        let (pos, d) = pick(&mut rng, step);
        let idx = sampler.draw(&mut rng, d, classes[pos], step + 1)?;
        events.push(EdgeEvent {
            seq: step as u64 + 1,
            new_user: config.new_user(pos),
            preexisting_user: sampler.network.user_at(idx),
            direction: d,
        });
    }
    Ok(EdgeStream {
        new_range: range,
        events,
    })
}

//! Shared benchmark fixtures.

use preattack::{
    generate_network, sample_labels, sample_stream, Activity, AlphaSpec, E0Model, EdgeStream, LabeledNetwork,
    NetworkSpec, Prior, SimConfig,
};

/// A planted two-class network with a simulated stream on top.
pub struct Fixture {
    pub network: LabeledNetwork,
    pub sim: SimConfig,
    pub stream: EdgeStream,
    pub prior: Prior,
}

impl Fixture {
    /// `users` preexisting users with ten `E0` edges each; `events` requests
    /// from `events / 20` new users.
    pub fn new(users: usize, events: usize) -> Self {
        let spec = NetworkSpec {
            users,
            class_probs: vec![0.8, 0.2],
            edges: 10 * users,
            model: E0Model::Planted {
                set_size: (users / 50).max(1),
                focus: 0.8,
            },
            first_id: 1,
        };
        let network = generate_network(&spec, 1).expect("network").network;
        let new_users = (events / 20).max(1);
        let prior = Prior::binary(0.2).expect("prior");
        let sim = SimConfig {
            prior: prior.clone(),
            alpha: AlphaSpec::Scalar(1.0),
            activity: Activity::uniform(new_users, 0.5),
            n_events: events,
            seed: 2,
            new_users,
            new_id_base: users as u64 + 1,
        };
        let labels = sample_labels(&sim).expect("labels");
        let stream = sample_stream(&network, &labels, &sim).expect("stream");
        Fixture {
            network,
            sim,
            stream,
            prior,
        }
    }
}

//! Experiment configuration: `key=value` text files with a versioned header.
//!
//! ```text
//! #preattack-config v1
//! k=2
//! prior=0.5
//! alpha=1
//! ```
//!
//! `#` starts a comment. Unknown keys are rejected. Every key has a default,
//! so [`RawConfig::render`] always prints the complete effective config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, LogNormal};

use crate::alpha::{AlphaSpec, AlphaTensor};
use crate::error::{Error, Result};
use crate::graph::{LabeledNetwork, Prior};
use crate::sim::{rng_for, Activity, SimConfig};
use crate::synth::{E0Model, NetworkSpec};

pub const CONFIG_MAGIC: &str = "#preattack-config";
pub const CONFIG_VERSION: &str = "v1";

const ACTIVITY_STREAM: u64 = 4;

const DEFAULTS: &[(&str, &str)] = &[
    ("k", "2"),
    ("prior", "0.5"),
    ("alpha", "1"),
    ("alpha_send", ""),
    ("alpha_recv", ""),
    ("classifier_alpha", "1"),
    ("tensor_alpha", "estimate"),
    ("new_users", "2000"),
    ("events", "120000"),
    ("seed", "1"),
    ("activity", "uniform"),
    ("activity_sigma", "1"),
    ("send_fraction", "0.5"),
    ("labels_file", ""),
    ("edges_file", ""),
    ("pre_users", "10000"),
    ("class_shares", "0.8,0.2"),
    ("e0_edges", "100000"),
    ("e0_model", "planted"),
    ("e0_set_size", "200"),
    ("e0_focus", "0.8"),
    ("checkpoints", "1-50"),
];

/// Unparsed key/value pairs with defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RawConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.trim())
            .ok_or_else(|| Error::Config("empty config".into()))?;
        let mut words = header.split_whitespace();
        if words.next() != Some(CONFIG_MAGIC) || words.next() != Some(CONFIG_VERSION) {
            return Err(Error::Config(format!(
                "expected header `{CONFIG_MAGIC} {CONFIG_VERSION}`, found `{header}`"
            )));
        }
        let mut cfg = RawConfig::default();
        for (n, line) in lines {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set(line).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// The effective config as a loadable file.
    pub fn render(&self) -> String {
        let mut out = format!("{CONFIG_MAGIC} {CONFIG_VERSION}\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse `{s}`")))
            })
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| self.base_dir.join(v))
    }
}

/// Where the multi-class tensor for PreAttacK++ and Homophily comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorSource {
    /// Class-level rates measured on the preexisting network.
    Estimate,
    /// The generating tensor itself.
    Generative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    Files { labels: PathBuf, edges: PathBuf },
    Synthetic(NetworkSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActivityModel {
    Uniform,
    LogNormal { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub prior: Prior,
    pub alpha: AlphaSpec,
    pub classifier_alpha: f64,
    pub tensor_alpha: TensorSource,
    pub new_users: usize,
    pub events: usize,
    pub seed: u64,
    pub activity: ActivityModel,
    pub send_fraction: f64,
    pub network: NetworkSource,
    pub checkpoints: Vec<usize>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let k: usize = raw.num("k")?;
        if k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        let prior_vals = raw.list("prior")?;
        let prior = match prior_vals.as_slice() {
            [pi] if k == 2 => Prior::binary(*pi)?,
            v if v.len() == k => Prior::new(v.to_vec())?,
            v => {
                return Err(Error::Config(format!(
                    "prior has {} entries, expected {k}",
                    v.len()
                )))
            }
        };
        let alpha = match (raw.get("alpha_send").is_empty(), raw.get("alpha_recv").is_empty()) {
            (true, true) => AlphaSpec::Scalar(raw.num("alpha")?),
            (false, false) => AlphaSpec::Tensor(AlphaTensor::new(
                k,
                raw.list("alpha_send")?,
                raw.list("alpha_recv")?,
            )?),
            _ => return Err(Error::Config("alpha_send and alpha_recv go together".into())),
        };
        alpha.validate(k)?;
        let classifier_alpha: f64 = raw.num("classifier_alpha")?;
        if !(classifier_alpha.is_finite() && classifier_alpha >= 0.0) {
            return Err(Error::Config("classifier_alpha must be finite and nonnegative".into()));
        }
        let tensor_alpha = match raw.get("tensor_alpha") {
            "estimate" => TensorSource::Estimate,
            "generative" => TensorSource::Generative,
            v => return Err(Error::Config(format!("tensor_alpha: expected estimate|generative, got `{v}`"))),
        };
        let activity = match raw.get("activity") {
            "uniform" => ActivityModel::Uniform,
            "lognormal" => ActivityModel::LogNormal {
                sigma: raw.num("activity_sigma")?,
            },
            v => return Err(Error::Config(format!("activity: expected uniform|lognormal, got `{v}`"))),
        };
        let send_fraction: f64 = raw.num("send_fraction")?;
        if !(0.0..=1.0).contains(&send_fraction) {
            return Err(Error::Config("send_fraction must lie in [0, 1]".into()));
        }
        let network = match (raw.path("labels_file"), raw.path("edges_file")) {
            (Some(labels), Some(edges)) => NetworkSource::Files { labels, edges },
            (None, None) => {
                let class_shares = raw.list("class_shares")?;
                if class_shares.len() != k {
                    return Err(Error::Config(format!("class_shares needs {k} entries")));
                }
                let set_size = raw.num("e0_set_size")?;
                let focus = raw.num("e0_focus")?;
                let model = match raw.get("e0_model") {
                    "uniform" => E0Model::Uniform,
                    "planted" => E0Model::Planted { set_size, focus },
                    "mirrored" => E0Model::Mirrored { set_size, focus },
                    v => {
                        return Err(Error::Config(format!(
                            "e0_model: expected uniform|planted|mirrored, got `{v}`"
                        )))
                    }
                };
                NetworkSource::Synthetic(NetworkSpec {
                    users: raw.num("pre_users")?,
                    class_probs: class_shares,
                    edges: raw.num("e0_edges")?,
                    model,
                    first_id: 1,
                })
            }
            _ => return Err(Error::Config("labels_file and edges_file go together".into())),
        };
        let new_users: usize = raw.num("new_users")?;
        if new_users == 0 {
            return Err(Error::Config("new_users must be positive".into()));
        }
        Ok(ExperimentConfig {
            k,
            prior,
            alpha,
            classifier_alpha,
            tensor_alpha,
            new_users,
            events: raw.num("events")?,
            seed: raw.num("seed")?,
            activity,
            send_fraction,
            network,
            checkpoints: parse_checkpoints(raw.get("checkpoints"))?,
        })
    }

    /// Simulator settings for one run. New ids start right after `max_pre_id`.
    pub fn sim_config(&self, seed: u64, max_pre_id: u64) -> Result<SimConfig> {
        let m = self.new_users;
        let activity = match self.activity {
            ActivityModel::Uniform => Activity::uniform(m, self.send_fraction),
            ActivityModel::LogNormal { sigma } => {
                let dist = LogNormal::new(0.0, sigma)
                    .map_err(|e| Error::Config(format!("activity_sigma: {e}")))?;
                let mut rng = rng_for(seed, ACTIVITY_STREAM);
                let w: Vec<f64> = (0..m).map(|_| dist.sample(&mut rng)).collect();
                Activity::Weights {
                    send: w.iter().map(|x| x * self.send_fraction).collect(),
                    recv: w.iter().map(|x| x * (1.0 - self.send_fraction)).collect(),
                }
            }
        };
        let cfg = SimConfig {
            prior: self.prior.clone(),
            alpha: self.alpha.clone(),
            activity,
            n_events: self.events,
            seed,
            new_users: m,
            new_id_base: max_pre_id + 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Class-level tensor for the ++ and Homophily classifiers.
    pub fn classifier_tensor(&self, network: &LabeledNetwork) -> Result<AlphaSpec> {
        Ok(match self.tensor_alpha {
            TensorSource::Estimate => {
                AlphaSpec::Tensor(crate::tables::estimate_alpha_tensor(network, self.classifier_alpha)?)
            }
            TensorSource::Generative => self.alpha.clone(),
        })
    }
}

/// `1-5,10,20-50:10` style lists: single values, inclusive ranges, and ranges
/// with a step. The result is sorted and deduplicated.
pub fn parse_checkpoints(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("checkpoints: cannot parse `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (range, step) = match part.split_once(':') {
            Some((r, st)) => (r, st.parse::<usize>().map_err(|_| bad())?),
            None => (part, 1),
        };
        if step == 0 {
            return Err(bad());
        }
        match range.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.extend((lo..=hi).step_by(step));
            }
            None => out.push(range.parse().map_err(|_| bad())?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// The file-backed network, or `None` for synthetic sources.
pub fn load_file_network(source: &NetworkSource) -> Result<Option<LabeledNetwork>> {
    match source {
        NetworkSource::Files { labels, edges } => Ok(Some(crate::io::ingest_network(labels, edges)?)),
        NetworkSource::Synthetic(_) => Ok(None),
    }
}

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use preattack::bounds::{compute_bounds, max_batch, BoundOptions};
use preattack::config::{parse_checkpoints, NetworkSource, RawConfig};
use preattack::eval::{seed_sequence, simulate, write_curves_csv, write_curves_dat};
use preattack::io::{ingest_network, ingest_stream, write_edges, write_labels, write_stream};
use preattack::oracle::conditional_posterior;
use preattack::report::{write_bounds, write_posteriors, write_prefix_posteriors};
use preattack::{
    build_homophily_table, build_plusplus_table, build_preattack_table, classify_prefixes, classify_sharded,
    exact_posterior, generate_network, run_experiment, AlphaSpec, AlphaTensor, ClassLabel, EdgeStream, Evidence,
    ExperimentConfig, LabeledNetwork, Mode, OracleOptions, PATable, Prior, TableKind, Touched, UserId, Variant,
};

use crate::args::{AlphaArgs, BoundsArgs, ClassifyArgs, ConfigArgs, EvalArgs, GenerateArgs, NetworkArgs, OracleArgs};
use crate::UsageError;

pub const ORACLE_MAGIC: &str = "#preattack-oracle v1";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn finish(mut w: impl Write, what: &str) -> Result<()> {
    w.flush().with_context(|| format!("writing {what}"))
}

/// Prints the effective settings to stderr, one `key=value` per line.
fn echo(command: &str, pairs: &[(&str, String)]) {
    eprintln!("#preattack-run v1 command={command}");
    for (k, v) in pairs {
        eprintln!("{k}={v}");
    }
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--{flag}: cannot parse `{x}`")))
        })
        .collect()
}

fn parse_prior(s: &str, k: usize) -> Result<Prior> {
    let v = parse_list("prior", s)?;
    Ok(match v.as_slice() {
        [pi] if k == 2 => Prior::binary(*pi)?,
        _ if v.len() == k => Prior::new(v)?,
        _ => return Err(usage(format!("--prior has {} values, the network has k={k}", v.len()))),
    })
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::load(&args.config)?;
    for kv in &args.overrides {
        raw.set(kv)?;
    }
    if let Some(seed) = args.seed {
        raw.set(&format!("seed={seed}"))?;
    }
    eprint!("{}", raw.render());
    Ok(ExperimentConfig::from_raw(&raw)?)
}

/// Network, stream and prior named on the command line.
struct Input {
    labels: PathBuf,
    edges: PathBuf,
    network: LabeledNetwork,
    stream: EdgeStream,
    prior: Prior,
}

impl Input {
    fn load(a: &NetworkArgs) -> Result<Self> {
        let (labels, edges) = match (&a.network, &a.labels, &a.edges) {
            (Some(pair), None, None) => match pair.split_once(',') {
                Some((l, e)) => (PathBuf::from(l), PathBuf::from(e)),
                None => return Err(usage("--network expects LABELS,EDGES")),
            },
            (None, Some(l), Some(e)) => (l.clone(), e.clone()),
            _ => return Err(usage("give either --network LABELS,EDGES or both --labels and --edges")),
        };
        let network = ingest_network(&labels, &edges)?;
        if let Some(k) = a.k {
            if k != network.k() {
                return Err(preattack::Error::ClassMismatch {
                    expected: k,
                    got: network.k(),
                }
                .into());
            }
        }
        let prior = parse_prior(&a.prior, network.k())?;
        let stream = ingest_stream(&a.stream, &network)?;
        Ok(Input {
            labels,
            edges,
            network,
            stream,
            prior,
        })
    }

    fn echo_pairs(&self, a: &NetworkArgs) -> Vec<(&'static str, String)> {
        vec![
            ("labels", self.labels.display().to_string()),
            ("edges", self.edges.display().to_string()),
            ("stream", a.stream.display().to_string()),
            ("k", self.network.k().to_string()),
            ("prior", join(self.prior.probs())),
        ]
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn alpha_spec(a: &AlphaArgs, k: usize) -> Result<AlphaSpec> {
    let spec = match (&a.alpha_send, &a.alpha_recv) {
        (Some(s), Some(r)) => AlphaSpec::Tensor(AlphaTensor::new(
            k,
            parse_list("alpha-send", s)?,
            parse_list("alpha-recv", r)?,
        )?),
        _ => AlphaSpec::Scalar(a.alpha.unwrap_or(1.0)),
    };
    spec.validate(k)?;
    Ok(spec)
}

fn describe(alpha: &AlphaSpec, k: usize) -> Vec<(&'static str, String)> {
    match alpha {
        AlphaSpec::Scalar(a) => vec![("alpha", a.to_string())],
        AlphaSpec::Tensor(t) => {
            let send: Vec<f64> = (0..k * k).map(|i| t.send(i / k, i % k)).collect();
            let recv: Vec<f64> = (0..k * k).map(|i| t.recv(i / k, i % k)).collect();
            vec![("alpha_send", join(&send)), ("alpha_recv", join(&recv))]
        }
    }
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let path = |ext: &str| {
        let mut p = a.out_prefix.clone().into_os_string();
        p.push(format!(".{ext}"));
        PathBuf::from(p)
    };
    let network = match &cfg.network {
        NetworkSource::Synthetic(spec) => {
            let synth = generate_network(spec, cfg.seed)?;
            write_labels(&synth.labels, path("labels"))?;
            write_edges(&synth.edges, path("edges"))?;
            synth.network
        }
        NetworkSource::Files { labels, edges } => {
            for (src, ext) in [(labels, "labels"), (edges, "edges")] {
                std::fs::copy(src, path(ext))
                    .with_context(|| format!("copying {} to {}", src.display(), path(ext).display()))?;
            }
            ingest_network(labels, edges)?
        }
    };
    let (truth, stream) = simulate(&cfg, &network, cfg.seed)?;
    write_stream(&stream, path("stream"))?;
    write_labels(&truth, path("truth"))?;
    log::info!(
        "{} preexisting users, {} new users, {} requests",
        network.user_count(),
        truth.len(),
        stream.events.len()
    );
    Ok(())
}

fn table_for(kind: TableKind, network: &LabeledNetwork, alpha: &AlphaSpec, touched: &Touched) -> Result<PATable> {
    Ok(match (kind, alpha) {
        (TableKind::PreAttack, AlphaSpec::Scalar(a)) => build_preattack_table(network, *a, touched)?,
        (TableKind::PreAttack, AlphaSpec::Tensor(_)) => {
            return Err(usage("a class tensor needs --plus-plus or --homophily"))
        }
        (TableKind::PlusPlus, _) => build_plusplus_table(network, alpha, touched)?,
        (TableKind::Homophily, _) => build_homophily_table(network, alpha, touched)?,
    })
}

pub fn classify(a: &ClassifyArgs, threads: usize) -> Result<()> {
    let input = Input::load(&a.input)?;
    let k = input.network.k();
    let alpha = alpha_spec(&a.alpha, k)?;
    let kind = match (a.plus_plus, a.homophily) {
        (true, _) => TableKind::PlusPlus,
        (_, true) => TableKind::Homophily,
        _ => TableKind::PreAttack,
    };
    let mode = if a.send_only { Mode::SendOnly } else { Mode::Full };
    let checkpoints = a.checkpoints.as_deref().map(parse_checkpoints).transpose()?;

    let mut pairs = input.echo_pairs(&a.input);
    pairs.extend(describe(&alpha, k));
    pairs.push(("classifier", format!("{kind:?}")));
    pairs.push(("send_only", a.send_only.to_string()));
    if let Some(cp) = &a.checkpoints {
        pairs.push(("checkpoints", cp.clone()));
    }
    pairs.push(("threads", threads.to_string()));
    echo("classify", &pairs);

    let events = &input.stream.events;
    let table = table_for(kind, &input.network, &alpha, &Touched::from_events(events))?;
    if let Some(path) = &a.dump_tables {
        let mut w = create(path)?;
        table.dump_csv(&mut w).context("writing table dump")?;
        finish(w, "table dump")?;
    }
    let mut w = output(a.out.as_deref())?;
    match checkpoints {
        Some(cp) => {
            let prefixes = classify_prefixes(&table, events, &input.prior, mode, &cp)?;
            write_prefix_posteriors(&prefixes, k, &mut w).context("writing posteriors")?;
        }
        None => {
            let reports = classify_sharded(&table, events, &input.prior, mode, threads)?;
            write_posteriors(&reports, k, &mut w).context("writing posteriors")?;
        }
    }
    finish(w, "posteriors")
}

fn require_binary(network: &LabeledNetwork, what: &str) -> Result<()> {
    if network.k() != 2 {
        return Err(usage(format!("{what} needs a two-class network, got k={}", network.k())));
    }
    Ok(())
}

fn estimate_table(network: &LabeledNetwork, alpha: &AlphaSpec, events: &[preattack::EdgeEvent]) -> Result<PATable> {
    let touched = Touched::from_events(events);
    match alpha {
        AlphaSpec::Scalar(a) => Ok(build_preattack_table(network, *a, &touched)?),
        AlphaSpec::Tensor(_) => Ok(build_plusplus_table(network, alpha, &touched)?),
    }
}

pub fn bounds(a: &BoundsArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    require_binary(&input.network, "bounds")?;
    let alpha = alpha_spec(&a.alpha, 2)?;
    let opts = BoundOptions {
        literal_wcr_alpha: a.literal_wcr_alpha,
    };
    let mut pairs = input.echo_pairs(&a.input);
    pairs.extend(describe(&alpha, 2));
    pairs.push(("literal_wcr_alpha", a.literal_wcr_alpha.to_string()));
    if a.max_batch {
        pairs.push(("f_lower", a.f_lower.to_string()));
        pairs.push(("f_upper", a.f_upper.to_string()));
    }
    echo("bounds", &pairs);

    let events = &input.stream.events;
    let table = estimate_table(&input.network, &alpha, events)?;
    let mut w = output(a.out.as_deref())?;
    if a.max_batch {
        if a.f_lower > 1.0 || a.f_upper < 1.0 {
            return Err(usage("need --f-lower <= 1 <= --f-upper"));
        }
        let b = max_batch(&input.network, &alpha, &table, events, &input.prior, a.f_lower, a.f_upper, opts)?;
        (|| -> std::io::Result<()> {
            writeln!(w, "#preattack-batch v1")?;
            writeln!(w, "prefix_len,users_in_prefix,fraction_within_full")?;
            writeln!(w, "{},{},{}", b.prefix_len, b.users_in_prefix, b.fraction_within_full)
        })()
        .context("writing batch report")?;
    } else {
        let reports = compute_bounds(&input.network, &alpha, &table, events, &input.prior, None, opts)?;
        write_bounds(&reports, &mut w).context("writing bounds")?;
    }
    finish(w, "bounds")
}

fn parse_condition(s: &str, k: usize) -> Result<HashMap<UserId, ClassLabel>> {
    s.split(',')
        .map(|item| {
            let bad = || usage(format!("--condition-labels: expected ID:CLASS, got `{item}`"));
            let (id, class) = item.trim().split_once(':').ok_or_else(bad)?;
            let id: u64 = id.parse().map_err(|_| bad())?;
            let class: u16 = class.parse().map_err(|_| bad())?;
            if class as usize >= k {
                return Err(preattack::Error::ClassOutOfRange {
                    class: class as usize,
                    k,
                }
                .into());
            }
            Ok((UserId(id), ClassLabel(class)))
        })
        .collect()
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    let k = input.network.k();
    let alpha = alpha_spec(&a.alpha, k)?;
    let target = UserId(a.user);
    let evidence = if a.full_joint { Evidence::FullJoint } else { Evidence::TargetOnly };
    let mut pairs = input.echo_pairs(&a.input);
    pairs.extend(describe(&alpha, k));
    pairs.push(("user", a.user.to_string()));
    pairs.push(("cap", a.cap.to_string()));
    pairs.push(("evidence", format!("{evidence:?}")));
    if let Some(c) = &a.condition_labels {
        pairs.push(("condition_labels", c.clone()));
    }
    echo("oracle", &pairs);

    let events = &input.stream.events;
    let (p_star, combinations) = match &a.condition_labels {
        Some(spec) => {
            let others = parse_condition(spec, k)?;
            let users: HashSet<UserId> = events.iter().map(|e| e.new_user).collect();
            if !users.contains(&target) {
                return Err(preattack::Error::UserNotInStream(target).into());
            }
            if let Some(u) = users.iter().find(|&&u| u != target && !others.contains_key(&u)) {
                return Err(usage(format!("--condition-labels has no label for new user {u}")));
            }
            let p = conditional_posterior(&input.network, &alpha, events, &input.prior, target, &others, evidence)?;
            (p, 1)
        }
        None => {
            let opts = OracleOptions { cap: a.cap, evidence };
            let exact = exact_posterior(&input.network, &alpha, events, &input.prior, target, opts)?;
            (exact.p_star, exact.enumerated_combinations)
        }
    };

    let table = estimate_table(&input.network, &alpha, events)?;
    let p_hat = classify_sharded(&table, events, &input.prior, Mode::Full, 1)?
        .into_iter()
        .find(|r| r.user == target)
        .map(|r| r.posterior)
        .ok_or(preattack::Error::UserNotInStream(target))?;

    let bound = if k == 2 {
        let only: HashSet<UserId> = [target].into_iter().collect();
        let b = compute_bounds(&input.network, &alpha, &table, events, &input.prior, Some(&only), BoundOptions::default())?;
        b.into_iter().next()
    } else {
        None
    };

    let mut w = output(a.out.as_deref())?;
    (|| -> std::io::Result<()> {
        writeln!(w, "{ORACLE_MAGIC}")?;
        if let Some(b) = &bound {
            writeln!(w, "user,p_star,p_hat,ratio,f_lower,f_upper,combinations")?;
            return writeln!(
                w,
                "{target},{},{},{},{},{},{combinations}",
                p_star[1],
                p_hat[1],
                p_hat[1] / p_star[1],
                b.f_lower,
                b.f_upper
            );
        }
        writeln!(w, "user,class,p_star,p_hat,ratio,combinations")?;
        for c in 0..k {
            writeln!(w, "{target},{c},{},{},{},{combinations}", p_star[c], p_hat[c], p_hat[c] / p_star[c])?;
        }
        Ok(())
    })()
    .context("writing oracle report")?;
    finish(w, "oracle report")
}

pub fn eval(a: &EvalArgs, threads: usize) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let variants = Variant::parse_list(&a.variants)?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    echo(
        "eval",
        &[
            ("variants", a.variants.clone()),
            ("seeds", a.seeds.to_string()),
            ("threads", threads.to_string()),
        ],
    );
    let exp = run_experiment(&cfg, &variants, &seed_sequence(cfg.seed, a.seeds))?;
    let mut w = create(&a.out)?;
    write_curves_csv(&exp.rows, &mut w).context("writing curves")?;
    finish(w, "curves")?;
    if let Some(path) = &a.dat {
        let mut w = create(path)?;
        write_curves_dat(&exp.curves, &mut w).context("writing dat file")?;
        finish(w, "dat file")?;
    }
    for curve in &exp.curves {
        let last = curve.points.last();
        log::info!(
            "{}: AUC {:.4} at checkpoint {}",
            curve.variant,
            last.map_or(f64::NAN, |p| p.auc),
            last.map_or(0, |p| p.checkpoint)
        );
    }
    Ok(())
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "preattack", version, about = "Classify new accounts from their first friend requests")]
pub struct Cli {
    /// Worker threads for the parallel stages; output does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a preexisting network, new-user labels and a request stream.
    Generate(GenerateArgs),
    /// Posterior class probabilities for every new user in a stream.
    Classify(ClassifyArgs),
    /// Worst-case bounds on the approximation error of the posterior.
    Bounds(BoundsArgs),
    /// Exact posterior by enumerating every labeling of the other new users.
    Oracle(OracleArgs),
    /// AUC convergence curves over repeated simulations.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,

    /// Override a config entry, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Writes PREFIX.labels, PREFIX.edges, PREFIX.stream and PREFIX.truth.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// Labels and E0 edge files, comma separated.
    #[arg(long, value_name = "LABELS,EDGES", conflicts_with_all = ["labels", "edges"])]
    pub network: Option<String>,

    #[arg(long, requires = "edges")]
    pub labels: Option<PathBuf>,

    #[arg(long, requires = "labels")]
    pub edges: Option<PathBuf>,

    #[arg(long)]
    pub stream: PathBuf,

    /// Class prior: one value (probability of fake) for k=2, otherwise k values.
    #[arg(long, value_name = "PI")]
    pub prior: String,

    /// Expected number of classes; checked against the labels file.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// Scalar attachment offset.
    #[arg(long, conflicts_with_all = ["alpha_send", "alpha_recv"])]
    pub alpha: Option<f64>,

    /// Send-side class tensor, k*k values row-major by (new, preexisting).
    #[arg(long, requires = "alpha_recv")]
    pub alpha_send: Option<String>,

    /// Receive-side class tensor, k*k values row-major by (preexisting, new).
    #[arg(long, requires = "alpha_send")]
    pub alpha_recv: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: NetworkArgs,

    #[command(flatten)]
    pub alpha: AlphaArgs,

    /// Class-level offsets plus per-user counts.
    #[arg(long, conflicts_with = "homophily")]
    pub plus_plus: bool,

    /// Class-level offsets only.
    #[arg(long)]
    pub homophily: bool,

    /// Ignore requests the new users received.
    #[arg(long)]
    pub send_only: bool,

    /// Report posteriors after each listed prefix length, e.g. `1-10,20,50`.
    #[arg(long)]
    pub checkpoints: Option<String>,

    /// Also write the attachment table as CSV.
    #[arg(long, value_name = "FILE")]
    pub dump_tables: Option<PathBuf>,

    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: NetworkArgs,

    #[command(flatten)]
    pub alpha: AlphaArgs,

    /// Use the receive-bound denominator with one extra alpha per E0 edge.
    #[arg(long)]
    pub literal_wcr_alpha: bool,

    /// Report the longest stream prefix whose bounds stay within the thresholds.
    #[arg(long)]
    pub max_batch: bool,

    #[arg(long, default_value_t = 0.85, requires = "max_batch")]
    pub f_lower: f64,

    #[arg(long, default_value_t = 1.1, requires = "max_batch")]
    pub f_upper: f64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: NetworkArgs,

    #[command(flatten)]
    pub alpha: AlphaArgs,

    #[arg(long)]
    pub user: u64,

    /// Largest number of distinct new users the enumeration accepts.
    #[arg(long, default_value_t = 12)]
    pub cap: usize,

    /// Score the whole stream rather than only the target's requests.
    #[arg(long)]
    pub full_joint: bool,

    /// Fix the other new users' labels instead of enumerating, `id:class,...`.
    #[arg(long, value_name = "ID:CLASS,...")]
    pub condition_labels: Option<String>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// `all` or a comma-separated list such as `preattack,homophily-send`.
    #[arg(long, default_value = "all")]
    pub variants: String,

    /// Number of simulation runs.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,

    #[arg(long)]
    pub out: PathBuf,

    /// Also write per-checkpoint means in whitespace-separated columns.
    #[arg(long, value_name = "FILE")]
    pub dat: Option<PathBuf>,
}

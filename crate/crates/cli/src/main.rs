//! `preattack` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 domain error,
//! 4 I/O error. Failures print one line to stderr:
//! `preattack: error[<kind>]: <message>`.

mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use preattack::ErrorKind;

use args::{Cli, Command};

/// Bad flags or flag combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Usage,
    Domain,
    Io,
}

impl Failure {
    fn code(self) -> u8 {
        match self {
            Failure::Usage => 2,
            Failure::Domain => 3,
            Failure::Io => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Failure::Usage => "usage",
            Failure::Domain => "domain",
            Failure::Io => "io",
        }
    }

    fn of(err: &anyhow::Error) -> Self {
        for cause in err.chain() {
            if cause.is::<UsageError>() {
                return Failure::Usage;
            }
            if let Some(e) = cause.downcast_ref::<preattack::Error>() {
                return match e.kind() {
                    ErrorKind::Config => Failure::Usage,
                    ErrorKind::Domain => Failure::Domain,
                    ErrorKind::Io => Failure::Io,
                };
            }
            if cause.is::<std::io::Error>() {
                return Failure::Io;
            }
        }
        Failure::Domain
    }
}

fn report(kind: Failure, msg: &str) -> ExitCode {
    let line = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ");
    eprintln!("preattack: error[{}]: {line}", kind.name());
    ExitCode::from(kind.code())
}

/// The cause chain joined with `: `, skipping causes whose text the previous
/// message already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Classify(a) => commands::classify(a, cli.threads),
        Command::Bounds(a) => commands::bounds(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Eval(a) => commands::eval(a, cli.threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let body: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .filter(|l| !l.is_empty())
                .collect();
            return report(Failure::Usage, &body.join(" "));
        }
    };
    if cli.threads == 0 {
        return report(Failure::Usage, "--threads must be at least 1");
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => return report(Failure::Domain, &format!("cannot start thread pool: {e}")),
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(Failure::of(&e), &describe(&e)),
    }
}

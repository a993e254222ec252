//! `sgd-cover`: generalization certificates, covers and experiments for
//! SGD from the command line.
//!
//! Every command takes its parameters from flags, from a JSON config file
//! (`{"command", "seed", "params", "output", "format", "threads"}`), or both,
//! with flags winning. Output is written only after the run succeeds.
//!
//! Exit status: 0 on success or PASS, 1 on a failed check, 2 on usage,
//! schema, hypothesis or cap errors.

mod commands;
mod config;
mod scenario;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use commands::Outcome;
use config::{flatten, resolve, CliError, CliResult, Envelope, Format, Status};

#[derive(Parser, Debug)]
#[command(name = "sgd-cover", version, about = "Covering-number generalization tools for SGD")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (default 0); recorded in every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for the parallel routines; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coupled-trajectory check of the contraction factor.
    Contract(commands::ContractParams),
    /// Enumerate (and optionally verify) the localized cover; JSON lines.
    Cover(commands::CoverParams),
    /// Build the piecewise-quadratic surrogate and measure its gradient error.
    Approx(commands::ApproxParams),
    /// Compute a generalization certificate.
    Bound(commands::BoundParams),
    /// Empirical-minus-population risk at an SGD endpoint.
    Gap(commands::GapParams),
    /// Resampling check that the strongly convex certificate holds.
    Validate(commands::ValidateParams),
    /// Soft or hard K-means by SGD, with certificate and EM comparison.
    Kmeans(commands::KMeansParams),
    /// The one-dimensional instability example.
    Stability(commands::StabilityParams),
    /// Similarity vs box-counting dimension of an SGD attractor.
    Ifs(commands::IfsParams),
    /// Empirical deviation frequencies against the Hoeffding tail.
    Hoeffding(commands::HoeffdingParams),
}

struct Run {
    name: &'static str,
    seed: u64,
    echo: serde_json::Value,
    hash: String,
    format: Format,
    output: Option<PathBuf>,
    outcome: Outcome,
}

fn execute<P, F>(cli: &Cli, name: &'static str, flags: &P, f: F) -> CliResult<Run>
where
    P: Serialize + DeserializeOwned,
    F: FnOnce(&P, u64) -> CliResult<Outcome>,
{
    let r = resolve(name, cli.config.as_deref(), flags, cli.seed)?;
    if let Some(k) = cli.threads.or(r.run.threads) {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let outcome = f(&r.params, r.seed)?;
    Ok(Run {
        name,
        seed: r.seed,
        echo: r.echo,
        hash: r.hash,
        format: cli.format.or(r.run.format).unwrap_or(Format::Json),
        output: cli.output.clone().or(r.run.output),
        outcome,
    })
}

fn dispatch(cli: &Cli) -> CliResult<Run> {
    use Command::*;
    match &cli.command {
        Contract(p) => execute(cli, "contract", p, commands::contract),
        Cover(p) => execute(cli, "cover", p, commands::cover),
        Approx(p) => execute(cli, "approx", p, commands::approx),
        Bound(p) => execute(cli, "bound", p, |p, _| commands::bound(p)),
        Gap(p) => execute(cli, "gap", p, commands::gap),
        Validate(p) => execute(cli, "validate", p, commands::validate),
        Kmeans(p) => execute(cli, "kmeans", p, commands::kmeans),
        Stability(p) => execute(cli, "stability", p, commands::stability),
        Ifs(p) => execute(cli, "ifs", p, commands::ifs),
        Hoeffding(p) => execute(cli, "hoeffding", p, commands::hoeffding),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render(run: Run) -> CliResult<(Vec<u8>, Status)> {
    let Run {
        name,
        seed,
        echo,
        hash,
        format,
        outcome,
        ..
    } = run;
    let status = outcome.status;
    let version = env!("CARGO_PKG_VERSION");
    let mut buf = Vec::new();
    match format {
        Format::Json => {
            if let Some(cover) = &outcome.cover {
                let meta = serde_json::json!({
                    "tool": "sgd-cover",
                    "version": version,
                    "command": name,
                    "seed": seed,
                    "config_sha256": hash,
                    "config": echo,
                    "status": status,
                    "result": outcome.result,
                });
                cover.write_jsonl(&mut buf, &meta)?;
            } else {
                let env = Envelope {
                    tool: "sgd-cover",
                    version,
                    core_version: version,
                    command: name,
                    seed,
                    config_sha256: &hash,
                    config: &echo,
                    status,
                    result: outcome.result,
                };
                serde_json::to_writer_pretty(&mut buf, &env)?;
                buf.push(b'\n');
            }
        }
        Format::Csv => {
            writeln!(buf, "# sgd-cover {version} command={name} seed={seed} config_sha256={hash} status={status:?}")?;
            let (header, rows) = match outcome.table {
                Some(t) => (t.header, t.rows),
                None => {
                    let mut kv = Vec::new();
                    flatten("", &outcome.result, &mut kv);
                    (
                        vec!["key".to_string(), "value".to_string()],
                        kv.into_iter().map(|(k, v)| vec![k, v]).collect(),
                    )
                }
            };
            for row in std::iter::once(header).chain(rows) {
                let line: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
                writeln!(buf, "{}", line.join(","))?;
            }
        }
        Format::Text => {
            writeln!(buf, "sgd-cover {version} {name} seed={seed} config_sha256={hash}")?;
            match &outcome.text {
                Some(t) => buf.extend_from_slice(t.as_bytes()),
                None => {
                    let mut kv = Vec::new();
                    flatten("", &outcome.result, &mut kv);
                    if let Some(c) = &outcome.cover {
                        kv.push(("entries_listed".into(), c.len().to_string()));
                    }
                    for (k, v) in kv {
                        writeln!(buf, "{k}: {v}")?;
                    }
                }
            }
            writeln!(buf, "status: {status:?}")?;
        }
    }
    Ok((buf, status))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = dispatch(&cli).and_then(|run| {
        let out = run.output.clone();
        let (bytes, status) = render(run)?;
        match out {
            Some(path) => std::fs::write(&path, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
            None => std::io::stdout().write_all(&bytes)?,
        }
        Ok(status)
    });
    match result {
        Ok(Status::Fail) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

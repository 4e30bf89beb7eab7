//! `dqcnet` command-line frontend.
//!
//! Exit codes: 0 on success, 1 when input data fails validation, 2 on usage
//! errors (bad flags or out-of-range parameters).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use dqcnet::allocation::Policy;
use dqcnet::harness::{run_experiment_with_jobs, write_csv, ExperimentConfig};
use dqcnet::topology::{GridSpec, RandomSpec};
use dqcnet::traffic::{load_apps, validate_apps};
use dqcnet::{
    allocate, fidelity_generic, load_network, max_intermediate_repeaters, save_network,
    OperationQuality, SwapChainParams,
};

#[derive(Parser)]
#[command(
    name = "dqcnet",
    version,
    about = "Entanglement-rate allocation for quantum networks"
)]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output format, where the subcommand offers a choice.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or validate network documents.
    #[command(subcommand)]
    Topo(TopoCommand),
    /// End-to-end fidelity of a repeater chain, or its inversion.
    Fidelity(FidelityArgs),
    /// Allocate link rates to a set of applications.
    Allocate(AllocateArgs),
    /// Run a simulation campaign and write its CSV.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum TopoCommand {
    Generate(GenerateArgs),
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("shape").required(true).args(["grid", "random"])))]
struct GenerateArgs {
    /// Lattice dimensions, e.g. 3x4.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(u32, u32)>,
    /// Erdős–Rényi graph with this many nodes.
    #[arg(long)]
    random: Option<u32>,
    /// Link capacity (grid), EPR pairs/s.
    #[arg(long, default_value_t = 10.0)]
    capacity: f64,
    /// Elementary link fidelity (grid).
    #[arg(long, default_value_t = 0.95)]
    fidelity: f64,
    /// Mark interior lattice nodes as repeaters.
    #[arg(long)]
    interior_repeaters: bool,
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    /// Capacity range lo,hi (random).
    #[arg(long, value_parser = parse_range, default_value = "10,10")]
    capacity_range: [f64; 2],
    /// Fidelity range lo,hi (random).
    #[arg(long, value_parser = parse_range, default_value = "0.95,0.95")]
    fidelity_range: [f64; 2],
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FidelityArgs {
    /// Elementary link fidelity, in (0.25, 1].
    #[arg(long)]
    fbar: f64,
    /// Number of intermediate repeaters.
    #[arg(long = "L", default_value_t = 0)]
    l: u64,
    #[arg(long, default_value_t = 1.0)]
    p1: f64,
    #[arg(long, default_value_t = 1.0)]
    p2: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Print the largest L meeting --fmin instead (perfect operations).
    #[arg(long, requires = "fmin")]
    invert: bool,
    #[arg(long)]
    fmin: Option<f64>,
    /// Print one line per L from 0 to --L.
    #[arg(long, conflicts_with = "invert")]
    table: bool,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    apps: PathBuf,
    #[arg(long, value_parser = ["greedy_shortest", "max_min", "weighted_max_min"])]
    policy: String,
    /// Candidate paths per demand.
    #[arg(long, default_value_t = dqcnet::routing::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    p1: f64,
    #[arg(long, default_value_t = 1.0)]
    p2: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; output bytes do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let n = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(r)?, n(c)?))
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let n = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([n(lo)?, n(hi)?])
}

enum Failure {
    /// Bad invocation: exit 2.
    Usage(anyhow::Error),
    /// Invalid input data: exit 1.
    Data(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

struct Sink(Option<PathBuf>);

impl Sink {
    fn write(&self, bytes: &[u8]) -> Outcome {
        match &self.0 {
            Some(path) => fs::write(path, bytes)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(data),
            None => std::io::stdout()
                .write_all(bytes)
                .context("writing stdout")
                .map_err(data),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn only_json(format: Option<Format>, cmd: &str) -> Outcome {
    match format {
        Some(Format::Csv) => Err(usage(anyhow::anyhow!(
            "{cmd} does not support --format csv"
        ))),
        _ => Ok(()),
    }
}

/// Rounds to 12 significant digits and prints the shortest form.
fn sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn topo(cmd: TopoCommand, format: Option<Format>, out: &Sink) -> Outcome {
    only_json(format, "topo")?;
    match cmd {
        TopoCommand::Generate(args) => {
            let net = match (args.grid, args.random) {
                (Some((rows, cols)), _) => GridSpec {
                    rows,
                    cols,
                    capacity: args.capacity,
                    fidelity: args.fidelity,
                    interior_repeaters: args.interior_repeaters,
                }
                .build(),
                (None, Some(nodes)) => RandomSpec {
                    nodes,
                    edge_prob: args.edge_prob,
                    capacity_range: args.capacity_range,
                    fidelity_range: args.fidelity_range,
                }
                .generate(args.seed),
                (None, None) => unreachable!("clap requires one shape"),
            }
            .map_err(usage)?;
            let mut text = save_network(&net);
            text.push('\n');
            out.write(text.as_bytes())
        }
        TopoCommand::Validate { input } => {
            let net = load_network(&read(&input)?)
                .with_context(|| format!("{} is not a valid network", input.display()))
                .map_err(data)?;
            let report = format!(
                "valid: {} nodes, {} links\n",
                net.node_count(),
                net.link_count()
            );
            out.write(report.as_bytes())
        }
    }
}

fn fidelity(args: FidelityArgs, format: Option<Format>, out: &Sink) -> Outcome {
    only_json(format, "fidelity")?;
    let json = format == Some(Format::Json);
    let ops = OperationQuality::new(args.p1, args.p2, args.eta).map_err(usage)?;
    if args.invert {
        if !ops.is_perfect() {
            return Err(usage(anyhow::anyhow!(
                "--invert assumes perfect operations; drop --p1/--p2/--eta"
            )));
        }
        let fmin = args.fmin.expect("clap enforces --fmin");
        let bound = max_intermediate_repeaters(args.fbar, fmin).map_err(usage)?;
        let text = if json {
            serde_json::json!({ "fbar": args.fbar, "fmin": fmin, "max_intermediate": bound.to_string() })
                .to_string()
        } else {
            bound.to_string()
        };
        return out.write(format!("{text}\n").as_bytes());
    }
    let eval = |l| {
        fidelity_generic(&SwapChainParams {
            elementary_fidelity: args.fbar,
            num_intermediate: l,
            ops,
        })
        .map_err(usage)
    };
    let ls: Vec<u64> = if args.table {
        (0..=args.l).collect()
    } else {
        vec![args.l]
    };
    let mut text = String::new();
    for l in ls {
        let f = eval(l)?;
        let line = match (json, args.table) {
            (true, _) => serde_json::json!({ "L": l, "fidelity": f }).to_string(),
            (false, true) => format!("{l}\t{}", sig12(f)),
            (false, false) => sig12(f),
        };
        text.push_str(&line);
        text.push('\n');
    }
    out.write(text.as_bytes())
}

fn allocate_cmd(args: AllocateArgs, format: Option<Format>, out: &Sink) -> Outcome {
    only_json(format, "allocate")?;
    let policy: Policy = args.policy.parse().map_err(usage)?;
    if args.k == 0 {
        return Err(usage(anyhow::anyhow!("--k must be at least 1")));
    }
    let ops = OperationQuality::new(args.p1, args.p2, args.eta).map_err(usage)?;
    let net = load_network(&read(&args.network)?)
        .with_context(|| format!("network {}", args.network.display()))
        .map_err(data)?;
    let apps = load_apps(&read(&args.apps)?)
        .with_context(|| format!("apps {}", args.apps.display()))
        .map_err(data)?;
    validate_apps(&net, &apps).map_err(data)?;
    let alloc = allocate(&net, &apps, policy, &ops, args.k).map_err(data)?;
    let mut text = alloc.to_json(&net);
    text.push('\n');
    out.write(text.as_bytes())
}

fn simulate(args: SimulateArgs, format: Option<Format>, out: &Sink) -> Outcome {
    if format == Some(Format::Json) {
        return Err(usage(anyhow::anyhow!("simulate writes CSV only")));
    }
    let mut config = ExperimentConfig::from_json(&read(&args.config)?).map_err(data)?;
    if let Some(dir) = args.config.parent() {
        config.resolve_paths(dir);
    }
    let rows = run_experiment_with_jobs(&config, args.jobs.max(1)).map_err(data)?;
    let mut buf = vec![];
    write_csv(&rows, &mut buf).map_err(data)?;
    out.write(&buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Sink(cli.output);
    let result = match cli.command {
        Command::Topo(cmd) => topo(cmd, cli.format, &out),
        Command::Fidelity(args) => fidelity(args, cli.format, &out),
        Command::Allocate(args) => allocate_cmd(args, cli.format, &out),
        Command::Simulate(args) => simulate(args, cli.format, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensornet::analysis::{self, Sampling};
use sensornet::loops::{
    enumerate_all_loops, enumerate_loops_from_source, oracle_cycles_through, LoopReport,
};
use sensornet::protocol::Hops;
use sensornet::sim::{self, Scenario, Trace};
use sensornet::topology::random_connected;
use sensornet::{NodeId, Topology};

/// Sensor network routing simulator and loop analysis tools.
#[derive(Parser, Debug)]
#[command(name = "sensornet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Enumerate loops of a connectivity graph.
    #[command(subcommand)]
    Loops(LoopsCommand),
    /// Inspect recorded traces.
    #[command(subcommand)]
    Trace(TraceCommand),
    /// Generate topologies.
    #[command(subcommand)]
    Topo(TopoCommand),
}

#[derive(Subcommand, Debug)]
enum SimCommand {
    /// Run a scenario to its horizon.
    Run(SimRunArgs),
}

#[derive(Args, Debug)]
struct SimRunArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the trace; standard output when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum LoopsCommand {
    /// BLOCK search from one source, or over the whole graph with --all.
    Enum(LoopsEnumArgs),
    /// Brute-force cycles through one source, canonicalized.
    Oracle(LoopsOracleArgs),
}

#[derive(Args, Debug)]
struct LoopsEnumArgs {
    /// Topology file.
    #[arg(long)]
    graph: PathBuf,
    /// Source node; defaults to the base station.
    #[arg(long, conflicts_with = "all")]
    source: Option<u32>,
    /// Enumerate every loop of the graph.
    #[arg(long)]
    all: bool,
}

#[derive(Args, Debug)]
struct LoopsOracleArgs {
    /// Topology file.
    #[arg(long)]
    graph: PathBuf,
    /// Source node.
    #[arg(long)]
    source: u32,
}

#[derive(Subcommand, Debug)]
enum TraceCommand {
    /// Print the run report of a trace as key=value lines.
    Analyze(TraceAnalyzeArgs),
}

#[derive(Args, Debug)]
struct TraceAnalyzeArgs {
    /// Trace file written by `sim run`.
    #[arg(long)]
    trace: PathBuf,
    /// Scenario the trace was produced from.
    #[arg(long)]
    scenario: PathBuf,
    /// Look for parent cycles after every routing change instead of every
    /// sample interval.
    #[arg(long)]
    every_change: bool,
}

#[derive(Subcommand, Debug)]
enum TopoCommand {
    /// Random connected unit-disk topology with node 0 as base station.
    Gen(TopoGenArgs),
}

#[derive(Args, Debug)]
struct TopoGenArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    width: f64,
    #[arg(long)]
    height: f64,
    #[arg(long)]
    range: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Input(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Invariant(m) => m,
        }
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_or_return(out: Option<&Path>, text: String) -> Outcome {
    match out {
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn load_graph(path: &Path) -> Result<Topology, Failure> {
    Topology::parse(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| match &e {
        // already names the scenario file itself
        sim::ScenarioError::Io { path: p, .. } if p == path => Failure::Input(e.to_string()),
        _ => Failure::Input(format!("{}: {e}", path.display())),
    })
}

fn check_source(topo: &Topology, source: u32) -> Result<NodeId, Failure> {
    let id = NodeId(source);
    if topo.contains(id) {
        Ok(id)
    } else {
        Err(Failure::Usage(format!("node {source} is not in the graph")))
    }
}

fn render_report(r: &LoopReport, out: &mut String) {
    out.push_str(&format!("source {}\n", r.source));
    for b in &r.blocks {
        out.push_str(&format!("block {} {}\n", b.second_node, b.loops.len()));
        for l in &b.loops {
            out.push_str(&format!("{l}\n"));
        }
    }
}

fn sim_run(a: &SimRunArgs) -> Outcome {
    let mut sc = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let trace = sim::run(&sc);
    let max = sc.protocol.max_hops;
    if let Some(snap) = &trace.snapshot {
        if let Some((n, _)) = snap
            .nodes
            .iter()
            .find(|(_, r)| matches!(r.hops, Hops::Finite(h) if h >= max))
        {
            return Err(Failure::Invariant(format!(
                "node {n} holds finite hops at or above max_hops"
            )));
        }
    }
    let text = trace.render();
    if Trace::parse(&text).as_ref() != Ok(&trace) {
        return Err(Failure::Invariant("trace does not round-trip".into()));
    }
    match &a.trace {
        Some(p) => {
            write_or_return(Some(p), text)?;
            Ok(analysis::summarize(&trace, &sc).render())
        }
        None => Ok(text),
    }
}

fn loops_enum(a: &LoopsEnumArgs) -> Outcome {
    let topo = load_graph(&a.graph)?;
    let mut out = String::new();
    if a.all {
        for r in enumerate_all_loops(&topo) {
            render_report(&r, &mut out);
        }
    } else {
        let source = check_source(&topo, a.source.unwrap_or(topo.base_station().0))?;
        render_report(&enumerate_loops_from_source(&topo, source), &mut out);
    }
    Ok(out)
}

fn loops_oracle(a: &LoopsOracleArgs) -> Outcome {
    let topo = load_graph(&a.graph)?;
    let source = check_source(&topo, a.source)?;
    let cycles: BTreeSet<_> = oracle_cycles_through(&topo, source);
    Ok(cycles.iter().map(|c| format!("{c}\n")).collect())
}

fn trace_analyze(a: &TraceAnalyzeArgs) -> Outcome {
    let sc = load_scenario(&a.scenario)?;
    let text = read(&a.trace)?;
    let trace =
        Trace::parse(&text).map_err(|e| Failure::Input(format!("{}: {e}", a.trace.display())))?;
    let sampling = if a.every_change {
        Sampling::EveryChange
    } else {
        Sampling::Every(sc.sample_interval)
    };
    Ok(analysis::summarize_with(&trace, &sc, sampling).render())
}

fn topo_gen(a: &TopoGenArgs) -> Outcome {
    if a.n < 2 {
        return Err(Failure::Usage("--n must be at least 2".into()));
    }
    if !(a.width > 0.0 && a.height > 0.0 && a.range > 0.0) {
        return Err(Failure::Usage(
            "--width, --height and --range must be positive".into(),
        ));
    }
    let topo = random_connected(a.n, a.width, a.height, a.range, a.seed)
        .map_err(|e| Failure::Input(e.to_string()))?;
    write_or_return(a.out.as_deref(), topo.render())
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Sim(SimCommand::Run(a)) => sim_run(a),
        Command::Loops(LoopsCommand::Enum(a)) => loops_enum(a),
        Command::Loops(LoopsCommand::Oracle(a)) => loops_oracle(a),
        Command::Trace(TraceCommand::Analyze(a)) => trace_analyze(a),
        Command::Topo(TopoCommand::Gen(a)) => topo_gen(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("sensornet: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

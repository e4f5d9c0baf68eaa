//! Command-line front end.
//!
//! Every option can come from a flag, from a JSON file given with
//! `--config`, or from its default, in that order of precedence. Output
//! files go to `--out` (default `.`):
//!
//! | command    | files                                                        |
//! |------------|--------------------------------------------------------------|
//! | `place`    | `placement.json`, `placement_iterations.csv`                 |
//! | `assign`   | `assignment.csv`, `assignment_iterations.csv`, `placement.json` |
//! | `simulate` | `results.csv`, `server_stats.csv`                            |
//! | `pareto`   | `front.csv`                                                  |
//! | `replay`   | `cache_stats.csv`                                            |
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 infeasible
//! server count, 3 I/O failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::assignment::{self, greedy_correlation, relocate_servers};
use crate::cache::{self, replay, CacheConfig, Policy};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::pareto::{front_sweep, simulate_front, write_front_csv};
use crate::placement::{self, closest_assignment, dragoon, Placement};
use crate::profiles::{generate_users, load_trace, UserGroup, ZipfModel};
use crate::simulation::{self, experiment_sweep, optimize, Scenario, Strategy, Sweep};
use crate::topology::{all_pairs_shortest_paths, parse_graphml, DistanceMatrix, GraphmlOptions, NodeId, Topology};

#[derive(Debug, Parser)]
#[command(name = "cdnsim", version, about = "CDN placement, assignment and cache simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place k servers with Dragoon.
    Place(Options),
    /// Place, then reassign users by profile correlation.
    Assign(Options),
    /// Simulate caches, once or as a sweep.
    Simulate(Options),
    /// Distance/correlation trade-off front.
    Pareto(Options),
    /// Check inputs without running anything.
    Validate(Options),
    /// Replay a request trace file through one cache.
    Replay(Options),
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// JSON file with default values for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// GraphML or JSON topology, or `random:NODES:EDGES[:SEED]`.
    #[arg(long)]
    pub topology: Option<String>,
    /// GraphML edge attribute holding the weight.
    #[arg(long)]
    pub weight_key: Option<String>,
    /// GraphML node attribute holding the priority.
    #[arg(long)]
    pub priority_key: Option<String>,
    /// User groups from a `node_id,service_id,count` CSV instead of Zipf.
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// Number of servers.
    #[arg(long)]
    pub k: Option<usize>,
    /// Existing placement JSON for `assign`.
    #[arg(long)]
    pub placement: Option<PathBuf>,
    /// LRU, LRU2, LFU, LIRS or BELADY.
    #[arg(long)]
    pub policy: Option<String>,
    /// Cache capacity in items.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// LIRS share of capacity for resident HIR blocks.
    #[arg(long)]
    pub lirs_hir_fraction: Option<f64>,
    /// Zipf exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of services in the universe.
    #[arg(long)]
    pub universe: Option<usize>,
    /// Services per user profile.
    #[arg(long)]
    pub profile_size: Option<usize>,
    /// Requests per user group.
    #[arg(long)]
    pub requests: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Node that serves cache misses.
    #[arg(long)]
    pub origin: Option<String>,
    /// Pareto walk length including both endpoints.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `distance` or `correlation`.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Sweep axis for `simulate`: `servers`, `cache` or `policy`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    pub values: Option<String>,
    /// Complete scenario JSON for `simulate`.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Request trace for `replay`, one service id per line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also simulate every front point.
    #[arg(long)]
    #[serde(default)]
    pub simulate: bool,
}

macro_rules! merge {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.take(); } )+
    };
}

impl Options {
    fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let mut file: Options = serde_json::from_str(&fs::read_to_string(&path)?)?;
        merge!(
            self,
            file,
            topology,
            weight_key,
            priority_key,
            users,
            k,
            placement,
            policy,
            capacity,
            lirs_hir_fraction,
            alpha,
            universe,
            profile_size,
            requests,
            seed,
            origin,
            steps,
            out,
            strategy,
            sweep,
            values,
            scenario,
            trace
        );
        self.simulate |= file.simulate;
        Ok(self)
    }
}

/// Options with every default applied.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub topology: String,
    pub graphml: GraphmlOptions,
    pub users: Option<PathBuf>,
    pub zipf: ZipfModel,
    pub k: usize,
    pub placement: Option<PathBuf>,
    pub cache: CacheConfig,
    pub requests: usize,
    pub seed: u64,
    pub origin: Option<NodeId>,
    pub steps: usize,
    pub out: PathBuf,
    pub strategy: Strategy,
    pub sweep: Option<Sweep>,
    pub scenario: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub simulate: bool,
}

pub const DEFAULT_TOPOLOGY: &str = "random:124:126";
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CAPACITY: usize = 12;
pub const DEFAULT_STEPS: usize = 50;

impl RunConfig {
    pub fn from_options(opts: Options) -> Result<Self> {
        let o = opts.merged()?;
        let defaults = GraphmlOptions::default();
        let zd = ZipfModel::default();
        let zipf = ZipfModel::new(
            o.alpha.unwrap_or(zd.alpha),
            o.universe.unwrap_or(zd.universe_size),
            o.profile_size.unwrap_or(zd.profile_size),
        )?;
        let policy = match &o.policy {
            Some(p) => p.parse()?,
            None => Policy::Belady,
        };
        let mut cache = CacheConfig::new(policy, o.capacity.unwrap_or(DEFAULT_CAPACITY));
        if let Some(f) = o.lirs_hir_fraction {
            cache.lirs_hir_fraction = f;
        }
        cache.validate()?;
        let strategy = match o.strategy.as_deref() {
            None | Some("distance") => Strategy::Distance,
            Some("correlation") => Strategy::Correlation,
            Some(s) => return Err(Error::Config(format!("unknown strategy `{s}`"))),
        };
        let sweep = match (&o.sweep, &o.values) {
            (None, None) => None,
            (Some(axis), values) => Some(parse_sweep(axis, values.as_deref().unwrap_or(""))?),
            (None, Some(_)) => return Err(Error::Config("--values needs --sweep".into())),
        };
        let requests = o.requests.unwrap_or(simulation::MIN_REQUESTS);
        if requests < simulation::MIN_REQUESTS {
            return Err(Error::Config(format!("--requests must be at least {}", simulation::MIN_REQUESTS)));
        }
        let steps = o.steps.unwrap_or(DEFAULT_STEPS);
        if steps < 2 {
            return Err(Error::Config("--steps must be at least 2".into()));
        }
        Ok(RunConfig {
            topology: o.topology.unwrap_or_else(|| DEFAULT_TOPOLOGY.to_owned()),
            graphml: GraphmlOptions {
                weight_key: Some(o.weight_key.unwrap_or_else(|| defaults.weight_key.clone().unwrap_or_default())),
                priority_key: o.priority_key.or(defaults.priority_key),
                label_key: defaults.label_key,
            },
            users: o.users,
            zipf,
            k: o.k.unwrap_or(DEFAULT_K),
            placement: o.placement,
            cache,
            requests,
            seed: o.seed.unwrap_or(0),
            origin: o.origin.map(NodeId::from),
            steps,
            out: o.out.unwrap_or_else(|| PathBuf::from(".")),
            strategy,
            sweep,
            scenario: o.scenario,
            trace: o.trace,
            simulate: o.simulate,
        })
    }
}

fn parse_sweep(axis: &str, values: &str) -> Result<Sweep> {
    let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config("sweep has no values".into()));
    }
    let numbers = || -> Result<Vec<usize>> {
        items
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Config(format!("sweep value `{s}` is not a count"))))
            .collect()
    };
    match axis {
        "servers" | "server_count" => Ok(Sweep::ServerCount(numbers()?)),
        "cache" | "cache_size" | "capacity" => Ok(Sweep::CacheSize(numbers()?)),
        "policy" => Ok(Sweep::Policy(items.iter().map(|s| s.parse()).collect::<Result<_>>()?)),
        _ => Err(Error::Config(format!("unknown sweep axis `{axis}`"))),
    }
}

/// Loads `spec`: a GraphML file, a JSON topology dump or
/// `random:NODES:EDGES[:SEED]`.
pub fn load_topology(spec: &str, options: &GraphmlOptions) -> Result<Topology> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| Error::Config(format!("bad random topology `{spec}`")));
        return match parts.as_slice() {
            [n, m] => Topology::random_connected(num(n)? as usize, num(m)? as usize, 0),
            [n, m, s] => Topology::random_connected(num(n)? as usize, num(m)? as usize, num(s)?),
            _ => Err(Error::Config(format!("bad random topology `{spec}`"))),
        };
    }
    let bytes = fs::read(spec)?;
    if Path::new(spec).extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Topology::from_json(&String::from_utf8_lossy(&bytes))
    } else {
        parse_graphml(&bytes, options)
    }
}

fn load_users(cfg: &RunConfig, topology: &Topology) -> Result<Vec<UserGroup>> {
    match &cfg.users {
        Some(path) => load_trace(BufReader::new(File::open(path)?)),
        None => generate_users(topology, &cfg.zipf, cfg.seed),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

struct Loaded {
    topology: Topology,
    dm: DistanceMatrix,
    users: Vec<UserGroup>,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let topology = load_topology(&cfg.topology, &cfg.graphml)?;
    let dm = all_pairs_shortest_paths(&topology);
    let users = load_users(cfg, &topology)?;
    if let Some(o) = &cfg.origin {
        topology.require(o)?;
    }
    Ok(Loaded { topology, dm, users })
}

fn base_scenario(cfg: &RunConfig, l: &Loaded, placement: Placement, assignment: assignment::Assignment) -> Scenario {
    Scenario {
        topology: l.topology.clone(),
        users: l.users.clone(),
        placement,
        assignment,
        cache_config: cfg.cache,
        origin: cfg.origin.clone(),
        master_seed: cfg.seed,
        requests_per_user: cfg.requests,
    }
}

fn cmd_place(cfg: &RunConfig) -> Result<()> {
    let l = load(cfg)?;
    let inst = Instance::new(&l.topology, &l.dm, &l.users)?;
    let outcome = dragoon(&inst, cfg.k)?;
    write_text(&cfg.out, "placement.json", &outcome.placement.to_json()?)?;
    let mut w = create(&cfg.out, "placement_iterations.csv")?;
    placement::write_iteration_log(&outcome.log, &mut w)?;
    w.flush()?;
    println!("placement: {}", outcome.placement.servers().iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "));
    println!("max_dist {} avg_dist {}", outcome.objective.max_dist, outcome.objective.avg_dist);
    Ok(())
}

fn cmd_assign(cfg: &RunConfig) -> Result<()> {
    let l = load(cfg)?;
    let inst = Instance::new(&l.topology, &l.dm, &l.users)?;
    let placement = match &cfg.placement {
        Some(path) => {
            let p = Placement::from_json(&fs::read_to_string(path)?)?;
            p.indices(&inst)?;
            p
        }
        None => dragoon(&inst, cfg.k)?.placement,
    };
    let a0 = closest_assignment(&inst, &placement)?;
    let greedy = greedy_correlation(&inst, &placement, &a0)?;
    let (relocated, assignment) = relocate_servers(&inst, &greedy.assignment, &placement)?;

    let mut w = create(&cfg.out, "assignment.csv")?;
    assignment::write_assignment_csv(&inst, &assignment, &mut w)?;
    w.flush()?;
    let mut w = create(&cfg.out, "assignment_iterations.csv")?;
    assignment::write_iteration_log(&greedy.log, &mut w)?;
    w.flush()?;
    write_text(&cfg.out, "placement.json", &relocated.to_json()?)?;

    let obj = assignment::evaluate_assignment(&inst, &assignment)?;
    println!("iterations {} total_corr {}", greedy.iterations, obj.total_corr);
    println!("max_dist {} avg_dist {}", obj.max_dist, obj.avg_dist);
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let (base, dm) = match &cfg.scenario {
        Some(path) => {
            let s = Scenario::from_json(&fs::read_to_string(path)?)?;
            let dm = all_pairs_shortest_paths(&s.topology);
            (s, dm)
        }
        None => {
            let l = load(cfg)?;
            let inst = Instance::new(&l.topology, &l.dm, &l.users)?;
            let (placement, assignment) = optimize(&inst, cfg.k, cfg.strategy)?;
            let s = base_scenario(cfg, &l, placement, assignment);
            (s, l.dm)
        }
    };
    let rows = match &cfg.sweep {
        Some(sweep) => experiment_sweep(&base, sweep, cfg.strategy)?,
        None => vec![simulation::SweepRow { axis_value: "base".into(), result: simulation::run_with(&base, &dm)? }],
    };
    let mut w = create(&cfg.out, "results.csv")?;
    simulation::write_results_csv(&rows, &mut w)?;
    w.flush()?;

    let mut w = create(&cfg.out, "server_stats.csv")?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["axis_value", "server", "requests", "hits", "misses", "cold_misses", "miss_ratio"])?;
        for row in &rows {
            for (server, s) in &row.result.per_server {
                csv.serialize((
                    row.axis_value.as_str(),
                    server.as_str(),
                    s.requests,
                    s.hits,
                    s.misses,
                    s.cold_misses,
                    s.miss_ratio(),
                ))?;
            }
        }
        csv.flush()?;
    }
    w.flush()?;
    for row in &rows {
        println!("{}: miss_ratio {} network_load {}", row.axis_value, row.result.miss_ratio, row.result.network_load);
    }
    Ok(())
}

fn cmd_pareto(cfg: &RunConfig) -> Result<()> {
    let l = load(cfg)?;
    let inst = Instance::new(&l.topology, &l.dm, &l.users)?;
    let mut front = front_sweep(&inst, cfg.k, cfg.steps, cfg.seed)?;
    if cfg.simulate {
        let first = &front.points()[0];
        let base = base_scenario(cfg, &l, first.placement.clone(), first.assignment.clone());
        simulate_front(&mut front, &base, &l.dm)?;
    }
    let mut w = create(&cfg.out, "front.csv")?;
    write_front_csv(&front, &mut w)?;
    w.flush()?;
    println!("front: {} points", front.len());
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let l = load(cfg)?;
    let inst = Instance::new(&l.topology, &l.dm, &l.users)?;
    if cfg.k == 0 || cfg.k > inst.site_count() {
        return Err(Error::ServerCount { k: cfg.k, max: inst.site_count() });
    }
    if let Some(path) = &cfg.placement {
        Placement::from_json(&fs::read_to_string(path)?)?.indices(&inst)?;
    }
    println!(
        "ok: {} nodes, {} edges, {} user groups, {} services",
        l.topology.node_count(),
        l.topology.edge_count(),
        l.users.len(),
        l.users.first().map_or(0, |u| u.profile.universe().len())
    );
    Ok(())
}

fn cmd_replay(cfg: &RunConfig) -> Result<()> {
    let path = cfg.trace.as_ref().ok_or_else(|| Error::Config("replay needs --trace".into()))?;
    let trace = cache::read_trace(BufReader::new(File::open(path)?))?;
    let capacities = match &cfg.sweep {
        Some(Sweep::CacheSize(c)) => c.clone(),
        Some(_) => return Err(Error::Config("replay only sweeps cache size".into())),
        None => vec![cfg.cache.capacity],
    };
    let mut rows = Vec::new();
    for c in capacities {
        let config = CacheConfig { capacity: c, ..cfg.cache };
        rows.push((config, replay(&trace, &config)?));
    }
    let mut w = create(&cfg.out, "cache_stats.csv")?;
    cache::write_stats_csv(&rows, &mut w)?;
    w.flush()?;
    for (c, s) in &rows {
        println!("{} C={}: misses {} of {}", c.policy, c.capacity, s.misses, s.requests);
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    let (opts, f): (Options, fn(&RunConfig) -> Result<()>) = match command {
        Command::Place(o) => (o, cmd_place),
        Command::Assign(o) => (o, cmd_assign),
        Command::Simulate(o) => (o, cmd_simulate),
        Command::Pareto(o) => (o, cmd_pareto),
        Command::Validate(o) => (o, cmd_validate),
        Command::Replay(o) => (o, cmd_replay),
    };
    f(&RunConfig::from_options(opts)?)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

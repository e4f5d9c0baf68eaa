//! Seeded request replay against per-server caches.
//!
//! Every user group draws `requests_per_user` i.i.d. services from its
//! profile. Requests are interleaved round-robin over users in node id
//! order, partitioned by assigned server and replayed through that server's
//! cache. A miss is fetched from the origin node.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{greedy_correlation, relocate_servers, Assignment};
use crate::cache::{replay, CacheConfig, CacheStats, Policy};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::placement::{closest_assignment, dragoon, objective_for_assignment, Placement};
use crate::profiles::{Profile, ServiceId, Universe, UserGroup};
use crate::rng::{derive_seed, SeededRng};
use crate::topology::{all_pairs_shortest_paths, DistanceMatrix, NodeId, Topology};

/// Lower bound on requests per user group.
pub const MIN_REQUESTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub users: Vec<UserGroup>,
    pub placement: Placement,
    pub assignment: Assignment,
    pub cache_config: CacheConfig,
    /// `None` means the topology's 1-center.
    pub origin: Option<NodeId>,
    pub master_seed: u64,
    pub requests_per_user: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub per_server: BTreeMap<NodeId, CacheStats>,
    pub overall: CacheStats,
    pub miss_ratio: f64,
    pub max_user_distance: f64,
    pub avg_user_distance: f64,
    pub network_load: f64,
    pub origin: NodeId,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    topology: Topology,
    #[serde(default)]
    universe: Vec<ServiceId>,
    users: Vec<UserSpec>,
    placement: Placement,
    assignment: BTreeMap<NodeId, NodeId>,
    cache_config: CacheConfig,
    #[serde(default)]
    origin: Option<NodeId>,
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_requests")]
    requests_per_user: usize,
}

#[derive(Serialize, Deserialize)]
struct UserSpec {
    node: NodeId,
    #[serde(default = "default_priority")]
    priority: f64,
    profile: BTreeMap<ServiceId, f64>,
}

fn default_requests() -> usize {
    MIN_REQUESTS
}

fn default_priority() -> f64 {
    1.0
}

impl Scenario {
    /// Parses the JSON scenario format. The universe is the optional
    /// `universe` list plus every service named in a profile.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let mut ids: BTreeSet<ServiceId> = file.universe.into_iter().collect();
        for u in &file.users {
            ids.extend(u.profile.keys().cloned());
        }
        let universe = Universe::new(ids);
        let users = file
            .users
            .into_iter()
            .map(|u| {
                let profile = Profile::from_entries(universe.clone(), u.profile)?;
                Ok(UserGroup { priority: u.priority, ..UserGroup::new(u.node, profile) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            topology: file.topology,
            users,
            placement: file.placement,
            assignment: Assignment::new(file.assignment),
            cache_config: file.cache_config,
            origin: file.origin,
            master_seed: file.master_seed,
            requests_per_user: file.requests_per_user,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            topology: self.topology.clone(),
            universe: self.users.first().map(|u| u.profile.universe().ids().to_vec()).unwrap_or_default(),
            users: self
                .users
                .iter()
                .map(|u| UserSpec { node: u.node.clone(), priority: u.priority, profile: u.profile.to_map() })
                .collect(),
            placement: self.placement.clone(),
            assignment: self.assignment.as_map().clone(),
            cache_config: self.cache_config,
            origin: self.origin.clone(),
            master_seed: self.master_seed,
            requests_per_user: self.requests_per_user,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// `count` i.i.d. draws from the group's profile, seeded by the master seed
/// and the group's node id.
pub fn generate_requests(user: &UserGroup, count: usize, master_seed: u64) -> Vec<ServiceId> {
    let mut rng = SeededRng::new(derive_seed(master_seed, &format!("{}/requests", user.node)));
    let ids = user.profile.universe().ids();
    let probs = user.profile.probs();
    (0..count).map(|_| ids[rng.weighted_index(probs).expect("profile has positive mass")].clone()).collect()
}

/// Node minimizing the largest distance to any node, ties by id.
pub fn topology_center(dm: &DistanceMatrix) -> NodeId {
    let best = (0..dm.len())
        .map(|i| (i, dm.row(i).iter().copied().fold(0.0, f64::max)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("topology is non-empty");
    dm.ids()[best.0].clone()
}

pub fn run(scenario: &Scenario) -> Result<SimulationResult> {
    let dm = all_pairs_shortest_paths(&scenario.topology);
    run_with(scenario, &dm)
}

/// [`run`] with precomputed distances for `scenario.topology`.
pub fn run_with(scenario: &Scenario, dm: &DistanceMatrix) -> Result<SimulationResult> {
    if scenario.requests_per_user < MIN_REQUESTS {
        return Err(Error::Config(format!(
            "requests_per_user must be at least {MIN_REQUESTS}, got {}",
            scenario.requests_per_user
        )));
    }
    scenario.cache_config.validate()?;
    let inst = Instance::new(&scenario.topology, dm, &scenario.users)?;
    let servers = scenario.placement.indices(&inst)?;
    let server_of = scenario.assignment.server_indices(&inst, Some(&scenario.placement))?;
    let origin = match &scenario.origin {
        Some(o) => o.clone(),
        None => topology_center(dm),
    };
    let origin_idx = scenario.topology.require(&origin)?;

    let mut order: Vec<usize> = (0..scenario.users.len()).collect();
    order.sort_by(|&a, &b| scenario.users[a].node.cmp(&scenario.users[b].node));
    let mut streams: Vec<_> = order
        .iter()
        .map(|&u| generate_requests(&scenario.users[u], scenario.requests_per_user, scenario.master_seed).into_iter())
        .collect();

    let mut traces: Vec<Vec<ServiceId>> = vec![Vec::new(); servers.len()];
    let mut load = 0.0;
    for _ in 0..scenario.requests_per_user {
        for (stream, &u) in streams.iter_mut().zip(&order) {
            let slot = servers.binary_search(&server_of[u]).expect("assigned to a placed server");
            traces[slot].push(stream.next().expect("one request per round"));
            load += dm.get(inst.demand[u].node, server_of[u]);
        }
    }

    let mut per_server = BTreeMap::new();
    let mut overall = CacheStats::default();
    for (slot, trace) in traces.iter().enumerate() {
        let stats = replay(trace, &scenario.cache_config)?;
        load += stats.misses as f64 * dm.get(servers[slot], origin_idx);
        overall.merge(&stats);
        per_server.insert(scenario.topology.id(servers[slot]).clone(), stats);
    }

    let dist = objective_for_assignment(&inst, &server_of);
    Ok(SimulationResult {
        per_server,
        overall,
        miss_ratio: overall.miss_ratio(),
        max_user_distance: dist.max_dist,
        avg_user_distance: dist.avg_dist,
        network_load: load,
        origin,
    })
}

/// How placement and assignment are chosen for a given server count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Dragoon placement, every user on its closest server.
    Distance,
    /// The distance solution refined by the correlation greedy, then servers
    /// relocated to their groups' 1-centers.
    Correlation,
}

pub fn optimize(inst: &Instance<'_>, k: usize, strategy: Strategy) -> Result<(Placement, Assignment)> {
    let placement = dragoon(inst, k)?.placement;
    let closest = closest_assignment(inst, &placement)?;
    match strategy {
        Strategy::Distance => Ok((placement, closest)),
        Strategy::Correlation => {
            let greedy = greedy_correlation(inst, &placement, &closest)?;
            relocate_servers(inst, &greedy.assignment, &placement)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    ServerCount(Vec<usize>),
    CacheSize(Vec<usize>),
    Policy(Vec<Policy>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::ServerCount(v) | Sweep::CacheSize(v) => v.len(),
            Sweep::Policy(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: String,
    pub result: SimulationResult,
}

/// One run per sweep value. A server-count sweep recomputes placement and
/// assignment with `strategy`; the other axes reuse the base scenario's.
pub fn experiment_sweep(base: &Scenario, sweep: &Sweep, strategy: Strategy) -> Result<Vec<SweepRow>> {
    if sweep.is_empty() {
        return Err(Error::Config("sweep has no values".into()));
    }
    let dm = all_pairs_shortest_paths(&base.topology);
    let mut rows = Vec::with_capacity(sweep.len());
    match sweep {
        Sweep::ServerCount(ks) => {
            let inst = Instance::new(&base.topology, &dm, &base.users)?;
            for &k in ks {
                let (placement, assignment) = optimize(&inst, k, strategy)?;
                let s = Scenario { placement, assignment, ..base.clone() };
                rows.push(SweepRow { axis_value: k.to_string(), result: run_with(&s, &dm)? });
            }
        }
        Sweep::CacheSize(sizes) => {
            for &c in sizes {
                let s = Scenario { cache_config: CacheConfig { capacity: c, ..base.cache_config }, ..base.clone() };
                rows.push(SweepRow { axis_value: c.to_string(), result: run_with(&s, &dm)? });
            }
        }
        Sweep::Policy(policies) => {
            for &p in policies {
                let s = Scenario { cache_config: CacheConfig { policy: p, ..base.cache_config }, ..base.clone() };
                rows.push(SweepRow { axis_value: p.name().to_owned(), result: run_with(&s, &dm)? });
            }
        }
    }
    Ok(rows)
}

/// CSV `axis_value,miss_ratio,max_dist,avg_dist,network_load,cold_misses`.
pub fn write_results_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis_value", "miss_ratio", "max_dist", "avg_dist", "network_load", "cold_misses"])?;
    for row in rows {
        let r = &row.result;
        w.serialize((
            row.axis_value.as_str(),
            r.miss_ratio,
            r.max_user_distance,
            r.avg_user_distance,
            r.network_load,
            r.overall.cold_misses,
        ))?;
    }
    w.flush()?;
    Ok(())
}

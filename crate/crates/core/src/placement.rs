//! Server placement minimizing the worst (priority-weighted) user distance.
//!
//! [`dragoon`] starts from a deterministic farthest-first seeding anchored at
//! the 1-center and then shifts servers to neighbouring nodes while the
//! objective improves. [`brute_force_placement`] enumerates every k-subset and
//! serves as the exact reference on small graphs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::instance::{Demand, Instance};
use crate::topology::NodeId;

/// Objective values closer than this compare equal.
pub const OBJECTIVE_EPS: f64 = 1e-9;

/// Largest number of k-subsets [`brute_force_placement`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Set of server-hosting nodes, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeId>", into = "Vec<NodeId>")]
pub struct Placement {
    servers: Vec<NodeId>,
}

impl Placement {
    pub fn new(servers: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let mut servers: Vec<NodeId> = servers.into_iter().collect();
        servers.sort();
        if servers.is_empty() {
            return Err(Error::Config("placement has no servers".into()));
        }
        if let Some(w) = servers.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("server `{}` listed twice", w[0])));
        }
        Ok(Placement { servers })
    }

    pub(crate) fn from_indices(inst: &Instance<'_>, indices: &[usize]) -> Self {
        let mut servers = inst.node_ids(indices);
        servers.sort();
        Placement { servers }
    }

    pub fn servers(&self) -> &[NodeId] {
        &self.servers
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.servers.binary_search(id).is_ok()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.servers)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ids: Vec<NodeId> = serde_json::from_str(text)?;
        Placement::new(ids)
    }

    /// Sorted dense indices; errors on ids missing from the topology.
    pub(crate) fn indices(&self, inst: &Instance<'_>) -> Result<Vec<usize>> {
        self.servers.iter().map(|s| inst.topology.require(s)).collect()
    }
}

impl TryFrom<Vec<NodeId>> for Placement {
    type Error = Error;

    fn try_from(ids: Vec<NodeId>) -> Result<Self> {
        Placement::new(ids)
    }
}

impl From<Placement> for Vec<NodeId> {
    fn from(p: Placement) -> Self {
        p.servers
    }
}

/// Worst and mean priority-weighted user-to-server distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementObjective {
    pub max_dist: f64,
    pub avg_dist: f64,
}

impl PlacementObjective {
    /// Strict lexicographic improvement: `max_dist` first, then `avg_dist`.
    pub fn improves_on(&self, other: &PlacementObjective) -> bool {
        if self.max_dist < other.max_dist - OBJECTIVE_EPS {
            return true;
        }
        (self.max_dist - other.max_dist).abs() <= OBJECTIVE_EPS && self.avg_dist < other.avg_dist - OBJECTIVE_EPS
    }

    pub(crate) fn from_costs(costs: impl Iterator<Item = f64>) -> Self {
        let mut max = 0.0f64;
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in costs {
            max = max.max(c);
            sum += c;
            n += 1;
        }
        PlacementObjective { max_dist: max, avg_dist: if n == 0 { 0.0 } else { sum / n as f64 } }
    }
}

/// Closest server for one demand point: `(server index, weighted distance)`.
/// `servers` must be ascending; ties keep the earliest.
#[inline]
pub(crate) fn closest(inst: &Instance<'_>, servers: &[usize], d: &Demand) -> (usize, f64) {
    let row = inst.dm.row(d.node);
    let mut best = (servers[0], row[servers[0]]);
    for &s in &servers[1..] {
        if row[s] < best.1 {
            best = (s, row[s]);
        }
    }
    (best.0, best.1 * d.priority)
}

pub(crate) fn objective_of(inst: &Instance<'_>, servers: &[usize]) -> PlacementObjective {
    PlacementObjective::from_costs(inst.demand.iter().map(|d| closest(inst, servers, d).1))
}

/// Objective for a fixed user→server map (dense indices aligned with users).
pub(crate) fn objective_for_assignment(inst: &Instance<'_>, server_of: &[usize]) -> PlacementObjective {
    PlacementObjective::from_costs(inst.demand.iter().zip(server_of).map(|(d, &s)| inst.dm.get(d.node, s) * d.priority))
}

/// Single-server objective of `site` over the demand points `group`.
pub(crate) fn single_site_objective(inst: &Instance<'_>, group: &[Demand], site: usize) -> PlacementObjective {
    let row = inst.dm.row(site);
    PlacementObjective::from_costs(group.iter().map(|d| row[d.node] * d.priority))
}

/// Best site for a single server over `group`, skipping `blocked` sites.
pub(crate) fn one_center_of(
    inst: &Instance<'_>,
    group: &[Demand],
    blocked: impl Fn(usize) -> bool,
) -> Option<(usize, PlacementObjective)> {
    let mut best: Option<(usize, PlacementObjective)> = None;
    for &site in &inst.sites {
        if blocked(site) {
            continue;
        }
        let obj = single_site_objective(inst, group, site);
        if best.as_ref().is_none_or(|(_, b)| obj.improves_on(b)) {
            best = Some((site, obj));
        }
    }
    best
}

/// Each user goes to its nearest server; ties go to the smaller node id.
pub fn closest_assignment(inst: &Instance<'_>, placement: &Placement) -> Result<Assignment> {
    let servers = placement.indices(inst)?;
    let server_of: Vec<usize> = inst.demand.iter().map(|d| closest(inst, &servers, d).0).collect();
    Ok(Assignment::from_indices(inst, &server_of))
}

/// Objective of `placement` under [`closest_assignment`].
pub fn evaluate_placement(inst: &Instance<'_>, placement: &Placement) -> Result<PlacementObjective> {
    Ok(objective_of(inst, &placement.indices(inst)?))
}

/// Site minimizing the single-server objective over all users.
pub fn one_center(inst: &Instance<'_>) -> Result<NodeId> {
    let (site, _) =
        one_center_of(inst, &inst.demand, |_| false).ok_or_else(|| Error::Config("no candidate sites".into()))?;
    Ok(inst.topology.id(site).clone())
}

/// Deterministic farthest-first seeding.
///
/// An orientation mark is put on the 1-center. The first server goes to the
/// user farthest from the mark, every further server to the user farthest
/// from its closest placed server (priority-weighted, ties by node id). When
/// that user's node is not a permitted site the nearest free site is used
/// instead. Once every user sits on a server, remaining servers go to the
/// free site farthest from the current servers (or on the mark itself if no
/// user is away from it).
pub fn farthest_first_init(inst: &Instance<'_>, k: usize) -> Result<Placement> {
    inst.check_k(k)?;
    Ok(Placement::from_indices(inst, &farthest_first_indices(inst, k)))
}

fn farthest_first_indices(inst: &Instance<'_>, k: usize) -> Vec<usize> {
    let (mark, _) = one_center_of(inst, &inst.demand, |_| false).expect("at least one site");
    let mut servers: Vec<usize> = Vec::with_capacity(k);
    let mut occupied = vec![false; inst.topology.node_count()];
    while servers.len() < k {
        let anchor: Vec<usize> = if servers.is_empty() { vec![mark] } else { sorted(&servers) };
        let next = match farthest_user_site(inst, &anchor, &occupied) {
            Some(site) => site,
            None if servers.is_empty() => mark,
            None => farthest_free_site(inst, &anchor, &occupied),
        };
        occupied[next] = true;
        servers.push(next);
    }
    sorted(&servers)
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

fn farthest_user_site(inst: &Instance<'_>, anchors: &[usize], occupied: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for d in &inst.demand {
        let (_, cost) = closest(inst, anchors, d);
        if cost <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((node, c)) => cost > c || (cost == c && d.node < node),
        };
        if better {
            best = Some((d.node, cost));
        }
    }
    let (target, _) = best?;
    if inst.is_site[target] && !occupied[target] {
        return Some(target);
    }
    let row = inst.dm.row(target);
    inst.sites.iter().copied().filter(|&s| !occupied[s]).min_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)))
}

fn farthest_free_site(inst: &Instance<'_>, anchors: &[usize], occupied: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &s in &inst.sites {
        if occupied[s] {
            continue;
        }
        let d = anchors.iter().map(|&a| inst.dm.get(s, a)).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((s, d));
        }
    }
    best.expect("k <= site count leaves a free site").0
}

/// One accepted server move.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DragoonMove {
    pub iteration: usize,
    /// Position of the moved server in the iteration's id-ordered server list.
    pub server: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub max_dist: f64,
    pub avg_dist: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DragoonOutcome {
    pub placement: Placement,
    pub objective: PlacementObjective,
    pub initial: Placement,
    pub initial_objective: PlacementObjective,
    pub iterations: usize,
    pub log: Vec<DragoonMove>,
}

/// Farthest-first seeding followed by neighbour-move local search.
///
/// Each iteration visits the servers in node-id order. For a server it
/// evaluates every free permitted neighbour of its current node under
/// closest-server assignment, takes the best one (ties by id) and moves there
/// if that strictly improves `(max_dist, avg_dist)`. A server moves at most
/// once per iteration; the search stops after an iteration without moves.
pub fn dragoon(inst: &Instance<'_>, k: usize) -> Result<DragoonOutcome> {
    inst.check_k(k)?;
    let init = farthest_first_indices(inst, k);
    let initial_objective = objective_of(inst, &init);

    let mut current = init.clone();
    let mut objective = initial_objective;
    let mut log = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut moved = false;
        let order = current.clone();
        for (slot, &origin) in order.iter().enumerate() {
            let pos = current.iter().position(|&s| s == origin).expect("server still placed");
            let mut best: Option<(usize, PlacementObjective, Vec<usize>)> = None;
            for nb in inst.topology.neighbor_indices(origin) {
                if !inst.is_site[nb] || current.contains(&nb) {
                    continue;
                }
                let mut candidate = current.clone();
                candidate[pos] = nb;
                candidate.sort_unstable();
                let obj = objective_of(inst, &candidate);
                if best.as_ref().is_none_or(|(_, b, _)| obj.improves_on(b)) {
                    best = Some((nb, obj, candidate));
                }
            }
            if let Some((to, obj, candidate)) = best {
                if obj.improves_on(&objective) {
                    log.push(DragoonMove {
                        iteration: iterations,
                        server: slot,
                        from: inst.topology.id(origin).clone(),
                        to: inst.topology.id(to).clone(),
                        max_dist: obj.max_dist,
                        avg_dist: obj.avg_dist,
                    });
                    current = candidate;
                    objective = obj;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }

    Ok(DragoonOutcome {
        placement: Placement::from_indices(inst, &current),
        objective,
        initial: Placement::from_indices(inst, &init),
        initial_objective,
        iterations,
        log,
    })
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact optimum by enumerating every k-subset of sites in lexicographic
/// order; the first subset reaching the optimum wins ties.
pub fn brute_force_placement(inst: &Instance<'_>, k: usize) -> Result<(Placement, PlacementObjective)> {
    inst.check_k(k)?;
    let combinations = binomial(inst.sites.len(), k);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { combinations, limit: BRUTE_FORCE_LIMIT });
    }
    let n = inst.sites.len();
    let mut pick: Vec<usize> = (0..k).collect();
    let mut servers = vec![0; k];
    let mut best: Option<(Vec<usize>, PlacementObjective)> = None;
    loop {
        for (slot, &p) in servers.iter_mut().zip(&pick) {
            *slot = inst.sites[p];
        }
        let obj = objective_of(inst, &servers);
        if best.as_ref().is_none_or(|(_, b)| obj.improves_on(b)) {
            best = Some((servers.clone(), obj));
        }
        // next combination
        let Some(i) = (0..k).rev().find(|&i| pick[i] != i + n - k) else { break };
        pick[i] += 1;
        for j in i + 1..k {
            pick[j] = pick[j - 1] + 1;
        }
    }
    let (servers, obj) = best.expect("at least one subset");
    Ok((Placement::from_indices(inst, &servers), obj))
}

/// CSV `iteration,server,from,to,max_dist,avg_dist`.
pub fn write_iteration_log<W: Write>(log: &[DragoonMove], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "server", "from", "to", "max_dist", "avg_dist"])?;
    for m in log {
        w.serialize((m.iteration, m.server, m.from.as_str(), m.to.as_str(), m.max_dist, m.avg_dist))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{Profile, Universe, UserGroup};
    use crate::topology::{all_pairs_shortest_paths, Edge, Node, Topology};

    fn path(ids: &[&str]) -> Topology {
        let nodes = ids.iter().map(|&i| Node::new(i)).collect();
        let edges = ids.windows(2).map(|w| Edge::new(w[0], w[1], 1.0)).collect();
        Topology::new(nodes, edges).unwrap()
    }

    fn users_on(t: &Topology) -> Vec<UserGroup> {
        let u = Universe::numbered(2);
        let p = Profile::from_probs(u, vec![0.6, 0.4]).unwrap();
        t.nodes().iter().map(|n| UserGroup::new(n.id.clone(), p.clone())).collect()
    }

    fn ids(p: &Placement) -> Vec<&str> {
        p.servers().iter().map(|s| s.as_str()).collect()
    }

    #[test]
    fn closest_tie_goes_to_smaller_id() {
        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let p = Placement::new(["A".into(), "C".into()]).unwrap();
        let a = closest_assignment(&inst, &p).unwrap();
        assert_eq!(a.server_of(&"B".into()).unwrap().as_str(), "A");

        let single = Placement::new(["C".into()]).unwrap();
        let a = closest_assignment(&inst, &single).unwrap();
        assert!(a.iter().all(|(_, s)| s.as_str() == "C"));
    }

    #[test]
    fn evaluate_small_cases() {
        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let obj = evaluate_placement(&inst, &Placement::new(["B".into()]).unwrap()).unwrap();
        assert_eq!(obj.max_dist, 1.0);
        assert!((obj.avg_dist - 2.0 / 3.0).abs() < 1e-12);
        let all = Placement::new(t.nodes().iter().map(|n| n.id.clone())).unwrap();
        let obj = evaluate_placement(&inst, &all).unwrap();
        assert_eq!((obj.max_dist, obj.avg_dist), (0.0, 0.0));
    }

    #[test]
    fn priorities_scale_distances() {
        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let mut users = users_on(&t);
        users[2].priority = 3.0;
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let obj = evaluate_placement(&inst, &Placement::new(["A".into()]).unwrap()).unwrap();
        assert_eq!(obj.max_dist, 6.0);
        // The heavy user at C pulls the 1-center off the middle.
        assert_eq!(one_center(&inst).unwrap().as_str(), "C");
    }

    #[test]
    fn one_center_of_paths() {
        for (nodes, want) in [(vec!["A", "B", "C"], "B"), (vec!["A", "B", "C", "D", "E"], "C")] {
            let t = path(&nodes);
            let dm = all_pairs_shortest_paths(&t);
            let users = users_on(&t);
            let inst = Instance::new(&t, &dm, &users).unwrap();
            assert_eq!(one_center(&inst).unwrap().as_str(), want);
        }
    }

    #[test]
    fn farthest_first_traces() {
        let t = path(&["A", "B", "C", "D", "E"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        assert_eq!(ids(&farthest_first_init(&inst, 2).unwrap()), ["A", "E"]);
        assert_eq!(ids(&farthest_first_init(&inst, 5).unwrap()), ["A", "B", "C", "D", "E"]);
        assert!(matches!(farthest_first_init(&inst, 6), Err(Error::ServerCount { k: 6, max: 5 })));
        assert!(matches!(farthest_first_init(&inst, 0), Err(Error::ServerCount { .. })));

        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        assert_eq!(ids(&farthest_first_init(&inst, 1).unwrap()), ["A"]);
    }

    #[test]
    fn dragoon_on_paths() {
        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let out = dragoon(&inst, 1).unwrap();
        assert_eq!(ids(&out.initial), ["A"]);
        assert_eq!(ids(&out.placement), ["B"]);
        assert_eq!(out.objective.max_dist, 1.0);
        assert_eq!(out.log.len(), 1);
        assert_eq!((out.log[0].from.as_str(), out.log[0].to.as_str()), ("A", "B"));

        let t = path(&["A", "B", "C", "D", "E"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let out = dragoon(&inst, 2).unwrap();
        assert_eq!(out.objective.max_dist, 1.0);
        assert!(!out.initial_objective.improves_on(&out.objective));
    }

    #[test]
    fn brute_force_small() {
        let t = path(&["A", "B", "C"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let (p, obj) = brute_force_placement(&inst, 1).unwrap();
        assert_eq!(ids(&p), ["B"]);
        assert_eq!(obj.max_dist, 1.0);

        let nodes = ["hub", "a", "b", "c", "d"].iter().map(|&i| Node::new(i)).collect();
        let edges = ["a", "b", "c", "d"].iter().map(|&l| Edge::new("hub", l, 1.0)).collect();
        let star = Topology::new(nodes, edges).unwrap();
        let dm = all_pairs_shortest_paths(&star);
        let users = users_on(&star);
        let inst = Instance::new(&star, &dm, &users).unwrap();
        let (p, obj) = brute_force_placement(&inst, 1).unwrap();
        assert_eq!(ids(&p), ["hub"]);
        assert_eq!(obj.max_dist, 1.0);
    }

    #[test]
    fn brute_force_guard() {
        let t = Topology::random_connected(60, 80, 1).unwrap();
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        assert!(matches!(brute_force_placement(&inst, 10), Err(Error::TooLarge { .. })));
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(124, 3), 310_124);
    }

    #[test]
    fn sites_restrict_servers() {
        let t = path(&["A", "B", "C", "D", "E"]);
        let dm = all_pairs_shortest_paths(&t);
        let users = users_on(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap().with_sites(&["A".into(), "D".into()]).unwrap();
        assert_eq!(one_center(&inst).unwrap().as_str(), "D");
        // Seeded at A (farthest from the mark); B is not a site, so no move.
        let out = dragoon(&inst, 1).unwrap();
        assert_eq!(ids(&out.placement), ["A"]);
        let (p, _) = brute_force_placement(&inst, 2).unwrap();
        assert_eq!(ids(&p), ["A", "D"]);
        assert!(dragoon(&inst, 3).is_err());
    }

    #[test]
    fn placement_json() {
        let p = Placement::new(["C".into(), "A".into()]).unwrap();
        assert_eq!(p.to_json().unwrap().split_whitespace().collect::<String>(), r#"["A","C"]"#);
        assert_eq!(Placement::from_json(r#"["C","A"]"#).unwrap(), p);
        assert!(Placement::from_json(r#"["A","A"]"#).is_err());
        assert!(Placement::from_json("[]").is_err());
    }
}

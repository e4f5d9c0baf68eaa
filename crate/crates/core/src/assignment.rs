//! User-to-server assignment driven by request-profile rank correlation.
//!
//! A server's profile is the unweighted mean of its users' profiles. The
//! greedy lets every user propose a move to the server whose profile, with
//! the user included, correlates best with its own; all proposals are applied
//! at once and kept only when the summed correlation rises.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Demand, Instance};
use crate::placement::{objective_for_assignment, one_center_of, Placement};
use crate::profiles::{aggregate, spearman_slices, Profile};
use crate::topology::NodeId;

/// Correlation gains smaller than this are treated as no change.
pub const CORRELATION_EPS: f64 = 1e-12;

/// Map from a user group's node to the node of its server.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Assignment(BTreeMap<NodeId, NodeId>);

impl Assignment {
    pub fn new(map: BTreeMap<NodeId, NodeId>) -> Self {
        Assignment(map)
    }

    pub(crate) fn from_indices(inst: &Instance<'_>, server_of: &[usize]) -> Self {
        Assignment(
            inst.users.iter().zip(server_of).map(|(u, &s)| (u.node.clone(), inst.topology.id(s).clone())).collect(),
        )
    }

    pub fn server_of(&self, user: &NodeId) -> Option<&NodeId> {
        self.0.get(user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_map(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.0
    }

    /// JSON object mapping user node to server node.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.0)?)
    }

    /// Server node index per user (aligned with `inst.users()`); every user
    /// must be assigned, and to a node of `placement` when one is given.
    pub(crate) fn server_indices(&self, inst: &Instance<'_>, placement: Option<&Placement>) -> Result<Vec<usize>> {
        inst.users
            .iter()
            .map(|u| {
                let s =
                    self.0.get(&u.node).ok_or_else(|| Error::Config(format!("user `{}` is not assigned", u.node)))?;
                if placement.is_some_and(|p| !p.contains(s)) {
                    return Err(Error::Config(format!("user `{}` assigned to `{s}`, which hosts no server", u.node)));
                }
                inst.topology.require(s)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssignmentObjective {
    /// Sum over users of the correlation with their server's profile.
    pub total_corr: f64,
    pub max_dist: f64,
    pub avg_dist: f64,
}

/// Profile sums per server slot.
struct Groups {
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl Groups {
    fn build(inst: &Instance<'_>, slot_of: &[usize], slots: usize) -> Self {
        let n = inst.users.first().map_or(0, |u| u.profile.probs().len());
        let mut sums = vec![vec![0.0; n]; slots];
        let mut counts = vec![0; slots];
        for (u, &slot) in inst.users.iter().zip(slot_of) {
            for (s, p) in sums[slot].iter_mut().zip(u.profile.probs()) {
                *s += p;
            }
            counts[slot] += 1;
        }
        Groups { sums, counts }
    }

    /// Correlation of `user` with the mean profile of `slot`, counting the
    /// user as a member whether or not it already is one.
    fn corr(&self, user: &Profile, slot: usize, is_member: bool) -> f64 {
        let p = user.probs();
        let mean: Vec<f64> = if is_member {
            let c = self.counts[slot] as f64;
            self.sums[slot].iter().map(|s| s / c).collect()
        } else {
            let c = (self.counts[slot] + 1) as f64;
            self.sums[slot].iter().zip(p).map(|(s, x)| (s + x) / c).collect()
        };
        spearman_slices(p, &mean)
    }

    fn total(&self, inst: &Instance<'_>, slot_of: &[usize]) -> f64 {
        inst.users.iter().zip(slot_of).map(|(u, &s)| self.corr(&u.profile, s, true)).sum()
    }
}

/// Mean profile of the users assigned to `server`.
pub fn server_profile(inst: &Instance<'_>, a: &Assignment, server: &NodeId) -> Result<Profile> {
    let members: Vec<&Profile> =
        inst.users.iter().filter(|u| a.server_of(&u.node) == Some(server)).map(|u| &u.profile).collect();
    if members.is_empty() {
        return Err(Error::EmptyServer(server.to_string()));
    }
    aggregate(&members)
}

/// Correlation of `user` with the profile `server` would have with the user
/// included. For a server without users this is the user's
/// self-correlation.
pub fn candidate_corr(inst: &Instance<'_>, a: &Assignment, user: &NodeId, server: &NodeId) -> Result<f64> {
    let ui = inst.user_index(user).ok_or_else(|| Error::UnknownNode(user.to_string()))?;
    let me = &inst.users[ui];
    let mut members: Vec<&Profile> = inst
        .users
        .iter()
        .filter(|u| u.node != *user && a.server_of(&u.node) == Some(server))
        .map(|u| &u.profile)
        .collect();
    members.push(&me.profile);
    let agg = aggregate(&members)?;
    crate::profiles::spearman(&me.profile, &agg)
}

/// One round of the greedy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyIteration {
    pub iteration: usize,
    pub moves_proposed: usize,
    pub total_corr_before: f64,
    pub total_corr_after: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    pub assignment: Assignment,
    pub objective: AssignmentObjective,
    pub iterations: usize,
    pub log: Vec<GreedyIteration>,
}

/// Best strictly improving, positive move per user: `(user, target slot)`.
fn proposals(inst: &Instance<'_>, groups: &Groups, slot_of: &[usize]) -> Vec<(usize, usize)> {
    let slots = groups.counts.len();
    let mut out = Vec::new();
    for (ui, u) in inst.users.iter().enumerate() {
        let current = slot_of[ui];
        let here = groups.corr(&u.profile, current, true);
        let mut best: Option<(usize, f64)> = None;
        for s in (0..slots).filter(|&s| s != current) {
            let c = groups.corr(&u.profile, s, false);
            if c > 0.0 && c > here + CORRELATION_EPS && best.is_none_or(|(_, b)| c > b + CORRELATION_EPS) {
                best = Some((s, c));
            }
        }
        if let Some((s, _)) = best {
            out.push((ui, s));
        }
    }
    out
}

/// Greedy proposals for an index-level state as `(user, target node)`.
pub(crate) fn proposal_moves(inst: &Instance<'_>, servers: &[usize], server_of: &[usize]) -> Vec<(usize, usize)> {
    let slot_of: Vec<usize> = server_of.iter().map(|s| servers.binary_search(s).expect("placed server")).collect();
    let groups = Groups::build(inst, &slot_of, servers.len());
    proposals(inst, &groups, &slot_of).into_iter().map(|(u, slot)| (u, servers[slot])).collect()
}

/// Simultaneous-reassignment greedy for the summed correlation.
///
/// Each iteration every user evaluates every server (itself included in the
/// prospective server profile) and proposes the best positive coefficient
/// that beats its current one, ties by server id. The whole batch is applied;
/// if the summed correlation does not strictly rise the batch is reverted and
/// the search stops. It also stops when nobody proposes a move.
pub fn greedy_correlation(inst: &Instance<'_>, placement: &Placement, a0: &Assignment) -> Result<GreedyOutcome> {
    let servers = placement.indices(inst)?;
    let mut slot_of: Vec<usize> = a0
        .server_indices(inst, Some(placement))?
        .into_iter()
        .map(|s| servers.binary_search(&s).expect("assignment targets are placed"))
        .collect();

    let mut log = Vec::new();
    let mut iteration = 0;
    let mut groups = Groups::build(inst, &slot_of, servers.len());
    let mut total = groups.total(inst, &slot_of);
    loop {
        iteration += 1;
        let moves = proposals(inst, &groups, &slot_of);
        if moves.is_empty() {
            log.push(GreedyIteration {
                iteration,
                moves_proposed: 0,
                total_corr_before: total,
                total_corr_after: total,
                accepted: false,
            });
            break;
        }
        let mut next = slot_of.clone();
        for &(ui, s) in &moves {
            next[ui] = s;
        }
        let next_groups = Groups::build(inst, &next, servers.len());
        let next_total = next_groups.total(inst, &next);
        let accepted = next_total > total + CORRELATION_EPS;
        log.push(GreedyIteration {
            iteration,
            moves_proposed: moves.len(),
            total_corr_before: total,
            total_corr_after: next_total,
            accepted,
        });
        if !accepted {
            break;
        }
        slot_of = next;
        groups = next_groups;
        total = next_total;
    }

    let server_of: Vec<usize> = slot_of.iter().map(|&s| servers[s]).collect();
    let dist = objective_for_assignment(inst, &server_of);
    Ok(GreedyOutcome {
        assignment: Assignment::from_indices(inst, &server_of),
        objective: AssignmentObjective { total_corr: total, max_dist: dist.max_dist, avg_dist: dist.avg_dist },
        iterations: iteration,
        log,
    })
}

/// Summed correlation and distances of an arbitrary complete assignment.
pub fn evaluate_assignment(inst: &Instance<'_>, a: &Assignment) -> Result<AssignmentObjective> {
    let server_of = a.server_indices(inst, None)?;
    Ok(objective_from_indices(inst, &server_of))
}

pub(crate) fn objective_from_indices(inst: &Instance<'_>, server_of: &[usize]) -> AssignmentObjective {
    let mut slots: Vec<usize> = server_of.to_vec();
    slots.sort_unstable();
    slots.dedup();
    let slot_of: Vec<usize> = server_of.iter().map(|s| slots.binary_search(s).unwrap()).collect();
    let total = Groups::build(inst, &slot_of, slots.len()).total(inst, &slot_of);
    let dist = objective_for_assignment(inst, server_of);
    AssignmentObjective { total_corr: total, max_dist: dist.max_dist, avg_dist: dist.avg_dist }
}

/// Moves every server to the 1-center of its assigned users (ties by id).
///
/// The grouping is kept; the returned assignment points each user at its
/// group's new location. Servers without users stay put and claim their
/// node first. Groups are then handled in server-id order, and a group whose
/// 1-center is already claimed takes its best unclaimed site.
pub fn relocate_servers(inst: &Instance<'_>, a: &Assignment, placement: &Placement) -> Result<(Placement, Assignment)> {
    let servers = placement.indices(inst)?;
    let server_of = a.server_indices(inst, Some(placement))?;
    let (new_servers, new_server_of) = relocate_indices(inst, &servers, &server_of);
    Ok((Placement::from_indices(inst, &new_servers), Assignment::from_indices(inst, &new_server_of)))
}

pub(crate) fn relocate_indices(
    inst: &Instance<'_>,
    servers: &[usize],
    server_of: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let groups: Vec<Vec<Demand>> = servers
        .iter()
        .map(|&s| inst.demand.iter().zip(server_of).filter(|(_, &t)| t == s).map(|(d, _)| *d).collect())
        .collect();
    let mut claimed = vec![false; inst.topology.node_count()];
    let mut moved_to = servers.to_vec();
    for (slot, group) in groups.iter().enumerate() {
        if group.is_empty() {
            claimed[servers[slot]] = true;
        }
    }
    for (slot, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let (target, _) = one_center_of(inst, group, |s| claimed[s]).expect("k <= sites leaves a free site");
        claimed[target] = true;
        moved_to[slot] = target;
    }
    let new_server_of =
        server_of.iter().map(|s| moved_to[servers.binary_search(s).expect("assigned to a placed server")]).collect();
    (moved_to, new_server_of)
}

/// CSV `user_node,server_node,rho,distance`, one row per user in id order.
pub fn write_assignment_csv<W: Write>(inst: &Instance<'_>, a: &Assignment, out: W) -> Result<()> {
    let server_of = a.server_indices(inst, None)?;
    let mut slots: Vec<usize> = server_of.clone();
    slots.sort_unstable();
    slots.dedup();
    let slot_of: Vec<usize> = server_of.iter().map(|s| slots.binary_search(s).unwrap()).collect();
    let groups = Groups::build(inst, &slot_of, slots.len());

    let mut rows: Vec<(&NodeId, &NodeId, f64, f64)> = inst
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let rho = groups.corr(&u.profile, slot_of[i], true);
            let d = inst.dm.get(inst.demand[i].node, server_of[i]);
            (&u.node, inst.topology.id(server_of[i]), rho, d)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_node", "server_node", "rho", "distance"])?;
    for (u, s, rho, d) in rows {
        w.serialize((u.as_str(), s.as_str(), rho, d))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `iteration,moves_proposed,total_corr_before,total_corr_after,accepted`.
pub fn write_iteration_log<W: Write>(log: &[GreedyIteration], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "moves_proposed", "total_corr_before", "total_corr_after", "accepted"])?;
    for it in log {
        w.serialize((it.iteration, it.moves_proposed, it.total_corr_before, it.total_corr_after, it.accepted))?;
    }
    w.flush()?;
    Ok(())
}

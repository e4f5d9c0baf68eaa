//! Distance versus correlation trade-off front.
//!
//! Objectives: minimize the (priority-weighted) average user distance and
//! maximize the summed profile correlation.

use std::io::Write;

use serde::Serialize;

use crate::assignment::{objective_from_indices, proposal_moves, relocate_indices, Assignment};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::placement::{closest, dragoon, Placement};
use crate::rng::{derive_seed, SeededRng};
use crate::simulation::{run_with, Scenario, SimulationResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionPoint {
    pub placement: Placement,
    pub assignment: Assignment,
    pub avg_dist: f64,
    pub total_corr: f64,
    pub max_dist: f64,
    pub sim: Option<SimulationResult>,
    pub seed: u64,
    /// 0 for the distance endpoint, `steps - 1` for the correlation
    /// endpoint, walk position otherwise.
    pub step: usize,
}

impl SolutionPoint {
    fn from_indices(inst: &Instance<'_>, servers: &[usize], server_of: &[usize], seed: u64, step: usize) -> Self {
        let obj = objective_from_indices(inst, server_of);
        SolutionPoint {
            placement: Placement::from_indices(inst, servers),
            assignment: Assignment::from_indices(inst, server_of),
            avg_dist: obj.avg_dist,
            total_corr: obj.total_corr,
            max_dist: obj.max_dist,
            sim: None,
            seed,
            step,
        }
    }
}

/// `a` is no worse in both objectives and strictly better in one.
pub fn dominates(a: &SolutionPoint, b: &SolutionPoint) -> bool {
    dominates_values((a.avg_dist, a.total_corr), (b.avg_dist, b.total_corr))
}

/// [`dominates`] on raw `(avg_dist, total_corr)` pairs.
pub fn dominates_values(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Non-dominated points in ascending `avg_dist` (and so strictly ascending
/// `total_corr`).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ParetoFront {
    points: Vec<SolutionPoint>,
}

impl ParetoFront {
    pub fn points(&self) -> &[SolutionPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SolutionPoint> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<SolutionPoint> {
        self.points
    }
}

/// Keeps the non-dominated points. Of several points with equal objective
/// values only the first in input order survives.
pub fn non_dominated(points: Vec<SolutionPoint>) -> ParetoFront {
    let keep = non_dominated_indices(&points.iter().map(|p| (p.avg_dist, p.total_corr)).collect::<Vec<_>>());
    let mut slots: Vec<Option<SolutionPoint>> = points.into_iter().map(Some).collect();
    ParetoFront { points: keep.into_iter().map(|i| slots[i].take().expect("index kept once")).collect() }
}

/// Indices of the non-dominated `(avg_dist, total_corr)` values, ordered by
/// ascending distance.
pub fn non_dominated_indices(values: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a].0.total_cmp(&values[b].0).then(values[b].1.total_cmp(&values[a].1)).then(a.cmp(&b))
    });
    let mut keep = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if values[i].1 > best {
            best = values[i].1;
            keep.push(i);
        }
    }
    keep
}

/// Every state visited by [`front_sweep`], before filtering.
///
/// The distance endpoint is Dragoon with closest assignment. The walk then
/// starts from it and at each step applies one correlation-improving move,
/// chosen uniformly from the greedy's proposals; each visited assignment is
/// recorded as is and with its servers moved to their groups' 1-centers. The
/// walk ends early once nobody proposes a move. The correlation endpoint is
/// the greedy fixpoint with relocated servers.
pub fn front_states(inst: &Instance<'_>, k: usize, steps: usize, seed: u64) -> Result<Vec<SolutionPoint>> {
    if steps < 2 {
        return Err(Error::Config(format!("front needs at least 2 steps, got {steps}")));
    }
    let servers = dragoon(inst, k)?.placement.indices(inst)?;
    let start: Vec<usize> = inst.demand.iter().map(|d| closest(inst, &servers, d).0).collect();
    let mut states = vec![SolutionPoint::from_indices(inst, &servers, &start, seed, 0)];

    let mut rng = SeededRng::new(derive_seed(seed, "pareto-walk"));
    let mut server_of = start.clone();
    for step in 1..steps - 1 {
        let moves = proposal_moves(inst, &servers, &server_of);
        if moves.is_empty() {
            break;
        }
        let (user, target) = moves[rng.below(moves.len())];
        server_of[user] = target;
        states.push(SolutionPoint::from_indices(inst, &servers, &server_of, seed, step));
        let (moved, moved_of) = relocate_indices(inst, &servers, &server_of);
        let mut sorted = moved.clone();
        sorted.sort_unstable();
        states.push(SolutionPoint::from_indices(inst, &sorted, &moved_of, seed, step));
    }

    let placement = Placement::from_indices(inst, &servers);
    let a0 = Assignment::from_indices(inst, &start);
    let greedy = crate::assignment::greedy_correlation(inst, &placement, &a0)?;
    let (relocated, assignment) = crate::assignment::relocate_servers(inst, &greedy.assignment, &placement)?;
    let end_servers = relocated.indices(inst)?;
    let end_of = assignment.server_indices(inst, Some(&relocated))?;
    states.push(SolutionPoint::from_indices(inst, &end_servers, &end_of, seed, steps - 1));
    Ok(states)
}

/// Non-dominated subset of [`front_states`].
pub fn front_sweep(inst: &Instance<'_>, k: usize, steps: usize, seed: u64) -> Result<ParetoFront> {
    Ok(non_dominated(front_states(inst, k, steps, seed)?))
}

/// Simulates every point with the rest of `base` unchanged.
pub fn simulate_front(front: &mut ParetoFront, base: &Scenario, dm: &crate::topology::DistanceMatrix) -> Result<()> {
    for p in &mut front.points {
        let s = Scenario { placement: p.placement.clone(), assignment: p.assignment.clone(), ..base.clone() };
        p.sim = Some(run_with(&s, dm)?);
    }
    Ok(())
}

/// CSV `avg_dist,total_corr,max_dist,miss_ratio,placement,seed,step`;
/// `miss_ratio` is empty for unsimulated points and `placement` lists server
/// ids separated by `;`.
pub fn write_front_csv<W: Write>(front: &ParetoFront, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["avg_dist", "total_corr", "max_dist", "miss_ratio", "placement", "seed", "step"])?;
    for p in front.iter() {
        let servers: Vec<&str> = p.placement.servers().iter().map(|s| s.as_str()).collect();
        w.serialize((
            p.avg_dist,
            p.total_corr,
            p.max_dist,
            p.sim.as_ref().map(|s| s.miss_ratio),
            servers.join(";"),
            p.seed,
            p.step,
        ))?;
    }
    w.flush()?;
    Ok(())
}

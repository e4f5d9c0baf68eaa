#![allow(dead_code)]

use std::collections::BTreeMap;

use cdnsim::profiles::{aggregate, zipf_pmf};
use cdnsim::rng::SeededRng;
use cdnsim::topology::{Edge, Node};
use cdnsim::{Assignment, Instance, NodeId, Placement, Profile, Topology, Universe, UserGroup};

/// Two hubs joined by a long edge, four users hanging off each. Users carry
/// one of two profiles with disjoint supports; the left hub holds three of
/// type A and one of type B, the right hub the reverse.
pub fn two_cluster(seed: u64) -> (Topology, Vec<UserGroup>) {
    let mut nodes = vec![Node::new("L"), Node::new("R")];
    let mut edges = vec![Edge::new("L", "R", 10.0)];
    let universe = Universe::numbered(30);
    let mut rng = SeededRng::new(seed);
    let mut profile = |pool: std::ops::Range<usize>| {
        let mut idx: Vec<usize> = pool.collect();
        rng.shuffle(&mut idx);
        let mut probs = vec![0.0; 30];
        for (&i, p) in idx.iter().zip(zipf_pmf(0.3, 15)) {
            probs[i] = p;
        }
        Profile::from_probs(universe.clone(), probs).unwrap()
    };
    let a = profile(0..15);
    let b = profile(15..30);
    let mut users = Vec::new();
    for (hub, kinds) in [("L", "AAAB"), ("R", "ABBB")] {
        for (i, kind) in kinds.chars().enumerate() {
            let id = format!("{hub}{i}");
            nodes.push(Node::new(id.clone()));
            edges.push(Edge::new(hub, id.as_str(), 1.0));
            users.push(UserGroup::new(id, if kind == 'A' { a.clone() } else { b.clone() }));
        }
    }
    (Topology::new(nodes, edges).unwrap(), users)
}

/// Floyd–Warshall over the edge list.
pub fn floyd_warshall(t: &Topology) -> Vec<Vec<f64>> {
    let n = t.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in t.edges() {
        let a = t.index_of(&e.a).unwrap();
        let b = t.index_of(&e.b).unwrap();
        d[a][b] = d[a][b].min(e.weight);
        d[b][a] = d[b][a].min(e.weight);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Spearman by counting: rank = 1 + #greater + #equal_others / 2, then the
/// d² formula.
pub fn spearman_oracle(p: &[f64], q: &[f64]) -> f64 {
    let rank = |v: &[f64], i: usize| {
        let greater = v.iter().filter(|&&x| x > v[i]).count() as f64;
        let equal = v.iter().filter(|&&x| x == v[i]).count() as f64 - 1.0;
        1.0 + greater + equal / 2.0
    };
    let n = p.len() as f64;
    let d2: f64 = (0..p.len()).map(|i| (rank(p, i) - rank(q, i)).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Best summed correlation over every assignment of users to the placed
/// servers, evaluated from scratch with `aggregate` and `spearman`.
pub fn exhaustive_best_corr(inst: &Instance<'_>, placement: &Placement) -> f64 {
    let users = inst.users();
    let k = placement.len();
    let total = k.pow(users.len() as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut c = code;
        let slot: Vec<usize> = users
            .iter()
            .map(|_| {
                let s = c % k;
                c /= k;
                s
            })
            .collect();
        let mut sum = 0.0;
        for s in 0..k {
            let members: Vec<&Profile> =
                users.iter().zip(&slot).filter(|(_, &t)| t == s).map(|(u, _)| &u.profile).collect();
            if members.is_empty() {
                continue;
            }
            let agg = aggregate(&members).unwrap();
            for m in &members {
                sum += spearman_oracle(m.probs(), agg.probs());
            }
        }
        best = best.max(sum);
    }
    best
}

pub fn assignment_to(users: &[UserGroup], servers: &[&str]) -> Assignment {
    let map: BTreeMap<NodeId, NodeId> =
        users.iter().zip(servers).map(|(u, s)| (u.node.clone(), NodeId::from(*s))).collect();
    Assignment::new(map)
}

/// Points kept by the quadratic filter: not dominated by any other point,
/// one representative per distinct value pair, sorted by distance.
pub fn quadratic_front(values: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let dominated = |b: (f64, f64)| values.iter().any(|&a| a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1));
    let mut out: Vec<(f64, f64)> = values.iter().copied().filter(|&v| !dominated(v)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

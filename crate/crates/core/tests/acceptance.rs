//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p cdnsim --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use cdnsim::assignment::{evaluate_assignment, greedy_correlation};
use cdnsim::cache::{belady, read_trace, replay, CacheConfig, Policy};
use cdnsim::pareto::{front_sweep, non_dominated_indices};
use cdnsim::placement::{brute_force_placement, closest_assignment, dragoon};
use cdnsim::profiles::{generate_users, spearman, zipf_pmf};
use cdnsim::rng::SeededRng;
use cdnsim::simulation::{experiment_sweep, optimize, run_with, Scenario, Strategy, Sweep};
use cdnsim::topology::{all_pairs_shortest_paths, Edge};
use cdnsim::{Instance, Profile, Topology, Universe, ZipfModel};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spearman_anchor() -> Outcome {
    let u = Universe::new(["A", "B", "C"].map(cdnsim::ServiceId::from));
    let p = |a, b, c| Profile::from_entries(u.clone(), [("A", a), ("B", b), ("C", c)]).unwrap();
    let server = p(0.4, 0.25, 0.35);
    let (u1, u2) = (p(0.5, 0.5, 0.0), p(0.3, 0.0, 0.7));
    let start = Instant::now();
    let r1 = spearman(&u1, &server).unwrap();
    let r2 = spearman(&u2, &server).unwrap();
    let elapsed = start.elapsed();
    check(
        (r1 - 0.125).abs() <= 1e-9 && (r2 - 0.5).abs() <= 1e-9 && elapsed < Duration::from_millis(1),
        format!("rho = {r1}, {r2} in {elapsed:?}"),
    )
}

fn random_weighted(n: usize, m: usize, seed: u64) -> Topology {
    let base = Topology::random_connected(n, m, seed).unwrap();
    let mut rng = SeededRng::new(seed ^ 0x5eed);
    let edges: Vec<Edge> =
        base.edges().iter().map(|e| Edge::new(e.a.as_str(), e.b.as_str(), 1.0 + rng.below(9) as f64)).collect();
    Topology::new(base.nodes().to_vec(), edges).unwrap()
}

fn placement_ratio() -> Outcome {
    let start = Instant::now();
    let (mut cases, mut within, mut optimal) = (0, 0, 0);
    let mut rng = SeededRng::new(2);
    for seed in 0..240u64 {
        let n = 3 + rng.below(10);
        let max_m = n * (n - 1) / 2;
        let m = (n - 1 + rng.below(n + 1)).min(max_m);
        let k = 1 + rng.below(3.min(n));
        let t = random_weighted(n, m, seed);
        let dm = all_pairs_shortest_paths(&t);
        let users = generate_users(&t, &ZipfModel::default(), seed).unwrap();
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let d = dragoon(&inst, k).unwrap().objective.max_dist;
        let (_, opt) = brute_force_placement(&inst, k).unwrap();
        cases += 1;
        within += usize::from(d <= 2.0 * opt.max_dist + 1e-9);
        optimal += usize::from((d - opt.max_dist).abs() <= 1e-9);
    }
    let elapsed = start.elapsed();
    check(
        within == cases && elapsed < Duration::from_secs(60),
        format!(
            "{within}/{cases} within 2x optimum, {optimal}/{cases} ({:.1}%) optimal, {elapsed:.2?}",
            100.0 * optimal as f64 / cases as f64
        ),
    )
}

fn zipf_trace(seed: u64, alpha: f64, universe: usize, len: usize) -> Vec<u16> {
    let weights = zipf_pmf(alpha, universe);
    let mut rng = SeededRng::new(seed);
    (0..len).map(|_| rng.weighted_index(&weights).unwrap() as u16).collect()
}

fn belady_dominance() -> Outcome {
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut cases = 0;
    for seed in 0..100u64 {
        let alpha = [0.3, 0.8, 1.2][(seed % 3) as usize];
        let trace = zipf_trace(seed, alpha, 30, 1000);
        for cap in [2, 5, 10] {
            let opt = belady(&trace, cap).misses;
            for p in Policy::ONLINE {
                cases += 1;
                let m = replay(&trace, &CacheConfig::new(p, cap)).unwrap().misses;
                if opt > m {
                    violations.push(format!("seed {seed} C={cap} {p}: {opt} > {m}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        violations.is_empty() && elapsed < Duration::from_secs(30),
        format!("{} violations in {cases} comparisons, {elapsed:.2?} {violations:?}", violations.len()),
    )
}

fn stack_monotonicity() -> Outcome {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".trace"))
        .collect();
    names.sort();
    let mut bad = Vec::new();
    for name in &names {
        let trace = read_trace(fs::read(format!("{dir}/{name}")).unwrap().as_slice()).unwrap();
        for p in [Policy::Lru, Policy::Belady] {
            let misses: Vec<u64> = (1..=20).map(|c| replay(&trace, &CacheConfig::new(p, c)).unwrap().misses).collect();
            if misses.windows(2).any(|w| w[1] > w[0]) {
                bad.push(format!("{name} {p}"));
            }
        }
    }
    check(
        bad.is_empty() && !names.is_empty(),
        format!("{} fixture traces, C = 1..20, non-monotone: {bad:?}", names.len()),
    )
}

fn experiment3_shape() -> Outcome {
    let topology = Topology::random_connected(124, 126, 0).unwrap();
    let dm = all_pairs_shortest_paths(&topology);
    let sizes: Vec<usize> = (1..=20).collect();
    let mut curve = vec![0.0; sizes.len()];
    let seeds = 10;
    for seed in 0..seeds {
        let users = generate_users(&topology, &ZipfModel::default(), seed).unwrap();
        let inst = Instance::new(&topology, &dm, &users).unwrap();
        let (placement, assignment) = optimize(&inst, 5, Strategy::Distance).unwrap();
        let base = Scenario {
            topology: topology.clone(),
            users: users.clone(),
            placement,
            assignment,
            cache_config: CacheConfig::new(Policy::Belady, 12),
            origin: None,
            master_seed: seed,
            requests_per_user: 100,
        };
        let rows = experiment_sweep(&base, &Sweep::CacheSize(sizes.clone()), Strategy::Distance).unwrap();
        for (c, row) in curve.iter_mut().zip(&rows) {
            *c += row.result.miss_ratio / seeds as f64;
        }
    }
    let (c2, c12, c20) = (curve[1], curve[11], curve[19]);
    let flat = (c12 - c20) * 100.0;
    let steep = (c2 - c12) * 100.0;
    check(
        flat < 1.0 && steep > 10.0,
        format!("miss ratio C=2 {c2:.4}, C=12 {c12:.4}, C=20 {c20:.4}; C12-C20 = {flat:.2} pp (< 1), C2-C12 = {steep:.2} pp (> 10)"),
    )
}

fn experiment2_direction() -> Outcome {
    let (mut dist, mut corr) = (0.0, 0.0);
    for seed in 0..10 {
        let (t, users) = common::two_cluster(seed);
        let dm = all_pairs_shortest_paths(&t);
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let ratio = |strategy| {
            let (placement, assignment) = optimize(&inst, 2, strategy).unwrap();
            let s = Scenario {
                topology: t.clone(),
                users: users.clone(),
                placement,
                assignment,
                cache_config: CacheConfig::new(Policy::Belady, 10),
                origin: None,
                master_seed: seed,
                requests_per_user: 100,
            };
            run_with(&s, &dm).unwrap().miss_ratio
        };
        dist += ratio(Strategy::Distance) / 10.0;
        corr += ratio(Strategy::Correlation) / 10.0;
    }
    check(
        corr <= 0.6 * dist,
        format!("mean miss ratio distance {dist:.4}, correlation {corr:.4}, ratio {:.3} (<= 0.6)", corr / dist),
    )
}

fn greedy_termination() -> Outcome {
    let mut rng = SeededRng::new(7);
    let (mut max_iter, mut non_monotone, mut optimal, mut small) = (0, 0, 0, 0);
    let cases = 500;
    for case in 0..cases as u64 {
        let n = 3 + rng.below(6);
        let m = (n - 1 + rng.below(3)).min(n * (n - 1) / 2);
        let universe = 4 + rng.below(17);
        let size = 2 + rng.below(universe - 2);
        let alpha = 0.3 + rng.next_f64();
        let model = ZipfModel::new(alpha, universe, size).unwrap();
        let t = random_weighted(n, m, case);
        let dm = all_pairs_shortest_paths(&t);
        let users = generate_users(&t, &model, case).unwrap();
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let placement = dragoon(&inst, 2).unwrap().placement;
        let a0 = closest_assignment(&inst, &placement).unwrap();
        let g = greedy_correlation(&inst, &placement, &a0).unwrap();
        max_iter = max_iter.max(g.iterations);
        let accepted: Vec<f64> =
            g.log.iter().filter(|it| it.accepted).flat_map(|it| [it.total_corr_before, it.total_corr_after]).collect();
        if accepted.windows(2).any(|w| w[1] < w[0])
            || g.log.iter().any(|it| it.accepted && it.total_corr_after <= it.total_corr_before)
        {
            non_monotone += 1;
        }
        small += 1;
        let best = common::exhaustive_best_corr(&inst, &placement);
        let got = evaluate_assignment(&inst, &g.assignment).unwrap().total_corr;
        optimal += usize::from((best - got).abs() <= 1e-9);
    }
    let share = optimal as f64 / small as f64;
    check(
        max_iter <= 100 && non_monotone == 0 && share >= 0.8,
        format!(
            "max {max_iter} iterations, {non_monotone} non-monotone logs, exhaustive optimum reached in {optimal}/{small} ({:.1}%, target >= 80%)",
            100.0 * share
        ),
    )
}

fn pareto_correctness() -> Outcome {
    let mut rng = SeededRng::new(11);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.below(60);
        let values: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.below(25) as f64 * 0.5, rng.below(25) as f64 * 0.25)).collect();
        let fast: Vec<(f64, f64)> = non_dominated_indices(&values).into_iter().map(|i| values[i]).collect();
        mismatches += usize::from(fast != common::quadratic_front(&values));
    }
    let model = ZipfModel::new(0.3, 40, 10).unwrap();
    let (mut dominated, mut sizes) = (0, Vec::new());
    for seed in 0..20 {
        let t = Topology::random_connected(24, 30, seed).unwrap();
        let dm = all_pairs_shortest_paths(&t);
        let users = generate_users(&t, &model, seed).unwrap();
        let inst = Instance::new(&t, &dm, &users).unwrap();
        let front = front_sweep(&inst, 3, 30, seed).unwrap();
        for a in front.iter() {
            for b in front.iter() {
                dominated += usize::from(cdnsim::pareto::dominates(a, b));
            }
        }
        sizes.push(front.len());
    }
    check(
        mismatches == 0 && dominated == 0,
        format!("{mismatches}/1000 filter mismatches, {dominated} dominated pairs over 20 fronts (sizes {sizes:?})"),
    )
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_cdnsim");
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let trace = format!("{fixtures}/zipf.trace");
    let commands: Vec<Vec<String>> = [
        vec!["place", "--topology", "random:60:70:1", "--k", "4"],
        vec!["assign", "--topology", "random:60:70:1", "--k", "4"],
        vec!["simulate", "--topology", "random:60:70:1", "--k", "4", "--policy", "LIRS", "--capacity", "8"],
        vec![
            "simulate",
            "--topology",
            "random:60:70:1",
            "--sweep",
            "servers",
            "--values",
            "1,3,5",
            "--strategy",
            "correlation",
        ],
        vec!["pareto", "--topology", "random:60:70:1", "--k", "4", "--steps", "20", "--simulate"],
        vec!["replay", "--trace", &trace, "--policy", "LFU", "--sweep", "cache", "--values", "2,4,8"],
    ]
    .iter()
    .map(|c| c.iter().map(|s| s.to_string()).chain(["--seed".into(), "17".into()]).collect())
    .collect();
    let root = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    let mut files = 0;
    for (i, cmd) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = root.path().join(format!("{i}-{run}"));
            let status = Command::new(bin).args(cmd).arg("--out").arg(&out).stdout(Stdio::null()).status().unwrap();
            if !status.success() {
                return Err(format!("`{}` exited with {status}", cmd.join(" ")));
            }
            let mut contents = BTreeMap::new();
            for entry in fs::read_dir(&out).unwrap() {
                let entry = entry.unwrap();
                contents.insert(entry.file_name(), fs::read(entry.path()).unwrap());
            }
            outputs.push(contents);
        }
        files += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(cmd[0].clone());
        }
    }
    check(
        differing.is_empty(),
        format!("{} commands, {files} files compared byte for byte, differing: {differing:?}", commands.len()),
    )
}

fn desk_scale() -> Outcome {
    let start = Instant::now();
    let topology = Topology::random_connected(124, 126, 0).unwrap();
    let dm = all_pairs_shortest_paths(&topology);
    let users = generate_users(&topology, &ZipfModel::default(), 1).unwrap();
    let inst = Instance::new(&topology, &dm, &users).unwrap();
    let placed = dragoon(&inst, 10).unwrap();
    let a0 = closest_assignment(&inst, &placed.placement).unwrap();
    let greedy = greedy_correlation(&inst, &placed.placement, &a0).unwrap();
    let (placement, assignment) =
        cdnsim::assignment::relocate_servers(&inst, &greedy.assignment, &placed.placement).unwrap();
    let scenario = Scenario {
        topology: topology.clone(),
        users: users.clone(),
        placement,
        assignment,
        cache_config: CacheConfig::new(Policy::Belady, 12),
        origin: None,
        master_seed: 1,
        requests_per_user: 100,
    };
    let sim = run_with(&scenario, &dm).unwrap();
    let mut front = front_sweep(&inst, 10, 50, 1).unwrap();
    cdnsim::pareto::simulate_front(&mut front, &scenario, &dm).unwrap();
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!(
            "124 nodes, 10 servers: miss ratio {:.4}, front of {} points, {elapsed:.2?}",
            sim.miss_ratio,
            front.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 spearman anchor", spearman_anchor),
        ("2 placement optimality ratio", placement_ratio),
        ("3 belady dominance", belady_dominance),
        ("4 stack monotonicity", stack_monotonicity),
        ("5 cache-size curve shape", experiment3_shape),
        ("6 correlation halves miss ratio", experiment2_direction),
        ("7 greedy termination and optimality", greedy_termination),
        ("8 pareto correctness", pareto_correctness),
        ("9 cli determinism", cli_determinism),
        ("10 desk-scale pipeline", desk_scale),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

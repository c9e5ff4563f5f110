//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) so criteria execute in order and can share
//! the expensive synthetic54 evaluation. Exits non-zero if any criterion
//! fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use psps_cli::commands::{self, Overrides};
use psps_cli::core::adp::{self, AdpConfig, ValueFunction};
use psps_cli::core::grid::{BusRecord, CostConfig, LineRecord, NetworkFile, ZoneDefaults};
use psps_cli::core::simulate::{self, Policy, PolicyKind, ScenarioRecord};
use psps_cli::core::stage::{
    EnumerationBackend, HighsBackend, StageProblem, dual_oracle, replay_constraints, solve_stage,
};
use psps_cli::core::transition::{
    CandidateModel, TransitionPattern, exact_transition_prob, expected_features, linearize, normalized_probs,
    sample_successor, stream_rng, successor_patterns,
};
use psps_cli::core::{FireSchedule, Network, SystemState, build_candidates, initial_state, load_network};
use psps_cli::output;
use rand::Rng;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> Network {
    load_network(root().join("crates/core/fixtures").join(name)).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs one criterion, appending the wall-clock limit to its verdict.
fn run(id: u32, title: &str, limit: Duration, failures: &mut u32, f: impl FnOnce() -> Outcome) {
    if !selected(id) {
        println!("SKIP [{id:>2}] {title}");
        return;
    }
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = o.pass && in_time;
    if !pass {
        *failures += 1;
    }
    let time_note = if in_time {
        String::new()
    } else {
        format!("; exceeded the {}s limit", limit.as_secs())
    };
    println!(
        "{} [{id:>2}] {title}: {}{time_note} ({:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
}

/// `PSPS_ACCEPTANCE_ONLY=1,5,7` restricts the run to the listed criteria.
fn selected(id: u32) -> bool {
    match std::env::var("PSPS_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

// ---------------------------------------------------------------------------
// Random instances

/// Radial chain `S - B0 - ... - Bk` whose last `k` segments are fire-zone lines.
fn chain(k: usize) -> Network {
    let horizon = 2;
    let bus = |id: String, sub: bool| BusRecord {
        id,
        is_substation: sub,
        v_min: 0.9,
        v_max: 1.1,
        v_ref: sub.then_some(1.0),
        demand_p: vec![if sub { 0.0 } else { 0.01 }; horizon],
        demand_q: vec![if sub { 0.0 } else { 0.002 }; horizon],
    };
    let mut buses = vec![bus("S".into(), true)];
    let mut lines = Vec::new();
    for i in 0..=k {
        buses.push(bus(format!("B{i}"), false));
        lines.push(LineRecord {
            id: format!("L{i}"),
            from: if i == 0 { "S".into() } else { format!("B{}", i - 1) },
            to: format!("B{i}"),
            r: 0.01,
            x: 0.02,
            f_max: 0.5,
            switchable: false,
            fire_zone: i > 0,
            gamma: None,
            beta: None,
            normally_open: false,
        });
    }
    Network::from_file(NetworkFile {
        name: format!("chain{k}"),
        base_mva: 1.0,
        horizon,
        costs: CostConfig::default(),
        defaults: ZoneDefaults::default(),
        buses,
        lines,
    })
    .unwrap()
}

/// Random candidate law on the fire-zone lines.
fn random_model(net: &Network, rng: &mut StdRng) -> CandidateModel {
    let mut m = CandidateModel::nominal(net);
    for &l in net.fire_lines() {
        m.gamma[l] = rng.random_range(0.5..1.0);
        m.beta[l] = rng.random_range(0.0..5.0);
    }
    m
}

/// Random state at stage 1: some fire-zone lines already failed, a few burning.
fn random_state(net: &Network, rng: &mut StdRng, t: usize) -> SystemState {
    let mut avail = vec![true; net.n_lines()];
    let mut fire = vec![false; net.n_lines()];
    for &l in net.fire_lines() {
        avail[l] = rng.random_bool(0.8);
        fire[l] = rng.random_bool(0.1);
    }
    let status = net.switchable().iter().map(|&l| avail[l] && rng.random_bool(0.7)).collect();
    SystemState::new(net, t, avail, fire, status).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria 1-4: transition law

fn c1_exact_sums_to_one() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let nets: Vec<Network> = (1..=10).map(chain).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let net = &nets[rng.random_range(0..10)];
        let model = random_model(net, &mut rng);
        let state = random_state(net, &mut rng, 1);
        let flows: Vec<f64> = (0..net.n_lines()).map(|_| rng.random_range(0.0..0.3)).collect();
        let total: f64 = successor_patterns(net, &state)
            .unwrap()
            .iter()
            .map(|p| exact_transition_prob(net, &state, &flows, p, &model).unwrap())
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    outcome(worst <= 1e-12, format!("10^4 instances, k <= 10, max |sum - 1| = {worst:.2e}"))
}

fn c2_linearization_error() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut breaches = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut exact_cases_err: f64 = 0.0;
    for i in 0..1000 {
        let k = 2 + i % 2;
        let net = chain(k);
        let model = random_model(&net, &mut rng);
        let state = SystemState::new(&net, 1, vec![true; net.n_lines()], vec![false; net.n_lines()], vec![]).unwrap();
        // Flows kept inside the unclamped range of every survival factor.
        let mut flows = vec![0.0; net.n_lines()];
        for &l in net.fire_lines() {
            flows[l] = rng.random_range(0.0..1.0) * model.gamma[l] / model.beta[l].max(1e-9) * 0.999;
            flows[l] = flows[l].min(0.5);
        }
        let mask: usize = rng.random_range(0..1 << k);
        let lines = net.fire_lines();
        let pattern = TransitionPattern {
            survive: (0..k).filter(|j| mask >> j & 1 == 1).map(|j| lines[j]).collect(),
            fail: (0..k).filter(|j| mask >> j & 1 == 0).map(|j| lines[j]).collect(),
            stay_dead: 0,
        };
        let lin = linearize(net.n_lines(), &pattern, &model);
        let exact = exact_transition_prob(&net, &state, &flows, &pattern, &model).unwrap();
        let s: f64 = lines.iter().map(|&l| model.beta[l] * flows[l]).sum();
        let err = (lin.eval(&flows) - exact).abs();
        if err > s * s + 1e-15 {
            breaches += 1;
        }
        if s > 0.0 {
            worst_ratio = worst_ratio.max(err / (s * s));
        }
        // Zero flow and single-line patterns are reproduced exactly.
        let zeros = vec![0.0; net.n_lines()];
        let at_zero = exact_transition_prob(&net, &state, &zeros, &pattern, &model).unwrap();
        exact_cases_err = exact_cases_err.max((lin.eval(&zeros) - at_zero).abs());
        let l = lines[mask % k];
        let single = TransitionPattern {
            survive: if mask & 1 == 1 { vec![l] } else { vec![] },
            fail: if mask & 1 == 1 { vec![] } else { vec![l] },
            stay_dead: 0,
        };
        let lin1 = linearize(net.n_lines(), &single, &model).eval(&flows);
        let ex1 = exact_transition_prob(&net, &state, &flows, &single, &model).unwrap();
        exact_cases_err = exact_cases_err.max((lin1 - ex1).abs());
    }
    outcome(
        breaches == 0 && exact_cases_err <= 1e-12,
        format!(
            "10^3 two/three-line patterns, {breaches} bound breaches, max err/(sum beta|f|)^2 = {worst_ratio:.3}, \
             zero-flow/single-line max err = {exact_cases_err:.1e}"
        ),
    )
}

fn c3_dual_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut index_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1e4..1e4)).collect();
        let dual = dual_oracle(&g).unwrap();
        // Vertices of the probability simplex are the unit vectors.
        let (best_vertex, best) = (0..n)
            .map(|i| {
                let q: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
                (i, q.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
            })
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        worst = worst.max((dual.alpha - best).abs());
        if dual.candidate != best_vertex + 1 {
            index_mismatch += 1;
        }
    }
    outcome(
        worst <= 1e-9 && index_mismatch == 0,
        format!("10^3 vectors, max |alpha - vertex optimum| = {worst:.1e}, index mismatches {index_mismatch}"),
    )
}

fn c4_factorized_continuation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut nets: Vec<Network> = ["toy4.json", "toy8.json", "oracle5.json"].iter().map(|f| fixture(f)).collect();
    nets.extend([4, 7, 10].map(chain));
    let mut worst_exact: f64 = 0.0;
    let mut lin_breaches = 0;
    let mut worst_lin: f64 = 0.0;
    for i in 0..600 {
        let net = &nets[i % nets.len()];
        let model = random_model(net, &mut rng);
        let state = random_state(net, &mut rng, 1);
        let status: Vec<bool> = net.fire_lines().iter().map(|&l| state.avail[l] && rng.random_bool(0.8)).collect();
        let mut flows = vec![0.0; net.n_lines()];
        for &l in net.fire_lines() {
            flows[l] = (rng.random_range(0.0..1.0) * model.gamma[l] / model.beta[l].max(1e-9)).min(0.3);
        }
        let theta: Vec<f64> = net.fire_lines().iter().map(|_| rng.random_range(-5e3..5e3)).collect();
        let factorized: f64 = expected_features(net, &status, &flows, &state.fire, &model)
            .iter()
            .zip(&theta)
            .map(|(e, th)| e * th)
            .sum();
        let patterns = successor_patterns(net, &state).unwrap();
        let value = |avail: &[bool]| -> f64 {
            net.fire_lines()
                .iter()
                .zip(&status)
                .zip(&theta)
                .filter(|((l, on), _)| **on && avail[**l])
                .map(|(_, th)| th)
                .sum()
        };
        let enumerate = |probs: &[f64]| -> f64 {
            patterns.iter().zip(probs).map(|(p, q)| q * value(&p.successor(&state.avail))).sum()
        };
        let exact = enumerate(&normalized_probs(net, &state, &patterns, &flows, &model, false).unwrap());
        let lin = enumerate(&normalized_probs(net, &state, &patterns, &flows, &model, true).unwrap());
        worst_exact = worst_exact.max((factorized - exact).abs());
        let s: f64 = net
            .fire_lines()
            .iter()
            .filter(|&&l| state.avail[l] && !state.fire[l])
            .map(|&l| model.beta[l] * flows[l])
            .sum();
        let bound = theta.iter().map(|t| t.abs()).sum::<f64>() * s * s;
        let err = (factorized - lin).abs();
        worst_lin = worst_lin.max(err);
        if err > bound + 1e-9 {
            lin_breaches += 1;
        }
    }
    outcome(
        worst_exact <= 1e-9 && lin_breaches == 0,
        format!(
            "600 states on toy fixtures and chains (k <= 10): max |factorized - exact| = {worst_exact:.1e}, \
             max |factorized - linearized| = {worst_lin:.1e}, bound breaches {lin_breaches}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 5-6: stage problem

fn random_value(net: &Network, t: usize, rng: &mut StdRng) -> ValueFunction {
    ValueFunction {
        t,
        bias: rng.random_range(-1e3..0.0),
        theta: net.fire_lines().iter().map(|_| rng.random_range(0.0..2e3)).collect(),
    }
}

fn c5_backend_agreement() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let nets = [fixture("toy4.json"), fixture("toy8.json")];
    let highs = HighsBackend::default();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..100 {
        let net = &nets[i % 2];
        let amb = build_candidates(net, 3, 0.5).unwrap();
        let t = rng.random_range(1..=net.horizon);
        let state = random_state(net, &mut rng, t);
        let vf = (t < net.horizon).then(|| random_value(net, t + 1, &mut rng));
        let problem = StageProblem::new(net, &state, vf.as_ref(), &amb, 1.0);
        match (solve_stage(&problem, &highs), solve_stage(&problem, &EnumerationBackend)) {
            (Ok(a), Ok(b)) => {
                let gap = (a.objective - b.objective).abs() / a.objective.abs().max(1.0);
                worst = worst.max(gap);
            }
            (a, b) => failures.push(format!("{}#{i}: {:?} / {:?}", net.name, a.err(), b.err())),
        }
    }
    outcome(
        worst <= 1e-5 && failures.is_empty(),
        format!("100 random toy4/toy8 states, max relative objective gap {worst:.1e}, solve failures {failures:?}"),
    )
}

fn c6_replay() -> Outcome {
    let highs = HighsBackend::default();
    let mut rng = StdRng::seed_from_u64(6);
    let cases: Vec<(Network, FireSchedule, usize)> = vec![
        (fixture("toy4.json"), FireSchedule::empty(), 250),
        (fixture("toy8.json"), FireSchedule::empty(), 300),
        (fixture("oracle5.json"), FireSchedule::empty(), 250),
        (
            fixture("synthetic54.json"),
            FireSchedule::load(root().join("crates/core/fixtures/synthetic54_fire.json")).unwrap(),
            200,
        ),
    ];
    let mut hours = 0;
    let mut violations: Vec<String> = Vec::new();
    for (net, schedule, budget) in &cases {
        let amb = build_candidates(net, 3, 0.5).unwrap();
        let model = amb.worst_case(net).clone();
        // Alternate the myopic policy with one driven by random value functions.
        let values: Vec<ValueFunction> = (2..=net.horizon).map(|t| random_value(net, t, &mut rng)).collect();
        let policies = [Policy::greedy(amb.clone()), Policy::ddu(values, amb.clone(), 1.0)];
        let mut done = 0;
        let mut scenario = 0u64;
        while done < *budget {
            let policy = &policies[scenario as usize % 2];
            let mut srng = stream_rng(66, scenario);
            let mut state = initial_state(net, schedule).unwrap();
            for t in 1..=net.horizon {
                let sol = match policy.decide(net, &state, &highs) {
                    Ok(s) => s,
                    Err(e) => {
                        violations.push(format!("{} hour {t}: {e}", net.name));
                        break;
                    }
                };
                for v in replay_constraints(net, &state, &sol) {
                    violations.push(format!("{} hour {t}: {} ({:.1e})", net.name, v.constraint, v.residual));
                }
                done += 1;
                if t < net.horizon {
                    state = sample_successor(net, schedule, &state, &sol.z_sw, &sol.abs_flows(), &model, &mut srng, 0.0)
                        .unwrap();
                }
            }
            scenario += 1;
        }
        hours += done;
    }
    outcome(
        hours >= 1000 && violations.is_empty(),
        format!(
            "{hours} rollout hours over toy4/toy8/oracle5/synthetic54, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 7-10: policies and evaluation

fn c7_adp_vs_exact_dp() -> Outcome {
    let net = fixture("oracle5.json");
    let schedule = FireSchedule::empty();
    let amb = build_candidates(&net, 2, 0.5).unwrap();
    let dp = adp::exact_dp(&net, &amb, &schedule, 1.0).unwrap();
    let backend = HighsBackend::default();
    let training = adp::train(&net, &amb, &schedule, &AdpConfig::default(), &backend).unwrap();
    let policy = adp::greedy_policy(training.values, amb.clone(), 1.0);
    let model = amb.worst_case(&net).clone();
    let evals = simulate::evaluate(&[&policy], &net, &schedule, 2000, 11, &model, &backend).unwrap();
    let adp_cost = evals[0].report.mean.total_cost;
    let dp_cost = dp.optimal_cost();
    let gap = (adp_cost - dp_cost).abs() / dp_cost.abs();
    outcome(
        gap <= 0.05 && evals[0].report.n_invalid == 0,
        format!(
            "oracle5 (3 fire-zone lines, 2 switches, T=3, N=2): exact DP cost {dp_cost:.2}, \
             ADP mean over 2000 paired scenarios {adp_cost:.2}, gap {:.2}%",
            100.0 * gap
        ),
    )
}

/// One-sided paired test that `a` has the smaller mean; returns the t statistic.
fn paired_t(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}

/// Critical value of the one-sided 95% t test for n >= 500 (the normal
/// quantile rounded up slightly for the finite degrees of freedom).
const T_CRIT_95: f64 = 1.648;

struct Synthetic {
    dir: tempfile::TempDir,
}

fn c8_synthetic54(store: &mut Option<Synthetic>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = root().join("configs/synthetic54.toml");
    let ov = Overrides {
        output_dir: Some(dir.path().to_path_buf()),
        ..Overrides::default()
    };
    let mut log = Vec::new();
    let train = commands::train(&config, &ov, &mut log);
    if let Err(e) = train {
        return outcome(false, format!("training failed: {e}"));
    }
    if let Err(e) = commands::evaluate(&config, &ov, &mut log) {
        return outcome(false, format!("evaluation failed: {e}"));
    }
    let records = output::read_archive(&dir.path().join("scenarios.jsonl")).unwrap();
    let by_policy = |k: PolicyKind| -> Vec<&ScenarioRecord> {
        let mut v: Vec<&ScenarioRecord> = records.iter().filter(|r| r.policy == k && r.is_valid()).collect();
        v.sort_by_key(|r| r.scenario_id);
        v
    };
    let (ddu, non, greedy) = (by_policy(PolicyKind::Ddu), by_policy(PolicyKind::NonDdu), by_policy(PolicyKind::Greedy));
    let n = ddu.len();
    let aligned = n >= 500
        && non.len() == n
        && greedy.len() == n
        && ddu.iter().zip(&non).zip(&greedy).all(|((a, b), c)| a.scenario_id == b.scenario_id && a.scenario_id == c.scenario_id);
    if !aligned {
        return outcome(false, format!("need >= 500 valid paired scenarios per policy, got {n}/{}/{}", non.len(), greedy.len()));
    }
    let total = |v: &[&ScenarioRecord]| v.iter().map(|r| r.total_cost()).collect::<Vec<_>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let t_non = paired_t(&total(&ddu), &total(&non));
    let t_greedy = paired_t(&total(&ddu), &total(&greedy));
    let zero = |k: PolicyKind| {
        let recs = by_policy(k);
        simulate::shedding_histogram(&recs, &[0.0, f64::INFINITY]).zero_fraction
    };
    let (z_ddu, z_greedy) = (zero(PolicyKind::Ddu), zero(PolicyKind::Greedy));
    let failed = |v: &[&ScenarioRecord]| mean(&v.iter().map(|r| r.failed_lines as f64).collect::<Vec<_>>());
    let (f_ddu, f_non) = (failed(&ddu), failed(&non));
    let pass = t_non < -T_CRIT_95 && t_greedy < -T_CRIT_95 && z_ddu > z_greedy && f_ddu <= f_non;
    *store = Some(Synthetic { dir });
    outcome(
        pass,
        format!(
            "{n} paired scenarios: mean total cost ddu {:.0} / non_ddu {:.0} / greedy {:.0} \
             (paired t vs non_ddu {t_non:.2}, vs greedy {t_greedy:.2}, need < -{T_CRIT_95}); \
             zero-shed hours ddu {z_ddu:.3} vs greedy {z_greedy:.3}; failed lines ddu {f_ddu:.2} vs non_ddu {f_non:.2}",
            mean(&total(&ddu)),
            mean(&total(&non)),
            mean(&total(&greedy)),
        ),
    )
}

fn c9_accounting(store: &Option<Synthetic>) -> Outcome {
    let Some(s) = store else {
        return outcome(false, "no evaluation records (criterion 8 did not produce any)");
    };
    let net = fixture("synthetic54.json");
    let c_ll = net.costs.c_load_loss;
    let records = output::read_archive(&s.dir.path().join("scenarios.jsonl")).unwrap();
    let mut worst_identity: f64 = 0.0;
    let mut worst_hourly: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for r in records.iter().filter(|r| r.is_valid()) {
        let t = &r.totals;
        worst_identity = worst_identity.max((r.total_cost() - (t.purchase + t.switching + t.load_loss)).abs());
        let sum = |f: fn(&psps_cli::core::stage::StageCosts) -> f64| r.hours.iter().map(|h| f(&h.costs)).sum::<f64>();
        worst_hourly = worst_hourly
            .max((sum(|c| c.purchase) - t.purchase).abs())
            .max((sum(|c| c.switching) - t.switching).abs())
            .max((sum(|c| c.load_loss) - t.load_loss).abs());
        if t.shed_mw > 0.0 {
            worst_ratio = worst_ratio.max((t.load_loss / t.shed_mw - c_ll).abs() / c_ll);
        }
    }
    // The same identity on the published metrics table.
    let mut rd = csv::Reader::from_path(s.dir.path().join("metrics.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut table_err: f64 = 0.0;
    for row in rd.records() {
        let row = row.unwrap();
        let get = |name: &str| row[col(name)].parse::<f64>().unwrap();
        for stat in ["mean", "worst5"] {
            let total = get(&format!("total_cost_{stat}"));
            let parts = get(&format!("purchase_cost_{stat}")) + get(&format!("switching_cost_{stat}")) + get(&format!("load_loss_cost_{stat}"));
            table_err = table_err.max((total - parts).abs() / total.abs().max(1.0));
            let shed = get(&format!("load_shedding_mw_{stat}"));
            if shed > 0.0 {
                table_err = table_err.max((get(&format!("load_loss_cost_{stat}")) / shed - c_ll).abs() / c_ll);
            }
        }
    }
    outcome(
        worst_identity <= 1e-9 && worst_hourly <= 1e-9 && worst_ratio <= 1e-9 && table_err <= 1e-9,
        format!(
            "{} records: max |total - parts| = {worst_identity:.1e}, max |sum of hours - total| = {worst_hourly:.1e}, \
             max relative |load loss / shedding - C_ll| = {worst_ratio:.1e}, metrics table {table_err:.1e}",
            records.len()
        ),
    )
}

fn c10_worker_invariance() -> Outcome {
    let config = root().join("configs/toy4.toml");
    let mut digests: Vec<HashMap<String, Vec<u8>>> = Vec::new();
    let _keep: Vec<tempfile::TempDir> = [1usize, 2, 4]
        .iter()
        .map(|&w| {
            let dir = tempfile::tempdir().unwrap();
            let ov = Overrides {
                output_dir: Some(dir.path().to_path_buf()),
                workers: Some(w),
                ..Overrides::default()
            };
            let mut log = Vec::new();
            commands::train(&config, &ov, &mut log).unwrap();
            commands::evaluate(&config, &ov, &mut log).unwrap();
            let mut files = HashMap::new();
            for entry in std::fs::read_dir(dir.path()).unwrap() {
                let p = entry.unwrap().path();
                let name = p.file_name().unwrap().to_string_lossy().to_string();
                // The resolved config records the worker count and directory.
                if name != "resolved_config.toml" {
                    files.insert(name, std::fs::read(&p).unwrap());
                }
            }
            digests.push(files);
            dir
        })
        .collect();
    let names: Vec<&String> = {
        let mut v: Vec<&String> = digests[0].keys().collect();
        v.sort();
        v
    };
    let differing: Vec<&&String> = names.iter().filter(|n| digests.iter().any(|d| d.get(**n) != digests[0].get(**n))).collect();
    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    outcome(
        differing.is_empty() && csvs >= 4,
        format!("toy4 train + evaluate with 1, 2, 4 workers: {} artifacts ({csvs} CSV) compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes
    // "acceptance" skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut failures = 0;
    let secs = Duration::from_secs;
    run(1, "exact successor probabilities sum to one", secs(30), &mut failures, c1_exact_sums_to_one);
    run(2, "linearization error within (sum beta|f|)^2", secs(10), &mut failures, c2_linearization_error);
    run(3, "dual oracle equals simplex vertex enumeration", secs(5), &mut failures, c3_dual_oracle);
    run(4, "factorized continuation equals enumeration", secs(60), &mut failures, c4_factorized_continuation);
    run(5, "HiGHS and enumeration backends agree", secs(300), &mut failures, c5_backend_agreement);
    run(6, "rollout hours replay feasible and radial", secs(600), &mut failures, c6_replay);
    run(7, "ADP within 5% of exact DP on the oracle instance", secs(600), &mut failures, c7_adp_vs_exact_dp);
    let mut synthetic = None;
    run(8, "synthetic54 DDU beats baselines", secs(3600), &mut failures, || c8_synthetic54(&mut synthetic));
    run(9, "cost accounting identities", secs(60), &mut failures, || c9_accounting(&synthetic));
    run(10, "outputs identical for any worker count", secs(600), &mut failures, c10_worker_invariance);
    let ran = (1..=10).filter(|&i| selected(i)).count() as u32;
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

//! Monte Carlo policy evaluation: seeded rollouts, paired across policies,
//! and the cost, failure and load-shedding statistics built from them.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::adp::ValueFunction;
use crate::grid::{FireSchedule, Network, SystemState, initial_state};
use crate::par;
use crate::stage::{ContinuationMode, DispatchSolution, SolverBackend, StageCosts, StageError, StageProblem, solve_stage};
use crate::transition::{AmbiguitySet, CandidateModel, sample_successor, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Robust planning with flow-dependent outage probabilities.
    Ddu,
    /// Robust planning that ignores the dependence of outages on flow.
    NonDdu,
    /// Cost-minimizing hour by hour, no look-ahead.
    Greedy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Ddu, PolicyKind::NonDdu, PolicyKind::Greedy];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ddu => "ddu",
            PolicyKind::NonDdu => "non_ddu",
            PolicyKind::Greedy => "greedy",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddu" => Ok(Self::Ddu),
            "non_ddu" | "non-ddu" => Ok(Self::NonDdu),
            "greedy" => Ok(Self::Greedy),
            other => Err(format!("unknown policy {other:?} (expected ddu, non_ddu or greedy)")),
        }
    }
}

/// A decision rule. Stage decisions are memoized per state: the backend is
/// deterministic, so a cached decision is exactly what a fresh solve would
/// return. A policy must only be used with one network and one backend.
pub struct Policy {
    pub kind: PolicyKind,
    /// Value functions for stages `2..=T`; empty for the greedy policy.
    pub values: Vec<ValueFunction>,
    /// Candidate laws used at decision time.
    pub ambiguity: AmbiguitySet,
    pub lambda: f64,
    pub continuation: ContinuationMode,
    cache: Mutex<HashMap<SystemState, Arc<DispatchSolution>>>,
}

impl Clone for Policy {
    fn clone(&self) -> Self {
        Self::new(self.kind, self.values.clone(), self.ambiguity.clone(), self.lambda).with_continuation(self.continuation)
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("kind", &self.kind)
            .field("values", &self.values)
            .field("candidates", &self.ambiguity.len())
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl Policy {
    fn new(kind: PolicyKind, values: Vec<ValueFunction>, ambiguity: AmbiguitySet, lambda: f64) -> Self {
        Self {
            kind,
            values,
            ambiguity,
            lambda,
            continuation: ContinuationMode::Factorized,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn ddu(values: Vec<ValueFunction>, ambiguity: AmbiguitySet, lambda: f64) -> Self {
        Self::new(PolicyKind::Ddu, values, ambiguity, lambda)
    }

    /// Plans with every candidate's flow sensitivity removed; `values`
    /// should come from training on the same flow-blind set.
    pub fn non_ddu(values: Vec<ValueFunction>, ambiguity: &AmbiguitySet, lambda: f64) -> Self {
        Self::new(PolicyKind::NonDdu, values, ambiguity.without_flow_dependence(), lambda)
    }

    pub fn greedy(ambiguity: AmbiguitySet) -> Self {
        Self::new(PolicyKind::Greedy, Vec::new(), ambiguity, 1.0)
    }

    pub fn with_continuation(mut self, mode: ContinuationMode) -> Self {
        self.continuation = mode;
        self
    }

    /// Value function consulted when deciding at stage `t`.
    pub fn value_for(&self, t: usize) -> Option<&ValueFunction> {
        if self.kind == PolicyKind::Greedy {
            return None;
        }
        self.values.iter().find(|v| v.t == t + 1)
    }

    pub fn decide(
        &self,
        net: &Network,
        state: &SystemState,
        backend: &dyn SolverBackend,
    ) -> Result<Arc<DispatchSolution>, StageError> {
        if let Some(hit) = self.cache.lock().expect("policy cache poisoned").get(state) {
            return Ok(hit.clone());
        }
        let value = self.value_for(state.t);
        if value.is_none() && self.kind != PolicyKind::Greedy && state.t < net.horizon {
            return Err(StageError::MissingWeights {
                t: state.t + 1,
                got: 0,
                expected: net.fire_lines().len(),
            });
        }
        let mut problem = StageProblem::new(net, state, value, &self.ambiguity, self.lambda);
        problem.continuation = self.continuation;
        let sol = Arc::new(solve_stage(&problem, backend)?);
        self.cache
            .lock()
            .expect("policy cache poisoned")
            .insert(state.clone(), sol.clone());
        Ok(sol)
    }
}

/// One simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub t: usize,
    /// Burning lines.
    pub fire: Vec<String>,
    /// Line availability entering the hour.
    pub avail: Vec<bool>,
    pub switched_on: Vec<String>,
    pub switched_off: Vec<String>,
    pub energized: Vec<String>,
    pub isolated_buses: Vec<String>,
    /// Lines that fail at the end of this hour.
    pub failed: Vec<String>,
    pub abs_flows: Vec<f64>,
    pub costs: StageCosts,
    /// Active-power shedding in MW.
    pub shed_p_mw: f64,
    pub demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub policy: PolicyKind,
    pub scenario_id: u64,
    pub seed: u64,
    pub hours: Vec<HourRecord>,
    pub totals: StageCosts,
    pub failed_lines: usize,
    /// Largest hourly active shedding as a percentage of that hour's demand.
    pub max_shed_pct: f64,
    /// Set when a stage solve failed; such scenarios are excluded from metrics.
    pub error: Option<String>,
}

impl ScenarioRecord {
    pub fn total_cost(&self) -> f64 {
        self.totals.total()
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

fn ids(net: &Network, mask: impl Iterator<Item = (usize, bool)>) -> Vec<String> {
    mask.filter(|(_, b)| *b).map(|(l, _)| net.lines[l].id.clone()).collect()
}

/// Simulates one scenario. Failures are drawn without exploration from
/// `eval_model` given the flows the policy actually chose; the random
/// stream depends only on `(seed, scenario_id)`.
pub fn rollout(
    policy: &Policy,
    net: &Network,
    schedule: &FireSchedule,
    seed: u64,
    scenario_id: u64,
    eval_model: &CandidateModel,
    backend: &dyn SolverBackend,
) -> ScenarioRecord {
    let mut record = ScenarioRecord {
        policy: policy.kind,
        scenario_id,
        seed,
        hours: Vec::with_capacity(net.horizon),
        totals: StageCosts::default(),
        failed_lines: 0,
        max_shed_pct: 0.0,
        error: None,
    };
    if let Err(e) = rollout_into(&mut record, policy, net, schedule, eval_model, backend) {
        record.error = Some(e);
    }
    record
}

fn rollout_into(
    record: &mut ScenarioRecord,
    policy: &Policy,
    net: &Network,
    schedule: &FireSchedule,
    eval_model: &CandidateModel,
    backend: &dyn SolverBackend,
) -> Result<(), String> {
    let mut rng = stream_rng(record.seed, record.scenario_id);
    let mut state = initial_state(net, schedule).map_err(|e| e.to_string())?;
    for t in 1..=net.horizon {
        let sol = policy
            .decide(net, &state, backend)
            .map_err(|e| format!("hour {t}: {e}"))?;
        let costs = sol.costs(net);
        let shed_p: f64 = sol.dp_plus.iter().chain(&sol.dp_minus).sum::<f64>() * net.base_mva;
        let demand = state.total_demand_p() * net.base_mva;
        let switches = net.switchable().iter().enumerate();
        let mut hour = HourRecord {
            t,
            fire: ids(net, state.fire.iter().copied().enumerate()),
            avail: state.avail.clone(),
            switched_on: ids(net, switches.clone().map(|(k, &l)| (l, sol.y_sw[k] && sol.z_sw[k]))),
            switched_off: ids(net, switches.map(|(k, &l)| (l, sol.y_sw[k] && !sol.z_sw[k]))),
            energized: ids(net, sol.w_op.iter().copied().enumerate()),
            isolated_buses: net
                .buses
                .iter()
                .zip(&sol.iota)
                .filter(|(_, i)| **i)
                .map(|(b, _)| b.id.clone())
                .collect(),
            failed: Vec::new(),
            abs_flows: sol.abs_flows(),
            costs,
            shed_p_mw: shed_p,
            demand_mw: demand,
        };
        if t < net.horizon {
            let next = sample_successor(net, schedule, &state, &sol.z_sw, &hour.abs_flows, eval_model, &mut rng, 0.0)
                .map_err(|e| e.to_string())?;
            hour.failed = ids(net, (0..net.n_lines()).map(|l| (l, state.avail[l] && !next.avail[l])));
            state = next;
        }
        record.totals.purchase += costs.purchase;
        record.totals.switching += costs.switching;
        record.totals.load_loss += costs.load_loss;
        record.totals.shed_mw += costs.shed_mw;
        record.failed_lines += hour.failed.len();
        if demand > 0.0 {
            record.max_shed_pct = record.max_shed_pct.max(100.0 * shed_p / demand);
        }
        record.hours.push(hour);
    }
    Ok(())
}

/// Table-style statistics of one policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub total_cost: f64,
    pub purchase_cost: f64,
    pub switching_cost: f64,
    pub load_loss_cost: f64,
    pub failed_lines: f64,
    /// Total shedding over the horizon, MW.
    pub load_shedding_mw: f64,
    /// Highest hourly shedding, percent of demand.
    pub max_hourly_shed_pct: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 7] = [
        "total_cost",
        "purchase_cost",
        "switching_cost",
        "load_loss_cost",
        "failed_lines",
        "load_shedding_mw",
        "max_hourly_shed_pct",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.total_cost,
            self.purchase_cost,
            self.switching_cost,
            self.load_loss_cost,
            self.failed_lines,
            self.load_shedding_mw,
            self.max_hourly_shed_pct,
        ]
    }

    fn mean_of(records: &[&ScenarioRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mut m = MetricSet::default();
        for r in records {
            m.purchase_cost += r.totals.purchase / n;
            m.switching_cost += r.totals.switching / n;
            m.load_loss_cost += r.totals.load_loss / n;
            m.failed_lines += r.failed_lines as f64 / n;
            m.load_shedding_mw += r.totals.shed_mw / n;
            m.max_hourly_shed_pct += r.max_shed_pct / n;
        }
        m.total_cost = m.purchase_cost + m.switching_cost + m.load_loss_cost;
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges in MW; bin `i` covers `[edges[i], edges[i+1])`, the last
    /// bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Share of hours with no shedding.
    pub zero_fraction: f64,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: PolicyKind,
    pub n_scenarios: usize,
    pub n_invalid: usize,
    pub mean: MetricSet,
    /// Averages over the ceil(5%) highest-total-cost scenarios.
    pub worst5: MetricSet,
    pub zero_shed_fraction: f64,
}

/// Mean of the `ceil(0.05 n)` largest values.
pub fn worst_tail_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((0.05 * v.len() as f64).ceil() as usize).max(1).min(v.len());
    v[..k].iter().sum::<f64>() / k as f64
}

/// Aggregates valid records; ties in total cost are broken by scenario id so
/// the tail set does not depend on record order.
pub fn metrics(policy: PolicyKind, records: &[ScenarioRecord]) -> MetricsReport {
    let valid: Vec<&ScenarioRecord> = records.iter().filter(|r| r.is_valid()).collect();
    let mut ranked = valid.clone();
    ranked.sort_by(|a, b| {
        b.total_cost()
            .total_cmp(&a.total_cost())
            .then(a.scenario_id.cmp(&b.scenario_id))
    });
    let k = ((0.05 * ranked.len() as f64).ceil() as usize).min(ranked.len());
    let hist = shedding_histogram(&valid, &[0.0, f64::INFINITY]);
    MetricsReport {
        policy,
        n_scenarios: valid.len(),
        n_invalid: records.len() - valid.len(),
        mean: MetricSet::mean_of(&valid),
        worst5: MetricSet::mean_of(&ranked[..k]),
        zero_shed_fraction: hist.zero_fraction,
    }
}

pub const ZERO_SHED_MW: f64 = 1e-9;

/// Histogram of hourly shedding (MW) over the given bin edges.
pub fn shedding_histogram(records: &[&ScenarioRecord], edges: &[f64]) -> Histogram {
    let mut counts = vec![0; edges.len().saturating_sub(1)];
    let mut zero = 0;
    let mut hours = 0;
    for r in records {
        for h in &r.hours {
            hours += 1;
            let s = h.costs.shed_mw;
            if s < ZERO_SHED_MW {
                zero += 1;
            }
            let last = counts.len().saturating_sub(1);
            if let Some(i) = (0..counts.len()).find(|&i| s >= edges[i] && (s < edges[i + 1] || (i == last && s <= edges[i + 1]))) {
                counts[i] += 1;
            }
        }
    }
    Histogram {
        edges: edges.to_vec(),
        counts,
        zero_fraction: if hours == 0 { 1.0 } else { zero as f64 / hours as f64 },
        hours,
    }
}

/// `n_bins` equal-width edges from zero to the largest hourly shedding.
pub fn histogram_edges(records: &[&ScenarioRecord], n_bins: usize) -> Vec<f64> {
    let max = records
        .iter()
        .flat_map(|r| r.hours.iter().map(|h| h.costs.shed_mw))
        .fold(0.0, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };
    (0..=n_bins.max(1)).map(|i| top * i as f64 / n_bins.max(1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub policy: PolicyKind,
    pub records: Vec<ScenarioRecord>,
    pub report: MetricsReport,
}

pub const MIN_SCENARIOS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error("need at least {MIN_SCENARIOS} scenarios for a non-empty 5% tail, got {0}")]
    TooFewScenarios(usize),
}

/// Rolls out every policy on scenarios `0..n_scenarios`. Scenario `i` uses
/// the same random stream for every policy (paired comparison).
pub fn evaluate(
    policies: &[&Policy],
    net: &Network,
    schedule: &FireSchedule,
    n_scenarios: usize,
    master_seed: u64,
    eval_model: &CandidateModel,
    backend: &dyn SolverBackend,
) -> Result<Vec<Evaluation>, EvaluateError> {
    if n_scenarios < MIN_SCENARIOS {
        return Err(EvaluateError::TooFewScenarios(n_scenarios));
    }
    let jobs: Vec<(usize, u64)> = (0..policies.len())
        .flat_map(|p| (0..n_scenarios as u64).map(move |s| (p, s)))
        .collect();
    let mut records = par::map(&jobs, |&(p, s)| rollout(policies[p], net, schedule, master_seed, s, eval_model, backend))
        .into_iter();
    Ok(policies
        .iter()
        .map(|p| {
            let recs: Vec<ScenarioRecord> = records.by_ref().take(n_scenarios).collect();
            let report = metrics(p.kind, &recs);
            Evaluation {
                policy: p.kind,
                records: recs,
                report,
            }
        })
        .collect())
}

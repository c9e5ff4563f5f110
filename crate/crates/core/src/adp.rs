//! Value-function training with post-decision features and ridge
//! regression, plus an exact backward-induction oracle for tiny instances.
//!
//! The value of being at stage `t` is approximated as
//! `bias_t + sum_l theta_{t,l} phi_l`, where `phi_l` is one when fire-zone
//! line `l` entered the stage both available and energized. The stage-`t-1`
//! decision sees that value through the expected features, which is exactly
//! the continuation that [`crate::stage`] builds.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FireSchedule, GridError, Network, SystemState, initial_state};
use crate::par;
use crate::simulate::Policy;
use crate::stage::{ContinuationMode, SolverBackend, StageError, StageProblem, solve_with_switches};
use crate::transition::{
    AmbiguitySet, TransitionError, exact_transition_prob, sample_successor, stream_rng, successor_patterns,
};

#[derive(Debug, Error)]
pub enum AdpError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("instance too large for exact dynamic programming: {0}")]
    OracleTooLarge(String),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// Post-decision line-status features over the fire-zone lines.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub phi: Vec<bool>,
}

impl FeatureVector {
    pub fn as_f64(&self) -> Vec<f64> {
        self.phi.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }
}

/// `phi_l = 1` iff fire-zone line `l` is available and energized.
/// `status` is the per-line operational flag of the decision in force.
pub fn features(net: &Network, avail: &[bool], status: &[bool]) -> FeatureVector {
    FeatureVector {
        phi: net.fire_lines().iter().map(|&l| avail[l] && status[l]).collect(),
    }
}

/// Linear approximation of the value of entering stage `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub t: usize,
    /// Intercept; absorbs the part of the value no line status explains.
    pub bias: f64,
    /// One weight per fire-zone line, in network fire-line order.
    pub theta: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(t: usize, k: usize) -> Self {
        Self {
            t,
            bias: 0.0,
            theta: vec![0.0; k],
        }
    }

    pub fn eval(&self, phi: &FeatureVector) -> f64 {
        self.bias
            + self
                .theta
                .iter()
                .zip(&phi.phi)
                .filter(|(_, p)| **p)
                .map(|(th, _)| th)
                .sum::<f64>()
    }

    fn distance(&self, other: &Self) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).abs())
            .fold((self.bias - other.bias).abs(), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdpConfig {
    pub n_outer: usize,
    pub m_traj: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: f64,
    pub tol: f64,
    pub seed: u64,
    /// Share of trajectories (after the first) that start from a random
    /// availability pattern instead of the all-available state.
    pub random_start: f64,
    pub continuation: ContinuationMode,
}

impl Default for AdpConfig {
    fn default() -> Self {
        Self {
            n_outer: 50,
            m_traj: 20,
            epsilon: 0.3,
            eta: 1.0,
            lambda: 1.0,
            tol: 1e-3,
            seed: 2024,
            random_start: 0.5,
            continuation: ContinuationMode::Factorized,
        }
    }
}

impl AdpConfig {
    pub fn validate(&self) -> Result<(), AdpError> {
        let bad = |m: &str| Err(AdpError::Config(m.into()));
        if self.n_outer == 0 {
            return bad("n_outer must be at least 1");
        }
        if self.m_traj == 0 {
            return bad("m_traj must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be positive");
        }
        if !(0.0..=1.0).contains(&self.random_start) {
            return bad("random_start must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Ridge solution `(X'X + eta I)^-1 X'y` without an intercept.
pub fn ridge_update(samples: &[(FeatureVector, f64)], eta: f64) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|(phi, _)| phi.as_f64()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, v)| *v).collect();
    ridge_dense(&rows, &y, eta)
}

fn ridge_dense(rows: &[Vec<f64>], y: &[f64], eta: f64) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 {
        return Vec::new();
    }
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let gram = x.transpose() * &x + DMatrix::identity(k, k) * eta;
    let rhs = x.transpose() * yv;
    let chol = gram.cholesky().expect("ridge normal matrix is positive definite");
    chol.solve(&rhs).iter().copied().collect()
}

/// Ridge fit with an unpenalized intercept (features and targets centered).
pub fn fit_value(t: usize, samples: &[(FeatureVector, f64)], eta: f64) -> ValueFunction {
    let n = samples.len() as f64;
    let k = samples.first().map_or(0, |(p, _)| p.phi.len());
    let mut mean_x = vec![0.0; k];
    let mut mean_y = 0.0;
    for (phi, v) in samples {
        for (m, x) in mean_x.iter_mut().zip(phi.as_f64()) {
            *m += x / n;
        }
        mean_y += v / n;
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|(phi, _)| phi.as_f64().iter().zip(&mean_x).map(|(x, m)| x - m).collect())
        .collect();
    let y: Vec<f64> = samples.iter().map(|(_, v)| v - mean_y).collect();
    let theta = ridge_dense(&rows, &y, eta);
    let bias = mean_y - theta.iter().zip(&mean_x).map(|(a, b)| a * b).sum::<f64>();
    ValueFunction { t, bias, theta }
}

/// Per-iteration training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sup-norm change of the weights after each outer iteration.
    pub deltas: Vec<f64>,
    /// Mean sampled value of the first fitted stage, per iteration.
    pub mean_targets: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Training {
    /// Value functions for stages `2..=T`, in stage order.
    pub values: Vec<ValueFunction>,
    pub report: TrainReport,
}

/// Random availability over the fire-zone lines, switches at their normal
/// status where the line survives. Draws a fixed number of uniforms.
fn training_start<R: Rng>(
    net: &Network,
    schedule: &FireSchedule,
    rng: &mut R,
    first: bool,
    random_start: f64,
) -> Result<SystemState, AdpError> {
    let coin = rng.random::<f64>();
    let draws: Vec<f64> = net.fire_lines().iter().map(|_| rng.random::<f64>()).collect();
    let base = initial_state(net, schedule)?;
    if first || coin >= random_start {
        return Ok(base);
    }
    let mut avail = base.avail.clone();
    for (&l, u) in net.fire_lines().iter().zip(draws) {
        avail[l] = u < 0.5;
    }
    let status = net
        .switchable()
        .iter()
        .map(|&l| !net.lines[l].normally_open && avail[l])
        .collect();
    Ok(SystemState::new(net, 1, avail, base.fire.clone(), status)?)
}

/// Stage samples `(t, features, value)` gathered along one trajectory.
type Samples = Vec<(usize, FeatureVector, f64)>;

#[allow(clippy::too_many_arguments)]
fn trajectory(
    net: &Network,
    schedule: &FireSchedule,
    policy: &Policy,
    sample_model: &crate::transition::CandidateModel,
    config: &AdpConfig,
    index: usize,
    backend: &dyn SolverBackend,
) -> Result<Samples, AdpError> {
    let mut rng = stream_rng(config.seed, index as u64);
    let mut state = training_start(net, schedule, &mut rng, index == 0, config.random_start)?;
    let mut prev_status: Option<Vec<bool>> = None;
    let mut out = Vec::with_capacity(net.horizon);
    for t in 1..=net.horizon {
        let sol = policy.decide(net, &state, backend)?;
        if let Some(prev) = &prev_status {
            out.push((t, features(net, &state.avail, prev), sol.objective));
        }
        if t < net.horizon {
            state = sample_successor(
                net,
                schedule,
                &state,
                &sol.z_sw,
                &sol.abs_flows(),
                sample_model,
                &mut rng,
                config.epsilon,
            )?;
        }
        prev_status = Some(sol.w_op.clone());
    }
    Ok(out)
}

/// Fits one value function per stage `2..=T` by repeated simulation.
///
/// Every outer iteration replays the same `m_traj` random streams under the
/// current weights (first iteration: zero weights, i.e. myopic decisions),
/// records each visited stage's optimal robust value against the features
/// the previous decision left behind, and refits all stages. Outcomes are
/// drawn from the worst-case candidate. Training stops when no weight moves
/// by more than `tol` or after `n_outer` iterations.
pub fn train(
    net: &Network,
    ambiguity: &AmbiguitySet,
    schedule: &FireSchedule,
    config: &AdpConfig,
    backend: &dyn SolverBackend,
) -> Result<Training, AdpError> {
    config.validate()?;
    let horizon = net.horizon;
    if horizon < 2 {
        return Err(AdpError::Config("training needs a horizon of at least 2".into()));
    }
    schedule.validate(net, horizon)?;
    let k = net.fire_lines().len();
    let sample_model = ambiguity.worst_case(net).clone();
    let mut values: Vec<ValueFunction> = (2..=horizon).map(|t| ValueFunction::zeros(t, k)).collect();
    let mut report = TrainReport {
        deltas: Vec::new(),
        mean_targets: Vec::new(),
        converged: false,
        iterations: 0,
    };
    let indices: Vec<usize> = (0..config.m_traj).collect();
    for _ in 0..config.n_outer {
        let policy = Policy::ddu(values.clone(), ambiguity.clone(), config.lambda).with_continuation(config.continuation);
        let runs = par::map(&indices, |&m| trajectory(net, schedule, &policy, &sample_model, config, m, backend));
        let mut buffers: Vec<Vec<(FeatureVector, f64)>> = vec![Vec::new(); horizon - 1];
        for run in runs {
            for (t, phi, v) in run? {
                buffers[t - 2].push((phi, v));
            }
        }
        let fitted: Vec<ValueFunction> = buffers
            .iter()
            .enumerate()
            .map(|(i, buf)| fit_value(i + 2, buf, config.eta))
            .collect();
        let delta = fitted.iter().zip(&values).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
        let first = &buffers[0];
        report.mean_targets.push(first.iter().map(|(_, v)| v).sum::<f64>() / first.len() as f64);
        report.deltas.push(delta);
        report.iterations += 1;
        values = fitted;
        if delta < config.tol {
            report.converged = true;
            break;
        }
    }
    Ok(Training { values, report })
}

/// Policy acting greedily with respect to trained values.
pub fn greedy_policy(values: Vec<ValueFunction>, ambiguity: AmbiguitySet, lambda: f64) -> Policy {
    Policy::ddu(values, ambiguity, lambda)
}

// ---------------------------------------------------------------------------
// Exact dynamic programming

pub const ORACLE_MAX_FIRE_LINES: usize = 4;
pub const ORACLE_MAX_SWITCHES: usize = 3;
pub const ORACLE_MAX_HORIZON: usize = 4;

/// Backward-induction solution over every reachable state.
#[derive(Debug, Clone)]
pub struct ExactDp {
    pub initial: SystemState,
    /// Robust optimal value (negative cost) of each reachable state.
    pub values: HashMap<SystemState, f64>,
    /// Optimal switch positions per state.
    pub actions: HashMap<SystemState, Vec<bool>>,
}

impl ExactDp {
    pub fn initial_value(&self) -> f64 {
        self.values[&self.initial]
    }

    /// Expected cost of the optimal robust policy from the initial state.
    pub fn optimal_cost(&self) -> f64 {
        -self.initial_value()
    }
}

struct DpContext<'a> {
    net: &'a Network,
    schedule: &'a FireSchedule,
    ambiguity: &'a AmbiguitySet,
    lambda: f64,
    dp: ExactDp,
}

impl DpContext<'_> {
    fn value(&mut self, state: &SystemState) -> Result<f64, AdpError> {
        if let Some(&v) = self.dp.values.get(state) {
            return Ok(v);
        }
        let net = self.net;
        let n_sw = net.switchable().len();
        let mut best: Option<(f64, Vec<bool>)> = None;
        for mask in 0..1usize << n_sw {
            let z: Vec<bool> = (0..n_sw).map(|k| mask >> k & 1 == 1).collect();
            let problem = StageProblem::new(net, state, None, self.ambiguity, self.lambda);
            let Some(sol) = solve_with_switches(&problem, &z)? else {
                continue;
            };
            let mut q = sol.reward(net);
            if state.t < net.horizon {
                q += self.lambda * self.worst_expectation(state, &sol)?;
            }
            if best.as_ref().is_none_or(|(b, _)| q > *b + 1e-9) {
                best = Some((q, z));
            }
        }
        let (v, z) = best.ok_or_else(|| {
            StageError::Solve {
                t: state.t,
                source: crate::milp::SolveError::Infeasible(vec!["no radial switch configuration".into()]),
            }
        })?;
        self.dp.values.insert(state.clone(), v);
        self.dp.actions.insert(state.clone(), z);
        Ok(v)
    }

    fn worst_expectation(
        &mut self,
        state: &SystemState,
        sol: &crate::stage::DispatchSolution,
    ) -> Result<f64, AdpError> {
        let net = self.net;
        let flows = sol.abs_flows();
        let t = state.t + 1;
        let fire = self.schedule.mask(net, t);
        let mut successors = Vec::new();
        for pattern in successor_patterns(net, state)? {
            let avail = pattern.successor(&state.avail);
            let status = net
                .switchable()
                .iter()
                .zip(&sol.z_sw)
                .map(|(&l, &z)| z && avail[l])
                .collect();
            let next = SystemState::new(net, t, avail, fire.clone(), status)?;
            let v = self.value(&next)?;
            successors.push((pattern, v));
        }
        let mut worst = f64::INFINITY;
        for cand in &self.ambiguity.candidates {
            let mut e = 0.0;
            for (pattern, v) in &successors {
                e += exact_transition_prob(net, state, &flows, pattern, cand)? * v;
            }
            worst = worst.min(e);
        }
        Ok(worst)
    }
}

/// Exact robust values by exhaustive recursion over availability and switch
/// states. For each switch choice the dispatch is the cost-optimal one on
/// the resulting topology.
pub fn exact_dp(
    net: &Network,
    ambiguity: &AmbiguitySet,
    schedule: &FireSchedule,
    lambda: f64,
) -> Result<ExactDp, AdpError> {
    let too_large = |m: String| Err(AdpError::OracleTooLarge(m));
    if net.fire_lines().len() > ORACLE_MAX_FIRE_LINES {
        return too_large(format!("{} fire-zone lines (max {ORACLE_MAX_FIRE_LINES})", net.fire_lines().len()));
    }
    if net.switchable().len() > ORACLE_MAX_SWITCHES {
        return too_large(format!("{} switchable lines (max {ORACLE_MAX_SWITCHES})", net.switchable().len()));
    }
    if net.horizon > ORACLE_MAX_HORIZON {
        return too_large(format!("horizon {} (max {ORACLE_MAX_HORIZON})", net.horizon));
    }
    let initial = initial_state(net, schedule)?;
    let mut ctx = DpContext {
        net,
        schedule,
        ambiguity,
        lambda,
        dp: ExactDp {
            initial: initial.clone(),
            values: HashMap::new(),
            actions: HashMap::new(),
        },
    };
    ctx.value(&initial)?;
    Ok(ctx.dp)
}

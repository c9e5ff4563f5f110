//! Single-stage robust dispatch and reconfiguration problem.
//!
//! Each hour the operator picks switch positions and an operating point on
//! the resulting radial network. The objective is the stage reward (minus
//! energy, switching and imbalance costs) plus `alpha`, the worst-case
//! discounted continuation value over the candidate transition laws. Each
//! candidate contributes one upper bound on `alpha`, which is the dual form
//! of nature's choice over the mixture simplex.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adp::ValueFunction;
use crate::grid::{Network, SystemState};
use crate::milp::{self, Cmp, HighsOptions, MilpSolution, Model, SolveError, VarId};
use crate::transition::{AmbiguitySet, CandidateModel, TransitionError, linearize, successor_patterns};

pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StageError {
    #[error("value function for stage {t} has {got} weights, expected {expected}")]
    MissingWeights { t: usize, got: usize, expected: usize },
    #[error("stage {t} solve failed: {source}")]
    Solve {
        t: usize,
        #[source]
        source: SolveError,
    },
    #[error("continuation vector is empty")]
    EmptyContinuation,
    #[error("discount factor {0} outside (0, 1]")]
    Discount(f64),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// How the continuation bound of each candidate is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationMode {
    /// Per-line expected features, exact for independent failures.
    #[default]
    Factorized,
    /// Sum over every successor of the normalized first-order transition
    /// probabilities (at most 12 uncertain lines).
    Enumerated,
}

#[derive(Debug, Clone)]
pub struct StageProblem<'a> {
    pub net: &'a Network,
    pub state: &'a SystemState,
    /// Value function of the next stage; `None` at the last stage or for a
    /// myopic decision, which pins `alpha` to zero.
    pub value_next: Option<&'a ValueFunction>,
    pub ambiguity: &'a AmbiguitySet,
    pub lambda: f64,
    pub big_m_rad: f64,
    pub continuation: ContinuationMode,
}

impl<'a> StageProblem<'a> {
    pub fn new(
        net: &'a Network,
        state: &'a SystemState,
        value_next: Option<&'a ValueFunction>,
        ambiguity: &'a AmbiguitySet,
        lambda: f64,
    ) -> Self {
        Self {
            net,
            state,
            value_next,
            ambiguity,
            lambda,
            big_m_rad: net.n_buses() as f64,
            continuation: ContinuationMode::Factorized,
        }
    }
}

/// Variable handles of a built stage model.
#[derive(Debug, Clone)]
pub struct StageIndex {
    pub fp_plus: Vec<VarId>,
    pub fp_minus: Vec<VarId>,
    pub fq: Vec<VarId>,
    pub d: Vec<VarId>,
    pub w: Vec<VarId>,
    pub rad_fwd: Vec<VarId>,
    pub rad_bwd: Vec<VarId>,
    pub u: Vec<Option<VarId>>,
    pub y: Vec<VarId>,
    pub z: Vec<VarId>,
    pub v: Vec<VarId>,
    pub iota: Vec<VarId>,
    pub dp_plus: Vec<VarId>,
    pub dp_minus: Vec<VarId>,
    pub dq_plus: Vec<VarId>,
    pub dq_minus: Vec<VarId>,
    pub p_sub: Vec<Option<VarId>>,
    pub q_sub: Vec<Option<VarId>>,
    pub rad_root: Vec<Option<VarId>>,
    pub alpha: VarId,
}

pub struct StageModel<'a> {
    pub problem: &'a StageProblem<'a>,
    pub model: Model,
    pub idx: StageIndex,
    /// Per-candidate affine continuation: constant plus coefficients on
    /// `w` and `u` of each fire-zone line (fire-line order).
    pub continuation: Vec<Continuation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub constant: f64,
    pub on_status: Vec<f64>,
    pub on_flow: Vec<f64>,
}

impl Continuation {
    pub fn eval(&self, net: &Network, w_op: &[bool], abs_flows: &[f64]) -> f64 {
        self.constant
            + net
                .fire_lines()
                .iter()
                .enumerate()
                .map(|(j, &l)| {
                    if w_op[l] {
                        self.on_status[j] + self.on_flow[j] * abs_flows[l]
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
    }
}

/// One stage action with its realized costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub t: usize,
    /// Per switchable line: a switching operation happened.
    pub y_sw: Vec<bool>,
    /// Per switchable line: status after switching.
    pub z_sw: Vec<bool>,
    pub w_op: Vec<bool>,
    pub d: Vec<bool>,
    pub iota: Vec<bool>,
    pub f_p_plus: Vec<f64>,
    pub f_p_minus: Vec<f64>,
    pub f_q: Vec<f64>,
    pub v: Vec<f64>,
    pub p_sub: Vec<f64>,
    pub q_sub: Vec<f64>,
    #[serde(rename = "dDp_plus")]
    pub dp_plus: Vec<f64>,
    #[serde(rename = "dDp_minus")]
    pub dp_minus: Vec<f64>,
    #[serde(rename = "dDq_plus")]
    pub dq_plus: Vec<f64>,
    #[serde(rename = "dDq_minus")]
    pub dq_minus: Vec<f64>,
    /// Fictitious radiality flow per line: (from->to, to->from).
    pub f_rad: Vec<(f64, f64)>,
    pub f_rad_root: Vec<f64>,
    /// Status times absolute flow, per line (zero outside the fire zone).
    pub u: Vec<f64>,
    pub alpha: f64,
    pub objective: f64,
    /// Discounted continuation under each candidate at the chosen action.
    pub continuation: Vec<f64>,
}

/// Realized cost terms of one hour, in dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub purchase: f64,
    pub switching: f64,
    pub load_loss: f64,
    /// Total absolute imbalance in MW (active and reactive slacks).
    pub shed_mw: f64,
}

impl StageCosts {
    pub fn total(&self) -> f64 {
        self.purchase + self.switching + self.load_loss
    }
}

impl DispatchSolution {
    pub fn abs_flows(&self) -> Vec<f64> {
        self.f_p_plus.iter().zip(&self.f_p_minus).map(|(a, b)| a + b).collect()
    }

    pub fn net_flow(&self, l: usize) -> f64 {
        self.f_p_plus[l] - self.f_p_minus[l]
    }

    pub fn costs(&self, net: &Network) -> StageCosts {
        let slack: f64 = [&self.dp_plus, &self.dp_minus, &self.dq_plus, &self.dq_minus]
            .iter()
            .flat_map(|v| v.iter())
            .sum();
        let shed_mw = slack * net.base_mva;
        StageCosts {
            purchase: net.costs.c_energy * net.base_mva * self.p_sub.iter().sum::<f64>(),
            switching: net.costs.c_switch * self.y_sw.iter().filter(|y| **y).count() as f64,
            load_loss: net.costs.c_load_loss * shed_mw,
            shed_mw,
        }
    }

    /// Stage reward: negative realized cost.
    pub fn reward(&self, net: &Network) -> f64 {
        -self.costs(net).total()
    }

    /// Post-decision fire-zone statuses (energized and available).
    pub fn fire_status(&self, net: &Network) -> Vec<bool> {
        net.fire_lines().iter().map(|&l| self.w_op[l]).collect()
    }
}

/// Minimum of the candidate continuations and the (1-based) candidate
/// attaining it; ties go to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptimum {
    pub alpha: f64,
    pub candidate: usize,
}

/// Optimum of `max alpha s.t. alpha <= g_i`, equal to the minimum of
/// `sum q_i g_i` over the probability simplex.
pub fn dual_oracle(g: &[f64]) -> Result<DualOptimum, StageError> {
    let (i, &alpha) = g
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(StageError::EmptyContinuation)?;
    Ok(DualOptimum {
        alpha,
        candidate: i + 1,
    })
}

fn octagon_cuts() -> [(f64, f64); 4] {
    // (cot((1/2 - e) pi / 4), rhs factor sin(e pi/4) - cot * cos(e pi/4)) for e = 1..4
    let mut out = [(0.0, 0.0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let e = (k + 1) as f64;
        let a = (0.5 - e) * PI / 4.0;
        let cot = a.cos() / a.sin();
        let th = e * PI / 4.0;
        *slot = (cot, th.sin() - cot * th.cos());
    }
    out
}

/// Candidate continuation `lambda * (bias + sum_l theta_l E_i[phi_l])` as an
/// affine function of `w` and `u`.
fn continuations(problem: &StageProblem<'_>) -> Result<Vec<Continuation>, StageError> {
    let net = problem.net;
    let state = problem.state;
    let Some(vf) = problem.value_next else {
        return Ok(Vec::new());
    };
    let k = net.fire_lines().len();
    if vf.theta.len() != k {
        return Err(StageError::MissingWeights {
            t: vf.t,
            got: vf.theta.len(),
            expected: k,
        });
    }
    let lam = problem.lambda;
    let mut out = Vec::with_capacity(problem.ambiguity.len());
    for cand in &problem.ambiguity.candidates {
        let (gamma, beta) = match problem.continuation {
            ContinuationMode::Factorized => factorized_coefficients(net, state, cand),
            ContinuationMode::Enumerated => enumerated_coefficients(net, state, cand)?,
        };
        out.push(Continuation {
            constant: lam * vf.bias,
            on_status: gamma.iter().zip(&vf.theta).map(|(g, th)| lam * th * g).collect(),
            on_flow: beta.iter().zip(&vf.theta).map(|(b, th)| -lam * th * b).collect(),
        });
    }
    Ok(out)
}

/// `E_i[phi_l] = status_l (1 - fire_l) (gamma_li - beta_li |f_l|)`.
fn factorized_coefficients(net: &Network, state: &SystemState, cand: &CandidateModel) -> (Vec<f64>, Vec<f64>) {
    net.fire_lines()
        .iter()
        .map(|&l| {
            if state.fire[l] || !state.avail[l] {
                (0.0, 0.0)
            } else {
                (cand.gamma[l], cand.beta[l])
            }
        })
        .unzip()
}

/// Marginal survival coefficients assembled from the normalized linearized
/// probability of every successor. Cross terms `w_l |f_m|` cancel exactly
/// when summed over the status of line `m`.
pub fn enumerated_coefficients(
    net: &Network,
    state: &SystemState,
    cand: &CandidateModel,
) -> Result<(Vec<f64>, Vec<f64>), StageError> {
    let masked = cand.masked(&state.fire);
    let patterns = successor_patterns(net, state)?;
    let lins: Vec<_> = patterns.iter().map(|p| linearize(net.n_lines(), p, &masked)).collect();
    let total: f64 = lins.iter().map(|l| l.c0).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(TransitionError::DegenerateDistribution.into());
    }
    let mut gamma = vec![0.0; net.fire_lines().len()];
    let mut beta = vec![0.0; net.fire_lines().len()];
    for (p, lin) in patterns.iter().zip(&lins) {
        for &l in &p.survive {
            let j = net.fire_index(l).expect("fire line");
            gamma[j] += lin.c0 / total;
            beta[j] -= lin.c[l] / total;
        }
    }
    Ok((gamma, beta))
}

/// Builds the stage MILP.
pub fn build_stage<'a>(problem: &'a StageProblem<'a>) -> Result<StageModel<'a>, StageError> {
    if !(problem.lambda > 0.0 && problem.lambda <= 1.0) {
        return Err(StageError::Discount(problem.lambda));
    }
    let net = problem.net;
    let st = problem.state;
    let nb = net.n_buses();
    let nl = net.n_lines();
    let base = net.base_mva;
    let c_energy = net.costs.c_energy * base;
    let c_loss = net.costs.c_load_loss * base;
    let c_switch = net.costs.c_switch;
    let inf = f64::INFINITY;
    let conts = continuations(problem)?;
    let mut m = Model::default();

    let bus = |b: usize| net.buses[b].id.as_str();
    let line = |l: usize| net.lines[l].id.as_str();

    // Bus variables.
    let mut v = Vec::with_capacity(nb);
    let mut iota = Vec::with_capacity(nb);
    let (mut dpp, mut dpm, mut dqp, mut dqm) = (vec![], vec![], vec![], vec![]);
    let (mut p_sub, mut q_sub, mut root) = (vec![None; nb], vec![None; nb], vec![None; nb]);
    for (b, info) in net.buses.iter().enumerate() {
        let (lo, hi) = match info.v_ref {
            Some(vr) if info.is_substation => (vr * vr, vr * vr),
            _ => (info.v_min_sq(), info.v_max_sq()),
        };
        v.push(m.add_var(format!("v.{}", bus(b)), lo, hi, 0.0));
        let i = m.add_binary(format!("iota.{}", bus(b)), 0.0);
        if info.is_substation {
            m.fix(i, 0.0);
        }
        iota.push(i);
        dpp.push(m.add_var(format!("dDpp.{}", bus(b)), 0.0, inf, -c_loss));
        dpm.push(m.add_var(format!("dDpm.{}", bus(b)), 0.0, st.demand_p(b), -c_loss));
        dqp.push(m.add_var(format!("dDqp.{}", bus(b)), 0.0, inf, -c_loss));
        dqm.push(m.add_var(format!("dDqm.{}", bus(b)), 0.0, st.demand_q(b), -c_loss));
        if info.is_substation {
            p_sub[b] = Some(m.add_var(format!("psub.{}", bus(b)), -inf, inf, -c_energy));
            q_sub[b] = Some(m.add_var(format!("qsub.{}", bus(b)), -inf, inf, 0.0));
            root[b] = Some(m.add_var(format!("frad.root.{}", bus(b)), 0.0, problem.big_m_rad, 0.0));
        }
    }

    // Line variables.
    let (mut fpp, mut fpm, mut fq, mut d, mut w) = (vec![], vec![], vec![], vec![], vec![]);
    let (mut rf, mut rb) = (vec![], vec![]);
    let mut u = vec![None; nl];
    for (l, ln) in net.lines.iter().enumerate() {
        fpp.push(m.add_var(format!("fpp.{}", line(l)), 0.0, ln.f_max, 0.0));
        fpm.push(m.add_var(format!("fpm.{}", line(l)), 0.0, ln.f_max, 0.0));
        fq.push(m.add_var(format!("fq.{}", line(l)), -ln.f_max, ln.f_max, 0.0));
        d.push(m.add_binary(format!("d.{}", line(l)), 0.0));
        let wl = m.add_binary(format!("w.{}", line(l)), 0.0);
        if !st.avail[l] {
            m.fix(wl, 0.0);
        }
        w.push(wl);
        rf.push(m.add_var(format!("frad.{}.fwd", line(l)), 0.0, problem.big_m_rad, 0.0));
        rb.push(m.add_var(format!("frad.{}.bwd", line(l)), 0.0, problem.big_m_rad, 0.0));
        if ln.fire_zone && problem.value_next.is_some() {
            u[l] = Some(m.add_var(format!("u.{}", line(l)), 0.0, ln.f_max, 0.0));
        }
    }

    // Switch variables.
    let (mut y, mut z) = (vec![], vec![]);
    for (k, &l) in net.switchable().iter().enumerate() {
        y.push(m.add_binary(format!("y.{}", line(l)), -c_switch));
        let zl = m.add_binary(format!("z.{}", line(l)), 0.0);
        if !st.avail[l] {
            m.fix(zl, 0.0);
        }
        z.push(zl);
        let z0 = if st.switch_status[k] { 1.0 } else { 0.0 };
        m.add_row(format!("sw_open.{}", line(l)), vec![(y[k], 1.0), (zl, 1.0)], Cmp::Ge, z0);
        m.add_row(format!("sw_close.{}", line(l)), vec![(y[k], 1.0), (zl, -1.0)], Cmp::Ge, -z0);
        m.add_row(format!("w_eq_z.{}", line(l)), vec![(w[l], 1.0), (zl, -1.0)], Cmp::Eq, 0.0);
    }

    let alpha = if problem.value_next.is_some() {
        m.add_var("alpha", -inf, inf, 1.0)
    } else {
        m.add_var("alpha", 0.0, 0.0, 1.0)
    };

    // Non-switchable lines are energized exactly when available and their
    // endpoints are energized; both endpoints share one status.
    for (l, ln) in net.lines.iter().enumerate() {
        if ln.switchable || !st.avail[l] {
            continue;
        }
        for end in [ln.from, ln.to] {
            m.add_row(
                format!("w_fixed.{}.{}", line(l), bus(end)),
                vec![(w[l], 1.0), (iota[end], 1.0)],
                Cmp::Eq,
                1.0,
            );
        }
    }

    // Power balance.
    for b in 0..nb {
        let mut tp = Vec::new();
        let mut tq = Vec::new();
        for &l in net.incident(b) {
            let s = if net.lines[l].to == b { 1.0 } else { -1.0 };
            tp.push((fpp[l], s));
            tp.push((fpm[l], -s));
            tq.push((fq[l], s));
        }
        tp.extend([(dpp[b], -1.0), (dpm[b], 1.0)]);
        tq.extend([(dqp[b], -1.0), (dqm[b], 1.0)]);
        if let (Some(p), Some(q)) = (p_sub[b], q_sub[b]) {
            tp.push((p, 1.0));
            tq.push((q, 1.0));
        }
        m.add_row(format!("balance_p.{}", bus(b)), tp, Cmp::Eq, st.demand_p(b));
        m.add_row(format!("balance_q.{}", bus(b)), tq, Cmp::Eq, st.demand_q(b));
    }

    // Isolation.
    for (b, info) in net.buses.iter().enumerate() {
        let deg = net.incident(b).len() as f64;
        let mut terms: Vec<_> = net.incident(b).iter().map(|&l| (w[l], 1.0)).collect();
        terms.push((iota[b], deg));
        m.add_row(format!("iso_hi.{}", bus(b)), terms, Cmp::Le, deg);
        if !info.is_substation {
            let mut terms: Vec<_> = net.incident(b).iter().map(|&l| (w[l], 1.0)).collect();
            terms.push((iota[b], deg));
            m.add_row(format!("iso_lo.{}", bus(b)), terms, Cmp::Ge, 1.0);
        }
    }

    let cuts = octagon_cuts();
    for (l, ln) in net.lines.iter().enumerate() {
        let (fb, tb) = (ln.from, ln.to);
        let vmax = net.buses[fb].v_max_sq().max(net.buses[tb].v_max_sq());
        let vmin = net.buses[fb].v_min_sq().min(net.buses[tb].v_min_sq());
        let big_m = (vmax - vmin) + 2.0 * (ln.r + ln.x) * ln.f_max;
        let drop = |sign: f64| {
            vec![
                (v[fb], -sign),
                (v[tb], sign),
                (fpp[l], 2.0 * sign * ln.r),
                (fpm[l], -2.0 * sign * ln.r),
                (fq[l], 2.0 * sign * ln.x),
                (w[l], big_m),
            ]
        };
        m.add_row(format!("vdrop_hi.{}", line(l)), drop(1.0), Cmp::Le, big_m);
        m.add_row(format!("vdrop_lo.{}", line(l)), drop(-1.0), Cmp::Le, big_m);

        let fm = ln.f_max;
        m.add_row(format!("dir_plus.{}", line(l)), vec![(fpp[l], 1.0), (d[l], -fm)], Cmp::Le, 0.0);
        m.add_row(format!("dir_minus.{}", line(l)), vec![(fpm[l], 1.0), (d[l], fm)], Cmp::Le, fm);
        m.add_row(format!("gate_plus.{}", line(l)), vec![(fpp[l], 1.0), (w[l], -fm)], Cmp::Le, 0.0);
        m.add_row(format!("gate_minus.{}", line(l)), vec![(fpm[l], 1.0), (w[l], -fm)], Cmp::Le, 0.0);
        m.add_row(format!("gate_q_hi.{}", line(l)), vec![(fq[l], 1.0), (w[l], -fm)], Cmp::Le, 0.0);
        m.add_row(format!("gate_q_lo.{}", line(l)), vec![(fq[l], 1.0), (w[l], fm)], Cmp::Ge, 0.0);

        for (e, &(cot, rhs)) in cuts.iter().enumerate() {
            for (tag, s) in [("+", 1.0), ("-", -1.0)] {
                m.add_row(
                    format!("octagon.{}.{}{tag}", line(l), e + 1),
                    vec![(fq[l], s), (fpp[l], -cot), (fpm[l], cot)],
                    Cmp::Le,
                    rhs * fm,
                );
            }
        }

        m.add_row(format!("rad_cap_fwd.{}", line(l)), vec![(rf[l], 1.0), (w[l], -problem.big_m_rad)], Cmp::Le, 0.0);
        m.add_row(format!("rad_cap_bwd.{}", line(l)), vec![(rb[l], 1.0), (w[l], -problem.big_m_rad)], Cmp::Le, 0.0);

        if let Some(ul) = u[l] {
            m.add_row(format!("prod_cap.{}", line(l)), vec![(ul, 1.0), (w[l], -fm)], Cmp::Le, 0.0);
            m.add_row(
                format!("prod_hi.{}", line(l)),
                vec![(ul, 1.0), (fpp[l], -1.0), (fpm[l], -1.0)],
                Cmp::Le,
                0.0,
            );
            m.add_row(
                format!("prod_lo.{}", line(l)),
                vec![(ul, 1.0), (fpp[l], -1.0), (fpm[l], -1.0), (w[l], -fm)],
                Cmp::Ge,
                -fm,
            );
        }
    }

    // Single-commodity radiality flow from a super-root through substations.
    let mut inject: Vec<_> = root.iter().flatten().map(|&r| (r, 1.0)).collect();
    inject.extend(iota.iter().map(|&i| (i, 1.0)));
    m.add_row("rad_root", inject, Cmp::Eq, nb as f64);
    for b in 0..nb {
        let mut terms = Vec::new();
        if let Some(r) = root[b] {
            terms.push((r, 1.0));
        }
        for &l in net.incident(b) {
            let (inflow, outflow) = if net.lines[l].to == b { (rf[l], rb[l]) } else { (rb[l], rf[l]) };
            terms.push((inflow, 1.0));
            terms.push((outflow, -1.0));
        }
        terms.push((iota[b], 1.0));
        m.add_row(format!("rad_balance.{}", bus(b)), terms, Cmp::Eq, 1.0);
    }
    let mut count: Vec<_> = w.iter().map(|&x| (x, 1.0)).collect();
    let non_sub = net.buses.iter().filter(|b| !b.is_substation).count();
    for (b, info) in net.buses.iter().enumerate() {
        if !info.is_substation {
            count.push((iota[b], 1.0));
        }
    }
    m.add_row("rad_count", count, Cmp::Eq, non_sub as f64);

    for (i, c) in conts.iter().enumerate() {
        let mut terms = vec![(alpha, 1.0)];
        for (j, &l) in net.fire_lines().iter().enumerate() {
            if c.on_status[j] != 0.0 {
                terms.push((w[l], -c.on_status[j]));
            }
            if c.on_flow[j] != 0.0 {
                terms.push((u[l].expect("u exists with a value function"), -c.on_flow[j]));
            }
        }
        m.add_row(format!("alpha.cand{}", i + 1), terms, Cmp::Le, c.constant);
    }

    let idx = StageIndex {
        fp_plus: fpp,
        fp_minus: fpm,
        fq,
        d,
        w,
        rad_fwd: rf,
        rad_bwd: rb,
        u,
        y,
        z,
        v,
        iota,
        dp_plus: dpp,
        dp_minus: dpm,
        dq_plus: dqp,
        dq_minus: dqm,
        p_sub,
        q_sub,
        rad_root: root,
        alpha,
    };
    Ok(StageModel {
        problem,
        model: m,
        idx,
        continuation: conts,
    })
}

impl StageModel<'_> {
    pub fn extract(&self, sol: &MilpSolution) -> DispatchSolution {
        let x = &sol.values;
        let net = self.problem.net;
        let idx = &self.idx;
        let val = |v: VarId| x[v.0];
        let bin = |v: VarId| x[v.0] > 0.5;
        // Snap tiny solver noise on non-negative quantities.
        let nonneg = |v: VarId| if x[v.0].abs() < 1e-12 { 0.0 } else { x[v.0] };
        let w_op: Vec<bool> = idx.w.iter().map(|&v| bin(v)).collect();
        let f_p_plus: Vec<f64> = idx.fp_plus.iter().map(|&v| nonneg(v)).collect();
        let f_p_minus: Vec<f64> = idx.fp_minus.iter().map(|&v| nonneg(v)).collect();
        let abs: Vec<f64> = f_p_plus.iter().zip(&f_p_minus).map(|(a, b)| a + b).collect();
        let continuation = self.continuation.iter().map(|c| c.eval(net, &w_op, &abs)).collect();
        let mut out = DispatchSolution {
            t: self.problem.state.t,
            y_sw: idx.y.iter().map(|&v| bin(v)).collect(),
            z_sw: idx.z.iter().map(|&v| bin(v)).collect(),
            w_op,
            d: idx.d.iter().map(|&v| bin(v)).collect(),
            iota: idx.iota.iter().map(|&v| bin(v)).collect(),
            f_p_plus,
            f_p_minus,
            f_q: idx.fq.iter().map(|&v| val(v)).collect(),
            v: idx.v.iter().map(|&v| val(v)).collect(),
            p_sub: idx.p_sub.iter().map(|v| v.map_or(0.0, val)).collect(),
            q_sub: idx.q_sub.iter().map(|v| v.map_or(0.0, val)).collect(),
            dp_plus: idx.dp_plus.iter().map(|&v| nonneg(v)).collect(),
            dp_minus: idx.dp_minus.iter().map(|&v| nonneg(v)).collect(),
            dq_plus: idx.dq_plus.iter().map(|&v| nonneg(v)).collect(),
            dq_minus: idx.dq_minus.iter().map(|&v| nonneg(v)).collect(),
            f_rad: idx.rad_fwd.iter().zip(&idx.rad_bwd).map(|(&a, &b)| (val(a), val(b))).collect(),
            f_rad_root: idx.rad_root.iter().map(|v| v.map_or(0.0, val)).collect(),
            u: idx.u.iter().map(|v| v.map_or(0.0, val)).collect(),
            alpha: val(idx.alpha),
            objective: sol.objective,
            continuation,
        };
        out.objective = out.reward(net) + out.alpha;
        out
    }
}

/// Stage solver interface. Implementations must be usable from several
/// worker threads at once.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, stage: &StageModel<'_>) -> Result<MilpSolution, SolveError>;
}

/// Branch-and-bound through the HiGHS library.
#[derive(Debug, Clone, Default)]
pub struct HighsBackend {
    pub options: HighsOptions,
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, stage: &StageModel<'_>) -> Result<MilpSolution, SolveError> {
        milp::solve_highs(&stage.model, &self.options)
    }
}

/// Exhaustive search over switch positions. Every other binary follows
/// from the resulting topology (see [`derive_topology`]), so each leaf is
/// a linear program, solved with microlp.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnumerationBackend;

/// Most switchable lines the enumeration backend accepts.
pub const ENUMERATION_MAX_SWITCHES: usize = 12;

/// Energized topology implied by a choice of switch positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub w: Vec<bool>,
    pub iota: Vec<bool>,
    /// Orientation of each line away from its substation (true: from->to).
    pub d: Vec<bool>,
    pub rad: Vec<(f64, f64)>,
    pub rad_root: Vec<f64>,
}

/// Returns `None` when the switch positions cannot be made radial: a cycle,
/// two substations in one tree, or a closed switch in a dead island.
pub fn derive_topology(net: &Network, state: &SystemState, z: &[bool]) -> Option<Topology> {
    let nb = net.n_buses();
    let nl = net.n_lines();
    let closed = |l: usize| -> bool {
        state.avail[l] && net.switch_index(l).is_none_or(|k| z[k])
    };
    let mut w = vec![false; nl];
    let mut iota = vec![true; nb];
    let mut d = vec![true; nl];
    let mut rad = vec![(0.0, 0.0); nl];
    let mut rad_root = vec![0.0; nb];
    let mut parent_line = vec![usize::MAX; nb];
    let mut seen = vec![false; nb];

    for s in net.substations() {
        if seen[s] {
            return None;
        }
        seen[s] = true;
        iota[s] = false;
        let mut order = vec![s];
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            head += 1;
            for &l in net.incident(b) {
                if !closed(l) || l == parent_line[b] {
                    continue;
                }
                let o = net.lines[l].other(b);
                if seen[o] {
                    return None;
                }
                seen[o] = true;
                iota[o] = false;
                parent_line[o] = l;
                w[l] = true;
                d[l] = net.lines[l].from == b;
                order.push(o);
            }
        }
        let mut size = vec![0.0; nb];
        for &b in order.iter().rev() {
            size[b] += 1.0;
            if b != s {
                let l = parent_line[b];
                let p = net.lines[l].other(b);
                size[p] += size[b];
                rad[l] = if d[l] { (size[b], 0.0) } else { (0.0, size[b]) };
            }
        }
        rad_root[s] = size[s];
    }
    // Anything unreached is dead; a closed switch there cannot be energized.
    for &l in net.switchable() {
        let ln = &net.lines[l];
        if closed(l) && (!seen[ln.from] || !seen[ln.to]) {
            return None;
        }
    }
    Some(Topology {
        w,
        iota,
        d,
        rad,
        rad_root,
    })
}

/// Solves the stage with every switch position fixed. `Ok(None)` means the
/// positions admit no radial operating point.
fn solve_leaf(stage: &StageModel<'_>, z: &[bool]) -> Result<Option<MilpSolution>, SolveError> {
    let net = stage.problem.net;
    let state = stage.problem.state;
    let idx = &stage.idx;
    if net.switchable().iter().zip(z).any(|(&l, &zk)| zk && !state.avail[l]) {
        return Ok(None);
    }
    let Some(topo) = derive_topology(net, state, z) else {
        return Ok(None);
    };
    let mut leaf = stage.model.clone();
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    for (k, &zk) in z.iter().enumerate() {
        leaf.fix(idx.z[k], b(zk));
        leaf.fix(idx.y[k], b(zk != state.switch_status[k]));
    }
    for l in 0..net.n_lines() {
        leaf.fix(idx.w[l], b(topo.w[l]));
        leaf.fix(idx.d[l], b(topo.d[l]));
    }
    for bus in 0..net.n_buses() {
        leaf.fix(idx.iota[bus], b(topo.iota[bus]));
    }
    match milp::solve_lp(&leaf) {
        Ok(sol) => Ok(Some(sol)),
        Err(SolveError::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Best dispatch for fixed switch positions, or `None` if they cannot be
/// operated radially.
pub fn solve_with_switches(problem: &StageProblem<'_>, z: &[bool]) -> Result<Option<DispatchSolution>, StageError> {
    let stage = build_stage(problem)?;
    let sol = solve_leaf(&stage, z).map_err(|source| StageError::Solve {
        t: problem.state.t,
        source,
    })?;
    Ok(sol.map(|s| stage.extract(&s)))
}

impl SolverBackend for EnumerationBackend {
    fn name(&self) -> &'static str {
        "enumeration"
    }

    fn solve(&self, stage: &StageModel<'_>) -> Result<MilpSolution, SolveError> {
        let n_sw = stage.problem.net.switchable().len();
        if n_sw > ENUMERATION_MAX_SWITCHES {
            return Err(SolveError::Unsupported(format!(
                "{n_sw} switchable lines exceed the enumeration limit of {ENUMERATION_MAX_SWITCHES}"
            )));
        }
        let mut best: Option<MilpSolution> = None;
        for mask in 0..1usize << n_sw {
            let z: Vec<bool> = (0..n_sw).map(|k| mask >> k & 1 == 1).collect();
            if let Some(sol) = solve_leaf(stage, &z)?
                && best.as_ref().is_none_or(|s| sol.objective > s.objective + 1e-9)
            {
                best = Some(sol);
            }
        }
        best.ok_or_else(|| SolveError::Infeasible(vec!["no radial switch configuration".into()]))
    }
}

/// Builds and solves one stage.
pub fn solve_stage(problem: &StageProblem<'_>, backend: &dyn SolverBackend) -> Result<DispatchSolution, StageError> {
    let stage = build_stage(problem)?;
    let sol = backend.solve(&stage).map_err(|source| StageError::Solve {
        t: problem.state.t,
        source,
    })?;
    Ok(stage.extract(&sol))
}

/// Which backend to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Highs,
    Enumeration,
}

impl BackendKind {
    pub fn instantiate(self, options: HighsOptions) -> Box<dyn SolverBackend> {
        match self {
            BackendKind::Highs => Box::new(HighsBackend { options }),
            BackendKind::Enumeration => Box::new(EnumerationBackend),
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highs" => Ok(Self::Highs),
            "enumeration" => Ok(Self::Enumeration),
            other => Err(format!("unknown solver backend {other:?} (expected highs or enumeration)")),
        }
    }
}

// ---------------------------------------------------------------------------
// Constraint replay

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

/// Re-checks every operational constraint against a solution, independently
/// of the model builder. An empty report certifies feasibility within
/// [`FEAS_TOL`].
pub fn replay_constraints(net: &Network, state: &SystemState, sol: &DispatchSolution) -> Vec<Violation> {
    let tol = FEAS_TOL;
    let mut out = Vec::new();
    let mut check = |name: String, residual: f64| {
        if residual > tol {
            out.push(Violation {
                constraint: name,
                residual,
            });
        }
    };
    let b2f = |x: bool| if x { 1.0 } else { 0.0 };

    for (b, info) in net.buses.iter().enumerate() {
        let id = &info.id;
        let mut inflow_p = 0.0;
        let mut inflow_q = 0.0;
        let mut ops = 0.0;
        for &l in net.incident(b) {
            let s = if net.lines[l].to == b { 1.0 } else { -1.0 };
            inflow_p += s * sol.net_flow(l);
            inflow_q += s * sol.f_q[l];
            ops += b2f(sol.w_op[l]);
        }
        let bal_p = sol.p_sub[b] + inflow_p - state.demand_p(b) - sol.dp_plus[b] + sol.dp_minus[b];
        let bal_q = sol.q_sub[b] + inflow_q - state.demand_q(b) - sol.dq_plus[b] + sol.dq_minus[b];
        check(format!("balance_p[{id}]"), bal_p.abs());
        check(format!("balance_q[{id}]"), bal_q.abs());
        if !info.is_substation {
            check(format!("substation_injection[{id}]"), sol.p_sub[b].abs().max(sol.q_sub[b].abs()));
        }

        let deg = net.incident(b).len() as f64;
        let iota = b2f(sol.iota[b]);
        check(format!("isolation_upper[{id}]"), ops - deg * (1.0 - iota));
        if info.is_substation {
            check(format!("substation_energized[{id}]"), iota);
        } else {
            check(format!("isolation_lower[{id}]"), 1.0 - deg * iota - ops);
        }

        let (lo, hi) = (info.v_min_sq(), info.v_max_sq());
        check(format!("voltage_lower[{id}]"), lo - sol.v[b]);
        check(format!("voltage_upper[{id}]"), sol.v[b] - hi);
        if let Some(vr) = info.v_ref {
            check(format!("voltage_reference[{id}]"), (sol.v[b] - vr * vr).abs());
        }
        for (name, val, cap) in [
            ("dDp_plus", sol.dp_plus[b], f64::INFINITY),
            ("dDp_minus", sol.dp_minus[b], state.demand_p(b)),
            ("dDq_plus", sol.dq_plus[b], f64::INFINITY),
            ("dDq_minus", sol.dq_minus[b], state.demand_q(b)),
        ] {
            check(format!("{name}_nonneg[{id}]"), -val);
            check(format!("{name}_cap[{id}]"), val - cap);
        }
    }

    let cuts = octagon_cuts();
    for (l, ln) in net.lines.iter().enumerate() {
        let id = &ln.id;
        let fm = ln.f_max;
        let (fp, fn_, q) = (sol.f_p_plus[l], sol.f_p_minus[l], sol.f_q[l]);
        let w = b2f(sol.w_op[l]);
        let d = b2f(sol.d[l]);
        check(format!("flow_nonneg[{id}]"), (-fp).max(-fn_));
        check(format!("direction_plus[{id}]"), fp - fm * d);
        check(format!("direction_minus[{id}]"), fn_ - fm * (1.0 - d));
        check(format!("direction_split[{id}]"), (fp * fn_ - 1e-9).max(0.0) * 1e6);
        check(format!("status_gate_p[{id}]"), fp.max(fn_) - fm * w);
        check(format!("status_gate_q[{id}]"), q.abs() - fm * w);
        let fnet = fp - fn_;
        for (e, &(cot, rhs)) in cuts.iter().enumerate() {
            for s in [1.0, -1.0] {
                check(format!("octagon[{id},{}]", e + 1), s * q - cot * fnet - rhs * fm);
            }
        }
        if sol.w_op[l] {
            let drop = sol.v[ln.from] - sol.v[ln.to] - 2.0 * (ln.r * fnet + ln.x * q);
            check(format!("voltage_drop[{id}]"), drop.abs());
        }
        check(format!("availability[{id}]"), w - b2f(state.avail[l]));
        match net.switch_index(l) {
            Some(k) => {
                let z = b2f(sol.z_sw[k]);
                let z0 = b2f(state.switch_status[k]);
                let y = b2f(sol.y_sw[k]);
                check(format!("switching_delta[{id}]"), (z - z0).abs() - y);
                check(format!("switch_availability[{id}]"), z - b2f(state.avail[l]));
                check(format!("operational_is_switch[{id}]"), (w - z).abs());
            }
            None => {
                let live = state.avail[l] && !sol.iota[ln.from];
                check(format!("fixed_line_status[{id}]"), (w - b2f(live)).abs());
                if state.avail[l] {
                    check(
                        format!("fixed_line_endpoints[{id}]"),
                        (b2f(sol.iota[ln.from]) - b2f(sol.iota[ln.to])).abs(),
                    );
                }
            }
        }
        let (rf, rb) = sol.f_rad[l];
        let m_rad = net.n_buses() as f64;
        check(format!("radiality_capacity[{id}]"), rf.max(rb) - m_rad * w);
        check(format!("radiality_nonneg[{id}]"), (-rf).max(-rb));
    }

    let energized: f64 = sol.iota.iter().map(|&i| 1.0 - b2f(i)).sum();
    let injected: f64 = sol.f_rad_root.iter().sum();
    check("radiality_root".into(), (injected - energized).abs());
    for (b, info) in net.buses.iter().enumerate() {
        let mut net_in = sol.f_rad_root[b];
        for &l in net.incident(b) {
            let (rf, rb) = sol.f_rad[l];
            net_in += if net.lines[l].to == b { rf - rb } else { rb - rf };
        }
        check(format!("radiality_balance[{}]", info.id), (net_in - (1.0 - b2f(sol.iota[b]))).abs());
    }
    let n_ops: f64 = sol.w_op.iter().map(|&w| b2f(w)).sum();
    let energized_loads: f64 = net
        .buses
        .iter()
        .zip(&sol.iota)
        .filter(|(b, _)| !b.is_substation)
        .map(|(_, &i)| 1.0 - b2f(i))
        .sum();
    check("radiality_line_count".into(), (n_ops - energized_loads).abs());

    if let Some(problem) = forest_problem(net, sol) {
        check(format!("forest[{problem}]"), 1.0);
    }
    out
}

/// Checks that energized lines form a forest over energized buses with
/// every tree rooted at a substation.
fn forest_problem(net: &Network, sol: &DispatchSolution) -> Option<String> {
    let mut uf = crate::grid::UnionFind::new(net.n_buses() + 1);
    let root = net.n_buses();
    for s in net.substations() {
        uf.union(root, s);
    }
    for (l, ln) in net.lines.iter().enumerate() {
        if !sol.w_op[l] {
            continue;
        }
        if sol.iota[ln.from] || sol.iota[ln.to] {
            return Some(format!("{} touches an isolated bus", ln.id));
        }
        if !uf.union(ln.from, ln.to) {
            return Some(format!("{} closes a cycle", ln.id));
        }
    }
    for (b, info) in net.buses.iter().enumerate() {
        if !sol.iota[b] && uf.find(b) != uf.find(root) {
            return Some(format!("{} energized without a path to a substation", info.id));
        }
    }
    None
}

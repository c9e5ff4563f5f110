//! Decision-dependent line availability dynamics.
//!
//! An available fire-zone line survives the hour with probability
//! `(1 - fire) * (gamma - beta * |f|)`, independently of every other line.
//! Lines outside the fire zone never fail and failed lines never recover.
//! This module evaluates the exact product-form successor probabilities,
//! their first-order expansion around zero flow, the candidate models that
//! make up the ambiguity set, and Bernoulli sampling of successors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FireSchedule, GridError, Network, SystemState};

/// Largest number of uncertain lines whose successors may be enumerated.
pub const ENUMERATION_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum TransitionError {
    #[error("inconsistent transition pattern: {0}")]
    InconsistentPattern(String),
    #[error("probabilities sum to zero; cannot normalize")]
    DegenerateDistribution,
    #[error("{k} uncertain lines exceed the enumeration cap of {cap}")]
    EnumerationCap { k: usize, cap: usize },
    #[error("ambiguity set needs at least one candidate")]
    EmptyAmbiguity,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Survival parameters of one candidate transition law, indexed by line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub id: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CandidateModel {
    /// The model the network file describes.
    pub fn nominal(net: &Network) -> Self {
        Self {
            id: 1,
            gamma: net.lines.iter().map(|l| l.gamma).collect(),
            beta: net.lines.iter().map(|l| l.beta).collect(),
        }
    }

    /// Probability that line `l` survives the hour given its absolute flow.
    pub fn survival(&self, net: &Network, l: usize, fire: bool, abs_flow: f64) -> f64 {
        survival_prob(
            self.gamma[l],
            self.beta[l],
            net.lines[l].fire_zone,
            fire,
            abs_flow,
        )
    }

    /// Same model with burning lines given zero survival (`gamma = beta = 0`).
    pub fn masked(&self, fire: &[bool]) -> Self {
        let mut out = self.clone();
        for (l, &burning) in fire.iter().enumerate() {
            if burning {
                out.gamma[l] = 0.0;
                out.beta[l] = 0.0;
            }
        }
        out
    }

    fn beta_mass(&self, net: &Network) -> f64 {
        net.fire_lines().iter().map(|&l| self.beta[l]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    pub candidates: Vec<CandidateModel>,
    pub delta: f64,
}

impl AmbiguitySet {
    /// Builds a set from candidates, dropping exact duplicates and
    /// renumbering ids from 1.
    pub fn new(candidates: Vec<CandidateModel>, delta: f64) -> Result<Self, TransitionError> {
        let mut unique: Vec<CandidateModel> = Vec::with_capacity(candidates.len());
        for c in candidates {
            if !unique.iter().any(|u| u.gamma == c.gamma && u.beta == c.beta) {
                unique.push(c);
            }
        }
        if unique.is_empty() {
            return Err(TransitionError::EmptyAmbiguity);
        }
        for (i, c) in unique.iter_mut().enumerate() {
            c.id = i + 1;
        }
        Ok(Self {
            candidates: unique,
            delta,
        })
    }

    pub fn singleton(model: CandidateModel) -> Self {
        Self::new(vec![model], 0.0).expect("one candidate")
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Highest-risk candidate: the one with the largest fire-zone `beta`.
    pub fn worst_case(&self, net: &Network) -> &CandidateModel {
        self.candidates
            .iter()
            .max_by(|a, b| a.beta_mass(net).total_cmp(&b.beta_mass(net)))
            .expect("non-empty")
    }

    /// Middle candidate in generation order.
    pub fn nominal(&self) -> &CandidateModel {
        &self.candidates[(self.candidates.len() - 1) / 2]
    }

    /// Same candidates with every `beta` set to zero, i.e. flow-independent
    /// dynamics. Duplicates collapse.
    pub fn without_flow_dependence(&self) -> Self {
        let zeroed = self
            .candidates
            .iter()
            .map(|c| CandidateModel {
                id: c.id,
                gamma: c.gamma.clone(),
                beta: vec![0.0; c.beta.len()],
            })
            .collect();
        Self::new(zeroed, 0.0).expect("non-empty")
    }
}

/// Lines whose status changes (or not) between two availability vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransitionPattern {
    /// Lines that stay available.
    pub survive: Vec<usize>,
    /// Lines that fail during the hour.
    pub fail: Vec<usize>,
    /// Lines that were already failed.
    pub stay_dead: usize,
}

impl TransitionPattern {
    /// Successor availability implied by the pattern.
    pub fn successor(&self, avail: &[bool]) -> Vec<bool> {
        let mut next = avail.to_vec();
        for &l in &self.fail {
            next[l] = false;
        }
        next
    }
}

/// Affine approximation `c0 + sum_l c[l] * |f_l|` of a successor probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTransition {
    pub c0: f64,
    pub c: Vec<f64>,
}

impl LinearizedTransition {
    pub fn eval(&self, abs_flows: &[f64]) -> f64 {
        self.c0 + self.c.iter().zip(abs_flows).map(|(c, f)| c * f).sum::<f64>()
    }
}

/// One-hour survival probability of a line that is currently available.
///
/// The affine form is clamped to `[0, 1]` so that large flows cannot
/// produce a negative probability.
pub fn survival_prob(gamma: f64, beta: f64, fire_zone: bool, fire: bool, abs_flow: f64) -> f64 {
    if !fire_zone {
        return 1.0;
    }
    if fire {
        return 0.0;
    }
    (gamma - beta * abs_flow).clamp(0.0, 1.0)
}

fn check_pattern(
    net: &Network,
    state: &SystemState,
    pattern: &TransitionPattern,
) -> Result<bool, TransitionError> {
    let mut seen = vec![false; net.n_lines()];
    let mut resurrects = false;
    for (&l, survives) in pattern
        .survive
        .iter()
        .map(|l| (l, true))
        .chain(pattern.fail.iter().map(|l| (l, false)))
    {
        if l >= net.n_lines() {
            return Err(TransitionError::InconsistentPattern(format!("line index {l} out of range")));
        }
        if std::mem::replace(&mut seen[l], true) {
            return Err(TransitionError::InconsistentPattern(format!(
                "line {} listed twice",
                net.lines[l].id
            )));
        }
        if !net.lines[l].fire_zone {
            return Err(TransitionError::InconsistentPattern(format!(
                "line {} is outside the fire zone",
                net.lines[l].id
            )));
        }
        if !state.avail[l] {
            if survives {
                resurrects = true;
            } else {
                return Err(TransitionError::InconsistentPattern(format!(
                    "failed line {} cannot fail again",
                    net.lines[l].id
                )));
            }
        }
    }
    Ok(resurrects)
}

/// Exact probability of a transition pattern: the product of per-line
/// survival and failure probabilities. Lines not named by the pattern are
/// marginalized out. Patterns that revive a failed line have probability 0.
pub fn exact_transition_prob(
    net: &Network,
    state: &SystemState,
    abs_flows: &[f64],
    pattern: &TransitionPattern,
    model: &CandidateModel,
) -> Result<f64, TransitionError> {
    if check_pattern(net, state, pattern)? {
        return Ok(0.0);
    }
    let survive: f64 = pattern
        .survive
        .iter()
        .map(|&l| model.survival(net, l, state.fire[l], abs_flows[l]))
        .product();
    let fail: f64 = pattern
        .fail
        .iter()
        .map(|&l| 1.0 - model.survival(net, l, state.fire[l], abs_flows[l]))
        .product();
    Ok(survive * fail)
}

/// First-order expansion of a pattern's probability around zero flow.
///
/// Burning lines should be masked out of `model` first (see
/// [`CandidateModel::masked`]).
pub fn linearize(n_lines: usize, pattern: &TransitionPattern, model: &CandidateModel) -> LinearizedTransition {
    let g = |l: usize| model.gamma[l];
    let mut c = vec![0.0; n_lines];
    let c0 = pattern.survive.iter().map(|&l| g(l)).product::<f64>()
        * pattern.fail.iter().map(|&l| 1.0 - g(l)).product::<f64>();
    // Product of all zero-flow factors except the one for `skip`.
    let others = |skip: usize| -> f64 {
        pattern.survive.iter().filter(|&&l| l != skip).map(|&l| g(l)).product::<f64>()
            * pattern
                .fail
                .iter()
                .filter(|&&l| l != skip)
                .map(|&l| 1.0 - g(l))
                .product::<f64>()
    };
    for &l in &pattern.survive {
        c[l] = -model.beta[l] * others(l);
    }
    for &l in &pattern.fail {
        c[l] = model.beta[l] * others(l);
    }
    LinearizedTransition { c0, c }
}

/// All `2^k` patterns over the given uncertain lines. Bit `j` of the
/// pattern index set means `lines[j]` survives.
pub fn enumerate_patterns(
    lines: &[usize],
    stay_dead: usize,
) -> Result<Vec<TransitionPattern>, TransitionError> {
    let k = lines.len();
    if k > ENUMERATION_CAP {
        return Err(TransitionError::EnumerationCap {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    Ok((0..1usize << k)
        .map(|mask| {
            let (survive, fail) = lines.iter().enumerate().fold(
                (Vec::new(), Vec::new()),
                |(mut s, mut f), (j, &l)| {
                    if mask >> j & 1 == 1 {
                        s.push(l);
                    } else {
                        f.push(l);
                    }
                    (s, f)
                },
            );
            TransitionPattern {
                survive,
                fail,
                stay_dead,
            }
        })
        .collect())
}

/// Every successor pattern of a state.
pub fn successor_patterns(net: &Network, state: &SystemState) -> Result<Vec<TransitionPattern>, TransitionError> {
    let lines = state.uncertain_lines(net);
    let dead = state.avail.iter().filter(|a| !**a).count();
    enumerate_patterns(&lines, dead)
}

/// Divides by the total. Negative entries are clamped to zero first.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>, TransitionError> {
    let clamped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(TransitionError::DegenerateDistribution);
    }
    Ok(clamped.into_iter().map(|p| p / total).collect())
}

/// Successor distribution over `patterns`, either exact or from the
/// normalized first-order expansion.
pub fn normalized_probs(
    net: &Network,
    state: &SystemState,
    patterns: &[TransitionPattern],
    abs_flows: &[f64],
    model: &CandidateModel,
    use_linearized: bool,
) -> Result<Vec<f64>, TransitionError> {
    let raw = if use_linearized {
        let masked = model.masked(&state.fire);
        patterns
            .iter()
            .map(|p| {
                if check_pattern(net, state, p)? {
                    return Ok(0.0);
                }
                Ok(linearize(net.n_lines(), p, &masked).eval(abs_flows))
            })
            .collect::<Result<Vec<_>, TransitionError>>()?
    } else {
        patterns
            .iter()
            .map(|p| exact_transition_prob(net, state, abs_flows, p, model))
            .collect::<Result<Vec<_>, _>>()?
    };
    normalize(&raw)
}

/// Expected next-hour value of each fire-zone line's feature
/// `status * available'`, in `Network::fire_lines` order. `status[j]` is the
/// post-decision energized status of fire-zone line `j`. Exact under
/// independent failures, so no successor enumeration is needed.
pub fn expected_features(
    net: &Network,
    status: &[bool],
    abs_flows: &[f64],
    fire: &[bool],
    model: &CandidateModel,
) -> Vec<f64> {
    net.fire_lines()
        .iter()
        .zip(status)
        .map(|(&l, &on)| {
            if on {
                model.survival(net, l, fire[l], abs_flows[l])
            } else {
                0.0
            }
        })
        .collect()
}

/// Independent random stream for one trajectory or scenario.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws the next-hour state.
///
/// With probability `1 - eps` each available fire-zone line survives with
/// its model probability; otherwise every such line survives with
/// probability 1/2 (exploration randomizes outcomes, not actions). The
/// number of draws per call is fixed so that paired runs stay aligned.
/// Switchable lines keep the status in `switch_after`; a switch on a line
/// that failed is recorded as open.
#[allow(clippy::too_many_arguments)]
pub fn sample_successor<R: Rng + ?Sized>(
    net: &Network,
    schedule: &FireSchedule,
    state: &SystemState,
    switch_after: &[bool],
    abs_flows: &[f64],
    model: &CandidateModel,
    rng: &mut R,
    eps: f64,
) -> Result<SystemState, TransitionError> {
    let explore = rng.random::<f64>() < eps;
    let mut avail = state.avail.clone();
    for (l, line) in net.lines.iter().enumerate() {
        let u = rng.random::<f64>();
        if !state.avail[l] || !line.fire_zone {
            continue;
        }
        let p = if explore {
            0.5
        } else {
            model.survival(net, l, state.fire[l], abs_flows[l])
        };
        avail[l] = u < p;
    }
    let switch_status = net
        .switchable()
        .iter()
        .zip(switch_after)
        .map(|(&l, &z)| z && avail[l])
        .collect();
    let t = state.t + 1;
    Ok(SystemState::new(net, t, avail, schedule.mask(net, t), switch_status)?)
}

/// Low, nominal and high risk candidates (for `n = 3`), shifting the
/// fire-zone `beta` by multiples of `delta` around the nominal value.
pub fn build_candidates(net: &Network, n: usize, delta: f64) -> Result<AmbiguitySet, TransitionError> {
    if n == 0 {
        return Err(TransitionError::EmptyAmbiguity);
    }
    let base = CandidateModel::nominal(net);
    let centre = (n as f64 + 1.0) / 2.0;
    let candidates = (1..=n)
        .map(|i| {
            let shift = (i as f64 - centre) * delta;
            let beta = net
                .lines
                .iter()
                .zip(&base.beta)
                .map(|(line, &b)| if line.fire_zone { (b + shift).max(0.0) } else { b })
                .collect();
            CandidateModel {
                id: i,
                gamma: base.gamma.clone(),
                beta,
            }
        })
        .collect();
    AmbiguitySet::new(candidates, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{chain_network, toy4};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn survival_examples() {
        assert_eq!(survival_prob(0.9989, 3.0, true, true, 0.05), 0.0);
        assert_eq!(survival_prob(0.9989, 3.0, true, false, 0.0), 0.9989);
        assert_relative_eq!(survival_prob(0.9989, 3.0, true, false, 0.1), 0.6989, epsilon = 1e-12);
        assert_eq!(survival_prob(0.9989, 3.0, false, false, 10.0), 1.0);
        assert_eq!(survival_prob(0.9989, 3.0, true, false, 1.0), 0.0);
    }

    #[test]
    fn both_survive_is_gamma_squared() {
        let net = toy4();
        let state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
        let model = CandidateModel::nominal(&net);
        let flows = vec![0.0; net.n_lines()];
        let lines = state.uncertain_lines(&net);
        let p = TransitionPattern {
            survive: lines.clone(),
            fail: vec![],
            stay_dead: 0,
        };
        assert_relative_eq!(
            exact_transition_prob(&net, &state, &flows, &p, &model).unwrap(),
            0.99780121,
            epsilon = 1e-12
        );
        let total: f64 = enumerate_patterns(&lines, 0)
            .unwrap()
            .iter()
            .map(|p| exact_transition_prob(&net, &state, &flows, p, &model).unwrap())
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn resurrection_has_zero_probability() {
        let net = toy4();
        let mut state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
        let l = net.fire_lines()[0];
        state.avail[l] = false;
        if let Some(k) = net.switch_index(l) {
            state.switch_status[k] = false;
        }
        let p = TransitionPattern {
            survive: vec![l],
            fail: vec![],
            stay_dead: 1,
        };
        let model = CandidateModel::nominal(&net);
        let flows = vec![0.0; net.n_lines()];
        assert_eq!(exact_transition_prob(&net, &state, &flows, &p, &model).unwrap(), 0.0);

        let bad = TransitionPattern {
            survive: vec![],
            fail: vec![l],
            stay_dead: 0,
        };
        assert!(exact_transition_prob(&net, &state, &flows, &bad, &model).is_err());
    }

    #[test]
    fn single_line_linearization_is_exact() {
        let net = toy4();
        let state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
        let model = CandidateModel::nominal(&net);
        let l = net.fire_lines()[0];
        let p = TransitionPattern {
            survive: vec![l],
            fail: vec![],
            stay_dead: 0,
        };
        let lin = linearize(net.n_lines(), &p, &model);
        assert_eq!(lin.c0, model.gamma[l]);
        assert_eq!(lin.c[l], -model.beta[l]);
        for f in [0.0, 0.01, 0.07, 0.2] {
            let mut flows = vec![0.0; net.n_lines()];
            flows[l] = f;
            let exact = exact_transition_prob(&net, &state, &flows, &p, &model).unwrap();
            assert_relative_eq!(lin.eval(&flows), exact, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_line_linearization_error_is_second_order() {
        let net = toy4();
        let state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
        let model = CandidateModel::nominal(&net);
        let lines = state.uncertain_lines(&net);
        let mut flows = vec![0.0; net.n_lines()];
        flows[lines[0]] = 0.02;
        flows[lines[1]] = 0.03;
        let s: f64 = lines.iter().map(|&l| model.beta[l] * flows[l]).sum();
        for p in enumerate_patterns(&lines, 0).unwrap() {
            let lin = linearize(net.n_lines(), &p, &model).eval(&flows);
            let exact = exact_transition_prob(&net, &state, &flows, &p, &model).unwrap();
            assert!((lin - exact).abs() <= s * s, "{lin} vs {exact}");
        }
    }

    #[test]
    fn normalization_examples() {
        let out = normalize(&[0.2, 0.2, 0.1]).unwrap();
        for (a, b) in out.iter().zip([0.4, 0.4, 0.2]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(matches!(normalize(&[0.0, -1.0]), Err(TransitionError::DegenerateDistribution)));
        assert_eq!(normalize(&[-0.5, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let lines: Vec<usize> = (0..13).collect();
        assert!(matches!(
            enumerate_patterns(&lines, 0),
            Err(TransitionError::EnumerationCap { k: 13, .. })
        ));
    }

    #[test]
    fn candidate_betas_shift_by_delta() {
        let net = chain_network(3, 3.0);
        let set = build_candidates(&net, 3, 0.5).unwrap();
        let l = net.fire_lines()[0];
        let betas: Vec<f64> = set.candidates.iter().map(|c| c.beta[l]).collect();
        assert_eq!(betas, vec![2.5, 3.0, 3.5]);
        let outside = (0..net.n_lines()).find(|&l| !net.lines[l].fire_zone).unwrap();
        assert!(set.candidates.iter().all(|c| c.beta[outside] == net.lines[outside].beta));
        assert_eq!(set.worst_case(&net).beta[l], 3.5);

        let single = build_candidates(&net, 1, 0.7).unwrap();
        assert_eq!(single.candidates, vec![CandidateModel::nominal(&net)]);

        let low = build_candidates(&chain_network(3, 0.2), 3, 0.5).unwrap();
        assert_eq!(low.candidates[0].beta[l], 0.0);
        assert_relative_eq!(low.candidates[2].beta[l], 0.7, epsilon = 1e-15);

        assert!(build_candidates(&net, 0, 0.5).is_err());
    }

    #[test]
    fn expected_feature_examples() {
        let net = toy4();
        let model = CandidateModel::nominal(&net);
        let k = net.fire_lines().len();
        let fire = vec![false; net.n_lines()];
        let flows = vec![0.0; net.n_lines()];
        let e = expected_features(&net, &vec![true; k], &flows, &fire, &model);
        assert!(e.iter().all(|&x| (x - 0.9989).abs() < 1e-15));
        let e = expected_features(&net, &vec![false; k], &flows, &fire, &model);
        assert!(e.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sampling_is_deterministic_and_respects_certainties() {
        let net = toy4();
        let sched = FireSchedule::empty();
        let state = crate::grid::initial_state(&net, &sched).unwrap();
        let flows = vec![0.0; net.n_lines()];
        let sure = CandidateModel {
            id: 1,
            gamma: vec![1.0; net.n_lines()],
            beta: vec![0.0; net.n_lines()],
        };
        let mut rng = stream_rng(7, 0);
        let next =
            sample_successor(&net, &sched, &state, &state.switch_status, &flows, &sure, &mut rng, 0.0)
                .unwrap();
        assert_eq!(next.avail, state.avail);
        assert_eq!(next.t, 2);

        let mut burning = state.clone();
        let l = net.fire_lines()[0];
        burning.fire[l] = true;
        let next =
            sample_successor(&net, &sched, &burning, &state.switch_status, &flows, &sure, &mut rng, 0.0)
                .unwrap();
        assert!(!next.avail[l]);
        assert!(next.switch_status.iter().zip(net.switchable()).all(|(z, &s)| !*z || next.avail[s]));

        let model = CandidateModel::nominal(&net);
        let draw = |seed| {
            let mut rng = stream_rng(seed, 3);
            sample_successor(&net, &sched, &state, &state.switch_status, &flows, &model, &mut rng, 0.3)
                .unwrap()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn empirical_failure_rate_matches_survival_probability() {
        let net = toy4();
        let sched = FireSchedule::empty();
        let state = crate::grid::initial_state(&net, &sched).unwrap();
        let model = CandidateModel::nominal(&net);
        let l = net.fire_lines()[0];
        let mut flows = vec![0.0; net.n_lines()];
        flows[l] = 0.1;
        let p = model.survival(&net, l, false, 0.1);
        let n = 100_000;
        let mut rng = stream_rng(2024, 0);
        let survived = (0..n)
            .filter(|_| {
                sample_successor(&net, &sched, &state, &state.switch_status, &flows, &model, &mut rng, 0.0)
                    .unwrap()
                    .avail[l]
            })
            .count();
        let freq = survived as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "freq {freq} vs p {p}");
    }

    proptest! {
        #[test]
        fn survival_is_monotone_and_bounded(
            gamma in 0.0f64..=1.0,
            beta in 0.0f64..5.0,
            f in 0.0f64..1.0,
            df in 0.0f64..0.5,
            db in 0.0f64..1.0,
            dg in 0.0f64..0.5,
        ) {
            let p = survival_prob(gamma, beta, true, false, f);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(survival_prob(gamma, beta, true, false, f + df) <= p);
            prop_assert!(survival_prob(gamma, beta + db, true, false, f) <= p);
            prop_assert!(survival_prob((gamma + dg).min(1.0), beta, true, false, f) >= p);
        }

        #[test]
        fn linearization_matches_exact_at_zero_flow(k in 1usize..6, seed in any::<u64>()) {
            let net = chain_network(k, 3.0);
            let state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
            let mut rng = stream_rng(seed, 0);
            let mut model = CandidateModel::nominal(&net);
            for &l in net.fire_lines() {
                model.gamma[l] = rng.random_range(0.5..1.0);
            }
            let flows = vec![0.0; net.n_lines()];
            for p in successor_patterns(&net, &state).unwrap() {
                let exact = exact_transition_prob(&net, &state, &flows, &p, &model).unwrap();
                prop_assert_eq!(linearize(net.n_lines(), &p, &model).eval(&flows), exact);
            }
        }

        #[test]
        fn normalized_distributions_sum_to_one(seed in any::<u64>(), lin in any::<bool>()) {
            let net = chain_network(3, 3.0);
            let state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
            let mut rng = stream_rng(seed, 1);
            let flows: Vec<f64> = (0..net.n_lines()).map(|_| rng.random_range(0.0..0.2)).collect();
            let model = CandidateModel::nominal(&net);
            let patterns = successor_patterns(&net, &state).unwrap();
            let p = normalized_probs(&net, &state, &patterns, &flows, &model, lin).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn expected_features_match_enumeration(seed in any::<u64>()) {
            let net = chain_network(3, 3.0);
            let mut rng = stream_rng(seed, 2);
            let mut state = crate::grid::initial_state(&net, &FireSchedule::empty()).unwrap();
            for &l in net.fire_lines() {
                state.fire[l] = rng.random_bool(0.2);
            }
            let flows: Vec<f64> = (0..net.n_lines()).map(|_| rng.random_range(0.0..0.3)).collect();
            let status: Vec<bool> = net.fire_lines().iter().map(|_| rng.random_bool(0.7)).collect();
            let model = CandidateModel::nominal(&net);
            let fast = expected_features(&net, &status, &flows, &state.fire, &model);
            let mut slow = vec![0.0; status.len()];
            for p in successor_patterns(&net, &state).unwrap() {
                let prob = exact_transition_prob(&net, &state, &flows, &p, &model).unwrap();
                let next = p.successor(&state.avail);
                for (j, &l) in net.fire_lines().iter().enumerate() {
                    if status[j] && next[l] {
                        slow[j] += prob;
                    }
                }
            }
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}

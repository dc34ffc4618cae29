//! Episodic tabular MDPs, policies, exact and sampled evaluation, and the
//! learner's best-response oracle (finite-horizon value iteration).
//!
//! Timesteps run over `h = 0..H`, with one reward collected per step.
//! Transitions and rewards are time-invariant; policies are time-indexed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupSet, Membership};
use crate::regulator::LagrangeWeights;
use crate::rng::{self, SolverRng};

/// Tolerance used when validating probability vectors.
pub const PROB_TOL: f64 = 1e-9;

/// Ties in value iteration resolve to the lowest action unless an action
/// beats the incumbent by more than this.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Indexed `(s * A + a) * S + s'`.
    transitions: Vec<f64>,
    /// Indexed `s * A + a`.
    rewards: Vec<f64>,
    initial: Vec<f64>,
    features: Vec<Vec<bool>>,
}

/// On-disk layout of an MDP: dense nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub features: Vec<Vec<u8>>,
}

fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    for (i, &p) in row.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::config(format!("{} has invalid entry {p} at index {i}", what())));
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::config(format!("{} sums to {sum}, expected 1", what())));
    }
    Ok(())
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<Self> {
        let MdpFile { num_states, num_actions, horizon, transitions, rewards, initial_dist, features } = file;
        let mut feature_rows = Vec::with_capacity(features.len());
        for (s, row) in features.into_iter().enumerate() {
            let mut bits = Vec::with_capacity(row.len());
            for (j, b) in row.into_iter().enumerate() {
                match b {
                    0 => bits.push(false),
                    1 => bits.push(true),
                    other => {
                        return Err(Error::config(format!("features[{s}][{j}] is {other}, expected 0 or 1")))
                    }
                }
            }
            feature_rows.push(bits);
        }
        let mdp = TabularMdp::new(transitions, rewards, initial_dist, feature_rows, horizon)?;
        if mdp.num_states != num_states || mdp.num_actions != num_actions {
            return Err(Error::config(format!(
                "declared {num_states} states x {num_actions} actions but tables have {} x {}",
                mdp.num_states, mdp.num_actions
            )));
        }
        Ok(mdp)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(mdp: TabularMdp) -> Self {
        let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
        MdpFile {
            num_states: s_n,
            num_actions: a_n,
            horizon: mdp.horizon,
            transitions: (0..s_n)
                .map(|s| (0..a_n).map(|a| mdp.transition_row(s, a).to_vec()).collect())
                .collect(),
            rewards: (0..s_n).map(|s| mdp.rewards[s * a_n..(s + 1) * a_n].to_vec()).collect(),
            initial_dist: mdp.initial.clone(),
            features: mdp.features.iter().map(|x| x.iter().map(|&b| u8::from(b)).collect()).collect(),
        }
    }
}

impl TabularMdp {
    /// Builds and validates an MDP. `transitions[s][a][s']`, `rewards[s][a]`.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
        features: Vec<Vec<bool>>,
        horizon: usize,
    ) -> Result<Self> {
        let num_states = transitions.len();
        if num_states == 0 {
            return Err(Error::config("an MDP needs at least one state"));
        }
        let num_actions = transitions[0].len();
        if num_actions == 0 {
            return Err(Error::config("an MDP needs at least one action"));
        }
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, per_action) in transitions.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::config(format!(
                    "transitions[{s}] lists {} actions, expected {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::config(format!(
                        "transitions[{s}][{a}] has length {}, expected {num_states}",
                        row.len()
                    )));
                }
                check_distribution(row, || format!("transitions[{s}][{a}]"))?;
                flat_p.extend_from_slice(row);
            }
        }
        if rewards.len() != num_states {
            return Err(Error::config(format!("rewards has {} rows, expected {num_states}", rewards.len())));
        }
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::config(format!(
                    "rewards[{s}] has length {}, expected {num_actions}",
                    row.len()
                )));
            }
            for (a, &r) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::config(format!("rewards[{s}][{a}] = {r} lies outside [0, 1]")));
                }
            }
            flat_r.extend_from_slice(row);
        }
        if initial.len() != num_states {
            return Err(Error::config(format!(
                "initial_dist has length {}, expected {num_states}",
                initial.len()
            )));
        }
        check_distribution(&initial, || "initial_dist".to_string())?;
        if features.len() != num_states {
            return Err(Error::config(format!("features has {} rows, expected {num_states}", features.len())));
        }
        let dim = features[0].len();
        if let Some(s) = features.iter().position(|x| x.len() != dim) {
            return Err(Error::config(format!(
                "features[{s}] has dimension {}, expected {dim}",
                features[s].len()
            )));
        }
        Ok(TabularMdp {
            num_states,
            num_actions,
            horizon,
            transitions: flat_p,
            rewards: flat_r,
            initial,
            features,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<bool>] {
        &self.features
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    /// Same dynamics with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        TabularMdp { horizon, ..self.clone() }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Time-indexed stochastic policy; `rule(h, s)` is a distribution over actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// Indexed `(h * S + s) * A + a`.
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    num_states: usize,
    num_actions: usize,
    rules: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = Error;

    fn try_from(file: PolicyFile) -> Result<Self> {
        Policy::from_rules(file.rules, file.num_states, file.num_actions)
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        let rules = (0..p.horizon)
            .map(|h| (0..p.num_states).map(|s| p.rule(h, s).to_vec()).collect())
            .collect();
        PolicyFile { num_states: p.num_states, num_actions: p.num_actions, rules }
    }
}

impl Policy {
    /// `rules[h][s][a]`. The state and action counts are passed explicitly so
    /// zero-horizon policies still know their shape.
    pub fn from_rules(rules: Vec<Vec<Vec<f64>>>, num_states: usize, num_actions: usize) -> Result<Self> {
        let horizon = rules.len();
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for (h, per_state) in rules.iter().enumerate() {
            if per_state.len() != num_states {
                return Err(Error::config(format!(
                    "policy step {h} covers {} states, expected {num_states}",
                    per_state.len()
                )));
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != num_actions {
                    return Err(Error::config(format!(
                        "policy rule ({h}, {s}) has {} actions, expected {num_actions}",
                        row.len()
                    )));
                }
                check_distribution(row, || format!("policy rule ({h}, {s})"))?;
                probs.extend_from_slice(row);
            }
        }
        Ok(Policy { horizon, num_states, num_actions, probs })
    }

    /// Deterministic policy from `actions[h][s]`.
    pub fn deterministic(actions: &[Vec<usize>], num_states: usize, num_actions: usize) -> Result<Self> {
        let horizon = actions.len();
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (h, row) in actions.iter().enumerate() {
            if row.len() != num_states {
                return Err(Error::config(format!(
                    "action table step {h} covers {} states, expected {num_states}",
                    row.len()
                )));
            }
            for (s, &a) in row.iter().enumerate() {
                if a >= num_actions {
                    return Err(Error::config(format!("action {a} at ({h}, {s}) exceeds {num_actions} actions")));
                }
                probs[(h * num_states + s) * num_actions + a] = 1.0;
            }
        }
        Ok(Policy { horizon, num_states, num_actions, probs })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Policy { horizon, num_states, num_actions, probs: vec![p; horizon * num_states * num_actions] }
    }

    /// Always plays `action`.
    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, action: usize) -> Result<Self> {
        Policy::deterministic(&vec![vec![action; num_states]; horizon], num_states, num_actions)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn rule(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// `actions[h][s]` when every rule is a point mass.
    pub fn action_table(&self) -> Option<Vec<Vec<usize>>> {
        (0..self.horizon)
            .map(|h| {
                (0..self.num_states)
                    .map(|s| {
                        let rule = self.rule(h, s);
                        rule.iter().position(|&p| p == 1.0)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.horizon != mdp.horizon || self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(Error::config(format!(
                "policy shape (H={}, S={}, A={}) does not match MDP (H={}, S={}, A={})",
                self.horizon, self.num_states, self.num_actions, mdp.horizon, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

/// Finitely supported distribution over policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMixture {
    support: Vec<Policy>,
    weights: Vec<f64>,
}

impl PolicyMixture {
    pub fn new(support: Vec<Policy>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::config("policy mixture needs a nonempty support"));
        }
        if support.len() != weights.len() {
            return Err(Error::config(format!(
                "mixture has {} policies but {} weights",
                support.len(),
                weights.len()
            )));
        }
        check_distribution(&weights, || "mixture weights".to_string())?;
        Ok(PolicyMixture { support, weights })
    }

    pub fn point(policy: Policy) -> Self {
        PolicyMixture { support: vec![policy], weights: vec![1.0] }
    }

    pub fn support(&self) -> &[Policy] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Policy, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        self.support.iter().try_for_each(|p| p.check_compatible(mdp))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

fn rollout(mdp: &TabularMdp, policy: &Policy, rng: &mut SolverRng, len: usize) -> Trajectory {
    let mut steps = Vec::with_capacity(len);
    if len == 0 {
        return Trajectory { steps };
    }
    let mut s = rng::sample_index(rng, &mdp.initial);
    for h in 0..len {
        let a = rng::sample_index(rng, policy.rule(h, s));
        let r = mdp.reward(s, a);
        steps.push(Step { state: s, action: a, reward: r });
        if h + 1 < len {
            s = rng::sample_index(rng, mdp.transition_row(s, a));
        }
    }
    Trajectory { steps }
}

/// Rolls one episode: `s_0 ~ μ`, `a_h ~ π_h(s_h)`, `s_{h+1} ~ P(·|s_h, a_h)`.
pub fn sample_trajectory(mdp: &TabularMdp, policy: &Policy, rng_seed: u64) -> Result<Trajectory> {
    policy.check_compatible(mdp)?;
    let mut rng = rng::seeded(rng_seed);
    Ok(rollout(mdp, policy, &mut rng, mdp.horizon))
}

/// Episode starting from `rng`, truncated after `len` steps.
pub(crate) fn rollout_with(mdp: &TabularMdp, policy: &Policy, rng: &mut SolverRng, len: usize) -> Trajectory {
    rollout(mdp, policy, rng, len)
}

/// Expected cumulative reward in total and per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupValues {
    pub total: f64,
    pub groups: Vec<f64>,
}

impl GroupValues {
    fn zeros(num_groups: usize) -> Self {
        GroupValues { total: 0.0, groups: vec![0.0; num_groups] }
    }

    fn add_scaled(&mut self, other: &GroupValues, w: f64) {
        self.total += w * other.total;
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            *a += w * b;
        }
    }

    /// Per-step averages (`V / H`).
    pub fn per_step(&self, horizon: usize) -> GroupValues {
        let scale = if horizon == 0 { 0.0 } else { 1.0 / horizon as f64 };
        GroupValues { total: self.total * scale, groups: self.groups.iter().map(|v| v * scale).collect() }
    }

    pub fn min_group(&self) -> f64 {
        self.groups.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_group(&self) -> f64 {
        self.groups.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Time-indexed state distributions `d_h(s)` for `h = 0..H`.
pub fn state_distributions(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let mut out = Vec::with_capacity(mdp.horizon);
    let mut d = mdp.initial.clone();
    for h in 0..mdp.horizon {
        let mut next = vec![0.0; s_n];
        if h + 1 < mdp.horizon {
            for s in 0..s_n {
                if d[s] == 0.0 {
                    continue;
                }
                for a in 0..a_n {
                    let w = d[s] * policy.rule(h, s)[a];
                    if w == 0.0 {
                        continue;
                    }
                    for (n, p) in next.iter_mut().zip(mdp.transition_row(s, a)) {
                        *n += w * p;
                    }
                }
            }
        }
        out.push(std::mem::replace(&mut d, next));
    }
    out
}

/// Expected reward collected at each state over one episode.
fn reward_by_state(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    let mut out = vec![0.0; mdp.num_states];
    for (h, d) in state_distributions(mdp, policy).iter().enumerate() {
        for s in 0..mdp.num_states {
            let expected_r: f64 = policy.rule(h, s).iter().enumerate().map(|(a, p)| p * mdp.reward(s, a)).sum();
            out[s] += d[s] * expected_r;
        }
    }
    out
}

/// Binds an MDP to a group set so repeated evaluations share one membership table.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    mdp: &'a TabularMdp,
    membership: Membership,
}

impl<'a> Evaluator<'a> {
    pub fn new(mdp: &'a TabularMdp, groups: &GroupSet) -> Result<Self> {
        Ok(Evaluator { mdp, membership: groups.membership(mdp.features())? })
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn num_groups(&self) -> usize {
        self.membership.num_groups()
    }

    pub fn values(&self, policy: &Policy) -> Result<GroupValues> {
        policy.check_compatible(self.mdp)?;
        let per_state = reward_by_state(self.mdp, policy);
        Ok(GroupValues {
            total: per_state.iter().sum(),
            groups: (0..self.num_groups()).map(|g| self.membership.dot(g, &per_state)).collect(),
        })
    }

    pub fn mixture_values(&self, mixture: &PolicyMixture) -> Result<GroupValues> {
        let mut acc = GroupValues::zeros(self.num_groups());
        for (p, w) in mixture.iter() {
            acc.add_scaled(&self.values(p)?, w);
        }
        Ok(acc)
    }

    pub fn monte_carlo(&self, mixture: &PolicyMixture, num_episodes: usize, rng_seed: u64) -> Result<MonteCarloEstimate> {
        if num_episodes == 0 {
            return Err(Error::config("monte carlo evaluation needs at least one episode"));
        }
        mixture.check_compatible(self.mdp)?;
        let k = self.num_groups();
        let samples: Vec<Vec<f64>> = (0..num_episodes as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(rng_seed, i);
                let pick = rng::sample_index(&mut rng, &mixture.weights);
                let traj = rollout(self.mdp, &mixture.support[pick], &mut rng, self.mdp.horizon);
                let mut row = vec![0.0; k + 1];
                for step in &traj.steps {
                    row[k] += step.reward;
                    for (g, slot) in row.iter_mut().take(k).enumerate() {
                        if self.membership.contains(g, step.state) {
                            *slot += step.reward;
                        }
                    }
                }
                row
            })
            .collect();
        let n = num_episodes as f64;
        let mut mean = vec![0.0; k + 1];
        for row in &samples {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k + 1];
        if num_episodes > 1 {
            for row in &samples {
                for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - m).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v /= n - 1.0);
        }
        let se: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        Ok(MonteCarloEstimate {
            mean: GroupValues { total: mean[k], groups: mean[..k].to_vec() },
            std_error: GroupValues { total: se[k], groups: se[..k].to_vec() },
        })
    }
}

/// Exact `V^tot(π)` and `V^g(π)` by propagating the time-indexed state distribution.
pub fn exact_values(mdp: &TabularMdp, policy: &Policy, groups: &GroupSet) -> Result<GroupValues> {
    Evaluator::new(mdp, groups)?.values(policy)
}

/// Weight-averaged exact values of a mixture.
pub fn mixture_values(mdp: &TabularMdp, mixture: &PolicyMixture, groups: &GroupSet) -> Result<GroupValues> {
    Evaluator::new(mdp, groups)?.mixture_values(mixture)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: GroupValues,
    pub std_error: GroupValues,
}

/// Sample means and standard errors of episode returns under `π ~ D`.
pub fn monte_carlo_group_values(
    mdp: &TabularMdp,
    mixture: &PolicyMixture,
    groups: &GroupSet,
    num_episodes: usize,
    rng_seed: u64,
) -> Result<MonteCarloEstimate> {
    Evaluator::new(mdp, groups)?.monte_carlo(mixture, num_episodes, rng_seed)
}

/// Lagrangian reward `r_λ(s,a) = r(s,a)(1 + Σ_g λ^g g(s)) − (α/H) Σ_g λ^g`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarizedReward {
    num_actions: usize,
    table: Vec<f64>,
    pub alpha: f64,
    pub lambda: LagrangeWeights,
}

impl ScalarizedReward {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

pub(crate) fn scalarize_with(
    mdp: &TabularMdp,
    membership: &Membership,
    lambda: &LagrangeWeights,
    alpha: f64,
) -> Result<ScalarizedReward> {
    if lambda.len() != membership.num_groups() {
        return Err(Error::config(format!(
            "multiplier vector has {} entries for {} groups",
            lambda.len(),
            membership.num_groups()
        )));
    }
    let offset = if mdp.horizon == 0 { 0.0 } else { alpha / mdp.horizon as f64 * lambda.total() };
    let mut table = Vec::with_capacity(mdp.num_states * mdp.num_actions);
    for s in 0..mdp.num_states {
        let boost: f64 =
            lambda.values().iter().enumerate().filter(|(g, _)| membership.contains(*g, s)).map(|(_, l)| l).sum();
        for a in 0..mdp.num_actions {
            table.push(mdp.reward(s, a) * (1.0 + boost) - offset);
        }
    }
    Ok(ScalarizedReward { num_actions: mdp.num_actions, table, alpha, lambda: lambda.clone() })
}

pub fn scalarize(mdp: &TabularMdp, groups: &GroupSet, lambda: &LagrangeWeights, alpha: f64) -> Result<ScalarizedReward> {
    scalarize_with(mdp, &groups.membership(mdp.features())?, lambda, alpha)
}

/// Optimal deterministic policy for an arbitrary `(s, a)` reward table.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub policy: Policy,
    /// `E_{s_0 ~ μ}[V_0(s_0)]`.
    pub value: f64,
}

/// Backward induction `Q_h = r + P V_{h+1}`, `V_H = 0`; lowest action wins ties.
pub fn value_iteration(mdp: &TabularMdp, reward: &[f64]) -> Result<PlanResult> {
    let (s_n, a_n, horizon) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    if reward.len() != s_n * a_n {
        return Err(Error::config(format!(
            "reward table has {} entries, expected {}",
            reward.len(),
            s_n * a_n
        )));
    }
    let mut actions = vec![vec![0usize; s_n]; horizon];
    let mut v_next = vec![0.0; s_n];
    for h in (0..horizon).rev() {
        let mut v = vec![0.0; s_n];
        for s in 0..s_n {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..a_n {
                let cont: f64 = mdp.transition_row(s, a).iter().zip(&v_next).map(|(p, w)| p * w).sum();
                let q = reward[s * a_n + a] + cont;
                if q > best_q + TIE_TOL * (1.0 + best_q.abs()) || best_q == f64::NEG_INFINITY {
                    best_q = q;
                    best_a = a;
                }
            }
            actions[h][s] = best_a;
            v[s] = best_q;
        }
        v_next = v;
    }
    let value = if horizon == 0 { 0.0 } else { mdp.initial.iter().zip(&v_next).map(|(p, v)| p * v).sum() };
    Ok(PlanResult { policy: Policy::deterministic(&actions, s_n, a_n)?, value })
}

/// Learner best response: the optimal policy of the scalarized MDP `M_λ`.
pub fn best_response_policy(
    mdp: &TabularMdp,
    groups: &GroupSet,
    lambda: &LagrangeWeights,
    alpha: f64,
) -> Result<Policy> {
    let reward = scalarize(mdp, groups, lambda, alpha)?;
    Ok(value_iteration(mdp, reward.table())?.policy)
}

/// Exact expected return of `policy` under an arbitrary reward table.
pub fn policy_return(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Result<f64> {
    policy.check_compatible(mdp)?;
    let a_n = mdp.num_actions;
    let mut total = 0.0;
    for (h, d) in state_distributions(mdp, policy).iter().enumerate() {
        for s in 0..mdp.num_states {
            let r: f64 = policy.rule(h, s).iter().enumerate().map(|(a, p)| p * reward[s * a_n + a]).sum();
            total += d[s] * r;
        }
    }
    Ok(total)
}

/// Normalized visit counts over all `H * num_episodes` sampled states.
pub fn occupancy_distribution(
    mdp: &TabularMdp,
    mixture: &PolicyMixture,
    num_episodes: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if num_episodes == 0 {
        return Err(Error::config("occupancy estimation needs at least one episode"));
    }
    mixture.check_compatible(mdp)?;
    if mdp.horizon == 0 {
        return Ok(mdp.initial.clone());
    }
    let counts: Vec<Vec<u64>> = (0..num_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(rng_seed, i);
            let pick = rng::sample_index(&mut rng, &mixture.weights);
            let mut c = vec![0u64; mdp.num_states];
            for step in rollout(mdp, &mixture.support[pick], &mut rng, mdp.horizon).steps {
                c[step.state] += 1;
            }
            c
        })
        .collect();
    let mut totals = vec![0u64; mdp.num_states];
    for c in &counts {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n = (num_episodes * mdp.horizon) as f64;
    Ok(totals.into_iter().map(|c| c as f64 / n).collect())
}

/// Exact time-averaged state occupancy `(1/H) Σ_h d_h` of a mixture.
pub fn exact_occupancy(mdp: &TabularMdp, mixture: &PolicyMixture) -> Result<Vec<f64>> {
    mixture.check_compatible(mdp)?;
    if mdp.horizon == 0 {
        return Ok(mdp.initial.clone());
    }
    let mut occ = vec![0.0; mdp.num_states];
    for (p, w) in mixture.iter() {
        for d in state_distributions(mdp, p) {
            for (o, x) in occ.iter_mut().zip(d) {
                *o += w * x / mdp.horizon as f64;
            }
        }
    }
    Ok(occ)
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(dist: &[f64]) -> f64 {
    dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

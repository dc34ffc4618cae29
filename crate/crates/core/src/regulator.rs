//! Regulator strategies. Each produces multipliers `λ ∈ Λ = {λ ≥ 0, ‖λ‖₁ ≤ C}`
//! that are either zero or a full-budget vertex `C·e_k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{argmax_lowest, argmin_lowest, Context, GroupSet, Membership};
use crate::mdp::{rollout_with, Evaluator, PolicyMixture, TabularMdp};
use crate::rng::{self, SolverRng};

const BUDGET_TOL: f64 = 1e-9;

/// Nonnegative multipliers over groups with `Σ λ^g ≤ C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeWeights {
    values: Vec<f64>,
    bound: f64,
}

impl LagrangeWeights {
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::config(format!("multiplier bound must be positive, got {bound}")));
        }
        if let Some(g) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config(format!("multiplier for group {g} is {}, expected >= 0", values[g])));
        }
        let total: f64 = values.iter().sum();
        if total > bound + BUDGET_TOL {
            return Err(Error::config(format!("multipliers sum to {total}, exceeding the bound {bound}")));
        }
        Ok(LagrangeWeights { values, bound })
    }

    pub fn zero(num_groups: usize, bound: f64) -> Result<Self> {
        LagrangeWeights::new(vec![0.0; num_groups], bound)
    }

    /// `C·e_k`.
    pub fn vertex(num_groups: usize, k: usize, bound: f64) -> Result<Self> {
        if k >= num_groups {
            return Err(Error::config(format!("group {k} out of range for {num_groups} groups")));
        }
        let mut values = vec![0.0; num_groups];
        values[k] = bound;
        LagrangeWeights::new(values, bound)
    }

    /// Componentwise mean; stays in `Λ` by convexity.
    pub fn average<'a>(items: impl IntoIterator<Item = &'a LagrangeWeights>) -> Result<Self> {
        let mut iter = items.into_iter();
        let first = iter.next().ok_or_else(|| Error::config("cannot average zero multiplier vectors"))?;
        let mut sum = first.values.clone();
        let mut n = 1.0;
        for w in iter {
            for (s, v) in sum.iter_mut().zip(&w.values) {
                *s += v;
            }
            n += 1.0;
        }
        sum.iter_mut().for_each(|s| *s /= n);
        LagrangeWeights::new(sum, first.bound)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Zeroes every coordinate outside `keep`.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        LagrangeWeights {
            values: self.values.iter().zip(keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
            bound: self.bound,
        }
    }
}

/// Regulator best response: zero when every group meets `α`, otherwise the
/// full budget on the group with the smallest value.
pub fn best_response_lambda(group_values: &[f64], alpha: f64, bound: f64) -> Result<LagrangeWeights> {
    if group_values.is_empty() {
        return Err(Error::config("best response needs at least one group value"));
    }
    if group_values.iter().all(|&v| v >= alpha) {
        return LagrangeWeights::zero(group_values.len(), bound);
    }
    LagrangeWeights::vertex(group_values.len(), argmin_lowest(group_values), bound)
}

/// One round's choice.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulatorStep {
    pub group: usize,
    pub lambda: LagrangeWeights,
}

fn check_unit_cost(cost: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&cost) {
        return Err(Error::config(format!("observed cost {cost} lies outside [0, 1]")));
    }
    Ok(())
}

/// Follow the perturbed leader over states: each round picks
/// `Lin-OPT(c^{<t} + N^t)` with `N^t ~ U([0, 1/η]^S)`, then observes the cost
/// at the single sampled state.
#[derive(Clone, Debug)]
pub struct FtplState {
    cumulative: Vec<f64>,
    eta: f64,
    round: usize,
    bound: f64,
    noise: bool,
    rng: SolverRng,
}

impl FtplState {
    /// `η = sqrt(C / (2|S|T))`.
    pub fn new(num_states: usize, bound: f64, horizon_t: usize, seed: u64) -> Result<Self> {
        if horizon_t == 0 {
            return Err(Error::config("FTPL needs T >= 1"));
        }
        if num_states == 0 {
            return Err(Error::config("FTPL needs at least one state"));
        }
        if !(bound > 0.0) {
            return Err(Error::config(format!("FTPL bound must be positive, got {bound}")));
        }
        let eta = (bound / (2.0 * num_states as f64 * horizon_t as f64)).sqrt();
        Ok(FtplState { cumulative: vec![0.0; num_states], eta, round: 0, bound, noise: true, rng: rng::seeded(seed) })
    }

    /// Disables the perturbation, turning the strategy into follow-the-leader.
    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Picks `g_t` from costs strictly before this round.
    pub fn select(&mut self, membership: &Membership) -> Result<usize> {
        let scale = 1.0 / self.eta;
        let perturbed: Vec<f64> = if self.noise {
            self.cumulative.iter().map(|c| c + self.rng.gen::<f64>() * scale).collect()
        } else {
            self.cumulative.clone()
        };
        membership.lin_opt(&perturbed)
    }

    pub fn observe(&mut self, state: usize, cost: f64) -> Result<()> {
        check_unit_cost(cost)?;
        let slot = self
            .cumulative
            .get_mut(state)
            .ok_or_else(|| Error::config(format!("state {state} out of range")))?;
        *slot += cost;
        self.round += 1;
        Ok(())
    }

    pub fn step(&mut self, membership: &Membership, state: usize, cost: f64) -> Result<RegulatorStep> {
        check_unit_cost(cost)?;
        let group = self.select(membership)?;
        self.observe(state, cost)?;
        Ok(RegulatorStep { group, lambda: LagrangeWeights::vertex(membership.num_groups(), group, self.bound)? })
    }
}

/// `ρ = sqrt(ln|G| / (T·sqrt(d)))`.
pub fn contextual_rate(num_groups: usize, horizon_t: usize, separator_len: usize) -> f64 {
    ((num_groups as f64).ln() / (horizon_t as f64 * (separator_len as f64).sqrt())).sqrt()
}

fn separator_table(groups: &GroupSet) -> Result<Vec<Vec<bool>>> {
    let sep = groups
        .separator()
        .ok_or_else(|| Error::config("contextual FTPL requires a group set with a verified separator"))?;
    groups
        .iter()
        .map(|g| sep.points.iter().map(|x| g.evaluate(Context::Point(x))).collect())
        .collect()
}

fn draw_laplace(rng: &mut SolverRng, rate: f64, n: usize, noise: bool) -> Vec<f64> {
    if !noise || rate == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| rng::laplace(rng, rate)).collect()
}

/// Contextual FTPL: noise lives on separator points. Round `t` solves
/// `OPT(s_{1:t-1} ‖ x_{1:d}, y_{1:t-1} ‖ η_{1:d})` with fresh `η_j ~ Lap(ρ)`.
///
/// The per-group history sums are kept incrementally, which is the same
/// objective as replaying the full sequence through `opt_seq`.
#[derive(Clone, Debug)]
pub struct CtxFtplState {
    history: Vec<(usize, f64)>,
    history_cost: Vec<f64>,
    state_membership: Membership,
    separator_membership: Vec<Vec<bool>>,
    rate: f64,
    bound: f64,
    noise: bool,
    rng: SolverRng,
    last_noise: Vec<f64>,
}

impl CtxFtplState {
    pub fn new(groups: &GroupSet, features: &[Vec<bool>], bound: f64, horizon_t: usize, seed: u64) -> Result<Self> {
        if horizon_t == 0 {
            return Err(Error::config("contextual FTPL needs T >= 1"));
        }
        if !(bound > 0.0) {
            return Err(Error::config(format!("contextual FTPL bound must be positive, got {bound}")));
        }
        let separator_membership = separator_table(groups)?;
        let d = separator_membership.first().map_or(0, Vec::len);
        let rate = contextual_rate(groups.len(), horizon_t, d.max(1));
        Ok(CtxFtplState {
            history: Vec::new(),
            history_cost: vec![0.0; groups.len()],
            state_membership: groups.membership(features)?,
            separator_membership,
            rate,
            bound,
            noise: true,
            rng: rng::seeded(seed),
            last_noise: Vec::new(),
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    /// Noise drawn in the most recent selection.
    pub fn last_noise(&self) -> &[f64] {
        &self.last_noise
    }

    /// Selection for a given noise vector, without consuming randomness.
    pub fn select_with_noise(&self, eta: &[f64]) -> usize {
        let scores: Vec<f64> = self
            .history_cost
            .iter()
            .zip(&self.separator_membership)
            .map(|(c, sep)| c + sep.iter().zip(eta).filter(|(m, _)| **m).map(|(_, e)| e).sum::<f64>())
            .collect();
        argmin_lowest(&scores)
    }

    pub fn select(&mut self) -> usize {
        let d = self.separator_membership.first().map_or(0, Vec::len);
        self.last_noise = draw_laplace(&mut self.rng, self.rate, d, self.noise);
        self.select_with_noise(&self.last_noise.clone())
    }

    pub fn observe(&mut self, state: usize, reward: f64) -> Result<()> {
        check_unit_cost(reward)?;
        if state >= self.state_membership.num_states() {
            return Err(Error::config(format!("state {state} out of range")));
        }
        self.history.push((state, reward));
        for (g, c) in self.history_cost.iter_mut().enumerate() {
            if self.state_membership.contains(g, state) {
                *c += reward;
            }
        }
        Ok(())
    }

    pub fn step(&mut self, state: usize, reward: f64) -> Result<RegulatorStep> {
        check_unit_cost(reward)?;
        let group = self.select();
        self.observe(state, reward)?;
        Ok(RegulatorStep {
            group,
            lambda: LagrangeWeights::vertex(self.history_cost.len(), group, self.bound)?,
        })
    }
}

/// Contextual FTPL over clipped per-group violations. Each round selects the
/// group with the largest perturbed cumulative violation, then records the
/// caller's violation estimates for every group.
#[derive(Clone, Debug)]
pub struct CtxFtplErrCancState {
    cumulative: Vec<f64>,
    separator_membership: Vec<Vec<bool>>,
    rate: f64,
    bound: f64,
    noise: bool,
    rng: SolverRng,
    round: usize,
}

impl CtxFtplErrCancState {
    pub fn new(groups: &GroupSet, bound: f64, horizon_t: usize, seed: u64) -> Result<Self> {
        if horizon_t == 0 {
            return Err(Error::config("contextual FTPL needs T >= 1"));
        }
        if !(bound > 0.0) {
            return Err(Error::config(format!("contextual FTPL bound must be positive, got {bound}")));
        }
        let separator_membership = separator_table(groups)?;
        let d = separator_membership.first().map_or(0, Vec::len);
        Ok(CtxFtplErrCancState {
            cumulative: vec![0.0; groups.len()],
            separator_membership,
            rate: contextual_rate(groups.len(), horizon_t, d.max(1)),
            bound,
            noise: true,
            rng: rng::seeded(seed),
            round: 0,
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn select(&mut self) -> usize {
        let d = self.separator_membership.first().map_or(0, Vec::len);
        let eta = draw_laplace(&mut self.rng, self.rate, d, self.noise);
        let scores: Vec<f64> = self
            .cumulative
            .iter()
            .zip(&self.separator_membership)
            .map(|(c, sep)| -c + sep.iter().zip(&eta).filter(|(m, _)| **m).map(|(_, e)| e).sum::<f64>())
            .collect();
        argmin_lowest(&scores)
    }

    pub fn observe(&mut self, estimated_costs: &[f64]) -> Result<()> {
        if estimated_costs.len() != self.cumulative.len() {
            return Err(Error::config(format!(
                "expected {} violation estimates, got {}",
                self.cumulative.len(),
                estimated_costs.len()
            )));
        }
        if let Some(g) = estimated_costs.iter().position(|c| !(*c >= 0.0)) {
            return Err(Error::config(format!(
                "clipped violation for group {g} is {}, expected >= 0",
                estimated_costs[g]
            )));
        }
        for (acc, c) in self.cumulative.iter_mut().zip(estimated_costs) {
            *acc += c;
        }
        self.round += 1;
        Ok(())
    }

    pub fn step(&mut self, estimated_costs: &[f64]) -> Result<RegulatorStep> {
        if let Some(g) = estimated_costs.iter().position(|c| !(*c >= 0.0)) {
            return Err(Error::config(format!(
                "clipped violation for group {g} is {}, expected >= 0",
                estimated_costs[g]
            )));
        }
        let group = self.select();
        self.observe(estimated_costs)?;
        Ok(RegulatorStep { group, lambda: LagrangeWeights::vertex(self.cumulative.len(), group, self.bound)? })
    }
}

/// `ĥ^g = max{α/H − (1/n) Σ_i y_i g(s_i), 0}` from `n` independent
/// (trajectory, uniform timestep) samples under `D`.
pub fn estimate_clipped_violations(
    mdp: &TabularMdp,
    mixture: &PolicyMixture,
    groups: &GroupSet,
    alpha: f64,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let eval = Evaluator::new(mdp, groups)?;
    clipped_violations_with(&eval, mixture, alpha, n, rng_seed)
}

pub(crate) fn clipped_violations_with(
    eval: &Evaluator<'_>,
    mixture: &PolicyMixture,
    alpha: f64,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let mdp = eval.mdp();
    if n == 0 {
        return Err(Error::config("violation estimation needs n >= 1"));
    }
    if mdp.horizon() == 0 {
        return Err(Error::config("violation estimation needs a positive horizon"));
    }
    for p in mixture.support() {
        p.check_compatible(mdp)?;
    }
    let k = eval.num_groups();
    let mut sums = vec![0.0; k];
    for i in 0..n as u64 {
        let mut rng = rng::stream(rng_seed, i);
        let pick = rng::sample_index(&mut rng, mixture.weights());
        let h = rng.gen_range(0..mdp.horizon());
        let traj = rollout_with(mdp, &mixture.support()[pick], &mut rng, h + 1);
        let step = traj.steps[h];
        for (g, s) in sums.iter_mut().enumerate() {
            if eval.membership().contains(g, step.state) {
                *s += step.reward;
            }
        }
    }
    let target = alpha / mdp.horizon() as f64;
    Ok(sums.iter().map(|s| (target - s / n as f64).max(0.0)).collect())
}

/// Regulator side of the payoff: the multiplier on the most violated group,
/// or zero when no clipped violation is positive.
pub fn clipped_best_response(violations: &[f64], bound: f64) -> Result<LagrangeWeights> {
    if violations.iter().all(|&v| v <= 0.0) {
        return LagrangeWeights::zero(violations.len(), bound);
    }
    LagrangeWeights::vertex(violations.len(), argmax_lowest(violations), bound)
}

/// Running regret of an online group selector against the best fixed group,
/// where round `t` incurs `cost_t · g_t(s_t)`.
#[derive(Clone, Debug)]
pub struct RegretTracker {
    incurred: f64,
    per_group: Vec<f64>,
    rounds: usize,
}

impl RegretTracker {
    pub fn new(num_groups: usize) -> Self {
        RegretTracker { incurred: 0.0, per_group: vec![0.0; num_groups], rounds: 0 }
    }

    pub fn record(&mut self, membership: &Membership, chosen: usize, state: usize, cost: f64) {
        if membership.contains(chosen, state) {
            self.incurred += cost;
        }
        for (g, acc) in self.per_group.iter_mut().enumerate() {
            if membership.contains(g, state) {
                *acc += cost;
            }
        }
        self.rounds += 1;
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn regret(&self) -> f64 {
        self.incurred - self.per_group.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn average_regret(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.regret() / self.rounds as f64
        }
    }
}

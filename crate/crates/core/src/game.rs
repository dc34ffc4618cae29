//! Zero-sum game dynamics between a learner (policy mixtures) and a
//! regulator (multipliers), with the objectives, transcripts and diagnostics
//! that go with them.
//!
//! All values inside a transcript are exact unless noted. Fields named
//! `avg_*` are per-step averages (`V / H`); everything else is cumulative.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupSet;
use crate::mdp::{
    rollout_with, scalarize_with, value_iteration, Evaluator, GroupValues, Policy, PolicyMixture, TabularMdp,
};
use crate::regulator::{
    best_response_lambda, clipped_best_response, clipped_violations_with, CtxFtplErrCancState, CtxFtplState,
    FtplState, LagrangeWeights,
};
use crate::rng::{self, derive_seed};

const SEED_EVAL: u64 = 0x6576_616c;
const SEED_SAMPLE: u64 = 0x7361_6d70;
const SEED_REGULATOR: u64 = 0x7265_6775;
const SEED_RETRY: u64 = 0x7265_7472;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Cumulative threshold `α`; the per-step threshold is `α / H`.
    pub alpha: f64,
    /// Multiplier budget `C`.
    pub bound: f64,
    /// Number of rounds `T`.
    pub iterations: usize,
    /// Learner suboptimality allowance. Tabular best responses are exact.
    pub learner_epsilon: f64,
    /// Episodes `m` per Monte Carlo regulator evaluation.
    pub eval_episodes: usize,
    /// Evaluate the regulator's feedback exactly instead of by sampling.
    pub exact_evaluation: bool,
    /// Samples `n` per clipped-violation estimate.
    pub clip_samples: usize,
    pub seed: u64,
    /// Turn off regulator perturbations (follow-the-leader).
    pub disable_noise: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.0,
            bound: 25.0,
            iterations: 200,
            learner_epsilon: 0.0,
            eval_episodes: 500,
            exact_evaluation: false,
            clip_samples: 500,
            seed: 0,
            disable_noise: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be a finite value >= 0, got {}", self.alpha)));
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(Error::config(format!("C must be positive, got {}", self.bound)));
        }
        if self.iterations == 0 {
            return Err(Error::config("T must be at least 1"));
        }
        if !(self.learner_epsilon >= 0.0) {
            return Err(Error::config(format!("learner epsilon must be >= 0, got {}", self.learner_epsilon)));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("evaluation episodes must be at least 1"));
        }
        if self.clip_samples == 0 {
            return Err(Error::config("clipped-violation sample size must be at least 1"));
        }
        Ok(())
    }

    /// Sets `α = per_step · H`.
    pub fn with_alpha_per_step(mut self, per_step: f64, horizon: usize) -> Self {
        self.alpha = per_step * horizon as f64;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegulatorKind {
    Ftpl,
    CtxFtpl,
    /// Contextual FTPL driven by clipped violations of `D_t`.
    CtxFtplErrCanc,
}

/// One round of a game run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub lambda: Vec<f64>,
    /// Index into the transcript's policy list; `D_t` is a point mass on it.
    pub policy_id: usize,
    /// `U(D_t, λ_t)`.
    pub objective_u: f64,
    /// `L(D_t, λ_t)`, error-cancellation runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_l: Option<f64>,
    /// Per-group values the regulator responded to. Fictitious play sees
    /// (possibly sampled) values of the previous average; bandit regulators
    /// are given the exact values of `D_t` here for reference.
    pub group_estimates: Vec<f64>,
    /// `min_λ U` and `max_λ U` at those values.
    pub regulator_min_u: f64,
    pub regulator_max_u: f64,
    /// Exact per-step values of `D̂_t`.
    pub avg_total: f64,
    pub avg_groups: Vec<f64>,
    pub lambda_avg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub algorithm: String,
    pub alpha: f64,
    pub bound: f64,
    pub horizon: usize,
    pub iterations: usize,
    pub policies: Vec<Policy>,
    pub mixture_weights: Vec<f64>,
    pub lambda_avg: Vec<f64>,
    pub avg_total: f64,
    pub avg_groups: Vec<f64>,
    pub first_feasible_round: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptLine {
    Round(RoundRecord),
    Summary(TranscriptSummary),
}

/// Full record of a run: distinct policies played, one record per round,
/// and the final averages `(D̂_T, λ̂_T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GameTranscript {
    pub algorithm: String,
    pub alpha: f64,
    pub bound: f64,
    pub horizon: usize,
    pub policies: Vec<Policy>,
    pub rounds: Vec<RoundRecord>,
}

impl GameTranscript {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.rounds.first().map_or(0, |r| r.lambda.len())
    }

    /// Uniform mixture over `D_1..D_t`, merged by policy.
    pub fn mixture_at(&self, t: usize) -> Result<PolicyMixture> {
        if t == 0 || t > self.rounds.len() {
            return Err(Error::config(format!("round {t} outside 1..={}", self.rounds.len())));
        }
        let mut counts = vec![0usize; self.policies.len()];
        for r in &self.rounds[..t] {
            counts[r.policy_id] += 1;
        }
        let (support, weights): (Vec<Policy>, Vec<f64>) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.policies[i].clone(), c as f64 / t as f64))
            .unzip();
        PolicyMixture::new(support, weights)
    }

    /// `D̂_T`.
    pub fn mixture(&self) -> Result<PolicyMixture> {
        self.mixture_at(self.rounds.len())
    }

    /// `λ̂_T`.
    pub fn lambda_avg(&self) -> Result<LagrangeWeights> {
        let last = self.rounds.last().ok_or_else(|| Error::config("empty transcript"))?;
        LagrangeWeights::new(last.lambda_avg.clone(), self.bound)
    }

    pub fn lambda_at(&self, t: usize) -> Result<LagrangeWeights> {
        let r = self.rounds.get(t.wrapping_sub(1)).ok_or_else(|| Error::config(format!("no round {t}")))?;
        LagrangeWeights::new(r.lambda.clone(), self.bound)
    }

    /// First round whose average meets every per-step threshold.
    pub fn first_feasible_round(&self) -> Option<usize> {
        let target = if self.horizon == 0 { 0.0 } else { self.alpha / self.horizon as f64 };
        self.rounds.iter().find(|r| r.avg_groups.iter().all(|&v| v >= target - 1e-9)).map(|r| r.t)
    }

    pub fn summary(&self) -> Result<TranscriptSummary> {
        let last = self.rounds.last().ok_or_else(|| Error::config("empty transcript"))?;
        let t = self.rounds.len() as f64;
        let mut weights = vec![0.0; self.policies.len()];
        for r in &self.rounds {
            weights[r.policy_id] += 1.0 / t;
        }
        Ok(TranscriptSummary {
            algorithm: self.algorithm.clone(),
            alpha: self.alpha,
            bound: self.bound,
            horizon: self.horizon,
            iterations: self.rounds.len(),
            policies: self.policies.clone(),
            mixture_weights: weights,
            lambda_avg: last.lambda_avg.clone(),
            avg_total: last.avg_total,
            avg_groups: last.avg_groups.clone(),
            first_feasible_round: self.first_feasible_round(),
        })
    }

    /// One JSON object per round followed by a summary object.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut out, &TranscriptLine::Round(r.clone()))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &TranscriptLine::Summary(self.summary()?))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut rounds = Vec::new();
        let mut summary = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(Error::config(format!("transcript line {} follows the summary record", i + 1)));
            }
            match serde_json::from_str(&line)
                .map_err(|e| Error::config(format!("transcript line {}: {e}", i + 1)))?
            {
                TranscriptLine::Round(r) => rounds.push(r),
                TranscriptLine::Summary(s) => summary = Some(s),
            }
        }
        let s = summary.ok_or_else(|| Error::config("transcript has no summary record"))?;
        if s.iterations != rounds.len() {
            return Err(Error::config(format!(
                "summary lists {} iterations but {} round records were found",
                s.iterations,
                rounds.len()
            )));
        }
        if let Some(r) = rounds.iter().find(|r| r.policy_id >= s.policies.len()) {
            return Err(Error::config(format!("round {} references unknown policy {}", r.t, r.policy_id)));
        }
        Ok(GameTranscript {
            algorithm: s.algorithm,
            alpha: s.alpha,
            bound: s.bound,
            horizon: s.horizon,
            policies: s.policies,
            rounds,
        })
    }

    /// Checks that the transcript was produced on an environment of this shape.
    pub fn check_environment(&self, mdp: &TabularMdp, groups: &GroupSet) -> Result<()> {
        if self.horizon != mdp.horizon() {
            return Err(Error::config(format!(
                "transcript horizon {} does not match environment horizon {}",
                self.horizon,
                mdp.horizon()
            )));
        }
        if self.num_groups() != groups.len() {
            return Err(Error::config(format!(
                "transcript has {} multipliers per round but the environment has {} groups",
                self.num_groups(),
                groups.len()
            )));
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.check_compatible(mdp).map_err(|e| Error::config(format!("transcript policy {i}: {e}")))?;
        }
        Ok(())
    }
}

fn per_step(horizon: usize) -> f64 {
    if horizon == 0 {
        0.0
    } else {
        1.0 / horizon as f64
    }
}

fn u_from_values(v: &GroupValues, lambda: &[f64], alpha: f64, horizon: usize) -> f64 {
    let penalty: f64 = lambda.iter().zip(&v.groups).map(|(l, g)| l * (g - alpha)).sum();
    per_step(horizon) * (v.total + penalty)
}

/// `(1/H) Σ_g (V^g − α)` minimized and maximized over `Λ`'s vertices.
fn u_range(v: &GroupValues, alpha: f64, bound: f64, horizon: usize) -> (f64, f64) {
    let base = per_step(horizon) * v.total;
    let slack: Vec<f64> = v.groups.iter().map(|g| per_step(horizon) * (g - alpha)).collect();
    let lo = slack.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = slack.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    (base + bound * lo, base + bound * hi)
}

/// `U(D, λ) = (1/H)[V^tot(D) + Σ_g λ^g (V^g(D) − α)]`, exact.
pub fn objective_u(
    mdp: &TabularMdp,
    groups: &GroupSet,
    mixture: &PolicyMixture,
    lambda: &LagrangeWeights,
    alpha: f64,
) -> Result<f64> {
    let v = Evaluator::new(mdp, groups)?.mixture_values(mixture)?;
    check_lambda_len(lambda, groups)?;
    Ok(u_from_values(&v, lambda.values(), alpha, mdp.horizon()))
}

fn check_lambda_len(lambda: &LagrangeWeights, groups: &GroupSet) -> Result<()> {
    if lambda.len() != groups.len() {
        return Err(Error::config(format!(
            "multiplier vector has {} entries for {} groups",
            lambda.len(),
            groups.len()
        )));
    }
    Ok(())
}

fn clipped_penalty(v: &GroupValues, lambda: &[f64], alpha: f64, horizon: usize) -> f64 {
    lambda.iter().zip(&v.groups).map(|(l, g)| l * (per_step(horizon) * (alpha - g)).max(0.0)).sum()
}

/// Clipped Lagrangian `L(D, λ) = f(D) − Σ_i w_i Σ_g λ^g max{h^g(π_i), 0}`
/// with `f = V^tot/H` and `h^g = (α − V^g)/H`. The clip is applied to each
/// policy in the support, so violations of one policy cannot be paid for by
/// slack in another.
pub fn lagrangian_l(
    mdp: &TabularMdp,
    groups: &GroupSet,
    mixture: &PolicyMixture,
    lambda: &LagrangeWeights,
    alpha: f64,
) -> Result<f64> {
    check_lambda_len(lambda, groups)?;
    let eval = Evaluator::new(mdp, groups)?;
    let mut out = 0.0;
    for (p, w) in mixture.iter() {
        let v = eval.values(p)?;
        out += w * (per_step(mdp.horizon()) * v.total - clipped_penalty(&v, lambda.values(), alpha, mdp.horizon()));
    }
    Ok(out)
}

/// Clipping applied to the mixture's averaged values instead.
pub fn lagrangian_l_pooled(
    mdp: &TabularMdp,
    groups: &GroupSet,
    mixture: &PolicyMixture,
    lambda: &LagrangeWeights,
    alpha: f64,
) -> Result<f64> {
    check_lambda_len(lambda, groups)?;
    let v = Evaluator::new(mdp, groups)?.mixture_values(mixture)?;
    Ok(per_step(mdp.horizon()) * v.total - clipped_penalty(&v, lambda.values(), alpha, mdp.horizon()))
}

/// Per-policy bookkeeping shared by the drivers.
struct Recorder<'a> {
    eval: Evaluator<'a>,
    alpha: f64,
    bound: f64,
    policies: Vec<Policy>,
    values: Vec<GroupValues>,
    index: HashMap<Vec<Vec<usize>>, usize>,
    rounds: Vec<RoundRecord>,
    value_sum: GroupValues,
    lambda_sum: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(eval: Evaluator<'a>, config: &SolverConfig) -> Self {
        let k = eval.num_groups();
        Recorder {
            eval,
            alpha: config.alpha,
            bound: config.bound,
            policies: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            rounds: Vec::new(),
            value_sum: GroupValues { total: 0.0, groups: vec![0.0; k] },
            lambda_sum: vec![0.0; k],
        }
    }

    fn horizon(&self) -> usize {
        self.eval.mdp().horizon()
    }

    fn intern(&mut self, policy: Policy) -> Result<usize> {
        let key = policy.action_table().ok_or_else(|| Error::Runtime("best response is not deterministic".into()))?;
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let id = self.policies.len();
        self.values.push(self.eval.values(&policy)?);
        self.policies.push(policy);
        self.index.insert(key, id);
        Ok(id)
    }

    /// `λ̂` after the rounds recorded so far, zero before the first.
    fn lambda_avg(&self) -> Result<LagrangeWeights> {
        let t = self.rounds.len().max(1) as f64;
        LagrangeWeights::new(self.lambda_sum.iter().map(|s| s / t).collect(), self.bound)
    }

    /// `D̂` after the rounds recorded so far.
    fn mixture(&self) -> Result<PolicyMixture> {
        let t = self.rounds.len() as f64;
        let mut w = vec![0.0; self.policies.len()];
        for r in &self.rounds {
            w[r.policy_id] += 1.0 / t;
        }
        let (support, weights): (Vec<Policy>, Vec<f64>) = self
            .policies
            .iter()
            .zip(w)
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p.clone(), w))
            .unzip();
        PolicyMixture::new(support, weights)
    }

    fn best_response(&self, lambda: &LagrangeWeights, alpha: f64) -> Result<Policy> {
        let reward = scalarize_with(self.eval.mdp(), self.eval.membership(), lambda, alpha)?;
        Ok(value_iteration(self.eval.mdp(), reward.table())?.policy)
    }

    fn push(
        &mut self,
        policy_id: usize,
        lambda: &LagrangeWeights,
        view: &GroupValues,
        objective_l: Option<f64>,
    ) -> Result<()> {
        let h = self.horizon();
        let v = &self.values[policy_id];
        let objective_u = u_from_values(v, lambda.values(), self.alpha, h);
        self.value_sum.total += v.total;
        for (s, x) in self.value_sum.groups.iter_mut().zip(&v.groups) {
            *s += x;
        }
        for (s, l) in self.lambda_sum.iter_mut().zip(lambda.values()) {
            *s += l;
        }
        let t = self.rounds.len() + 1;
        let (lo, hi) = u_range(view, self.alpha, self.bound, h);
        let avg = self.value_sum.clone();
        let tf = t as f64;
        self.rounds.push(RoundRecord {
            t,
            lambda: lambda.values().to_vec(),
            policy_id,
            objective_u,
            objective_l,
            group_estimates: view.groups.clone(),
            regulator_min_u: lo,
            regulator_max_u: hi,
            avg_total: per_step(h) * avg.total / tf,
            avg_groups: avg.groups.iter().map(|x| per_step(h) * x / tf).collect(),
            lambda_avg: self.lambda_sum.iter().map(|s| s / tf).collect(),
        });
        Ok(())
    }

    fn finish(self, algorithm: &str) -> GameTranscript {
        GameTranscript {
            algorithm: algorithm.to_string(),
            alpha: self.alpha,
            bound: self.bound,
            horizon: self.eval.mdp().horizon(),
            policies: self.policies,
            rounds: self.rounds,
        }
    }
}

/// Regulator feedback on a mixture: exact values, or the Monte Carlo mean.
fn regulator_view(eval: &Evaluator<'_>, mixture: &PolicyMixture, config: &SolverConfig, t: usize) -> Result<GroupValues> {
    if config.exact_evaluation {
        eval.mixture_values(mixture)
    } else {
        Ok(eval.monte_carlo(mixture, config.eval_episodes, derive_seed(derive_seed(config.seed, SEED_EVAL), t as u64))?.mean)
    }
}

/// Best-response learner against a no-regret regulator. Round `t` plays the
/// best response to `λ_{t−1}` (with `λ_0 = 0`), samples one
/// (state, reward) pair from it at a uniform timestep, and lets the
/// regulator step on that sample.
pub fn morl_brnr(
    mdp: &TabularMdp,
    groups: &GroupSet,
    config: &SolverConfig,
    kind: RegulatorKind,
) -> Result<GameTranscript> {
    config.validate()?;
    if mdp.horizon() == 0 {
        return Err(Error::config("game dynamics need a positive horizon"));
    }
    let eval = Evaluator::new(mdp, groups)?;
    let reg_seed = derive_seed(config.seed, SEED_REGULATOR);
    let t_total = config.iterations;
    enum Reg {
        Ftpl(FtplState),
        Ctx(CtxFtplState),
        Ec(CtxFtplErrCancState),
    }
    let mut reg = match kind {
        RegulatorKind::Ftpl => {
            let st = FtplState::new(mdp.num_states(), config.bound, t_total, reg_seed)?;
            Reg::Ftpl(if config.disable_noise { st.without_noise() } else { st })
        }
        RegulatorKind::CtxFtpl => {
            let st = CtxFtplState::new(groups, mdp.features(), config.bound, t_total, reg_seed)?;
            Reg::Ctx(if config.disable_noise { st.without_noise() } else { st })
        }
        RegulatorKind::CtxFtplErrCanc => {
            let st = CtxFtplErrCancState::new(groups, config.bound, t_total, reg_seed)?;
            Reg::Ec(if config.disable_noise { st.without_noise() } else { st })
        }
    };
    let membership = eval.membership().clone();
    let mut rec = Recorder::new(eval, config);
    let mut lambda = LagrangeWeights::zero(groups.len(), config.bound)?;
    let sample_seed = derive_seed(config.seed, SEED_SAMPLE);
    for t in 1..=t_total {
        let id = {
            let policy = rec.best_response(&lambda, config.alpha)?;
            rec.intern(policy)?
        };
        let policy = rec.policies[id].clone();
        let step = match &mut reg {
            Reg::Ftpl(st) => {
                let (s, y) = sample_uniform_step(mdp, &policy, sample_seed, t);
                st.step(&membership, s, y)?
            }
            Reg::Ctx(st) => {
                let (s, y) = sample_uniform_step(mdp, &policy, sample_seed, t);
                st.step(s, y)?
            }
            Reg::Ec(st) => {
                let costs = clipped_violations_with(
                    &rec.eval,
                    &PolicyMixture::point(policy.clone()),
                    config.alpha,
                    config.clip_samples,
                    derive_seed(sample_seed, t as u64),
                )?;
                st.step(&costs)?
            }
        };
        lambda = step.lambda;
        let view = rec.values[id].clone();
        rec.push(id, &lambda, &view, None)?;
    }
    let name = match kind {
        RegulatorKind::Ftpl => "morl-ftpl",
        RegulatorKind::CtxFtpl => "morl-ctx-ftpl",
        RegulatorKind::CtxFtplErrCanc => "morl-ctx-ftpl-ec",
    };
    Ok(rec.finish(name))
}

fn sample_uniform_step(mdp: &TabularMdp, policy: &Policy, seed: u64, t: usize) -> (usize, f64) {
    let mut r = rng::stream(seed, t as u64);
    let h = r.gen_range(0..mdp.horizon());
    let traj = rollout_with(mdp, policy, &mut r, h + 1);
    let step = traj.steps[h];
    (step.state, step.reward)
}

/// Fictitious play: each player best-responds to the other's running average.
/// `D̂_0` is the uniform-action policy and `λ̂_0 = 0`.
pub fn fairfict_rl(mdp: &TabularMdp, groups: &GroupSet, config: &SolverConfig) -> Result<GameTranscript> {
    fictitious(mdp, groups, config, false)
}

/// Fictitious play on clipped violations. The regulator puts the budget on
/// the group with the largest estimated clipped violation of `D̂_{t−1}`; the
/// learner best-responds with only the currently violated groups boosted.
pub fn fairfict_err_canc(mdp: &TabularMdp, groups: &GroupSet, config: &SolverConfig) -> Result<GameTranscript> {
    fictitious(mdp, groups, config, true)
}

fn fictitious(mdp: &TabularMdp, groups: &GroupSet, config: &SolverConfig, clipped: bool) -> Result<GameTranscript> {
    config.validate()?;
    if mdp.horizon() == 0 {
        return Err(Error::config("game dynamics need a positive horizon"));
    }
    let eval = Evaluator::new(mdp, groups)?;
    let mut rec = Recorder::new(eval, config);
    let initial = PolicyMixture::point(Policy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions()));
    let h = mdp.horizon();
    for t in 1..=config.iterations {
        let prev = if t == 1 { initial.clone() } else { rec.mixture()? };
        let lambda_hat = if t == 1 { LagrangeWeights::zero(groups.len(), config.bound)? } else { rec.lambda_avg()? };
        let view = regulator_view(&rec.eval, &prev, config, t)?;
        let (lambda, policy, objective_l) = if clipped {
            let violations = if config.exact_evaluation {
                view.groups.iter().map(|g| (per_step(h) * (config.alpha - g)).max(0.0)).collect()
            } else {
                clipped_violations_with(
                    &rec.eval,
                    &prev,
                    config.alpha,
                    config.clip_samples,
                    derive_seed(derive_seed(config.seed, SEED_SAMPLE), t as u64),
                )?
            };
            let active: Vec<bool> = violations.iter().map(|&v| v > 0.0).collect();
            let policy = rec.best_response(&lambda_hat.restricted(&active), 0.0)?;
            let lambda = clipped_best_response(&violations, config.bound)?;
            (lambda, policy, true)
        } else {
            let policy = rec.best_response(&lambda_hat, config.alpha)?;
            (best_response_lambda(&view.groups, config.alpha, config.bound)?, policy, false)
        };
        let id = rec.intern(policy)?;
        let l_value = if objective_l {
            let v = &rec.values[id];
            Some(per_step(h) * v.total - clipped_penalty(v, lambda.values(), config.alpha, h))
        } else {
            None
        };
        rec.push(id, &lambda, &view, l_value)?;
    }
    Ok(rec.finish(if clipped { "fairfict-ec" } else { "fairfict" }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// `max_D U(D, λ̂) − U(D̂, λ̂)`.
    pub gap_learner: f64,
    /// `U(D̂, λ̂) − min_λ U(D̂, λ)`.
    pub gap_regulator: f64,
    pub nu: f64,
    pub value: f64,
    pub learner_best: f64,
    pub regulator_best: f64,
}

/// Exact unilateral-deviation gaps of `(D̂, λ̂)`.
pub fn equilibrium_check(
    mdp: &TabularMdp,
    groups: &GroupSet,
    mixture: &PolicyMixture,
    lambda: &LagrangeWeights,
    alpha: f64,
    bound: f64,
) -> Result<EquilibriumReport> {
    check_lambda_len(lambda, groups)?;
    if lambda.total() > bound + 1e-9 {
        return Err(Error::config(format!("multipliers sum to {} but C = {bound}", lambda.total())));
    }
    let eval = Evaluator::new(mdp, groups)?;
    let v = eval.mixture_values(mixture)?;
    let h = mdp.horizon();
    let value = u_from_values(&v, lambda.values(), alpha, h);
    let (regulator_best, _) = u_range(&v, alpha, bound, h);
    let reward = scalarize_with(mdp, eval.membership(), lambda, alpha)?;
    let plan = value_iteration(mdp, reward.table())?;
    let learner_best = per_step(h) * plan.value;
    let gap_learner = learner_best - value;
    let gap_regulator = value - regulator_best;
    Ok(EquilibriumReport {
        gap_learner,
        gap_regulator,
        nu: gap_learner.max(gap_regulator),
        value,
        learner_best,
        regulator_best,
    })
}

/// `Σ_t U(D_t, λ_t) − min_{λ∈Λ} Σ_t U(D_t, λ)`.
pub fn regulator_regret(
    transcript: &GameTranscript,
    mdp: &TabularMdp,
    groups: &GroupSet,
    alpha: f64,
    bound: f64,
) -> Result<f64> {
    transcript.check_environment(mdp, groups)?;
    let eval = Evaluator::new(mdp, groups)?;
    let values: Vec<GroupValues> = transcript.policies.iter().map(|p| eval.values(p)).collect::<Result<_>>()?;
    let h = mdp.horizon();
    let mut played = 0.0;
    let mut sum = GroupValues { total: 0.0, groups: vec![0.0; groups.len()] };
    for r in &transcript.rounds {
        let v = &values[r.policy_id];
        played += u_from_values(v, &r.lambda, alpha, h);
        sum.total += v.total;
        for (s, x) in sum.groups.iter_mut().zip(&v.groups) {
            *s += x;
        }
    }
    // Σ_t U(D_t, λ) = T·U(mean_t D_t, λ)
    let t = transcript.rounds.len() as f64;
    let mean = GroupValues { total: sum.total / t, groups: sum.groups.iter().map(|x| x / t).collect() };
    let (best, _) = u_range(&mean, alpha, bound, h);
    Ok(played - t * best)
}

#[derive(Clone, Debug)]
pub struct MinimaxAlpha {
    /// Largest feasible cumulative threshold found.
    pub alpha: f64,
    pub transcript: GameTranscript,
    /// Every probed level with its feasibility verdict, in probe order.
    pub probes: Vec<(f64, bool)>,
}

/// Bisection over `α ∈ [0, H]` with fictitious play as the inner solver.
/// A level is feasible when the returned mixture's smallest exact group
/// value reaches `α − tolerance`.
pub fn solve_minimax_alpha(
    mdp: &TabularMdp,
    groups: &GroupSet,
    config: &SolverConfig,
    tolerance: f64,
) -> Result<MinimaxAlpha> {
    if !(tolerance > 0.0) {
        return Err(Error::config(format!("tolerance must be positive, got {tolerance}")));
    }
    config.validate()?;
    let first = bisect(mdp, groups, config, tolerance)?;
    if confirm(mdp, groups, config, tolerance, first.alpha)? {
        return Ok(first);
    }
    let mut wider = config.clone();
    wider.eval_episodes = config.eval_episodes.saturating_mul(2);
    let second = bisect(mdp, groups, &wider, tolerance)?;
    if confirm(mdp, groups, &wider, tolerance, second.alpha)? {
        return Ok(second);
    }
    Err(Error::Runtime(format!(
        "feasibility near alpha = {:.6} flips between seeds even with {} evaluation episodes; \
         raise eval_episodes or use exact evaluation",
        second.alpha, wider.eval_episodes
    )))
}

fn feasible_at(
    mdp: &TabularMdp,
    groups: &GroupSet,
    config: &SolverConfig,
    tolerance: f64,
    alpha: f64,
) -> Result<(bool, GameTranscript)> {
    let cfg = SolverConfig { alpha, ..config.clone() };
    let tr = fairfict_rl(mdp, groups, &cfg)?;
    let v = mixture_values_of(mdp, groups, &tr)?;
    Ok((v.min_group() >= alpha - tolerance, tr))
}

fn mixture_values_of(mdp: &TabularMdp, groups: &GroupSet, tr: &GameTranscript) -> Result<GroupValues> {
    Evaluator::new(mdp, groups)?.mixture_values(&tr.mixture()?)
}

fn bisect(mdp: &TabularMdp, groups: &GroupSet, config: &SolverConfig, tolerance: f64) -> Result<MinimaxAlpha> {
    let mut probes = Vec::new();
    let (ok0, tr0) = feasible_at(mdp, groups, config, tolerance, 0.0)?;
    probes.push((0.0, ok0));
    if !ok0 {
        return Err(Error::Runtime("alpha = 0 reported infeasible".into()));
    }
    let mut lo = (0.0, tr0);
    let mut hi = mdp.horizon() as f64;
    let (ok_top, tr_top) = feasible_at(mdp, groups, config, tolerance, hi)?;
    probes.push((hi, ok_top));
    if ok_top {
        return Ok(MinimaxAlpha { alpha: hi, transcript: tr_top, probes });
    }
    while hi - lo.0 > tolerance {
        let mid = 0.5 * (lo.0 + hi);
        let (ok, tr) = feasible_at(mdp, groups, config, tolerance, mid)?;
        probes.push((mid, ok));
        if ok {
            lo = (mid, tr);
        } else {
            hi = mid;
        }
    }
    Ok(MinimaxAlpha { alpha: lo.0, transcript: lo.1, probes })
}

/// Re-runs the final level under an independent seed.
fn confirm(mdp: &TabularMdp, groups: &GroupSet, config: &SolverConfig, tolerance: f64, alpha: f64) -> Result<bool> {
    if config.exact_evaluation || alpha == 0.0 {
        return Ok(true);
    }
    let cfg = SolverConfig { seed: derive_seed(config.seed, SEED_RETRY), ..config.clone() };
    Ok(feasible_at(mdp, groups, &cfg, tolerance, alpha)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain_with_rewards;
    use crate::groups::GroupFunction;
    use crate::mdp::exact_values;
    use crate::testutil::*;

    fn exact(alpha: f64, t: usize) -> SolverConfig {
        SolverConfig { alpha, iterations: t, exact_evaluation: true, ..SolverConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { alpha: -1.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { bound: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { iterations: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { eval_episodes: 0, ..SolverConfig::default() }.validate().is_err());
        let c = SolverConfig::default().with_alpha_per_step(0.04, 20);
        assert!((c.alpha - 0.8).abs() < 1e-12);
    }

    #[test]
    fn objective_u_examples() {
        let mdp = two_state_chain();
        let groups = chain_groups();
        let go = PolicyMixture::point(always(&mdp, GO));
        let zero = LagrangeWeights::zero(2, 5.0).unwrap();
        assert_eq!(objective_u(&mdp, &groups, &go, &zero, 0.3).unwrap(), 0.5);
        let lam = LagrangeWeights::new(vec![0.0, 2.0], 5.0).unwrap();
        assert_eq!(objective_u(&mdp, &groups, &go, &lam, 0.5).unwrap(), 1.0);
        let l1 = LagrangeWeights::new(vec![1.0, 0.0], 5.0).unwrap();
        let l2 = LagrangeWeights::new(vec![0.0, 3.0], 5.0).unwrap();
        let mid = LagrangeWeights::new(vec![0.5, 1.5], 5.0).unwrap();
        let half = PolicyMixture::new(vec![always(&mdp, GO), always(&mdp, STAY)], vec![0.5, 0.5]).unwrap();
        let u = |l: &LagrangeWeights| objective_u(&mdp, &groups, &half, l, 0.4).unwrap();
        assert!((u(&mid) - 0.5 * (u(&l1) + u(&l2))).abs() < 1e-15);
    }

    #[test]
    fn lagrangian_examples() {
        let mdp = two_state_chain();
        let groups = chain_groups();
        let stay = PolicyMixture::point(always(&mdp, STAY));
        let lam = LagrangeWeights::new(vec![0.0, 4.0], 5.0).unwrap();
        assert_eq!(lagrangian_l(&mdp, &groups, &stay, &lam, 0.5).unwrap(), -1.0);
        let zero = LagrangeWeights::zero(2, 5.0).unwrap();
        assert_eq!(lagrangian_l(&mdp, &groups, &stay, &zero, 0.5).unwrap(), 0.0);
        // "go" satisfies α = 0 for both groups, so any λ leaves L = f
        let go = PolicyMixture::point(always(&mdp, GO));
        let big = LagrangeWeights::new(vec![2.0, 3.0], 5.0).unwrap();
        assert_eq!(lagrangian_l(&mdp, &groups, &go, &big, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn clipping_blocks_error_cancellation() {
        // g1 = {s1}; "go" earns 1 there, "stay" earns 0. α = 0.5 means h = 0.25 − V/2.
        let mdp = two_state_chain();
        let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![false, true])]).unwrap();
        let mix = PolicyMixture::new(vec![always(&mdp, GO), always(&mdp, STAY)], vec![0.5, 0.5]).unwrap();
        let alpha = 0.5;
        let v = crate::mdp::mixture_values(&mdp, &mix, &groups).unwrap();
        assert!(v.groups[0] >= alpha);
        let lam = LagrangeWeights::new(vec![1.0], 1.0).unwrap();
        let f = v.total / 2.0;
        let l = lagrangian_l(&mdp, &groups, &mix, &lam, alpha).unwrap();
        assert!(l < f - 1e-9);
        assert!((l - (f - 0.5 * 0.25)).abs() < 1e-12);
        assert_eq!(lagrangian_l_pooled(&mdp, &groups, &mix, &lam, alpha).unwrap(), f);
    }

    #[test]
    fn l_never_exceeds_f_and_matches_u_when_all_violate() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(5, 3, 4, 3, 2).unwrap();
        let pols: Vec<Policy> = (0..3).map(|a| Policy::constant(4, 5, 3, a).unwrap()).collect();
        let mix = PolicyMixture::new(pols.clone(), vec![0.2, 0.3, 0.5]).unwrap();
        let lam = LagrangeWeights::new(vec![1.0, 0.5, 2.0], 4.0).unwrap();
        for alpha in [0.0, 0.5, 1.0, 4.0] {
            let v = crate::mdp::mixture_values(&mdp, &mix, &groups).unwrap();
            let l = lagrangian_l(&mdp, &groups, &mix, &lam, alpha).unwrap();
            assert!(l <= v.total / 4.0 + 1e-12);
        }
        // α = H: every policy violates every group, clipping is inactive
        let u = objective_u(&mdp, &groups, &mix, &lam, 4.0).unwrap();
        let l = lagrangian_l(&mdp, &groups, &mix, &lam, 4.0).unwrap();
        assert!((u - l).abs() < 1e-12);
    }

    #[test]
    fn morl_first_round_is_unconstrained_optimum() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(4, 2, 3, 2, 5).unwrap();
        let tr = morl_brnr(&mdp, &groups, &exact(1.0, 1), RegulatorKind::Ftpl).unwrap();
        assert_eq!(tr.len(), 1);
        let opt = crate::mdp::best_response_policy(&mdp, &groups, &LagrangeWeights::zero(2, 25.0).unwrap(), 0.0).unwrap();
        assert_eq!(tr.mixture().unwrap(), PolicyMixture::point(opt));
        let lam = tr.lambda_avg().unwrap();
        assert!(lam.total() <= 25.0 + 1e-9);
    }

    #[test]
    fn morl_is_deterministic_and_stays_in_budget() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(4, 2, 3, 2, 5).unwrap();
        let cfg = SolverConfig { alpha: 1.5, iterations: 60, seed: 4, ..SolverConfig::default() };
        let a = morl_brnr(&mdp, &groups, &cfg, RegulatorKind::Ftpl).unwrap();
        let b = morl_brnr(&mdp, &groups, &cfg, RegulatorKind::Ftpl).unwrap();
        assert_eq!(a, b);
        for r in &a.rounds {
            assert!(r.lambda_avg.iter().sum::<f64>() <= 25.0 + 1e-9);
        }
    }

    #[test]
    fn morl_contextual_requires_separator() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(4, 2, 3, 2, 5).unwrap();
        assert!(matches!(
            morl_brnr(&mdp, &groups, &exact(1.0, 5), RegulatorKind::CtxFtpl),
            Err(Error::Config(_))
        ));
        let d = mdp.feature_dim();
        let with_sep = GroupSet::all_conjunctions(d)
            .unwrap()
            .with_separator(crate::groups::conjunction_separator(d).unwrap())
            .unwrap();
        let tr = morl_brnr(&mdp, &with_sep, &exact(1.0, 20), RegulatorKind::CtxFtpl).unwrap();
        assert_eq!(tr.len(), 20);
        let tr = morl_brnr(&mdp, &with_sep, &SolverConfig { clip_samples: 50, ..exact(1.0, 10) }, RegulatorKind::CtxFtplErrCanc)
            .unwrap();
        assert_eq!(tr.len(), 10);
    }

    #[test]
    fn fairfict_alpha_zero_never_penalizes() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(5, 3, 4, 3, 8).unwrap();
        let tr = fairfict_rl(&mdp, &groups, &SolverConfig { iterations: 30, eval_episodes: 50, ..Default::default() })
            .unwrap();
        assert!(tr.rounds.iter().all(|r| r.lambda.iter().all(|&l| l == 0.0)));
        let opt = crate::mdp::value_iteration(&mdp, &{
            let mut t = Vec::new();
            for s in 0..5 {
                for a in 0..3 {
                    t.push(mdp.reward(s, a));
                }
            }
            t
        })
        .unwrap();
        let v = mixture_values_of(&mdp, &groups, &tr).unwrap();
        assert!((v.total - opt.value).abs() < 1e-9);
        assert_eq!(tr.policies.len(), 1);
    }

    #[test]
    fn fairfict_chain_meets_threshold() {
        // r(s0) = 0.5, r(s1) = 1; staying at s0 is the only way to serve g0
        let mdp = chain_with_rewards(0.5, 1.0, 2);
        let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![true, false])]).unwrap();
        let alpha = 0.4 * 2.0;
        let tr = fairfict_rl(&mdp, &groups, &exact(alpha, 400)).unwrap();
        let v = mixture_values_of(&mdp, &groups, &tr).unwrap();
        assert!(v.groups[0] / 2.0 >= 0.4 - 0.01, "{:?}", v);
        // unconstrained optimum only earns 0.5 at s0
        let unconstrained = exact_values(&mdp, &always(&mdp, GO), &groups).unwrap();
        assert!(v.groups[0] > unconstrained.groups[0]);
        assert!(tr.policies.len() >= 2);
    }

    #[test]
    fn fairfict_records_consistent_averages() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(5, 3, 4, 3, 1).unwrap();
        let tr = fairfict_rl(&mdp, &groups, &exact(1.2, 25)).unwrap();
        for r in &tr.rounds {
            let mix = tr.mixture_at(r.t).unwrap();
            let v = crate::mdp::mixture_values(&mdp, &mix, &groups).unwrap();
            assert!((v.total / 4.0 - r.avg_total).abs() < 1e-9);
            // averaging: U(D̂_t, λ) = mean_s U(D_s, λ)
            let lam = LagrangeWeights::new(vec![1.0, 2.0, 0.5], 25.0).unwrap();
            let lhs = objective_u(&mdp, &groups, &mix, &lam, 1.2).unwrap();
            let rhs: f64 = tr.rounds[..r.t]
                .iter()
                .map(|q| objective_u(&mdp, &groups, &PolicyMixture::point(tr.policies[q.policy_id].clone()), &lam, 1.2).unwrap())
                .sum::<f64>()
                / r.t as f64;
            assert!((lhs - rhs).abs() < 1e-9);
            assert!(r.regulator_min_u <= r.regulator_max_u);
        }
    }

    #[test]
    fn err_canc_without_violations_matches_fairfict() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(4, 2, 3, 2, 3).unwrap();
        let cfg = exact(0.0, 20);
        let a = fairfict_rl(&mdp, &groups, &cfg).unwrap();
        let b = fairfict_err_canc(&mdp, &groups, &cfg).unwrap();
        let la: Vec<_> = a.rounds.iter().map(|r| r.lambda.clone()).collect();
        let lb: Vec<_> = b.rounds.iter().map(|r| r.lambda.clone()).collect();
        assert_eq!(la, lb);
        assert!(b.rounds.iter().all(|r| r.objective_l.is_some()));
    }

    #[test]
    fn err_canc_chain_meets_threshold() {
        let mdp = chain_with_rewards(0.5, 1.0, 2);
        let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![true, false])]).unwrap();
        let tr = fairfict_err_canc(&mdp, &groups, &exact(0.8, 400)).unwrap();
        assert!(tr.lambda_avg().unwrap().total() <= 25.0 + 1e-9);
        let v = mixture_values_of(&mdp, &groups, &tr).unwrap();
        assert!(v.groups[0] / 2.0 >= 0.4 - 0.01, "{:?}", v);
    }

    #[test]
    fn equilibrium_examples() {
        let mdp = two_state_chain();
        let groups = chain_groups();
        let zero = LagrangeWeights::zero(2, 3.0).unwrap();
        let go = PolicyMixture::point(always(&mdp, GO));
        let rep = equilibrium_check(&mdp, &groups, &go, &zero, 0.0, 3.0).unwrap();
        assert!(rep.nu.abs() <= 1e-9);
        let stay = PolicyMixture::point(always(&mdp, STAY));
        let rep = equilibrium_check(&mdp, &groups, &stay, &zero, 0.0, 3.0).unwrap();
        assert!((rep.gap_learner - 0.5).abs() < 1e-12);
        assert!(rep.gap_regulator >= -1e-9);
        // sandwich
        let lam = LagrangeWeights::new(vec![1.0, 0.5], 3.0).unwrap();
        let rep = equilibrium_check(&mdp, &groups, &stay, &lam, 0.7, 3.0).unwrap();
        assert!(rep.regulator_best - 1e-9 <= rep.value && rep.value <= rep.learner_best + 1e-9);
        assert!(rep.gap_learner >= -1e-9 && rep.gap_regulator >= -1e-9);
    }

    #[test]
    fn regret_examples() {
        let mdp = two_state_chain();
        let groups = chain_groups();
        // λ_t = 0 and "go" every round: g0 earns 0 < α = 0.6
        let tr = GameTranscript {
            algorithm: "manual".into(),
            alpha: 0.6,
            bound: 2.0,
            horizon: 2,
            policies: vec![always(&mdp, GO)],
            rounds: (1..=3)
                .map(|t| RoundRecord {
                    t,
                    lambda: vec![0.0, 0.0],
                    policy_id: 0,
                    objective_u: 0.0,
                    objective_l: None,
                    group_estimates: vec![],
                    regulator_min_u: 0.0,
                    regulator_max_u: 0.0,
                    avg_total: 0.0,
                    avg_groups: vec![0.0, 0.0],
                    lambda_avg: vec![0.0, 0.0],
                })
                .collect(),
        };
        let r = regulator_regret(&tr, &mdp, &groups, 0.6, 2.0).unwrap();
        assert!((r - 3.0 * 2.0 * (0.6 - 0.0) / 2.0).abs() < 1e-12);

        let mut one = tr.clone();
        one.rounds.truncate(1);
        one.rounds[0].lambda = vec![2.0, 0.0];
        assert!(regulator_regret(&one, &mdp, &groups, 0.6, 2.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn transcript_jsonl_round_trip() {
        let (mdp, groups) = crate::envs::random_tabular_mdp(4, 2, 3, 2, 5).unwrap();
        let tr = fairfict_err_canc(&mdp, &groups, &SolverConfig { alpha: 1.5, iterations: 12, clip_samples: 40, eval_episodes: 30, ..Default::default() })
            .unwrap();
        let mut buf = Vec::new();
        tr.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 13);
        let back = GameTranscript::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, tr);
        back.check_environment(&mdp, &groups).unwrap();
        let wrong = GroupSet::new(vec![GroupFunction::conjunction(vec![])]).unwrap();
        assert!(back.check_environment(&mdp, &wrong).is_err());
        assert!(GameTranscript::read_jsonl(&b"{\"record\":\"bogus\"}\n"[..]).is_err());
    }

    #[test]
    fn minimax_alpha_single_full_group() {
        let (mdp, _) = crate::envs::random_tabular_mdp(4, 2, 3, 1, 6).unwrap();
        let groups = GroupSet::new(vec![GroupFunction::conjunction(vec![])]).unwrap();
        let out = solve_minimax_alpha(&mdp, &groups, &exact(0.0, 30), 1e-3).unwrap();
        let mut table = Vec::new();
        for s in 0..4 {
            for a in 0..2 {
                table.push(mdp.reward(s, a));
            }
        }
        let opt = value_iteration(&mdp, &table).unwrap().value;
        assert!((out.alpha - opt).abs() <= 1e-3, "{} vs {opt}", out.alpha);
    }

    #[test]
    fn minimax_alpha_unreachable_group() {
        let mdp = two_state_chain();
        let groups = GroupSet::new(vec![
            GroupFunction::Explicit(vec![true, false]),
            GroupFunction::Explicit(vec![false, true]),
        ])
        .unwrap();
        let out = solve_minimax_alpha(&mdp, &groups, &exact(0.0, 20), 1e-3).unwrap();
        assert!(out.alpha <= 1e-3);
        assert!(solve_minimax_alpha(&mdp, &groups, &exact(0.0, 20), 0.0).is_err());
    }
}

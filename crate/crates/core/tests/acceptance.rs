//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::distributions::WeightedIndex;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fairmdp::envs::random_tabular_mdp;
use fairmdp::game::lagrangian_l_pooled;
use fairmdp::groups::{conjunction_separator, verify_separator, ConjunctionClass, SeparatorSet};
use fairmdp::harness::{pareto_rows, run_solver, unconstrained_optimum, Algorithm, EnvSource, Environment, ExperimentConfig};
use fairmdp::mdp::{best_response_policy, entropy, exact_occupancy, exact_values, policy_return, scalarize, value_iteration};
use fairmdp::regulator::{CtxFtplState, FtplState, RegretTracker};
use fairmdp::{
    equilibrium_check, lagrangian_l, morl_brnr, objective_u, solve_minimax_alpha, Context, GroupFunction, GroupSet,
    LagrangeWeights, Policy, PolicyMixture, RegulatorKind, SolverConfig, TabularMdp,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ba_config(alpha_per_step: f64, iterations: usize) -> ExperimentConfig {
    ExperimentConfig {
        env: EnvSource::default(),
        algorithm: Algorithm::Fairfict,
        alpha_per_step,
        solver: SolverConfig { bound: 25.0, iterations, eval_episodes: 500, ..SolverConfig::default() },
        ..ExperimentConfig::default()
    }
}

// BA walk, α/H = 0.04: every group's running average reaches 0.035 by round
// 50 and stays there through round 200, for most seeds.
fn c1_ba_threshold() -> Outcome {
    let env = Environment::load(&EnvSource::default()).map_err(|e| e.to_string())?;
    let cfg = ba_config(0.04, 200);
    let starts: Vec<Option<usize>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let tr = run_solver(&env, &cfg, seed).expect("solve");
            let below = tr.rounds.iter().rposition(|r| r.avg_groups.iter().any(|&g| g < 0.035));
            match below {
                None => Some(1),
                Some(i) if i + 1 < tr.rounds.len() => Some(tr.rounds[i + 1].t),
                Some(_) => None,
            }
        })
        .collect();
    let good = starts.iter().filter(|s| matches!(s, Some(t) if *t <= 50)).count();
    let latest = starts.iter().flatten().max().copied().unwrap_or(0);
    check(good > 10, format!("{good}/20 seeds sustain >= 0.035 from t <= 50 (latest start {latest})"))
}

// Unconstrained optimum concentrates on the top-reward degree group; the fair
// mixture spreads its visits.
fn c2_ba_occupancy() -> Outcome {
    let env = Environment::load(&EnvSource::default()).map_err(|e| e.to_string())?;
    let mdp = &env.mdp;
    let base = unconstrained_optimum(mdp).map_err(|e| e.to_string())?;
    let base_occ = exact_occupancy(mdp, &base).map_err(|e| e.to_string())?;
    let membership = env.groups.membership(mdp.features()).map_err(|e| e.to_string())?;
    let top_mass: f64 = (0..mdp.num_states()).filter(|&s| membership.contains(2, s)).map(|s| base_occ[s]).sum();
    let table: Vec<f64> =
        (0..mdp.num_states()).flat_map(|s| (0..mdp.num_actions()).map(move |a| mdp.reward(s, a))).collect();
    let best = value_iteration(mdp, &table).map_err(|e| e.to_string())?.value / mdp.horizon() as f64;
    let tr = run_solver(&env, &ba_config(0.04, 200), 0).map_err(|e| e.to_string())?;
    let fair_occ = exact_occupancy(mdp, &tr.mixture().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (h_base, h_fair) = (entropy(&base_occ), entropy(&fair_occ));
    check(
        top_mass >= 0.8 && best <= 0.3 + 1e-6 && h_fair > h_base,
        format!("group-2 mass {top_mass:.4}, best avg reward {best:.6}, entropy fair {h_fair:.4} vs unconstrained {h_base:.4}"),
    )
}

// Sweep over α/H: total and max-min spread both nonincreasing within 0.01.
fn c3_pareto() -> Outcome {
    let env = Environment::load(&EnvSource::default()).map_err(|e| e.to_string())?;
    let cfg = ba_config(0.0, 4000);
    let rows = pareto_rows(&env, &cfg).map_err(|e| e.to_string())?;
    let mut totals = Vec::new();
    let mut spreads = Vec::new();
    for r in &rows {
        match (r.total, r.spread) {
            (Some(t), Some(s)) => {
                totals.push(t);
                spreads.push(s);
            }
            _ => return Err(format!("alpha/H {} failed: {:?}", r.alpha_per_step, r.error)),
        }
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] + 0.01);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    check(mono(&totals) && mono(&spreads), format!("total [{}] spread [{}]", fmt(&totals), fmt(&spreads)))
}

/// Six distinct 3-subsets of six states: no group contains another.
fn antichain_groups(seed: u64) -> GroupSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<bool>> = Vec::new();
    while rows.len() < 6 {
        let mut row = vec![false; 6];
        for i in sample_indices(&mut rng, 6, 3) {
            row[i] = true;
        }
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    GroupSet::new(rows.into_iter().map(GroupFunction::Explicit).collect()).unwrap()
}

fn ftpl_average_regret(mdp: &TabularMdp, groups: &GroupSet, t: usize, seed: u64) -> f64 {
    let m = groups.membership(mdp.features()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7) + 1);
    let weights: Vec<f64> = (0..mdp.num_states()).map(|_| rng.gen::<f64>()).collect();
    let states = WeightedIndex::new(&weights).unwrap();
    let mut st = FtplState::new(mdp.num_states(), 25.0, t, seed).unwrap();
    let mut tracker = RegretTracker::new(m.num_groups());
    for _ in 0..t {
        let s = rng.sample(&states);
        let c = mdp.reward(s, rng.gen_range(0..mdp.num_actions()));
        let g = st.step(&m, s, c).unwrap().group;
        tracker.record(&m, g, s, c);
    }
    tracker.average_regret()
}

// FTPL over states against i.i.d. state/cost draws.
fn c4_ftpl_regret() -> Outcome {
    let bound = (8.0f64 * 6f64.powi(3)).sqrt() / (1e4f64).sqrt();
    let results: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let (mdp, _) = random_tabular_mdp(6, 2, 3, 6, seed).unwrap();
            let groups = antichain_groups(seed + 500);
            (ftpl_average_regret(&mdp, &groups, 1_000, seed), ftpl_average_regret(&mdp, &groups, 10_000, seed))
        })
        .collect();
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let shrinking = results.iter().filter(|(a, b)| b < a).count();
    check(
        worst <= bound && shrinking >= 16,
        format!("worst avg regret at 1e4 {worst:.5} (bound {bound:.4}); shrinking on {shrinking}/20"),
    )
}

// Contextual FTPL over all conjunctions of 6 features, seed-averaged.
fn c5_ctx_slope() -> Outcome {
    let d = 6;
    let groups = GroupSet::all_conjunctions(d).unwrap().with_separator(conjunction_separator(d).unwrap()).unwrap();
    let ts = [1_000usize, 10_000, 100_000];
    let means: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let runs: Vec<f64> = (0..20u64)
                .into_par_iter()
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                    let features: Vec<Vec<bool>> =
                        (0..16).map(|_| (0..d).map(|_| rng.gen::<f64>() < 0.7).collect()).collect();
                    let weights: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
                    let p: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
                    let states = WeightedIndex::new(&weights).unwrap();
                    let m = groups.membership(&features).unwrap();
                    let mut st = CtxFtplState::new(&groups, &features, 25.0, t, seed).unwrap();
                    let mut tracker = RegretTracker::new(groups.len());
                    for _ in 0..t {
                        let s = rng.sample(&states);
                        let c = if rng.gen::<f64>() < p[s] { 1.0 } else { 0.0 };
                        let g = st.step(s, c).unwrap().group;
                        tracker.record(&m, g, s, c);
                    }
                    tracker.average_regret()
                })
                .collect();
            runs.iter().sum::<f64>() / runs.len() as f64
        })
        .collect();
    if means.iter().any(|&m| m <= 0.0) {
        return Err(format!("nonpositive mean regret {means:?}"));
    }
    let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = num / den;
    check(
        (slope + 0.5).abs() <= 0.15,
        format!("slope {slope:.3}; mean avg regret {:.5} {:.5} {:.5}", means[0], means[1], means[2]),
    )
}

// MORL-BRNR with vertex FTPL at a threshold just above the max-min level.
fn c6_morl_equilibrium() -> Outcome {
    let (mdp, groups) = random_tabular_mdp(4, 2, 3, 2, 18).unwrap();
    let exact = SolverConfig { iterations: 2000, exact_evaluation: true, ..SolverConfig::default() };
    let star = solve_minimax_alpha(&mdp, &groups, &exact, 1e-2).map_err(|e| e.to_string())?.alpha;
    let alpha = star + 0.1;
    let bound = 25.0;
    let limit = 0.1 * bound * mdp.horizon() as f64;
    let nus: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let nu = |t: usize| {
                let cfg = SolverConfig { alpha, bound, iterations: t, seed, ..SolverConfig::default() };
                let tr = morl_brnr(&mdp, &groups, &cfg, RegulatorKind::Ftpl).unwrap();
                equilibrium_check(&mdp, &groups, &tr.mixture().unwrap(), &tr.lambda_avg().unwrap(), alpha, bound)
                    .unwrap()
                    .nu
            };
            (nu(200), nu(2000))
        })
        .collect();
    let ok = nus.iter().all(|(a, b)| b < a && *b < limit);
    let worst = nus.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let improved = nus.iter().filter(|(a, b)| b < a).count();
    check(ok, format!("alpha {alpha:.4}; nu shrinks on {improved}/10; worst nu(2000) {worst:.4} (limit {limit})"))
}

fn random_policy(rng: &mut ChaCha8Rng, h: usize, s: usize, a: usize) -> Policy {
    let rules = (0..h)
        .map(|_| {
            (0..s)
                .map(|_| {
                    let w: Vec<f64> = (0..a).map(|_| rng.gen::<f64>() + 0.05).collect();
                    let z: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect();
    Policy::from_rules(rules, s, a).unwrap()
}

fn random_lambda(rng: &mut ChaCha8Rng, k: usize, bound: f64) -> LagrangeWeights {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let z: f64 = raw.iter().sum::<f64>().max(1e-12);
    let scale = bound * rng.gen::<f64>() / z;
    LagrangeWeights::new(raw.into_iter().map(|x| x * scale).collect(), bound).unwrap()
}

// Exact DP, planning, oracles and scalarization against brute force.
fn c7_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_values: f64 = 0.0;
    let mut worst_br: f64 = 0.0;
    let mut worst_scal: f64 = 0.0;
    for seed in 0..8u64 {
        let (mdp, groups) = random_tabular_mdp(3, 2, 3, 3, seed).unwrap();
        let m = groups.membership(mdp.features()).unwrap();
        let (h, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        let deterministic = common::all_deterministic(&mdp);
        for _ in 0..4 {
            let pi = random_policy(&mut rng, h, s, a);
            let fast = exact_values(&mdp, &pi, &groups).unwrap();
            let slow = common::enumerate_values(&mdp, &pi, &m);
            worst_values = worst_values.max((fast.total - slow.total).abs());
            for (x, y) in fast.groups.iter().zip(&slow.groups) {
                worst_values = worst_values.max((x - y).abs());
            }

            let lambda = random_lambda(&mut rng, groups.len(), 25.0);
            let alpha = rng.gen::<f64>() * h as f64;
            let reward = scalarize(&mdp, &groups, &lambda, alpha).unwrap();
            let br = best_response_policy(&mdp, &groups, &lambda, alpha).unwrap();
            let br_value = common::enumerate_return(&mdp, &br, reward.table());
            let best =
                deterministic.iter().map(|p| common::enumerate_return(&mdp, p, reward.table())).fold(f64::NEG_INFINITY, f64::max);
            worst_br = worst_br.max((br_value - best).abs());

            let lhs = policy_return(&mdp, &pi, reward.table()).unwrap();
            let rhs = h as f64 * objective_u(&mdp, &groups, &PolicyMixture::point(pi.clone()), &lambda, alpha).unwrap();
            worst_scal = worst_scal.max((lhs - rhs).abs());
        }
    }

    let mut oracle_mismatch = 0usize;
    let mut oracle_cases = 0usize;
    for d in 1..=5usize {
        let all = GroupSet::all_conjunctions(d).unwrap();
        let class = ConjunctionClass::new(d).unwrap();
        for _ in 0..40 {
            let n = rng.gen_range(1..12);
            let features: Vec<Vec<bool>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<bool>()).collect()).collect();
            // small integer costs, including negatives, so ties occur
            let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..3) as f64).collect();
            let expect = common::brute_lin_opt(&all, &features, &costs);
            let contexts: Vec<Context<'_>> = features.iter().map(|x| Context::Point(x)).collect();
            let got = [
                all.lin_opt(&features, &costs).unwrap(),
                all.opt_seq(&contexts, &costs).unwrap(),
                class.opt_seq(&features, &costs).unwrap(),
                class.lin_opt(&features, &costs).unwrap(),
            ];
            oracle_cases += 1;
            if got.iter().any(|&g| g != expect) {
                oracle_mismatch += 1;
            }
        }
    }

    let mut separator_mismatch = 0usize;
    for d in 1..=6usize {
        let all = GroupSet::all_conjunctions(d).unwrap();
        let sep = conjunction_separator(d).unwrap();
        let fast = verify_separator(&all, &sep).unwrap().separated;
        if !fast || !common::brute_separates(&all, &sep.points) {
            separator_mismatch += 1;
        }
        let short = SeparatorSet { points: sep.points[1..].to_vec() };
        if verify_separator(&all, &short).unwrap().separated || common::brute_separates(&all, &short.points) {
            separator_mismatch += 1;
        }
    }

    check(
        worst_values <= 1e-9 && worst_br <= 1e-9 && worst_scal <= 1e-9 && oracle_mismatch == 0 && separator_mismatch == 0,
        format!(
            "values {worst_values:.1e}, best response {worst_br:.1e}, scalarization {worst_scal:.1e}, \
             oracle mismatches {oracle_mismatch}/{oracle_cases}, separator mismatches {separator_mismatch}"
        ),
    )
}

// Half go, half stay on the chain with g = {s1} and α = 0.5: the mixture
// meets the constraint on average, but the per-policy clip charges the
// stay policy's violation.
fn c8_error_cancellation() -> Outcome {
    let mdp = fairmdp::envs::two_state_chain();
    let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![false, true])]).unwrap();
    let go = Policy::constant(2, 2, 2, fairmdp::envs::CHAIN_GO).unwrap();
    let stay = Policy::constant(2, 2, 2, fairmdp::envs::CHAIN_STAY).unwrap();
    let mix = PolicyMixture::new(vec![go, stay], vec![0.5, 0.5]).unwrap();
    let alpha = 0.5;
    let h = mdp.horizon() as f64;
    let v = fairmdp::mdp::mixture_values(&mdp, &mix, &groups).unwrap();
    let f = v.total / h;
    let avg_violation = (alpha - v.groups[0]).max(0.0) / h;
    let mut worst_margin = f64::INFINITY;
    let mut worst_u = 0.0f64;
    let mut worst_pooled = 0.0f64;
    for &l in &[1e-3, 0.1, 1.0, 5.0, 25.0] {
        let lambda = LagrangeWeights::new(vec![l], 25.0).unwrap();
        let clipped = lagrangian_l(&mdp, &groups, &mix, &lambda, alpha).unwrap();
        let pooled = lagrangian_l_pooled(&mdp, &groups, &mix, &lambda, alpha).unwrap();
        let u = objective_u(&mdp, &groups, &mix, &lambda, alpha).unwrap();
        worst_margin = worst_margin.min(f - clipped);
        worst_u = worst_u.max((u - f).abs());
        worst_pooled = worst_pooled.max((pooled - f).abs());
    }
    check(
        worst_margin > 1e-9 && avg_violation <= 1e-9 && worst_u <= 1e-9 && worst_pooled <= 1e-9,
        format!(
            "min f - L {worst_margin:.3e}; averaged violation {avg_violation:.1e}; |U - f| {worst_u:.1e}; \
             |L_pooled - f| {worst_pooled:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 ba-threshold", c1_ba_threshold),
        ("2 ba-occupancy", c2_ba_occupancy),
        ("3 pareto-frontier", c3_pareto),
        ("4 ftpl-regret", c4_ftpl_regret),
        ("5 ctx-ftpl-slope", c5_ctx_slope),
        ("6 morl-equilibrium", c6_morl_equilibrium),
        ("7 oracle-suite", c7_oracles),
        ("8 error-cancellation", c8_error_cancellation),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Fictitious play on the preferential-attachment walk: per-group averages
//! against the unconstrained optimum.
use fairmdp::harness::{run_solver, unconstrained_optimum, Algorithm, EnvSource, Environment, ExperimentConfig};
use fairmdp::mdp::{entropy, exact_occupancy, mixture_values};
use fairmdp::SolverConfig;

fn main() -> fairmdp::Result<()> {
    let env = Environment::load(&EnvSource::Ba { nodes: 12, ne: 2, seed: 7, horizon: 20 })?;
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Fairfict,
        alpha_per_step: 0.04,
        solver: SolverConfig { iterations: 200, eval_episodes: 500, ..SolverConfig::default() },
        ..ExperimentConfig::default()
    };
    let tr = run_solver(&env, &cfg, 0)?;
    for r in tr.rounds.iter().filter(|r| r.t % 25 == 0 || r.t == 1) {
        println!("t {:>3}  total {:.4}  groups {:.4?}", r.t, r.avg_total, r.avg_groups);
    }
    let h = env.mdp.horizon() as f64;
    let base = unconstrained_optimum(&env.mdp)?;
    let bv = mixture_values(&env.mdp, &base, &env.groups)?.per_step(env.mdp.horizon());
    println!("unconstrained total {:.4}  groups {:.4?}", bv.total, bv.groups);
    let fair = tr.mixture()?;
    println!(
        "occupancy entropy: fair {:.3}, unconstrained {:.3} (alpha/H = {})",
        entropy(&exact_occupancy(&env.mdp, &fair)?),
        entropy(&exact_occupancy(&env.mdp, &base)?),
        tr.alpha / h
    );
    Ok(())
}

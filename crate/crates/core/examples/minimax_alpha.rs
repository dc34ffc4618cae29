//! Largest threshold every group can be guaranteed, by bisection.
use fairmdp::envs::random_tabular_mdp;
use fairmdp::{solve_minimax_alpha, SolverConfig};

fn main() -> fairmdp::Result<()> {
    for seed in 0..4 {
        let (mdp, groups) = random_tabular_mdp(5, 2, 4, 3, seed)?;
        let cfg = SolverConfig { iterations: 1500, exact_evaluation: true, ..SolverConfig::default() };
        let res = solve_minimax_alpha(&mdp, &groups, &cfg, 1e-2)?;
        println!("instance {seed}: alpha* {:.4} per step {:.4} after {} probes", res.alpha, res.alpha / mdp.horizon() as f64, res.probes.len());
    }
    Ok(())
}

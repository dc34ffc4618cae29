//! Best-response learner against an FTPL regulator; exact equilibrium gaps
//! of the averaged play.
use fairmdp::envs::random_tabular_mdp;
use fairmdp::{equilibrium_check, morl_brnr, regulator_regret, solve_minimax_alpha, RegulatorKind, SolverConfig};

fn main() -> fairmdp::Result<()> {
    let (mdp, groups) = random_tabular_mdp(4, 2, 3, 2, 18)?;
    let exact = SolverConfig { iterations: 2000, exact_evaluation: true, ..SolverConfig::default() };
    // the vertex-only regulator needs a threshold that binds
    let alpha = solve_minimax_alpha(&mdp, &groups, &exact, 1e-2)?.alpha + 0.1;
    for t in [50usize, 200, 1000, 2000] {
        let cfg = SolverConfig { alpha, iterations: t, seed: 3, ..SolverConfig::default() };
        let tr = morl_brnr(&mdp, &groups, &cfg, RegulatorKind::Ftpl)?;
        let eq = equilibrium_check(&mdp, &groups, &tr.mixture()?, &tr.lambda_avg()?, alpha, cfg.bound)?;
        let regret = regulator_regret(&tr, &mdp, &groups, alpha, cfg.bound)?;
        println!(
            "T {t:>4}  nu {:.4}  learner gap {:.4}  regulator gap {:.4}  regulator regret/T {:.4}",
            eq.nu,
            eq.gap_learner,
            eq.gap_regulator,
            regret / t as f64
        );
    }
    Ok(())
}

//! Per-policy clipping versus pooled accounting, and the clipped driver.
use fairmdp::envs::{chain_with_rewards, two_state_chain, CHAIN_GO, CHAIN_STAY};
use fairmdp::game::lagrangian_l_pooled;
use fairmdp::mdp::mixture_values;
use fairmdp::{
    fairfict_err_canc, fairfict_rl, lagrangian_l, objective_u, GroupFunction, GroupSet, LagrangeWeights, Policy,
    PolicyMixture, SolverConfig,
};

fn main() -> fairmdp::Result<()> {
    let mdp = two_state_chain();
    let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![false, true])])?;
    let mix = PolicyMixture::new(
        vec![Policy::constant(2, 2, 2, CHAIN_GO)?, Policy::constant(2, 2, 2, CHAIN_STAY)?],
        vec![0.5, 0.5],
    )?;
    let alpha = 0.5;
    println!("V^g of the mixture {:.3} against alpha {alpha}", mixture_values(&mdp, &mix, &groups)?.groups[0]);
    for l in [0.5, 5.0, 25.0] {
        let lambda = LagrangeWeights::new(vec![l], 25.0)?;
        println!(
            "lambda {l:>4}: U {:.4}  L pooled {:.4}  L clipped {:.4}",
            objective_u(&mdp, &groups, &mix, &lambda, alpha)?,
            lagrangian_l_pooled(&mdp, &groups, &mix, &lambda, alpha)?,
            lagrangian_l(&mdp, &groups, &mix, &lambda, alpha)?
        );
    }

    let chain = chain_with_rewards(0.5, 1.0, 2);
    let g0 = GroupSet::new(vec![GroupFunction::Explicit(vec![true, false])])?;
    let cfg = SolverConfig { alpha: 0.8, iterations: 400, exact_evaluation: true, ..SolverConfig::default() };
    for (name, tr) in [("fairfict", fairfict_rl(&chain, &g0, &cfg)?), ("fairfict-ec", fairfict_err_canc(&chain, &g0, &cfg)?)] {
        let last = tr.rounds.last().expect("rounds");
        println!("{name:>11}: avg total {:.4}  avg group {:.4}", last.avg_total, last.avg_groups[0]);
    }
    Ok(())
}

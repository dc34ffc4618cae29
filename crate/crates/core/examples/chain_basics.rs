//! Exact evaluation, scalarization and best responses on the two-state chain.
use fairmdp::envs::{two_state_chain, CHAIN_GO, CHAIN_STAY};
use fairmdp::mdp::{best_response_policy, exact_values, policy_return, scalarize};
use fairmdp::{objective_u, GroupFunction, GroupSet, LagrangeWeights, Policy, PolicyMixture};

fn main() -> fairmdp::Result<()> {
    let mdp = two_state_chain();
    let groups = GroupSet::new(vec![GroupFunction::Explicit(vec![true, false]), GroupFunction::Explicit(vec![false, true])])?;
    for (name, a) in [("stay", CHAIN_STAY), ("go", CHAIN_GO)] {
        let pi = Policy::constant(mdp.horizon(), 2, 2, a)?;
        let v = exact_values(&mdp, &pi, &groups)?;
        println!("{name:>4}: total {:.3}  groups {:?}", v.total, v.groups);
    }

    let lambda = LagrangeWeights::new(vec![0.0, 2.0], 25.0)?;
    let alpha = 0.5;
    let reward = scalarize(&mdp, &groups, &lambda, alpha)?;
    let br = best_response_policy(&mdp, &groups, &lambda, alpha)?;
    let h = mdp.horizon() as f64;
    println!("best response actions {:?}", br.action_table());
    println!(
        "scalarized return {:.4} = H * U {:.4}",
        policy_return(&mdp, &br, reward.table())?,
        h * objective_u(&mdp, &groups, &PolicyMixture::point(br.clone()), &lambda, alpha)?
    );
    Ok(())
}

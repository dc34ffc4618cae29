use crate::envs;
use crate::groups::{GroupFunction, GroupSet};
use crate::mdp::{Policy, TabularMdp};

pub const STAY: usize = envs::CHAIN_STAY;
pub const GO: usize = envs::CHAIN_GO;

pub fn two_state_chain() -> TabularMdp {
    envs::two_state_chain()
}

/// `{s0}` and `{s1}`.
pub fn chain_groups() -> GroupSet {
    GroupSet::new(vec![GroupFunction::Explicit(vec![true, false]), GroupFunction::Explicit(vec![false, true])])
        .unwrap()
}

pub fn always(mdp: &TabularMdp, action: usize) -> Policy {
    Policy::constant(mdp.horizon(), mdp.num_states(), mdp.num_actions(), action).unwrap()
}

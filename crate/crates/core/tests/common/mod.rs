//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use fairmdp::groups::Membership;
use fairmdp::{GroupSet, GroupValues, Policy, TabularMdp};

/// Expected total and per-group returns by summing over every trajectory.
pub fn enumerate_values(mdp: &TabularMdp, policy: &Policy, membership: &Membership) -> GroupValues {
    let mut out = GroupValues { total: 0.0, groups: vec![0.0; membership.num_groups()] };
    for (s, &p) in mdp.initial_dist().iter().enumerate() {
        if p > 0.0 {
            walk(mdp, policy, membership, 0, s, p, 0.0, &vec![0.0; membership.num_groups()], &mut out);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    mdp: &TabularMdp,
    policy: &Policy,
    m: &Membership,
    h: usize,
    s: usize,
    prob: f64,
    total: f64,
    per_group: &[f64],
    out: &mut GroupValues,
) {
    if h == mdp.horizon() {
        out.total += prob * total;
        for (o, g) in out.groups.iter_mut().zip(per_group) {
            *o += prob * g;
        }
        return;
    }
    for (a, &pa) in policy.rule(h, s).iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let r = mdp.reward(s, a);
        let next_groups: Vec<f64> =
            per_group.iter().enumerate().map(|(g, x)| if m.contains(g, s) { x + r } else { *x }).collect();
        for (s2, &ps) in mdp.transition_row(s, a).iter().enumerate() {
            if ps > 0.0 {
                walk(mdp, policy, m, h + 1, s2, prob * pa * ps, total + r, &next_groups, out);
            }
        }
    }
}

/// Return of `policy` under a flat `(s, a)` reward table, by trajectory enumeration.
pub fn enumerate_return(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> f64 {
    fn go(mdp: &TabularMdp, policy: &Policy, reward: &[f64], h: usize, s: usize) -> f64 {
        if h == mdp.horizon() {
            return 0.0;
        }
        let a_n = mdp.num_actions();
        policy
            .rule(h, s)
            .iter()
            .enumerate()
            .filter(|(_, &pa)| pa > 0.0)
            .map(|(a, &pa)| {
                let future: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s2, &p)| p * go(mdp, policy, reward, h + 1, s2))
                    .sum();
                pa * (reward[s * a_n + a] + future)
            })
            .sum()
    }
    mdp.initial_dist().iter().enumerate().map(|(s, &p)| p * go(mdp, policy, reward, 0, s)).sum()
}

/// Every deterministic nonstationary policy, as `[h][s]` action tables.
pub fn all_deterministic(mdp: &TabularMdp) -> Vec<Policy> {
    let (h_n, s_n, a_n) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let cells = h_n * s_n;
    let count = a_n.pow(cells as u32);
    (0..count)
        .map(|mut code| {
            let mut table = vec![vec![0usize; s_n]; h_n];
            for c in 0..cells {
                table[c / s_n][c % s_n] = code % a_n;
                code /= a_n;
            }
            Policy::deterministic(&table, s_n, a_n).unwrap()
        })
        .collect()
}

/// First index with the smallest group cost, scanned naively.
pub fn brute_lin_opt(groups: &GroupSet, features: &[Vec<bool>], costs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (k, g) in groups.iter().enumerate() {
        let rows = g.expand(features).unwrap();
        let c: f64 = rows.iter().zip(costs).filter(|(m, _)| **m).map(|(_, c)| c).sum();
        if c < best_cost {
            best = k;
            best_cost = c;
        }
    }
    best
}

/// Pairwise separation by direct evaluation of every group on every point.
pub fn brute_separates(groups: &GroupSet, points: &[Vec<bool>]) -> bool {
    let sigs: Vec<Vec<bool>> = groups.iter().map(|g| g.expand(points).unwrap()).collect();
    for a in 0..sigs.len() {
        for b in 0..sigs.len() {
            if a != b && sigs[a] == sigs[b] {
                return false;
            }
        }
    }
    true
}

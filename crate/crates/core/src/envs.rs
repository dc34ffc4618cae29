//! Environment builders: a Barabási–Albert graph walk with degree-based
//! groups, random feature-annotated tabular MDPs, and a two-state chain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupFunction, GroupSet};
use crate::mdp::TabularMdp;
use crate::rng;

/// Chain action that keeps the current state.
pub const CHAIN_STAY: usize = 0;
/// Chain action that moves to the other state.
pub const CHAIN_GO: usize = 1;

/// Two states, two actions, `H = 2`, start at `s0`. Reward is 1 at `s1` and
/// 0 at `s0` regardless of the action. One feature, set only at `s1`.
pub fn two_state_chain() -> TabularMdp {
    chain_with_rewards(0.0, 1.0, 2)
}

/// Same dynamics as [`two_state_chain`] with custom per-state rewards.
pub fn chain_with_rewards(r0: f64, r1: f64, horizon: usize) -> TabularMdp {
    TabularMdp::new(
        vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
        vec![vec![r0, r0], vec![r1, r1]],
        vec![1.0, 0.0],
        vec![vec![false], vec![true]],
        horizon,
    )
    .expect("chain parameters are valid")
}

/// Undirected simple graph as sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphFile> for Graph {
    type Error = String;

    fn try_from(file: GraphFile) -> std::result::Result<Self, String> {
        Graph::from_edges(file.num_nodes, &file.edges).map_err(|e| e.to_string())
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        GraphFile { num_nodes: g.num_nodes(), edges: g.edges() }
    }
}

impl Graph {
    pub fn from_edges(num_nodes: usize, edges: &[[usize; 2]]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &[a, b] in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::config(format!("edge ({a}, {b}) references a node outside 0..{num_nodes}")));
            }
            if a == b {
                return Err(Error::config(format!("self-loop at node {a}")));
            }
            if adjacency[a].contains(&b) {
                return Err(Error::config(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        adjacency.iter_mut().for_each(|n| n.sort_unstable());
        Ok(Graph { adjacency })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges `[a, b]` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&b| b > a).map(|&b| [a, b]));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.num_nodes()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }
}

/// Preferential-attachment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaGraphSpec {
    pub num_nodes: usize,
    /// Edges added per arriving node (`n_e`).
    pub edges_per_node: usize,
    pub seed: u64,
}

impl BaGraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.edges_per_node == 0 {
            return Err(Error::config("edges_per_node must be at least 1"));
        }
        if self.num_nodes <= self.edges_per_node {
            return Err(Error::config(format!(
                "num_nodes = {} must exceed edges_per_node = {}",
                self.num_nodes, self.edges_per_node
            )));
        }
        Ok(())
    }
}

/// Starts from a clique on `n_e + 1` nodes; each later node links to `n_e`
/// distinct existing nodes drawn with probability proportional to degree.
pub fn generate_ba_graph(spec: &BaGraphSpec) -> Result<Graph> {
    spec.validate()?;
    let m0 = spec.edges_per_node + 1;
    let mut rng = rng::seeded(spec.seed);
    let mut edges = Vec::new();
    for a in 0..m0 {
        for b in a + 1..m0 {
            edges.push([a, b]);
        }
    }
    let mut degree = vec![0usize; spec.num_nodes];
    for &[a, b] in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    for v in m0..spec.num_nodes {
        let mut weights: Vec<f64> = degree[..v].iter().map(|&d| d as f64).collect();
        let mut targets = Vec::with_capacity(spec.edges_per_node);
        for _ in 0..spec.edges_per_node {
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let u = rng::sample_index(&mut rng, &probs);
            targets.push(u);
            weights[u] = 0.0;
        }
        for u in targets {
            edges.push([u, v]);
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    Graph::from_edges(spec.num_nodes, &edges)
}

/// Feature layout of graph states.
pub const FEATURE_DEG_LE_2: usize = 0;
pub const FEATURE_DEG_EQ_3: usize = 1;
pub const FEATURE_DEG_GE_4: usize = 2;
pub const FEATURE_DEG_LE_3: usize = 3;
pub const FEATURE_DEG_GE_3: usize = 4;
pub const GRAPH_FEATURE_DIM: usize = 5;

pub fn degree_features(degree: usize) -> Vec<bool> {
    vec![degree <= 2, degree == 3, degree >= 4, degree <= 3, degree >= 3]
}

/// Low / mid / high degree bucket, matching features 0, 1 and 2.
pub fn degree_bucket(degree: usize) -> usize {
    match degree {
        0..=2 => 0,
        3 => 1,
        _ => 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRule {
    /// Three groups: degree at most 2, exactly 3, at least 4.
    DegreeBuckets,
    /// Arbitrary conjunctions over the graph features.
    Conjunctions(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardRule {
    /// Reward by degree bucket, independent of the action.
    DegreeBuckets([f64; 3]),
}

impl Default for RewardRule {
    fn default() -> Self {
        RewardRule::DegreeBuckets([0.1, 0.2, 0.3])
    }
}

/// Random walk on the graph. Action 0 stays put, action `i ≥ 1` moves to
/// the `i`-th neighbor in sorted order; nodes with fewer neighbors alias the
/// missing actions to staying put. Start state is uniform.
pub fn graph_to_mdp(
    graph: &Graph,
    horizon: usize,
    group_rule: &GroupRule,
    reward_rule: &RewardRule,
) -> Result<(TabularMdp, GroupSet)> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::config("graph has no nodes"));
    }
    if !graph.is_connected() {
        return Err(Error::config("graph is disconnected"));
    }
    let num_actions = graph.max_degree() + 1;
    let RewardRule::DegreeBuckets(levels) = reward_rule;
    if let Some(r) = levels.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::config(format!("reward level {r} lies outside [0, 1]")));
    }
    let mut transitions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for s in 0..n {
        let nbrs = graph.neighbors(s);
        let rows: Vec<Vec<f64>> = (0..num_actions)
            .map(|a| {
                let mut row = vec![0.0; n];
                let dest = if a >= 1 && a <= nbrs.len() { nbrs[a - 1] } else { s };
                row[dest] = 1.0;
                row
            })
            .collect();
        transitions.push(rows);
        rewards.push(vec![levels[degree_bucket(graph.degree(s))]; num_actions]);
        features.push(degree_features(graph.degree(s)));
    }
    let mdp = TabularMdp::new(transitions, rewards, vec![1.0 / n as f64; n], features, horizon)?;
    let groups = match group_rule {
        GroupRule::DegreeBuckets => vec![
            GroupFunction::conjunction(vec![FEATURE_DEG_LE_2]),
            GroupFunction::conjunction(vec![FEATURE_DEG_EQ_3]),
            GroupFunction::conjunction(vec![FEATURE_DEG_GE_4]),
        ],
        GroupRule::Conjunctions(list) => list.iter().cloned().map(GroupFunction::conjunction).collect(),
    };
    let groups = GroupSet::new(groups)?;
    if groups.min_feature_dim() > GRAPH_FEATURE_DIM {
        return Err(Error::config(format!(
            "group conjunction references feature {} but graph states have {GRAPH_FEATURE_DIM} features",
            groups.min_feature_dim() - 1
        )));
    }
    Ok((mdp, groups))
}

/// Random MDP with Dirichlet(1) transition rows, uniform rewards, `k + 1`
/// fair-coin features and `k` conjunction groups of one or two features,
/// each nonempty on the state space when possible.
pub fn random_tabular_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_groups: usize,
    seed: u64,
) -> Result<(TabularMdp, GroupSet)> {
    if num_states == 0 || num_actions == 0 || num_groups == 0 {
        return Err(Error::config("random MDP needs at least one state, action and group"));
    }
    let mut rng = rng::seeded(seed);
    let dirichlet_row = |rng: &mut rng::SolverRng| -> Vec<f64> {
        let raw: Vec<f64> = (0..num_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    };
    let transitions: Vec<Vec<Vec<f64>>> =
        (0..num_states).map(|_| (0..num_actions).map(|_| dirichlet_row(&mut rng)).collect()).collect();
    let rewards: Vec<Vec<f64>> =
        (0..num_states).map(|_| (0..num_actions).map(|_| rng.gen::<f64>()).collect()).collect();
    let initial = dirichlet_row(&mut rng);
    let d = num_groups + 1;
    let features: Vec<Vec<bool>> = (0..num_states).map(|_| (0..d).map(|_| rng.gen_bool(0.5)).collect()).collect();
    let mut groups = Vec::with_capacity(num_groups);
    for _ in 0..num_groups {
        let mut chosen = GroupFunction::conjunction(vec![]);
        for _ in 0..64 {
            let first = rng.gen_range(0..d);
            let mut idx = vec![first];
            if rng.gen_bool(0.5) {
                let second = rng.gen_range(0..d);
                if second != first {
                    idx.push(second);
                }
            }
            let g = GroupFunction::conjunction(idx);
            if g.expand(&features)?.iter().any(|&b| b) {
                chosen = g;
                break;
            }
        }
        groups.push(chosen);
    }
    let mdp = TabularMdp::new(transitions, rewards, initial, features, horizon)?;
    Ok((mdp, GroupSet::new(groups)?))
}

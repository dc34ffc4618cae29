//! Group functions over annotated states, separator sets, and the two
//! linear-optimization oracles the regulator relies on.
//!
//! A group is either an explicit membership table over states or a monotone
//! conjunction over boolean features (`g(x) = 1` iff every listed feature is
//! set). Conjunctions can also be evaluated on bare feature vectors, which is
//! what separator sets need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point at which a group function can be evaluated.
#[derive(Clone, Copy, Debug)]
pub enum Context<'a> {
    /// A state of the environment together with its feature vector.
    State { index: usize, features: &'a [bool] },
    /// A bare feature vector that need not correspond to any state.
    Point(&'a [bool]),
}

impl<'a> Context<'a> {
    pub fn features(&self) -> &'a [bool] {
        match *self {
            Context::State { features, .. } => features,
            Context::Point(features) => features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupRepr", into = "GroupRepr")]
pub enum GroupFunction {
    /// Membership bit per state.
    Explicit(Vec<bool>),
    /// Feature indices that must all be set. The empty conjunction is `g ≡ 1`.
    Conjunction(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum GroupRepr {
    Explicit(Vec<u8>),
    Conjunction(Vec<usize>),
}

impl TryFrom<GroupRepr> for GroupFunction {
    type Error = String;

    fn try_from(repr: GroupRepr) -> std::result::Result<Self, String> {
        match repr {
            GroupRepr::Explicit(bits) => {
                let mut out = Vec::with_capacity(bits.len());
                for (s, b) in bits.into_iter().enumerate() {
                    match b {
                        0 => out.push(false),
                        1 => out.push(true),
                        other => {
                            return Err(format!("explicit membership at state {s} is {other}, expected 0 or 1"))
                        }
                    }
                }
                Ok(GroupFunction::Explicit(out))
            }
            GroupRepr::Conjunction(idx) => Ok(GroupFunction::conjunction(idx)),
        }
    }
}

impl From<GroupFunction> for GroupRepr {
    fn from(g: GroupFunction) -> Self {
        match g {
            GroupFunction::Explicit(bits) => GroupRepr::Explicit(bits.into_iter().map(u8::from).collect()),
            GroupFunction::Conjunction(idx) => GroupRepr::Conjunction(idx),
        }
    }
}

impl GroupFunction {
    /// Builds a conjunction with its indices sorted and deduplicated.
    pub fn conjunction(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        GroupFunction::Conjunction(indices)
    }

    /// Conjunction over the set bits of `mask`.
    pub fn from_mask(mask: u64) -> Self {
        GroupFunction::Conjunction((0..64).filter(|j| mask >> j & 1 == 1).collect())
    }

    pub fn is_conjunction(&self) -> bool {
        matches!(self, GroupFunction::Conjunction(_))
    }

    pub fn evaluate(&self, ctx: Context<'_>) -> Result<bool> {
        match self {
            GroupFunction::Explicit(bits) => match ctx {
                Context::State { index, .. } => bits.get(index).copied().ok_or_else(|| {
                    Error::config(format!(
                        "explicit group covers {} states but state {index} was queried",
                        bits.len()
                    ))
                }),
                Context::Point(_) => Err(Error::config(
                    "explicit group cannot be evaluated on a bare feature vector",
                )),
            },
            GroupFunction::Conjunction(idx) => {
                let x = ctx.features();
                let mut member = true;
                for &j in idx {
                    match x.get(j) {
                        Some(&bit) => member &= bit,
                        None => {
                            return Err(Error::config(format!(
                                "conjunction uses feature {j} but the feature vector has dimension {}",
                                x.len()
                            )))
                        }
                    }
                }
                Ok(member)
            }
        }
    }

    /// Expands to an explicit membership table over `features` (one row per state).
    pub fn expand(&self, features: &[Vec<bool>]) -> Result<Vec<bool>> {
        features
            .iter()
            .enumerate()
            .map(|(index, x)| self.evaluate(Context::State { index, features: x }))
            .collect()
    }
}

/// Contexts on which any two distinct groups of a class disagree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatorSet {
    pub points: Vec<Vec<bool>>,
}

impl SeparatorSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Outcome of an exhaustive pairwise separation check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeparatorCheck {
    pub separated: bool,
    pub failing_pair: Option<(usize, usize)>,
}

/// Ordered, nonempty collection of group functions. Group `k` keeps its
/// index for the lifetime of the set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSet {
    groups: Vec<GroupFunction>,
    separator: Option<SeparatorSet>,
}

impl GroupSet {
    pub fn new(groups: Vec<GroupFunction>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("group set must contain at least one group"));
        }
        Ok(GroupSet { groups, separator: None })
    }

    /// Every monotone conjunction over `d` features, listed in mask order
    /// (group `k` is the conjunction over the set bits of `k`).
    pub fn all_conjunctions(d: usize) -> Result<Self> {
        if d > 20 {
            return Err(Error::config(format!("refusing to enumerate 2^{d} conjunctions; d must be at most 20")));
        }
        GroupSet::new((0..1u64 << d).map(GroupFunction::from_mask).collect())
    }

    /// Attaches a separator after checking it separates every pair of groups.
    pub fn with_separator(mut self, separator: SeparatorSet) -> Result<Self> {
        let check = verify_separator(&self, &separator)?;
        if let Some((a, b)) = check.failing_pair {
            return Err(Error::config(format!("separator does not separate groups {a} and {b}")));
        }
        self.separator = Some(separator);
        Ok(self)
    }

    pub fn separator(&self) -> Option<&SeparatorSet> {
        self.separator.as_ref()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&GroupFunction> {
        self.groups.get(k)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupFunction> {
        self.groups.iter()
    }

    pub fn all_conjunction(&self) -> bool {
        self.groups.iter().all(GroupFunction::is_conjunction)
    }

    /// Largest feature index referenced by any conjunction, plus one.
    pub fn min_feature_dim(&self) -> usize {
        self.groups
            .iter()
            .filter_map(|g| match g {
                GroupFunction::Conjunction(idx) => idx.last().map(|&j| j + 1),
                GroupFunction::Explicit(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn membership(&self, features: &[Vec<bool>]) -> Result<Membership> {
        let num_states = features.len();
        let mut bits = Vec::with_capacity(self.len() * num_states);
        for (k, g) in self.groups.iter().enumerate() {
            if let GroupFunction::Explicit(table) = g {
                if table.len() != num_states {
                    return Err(Error::config(format!(
                        "group {k} lists {} membership bits but the environment has {num_states} states",
                        table.len()
                    )));
                }
            }
            bits.extend(g.expand(features)?);
        }
        Ok(Membership { num_groups: self.len(), num_states, bits })
    }

    /// `argmin_g <g_S, c>` over the listed groups.
    pub fn lin_opt(&self, features: &[Vec<bool>], costs: &[f64]) -> Result<usize> {
        self.membership(features)?.lin_opt(costs)
    }

    /// `argmin_g sum_i g(ctx_i) c_i` over the listed groups.
    pub fn opt_seq(&self, contexts: &[Context<'_>], costs: &[f64]) -> Result<usize> {
        if contexts.len() != costs.len() {
            return Err(Error::config(format!(
                "opt_seq received {} contexts but {} costs",
                contexts.len(),
                costs.len()
            )));
        }
        let mut scores = Vec::with_capacity(self.len());
        for g in &self.groups {
            let mut total = 0.0;
            for (ctx, &c) in contexts.iter().zip(costs) {
                if g.evaluate(*ctx)? {
                    total += c;
                }
            }
            scores.push(total);
        }
        Ok(argmin_lowest(&scores))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.groups)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let groups: Vec<GroupFunction> = serde_json::from_str(s)?;
        GroupSet::new(groups)
    }
}

/// Dense group-by-state membership table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    num_groups: usize,
    num_states: usize,
    bits: Vec<bool>,
}

impl Membership {
    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn contains(&self, group: usize, state: usize) -> bool {
        self.bits[group * self.num_states + state]
    }

    pub fn row(&self, group: usize) -> &[bool] {
        &self.bits[group * self.num_states..(group + 1) * self.num_states]
    }

    /// `<g_S, c>` for one group.
    pub fn dot(&self, group: usize, costs: &[f64]) -> f64 {
        self.row(group).iter().zip(costs).filter(|(m, _)| **m).map(|(_, c)| c).sum()
    }

    pub fn lin_opt(&self, costs: &[f64]) -> Result<usize> {
        if costs.len() != self.num_states {
            return Err(Error::config(format!(
                "cost vector has length {} but there are {} states",
                costs.len(),
                self.num_states
            )));
        }
        let scores: Vec<f64> = (0..self.num_groups).map(|g| self.dot(g, costs)).collect();
        Ok(argmin_lowest(&scores))
    }
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Separator of size `d` for monotone conjunctions: the all-ones vector with
/// coordinate `j` zeroed, for each `j`.
pub fn conjunction_separator(d: usize) -> Result<SeparatorSet> {
    if d == 0 {
        return Err(Error::config("separator dimension must be at least 1"));
    }
    let points = (0..d)
        .map(|j| (0..d).map(|i| i != j).collect())
        .collect();
    Ok(SeparatorSet { points })
}

pub fn verify_separator(groups: &GroupSet, separator: &SeparatorSet) -> Result<SeparatorCheck> {
    let signatures = groups
        .iter()
        .map(|g| {
            separator
                .points
                .iter()
                .map(|x| g.evaluate(Context::Point(x)))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for a in 0..signatures.len() {
        for b in a + 1..signatures.len() {
            if signatures[a] == signatures[b] {
                return Ok(SeparatorCheck { separated: false, failing_pair: Some((a, b)) });
            }
        }
    }
    Ok(SeparatorCheck { separated: true, failing_pair: None })
}

/// The implicit class of all `2^d` monotone conjunctions, searched lazily.
/// Conjunction `m` is the one over the set bits of `m`, matching
/// [`GroupSet::all_conjunctions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConjunctionClass {
    pub dim: usize,
}

impl ConjunctionClass {
    pub fn new(dim: usize) -> Result<Self> {
        if dim > 20 {
            return Err(Error::config(format!("implicit conjunction class supports d <= 20, got {dim}")));
        }
        Ok(ConjunctionClass { dim })
    }

    fn masks(features: &[Vec<bool>], dim: usize) -> Result<Vec<u64>> {
        features
            .iter()
            .enumerate()
            .map(|(s, x)| {
                if x.len() != dim {
                    return Err(Error::config(format!(
                        "context {s} has {} features, expected {dim}",
                        x.len()
                    )));
                }
                Ok(x.iter().enumerate().fold(0u64, |m, (j, &b)| m | (u64::from(b) << j)))
            })
            .collect()
    }

    /// `argmin_m sum_i [x_i ⊇ m] c_i` over every conjunction mask.
    pub fn opt_seq(&self, points: &[Vec<bool>], costs: &[f64]) -> Result<usize> {
        if points.len() != costs.len() {
            return Err(Error::config(format!(
                "opt_seq received {} contexts but {} costs",
                points.len(),
                costs.len()
            )));
        }
        let masks = Self::masks(points, self.dim)?;
        let mut best = (0usize, f64::INFINITY);
        for m in 0..1u64 << self.dim {
            let score: f64 = masks.iter().zip(costs).filter(|(x, _)| *x & m == m).map(|(_, c)| c).sum();
            if score < best.1 {
                best = (m as usize, score);
            }
        }
        Ok(best.0)
    }

    /// Linear oracle over states given their feature table.
    pub fn lin_opt(&self, features: &[Vec<bool>], costs: &[f64]) -> Result<usize> {
        self.opt_seq(features, costs)
    }
}

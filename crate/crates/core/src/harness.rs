//! File-based experiment commands: generate environments, run a solver,
//! sweep thresholds, and audit a finished transcript.
//!
//! Output layout under the output directory:
//!
//! | file                | contents                                         |
//! |---------------------|--------------------------------------------------|
//! | `mdp.json`          | environment                                      |
//! | `groups.json`       | group functions                                  |
//! | `graph.json`        | edge list (graph environments only)              |
//! | `transcript.jsonl`  | one record per round, then a summary record      |
//! | `summary.json`      | the summary record on its own                    |
//! | `group_rewards.csv` | per-round per-step averages of `D̂_t`            |
//! | `occupancy.csv`     | state occupancy of `D̂_T` and of the unconstrained optimum |
//! | `pareto.csv`        | one row per threshold of a sweep                 |

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{self, BaGraphSpec, Graph, GroupRule, RewardRule};
use crate::error::{Error, Result};
use crate::game::{
    equilibrium_check, fairfict_err_canc, fairfict_rl, morl_brnr, regulator_regret, EquilibriumReport,
    GameTranscript, RegulatorKind, SolverConfig,
};
use crate::groups::{conjunction_separator, GroupSet};
use crate::mdp::{exact_occupancy, value_iteration, Evaluator, PolicyMixture, TabularMdp};
use crate::rng::derive_seed;

/// Overrides the output directory when no `--out` flag is given.
pub const OUT_DIR_ENV: &str = "FAIRMDP_OUT_DIR";

pub const MDP_FILE: &str = "mdp.json";
pub const GROUPS_FILE: &str = "groups.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const GROUP_REWARDS_FILE: &str = "group_rewards.csv";
pub const OCCUPANCY_FILE: &str = "occupancy.csv";
pub const PARETO_FILE: &str = "pareto.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSource {
    /// Directory holding `mdp.json` and `groups.json`.
    Dir { path: PathBuf },
    Ba { nodes: usize, ne: usize, seed: u64, horizon: usize },
    Random { states: usize, actions: usize, horizon: usize, groups: usize, seed: u64 },
}

impl Default for EnvSource {
    fn default() -> Self {
        EnvSource::Ba { nodes: 12, ne: 2, seed: 7, horizon: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Fairfict,
    FairfictEc,
    MorlFtpl,
    MorlCtxFtpl,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fairfict => "fairfict",
            Algorithm::FairfictEc => "fairfict-ec",
            Algorithm::MorlFtpl => "morl-ftpl",
            Algorithm::MorlCtxFtpl => "morl-ctx-ftpl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fairfict" => Ok(Algorithm::Fairfict),
            "fairfict-ec" => Ok(Algorithm::FairfictEc),
            "morl-ftpl" => Ok(Algorithm::MorlFtpl),
            "morl-ctx-ftpl" => Ok(Algorithm::MorlCtxFtpl),
            other => Err(Error::config(format!(
                "unknown algorithm '{other}'; expected fairfict, fairfict-ec, morl-ftpl or morl-ctx-ftpl"
            ))),
        }
    }
}

/// Everything a `solve` or `pareto` run needs. `solver.alpha` is ignored;
/// the cumulative threshold is `alpha_per_step · H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub algorithm: Algorithm,
    pub alpha_per_step: f64,
    pub solver: SolverConfig,
    pub out_dir: PathBuf,
    /// Per-step thresholds for `pareto`.
    pub alpha_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvSource::default(),
            algorithm: Algorithm::default(),
            alpha_per_step: 0.0,
            solver: SolverConfig::default(),
            out_dir: PathBuf::from("out"),
            alpha_grid: vec![0.0, 0.02, 0.04, 0.06, 0.08, 0.10],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = read_input(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_per_step >= 0.0) || !self.alpha_per_step.is_finite() {
            return Err(Error::config(format!("alpha per step must be >= 0, got {}", self.alpha_per_step)));
        }
        SolverConfig { alpha: 0.0, ..self.solver.clone() }.validate()
    }
}

/// Loaded environment with any requirements of the chosen algorithm applied.
#[derive(Clone, Debug)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub groups: GroupSet,
    pub graph: Option<Graph>,
}

impl Environment {
    /// Builds or reads the environment. Conjunction-only group sets get the
    /// standard separator attached when it verifies.
    pub fn load(source: &EnvSource) -> Result<Self> {
        let (mdp, groups, graph) = match source {
            EnvSource::Dir { path } => {
                let mdp = TabularMdp::from_json_str(&read_input(&path.join(MDP_FILE))?)
                    .map_err(|e| Error::config(format!("{}: {e}", path.join(MDP_FILE).display())))?;
                let groups = GroupSet::from_json_str(&read_input(&path.join(GROUPS_FILE))?)
                    .map_err(|e| Error::config(format!("{}: {e}", path.join(GROUPS_FILE).display())))?;
                let graph_path = path.join(GRAPH_FILE);
                let graph = if graph_path.exists() {
                    Some(
                        serde_json::from_str(&read_input(&graph_path)?)
                            .map_err(|e| Error::config(format!("{}: {e}", graph_path.display())))?,
                    )
                } else {
                    None
                };
                (mdp, groups, graph)
            }
            EnvSource::Ba { nodes, ne, seed, horizon } => {
                let graph = envs::generate_ba_graph(&BaGraphSpec { num_nodes: *nodes, edges_per_node: *ne, seed: *seed })?;
                let (mdp, groups) =
                    envs::graph_to_mdp(&graph, *horizon, &GroupRule::DegreeBuckets, &RewardRule::default())?;
                (mdp, groups, Some(graph))
            }
            EnvSource::Random { states, actions, horizon, groups, seed } => {
                let (mdp, g) = envs::random_tabular_mdp(*states, *actions, *horizon, *groups, *seed)?;
                (mdp, g, None)
            }
        };
        // surface membership errors at load time
        groups.membership(mdp.features())?;
        let groups = attach_separator(groups, mdp.feature_dim());
        Ok(Environment { mdp, groups, graph })
    }

    pub fn check_algorithm(&self, algorithm: Algorithm) -> Result<()> {
        if algorithm == Algorithm::MorlCtxFtpl && self.groups.separator().is_none() {
            return Err(Error::config(
                "morl-ctx-ftpl needs conjunction groups over the state features with a separating set; \
                 this group file has explicit groups or groups the standard separator cannot tell apart",
            ));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = vec![dir.join(MDP_FILE), dir.join(GROUPS_FILE)];
        fs::write(&written[0], self.mdp.to_json_string()? + "\n")?;
        fs::write(&written[1], self.groups.to_json_string()? + "\n")?;
        if let Some(graph) = &self.graph {
            let p = dir.join(GRAPH_FILE);
            fs::write(&p, serde_json::to_string_pretty(graph)? + "\n")?;
            written.push(p);
        }
        Ok(written)
    }
}

fn attach_separator(groups: GroupSet, dim: usize) -> GroupSet {
    if !groups.all_conjunction() || dim == 0 || groups.min_feature_dim() > dim {
        return groups;
    }
    match conjunction_separator(dim) {
        Ok(sep) => groups.clone().with_separator(sep).unwrap_or(groups),
        Err(_) => groups,
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
}

/// Output directory: explicit flag, then `FAIRMDP_OUT_DIR`, then the config value.
pub fn resolve_out_dir(flag: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| configured.to_path_buf())
}

/// Writes the environment files for `source` and returns their paths.
pub fn cmd_generate(source: &EnvSource, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if let EnvSource::Dir { .. } = source {
        return Err(Error::config("generate needs a generator spec, not a directory"));
    }
    Environment::load(source)?.write(out_dir)
}

/// Runs the configured algorithm at `alpha_per_step` without writing files.
pub fn run_solver(env: &Environment, config: &ExperimentConfig, seed: u64) -> Result<GameTranscript> {
    config.validate()?;
    env.check_algorithm(config.algorithm)?;
    let solver = SolverConfig { seed, ..config.solver.clone() }.with_alpha_per_step(config.alpha_per_step, env.mdp.horizon());
    match config.algorithm {
        Algorithm::Fairfict => fairfict_rl(&env.mdp, &env.groups, &solver),
        Algorithm::FairfictEc => fairfict_err_canc(&env.mdp, &env.groups, &solver),
        Algorithm::MorlFtpl => morl_brnr(&env.mdp, &env.groups, &solver, RegulatorKind::Ftpl),
        Algorithm::MorlCtxFtpl => morl_brnr(&env.mdp, &env.groups, &solver, RegulatorKind::CtxFtpl),
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub transcript: GameTranscript,
    pub files: Vec<PathBuf>,
    /// Exact per-step values of `D̂_T`.
    pub avg_total: f64,
    pub avg_groups: Vec<f64>,
    /// Per-step value of the unconstrained optimum.
    pub unconstrained_avg: f64,
    pub first_feasible_round: Option<usize>,
}

pub fn cmd_solve(config: &ExperimentConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let env = Environment::load(&config.env)?;
    env.check_algorithm(config.algorithm)?;
    let transcript = run_solver(&env, config, config.solver.seed)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let p = dir.join(TRANSCRIPT_FILE);
    let mut w = BufWriter::new(fs::File::create(&p)?);
    transcript.write_jsonl(&mut w)?;
    drop(w);
    files.push(p);

    let summary = transcript.summary()?;
    let p = dir.join(SUMMARY_FILE);
    fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")?;
    files.push(p);

    let p = dir.join(GROUP_REWARDS_FILE);
    write_group_rewards(&p, &transcript)?;
    files.push(p);

    let mixture = transcript.mixture()?;
    let unconstrained = unconstrained_optimum(&env.mdp)?;
    let p = dir.join(OCCUPANCY_FILE);
    write_occupancy(&p, &env, &mixture, &unconstrained)?;
    files.push(p);

    let h = env.mdp.horizon() as f64;
    let unconstrained_avg = value_iteration(&env.mdp, &reward_table(&env.mdp))?.value / h;
    Ok(SolveOutcome {
        files,
        avg_total: summary.avg_total,
        avg_groups: summary.avg_groups,
        unconstrained_avg,
        first_feasible_round: summary.first_feasible_round,
        transcript,
    })
}

fn reward_table(mdp: &TabularMdp) -> Vec<f64> {
    (0..mdp.num_states()).flat_map(|s| (0..mdp.num_actions()).map(move |a| mdp.reward(s, a))).collect()
}

/// Reward-maximizing deterministic policy, ignoring every group.
pub fn unconstrained_optimum(mdp: &TabularMdp) -> Result<PolicyMixture> {
    Ok(PolicyMixture::point(value_iteration(mdp, &reward_table(mdp))?.policy))
}

fn write_group_rewards(path: &Path, tr: &GameTranscript) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["t".to_string(), "total".to_string()];
    header.extend((0..tr.num_groups()).map(|g| format!("group_{g}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in &tr.rounds {
        let mut row = vec![r.t.to_string(), r.avg_total.to_string()];
        row.extend(r.avg_groups.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_occupancy(path: &Path, env: &Environment, fair: &PolicyMixture, base: &PolicyMixture) -> Result<()> {
    let fair_occ = exact_occupancy(&env.mdp, fair)?;
    let base_occ = exact_occupancy(&env.mdp, base)?;
    let membership = env.groups.membership(env.mdp.features())?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["state", "group", "degree", "fair", "unconstrained"]).map_err(csv_err)?;
    for s in 0..env.mdp.num_states() {
        let group = (0..membership.num_groups()).find(|&g| membership.contains(g, s)).map_or(String::new(), |g| g.to_string());
        let degree = env.graph.as_ref().map_or(String::new(), |g| g.degree(s).to_string());
        w.write_record([s.to_string(), group, degree, fair_occ[s].to_string(), base_occ[s].to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Runtime(format!("csv: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub alpha_per_step: f64,
    pub total: Option<f64>,
    pub groups: Vec<f64>,
    /// Largest minus smallest group average.
    pub spread: Option<f64>,
    pub error: Option<String>,
}

/// One solve per threshold, run in parallel; a failed grid point is
/// recorded on its row and the sweep continues.
pub fn cmd_pareto(config: &ExperimentConfig) -> Result<Vec<ParetoRow>> {
    let grid = &config.alpha_grid;
    if grid.is_empty() {
        return Err(Error::config("alpha grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("alpha grid must be strictly ascending"));
    }
    config.validate()?;
    let env = Environment::load(&config.env)?;
    env.check_algorithm(config.algorithm)?;
    let rows = pareto_rows(&env, config)?;
    fs::create_dir_all(&config.out_dir)?;
    write_pareto(&config.out_dir.join(PARETO_FILE), &rows, env.groups.len())?;
    Ok(rows)
}

/// The sweep without file output.
pub fn pareto_rows(env: &Environment, config: &ExperimentConfig) -> Result<Vec<ParetoRow>> {
    let eval = Evaluator::new(&env.mdp, &env.groups)?;
    let h = env.mdp.horizon() as f64;
    Ok(config
        .alpha_grid
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let cfg = ExperimentConfig { alpha_per_step: a, ..config.clone() };
            let outcome = run_solver(env, &cfg, derive_seed(config.solver.seed, i as u64))
                .and_then(|tr| eval.mixture_values(&tr.mixture()?));
            match outcome {
                Ok(v) => {
                    let groups: Vec<f64> = v.groups.iter().map(|g| g / h).collect();
                    let spread = v.max_group() / h - v.min_group() / h;
                    ParetoRow { alpha_per_step: a, total: Some(v.total / h), groups, spread: Some(spread), error: None }
                }
                Err(e) => ParetoRow { alpha_per_step: a, total: None, groups: vec![], spread: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

fn write_pareto(path: &Path, rows: &[ParetoRow], num_groups: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["alpha_per_step".to_string(), "total".to_string()];
    header.extend((0..num_groups).map(|g| format!("group_{g}")));
    header.extend(["spread".to_string(), "error".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in rows {
        let mut row = vec![r.alpha_per_step.to_string(), opt(r.total)];
        if r.groups.len() == num_groups {
            row.extend(r.groups.iter().map(f64::to_string));
        } else {
            row.extend(std::iter::repeat_n(String::new(), num_groups));
        }
        row.push(opt(r.spread));
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub algorithm: String,
    pub iterations: usize,
    pub equilibrium: EquilibriumReport,
    pub regulator_regret: f64,
    /// Exact per-step values of `D̂_T`.
    pub avg_total: f64,
    pub avg_groups: Vec<f64>,
    pub alpha_per_step: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algorithm        {}", self.algorithm)?;
        writeln!(f, "iterations       {}", self.iterations)?;
        writeln!(f, "alpha per step   {:.6}", self.alpha_per_step)?;
        writeln!(f, "gap (learner)    {:.3e}", self.equilibrium.gap_learner)?;
        writeln!(f, "gap (regulator)  {:.3e}", self.equilibrium.gap_regulator)?;
        writeln!(f, "nu               {:.3e}", self.equilibrium.nu)?;
        writeln!(f, "regulator regret {:.6}", self.regulator_regret)?;
        writeln!(f, "avg total        {:.6}", self.avg_total)?;
        for (g, v) in self.avg_groups.iter().enumerate() {
            writeln!(f, "avg group {g:<6} {v:.6}")?;
        }
        Ok(())
    }
}

/// Exact equilibrium gaps and regulator regret of a saved transcript.
pub fn cmd_check(env_source: &EnvSource, transcript_path: &Path) -> Result<CheckReport> {
    let env = Environment::load(env_source)?;
    let file = fs::File::open(transcript_path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", transcript_path.display())))?;
    let tr = GameTranscript::read_jsonl(BufReader::new(file))?;
    check_transcript(&env, &tr)
}

pub fn check_transcript(env: &Environment, tr: &GameTranscript) -> Result<CheckReport> {
    tr.check_environment(&env.mdp, &env.groups)?;
    let mixture = tr.mixture()?;
    let lambda = tr.lambda_avg()?;
    let equilibrium = equilibrium_check(&env.mdp, &env.groups, &mixture, &lambda, tr.alpha, tr.bound)?;
    let regulator_regret = regulator_regret(tr, &env.mdp, &env.groups, tr.alpha, tr.bound)?;
    let v = Evaluator::new(&env.mdp, &env.groups)?.mixture_values(&mixture)?.per_step(env.mdp.horizon());
    Ok(CheckReport {
        algorithm: tr.algorithm.clone(),
        iterations: tr.len(),
        equilibrium,
        regulator_regret,
        avg_total: v.total,
        avg_groups: v.groups,
        alpha_per_step: tr.alpha / env.mdp.horizon() as f64,
    })
}

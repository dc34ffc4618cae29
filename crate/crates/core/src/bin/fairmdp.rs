use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairmdp::harness::{self, Algorithm, EnvSource, ExperimentConfig};
use fairmdp::Result;

#[derive(Parser)]
#[command(name = "fairmdp", version, about = "Group-fair planning in tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write environment files.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Run one solver and write its transcript and CSVs.
    Solve(RunArgs),
    /// Sweep per-step thresholds and write pareto.csv.
    Pareto {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated per-step thresholds, ascending.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Equilibrium gaps and regulator regret of a saved transcript.
    Check {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
    },
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Preferential-attachment graph walk with degree groups.
    Ba {
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        ne: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random transitions and rewards with conjunction groups.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        groups: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with mdp.json and groups.json.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    alg: Option<String>,
    #[arg(long)]
    alpha_per_step: Option<f64>,
    #[arg(long = "C")]
    bound: Option<f64>,
    #[arg(long = "T")]
    iterations: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Exact regulator feedback instead of Monte Carlo.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    clip_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable regulator perturbations.
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = self.env {
            c.env = EnvSource::Dir { path };
        }
        if let Some(a) = &self.alg {
            c.algorithm = Algorithm::parse(a)?;
        }
        if let Some(v) = self.alpha_per_step {
            c.alpha_per_step = v;
        }
        if let Some(v) = self.bound {
            c.solver.bound = v;
        }
        if let Some(v) = self.iterations {
            c.solver.iterations = v;
        }
        if let Some(v) = self.eval_episodes {
            c.solver.eval_episodes = v;
        }
        if let Some(v) = self.clip_samples {
            c.solver.clip_samples = v;
        }
        if let Some(v) = self.seed {
            c.solver.seed = v;
        }
        c.solver.exact_evaluation |= self.exact;
        c.solver.disable_noise |= self.no_noise;
        c.out_dir = harness::resolve_out_dir(self.out, &c.out_dir);
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { kind } => {
            let (source, out) = match kind {
                GenerateKind::Ba { nodes, ne, seed, horizon, out } => (EnvSource::Ba { nodes, ne, seed, horizon }, out),
                GenerateKind::Random { states, actions, horizon, groups, seed, out } => {
                    (EnvSource::Random { states, actions, horizon, groups, seed }, out)
                }
            };
            let dir = harness::resolve_out_dir(out, &ExperimentConfig::default().out_dir);
            for p in harness::cmd_generate(&source, &dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Solve(args) => {
            let config = args.into_config()?;
            let out = harness::cmd_solve(&config)?;
            for p in &out.files {
                println!("wrote {}", p.display());
            }
            println!("avg total {:.6} (unconstrained {:.6})", out.avg_total, out.unconstrained_avg);
            for (g, v) in out.avg_groups.iter().enumerate() {
                println!("avg group {g} {v:.6}");
            }
            match out.first_feasible_round {
                Some(t) => println!("all groups at or above threshold from round {t}"),
                None => println!("threshold never met by the running average"),
            }
        }
        Command::Pareto { run, alphas } => {
            let mut config = run.into_config()?;
            if let Some(a) = alphas {
                config.alpha_grid = a;
            }
            let rows = harness::cmd_pareto(&config)?;
            println!("wrote {}", config.out_dir.join(harness::PARETO_FILE).display());
            for r in rows {
                match (&r.error, r.total, r.spread) {
                    (None, Some(t), Some(s)) => println!("alpha/H {:.3}  total {t:.6}  spread {s:.6}", r.alpha_per_step),
                    (err, _, _) => println!("alpha/H {:.3}  failed: {}", r.alpha_per_step, err.clone().unwrap_or_default()),
                }
            }
        }
        Command::Check { env, transcript } => {
            print!("{}", harness::cmd_check(&EnvSource::Dir { path: env }, &transcript)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

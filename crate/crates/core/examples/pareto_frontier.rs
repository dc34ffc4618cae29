//! Reward/fairness trade-off over a grid of per-step thresholds.
use fairmdp::harness::{pareto_rows, EnvSource, Environment, ExperimentConfig};
use fairmdp::SolverConfig;

fn main() -> fairmdp::Result<()> {
    let env = Environment::load(&EnvSource::default())?;
    let cfg = ExperimentConfig {
        solver: SolverConfig { iterations: 1000, exact_evaluation: true, ..SolverConfig::default() },
        ..ExperimentConfig::default()
    };
    println!("alpha/H   total    spread");
    for row in pareto_rows(&env, &cfg)? {
        match (row.total, row.spread) {
            (Some(t), Some(s)) => println!("{:<8.2}  {t:.4}   {s:.4}", row.alpha_per_step),
            _ => println!("{:<8.2}  failed: {}", row.alpha_per_step, row.error.unwrap_or_default()),
        }
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use teleop_twin::base::ClockMode;
use teleop_twin::harness::{
    evaluate_command, run_command, serve, sweep_command, train_command, ExperimentConfig, PolicySpec,
};
use teleop_twin::network::DelaySpec;
use teleop_twin::Result;

/// Delay-injected teleoperation simulator.
#[derive(Debug, Parser)]
#[command(name = "teleop-twin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write its record.
    Run(Common),
    /// Meta-train the horizon policy and write checkpoints and curves.
    Train(Common),
    /// Score the agent and the baselines on every task.
    Evaluate(Common),
    /// Train and score under each configured delay mean.
    Sweep(Common),
    /// Serve the live session endpoint for an operator console.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment file; without it, defaults apply and --seed is required.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// wp, rs, od, agent or agent:<checkpoint>
    #[arg(long)]
    policy: Option<PolicySpec>,
    /// Mean one-way delay on every link (ms).
    #[arg(long)]
    delay_mean: Option<f64>,
    /// Delay standard deviation on every link (ms).
    #[arg(long, requires = "delay_mean")]
    delay_std: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.seed) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(seed)) => ExperimentConfig::new(seed),
            (None, None) => {
                return Err(teleop_twin::Error::config("either --config or --seed is required"));
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = &self.policy {
            cfg.policy = p.clone();
        }
        if let Some(mean) = self.delay_mean {
            let std = self.delay_std.unwrap_or(match &cfg.pipeline.delay.uplink {
                DelaySpec::Normal { std_ms, .. } => *std_ms,
                _ => 0.0,
            });
            cfg = cfg.with_uniform_delay(mean, std);
            cfg.sweep.means_ms = vec![mean];
            cfg.sweep.std_ms = std;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let s = run_command(&c.load()?)?;
            println!(
                "{} on {}: e_v {:.6} m, e_r {:.6} m, T_v {:.1} ms, T_r {:.1} ms",
                s.policy, s.task, s.score.e_v, s.score.e_r, s.score.t_v_ms, s.score.t_r_ms
            );
        }
        Command::Train(c) => {
            let s = train_command(&c.load()?)?;
            println!(
                "stage 1: {} episodes, converged at {:?}, final smoothed reward {:.6}; checkpoint {}",
                s.stage1_episodes,
                s.stage1_convergence_episode,
                s.stage1_final_reward,
                s.checkpoint.display()
            );
        }
        Command::Evaluate(c) => {
            let e = evaluate_command(&c.load()?)?;
            println!("{:<8} {:>12} {:>12} {:>10}", "policy", "combined", "std", "delta %");
            for s in &e.comparison.ranking {
                println!(
                    "{:<8} {:>12.6} {:>12.6} {:>10.2}",
                    s.policy, s.combined_mean, s.combined_std, s.delta_pct
                );
            }
        }
        Command::Sweep(c) => {
            for r in sweep_command(&c.load()?)? {
                println!(
                    "N({}, {}²): RMSE {:.6} m, convergence {:?}, T_v {:.1} ms (budget {:.1}), T_r {:.1} ms (budget {:.1})",
                    r.delay_mean_ms,
                    r.delay_std_ms,
                    r.average_rmse,
                    r.convergence_episode,
                    r.visual_e2e_ms,
                    r.visual_budget_ms,
                    r.control_e2e_ms,
                    r.control_budget_ms
                );
            }
        }
        Command::Serve { common, port } => {
            let mut cfg = common.load()?;
            cfg.pipeline.clock = ClockMode::Realtime;
            if let Some(port) = port {
                cfg.serve.port = port;
            }
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TELEOP_TWIN_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sitconf::corrections::LearningMode;
use sitconf::harness::{self, ExperimentConfig};

/// Learn objectives from demonstrations and corrections while tracking how
/// well the modeled features explain them.
#[derive(Debug, Parser)]
#[command(name = "sitconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior over weights and rationality for the reference demonstrations.
    DemoInfer(Common),
    /// Single and pooled posteriors for the multi-demonstration scenarios.
    CaseStudy(Common),
    /// Fit the explained/unexplained β̂ densities and the update precision.
    CalibrateBeta(Common),
    /// Learn online from simulated corrections.
    RunOnline(Online),
    /// Sample the normalized trajectory set used for inference.
    SampleTrajectories(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trajectory-set size.
    #[arg(long)]
    set_size: Option<usize>,
}

#[derive(Debug, Args)]
struct Online {
    #[command(flatten)]
    common: Common,
    /// Learning rule; both are run when omitted.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Explanation model from `calibrate-beta`; calibrated on the fly if omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Adaptive,
}

impl From<Mode> for LearningMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => LearningMode::Fixed,
            Mode::Adaptive => LearningMode::Adaptive,
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.set_size {
        cfg.set_size = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::DemoInfer(c) => {
            let r = harness::demo_infer_command(&load(&c)?, &c.out)?;
            for d in &r.demos {
                println!(
                    "{:<13} argmax theta {:?} beta {} p {:.4} flag {}",
                    d.name,
                    d.posterior.argmax_theta,
                    d.posterior.argmax_beta,
                    d.posterior.max_probability,
                    d.misspecified_flag
                );
            }
            println!("epsilon {:.6}", r.epsilon);
        }
        Command::CaseStudy(c) => {
            let r = harness::case_study_command(&load(&c)?, &c.out)?;
            for s in &r.scenarios {
                println!(
                    "{:<22} pooled argmax theta {:?} beta {} p {:.4} flag {}",
                    s.name, s.pooled.argmax_theta, s.pooled.argmax_beta, s.pooled.max_probability, s.pooled_flag
                );
            }
        }
        Command::CalibrateBeta(c) => {
            let r = harness::calibrate_beta_command(&load(&c)?, &c.out)?;
            println!(
                "mean beta_hat explained {:.4} unexplained {:.4} nu {}",
                r.mean_beta_explained, r.mean_beta_unexplained, r.nu
            );
        }
        Command::RunOnline(o) => {
            let cfg = load(&o.common)?;
            let r = harness::run_online_command(&cfg, &o.common.out, o.mode.map(Into::into), o.model.as_deref())?;
            for t in &r.tasks {
                for m in &t.modes {
                    println!("{:<24} {:<8} regret {:?}", t.name, m.mode.name(), m.mean_regret);
                }
            }
        }
        Command::SampleTrajectories(c) => {
            let s = harness::sample_trajectories_command(&load(&c)?, &c.out)?;
            println!("{} trajectories, mean features {:?}", s.size, s.mean_features);
        }
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dhmm::estimate::{fit, EstimatorKind};
use dhmm::experiments::{estimator_input, load_config, preset_text, run, run_conditions, run_score, ExperimentConfig};
use dhmm::simulate::Trajectory;
use dhmm::{DhmmError, Result};

#[derive(Parser)]
#[command(name = "dhmm", about = "Estimation in doubly hidden Markov models", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: fig3, fig4, fig5, fig6, counterexample, hybrid.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory of length n_max and write trajectory.csv.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one estimator to a trajectory CSV and print the result record.
    Fit {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["qmle", "mle"])]
        estimator: String,
    },
    /// Run the configured experiment and write its CSV files.
    Experiment {
        #[command(flatten)]
        source: Source,
        /// Worker threads for replications.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the consistency conditions and write conditions.csv.
    Conditions {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score, variability and sensitivity estimates; writes score.csv.
    Score {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(source: &Source) -> Result<ExperimentConfig> {
    let text = match (&source.config, &source.preset) {
        (Some(path), _) => fs::read_to_string(path)?,
        (None, Some(name)) => preset_text(name)?.to_string(),
        (None, None) => return Err(DhmmError::Config("pass --config or --preset".into())),
    };
    let env_seed = std::env::var("DHMM_SEED").ok();
    load_config(&text, env_seed.as_deref())
}

fn out_dir(cfg: &ExperimentConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| DhmmError::Config(e.to_string()))?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    eprintln!("wrote {}", dir.join(name).display());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { source, out } => {
            let cfg = load(&source)?;
            let traj = cfg.simulate_replication(0)?;
            let dir = out_dir(&cfg, &out);
            fs::create_dir_all(&dir)?;
            traj.save(&dir.join("trajectory.csv"))?;
            eprintln!("wrote {} (seed {})", dir.join("trajectory.csv").display(), traj.seed);
        }
        Command::Fit { source, data, estimator } => {
            let cfg = load(&source)?;
            let kind = EstimatorKind::parse(&estimator)?;
            let traj = Trajectory::load(&data, cfg.model.kind())?;
            let obs = estimator_input(&cfg.model, kind, &traj.z);
            let result = fit(kind, &cfg.model, &obs, &cfg.nu, &cfg.space, &cfg.optimizer)?;
            print!("{}", result.to_record());
        }
        Command::Experiment { source, jobs, out } => {
            set_jobs(jobs)?;
            let cfg = load(&source)?;
            let result = run(&cfg)?;
            let dir = out_dir(&cfg, &out);
            result.write(&dir)?;
            for (name, _) in &result.files {
                eprintln!("wrote {}", dir.join(name).display());
            }
            for a in &result.aggregate {
                println!(
                    "n = {:>6}  {:<4}  mean error {:.6}  (se {:.6}, {} of {})",
                    a.n,
                    a.estimator.name(),
                    a.mean_error,
                    a.stderr,
                    a.count,
                    a.count + a.excluded
                );
            }
        }
        Command::Conditions { source, out } => {
            let cfg = load(&source)?;
            let (reports, csv) = run_conditions(&cfg)?;
            for r in &reports {
                print!("{}", r.text_block());
            }
            write(&out_dir(&cfg, &out), "conditions.csv", &csv)?;
        }
        Command::Score { source, jobs, out } => {
            set_jobs(jobs)?;
            let cfg = load(&source)?;
            let (diag, csv) = run_score(&cfg)?;
            println!("lambda_min(G) = {}", diag.lambda_min_g);
            println!("lambda_min(F) = {}", diag.lambda_min_f);
            println!("mean_score_scaled = {}", diag.mean_score_scaled);
            write(&out_dir(&cfg, &out), "score.csv", &csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

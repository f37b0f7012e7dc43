use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oagd::experiment::run::{build_problem, build_schedules, initial_pair, run_with_window, weight_window, write_outputs};
use oagd::experiment::{ExperimentConfig, WindowSpec};
use oagd::{Error, Result};

#[derive(Parser)]
#[command(name = "oagd", version, about = "Online alternating gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-round CSV and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the same experiment for several window sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated sizes; `T` stands for the horizon.
        #[arg(long, default_value = "1,10,100,T")]
        windows: String,
    },
    /// Check the config, build the stream and schedules, but run nothing.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn output_stem(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| config_path.with_extension(""))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let problem = build_problem(&cfg)?;
            let out = run_with_window(&cfg, &problem, cfg.window.resolve(cfg.horizon)?)?;
            let path = write_outputs(&cfg, Some(&problem), &out, &output_stem(&cfg, &config))?;
            println!("{}", path.display());
        }
        Command::Sweep { config, windows } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let specs = WindowSpec::parse_list(&windows)?;
            if specs.is_empty() {
                return Err(Error::Config("no windows given".into()));
            }
            let problem = build_problem(&cfg)?;
            let sizes = specs.iter().map(|w| w.resolve(cfg.horizon)).collect::<Result<Vec<_>>>()?;
            let outcomes = oagd::par::try_map(cfg.execution, sizes.len(), |i| run_with_window(&cfg, &problem, sizes[i]))?;
            let stem = output_stem(&cfg, &config);
            for (spec, out) in specs.iter().zip(&outcomes) {
                let label = match spec {
                    WindowSpec::Size(w) => w.to_string(),
                    WindowSpec::Label(l) => l.clone(),
                };
                let mut s = stem.as_os_str().to_owned();
                s.push(format!("_w{label}"));
                let run_cfg = ExperimentConfig {
                    window: spec.clone(),
                    ..cfg.clone()
                };
                let path = write_outputs(&run_cfg, Some(&problem), out, Path::new(&s))?;
                println!("{}\t{}\t{}", out.window, out.report.bd_total(), path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let problem = build_problem(&cfg)?;
            let set = cfg.feasible_set()?;
            let w = cfg.window.resolve(cfg.horizon)?;
            let sched = build_schedules(&cfg, &problem, &set, &weight_window(&cfg, w)?)?;
            let init = initial_pair(&cfg, &set, problem.d2);
            if !set.contains(&init.x) {
                return Err(Error::InvalidParameter("initial x lies outside the feasible set".into()));
            }
            let p = &sched.provenance;
            println!(
                "ok: {} rounds, window {w}, step {} (alpha_1 = {}), inner {} (K_1 = {}, beta = {})",
                problem.stream.len(),
                p.step_rule,
                p.alpha_1,
                p.k_rule,
                p.k_1,
                p.beta
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error_category={} message={e}", e.category());
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidParameter(_) => 2,
                Error::Io(_) | Error::Parse { .. } | Error::EmptyDataset => 3,
                _ => 1,
            })
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robust_design::cli::{
    evaluate, exit_code, import_design, run, DesignFormat, ExperimentConfig, Overrides,
    ProblemKind,
};
use robust_design::Error;

#[derive(Parser)]
#[command(name = "robust-design", version, about = "Robust D-optimal designs for simulation meta-models")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "ROBUST_DESIGN_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Robust or locally optimal weighted design.
    Optimize { config: PathBuf },
    /// Correlation misspecification efficiency grid.
    EfficiencyGrid { config: PathBuf },
    /// Design and PRN stream assignment comparison.
    JointPrn { config: PathBuf },
    /// Criterion of an existing design under the config's model.
    Evaluate {
        config: PathBuf,
        design: PathBuf,
    },
    /// Parse and materialize a config, then print it.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf, cli: &Cli, expect: &[ProblemKind]) -> Result<ExperimentConfig, Error> {
    let cfg = ExperimentConfig::from_path(path)?.materialize(&Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    })?;
    if !expect.is_empty() && !expect.contains(&cfg.problem) {
        return Err(Error::Config {
            field: "problem".into(),
            message: format!("{} cannot be run by this subcommand", cfg.problem.name()),
        });
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Optimize { config } => {
            let cfg = load(config, cli, &[ProblemKind::RobustDesign, ProblemKind::LocalDesign])?;
            let (report, files) = run(&cfg)?;
            println!("criterion {}", report.result["criterion"]);
            println!("report {}", files.report.display());
        }
        Command::EfficiencyGrid { config } => {
            let cfg = load(config, cli, &[ProblemKind::EfficiencyGrid])?;
            let (_, files) = run(&cfg)?;
            println!("report {}", files.report.display());
        }
        Command::JointPrn { config } => {
            let cfg = load(config, cli, &[ProblemKind::JointPrn])?;
            let (report, files) = run(&cfg)?;
            if let Some(rows) = report.result["comparison"].as_array() {
                for r in rows {
                    println!("{} {}", r["mode"], r["log_var"]);
                }
            }
            println!("report {}", files.report.display());
        }
        Command::Evaluate { config, design } => {
            let cfg = load(config, cli, &[])?;
            let format = match design.extension().and_then(|e| e.to_str()) {
                Some("json") => DesignFormat::Json,
                _ => DesignFormat::Csv,
            };
            let bounds = cfg.optimizer.bounds.as_ref().map(|b| {
                b.iter()
                    .map(|&[lo, hi]| robust_design::Bound { lo, hi })
                    .collect()
            });
            let (d, a) = import_design(design, format, bounds)?;
            let value = evaluate(&cfg, &d, a.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&value).expect("json"));
        }
        Command::Validate { config } => {
            let cfg = load(config, cli, &[])?;
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lpsflow::app::{self, config, CaseKind};
use lpsflow::Error;

/// High-order incompressible flow solver with local projection stabilization.
#[derive(Parser)]
#[command(name = "solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config (or a run.json manifest).
    Run {
        config: PathBuf,
        /// Override one setting, e.g. `--set scheme.dt=0.01`. Repeatable.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the built-in presets, or print one as TOML.
    Presets { name: Option<String> },
    /// Parse and validate a config without running it.
    CheckConfig {
        config: PathBuf,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::Mesh(_) | Error::Basis(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_ABORT),
    }
}

fn run(config_path: PathBuf, set: Vec<String>) -> ExitCode {
    let cfg = match config::load_config(&config_path, &set) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let dir = app::output_dir(&cfg);
    if cfg.case.kind == CaseKind::ManufacturedPoisson {
        return match app::run_manufactured(&cfg, Some(&dir)) {
            Ok(err) => {
                println!("L2 error {err:.6e}; results in {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        };
    }
    match app::simulate(&cfg, Some(&dir)) {
        Ok(s) => {
            if let Some(e) = &s.abort {
                eprintln!("solver aborted: {e}");
                eprintln!("partial diagnostics in {}", dir.join("diagnostics.csv").display());
                return ExitCode::from(EXIT_ABORT);
            }
            let last = s.records.last().expect("at least the initial record");
            println!(
                "{} steps, dt = {:.6e}, t = {:.6}, E_k = {:.10e}; results in {}",
                s.steps,
                s.dt,
                last.t,
                last.e_k,
                dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, set } => run(config, set),
        Command::Presets { name: None } => {
            for k in CaseKind::PRESETS {
                println!("{}", k.name());
            }
            ExitCode::SUCCESS
        }
        Command::Presets { name: Some(name) } => match CaseKind::from_name(&name) {
            Some(k) if k != CaseKind::Custom => {
                print!("{}", toml::to_string(&config::preset_table(k)).expect("table serializes"));
                ExitCode::SUCCESS
            }
            _ => fail(&Error::Config(format!("unknown preset `{name}`"))),
        },
        Command::CheckConfig { config, set } => match config::load_config(&config, &set) {
            Ok(cfg) => {
                print!("{}", toml::to_string(&cfg).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}

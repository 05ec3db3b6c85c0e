use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergotrans::config::{Command, ConfigError, RunConfig};
use ergotrans::pipeline::Status;
use ergotrans::run::{execute, resolve_out_dir, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "ergotrans", version, about = "Ergodic optimization and involution kernels for expanding interval maps")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run a command and write data files plus report.json.
    Run {
        /// TOML configuration; defaults are used for anything it leaves out.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `command` in the configuration.
        #[arg(long)]
        cmd: Option<Command>,
        /// Output directory; beats ERGOTRANS_OUT_DIR and `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a configuration without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

fn config_error(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig, ConfigError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.action {
        Action::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            ExitCode::SUCCESS
        }
        Action::Check { config } => match load(Some(&config)).and_then(|c| c.validate()) {
            Ok(()) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => config_error(&e),
        },
        Action::Run { config, cmd, out, seed } => {
            let mut cfg = match load(config.as_ref()) {
                Ok(c) => c,
                Err(e) => {
                    if let Some(o) = &out {
                        let _ = std::fs::create_dir_all(o);
                        let _ = std::fs::write(o.join("FAILED"), format!("exit {EXIT_CONFIG}\n{e}\n"));
                    }
                    return config_error(&e);
                }
            };
            if let Some(c) = cmd {
                cfg.command = c;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = resolve_out_dir(out.as_deref(), &cfg);
            match execute(&cfg, &dir) {
                Ok(o) => {
                    for v in &o.report.verdicts {
                        if v.status == Status::Fail {
                            eprintln!("FAIL {}: {}", v.id, v.detail);
                        }
                    }
                    if let Some(e) = &o.report.error {
                        eprintln!("error: {e}");
                    }
                    let s = &o.report.summary;
                    println!(
                        "{}: {} pass, {} fail, {} skip, {} info -> {}",
                        cfg.command,
                        s.pass,
                        s.fail,
                        s.skip,
                        s.info,
                        dir.display()
                    );
                    ExitCode::from(o.report.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcmflow::config::{preset, Config, PRESETS};
use mcmflow::runner::{output_root, run_command};
use mcmflow::{converge, plot, verify, CliError};

/// Mean curvature flow of graphs with a contact angle.
///
/// Run directories are created under $MCMFLOW_OUT (default ./runs).
#[derive(Parser)]
#[command(name = "mcmflow", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Re-check a finished run directory; writes verify.jsonl.
    Verify { dir: PathBuf },
    /// Run a configuration at several grid levels and write orders.csv.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Write an SVG profile for every snapshot of a run directory.
    Plot {
        dir: PathBuf,
        /// Draw the mirrored lens and export the triple-junction mesh.
        #[arg(long)]
        triple: bool,
    },
    /// Run a built-in configuration, or print it with --print.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        #[arg(long)]
        print: bool,
    },
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = Config::from_path(&config)?;
            let (dir, trace) = run_command(&cfg, &output_root())?;
            println!("{}: {} steps, t = {}, {:?}", dir.display(), trace.summary.steps, trace.summary.t_final, trace.exit);
        }
        Cmd::Preset { name, print } => {
            let text = preset(&name).ok_or_else(|| CliError::Config(format!("unknown preset {name}")))?;
            if print {
                print!("{text}");
                return Ok(());
            }
            let cfg = Config::parse(text)?;
            let (dir, trace) = run_command(&cfg, &output_root())?;
            println!("{}: {} steps, t = {}, {:?}", dir.display(), trace.summary.steps, trace.summary.t_final, trace.exit);
        }
        Cmd::Verify { dir } => {
            let res = verify::verify_command(&dir);
            if let Ok(lines) = &res {
                println!("{} checks passed", lines.iter().filter(|l| l.judged).count());
            }
            res?;
        }
        Cmd::Converge { config, levels } => {
            let cfg = Config::from_path(&config)?;
            let (dir, rows) = converge::converge_command(&cfg, levels, &output_root())?;
            print!("{}", converge::summary(&rows));
            println!("orders written to {}", dir.join("orders.csv").display());
            if let Some(bad) = rows.iter().find(|r| !r.pass) {
                return Err(CliError::CheckFailed(format!("{} converges below order {}", bad.quantity, bad.required)));
            }
        }
        Cmd::Plot { dir, triple } => {
            let files = plot::plot_command(&dir, triple)?;
            println!("{} files written", files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcmflow: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

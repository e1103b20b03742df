//! Batch command line: simulate, invert, compare, validate.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::model::{registered_model, validate_model};
use crate::sim::report::gnuplot_script;
use crate::sim::{compare, write_series, Mode, Prepared, Run, Scenario};

#[derive(Debug, Parser)]
#[command(name = "mbstrack", version, about = "Feedforward and funnel tracking for multibody systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one controller configuration.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "C1")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the inversion problem only and export its nodes.
    Invert {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all three configurations and write a comparison report.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a registered model against finite differences.
    Validate {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

enum Failure {
    Config(String),
    Module(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Module(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Module(e.to_string())
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(Scenario::parse(&text)?)
}

fn out_dir(cli: Option<PathBuf>, scn: &Scenario) -> PathBuf {
    cli.or_else(|| scn.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn label(mode: Mode) -> String {
    mode.label().to_ascii_lowercase()
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { scenario, mode, out } => {
            let scn = load(&scenario)?;
            let mode: Mode = mode.parse()?;
            let dir = out_dir(out, &scn);
            let run = Prepared::new(&scn, mode.uses_feedforward())?.simulate(mode)?;
            write_series(&dir, &label(mode), &run.series)?;
            let report = compare(&[(mode, run.metrics.clone())]);
            std::fs::write(dir.join("report.txt"), report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::Invert { scenario, out } => {
            let scn = load(&scenario)?;
            let dir = out_dir(out, &scn);
            let prep = Prepared::new(&scn, true)?;
            let sol = prep.inversion.as_ref().expect("requested");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("inversion.csv"), sol.to_csv())?;
            println!("newton_iterations: {}", sol.newton_iterations);
            println!("residual: {:e}", sol.final_residual);
            println!("peak_input: {:e}", sol.max_input());
        }
        Command::Compare { scenario, out } => {
            let scn = load(&scenario)?;
            let dir = out_dir(out, &scn);
            let prep = Prepared::new(&scn, true)?;
            // The inversion is shared; the three runs only read it.
            let runs: Vec<Result<Run, Error>> = std::thread::scope(|s| {
                let handles: Vec<_> = Mode::ALL.iter().map(|&m| s.spawn({
                    let prep = &prep;
                    move || prep.simulate(m)
                })).collect();
                handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
            });
            let mut metrics = Vec::new();
            for r in runs {
                let r = r?;
                write_series(&dir, &label(r.mode), &r.series)?;
                metrics.push((r.mode, r.metrics));
            }
            let report = compare(&metrics);
            std::fs::write(dir.join("report.txt"), report.to_text())?;
            std::fs::write(dir.join("plot.gp"), gnuplot_script(&["c1", "c2", "c3"]))?;
            print!("{}", report.to_text());
        }
        Command::Validate { model, samples, seed } => {
            let (m, set) = registered_model(&model).map_err(|e| Failure::Module(e.to_string()))?;
            let report = validate_model(m.as_ref(), &set, samples, seed);
            println!("{}", report.summary());
            if !report.passes() {
                return Err(Failure::Module(format!("model '{model}' failed validation")));
            }
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a numerical or I/O failure, 2 on bad arguments or scenario files.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Module(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

//! `korovkin-lab`: run operator experiments and write CSV tables.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use commands::{Command, Experiment};
use config::{merge, ConfigFile, Setting, Settings};
use error::CliError;

const THREADS_VAR: &str = "KOROVKIN_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "korovkin-lab", version, about = "Korovkin-type approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Discrete Choquet integral of a function.
    Integrate(Flags),
    /// Apply an operator and print its values at the cell midpoints.
    Apply(Flags),
    /// Randomized checks of the operator axioms and Lipschitz bounds.
    Properties(Flags),
    /// Korovkin harness: convergence scans and a verdict.
    Korovkin(Flags),
    /// Run every `[section]` of a config file; `--out` names the output directory.
    Sweep(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Operator text form, e.g. `bkc1:n=20,cap=sqrt`.
    #[arg(long)]
    op: Option<String>,
    /// Function text form; `;` separates a list.
    #[arg(long = "fn")]
    func: Option<String>,
    /// Capacity text form for `integrate` (default `sqrt`).
    #[arg(long)]
    cap: Option<String>,
    /// `a,b` or a domain kind: cube1, cube2, cone1, cone2, circle.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    cells: Option<String>,
    /// Comma-separated ascending n list.
    #[arg(long)]
    ns: Option<String>,
    /// pointwise, measure or lp (parameters may follow, e.g. `pointwise:guard=0.05`).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Output file (stdout when absent or `-`).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with status 3 unless the korovkin verdict is `confirmed`.
    #[arg(long)]
    strict: bool,
    /// Lift the cost guard on `bkc2` with large n.
    #[arg(long = "allow-large-2d")]
    allow_large_2d: bool,
}

impl Flags {
    fn settings(&self) -> Settings {
        let mut s = Settings::new();
        let pairs = [
            ("op", &self.op),
            ("fn", &self.func),
            ("cap", &self.cap),
            ("domain", &self.domain),
            ("cells", &self.cells),
            ("ns", &self.ns),
            ("mode", &self.mode),
            ("eps", &self.eps),
            ("p", &self.p),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("out", &self.out),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                s.insert(k.to_string(), Setting::flag(k, v.clone()));
            }
        }
        if self.strict {
            s.insert("strict".into(), Setting::flag("strict", "true"));
        }
        if self.allow_large_2d {
            s.insert("allow-large-2d".into(), Setting::flag("allow-large-2d", "true"));
        }
        s
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("{THREADS_VAR}=`{raw}`: expected a non-negative integer")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn run_single(command: Command, name: &str, flags: &Flags) -> Result<i32, CliError> {
    let file = flags.config.as_deref().map(ConfigFile::load).transpose()?;
    let empty = Settings::new();
    let (global, section) = match &file {
        Some(f) => (&f.global, f.section(name).unwrap_or(&empty)),
        None => (&empty, &empty),
    };
    let merged = merge(&[global, section, &flags.settings()]);
    let exp = Experiment::from_settings(command, &merged)?;
    let (table, code) = exp.run()?;
    output::emit(&table.to_csv()?, exp.out.as_deref())?;
    Ok(code)
}

fn run_sweep(flags: &Flags) -> Result<i32, CliError> {
    let path = flags
        .config
        .as_deref()
        .ok_or_else(|| CliError::Parse("sweep needs --config".into()))?;
    let file = ConfigFile::load(path)?;
    if file.sections.is_empty() {
        return Err(CliError::Parse(format!("{}: no [section] to run", path.display())));
    }
    let mut overrides = flags.settings();
    let out_dir = overrides.remove("out").map(|s| PathBuf::from(s.value));

    let mut jobs = Vec::new();
    for (name, section) in &file.sections {
        let merged = merge(&[&file.global, section, &overrides]);
        let cmd = merged
            .get("command")
            .ok_or_else(|| CliError::Parse(format!("{}: section [{name}] has no `command`", path.display())))?;
        let command: Command = cmd.value.parse().map_err(|m: String| cmd.error_at(1, m))?;
        let mut exp = Experiment::from_settings(command, &merged)?;
        let target = exp.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
        exp.out = Some(match &out_dir {
            Some(dir) if target.is_relative() => dir.join(target),
            _ => target,
        });
        jobs.push((name.clone(), exp));
    }

    let results: Vec<Result<i32, CliError>> = jobs
        .par_iter()
        .map(|(_, exp)| {
            let (table, code) = exp.run()?;
            output::emit(&table.to_csv()?, exp.out.as_deref())?;
            Ok(code)
        })
        .collect();
    let mut worst = 0;
    for ((name, exp), r) in jobs.iter().zip(results) {
        let out = exp.out.as_deref().unwrap_or(Path::new("-")).display().to_string();
        match r {
            Ok(code) => {
                eprintln!("[{name}] wrote {out}");
                worst = worst.max(code);
            }
            Err(e) => {
                eprintln!("[{name}] error: {e}");
                worst = worst.max(e.exit_code());
            }
        }
    }
    Ok(worst)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Cmd::Integrate(f) => run_single(Command::Integrate, "integrate", f),
        Cmd::Apply(f) => run_single(Command::Apply, "apply", f),
        Cmd::Properties(f) => run_single(Command::Properties, "properties", f),
        Cmd::Korovkin(f) => run_single(Command::Korovkin, "korovkin", f),
        Cmd::Sweep(f) => run_sweep(f),
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cotunnel_cli::{run, Command, Config, RunError, BUNDLED_TB2};

/// Electron-nuclear spin simulations of coupled lanthanide dimers.
#[derive(Parser)]
#[command(name = "cotunnel", version)]
struct Cli {
    /// Task to run; `config` prints the canonical configuration.
    #[arg(value_enum)]
    command: Action,
    /// Run configuration; the bundled Tb2 parameter set when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set "model.J_ex=0 [cm^-1]"`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `output.directory`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Action {
    Spectrum,
    Sweep,
    Crossings,
    Thermo,
    Fit,
    Hysteresis,
    ReproducePaper,
    Config,
}

fn load(cli: &Cli) -> Result<Config, RunError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| RunError::Input(format!("cannot read {}: {e}", p.display())))?,
        None => BUNDLED_TB2.to_string(),
    };
    let mut cfg = Config::parse(&text)?;
    for s in &cli.overrides {
        cfg.set(s)?;
    }
    Ok(cfg)
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let command = match cli.command {
        Action::Config => {
            print!("{}", cfg.to_canonical());
            return ExitCode::SUCCESS;
        }
        Action::Spectrum => Command::Spectrum,
        Action::Sweep => Command::Sweep,
        Action::Crossings => Command::Crossings,
        Action::Thermo => Command::Thermo,
        Action::Fit => Command::Fit,
        Action::Hysteresis => Command::Hysteresis,
        Action::ReproducePaper => Command::ReproducePaper,
    };
    let report = match run(command, &cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(cfg.word("output.directory")));
    if let Err(e) = report.write(&dir) {
        return fail(e);
    }
    for line in &report.summary {
        println!("{line}");
    }
    if !report.converged {
        eprintln!("error: a fit did not converge; results written to {}", dir.display());
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

//! Command-line front end: one subcommand per study.
//!
//! Exit codes: 0 success, 2 non-convergence (outputs are still written and
//! flagged), 3 invalid configuration, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use ionsplit::experiments::{self, parse_override_value, ExperimentConfig, ExperimentKind};
use ionsplit::Error;

#[derive(Parser)]
#[command(name = "ionsplit", version, about = "Fast two-ion separation: waveform design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shoot a design and write its waveform CSV and design JSON.
    Design(Common),
    /// Simulate one protocol (quantum by default).
    Simulate(Common),
    /// Order-11 and order-12 excitation against duration.
    ExcitationCurve(Common),
    /// Critical durations for a list of trap frequencies.
    TcritTable(Common),
    /// Excitation against a linear tilt of the final double well.
    BiasSweep(Common),
    /// Designed protocol against the uncompensated reference ramp.
    ReferenceCompare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults are used for anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generic override, `dotted.path=value` (value parsed as JSON, else string).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    species: Option<String>,
    #[arg(long)]
    omega0_hz: Option<f64>,
    /// Protocol duration in seconds.
    #[arg(long)]
    t_f: Option<f64>,
    /// Ansatz order: 9, 11 or 12.
    #[arg(long)]
    order: Option<u32>,
    /// plain | perturbative | residual
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    expansion_factor: Option<f64>,
    /// sta | reference
    #[arg(long)]
    protocol: Option<String>,
    /// Replay a design JSON instead of shooting.
    #[arg(long)]
    design: Option<PathBuf>,
    /// classical | quantum | both
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    classical_steps: Option<usize>,
    #[arg(long)]
    quantum_steps: Option<usize>,
    /// Tilt force per ion for `simulate`, newtons.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated trap frequencies for `tcrit-table`, Hz.
    #[arg(long, value_delimiter = ',')]
    omega0_list: Option<Vec<f64>>,
    /// Comma-separated durations, seconds.
    #[arg(long, value_delimiter = ',')]
    t_f_list: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, Value)>, Error> {
        let mut v: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, x: Value| v.push((k.to_string(), x));
        if let Some(x) = &self.species {
            put("trap.species", x.clone().into());
        }
        if let Some(x) = self.omega0_hz {
            put("trap.omega0_hz", x.into());
        }
        if let Some(x) = self.t_f {
            put("protocol.t_f_s", x.into());
        }
        if let Some(x) = self.order {
            put("protocol.order", x.into());
        }
        if let Some(x) = &self.objective {
            put("protocol.objective", x.clone().into());
        }
        if let Some(x) = self.expansion_factor {
            put("protocol.expansion_factor", x.into());
        }
        if let Some(x) = &self.protocol {
            put("protocol.kind", x.clone().into());
        }
        if let Some(x) = &self.design {
            put("protocol.design_file", x.display().to_string().into());
        }
        if let Some(x) = &self.engine {
            put("simulation.engine", x.clone().into());
        }
        if let Some(x) = self.classical_steps {
            put("simulation.classical_steps", x.into());
        }
        if let Some(x) = self.quantum_steps {
            put("simulation.quantum_steps", x.into());
        }
        if let Some(x) = self.lambda {
            put("simulation.lambda_n", x.into());
        }
        if let Some(x) = &self.omega0_list {
            put("tcrit.omega0_hz", x.clone().into());
        }
        if let Some(x) = &self.t_f_list {
            put("protocol.t_f_list_s", x.clone().into());
        }
        if let Some(x) = &self.out {
            put("output.dir", x.display().to_string().into());
        }
        for s in &self.set {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("--set expects PATH=VALUE, got `{s}`")))?;
            v.push((k.trim().to_string(), parse_override_value(raw.trim())));
        }
        Ok(v)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } | Error::Bracket { .. } => 2,
        Error::InvalidInput(_)
        | Error::UnknownSpecies(_)
        | Error::UnknownUnit(_)
        | Error::WrongParameterCount { .. }
        | Error::Json(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    let (kind, common) = match &cli.command {
        Command::Design(c) => (ExperimentKind::Design, c),
        Command::Simulate(c) => (ExperimentKind::Simulate, c),
        Command::ExcitationCurve(c) => (ExperimentKind::ExcitationCurve, c),
        Command::TcritTable(c) => (ExperimentKind::TcritTable, c),
        Command::BiasSweep(c) => (ExperimentKind::BiasSweep, c),
        Command::ReferenceCompare(c) => (ExperimentKind::ReferenceCompare, c),
    };
    let cfg = match common.overrides().and_then(|o| ExperimentConfig::load(common.config.as_deref(), &o, kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return ExitCode::from(3);
        }
    };
    eprintln!("{} (config {})", kind.name(), &cfg.content_hash()[..12]);
    match experiments::run(kind, &cfg) {
        Ok(summary) => {
            for l in &summary.lines {
                println!("{l}");
            }
            for p in &summary.outputs {
                eprintln!("wrote {}", p.display());
            }
            if summary.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("shooting did not converge");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

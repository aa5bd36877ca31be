use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pcmsim::gates::{EvalMode, GateKind};
use pcmsim::workbench::{self, RunContext, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "pcmsim", version, about = "Simulate and compile stateful logic in phase-change memory")]
struct Cli {
    /// JSON config file; values override the preset/defaults field by field
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in preset: experimental-setup | integrated
    #[arg(long, global = true)]
    preset: Option<String>,

    /// RNG seed for all stochastic sampling
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Nor,
    Imply,
    Or,
    Nimp,
}

impl From<KindArg> for GateKind {
    fn from(k: KindArg) -> GateKind {
        match k {
            KindArg::Nor => GateKind::Nor,
            KindArg::Imply => GateKind::Imply,
            KindArg::Or => GateKind::Or,
            KindArg::Nimp => GateKind::Nimp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Functional,
    Circuit,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Functional => EvalMode::Functional,
            ModeArg::Circuit => EvalMode::Circuit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Device characterization: set/reset sweeps, a set transient, and an
    /// optional endurance run
    Characterize {
        /// Set/reset cycles for the endurance run (0 = skip)
        #[arg(long, default_value_t = 0)]
        cycles: u64,
    },
    /// Run a single gate
    Gate {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// First input bit
        #[arg(long)]
        in1: u8,
        /// Second input bit (omit for IMPLY)
        #[arg(long)]
        in2: Option<u8>,
        /// Prior state of the output cell
        #[arg(long, default_value_t = 0)]
        out_old: u8,
        #[arg(long, value_enum, default_value = "circuit")]
        mode: ModeArg,
    },
    /// Worst-case switching / non-switching margins
    Margins {
        /// Restrict to one gate (default: all four)
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Monte Carlo robustness under device variability
    Montecarlo {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 100)]
        iterations: u64,
    },
    /// Compile a netlist to a micro-op program
    Compile {
        #[arg(long)]
        netlist: PathBuf,
        /// Cells available in the row
        #[arg(long, default_value_t = 64)]
        max_cols: usize,
    },
    /// Compile and execute a netlist on a simulated row
    Run {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, default_value_t = 64)]
        max_cols: usize,
        #[arg(long, value_enum, default_value = "functional")]
        mode: ModeArg,
        /// Input bits in declaration order, e.g. 101
        #[arg(long)]
        inputs: Option<String>,
        /// Check every input vector against the Boolean reference
        #[arg(long)]
        all_vectors: bool,
    },
}

fn bit(v: u8) -> anyhow::Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => anyhow::bail!("bit arguments must be 0 or 1, got {other}"),
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let name = match &cli.command {
        Command::Characterize { .. } => "characterize",
        Command::Gate { .. } => "gate",
        Command::Margins { .. } => "margins",
        Command::Montecarlo { .. } => "montecarlo",
        Command::Compile { .. } => "compile",
        Command::Run { .. } => "run",
    };
    let mut ctx = RunContext::new(
        name,
        cli.config.as_deref(),
        cli.preset.as_deref(),
        cli.seed,
        &cli.out,
    )?;
    match cli.command {
        Command::Characterize { cycles } => workbench::cmd_characterize(&mut ctx, cycles),
        Command::Gate {
            kind,
            in1,
            in2,
            out_old,
            mode,
        } => workbench::cmd_gate(
            &mut ctx,
            kind.into(),
            bit(in1)?,
            in2.map(bit).transpose()?,
            bit(out_old)?,
            mode.into(),
        ),
        Command::Margins { kind } => workbench::cmd_margins(&mut ctx, kind.map(Into::into)),
        Command::Montecarlo { kind, iterations } => {
            workbench::cmd_montecarlo(&mut ctx, kind.into(), iterations)
        }
        Command::Compile { netlist, max_cols } => {
            workbench::cmd_compile(&mut ctx, &netlist, max_cols)
        }
        Command::Run {
            netlist,
            max_cols,
            mode,
            inputs,
            all_vectors,
        } => workbench::cmd_run(
            &mut ctx,
            &netlist,
            max_cols,
            mode.into(),
            inputs.as_deref(),
            all_vectors,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            // config/setup problems get their own exit code
            let is_config = err.is::<pcmsim::config::ConfigError>();
            ExitCode::from(if is_config { EXIT_CONFIG as u8 } else { 1 })
        }
    }
}

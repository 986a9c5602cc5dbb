use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fdbs_alloc::experiment::{run_gen, run_solve, run_sweep, Experiment, OutputFormat, RunConfig, Scheme};
use fdbs_alloc::{Error, Result, Scenario};

#[derive(Parser)]
#[command(
    name = "fdbs-alloc",
    version,
    about = "Subchannel assignment and power allocation for a full-duplex BS cell"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare mapping schemes under equal power.
    AssignCompare(Common),
    /// Compare joint optimisation with equal power.
    JointCompare(Common),
    /// Run one scheme over the power sweep.
    Sweep(Common),
    /// Write a generated scenario as JSON.
    Gen(Common),
    /// Run one scheme on a scenario file.
    Solve {
        /// Scenario JSON produced by `gen`.
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Proposed,
    Exhaustive,
    Random,
    Greedy,
    Joint,
    Equal,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Proposed => Scheme::Proposed,
            SchemeArg::Exhaustive => Scheme::Exhaustive,
            SchemeArg::Random => Scheme::Random,
            SchemeArg::Greedy => Scheme::Greedy,
            SchemeArg::Joint => Scheme::Joint,
            SchemeArg::Equal => Scheme::Equal,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Comma-separated BS powers in dBm, e.g. `10,20,30`.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Network size as `M,N,K`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    size: Option<Vec<usize>>,
    /// Leave the runtime column empty so output is reproducible.
    #[arg(long)]
    no_timing: bool,
}

fn load_config(experiment: Experiment, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut cfg = RunConfig::from_json(&fs::read_to_string(path)?)?;
            cfg.experiment = experiment;
            cfg
        }
        None => RunConfig::new(experiment),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_path = Some(out.clone());
    }
    if let Some(f) = common.format {
        cfg.output_format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if let Some(s) = common.scheme {
        cfg.scheme = Some(s.into());
    }
    if let Some(sweep) = &common.sweep {
        cfg.bs_power_sweep_dbm = sweep.clone();
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(size) = &common.size {
        let [m, n, k] = size[..] else {
            return Err(Error::Parse(format!("--size expects M,N,K, got {} values", size.len())));
        };
        cfg.scenario = cfg.scenario.clone().with_size(m, n, k);
    }
    if common.no_timing {
        cfg.record_runtime = false;
    }
    Ok(cfg)
}

fn write_output(path: Option<&Path>, emit: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut f = io::BufWriter::new(fs::File::create(p)?);
            emit(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (experiment, common, input) = match &cli.command {
        Command::AssignCompare(c) => (Experiment::AssignCompare, c, None),
        Command::JointCompare(c) => (Experiment::JointCompare, c, None),
        Command::Sweep(c) => (Experiment::Sweep, c, None),
        Command::Gen(c) => (Experiment::Gen, c, None),
        Command::Solve { scenario, common } => (Experiment::Solve, common, Some(scenario.clone())),
    };
    let mut cfg = load_config(experiment, common)?;
    if input.is_some() {
        cfg.input_path = input;
    }
    let out = cfg.output_path.clone();
    match experiment {
        Experiment::Gen => {
            let scenario = run_gen(&cfg)?;
            write_output(out.as_deref(), |w| {
                w.write_all(scenario.to_json()?.as_bytes())?;
                writeln!(w)?;
                Ok(())
            })
        }
        Experiment::Solve => {
            cfg.validate()?;
            let path = cfg.input_path.clone().expect("validated");
            let scenario = Scenario::from_json(&fs::read_to_string(&path)?)?;
            let result = run_solve(&cfg, &scenario)?;
            write_output(out.as_deref(), |w| result.write(cfg.output_format, w))
        }
        _ => {
            let result = run_sweep(&cfg)?;
            write_output(out.as_deref(), |w| result.write(cfg.output_format, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(1)
        }
    }
}

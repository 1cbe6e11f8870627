use clap::{Parser, Subcommand};
use rydchan::config;
use rydchan_cli::experiments::{run_check, run_crossover, run_detuning_sweep, run_transport, run_two_atom, RunOptions};
use rydchan_cli::spec::ExperimentSpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rydchan", version, about = "Spin-motion dephasing experiments for Rydberg atom chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (defaults to the number of cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Replace the channel by the identity (frozen-gas dynamics)
    #[arg(long, global = true)]
    no_dephasing: bool,

    /// Also run the exact two-atom oracle where applicable
    #[arg(long, global = true)]
    exact: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fidelity and |rg> population traces for two atoms
    TwoAtom,
    /// Spin-exchange fidelity after one cycle across a detuning grid
    DetuningSweep,
    /// Entanglement transport along effective chains
    Transport,
    /// Maximum transport length versus trap width
    Crossover,
    /// Invariant checks on the configured chain
    Check,
}

fn run(cli: &Cli) -> rydchan::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| rydchan::Error::Config("--config <path> is required".into()))?;
    let cfg = config::load(path)?;
    let spec = ExperimentSpec::from_config(&cfg)?;
    let opts = RunOptions { out: cli.out.clone(), dephasing: !cli.no_dephasing, exact: cli.exact };
    let files = match cli.command {
        Command::TwoAtom => run_two_atom(&cfg, &spec, &opts)?,
        Command::DetuningSweep => run_detuning_sweep(&cfg, &spec, &opts)?,
        Command::Transport => run_transport(&cfg, &spec, &opts)?,
        Command::Crossover => run_crossover(&cfg, &spec, &opts)?,
        Command::Check => {
            let (lines, file) = run_check(&cfg, &spec, &opts)?;
            let mut failed = 0;
            for l in &lines {
                println!("{} {:<30} {:e} (limit {:e})", if l.passed { "ok  " } else { "FAIL" }, l.name, l.value, l.limit);
                failed += usize::from(!l.passed);
            }
            println!("{}", file.display());
            if failed > 0 {
                return Err(rydchan::Error::Numerical(format!("{failed} invariant check(s) failed")));
            }
            return Ok(());
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    rydchan::linalg::set_blas_threads(1);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rmor_cli::config::{parse_methods, RunConfig, TestId};
use rmor_cli::error::{CliError, Result};
use rmor_cli::harness::{cmd_basis, cmd_bench, cmd_dmd, cmd_rom, cmd_simulate, BenchReport};
use rmor_cli::scaling::cmd_scaling;

#[derive(Parser)]
#[command(name = "rmor", version, about = "Randomized model-order reduction harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate state and nonlinear-term snapshots.
    Simulate(Flags),
    /// Build reduced bases and write them as CSV.
    Basis(Flags),
    /// Run the reduced models and write their lifted solutions.
    Rom(Flags),
    /// DMD and cDMD eigenvalues.
    Dmd(Flags),
    /// Six-method comparison of error and timing.
    Bench(Flags),
    /// Full SVD against randomized SVD over growing dimensions.
    Scaling(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long = "nl-rank")]
    nl_rank: Option<usize>,
    #[arg(long = "sampling-multiple")]
    sampling_multiple: Option<f64>,
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long = "power-iters")]
    power_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated, e.g. `POD,cPOD,cDMD`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory with snapshots written by `simulate`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated ascending sizes for `scaling`.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(t) = &self.test {
            c.test = t.parse::<TestId>()?;
        }
        if let Some(m) = &self.methods {
            c.methods = parse_methods(m)?;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        take!(grid, snapshots, rank, nl_rank, sampling_multiple, oversample, power_iters, seed, out, dims);
        if self.input.is_some() {
            c.input = self.input;
        }
        c.validate()?;
        Ok(c)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RMOR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("RMOR_THREADS must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(CliError::Config("RMOR_THREADS must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(())
}

fn print_report(report: &BenchReport) {
    println!("{:<12} {:>5} {:>7} {:>11} {:>11} {:>12}  status", "method", "rank", "samples", "offline_s", "online_s", "rel_err");
    for r in &report.rows {
        let err = r.rel_frob_err.map_or("-".to_string(), |e| format!("{e:.3e}"));
        println!(
            "{:<12} {:>5} {:>7} {:>11.4} {:>11.4} {:>12}  {}",
            r.method, r.rank, r.samples, r.offline_s, r.online_s, err, r.status
        );
    }
    for n in &report.notes {
        eprintln!("note: {n}");
    }
}

/// `Ok(true)` when every method succeeded.
fn run(command: Command) -> Result<bool> {
    configure_threads()?;
    match command {
        Command::Simulate(f) => {
            let c = f.resolve()?;
            let (s, n, notes) = cmd_simulate(&c)?;
            println!("{}\n{}", s.display(), n.display());
            for note in &notes {
                eprintln!("note: {note}");
            }
            Ok(notes.is_empty())
        }
        Command::Basis(f) => {
            let c = f.resolve()?;
            let mut ok = true;
            for (method, res) in cmd_basis(&c)? {
                match res {
                    Ok(cols) => println!("{method}: {cols} modes"),
                    Err(e) => {
                        ok = false;
                        println!("{method}: error: {e}");
                    }
                }
            }
            Ok(ok)
        }
        Command::Rom(f) => {
            let report = cmd_rom(&f.resolve()?)?;
            print_report(&report);
            Ok(report.failures() == 0)
        }
        Command::Bench(f) => {
            let report = cmd_bench(&f.resolve()?)?;
            print_report(&report);
            Ok(report.failures() == 0)
        }
        Command::Dmd(f) => {
            for r in cmd_dmd(&f.resolve()?)? {
                println!("{} {:>3} {:+.6e} {:+.6e}i |{:.6e}|", r.method, r.index, r.re, r.im, r.abs);
            }
            Ok(true)
        }
        Command::Scaling(f) => {
            let rows = cmd_scaling(&f.resolve()?)?;
            let mut ok = true;
            for r in &rows {
                match (r.t_svd_s, r.t_rsvd_s, r.speedup) {
                    (Some(a), Some(b), Some(s)) => println!("n={:<6} svd {a:.4}s  rsvd {b:.4}s  speedup {s:.2}", r.n),
                    _ => {
                        ok &= !r.status.starts_with("error");
                        println!("n={:<6} {}", r.n, r.status);
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

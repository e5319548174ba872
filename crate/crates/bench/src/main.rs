use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tapegrad::Precision;
use tapegrad_bench::report::to_csv;
use tapegrad_bench::workloads::{self, BenchOptions};
use tapegrad_bench::{BenchReport, Result};

#[derive(Parser)]
#[command(name = "tapegrad", version, about = "Benchmarks for the tapegrad autodiff engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload and print its report.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Workload {
    Tiny,
    Small,
    Saveload,
    Mlp,
    Gpt,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(value_enum)]
    workload: Workload,
    /// Iterations per trial (defaults: tiny 100000, small 20000, saveload 5000).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Hidden width of the character MLP.
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    /// SGD steps after the initial one (training workloads).
    #[arg(long, default_value_t = 0)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value = "fp64")]
    precision: Precision,
    /// Append the report as CSV to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the DOT graph of the last built expression (tiny, small).
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Training text, instead of the bundled corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Try to pin the process to this CPU core.
    #[arg(long)]
    pin_core: Option<usize>,
    /// Also time the naive reference engine and compare gradients.
    #[arg(long)]
    naive_ref: bool,
    /// Also build graphs concurrently into one tape and check them (tiny).
    #[arg(long)]
    concurrent: bool,
}

#[cfg(target_os = "linux")]
fn pin_to_core(core: usize) -> bool {
    // SAFETY: the set is zero-initialised and only touched through the libc
    // helpers before being passed by pointer to the syscall wrapper.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if core >= 8 * std::mem::size_of::<libc::cpu_set_t>() {
            return false;
        }
        libc::CPU_SET(core, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_core(_core: usize) -> bool {
    false
}

fn dispatch<S: tapegrad::Scalar>(w: Workload, opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    match w {
        Workload::Tiny => workloads::bench_tiny::<S>(opts),
        Workload::Small => workloads::bench_small::<S>(opts),
        Workload::Saveload => workloads::bench_saveload::<S>(opts),
        Workload::Mlp => workloads::bench_train_mlp::<S>(opts),
        Workload::Gpt => workloads::bench_train_gpt::<S>(opts),
    }
}

fn run(args: BenchArgs) -> Result<Vec<BenchReport>> {
    let default_iters = match args.workload {
        Workload::Tiny => 100_000,
        Workload::Small => 20_000,
        Workload::Saveload => 5_000,
        Workload::Mlp | Workload::Gpt => 1,
    };
    let corpus = args.corpus.as_ref().map(std::fs::read).transpose()?;
    let opts = BenchOptions {
        iters: args.iters.unwrap_or(default_iters),
        trials: args.trials,
        batch: args.batch,
        hidden: args.hidden,
        steps: args.steps,
        seed: args.seed,
        gamma: args.gamma,
        naive_ref: args.naive_ref,
        concurrent: args.concurrent,
        dot: args.dot.clone(),
        corpus,
    };
    let pinned = args.pin_core.map(|c| (c, pin_to_core(c)));
    let mut reports = match args.precision {
        Precision::Fp32 => dispatch::<f32>(args.workload, &opts)?,
        Precision::Fp64 => dispatch::<f64>(args.workload, &opts)?,
    };
    if let Some((core, ok)) = pinned {
        let note = if ok {
            format!("pinned to core {core}")
        } else {
            format!("could not pin to core {core}")
        };
        reports[0].notes.push(note);
    }
    reports[0].notes.push(format!("precision {}", args.precision));
    if let Some(path) = &args.csv {
        let text = to_csv(&reports);
        let body = if path.exists() && std::fs::metadata(path)?.len() > 0 {
            text.split_once('\n').map_or("", |x| x.1).to_string()
        } else {
            text
        };
        use std::io::Write;
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?
            .write_all(body.as_bytes())?;
    }
    Ok(reports)
}

fn main() -> ExitCode {
    let Command::Bench(args) = Cli::parse().command;
    match run(args) {
        Ok(reports) => {
            for r in &reports {
                println!("{}", r.summary());
            }
            if reports.iter().all(|r| r.checks_passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

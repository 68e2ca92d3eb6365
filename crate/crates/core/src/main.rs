use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use grape::cli::{run, RunFlags, EXIT_INPUT_ERROR};
use grape::optimizer::Method;

#[derive(Parser)]
#[command(name = "grape", version, about = "Piecewise-constant quantum optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lbfgs,
    Gd,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the controls of a problem file.
    Run {
        problem: PathBuf,
        /// Output directory for iterations.csv, controls_opt.csv and result.json.
        #[arg(long, required_unless_present = "check_gradient")]
        out: Option<PathBuf>,
        /// Compare the exact gradient with finite differences at the initial
        /// controls and exit.
        #[arg(long)]
        check_gradient: bool,
        /// Overrides the optimizer method from the problem file.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Seed for randomized initial guesses.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
        /// Worker threads for trajectory-parallel propagation (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        problem,
        out,
        check_gradient,
        method,
        max_iter,
        seed,
        quiet,
        threads,
    } = cli.command;

    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads: must be at least 1");
            return ExitCode::from(EXIT_INPUT_ERROR as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool is configured once");
    }

    let flags = RunFlags {
        check_gradient,
        method: method.map(|m| match m {
            MethodArg::Lbfgs => Method::Lbfgs,
            MethodArg::Gd => Method::GradientDescent,
        }),
        max_iter,
        seed,
        quiet,
    };
    let code = run(
        &problem,
        out.as_deref(),
        &flags,
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}

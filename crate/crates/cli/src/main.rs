use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inertia_hd_cli::commands::{cmd_check, cmd_ode, cmd_run, cmd_sweep, Overrides};

#[derive(Parser)]
#[command(name = "inertia-hd", version, about = "Inertial methods with Hessian-driven damping: benchmarks and checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every configured method on the configured problem.
    Run(Args),
    /// Check the growth conditions of a schedule.
    Check(Args),
    /// Integrate the continuous dynamic.
    Ode(Args),
    /// Run a parameter sweep over alpha and beta.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    config: PathBuf,
    /// Output directory (default: ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (f, args): (fn(&std::path::Path, &Overrides) -> _, Args) = match cli.command {
        Cmd::Run(a) => (cmd_run, a),
        Cmd::Check(a) => (cmd_check, a),
        Cmd::Ode(a) => (cmd_ode, a),
        Cmd::Sweep(a) => (cmd_sweep, a),
    };
    let ov = Overrides {
        out: args.out,
        seed: args.seed,
        max_iter: args.max_iter,
    };
    match f(&args.config, &ov) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", outcome.out_dir.join(file).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmf_core::harness::{format_sci, output_digits, run_file, RunMode, RunSummary};
use gmf_core::operator::{load_matrix, load_vector};
use gmf_core::{builtin, gmf_apply_reference, ErrorCategory, GmfError};

/// Generalized matrix function experiments.
///
/// Trace files hold `k value` lines; set GMF_PRECISION to change the number
/// of significant digits (default 16).
#[derive(Parser)]
#[command(name = "gmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every curve, bound and difference of a config.
    Run { config: PathBuf },
    /// Print f◇(A) b from the dense SVD, one entry per line.
    Oracle { matrix: PathBuf, function: String, b: PathBuf },
    /// Evaluate only the bound overlays of a config.
    Bounds { config: PathBuf },
}

fn exit_code(e: &GmfError) -> u8 {
    match e.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Solver => 3,
        ErrorCategory::Io => 4,
    }
}

fn print_summary(s: &RunSummary) {
    println!("{}: {}x{}, sigma in [{:.3e}, {:.3e}]", s.config.name, s.m, s.n, s.sigma_min, s.sigma_max);
    for c in &s.curves {
        let fin = c.final_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        let inv = c.invariant_at.map(|k| format!(" (invariant at {k})")).unwrap_or_default();
        println!("  curve {:<24} k = {:>4}  final error {fin}{inv}", c.label, c.iterations);
    }
    for b in &s.bounds {
        let last = s.bound_curves.get(&b.label).and_then(|c| c.values.last().copied());
        println!("  bound {:<24} final {}", b.label, last.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()));
    }
    for d in &s.differences {
        println!("  diff  {:<24} max {:.3e}", d.label, d.max_difference);
    }
    println!("  output in {}", s.output_dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run_file(&config, RunMode::Full).map(|s| print_summary(&s)),
        Command::Bounds { config } => run_file(&config, RunMode::BoundsOnly).map(|s| print_summary(&s)),
        Command::Oracle { matrix, function, b } => (|| {
            let f = builtin(&function)?;
            let a = load_matrix(&matrix)?;
            let b = load_vector(&b)?;
            let y = gmf_apply_reference(&f, &a, &b)?;
            let digits = output_digits();
            for v in y.iter() {
                println!("{}", format_sci(*v, digits));
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmf: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

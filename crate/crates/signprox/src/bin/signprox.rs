use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use signprox::experiment::{parse_config, run_experiment, AlgorithmKind, ExperimentConfig};
use signprox::numerics::RngState;
use signprox::theory::{standard_lasso_fixture, theorem1_check, theorem2_check};
use signprox::Error;

#[derive(Parser)]
#[command(name = "signprox", about = "stochastic proximal-gradient solvers with one-bit updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirically check a convergence bound on the standard test problem.
    Check {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        theorem: u8,
        #[arg(long = "T")]
        iterations: usize,
        #[arg(long)]
        seeds: usize,
        /// Seed for the run-to-run randomness (the instance is fixed).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full-precision and one-bit solvers back to back on the same
    /// instance and seed, and report the ordering.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::Divergence { .. } => 2,
        _ => 1,
    }
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> signprox::Result<()> {
    let mut cfg = parse_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    let artifacts = run_experiment(&cfg)?;
    print!("{}", artifacts.summary);
    if let Some(path) = &artifacts.trace_csv {
        println!("trace written to {}", path.display());
    }
    println!("summary written to {}", artifacts.summary_path.display());
    Ok(())
}

fn cmd_check(theorem: u8, iterations: usize, seeds: usize, seed: u64) -> signprox::Result<()> {
    let instance = standard_lasso_fixture(7)?;
    let rng = RngState::new(seed);
    let report = if theorem == 1 {
        theorem1_check(&instance, iterations, seeds, &rng)?
    } else {
        theorem2_check(&instance, iterations, seeds, &rng)?
    };
    print!("{}", report.to_text_block());
    println!("{}", report.csv_header());
    println!("{}", report.to_csv_row());
    Ok(())
}

fn cmd_compare(config: PathBuf) -> signprox::Result<()> {
    let base = parse_config(&config)?;
    match base.algorithm {
        AlgorithmKind::Spgm | AlgorithmKind::Signprox => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "compare runs spgm and signprox; config specifies `{:?}`",
                other
            )))
        }
    }
    let stem = base
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let variant = |algorithm: AlgorithmKind, tag: &str| -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.algorithm = algorithm;
        cfg.out = base.out.with_file_name(format!("{stem}_{tag}.csv"));
        cfg
    };
    let spgm = run_experiment(&variant(AlgorithmKind::Spgm, "spgm"))?;
    let sign = run_experiment(&variant(AlgorithmKind::Signprox, "signprox"))?;

    let final_of = |a: &signprox::experiment::RunArtifacts| {
        let t = a.trace.as_ref().expect("solver run produces a trace");
        let r = t.final_record().clone();
        (r.normalized.unwrap_or(f64::NAN), r.bits_cumulative)
    };
    let (f_spgm, bits_spgm) = final_of(&spgm);
    let (f_sign, bits_sign) = final_of(&sign);
    println!("# comparison (same instance, same seed)");
    println!("spgm:     final_normalized_obj = {f_spgm}  total_bits = {bits_spgm}");
    println!("signprox: final_normalized_obj = {f_sign}  total_bits = {bits_sign}");
    let (better, worse) = if f_sign <= f_spgm {
        ("signprox", "spgm")
    } else {
        ("spgm", "signprox")
    };
    println!("lower final objective: {better} (vs {worse})");
    println!(
        "bits ratio (float/sign): {}",
        bits_spgm as f64 / bits_sign as f64
    );
    for a in [&spgm, &sign] {
        if let Some(p) = &a.trace_csv {
            println!("trace written to {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Check {
            theorem,
            iterations,
            seeds,
            seed,
        } => cmd_check(theorem, iterations, seeds, seed),
        Command::Compare { config } => cmd_compare(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

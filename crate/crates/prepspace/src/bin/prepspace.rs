use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prepspace::cli::{
    exit_code_for, load_config, run_evolve, run_statmech, run_verify,
};
use prepspace::dynamics::Method;

#[derive(Parser)]
#[command(name = "prepspace", version, about = "Quantum mechanics in preparation-space coordinates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    ImplicitMidpoint,
    Rk4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ImplicitMidpoint => Method::ImplicitMidpoint,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SuiteArg {
    Geometry,
    Symplectic,
    Correspondence,
    Statmech,
    All,
}

impl SuiteArg {
    fn name(self) -> &'static str {
        match self {
            SuiteArg::Geometry => "geometry",
            SuiteArg::Symplectic => "symplectic",
            SuiteArg::Correspondence => "correspondence",
            SuiteArg::Statmech => "statmech",
            SuiteArg::All => "all",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Hamiltonian flow and write a trajectory
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t_final: f64,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        method: Option<MethodArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite and write a pass/fail report
    Verify {
        #[arg(long)]
        suite: SuiteArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the maximum-entropy ensemble and its density-matrix bridge
    Statmech {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() {
    if let Ok(value) = std::env::var("PREPSPACE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run() -> Result<bool, prepspace::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Evolve {
            config,
            t_final,
            step,
            method,
            out,
        } => {
            let config = load_config(&config)?;
            let summary = run_evolve(&config, t_final, step, method.map(Into::into), &out)?;
            println!(
                "evolve: n={} method={} steps={} energy_drift={:.3e} norm_drift={:.3e}",
                summary.n,
                summary.method,
                summary.samples - 1,
                summary.energy_drift,
                summary.norm_drift
            );
            Ok(true)
        }
        Command::Verify {
            suite,
            n,
            seed,
            samples,
            out,
        } => {
            let report = run_verify(suite.name(), n, seed, samples)?;
            for check in &report.checks {
                println!(
                    "{}: {} (measured {:.6e}, {} {:.2e})",
                    check.name,
                    if check.pass { "pass" } else { "FAIL" },
                    check.measured,
                    if check.comparison == "le" { "tol" } else { "min" },
                    check.tolerance
                );
            }
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!(
                "verify {}: {} ({} checks)",
                report.suite,
                if report.overall_pass { "pass" } else { "FAIL" },
                report.checks.len()
            );
            Ok(report.overall_pass)
        }
        Command::Statmech {
            config,
            mean,
            t_final,
            samples,
            out,
        } => {
            let config = load_config(&config)?;
            let report = run_statmech(&config, mean, t_final, samples, &out)?;
            println!(
                "statmech: n={} beta={:.12} Z={:.12} S={:.12} bridge_residual={:.3e}",
                report.n,
                report.beta,
                report.partition_function,
                report.entropy_discrete,
                report.bridge_max_residual_t0
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}

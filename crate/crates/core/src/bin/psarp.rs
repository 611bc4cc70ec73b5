use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psarp::driver::{write_trace, SolveStatus};
use psarp::harness::checks::{self, Suite};
use psarp::harness::{instance, run_sweep, Instance};
use psarp::{solve, HModel, PsarpError, SolverConfig};

#[derive(Parser)]
#[command(name = "psarp", version, about = "Adaptive regularization with |Ux|^q terms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write the iterate trace as JSON lines.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Trace output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve independently for several tolerances and write a CSV report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a randomized self-check of the models or the criticality measure.
    Check {
        /// One of `overestimate`, `gradients`, `chi-oracle`.
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Problem file, or `gen:NAME k=v ...` for a built-in generator.
    #[arg(long)]
    problem: String,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    h_model: Option<HModel>,
    /// Accept the two-sided model on sets that are not kernel-centered.
    #[arg(long)]
    allow_general_set: bool,
    #[arg(long)]
    max_outer: Option<usize>,
}

impl Common {
    fn load(&self) -> psarp::Result<(Instance, SolverConfig)> {
        let inst = instance::load(&self.problem)?;
        let mut config = inst.config(&SolverConfig::default());
        if let Some(p) = self.p {
            config.p = p;
        }
        if let Some(h) = self.h_model {
            config.h_model = h;
        }
        if let Some(m) = self.max_outer {
            config.max_outer = m;
        }
        config.allow_general_set |= self.allow_general_set;
        Ok((inst, config))
    }
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> psarp::Result<bool> {
    match cli.command {
        Command::Solve { common, eps, out } => {
            let (inst, config) = common.load()?;
            let config = SolverConfig { eps, ..config };
            log::info!("{} (sha256 {})", inst.name, inst.digest);
            match solve(&inst.problem, &config) {
                Ok(report) => {
                    write_trace(output(&out)?, &report.trace)?;
                    eprintln!(
                        "{}: f = {:.10e}, chi = {:.3e}, {} successful / {} total iterations",
                        match report.status {
                            SolveStatus::Terminated => "terminated",
                            SolveStatus::MaxOuterReached => "max-outer",
                        },
                        report.f,
                        report.chi,
                        report.successful_iterations(),
                        report.total_iterations()
                    );
                    Ok(report.status == SolveStatus::Terminated)
                }
                Err(PsarpError::SolveAborted { iteration, source, trace }) => {
                    write_trace(output(&out)?, &trace)?;
                    Err(PsarpError::SolveAborted { iteration, source, trace: Vec::new() })
                }
                Err(e) => Err(e),
            }
        }
        Command::Sweep { common, eps_list, out } => {
            let (inst, config) = common.load()?;
            let report = run_sweep(&inst.problem, &eps_list, &config)?;
            report.write_csv(output(&out)?)?;
            match report.slope {
                Some(s) => eprintln!("slope of log(successful iterations) vs log(1/eps): {s:.4}"),
                None => eprintln!("slope: null"),
            }
            Ok(report.points.iter().all(|p| p.terminated() && p.consistent))
        }
        Command::Check { suite, samples, seed } => {
            let report = checks::run(suite, samples, seed)?;
            println!("{}", serde_json::to_string(&report)?);
            eprintln!(
                "{}: {} samples, {} failures, worst miss {:.3e}, {:.2?}",
                report.suite, report.samples, report.failures, report.worst, report.elapsed
            );
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

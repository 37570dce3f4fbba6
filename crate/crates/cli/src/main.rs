use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use weakkam::experiments::{
    check_manifest, list_scenarios, run_scenario, RunConfig, RunOutcome, EXIT_CHECK_FAILED, EXIT_CONFIG,
};
use weakkam::Error;

#[derive(Parser)]
#[command(
    name = "weakkam",
    version,
    about = "Viscous cell problems, Mather measures and dissipation measures on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    Scenarios {
        #[arg(long)]
        json: bool,
    },
    /// Run a config file (or a built-in scenario name with its defaults).
    Run(RunArgs),
    /// Same as `run`; every (eps, P) pair becomes an independent job.
    Sweep(RunArgs),
    /// Recompute the checks of a finished run from its CSV and compare with the manifest.
    Check { manifest: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config path or scenario name
    config: String,
    /// overrides the output directory of the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// overrides the worker count
    #[arg(long)]
    workers: Option<usize>,
    /// skip the stochastic simulation stage
    #[arg(long)]
    no_sde: bool,
    #[arg(long, short)]
    quiet: bool,
}

fn load_config(arg: &str) -> weakkam::Result<RunConfig> {
    let path = Path::new(arg);
    if path.exists() {
        RunConfig::load(path)
    } else if list_scenarios().iter().any(|s| s.name == arg) {
        Ok(RunConfig::for_scenario(arg))
    } else {
        Err(Error::Config(format!(
            "'{arg}' is neither a config file nor a built-in scenario"
        )))
    }
}

fn report(outcome: &RunOutcome, quiet: bool) {
    let m = &outcome.manifest;
    let dim = m.config.resolution.as_ref().map_or(1, |r| r.len());
    if !quiet {
        for r in &outcome.rows {
            let hbar = r.get("hbar");
            let tm = r.get("trace_mass");
            println!(
                "eps={:<8} P={:<12} {:<10} hbar={:>+.10e} trace_mass={:.3e}",
                r.eps,
                format!("{:?}", &r.p[..dim]),
                if r.ok() { "ok" } else { "FAILED" },
                hbar,
                tm
            );
        }
    }
    for c in m.checks.iter().filter(|c| !c.passed) {
        println!(
            "check failed: {} [{}] value={:.6e} threshold={:.6e}",
            c.name, c.scope, c.value, c.threshold
        );
    }
    for f in &m.failures {
        println!("solver failure: {f}");
    }
    println!(
        "{}: {} rows, {}/{} checks passed, {} solver failures, {:.1}s -> {}",
        m.scenario,
        m.summary.rows,
        m.summary.checks - m.summary.failed_checks,
        m.summary.checks,
        m.summary.solver_failures,
        m.timings.get("total").copied().unwrap_or(0.0),
        outcome.dir.join("manifest.json").display()
    );
}

fn run(args: &RunArgs) -> i32 {
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if args.no_sde {
        cfg.sde_enabled = Some(false);
    }
    match run_scenario(&cfg) {
        Ok(outcome) => {
            report(&outcome, args.quiet);
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Scenarios { json } => {
            let list = list_scenarios();
            if json {
                println!("{}", serde_json::to_string_pretty(&list).expect("serializable"));
            } else {
                for s in list {
                    println!("{:<20} {}", s.name, s.description);
                }
            }
            0
        }
        Command::Run(args) | Command::Sweep(args) => run(&args),
        Command::Check { manifest } => match check_manifest(&manifest) {
            Ok(r) => {
                for m in &r.mismatches {
                    println!("mismatch: {m}");
                }
                println!(
                    "{}: {} failed checks, exit code {}",
                    if r.consistent { "consistent" } else { "INCONSISTENT" },
                    r.failed_checks,
                    r.exit_code
                );
                if r.consistent {
                    r.exit_code
                } else {
                    EXIT_CHECK_FAILED
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use declab_cli::builtin::BUILTINS;
use declab_cli::bundle::{load, run_scenario, RunOptions};
use declab_cli::scenario::ScenarioError;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "declab", version, about = "Decoherence of a collective oscillator in a thermal background")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, `builtin:NAME`, or a manifest.json from an earlier run.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a scenario and report every problem found.
    Validate { scenario: String },
    /// Names of the scenarios compiled into this binary.
    ListBuiltin,
}

fn report_invalid(spec: &str, e: &ScenarioError) -> ExitCode {
    match e {
        ScenarioError::Io { .. } => eprintln!("error: {e}"),
        ScenarioError::Invalid(issues) => {
            eprintln!("{spec}: {} problem(s)", issues.len());
            for i in issues {
                eprintln!("  {i}");
            }
        }
    }
    ExitCode::from(EXIT_INVALID)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ListBuiltin => {
            for b in BUILTINS {
                println!("{}", b.name);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match load(&scenario) {
            Ok(l) => {
                let s = &l.scenario;
                println!("{}: ok ({} engine, {} point(s), outputs {})", scenario, s.engine, s.plan().len(), s.outputs.join(", "));
                for d in &s.defaults {
                    println!("  default {} = {}", d.key, d.value);
                }
                ExitCode::SUCCESS
            }
            Err(e) => report_invalid(&scenario, &e),
        },
        Command::Run { scenario, out, seed, threads } => {
            if let Some(k) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    log::warn!("--threads ignored: {e}");
                }
            }
            let loaded = match load(&scenario) {
                Ok(l) => l,
                Err(e) => return report_invalid(&scenario, &e),
            };
            let opts = RunOptions { seed: seed.or(loaded.seed) };
            let bundle = match run_scenario(&loaded.scenario, &loaded.source, &opts) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_NUMERICAL);
                }
            };
            if let Err(e) = bundle.write(&out) {
                eprintln!("error: writing {}: {e}", out.display());
                return ExitCode::from(EXIT_IO);
            }
            for c in &bundle.cross {
                println!("{} {}:{} = {:e} (tolerance {:e})", if c.pass { "PASS" } else { "FAIL" }, c.pair, c.metric, c.value, c.tolerance);
            }
            println!("wrote {} table(s) to {}", bundle.tables.len(), out.display());
            ExitCode::SUCCESS
        }
    }
}

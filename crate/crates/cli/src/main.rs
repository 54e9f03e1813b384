use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;
use tdolab_core::scenario::{list_scenarios, resolve_config, run_scenario, Manifest, ScenarioConfig, ScenarioKind, MANIFEST_FILE};
use tdolab_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_SIMULATION: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "tdolab", version, about = "Time-delay oscillator and PLL scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts and manifest.
    Run(RunArgs),
    /// List the built-in scenarios.
    List,
    /// Print the resolved configuration of a scenario as JSON.
    Config(ConfigArgs),
}

#[derive(clap::Args)]
struct Overrides {
    /// Scenario name (see `tdolab list`).
    scenario: String,
    /// JSON document merged over the scenario preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set pll.kappa=0.03`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the noise sources and the initial carrier phase.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Run this many consecutive seeds in parallel, each in `<out>/seed-<n>`.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Compare the results with the scenario's expected metrics; exit 3 on failure.
    #[arg(long)]
    check: bool,
}

#[derive(clap::Args)]
struct ConfigArgs {
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_scenarios());
            ExitCode::SUCCESS
        }
        Command::Config(args) => match resolve(&args.overrides) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run(args) => run(&args),
    }
}

fn resolve(o: &Overrides) -> Result<ScenarioConfig, Error> {
    let kind: ScenarioKind = o.scenario.parse()?;
    let document: Option<Value> = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let mut sets = o.sets.clone();
    if let Some(out) = &o.out {
        sets.push(format!("out_dir={}", Value::String(out.display().to_string())));
    }
    if let Some(seed) = o.seed {
        sets.push(format!("seed={seed}"));
    }
    resolve_config(kind, document.as_ref(), &sets)
}

fn run(args: &RunArgs) -> ExitCode {
    let base = match resolve(&args.overrides) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    if args.jobs == 0 {
        return fail(&Error::config("--jobs", "must be at least 1"));
    }
    let configs: Vec<ScenarioConfig> = if args.jobs == 1 {
        vec![base]
    } else {
        (0..args.jobs as u64)
            .map(|i| {
                let seed = base.seed + i;
                ScenarioConfig {
                    seed,
                    out_dir: base.out_dir.join(format!("seed-{seed}")),
                    ..base.clone()
                }
            })
            .collect()
    };
    let results: Vec<Result<Manifest, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|cfg| scope.spawn(move || run_scenario(cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });

    let mut code = ExitCode::SUCCESS;
    let mut checks_failed = false;
    for (cfg, result) in configs.iter().zip(results) {
        match result {
            Ok(manifest) => {
                println!("{} seed {}: {}", cfg.scenario, cfg.seed, cfg.out_dir.join(MANIFEST_FILE).display());
                if let Some(r) = &manifest.lock_report {
                    println!("  lock {:?} s, loss {:?} s", r.lock_time, r.loss_time);
                }
                if args.check {
                    for c in &manifest.checks {
                        let verdict = if c.pass { "PASS" } else { "FAIL" };
                        println!("  {verdict} {}: {} (expected {})", c.name, c.value, c.expected);
                    }
                    checks_failed |= !manifest.all_checks_pass();
                }
            }
            Err(e) => code = fail(&e),
        }
    }
    if code == ExitCode::SUCCESS && checks_failed {
        return ExitCode::from(EXIT_CHECK);
    }
    code
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        Error::Divergence { .. } | Error::RestorationFailure { .. } | Error::ModeHop { .. } => EXIT_SIMULATION,
        _ => EXIT_CONFIG,
    })
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smarton_core::config::{load_scenario, parse_config, Scenario};
use smarton_core::error::{Error, Result};
use smarton_core::policies::PolicyKind;
use smarton_core::report::{emit_csv, emit_plot};
use smarton_core::sweep::{run_sweep, RunSummary};

/// Simulator for an energy-harvesting node that learns when to wake.
#[derive(Parser, Debug)]
#[command(name = "smarton-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configurations of one scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the configured seed (and any seed axis).
        #[arg(long, env = "SMARTON_SIM_SEED")]
        seed: Option<u64>,
        /// Replaces the configured policy (and any policy axis).
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyKind>,
        /// Directory for CSV output; a summary is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a preset or scenario file over all of its sweep axes.
    Sweep {
        /// Preset name or scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "SMARTON_SIM_SEED", hide = true)]
        seed: Option<u64>,
    },
    /// Write plot data (.dat) and an SVG chart from a sweep's CSV output.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plot: String,
    },
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    PolicyKind::parse(s).map_err(|e| e.to_string())
}

fn override_seed(s: &mut Scenario, seed: Option<u64>) {
    if let Some(seed) = seed {
        s.base.seed = seed;
        s.sweep.seed = vec![seed];
    }
}

fn print_runs(runs: &[RunSummary]) {
    println!("policy\tevent_type\tentry\tratio\tseed\tperiods\tcatches/period\tefficiency");
    for r in runs {
        let k = &r.key;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.4}",
            k.policy,
            k.event_type,
            k.entry,
            k.charging_ratio,
            k.seed,
            r.periods,
            r.metrics.catches_per_period(),
            r.metrics.energy_efficiency
        );
    }
}

fn write_out(runs: &[RunSummary], dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for path in emit_csv(runs, dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            policy,
            out,
        } => {
            let mut s = parse_config(&config)?;
            override_seed(&mut s, seed);
            if let Some(p) = policy {
                s.base.policy.kind = p;
                s.sweep.policy = vec![p];
            }
            let runs = run_sweep(&s, 0)?;
            print_runs(&runs);
            if let Some(dir) = out {
                write_out(&runs, &dir)?;
            }
        }
        Command::Sweep {
            scenario,
            out,
            jobs,
            seed,
        } => {
            let mut s = load_scenario(&scenario)?;
            override_seed(&mut s, seed);
            let runs = run_sweep(&s, jobs)?;
            eprintln!("{}: {} runs", s.name, runs.len());
            write_out(&runs, &out)?;
        }
        Command::Report { input, plot } => {
            for path in emit_plot(&input, &plot)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}

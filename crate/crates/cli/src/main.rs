use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use popowicz::littlewood_paley::{parse_exponent, BesovParams};
use popowicz_cli::config::ScenarioConfig;
use popowicz_cli::error::{CliError, CliResult};
use popowicz_cli::lp_report::lp_report_from_csv;
use popowicz_cli::picard_run::{run_picard, PicardConfig};
use popowicz_cli::run::{print_verdicts, run_scenario, RunOptions};
use popowicz_cli::scenarios::{self, Kind, BUILTINS};
use popowicz_cli::verify::{default_out_dir, run_suite, write_report, Mutation, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "popowicz", version, about = "Pseudospectral experiments for the Popowicz system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write its artifact directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Run the Picard iteration from a config.
    Picard {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Littlewood-Paley block norms and the Besov norm of an x,value CSV.
    Lp {
        #[arg(long)]
        input: PathBuf,
        #[arg(short = 's', allow_negative_numbers = true)]
        s: f64,
        /// Integrability exponent, a number >= 1 or "inf".
        #[arg(short = 'p')]
        p: String,
        /// Summation exponent, a number >= 1 or "inf".
        #[arg(short = 'r')]
        r: String,
    },
    /// Run a verification suite; exits 1 if any check fails.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Where scenario artifacts and report.json go (default: a temporary directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a known defect to confirm the suite catches it.
        #[arg(long, value_enum)]
        mutate: Option<Mutation>,
    },
    /// The builtin scenario library.
    Scenarios {
        /// List the scenario names.
        #[arg(long)]
        list: bool,
        /// Print the config of one scenario.
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
}

fn failed(what: &str, names: Vec<String>) -> CliError {
    CliError::ChecksFailed(format!("{what}: failed checks: {}", names.join(", ")))
}

fn execute(cli: Cli) -> CliResult<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e| CliError::io("writing to stdout")(e);
    match cli.command {
        Command::Simulate { config, out: dir, plots } => {
            let cfg = ScenarioConfig::from_path(&config)?;
            let art = run_scenario(&cfg, &dir, &RunOptions { plots, ..Default::default() })?;
            print_verdicts(&mut out, &art.verdicts).map_err(io)?;
            if let Some(reason) = &art.summary.abort_reason {
                return Err(CliError::Abort(reason.clone()));
            }
            if !art.passed() {
                let names = art.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.clone()).collect();
                return Err(failed(&cfg.name, names));
            }
        }
        Command::Picard { config, out: dir } => {
            let cfg = PicardConfig::from_path(&config)?;
            let art = run_picard(&cfg, &dir)?;
            print_verdicts(&mut out, &art.verdicts).map_err(io)?;
            if !art.passed() {
                let names = art.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.clone()).collect();
                return Err(failed(&cfg.name, names));
            }
        }
        Command::Lp { input, s, p, r } => {
            let params = BesovParams::new(s, parse_exponent(&p)?, parse_exponent(&r)?)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let report = lp_report_from_csv(&input, &params)?;
            let text = serde_json::to_string_pretty(&report).map_err(popowicz::Error::from)?;
            writeln!(out, "{text}").map_err(io)?;
        }
        Command::Verify { suite, out: dir, mutate } => {
            let dir = dir.unwrap_or_else(default_out_dir);
            let report = run_suite(suite, &VerifyOptions { out: dir.clone(), mutation: mutate })?;
            for c in &report.checks {
                eprintln!("[{}] {}", c.suite, c.verdict.line());
            }
            let path = write_report(&report, &dir)?;
            eprintln!("report: {}", path.display());
            let text = serde_json::to_string_pretty(&report).map_err(popowicz::Error::from)?;
            writeln!(out, "{text}").map_err(io)?;
            if !report.pass {
                let names = report.failures().iter().map(|c| c.verdict.name.clone()).collect();
                return Err(failed(&format!("suite {}", suite.name()), names));
            }
        }
        Command::Scenarios { list, show } => match (list, show) {
            (_, Some(name)) => {
                let b = scenarios::find(&name)?;
                write!(out, "{}", b.json).map_err(io)?;
            }
            (true, None) => {
                for b in BUILTINS {
                    let kind = match b.kind {
                        Kind::Simulation => "simulate",
                        Kind::Picard => "picard",
                    };
                    writeln!(out, "{:<26} {:<9} {}", b.name, kind, b.description).map_err(io)?;
                }
            }
            (false, None) => {
                return Err(CliError::Usage("scenarios needs --list or --show NAME".into()));
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

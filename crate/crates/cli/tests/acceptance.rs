//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so every line is printed whether or not it passes.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use popowicz::report::Verdict;
use popowicz_cli::config::Check;
use popowicz_cli::run::{run_scenario, RunArtifact, RunOptions};
use popowicz_cli::scenarios;
use popowicz_cli::verify::{dependence_slope, run_suite, Suite, VerifyOptions, VerifyReport};

const CRITERIA: [&str; 12] = [
    "conservation of int (m + n)",
    "sign preservation for nonnegative momenta",
    "L1 growth bounds",
    "CH-reduction peakon",
    "DP-reduction peakon",
    "Lagrangian pushforward invariants",
    "Littlewood-Paley machinery",
    "product estimate under refinement",
    "Picard iteration",
    "continuous dependence",
    "odd data",
    "verify --suite all",
];

struct Line {
    pass: bool,
    detail: String,
}

impl Line {
    fn from_verdicts(verdicts: &[&Verdict]) -> Line {
        Line {
            pass: verdicts.iter().all(|v| v.pass),
            detail: verdicts
                .iter()
                .map(|v| format!("{} {:.3e}/{:.3e}", v.name, v.worst_value, v.tolerance))
                .collect::<Vec<_>>()
                .join(", "),
        }
    }

    fn and(mut self, ok: bool, note: String) -> Line {
        self.pass &= ok;
        self.detail = format!("{}; {note}", self.detail);
        self
    }

    fn error(err: impl std::fmt::Display) -> Line {
        Line {
            pass: false,
            detail: format!("error: {err}"),
        }
    }
}

fn verdict<'a>(art: &'a RunArtifact, name: &str) -> &'a Verdict {
    art.verdict(name)
        .unwrap_or_else(|| panic!("{} produced no '{name}' verdict", art.name))
}

fn suite_verdict<'a>(report: &'a VerifyReport, name: &str) -> &'a Verdict {
    report
        .check(name)
        .unwrap_or_else(|| panic!("suite {} produced no '{name}' verdict", report.suite))
}

fn reached(art: &RunArtifact, t_end: f64) -> (bool, String) {
    let ok = !art.aborted() && (art.summary.t_final - t_end).abs() <= 1e-9 * t_end;
    (ok, format!("reached t = {}", art.summary.t_final))
}

fn run_builtin(name: &str, checks: Option<&[Check]>, out: &Path) -> Result<(RunArtifact, Duration), String> {
    let mut cfg = scenarios::simulation(name).map_err(|e| e.to_string())?;
    if let Some(keep) = checks {
        cfg.diagnostics.retain(|c| keep.contains(c));
    }
    let start = Instant::now();
    let art = run_scenario(&cfg, &out.join(name), &RunOptions::default()).map_err(|e| e.to_string())?;
    Ok((art, start.elapsed()))
}

fn global_scenario(out: &Path) -> Vec<Line> {
    let keep = [Check::Conservation, Check::Sign, Check::L1Bound];
    let (art, took) = match run_builtin("thm43_positive_momentum", Some(&keep), out) {
        Ok(r) => r,
        Err(e) => return (0..3).map(|_| Line::error(&e)).collect(),
    };
    let (done, note) = reached(&art, 5.0);
    vec![
        Line::from_verdicts(&[verdict(&art, "conservation")]).and(
            took <= Duration::from_secs(30),
            format!("wall {:.1} s (limit 30 s)", took.as_secs_f64()),
        ),
        Line::from_verdicts(&[verdict(&art, "sign")]).and(done, note),
        Line::from_verdicts(&[verdict(&art, "l1_bound")]),
    ]
}

fn peakon(name: &str, names: &[&str], out: &Path) -> Line {
    match run_builtin(name, None, out) {
        Ok((art, _)) => {
            let vs: Vec<&Verdict> = names.iter().map(|n| verdict(&art, n)).collect();
            Line::from_verdicts(&vs).and(!art.aborted(), format!("{} steps", art.summary.steps))
        }
        Err(e) => Line::error(e),
    }
}

fn pushforward(out: &Path) -> Line {
    match run_builtin("lagrangian_pushforward", Some(&[Check::Pushforward]), out) {
        Ok((art, _)) => Line::from_verdicts(&[
            verdict(&art, "pushforward_m"),
            verdict(&art, "pushforward_n"),
            verdict(&art, "pushforward_mutation_gap"),
            verdict(&art, "jacobian_closed_form"),
        ])
        .and(!art.aborted(), format!("reached t = {}", art.summary.t_final)),
        Err(e) => Line::error(e),
    }
}

fn lp(out: &Path) -> Vec<Line> {
    let options = VerifyOptions {
        out: out.join("lp"),
        mutation: None,
    };
    match run_suite(Suite::Lp, &options) {
        Ok(report) => vec![
            Line::from_verdicts(&[
                suite_verdict(&report, "partition_of_unity"),
                suite_verdict(&report, "reconstruction"),
                suite_verdict(&report, "bony_identity"),
                suite_verdict(&report, "almost_orthogonality"),
            ]),
            Line::from_verdicts(&[suite_verdict(&report, "product_estimate_refinement")]),
        ],
        Err(e) => vec![Line::error(&e), Line::error(&e)],
    }
}

fn picard(out: &Path) -> Line {
    let options = VerifyOptions {
        out: out.join("picard"),
        mutation: None,
    };
    match run_suite(Suite::Picard, &options) {
        Ok(report) => Line::from_verdicts(&[
            suite_verdict(&report, "picard_small_data/picard_converged"),
            suite_verdict(&report, "picard_small_data/picard_contraction"),
            suite_verdict(&report, "picard_small_data/picard_solver_gap"),
            suite_verdict(&report, "picard_small_data/picard_uniform_bound"),
            suite_verdict(&report, "frozen_constant_covers_calibration"),
        ]),
        Err(e) => Line::error(e),
    }
}

fn dependence() -> Line {
    match dependence_slope() {
        Ok(v) => Line::from_verdicts(&[&v]),
        Err(e) => Line::error(e),
    }
}

fn odd(out: &Path) -> Line {
    match run_builtin("odd_data", None, out) {
        Ok((art, _)) => {
            let (done, note) = reached(&art, 3.0);
            Line::from_verdicts(&[
                verdict(&art, "odd_oddness"),
                verdict(&art, "odd_sign_pattern"),
                verdict(&art, "odd_half_line_conservation"),
            ])
            .and(done, note)
        }
        Err(e) => Line::error(e),
    }
}

fn verify_all(out: &Path) -> Line {
    let start = Instant::now();
    let result = Command::new(env!("CARGO_BIN_EXE_popowicz"))
        .args(["verify", "--suite", "all", "--out"])
        .arg(out.join("verify"))
        .output();
    let took = start.elapsed();
    match result {
        Ok(output) => {
            let failed: Vec<String> = String::from_utf8_lossy(&output.stderr)
                .lines()
                .filter(|l| l.contains("] FAIL "))
                .map(|l| l.split_whitespace().nth(2).unwrap_or(l).trim_end_matches(':').to_string())
                .collect();
            let code = output.status.code();
            Line {
                pass: code == Some(0) && took <= Duration::from_secs(600),
                detail: format!(
                    "exit {}, wall {:.0} s (limit 600 s), failed: [{}]",
                    code.map_or("signal".to_string(), |c| c.to_string()),
                    took.as_secs_f64(),
                    failed.join(", ")
                ),
            }
        }
        Err(e) => Line::error(e),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        for (i, title) in CRITERIA.iter().enumerate() {
            println!("criterion {:02} {title}: test", i + 1);
        }
        return;
    }
    let dir = tempfile::tempdir().expect("scratch directory");
    let out = dir.path();

    let mut lines = global_scenario(out);
    lines.push(peakon("ch_reduction_peakon", &["crest_speed", "peakon_shape"], out));
    lines.push(peakon("dp_reduction_peakon", &["crest_speed"], out));
    lines.push(pushforward(out));
    lines.extend(lp(out));
    lines.push(picard(out));
    lines.push(dependence());
    lines.push(odd(out));
    lines.push(verify_all(out));

    let mut failed = 0;
    for (i, (line, title)) in lines.iter().zip(CRITERIA).enumerate() {
        let word = if line.pass { "PASS" } else { "FAIL" };
        println!("{word} criterion {:02} {title}: {}", i + 1, line.detail);
        failed += usize::from(!line.pass);
    }
    println!("acceptance: {} of {} criteria pass", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

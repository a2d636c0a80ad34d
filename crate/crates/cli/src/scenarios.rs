//! The builtin scenario library. The JSON files under `scenarios/` are the exact
//! configurations the verification suites run.

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::picard_run::PicardConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Run with `simulate`.
    Simulation,
    /// Run with `picard`.
    Picard,
}

#[derive(Clone, Copy, Debug)]
pub struct Builtin {
    pub name: &'static str,
    pub kind: Kind,
    pub description: &'static str,
    pub json: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "thm43_positive_momentum",
        kind: Kind::Simulation,
        description: "nonnegative Gaussian momenta to t = 5: conservation, sign, L1 bounds, pushforward",
        json: include_str!("../scenarios/thm43_positive_momentum.json"),
    },
    Builtin {
        name: "ch_reduction_peakon",
        kind: Kind::Simulation,
        description: "v-peakon with u = 0 over one box transit: crest speed c",
        json: include_str!("../scenarios/ch_reduction_peakon.json"),
    },
    Builtin {
        name: "dp_reduction_peakon",
        kind: Kind::Simulation,
        description: "u-peakon with v = 0 over one box transit: crest speed 2c",
        json: include_str!("../scenarios/dp_reduction_peakon.json"),
    },
    Builtin {
        name: "lagrangian_pushforward",
        kind: Kind::Simulation,
        description: "characteristics at N = 1024 to t = 2: m q_x^3 and n q_x^2 invariants",
        json: include_str!("../scenarios/lagrangian_pushforward.json"),
    },
    Builtin {
        name: "odd_data",
        kind: Kind::Simulation,
        description: "odd momenta about the box center to t = 3: oddness, sign pattern, half-line momentum",
        json: include_str!("../scenarios/odd_data.json"),
    },
    Builtin {
        name: "sign_changing_monitor",
        kind: Kind::Simulation,
        description: "sign-changing data before breaking: blow-up functional and sign persistence",
        json: include_str!("../scenarios/sign_changing_monitor.json"),
    },
    Builtin {
        name: "l1_mutation_probe",
        kind: Kind::Simulation,
        description: "small m in the decreasing flank of v: L1 growth of m, probe for weakened bounds",
        json: include_str!("../scenarios/l1_mutation_probe.json"),
    },
    Builtin {
        name: "picard_small_data",
        kind: Kind::Picard,
        description: "small random data: Picard iterates converge to the nonlinear solution",
        json: include_str!("../scenarios/picard_small_data.json"),
    },
];

pub fn find(name: &str) -> CliResult<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name).ok_or_else(|| {
        let names: Vec<&str> = BUILTINS.iter().map(|b| b.name).collect();
        CliError::Usage(format!("unknown scenario '{name}' (known: {})", names.join(", ")))
    })
}

pub fn simulation(name: &str) -> CliResult<ScenarioConfig> {
    let b = find(name)?;
    if b.kind != Kind::Simulation {
        return Err(CliError::Usage(format!("'{name}' is a picard scenario")));
    }
    ScenarioConfig::from_json_str(b.json)
}

pub fn picard(name: &str) -> CliResult<PicardConfig> {
    let b = find(name)?;
    if b.kind != Kind::Picard {
        return Err(CliError::Usage(format!("'{name}' is a simulation scenario")));
    }
    PicardConfig::from_json_str(b.json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses() {
        for b in BUILTINS {
            match b.kind {
                Kind::Simulation => {
                    let cfg = simulation(b.name).unwrap();
                    assert_eq!(cfg.name, b.name);
                    cfg.initial_state().unwrap();
                }
                Kind::Picard => assert_eq!(picard(b.name).unwrap().name, b.name),
            }
        }
    }

    #[test]
    fn unknown_name_lists_the_library() {
        let err = find("nope").unwrap_err().to_string();
        assert!(err.contains("odd_data"));
    }
}

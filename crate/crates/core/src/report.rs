//! Pass/fail verdicts emitted by the checks.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub worst_value: f64,
    pub tolerance: f64,
}

impl Verdict {
    /// Passes when `worst_value <= tolerance` (NaN fails).
    pub fn at_most(name: impl Into<String>, worst_value: f64, tolerance: f64) -> Verdict {
        Verdict {
            name: name.into(),
            pass: worst_value <= tolerance,
            worst_value,
            tolerance,
        }
    }

    /// Passes when `worst_value >= tolerance` (NaN fails).
    pub fn at_least(name: impl Into<String>, worst_value: f64, tolerance: f64) -> Verdict {
        Verdict {
            name: name.into(),
            pass: worst_value >= tolerance,
            worst_value,
            tolerance,
        }
    }

    /// Passes when `worst_value` lies in `[lo, hi]`; `tolerance` records the
    /// half-width around the midpoint.
    pub fn within(name: impl Into<String>, worst_value: f64, lo: f64, hi: f64) -> Verdict {
        Verdict {
            name: name.into(),
            pass: worst_value >= lo && worst_value <= hi,
            worst_value,
            tolerance: 0.5 * (hi - lo),
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Verdict {
        Verdict {
            name: name.into(),
            pass,
            worst_value: if pass { 0.0 } else { 1.0 },
            tolerance: 0.0,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: worst {:.3e} (tolerance {:.3e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.worst_value,
            self.tolerance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Verdict::at_most("a", 1.0, 1.0).pass);
        assert!(!Verdict::at_most("a", f64::NAN, 1.0).pass);
        assert!(!Verdict::at_least("b", 0.5, 1.0).pass);
        let w = Verdict::within("c", 1.05, 0.9, 1.1);
        assert!(w.pass && (w.tolerance - 0.1).abs() < 1e-12);
        assert_eq!(
            serde_json::to_string(&Verdict::flag("d", true)).unwrap(),
            r#"{"name":"d","pass":true,"worst_value":0.0,"tolerance":0.0}"#
        );
    }
}

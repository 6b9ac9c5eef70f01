use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ExecutionTrace, Violation, ViolationDelta};
use crate::units::format_number;

/// Everything one simulation produced, ready to print or serialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub satisfied: bool,
    pub trace: ExecutionTrace,
    pub violations: Vec<Violation>,
    /// Minimal capacity per container in mL.
    pub capacity: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whatif: Option<ViolationDelta>,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let verdict = if self.satisfied { "satisfied" } else { "violated" };
        let plural = |n: usize, word: &str| if n == 1 { format!("1 {word}") } else { format!("{n} {word}s") };
        let _ = writeln!(
            out,
            "verdict: {verdict} ({}, {})",
            plural(self.trace.steps.len(), "step"),
            plural(self.violations.len(), "violation")
        );
        for (k, s) in self.trace.steps.iter().enumerate() {
            let _ = write!(out, "{:>3}  [{}] {}", k + 1, s.instruction, s.op);
            if let Some(c) = &s.container {
                let _ = write!(out, " @ {c}");
            }
            let volumes: Vec<String> = s
                .context
                .containers
                .iter()
                .filter(|(_, c)| c.volume_ml > 0.0)
                .map(|(n, c)| format!("{n}={} mL", format_number(c.volume_ml)))
                .collect();
            if !volumes.is_empty() {
                let _ = write!(out, "  {}", volumes.join(" "));
            }
            if let Some(t) = s.context.temperature_c {
                let _ = write!(out, "  T={} C", format_number(t));
            }
            if s.context.elapsed_s > 0.0 {
                let _ = write!(out, "  t={} s", format_number(s.context.elapsed_s));
            }
            out.push('\n');
        }
        for v in &self.violations {
            let _ = writeln!(out, "violation: {v}");
        }
        for (c, ml) in &self.capacity {
            let _ = writeln!(out, "capacity: {c} needs {} mL", format_number(*ml));
        }
        for a in &self.trace.assumptions {
            let _ = writeln!(out, "assumption: {a}");
        }
        if let Some(d) = &self.whatif {
            for v in &d.added {
                let _ = writeln!(out, "whatif added: {v}");
            }
            for v in &d.removed {
                let _ = writeln!(out, "whatif removed: {v}");
            }
            if d.is_empty() {
                let _ = writeln!(out, "whatif: no change");
            }
        }
        out
    }
}

//! DSL definitions: grammar, operation semantics and the pattern space.
//!
//! A spec file is TOML with four top-level sections: `variables`,
//! `terminals`, `productions` and `semantics` (see `fixtures/specs/`).

mod patterns;
mod schema;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::program::{Value, NOOP};
use crate::units::{parse_quantity, Dimension, Quantity};

pub use patterns::{enumerate_patterns, MAX_PATTERNS};
pub use schema::*;
pub use validate::{validate_program, InstructionReport, ValidationReport, Violation, ViolationKind};

/// Value classes a parameter production may expand to.
pub const VALUE_CLASSES: &[&str] = &["string", "symbol", "quantity", "call"];

#[derive(Debug, thiserror::Error)]
pub enum DslError {
    #[error("cannot read spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("spec parse error: {0}")]
    SpecParse(String),
    #[error("spec validation error at `{symbol}`: {reason}")]
    SpecValidation { symbol: String, reason: String },
}

impl DslError {
    fn invalid(symbol: impl Into<String>, reason: impl Into<String>) -> Self {
        DslError::SpecValidation { symbol: symbol.into(), reason: reason.into() }
    }
}

/// The four variable classes of the grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Variables {
    #[serde(default)]
    pub ctrl: Vec<String>,
    pub op: Vec<String>,
    #[serde(default)]
    pub cond: Vec<String>,
    pub par: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Terminals {
    /// Grounded value classes (subset of [`VALUE_CLASSES`]).
    pub classes: Vec<String>,
    /// Named term lists, e.g. `container = ["flask", "large saucepan"]`.
    #[serde(default)]
    pub vocabulary: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Production {
    pub lhs: String,
    /// Alternatives; each is a space-separated symbol sequence where a
    /// trailing `?` marks an optional symbol and `""` is epsilon.
    pub rhs: Vec<String>,
}

/// One symbol occurrence inside a production alternative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RhsSymbol {
    pub name: String,
    pub optional: bool,
}

impl Production {
    pub fn alternatives(&self) -> Vec<Vec<RhsSymbol>> {
        self.rhs.iter().map(|alt| split_alternative(alt)).collect()
    }
}

pub(crate) fn split_alternative(alt: &str) -> Vec<RhsSymbol> {
    alt.split_whitespace()
        .map(|tok| match tok.strip_suffix('?') {
            Some(name) => RhsSymbol { name: name.to_string(), optional: true },
            None => RhsSymbol { name: tok.to_string(), optional: false },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolClass {
    Ctrl,
    Op,
    Cond,
    Par,
    Terminal,
}

/// A loaded, validated DSL. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct DslSpec {
    pub name: String,
    pub start_symbol: String,
    pub variables: Variables,
    pub terminals: Terminals,
    pub productions: Vec<Production>,
    pub semantics: Semantics,
    operations: BTreeMap<String, OperationSchema>,
    parameters: BTreeMap<String, ParameterSchema>,
}

pub fn load_dsl_spec(path: impl AsRef<Path>) -> Result<DslSpec, DslError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|source| DslError::Io { path: path.display().to_string(), source })?;
    DslSpec::from_toml_str(&src)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: String,
    start: String,
    variables: Variables,
    terminals: Terminals,
    #[serde(default)]
    productions: Vec<Production>,
    #[serde(default)]
    semantics: Semantics,
}

impl DslSpec {
    pub fn from_toml_str(src: &str) -> Result<DslSpec, DslError> {
        let file: SpecFile = toml::from_str(src).map_err(|e| DslError::SpecParse(e.to_string()))?;
        let mut spec = DslSpec {
            name: file.name,
            start_symbol: file.start,
            variables: file.variables,
            terminals: file.terminals,
            productions: file.productions,
            semantics: file.semantics,
            operations: BTreeMap::new(),
            parameters: BTreeMap::new(),
        };
        spec.check_symbols()?;
        spec.build_parameters()?;
        spec.build_operations()?;
        Ok(spec)
    }

    /// Which class a symbol belongs to, if declared.
    pub fn symbol_class(&self, sym: &str) -> Option<SymbolClass> {
        let v = &self.variables;
        if v.ctrl.iter().any(|s| s == sym) {
            Some(SymbolClass::Ctrl)
        } else if v.op.iter().any(|s| s == sym) {
            Some(SymbolClass::Op)
        } else if v.cond.iter().any(|s| s == sym) {
            Some(SymbolClass::Cond)
        } else if v.par.iter().any(|s| s == sym) {
            Some(SymbolClass::Par)
        } else if self.terminals.classes.iter().any(|s| s == sym) {
            Some(SymbolClass::Terminal)
        } else {
            None
        }
    }

    pub fn productions_for<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Production> + 'a {
        self.productions.iter().filter(move |p| p.lhs == lhs)
    }

    fn check_symbols(&self) -> Result<(), DslError> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let v = &self.variables;
        let groups: [(&str, &Vec<String>); 5] =
            [("ctrl", &v.ctrl), ("op", &v.op), ("cond", &v.cond), ("par", &v.par), ("terminal", &self.terminals.classes)];
        for (group, names) in groups {
            for n in names {
                if let Some(prev) = seen.insert(n, group) {
                    return Err(DslError::invalid(n, format!("declared as both {prev} and {group}")));
                }
            }
        }
        for t in &self.terminals.classes {
            if !VALUE_CLASSES.contains(&t.as_str()) {
                return Err(DslError::invalid(t, format!("unknown terminal class (expected one of {VALUE_CLASSES:?})")));
            }
        }
        if v.op.iter().any(|o| o == NOOP) {
            return Err(DslError::invalid(NOOP, "operation name is reserved"));
        }
        if self.symbol_class(&self.start_symbol).is_none() && self.productions_for(&self.start_symbol).next().is_none() {
            return Err(DslError::invalid(&self.start_symbol, "start symbol has no productions"));
        }
        let lhs_names: BTreeSet<&str> = self.productions.iter().map(|p| p.lhs.as_str()).collect();
        for p in &self.productions {
            match self.symbol_class(&p.lhs) {
                Some(SymbolClass::Terminal) => return Err(DslError::invalid(&p.lhs, "terminal used as production left-hand side")),
                None if p.lhs != self.start_symbol => {
                    return Err(DslError::invalid(&p.lhs, "production left-hand side is not a declared variable"))
                }
                _ => {}
            }
            if p.rhs.is_empty() {
                return Err(DslError::invalid(&p.lhs, "production has no alternatives"));
            }
            for alt in p.alternatives() {
                for s in alt {
                    let known = self.symbol_class(&s.name).is_some() || s.name == self.start_symbol;
                    if !known {
                        return Err(DslError::invalid(&s.name, format!("referenced by production for `{}` but never declared", p.lhs)));
                    }
                }
            }
        }
        for op in &v.op {
            if !lhs_names.contains(op.as_str()) {
                return Err(DslError::invalid(op, "operation has no production"));
            }
        }
        for c in &v.cond {
            if !lhs_names.contains(c.as_str()) {
                return Err(DslError::invalid(c, "condition has no production"));
            }
        }
        // operations name only conditions and parameters; conditions only parameters
        for p in &self.productions {
            let lhs_class = self.symbol_class(&p.lhs);
            for alt in p.alternatives() {
                for s in alt {
                    let class = self.symbol_class(&s.name);
                    let ok = match lhs_class {
                        Some(SymbolClass::Op) => matches!(class, Some(SymbolClass::Cond | SymbolClass::Par)),
                        Some(SymbolClass::Cond) => matches!(class, Some(SymbolClass::Par)),
                        Some(SymbolClass::Par) => matches!(class, Some(SymbolClass::Terminal)),
                        _ => true,
                    };
                    if !ok {
                        return Err(DslError::invalid(&s.name, format!("not allowed on the right-hand side of `{}`", p.lhs)));
                    }
                }
            }
        }
        for name in self.semantics.operations.keys() {
            if self.symbol_class(name) != Some(SymbolClass::Op) {
                return Err(DslError::invalid(name, "semantics given for an undeclared operation"));
            }
        }
        for name in self.semantics.parameters.keys() {
            if self.symbol_class(name) != Some(SymbolClass::Par) {
                return Err(DslError::invalid(name, "semantics given for an undeclared parameter"));
            }
        }
        for name in self.semantics.conditions.keys() {
            if self.symbol_class(name) != Some(SymbolClass::Cond) {
                return Err(DslError::invalid(name, "semantics given for an undeclared condition"));
            }
        }
        Ok(())
    }

    fn build_parameters(&mut self) -> Result<(), DslError> {
        for name in &self.variables.par {
            let file = self.semantics.parameters.get(name).cloned().unwrap_or_default();
            let mut classes = Vec::new();
            for p in self.productions_for(name) {
                for alt in p.alternatives() {
                    if alt.len() != 1 {
                        return Err(DslError::invalid(name, "parameter productions must expand to exactly one value class"));
                    }
                    classes.push(alt[0].name.clone());
                }
            }
            if file.min_arity > file.max_arity {
                return Err(DslError::invalid(name, format!("unsatisfiable arity {}..{}", file.min_arity, file.max_arity)));
            }
            let mut aliases = BTreeMap::new();
            for (proxy, written) in &file.aliases {
                let q = parse_quantity(written)
                    .ok_or_else(|| DslError::invalid(name, format!("alias {proxy:?} has non-numeric value {written:?}")))?;
                if let Some(unit) = file.unit {
                    if q.dimension() != unit {
                        return Err(DslError::invalid(name, format!("alias {proxy:?} is not a {} value", unit.as_str())));
                    }
                }
                aliases.insert(proxy.to_lowercase(), q);
            }
            self.parameters.insert(
                name.clone(),
                ParameterSchema {
                    name: name.clone(),
                    role: file.role,
                    labels: file.labels.clone(),
                    unit: file.unit,
                    min_arity: file.min_arity,
                    max_arity: file.max_arity,
                    aliases,
                    setpoint: file.setpoint,
                    slot_aliases: file.slot_aliases.clone(),
                    classes,
                },
            );
        }
        let mut seen = BTreeMap::new();
        for p in self.parameters.values() {
            for a in &p.slot_aliases {
                if self.symbol_class(a).is_some() {
                    return Err(DslError::invalid(a, "slot alias shadows a declared symbol"));
                }
                if let Some(prev) = seen.insert(a.clone(), p.name.clone()) {
                    return Err(DslError::invalid(a, format!("slot alias used by both {prev} and {}", p.name)));
                }
            }
        }
        for (name, hook) in &self.semantics.control.hooks {
            for arg in &hook.args {
                if !self.parameters.contains_key(arg) {
                    return Err(DslError::invalid(arg, format!("hook `{name}` names an undeclared parameter")));
                }
            }
        }
        Ok(())
    }

    fn build_operations(&mut self) -> Result<(), DslError> {
        for name in self.variables.op.clone() {
            let sem = self.semantics.operations.get(&name).cloned().unwrap_or_default();
            let (slots, patterns) = patterns::build_pattern_space(self, &name)?;
            let mut defaults = BTreeMap::new();
            for (param, written) in &sem.defaults {
                if !slots.iter().any(|s| &s.name == param) {
                    return Err(DslError::invalid(param, format!("default given for a slot `{name}` does not have")));
                }
                defaults.insert(param.clone(), parse_value_literal(written));
            }
            if let Some(p) = &sem.produces {
                if !slots.iter().any(|s| s.role == Role::Output) {
                    return Err(DslError::invalid(&name, format!("produces `{p}` but has no output slot")));
                }
            }
            self.operations.insert(
                name.clone(),
                OperationSchema {
                    name: name.clone(),
                    synonyms: sem.synonyms.iter().map(|s| s.to_lowercase()).collect(),
                    effect: sem.effect,
                    produces: sem.produces.clone(),
                    vessel: sem.vessel.clone(),
                    continuous: sem.continuous,
                    defaults,
                    slots,
                    patterns,
                },
            );
        }
        Ok(())
    }

    pub fn operation(&self, name: &str) -> Option<&OperationSchema> {
        self.operations.get(name)
    }

    /// Operations in declaration-independent (name) order.
    pub fn operations(&self) -> impl Iterator<Item = &OperationSchema> {
        self.operations.values()
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSchema> {
        self.parameters.get(name)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &ParameterSchema> {
        self.parameters.values()
    }

    /// Canonical parameter name for a written slot name (handles slot aliases).
    pub fn canonical_slot<'a>(&'a self, written: &'a str) -> &'a str {
        if self.parameters.contains_key(written) {
            return written;
        }
        self.parameters.values().find(|p| p.slot_aliases.iter().any(|a| a == written)).map_or(written, |p| p.name.as_str())
    }

    pub fn vocabulary(&self, class: &str) -> &[String] {
        self.terminals.vocabulary.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn hook(&self, name: &str) -> Option<&HookSchema> {
        self.semantics.control.hooks.get(name)
    }

    pub fn control(&self) -> &ControlSemantics {
        &self.semantics.control
    }

    /// Look up a proxy value (e.g. "room temperature") for any parameter of
    /// the given dimension. Returns the parameter name and its value.
    pub fn alias_for(&self, param: &str, proxy: &str) -> Option<&Quantity> {
        self.parameters.get(param)?.aliases.get(&proxy.trim().to_lowercase())
    }

    /// All (proxy, parameter, value) alias entries, longest proxy first.
    pub fn all_aliases(&self) -> Vec<(&str, &str, &Quantity)> {
        let mut out: Vec<_> =
            self.parameters.values().flat_map(|p| p.aliases.iter().map(move |(k, q)| (k.as_str(), p.name.as_str(), q))).collect();
        out.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)).then(a.1.cmp(b.1)));
        out
    }

    /// Parameters whose unit dimension is `dim`.
    pub fn parameters_with_unit(&self, dim: Dimension) -> impl Iterator<Item = &ParameterSchema> {
        self.parameters.values().filter(move |p| p.unit == Some(dim))
    }
}

/// Parse a literal from a spec file: a quantity if it reads as one, else text.
pub fn parse_value_literal(s: &str) -> Value {
    match parse_quantity(s) {
        Some(q) if q.unit.is_some() => Value::Quantity(q),
        _ => Value::Text(s.to_string()),
    }
}

#[cfg(test)]
mod tests;

//! Resource and safety-rule declarations shipped next to a protocol.
//!
//! ```toml
//! attributes = ["heat-sensitive", "heat-stable"]
//!
//! [containers]
//! flask = "50 mL"
//!
//! [reagents]
//! "sodium borohydride" = ["heat-sensitive"]
//!
//! [[rules]]
//! name = "no-hot-borohydride"
//! trigger = ["heat"]
//! guard = "contents has heat-sensitive and temperature > 60 C"
//! severity = "error"
//! message = "heat-sensitive contents heated above 60 C"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::guard::{parse_guard, Guard};
use super::ExecutionError;
use crate::flow::normalize_name;
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    #[default]
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRule {
    pub name: String,
    /// Operation names the rule watches; `*` watches every operation.
    #[serde(deserialize_with = "one_or_many")]
    pub trigger: Vec<String>,
    pub guard: String,
    #[serde(default)]
    pub severity: Severity,
    #[serde(default)]
    pub message: String,
}

impl SafetyRule {
    pub fn triggers_on(&self, op: &str) -> bool {
        self.trigger.iter().any(|t| t == "*" || t == op)
    }
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    pub rule: SafetyRule,
    pub guard: Guard,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceDeclarations {
    /// Container name to capacity in mL.
    #[serde(default)]
    pub containers: BTreeMap<String, f64>,
    /// Reagent name to attribute tags.
    #[serde(default)]
    pub reagents: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub attributes: Vec<String>,
}

impl ResourceDeclarations {
    pub fn known_attributes(&self) -> BTreeSet<&str> {
        self.attributes.iter().chain(self.reagents.values().flatten()).map(String::as_str).collect()
    }

    /// Tags declared for a reagent name, matched after normalization.
    pub fn tags_of(&self, reagent: &str) -> Vec<&str> {
        let key = normalize_name(reagent);
        self.reagents
            .iter()
            .filter(|(name, _)| crate::flow::same_name(&normalize_name(name), &key))
            .flat_map(|(_, tags)| tags.iter().map(String::as_str))
            .collect()
    }

    /// Declared capacity for a container key, if any.
    pub fn capacity_of(&self, container: &str) -> Option<f64> {
        let key = normalize_name(container);
        self.containers.iter().find(|(name, _)| normalize_name(name) == key).map(|(_, c)| *c)
    }

    pub fn merge(&mut self, other: ResourceDeclarations) {
        self.containers.extend(other.containers);
        for (k, v) in other.reagents {
            self.reagents.entry(k).or_default().extend(v);
        }
        for a in other.attributes {
            if !self.attributes.contains(&a) {
                self.attributes.push(a);
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct DeclarationFile {
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    containers: BTreeMap<String, String>,
    #[serde(default)]
    reagents: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    rules: Vec<SafetyRule>,
}

/// Everything a declarations file carries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Declarations {
    pub resources: ResourceDeclarations,
    pub rules: Vec<SafetyRule>,
}

impl Declarations {
    pub fn from_toml_str(src: &str) -> Result<Self, ExecutionError> {
        let file: DeclarationFile = toml::from_str(src).map_err(|e| ExecutionError::Declarations(e.to_string()))?;
        let mut containers = BTreeMap::new();
        for (name, cap) in file.containers {
            let q = parse_quantity(&cap).filter(|q| q.dimension() == Dimension::Volume);
            let Some(q) = q else {
                return Err(ExecutionError::Declarations(format!("container `{name}`: `{cap}` is not a volume")));
            };
            containers.insert(name, q.to_base().hi());
        }
        Ok(Declarations {
            resources: ResourceDeclarations { containers, reagents: file.reagents, attributes: file.attributes },
            rules: file.rules,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExecutionError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| ExecutionError::Declarations(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn merge(&mut self, other: Declarations) {
        self.resources.merge(other.resources);
        self.rules.extend(other.rules);
    }
}

/// Parse every guard and check it only names declared attributes.
pub fn compile_rules(rules: &[SafetyRule], resources: &ResourceDeclarations) -> Result<Vec<CompiledRule>, ExecutionError> {
    let known = resources.known_attributes();
    rules
        .iter()
        .map(|r| {
            let guard = parse_guard(&r.guard).map_err(|e| ExecutionError::RuleCompile { rule: r.name.clone(), reason: e.reason })?;
            if let Some(a) = guard.attributes().into_iter().find(|a| !known.contains(a)) {
                return Err(ExecutionError::RuleCompile { rule: r.name.clone(), reason: format!("unknown attribute `{a}`") });
            }
            Ok(CompiledRule { rule: r.clone(), guard })
        })
        .collect()
}

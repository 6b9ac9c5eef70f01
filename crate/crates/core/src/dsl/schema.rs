use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::program::Value;
use crate::units::{Dimension, Quantity};

/// The `semantics` section of a spec file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Semantics {
    #[serde(default)]
    pub control: ControlSemantics,
    #[serde(default)]
    pub operations: BTreeMap<String, OperationSemantics>,
    #[serde(default)]
    pub conditions: BTreeMap<String, ConditionSemantics>,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParameterSemantics>,
    /// Restrictions on which slot combinations an operation may take.
    #[serde(default)]
    pub constraints: Vec<PatternConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSemantics {
    #[serde(default = "default_loop_keywords")]
    pub loop_keywords: Vec<String>,
    #[serde(default = "default_branch_keywords")]
    pub branch_keywords: Vec<String>,
    #[serde(default)]
    pub hooks: BTreeMap<String, HookSchema>,
}

impl Default for ControlSemantics {
    fn default() -> Self {
        ControlSemantics { loop_keywords: default_loop_keywords(), branch_keywords: default_branch_keywords(), hooks: BTreeMap::new() }
    }
}

fn default_loop_keywords() -> Vec<String> {
    ["repeat", "until", "while", "for each"].map(String::from).to_vec()
}

fn default_branch_keywords() -> Vec<String> {
    ["if", "when", "once", "in case"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookKind {
    /// A state test, e.g. `check_done(target = "beef")`.
    #[default]
    State,
    /// An action folded into a condition, e.g. `drain()`.
    Action,
}

/// A callable used as a pre/post-condition value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HookSchema {
    #[serde(default)]
    pub kind: HookKind,
    #[serde(default)]
    pub args: Vec<String>,
    /// Surface patterns for state hooks, `{target}` marks the argument.
    #[serde(default)]
    pub patterns: Vec<String>,
    /// Verbs that invoke action hooks.
    #[serde(default)]
    pub verbs: Vec<String>,
}

/// How an operation changes the reagents it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Inputs and target are consumed into one new intermediate.
    Combine,
    /// Target is changed in place.
    Mutate,
    /// Target is consumed and redefined at each destination.
    Move,
    /// Target is consumed with no product.
    Consume,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationSemantics {
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub effect: Effect,
    /// Naming stem for fresh intermediates, e.g. `mixture`.
    #[serde(default)]
    pub produces: Option<String>,
    /// Vessel class allocated for new lineages, e.g. `plate`.
    #[serde(default)]
    pub vessel: Option<String>,
    /// Operation runs until stopped (heating, stirring).
    #[serde(default)]
    pub continuous: bool,
    /// Suggested defaults keyed by parameter name, e.g. `temperature = "212 F"`.
    #[serde(default)]
    pub defaults: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSemantics {
    #[serde(default)]
    pub description: Option<String>,
}

/// What a parameter means to the reagent flow and binder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Reagent fed into the operation.
    Input,
    /// The reagent or vessel acted on.
    Target,
    /// Name of the produced intermediate.
    Output,
    /// Where a moved reagent ends up.
    Destination,
    /// Numeric or descriptive setting (temperature, duration, ...).
    #[default]
    Condition,
    /// Equipment allocated at link time (containers).
    Resource,
    /// Pre/post-condition hooks.
    Control,
}

impl Role {
    /// Roles the synthesizer binds from text; the rest are filled later.
    pub fn is_deferred(self) -> bool {
        matches!(self, Role::Output | Role::Resource | Role::Control)
    }

    pub fn is_reagent(self) -> bool {
        matches!(self, Role::Input | Role::Target)
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSemantics {
    #[serde(default)]
    pub role: Role,
    /// Entity labels this slot accepts.
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub unit: Option<Dimension>,
    #[serde(default = "one")]
    pub min_arity: usize,
    #[serde(default = "one")]
    pub max_arity: usize,
    /// Proxy names mapped to values, e.g. `"room temperature" = "20-25 C"`.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Ranges are collapsed to their midpoint on completion.
    #[serde(default)]
    pub setpoint: bool,
    /// Alternate slot spellings accepted in listings.
    #[serde(default)]
    pub slot_aliases: Vec<String>,
}

impl Default for ParameterSemantics {
    fn default() -> Self {
        ParameterSemantics {
            role: Role::default(),
            labels: Vec::new(),
            unit: None,
            min_arity: 1,
            max_arity: 1,
            aliases: BTreeMap::new(),
            setpoint: false,
            slot_aliases: Vec::new(),
        }
    }
}

/// Restriction on the slot combinations of one operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConstraint {
    pub operation: String,
    /// If the first slot is present, all the others must be too.
    #[serde(default)]
    pub requires: Vec<String>,
    /// These slots never co-occur.
    #[serde(default)]
    pub excludes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSchema {
    pub name: String,
    pub role: Role,
    pub labels: Vec<String>,
    pub unit: Option<Dimension>,
    pub min_arity: usize,
    pub max_arity: usize,
    /// Lower-cased proxy name to value.
    pub aliases: BTreeMap<String, Quantity>,
    pub setpoint: bool,
    pub slot_aliases: Vec<String>,
    /// Value classes from the parameter's productions; empty accepts any.
    pub classes: Vec<String>,
}

impl ParameterSchema {
    pub fn accepts_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDescriptor {
    pub name: String,
    pub role: Role,
    pub min_arity: usize,
    pub max_arity: usize,
    /// Present in every pattern.
    pub required: bool,
    /// Condition variable the slot was reached through, if any.
    pub via: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternSlot {
    pub name: String,
    pub required: bool,
}

/// One legal slot layout of an operation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProgramPattern {
    pub operation: String,
    pub slot_layout: Vec<PatternSlot>,
}

impl ProgramPattern {
    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.slot_layout.iter().map(|s| s.name.as_str())
    }

    pub fn has(&self, slot: &str) -> bool {
        self.slot_layout.iter().any(|s| s.name == slot)
    }

    pub fn len(&self) -> usize {
        self.slot_layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_layout.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationSchema {
    pub name: String,
    /// Lower-cased alternative verbs.
    pub synonyms: Vec<String>,
    pub effect: Effect,
    pub produces: Option<String>,
    pub vessel: Option<String>,
    pub continuous: bool,
    pub defaults: BTreeMap<String, Value>,
    /// Every slot reachable from the operation, in production order.
    pub slots: Vec<SlotDescriptor>,
    /// Cached pattern space, lexicographically ordered.
    pub patterns: Vec<ProgramPattern>,
}

impl OperationSchema {
    pub fn slot(&self, name: &str) -> Option<&SlotDescriptor> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn slots_with_role(&self, role: Role) -> impl Iterator<Item = &SlotDescriptor> {
        self.slots.iter().filter(move |s| s.role == role)
    }

    pub fn output_slot(&self) -> Option<&SlotDescriptor> {
        self.slots_with_role(Role::Output).next()
    }

    pub fn target_slot(&self) -> Option<&SlotDescriptor> {
        self.slots_with_role(Role::Target).next()
    }

    pub fn resource_slot(&self) -> Option<&SlotDescriptor> {
        self.slots_with_role(Role::Resource).next()
    }
}

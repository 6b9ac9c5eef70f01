use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::units::{parse_quantity, Dimension, Quantity};

/// Pseudo-labels assigned to entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Reagent,
    Device,
    Container,
    Volume,
    Mass,
    Temperature,
    Duration,
    Concentration,
    Speed,
    Count,
    Other,
}

pub const LABELS: &[Label] = &[
    Label::Reagent,
    Label::Device,
    Label::Container,
    Label::Volume,
    Label::Mass,
    Label::Temperature,
    Label::Duration,
    Label::Concentration,
    Label::Speed,
    Label::Count,
    Label::Other,
];

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Reagent => "reagent",
            Label::Device => "device",
            Label::Container => "container",
            Label::Volume => "volume",
            Label::Mass => "mass",
            Label::Temperature => "temperature",
            Label::Duration => "duration",
            Label::Concentration => "concentration",
            Label::Speed => "speed",
            Label::Count => "count",
            Label::Other => "other",
        }
    }

    /// Labels whose surface is a number with a unit.
    pub fn is_quantity(self) -> bool {
        matches!(
            self,
            Label::Volume | Label::Mass | Label::Temperature | Label::Duration | Label::Concentration | Label::Speed | Label::Count
        )
    }

    pub fn for_dimension(dim: Dimension, unit: Option<&str>) -> Label {
        match dim {
            Dimension::Volume => Label::Volume,
            Dimension::Mass => Label::Mass,
            Dimension::Temperature => Label::Temperature,
            Dimension::Duration => Label::Duration,
            Dimension::Rate => Label::Speed,
            Dimension::Count => Label::Count,
            Dimension::Dimensionless => match unit {
                Some("M" | "mM" | "%") => Label::Concentration,
                Some(_) => Label::Other,
                None => Label::Count,
            },
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_lowercase();
        LABELS.iter().copied().find(|l| l.as_str() == t).ok_or_else(|| format!("unknown label {s:?}"))
    }
}

/// Grammatical role of an entity relative to its verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Svo {
    /// Direct object of the verb.
    Object,
    /// Introduced by a place preposition (to, into, in, ...).
    Place,
    /// A setting: quantity or proxy value.
    Setting,
}

/// A labeled span of protocol text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    /// Byte span in the raw protocol text.
    pub span: (usize, usize),
    pub label: Label,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svo: Option<Svo>,
}

impl Entity {
    pub fn new(surface: impl Into<String>, span: (usize, usize), label: Label, confidence: f64) -> Self {
        Entity { surface: surface.into(), span, label, confidence, svo: None }
    }

    /// The surface as a quantity, if it reads as one.
    pub fn quantity(&self) -> Option<Quantity> {
        let cleaned: String = self.surface.chars().filter(|c| !matches!(c, '[' | ']' | '~')).collect();
        parse_quantity(&cleaned)
    }
}

//! Quantities with units: parsing, display and conversion to base units.
//!
//! Base units per dimension: millilitres, grams, degrees Celsius, seconds.
//! Rates and counts are kept in their written unit.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Physical dimension of a parameter or quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "volume-mL")]
    Volume,
    #[serde(rename = "mass-g")]
    Mass,
    #[serde(rename = "temperature-C")]
    Temperature,
    #[serde(rename = "duration-s")]
    Duration,
    #[serde(rename = "rate")]
    Rate,
    #[serde(rename = "count")]
    Count,
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Volume => "volume-mL",
            Dimension::Mass => "mass-g",
            Dimension::Temperature => "temperature-C",
            Dimension::Duration => "duration-s",
            Dimension::Rate => "rate",
            Dimension::Count => "count",
            Dimension::Dimensionless => "dimensionless",
        }
    }
}

struct UnitDef {
    symbol: &'static str,
    dimension: Dimension,
    /// Multiplier to the base unit (ignored for temperature).
    factor: f64,
    aliases: &'static [&'static str],
    /// Aliases that only match with exact case (single letters mostly).
    exact_aliases: &'static [&'static str],
}

const UNITS: &[UnitDef] = &[
    UnitDef {
        symbol: "mL",
        dimension: Dimension::Volume,
        factor: 1.0,
        aliases: &["ml", "milliliter", "milliliters", "millilitre", "millilitres"],
        exact_aliases: &[],
    },
    UnitDef {
        symbol: "L",
        dimension: Dimension::Volume,
        factor: 1000.0,
        aliases: &["liter", "liters", "litre", "litres"],
        exact_aliases: &["L", "l"],
    },
    UnitDef {
        symbol: "uL",
        dimension: Dimension::Volume,
        factor: 0.001,
        aliases: &["ul", "µl", "μl", "microliter", "microliters", "microlitre", "microlitres"],
        exact_aliases: &[],
    },
    UnitDef { symbol: "cup", dimension: Dimension::Volume, factor: 236.588, aliases: &["cup", "cups"], exact_aliases: &[] },
    UnitDef {
        symbol: "floz",
        dimension: Dimension::Volume,
        factor: 29.5735,
        aliases: &["floz", "fl oz", "fluid ounce", "fluid ounces"],
        exact_aliases: &[],
    },
    UnitDef {
        symbol: "tbsp",
        dimension: Dimension::Volume,
        factor: 14.7868,
        aliases: &["tbsp", "tablespoon", "tablespoons"],
        exact_aliases: &[],
    },
    UnitDef {
        symbol: "tsp",
        dimension: Dimension::Volume,
        factor: 4.92892,
        aliases: &["tsp", "teaspoon", "teaspoons"],
        exact_aliases: &[],
    },
    UnitDef {
        symbol: "g",
        dimension: Dimension::Mass,
        factor: 1.0,
        aliases: &["gram", "grams", "gramme", "grammes"],
        exact_aliases: &["g"],
    },
    UnitDef { symbol: "kg", dimension: Dimension::Mass, factor: 1000.0, aliases: &["kg", "kilogram", "kilograms"], exact_aliases: &[] },
    UnitDef { symbol: "mg", dimension: Dimension::Mass, factor: 0.001, aliases: &["mg", "milligram", "milligrams"], exact_aliases: &[] },
    UnitDef { symbol: "ounce", dimension: Dimension::Mass, factor: 28.3495, aliases: &["oz", "ounce", "ounces"], exact_aliases: &[] },
    UnitDef { symbol: "lb", dimension: Dimension::Mass, factor: 453.592, aliases: &["lb", "lbs", "pound", "pounds"], exact_aliases: &[] },
    UnitDef {
        symbol: "C",
        dimension: Dimension::Temperature,
        factor: 1.0,
        aliases: &["°c", "degc", "celsius", "degrees celsius"],
        exact_aliases: &["C"],
    },
    UnitDef {
        symbol: "F",
        dimension: Dimension::Temperature,
        factor: 1.0,
        aliases: &["°f", "degf", "fahrenheit", "degrees fahrenheit"],
        exact_aliases: &["F"],
    },
    UnitDef { symbol: "K", dimension: Dimension::Temperature, factor: 1.0, aliases: &["kelvin"], exact_aliases: &["K"] },
    UnitDef {
        symbol: "s",
        dimension: Dimension::Duration,
        factor: 1.0,
        aliases: &["sec", "secs", "second", "seconds"],
        exact_aliases: &["s"],
    },
    UnitDef {
        symbol: "mins",
        dimension: Dimension::Duration,
        factor: 60.0,
        aliases: &["min", "mins", "minute", "minutes"],
        exact_aliases: &[],
    },
    UnitDef {
        symbol: "h",
        dimension: Dimension::Duration,
        factor: 3600.0,
        aliases: &["hr", "hrs", "hour", "hours"],
        exact_aliases: &["h"],
    },
    UnitDef { symbol: "mL/s", dimension: Dimension::Rate, factor: 1.0, aliases: &["ml/s", "ml/sec"], exact_aliases: &[] },
    UnitDef { symbol: "mL/min", dimension: Dimension::Rate, factor: 1.0, aliases: &["ml/min"], exact_aliases: &[] },
    UnitDef { symbol: "rpm", dimension: Dimension::Rate, factor: 1.0, aliases: &["rpm"], exact_aliases: &[] },
    UnitDef { symbol: "xg", dimension: Dimension::Rate, factor: 1.0, aliases: &["x g", "xg", "×g", "× g"], exact_aliases: &[] },
    UnitDef { symbol: "M", dimension: Dimension::Dimensionless, factor: 1.0, aliases: &[], exact_aliases: &["M"] },
    UnitDef { symbol: "mM", dimension: Dimension::Dimensionless, factor: 1.0, aliases: &[], exact_aliases: &["mM"] },
    UnitDef { symbol: "%", dimension: Dimension::Dimensionless, factor: 1.0, aliases: &["%", "percent"], exact_aliases: &[] },
    UnitDef {
        symbol: "plates",
        dimension: Dimension::Count,
        factor: 1.0,
        aliases: &["plate", "plates", "serving", "servings", "portion", "portions"],
        exact_aliases: &[],
    },
    UnitDef { symbol: "pieces", dimension: Dimension::Count, factor: 1.0, aliases: &["piece", "pieces"], exact_aliases: &[] },
    UnitDef { symbol: "times", dimension: Dimension::Count, factor: 1.0, aliases: &["time", "times"], exact_aliases: &[] },
];

fn unit_def(symbol: &str) -> Option<&'static UnitDef> {
    UNITS.iter().find(|u| u.symbol == symbol)
}

/// Resolve a written unit (any alias, any case where allowed) to its canonical symbol.
pub fn canonical_unit(written: &str) -> Option<&'static str> {
    let trimmed = written.trim();
    let folded = trimmed.to_lowercase();
    UNITS
        .iter()
        .find(|u| u.exact_aliases.contains(&trimmed) || u.aliases.contains(&folded.as_str()) || u.symbol == trimmed)
        .map(|u| u.symbol)
}

/// Dimension of a canonical unit symbol.
pub fn unit_dimension(symbol: &str) -> Dimension {
    unit_def(symbol).map_or(Dimension::Dimensionless, |u| u.dimension)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    Scalar(f64),
    Range(f64, f64),
}

impl Magnitude {
    pub fn lo(self) -> f64 {
        match self {
            Magnitude::Scalar(v) => v,
            Magnitude::Range(lo, _) => lo,
        }
    }

    pub fn hi(self) -> f64 {
        match self {
            Magnitude::Scalar(v) => v,
            Magnitude::Range(_, hi) => hi,
        }
    }

    pub fn midpoint(self) -> f64 {
        (self.lo() + self.hi()) / 2.0
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Magnitude {
        match self {
            Magnitude::Scalar(v) => Magnitude::Scalar(f(v)),
            Magnitude::Range(lo, hi) => Magnitude::Range(f(lo), f(hi)),
        }
    }
}

/// A number (or interval) with an optional unit.
///
/// Serialized as its display string, e.g. `"300F"`, `"5-10mins"`, `"35mL"`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub magnitude: Magnitude,
    /// Canonical unit symbol; `None` for bare numbers.
    pub unit: Option<String>,
}

impl Quantity {
    pub fn scalar(value: f64, unit: &str) -> Self {
        Quantity { magnitude: Magnitude::Scalar(value), unit: canonical_unit(unit).map(str::to_string) }
    }

    pub fn range(lo: f64, hi: f64, unit: &str) -> Self {
        Quantity { magnitude: Magnitude::Range(lo, hi), unit: canonical_unit(unit).map(str::to_string) }
    }

    pub fn dimension(&self) -> Dimension {
        self.unit.as_deref().map_or(Dimension::Dimensionless, unit_dimension)
    }

    pub fn is_range(&self) -> bool {
        matches!(self.magnitude, Magnitude::Range(..))
    }

    /// Magnitude converted to the base unit of its dimension.
    pub fn to_base(&self) -> Magnitude {
        let Some(def) = self.unit.as_deref().and_then(unit_def) else {
            return self.magnitude;
        };
        match def.symbol {
            "F" => self.magnitude.map(|v| (v - 32.0) * 5.0 / 9.0),
            "K" => self.magnitude.map(|v| v - 273.15),
            _ => self.magnitude.map(|v| v * def.factor),
        }
    }

    /// Collapse a range to its midpoint; scalars are returned unchanged.
    pub fn collapsed(&self) -> Quantity {
        Quantity { magnitude: Magnitude::Scalar(self.magnitude.midpoint()), unit: self.unit.clone() }
    }
}

/// Format a number with at most three decimals and no trailing zeros.
pub fn format_number(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        return format!("{}", v.round() as i64);
    }
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.magnitude {
            Magnitude::Scalar(v) => write!(f, "{}", format_number(v))?,
            Magnitude::Range(lo, hi) => write!(f, "{}-{}", format_number(lo), format_number(hi))?,
        }
        if let Some(u) = &self.unit {
            f.write_str(u)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a quantity: {0:?}")]
pub struct QuantityParseError(pub String);

impl FromStr for Quantity {
    type Err = QuantityParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_quantity(s).ok_or_else(|| QuantityParseError(s.to_string()))
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const NUMBER: &str = r"(?:\d+\s+\d+/\d+|\d+/\d+|\d+(?:\.\d+)?|\.\d+)";

fn unit_alternation() -> String {
    let mut written: Vec<(String, bool)> = Vec::new();
    for u in UNITS {
        for a in u.aliases {
            written.push((regex::escape(a), true));
        }
        for a in u.exact_aliases {
            written.push((regex::escape(a), false));
        }
        written.push((regex::escape(u.symbol), false));
    }
    written.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    written.dedup();
    written.into_iter().map(|(w, ci)| if ci { format!("(?i:{w})") } else { w }).collect::<Vec<_>>().join("|")
}

fn quantity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let pattern = format!(
            r"~?(?P<lo>{NUMBER})(?:\s*(?:-|–|to)\s*(?P<hi>{NUMBER}))?\s*°?\s*(?P<unit>{units})(?P<end>\b|$|[^A-Za-z])",
            units = unit_alternation()
        );
        Regex::new(&pattern).expect("quantity pattern")
    })
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let mut parts = s.split_whitespace();
    let first = parts.next()?;
    let second = parts.next();
    let frac = |t: &str| -> Option<f64> {
        match t.split_once('/') {
            Some((n, d)) => {
                let d: f64 = d.parse().ok()?;
                if d == 0.0 {
                    return None;
                }
                Some(n.parse::<f64>().ok()? / d)
            }
            None => t.parse().ok(),
        }
    };
    match second {
        None => frac(first),
        Some(f) => Some(frac(first)? + frac(f)?),
    }
}

/// A quantity mention found in free text.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityMatch {
    pub start: usize,
    pub end: usize,
    pub quantity: Quantity,
}

/// Find every number-with-unit mention in `text`, in order.
pub fn find_quantities(text: &str) -> Vec<QuantityMatch> {
    let mut out = Vec::new();
    for caps in quantity_regex().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let end_group = caps.name("end").expect("end group");
        let end = end_group.start();
        let mut start = whole.start();
        if text[start..].starts_with('~') {
            start += 1;
        }
        let lo = parse_number(&caps["lo"]);
        let hi = caps.name("hi").and_then(|m| parse_number(m.as_str()));
        let Some(unit) = canonical_unit(&caps["unit"]) else { continue };
        let Some(lo) = lo else { continue };
        let magnitude = match hi {
            Some(hi) => Magnitude::Range(lo, hi),
            None => Magnitude::Scalar(lo),
        };
        out.push(QuantityMatch { start, end, quantity: Quantity { magnitude, unit: Some(unit.to_string()) } });
    }
    out
}

/// Parse a whole string as a quantity: `"300 F"`, `"7.5mins"`, `"1/3 cup"`,
/// `"20-25 C"`, or a bare number.
pub fn parse_quantity(s: &str) -> Option<Quantity> {
    let t = s.trim().trim_start_matches('~').trim();
    if t.is_empty() {
        return None;
    }
    if let Some(m) = find_quantities(t).into_iter().next() {
        if m.start == 0 && t[m.end..].trim().is_empty() {
            return Some(m.quantity);
        }
    }
    // bare number or bare range
    if let Some((lo, hi)) = t.split_once('-').filter(|(a, _)| !a.trim().is_empty()) {
        if let (Some(lo), Some(hi)) = (parse_number(lo), parse_number(hi)) {
            return Some(Quantity { magnitude: Magnitude::Range(lo, hi), unit: None });
        }
    }
    parse_number(t).map(|v| Quantity { magnitude: Magnitude::Scalar(v), unit: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units_and_fractions() {
        let q: Quantity = "300 F".parse().unwrap();
        assert_eq!(q.to_string(), "300F");
        assert_eq!(q.dimension(), Dimension::Temperature);
        let q: Quantity = "1/3 cup".parse().unwrap();
        assert!((q.magnitude.lo() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(q.dimension(), Dimension::Volume);
        let q: Quantity = "1 1/2 ounce".parse().unwrap();
        assert_eq!(q.magnitude, Magnitude::Scalar(1.5));
        let q: Quantity = "7.5mins".parse().unwrap();
        assert_eq!(q.to_string(), "7.5mins");
        assert_eq!(q.to_base(), Magnitude::Scalar(450.0));
    }

    #[test]
    fn ranges_and_synonyms() {
        let q: Quantity = "5-10 minutes".parse().unwrap();
        assert_eq!(q.magnitude, Magnitude::Range(5.0, 10.0));
        assert_eq!(q.to_string(), "5-10mins");
        assert_eq!(q.collapsed().to_string(), "7.5mins");
        for w in ["10 ml", "10 mL", "10 milliliters"] {
            assert_eq!(w.parse::<Quantity>().unwrap().to_string(), "10mL");
        }
        assert_eq!("80°C".parse::<Quantity>().unwrap().to_string(), "80C");
        assert_eq!("212 F".parse::<Quantity>().unwrap().to_base(), Magnitude::Scalar(100.0));
        assert_eq!("1mL/s".parse::<Quantity>().unwrap().dimension(), Dimension::Rate);
    }

    #[test]
    fn finds_mentions_in_text() {
        let text = "Dissolve 10 g of sodium chloride in 100 mL of distilled water at 80°C";
        let found = find_quantities(text);
        let surfaces: Vec<&str> = found.iter().map(|m| &text[m.start..m.end]).collect();
        assert_eq!(surfaces, vec!["10 g", "100 mL", "80°C"]);
        assert!(find_quantities("Stir the gel gently").is_empty());
        assert!(find_quantities("add 2 cans").is_empty());
    }

    #[test]
    fn bare_numbers_are_dimensionless() {
        let q = parse_quantity("3").unwrap();
        assert_eq!(q.unit, None);
        assert_eq!(q.dimension(), Dimension::Dimensionless);
        assert!(parse_quantity("hot").is_none());
    }
}

//! Units, attribute schemas and two-arm allocations.

use crate::error::{data, domain, Result};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    /// Present (`1`) or absent (`0`).
    Binary,
    /// Unordered levels, stored as indices into `levels`.
    Categorical { levels: Vec<String> },
    /// Ordered scores; only their ranks matter.
    Ordinal,
    /// Real-valued measurement with an optional unit label.
    Numeric { unit: Option<String> },
}

impl AttributeKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Binary | Self::Categorical { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::Categorical { .. } => "categorical",
            Self::Ordinal => "ordinal",
            Self::Numeric { .. } => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Default weight in distances and balancing objectives.
    pub weight: f64,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Number of levels of a discrete attribute.
    pub fn level_count(&self) -> Option<usize> {
        match &self.kind {
            AttributeKind::Binary => Some(2),
            AttributeKind::Categorical { levels } => Some(levels.len()),
            _ => None,
        }
    }

    pub fn level_name(&self, level: usize) -> String {
        match &self.kind {
            AttributeKind::Categorical { levels } => levels[level].clone(),
            _ => level.to_string(),
        }
    }

    /// Parses one textual cell into a value of this attribute's kind.
    pub fn parse_value(&self, raw: &str) -> Result<Value> {
        let raw = raw.trim();
        match &self.kind {
            AttributeKind::Binary => match raw {
                "1" | "true" | "yes" => Ok(Value::Binary(true)),
                "0" | "false" | "no" => Ok(Value::Binary(false)),
                _ => data(format!("expected 0 or 1, got {raw:?}")),
            },
            AttributeKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == raw)
                .map(Value::Level)
                .ok_or_else(|| {
                    crate::Error::Data(format!(
                        "unknown level {raw:?} (declared: {})",
                        levels.join(", ")
                    ))
                }),
            AttributeKind::Ordinal | AttributeKind::Numeric { .. } => match raw.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(if matches!(self.kind, AttributeKind::Ordinal) {
                    Value::Ordinal(x)
                } else {
                    Value::Numeric(x)
                }),
                _ => data(format!("expected a number, got {raw:?}")),
            },
        }
    }

    /// Inverse of [`Attribute::parse_value`].
    pub fn format_value(&self, value: &Value) -> String {
        match value {
            Value::Binary(b) => u8::from(*b).to_string(),
            Value::Level(l) => self.level_name(*l),
            Value::Ordinal(x) | Value::Numeric(x) => x.to_string(),
        }
    }

    fn accepts(&self, value: &Value) -> bool {
        match (&self.kind, value) {
            (AttributeKind::Binary, Value::Binary(_)) => true,
            (AttributeKind::Categorical { levels }, Value::Level(l)) => *l < levels.len(),
            (AttributeKind::Ordinal, Value::Ordinal(x)) => x.is_finite(),
            (AttributeKind::Numeric { .. }, Value::Numeric(x)) => x.is_finite(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Binary(bool),
    Level(usize),
    Ordinal(f64),
    Numeric(f64),
}

impl Value {
    /// Level index for discrete values (`0`/`1` for binary).
    pub fn level(&self) -> Option<usize> {
        match *self {
            Value::Binary(b) => Some(usize::from(b)),
            Value::Level(l) => Some(l),
            _ => None,
        }
    }

    /// Numeric reading of the value; binary maps to 0/1, levels to their index.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Binary(b) => f64::from(u8::from(b)),
            Value::Level(l) => l as f64,
            Value::Ordinal(x) | Value::Numeric(x) => x,
        }
    }
}

/// Ordered, uniquely named attribute list shared by every unit of a cohort.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (idx, attr) in attributes.iter().enumerate() {
            if attr.name.is_empty() || attr.name == "id" {
                return data(format!("invalid attribute name {:?}", attr.name));
            }
            if seen.insert(attr.name.as_str(), idx).is_some() {
                return data(format!("duplicate attribute {:?}", attr.name));
            }
            if !(attr.weight >= 0.0 && attr.weight.is_finite()) {
                return data(format!("attribute {:?} has invalid weight {}", attr.name, attr.weight));
            }
            if let AttributeKind::Categorical { levels } = &attr.kind {
                if levels.is_empty() {
                    return data(format!("categorical attribute {:?} declares no levels", attr.name));
                }
                let mut uniq = levels.clone();
                uniq.sort();
                uniq.dedup();
                if uniq.len() != levels.len() {
                    return data(format!("categorical attribute {:?} repeats a level", attr.name));
                }
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Default per-attribute weights.
    pub fn weights(&self) -> Vec<f64> {
        self.attributes.iter().map(|a| a.weight).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub values: Vec<Value>,
}

impl Unit {
    pub fn new(id: impl Into<String>, values: Vec<Value>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }
}

/// A validated set of units sharing one schema. Unit order is significant:
/// strategies break ties by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: Schema,
    units: Vec<Unit>,
}

impl Cohort {
    pub fn new(schema: Schema, units: Vec<Unit>) -> Result<Self> {
        let mut ids = HashMap::new();
        for (row, unit) in units.iter().enumerate() {
            if ids.insert(unit.id.as_str(), row).is_some() {
                return data(format!("duplicate unit id {:?}", unit.id));
            }
            if unit.values.len() != schema.len() {
                return data(format!(
                    "unit {:?} has {} attributes, schema declares {}",
                    unit.id,
                    unit.values.len(),
                    schema.len()
                ));
            }
            for (attr, value) in schema.attributes().iter().zip(&unit.values) {
                if !attr.accepts(value) {
                    return data(format!(
                        "unit {:?}: value {value:?} does not fit {} attribute {:?}",
                        unit.id,
                        attr.kind.label(),
                        attr.name
                    ));
                }
            }
        }
        Ok(Self { schema, units })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Column of values for attribute `attr`.
    pub fn column(&self, attr: usize) -> impl Iterator<Item = &Value> + '_ {
        self.units.iter().map(move |u| &u.values[attr])
    }

    pub(crate) fn require_even(&self) -> Result<usize> {
        if !self.units.len().is_multiple_of(2) {
            return domain(format!(
                "equal split needs an even cohort, got {} units",
                self.units.len()
            ));
        }
        Ok(self.units.len() / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub fn other(self) -> Self {
        match self {
            Arm::Treatment => Arm::Control,
            Arm::Control => Arm::Treatment,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Treatment => "T",
            Arm::Control => "C",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T" | "t" | "treatment" => Ok(Arm::Treatment),
            "C" | "c" | "control" => Ok(Arm::Control),
            other => data(format!("unknown arm {other:?}, expected T or C")),
        }
    }
}

/// Arm of every cohort unit, aligned with the cohort's unit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    arms: Vec<Arm>,
}

impl Allocation {
    pub fn new(arms: Vec<Arm>) -> Self {
        Self { arms }
    }

    /// Builds an allocation from `(id, arm)` pairs; every cohort unit must be
    /// assigned exactly once.
    pub fn from_assignments<'a, I>(cohort: &Cohort, assignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, Arm)>,
    {
        let index: HashMap<&str, usize> = cohort
            .units()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.as_str(), i))
            .collect();
        let mut arms: Vec<Option<Arm>> = vec![None; cohort.len()];
        for (id, arm) in assignments {
            let Some(&i) = index.get(id) else {
                return data(format!("assignment names unknown unit {id:?}"));
            };
            if arms[i].replace(arm).is_some() {
                return data(format!("unit {id:?} assigned more than once"));
            }
        }
        let arms = arms
            .into_iter()
            .zip(cohort.units())
            .map(|(arm, unit)| {
                arm.ok_or_else(|| crate::Error::Domain(format!("unit {:?} is unassigned", unit.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { arms })
    }

    /// Units listed in `treated` go to T, all others to C.
    pub fn from_treated(len: usize, treated: &[usize]) -> Self {
        let mut arms = vec![Arm::Control; len];
        for &i in treated {
            arms[i] = Arm::Treatment;
        }
        Self { arms }
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, unit: usize) -> Arm {
        self.arms[unit]
    }

    pub fn size(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }

    pub fn members(&self, arm: Arm) -> Vec<usize> {
        (0..self.arms.len()).filter(|&i| self.arms[i] == arm).collect()
    }

    /// Same split with T and C exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            arms: self.arms.iter().map(|a| a.other()).collect(),
        }
    }
}

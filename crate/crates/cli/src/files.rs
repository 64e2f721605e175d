//! Cohort, schema and assignment files.
//!
//! A cohort is a CSV file with an `id` column and one column per attribute.
//! Attribute types come from a TOML sidecar:
//!
//! ```toml
//! [[attribute]]
//! name = "gender"
//! kind = "categorical"
//! levels = ["1", "2"]
//!
//! [[attribute]]
//! name = "height"
//! kind = "numeric"
//! unit = "cm"
//! range = [100, 250]
//! weight = 2.0
//! ```
//!
//! Rows are numbered as in a spreadsheet: the header is row 1.

use crate::CliError;
use balancelab::{Allocation, Arm, Attribute, AttributeKind, Cohort, Schema, Unit, Value};
use serde::Deserialize;
use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    attribute: Vec<AttributeDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeDef {
    name: String,
    kind: String,
    #[serde(default)]
    levels: Option<Vec<String>>,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    range: Option<[f64; 2]>,
    #[serde(default)]
    weight: Option<f64>,
}

/// A schema plus the optional value ranges declared for numeric columns.
#[derive(Debug, Clone)]
pub struct SchemaSpec {
    pub schema: Schema,
    ranges: Vec<Option<[f64; 2]>>,
}

impl SchemaSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| CliError::Data(format!("schema: {}", e.message())))?;
        let mut attributes = Vec::with_capacity(file.attribute.len());
        let mut ranges = Vec::with_capacity(file.attribute.len());
        for def in file.attribute {
            let bad = |msg: String| CliError::Data(format!("schema: attribute {:?}: {msg}", def.name));
            let kind = match (def.kind.as_str(), &def.levels) {
                ("binary", None) => AttributeKind::Binary,
                ("categorical", Some(levels)) => AttributeKind::Categorical {
                    levels: levels.clone(),
                },
                ("categorical", None) => return Err(bad("categorical attributes need levels".into())),
                ("ordinal", None) => AttributeKind::Ordinal,
                ("numeric", None) => AttributeKind::Numeric {
                    unit: def.unit.clone(),
                },
                ("binary" | "ordinal" | "numeric", Some(_)) => {
                    return Err(bad(format!("levels are only allowed for categorical, not {}", def.kind)))
                }
                (other, _) => return Err(bad(format!("unknown kind {other:?}"))),
            };
            if def.unit.is_some() && !matches!(kind, AttributeKind::Numeric { .. }) {
                return Err(bad("unit is only allowed for numeric attributes".into()));
            }
            if let Some([lo, hi]) = def.range {
                if kind.is_discrete() {
                    return Err(bad("range is only allowed for ordinal and numeric attributes".into()));
                }
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(bad(format!("empty range [{lo}, {hi}]")));
                }
            }
            let mut attr = Attribute::new(def.name.clone(), kind);
            if let Some(w) = def.weight {
                attr = attr.with_weight(w);
            }
            attributes.push(attr);
            ranges.push(def.range);
        }
        let schema = Schema::new(attributes).map_err(|e| CliError::Data(format!("schema: {e}")))?;
        Ok(Self { schema, ranges })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read_text(path)?)
    }

    /// Parses one raw cell of attribute `j`.
    pub fn parse_cell(&self, j: usize, raw: &str) -> balancelab::Result<Value> {
        let value = self.schema.attributes()[j].parse_value(raw)?;
        if let Some([lo, hi]) = self.ranges[j] {
            let x = value.as_f64();
            if !(lo..=hi).contains(&x) {
                return Err(balancelab::Error::Data(format!("{x} is outside the declared range [{lo}, {hi}]")));
            }
        }
        Ok(value)
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn row_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(source: &str, e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Data(format!("{source}: row {}: {e}", p.line())),
        None => CliError::Data(format!("{source}: {e}")),
    }
}

/// Parses cohort CSV text against `spec`.
pub fn parse_cohort(text: &str, spec: &SchemaSpec, source: &str) -> Result<Cohort, CliError> {
    let mut reader = csv_reader(text);
    let headers = reader.headers().map_err(|e| csv_error(source, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("id").ok_or_else(|| CliError::Data(format!("{source}: missing column id")))?;
    let mut cols = Vec::with_capacity(spec.schema.len());
    for attr in spec.schema.attributes() {
        match column(&attr.name) {
            Some(c) => cols.push(c),
            None => return Err(CliError::Data(format!("{source}: missing column {}", attr.name))),
        }
    }
    for h in headers.iter() {
        if h != "id" && spec.schema.index_of(h).is_none() {
            return Err(CliError::Data(format!("{source}: column {h} is not in the schema")));
        }
    }

    let mut seen = HashSet::new();
    let mut units = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = row_of(&record);
        let id = &record[id_col];
        if id.is_empty() {
            return Err(CliError::Data(format!("{source}: row {row}, column id: empty id")));
        }
        if !seen.insert(id.to_string()) {
            return Err(CliError::Data(format!("{source}: row {row}, column id: duplicate id {id:?}")));
        }
        let values = cols
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                spec.parse_cell(j, &record[c]).map_err(|e| {
                    CliError::Data(format!(
                        "{source}: row {row}, column {}: {}",
                        spec.schema.attributes()[j].name,
                        inner_message(&e)
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        units.push(Unit::new(id, values));
    }
    Ok(Cohort::new(spec.schema.clone(), units)?)
}

pub fn load_cohort(path: &Path, spec: &SchemaSpec) -> Result<Cohort, CliError> {
    parse_cohort(&read_text(path)?, spec, &path.display().to_string())
}

fn inner_message(e: &balancelab::Error) -> &str {
    match e {
        balancelab::Error::Data(m) | balancelab::Error::Domain(m) => m,
    }
}

/// Reads an `id,arm` CSV file (extra columns are ignored).
pub fn parse_assignment(text: &str, cohort: &Cohort, source: &str) -> Result<Allocation, CliError> {
    let mut reader = csv_reader(text);
    let headers = reader.headers().map_err(|e| csv_error(source, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{source}: missing column {name}")))
    };
    let (id_col, arm_col) = (find("id")?, find("arm")?);
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = row_of(&record);
        let arm: Arm = record[arm_col].parse().map_err(|e: balancelab::Error| {
            CliError::Data(format!("{source}: row {row}, column arm: {}", inner_message(&e)))
        })?;
        pairs.push((record[id_col].to_string(), arm));
    }
    Ok(Allocation::from_assignments(
        cohort,
        pairs.iter().map(|(id, arm)| (id.as_str(), *arm)),
    )?)
}

pub fn load_assignment(path: &Path, cohort: &Cohort) -> Result<Allocation, CliError> {
    parse_assignment(&read_text(path)?, cohort, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
        [[attribute]]
        name = "gender"
        kind = "categorical"
        levels = ["1", "2"]

        [[attribute]]
        name = "height"
        kind = "numeric"
        unit = "cm"

        [[attribute]]
        name = "academic"
        kind = "binary"
    "#;

    fn spec() -> SchemaSpec {
        SchemaSpec::parse(SCHEMA).unwrap()
    }

    #[test]
    fn matched_table_file() {
        let root = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let spec = SchemaSpec::load(&root.join("matched.schema.toml")).unwrap();
        let cohort = load_cohort(&root.join("matched.csv"), &spec).unwrap();
        assert_eq!(cohort.len(), 4);
        assert_eq!(cohort.schema().len(), 6);
        assert_eq!(cohort.units()[2].values[1], Value::Numeric(193.0));
    }

    #[test]
    fn header_only_file_is_an_empty_cohort() {
        let cohort = parse_cohort("id,gender,height,academic\n", &spec(), "c.csv").unwrap();
        assert!(cohort.is_empty());
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let text = "id,gender,height,academic\nT1,1,17O,1\n";
        let err = parse_cohort(text, &spec(), "c.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column height"), "{msg}");
    }

    #[test]
    fn duplicate_and_missing_columns_are_data_errors() {
        let dup = "id,gender,height,academic\na,1,170,1\na,2,180,0\n";
        assert!(parse_cohort(dup, &spec(), "c").unwrap_err().to_string().contains("row 3"));
        let missing = "id,gender,academic\na,1,1\n";
        assert!(parse_cohort(missing, &spec(), "c").unwrap_err().to_string().contains("height"));
        let ragged = "id,gender,height,academic\na,1,170\n";
        assert!(matches!(parse_cohort(ragged, &spec(), "c"), Err(CliError::Data(_))));
    }

    #[test]
    fn column_order_is_free() {
        let text = "height,id,academic,gender\n170,a,yes,2\n";
        let cohort = parse_cohort(text, &spec(), "c").unwrap();
        assert_eq!(cohort.units()[0].values[0], Value::Level(1));
        assert_eq!(cohort.units()[0].values[1], Value::Numeric(170.0));
    }

    #[test]
    fn schema_errors() {
        for bad in [
            "[[attribute]]\nname = \"x\"\nkind = \"categorical\"\n",
            "[[attribute]]\nname = \"x\"\nkind = \"weird\"\n",
            "[[attribute]]\nname = \"x\"\nkind = \"binary\"\nlevels = [\"a\"]\n",
            "[[attribute]]\nname = \"x\"\nkind = \"binary\"\nbogus = 1\n",
            "[[attribute]]\nname = \"id\"\nkind = \"binary\"\n",
        ] {
            assert!(matches!(SchemaSpec::parse(bad), Err(CliError::Data(_))), "{bad}");
        }
    }

    #[test]
    fn declared_range_is_enforced() {
        let spec = SchemaSpec::parse("[[attribute]]\nname = \"h\"\nkind = \"numeric\"\nrange = [100, 250]\n").unwrap();
        assert!(parse_cohort("id,h\na,170\n", &spec, "c").is_ok());
        let msg = parse_cohort("id,h\na,170\nb,17\n", &spec, "c").unwrap_err().to_string();
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn assignment_round_trip() {
        let cohort = parse_cohort("id,gender,height,academic\na,1,170,1\nb,2,180,0\n", &spec(), "c").unwrap();
        let alloc = parse_assignment("id,arm\nb,T\na,C\n", &cohort, "a").unwrap();
        assert_eq!(alloc.arms(), &[Arm::Control, Arm::Treatment]);
        assert!(matches!(
            parse_assignment("id,arm\na,T\n", &cohort, "a"),
            Err(CliError::Domain(_))
        ));
        assert!(matches!(
            parse_assignment("id,arm\na,X\nb,T\n", &cohort, "a"),
            Err(CliError::Data(_))
        ));
    }
}

//! CSV ingestion against a declared schema.
//!
//! A [`SchemaSpec`] names the raw columns, which of them carry severity, area and
//! lighting codes, and a list of [`TransformRule`]s that derive model covariates.
//! Only derived columns become covariates; use the `identity` transform to pass a
//! raw numeric column through unchanged.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    consolidate_severity, AreaType, CovariateKind, CrashRecord, Dataset, KabcoSeverity, Lighting, Schema,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceColumn {
    pub name: String,
    pub kind: SourceKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    NaturalLog,
    Scale {
        factor: f64,
    },
    /// 1 when the trimmed cell equals any of `values`.
    Indicator {
        values: Vec<String>,
    },
    /// 1 when `lo <= value <= hi`.
    Band {
        lo: f64,
        hi: f64,
    },
    Identity {
        #[serde(rename = "as")]
        as_kind: CovariateKind,
    },
}

impl Transform {
    pub fn output_kind(&self) -> CovariateKind {
        match self {
            Transform::NaturalLog | Transform::Scale { .. } => CovariateKind::Continuous,
            Transform::Indicator { .. } | Transform::Band { .. } => CovariateKind::Indicator,
            Transform::Identity { as_kind } => *as_kind,
        }
    }

    fn needs_numeric(&self) -> bool {
        !matches!(self, Transform::Indicator { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRule {
    pub output: String,
    pub source: String,
    #[serde(flatten)]
    pub transform: Transform,
}

impl TransformRule {
    pub fn new(output: impl Into<String>, source: impl Into<String>, transform: Transform) -> Self {
        TransformRule {
            output: output.into(),
            source: source.into(),
            transform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub columns: Vec<SourceColumn>,
    pub severity_column: String,
    pub area_column: String,
    pub lighting_column: String,
    #[serde(default)]
    pub derive: Vec<TransformRule>,
    /// Extra raw codes mapped onto KABCO letters, e.g. `"1": "K"`.
    #[serde(default)]
    pub severity_codes: BTreeMap<String, KabcoSeverity>,
    #[serde(default)]
    pub area_codes: BTreeMap<String, AreaType>,
    #[serde(default)]
    pub lighting_codes: BTreeMap<String, Lighting>,
}

/// Column names written by [`write_csv`].
pub const SEVERITY_COLUMN: &str = "severity";
pub const AREA_COLUMN: &str = "area";
pub const LIGHTING_COLUMN: &str = "lighting";

impl SchemaSpec {
    /// Schema that reads back what [`write_csv`] emits for a dataset with `schema`.
    pub fn for_dataset(schema: &Schema) -> SchemaSpec {
        let mut columns = vec![
            SourceColumn {
                name: SEVERITY_COLUMN.into(),
                kind: SourceKind::Categorical,
            },
            SourceColumn {
                name: AREA_COLUMN.into(),
                kind: SourceKind::Categorical,
            },
            SourceColumn {
                name: LIGHTING_COLUMN.into(),
                kind: SourceKind::Categorical,
            },
        ];
        let mut derive = Vec::new();
        for (name, kind) in schema.iter() {
            columns.push(SourceColumn {
                name: name.to_string(),
                kind: SourceKind::Numeric,
            });
            derive.push(TransformRule::new(name, name, Transform::Identity { as_kind: kind }));
        }
        SchemaSpec {
            columns,
            severity_column: SEVERITY_COLUMN.into(),
            area_column: AREA_COLUMN.into(),
            lighting_column: LIGHTING_COLUMN.into(),
            derive,
            severity_codes: BTreeMap::new(),
            area_codes: BTreeMap::new(),
            lighting_codes: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind_of = |name: &str| self.columns.iter().find(|c| c.name == name).map(|c| c.kind);
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate source column {:?}", c.name)));
            }
        }
        for col in [&self.severity_column, &self.area_column, &self.lighting_column] {
            if kind_of(col).is_none() {
                return Err(Error::Schema(format!("column {col:?} is not declared")));
            }
        }
        for (i, rule) in self.derive.iter().enumerate() {
            if self.derive[..i].iter().any(|o| o.output == rule.output) {
                return Err(Error::Schema(format!("duplicate derived covariate {:?}", rule.output)));
            }
            match kind_of(&rule.source) {
                None => {
                    return Err(Error::Schema(format!(
                        "covariate {:?} derives from undeclared column {:?}",
                        rule.output, rule.source
                    )))
                }
                Some(SourceKind::Categorical) if rule.transform.needs_numeric() => {
                    return Err(Error::Schema(format!(
                        "covariate {:?} needs a numeric source but {:?} is categorical",
                        rule.output, rule.source
                    )))
                }
                _ => {}
            }
            match &rule.transform {
                Transform::Band { lo, hi } if !(lo < hi) => {
                    return Err(Error::Schema(format!("band for {:?} needs lo < hi", rule.output)))
                }
                Transform::Scale { factor } if !factor.is_finite() => {
                    return Err(Error::Schema(format!(
                        "scale factor for {:?} is not finite",
                        rule.output
                    )))
                }
                Transform::Indicator { values } if values.is_empty() => {
                    return Err(Error::Schema(format!("indicator {:?} lists no values", rule.output)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Covariate schema produced by the derivation rules, in rule order.
    pub fn covariate_schema(&self) -> Result<Schema> {
        Schema::new(
            self.derive
                .iter()
                .map(|r| (r.output.clone(), r.transform.output_kind()))
                .collect(),
        )
    }

    fn severity(&self, raw: &str) -> Result<KabcoSeverity> {
        match self.severity_codes.get(raw) {
            Some(&code) => Ok(code),
            None => raw.parse(),
        }
    }

    fn area(&self, raw: &str) -> Result<AreaType> {
        match self.area_codes.get(raw) {
            Some(&a) => Ok(a),
            None => raw.parse(),
        }
    }

    fn lighting(&self, raw: &str) -> Result<Lighting> {
        match self.lighting_codes.get(raw) {
            Some(&l) => Ok(l),
            None => raw.parse(),
        }
    }
}

fn parse_number(raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        what: "number",
        token: raw.to_string(),
    })?;
    Ok(v)
}

/// Applies one derivation to a raw cell.
pub fn apply_transform(rule: &TransformRule, raw: &str) -> Result<f64> {
    if let Transform::Indicator { values } = &rule.transform {
        let cell = raw.trim();
        return Ok(if values.iter().any(|v| v == cell) { 1.0 } else { 0.0 });
    }
    apply_numeric(&rule.transform, parse_number(raw)?).map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("{}: {m}", rule.output)),
        other => other,
    })
}

/// Numeric transforms on an already-parsed value.
pub fn apply_numeric(transform: &Transform, value: f64) -> Result<f64> {
    match transform {
        Transform::NaturalLog => {
            if value > 0.0 {
                Ok(value.ln())
            } else {
                Err(Error::Domain(format!("natural log of non-positive value {value}")))
            }
        }
        Transform::Scale { factor } => Ok(value * factor),
        Transform::Band { lo, hi } => Ok(if *lo <= value && value <= *hi { 1.0 } else { 0.0 }),
        Transform::Identity { .. } => Ok(value),
        Transform::Indicator { values } => {
            let hit = values.iter().any(|v| v.trim().parse::<f64>().ok() == Some(value));
            Ok(if hit { 1.0 } else { 0.0 })
        }
    }
}

/// A data row that was not turned into a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDataset {
    pub dataset: Dataset,
    /// Data rows read, including skipped ones.
    pub rows_read: usize,
    /// Rows with an unparseable cell or a failed transform.
    pub invalid_rows: Vec<SkippedRow>,
    /// Rows dropped because the severity, area or lighting code was unknown.
    pub unknown_code_rows: Vec<SkippedRow>,
}

impl ParsedDataset {
    pub fn skipped(&self) -> usize {
        self.invalid_rows.len() + self.unknown_code_rows.len()
    }
}

pub fn parse_dataset(path: &Path, spec: &SchemaSpec, strict: bool) -> Result<ParsedDataset> {
    let file = std::fs::File::open(path)?;
    parse_reader(file, spec, strict)
}

/// Same as [`parse_dataset`] over any reader.
pub fn parse_reader(input: impl Read, spec: &SchemaSpec, strict: bool) -> Result<ParsedDataset> {
    spec.validate()?;
    let schema = spec.covariate_schema()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let position = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("input has no column {name:?}")))
    };
    for c in &spec.columns {
        position(&c.name)?;
    }
    let severity_at = position(&spec.severity_column)?;
    let area_at = position(&spec.area_column)?;
    let lighting_at = position(&spec.lighting_column)?;
    let rule_at: Vec<usize> = spec.derive.iter().map(|r| position(&r.source)).collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut invalid_rows = Vec::new();
    let mut unknown_code_rows = Vec::new();
    let mut rows_read = 0;
    for row in reader.records() {
        let row = row?;
        rows_read += 1;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("").trim();

        let codes = (|| -> Result<_> {
            let severity = consolidate_severity(spec.severity(cell(severity_at))?);
            Ok((severity, spec.area(cell(area_at))?, spec.lighting(cell(lighting_at))?))
        })();
        let (severity, area, lighting) = match codes {
            Ok(c) => c,
            Err(e) => {
                if strict {
                    return Err(Error::Row {
                        line,
                        message: e.to_string(),
                    });
                }
                unknown_code_rows.push(SkippedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let values: Result<Vec<f64>> = spec
            .derive
            .iter()
            .zip(&rule_at)
            .map(|(rule, &at)| {
                let v = apply_transform(rule, cell(at))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Domain(format!("{} is not finite", rule.output)))
                }
            })
            .collect();
        match values {
            Ok(values) => records.push(CrashRecord {
                severity,
                area,
                lighting,
                values,
            }),
            Err(e) => {
                if strict {
                    return Err(Error::Row {
                        line,
                        message: e.to_string(),
                    });
                }
                invalid_rows.push(SkippedRow {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    let skipped = invalid_rows.len() + unknown_code_rows.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} of {rows_read} rows");
    }
    Ok(ParsedDataset {
        dataset: Dataset::new(schema, records)?,
        rows_read,
        invalid_rows,
        unknown_code_rows,
    })
}

/// Writes `severity,area,lighting,<covariates...>`; read back with
/// [`SchemaSpec::for_dataset`]. Severity is written as the class's
/// representative KABCO code.
pub fn write_csv(d: &Dataset, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![SEVERITY_COLUMN.to_string(), AREA_COLUMN.into(), LIGHTING_COLUMN.into()];
    header.extend(d.schema.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for r in &d.records {
        let mut row = vec![
            r.severity.representative_code().to_string(),
            r.area.key().to_string(),
            r.lighting.key().to_string(),
        ];
        row.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub column: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Columns with a single distinct value (a warning, not a violation).
    pub zero_variance: Vec<String>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (col, (name, kind)) in d.schema.iter().enumerate() {
        let mut first: Option<f64> = None;
        let mut varies = false;
        for (row, r) in d.records.iter().enumerate() {
            let v = r.values[col];
            if !v.is_finite() {
                report.violations.push(Violation {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value {v}"),
                });
                continue;
            }
            if kind == CovariateKind::Indicator && v != 0.0 && v != 1.0 {
                report.violations.push(Violation {
                    row,
                    column: name.to_string(),
                    message: format!("indicator value {v} outside {{0,1}}"),
                });
            }
            match first {
                None => first = Some(v),
                Some(f) if f != v => varies = true,
                _ => {}
            }
        }
        if !d.is_empty() && !varies {
            report.zero_variance.push(name.to_string());
        }
    }
    report
}

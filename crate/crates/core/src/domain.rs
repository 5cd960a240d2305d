//! Severity scales, segment keys, crash records and dataset partitioning.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Police-reported KABCO injury code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KabcoSeverity {
    /// Fatal.
    K,
    /// Disabling injury.
    A,
    /// Evident injury.
    B,
    /// Possible injury.
    C,
    /// No injury.
    O,
}

impl FromStr for KabcoSeverity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "K" | "k" => Ok(KabcoSeverity::K),
            "A" | "a" => Ok(KabcoSeverity::A),
            "B" | "b" => Ok(KabcoSeverity::B),
            "C" | "c" => Ok(KabcoSeverity::C),
            "O" | "o" => Ok(KabcoSeverity::O),
            other => Err(Error::Parse {
                what: "KABCO severity",
                token: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for KabcoSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            KabcoSeverity::K => "K",
            KabcoSeverity::A => "A",
            KabcoSeverity::B => "B",
            KabcoSeverity::C => "C",
            KabcoSeverity::O => "O",
        };
        f.write_str(c)
    }
}

/// Three-level consolidated severity: the choice set of every model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityClass {
    Major,
    Minor,
    PossibleNo,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 3] = [SeverityClass::Major, SeverityClass::Minor, SeverityClass::PossibleNo];

    pub fn index(self) -> usize {
        match self {
            SeverityClass::Major => 0,
            SeverityClass::Minor => 1,
            SeverityClass::PossibleNo => 2,
        }
    }

    /// Short identifier used in coefficient ids and file names.
    pub fn key(self) -> &'static str {
        match self {
            SeverityClass::Major => "major",
            SeverityClass::Minor => "minor",
            SeverityClass::PossibleNo => "possible_no",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SeverityClass::Major => "major injury",
            SeverityClass::Minor => "minor injury",
            SeverityClass::PossibleNo => "possible/no injury",
        }
    }

    /// KABCO code written back out for this class (K, B, O).
    pub fn representative_code(self) -> KabcoSeverity {
        match self {
            SeverityClass::Major => KabcoSeverity::K,
            SeverityClass::Minor => KabcoSeverity::B,
            SeverityClass::PossibleNo => KabcoSeverity::O,
        }
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// K, A → Major; B → Minor; C, O → PossibleNo.
pub fn consolidate_severity(code: KabcoSeverity) -> SeverityClass {
    match code {
        KabcoSeverity::K | KabcoSeverity::A => SeverityClass::Major,
        KabcoSeverity::B => SeverityClass::Minor,
        KabcoSeverity::C | KabcoSeverity::O => SeverityClass::PossibleNo,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaType {
    Rural,
    Urban,
}

impl AreaType {
    pub const ALL: [AreaType; 2] = [AreaType::Rural, AreaType::Urban];

    pub fn key(self) -> &'static str {
        match self {
            AreaType::Rural => "rural",
            AreaType::Urban => "urban",
        }
    }
}

impl FromStr for AreaType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rural" => Ok(AreaType::Rural),
            "urban" => Ok(AreaType::Urban),
            _ => Err(Error::Parse {
                what: "area type",
                token: s.to_string(),
            }),
        }
    }
}

/// Raw lighting code as recorded; dawn and dusk never form a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lighting {
    Daylight,
    Dark,
    DarkLighted,
    Dawn,
    Dusk,
}

impl Lighting {
    pub fn key(self) -> &'static str {
        match self {
            Lighting::Daylight => "daylight",
            Lighting::Dark => "dark",
            Lighting::DarkLighted => "dark_lighted",
            Lighting::Dawn => "dawn",
            Lighting::Dusk => "dusk",
        }
    }
}

impl FromStr for Lighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "daylight" => Ok(Lighting::Daylight),
            "dark" => Ok(Lighting::Dark),
            "darklighted" => Ok(Lighting::DarkLighted),
            "dawn" => Ok(Lighting::Dawn),
            "dusk" => Ok(Lighting::Dusk),
            _ => Err(Error::Parse {
                what: "lighting condition",
                token: s.to_string(),
            }),
        }
    }
}

/// Lighting conditions that define segments, in report order.
pub const SEGMENT_LIGHTING: [Lighting; 3] = [Lighting::Daylight, Lighting::Dark, Lighting::DarkLighted];

/// One of the six area × lighting strata.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey {
    pub area: AreaType,
    pub lighting: Lighting,
}

impl SegmentKey {
    pub fn new(area: AreaType, lighting: Lighting) -> Result<Self> {
        match classify_segment(area, lighting) {
            SegmentClass::Segment(key) => Ok(key),
            SegmentClass::Excluded => Err(Error::Argument(format!(
                "{} lighting does not form a segment",
                lighting.key()
            ))),
        }
    }

    /// All six keys in report order (rural first, daylight/dark/dark-lighted).
    pub fn all() -> Vec<SegmentKey> {
        AreaType::ALL
            .iter()
            .flat_map(|&area| {
                SEGMENT_LIGHTING
                    .iter()
                    .map(move |&lighting| SegmentKey { area, lighting })
            })
            .collect()
    }

    /// File-name friendly label such as `rural-dark_lighted`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.area.key(), self.lighting.key())
    }

    pub fn title(&self) -> String {
        let area = match self.area {
            AreaType::Rural => "Rural",
            AreaType::Urban => "Urban",
        };
        let lighting = match self.lighting {
            Lighting::Daylight => "daylight",
            Lighting::Dark => "dark",
            Lighting::DarkLighted => "dark-lighted",
            Lighting::Dawn => "dawn",
            Lighting::Dusk => "dusk",
        };
        format!("{area} {lighting}")
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SegmentKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (area, lighting) = s.split_once(['-', ' ', '/']).ok_or_else(|| Error::Parse {
            what: "segment key",
            token: s.to_string(),
        })?;
        SegmentKey::new(area.parse()?, lighting.parse()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentClass {
    Segment(SegmentKey),
    Excluded,
}

pub fn classify_segment(area: AreaType, lighting: Lighting) -> SegmentClass {
    match lighting {
        Lighting::Dawn | Lighting::Dusk => SegmentClass::Excluded,
        _ => SegmentClass::Segment(SegmentKey { area, lighting }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Indicator,
    Continuous,
}

/// Ordered covariate names and kinds shared by every record of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<(String, CovariateKind)>,
}

impl Schema {
    pub fn new(columns: Vec<(String, CovariateKind)>) -> Result<Self> {
        for (i, (name, _)) in columns.iter().enumerate() {
            if columns[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Schema(format!("duplicate covariate name {name:?}")));
            }
        }
        Ok(Schema { columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    pub fn kind(&self, index: usize) -> CovariateKind {
        self.columns[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.columns[index].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, CovariateKind)> {
        self.columns.iter().map(|(n, k)| (n.as_str(), *k))
    }
}

/// One crash: consolidated severity, stratum codes and covariate values aligned
/// with the owning dataset's [`Schema`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub severity: SeverityClass,
    pub area: AreaType,
    pub lighting: Lighting,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<CrashRecord>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<CrashRecord>) -> Result<Self> {
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.values.len() != schema.len()) {
            return Err(Error::Schema(format!(
                "record {i} has {} values, schema has {}",
                r.values.len(),
                schema.len()
            )));
        }
        Ok(Dataset { schema, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|c| self.records[row].values[c])
    }

    /// Records whose severity is in `classes`, in original order.
    pub fn filter_classes(&self, classes: &[SeverityClass]) -> Dataset {
        self.filter(|r| classes.contains(&r.severity))
    }

    pub fn filter(&self, keep: impl Fn(&CrashRecord) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Count of records per severity class, indexed by [`SeverityClass::index`].
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.records {
            counts[r.severity.index()] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition {
    pub segments: BTreeMap<SegmentKey, Dataset>,
    pub excluded: usize,
}

impl Partition {
    pub fn total(&self) -> usize {
        self.segments.values().map(Dataset::len).sum::<usize>() + self.excluded
    }

    /// Union of the non-excluded records, segment by segment.
    pub fn pooled(&self, keep: impl Fn(&SegmentKey) -> bool) -> Option<Dataset> {
        let mut iter = self.segments.iter().filter(|(k, _)| keep(k));
        let (_, first) = iter.next()?;
        let mut pooled = first.clone();
        for (_, d) in iter {
            pooled.records.extend(d.records.iter().cloned());
        }
        Some(pooled)
    }
}

/// Splits records into area × lighting segments; dawn/dusk records are counted
/// as excluded. Segment record order follows input order.
pub fn partition_dataset(d: &Dataset) -> Partition {
    let mut partition = Partition::default();
    for r in &d.records {
        match classify_segment(r.area, r.lighting) {
            SegmentClass::Segment(key) => partition
                .segments
                .entry(key)
                .or_insert_with(|| Dataset {
                    schema: d.schema.clone(),
                    records: Vec::new(),
                })
                .records
                .push(r.clone()),
            SegmentClass::Excluded => partition.excluded += 1,
        }
    }
    partition
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSummary {
    Indicator { percent: f64 },
    Continuous { mean: f64, sd: f64, min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub name: String,
    pub summary: ColumnSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveTable {
    pub n: usize,
    /// Percent of records per severity class, indexed by [`SeverityClass::index`].
    pub severity_percent: [f64; 3],
    pub rows: Vec<DescriptiveRow>,
}

/// Indicator shares (percent of ones) and continuous moments; the standard
/// deviation is the sample (n − 1) version, 0 for a single record.
pub fn descriptive_stats(d: &Dataset) -> Result<DescriptiveTable> {
    if d.is_empty() {
        return Err(Error::Domain("descriptive statistics of an empty dataset".into()));
    }
    let n = d.len();
    let nf = n as f64;
    let counts = d.class_counts();
    let severity_percent = counts.map(|c| 100.0 * c as f64 / nf);

    let rows = d
        .schema
        .iter()
        .enumerate()
        .map(|(col, (name, kind))| {
            let column = d.records.iter().map(|r| r.values[col]);
            let summary = match kind {
                CovariateKind::Indicator => {
                    let ones = column.filter(|&v| v == 1.0).count();
                    ColumnSummary::Indicator {
                        percent: 100.0 * ones as f64 / nf,
                    }
                }
                CovariateKind::Continuous => {
                    let values: Vec<f64> = column.collect();
                    let mean = crate::sum::pairwise_sum(&values) / nf;
                    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
                    let sd = if n > 1 {
                        (crate::sum::pairwise_sum(&squares) / (nf - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    ColumnSummary::Continuous {
                        mean,
                        sd,
                        min: values.iter().copied().fold(f64::INFINITY, f64::min),
                        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                }
            };
            DescriptiveRow {
                name: name.to_string(),
                summary,
            }
        })
        .collect();
    Ok(DescriptiveTable {
        n,
        severity_percent,
        rows,
    })
}

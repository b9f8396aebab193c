//! CSV and JSON readers and writers for score files, decision files, group
//! tables and schemas.
//!
//! Score files are long format, one row per text and detector:
//!
//! ```text
//! text_id,detector_id,score,true_label,generator_id,<attr1>,...,<attrK>
//! ```
//!
//! Numbers are parsed and printed with Rust's locale-independent float
//! routines; floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, DecisionRecord, GroupRow, GroupTable, Label, SampleRecord};

const SCORE_COLUMNS: [&str; 5] = ["text_id", "detector_id", "score", "true_label", "generator_id"];
const DECISION_COLUMNS: [&str; 5] = [
    "text_id",
    "detector_id",
    "true_label",
    "predicted_label",
    "correct",
];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = open(path)?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_schema(path: &Path) -> Result<AttributeSchema> {
    read_json(path)
}

/// Maps header names to column indices, checking fixed and attribute columns.
fn header_layout(
    headers: &csv::StringRecord,
    fixed: &[&str],
    schema: &AttributeSchema,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let fixed_idx = fixed
        .iter()
        .map(|c| {
            find(c).ok_or_else(|| Error::Schema {
                line: 1,
                message: format!("missing column `{c}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let attr_idx = schema
        .names()
        .map(|name| {
            find(name).ok_or_else(|| Error::Schema {
                line: 1,
                message: format!("missing attribute column `{name}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = headers
        .iter()
        .find(|h| !fixed.contains(h) && schema.attribute(h).is_none())
    {
        return Err(Error::Schema {
            line: 1,
            message: format!("column `{extra}` is not a schema attribute"),
        });
    }
    Ok((fixed_idx, attr_idx))
}

fn read_attributes(
    row: &csv::StringRecord,
    line: usize,
    attr_idx: &[usize],
    schema: &AttributeSchema,
) -> Result<BTreeMap<String, String>> {
    schema
        .attributes()
        .iter()
        .zip(attr_idx)
        .map(|(attr, &i)| {
            let value = row.get(i).unwrap_or("");
            if attr.level_index(value).is_none() {
                return Err(Error::Schema {
                    line,
                    message: format!("attribute `{}` has undeclared level `{value}`", attr.name),
                });
            }
            Ok((attr.name.clone(), value.to_string()))
        })
        .collect()
}

fn line_of(row: &csv::StringRecord) -> usize {
    row.position().map_or(0, |p| p.line() as usize)
}

fn parse_label(value: &str, line: usize, column: &str) -> Result<Label> {
    value.parse().map_err(|message| Error::Parse {
        line,
        column: column.to_string(),
        message,
    })
}

/// Reads a score file. Row order is preserved.
pub fn read_scores(path: &Path, schema: &AttributeSchema) -> Result<Vec<SampleRecord>> {
    read_scores_from(open(path)?, schema)
}

pub fn read_scores_from<R: Read>(reader: R, schema: &AttributeSchema) -> Result<Vec<SampleRecord>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let (fixed, attr_idx) = header_layout(&headers, &SCORE_COLUMNS, schema)?;

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = line_of(&row);
        let field = |i: usize| row.get(fixed[i]).unwrap_or("");
        let score: f64 = field(2).trim().parse().map_err(|e| Error::Parse {
            line,
            column: "score".into(),
            message: format!("`{}`: {e}", field(2)),
        })?;
        if !score.is_finite() {
            return Err(Error::Parse {
                line,
                column: "score".into(),
                message: format!("score `{}` is not finite", field(2)),
            });
        }
        let true_label = parse_label(field(3), line, "true_label")?;
        let generator_id = match field(4) {
            "" if true_label == Label::Ai => {
                return Err(Error::Schema {
                    line,
                    message: "AI row requires a generator_id".into(),
                })
            }
            "" => None,
            g => Some(g.to_string()),
        };
        records.push(SampleRecord {
            text_id: field(0).to_string(),
            detector_id: field(1).to_string(),
            score,
            true_label,
            generator_id,
            attributes: read_attributes(&row, line, &attr_idx, schema)?,
        });
    }
    Ok(records)
}

pub fn write_scores(records: &[SampleRecord], schema: &AttributeSchema, path: &Path) -> Result<()> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<&str> = SCORE_COLUMNS.to_vec();
    header.extend(schema.names());
    csv.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.text_id.clone(),
            r.detector_id.clone(),
            r.score.to_string(),
            r.true_label.to_string(),
            r.generator_id.clone().unwrap_or_default(),
        ];
        row.extend(schema.names().map(|n| r.attributes.get(n).cloned().unwrap_or_default()));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| Error::io(path, e))
}

pub fn write_decisions(
    decisions: &[DecisionRecord],
    schema: &AttributeSchema,
    path: &Path,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<&str> = DECISION_COLUMNS.to_vec();
    header.extend(schema.names());
    csv.write_record(&header)?;
    for d in decisions {
        let mut row = vec![
            d.text_id.clone(),
            d.detector_id.clone(),
            d.true_label.to_string(),
            d.predicted_label.to_string(),
            d.correct.to_string(),
        ];
        row.extend(schema.names().map(|n| d.attributes.get(n).cloned().unwrap_or_default()));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| Error::io(path, e))
}

pub fn read_decisions(path: &Path, schema: &AttributeSchema) -> Result<Vec<DecisionRecord>> {
    read_decisions_from(open(path)?, schema)
}

pub fn read_decisions_from<R: Read>(
    reader: R,
    schema: &AttributeSchema,
) -> Result<Vec<DecisionRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let (fixed, attr_idx) = header_layout(&headers, &DECISION_COLUMNS, schema)?;
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = line_of(&row);
        let field = |i: usize| row.get(fixed[i]).unwrap_or("");
        let true_label = parse_label(field(2), line, "true_label")?;
        let predicted_label = parse_label(field(3), line, "predicted_label")?;
        let correct: bool = field(4).parse().map_err(|_| Error::Parse {
            line,
            column: "correct".into(),
            message: format!("expected true or false, got `{}`", field(4)),
        })?;
        if correct != (true_label == predicted_label) {
            return Err(Error::Schema {
                line,
                message: "`correct` disagrees with the labels".into(),
            });
        }
        out.push(DecisionRecord {
            text_id: field(0).to_string(),
            detector_id: field(1).to_string(),
            true_label,
            predicted_label,
            correct,
            attributes: read_attributes(&row, line, &attr_idx, schema)?,
        });
    }
    Ok(out)
}

/// Writes factor columns followed by `weight` and `accuracy`.
pub fn write_group_table(table: &GroupTable, path: &Path) -> Result<()> {
    let file = create(path)?;
    write_group_table_to(table, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_group_table_to<W: Write>(table: &GroupTable, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.factors.iter().map(String::as_str).collect();
    header.extend(["weight", "accuracy"]);
    csv.write_record(&header)?;
    for row in &table.rows {
        let mut fields = row.levels.clone();
        fields.push(row.weight.to_string());
        fields.push(row.accuracy.to_string());
        csv.write_record(&fields)?;
    }
    csv.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn read_group_table(path: &Path, schema: &AttributeSchema) -> Result<GroupTable> {
    read_group_table_from(open(path)?, schema)
}

pub fn read_group_table_from<R: Read>(reader: R, schema: &AttributeSchema) -> Result<GroupTable> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let n = headers.len();
    if n < 2 || &headers[n - 2] != "weight" || &headers[n - 1] != "accuracy" {
        return Err(Error::Schema {
            line: 1,
            message: "group table must end with `weight,accuracy`".into(),
        });
    }
    let factors: Vec<String> = headers.iter().take(n - 2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = line_of(&row);
        let weight = row[n - 2].parse::<u64>().map_err(|e| Error::Parse {
            line,
            column: "weight".into(),
            message: e.to_string(),
        })?;
        let accuracy = row[n - 1].parse::<f64>().map_err(|e| Error::Parse {
            line,
            column: "accuracy".into(),
            message: e.to_string(),
        })?;
        rows.push(GroupRow {
            levels: row.iter().take(n - 2).map(str::to_string).collect(),
            weight,
            accuracy,
        });
    }
    GroupTable::new(factors, rows, schema)
}

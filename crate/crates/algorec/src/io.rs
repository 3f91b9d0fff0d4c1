//! Text formats: knowledge-base TSV, config-space JSON, metafeature TSV and
//! raw CSV/TSV tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use algorec_core::kb::{ConfigSpace, Constraint, ExperimentResult, KnowledgeBase, ParamGrid, ParamValue};
use algorec_core::metafeatures::{Column, MetafeatureVector, Table, METAFEATURE_NAMES};
use serde_json::{Map, Value};

use crate::{Error, Result};

pub const KB_HEADER: [&str; 5] = ["dataset_id", "algorithm", "params_json", "train_score", "holdout_score"];

const MISSING: [&str; 5] = ["", "NA", "nan", "NaN", "?"];

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn tsv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().delimiter(b'\t').quoting(false).flexible(true).from_reader(reader)
}

fn tsv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').quote_style(csv::QuoteStyle::Never).from_writer(writer)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn parse_score(line: usize, name: &str, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(line, format!("{name} `{field}` is not a number")))
}

// ---- config space ----

/// Parses the space JSON: an object mapping each algorithm to a list of
/// `{param, values}` grids, plus an optional `constraints` list.
pub fn parse_space(text: &str) -> Result<ConfigSpace> {
    let root: Map<String, Value> = serde_json::from_str(text)?;
    let mut space = ConfigSpace::new();
    for (key, value) in root {
        if key == "constraints" {
            space.constraints = serde_json::from_value::<Vec<Constraint>>(value)?;
            continue;
        }
        let grids: Vec<ParamGrid> = serde_json::from_value(value)?;
        space.insert_algorithm(&key, grids)?;
    }
    for c in &space.constraints {
        if space.grid_product(&c.algorithm).is_none() {
            return Err(algorec_core::Error::Validation(format!("constraint names unknown algorithm `{}`", c.algorithm)).into());
        }
    }
    Ok(space)
}

pub fn space_to_json(space: &ConfigSpace) -> Value {
    let mut root = Map::new();
    for (alg, grids) in &space.entries {
        root.insert(alg.clone(), serde_json::to_value(grids).expect("grids serialize"));
    }
    if !space.constraints.is_empty() {
        root.insert("constraints".into(), serde_json::to_value(&space.constraints).expect("constraints serialize"));
    }
    Value::Object(root)
}

pub fn load_space(path: &Path) -> Result<ConfigSpace> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    parse_space(&text)
}

pub fn save_space(path: &Path, space: &ConfigSpace) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &space_to_json(space))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

// ---- knowledge base ----

/// Reads a knowledge-base TSV. A file without the `holdout_score` column
/// (or a row with an empty one) uses the training score as holdout score
/// and records a warning on the knowledge base.
pub fn read_kb<R: Read>(reader: R, space: ConfigSpace) -> Result<KnowledgeBase> {
    let mut rdr = tsv_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let has_holdout = if header == KB_HEADER {
        true
    } else if header == KB_HEADER[..4] {
        false
    } else {
        return Err(Error::format(1, format!("expected header `{}`", KB_HEADER.join("\\t"))));
    };
    let mut kb = KnowledgeBase::new(space);
    let mut defaulted = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let width = if has_holdout { 5 } else { 4 };
        if record.len() != width && !(has_holdout && record.len() == 4) {
            return Err(Error::format(line, format!("expected {width} fields, found {}", record.len())));
        }
        let params: BTreeMap<String, ParamValue> = serde_json::from_str(&record[2])
            .map_err(|e| Error::format(line, format!("params_json: {e}")))?;
        let config = kb
            .space()
            .canonicalize(&record[1], &params)
            .map_err(|e| Error::format(line, e.to_string()))?;
        let train = parse_score(line, "train_score", &record[3])?;
        let holdout = match record.get(4).map(str::trim) {
            Some(h) if !h.is_empty() => parse_score(line, "holdout_score", h)?,
            _ => {
                defaulted += 1;
                train
            }
        };
        kb.insert(ExperimentResult::new(&record[0], config, train, holdout))
            .map_err(|e| Error::format(line, e.to_string()))?;
    }
    if defaulted > 0 {
        kb.warn(format!("{defaulted} result(s) had no holdout score; used the training score"));
    }
    Ok(kb)
}

pub fn write_kb<W: Write>(writer: W, kb: &KnowledgeBase) -> Result<()> {
    let mut w = tsv_writer(writer);
    w.write_record(KB_HEADER)?;
    for r in kb.results() {
        let params = serde_json::to_string(r.config.params())?;
        w.write_record([
            r.dataset_id.as_str(),
            r.config.algorithm(),
            &params,
            &r.train_score.to_string(),
            &r.holdout_score.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<kb>", e))
}

pub fn load_kb(path: &Path, space: ConfigSpace) -> Result<KnowledgeBase> {
    read_kb(open(path)?, space).map_err(|e| match e {
        Error::Format { line, message } => Error::format(line, format!("{}: {message}", path.display())),
        other => other,
    })
}

pub fn save_kb(path: &Path, kb: &KnowledgeBase) -> Result<()> {
    write_kb(create(path)?, kb)
}

// ---- metafeatures ----

pub fn read_metafeatures<R: Read>(reader: R) -> Result<Vec<MetafeatureVector>> {
    let mut rdr = tsv_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("dataset_id") {
        return Err(Error::format(1, "first column must be `dataset_id`"));
    }
    let mut slots = Vec::with_capacity(header.len() - 1);
    for name in &header[1..] {
        let slot = algorec_core::metafeatures::slot(name)
            .ok_or_else(|| Error::format(1, format!("unknown metafeature `{name}`")))?;
        if slots.contains(&slot) {
            return Err(Error::format(1, format!("metafeature `{name}` listed twice")));
        }
        slots.push(slot);
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != header.len() {
            return Err(Error::format(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let mut values = vec![None; METAFEATURE_NAMES.len()];
        for (field, slot) in record.iter().skip(1).zip(&slots) {
            if !MISSING.contains(&field.trim()) {
                values[*slot] = Some(parse_score(line, METAFEATURE_NAMES[*slot], field)?);
            }
        }
        out.push(MetafeatureVector::new(&record[0], values).map_err(|e| Error::format(line, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_metafeatures<'a, W, I>(writer: W, vectors: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a MetafeatureVector>,
{
    let mut w = tsv_writer(writer);
    w.write_record(std::iter::once("dataset_id").chain(METAFEATURE_NAMES))?;
    for v in vectors {
        let mut row = vec![v.dataset_id.clone()];
        row.extend(v.values().iter().map(|x| x.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<metafeatures>", e))
}

pub fn load_metafeatures(path: &Path) -> Result<Vec<MetafeatureVector>> {
    read_metafeatures(open(path)?)
}

pub fn save_metafeatures(path: &Path, vectors: &[MetafeatureVector]) -> Result<()> {
    write_metafeatures(create(path)?, vectors)
}

// ---- raw tables ----

/// Reads a delimited table with a header row. `target` names the class
/// column. A column is numeric when every non-missing cell parses as a
/// number, categorical otherwise.
pub fn read_table<R: Read>(reader: R, delimiter: u8, target: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let t = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::format(1, format!("target column `{target}` not found")))?;
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in rdr.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::format(line_of(&record), format!("expected {} fields, found {}", header.len(), record.len())));
        }
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.trim().to_string());
        }
    }
    let target_col = std::mem::take(&mut cells[t]);
    if let Some(i) = target_col.iter().position(|v| MISSING.contains(&v.as_str())) {
        return Err(Error::format(i + 2, "missing target value"));
    }
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (i, (name, col)) in header.into_iter().zip(cells).enumerate() {
        if i == t {
            continue;
        }
        let numeric: Option<Vec<Option<f64>>> = col
            .iter()
            .map(|v| if MISSING.contains(&v.as_str()) { Some(None) } else { v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some) })
            .collect();
        names.push(name);
        columns.push(match numeric {
            Some(values) => Column::Numeric(values),
            None => Column::Categorical(col.into_iter().map(|v| (!MISSING.contains(&v.as_str())).then_some(v)).collect()),
        });
    }
    Ok(Table { names, columns, target: target_col })
}

/// Tab-delimited for `.tsv`/`.tab` files, comma otherwise.
pub fn load_table(path: &Path, target: &str) -> Result<Table> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let delimiter = if matches!(ext, "tsv" | "tab") { b'\t' } else { b',' };
    read_table(open(path)?, delimiter, target)
}

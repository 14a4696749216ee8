//! On-disk formats.
//!
//! * Feature CSV: header `id,label,f0,...,f{p-1}`, one sample per row.
//! * Attribute CSV: header `class,a0,...,a{d-1}`, one class per row.
//! * Binary matrix: magic `IBSC`, version `0x01`, `u32` LE rows, `u32` LE
//!   columns, then row-major `f32` LE values.
//! * Split file: `seen: 0,1,...` and `unseen: 5,6,...` lines.
//!
//! A binary feature file is a binary matrix whose first column holds the
//! class id and whose remaining columns are the features.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::data::{AttributeTable, ClassId, Dataset, SplitSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IBSC";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "binary" | "bin" => Ok(MatrixFormat::Binary),
            other => Err(Error::Config(format!("unknown matrix format `{other}`"))),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

fn check_header(path: &Path, header: &csv::StringRecord, leading: &[&str], prefix: &str) -> Result<usize> {
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() <= leading.len() || fields[..leading.len()] != *leading {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{},{prefix}0,...`", leading.join(",")),
        ));
    }
    for (j, name) in fields[leading.len()..].iter().enumerate() {
        if *name != format!("{prefix}{j}") {
            return Err(Error::parse(
                path,
                1,
                format!("header column {} is `{name}`, expected `{prefix}{j}`", j + leading.len()),
            ));
        }
    }
    Ok(fields.len() - leading.len())
}

fn parse_field<T: FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {what} from `{field}`")))
}

/// Raw contents of a feature CSV before class validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<ClassId>,
    pub features: Array2<f64>,
    /// Values of trailing non-feature columns such as `screen_score`.
    pub extra: Vec<Vec<f64>>,
}

/// Reads a feature CSV, optionally accepting named trailing columns.
pub fn read_feature_csv(path: &Path, trailing: &[&str]) -> Result<FeatureTable> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let header_len = header.len();
    if header_len < trailing.len() + 3 || header.iter().skip(header_len - trailing.len()).ne(trailing.iter().copied()) {
        return Err(Error::parse(path, 1, format!("expected trailing columns {trailing:?}")));
    }
    let core: csv::StringRecord = header.iter().take(header_len - trailing.len()).collect();
    let p = check_header(path, &core, &["id", "label"], "f")?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut extra = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header_len {
            return Err(Error::parse(
                path,
                line,
                format!("row has {} fields but the header declares {header_len}", record.len()),
            ));
        }
        ids.push(record[0].to_string());
        labels.push(parse_field(path, line, &record[1], "class id")?);
        for field in record.iter().skip(2).take(p) {
            values.push(parse_field::<f64>(path, line, field, "feature value")?);
        }
        extra.push(
            record
                .iter()
                .skip(2 + p)
                .map(|f| parse_field::<f64>(path, line, f, "value"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, p), values).expect("row lengths checked");
    Ok(FeatureTable {
        ids,
        labels,
        features,
        extra,
    })
}

/// Writes samples in feature CSV format. `ids` defaults to the row index.
pub fn write_feature_csv(
    path: &Path,
    ids: Option<&[String]>,
    labels: &[ClassId],
    features: &Array2<f64>,
    trailing: &[(&str, &[f64])],
) -> Result<()> {
    let mut out = create(path)?;
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "id,label")?;
        for j in 0..features.ncols() {
            write!(out, ",f{j}")?;
        }
        for (name, _) in trailing {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (i, row) in features.rows().into_iter().enumerate() {
            match ids {
                Some(ids) => write!(out, "{},{}", ids[i], labels[i])?,
                None => write!(out, "{i},{}", labels[i])?,
            }
            for v in row {
                write!(out, ",{v}")?;
            }
            for (_, col) in trailing {
                write!(out, ",{}", col[i])?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Loads a labeled dataset. When `class_names` is given, labels must index
/// into it; otherwise names are generated for `0..=max(label)`.
pub fn load_dataset(path: &Path, format: MatrixFormat, class_names: Option<&[String]>) -> Result<Dataset> {
    let (labels, features) = match format {
        MatrixFormat::Csv => {
            let table = read_feature_csv(path, &[])?;
            (table.labels, table.features)
        }
        MatrixFormat::Binary => {
            let m = read_matrix_binary(path)?;
            if m.ncols() < 2 {
                return Err(Error::parse(path, 0, "binary feature file needs a label column and at least one feature"));
            }
            let mut labels = Vec::with_capacity(m.nrows());
            for (row, &v) in m.column(0).iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Validation(format!("row {row}: class id {v} is not a non-negative integer")));
                }
                labels.push(v as ClassId);
            }
            let features = m.slice(ndarray::s![.., 1..]).to_owned();
            (labels, features)
        }
    };
    match class_names {
        Some(names) => Dataset::new(features, labels, names.to_vec()),
        None => {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            Dataset::with_class_count(features, labels, k)
        }
    }
}

/// Writes a dataset in the requested format.
pub fn write_dataset(path: &Path, format: MatrixFormat, dataset: &Dataset) -> Result<()> {
    match format {
        MatrixFormat::Csv => write_feature_csv(path, None, dataset.labels(), dataset.features(), &[]),
        MatrixFormat::Binary => {
            let mut m = Array2::zeros((dataset.n(), dataset.p() + 1));
            for (i, &l) in dataset.labels().iter().enumerate() {
                m[[i, 0]] = l as f64;
                m.slice_mut(ndarray::s![i, 1..]).assign(&dataset.row(i));
            }
            write_matrix_binary(path, &m)
        }
    }
}

/// Reads an attribute CSV, returning class names and the value matrix.
pub fn read_attribute_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = check_header(path, &header, &["class"], "a")?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != d + 1 {
            return Err(Error::parse(
                path,
                line,
                format!("row has {} fields but the header declares {}", record.len(), d + 1),
            ));
        }
        names.push(record[0].to_string());
        for field in record.iter().skip(1) {
            values.push(parse_field::<f64>(path, line, field, "attribute value")?);
        }
    }
    let k = names.len();
    Ok((names, Array2::from_shape_vec((k, d), values).expect("row lengths checked")))
}

pub fn write_attribute_csv(path: &Path, names: &[String], values: &Array2<f64>) -> Result<()> {
    let mut out = create(path)?;
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "class")?;
        for j in 0..values.ncols() {
            write!(out, ",a{j}")?;
        }
        writeln!(out)?;
        for (name, row) in names.iter().zip(values.rows()) {
            write!(out, "{name}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Loads continuous and binary attribute files into a validated table.
pub fn load_attribute_table(continuous_path: &Path, binary_path: &Path) -> Result<AttributeTable> {
    let (names, continuous) = read_attribute_csv(continuous_path)?;
    let (binary_names, binary) = read_attribute_csv(binary_path)?;
    if continuous.dim() != binary.dim() {
        return Err(Error::Validation(format!(
            "continuous attributes are {:?} but binary attributes are {:?}",
            continuous.dim(),
            binary.dim()
        )));
    }
    if names != binary_names {
        return Err(Error::Validation(
            "continuous and binary attribute files list different classes".into(),
        ));
    }
    AttributeTable::from_real_binary(continuous, &binary, names)
}

pub fn write_attribute_table(continuous_path: &Path, binary_path: &Path, attrs: &AttributeTable) -> Result<()> {
    write_attribute_csv(continuous_path, attrs.class_names(), attrs.continuous())?;
    write_attribute_csv(binary_path, attrs.class_names(), &attrs.binary().mapv(f64::from))
}

/// Decodes a binary matrix. Values are widened from `f32`.
pub fn decode_matrix_binary(bytes: &[u8]) -> std::result::Result<Array2<f64>, String> {
    if bytes.len() < 13 {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic bytes".into());
    }
    if bytes[4] != VERSION {
        return Err(format!("unsupported version {}", bytes[4]));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let payload = &bytes[13..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or("matrix size overflows")?;
    if payload.len() != expected {
        return Err(format!(
            "payload is {} bytes but a {rows}x{cols} matrix needs {expected}",
            payload.len()
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Encodes a matrix; values are narrowed to `f32`.
pub fn encode_matrix_binary(m: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * m.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn read_matrix_binary(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(open(path)?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_matrix_binary(&bytes).map_err(|msg| Error::parse(path, 0, msg))
}

pub fn write_matrix_binary(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(&encode_matrix_binary(m))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_id_list(path: &Path, line: usize, list: &str) -> Result<BTreeSet<ClassId>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_field(path, line, s, "class id"))
        .collect()
}

pub fn parse_split(path: &Path, text: &str) -> Result<SplitSpec> {
    let mut seen = None;
    let mut unseen = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, list) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `seen: ...` or `unseen: ...`"))?;
        let ids = parse_id_list(path, i + 1, list)?;
        let slot = match key.trim() {
            "seen" => &mut seen,
            "unseen" => &mut unseen,
            other => return Err(Error::parse(path, i + 1, format!("unknown key `{other}`"))),
        };
        if slot.replace(ids).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate `{}` line", key.trim())));
        }
    }
    let seen = seen.ok_or_else(|| Error::parse(path, 0, "missing `seen:` line"))?;
    let unseen = unseen.ok_or_else(|| Error::parse(path, 0, "missing `unseen:` line"))?;
    SplitSpec::new(seen, unseen)
}

pub fn load_split(path: &Path) -> Result<SplitSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(path, &text)
}

pub fn format_split(split: &SplitSpec) -> String {
    let join = |s: &BTreeSet<ClassId>| s.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    format!("seen: {}\nunseen: {}\n", join(split.seen()), join(split.unseen()))
}

pub fn write_split(path: &Path, split: &SplitSpec) -> Result<()> {
    write_text(path, &format_split(split))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One index per line; blank lines ignored.
pub fn read_index_list(path: &Path) -> Result<Vec<usize>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_field(path, i + 1, l.trim(), "index"))
        .collect()
}

pub fn format_index_list(indices: impl IntoIterator<Item = usize>) -> String {
    indices.into_iter().map(|i| format!("{i}\n")).collect()
}

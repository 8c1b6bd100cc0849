//! Per-object CSV tables as exported by segmentation software, plus the
//! JSON sidecar that carries the image extent.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ObjectImage, ObjectRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {row}: coordinate outside the image extent")]
    OutOfBounds { row: u64 },
    #[error("line {row}: non-finite value")]
    NonFinite { row: u64 },
    #[error("line {row}: column `{column}` is not a number")]
    BadValue { row: u64, column: String },
    #[error("file has no header row")]
    EmptyFile,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which CSV columns hold the coordinates and which hold properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub x_column: String,
    pub y_column: String,
    /// Property columns in channel order; empty means every other column.
    pub property_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            x_column: "x_um".into(),
            y_column: "y_um".into(),
            property_columns: Vec::new(),
        }
    }
}

/// Sidecar metadata for one object table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub width_um: f64,
    pub height_um: f64,
    pub resolution_um_per_px: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    OutOfBounds,
    NonFinite,
    BadValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the file (the header is line 1).
    pub row: u64,
    pub reason: RejectReason,
}

/// Result of a lenient load: every data row is either accepted or rejected.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub image: ObjectImage,
    pub rows: usize,
    pub rejected: Vec<RejectedRow>,
}

/// `cells.csv` -> `cells.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn read_sidecar(path: &Path) -> Result<ImageMetadata, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| IngestError::Sidecar {
        path: path.to_owned(),
        source,
    })
}

pub fn write_sidecar(path: &Path, meta: &ImageMetadata) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut w, meta).map_err(|source| IngestError::Sidecar {
        path: path.to_owned(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Loads an object table, failing on the first invalid row.
pub fn load_object_csv(
    path: &Path,
    schema: &CsvSchema,
    meta: &ImageMetadata,
) -> Result<ObjectImage, IngestError> {
    let report = load_inner(open(path)?, schema, meta, true, path)?;
    Ok(report.image)
}

/// Loads an object table, skipping invalid rows and reporting them.
pub fn load_object_csv_lenient(
    path: &Path,
    schema: &CsvSchema,
    meta: &ImageMetadata,
) -> Result<LoadReport, IngestError> {
    load_inner(open(path)?, schema, meta, false, path)
}

/// Reader-based variant of [`load_object_csv_lenient`].
pub fn load_object_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
    meta: &ImageMetadata,
    strict: bool,
) -> Result<LoadReport, IngestError> {
    load_inner(reader, schema, meta, strict, Path::new("<reader>"))
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })
}

fn load_inner<R: Read>(
    reader: R,
    schema: &CsvSchema,
    meta: &ImageMetadata,
    strict: bool,
    path: &Path,
) -> Result<LoadReport, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
    };
    let xi = find(&schema.x_column)?;
    let yi = find(&schema.y_column)?;
    let prop_idx: Vec<usize> = if schema.property_columns.is_empty() {
        (0..headers.len()).filter(|&i| i != xi && i != yi).collect()
    } else {
        schema
            .property_columns
            .iter()
            .map(|c| find(c))
            .collect::<Result<_, _>>()?
    };

    let mut objects = Vec::new();
    let mut rejected = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        rows += 1;
        let row = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows as u64 + 1);
        match parse_row(&record, xi, yi, &prop_idx, meta) {
            Ok(obj) => objects.push(obj),
            Err(reason) => {
                if strict {
                    return Err(match reason {
                        RejectReason::OutOfBounds => IngestError::OutOfBounds { row },
                        RejectReason::NonFinite => IngestError::NonFinite { row },
                        RejectReason::BadValue => IngestError::BadValue {
                            row,
                            column: bad_column(&record, &headers, xi, yi, &prop_idx),
                        },
                    });
                }
                rejected.push(RejectedRow { row, reason });
            }
        }
    }

    let id = meta.id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let image = ObjectImage::new(
        id,
        meta.width_um,
        meta.height_um,
        meta.resolution_um_per_px,
        meta.label,
        prop_idx.len(),
        objects,
    )?;
    Ok(LoadReport {
        image,
        rows,
        rejected,
    })
}

fn parse_row(
    record: &csv::StringRecord,
    xi: usize,
    yi: usize,
    prop_idx: &[usize],
    meta: &ImageMetadata,
) -> Result<ObjectRecord, RejectReason> {
    let num = |i: usize| -> Result<f64, RejectReason> {
        record
            .get(i)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or(RejectReason::BadValue)
    };
    let x = num(xi)?;
    let y = num(yi)?;
    let mut props = Vec::with_capacity(prop_idx.len());
    for &i in prop_idx {
        props.push(num(i)? as f32);
    }
    if !x.is_finite() || !y.is_finite() || props.iter().any(|p| !p.is_finite()) {
        return Err(RejectReason::NonFinite);
    }
    if !(0.0..meta.width_um).contains(&x) || !(0.0..meta.height_um).contains(&y) {
        return Err(RejectReason::OutOfBounds);
    }
    Ok(ObjectRecord::new(x, y, props))
}

fn bad_column(
    record: &csv::StringRecord,
    headers: &csv::StringRecord,
    xi: usize,
    yi: usize,
    prop_idx: &[usize],
) -> String {
    std::iter::once(xi)
        .chain(std::iter::once(yi))
        .chain(prop_idx.iter().copied())
        .find(|&i| record.get(i).and_then(|s| s.parse::<f64>().ok()).is_none())
        .and_then(|i| headers.get(i))
        .unwrap_or("?")
        .to_owned()
}

/// Writes `x_um,y_um,<property names...>`.
pub fn write_object_csv(
    path: &Path,
    image: &ObjectImage,
    property_names: &[String],
) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["x_um".to_owned(), "y_um".to_owned()];
    header.extend(property_names.iter().cloned());
    w.write_record(&header)?;
    for o in image.objects() {
        let mut rec = vec![o.x.to_string(), o.y.to_string()];
        rec.extend(o.props.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Default property column names `ch0..ch{P-1}`.
pub fn default_property_names(channels: usize) -> Vec<String> {
    (0..channels).map(|c| format!("ch{c}")).collect()
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSpec {
    /// Numeric feature columns; `None` takes every column not listed elsewhere.
    pub numeric_cols: Option<Vec<String>>,
    /// Binary feature columns with the value encoded as `1` (anything else is `0`).
    pub binary_cols: Vec<(String, String)>,
    /// Label columns. Integer labels are kept; other values are numbered in sorted order.
    pub label_cols: Vec<String>,
}

/// Rows skipped while loading, with their 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub dropped: Vec<(usize, String)>,
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "?" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a comma-separated file with a header row.
///
/// Rows with missing or malformed fields are dropped with a warning; the
/// report lists them by line number.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, spec: &CsvSpec) -> Result<(Dataset<T>, LoadReport)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "missing header row".into(),
        });
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("unknown column '{name}'"),
        })
    };
    let label_idx = spec.label_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let binary_idx = spec
        .binary_cols
        .iter()
        .map(|(c, v)| find(c).map(|i| (i, v.clone())))
        .collect::<Result<Vec<_>>>()?;
    let reserved: BTreeSet<usize> = label_idx.iter().copied().chain(binary_idx.iter().map(|b| b.0)).collect();
    let numeric_idx = match &spec.numeric_cols {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?,
        None => (0..header.len()).filter(|i| !reserved.contains(i)).collect(),
    };
    // Features in file order.
    let mut features: Vec<(usize, Option<String>)> = numeric_idx.iter().map(|&i| (i, None)).collect();
    features.extend(binary_idx.iter().map(|(i, v)| (*i, Some(v.clone()))));
    features.sort_by_key(|f| f.0);
    if features.is_empty() {
        return Err(Error::InvalidDataset("no feature columns selected".into()));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<Vec<String>> = vec![Vec::new(); label_idx.len()];
    let mut report = LoadReport::default();
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.dropped.push((line, e.to_string()));
                continue;
            }
        };
        if rec.len() != header.len() {
            report.dropped.push((line, format!("expected {} fields, found {}", header.len(), rec.len())));
            continue;
        }
        let mut row = Vec::with_capacity(features.len());
        let mut problem = None;
        for (i, positive) in &features {
            let s = &rec[*i];
            if is_missing(s) {
                problem = Some(format!("missing value in column '{}'", header[*i]));
                break;
            }
            match positive {
                Some(p) => row.push(if s == p { 1.0 } else { 0.0 }),
                None => match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        problem = Some(format!("non-numeric value '{s}' in column '{}'", header[*i]));
                        break;
                    }
                },
            }
        }
        if problem.is_none() {
            if let Some(&i) = label_idx.iter().find(|&&i| is_missing(&rec[i])) {
                problem = Some(format!("missing label in column '{}'", header[i]));
            }
        }
        if let Some(msg) = problem {
            report.dropped.push((line, msg));
            continue;
        }
        values.extend(row);
        for (dst, &i) in raw_labels.iter_mut().zip(&label_idx) {
            dst.push(rec[i].to_string());
        }
        rows += 1;
    }
    for (line, msg) in &report.dropped {
        warn!("{}:{line}: dropped row: {msg}", path.display());
    }
    if rows == 0 {
        return Err(Error::InvalidDataset(format!("{}: no usable rows", path.display())));
    }
    let d = features.len();
    let x = DMatrix::from_row_iterator(rows, d, values.into_iter().map(T::lit));
    let mut ds = Dataset::new(x)?.with_column_names(features.iter().map(|f| header[f.0].clone()).collect())?;
    for (name, raw) in spec.label_cols.iter().zip(raw_labels) {
        ds = ds.with_labels(name.clone(), encode_labels(&raw))?;
    }
    Ok((ds, report))
}

fn encode_labels(raw: &[String]) -> Vec<i64> {
    let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
    if let Some(v) = ints {
        return v;
    }
    let codes: BTreeMap<&str, i64> = raw
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i as i64))
        .collect();
    raw.iter().map(|s| codes[s.as_str()]).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Writes features then label columns with a header row.
pub fn write_csv<T: Scalar>(path: impl AsRef<Path>, data: &Dataset<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = match data.column_names() {
        Some(n) => n.to_vec(),
        None => (1..=data.ncols()).map(|j| format!("x{j}")).collect(),
    };
    header.extend(data.label_columns().iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let x = data.values();
    for i in 0..data.nrows() {
        let mut rec: Vec<String> = (0..data.ncols()).map(|j| format!("{}", x[(i, j)])).collect();
        rec.extend(data.label_columns().iter().map(|c| c.values[i].to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx {
            path: path.into(),
            msg: "truncated header".into(),
        })
}

/// Reads an IDX image file (magic `0x803`); pixels are scaled to `[0, 1]`.
pub fn load_idx_images<T: Scalar>(path: impl AsRef<Path>) -> Result<DMatrix<T>> {
    let path = path.as_ref();
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != 0x0000_0803 {
        return Err(Error::Idx {
            path: path.into(),
            msg: format!("image magic 0x{magic:08x}, expected 0x00000803"),
        });
    }
    let n = be_u32(&buf, 4, path)? as usize;
    let rows = be_u32(&buf, 8, path)? as usize;
    let cols = be_u32(&buf, 12, path)? as usize;
    let d = rows * cols;
    let body = &buf[16..];
    if body.len() < n * d {
        return Err(Error::Idx {
            path: path.into(),
            msg: format!("truncated: {} pixel bytes for {n} images of {rows}x{cols}", body.len()),
        });
    }
    let scale = T::lit(1.0 / 255.0);
    Ok(DMatrix::from_row_iterator(n, d, body[..n * d].iter().map(|&b| T::from_count(b as usize) * scale)))
}

/// Reads an IDX label file (magic `0x801`).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != 0x0000_0801 {
        return Err(Error::Idx {
            path: path.into(),
            msg: format!("label magic 0x{magic:08x}, expected 0x00000801"),
        });
    }
    let n = be_u32(&buf, 4, path)? as usize;
    let body = &buf[8..];
    if body.len() < n {
        return Err(Error::Idx {
            path: path.into(),
            msg: format!("truncated: {} label bytes for {n} labels", body.len()),
        });
    }
    Ok(body[..n].iter().map(|&b| b as i64).collect())
}

/// Images and labels as a dataset with label column `label`.
pub fn load_idx<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset<T>> {
    let x = load_idx_images::<T>(images.as_ref())?;
    let y = load_idx_labels(labels.as_ref())?;
    if x.nrows() != y.len() {
        return Err(Error::Idx {
            path: labels.as_ref().into(),
            msg: format!("{} labels for {} images", y.len(), x.nrows()),
        });
    }
    Dataset::new(x)?.with_labels("label", y)
}

/// Writes an IDX pair; pixel values are rescaled from `[0, 1]` to bytes.
pub fn write_idx<T: Scalar>(images: &Path, labels: &Path, x: &DMatrix<T>, y: &[i64], shape: (u32, u32)) -> Result<()> {
    let mut img = Vec::with_capacity(16 + x.len());
    for v in [0x803u32, x.nrows() as u32, shape.0, shape.1] {
        img.extend(v.to_be_bytes());
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            img.push((x[(i, j)].as_f64() * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut lab = Vec::with_capacity(8 + y.len());
    for v in [0x801u32, y.len() as u32] {
        lab.extend(v.to_be_bytes());
    }
    lab.extend(y.iter().map(|&l| l as u8));
    File::create(images).and_then(|mut f| f.write_all(&img)).map_err(|e| Error::io(images, e))?;
    File::create(labels).and_then(|mut f| f.write_all(&lab)).map_err(|e| Error::io(labels, e))?;
    Ok(())
}

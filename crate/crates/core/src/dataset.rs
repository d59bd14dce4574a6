//! Flow-record ingestion: CSV loading, categorical encoding, label binarization
//! and standard scaling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column name used for the binary label when a [`FeatureMatrix`] is written to CSV.
pub const LABEL_COLUMN: &str = "label";

/// What to do with rows whose field count differs from the header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MalformedPolicy {
    /// Drop every malformed row.
    Drop,
    /// Fail on the first malformed row.
    Reject,
    /// Drop malformed rows while their fraction is at most the given value, otherwise fail.
    Tolerate(f64),
}

impl Default for MalformedPolicy {
    fn default() -> Self {
        MalformedPolicy::Tolerate(0.001)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Whether the first record is a header. Ignored when `columns` is set.
    pub has_header: bool,
    /// Explicit column names; the file is then read without a header row.
    pub columns: Option<Vec<String>>,
    pub malformed: MalformedPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            columns: None,
            malformed: MalformedPolicy::default(),
        }
    }
}

/// Untyped table of string fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Rows removed because their arity did not match the header.
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        check_unique(&header)?;
        for row in &rows {
            if row.len() != header.len() {
                return Err(Error::LengthMismatch {
                    expected: header.len(),
                    actual: row.len(),
                });
            }
        }
        Ok(Self {
            header,
            rows,
            dropped_rows: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &str> + '_> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| r[idx].as_str()))
    }

    /// Removes the named columns; names that are absent are ignored.
    pub fn drop_columns(&mut self, names: &[String]) {
        let keep: Vec<usize> = (0..self.header.len())
            .filter(|&i| !names.contains(&self.header[i]))
            .collect();
        if keep.len() == self.header.len() {
            return;
        }
        self.header = keep.iter().map(|&i| self.header[i].clone()).collect();
        for row in &mut self.rows {
            *row = keep.iter().map(|&i| std::mem::take(&mut row[i])).collect();
        }
    }
}

fn check_unique(header: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for h in header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

/// Parses delimiter-separated text into a [`RawTable`], applying the malformed-row policy.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<RawTable> {
    let has_header = opts.columns.is_none() && opts.has_header;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header: Vec<String> = match &opts.columns {
        Some(cols) => cols.clone(),
        None if has_header => match records.next() {
            Some(rec) => rec?.iter().map(str::to_string).collect(),
            None => return Err(Error::EmptyInput),
        },
        None => Vec::new(),
    };

    let mut rows = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    let mut width = header.len();
    for rec in records {
        let rec = rec?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        total += 1;
        if width == 0 {
            width = rec.len();
        }
        if rec.len() != width {
            malformed += 1;
            if opts.malformed == MalformedPolicy::Reject {
                return Err(Error::TooManyMalformedRows {
                    malformed,
                    total,
                    tolerance: 0.0,
                });
            }
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }

    if total == 0 {
        return Err(Error::EmptyInput);
    }
    if let MalformedPolicy::Tolerate(tol) = opts.malformed {
        if malformed as f64 > tol * total as f64 {
            return Err(Error::TooManyMalformedRows {
                malformed,
                total,
                tolerance: tol,
            });
        }
    }
    if malformed > 0 {
        warn!("dropped {malformed} malformed rows of {total}");
    }

    let header = if header.is_empty() {
        (0..width).map(|i| format!("c{i}")).collect()
    } else {
        header
    };
    check_unique(&header)?;
    Ok(RawTable {
        header,
        rows,
        dropped_rows: malformed,
    })
}

/// Per-column mapping from categorical string values to positive integer codes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: BTreeMap<String, BTreeMap<String, u32>>,
}

impl EncodingMap {
    pub fn code(&self, column: &str, value: &str) -> Option<u32> {
        self.columns.get(column)?.get(value).copied()
    }

    pub fn decode(&self, column: &str, code: u32) -> Option<&str> {
        self.columns
            .get(column)?
            .iter()
            .find(|(_, &c)| c == code)
            .map(|(v, _)| v.as_str())
    }

    pub fn is_categorical(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn protocol_map() -> BTreeMap<String, u32> {
    [("icmp", 1), ("tcp", 2), ("udp", 3)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

pub fn flag_map() -> BTreeMap<String, u32> {
    [
        "OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH",
    ]
    .into_iter()
    .zip(1..)
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Builds the encoding map for `categorical` columns. Columns with an entry in
/// `fixed` use it verbatim; others receive codes `1..=k` in sorted order of
/// their distinct values.
pub fn build_encoding_map(
    table: &RawTable,
    categorical: &[String],
    fixed: &BTreeMap<String, BTreeMap<String, u32>>,
) -> Result<EncodingMap> {
    let mut columns = BTreeMap::new();
    for name in categorical {
        let map = match fixed.get(name) {
            Some(m) => m.clone(),
            None => {
                let distinct: BTreeSet<&str> = table.column(name)?.collect();
                distinct
                    .into_iter()
                    .zip(1u32..)
                    .map(|(v, c)| (v.to_string(), c))
                    .collect()
            }
        };
        columns.insert(name.clone(), map);
    }
    Ok(EncodingMap { columns })
}

/// Columns (minus `exclude`) containing at least one value that does not parse as a real.
pub fn infer_categorical_columns(table: &RawTable, exclude: &[String]) -> Vec<String> {
    table
        .header
        .iter()
        .enumerate()
        .filter(|(_, name)| !exclude.contains(name))
        .filter(|(i, _)| table.rows.iter().any(|r| r[*i].parse::<f64>().is_err()))
        .map(|(_, name)| name.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenPolicy {
    #[default]
    Reject,
    /// Encode as the reserved code 0 and log a warning.
    ReserveZero,
}

/// Converts every non-excluded column to numbers, mapping categorical columns through `map`.
pub fn encode_categoricals<T: Scalar>(
    table: &RawTable,
    map: &EncodingMap,
    exclude: &[String],
    policy: UnseenPolicy,
) -> Result<FeatureMatrix<T>> {
    let cols: Vec<usize> = (0..table.header.len())
        .filter(|&i| !exclude.contains(&table.header[i]))
        .collect();
    let names: Vec<String> = cols.iter().map(|&i| table.header[i].clone()).collect();
    let mut data = Array2::<T>::zeros((table.n_rows(), cols.len()));
    let mut unseen = 0usize;
    for (j, &ci) in cols.iter().enumerate() {
        let name = &table.header[ci];
        let cat = map.columns.get(name);
        for (r, row) in table.rows.iter().enumerate() {
            let raw = row[ci].as_str();
            let value = match cat {
                Some(m) => match m.get(raw) {
                    Some(&code) => code as f64,
                    None => match policy {
                        UnseenPolicy::Reject => {
                            return Err(Error::UnseenCategory {
                                column: name.clone(),
                                value: raw.to_string(),
                            })
                        }
                        UnseenPolicy::ReserveZero => {
                            unseen += 1;
                            0.0
                        }
                    },
                },
                None => raw.parse::<f64>().map_err(|_| Error::NotNumeric {
                    column: name.clone(),
                    row: r,
                    value: raw.to_string(),
                })?,
            };
            if !value.is_finite() {
                return Err(Error::NonFinite("input table"));
            }
            data[[r, j]] = T::of(value);
        }
    }
    if unseen > 0 {
        warn!("{unseen} unseen categorical values encoded as 0");
    }
    Ok(FeatureMatrix {
        names,
        data,
        labels: None,
    })
}

/// `normal_token` maps to 0, every other value to 1.
pub fn binarize_labels(table: &RawTable, label_column: &str, normal_token: &str) -> Result<Vec<u8>> {
    Ok(table
        .column(label_column)?
        .map(|v| u8::from(v != normal_token))
        .collect())
}

/// Dense numeric table: rows are flows, columns are named features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub names: Vec<String>,
    pub data: Array2<T>,
    pub labels: Option<Vec<u8>>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(names: Vec<String>, data: Array2<T>, labels: Option<Vec<u8>>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.ncols(),
                actual: names.len(),
            });
        }
        check_unique(&names)?;
        if let Some(l) = &labels {
            check_binary(l)?;
            if l.len() != data.nrows() {
                return Err(Error::LengthMismatch {
                    expected: data.nrows(),
                    actual: l.len(),
                });
            }
        }
        Ok(Self { names, data, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, T> {
        self.data.column(j)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        check_binary(&labels)?;
        if labels.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                expected: self.n_rows(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Projection onto the given column indices, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_cols()) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        Ok(Self {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            data: self.data.select(Axis(1), indices),
            labels: self.labels.clone(),
        })
    }

    /// Projection onto the named columns.
    pub fn select_named(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_columns(&idx)
    }

    /// Writes the features (and the label, if any, as a trailing `label` column).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)?;
        let mut buf = Vec::with_capacity(header.len());
        for (r, row) in self.data.outer_iter().enumerate() {
            buf.clear();
            buf.extend(row.iter().map(|v| v.to_string()));
            if let Some(l) = &self.labels {
                buf.push(l[r].to_string());
            }
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads a matrix written by [`FeatureMatrix::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let table = read_csv(
            reader,
            &CsvOptions {
                malformed: MalformedPolicy::Reject,
                ..CsvOptions::default()
            },
        )?;
        let label_idx = table.header.iter().position(|h| h == LABEL_COLUMN);
        let feat: Vec<usize> = (0..table.header.len())
            .filter(|&i| Some(i) != label_idx)
            .collect();
        let mut data = Array2::<T>::zeros((table.n_rows(), feat.len()));
        let mut labels = label_idx.map(|_| Vec::with_capacity(table.n_rows()));
        for (r, row) in table.rows.iter().enumerate() {
            for (j, &ci) in feat.iter().enumerate() {
                let v: f64 = row[ci].parse().map_err(|_| Error::NotNumeric {
                    column: table.header[ci].clone(),
                    row: r,
                    value: row[ci].clone(),
                })?;
                data[[r, j]] = T::of(v);
            }
            if let (Some(li), Some(l)) = (label_idx, labels.as_mut()) {
                l.push(match row[li].as_str() {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(Error::NonBinary(other.to_string())),
                });
            }
        }
        let names = feat.iter().map(|&i| table.header[i].clone()).collect();
        Self::new(names, data, labels)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

pub(crate) fn check_binary(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&v| v > 1) {
        Some(v) => Err(Error::NonBinary(v.to_string())),
        None => Ok(()),
    }
}

/// Per-column standardization parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalerParams<T> {
    pub names: Vec<String>,
    pub mean: Vec<T>,
    pub stddev: Vec<T>,
}

pub fn fit_scaler<T: Scalar>(x: &FeatureMatrix<T>) -> Result<ScalerParams<T>> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let nf = T::of_usize(n);
    let mut mean = Vec::with_capacity(x.n_cols());
    let mut stddev = Vec::with_capacity(x.n_cols());
    for col in x.data.columns() {
        let m = col.iter().copied().sum::<T>() / nf;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / nf;
        mean.push(m);
        stddev.push(var.sqrt());
    }
    Ok(ScalerParams {
        names: x.names.clone(),
        mean,
        stddev,
    })
}

/// `(x - mean) / stddev` per column; zero-variance columns become all zeros.
pub fn apply_scaler<T: Scalar>(x: &FeatureMatrix<T>, params: &ScalerParams<T>) -> Result<FeatureMatrix<T>> {
    if params.mean.len() != x.n_cols() || params.stddev.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: params.mean.len(),
            actual: x.n_cols(),
        });
    }
    let mut out = x.clone();
    for (j, mut col) in out.data.columns_mut().into_iter().enumerate() {
        let (m, s) = (params.mean[j], params.stddev[j]);
        if s > T::zero() {
            col.mapv_inplace(|v| (v - m) / s);
        } else {
            col.fill(T::zero());
        }
    }
    Ok(out)
}

/// Built-in knowledge about the supported corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFlavor {
    NslKdd,
    TonIot,
    Generic,
}

pub const NSL_KDD_FEATURES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

impl DatasetFlavor {
    /// Column names for headerless files of the given arity (NSL-KDD only).
    pub fn schema(self, arity: usize) -> Option<Vec<String>> {
        match self {
            DatasetFlavor::NslKdd => {
                let mut cols: Vec<String> = NSL_KDD_FEATURES.iter().map(|s| s.to_string()).collect();
                match arity {
                    42 => cols.push("label".into()),
                    43 => {
                        cols.push("label".into());
                        cols.push("difficulty".into());
                    }
                    _ => return None,
                }
                Some(cols)
            }
            _ => None,
        }
    }

    pub fn has_header(self) -> bool {
        !matches!(self, DatasetFlavor::NslKdd)
    }

    pub fn label_column(self) -> Option<&'static str> {
        match self {
            DatasetFlavor::NslKdd | DatasetFlavor::TonIot => Some("label"),
            DatasetFlavor::Generic => None,
        }
    }

    pub fn normal_token(self) -> &'static str {
        match self {
            DatasetFlavor::NslKdd => "normal",
            DatasetFlavor::TonIot => "0",
            DatasetFlavor::Generic => "normal",
        }
    }

    /// Non-feature columns besides the label.
    pub fn drop_columns(self) -> Vec<String> {
        match self {
            DatasetFlavor::NslKdd => vec!["difficulty".into()],
            DatasetFlavor::TonIot => vec!["type".into()],
            DatasetFlavor::Generic => Vec::new(),
        }
    }

    pub fn fixed_maps(self) -> BTreeMap<String, BTreeMap<String, u32>> {
        match self {
            DatasetFlavor::NslKdd => BTreeMap::from([
                ("protocol_type".to_string(), protocol_map()),
                ("flag".to_string(), flag_map()),
            ]),
            _ => BTreeMap::new(),
        }
    }

    pub fn categorical_columns(self, table: &RawTable, exclude: &[String]) -> Vec<String> {
        match self {
            DatasetFlavor::NslKdd => ["protocol_type", "service", "flag"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            _ => infer_categorical_columns(table, exclude),
        }
    }
}

//! Benchmark dataset ingestion (CSV and a numeric ARFF subset) and the Gram
//! matrix of pairwise inner products.
//!
//! Points are used as given: no scaling or centering happens here. The
//! reported feature count `m` never includes the label column.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x m` point set with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    n: usize,
    m: usize,
    /// Row-major, `n * m` values.
    points: Vec<f64>,
    feature_names: Vec<String>,
    truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq)]
struct Truth {
    /// Re-indexed to `0..k_true` in first-appearance order.
    labels: Vec<usize>,
    /// Original identifier of each re-indexed class.
    names: Vec<String>,
    column: String,
}

impl Dataset {
    /// Builds a dataset from row-major values, validating shape and finiteness.
    pub fn new(name: impl Into<String>, n: usize, m: usize, points: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one point and one feature, got n={n}, m={m}"
            )));
        }
        if points.len() != n * m {
            return Err(Error::InvalidDataset(format!(
                "expected {} values for {n}x{m}, got {}",
                n * m,
                points.len()
            )));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value in row {}, column {}",
                pos / m,
                pos % m
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            points,
            feature_names: (0..m).map(|j| format!("x{j}")).collect(),
            truth: None,
        })
    }

    /// Builds a dataset from a slice of equally sized rows.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} values, expected {m}",
                rows[i].len()
            )));
        }
        Self::new(name, n, m, rows.concat())
    }

    /// Attaches ground-truth labels given as opaque identifiers.
    pub fn with_labels<S: AsRef<str>>(mut self, labels: &[S]) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} points",
                labels.len(),
                self.n
            )));
        }
        self.truth = Some(reindex_labels(labels, "class"));
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} features",
                names.len(),
                self.m
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of features, excluding any label column.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Ground-truth labels re-indexed to `0..k_true`.
    pub fn truth_labels(&self) -> Option<&[usize]> {
        self.truth.as_ref().map(|t| t.labels.as_slice())
    }

    /// Original identifiers of the ground-truth classes, by re-indexed label.
    pub fn truth_names(&self) -> Option<&[String]> {
        self.truth.as_ref().map(|t| t.names.as_slice())
    }

    pub fn k_true(&self) -> Option<usize> {
        self.truth.as_ref().map(|t| t.names.len())
    }

    /// Points as an `n x m` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.m, &self.points)
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.point(i), self.point(j))
    }

    /// Writes the dataset as CSV with full round-trip precision. Labels, if
    /// present, go to a trailing column under their original identifiers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if let Some(t) = &self.truth {
            header.push(&t.column);
        }
        out.write_record(&header)?;
        for i in 0..self.n {
            let mut record: Vec<String> = self.point(i).iter().map(|v| format!("{v:?}")).collect();
            if let Some(t) = &self.truth {
                record.push(t.names[t.labels[i]].clone());
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn reindex_labels<S: AsRef<str>>(labels: &[S], column: &str) -> Truth {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let labels = labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            *index.entry(l).or_insert_with(|| {
                names.push(l.to_string());
                names.len() - 1
            })
        })
        .collect();
    Truth {
        labels,
        names,
        column: column.to_string(),
    }
}

/// Parses a headed CSV file. When `label_column` is given, that column becomes
/// the ground-truth labelling and every other column must be numeric.
pub fn parse_csv<R: Read>(source: R, name: &str, label_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::parse(1, "missing header row"));
    }
    let label_idx = match label_column {
        Some(col) => Some(
            header
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| Error::parse(1, format!("unknown label column '{col}'")))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let m = feature_names.len();
    if m == 0 {
        return Err(Error::parse(1, "no feature columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(n + 2, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(line, format!("non-numeric value '{cell}' in column '{}'", header[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("non-finite value '{cell}'")));
            }
            values.push(v);
        }
        n += 1;
    }
    let mut dataset = Dataset::new(name, n, m, values)?.with_feature_names(feature_names)?;
    if let Some(idx) = label_idx {
        dataset.truth = Some(reindex_labels(&labels, &header[idx]));
    }
    Ok(dataset)
}

#[derive(Debug)]
enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2
        && ((s.starts_with('\'') && s.ends_with('\'')) || (s.starts_with('"') && s.ends_with('"')))
    {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Splits `@attribute <name> <type>` where the name may be quoted.
fn split_attribute(rest: &str) -> Option<(&str, &str)> {
    let rest = rest.trim_start();
    let quote = rest.chars().next()?;
    if quote == '\'' || quote == '"' {
        let end = rest[1..].find(quote)? + 1;
        Some((&rest[1..end], rest[end + 1..].trim()))
    } else {
        let end = rest.find(|c: char| c.is_whitespace() || c == '{')?;
        Some((&rest[..end], rest[end..].trim()))
    }
}

/// Parses the numeric + nominal-class subset of ARFF. A single nominal
/// attribute, wherever it appears, becomes the ground-truth labelling.
pub fn parse_arff<R: Read>(source: R, fallback_name: &str) -> Result<Dataset> {
    let reader = BufReader::new(source);
    let mut relation: Option<String> = None;
    let mut attrs: Vec<(String, AttrKind)> = Vec::new();
    let mut in_data = false;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    let mut class_idx: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = trimmed.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                relation = Some(strip_quotes(&trimmed["@relation".len()..]).to_string());
            } else if lower.starts_with("@attribute") {
                let (name, ty) = split_attribute(&trimmed["@attribute".len()..])
                    .ok_or_else(|| Error::parse(lineno, "malformed @attribute line"))?;
                let ty_lower = ty.to_ascii_lowercase();
                let kind = if ty.starts_with('{') {
                    let close = ty
                        .rfind('}')
                        .ok_or_else(|| Error::parse(lineno, "unterminated nominal value list"))?;
                    let vals: Vec<String> = ty[1..close]
                        .split(',')
                        .map(|v| strip_quotes(v).to_string())
                        .filter(|v| !v.is_empty())
                        .collect();
                    if class_idx.is_some() {
                        return Err(Error::parse(
                            lineno,
                            "only one nominal (class) attribute is supported",
                        ));
                    }
                    class_idx = Some(attrs.len());
                    AttrKind::Nominal(vals)
                } else if matches!(ty_lower.as_str(), "numeric" | "real" | "integer") {
                    AttrKind::Numeric
                } else {
                    return Err(Error::parse(
                        lineno,
                        format!("unsupported attribute type '{ty}' for '{name}'"),
                    ));
                };
                attrs.push((name.to_string(), kind));
            } else if lower.starts_with("@data") {
                if attrs.is_empty() {
                    return Err(Error::parse(lineno, "@data before any @attribute"));
                }
                in_data = true;
            } else {
                return Err(Error::parse(lineno, format!("unexpected header line '{trimmed}'")));
            }
            continue;
        }

        if trimmed.starts_with('{') {
            return Err(Error::parse(lineno, "sparse ARFF rows are not supported"));
        }
        let fields: Vec<&str> = trimmed.split(',').map(strip_quotes).collect();
        if fields.len() != attrs.len() {
            return Err(Error::parse(
                lineno,
                format!("expected {} values, found {}", attrs.len(), fields.len()),
            ));
        }
        for (field, (attr_name, kind)) in fields.iter().zip(&attrs) {
            if *field == "?" {
                return Err(Error::parse(
                    lineno,
                    format!("missing value for attribute '{attr_name}'"),
                ));
            }
            match kind {
                AttrKind::Numeric => {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::parse(
                            lineno,
                            format!("non-numeric value '{field}' for attribute '{attr_name}'"),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(Error::parse(lineno, format!("non-finite value '{field}'")));
                    }
                    values.push(v);
                }
                AttrKind::Nominal(allowed) => {
                    if !allowed.iter().any(|a| a == field) {
                        return Err(Error::parse(
                            lineno,
                            format!("value '{field}' not in nominal set of '{attr_name}'"),
                        ));
                    }
                    labels.push(field.to_string());
                }
            }
        }
        n += 1;
    }

    if !in_data {
        return Err(Error::parse(0, "missing @data section"));
    }
    let feature_names: Vec<String> = attrs
        .iter()
        .filter(|(_, k)| matches!(k, AttrKind::Numeric))
        .map(|(name, _)| name.clone())
        .collect();
    let m = feature_names.len();
    let name = relation.unwrap_or_else(|| fallback_name.to_string());
    let mut dataset = Dataset::new(name, n, m, values)?.with_feature_names(feature_names)?;
    if let Some(ci) = class_idx {
        dataset.truth = Some(reindex_labels(&labels, &attrs[ci].0));
    }
    Ok(dataset)
}

/// Loads a dataset from disk, choosing the parser by file extension
/// (`.arff` for ARFF, anything else as CSV).
pub fn load(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let file = std::fs::File::open(path)?;
    let is_arff = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("arff"));
    if is_arff {
        parse_arff(file, &stem)
    } else {
        parse_csv(file, &stem, label_column)
    }
}

/// Symmetric matrix of pairwise inner products `W_ij = <p_i, p_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    w: DMatrix<f64>,
    trace_w: f64,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn trace(&self) -> f64 {
        self.trace_w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// `J W J` with `J = I - ee^T/n`: the Gram matrix of the mean-centred
    /// points. Agrees with `W` on `tr(W) - <W, Z>` whenever `Ze = e`.
    pub fn centered(&self) -> GramMatrix {
        let n = self.n();
        let row_means: Vec<f64> = (0..n).map(|i| self.w.row(i).sum() / n as f64).collect();
        let grand = row_means.iter().sum::<f64>() / n as f64;
        let w = DMatrix::from_fn(n, n, |i, j| self.w[(i, j)] - row_means[i] - row_means[j] + grand);
        let w = (&w + w.transpose()) * 0.5;
        let trace_w = w.trace();
        GramMatrix { w, trace_w }
    }
}

pub fn gram(dataset: &Dataset) -> GramMatrix {
    let n = dataset.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let pi = dataset.point(i);
        for j in i..n {
            let v: f64 = pi.iter().zip(dataset.point(j)).map(|(a, b)| a * b).sum();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let trace_w = w.trace();
    GramMatrix { w, trace_w }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_label_column() {
        let src = "x,y,class\n0,0,a\n1,1,b\n";
        let d = parse_csv(src.as_bytes(), "t", Some("class")).unwrap();
        assert_eq!((d.n(), d.m()), (2, 2));
        assert_eq!(d.truth_labels(), Some(&[0, 1][..]));
        assert_eq!(d.truth_names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.k_true(), Some(2));
    }

    #[test]
    fn csv_without_label_column_rejects_text_cell() {
        let src = "x,y,class\n0,0,a\n1,1,b\n";
        match parse_csv(src.as_bytes(), "t", None) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("'a'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_arity_and_unknown_column_errors() {
        let src = "x,y\n0,0\n1\n";
        assert!(matches!(
            parse_csv(src.as_bytes(), "t", None),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_csv("x,y\n0,0\n".as_bytes(), "t", Some("label")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn labels_reindexed_in_first_appearance_order() {
        let src = "x,c\n1,z\n2,a\n3,z\n4,b\n";
        let d = parse_csv(src.as_bytes(), "t", Some("c")).unwrap();
        assert_eq!(d.truth_labels().unwrap(), &[0, 1, 0, 2]);
    }

    const ARFF: &str = "% comment\n@RELATION toy\n\n@attribute a numeric\n@Attribute 'b' REAL\n@attribute class {a,b}\n@data\n1,2,a\n3,4,b\n% inline comment\n5,6,a\n";

    #[test]
    fn arff_numeric_with_nominal_class() {
        let d = parse_arff(ARFF.as_bytes(), "x").unwrap();
        assert_eq!(d.name(), "toy");
        assert_eq!((d.n(), d.m(), d.k_true()), (3, 2, Some(2)));
        assert_eq!(d.point(2), &[5.0, 6.0]);
        assert_eq!(d.truth_labels().unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn arff_error_paths() {
        let missing = "@relation r\n@attribute a numeric\n@data\n1\n?\n";
        assert!(matches!(
            parse_arff(missing.as_bytes(), "x"),
            Err(Error::Parse { line: 5, .. })
        ));
        let no_data = "@relation r\n@attribute a numeric\n";
        assert!(parse_arff(no_data.as_bytes(), "x").is_err());
        let string_attr = "@relation r\n@attribute a string\n@data\nfoo\n";
        assert!(matches!(
            parse_arff(string_attr.as_bytes(), "x"),
            Err(Error::Parse { line: 2, .. })
        ));
        let outside = "@relation r\n@attribute a numeric\n@attribute c {x,y}\n@data\n1,z\n";
        assert!(matches!(
            parse_arff(outside.as_bytes(), "x"),
            Err(Error::Parse { line: 5, .. })
        ));
        let sparse = "@relation r\n@attribute a numeric\n@data\n{0 1}\n";
        assert!(parse_arff(sparse.as_bytes(), "x").is_err());
    }

    #[test]
    fn arff_without_class_has_no_truth() {
        let src = "@relation r\n@attribute a numeric\n@attribute b numeric\n@data\n1,2\n3,4\n";
        let d = parse_arff(src.as_bytes(), "x").unwrap();
        assert_eq!(d.truth_labels(), None);
        assert_eq!(d.k_true(), None);
    }

    #[test]
    fn gram_small_cases() {
        let d = Dataset::from_rows("t", &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = gram(&d);
        assert_eq!(g.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(g.trace(), 2.0);

        let d = Dataset::from_rows("t", &[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let g = gram(&d);
        assert_eq!(g.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]));
        assert_eq!(g.trace(), 10.0);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Dataset::new("t", 0, 2, vec![]).is_err());
        assert!(Dataset::new("t", 1, 2, vec![1.0, f64::NAN]).is_err());
    }
}

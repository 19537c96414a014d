//! Pairwise painting similarity.
//!
//! Two text formats are supported. Embedding files:
//!
//! ```text
//! MOSAIC-EMB v1 <m> <dim>
//! <id> <f1> ... <fdim>
//! ```
//!
//! and similarity matrices:
//!
//! ```text
//! MOSAIC-SIM v1 <m> <kind>
//! <id1> ... <idm>
//! <a11> ... <a1m>
//! ...
//! ```
//!
//! where `kind` is `cosine` or `probability`. Values are written with the
//! shortest decimal representation that round-trips the in-memory `f64`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Collection;

pub const EMBEDDING_MAGIC: &str = "MOSAIC-EMB";
pub const MATRIX_MAGIC: &str = "MOSAIC-SIM";
const FORMAT_VERSION: &str = "v1";
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("matrix is not square: {ids} ids but {rows} rows")]
    NotSquare { ids: usize, rows: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    RowLength {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("painting {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("embedding for {id:?} has length {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        found: usize,
        expected: usize,
    },
    #[error("non-finite value for {0:?}")]
    NonFinite(String),
    #[error("value {value} at ({row}, {col}) is outside [{lo}, {hi}]")]
    OutOfRange {
        row: usize,
        col: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("cosine matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("no embeddings supplied")]
    Empty,
    #[error("id {0:?} is not in the collection")]
    UnknownId(String),
    #[error("collection painting {0:?} is missing")]
    MissingId(String),
    #[error("id {0:?} contains whitespace and cannot be written")]
    UnwritableId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimilarityError + '_ {
    move |source| SimilarityError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Cosine,
    IngestedProbability,
}

impl SimilarityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::IngestedProbability => "probability",
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            SimilarityKind::Cosine => (-1.0, 1.0),
            SimilarityKind::IngestedProbability => (0.0, 1.0),
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(SimilarityKind::Cosine),
            "probability" | "ingested-probability" => Ok(SimilarityKind::IngestedProbability),
            other => Err(format!("unknown matrix kind {other:?}")),
        }
    }
}

/// Per-painting latent vectors from one backbone, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<(), SimilarityError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(SimilarityError::DimensionMismatch {
                id,
                found: vector.len(),
                expected: self.dim,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite(id));
        }
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Checks that every id resolves in the collection and none repeats.
    pub fn check_against(&self, collection: &Collection) -> Result<(), SimilarityError> {
        check_ids(&self.ids, collection, false)
    }
}

fn check_ids(ids: &[String], collection: &Collection, require_all: bool) -> Result<(), SimilarityError> {
    let mut seen = vec![false; collection.len()];
    for id in ids {
        let i = collection
            .index_of(id)
            .ok_or_else(|| SimilarityError::UnknownId(id.clone()))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(SimilarityError::DuplicateId(id.clone()));
        }
    }
    if require_all {
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(SimilarityError::MissingId(collection.id(i).to_owned()));
        }
    }
    Ok(())
}

/// Dense m×m similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    kind: SimilarityKind,
}

impl SimilarityMatrix {
    /// Builds a matrix, validating shape, id uniqueness and value ranges.
    pub fn new(ids: Vec<String>, values: Vec<f64>, kind: SimilarityKind) -> Result<Self, SimilarityError> {
        let m = ids.len();
        if values.len() != m * m {
            return Err(SimilarityError::NotSquare {
                ids: m,
                rows: values.len().checked_div(m).unwrap_or(0),
            });
        }
        let mut seen = HashMap::with_capacity(m);
        for (i, id) in ids.iter().enumerate() {
            if seen.insert(id.as_str(), i).is_some() {
                return Err(SimilarityError::DuplicateId(id.clone()));
            }
        }
        let (lo, hi) = kind.range();
        for (k, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < lo || value > hi {
                return Err(SimilarityError::OutOfRange {
                    row: k / m,
                    col: k % m,
                    value,
                    lo,
                    hi,
                });
            }
        }
        if kind == SimilarityKind::Cosine {
            for i in 0..m {
                for j in (i + 1)..m {
                    if (values[i * m + j] - values[j * m + i]).abs() > SYMMETRY_TOL {
                        return Err(SimilarityError::Asymmetric(i, j));
                    }
                }
            }
        }
        Ok(Self { ids, values, kind })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.ids.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reorders rows and columns into collection order. The matrix must
    /// cover exactly the collection's paintings.
    pub fn align_to(&self, collection: &Collection) -> Result<SimilarityMatrix, SimilarityError> {
        check_ids(&self.ids, collection, true)?;
        let m = self.ids.len();
        let mut source = vec![0usize; m];
        for (k, id) in self.ids.iter().enumerate() {
            source[collection.index_of(id).expect("checked above")] = k;
        }
        if source.iter().enumerate().all(|(i, &k)| i == k) {
            return Ok(self.clone());
        }
        Ok(self.permuted(&source))
    }

    /// Matrix whose row/column `i` is row/column `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> SimilarityMatrix {
        let m = self.ids.len();
        assert_eq!(order.len(), m);
        let mut values = Vec::with_capacity(m * m);
        for &src_row in order {
            let row = self.row(src_row);
            values.extend(order.iter().map(|&src_col| row[src_col]));
        }
        SimilarityMatrix {
            ids: order.iter().map(|&k| self.ids[k].clone()).collect(),
            values,
            kind: self.kind,
        }
    }

    /// Affine rescale of a cosine matrix into [0, 1], retagged as a
    /// probability matrix.
    pub fn to_probability(&self) -> SimilarityMatrix {
        let values = match self.kind {
            SimilarityKind::Cosine => self.values.iter().map(|v| (v + 1.0) / 2.0).collect(),
            SimilarityKind::IngestedProbability => self.values.clone(),
        };
        SimilarityMatrix {
            ids: self.ids.clone(),
            values,
            kind: SimilarityKind::IngestedProbability,
        }
    }

    pub fn write_to(&self, out: impl Write) -> Result<(), io::Error> {
        let mut out = BufWriter::new(out);
        let m = self.ids.len();
        writeln!(out, "{MATRIX_MAGIC} {FORMAT_VERSION} {m} {}", self.kind)?;
        writeln!(out, "{}", self.ids.join(" "))?;
        let mut line = String::new();
        for i in 0..m {
            line.clear();
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        out.flush()
    }
}

/// Cosine similarity of every pair of embeddings. Rows are computed in
/// parallel; each entry is the same sequential dot product regardless of
/// thread count, so the result is deterministic.
pub fn cosine_similarity_matrix(embeddings: &EmbeddingTable) -> Result<SimilarityMatrix, SimilarityError> {
    let m = embeddings.len();
    if m == 0 {
        return Err(SimilarityError::Empty);
    }
    let dim = embeddings.dim();
    let mut unit = vec![0.0; m * dim];
    for i in 0..m {
        let v = embeddings.vector(i);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(SimilarityError::ZeroNorm(embeddings.ids()[i].clone()));
        }
        for (dst, x) in unit[i * dim..(i + 1) * dim].iter_mut().zip(v) {
            *dst = x / norm;
        }
    }

    let mut values = vec![0.0; m * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let a = &unit[i * dim..(i + 1) * dim];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if i == j {
                1.0
            } else {
                // Dot product is commutative term by term, so (i, j) and
                // (j, i) come out bit-identical.
                let b = &unit[j * dim..(j + 1) * dim];
                dot(a, b).clamp(-1.0, 1.0)
            };
        }
    });

    Ok(SimilarityMatrix {
        ids: embeddings.ids().to_vec(),
        values,
        kind: SimilarityKind::Cosine,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn format_err(line: usize, message: impl Into<String>) -> SimilarityError {
    SimilarityError::Format {
        line,
        message: message.into(),
    }
}

fn parse_header<'a>(line: &'a str, magic: &str) -> Result<Vec<&'a str>, SimilarityError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != magic {
        return Err(format_err(1, format!("expected header `{magic} {FORMAT_VERSION} ...`")));
    }
    if fields[1] != FORMAT_VERSION {
        return Err(format_err(1, format!("unsupported version {:?}", fields[1])));
    }
    Ok(fields)
}

fn parse_usize(line: usize, field: &str, what: &str) -> Result<usize, SimilarityError> {
    field
        .parse()
        .map_err(|_| format_err(line, format!("invalid {what} {field:?}")))
}

fn parse_f64(line: usize, field: &str) -> Result<f64, SimilarityError> {
    field
        .parse()
        .map_err(|_| format_err(line, format!("invalid number {field:?}")))
}

pub fn read_similarity_matrix(reader: impl BufRead) -> Result<SimilarityMatrix, SimilarityError> {
    let mut lines = reader.lines();
    let mut next_line = |n: usize| -> Result<Option<String>, SimilarityError> {
        lines
            .next()
            .transpose()
            .map_err(|e| format_err(n, e.to_string()))
    };
    let header = next_line(1)?.ok_or_else(|| format_err(1, "empty file"))?;
    let fields = parse_header(&header, MATRIX_MAGIC)?;
    let m = parse_usize(1, fields[2], "size")?;
    let kind: SimilarityKind = fields[3].parse().map_err(|e: String| format_err(1, e))?;

    let ids: Vec<String> = next_line(2)?
        .ok_or_else(|| format_err(2, "missing id line"))?
        .split_whitespace()
        .map(str::to_owned)
        .collect();
    if ids.len() != m {
        return Err(format_err(2, format!("header declares {m} ids, found {}", ids.len())));
    }

    let mut values = Vec::with_capacity(m * m);
    let mut rows = 0;
    let mut n = 2;
    while let Some(line) = next_line(n + 1)? {
        n += 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split_whitespace() {
            values.push(parse_f64(n, field)?);
        }
        let found = values.len() - before;
        if found != m {
            return Err(SimilarityError::RowLength {
                row: rows,
                found,
                expected: m,
            });
        }
        rows += 1;
    }
    if rows != m {
        return Err(SimilarityError::NotSquare { ids: m, rows });
    }
    SimilarityMatrix::new(ids, values, kind)
}

/// Loads a matrix file. The kind tag in the header decides which range
/// check applies.
pub fn load_similarity_matrix(path: impl AsRef<Path>) -> Result<SimilarityMatrix, SimilarityError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_similarity_matrix(BufReader::new(file))
}

pub fn save_similarity_matrix(matrix: &SimilarityMatrix, path: impl AsRef<Path>) -> Result<(), SimilarityError> {
    let path = path.as_ref();
    if let Some(id) = matrix.ids.iter().find(|id| id.chars().any(char::is_whitespace) || id.is_empty()) {
        return Err(SimilarityError::UnwritableId(id.clone()));
    }
    let file = File::create(path).map_err(io_err(path))?;
    matrix.write_to(file).map_err(io_err(path))
}

pub fn read_embeddings(reader: impl BufRead) -> Result<EmbeddingTable, SimilarityError> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(1, "empty file"))?;
    let header = header.map_err(|e| format_err(1, e.to_string()))?;
    let fields = parse_header(&header, EMBEDDING_MAGIC)?;
    let m = parse_usize(1, fields[2], "count")?;
    let dim = parse_usize(1, fields[3], "dimension")?;
    if dim == 0 {
        return Err(format_err(1, "dimension must be positive"));
    }
    let mut table = EmbeddingTable::new(dim);
    let mut seen = HashMap::new();
    for (k, line) in lines {
        let n = k + 1;
        let line = line.map_err(|e| format_err(n, e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let vector = fields.map(|f| parse_f64(n, f)).collect::<Result<Vec<_>, _>>()?;
        if seen.insert(id.to_owned(), n).is_some() {
            return Err(SimilarityError::DuplicateId(id.to_owned()));
        }
        table.push(id, &vector)?;
    }
    if table.len() != m {
        return Err(format_err(1, format!("header declares {m} rows, found {}", table.len())));
    }
    Ok(table)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, SimilarityError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_embeddings(BufReader::new(file))
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<(), SimilarityError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(out, "{EMBEDDING_MAGIC} {FORMAT_VERSION} {} {}", table.len(), table.dim())?;
        for (i, id) in table.ids().iter().enumerate() {
            write!(out, "{id}")?;
            for v in table.vector(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len());
        for (id, v) in rows {
            t.push(*id, v).unwrap();
        }
        t
    }

    #[test]
    fn identical_vectors() {
        let a = cosine_similarity_matrix(&table(&[("a", &[0.3, 0.4]), ("b", &[0.3, 0.4])])).unwrap();
        assert_eq!(a.values(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn orthogonal_vectors() {
        let a = cosine_similarity_matrix(&table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])])).unwrap();
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn diagonal_unit_vector_pair() {
        let a = cosine_similarity_matrix(&table(&[("a", &[1.0, 0.0]), ("b", &[1.0, 1.0])])).unwrap();
        assert!((a.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_names_painting() {
        let err = cosine_similarity_matrix(&table(&[("a", &[1.0, 0.0]), ("nil", &[0.0, 0.0])])).unwrap_err();
        assert!(matches!(err, SimilarityError::ZeroNorm(id) if id == "nil"));
    }

    #[test]
    fn dimension_mismatch() {
        let mut t = EmbeddingTable::new(2);
        assert!(matches!(
            t.push("a", &[1.0]),
            Err(SimilarityError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn load_identity_like() {
        let text = "MOSAIC-SIM v1 3 probability\na b c\n1 0 0\n0 1 0\n0 0 1\n";
        let a = read_similarity_matrix(text.as_bytes()).unwrap();
        assert_eq!(a.kind(), SimilarityKind::IngestedProbability);
        assert!((0..3).all(|i| a.get(i, i) == 1.0));
    }

    #[test]
    fn four_ids_three_rows_is_not_square() {
        let text = "MOSAIC-SIM v1 4 probability\na b c d\n1 0 0 0\n0 1 0 0\n0 0 1 0\n";
        assert!(matches!(
            read_similarity_matrix(text.as_bytes()),
            Err(SimilarityError::NotSquare { ids: 4, rows: 3 })
        ));
    }

    #[test]
    fn probability_out_of_range() {
        let text = "MOSAIC-SIM v1 2 probability\na b\n1 1.5\n0.2 1\n";
        assert!(matches!(
            read_similarity_matrix(text.as_bytes()),
            Err(SimilarityError::OutOfRange { .. })
        ));
    }

    #[test]
    fn embeddings_parse() {
        let text = "MOSAIC-EMB v1 2 3\nx 1 0 0\ny 0 1 0.5\n";
        let t = read_embeddings(text.as_bytes()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.vector(1), &[0.0, 1.0, 0.5]);
        let bad = "MOSAIC-EMB v1 2 3\nx 1 0 0\n";
        assert!(read_embeddings(bad.as_bytes()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let t = table(&[("a", &[0.1, 0.7, -0.2]), ("b", &[1.0, 1.0, 0.3]), ("c", &[-0.5, 0.2, 0.9])]);
        let a = cosine_similarity_matrix(&t).unwrap().to_probability();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sim");
        save_similarity_matrix(&a, &path).unwrap();
        let b = load_similarity_matrix(&path).unwrap();
        assert_eq!(a.ids(), b.ids());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn permutation_is_consistent() {
        let t = table(&[("a", &[0.1, 0.7]), ("b", &[1.0, 1.0]), ("c", &[-0.5, 0.2])]);
        let a = cosine_similarity_matrix(&t).unwrap();
        let p = a.permuted(&[2, 0, 1]);
        for (i, &si) in [2usize, 0, 1].iter().enumerate() {
            for (j, &sj) in [2usize, 0, 1].iter().enumerate() {
                assert_eq!(p.get(i, j), a.get(si, sj));
            }
        }
    }
}

//! Dataset ingestion and bookkeeping of remaining vs. deleted points.
//!
//! Features are stored densely in row-major order. Class labels are remapped
//! to contiguous ids `0..k` ordered by their numeric source value, and the
//! source spelling of each class is kept so the mapping is stable across runs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max row norm tolerated after normalization.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
    classes: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset from row-major `features` and class ids.
    ///
    /// `classes[c]` is the source label of class `c`.
    pub fn new(features: Vec<f64>, labels: Vec<u32>, dim: usize, classes: Vec<String>) -> Result<Self> {
        if labels.is_empty() || dim == 0 || classes.is_empty() {
            return Err(Error::EmptyInput);
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch { expected: labels.len() * dim, found: features.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes.len()) {
            return Err(Error::InvalidConfig(format!("label id {bad} outside 0..{}", classes.len())));
        }
        Ok(Self { features, labels, dim, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.len()).map(|i| self.row_norm(i)).fold(0.0, f64::max)
    }

    /// Number of points per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// A copy with every feature multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { features: self.features.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    /// The rows `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Self {
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dim: self.dim,
            classes: self.classes.clone(),
        }
    }
}

/// Train/test file pair, optionally reduced to two source classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    /// Source labels kept and mapped to classes 0 and 1, in that order.
    #[serde(default)]
    pub binary_classes: Option<(String, String)>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_path.as_os_str().is_empty() || self.test_path.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("dataset paths must be non-empty".into()));
        }
        if let Some((a, b)) = &self.binary_classes {
            if label_key(a)? == label_key(b)? {
                return Err(Error::InvalidConfig(format!("binary classes must differ, got {a} twice")));
            }
        }
        Ok(())
    }
}

struct RawRow {
    label: String,
    entries: Vec<(usize, f64)>,
}

struct RawLibsvm {
    rows: Vec<RawRow>,
    max_index: usize,
}

fn label_key(text: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidConfig(format!("label {text:?} is not a number")))
}

fn read_raw<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<RawLibsvm> {
    let mut rows = Vec::new();
    let mut max_index = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: lineno, message };
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        let key = label.parse::<f64>().map_err(|_| bad(format!("invalid label {label:?}")))?;
        if !key.is_finite() {
            return Err(bad(format!("invalid label {label:?}")));
        }
        let mut entries = Vec::new();
        let mut last = 0;
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| bad(format!("expected idx:val, found {token:?}")))?;
            let idx: usize = idx.parse().map_err(|_| bad(format!("invalid index in {token:?}")))?;
            let val: f64 = val.parse().map_err(|_| bad(format!("invalid value in {token:?}")))?;
            if idx == 0 {
                return Err(bad("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(bad(format!("index {idx} not ascending")));
            }
            if !val.is_finite() {
                return Err(bad(format!("non-finite value in {token:?}")));
            }
            if let Some(dim) = expected_dim {
                if idx > dim {
                    return Err(Error::IndexExceedsDim { line: lineno, index: idx, dim });
                }
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        rows.push(RawRow { label: label.to_string(), entries });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(RawLibsvm { rows, max_index })
}

/// Distinct labels of `raws`, ordered by numeric value; first spelling wins.
fn class_table<'a>(raws: impl IntoIterator<Item = &'a RawLibsvm>) -> Vec<(f64, String)> {
    let mut table: Vec<(f64, String)> = Vec::new();
    for raw in raws {
        for row in &raw.rows {
            let key: f64 = row.label.parse().expect("validated while reading");
            if !table.iter().any(|(k, _)| *k == key) {
                table.push((key, row.label.clone()));
            }
        }
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    table
}

fn densify(raw: &RawLibsvm, dim: usize, table: &[(f64, String)]) -> Result<LabeledDataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for row in &raw.rows {
        let key: f64 = row.label.parse().expect("validated while reading");
        let Some(class) = table.iter().position(|(k, _)| *k == key) else {
            continue;
        };
        let start = features.len();
        features.resize(start + dim, 0.0);
        for &(idx, val) in &row.entries {
            features[start + idx] = val;
        }
        labels.push(class as u32);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    LabeledDataset::new(features, labels, dim, table.iter().map(|(_, s)| s.clone()).collect())
}

/// Parses LIBSVM text into a dense dataset.
///
/// Without `expected_dim` the dimension is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<LabeledDataset> {
    let raw = read_raw(reader, expected_dim)?;
    let dim = expected_dim.unwrap_or(raw.max_index).max(1);
    densify(&raw, dim, &class_table([&raw]))
}

pub fn read_libsvm_file(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<LabeledDataset> {
    parse_libsvm(BufReader::new(File::open(path)?), expected_dim)
}

/// Writes `ds` back as LIBSVM text; zero entries are omitted.
///
/// Values use Rust's shortest round-trip formatting, so reparsing is exact.
pub fn write_libsvm<W: Write>(ds: &LabeledDataset, mut out: W) -> io::Result<()> {
    for i in 0..ds.len() {
        write!(out, "{}", ds.classes[ds.label(i) as usize])?;
        for (j, v) in ds.row(i).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Loads a train/test pair sharing one label mapping and one dimension.
pub fn load_split(spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let train = read_raw(BufReader::new(File::open(&spec.train_path)?), None)?;
    let test = read_raw(BufReader::new(File::open(&spec.test_path)?), None)?;
    let table = match &spec.binary_classes {
        Some((neg, pos)) => vec![(label_key(neg)?, neg.clone()), (label_key(pos)?, pos.clone())],
        None => class_table([&train, &test]),
    };
    let dim = train.max_index.max(test.max_index).max(1);
    Ok((densify(&train, dim, &table)?, densify(&test, dim, &table)?))
}

/// Divides every row by the largest row norm; returns the normalized data
/// and that norm.
///
/// A largest norm within [`NORM_TOLERANCE`] of one is treated as one, which
/// makes the operation idempotent.
pub fn max_l2_normalize(ds: &LabeledDataset) -> Result<(LabeledDataset, f64)> {
    let scale = ds.max_row_norm();
    if scale == 0.0 {
        return Err(Error::Degenerate("all rows are zero".into()));
    }
    if (scale - 1.0).abs() <= NORM_TOLERANCE {
        return Ok((ds.clone(), 1.0));
    }
    let normalized = LabeledDataset { features: ds.features.iter().map(|v| v / scale).collect(), ..ds.clone() };
    Ok((normalized, scale))
}

/// Applies a scale computed on the training split to another split.
pub fn apply_scale(ds: &LabeledDataset, scale: f64) -> LabeledDataset {
    if scale == 1.0 {
        return ds.clone();
    }
    LabeledDataset { features: ds.features.iter().map(|v| v / scale).collect(), ..ds.clone() }
}

/// Partition of a dataset's points into remaining and deleted ids.
///
/// Both lists are kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetView {
    n_init: usize,
    remaining: Vec<usize>,
    deleted: Vec<usize>,
}

impl DatasetView {
    /// Every point of an `n`-point dataset remaining.
    pub fn full(n: usize) -> Self {
        Self { n_init: n, remaining: (0..n).collect(), deleted: Vec::new() }
    }

    pub fn n_init(&self) -> usize {
        self.n_init
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn deleted(&self) -> &[usize] {
        &self.deleted
    }

    pub fn is_remaining(&self, id: usize) -> bool {
        self.remaining.binary_search(&id).is_ok()
    }

    /// A new view with `ids` moved from remaining to deleted.
    pub fn delete_points(&self, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut incoming = BTreeSet::new();
        for &id in ids {
            if id >= self.n_init {
                return Err(Error::OutOfRange(id));
            }
            if !incoming.insert(id) {
                return Err(Error::DuplicateId(id));
            }
            if !self.is_remaining(id) {
                return Err(Error::AlreadyDeleted(id));
            }
        }
        let remaining = self.remaining.iter().copied().filter(|i| !incoming.contains(i)).collect();
        let mut deleted = self.deleted.clone();
        deleted.extend(incoming);
        deleted.sort_unstable();
        Ok(Self { n_init: self.n_init, remaining, deleted })
    }
}

const CACHE_MAGIC: &[u8; 4] = b"ULDS";
const CACHE_VERSION: u32 = 1;

/// Writes the binary cache: header, row-major f64 features, i32 labels.
pub fn write_cache<W: Write>(ds: &LabeledDataset, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(ds.len() as u64).to_le_bytes())?;
    out.write_all(&(ds.dim as u64).to_le_bytes())?;
    out.write_all(&(ds.num_classes() as u32).to_le_bytes())?;
    for v in &ds.features {
        out.write_all(&v.to_le_bytes())?;
    }
    for &l in &ds.labels {
        out.write_all(&(l as i32).to_le_bytes())?;
    }
    out.flush()
}

fn read_exact_array<const N: usize, R: Read>(input: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

/// Reads the binary cache. Class names default to the class ids.
pub fn read_cache<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut input = BufReader::new(input);
    let magic: [u8; 4] = read_exact_array(&mut input, "magic")?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a dataset cache (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_exact_array(&mut input, "version")?);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let n = u64::from_le_bytes(read_exact_array(&mut input, "header")?) as usize;
    let dim = u64::from_le_bytes(read_exact_array(&mut input, "header")?) as usize;
    let k = u32::from_le_bytes(read_exact_array(&mut input, "header")?) as usize;
    let mut features = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        features.push(f64::from_le_bytes(read_exact_array(&mut input, "features")?));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let l = i32::from_le_bytes(read_exact_array(&mut input, "labels")?);
        if l < 0 || l as usize >= k {
            return Err(Error::Format(format!("label {l} outside 0..{k}")));
        }
        labels.push(l as u32);
    }
    LabeledDataset::new(features, labels, dim, (0..k).map(|c| c.to_string()).collect())
}

fn classes_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".classes.json");
    PathBuf::from(name)
}

/// Writes the cache at `path` and the class-name table next to it.
pub fn save_cache(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_cache(ds, File::create(path)?)?;
    let table = serde_json::to_string_pretty(&ds.classes).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(classes_sidecar(path), table)?;
    Ok(())
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut ds = read_cache(File::open(path)?)?;
    let sidecar = classes_sidecar(path);
    if sidecar.exists() {
        let classes: Vec<String> =
            serde_json::from_str(&std::fs::read_to_string(sidecar)?).map_err(|e| Error::Format(e.to_string()))?;
        if classes.len() != ds.num_classes() {
            return Err(Error::Format("class table does not match cache".into()));
        }
        ds.classes = classes;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, dim: Option<usize>) -> Result<LabeledDataset> {
        parse_libsvm(text.as_bytes(), dim)
    }

    #[test]
    fn reads_sparse_line_densely() {
        let ds = parse("1 1:0.5 3:0.25\n", Some(3)).unwrap();
        assert_eq!(ds.row(0), &[0.5, 0.0, 0.25]);
        assert_eq!(ds.label(0), 0);
        assert_eq!(ds.class_names(), &["1".to_string()]);
    }

    #[test]
    fn signed_labels_map_to_contiguous_ids() {
        let ds = parse("-1 2:1.0\n+1 2:1.0\n", None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.row(0), ds.row(1));
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse("1 1:0.5\n1 2:x\n", None) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse("1 3:1\n1 2:1 1:1\n", None) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("1 4:1\n", Some(3)), Err(Error::IndexExceedsDim { index: 4, .. })));
        assert!(matches!(parse("\n\n", None), Err(Error::EmptyInput)));
        assert!(matches!(parse("1 0:1\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn normalization_divides_by_largest_norm() {
        let ds = LabeledDataset::new(vec![3.0, 4.0, 0.0, 1.0], vec![0, 0], 2, vec!["1".into()]).unwrap();
        let (norm, scale) = max_l2_normalize(&ds).unwrap();
        assert_eq!(scale, 5.0);
        assert!((norm.row(0)[0] - 0.6).abs() < 1e-15 && (norm.row(0)[1] - 0.8).abs() < 1e-15);
        assert!((norm.row(1)[1] - 0.2).abs() < 1e-15);

        let (again, scale) = max_l2_normalize(&norm).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(again, norm);
    }

    #[test]
    fn all_zero_rows_are_degenerate() {
        let ds = LabeledDataset::new(vec![0.0; 4], vec![0, 0], 2, vec!["1".into()]).unwrap();
        assert!(matches!(max_l2_normalize(&ds), Err(Error::Degenerate(_))));
    }

    #[test]
    fn delete_points_moves_ids() {
        let view = DatasetView::full(3);
        let v = view.delete_points(&[1]).unwrap();
        assert_eq!(v.remaining(), &[0, 2]);
        assert_eq!(v.deleted(), &[1]);
        assert_eq!(view.remaining(), &[0, 1, 2]);

        let all = v.delete_points(&[0, 2]).unwrap();
        assert!(all.remaining().is_empty());

        assert!(matches!(v.delete_points(&[1]), Err(Error::AlreadyDeleted(1))));
        assert!(matches!(v.delete_points(&[7]), Err(Error::OutOfRange(7))));
        assert!(matches!(v.delete_points(&[0, 0]), Err(Error::DuplicateId(0))));
        assert!(matches!(v.delete_points(&[]), Err(Error::EmptySubset)));
    }

    #[test]
    fn sequential_deletes_match_single_delete() {
        let view = DatasetView::full(4);
        let a = view.delete_points(&[0]).unwrap().delete_points(&[1]).unwrap();
        let b = view.delete_points(&[1, 0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_rejects_bad_magic_and_truncation() {
        let ds = parse("0 1:1.5 2:-2\n1 2:3\n", None).unwrap();
        let mut bytes = Vec::new();
        write_cache(&ds, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 4 + 4 * 8 + 2 * 4);
        let back = read_cache(bytes.as_slice()).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(matches!(read_cache(corrupt.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_cache(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn cache_file_keeps_class_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.ulds");
        let ds = parse("-1 1:1\n+1 1:2\n", None).unwrap();
        save_cache(&ds, &path).unwrap();
        assert_eq!(load_cache(&path).unwrap(), ds);
    }

    #[test]
    fn split_shares_mapping_and_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("train");
        let test = dir.path().join("test");
        std::fs::write(&train, "3 1:1\n8 2:1\n5 1:1\n").unwrap();
        std::fs::write(&test, "8 4:1\n3 1:2\n").unwrap();
        let spec = SplitSpec { train_path: train, test_path: test, binary_classes: Some(("3".into(), "8".into())) };
        let (tr, te) = load_split(&spec).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.dim(), 4);
        assert_eq!(te.dim(), 4);
        assert_eq!(tr.labels(), &[0, 1]);
        assert_eq!(te.labels(), &[1, 0]);

        let same = SplitSpec { binary_classes: Some(("3".into(), "3.0".into())), ..spec };
        assert!(matches!(same.validate(), Err(Error::InvalidConfig(_))));
    }

    fn arb_dataset() -> impl Strategy<Value = LabeledDataset> {
        (1usize..6, 1usize..20).prop_flat_map(|(dim, n)| {
            (
                proptest::collection::vec(prop_oneof![Just(0.0), -1e3f64..1e3, -1e-8f64..1e-8], n * dim),
                proptest::collection::vec(0u32..3, n),
            )
                .prop_map(move |(features, labels)| {
                    // Pin the dimension so trailing zero columns survive the round trip.
                    let mut features = features;
                    features[dim - 1] = 1.0;
                    // Class ids must be contiguous for the remapping to be an identity.
                    let used: BTreeSet<u32> = labels.iter().copied().collect();
                    let labels = labels.iter().map(|l| used.range(..l).count() as u32).collect();
                    let classes = (0..used.len()).map(|c| (c as i32 * 2 - 1).to_string()).collect();
                    LabeledDataset::new(features, labels, dim, classes).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn libsvm_round_trip_is_exact(ds in arb_dataset()) {
            let mut text = Vec::new();
            write_libsvm(&ds, &mut text).unwrap();
            let back = parse_libsvm(text.as_slice(), None).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn normalization_is_idempotent(ds in arb_dataset()) {
            let (once, _) = max_l2_normalize(&ds).unwrap();
            prop_assert!(once.max_row_norm() <= 1.0 + NORM_TOLERANCE);
            let (twice, scale) = max_l2_normalize(&once).unwrap();
            prop_assert_eq!(scale, 1.0);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn view_partition_survives_any_delete_sequence(
            n in 1usize..40,
            picks in proptest::collection::vec(proptest::collection::vec(0usize..1000, 1..5), 0..10),
        ) {
            let mut view = DatasetView::full(n);
            for pick in picks {
                if view.remaining().is_empty() {
                    break;
                }
                let mut ids: Vec<usize> = pick.iter().map(|p| view.remaining()[p % view.remaining().len()]).collect();
                ids.sort_unstable();
                ids.dedup();
                view = view.delete_points(&ids).unwrap();
                let mut union: Vec<usize> = view.remaining().iter().chain(view.deleted()).copied().collect();
                union.sort_unstable();
                prop_assert_eq!(union, (0..n).collect::<Vec<_>>());
                prop_assert!(view.remaining().windows(2).all(|w| w[0] < w[1]));
                prop_assert!(view.deleted().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

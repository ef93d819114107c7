//! Dataset ingestion and preparation: CSV loading, ordinal encoding of
//! categorical columns, z-score normalization, deterministic splitting,
//! and seeded mini-batch planning.
//!
//! All randomness here flows through `ChaCha8Rng` seeded from explicit
//! integer seeds, so splits and batch orders are reproducible across
//! platforms and runs. Data objects are immutable once built.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Ordinal codes per categorical column: column name -> label -> code.
pub type EncodingPolicy = BTreeMap<String, BTreeMap<String, f64>>;

/// Cell values treated as missing; rows containing one are dropped at
/// load time.
const MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow { row: u64, expected: usize, got: usize },
    #[error("target column not found: {0}")]
    TargetColumnNotFound(String),
    #[error("table needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("table needs at least one feature column besides the target")]
    NoFeatureColumns,
    #[error("column {column}: label {label:?} not covered by the encoding policy")]
    UnmappedLabel { column: String, label: String },
    #[error("column {column}, row {row}: cannot parse {value:?} as a number (add an encoding entry for categorical columns)")]
    NonNumeric { column: String, row: usize, value: String },
    #[error("column {column}, row {row}: non-finite value after encoding")]
    NonFinite { column: String, row: usize },
    #[error("dimension mismatch: normalizer has {expected} columns, data has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("split with ratio {ratio} leaves an empty side for {rows} rows")]
    DegenerateSplit { ratio: f64, rows: usize },
    #[error("mini-batch size must lie in 1..={rows}, got {batch}")]
    BadBatchSize { batch: usize, rows: usize },
}

/// Raw text table straight from a delimited file. Cells keep their text
/// form; numeric coercion happens in [`encode`].
#[derive(Debug, Clone)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub cells: Vec<Vec<String>>,
    pub target: usize,
    /// Rows removed at load time because a cell was missing.
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

/// Fully numeric dataset: `n` rows of `m` features plus one target each.
/// All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    pub feature_names: Vec<String>,
    n: usize,
    m: usize,
}

impl NumericDataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self, DataError> {
        let m = feature_names.len();
        if m == 0 {
            return Err(DataError::NoFeatureColumns);
        }
        let n = targets.len();
        assert_eq!(features.len(), n * m, "feature matrix shape mismatch");
        for (i, &t) in targets.iter().enumerate() {
            if !t.is_finite() {
                return Err(DataError::NonFinite { column: "<target>".into(), row: i + 1 });
            }
        }
        for (idx, &v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    column: feature_names[idx % m].clone(),
                    row: idx / m + 1,
                });
            }
        }
        Ok(Self { features, targets, feature_names, n, m })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// New dataset holding the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.m);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Self {
            features,
            targets,
            feature_names: self.feature_names.clone(),
            n: indices.len(),
            m: self.m,
        }
    }
}

/// Per-column means and sample standard deviations fitted on training
/// data. The last entry of each vector belongs to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Train/test partition produced by [`split`].
#[derive(Debug, Clone)]
pub struct Split {
    pub train: NumericDataset,
    pub test: NumericDataset,
    pub seed: u64,
}

/// Mini-batch plan over a fixed number of training rows. Each epoch gets
/// a fresh permutation seeded by `seed + epoch`; the final partial batch
/// is kept.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub n_rows: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(n_rows: usize, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0 || batch_size > n_rows {
            return Err(DataError::BadBatchSize { batch: batch_size, rows: n_rows });
        }
        Ok(Self { n_rows, batch_size, seed })
    }

    /// Index batches for one epoch; their concatenation is a permutation
    /// of `0..n_rows`.
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n_rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }
}

/// Loads a comma-delimited CSV with a header row.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<RawTable, DataError> {
    load_csv_delim(path, target, b',')
}

/// Loads a delimited text file with a header row.
pub fn load_csv_delim(
    path: impl AsRef<Path>,
    target: &str,
    delimiter: u8,
) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_table(file, target, delimiter)
}

/// Parses delimited text from any reader. Rows with missing cells
/// (empty, `?`, or `NA`) are dropped and counted.
pub fn read_table(reader: impl Read, target: &str, delimiter: u8) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(delimiter)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let columns: Vec<String> = headers.iter().map(str::to_owned).collect();
    let target_idx = columns
        .iter()
        .position(|c| c == target)
        .ok_or_else(|| DataError::TargetColumnNotFound(target.to_owned()))?;

    let mut cells = Vec::new();
    let mut dropped = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != columns.len() {
            let row = record.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
            return Err(DataError::RaggedRow {
                row,
                expected: columns.len(),
                got: record.len(),
            });
        }
        let row: Vec<String> = record.iter().map(str::to_owned).collect();
        if row.iter().any(|c| MISSING_MARKERS.contains(&c.as_str())) {
            dropped += 1;
            continue;
        }
        cells.push(row);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing cells");
    }
    if cells.len() < 2 {
        return Err(DataError::TooFewRows(cells.len()));
    }
    Ok(RawTable { columns, cells, target: target_idx, dropped_rows: dropped })
}

/// Converts a raw table to numbers. Columns named in the policy are
/// mapped through their ordinal codes; every other column (including the
/// target) must parse as a number.
pub fn encode(table: &RawTable, policy: &EncodingPolicy) -> Result<NumericDataset, DataError> {
    let feature_cols: Vec<usize> =
        (0..table.n_cols()).filter(|&j| j != table.target).collect();
    if feature_cols.is_empty() {
        return Err(DataError::NoFeatureColumns);
    }
    let feature_names: Vec<String> =
        feature_cols.iter().map(|&j| table.columns[j].clone()).collect();

    let parse_cell = |j: usize, row: usize, cell: &str| -> Result<f64, DataError> {
        let column = &table.columns[j];
        let value = match policy.get(column) {
            Some(mapping) => *mapping.get(cell).ok_or_else(|| DataError::UnmappedLabel {
                column: column.clone(),
                label: cell.to_owned(),
            })?,
            None => cell.parse::<f64>().map_err(|_| DataError::NonNumeric {
                column: column.clone(),
                row: row + 1,
                value: cell.to_owned(),
            })?,
        };
        if !value.is_finite() {
            return Err(DataError::NonFinite { column: column.clone(), row: row + 1 });
        }
        Ok(value)
    };

    let mut features = Vec::with_capacity(table.n_rows() * feature_cols.len());
    let mut targets = Vec::with_capacity(table.n_rows());
    for (i, row) in table.cells.iter().enumerate() {
        for &j in &feature_cols {
            features.push(parse_cell(j, i, &row[j])?);
        }
        targets.push(parse_cell(table.target, i, &row[table.target])?);
    }
    NumericDataset::new(feature_names, features, targets)
}

/// Fits per-column means and sample standard deviations (divisor `n-1`)
/// over features and target. Constant columns store a std of 1 so they
/// normalize to a constant 0 instead of dividing by zero.
pub fn zscore_fit(train: &NumericDataset) -> Normalizer {
    let n = train.n_rows();
    let m = train.n_features();
    let mut means = vec![0.0; m + 1];
    let mut stds = vec![0.0; m + 1];
    for i in 0..n {
        for (j, &v) in train.row(i).iter().enumerate() {
            means[j] += v;
        }
        means[m] += train.target(i);
    }
    for mean in means.iter_mut() {
        *mean /= n as f64;
    }
    for i in 0..n {
        for (j, &v) in train.row(i).iter().enumerate() {
            stds[j] += (v - means[j]) * (v - means[j]);
        }
        stds[m] += (train.target(i) - means[m]) * (train.target(i) - means[m]);
    }
    for std in stds.iter_mut() {
        *std = (*std / (n as f64 - 1.0)).sqrt();
        if *std == 0.0 {
            *std = 1.0;
        }
    }
    Normalizer { means, stds }
}

/// Applies `(v - mean) / std` per column, targets included, using the
/// statistics stored in the normalizer (i.e. the training statistics).
pub fn zscore_apply(norm: &Normalizer, data: &NumericDataset) -> Result<NumericDataset, DataError> {
    let m = data.n_features();
    if norm.means.len() != m + 1 {
        return Err(DataError::DimensionMismatch { expected: norm.means.len(), got: m + 1 });
    }
    let mut features = Vec::with_capacity(data.n_rows() * m);
    let mut targets = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        for (j, &v) in data.row(i).iter().enumerate() {
            features.push((v - norm.means[j]) / norm.stds[j]);
        }
        targets.push((data.target(i) - norm.means[m]) / norm.stds[m]);
    }
    NumericDataset::new(data.feature_names.clone(), features, targets)
}

/// Deterministic shuffled split: `floor(ratio * n)` rows go to the
/// training side. The same seed always produces the same membership.
pub fn split(data: &NumericDataset, ratio: f64, seed: u64) -> Result<Split, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    let n = data.n_rows();
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::DegenerateSplit { ratio, rows: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train = data.select(&order[..n_train]);
    let test = data.select(&order[n_train..]);
    Ok(Split { train, test, seed })
}

/// Index batches for one epoch of `n_rows` training rows; see
/// [`BatchPlan::epoch_batches`].
pub fn batches(
    n_rows: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>, DataError> {
    Ok(BatchPlan::new(n_rows, batch_size, seed)?.epoch_batches(epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn table(text: &str, target: &str) -> Result<RawTable, DataError> {
        read_table(Cursor::new(text.as_bytes()), target, b',')
    }

    fn simple_dataset(cols: &[&str], rows: &[&[f64]], targets: &[f64]) -> NumericDataset {
        let features: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        NumericDataset::new(cols.iter().map(|s| s.to_string()).collect(), features, targets.to_vec())
            .unwrap()
    }

    #[test]
    fn load_basic_table() {
        let t = table("a,b,y\n1,2,3\n4,5,6\n7,8,9\n", "y").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 3);
        assert_eq!(t.target, 2);
        assert_eq!(t.dropped_rows, 0);
    }

    #[test]
    fn load_missing_target_column() {
        let err = table("a,b,y\n1,2,3\n4,5,6\n", "z").unwrap_err();
        assert!(matches!(err, DataError::TargetColumnNotFound(ref c) if c == "z"));
    }

    #[test]
    fn load_keeps_text_columns() {
        let t = table("sex,len,y\nM,1.0,3\nF,2.0,4\n", "y").unwrap();
        assert_eq!(t.cells[0][0], "M");
    }

    #[test]
    fn load_ragged_row_names_row_number() {
        let err = table("a,b,y\n1,2,3\n4,5\n", "y").unwrap_err();
        match err {
            DataError::RaggedRow { row, expected, got } => {
                assert_eq!(row, 3); // file line: header is line 1
                assert_eq!(expected, 3);
                assert_eq!(got, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_drops_rows_with_missing_cells() {
        let t = table("a,b,y\n1,?,3\n4,5,6\n7,8,9\nNA,1,2\n", "y").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.dropped_rows, 2);
    }

    #[test]
    fn encode_ordinal_mapping_gives_abalone_feature_count() {
        // Abalone-shaped: categorical sex + 7 numeric features + target.
        let mut text = String::from("Sex,C1,C2,C3,C4,C5,C6,C7,Rings\n");
        text.push_str("M,1,2,3,4,5,6,7,9\n");
        text.push_str("F,2,3,4,5,6,7,8,10\n");
        text.push_str("I,3,4,5,6,7,8,9,11\n");
        let t = table(&text, "Rings").unwrap();
        let mut policy = EncodingPolicy::new();
        policy.insert(
            "Sex".into(),
            [("M".into(), 0.0), ("F".into(), 1.0), ("I".into(), 2.0)].into(),
        );
        let d = encode(&t, &policy).unwrap();
        assert_eq!(d.n_features(), 8);
        assert_eq!(d.row(0)[0], 0.0);
        assert_eq!(d.row(1)[0], 1.0);
        assert_eq!(d.row(2)[0], 2.0);
        assert_eq!(d.target(2), 11.0);
    }

    #[test]
    fn encode_identity_without_categoricals() {
        let t = table("a,b,y\n1,2,3\n4,5,6\n", "y").unwrap();
        let d = encode(&t, &EncodingPolicy::new()).unwrap();
        assert_eq!(d.row(0), &[1.0, 2.0]);
        assert_eq!(d.row(1), &[4.0, 5.0]);
        assert_eq!(d.targets(), &[3.0, 6.0]);
    }

    #[test]
    fn encode_unmapped_label_errors() {
        let t = table("sex,a,y\nM,1,2\nX,2,3\n", "y").unwrap();
        let mut policy = EncodingPolicy::new();
        policy.insert("sex".into(), [("M".into(), 0.0)].into());
        let err = encode(&t, &policy).unwrap_err();
        match err {
            DataError::UnmappedLabel { column, label } => {
                assert_eq!(column, "sex");
                assert_eq!(label, "X");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn encode_non_numeric_without_mapping_errors() {
        let t = table("a,b,y\nfoo,2,3\nbar,5,6\n", "y").unwrap();
        let err = encode(&t, &EncodingPolicy::new()).unwrap_err();
        assert!(matches!(err, DataError::NonNumeric { ref column, .. } if column == "a"));
    }

    #[test]
    fn zscore_fit_consecutive_integers() {
        let d = simple_dataset(&["x"], &[&[1.0], &[2.0], &[3.0]], &[0.0, 0.0, 0.0]);
        let norm = zscore_fit(&d);
        assert_eq!(norm.means[0], 2.0);
        assert_eq!(norm.stds[0], 1.0); // sample std of 1,2,3
    }

    #[test]
    fn zscore_fit_constant_column_stores_unit_std() {
        let d = simple_dataset(&["x"], &[&[5.0], &[5.0], &[5.0]], &[1.0, 2.0, 3.0]);
        let norm = zscore_fit(&d);
        assert_eq!(norm.means[0], 5.0);
        assert_eq!(norm.stds[0], 1.0);
        let z = zscore_apply(&norm, &d).unwrap();
        assert_eq!(z.row(0)[0], 0.0);
    }

    #[test]
    fn zscore_fit_columns_are_independent() {
        let d = simple_dataset(
            &["x", "w"],
            &[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 30.0]],
            &[0.0, 0.0, 0.0],
        );
        let norm = zscore_fit(&d);
        assert_eq!(norm.means[..2], [2.0, 20.0]);
        assert_eq!(norm.stds[0], 1.0);
        assert_eq!(norm.stds[1], 10.0);
    }

    #[test]
    fn zscore_apply_centers_training_data() {
        let d = simple_dataset(
            &["x", "w"],
            &[&[1.0, -3.0], &[4.0, 0.5], &[9.0, 2.0], &[2.5, 7.0]],
            &[10.0, 20.0, 30.0, 40.0],
        );
        let norm = zscore_fit(&d);
        let z = zscore_apply(&norm, &d).unwrap();
        for j in 0..2 {
            let mean: f64 = (0..4).map(|i| z.row(i)[j]).sum::<f64>() / 4.0;
            let var: f64 =
                (0..4).map(|i| (z.row(i)[j] - mean) * (z.row(i)[j] - mean)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
        let tmean: f64 = z.targets().iter().sum::<f64>() / 4.0;
        assert!(tmean.abs() < 1e-12);
    }

    #[test]
    fn zscore_apply_plain_arithmetic() {
        let norm = Normalizer { means: vec![2.0, 0.0], stds: vec![1.0, 1.0] };
        let d = simple_dataset(&["x"], &[&[4.0], &[2.0]], &[0.0, 0.0]);
        let z = zscore_apply(&norm, &d).unwrap();
        assert_eq!(z.row(0)[0], 2.0);
        assert_eq!(z.row(1)[0], 0.0);
    }

    #[test]
    fn zscore_apply_uses_train_statistics_on_test_data() {
        let train = simple_dataset(&["x"], &[&[0.0], &[2.0]], &[0.0, 2.0]);
        let test = simple_dataset(&["x"], &[&[10.0], &[14.0]], &[10.0, 14.0]);
        let norm = zscore_fit(&train);
        let z = zscore_apply(&norm, &test).unwrap();
        // train stats: mean 1, std sqrt(2); test's own would be mean 12, std ~2.83
        let expected = (10.0 - 1.0) / 2.0f64.sqrt();
        assert!((z.row(0)[0] - expected).abs() < 1e-12);
        let own = zscore_apply(&zscore_fit(&test), &test).unwrap();
        assert!((z.row(0)[0] - own.row(0)[0]).abs() > 1.0);
    }

    #[test]
    fn zscore_apply_dimension_mismatch() {
        let norm = Normalizer { means: vec![0.0, 0.0, 0.0], stds: vec![1.0, 1.0, 1.0] };
        let d = simple_dataset(&["x"], &[&[1.0], &[2.0]], &[0.0, 0.0]);
        assert!(matches!(zscore_apply(&norm, &d), Err(DataError::DimensionMismatch { .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let targets: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let d = simple_dataset(&["x"], &refs, &targets);
        let s = split(&d, 0.7, 42).unwrap();
        assert_eq!(s.train.n_rows(), 7);
        assert_eq!(s.test.n_rows(), 3);
        let s2 = split(&d, 0.7, 42).unwrap();
        assert_eq!(s.train, s2.train);
        assert_eq!(s.test, s2.test);
    }

    #[test]
    fn split_different_seeds_differ() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let targets: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = simple_dataset(&["x"], &refs, &targets);
        let a = split(&d, 0.7, 1).unwrap();
        let b = split(&d, 0.7, 2).unwrap();
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let d = simple_dataset(&["x"], &[&[1.0], &[2.0]], &[0.0, 0.0]);
        assert!(matches!(split(&d, 0.0, 0), Err(DataError::BadRatio(_))));
        assert!(matches!(split(&d, 1.0, 0), Err(DataError::BadRatio(_))));
    }

    #[test]
    fn batch_sizes_with_partial_tail() {
        let bs = batches(10, 4, 0, 0).unwrap();
        let sizes: Vec<usize> = bs.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn batch_full_dataset() {
        let bs = batches(10, 10, 0, 0).unwrap();
        assert_eq!(bs.len(), 1);
        assert_eq!(bs[0].len(), 10);
    }

    #[test]
    fn batch_epoch_covers_every_index_once() {
        for epoch in 0..3 {
            let bs = batches(17, 5, 9, epoch).unwrap();
            let mut seen: Vec<usize> = bs.into_iter().flatten().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..17).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batch_rejects_bad_sizes() {
        assert!(matches!(batches(10, 0, 0, 0), Err(DataError::BadBatchSize { .. })));
        assert!(matches!(batches(10, 11, 0, 0), Err(DataError::BadBatchSize { .. })));
    }

    #[test]
    fn batch_epochs_reshuffle() {
        let a = batches(64, 64, 3, 0).unwrap();
        let b = batches(64, 64, 3, 1).unwrap();
        assert_ne!(a[0], b[0]);
    }
}

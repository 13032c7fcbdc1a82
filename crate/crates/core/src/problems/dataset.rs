use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{Domain, StreamRng};

/// Inputs (rows = instances, `d` columns) paired with targets (`m` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, name: impl Into<String>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension {
                expected: inputs.nrows(),
                got: targets.nrows(),
            });
        }
        if inputs.nrows() == 0 || inputs.ncols() == 0 || targets.ncols() == 0 {
            return Err(Error::InsufficientData("dataset has no rows or no columns".into()));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset contains non-finite entries".into()));
        }
        Ok(Self {
            inputs,
            targets,
            name: name.into(),
        })
    }

    /// Build from row slices.
    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>], name: &str) -> Result<Self> {
        let n = inputs.len();
        let d = inputs.first().map_or(0, Vec::len);
        let m = targets.first().map_or(0, Vec::len);
        if inputs.iter().any(|r| r.len() != d) || targets.iter().any(|r| r.len() != m) {
            return Err(Error::Config("ragged rows".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| inputs[i][j]);
        let y = DMatrix::from_fn(targets.len(), m, |i, j| targets[i][j]);
        Self::new(x, y, name)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.ncols()
    }

    /// Center every input column and scale it to unit (population) variance.
    /// Constant columns are only centered.
    pub fn standardized(mut self) -> Self {
        let n = self.len() as f64;
        for mut col in self.inputs.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let var = col.norm_squared() / n;
            if var > 0.0 {
                col /= var.sqrt();
            }
        }
        self
    }

    /// Add i.i.d. `N(0, eps^2)` noise to every input entry.
    pub fn smoothed(mut self, eps: f64, seed: u64) -> Self {
        if eps > 0.0 {
            let mut rng = StreamRng::new(seed, Domain::Data, 0);
            for v in self.inputs.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += eps * z;
            }
        }
        self
    }

    /// Append a constant-one input column.
    pub fn with_intercept(mut self) -> Self {
        let n = self.len();
        let d = self.n_features();
        self.inputs = self.inputs.insert_column(d, 1.0);
        debug_assert_eq!(self.inputs.nrows(), n);
        self
    }
}

/// Options for [`load_csv_dataset`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Column names (when the file has a header) or 0-based indices; `last`
    /// selects the final column.
    pub target_columns: Vec<String>,
    pub standardize: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            target_columns: vec!["last".into()],
            standardize: false,
        }
    }
}

fn parse_cell(path: &Path, row: usize, column: usize, raw: &str) -> Result<f64> {
    let cell = raw.trim().trim_matches('"');
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message: format!("not a finite number: `{cell}`"),
        })
}

/// Read a delimited numeric file. A header row is detected when the first
/// row contains a non-numeric cell. Rows and columns in diagnostics are
/// 1-based file positions.
pub fn load_csv_dataset(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }

    let first_numeric = records[0]
        .iter()
        .all(|c| c.trim().trim_matches('"').parse::<f64>().is_ok());
    let header: Option<Vec<String>> = if first_numeric {
        None
    } else {
        Some(
            records[0]
                .iter()
                .map(|c| c.trim().trim_matches('"').to_string())
                .collect(),
        )
    };
    let body_start = usize::from(header.is_some());
    let width = records[0].len();
    if records.len() == body_start {
        return Err(Error::Empty(path.to_path_buf()));
    }

    let mut targets = Vec::new();
    for sel in &opts.target_columns {
        let idx = if sel == "last" {
            width - 1
        } else if let Ok(i) = sel.parse::<usize>() {
            i
        } else if let Some(h) = &header {
            h.iter()
                .position(|name| name == sel)
                .ok_or_else(|| Error::UnknownName {
                    kind: "column",
                    name: sel.clone(),
                })?
        } else {
            return Err(Error::UnknownName {
                kind: "column",
                name: sel.clone(),
            });
        };
        if idx >= width {
            return Err(Error::Config(format!("target column {idx} out of range (width {width})")));
        }
        targets.push(idx);
    }
    let features: Vec<usize> = (0..width).filter(|j| !targets.contains(j)).collect();

    let n = records.len() - body_start;
    let mut x = DMatrix::zeros(n, features.len());
    let mut y = DMatrix::zeros(n, targets.len());
    for (i, rec) in records[body_start..].iter().enumerate() {
        let row = i + body_start + 1;
        if rec.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (k, &j) in features.iter().enumerate() {
            x[(i, k)] = parse_cell(path, row, j + 1, &rec[j])?;
        }
        for (k, &j) in targets.iter().enumerate() {
            y[(i, k)] = parse_cell(path, row, j + 1, &rec[j])?;
        }
    }

    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let ds = Dataset::new(x, y, name)?;
    Ok(if opts.standardize { ds.standardized() } else { ds })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_csv_exact() {
        let f = write("a,b,y\n1,2,3\n4,5,6\n7.5,-8,9e-1\n");
        let ds = load_csv_dataset(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.inputs, DMatrix::from_row_slice(3, 2, &[1., 2., 4., 5., 7.5, -8.]));
        assert_eq!(ds.targets, DMatrix::from_row_slice(3, 1, &[3., 6., 0.9]));
    }

    #[test]
    fn headerless_semicolon_and_named_targets() {
        let f = write("1;2;3\n4;5;6\n");
        let opts = CsvOptions {
            delimiter: b';',
            target_columns: vec!["0".into()],
            standardize: false,
        };
        let ds = load_csv_dataset(f.path(), &opts).unwrap();
        assert_eq!(ds.targets, DMatrix::from_row_slice(2, 1, &[1., 4.]));
        assert_eq!(ds.inputs, DMatrix::from_row_slice(2, 2, &[2., 3., 5., 6.]));

        let f = write("\"fixed acidity\";\"quality\"\n7.0;6\n6.3;5\n");
        let opts = CsvOptions {
            delimiter: b';',
            target_columns: vec!["quality".into()],
            standardize: false,
        };
        let ds = load_csv_dataset(f.path(), &opts).unwrap();
        assert_eq!(ds.targets[(1, 0)], 5.0);
    }

    #[test]
    fn standardization() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64 * 0.37 + 3.0, ((i * i) % 7) as f64 - 100.0])
            .collect();
        let ys: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows(&rows, &ys, "t").unwrap().standardized();
        for col in ds.inputs.column_iter() {
            let mean = col.sum() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagnostics() {
        let f = write("1,2\n3,abc\n");
        match load_csv_dataset(f.path(), &CsvOptions::default()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let f = write("");
        assert!(matches!(
            load_csv_dataset(f.path(), &CsvOptions::default()),
            Err(Error::Empty(_))
        ));
        let f = write("x,y\n");
        assert!(matches!(
            load_csv_dataset(f.path(), &CsvOptions::default()),
            Err(Error::Empty(_))
        ));
        let f = write("1,2\n3\n");
        assert!(matches!(
            load_csv_dataset(f.path(), &CsvOptions::default()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn intercept_and_smoothing() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[vec![0.0], vec![1.0]], "t").unwrap();
        let with = ds.clone().with_intercept();
        assert_eq!(with.inputs, DMatrix::from_row_slice(2, 2, &[1., 1., 2., 1.]));
        assert_eq!(ds.clone().smoothed(0.0, 1), ds);
        assert_ne!(ds.clone().smoothed(0.5, 1), ds);
        assert_eq!(ds.clone().smoothed(0.5, 1), ds.smoothed(0.5, 1));
    }
}

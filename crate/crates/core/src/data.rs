//! Longitudinal dataset container: a common time grid, an `n x p` value
//! matrix, and an observation mask for arbitrary missingness.
//!
//! Two CSV layouts are supported. The long format has a `case_id,time,value`
//! header and one observed cell per row; missing cells are simply absent.
//! The matrix format has a `case_id,<p column names>` header, one case per
//! row with `NaN` marking missing cells, and the grid in a separate
//! one-value-per-line file (an optional leading `time` header is accepted).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Longitudinal observations of `n` cases over a shared grid of `p` times.
///
/// Unobserved cells hold `NaN` in [`values`](Self::values); always consult
/// [`mask`](Self::mask) (or the index-set accessors) before reading a cell.
#[derive(Debug, Clone)]
pub struct LongitudinalDataset<T> {
    grid: Vec<T>,
    values: Array2<T>,
    mask: Array2<bool>,
    case_ids: Vec<String>,
}

/// Equality ignores the (NaN) payload of unobserved cells.
impl<T: Real> PartialEq for LongitudinalDataset<T> {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.mask == other.mask
            && self.case_ids == other.case_ids
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &observed)| !observed || a == b)
    }
}

impl<T: Real> LongitudinalDataset<T> {
    /// Assemble and validate a dataset.
    ///
    /// Columns without a single observation are dropped with a warning; a
    /// case without a single observation is an error. Unobserved cells are
    /// canonicalized to `NaN`.
    pub fn new(
        grid: Vec<T>,
        values: Array2<T>,
        mask: Array2<bool>,
        case_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = values.dim();
        if grid.len() != p || mask.dim() != (n, p) || case_ids.len() != n {
            return Err(Error::ShapeMismatch {
                what: "dataset",
                details: format!(
                    "values {n}x{p}, mask {}x{}, grid {}, case_ids {}",
                    mask.nrows(),
                    mask.ncols(),
                    grid.len(),
                    case_ids.len()
                ),
            });
        }
        if n == 0 || p == 0 {
            return Err(Error::EmptySample { what: "dataset" });
        }
        if grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite { what: "time grid" });
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "time grid must be strictly increasing".to_string(),
            });
        }
        {
            let mut seen = HashMap::new();
            for (i, id) in case_ids.iter().enumerate() {
                if let Some(first) = seen.insert(id.as_str(), i) {
                    return Err(Error::InvalidParameter {
                        name: "case_ids",
                        reason: format!("case `{id}` appears at rows {first} and {i}"),
                    });
                }
            }
        }

        // Drop columns with no observations at all.
        let keep: Vec<usize> = (0..p)
            .filter(|&j| (0..n).any(|i| mask[[i, j]]))
            .collect();
        let (grid, values, mask) = if keep.len() == p {
            (grid, values, mask)
        } else {
            warn!(
                "dropping {} grid column(s) with no observations: {:?}",
                p - keep.len(),
                (0..p).filter(|j| !keep.contains(j)).collect::<Vec<_>>()
            );
            let g: Vec<T> = keep.iter().map(|&j| grid[j]).collect();
            let mut v = Array2::zeros((n, keep.len()));
            let mut m = Array2::from_elem((n, keep.len()), false);
            for i in 0..n {
                for (jj, &j) in keep.iter().enumerate() {
                    v[[i, jj]] = values[[i, j]];
                    m[[i, jj]] = mask[[i, j]];
                }
            }
            (g, v, m)
        };
        if grid.is_empty() {
            return Err(Error::EmptySample { what: "dataset" });
        }

        let mut values = values;
        for i in 0..n {
            let mut any = false;
            for j in 0..grid.len() {
                if mask[[i, j]] {
                    any = true;
                    if !values[[i, j]].is_finite() {
                        return Err(Error::NonFinite { what: "observed cell" });
                    }
                } else {
                    values[[i, j]] = T::nan();
                }
            }
            if !any {
                return Err(Error::InvalidParameter {
                    name: "mask",
                    reason: format!("case `{}` has no observed cells", case_ids[i]),
                });
            }
        }

        Ok(Self {
            grid,
            values,
            mask,
            case_ids,
        })
    }

    /// Fully observed dataset.
    pub fn complete(grid: Vec<T>, values: Array2<T>, case_ids: Vec<String>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(grid, values, mask, case_ids)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn observed_cells(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Fraction of observed cells, in `(0, 1]`.
    pub fn decimation_rate(&self) -> f64 {
        self.observed_cells() as f64 / (self.n() * self.p()) as f64
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }

    /// Observed column indices per case (`J_i`).
    pub fn case_index_sets(&self) -> Vec<Vec<usize>> {
        (0..self.n())
            .map(|i| (0..self.p()).filter(|&j| self.mask[[i, j]]).collect())
            .collect()
    }

    /// Observed case indices per column (`I_j`).
    pub fn column_index_sets(&self) -> Vec<Vec<usize>> {
        (0..self.p())
            .map(|j| (0..self.n()).filter(|&i| self.mask[[i, j]]).collect())
            .collect()
    }

    /// Observed values of column `j` with their case indices.
    pub fn column_observed(&self, j: usize) -> (Vec<usize>, Vec<T>) {
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..self.n() {
            if self.mask[[i, j]] {
                idx.push(i);
                vals.push(self.values[[i, j]]);
            }
        }
        (idx, vals)
    }

    /// Observed cells of case `i` as (times, values, column indices).
    pub fn row_observed(&self, i: usize) -> (Vec<T>, Vec<T>, Vec<usize>) {
        let mut times = Vec::new();
        let mut vals = Vec::new();
        let mut cols = Vec::new();
        for j in 0..self.p() {
            if self.mask[[i, j]] {
                times.push(self.grid[j]);
                vals.push(self.values[[i, j]]);
                cols.push(j);
            }
        }
        (times, vals, cols)
    }

    /// Paired observations of columns `k` and `l` (cases observed in both).
    pub fn paired_columns(&self, k: usize, l: usize) -> (Vec<T>, Vec<T>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..self.n() {
            if self.mask[[i, k]] && self.mask[[i, l]] {
                xs.push(self.values[[i, k]]);
                ys.push(self.values[[i, l]]);
            }
        }
        (xs, ys)
    }

    /// Keep every cell independently with probability `d`.
    ///
    /// Requires a complete dataset. Rows that would lose all cells are
    /// redrawn until at least one cell survives, so case count and grid are
    /// preserved. The same seed always yields the same mask, and a cell kept
    /// at rate `d1` is also kept at any `d2 >= d1` under the same seed
    /// (shared uniform draws), except across redrawn rows.
    pub fn decimate(&self, d: f64, seed: u64) -> Result<Self> {
        if !self.is_complete() {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "decimation requires a complete dataset".to_string(),
            });
        }
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("keep probability must lie in (0, 1], got {d}"),
            });
        }
        if d == 1.0 {
            return Ok(self.clone());
        }
        let (n, p) = self.values.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = Array2::from_elem((n, p), false);
        let mut values = self.values.clone();
        for i in 0..n {
            loop {
                let mut any = false;
                for j in 0..p {
                    let keep = rng.random::<f64>() < d;
                    mask[[i, j]] = keep;
                    any |= keep;
                }
                if any {
                    break;
                }
            }
            for j in 0..p {
                if !mask[[i, j]] {
                    values[[i, j]] = T::nan();
                }
            }
        }
        for j in 0..p {
            if (0..n).all(|i| !mask[[i, j]]) {
                return Err(Error::InvalidParameter {
                    name: "d",
                    reason: format!(
                        "decimation at rate {d} left grid column {j} without observations; use a larger rate or more cases"
                    ),
                });
            }
        }
        Ok(Self {
            grid: self.grid.clone(),
            values,
            mask,
            case_ids: self.case_ids.clone(),
        })
    }

    // -- CSV ingestion -------------------------------------------------------

    /// Load the long format: header `case_id,time,value`, one observed cell
    /// per row. The grid becomes the sorted union of observed times; cases
    /// keep their order of first appearance.
    pub fn load_long_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&pstr, e))?;
        {
            let headers = reader.headers().map_err(|e| csv_error(&pstr, e))?;
            let expected = ["case_id", "time", "value"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(Error::parse(
                    &pstr,
                    1,
                    format!("expected header `case_id,time,value`, got `{}`", got.join(",")),
                ));
            }
        }

        struct Cell {
            case: usize,
            time: f64,
            value: f64,
            line: usize,
        }
        let mut cells: Vec<Cell> = Vec::new();
        let mut case_ids: Vec<String> = Vec::new();
        let mut case_index: HashMap<String, usize> = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&pstr, e))?;
            let line = record.position().map_or(0, |pos| pos.line() as usize);
            if record.len() != 3 {
                return Err(Error::parse(
                    &pstr,
                    line,
                    format!("expected 3 fields, got {}", record.len()),
                ));
            }
            let id = record[0].to_string();
            let time: f64 = parse_field(&record[1], "time", &pstr, line)?;
            let value: f64 = parse_field(&record[2], "value", &pstr, line)?;
            if !time.is_finite() {
                return Err(Error::parse(&pstr, line, "non-finite time"));
            }
            if !value.is_finite() {
                return Err(Error::parse(
                    &pstr,
                    line,
                    "non-finite value (missing cells are omitted rows, not NaN)",
                ));
            }
            let case = *case_index.entry(id.clone()).or_insert_with(|| {
                case_ids.push(id);
                case_ids.len() - 1
            });
            cells.push(Cell {
                case,
                time,
                value,
                line,
            });
        }
        if cells.is_empty() {
            return Err(Error::parse(&pstr, 1, "no data rows"));
        }

        let mut grid_f64: Vec<f64> = cells.iter().map(|c| c.time).collect();
        grid_f64.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid_f64.dedup();
        let n = case_ids.len();
        let p = grid_f64.len();
        let mut values = Array2::from_elem((n, p), T::nan());
        let mut mask = Array2::from_elem((n, p), false);
        let mut first_line: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in &cells {
            let j = grid_f64
                .binary_search_by(|t| t.partial_cmp(&cell.time).unwrap())
                .expect("every observed time is in the grid union");
            if let Some(prev) = first_line.insert((cell.case, j), cell.line) {
                return Err(Error::parse(
                    &pstr,
                    cell.line,
                    format!(
                        "duplicate cell for case `{}` at time {} (first seen on line {prev})",
                        case_ids[cell.case], cell.time
                    ),
                ));
            }
            values[[cell.case, j]] = T::of(cell.value);
            mask[[cell.case, j]] = true;
        }
        let grid: Vec<T> = grid_f64.into_iter().map(T::of).collect();
        Self::new(grid, values, mask, case_ids)
    }

    /// Load the matrix format: `case_id,<p names>` header, one case per row,
    /// `NaN` for missing cells, plus a grid file with one time per line.
    pub fn load_matrix_csv(path: impl AsRef<Path>, grid_path: impl AsRef<Path>) -> Result<Self> {
        let grid_path = grid_path.as_ref();
        let gstr = grid_path.display().to_string();
        let raw = std::fs::read_to_string(grid_path).map_err(|e| Error::io(&gstr, e))?;
        let mut grid_f64: Vec<f64> = Vec::new();
        for (lineno, lineraw) in raw.lines().enumerate() {
            let line = lineraw.trim();
            if line.is_empty() || (lineno == 0 && line.eq_ignore_ascii_case("time")) {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::parse(&gstr, lineno + 1, format!("invalid time `{line}`")))?;
            if !t.is_finite() {
                return Err(Error::parse(&gstr, lineno + 1, "non-finite time"));
            }
            grid_f64.push(t);
        }
        if grid_f64.is_empty() {
            return Err(Error::parse(&gstr, 1, "grid file has no values"));
        }

        let path = path.as_ref();
        let pstr = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&pstr, e))?;
        let p = {
            let headers = reader.headers().map_err(|e| csv_error(&pstr, e))?;
            if headers.is_empty() || &headers[0] != "case_id" {
                return Err(Error::parse(
                    &pstr,
                    1,
                    "matrix format must start with a `case_id` header column",
                ));
            }
            headers.len() - 1
        };
        if p != grid_f64.len() {
            return Err(Error::parse(
                &pstr,
                1,
                format!("{p} value columns but the grid file has {} times", grid_f64.len()),
            ));
        }

        let mut case_ids: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&pstr, e))?;
            let line = record.position().map_or(0, |pos| pos.line() as usize);
            if record.len() != p + 1 {
                return Err(Error::parse(
                    &pstr,
                    line,
                    format!("expected {} fields, got {}", p + 1, record.len()),
                ));
            }
            let id = record[0].to_string();
            if let Some(prev) = seen.insert(id.clone(), line) {
                return Err(Error::parse(
                    &pstr,
                    line,
                    format!("duplicate case `{id}` (first seen on line {prev})"),
                ));
            }
            let mut row = Vec::with_capacity(p);
            for j in 0..p {
                let field = &record[j + 1];
                if field.eq_ignore_ascii_case("nan") {
                    row.push(f64::NAN);
                } else {
                    let v: f64 = parse_field(field, "value", &pstr, line)?;
                    if !v.is_finite() {
                        return Err(Error::parse(&pstr, line, "non-finite value"));
                    }
                    row.push(v);
                }
            }
            case_ids.push(id);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::parse(&pstr, 1, "no data rows"));
        }

        let n = rows.len();
        let mut values = Array2::from_elem((n, p), T::nan());
        let mut mask = Array2::from_elem((n, p), false);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_nan() {
                    values[[i, j]] = T::of(v);
                    mask[[i, j]] = true;
                }
            }
        }
        let grid: Vec<T> = grid_f64.into_iter().map(T::of).collect();
        Self::new(grid, values, mask, case_ids)
    }

    /// Write the long format (row-major cell order).
    pub fn write_long_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let pstr = path.as_ref().display().to_string();
        let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_error(&pstr, e))?;
        writer
            .write_record(["case_id", "time", "value"])
            .map_err(|e| csv_error(&pstr, e))?;
        for i in 0..self.n() {
            for j in 0..self.p() {
                if self.mask[[i, j]] {
                    writer
                        .write_record([
                            self.case_ids[i].as_str(),
                            &format!("{}", self.grid[j]),
                            &format!("{}", self.values[[i, j]]),
                        ])
                        .map_err(|e| csv_error(&pstr, e))?;
                }
            }
        }
        writer.flush().map_err(|e| Error::io(&pstr, e))?;
        Ok(())
    }

    /// Write the matrix format plus its grid file.
    pub fn write_matrix_csv(
        &self,
        path: impl AsRef<Path>,
        grid_path: impl AsRef<Path>,
    ) -> Result<()> {
        let gstr = grid_path.as_ref().display().to_string();
        let mut grid_out = String::from("time\n");
        for t in &self.grid {
            let _ = writeln!(grid_out, "{t}");
        }
        std::fs::write(grid_path.as_ref(), grid_out).map_err(|e| Error::io(&gstr, e))?;

        let pstr = path.as_ref().display().to_string();
        let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_error(&pstr, e))?;
        let mut header = vec!["case_id".to_string()];
        header.extend((1..=self.p()).map(|j| format!("v{j}")));
        writer.write_record(&header).map_err(|e| csv_error(&pstr, e))?;
        for i in 0..self.n() {
            let mut record = vec![self.case_ids[i].clone()];
            for j in 0..self.p() {
                record.push(if self.mask[[i, j]] {
                    format!("{}", self.values[[i, j]])
                } else {
                    "NaN".to_string()
                });
            }
            writer.write_record(&record).map_err(|e| csv_error(&pstr, e))?;
        }
        writer.flush().map_err(|e| Error::io(&pstr, e))?;
        Ok(())
    }
}

fn parse_field(field: &str, what: &str, path: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} `{field}`")))
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = match e.position() {
        Some(pos) => pos.line() as usize,
        None => 0,
    };
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn three_long_rows_make_a_two_by_two_dataset() {
        let dir = tempdir().unwrap();
        let file = dir.path().join("d.csv");
        write(&file, "case_id,time,value\na,0,1.0\na,1,2.0\nb,0,3.0\n");
        let data: LongitudinalDataset<f64> = LongitudinalDataset::load_long_csv(&file).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.p(), 2);
        assert_eq!(data.grid(), &[0.0, 1.0]);
        assert_eq!(data.case_ids(), &["a".to_string(), "b".to_string()]);
        assert!((data.decimation_rate() - 0.75).abs() < 1e-15);
        assert_eq!(data.values()[[0, 0]], 1.0);
        assert_eq!(data.values()[[0, 1]], 2.0);
        assert_eq!(data.values()[[1, 0]], 3.0);
        assert!(!data.mask()[[1, 1]]);
        assert!(data.values()[[1, 1]].is_nan());
    }

    #[test]
    fn duplicate_cells_name_the_offending_line() {
        let dir = tempdir().unwrap();
        let file = dir.path().join("d.csv");
        write(&file, "case_id,time,value\na,0,1.0\nb,1,2.0\na,0,9.9\n");
        match LongitudinalDataset::<f64>::load_long_csv(&file) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("duplicate cell"), "{message}");
                assert!(message.contains('a'), "{message}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_and_empty_files_are_rejected_with_line_numbers() {
        let dir = tempdir().unwrap();
        let bad_value = dir.path().join("v.csv");
        write(&bad_value, "case_id,time,value\na,0,1.0\na,1,oops\n");
        match LongitudinalDataset::<f64>::load_long_csv(&bad_value) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            other => panic!("{other:?}"),
        }

        let bad_time = dir.path().join("t.csv");
        write(&bad_time, "case_id,time,value\na,zero,1.0\n");
        match LongitudinalDataset::<f64>::load_long_csv(&bad_time) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }

        let empty = dir.path().join("e.csv");
        write(&empty, "case_id,time,value\n");
        assert!(LongitudinalDataset::<f64>::load_long_csv(&empty).is_err());

        let bad_header = dir.path().join("h.csv");
        write(&bad_header, "id,t,x\na,0,1.0\n");
        match LongitudinalDataset::<f64>::load_long_csv(&bad_header) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("case_id,time,value"));
            }
            other => panic!("{other:?}"),
        }

        let nan_value = dir.path().join("n.csv");
        write(&nan_value, "case_id,time,value\na,0,NaN\n");
        assert!(LongitudinalDataset::<f64>::load_long_csv(&nan_value).is_err());
    }

    #[test]
    fn sparse_file_shaped_like_a_cohort_study_has_the_expected_rate() {
        // 2001 observed cells over 305 cases and 48 grid points.
        let dir = tempdir().unwrap();
        let file = dir.path().join("cohort.csv");
        let mut content = String::from("case_id,time,value\n");
        let mut written = 0usize;
        let mut used = std::collections::HashSet::new();
        // First give every case one cell and touch every column.
        for i in 0..305usize {
            let j = i % 48;
            used.insert((i, j));
            content.push_str(&format!("c{i},{j},1.0\n"));
            written += 1;
        }
        // Deterministically scatter the remaining cells.
        let mut state = 12345usize;
        while written < 2001 {
            state = state.wrapping_mul(1103515245).wrapping_add(12345);
            let i = (state >> 8) % 305;
            let j = (state >> 20) % 48;
            if used.insert((i, j)) {
                content.push_str(&format!("c{i},{j},1.0\n"));
                written += 1;
            }
        }
        write(&file, &content);
        let data: LongitudinalDataset<f64> = LongitudinalDataset::load_long_csv(&file).unwrap();
        assert_eq!(data.n(), 305);
        assert_eq!(data.p(), 48);
        assert_eq!(data.observed_cells(), 2001);
        let d = data.decimation_rate();
        assert!((d - 2001.0 / (305.0 * 48.0)).abs() < 1e-15);
        assert!((d - 0.137).abs() < 5e-4, "d = {d}");
    }

    fn complete_dataset(n: usize, p: usize) -> LongitudinalDataset<f64> {
        let grid: Vec<f64> = (0..p).map(|j| j as f64).collect();
        let values = Array2::from_shape_fn((n, p), |(i, j)| (i * p + j) as f64);
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        LongitudinalDataset::complete(grid, values, ids).unwrap()
    }

    #[test]
    fn decimation_keeps_the_binomial_fraction_and_is_deterministic() {
        let data = complete_dataset(100, 50);
        let thinned = data.decimate(0.5, 7).unwrap();
        let f = thinned.decimation_rate();
        let sigma = (0.25_f64 / 5000.0).sqrt();
        assert!((f - 0.5).abs() < 3.0 * sigma, "fraction {f}");
        assert_eq!(thinned.grid(), data.grid());
        assert_eq!(thinned.case_ids(), data.case_ids());

        let again = data.decimate(0.5, 7).unwrap();
        assert_eq!(again.mask(), thinned.mask());
        let other = data.decimate(0.5, 8).unwrap();
        assert_ne!(other.mask(), thinned.mask());

        assert_eq!(data.decimate(1.0, 3).unwrap(), data);
        assert!(data.decimate(0.0, 3).is_err());
        assert!(data.decimate(-0.1, 3).is_err());
        assert!(thinned.decimate(0.5, 3).is_err(), "requires complete data");
    }

    #[test]
    fn decimation_is_monotone_under_a_shared_seed() {
        let data = complete_dataset(100, 50);
        let sparse = data.decimate(0.3, 99).unwrap();
        let dense = data.decimate(0.6, 99).unwrap();
        for (s, d) in sparse.mask().iter().zip(dense.mask().iter()) {
            assert!(!s || *d, "cell kept at 0.3 must be kept at 0.6");
        }
    }

    #[test]
    fn decimation_redraws_rows_rather_than_emptying_them() {
        let data = complete_dataset(400, 3);
        let thinned = data.decimate(0.34, 1234).unwrap();
        for i in 0..400 {
            assert!((0..3).any(|j| thinned.mask()[[i, j]]), "row {i} is empty");
        }
    }

    #[test]
    fn index_sets_are_consistent_transposes() {
        let data = complete_dataset(6, 4).decimate(0.55, 42).unwrap();
        let j_sets = data.case_index_sets();
        let i_sets = data.column_index_sets();
        let total: usize = j_sets.iter().map(Vec::len).sum();
        assert_eq!(total, data.observed_cells());
        assert_eq!(
            i_sets.iter().map(Vec::len).sum::<usize>(),
            data.observed_cells()
        );
        for (i, cols) in j_sets.iter().enumerate() {
            for &j in cols {
                assert!(i_sets[j].contains(&i));
            }
        }

        let full = complete_dataset(3, 5);
        for cols in full.case_index_sets() {
            assert_eq!(cols, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn long_csv_round_trip_is_a_fixed_point() {
        let dir = tempdir().unwrap();
        let data = complete_dataset(8, 5).decimate(0.7, 11).unwrap();
        let file = dir.path().join("out.csv");
        data.write_long_csv(&file).unwrap();
        let reloaded: LongitudinalDataset<f64> = LongitudinalDataset::load_long_csv(&file).unwrap();
        assert_eq!(reloaded, data);
    }

    #[test]
    fn matrix_csv_round_trip_preserves_missing_cells() {
        let dir = tempdir().unwrap();
        let data = complete_dataset(8, 5).decimate(0.6, 21).unwrap();
        let file = dir.path().join("m.csv");
        let grid_file = dir.path().join("grid.txt");
        data.write_matrix_csv(&file, &grid_file).unwrap();
        let reloaded: LongitudinalDataset<f64> =
            LongitudinalDataset::load_matrix_csv(&file, &grid_file).unwrap();
        assert_eq!(reloaded, data);

        // The two formats agree on the same dataset.
        let long_file = dir.path().join("l.csv");
        data.write_long_csv(&long_file).unwrap();
        let via_long: LongitudinalDataset<f64> =
            LongitudinalDataset::load_long_csv(&long_file).unwrap();
        assert_eq!(via_long, reloaded);
    }

    #[test]
    fn matrix_format_validates_shapes_and_duplicates() {
        let dir = tempdir().unwrap();
        let grid_file = dir.path().join("g.txt");
        write(&grid_file, "time\n0\n1\n2\n");

        let wide = dir.path().join("w.csv");
        write(&wide, "case_id,v1,v2\na,1,2\n");
        assert!(LongitudinalDataset::<f64>::load_matrix_csv(&wide, &grid_file).is_err());

        let dup = dir.path().join("dup.csv");
        write(&dup, "case_id,v1,v2,v3\na,1,2,3\na,4,5,6\n");
        match LongitudinalDataset::<f64>::load_matrix_csv(&dup, &grid_file) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate case"));
            }
            other => panic!("{other:?}"),
        }

        let empty_row = dir.path().join("er.csv");
        write(&empty_row, "case_id,v1,v2,v3\na,NaN,NaN,NaN\n");
        assert!(LongitudinalDataset::<f64>::load_matrix_csv(&empty_row, &grid_file).is_err());
    }

    #[test]
    fn all_missing_columns_are_dropped_with_their_grid_points() {
        let dir = tempdir().unwrap();
        let grid_file = dir.path().join("g.txt");
        write(&grid_file, "time\n0\n1\n2\n3\n");
        let file = dir.path().join("m.csv");
        write(
            &file,
            "case_id,v1,v2,v3,v4\na,1,NaN,3,4\nb,5,NaN,7,NaN\n",
        );
        let data: LongitudinalDataset<f64> =
            LongitudinalDataset::load_matrix_csv(&file, &grid_file).unwrap();
        assert_eq!(data.p(), 3);
        assert_eq!(data.grid(), &[0.0, 2.0, 3.0]);
        assert_eq!(data.observed_cells(), 5);
    }

    #[test]
    fn constructor_rejects_inconsistent_inputs() {
        let grid = vec![0.0_f64, 1.0];
        let values = Array2::zeros((2, 2));
        let ids = vec!["a".to_string(), "b".to_string()];

        let unsorted = LongitudinalDataset::complete(vec![1.0, 0.0], values.clone(), ids.clone());
        assert!(unsorted.is_err());

        let dup_ids = LongitudinalDataset::complete(
            grid.clone(),
            values.clone(),
            vec!["a".to_string(), "a".to_string()],
        );
        assert!(dup_ids.is_err());

        let short_grid = LongitudinalDataset::complete(vec![0.0], values.clone(), ids.clone());
        assert!(short_grid.is_err());

        let mut nan_values = values.clone();
        nan_values[[0, 0]] = f64::NAN;
        assert!(LongitudinalDataset::complete(grid, nan_values, ids).is_err());
    }
}

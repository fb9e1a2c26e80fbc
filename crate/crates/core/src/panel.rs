//! Balanced panels and the two-way within transformation.
//!
//! Observations are stacked with time as the slow index: cell `(i, t)` lives
//! at position `t * N + i`. With that layout the block-diagonal operator
//! `I_T ⊗ w` acts on contiguous length-`N` slices.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelData<T> {
    region_ids: Vec<String>,
    period_ids: Vec<String>,
    /// NT-vector, time-slow stacking.
    y: Vec<T>,
    /// NT x Q, same row order as `y`.
    x: Dense<T>,
    var_names: Vec<String>,
    demeaned: bool,
}

/// Column names used to read a panel file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub region: String,
    pub period: String,
    pub dependent: String,
    /// `None` takes every remaining column, in file order.
    pub regressors: Option<Vec<String>>,
    pub delimiter: u8,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            region: "region_id".into(),
            period: "period".into(),
            dependent: "y".into(),
            regressors: None,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PanelWarning {
    /// Regressor is constant within regions or periods and vanishes after demeaning.
    ConstantColumn { name: String },
    /// Demeaned cross-product is ill-conditioned; `columns` are the regressors
    /// loading on the near-null direction.
    Collinear {
        columns: Vec<String>,
        condition_number: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub balanced: bool,
    pub warnings: Vec<PanelWarning>,
}

impl<T: Scalar> PanelData<T> {
    /// Builds a panel from an `N x T` dependent matrix and `Q` regressor
    /// matrices of the same shape (rows are regions, columns periods).
    pub fn from_matrices(
        region_ids: Vec<String>,
        period_ids: Vec<String>,
        y: &Dense<T>,
        xs: &[Dense<T>],
        var_names: Vec<String>,
    ) -> Result<Self> {
        let n = region_ids.len();
        let t = period_ids.len();
        check_unique(&region_ids)?;
        check_unique(&period_ids)?;
        if var_names.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: var_names.len(),
            });
        }
        for m in std::iter::once(y).chain(xs) {
            if m.rows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.rows(),
                });
            }
            if m.cols() != t {
                return Err(Error::DimensionMismatch {
                    expected: t,
                    got: m.cols(),
                });
            }
        }
        let q = xs.len();
        let ystack = stack(y);
        let mut x = Dense::zeros(n * t, q);
        for (k, xm) in xs.iter().enumerate() {
            for (row, v) in stack(xm).into_iter().enumerate() {
                x[(row, k)] = v;
            }
        }
        Ok(Self {
            region_ids,
            period_ids,
            y: ystack,
            x,
            var_names,
            demeaned: false,
        })
    }

    /// Builds a panel directly from stacked vectors (time-slow order).
    pub fn from_stacked(
        region_ids: Vec<String>,
        period_ids: Vec<String>,
        y: Vec<T>,
        x: Dense<T>,
        var_names: Vec<String>,
    ) -> Result<Self> {
        let nt = region_ids.len() * period_ids.len();
        check_unique(&region_ids)?;
        check_unique(&period_ids)?;
        if y.len() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                got: y.len(),
            });
        }
        if x.rows() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                got: x.rows(),
            });
        }
        if x.cols() != var_names.len() {
            return Err(Error::DimensionMismatch {
                expected: x.cols(),
                got: var_names.len(),
            });
        }
        Ok(Self {
            region_ids,
            period_ids,
            y,
            x,
            var_names,
            demeaned: false,
        })
    }

    pub fn n(&self) -> usize {
        self.region_ids.len()
    }

    pub fn t(&self) -> usize {
        self.period_ids.len()
    }

    pub fn q(&self) -> usize {
        self.var_names.len()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn is_demeaned(&self) -> bool {
        self.demeaned
    }

    /// Stacked dependent variable.
    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Stacked regressors, `NT x Q`.
    pub fn x(&self) -> &Dense<T> {
        &self.x
    }

    pub fn y_at(&self, region: usize, period: usize) -> T {
        self.y[period * self.n() + region]
    }

    pub fn x_at(&self, region: usize, period: usize, var: usize) -> T {
        self.x[(period * self.n() + region, var)]
    }

    /// Dependent variable as an `N x T` matrix.
    pub fn y_matrix(&self) -> Dense<T> {
        unstack(&self.y, self.n(), self.t())
    }

    pub fn x_column(&self, var: usize) -> Vec<T> {
        self.x.column(var)
    }

    /// Effective number of independent observations left after the fixed
    /// effects are absorbed: `(N-1)(T-1)` for a demeaned panel, `NT` otherwise.
    pub fn effective_observations(&self) -> usize {
        if self.demeaned {
            (self.n() - 1) * (self.t() - 1)
        } else {
            self.n() * self.t()
        }
    }

    /// Two-way within transformation of `y` and every regressor.
    pub fn demean_two_way(&self) -> Result<Self> {
        if self.demeaned {
            return Err(Error::AlreadyDemeaned);
        }
        let (n, t) = (self.n(), self.t());
        let y = demean_stacked(&self.y, n, t);
        let mut x = Dense::zeros(n * t, self.q());
        for k in 0..self.q() {
            let col = demean_stacked(&self.x.column(k), n, t);
            for (row, v) in col.into_iter().enumerate() {
                x[(row, k)] = v;
            }
        }
        Ok(Self {
            region_ids: self.region_ids.clone(),
            period_ids: self.period_ids.clone(),
            y,
            x,
            var_names: self.var_names.clone(),
            demeaned: true,
        })
    }

    /// Rescales the flagged regressors to unit standard deviation. Must run
    /// before demeaning.
    pub fn standardize(&self, which: &[bool]) -> Result<Self> {
        if self.demeaned {
            return Err(Error::AlreadyDemeaned);
        }
        if which.len() != self.q() {
            return Err(Error::DimensionMismatch {
                expected: self.q(),
                got: which.len(),
            });
        }
        let mut out = self.clone();
        let nt = T::count(self.y.len());
        for (k, _) in which.iter().enumerate().filter(|(_, &f)| f) {
            let col = self.x.column(k);
            let mean = col.iter().copied().sum::<T>() / nt;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
            if var > T::zero() {
                let sd = var.sqrt();
                for row in 0..col.len() {
                    out.x[(row, k)] = col[row] / sd;
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self, condition_threshold: f64) -> ValidationReport {
        let (n, t) = (self.n(), self.t());
        let mut warnings = Vec::new();
        let mut kept = Vec::new();
        let mut cols: Vec<Vec<T>> = Vec::new();
        for k in 0..self.q() {
            let raw = self.x.column(k);
            let scale = raw.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
            let col = if self.demeaned {
                raw
            } else {
                demean_stacked(&raw, n, t)
            };
            let norm = col.iter().map(|&v| v * v).sum::<T>().sqrt();
            let tol = T::lit(1e-10) * (scale * T::count(col.len()).sqrt()).max(T::one());
            if norm <= tol {
                warnings.push(PanelWarning::ConstantColumn {
                    name: self.var_names[k].clone(),
                });
            } else {
                kept.push(k);
                cols.push(col.into_iter().map(|v| v / norm).collect());
            }
        }
        if kept.len() >= 2 {
            let m = Dense::from_fn(n * t, kept.len(), |r, c| cols[c][r]);
            let eig = m.weighted_gram(None).symmetric_eigen();
            let cond = eig.condition_number().to_f64_lossy();
            if !(cond <= condition_threshold) {
                let (imin, _) = eig
                    .values
                    .iter()
                    .enumerate()
                    .fold((0, T::infinity()), |acc, (i, &v)| {
                        if v.abs() < acc.1 {
                            (i, v.abs())
                        } else {
                            acc
                        }
                    });
                let dir = eig.vectors.column(imin);
                let columns = dir
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > T::lit(0.1))
                    .map(|(c, _)| self.var_names[kept[c]].clone())
                    .collect();
                warnings.push(PanelWarning::Collinear {
                    columns,
                    condition_number: cond,
                });
            }
        }
        ValidationReport {
            balanced: true,
            warnings,
        }
    }
}

impl PanelData<f64> {
    /// Reads a balanced panel from a delimited text file.
    pub fn load(path: &Path, schema: &PanelSchema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, schema, path)
    }

    pub fn read<R: std::io::Read>(reader: R, schema: &PanelSchema, path: &Path) -> Result<Self> {
        let fmt_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(schema.delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| fmt_err(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_owned()))
        };
        let ri = find(&schema.region)?;
        let pi = find(&schema.period)?;
        let yi = find(&schema.dependent)?;
        let xcols: Vec<usize> = match &schema.regressors {
            Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
            None => (0..header.len())
                .filter(|&c| c != ri && c != pi && c != yi)
                .collect(),
        };
        if xcols.is_empty() {
            return Err(fmt_err("no regressor columns".into()));
        }

        let mut regions: Vec<String> = Vec::new();
        let mut region_index: HashMap<String, usize> = HashMap::new();
        let mut periods: Vec<String> = Vec::new();
        let mut period_index: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), (f64, Vec<f64>)> = HashMap::new();

        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
            let line = row_no + 2;
            let get = |c: usize| rec.get(c).unwrap_or("");
            let parse = |c: usize| -> Result<f64> {
                let raw = get(c);
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumericValue {
                        column: header[c].clone(),
                        line,
                        value: raw.to_owned(),
                    })
            };
            let region = get(ri).to_owned();
            let period = get(pi).to_owned();
            let r = *region_index.entry(region.clone()).or_insert_with(|| {
                regions.push(region.clone());
                regions.len() - 1
            });
            let p = *period_index.entry(period.clone()).or_insert_with(|| {
                periods.push(period.clone());
                periods.len() - 1
            });
            let yv = parse(yi)?;
            let xv = xcols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?;
            if cells.insert((r, p), (yv, xv)).is_some() {
                return Err(Error::DuplicateCell(region, period));
            }
        }

        // Periods in numeric order when every label is numeric, otherwise as first seen.
        let mut period_order: Vec<usize> = (0..periods.len()).collect();
        let numeric: Option<Vec<f64>> = periods.iter().map(|p| p.parse::<f64>().ok()).collect();
        if let Some(vals) = numeric {
            period_order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        }

        let mut missing = Vec::new();
        for &p in &period_order {
            for (r, region) in regions.iter().enumerate() {
                if !cells.contains_key(&(r, p)) {
                    missing.push((region.clone(), periods[p].clone()));
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingCell(missing));
        }

        let n = regions.len();
        let t = periods.len();
        let q = xcols.len();
        let mut y = vec![0.0; n * t];
        let mut x = Dense::zeros(n * t, q);
        for (slot, &p) in period_order.iter().enumerate() {
            for r in 0..n {
                let (yv, xv) = &cells[&(r, p)];
                let row = slot * n + r;
                y[row] = *yv;
                for k in 0..q {
                    x[(row, k)] = xv[k];
                }
            }
        }
        let period_ids = period_order.iter().map(|&p| periods[p].clone()).collect();
        let var_names = xcols.iter().map(|&c| header[c].clone()).collect();
        Self::from_stacked(regions, period_ids, y, x, var_names)
    }

    /// Writes the panel in the layout [`PanelData::load`] reads with the default schema.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = vec!["region_id".to_owned(), "period".to_owned(), "y".to_owned()];
        header.extend(self.var_names.iter().cloned());
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for t in 0..self.t() {
            for i in 0..self.n() {
                let mut rec = vec![
                    self.region_ids[i].clone(),
                    self.period_ids[t].clone(),
                    format!("{:e}", self.y_at(i, t)),
                ];
                rec.extend((0..self.q()).map(|k| format!("{:e}", self.x_at(i, t, k))));
                w.write_record(&rec).map_err(|e| csv_io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if let Some(_first) = seen.insert(id.as_str(), i) {
            return Err(Error::InvalidConfig(format!("identifier `{id}` is not unique")));
        }
    }
    Ok(())
}

/// Stacks an `N x T` matrix into an NT-vector with time as the slow index.
pub fn stack<T: Scalar>(m: &Dense<T>) -> Vec<T> {
    let (n, t) = (m.rows(), m.cols());
    let mut out = Vec::with_capacity(n * t);
    for p in 0..t {
        for i in 0..n {
            out.push(m[(i, p)]);
        }
    }
    out
}

pub fn unstack<T: Scalar>(v: &[T], n: usize, t: usize) -> Dense<T> {
    assert_eq!(v.len(), n * t);
    Dense::from_fn(n, t, |i, p| v[p * n + i])
}

/// `z_it - mean_i - mean_t + grand mean` on a stacked NT-vector.
pub fn demean_stacked<T: Scalar>(z: &[T], n: usize, t: usize) -> Vec<T> {
    assert_eq!(z.len(), n * t);
    let mut region_mean = vec![T::zero(); n];
    let mut period_mean = vec![T::zero(); t];
    let mut grand = T::zero();
    for p in 0..t {
        for i in 0..n {
            let v = z[p * n + i];
            region_mean[i] += v;
            period_mean[p] += v;
            grand += v;
        }
    }
    let (nf, tf) = (T::count(n), T::count(t));
    region_mean.iter_mut().for_each(|m| *m /= tf);
    period_mean.iter_mut().for_each(|m| *m /= nf);
    grand /= nf * tf;
    let mut out = Vec::with_capacity(z.len());
    for p in 0..t {
        for i in 0..n {
            out.push(z[p * n + i] - region_mean[i] - period_mean[p] + grand);
        }
    }
    out
}

/// Subtracts each region's mean over time.
pub fn demean_over_time<T: Scalar>(z: &[T], n: usize, t: usize) -> Vec<T> {
    assert_eq!(z.len(), n * t);
    let tf = T::count(t);
    let mut means = vec![T::zero(); n];
    for block in z.chunks(n) {
        for (m, &v) in means.iter_mut().zip(block) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= tf);
    z.chunks(n)
        .flat_map(|block| block.iter().zip(&means).map(|(&v, &m)| v - m).collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn toy() -> PanelData<f64> {
        let y = Dense::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 5.0]);
        let x = Dense::from_row_major(2, 2, vec![0.5, 1.0, -1.0, 2.0]);
        PanelData::from_matrices(ids("r", 2), ids("t", 2), &y, &[x], vec!["x1".into()]).unwrap()
    }

    #[test]
    fn demean_hand_example() {
        let d = toy().demean_two_way().unwrap();
        let m = d.y_matrix();
        let want = [[0.25, -0.25], [-0.25, 0.25]];
        for i in 0..2 {
            for t in 0..2 {
                assert!((m[(i, t)] - want[i][t]).abs() < 1e-15);
            }
        }
        assert!(d.is_demeaned());
    }

    #[test]
    fn demean_constant_panel_is_zero() {
        let y = Dense::from_row_major(3, 2, vec![7.0f64; 6]);
        let p = PanelData::from_matrices(ids("r", 3), ids("t", 2), &y, std::slice::from_ref(&y), vec!["c".into()])
            .unwrap()
            .demean_two_way()
            .unwrap();
        assert!(p.y().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn demean_twice_is_an_error() {
        let d = toy().demean_two_way().unwrap();
        assert!(matches!(d.demean_two_way(), Err(Error::AlreadyDemeaned)));
    }

    #[test]
    fn demeaned_panel_has_zero_margins() {
        let y = Dense::from_fn(4, 3, |i, t| (i * i) as f64 + 0.3 * t as f64 + ((i + 2 * t) as f64).sin());
        let p = PanelData::from_matrices(ids("r", 4), ids("t", 3), &y, std::slice::from_ref(&y), vec!["x".into()])
            .unwrap()
            .demean_two_way()
            .unwrap();
        let m = p.y_matrix();
        for i in 0..4 {
            assert!((0..3).map(|t| m[(i, t)]).sum::<f64>().abs() < 1e-10);
        }
        for t in 0..3 {
            assert!((0..4).map(|i| m[(i, t)]).sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn validate_flags_duplicate_and_constant_columns() {
        let n = 6;
        let t = 3;
        let a = Dense::from_fn(n, t, |i, p| ((i * 7 + p * 3) as f64).sin());
        let b = Dense::from_fn(n, t, |i, p| ((i * 5 + p * 11) as f64).cos());
        let y = Dense::from_fn(n, t, |i, p| (i + p) as f64);
        let clean = PanelData::from_matrices(
            ids("r", n),
            ids("t", t),
            &y,
            &[a.clone(), b.clone()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(clean.validate(1e8).warnings.is_empty());

        let dup = PanelData::from_matrices(
            ids("r", n),
            ids("t", t),
            &y,
            &[a.clone(), b.clone(), a.clone()],
            vec!["a".into(), "b".into(), "a_copy".into()],
        )
        .unwrap();
        let rep = dup.validate(1e8);
        match &rep.warnings[..] {
            [PanelWarning::Collinear { columns, .. }] => {
                assert!(columns.contains(&"a".to_string()));
                assert!(columns.contains(&"a_copy".to_string()));
                assert!(!columns.contains(&"b".to_string()));
            }
            other => panic!("unexpected warnings {other:?}"),
        }

        let konst = Dense::from_row_major(n, t, vec![4.2; n * t]);
        let withc = PanelData::from_matrices(
            ids("r", n),
            ids("t", t),
            &y,
            &[a, konst],
            vec!["a".into(), "const".into()],
        )
        .unwrap();
        assert_eq!(
            withc.validate(1e8).warnings,
            vec![PanelWarning::ConstantColumn {
                name: "const".into()
            }]
        );
    }

    #[test]
    fn load_minimal_file_and_errors() {
        let text = "region_id,period,y,x1\nA,2018,1.0,0.5\nB,2018,3.0,-1\nA,2019,2,1\nB,2019,5,2\n";
        let p = PanelData::read(text.as_bytes(), &PanelSchema::default(), Path::new("mem")).unwrap();
        assert_eq!((p.n(), p.t(), p.q()), (2, 2, 1));
        assert!(!p.is_demeaned());
        assert_eq!(p.y(), &[1.0, 3.0, 2.0, 5.0]);

        let missing = "region_id,period,y,x1\nA,2018,1.0,0.5\nB,2018,3.0,-1\nA,2019,2,1\n";
        match PanelData::read(missing.as_bytes(), &PanelSchema::default(), Path::new("mem")) {
            Err(Error::MissingCell(cells)) => assert_eq!(cells, vec![("B".into(), "2019".into())]),
            other => panic!("expected MissingCell, got {other:?}"),
        }

        let dup = "region_id,period,y,x1\nA,2018,1.0,0.5\nA,2018,3.0,-1\n";
        assert!(matches!(
            PanelData::read(dup.as_bytes(), &PanelSchema::default(), Path::new("mem")),
            Err(Error::DuplicateCell(..))
        ));

        let bad = "region_id,period,y,x1\nA,2018,abc,0.5\n";
        match PanelData::read(bad.as_bytes(), &PanelSchema::default(), Path::new("mem")) {
            Err(Error::NonNumericValue { column, line, .. }) => {
                assert_eq!(column, "y");
                assert_eq!(line, 2);
            }
            other => panic!("expected NonNumericValue, got {other:?}"),
        }
    }

    #[test]
    fn periods_sorted_numerically() {
        let text = "region_id,period,y,x\nA,10,1,1\nA,9,2,2\n";
        let p = PanelData::read(text.as_bytes(), &PanelSchema::default(), Path::new("mem")).unwrap();
        assert_eq!(p.period_ids(), &["9".to_string(), "10".to_string()]);
        assert_eq!(p.y(), &[2.0, 1.0]);
    }

    #[test]
    fn standardize_gives_unit_sd() {
        let p = toy().standardize(&[true]).unwrap();
        let col = p.x_column(0);
        let mean = col.iter().sum::<f64>() / 4.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn demeaning_is_idempotent_and_linear(
            vals in prop::collection::vec(-10.0f64..10.0, 12),
            other in prop::collection::vec(-10.0f64..10.0, 12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let d1 = demean_stacked(&vals, 4, 3);
            let d2 = demean_stacked(&d1, 4, 3);
            for (u, v) in d1.iter().zip(&d2) {
                prop_assert!((u - v).abs() < 1e-12);
            }
            let combo: Vec<f64> = vals.iter().zip(&other).map(|(x, y)| a * x + b * y).collect();
            let lhs = demean_stacked(&combo, 4, 3);
            let d_other = demean_stacked(&other, 4, 3);
            for i in 0..12 {
                prop_assert!((lhs[i] - (a * d1[i] + b * d_other[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn stacking_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 15)) {
            let m = Dense::from_row_major(5, 3, vals);
            prop_assert_eq!(unstack(&stack(&m), 5, 3), m);
        }
    }
}

//! Sparse row-stochastic spatial weight matrices.
//!
//! `w` is stored in compressed-row form. The panel operator `W = I_T ⊗ w` is
//! never built; [`WeightMatrix::spatial_lag`] applies `w` to each period block.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::panel::csv_io;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    /// Planar coordinates.
    #[default]
    Euclidean,
    /// `(longitude, latitude)` in degrees, haversine distance.
    GreatCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoincidentPolicy {
    /// Fail with [`Error::CoincidentPoints`].
    #[default]
    Reject,
    /// Keep going; zero-distance ties are broken by region index.
    TieBreak,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KnnOptions {
    pub metric: DistanceMetric,
    pub coincident: CoincidentPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    n: usize,
    k: Option<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    /// k-nearest-neighbour weights, each neighbour weighted `1/k`.
    pub fn knn(coords: &[[T; 2]], k: usize, opts: &KnnOptions) -> Result<Self> {
        let n = coords.len();
        if k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if n <= k {
            return Err(Error::TooFewRegions { n, k });
        }
        for (i, c) in coords.iter().enumerate() {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(Error::NonFiniteCoordinate(i));
            }
        }
        let weight = T::one() / T::count(k);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(n * k);
        row_ptr.push(0);
        let mut cand: Vec<(T, usize)> = Vec::with_capacity(n);
        for i in 0..n {
            cand.clear();
            for j in (0..n).filter(|&j| j != i) {
                let d = distance(coords[i], coords[j], opts.metric);
                if d == T::zero() && opts.coincident == CoincidentPolicy::Reject {
                    return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
                }
                cand.push((d, j));
            }
            // (distance, index) ordering gives a deterministic tie-break.
            let by_key = |a: &(T, usize), b: &(T, usize)| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            };
            cand.select_nth_unstable_by(k - 1, by_key);
            let mut nearest: Vec<(T, usize)> = cand[..k].to_vec();
            nearest.sort_by(by_key);
            let mut idx: Vec<usize> = nearest.into_iter().map(|(_, j)| j).collect();
            idx.sort_unstable();
            cols.extend(idx);
            row_ptr.push(cols.len());
        }
        let vals = vec![weight; cols.len()];
        Ok(Self {
            n,
            k: Some(k),
            row_ptr,
            cols,
            vals,
        })
    }

    /// Divides each row of a nonnegative adjacency matrix by its sum.
    /// Duplicate `(i, j)` entries are summed.
    pub fn row_normalize(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            if v < T::zero() || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "weight ({i}, {j}) = {v} is not a finite nonnegative number"
                )));
            }
            if i == j && v != T::zero() {
                return Err(Error::InvalidConfig(format!("nonzero diagonal at row {i}")));
            }
            if v != T::zero() {
                rows[i].push((j, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut counts = Vec::with_capacity(n);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            let total: T = merged.iter().map(|&(_, v)| v).sum();
            if merged.is_empty() || total <= T::zero() {
                return Err(Error::EmptyRow(i));
            }
            counts.push(merged.len());
            for (j, v) in merged {
                cols.push(j);
                vals.push(v / total);
            }
            row_ptr.push(cols.len());
        }
        // Keep the k-NN tag when every row has the same count of equal weights.
        let k = counts.first().copied().filter(|&c| {
            counts.iter().all(|&x| x == c)
                && vals.iter().all(|&v| (v - T::one() / T::count(c)).abs() <= T::epsilon())
        });
        Ok(Self {
            n,
            k,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_dense(m: &Dense<T>) -> Result<Self> {
        let mut trip = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != T::zero() {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::row_normalize(m.rows(), &trip)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbours per row when built as (or detected to be) k-NN.
    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(column, weight)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn to_dense(&self) -> Dense<T> {
        let mut m = Dense::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// `w x` for a single N-vector.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![T::zero(); self.n];
        self.apply_into(x, &mut out);
        out
    }

    #[inline]
    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = T::zero();
            for p in a..b {
                s += self.vals[p] * x[self.cols[p]];
            }
            *o = s;
        }
    }

    /// `(I_T ⊗ w) z` on a stacked NT-vector.
    pub fn spatial_lag(&self, z: &[T]) -> Result<Vec<T>> {
        if self.n == 0 || !z.len().is_multiple_of(self.n) {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        let mut out = vec![T::zero(); z.len()];
        for (src, dst) in z.chunks(self.n).zip(out.chunks_mut(self.n)) {
            self.apply_into(src, dst);
        }
        Ok(out)
    }

    /// Lag of an `N x T` matrix (regions are rows): `w` times every column.
    pub fn spatial_lag_matrix(&self, z: &Dense<T>) -> Result<Dense<T>> {
        if z.rows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: z.rows(),
            });
        }
        let mut out = Dense::zeros(z.rows(), z.cols());
        for c in 0..z.cols() {
            let lagged = self.apply(&z.column(c));
            for (i, v) in lagged.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }

    /// Lags every column of a stacked `NT x Q` block.
    pub fn spatial_lag_columns(&self, x: &Dense<T>) -> Result<Dense<T>> {
        let mut out = Dense::zeros(x.rows(), x.cols());
        for c in 0..x.cols() {
            let lagged = self.spatial_lag(&x.column(c))?;
            for (r, v) in lagged.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }

    pub fn max_row_sum_error(&self) -> T {
        (0..self.n)
            .map(|i| (self.row(i).map(|(_, v)| v).sum::<T>() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| j != i || v == T::zero()))
    }

    pub fn is_symmetric(&self) -> bool {
        let mut map = HashMap::with_capacity(self.nnz());
        for (i, j, v) in self.triplets() {
            map.insert((i, j), v);
        }
        map.iter()
            .all(|(&(i, j), &v)| map.get(&(j, i)).is_some_and(|&u| (u - v).abs() <= T::epsilon()))
    }

    /// SHA-256 over the dimension and the exact bit patterns of every entry
    /// (converted to `f64`). Used to key caches and detect stale draws.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for (i, j, v) in self.triplets() {
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
            h.update(v.to_f64_lossy().to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl WeightMatrix<f64> {
    /// Writes `i, j, weight` triplets (0-based indices).
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["i", "j", "weight"]).map_err(|e| csv_io(path, e))?;
        for (i, j, v) in self.triplets() {
            w.write_record(&[i.to_string(), j.to_string(), format!("{v:e}")])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a triplet file written by [`WeightMatrix::write_triplets`] and
    /// re-normalizes its rows.
    pub fn read_triplets(path: &Path, n: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut trip = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_io(path, e))?;
            let field = |c: usize| rec.get(c).unwrap_or("").trim().to_owned();
            let bad = |c: usize| Error::NonNumericValue {
                column: ["i", "j", "weight"][c].into(),
                line: line + 2,
                value: field(c),
            };
            let i: usize = field(0).parse().map_err(|_| bad(0))?;
            let j: usize = field(1).parse().map_err(|_| bad(1))?;
            let v: f64 = field(2).parse().map_err(|_| bad(2))?;
            trip.push((i, j, v));
        }
        Self::row_normalize(n, &trip)
    }
}

fn distance<T: Scalar>(a: [T; 2], b: [T; 2], metric: DistanceMetric) -> T {
    match metric {
        DistanceMetric::Euclidean => {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            (dx * dx + dy * dy).sqrt()
        }
        DistanceMetric::GreatCircle => {
            let rad = T::lit(std::f64::consts::PI / 180.0);
            let (lon1, lat1) = (a[0] * rad, a[1] * rad);
            let (lon2, lat2) = (b[0] * rad, b[1] * rad);
            let half = T::lit(0.5);
            let s1 = ((lat2 - lat1) * half).sin();
            let s2 = ((lon2 - lon1) * half).sin();
            let h = s1 * s1 + lat1.cos() * lat2.cos() * s2 * s2;
            // Earth radius in km.
            T::lit(2.0 * 6371.0088) * h.sqrt().min(T::one()).asin()
        }
    }
}

/// Reads `region_id, x, y` rows and orders them to match `region_ids`.
pub fn read_coordinates(path: &Path, region_ids: &[String]) -> Result<Vec<[f64; 2]>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut found: HashMap<String, [f64; 2]> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, name: &str| -> Result<f64> {
            get(c).parse().map_err(|_| Error::NonNumericValue {
                column: name.into(),
                line: line + 2,
                value: get(c).into(),
            })
        };
        found.insert(get(0).to_owned(), [num(1, "x")?, num(2, "y")?]);
    }
    region_ids
        .iter()
        .map(|id| {
            found.get(id).copied().ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("no coordinates for region `{id}`"),
            })
        })
        .collect()
}

pub fn write_coordinates(path: &Path, region_ids: &[String], coords: &[[f64; 2]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["region_id", "x", "y"]).map_err(|e| csv_io(path, e))?;
    for (id, c) in region_ids.iter().zip(coords) {
        w.write_record(&[id.clone(), format!("{:e}", c[0]), format!("{:e}", c[1])])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

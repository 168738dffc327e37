use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCsr<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseCsr<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::Consistency(format!(
                "row_ptr must have {} entries starting at 0",
                rows + 1
            )));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Consistency("row_ptr must be nondecreasing".into()));
        }
        let nnz = row_ptr[rows];
        if col_idx.len() != nnz || values.len() != nnz {
            return Err(Error::Consistency(format!(
                "row_ptr declares {nnz} entries, found {} indices and {} values",
                col_idx.len(),
                values.len()
            )));
        }
        for i in 0..rows {
            let cols_i = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols_i.iter().any(|&j| j >= cols) {
                return Err(Error::Range(format!("row {i} has a column index >= {cols}")));
            }
            if cols_i.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Consistency(format!(
                    "row {i} column indices are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(Error::Range(format!(
                "entry ({i}, {j}) outside a {rows}x{cols} matrix"
            )));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(rows, cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |k| vals[k])
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.cols, self.rows, trip).expect("transpose of a valid CSR is valid")
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    /// `self · m`.
    ///
    /// Each output row is seeded with its first product term rather than
    /// zero, so the identity operator reproduces `m` exactly (signed zeros
    /// included).
    pub fn spmm(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != m.rows() {
            return Err(Error::Dimension {
                op: "spmm",
                lhs: (self.rows, self.cols),
                rhs: m.shape(),
            });
        }
        let d = m.cols();
        let mut out = Matrix::zeros(self.rows, d);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let orow = out.row_mut(i);
            let mut terms = cols.iter().zip(vals);
            if let Some((&j, &v)) = terms.next() {
                for (o, &x) in orow.iter_mut().zip(m.row(j)) {
                    *o = v * x;
                }
            }
            for (&j, &v) in terms {
                for (o, &x) in orow.iter_mut().zip(m.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`, by scattering rows; used for the backward pass of `spmm`.
    pub fn spmm_transposed(&self, g: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != g.rows() {
            return Err(Error::Dimension {
                op: "spmm_transposed",
                lhs: (self.rows, self.cols),
                rhs: g.shape(),
            });
        }
        let d = g.cols();
        let mut out = Matrix::zeros(self.cols, d);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let grow = g.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &x) in out.row_mut(j).iter_mut().zip(grow) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}

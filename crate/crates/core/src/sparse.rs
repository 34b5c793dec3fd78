//! Minimal compressed-sparse-row matrix for the network incidence data.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// One row: parallel slices of column indices and values.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    cols: &'a [usize],
    vals: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn col_indices(&self) -> &'a [usize] {
        self.cols
    }

    pub fn values(&self) -> &'a [f64] {
        self.vals
    }
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);

        let mut row_ptr = vec![0; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|t| t.1).collect(),
            values: merged.iter().map(|t| t.2).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        Row {
            cols: &self.col_idx[span.clone()],
            vals: &self.values[span],
        }
    }

    pub fn row_iter(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.nrows).map(|i| self.row(i))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "vector length does not match columns");
        DVector::from_iterator(
            self.nrows,
            self.row_iter()
                .map(|row| row.cols.iter().zip(row.vals).map(|(&j, &a)| a * x[j]).sum()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, row) in self.row_iter().enumerate() {
            for (&j, &a) in row.cols.iter().zip(row.vals) {
                m[(i, j)] = a;
            }
        }
        m
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|` over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces each stored pair by its mean `(A_ij + A_ji) / 2`; the pattern
    /// must be structurally symmetric.
    pub fn symmetrize(&mut self) {
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if j < i {
                    let v = 0.5 * (self.values[p] + self.get(j, i));
                    self.values[p] = v;
                    let r = self.row_ptr[j]..self.row_ptr[j + 1];
                    let q = r.start + self.col_idx[r].binary_search(&i).expect("symmetric pattern");
                    self.values[q] = v;
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Copy with the listed rows and columns removed.
    pub fn remove_rows_cols(&self, removed: &[usize]) -> (CsrMatrix, Vec<usize>) {
        let mut keep_map = vec![usize::MAX; self.nrows];
        let mut kept = Vec::with_capacity(self.nrows);
        let mut is_removed = vec![false; self.nrows];
        for &r in removed {
            is_removed[r] = true;
        }
        for i in 0..self.nrows {
            if !is_removed[i] {
                keep_map[i] = kept.len();
                kept.push(i);
            }
        }
        let mut row_ptr = vec![0usize; kept.len() + 1];
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for (new_i, &i) in kept.iter().enumerate() {
            for (j, v) in self.row(i) {
                if keep_map[j] != usize::MAX {
                    col_idx.push(keep_map[j]);
                    values.push(v);
                }
            }
            row_ptr[new_i + 1] = col_idx.len();
        }
        (
            CsrMatrix {
                nrows: kept.len(),
                ncols: kept.len(),
                row_ptr,
                col_idx,
                values,
            },
            kept,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 3);
        let mut y = [0.0; 2];
        m.matvec(&[1.0, 2.0], &mut y);
        assert_eq!(y, [4.0, 0.0]);
    }

    #[test]
    fn removing_rows_and_columns() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (0, 2, 5.0), (2, 0, 5.0)]);
        let (r, kept) = m.remove_rows_cols(&[1]);
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(r.get(0, 1), 5.0);
        assert_eq!(r.get(1, 1), 3.0);
    }
}

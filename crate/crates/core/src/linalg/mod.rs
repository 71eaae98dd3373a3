//! Sparse and matrix-free linear algebra used by the cell and domain solvers.

pub mod element_op;
pub mod grid;
pub mod ldlt;
pub mod minres;
pub mod multigrid;
pub mod ordering;
pub mod sparse;

/// Symmetric linear operator acting on dense vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for sparse::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

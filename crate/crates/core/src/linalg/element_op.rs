//! Matrix-free operator defined by a bank of dense element matrices.

use nalgebra::DMatrix;

use super::sparse::CsrMatrix;
use super::LinearOperator;

/// Marker for a node that carries no degrees of freedom.
pub const NONE: u32 = u32::MAX;

/// `sum_e P_e^T K_{type(e)} P_e` where each element touches eight node blocks of
/// `ncomp` interleaved components. Nodes marked [`NONE`] are eliminated
/// (homogeneous Dirichlet or void).
#[derive(Debug, Clone)]
pub struct ElementOperator {
    pub ncomp: usize,
    pub nblocks: usize,
    pub elems: Vec<[u32; 8]>,
    pub types: Vec<u32>,
    /// Row-major `(8 ncomp)^2` matrices.
    pub bank: Vec<Vec<f64>>,
}

impl ElementOperator {
    pub fn local_size(&self) -> usize {
        8 * self.ncomp
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self.ncomp {
            1 => self.apply_nc::<1>(x, y),
            3 => self.apply_nc::<3>(x, y),
            4 => self.apply_nc::<4>(x, y),
            nc => panic!("unsupported component count {nc}"),
        }
    }

    fn apply_nc<const NC: usize>(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let l = 8 * NC;
        let mut xl = [0.0f64; 32];
        let mut yl = [0.0f64; 32];
        for (nodes, &t) in self.elems.iter().zip(&self.types) {
            for (a, &node) in nodes.iter().enumerate() {
                for c in 0..NC {
                    xl[a * NC + c] = if node == NONE { 0.0 } else { x[node as usize * NC + c] };
                }
            }
            let k = &self.bank[t as usize];
            for p in 0..l {
                let row = &k[p * l..(p + 1) * l];
                let mut s = 0.0;
                for q in 0..l {
                    s += row[q] * xl[q];
                }
                yl[p] = s;
            }
            for (a, &node) in nodes.iter().enumerate() {
                if node != NONE {
                    for c in 0..NC {
                        y[node as usize * NC + c] += yl[a * NC + c];
                    }
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let nc = self.ncomp;
        let l = self.local_size();
        let mut d = vec![0.0; self.nblocks * nc];
        for (nodes, &t) in self.elems.iter().zip(&self.types) {
            let k = &self.bank[t as usize];
            for (a, &node) in nodes.iter().enumerate() {
                if node != NONE {
                    for c in 0..nc {
                        let p = a * nc + c;
                        d[node as usize * nc + c] += k[p * l + p];
                    }
                }
            }
        }
        d
    }

    fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let nc = self.ncomp;
        let l = self.local_size();
        for (nodes, &t) in self.elems.iter().zip(&self.types) {
            let k = &self.bank[t as usize];
            for (a, &na) in nodes.iter().enumerate() {
                if na == NONE {
                    continue;
                }
                for (b, &nb) in nodes.iter().enumerate() {
                    if nb == NONE {
                        continue;
                    }
                    for ca in 0..nc {
                        for cb in 0..nc {
                            let v = k[(a * nc + ca) * l + b * nc + cb];
                            if v != 0.0 {
                                f(na as usize * nc + ca, nb as usize * nc + cb, v);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn assemble_csr(&self) -> CsrMatrix {
        let n = self.dim();
        let mut triplets = Vec::with_capacity(self.elems.len() * self.local_size() * self.local_size());
        self.for_each_entry(|i, j, v| triplets.push((i, j, v)));
        CsrMatrix::from_triplets(n, n, triplets)
    }

    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        self.for_each_entry(|i, j, v| m[(i, j)] += v);
        m
    }
}

impl LinearOperator for ElementOperator {
    fn dim(&self) -> usize {
        self.nblocks * self.ncomp
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_free_matches_assembled() {
        // two scalar elements sharing four nodes, one node eliminated
        let mut k = vec![0.0; 64];
        for p in 0..8 {
            for q in 0..8 {
                k[p * 8 + q] = if p == q { 3.0 } else { -(((p + q) % 3) as f64) * 0.1 };
            }
        }
        let op = ElementOperator {
            ncomp: 1,
            nblocks: 11,
            elems: vec![[0, 1, 2, 3, 4, 5, 6, 7], [1, 8, 3, 9, 5, 10, 7, NONE]],
            types: vec![0, 0],
            bank: vec![k],
        };
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y1 = vec![0.0; 11];
        op.apply(&x, &mut y1);
        let a = op.assemble_csr();
        let mut y2 = vec![0.0; 11];
        a.matvec(&x, &mut y2);
        for (u, v) in y1.iter().zip(&y2) {
            assert!((u - v).abs() < 1e-14);
        }
        assert_eq!(op.diagonal()[1], 6.0);
    }
}

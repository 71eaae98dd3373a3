//! Sparse LDL^T factorization without pivoting (up-looking, elimination tree).
//!
//! Suitable for symmetric quasi-definite matrices, for which every symmetric
//! permutation admits a factorization with nonzero pivots.

use super::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LdltError {
    ZeroPivot { index: usize, value: f64 },
    NotSquare,
}

impl std::fmt::Display for LdltError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LdltError::ZeroPivot { index, value } => write!(f, "pivot {index} is {value:e}"),
            LdltError::NotSquare => write!(f, "matrix is not square"),
        }
    }
}

impl LdltFactor {
    /// Factors `P A P^T` where `perm[new] = old`. Only the lower triangle of the
    /// permuted matrix is read, so `a` must be symmetric.
    pub fn factor(a: &CsrMatrix, perm: &[usize]) -> Result<Self, LdltError> {
        if a.nrows != a.ncols || perm.len() != a.nrows {
            return Err(LdltError::NotSquare);
        }
        let n = a.nrows;
        let mut pinv = vec![0usize; n];
        for (k, &old) in perm.iter().enumerate() {
            pinv[old] = k;
        }
        // column k of the permuted upper triangle, i.e. row k restricted to i <= k
        let mut cp = vec![0usize; n + 1];
        let mut ci: Vec<usize> = Vec::with_capacity(a.nnz() / 2 + n);
        let mut cx: Vec<f64> = Vec::with_capacity(a.nnz() / 2 + n);
        for k in 0..n {
            for (j, v) in a.row(perm[k]) {
                let i = pinv[j];
                if i <= k {
                    ci.push(i);
                    cx.push(v);
                }
            }
            cp[k + 1] = ci.len();
        }

        // symbolic
        let mut parent = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            for &i0 in &ci[cp[k]..cp[k + 1]] {
                let mut i = i0;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let total = lp[n];
        let mut li = vec![0u32; total];
        let mut lx = vec![0.0f64; total];
        let mut d = vec![0.0f64; n];

        // numeric
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = usize::MAX);
        lnz.iter_mut().for_each(|l| *l = 0);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in cp[k]..cp[k + 1] {
                let mut i = ci[p];
                y[i] += cx[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + lnz[i];
                for p in lp[i]..p2 {
                    y[li[p] as usize] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                dk -= l_ki * yi;
                li[p2] = k as u32;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            if dk == 0.0 || !dk.is_finite() {
                return Err(LdltError::ZeroPivot { index: k, value: dk });
            }
            d[k] = dk;
        }
        Ok(Self {
            n,
            perm: perm.to_vec(),
            lp,
            li,
            lx,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// Number of positive and negative pivots.
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }

    /// Smallest and largest pivot magnitude.
    pub fn pivot_range(&self) -> (f64, f64) {
        self.d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    x[self.li[p] as usize] -= self.lx[p] * xj;
                }
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p] as usize];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; n];
        for (k, &old) in self.perm.iter().enumerate() {
            out[old] = x[k];
        }
        out
    }
}

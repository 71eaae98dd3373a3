//! Geometric multigrid on Dirichlet voxel grids.
//!
//! Coarse element matrices are exact Galerkin products of the fine element
//! matrices with trilinear interpolation, so the coarse operators equal
//! `R A P` and the V-cycle is a symmetric positive definite preconditioner.

use std::collections::HashMap;

use log::debug;

use super::element_op::{ElementOperator, NONE};
use super::grid::{BoxGrid, VOID};
use super::ldlt::{LdltError, LdltFactor};
use super::minres::Preconditioner;
use super::ordering::{expand_blocks, nested_dissection};
use super::LinearOperator;

const SMOOTHER_DEGREE: usize = 3;
const LOWER_FRACTION: f64 = 1.0 / 30.0;
const POWER_ITERATIONS: usize = 20;
const COARSEST_MAX: usize = 4;

struct Interpolation {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    w: Vec<f64>,
}

struct Level {
    op: ElementOperator,
    inv_diag: Vec<f64>,
    lmax: f64,
    /// Interpolation from the next coarser level into this one.
    to_fine: Option<Interpolation>,
}

pub struct Multigrid {
    levels: Vec<Level>,
    coarse: Option<LdltFactor>,
    ncomp: usize,
}

fn child_local(offset: [usize; 3], corner: [usize; 3]) -> usize {
    let p = [offset[0] + corner[0], offset[1] + corner[1], offset[2] + corner[2]];
    p[0] + 3 * p[1] + 9 * p[2]
}

fn weight_1d(fine: usize, coarse: usize) -> f64 {
    match (fine, coarse) {
        (1, _) => 0.5,
        (0, 0) | (2, 1) => 1.0,
        _ => 0.0,
    }
}

/// Galerkin element matrix of a coarse voxel from its eight children.
fn galerkin_element(children: &[u32; 8], bank: &[Vec<f64>], ncomp: usize) -> Vec<f64> {
    let l = 8 * ncomp;
    let big = 27 * ncomp;
    let mut k27 = vec![0.0; big * big];
    for (ch, &t) in children.iter().enumerate() {
        if t == VOID {
            continue;
        }
        let ke = &bank[t as usize];
        let off = crate::hex8::CORNERS[ch];
        for a in 0..8 {
            let fa = child_local(off, crate::hex8::CORNERS[a]);
            for b in 0..8 {
                let fb = child_local(off, crate::hex8::CORNERS[b]);
                for ca in 0..ncomp {
                    for cb in 0..ncomp {
                        k27[(fa * ncomp + ca) * big + fb * ncomp + cb] += ke[(a * ncomp + ca) * l + b * ncomp + cb];
                    }
                }
            }
        }
    }
    let mut p = [[0.0; 8]; 27];
    for (f, row) in p.iter_mut().enumerate() {
        let fc = [f % 3, (f / 3) % 3, f / 9];
        for (a, c) in crate::hex8::CORNERS.iter().enumerate() {
            row[a] = weight_1d(fc[0], c[0]) * weight_1d(fc[1], c[1]) * weight_1d(fc[2], c[2]);
        }
    }
    // T = K27 P, then Kc = P^T T
    let mut t = vec![0.0; big * l];
    for r in 0..big {
        for g in 0..27 {
            for cb in 0..ncomp {
                let v = k27[r * big + g * ncomp + cb];
                if v != 0.0 {
                    for b in 0..8 {
                        t[r * l + b * ncomp + cb] += v * p[g][b];
                    }
                }
            }
        }
    }
    let mut kc = vec![0.0; l * l];
    for f in 0..27 {
        for a in 0..8 {
            let w = p[f][a];
            if w == 0.0 {
                continue;
            }
            for ca in 0..ncomp {
                let src = &t[(f * ncomp + ca) * l..(f * ncomp + ca + 1) * l];
                let dst = &mut kc[(a * ncomp + ca) * l..(a * ncomp + ca + 1) * l];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    // restore exact symmetry lost to summation order
    for i in 0..l {
        for j in 0..i {
            let s = 0.5 * (kc[i * l + j] + kc[j * l + i]);
            kc[i * l + j] = s;
            kc[j * l + i] = s;
        }
    }
    kc
}

fn coarsen(grid: &BoxGrid, bank: &[Vec<f64>], ncomp: usize) -> (BoxGrid, Vec<Vec<f64>>, Interpolation) {
    let n = grid.n;
    let nc = n / 2;
    let mut memo: HashMap<[u32; 8], u32> = HashMap::new();
    let mut cbank = Vec::new();
    let mut ctypes = vec![VOID; nc * nc * nc];
    for kk in 0..nc {
        for jj in 0..nc {
            for ii in 0..nc {
                let mut key = [VOID; 8];
                for (ch, c) in crate::hex8::CORNERS.iter().enumerate() {
                    let (i, j, k) = (2 * ii + c[0], 2 * jj + c[1], 2 * kk + c[2]);
                    key[ch] = grid.voxel_types[i + n * (j + n * k)];
                }
                if key.iter().all(|&t| t == VOID) {
                    continue;
                }
                let t = *memo.entry(key).or_insert_with(|| {
                    cbank.push(galerkin_element(&key, bank, ncomp));
                    (cbank.len() - 1) as u32
                });
                ctypes[ii + nc * (jj + nc * kk)] = t;
            }
        }
    }
    let cgrid = BoxGrid::new(nc, ctypes);
    let mut ptr = vec![0usize];
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for &v in &grid.block_node {
        let [i, j, k] = grid.node_coords(v as usize);
        let parents = |x: usize| -> Vec<(usize, f64)> {
            if x.is_multiple_of(2) {
                vec![(x / 2, 1.0)]
            } else {
                vec![((x - 1) / 2, 0.5), (x.div_ceil(2), 0.5)]
            }
        };
        for &(pk, wk) in &parents(k) {
            for &(pj, wj) in &parents(j) {
                for &(pi, wi) in &parents(i) {
                    let cb = cgrid.node_block[cgrid.node_index(pi, pj, pk)];
                    if cb != NONE {
                        idx.push(cb);
                        w.push(wi * wj * wk);
                    }
                }
            }
        }
        ptr.push(idx.len());
    }
    (cgrid, cbank, Interpolation { ptr, idx, w })
}

fn estimate_lmax(op: &ElementOperator, inv_diag: &[f64]) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 1.0;
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618).sin()).collect();
    let mut y = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..POWER_ITERATIONS {
        op.apply(&x, &mut y);
        // Rayleigh quotient of D^{-1} A in the D inner product
        let num: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(inv_diag).map(|(a, d)| a * a / d).sum();
        lambda = num / den;
        for (yi, di) in y.iter_mut().zip(inv_diag) {
            *yi *= di;
        }
        let s = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / s;
        }
    }
    lambda
}

impl Level {
    fn new(op: ElementOperator, to_fine: Option<Interpolation>) -> Self {
        let inv_diag: Vec<f64> = op.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
        let lmax = estimate_lmax(&op, &inv_diag);
        Self {
            op,
            inv_diag,
            lmax,
            to_fine,
        }
    }

    /// Chebyshev-accelerated Jacobi sweeps on `[lmax/30, 1.1 lmax]`.
    fn smooth(&self, b: &[f64], x: &mut [f64], zero_guess: bool) {
        let n = b.len();
        let hi = 1.1 * self.lmax;
        let lo = LOWER_FRACTION * self.lmax;
        let theta = 0.5 * (hi + lo);
        let delta = 0.5 * (hi - lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut r = b.to_vec();
        let mut ad = vec![0.0; n];
        if !zero_guess {
            self.op.apply(x, &mut ad);
            for (ri, ai) in r.iter_mut().zip(&ad) {
                *ri -= ai;
            }
        }
        let mut d: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(ri, di)| ri * di / theta).collect();
        for it in 0..SMOOTHER_DEGREE {
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            if it + 1 == SMOOTHER_DEGREE {
                break;
            }
            self.op.apply(&d, &mut ad);
            for (ri, ai) in r.iter_mut().zip(&ad) {
                *ri -= ai;
            }
            let rho_new = 1.0 / (2.0 * sigma - rho);
            let c1 = rho_new * rho;
            let c2 = 2.0 * rho_new / delta;
            for i in 0..n {
                d[i] = c1 * d[i] + c2 * r[i] * self.inv_diag[i];
            }
            rho = rho_new;
        }
    }
}

impl Multigrid {
    /// Hierarchy for the operator `grid.operator(ncomp, bank)`; the element
    /// matrices must be symmetric positive semidefinite and the assembled
    /// operator positive definite.
    pub fn new(grid: &BoxGrid, ncomp: usize, bank: Vec<Vec<f64>>) -> Result<Self, LdltError> {
        let mut levels = Vec::new();
        let mut g = grid.clone();
        let mut bank = bank;
        let mut pending: Option<Interpolation> = None;
        loop {
            let op = g.operator(ncomp, bank.clone());
            let can_coarsen = g.n.is_multiple_of(2) && g.n > COARSEST_MAX;
            if can_coarsen {
                let (cg, cbank, interp) = coarsen(&g, &bank, ncomp);
                if cg.nblocks() > 0 {
                    debug!("multigrid level n={} blocks={} types={}", g.n, g.nblocks(), bank.len());
                    levels.push(Level::new(op, pending.take()));
                    pending = Some(interp);
                    g = cg;
                    bank = cbank;
                    continue;
                }
            }
            debug!("multigrid coarsest n={} blocks={}", g.n, g.nblocks());
            let a = op.assemble_csr();
            let order = expand_blocks(&nested_dissection(&g.block_coords(), [g.n + 1; 3], [false; 3]), ncomp);
            let coarse = if a.nrows > 0 { Some(LdltFactor::factor(&a, &order)?) } else { None };
            levels.push(Level {
                inv_diag: Vec::new(),
                lmax: 1.0,
                op,
                to_fine: pending.take(),
            });
            return Ok(Self { levels, coarse, ncomp });
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    fn prolong_add(interp: &Interpolation, ncomp: usize, xc: &[f64], xf: &mut [f64]) {
        for b in 0..interp.ptr.len() - 1 {
            for p in interp.ptr[b]..interp.ptr[b + 1] {
                let cb = interp.idx[p] as usize;
                let w = interp.w[p];
                for c in 0..ncomp {
                    xf[b * ncomp + c] += w * xc[cb * ncomp + c];
                }
            }
        }
    }

    fn restrict(interp: &Interpolation, ncomp: usize, rf: &[f64], rc: &mut [f64]) {
        rc.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..interp.ptr.len() - 1 {
            for p in interp.ptr[b]..interp.ptr[b + 1] {
                let cb = interp.idx[p] as usize;
                let w = interp.w[p];
                for c in 0..ncomp {
                    rc[cb * ncomp + c] += w * rf[b * ncomp + c];
                }
            }
        }
    }

    fn vcycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        let level = &self.levels[l];
        if l + 1 == self.levels.len() {
            return match &self.coarse {
                Some(f) => f.solve(b),
                None => vec![0.0; b.len()],
            };
        }
        let n = b.len();
        let mut x = vec![0.0; n];
        level.smooth(b, &mut x, true);
        let mut r = vec![0.0; n];
        level.op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let coarse = &self.levels[l + 1];
        let interp = coarse.to_fine.as_ref().expect("interpolation between levels");
        let mut rc = vec![0.0; coarse.op.dim()];
        Self::restrict(interp, self.ncomp, &r, &mut rc);
        let xc = self.vcycle(l + 1, &rc);
        Self::prolong_add(interp, self.ncomp, &xc, &mut x);
        level.smooth(b, &mut x, false);
        x
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let x = self.vcycle(0, r);
        z.copy_from_slice(&x);
    }
}

/// Splits a 4-component coupled element matrix into its elastic block and
/// its (sign-restored, positive) dielectric block.
pub fn split_coupled_bank(bank: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut ub = Vec::with_capacity(bank.len());
    let mut pb = Vec::with_capacity(bank.len());
    for k in bank {
        let mut u = vec![0.0; 24 * 24];
        let mut p = vec![0.0; 64];
        for a in 0..8 {
            for b in 0..8 {
                for i in 0..3 {
                    for j in 0..3 {
                        u[(3 * a + i) * 24 + 3 * b + j] = k[(4 * a + i) * 32 + 4 * b + j];
                    }
                }
                p[a * 8 + b] = -k[(4 * a + 3) * 32 + 4 * b + 3];
            }
        }
        ub.push(u);
        pb.push(p);
    }
    (ub, pb)
}

/// Block-diagonal preconditioner `diag(A^{-1}, D^{-1})` for interleaved
/// `(u1,u2,u3,phi)` unknowns, each block approximated by one V-cycle.
pub struct CoupledPreconditioner {
    elastic: Multigrid,
    electric: Multigrid,
}

impl CoupledPreconditioner {
    pub fn new(grid: &BoxGrid, coupled_bank: &[Vec<f64>]) -> Result<Self, LdltError> {
        let (ub, pb) = split_coupled_bank(coupled_bank);
        Ok(Self {
            elastic: Multigrid::new(grid, 3, ub)?,
            electric: Multigrid::new(grid, 1, pb)?,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.elastic.num_levels()
    }
}

impl Preconditioner for CoupledPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let nb = r.len() / 4;
        let mut ru = vec![0.0; 3 * nb];
        let mut rp = vec![0.0; nb];
        for b in 0..nb {
            ru[3 * b..3 * b + 3].copy_from_slice(&r[4 * b..4 * b + 3]);
            rp[b] = r[4 * b + 3];
        }
        let zu = self.elastic.vcycle(0, &ru);
        let zp = self.electric.vcycle(0, &rp);
        for b in 0..nb {
            z[4 * b..4 * b + 3].copy_from_slice(&zu[3 * b..3 * b + 3]);
            z[4 * b + 3] = zp[b];
        }
    }
}

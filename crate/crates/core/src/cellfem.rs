//! Periodic coupled cell problems on the voxelized perforated cell.
//!
//! Unknowns live on the active nodes of the periodic grid, four per node
//! `(u1, u2, u3, phi)`. The block system `[[A, B], [B^T, -D]]` is singular
//! with exactly the constants as null space on a connected cell; each solve
//! returns the representative with zero nodal mean of every component.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CellGeometry;
use crate::hex8::{self, LoadCase, CORNERS, DOFS};
use crate::linalg::element_op::{ElementOperator, NONE};
use crate::linalg::ldlt::LdltFactor;
use crate::linalg::minres::{minres, Jacobi, MinresOptions};
use crate::linalg::ordering::{expand_blocks, nested_dissection};
use crate::linalg::sparse::CsrMatrix;
use crate::linalg::LinearOperator;
use crate::tensors::{Mat3, MaterialField};

/// Largest resolution solved by sparse factorization; finer cells use MINRES first.
pub const DIRECT_MAX_RESOLUTION: usize = 32;
/// Required relative residual of each cell solve.
pub const SOLVE_TOLERANCE: f64 = 1e-9;
const PROBE_SEED: u64 = 0x5eed_ce11;
const PROBE_COUNT: usize = 8;

/// Node-periodic grid with the active nodes of a cell geometry.
#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    n: usize,
    node_block: Vec<u32>,
    block_node: Vec<u32>,
}

impl PeriodicGrid {
    pub fn new(geometry: &CellGeometry) -> Self {
        let n = geometry.n();
        let mut touched = vec![false; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if geometry.is_material(geometry.voxel_index(i, j, k)) {
                        for c in CORNERS {
                            touched[Self::wrap(n, i + c[0], j + c[1], k + c[2])] = true;
                        }
                    }
                }
            }
        }
        let mut node_block = vec![NONE; n * n * n];
        let mut block_node = Vec::new();
        for (v, &t) in touched.iter().enumerate() {
            if t {
                node_block[v] = block_node.len() as u32;
                block_node.push(v as u32);
            }
        }
        Self {
            n,
            node_block,
            block_node,
        }
    }

    #[inline]
    fn wrap(n: usize, i: usize, j: usize, k: usize) -> usize {
        (i % n) + n * ((j % n) + n * (k % n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Periodic node index of grid point `(i,j,k)`.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        Self::wrap(self.n, i, j, k)
    }

    pub fn num_active(&self) -> usize {
        self.block_node.len()
    }

    /// DOF block of a node, if active.
    #[inline]
    pub fn block_of(&self, node: usize) -> Option<usize> {
        let b = self.node_block[node];
        (b != NONE).then_some(b as usize)
    }

    pub fn voxel_blocks(&self, i: usize, j: usize, k: usize) -> [u32; 8] {
        let mut out = [NONE; 8];
        for (a, c) in CORNERS.iter().enumerate() {
            out[a] = self.node_block[self.node_index(i + c[0], j + c[1], k + c[2])];
        }
        out
    }

    pub fn block_coords(&self) -> Vec<[usize; 3]> {
        let n = self.n;
        self.block_node
            .iter()
            .map(|&v| {
                let v = v as usize;
                [v % n, (v / n) % n, v / (n * n)]
            })
            .collect()
    }
}

/// Assembled periodic cell system with the nine right-hand sides.
#[derive(Debug, Clone)]
pub struct CellSystem {
    pub grid: PeriodicGrid,
    /// Matrix-free form of `K`, one element type per material phase.
    pub operator: ElementOperator,
    pub matrix: CsrMatrix,
    /// Right-hand sides in the order of [`LoadCase::all`].
    pub loads: Vec<Vec<f64>>,
    /// Voxel index of every element in `operator`.
    pub element_voxels: Vec<usize>,
}

impl CellSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    /// Row `c` of the zero-mean constraints: the nodal mean of component `c`.
    pub fn constraint_row(&self, c: usize) -> Vec<f64> {
        let nb = self.grid.num_active();
        let mut row = vec![0.0; 4 * nb];
        for b in 0..nb {
            row[4 * b + c] = 1.0 / nb as f64;
        }
        row
    }
}

fn element_bank(material: &MaterialField, h: f64) -> Vec<Vec<f64>> {
    material.phases().iter().map(|m| hex8::element_matrix(m, h)).collect()
}

/// Assembles `K` and the nine cell loads.
pub fn assemble_cell_system(geometry: &CellGeometry, material: &MaterialField) -> Result<CellSystem> {
    if !geometry.connected() {
        return Err(Error::DisconnectedGeometry);
    }
    let n = geometry.n();
    material.check_resolution(n)?;
    let h = 1.0 / n as f64;
    let grid = PeriodicGrid::new(geometry);
    let bank = element_bank(material, h);
    let cases = LoadCase::all();
    let load_bank: Vec<Vec<[f64; DOFS]>> = material
        .phases()
        .iter()
        .map(|m| cases.iter().map(|&c| hex8::element_load(m, h, c)).collect())
        .collect();

    let mut elems = Vec::new();
    let mut types = Vec::new();
    let mut element_voxels = Vec::new();
    let nb = grid.num_active();
    let mut loads = vec![vec![0.0; 4 * nb]; cases.len()];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let v = geometry.voxel_index(i, j, k);
                if !geometry.is_material(v) {
                    continue;
                }
                let blocks = grid.voxel_blocks(i, j, k);
                let phase = material.phase_of(v);
                for (q, load) in loads.iter_mut().enumerate() {
                    let fe = &load_bank[phase][q];
                    for (a, &b) in blocks.iter().enumerate() {
                        for c in 0..4 {
                            load[4 * b as usize + c] += fe[4 * a + c];
                        }
                    }
                }
                elems.push(blocks);
                types.push(phase as u32);
                element_voxels.push(v);
            }
        }
    }
    let operator = ElementOperator {
        ncomp: 4,
        nblocks: nb,
        elems,
        types,
        bank,
    };
    let mut matrix = operator.assemble_csr();
    matrix.symmetrize();
    probe_blocks(&operator)?;
    debug!("cell system n={n} active_nodes={nb} nnz={}", matrix.nnz());
    Ok(CellSystem {
        grid,
        operator,
        matrix,
        loads,
        element_voxels,
    })
}

/// Random Rayleigh quotients of the elastic block and of the (sign-restored)
/// dielectric block must be nonnegative up to round-off.
fn probe_blocks(op: &ElementOperator) -> Result<()> {
    let dim = op.dim();
    let diag = op.diagonal();
    let scale = diag.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut y = vec![0.0; dim];
    for (block, comps) in [("elastic", 0..3usize), ("dielectric", 3..4usize)] {
        let sign = if block == "elastic" { 1.0 } else { -1.0 };
        for _ in 0..PROBE_COUNT {
            let x: Vec<f64> = (0..dim)
                .map(|i| if comps.contains(&(i % 4)) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect();
            op.apply(&x, &mut y);
            let num: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * sign;
            let den: f64 = x.iter().map(|a| a * a).sum();
            let quotient = num / den.max(f64::MIN_POSITIVE);
            if quotient < -1e-10 * scale {
                return Err(Error::NonPositiveBlock { block, quotient });
            }
        }
    }
    Ok(())
}

/// The nine periodic corrector fields, zero mean over active nodes.
#[derive(Debug, Clone)]
pub struct CellSolutionSet {
    pub grid: PeriodicGrid,
    /// Interleaved `(u1,u2,u3,phi)` per active node, indexed like [`LoadCase::all`].
    pub fields: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub method: String,
}

/// Solver record of one load case.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveRecord {
    pub case: String,
    pub method: String,
    pub iterations: usize,
    pub relative_residual: f64,
    pub max_mean_defect: f64,
}

enum CellSolver {
    Direct(LdltFactor),
    Iterative { reduced: CsrMatrix, jacobi: Jacobi },
}

/// The four unknowns of the first active node; fixing them removes the
/// constant null space.
fn pinned_dofs() -> Vec<usize> {
    (0..4).collect()
}

fn factor_reduced(reduced: &CsrMatrix, grid: &PeriodicGrid) -> Result<LdltFactor> {
    // node order without the pinned first block
    let coords: Vec<[usize; 3]> = grid.block_coords()[1..].to_vec();
    let n = grid.n();
    let order = expand_blocks(&nested_dissection(&coords, [n; 3], [true; 3]), 4);
    LdltFactor::factor(reduced, &order).map_err(|e| Error::SolverBreakdown {
        case: "factorization".into(),
        reason: e.to_string(),
    })
}

/// Solves the nine cell problems with one shared factorization.
pub fn solve_cell_problems(system: &CellSystem) -> Result<CellSolutionSet> {
    let grid = &system.grid;
    let nb = grid.num_active();
    let pinned = pinned_dofs();
    let (reduced, kept) = system.matrix.remove_rows_cols(&pinned);
    let solver = if grid.n() <= DIRECT_MAX_RESOLUTION {
        let f = factor_reduced(&reduced, grid)?;
        let (pos, neg) = f.inertia();
        debug!("cell factorization nnz(L)={} inertia=({pos},{neg})", f.nnz_l());
        if pos != 3 * (nb - 1) || neg != nb - 1 {
            return Err(Error::SolverBreakdown {
                case: "factorization".into(),
                reason: format!("unexpected inertia ({pos},{neg}) for {nb} active nodes"),
            });
        }
        CellSolver::Direct(f)
    } else {
        let jacobi = Jacobi::from_diagonal(&reduced.diagonal());
        CellSolver::Iterative { reduced: reduced.clone(), jacobi }
    };
    let cases = LoadCase::all();
    let outcomes: Vec<Result<(Vec<f64>, SolveRecord)>> = cases
        .par_iter()
        .map(|&case| solve_one(system, &solver, &reduced, &kept, case))
        .collect();
    let mut fields = Vec::with_capacity(cases.len());
    let mut residuals = Vec::with_capacity(cases.len());
    let mut method = String::new();
    for out in outcomes {
        let (x, rec) = out?;
        info!(
            "cell solve case={} method={} iterations={} relative_residual={:.3e} mean_defect={:.3e}",
            rec.case, rec.method, rec.iterations, rec.relative_residual, rec.max_mean_defect
        );
        residuals.push(rec.relative_residual);
        method = rec.method;
        fields.push(x);
    }
    Ok(CellSolutionSet {
        grid: grid.clone(),
        fields,
        residuals,
        method,
    })
}

fn solve_one(
    system: &CellSystem,
    solver: &CellSolver,
    reduced: &CsrMatrix,
    kept: &[usize],
    case: LoadCase,
) -> Result<(Vec<f64>, SolveRecord)> {
    // the exact load is orthogonal to the constants; drop its round-off component
    let mut rhs = system.loads[case.index()].clone();
    project_zero_mean(&mut rhs);
    let rhs = &rhs;
    let dim = system.dim();
    let rhs_red: Vec<f64> = kept.iter().map(|&i| rhs[i]).collect();
    let (x_red, method, iterations) = match solver {
        CellSolver::Direct(f) => (f.solve(&rhs_red), "ldlt", 0),
        CellSolver::Iterative { reduced: a, jacobi } => {
            let mut x = vec![0.0; rhs_red.len()];
            let opts = MinresOptions {
                rtol: 0.1 * SOLVE_TOLERANCE,
                max_iter: 20 * rhs_red.len().min(5000),
                max_restarts: 4,
            };
            let out = minres(a, jacobi, &rhs_red, &mut x, &opts);
            if out.converged {
                (x, "minres-jacobi", out.iterations)
            } else {
                let f = factor_reduced(reduced, &system.grid)?;
                (f.solve(&rhs_red), "ldlt-fallback", out.iterations)
            }
        }
    };
    let mut x = vec![0.0; dim];
    for (v, &i) in x_red.iter().zip(kept) {
        x[i] = *v;
    }
    project_zero_mean(&mut x);
    let rel = residual(&system.matrix, rhs, &x);
    let mean_defect = mean_defect(&x);
    let rec = SolveRecord {
        case: case.to_string(),
        method: method.into(),
        iterations,
        relative_residual: rel,
        max_mean_defect: mean_defect,
    };
    if rel > SOLVE_TOLERANCE {
        return Err(Error::SolverBreakdown {
            case: case.to_string(),
            reason: format!("relative residual {rel:.3e} exceeds {SOLVE_TOLERANCE:.0e}"),
        });
    }
    Ok((x, rec))
}

fn project_zero_mean(x: &mut [f64]) {
    let nb = x.len() / 4;
    if nb == 0 {
        return;
    }
    for c in 0..4 {
        let mean = (0..nb).map(|b| x[4 * b + c]).sum::<f64>() / nb as f64;
        for b in 0..nb {
            x[4 * b + c] -= mean;
        }
    }
}

/// Largest `|mean_c| / ||x_c||_inf` over the four components.
pub fn mean_defect(x: &[f64]) -> f64 {
    let nb = x.len() / 4;
    let mut worst = 0.0f64;
    for c in 0..4 {
        let mean = (0..nb).map(|b| x[4 * b + c]).sum::<f64>() / nb.max(1) as f64;
        let inf = (0..nb).fold(0.0f64, |a, b| a.max(x[4 * b + c].abs()));
        if inf > 0.0 {
            worst = worst.max(mean.abs() / inf);
        }
    }
    worst
}

/// `||K x - b|| / ||b||`, or `||K x||` when `b = 0`.
pub fn residual(k: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut kx = vec![0.0; x.len()];
    k.matvec(x, &mut kx);
    let r = kx.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

impl CellSolutionSet {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn field(&self, case: LoadCase) -> &[f64] {
        &self.fields[case.index()]
    }

    /// The 32 local values of `case` on voxel `(i,j,k)`; inactive corners are zero.
    pub fn local_values(&self, case: LoadCase, i: usize, j: usize, k: usize) -> [f64; DOFS] {
        let x = self.field(case);
        let mut out = [0.0; DOFS];
        for (a, &b) in self.grid.voxel_blocks(i, j, k).iter().enumerate() {
            if b != NONE {
                out[4 * a..4 * a + 4].copy_from_slice(&x[4 * b as usize..4 * b as usize + 4]);
            }
        }
        out
    }

    /// Strain of the displacement part and gradient of the potential part of
    /// `case` at local point `xi` of voxel `(i,j,k)`.
    pub fn gradients_in_voxel(&self, case: LoadCase, i: usize, j: usize, k: usize, xi: [f64; 3]) -> (Mat3, [f64; 3]) {
        let vals = self.local_values(case, i, j, k);
        hex8::local_gradients(&vals, xi, 1.0 / self.n() as f64)
    }

    /// Largest absolute nodal value over the displacement or potential part.
    pub fn max_abs(&self, case: LoadCase, potential: bool) -> f64 {
        self.field(case)
            .iter()
            .enumerate()
            .filter(|(i, _)| (i % 4 == 3) == potential)
            .fold(0.0f64, |a, (_, v)| a.max(v.abs()))
    }
}

/// Strain `s_y` and potential gradient of a cell field at `y` (reduced modulo 1).
pub fn field_gradient_at(
    cells: &CellSolutionSet,
    geometry: &CellGeometry,
    case: LoadCase,
    y: [f64; 3],
) -> Result<(Mat3, [f64; 3])> {
    if geometry.n() != cells.n() {
        return Err(Error::ShapeMismatch(format!(
            "cell solutions at n={} but geometry at n={}",
            cells.n(),
            geometry.n()
        )));
    }
    let (v, local) = geometry.locate(y);
    if !geometry.is_material(v) {
        return Err(Error::VoidPoint(y));
    }
    let n = geometry.n();
    Ok(cells.gradients_in_voxel(case, v % n, (v / n) % n, v / (n * n), local))
}

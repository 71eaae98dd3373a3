//! First-order two-scale reconstruction and the epsilon sweep comparing the
//! direct simulation against `chi(x/eps) [s_x(u) + s_y(u1)]`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use crate::cellfem::CellSolutionSet;
use crate::effective::{homogenize_with_cells, Provenance};
use crate::error::{Error, Result};
use crate::geometry::CellGeometry;
use crate::hex8::{self, LoadCase};
use crate::io::fmt_f64;
use crate::macrodns::{
    cells_per_axis, solve_dns, solve_macro, BodyForce, DnsProblem, FieldSolution, MacroProblem, SolveDiagnostics,
    SolveOptions,
};
use crate::tensors::{Mat3, MaterialField};

/// One row of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectorRow {
    pub epsilon: f64,
    /// `|| s(u_eps) - chi [s_x(u) + s_y(u1)] ||_L2`.
    pub strain_residual: f64,
    /// `|| grad phi_eps - chi [grad_x phi + grad_y phi1] ||_L2`.
    pub efield_residual: f64,
    /// `|int u_eps - theta int u| / |theta int u|`.
    pub weak_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub epsilon: f64,
    pub cells_per_axis: usize,
    pub grid: usize,
    pub dns: SolveDiagnostics,
    #[serde(rename = "macro")]
    pub macro_solve: SolveDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepProvenance {
    pub cell_resolution: usize,
    pub theta: f64,
    pub body_force: String,
    pub homogenization: Provenance,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectorReport {
    /// Sorted by decreasing epsilon.
    pub rows: Vec<CorrectorRow>,
    pub strain_residual_decreasing: bool,
    pub efield_residual_decreasing: bool,
    pub weak_gap_decreasing: bool,
    pub provenance: SweepProvenance,
}

fn strictly_decreasing(values: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

impl CorrectorReport {
    pub fn from_rows(rows: Vec<CorrectorRow>, provenance: SweepProvenance) -> Self {
        Self {
            strain_residual_decreasing: strictly_decreasing(rows.iter().map(|r| r.strain_residual)),
            efield_residual_decreasing: strictly_decreasing(rows.iter().map(|r| r.efield_residual)),
            weak_gap_decreasing: strictly_decreasing(rows.iter().map(|r| r.weak_gap)),
            rows,
            provenance,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("epsilon,strain_residual,efield_residual,weak_gap\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt_f64(r.epsilon),
                fmt_f64(r.strain_residual),
                fmt_f64(r.efield_residual),
                fmt_f64(r.weak_gap)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Strain and potential gradient of each of the nine cell fields at one point.
type CaseGradients = [(Mat3, [f64; 3]); 9];

/// [`CaseGradients`] at every Gauss point of every cell voxel.
struct CellGradients {
    n: usize,
    /// `[voxel][gauss point]`.
    values: Vec<[CaseGradients; 8]>,
}

impl CellGradients {
    fn new(cells: &CellSolutionSet) -> Self {
        let n = cells.n();
        let gps = hex8::gauss_points();
        let mut values = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut entry = [[([[0.0; 3]; 3], [0.0; 3]); 9]; 8];
                    for case in LoadCase::all() {
                        let vals = cells.local_values(case, i, j, k);
                        for (g, xi) in gps.iter().enumerate() {
                            entry[g][case.index()] = hex8::local_gradients(&vals, *xi, 1.0 / n as f64);
                        }
                    }
                    values.push(entry);
                }
            }
        }
        Self { n, values }
    }
}

/// `s_y(u1)` and `grad_y phi1` from the nine cell gradients at one point.
///
/// The elastic sum runs over all nine ordered pairs `(m,h)` with
/// `w^{mh} = w^{hm}`.
fn combine(cell: &CaseGradients, strain: &Mat3, grad: &[f64; 3]) -> (Mat3, [f64; 3]) {
    let mut s = [[0.0; 3]; 3];
    let mut g = [0.0; 3];
    let mut add = |weight: f64, (cs, cg): &(Mat3, [f64; 3])| {
        if weight == 0.0 {
            return;
        }
        for a in 0..3 {
            for b in 0..3 {
                s[a][b] += weight * cs[a][b];
            }
            g[a] += weight * cg[a];
        }
    };
    for m in 0..3 {
        for h in 0..3 {
            add(strain[m][h], &cell[LoadCase::elastic(m, h).index()]);
        }
    }
    for n in 0..3 {
        add(grad[n], &cell[LoadCase::Electric(n).index()]);
    }
    (s, g)
}

/// Macroscopic strain and potential gradient at local point `xi` of voxel `(i,j,k)`.
fn macro_gradients(sol: &FieldSolution, i: usize, j: usize, k: usize, xi: [f64; 3]) -> (Mat3, [f64; 3]) {
    hex8::local_gradients(&sol.local_values(i, j, k), xi, 1.0 / sol.n as f64)
}

/// `s_y(u1)(x, x/eps)` and `grad_y phi1(x, x/eps)`, with the macroscopic
/// gradients taken at the centroid of the macro voxel containing `x`.
pub fn reconstruct_u1(
    macro_sol: &FieldSolution,
    cells: &CellSolutionSet,
    cell: &CellGeometry,
    epsilon: f64,
    x: [f64; 3],
) -> Result<(Mat3, [f64; 3])> {
    let m = cells_per_axis(epsilon)?;
    if cell.n() != cells.n() {
        return Err(Error::ShapeMismatch(format!(
            "cell solutions at n={} but geometry at n={}",
            cells.n(),
            cell.n()
        )));
    }
    if x.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::VoidPoint(x));
    }
    let y = x.map(|c| c * m as f64);
    if cell.chi_at(y) == 0 {
        return Err(Error::VoidPoint(x));
    }
    let nm = macro_sol.n;
    let idx = x.map(|c| ((c * nm as f64).floor() as usize).min(nm - 1));
    let (strain, grad) = macro_gradients(macro_sol, idx[0], idx[1], idx[2], [0.5; 3]);
    let mut per_case: CaseGradients = [([[0.0; 3]; 3], [0.0; 3]); 9];
    for case in LoadCase::all() {
        per_case[case.index()] = crate::cellfem::field_gradient_at(cells, cell, case, y)?;
    }
    Ok(combine(&per_case, &strain, &grad))
}

fn norm3(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residual norms of one epsilon.
///
/// `dns` lives on the `N = m r` grid and `macro_sol` on a grid whose
/// resolution divides `N`; macroscopic gradients are interpolated to the DNS
/// Gauss points and all integrals use the DNS quadrature over material voxels.
pub fn corrector_residuals(
    dns: &FieldSolution,
    macro_sol: &FieldSolution,
    cells: &CellSolutionSet,
    cell: &CellGeometry,
    epsilon: f64,
) -> Result<CorrectorRow> {
    let m = cells_per_axis(epsilon)?;
    let r = cells.n();
    let n = dns.n;
    if cell.n() != r {
        return Err(Error::GridMismatch(format!("cell geometry at n={} but cell fields at n={r}", cell.n())));
    }
    if n != m * r {
        return Err(Error::GridMismatch(format!("DNS grid N={n} is not {m} x {r}")));
    }
    let nm = macro_sol.n;
    if nm == 0 || !n.is_multiple_of(nm) {
        return Err(Error::GridMismatch(format!("macro grid N={nm} does not divide DNS grid N={n}")));
    }
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if dns.mask[i + n * (j + n * k)] != cell.is_material(cell.voxel_index(i % r, j % r, k % r)) {
                    return Err(Error::GridMismatch(format!(
                        "DNS mask at voxel ({i},{j},{k}) differs from the tiled cell mask"
                    )));
                }
            }
        }
    }
    let table = CellGradients::new(cells);
    debug_assert_eq!(table.n, r);
    let q = n / nm;
    let gps = hex8::gauss_points();
    let w = hex8::gauss_weight(1.0 / n as f64);
    let mut strain_sq = 0.0;
    let mut efield_sq = 0.0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if !dns.mask[i + n * (j + n * k)] {
                    continue;
                }
                let dvals = dns.local_values(i, j, k);
                let mvals = macro_sol.local_values(i / q, j / q, k / q);
                let cv = cell.voxel_index(i % r, j % r, k % r);
                for (g, xi) in gps.iter().enumerate() {
                    let (ds, dg) = hex8::local_gradients(&dvals, *xi, 1.0 / n as f64);
                    let mxi = [
                        ((i % q) as f64 + xi[0]) / q as f64,
                        ((j % q) as f64 + xi[1]) / q as f64,
                        ((k % q) as f64 + xi[2]) / q as f64,
                    ];
                    let (ms, mg) = hex8::local_gradients(&mvals, mxi, 1.0 / nm as f64);
                    let (cs, cg) = combine(&table.values[cv][g], &ms, &mg);
                    for a in 0..3 {
                        for b in 0..3 {
                            let d = ds[a][b] - ms[a][b] - cs[a][b];
                            strain_sq += w * d * d;
                        }
                        let d = dg[a] - mg[a] - cg[a];
                        efield_sq += w * d * d;
                    }
                }
            }
        }
    }
    let theta = cell.theta();
    let ud = dns.integral_u();
    let um = macro_sol.integral_u();
    let target = um.map(|v| theta * v);
    let gap = norm3([ud[0] - target[0], ud[1] - target[1], ud[2] - target[2]]);
    let scale = norm3(target);
    let weak_gap = if scale > 0.0 {
        gap / scale
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(CorrectorRow {
        epsilon,
        strain_residual: strain_sq.sqrt(),
        efield_residual: efield_sq.sqrt(),
        weak_gap,
    })
}

pub fn describe_body_force(f: &BodyForce) -> String {
    match f {
        BodyForce::Constant(v) => format!("constant [{}, {}, {}]", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2])),
        BodyForce::Nodal(v) => format!("nodal ({} nodes)", v.len()),
    }
}

/// Homogenizes once, solves the macro problem once per DNS grid and the DNS
/// once per epsilon, and tabulates the residuals.
pub fn epsilon_sweep(
    cell: &CellGeometry,
    material: &MaterialField,
    f: &BodyForce,
    eps_list: &[f64],
    opts: &SolveOptions,
) -> Result<CorrectorReport> {
    if eps_list.is_empty() {
        return Err(Error::Config("epsilon list is empty".into()));
    }
    for (a, &e) in eps_list.iter().enumerate() {
        cells_per_axis(e)?;
        if a > 0 && e >= eps_list[a - 1] {
            return Err(Error::InvalidEpsilon(e));
        }
    }
    if cell.hole_touches_boundary() {
        return Err(Error::HoleTouchesBoundary);
    }
    if matches!(f, BodyForce::Nodal(_)) {
        return Err(Error::Config("the sweep needs a constant body force".into()));
    }
    let r = cell.n();
    let (hom, cells) = homogenize_with_cells(cell, material)?;
    let mut macros: BTreeMap<usize, FieldSolution> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &eps in eps_list {
        let m = cells_per_axis(eps)?;
        let n = m * r;
        let macro_sol = match macros.entry(n) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let p = MacroProblem {
                    tensors: hom.tensors.clone(),
                    theta: hom.theta,
                    body_force: f.clone(),
                    resolution: n,
                };
                e.insert(solve_macro(&p, opts)?)
            }
        };
        let dns = solve_dns(
            &DnsProblem {
                cell: cell.clone(),
                material: material.clone(),
                epsilon: eps,
                body_force: f.clone(),
            },
            opts,
        )?;
        let row = corrector_residuals(&dns, macro_sol, &cells, cell, eps)?;
        info!(
            "eps={} strain={:.3e} efield={:.3e} weak_gap={:.3e}",
            eps, row.strain_residual, row.efield_residual, row.weak_gap
        );
        rows.push(row);
        runs.push(RunRecord {
            epsilon: eps,
            cells_per_axis: m,
            grid: n,
            dns: dns.diagnostics.clone(),
            macro_solve: macro_sol.diagnostics.clone(),
        });
    }
    let provenance = SweepProvenance {
        cell_resolution: r,
        theta: hom.theta,
        body_force: describe_body_force(f),
        homogenization: hom.provenance.clone(),
        runs,
    };
    Ok(CorrectorReport::from_rows(rows, provenance))
}

//! Dirichlet problems on the unit cube: the homogenized macro problem and the
//! direct simulation of the perforated medium at scale epsilon.

use log::{info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CellGeometry;
use crate::hex8::{self, DOFS};
use crate::io::FieldDump;
use crate::linalg::element_op::{ElementOperator, NONE};
use crate::linalg::grid::{BoxGrid, VOID};
use crate::linalg::ldlt::LdltFactor;
use crate::linalg::minres::{minres, relative_residual, MinresOptions};
use crate::linalg::multigrid::CoupledPreconditioner;
use crate::linalg::ordering::{expand_blocks, nested_dissection};
use crate::linalg::LinearOperator;
use crate::tensors::{is_positive, EffectiveTensors, MaterialField, MaterialTensors};

/// Body force of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyForce {
    Constant([f64; 3]),
    /// One vector per node of the `(N+1)^3` grid, x fastest; interpolated trilinearly.
    Nodal(Vec<[f64; 3]>),
}

impl Default for BodyForce {
    fn default() -> Self {
        BodyForce::Constant([0.0, 0.0, -1.0])
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub rtol: f64,
    pub max_iter: usize,
    /// Problems up to this many unknowns are factored directly.
    pub direct_below: usize,
    /// Largest problem for which factorization is tried when MINRES fails.
    pub fallback_below: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            max_iter: 3000,
            direct_below: 5_000,
            fallback_below: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroProblem {
    pub tensors: EffectiveTensors,
    pub theta: f64,
    pub body_force: BodyForce,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnsProblem {
    pub cell: CellGeometry,
    pub material: MaterialField,
    pub epsilon: f64,
    pub body_force: BodyForce,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub method: String,
    pub unknowns: usize,
    pub iterations: usize,
    pub relative_residual: f64,
    /// `|u^T A u + phi^T D phi - f . u| / |f . u|`.
    pub energy_balance_defect: f64,
    /// `int f . u` over the loaded region.
    pub work: f64,
}

/// Nodal solution on the `(N+1)^3` grid of the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub n: usize,
    /// Voxel mask, `true` = material.
    pub mask: Vec<bool>,
    pub u: Vec<[f64; 3]>,
    pub phi: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl FieldSolution {
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let np = self.n + 1;
        i + np * (j + np * k)
    }

    /// The 32 interleaved local values on voxel `(i,j,k)`.
    pub fn local_values(&self, i: usize, j: usize, k: usize) -> [f64; DOFS] {
        let mut out = [0.0; DOFS];
        for (a, c) in hex8::CORNERS.iter().enumerate() {
            let v = self.node_index(i + c[0], j + c[1], k + c[2]);
            out[4 * a..4 * a + 3].copy_from_slice(&self.u[v]);
            out[4 * a + 3] = self.phi[v];
        }
        out
    }

    pub fn to_dump(&self) -> FieldDump {
        FieldDump {
            n: self.n,
            mask: self.mask.clone(),
            u: self.u.clone(),
            phi: self.phi.clone(),
        }
    }

    /// `int_Omega u` with the trilinear interpolant restricted to material voxels.
    pub fn integral_u(&self) -> [f64; 3] {
        let n = self.n;
        let w = (1.0 / n as f64).powi(3) / 8.0;
        let mut s = [0.0; 3];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if !self.mask[i + n * (j + n * k)] {
                        continue;
                    }
                    for c in hex8::CORNERS {
                        let u = self.u[self.node_index(i + c[0], j + c[1], k + c[2])];
                        for d in 0..3 {
                            s[d] += w * u[d];
                        }
                    }
                }
            }
        }
        s
    }
}

/// Checks that `epsilon = 1/m` for an integer `m >= 2` and returns `m`.
pub fn cells_per_axis(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let m = (1.0 / epsilon).round();
    if m < 2.0 || (m * epsilon - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    Ok(m as usize)
}

fn check_macro_certificate(t: &EffectiveTensors, theta: f64) -> Result<MaterialTensors> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::CertificateFailure(format!("volume fraction {theta} outside (0, 1]")));
    }
    let m = t.symmetrized_material();
    let c_min = m.c.min_eigenvalue();
    if !is_positive(c_min, m.c.trace_voigt()) {
        return Err(Error::CertificateFailure(format!("symmetrized cH has minimum eigenvalue {c_min:e}")));
    }
    let d_min = m.d.min_eigenvalue();
    if !is_positive(d_min, m.d.trace()) {
        return Err(Error::CertificateFailure(format!("symmetrized dH has minimum eigenvalue {d_min:e}")));
    }
    Ok(m)
}

pub fn solve_macro(p: &MacroProblem, opts: &SolveOptions) -> Result<FieldSolution> {
    let n = p.resolution;
    if n < 2 {
        return Err(Error::InvalidResolution(n));
    }
    let m = check_macro_certificate(&p.tensors, p.theta)?;
    solve_voxel_problem(n, vec![0; n * n * n], &[m], p.theta, &p.body_force, opts, "macro")
}

pub fn solve_dns(p: &DnsProblem, opts: &SolveOptions) -> Result<FieldSolution> {
    let m = cells_per_axis(p.epsilon)?;
    if p.cell.hole_touches_boundary() {
        return Err(Error::HoleTouchesBoundary);
    }
    if !p.cell.connected() {
        return Err(Error::DisconnectedGeometry);
    }
    let r = p.cell.n();
    p.material.check_resolution(r)?;
    let n = m * r;
    let mut types = vec![VOID; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let cv = p.cell.voxel_index(i % r, j % r, k % r);
                if p.cell.is_material(cv) {
                    types[i + n * (j + n * k)] = p.material.phase_of(cv) as u32;
                }
            }
        }
    }
    solve_voxel_problem(n, types, p.material.phases(), 1.0, &p.body_force, opts, "dns")
}

fn assemble_load(grid: &BoxGrid, scale: f64, f: &BodyForce) -> Result<Vec<f64>> {
    let n = grid.n;
    let h = 1.0 / n as f64;
    let np = n + 1;
    if let BodyForce::Nodal(v) = f {
        if v.len() != np * np * np {
            return Err(Error::ShapeMismatch(format!(
                "nodal body force has {} entries, grid has {}",
                v.len(),
                np * np * np
            )));
        }
    }
    let mass = hex8::mass_matrix(h);
    let mut rhs = vec![0.0; 4 * grid.nblocks()];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if grid.voxel_types[i + n * (j + n * k)] == VOID {
                    continue;
                }
                let blocks = grid.voxel_blocks(i, j, k);
                for (a, &b) in blocks.iter().enumerate() {
                    if b == NONE {
                        continue;
                    }
                    for d in 0..3 {
                        let val = match f {
                            BodyForce::Constant(fc) => fc[d] * h * h * h / 8.0,
                            BodyForce::Nodal(fv) => hex8::CORNERS
                                .iter()
                                .enumerate()
                                .map(|(bb, c)| mass[a][bb] * fv[grid.node_index(i + c[0], j + c[1], k + c[2])][d])
                                .sum(),
                        };
                        rhs[4 * b as usize + d] += scale * val;
                    }
                }
            }
        }
    }
    Ok(rhs)
}

fn split_quadratic(op: &ElementOperator, x: &[f64]) -> (f64, f64) {
    let mut u = x.to_vec();
    let mut p = x.to_vec();
    for (i, (ui, pi)) in u.iter_mut().zip(p.iter_mut()).enumerate() {
        if i % 4 == 3 {
            *ui = 0.0;
        } else {
            *pi = 0.0;
        }
    }
    let mut y = vec![0.0; x.len()];
    op.apply(&u, &mut y);
    let ua: f64 = u.iter().zip(&y).map(|(a, b)| a * b).sum();
    op.apply(&p, &mut y);
    let pd: f64 = -p.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
    (ua, pd)
}

fn direct_solve(grid: &BoxGrid, op: &ElementOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut a = op.assemble_csr();
    a.symmetrize();
    let order = expand_blocks(&nested_dissection(&grid.block_coords(), [grid.n + 1; 3], [false; 3]), 4);
    let f = LdltFactor::factor(&a, &order).map_err(|e| Error::SolverBreakdown {
        case: "factorization".into(),
        reason: e.to_string(),
    })?;
    Ok(f.solve(rhs))
}

fn solve_voxel_problem(
    n: usize,
    types: Vec<u32>,
    phases: &[MaterialTensors],
    load_scale: f64,
    f: &BodyForce,
    opts: &SolveOptions,
    label: &str,
) -> Result<FieldSolution> {
    let h = 1.0 / n as f64;
    let mask: Vec<bool> = types.iter().map(|&t| t != VOID).collect();
    let grid = BoxGrid::new(n, types);
    let bank: Vec<Vec<f64>> = phases.iter().map(|m| hex8::element_matrix(m, h)).collect();
    let op = grid.operator(4, bank.clone());
    let rhs = assemble_load(&grid, load_scale, f)?;
    let dim = rhs.len();
    let rhs_zero = rhs.iter().all(|&v| v == 0.0);
    let (x, method, iterations) = if rhs_zero || dim == 0 {
        (vec![0.0; dim], "trivial".to_string(), 0)
    } else if dim <= opts.direct_below {
        (direct_solve(&grid, &op, &rhs)?, "ldlt".to_string(), 0)
    } else {
        let mut x = vec![0.0; dim];
        let attempt = CoupledPreconditioner::new(&grid, &bank).map(|pc| {
            let mo = MinresOptions {
                rtol: opts.rtol,
                max_iter: opts.max_iter,
                max_restarts: 4,
            };
            (minres(&op, &pc, &rhs, &mut x, &mo), pc.num_levels())
        });
        match attempt {
            Ok((out, levels)) if out.converged => {
                (x, format!("minres-multigrid({levels} levels)"), out.iterations)
            }
            other => {
                let reason = match other {
                    Ok((out, _)) => format!(
                        "minres stopped at relative residual {:.3e} after {} iterations{}",
                        out.relative_residual,
                        out.iterations,
                        out.breakdown.map(|b| format!(" ({b})")).unwrap_or_default()
                    ),
                    Err(e) => format!("multigrid setup failed: {e}"),
                };
                if dim <= opts.fallback_below {
                    warn!("{label}: {reason}; falling back to factorization");
                    (direct_solve(&grid, &op, &rhs)?, "ldlt-fallback".to_string(), 0)
                } else {
                    return Err(Error::SolverBreakdown {
                        case: label.to_string(),
                        reason,
                    });
                }
            }
        }
    };
    let rel = if dim == 0 { 0.0 } else { relative_residual(&op, &rhs, &x) };
    if rel > opts.rtol {
        return Err(Error::SolverBreakdown {
            case: label.to_string(),
            reason: format!("relative residual {rel:.3e} exceeds {:.0e}", opts.rtol),
        });
    }
    let (ua, pd) = split_quadratic(&op, &x);
    let work: f64 = rhs.iter().zip(&x).enumerate().filter(|(i, _)| i % 4 != 3).map(|(_, (a, b))| a * b).sum();
    let energy = ua + pd;
    let energy_balance_defect = if work == 0.0 && energy == 0.0 {
        0.0
    } else {
        (energy - work).abs() / work.abs().max(energy.abs())
    };
    info!(
        "{label} solve N={n} unknowns={dim} method={method} iterations={iterations} relative_residual={rel:.3e} energy_defect={energy_balance_defect:.3e}"
    );
    let np = n + 1;
    let mut u = vec![[0.0; 3]; np * np * np];
    let mut phi = vec![0.0; np * np * np];
    for (b, &v) in grid.block_node.iter().enumerate() {
        u[v as usize] = [x[4 * b], x[4 * b + 1], x[4 * b + 2]];
        phi[v as usize] = x[4 * b + 3];
    }
    Ok(FieldSolution {
        n,
        mask,
        u,
        phi,
        diagnostics: SolveDiagnostics {
            method,
            unknowns: dim,
            iterations,
            relative_residual: rel,
            energy_balance_defect,
            work,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HolePrimitive;
    use crate::tensors::{DielectricTensor, ElasticTensor, PiezoTensor};

    fn coupled() -> MaterialTensors {
        let mut e = [[0.0; 6]; 3];
        e[2][0] = -0.5;
        e[2][1] = -0.5;
        e[2][2] = 1.2;
        e[1][3] = 0.8;
        e[0][4] = 0.8;
        MaterialTensors::new(ElasticTensor::isotropic(1.0, 1.0), PiezoTensor::from_voigt(e), DielectricTensor::isotropic(1.0))
    }

    fn identity_tensors(m: &MaterialTensors) -> EffectiveTensors {
        EffectiveTensors::new(m.c.to_full(), m.e.to_full(), m.e.to_full(), m.d.to_matrix())
    }

    fn macro_problem(n: usize, f: [f64; 3]) -> MacroProblem {
        MacroProblem {
            tensors: identity_tensors(&coupled()),
            theta: 1.0,
            body_force: BodyForce::Constant(f),
            resolution: n,
        }
    }

    #[test]
    fn epsilon_must_be_unit_fraction() {
        assert_eq!(cells_per_axis(0.25).unwrap(), 4);
        assert!(matches!(cells_per_axis(0.3), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(cells_per_axis(1.0), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let s = solve_macro(&macro_problem(6, [0.0; 3]), &SolveOptions::default()).unwrap();
        assert!(s.u.iter().flatten().all(|&v| v == 0.0));
        assert!(s.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn macro_solution_is_linear_in_force() {
        let o = SolveOptions::default();
        let a = solve_macro(&macro_problem(6, [0.0, 0.0, -1.0]), &o).unwrap();
        let b = solve_macro(&macro_problem(6, [0.0, 0.0, -3.0]), &o).unwrap();
        let scale = a.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.u.iter().flatten().zip(b.u.iter().flatten()) {
            assert!((3.0 * x - y).abs() <= 1e-9 * scale);
        }
        assert!(a.diagnostics.energy_balance_defect <= 1e-8);
    }

    #[test]
    fn boundary_nodes_are_clamped() {
        let s = solve_macro(&macro_problem(4, [0.0, 0.0, -1.0]), &SolveOptions::default()).unwrap();
        for k in 0..5 {
            for j in 0..5 {
                for i in 0..5 {
                    if [i, j, k].iter().any(|&c| c == 0 || c == 4) {
                        let v = s.node_index(i, j, k);
                        assert_eq!(s.u[v], [0.0; 3]);
                        assert_eq!(s.phi[v], 0.0);
                    }
                }
            }
        }
        assert!(s.u[s.node_index(2, 2, 2)][2] < 0.0);
    }

    #[test]
    fn multigrid_path_matches_direct_path() {
        let p = macro_problem(16, [0.3, 0.0, -1.0]);
        let direct = solve_macro(
            &p,
            &SolveOptions {
                direct_below: usize::MAX,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let iterative = solve_macro(
            &p,
            &SolveOptions {
                direct_below: 0,
                rtol: 1e-12,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert!(iterative.diagnostics.method.starts_with("minres"), "{}", iterative.diagnostics.method);
        let scale = direct.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in direct.u.iter().flatten().zip(iterative.u.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn dns_rejects_boundary_holes() {
        let cell = CellGeometry::build(4, &[HolePrimitive::Sphere { center: [0.0; 3], radius: 0.3 }]).unwrap();
        let p = DnsProblem {
            cell,
            material: coupled().into(),
            epsilon: 0.5,
            body_force: BodyForce::default(),
        };
        assert!(matches!(solve_dns(&p, &SolveOptions::default()), Err(Error::HoleTouchesBoundary)));
    }

    #[test]
    fn dns_without_holes_equals_macro() {
        let m = coupled();
        let dns = solve_dns(
            &DnsProblem {
                cell: CellGeometry::full(3).unwrap(),
                material: m.into(),
                epsilon: 0.5,
                body_force: BodyForce::default(),
            },
            &SolveOptions::default(),
        )
        .unwrap();
        let mac = solve_macro(&macro_problem(6, [0.0, 0.0, -1.0]), &SolveOptions::default()).unwrap();
        assert_eq!(dns.u, mac.u);
        assert_eq!(dns.phi, mac.phi);
    }

    #[test]
    fn perforated_dns_balances_energy() {
        let cell = CellGeometry::build(6, &[HolePrimitive::Sphere { center: [0.5; 3], radius: 0.2 }]).unwrap();
        assert!(cell.theta() < 1.0);
        let s = solve_dns(
            &DnsProblem {
                cell,
                material: coupled().into(),
                epsilon: 0.5,
                body_force: BodyForce::default(),
            },
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(s.diagnostics.energy_balance_defect <= 1e-8);
        assert!(s.diagnostics.work > 0.0);
    }

    #[test]
    fn nodal_force_matches_constant_force() {
        let n = 4;
        let a = solve_macro(&macro_problem(n, [0.0, 0.0, -1.0]), &SolveOptions::default()).unwrap();
        let mut p = macro_problem(n, [0.0; 3]);
        p.body_force = BodyForce::Nodal(vec![[0.0, 0.0, -1.0]; (n + 1).pow(3)]);
        let b = solve_macro(&p, &SolveOptions::default()).unwrap();
        for (x, y) in a.u.iter().flatten().zip(b.u.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

//! Homogenized coefficients from the cell solutions, and their energy forms.
//!
//! With `E = tau + s(w)` the total cell strain and `G = delta + grad(phi)` the
//! total cell potential gradient of a load case, every direct formula is an
//! average of either the stress `c E + e^T G` or the flux `e E - d G`.
//! Averages are plain integrals over the material part of the unit cell.

use serde::Serialize;

use crate::cellfem::{assemble_cell_system, solve_cell_problems, CellSolutionSet, PeriodicGrid};
use crate::error::{Error, Result};
use crate::geometry::CellGeometry;
use crate::hex8::{gauss_points, gauss_weight, LoadCase};
use crate::io::MaterialRecord;
use crate::tensors::{EffectiveTensors, Mat3, MaterialField, Tensor3, Tensor4};

/// Total strain and potential gradient of the nine cases at one Gauss point.
struct Sample {
    strain: [Mat3; 9],
    grad: [[f64; 3]; 9],
}

struct PhaseTensors {
    c: Tensor4,
    e: Tensor3,
    d: Mat3,
}

fn check_shapes(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<()> {
    if cells.n() != geometry.n() {
        return Err(Error::ShapeMismatch(format!(
            "cell solutions at n={} but geometry at n={}",
            cells.n(),
            geometry.n()
        )));
    }
    if cells.fields.len() != 9 {
        return Err(Error::ShapeMismatch(format!("expected 9 cell fields, got {}", cells.fields.len())));
    }
    let active = PeriodicGrid::new(geometry).num_active();
    if cells.grid.num_active() != active || cells.fields.iter().any(|f| f.len() != 4 * active) {
        return Err(Error::ShapeMismatch("cell fields do not match the active nodes of the geometry".into()));
    }
    material.check_resolution(geometry.n())
}

/// Visits every Gauss point of every material voxel in a fixed order.
fn integrate(
    cells: &CellSolutionSet,
    material: &MaterialField,
    geometry: &CellGeometry,
    mut f: impl FnMut(&PhaseTensors, f64, &Sample),
) -> Result<()> {
    check_shapes(cells, material, geometry)?;
    let phases: Vec<PhaseTensors> = material
        .phases()
        .iter()
        .map(|m| PhaseTensors {
            c: m.c.to_full(),
            e: m.e.to_full(),
            d: m.d.to_matrix(),
        })
        .collect();
    let n = geometry.n();
    let w = gauss_weight(1.0 / n as f64);
    let cases = LoadCase::all();
    let mut sample = Sample {
        strain: [[[0.0; 3]; 3]; 9],
        grad: [[0.0; 3]; 9],
    };
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let v = geometry.voxel_index(i, j, k);
                if !geometry.is_material(v) {
                    continue;
                }
                let pt = &phases[material.phase_of(v)];
                for xi in gauss_points() {
                    for (q, case) in cases.iter().enumerate() {
                        let (mut s, mut g) = cells.gradients_in_voxel(*case, i, j, k, xi);
                        let t = case.prestrain();
                        let fld = case.field();
                        for a in 0..3 {
                            for b in 0..3 {
                                s[a][b] += t[a][b];
                            }
                            g[a] += fld[a];
                        }
                        sample.strain[q] = s;
                        sample.grad[q] = g;
                    }
                    f(pt, w, &sample);
                }
            }
        }
    }
    Ok(())
}

fn stress(p: &PhaseTensors, e_tot: &Mat3, g_tot: &[f64; 3]) -> Mat3 {
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut v = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    v += p.c[i][j][k][l] * e_tot[k][l];
                }
                v += p.e[k][i][j] * g_tot[k];
            }
            s[i][j] = v;
        }
    }
    s
}

fn flux(p: &PhaseTensors, e_tot: &Mat3, g_tot: &[f64; 3]) -> [f64; 3] {
    let mut q = [0.0; 3];
    for (i, qi) in q.iter_mut().enumerate() {
        let mut v = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                v += p.e[i][k][l] * e_tot[k][l];
            }
            v -= p.d[i][k] * g_tot[k];
        }
        *qi = v;
    }
    q
}

fn elastic_slot(m: usize, h: usize) -> usize {
    LoadCase::elastic(m, h).index()
}

/// `cH_ijmh = int (c E^{mh} + e^T grad phi^{mh})_ij`.
pub fn effective_c_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Tensor4> {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for m in 0..3 {
            for h in 0..3 {
                let q = elastic_slot(m, h);
                let sig = stress(p, &s.strain[q], &s.grad[q]);
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j][m][h] += w * sig[i][j];
                    }
                }
            }
        }
    })?;
    Ok(out)
}

/// `eH_nij = int (c s(q^n) + e^T (delta_n + grad psi^n))_ij`.
pub fn effective_e_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Tensor3> {
    let mut out = [[[0.0; 3]; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for (n, on) in out.iter_mut().enumerate() {
            let q = 6 + n;
            let sig = stress(p, &s.strain[q], &s.grad[q]);
            for i in 0..3 {
                for j in 0..3 {
                    on[i][j] += w * sig[i][j];
                }
            }
        }
    })?;
    Ok(out)
}

/// `fH_imh = int (e E^{mh} - d grad phi^{mh})_i`.
pub fn effective_f_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Tensor3> {
    let mut out = [[[0.0; 3]; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for m in 0..3 {
            for h in 0..3 {
                let q = elastic_slot(m, h);
                let fl = flux(p, &s.strain[q], &s.grad[q]);
                for i in 0..3 {
                    out[i][m][h] += w * fl[i];
                }
            }
        }
    })?;
    Ok(out)
}

/// `dH_in = int (-e s(q^n) + d (delta_n + grad psi^n))_i`.
pub fn effective_d_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Mat3> {
    let mut out = [[0.0; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for n in 0..3 {
            let q = 6 + n;
            let fl = flux(p, &s.strain[q], &s.grad[q]);
            for i in 0..3 {
                out[i][n] -= w * fl[i];
            }
        }
    })?;
    Ok(out)
}

fn c_energy(p: &PhaseTensors, a: &Mat3, b: &Mat3) -> f64 {
    let mut v = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    v += a[i][j] * p.c[i][j][k][l] * b[k][l];
                }
            }
        }
    }
    v
}

fn d_energy(p: &PhaseTensors, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut v = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            v += a[i] * p.d[i][j] * b[j];
        }
    }
    v
}

/// Symmetric energy form `int c E^{mh} : E^{ij} + d grad phi^{mh} . grad phi^{ij}`.
pub fn energy_c_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Tensor4> {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for i in 0..3 {
            for j in 0..3 {
                let a = elastic_slot(i, j);
                for m in 0..3 {
                    for h in 0..3 {
                        let b = elastic_slot(m, h);
                        out[i][j][m][h] += w
                            * (c_energy(p, &s.strain[b], &s.strain[a]) + d_energy(p, &s.grad[b], &s.grad[a]));
                    }
                }
            }
        }
    })?;
    Ok(out)
}

/// Symmetric energy form `int d G^n . G^i + c s(q^i) : s(q^n)`.
pub fn energy_d_h(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<Mat3> {
    let mut out = [[0.0; 3]; 3];
    integrate(cells, material, geometry, |p, w, s| {
        for i in 0..3 {
            for n in 0..3 {
                let (a, b) = (6 + i, 6 + n);
                out[i][n] += w * (d_energy(p, &s.grad[b], &s.grad[a]) + c_energy(p, &s.strain[a], &s.strain[b]));
            }
        }
    })?;
    Ok(out)
}

fn rel_defect<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    num / den
}

fn flat4(t: &Tensor4) -> [f64; 81] {
    let mut out = [0.0; 81];
    for (o, v) in out.iter_mut().zip(t.iter().flatten().flatten().flatten()) {
        *o = *v;
    }
    out
}

fn flat2(t: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (o, v) in out.iter_mut().zip(t.iter().flatten()) {
        *o = *v;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheck {
    pub c_h_direct_vs_energy_defect: f64,
    pub d_h_direct_vs_energy_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryRecord {
    pub resolution: usize,
    pub material_voxels: usize,
    pub theta: f64,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub geometry: GeometryRecord,
    pub material_phases: Vec<MaterialRecord>,
    pub cell_solver: String,
    pub max_cell_residual: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationResult {
    pub tensors: EffectiveTensors,
    pub theta: f64,
    pub method_cross_check: CrossCheck,
    pub provenance: Provenance,
}

/// Evaluates the four effective tensors and the energy cross-checks from
/// solved cell fields.
pub fn evaluate(cells: &CellSolutionSet, material: &MaterialField, geometry: &CellGeometry) -> Result<HomogenizationResult> {
    let c_h = effective_c_h(cells, material, geometry)?;
    let e_h = effective_e_h(cells, material, geometry)?;
    let f_h = effective_f_h(cells, material, geometry)?;
    let d_h = effective_d_h(cells, material, geometry)?;
    let c_en = energy_c_h(cells, material, geometry)?;
    let d_en = energy_d_h(cells, material, geometry)?;
    let method_cross_check = CrossCheck {
        c_h_direct_vs_energy_defect: rel_defect(&flat4(&c_h), &flat4(&c_en)),
        d_h_direct_vs_energy_defect: rel_defect(&flat2(&d_h), &flat2(&d_en)),
    };
    let provenance = Provenance {
        geometry: GeometryRecord {
            resolution: geometry.n(),
            material_voxels: geometry.mask().iter().filter(|&&m| m).count(),
            theta: geometry.theta(),
            connected: geometry.connected(),
        },
        material_phases: material.phases().iter().map(MaterialRecord::from).collect(),
        cell_solver: cells.method.clone(),
        max_cell_residual: cells.residuals.iter().fold(0.0f64, |a, &r| a.max(r)),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(HomogenizationResult {
        tensors: EffectiveTensors::new(c_h, e_h, f_h, d_h),
        theta: geometry.theta(),
        method_cross_check,
        provenance,
    })
}

/// Assembly, nine cell solves and tensor evaluation; also returns the cell fields.
pub fn homogenize_with_cells(
    geometry: &CellGeometry,
    material: &MaterialField,
) -> Result<(HomogenizationResult, CellSolutionSet)> {
    let system = assemble_cell_system(geometry, material)?;
    let cells = solve_cell_problems(&system)?;
    let result = evaluate(&cells, material, geometry)?;
    Ok((result, cells))
}

pub fn homogenize(geometry: &CellGeometry, material: &MaterialField) -> Result<HomogenizationResult> {
    homogenize_with_cells(geometry, material).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HolePrimitive;
    use crate::tensors::{DielectricTensor, ElasticTensor, MaterialTensors, PiezoTensor};

    fn coupled() -> MaterialTensors {
        let mut e = [[0.0; 6]; 3];
        e[2][0] = -0.5;
        e[2][1] = -0.5;
        e[2][2] = 1.2;
        e[1][3] = 0.8;
        e[0][4] = 0.8;
        MaterialTensors::new(ElasticTensor::isotropic(1.0, 1.0), PiezoTensor::from_voigt(e), DielectricTensor::isotropic(1.0))
    }

    fn max_diff4(a: &Tensor4, b: &Tensor4) -> f64 {
        flat4(a).iter().zip(flat4(b).iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn full_cell_reproduces_material() {
        let m = coupled();
        let g = CellGeometry::full(4).unwrap();
        let r = homogenize(&g, &m.into()).unwrap();
        assert!(max_diff4(&r.tensors.c_h, &m.c.to_full()) < 1e-12);
        let e = m.e.to_full();
        for n in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((r.tensors.e_h[n][i][j] - e[n][i][j]).abs() < 1e-12);
                    assert!((r.tensors.f_h[n][i][j] - e[n][i][j]).abs() < 1e-12);
                }
                assert!((r.tensors.d_h[n][i] - m.d.get(n, i)).abs() < 1e-12);
            }
        }
        assert_eq!(r.theta, 1.0);
    }

    #[test]
    fn perforated_identities_hold() {
        let g = CellGeometry::build(6, &[HolePrimitive::Sphere { center: [0.5; 3], radius: 0.3 }]).unwrap();
        let r = homogenize(&g, &coupled().into()).unwrap();
        let d = r.tensors.diagnostics;
        assert!(d.c_h_major_symmetry_defect <= 1e-8, "{d:?}");
        assert!(d.d_h_symmetry_defect <= 1e-8, "{d:?}");
        assert!(d.e_h_f_h_defect <= 1e-8, "{d:?}");
        assert!(d.e_h_symmetry_defect <= 1e-8, "{d:?}");
        assert!(r.method_cross_check.c_h_direct_vs_energy_defect <= 1e-8);
        assert!(r.method_cross_check.d_h_direct_vs_energy_defect <= 1e-8);
        assert!(d.c_h_min_eigenvalue > 0.0 && d.d_h_min_eigenvalue > 0.0);
    }

    #[test]
    fn decoupled_material_has_zero_coupling_tensors() {
        let mut m = coupled();
        m.e = PiezoTensor::zero();
        let g = CellGeometry::build(4, &[HolePrimitive::Sphere { center: [0.5; 3], radius: 0.3 }]).unwrap();
        let r = homogenize(&g, &m.into()).unwrap();
        assert!(r.tensors.e_h.iter().flatten().flatten().all(|v| v.abs() < 1e-14));
        assert!(r.tensors.f_h.iter().flatten().flatten().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m: MaterialField = coupled().into();
        let g4 = CellGeometry::full(4).unwrap();
        let g2 = CellGeometry::full(2).unwrap();
        let (_, cells) = homogenize_with_cells(&g4, &m).unwrap();
        assert!(matches!(effective_c_h(&cells, &m, &g2), Err(Error::ShapeMismatch(_))));
    }
}

//! Shared materials and an independent dense implementation of the cell problem.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use piezocell::cellfem::{assemble_cell_system, solve_cell_problems};
use piezocell::geometry::{CellGeometry, HolePrimitive};
use piezocell::hex8::LoadCase;
use piezocell::tensors::{
    voigt_unpack, DielectricTensor, ElasticTensor, MaterialTensors, PiezoTensor,
};

/// Isotropic `c` with `lambda = mu = 1`, a transversely isotropic `e`, `d = I`.
pub fn coupled_material() -> MaterialTensors {
    let mut e = [[0.0; 6]; 3];
    e[2][0] = -0.5;
    e[2][1] = -0.5;
    e[2][2] = 1.2;
    e[1][3] = 0.8;
    e[0][4] = 0.8;
    MaterialTensors::new(
        ElasticTensor::isotropic(1.0, 1.0),
        PiezoTensor::from_voigt(e),
        DielectricTensor::isotropic(1.0),
    )
}

/// Fully anisotropic material for the dense comparison.
pub fn anisotropic_material() -> MaterialTensors {
    let c = nalgebra::Matrix6::from_row_slice(&[
        5.0, 1.2, 0.9, 0.1, 0.0, 0.2, //
        1.2, 4.5, 1.1, 0.0, 0.15, 0.0, //
        0.9, 1.1, 6.0, 0.05, 0.0, 0.1, //
        0.1, 0.0, 0.05, 1.4, 0.1, 0.0, //
        0.0, 0.15, 0.0, 0.1, 1.6, 0.05, //
        0.2, 0.0, 0.1, 0.0, 0.05, 1.8,
    ]);
    let e = [
        [0.1, -0.2, 0.05, 0.3, 0.7, -0.1],
        [0.0, 0.15, -0.1, 0.6, 0.2, 0.25],
        [-0.4, -0.45, 1.3, 0.05, -0.1, 0.2],
    ];
    let d = [[1.5, 0.1, -0.05], [0.1, 2.0, 0.2], [-0.05, 0.2, 1.2]];
    MaterialTensors::new(
        voigt_unpack(&c).unwrap(),
        PiezoTensor::from_voigt(e),
        DielectricTensor::from_matrix(d).unwrap(),
    )
}

pub fn sphere_cell(n: usize, radius: f64) -> CellGeometry {
    CellGeometry::build(n, &[HolePrimitive::Sphere { center: [0.5; 3], radius }]).unwrap()
}

/// Dense periodic system assembled with plain loops from the weak form.
pub struct DenseCell {
    pub n: usize,
    pub k: DMatrix<f64>,
    /// In the order of [`LoadCase::all`].
    pub loads: Vec<DVector<f64>>,
    pub solutions: Vec<DVector<f64>>,
}

fn shape(a: usize, x: [f64; 3]) -> f64 {
    (0..3)
        .map(|d| if (a >> d) & 1 == 1 { x[d] } else { 1.0 - x[d] })
        .product()
}

fn shape_grad(a: usize, x: [f64; 3], h: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (d, gd) in g.iter_mut().enumerate() {
        let mut v = if (a >> d) & 1 == 1 { 1.0 } else { -1.0 };
        for e in 0..3 {
            if e != d {
                v *= if (a >> e) & 1 == 1 { x[e] } else { 1.0 - x[e] };
            }
        }
        *gd = v / h;
    }
    g
}

impl DenseCell {
    pub fn build(geometry: &CellGeometry, m: &MaterialTensors) -> Self {
        let n = geometry.n();
        let h = 1.0 / n as f64;
        let nodes = n * n * n;
        let dim = 4 * nodes;
        let c = |i, j, k, l| m.c.get(i, j, k, l);
        let e = |k, i, j| m.e.get(k, i, j);
        let d = |i, j| m.d.get(i, j);
        let g = 0.5 / 3f64.sqrt();
        let pts = [0.5 - g, 0.5 + g];
        let w = h * h * h / 8.0;
        let mut kk = DMatrix::<f64>::zeros(dim, dim);
        let mut loads = vec![DVector::<f64>::zeros(dim); 9];
        let mut active = vec![false; nodes];
        for vk in 0..n {
            for vj in 0..n {
                for vi in 0..n {
                    if !geometry.is_material(vi + n * (vj + n * vk)) {
                        continue;
                    }
                    let node = |a: usize| {
                        let (x, y, z) = ((vi + (a & 1)) % n, (vj + ((a >> 1) & 1)) % n, (vk + ((a >> 2) & 1)) % n);
                        x + n * (y + n * z)
                    };
                    for a in 0..8 {
                        active[node(a)] = true;
                    }
                    for &px in &pts {
                        for &py in &pts {
                            for &pz in &pts {
                                let x = [px, py, pz];
                                debug_assert!(((0..8).map(|a| shape(a, x)).sum::<f64>() - 1.0).abs() < 1e-14);
                                let grads: Vec<[f64; 3]> = (0..8).map(|a| shape_grad(a, x, h)).collect();
                                for a in 0..8 {
                                    let ga = grads[a];
                                    let ra = 4 * node(a);
                                    for b in 0..8 {
                                        let gb = grads[b];
                                        let cb = 4 * node(b);
                                        for i in 0..3 {
                                            for k in 0..3 {
                                                let mut v = 0.0;
                                                for j in 0..3 {
                                                    for l in 0..3 {
                                                        v += c(i, j, k, l) * ga[j] * gb[l];
                                                    }
                                                }
                                                kk[(ra + i, cb + k)] += w * v;
                                            }
                                            let mut bu = 0.0;
                                            let mut bp = 0.0;
                                            for j in 0..3 {
                                                for k in 0..3 {
                                                    bu += e(k, i, j) * gb[k] * ga[j];
                                                    bp += e(k, i, j) * ga[k] * gb[j];
                                                }
                                            }
                                            kk[(ra + i, cb + 3)] += w * bu;
                                            kk[(ra + 3, cb + i)] += w * bp;
                                        }
                                        let mut dd = 0.0;
                                        for k in 0..3 {
                                            for l in 0..3 {
                                                dd += d(k, l) * ga[k] * gb[l];
                                            }
                                        }
                                        kk[(ra + 3, cb + 3)] -= w * dd;
                                    }
                                    for case in LoadCase::all() {
                                        let t = case.prestrain();
                                        let gf = case.field();
                                        let q = case.index();
                                        for i in 0..3 {
                                            for j in 0..3 {
                                                let mut s = 0.0;
                                                for k in 0..3 {
                                                    for l in 0..3 {
                                                        s += c(i, j, k, l) * t[k][l];
                                                    }
                                                    s += e(k, i, j) * gf[k];
                                                }
                                                loads[q][ra + i] -= w * s * ga[j];
                                            }
                                        }
                                        for k in 0..3 {
                                            let mut fl = 0.0;
                                            for i in 0..3 {
                                                for j in 0..3 {
                                                    fl += e(k, i, j) * t[i][j];
                                                }
                                                fl -= d(k, i) * gf[i];
                                            }
                                            loads[q][ra + 3] -= w * fl * ga[k];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // bordered system: the nodal mean of every component over active nodes vanishes
        let na = active.iter().filter(|&&a| a).count() as f64;
        let mut big = DMatrix::<f64>::zeros(dim + 4, dim + 4);
        big.view_mut((0, 0), (dim, dim)).copy_from(&kk);
        for (v, &act) in active.iter().enumerate() {
            if !act {
                for cc in 0..4 {
                    big[(4 * v + cc, 4 * v + cc)] = 1.0;
                }
                continue;
            }
            for cc in 0..4 {
                big[(dim + cc, 4 * v + cc)] = 1.0 / na;
                big[(4 * v + cc, dim + cc)] = 1.0 / na;
            }
        }
        let lu = big.lu();
        let solutions = loads
            .iter()
            .map(|f| {
                let mut rhs = DVector::<f64>::zeros(dim + 4);
                rhs.rows_mut(0, dim).copy_from(f);
                let x = lu.solve(&rhs).expect("bordered system is regular");
                x.rows(0, dim).into_owned()
            })
            .collect();
        Self { n, k: kk, loads, solutions }
    }
}

/// Largest deviations of the library system and solutions from the dense oracle:
/// `(matrix, loads, solutions)`. Each is divided by the largest oracle entry
/// of its kind, floored at 1 so that fields vanishing up to round-off (full
/// homogeneous cell) are compared absolutely.
pub fn dense_comparison(geometry: &CellGeometry, m: &MaterialTensors) -> (f64, f64, f64) {
    let oracle = DenseCell::build(geometry, m);
    let sys = assemble_cell_system(geometry, &(*m).into()).unwrap();
    let cells = solve_cell_problems(&sys).unwrap();
    let n = oracle.n;
    let nodes = n * n * n;
    let dof = |p: usize| -> Option<usize> { sys.grid.block_of(p / 4).map(|b| 4 * b + p % 4) };
    let mut kdiff = 0.0f64;
    for p in 0..4 * nodes {
        for q in 0..4 * nodes {
            let lib = match (dof(p), dof(q)) {
                (Some(a), Some(b)) => sys.matrix.get(a, b),
                _ => 0.0,
            };
            kdiff = kdiff.max((lib - oracle.k[(p, q)]).abs());
        }
    }
    let kscale = oracle.k.amax();
    let mut fdiff = 0.0f64;
    let mut fscale = 0.0f64;
    let mut xdiff = 0.0f64;
    let mut xscale = 0.0f64;
    for case in LoadCase::all() {
        let q = case.index();
        for p in 0..4 * nodes {
            let (lf, lx) = match dof(p) {
                Some(a) => (sys.loads[q][a], cells.fields[q][a]),
                None => (0.0, 0.0),
            };
            fdiff = fdiff.max((lf - oracle.loads[q][p]).abs());
            fscale = fscale.max(oracle.loads[q][p].abs());
            xdiff = xdiff.max((lx - oracle.solutions[q][p]).abs());
            xscale = xscale.max(oracle.solutions[q][p].abs());
        }
    }
    (kdiff / kscale.max(1.0), fdiff / fscale.max(1.0), xdiff / xscale.max(1.0))
}

/// `1 / <1/a>` for a function sampled at voxel centers.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

pub fn arithmetic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

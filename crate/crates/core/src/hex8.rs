//! Trilinear voxel element with 2x2x2 Gauss quadrature.
//!
//! Local node `a = ax + 2 ay + 4 az` sits at the voxel corner offset
//! `(ax, ay, az)`. Local degrees of freedom are interleaved per node as
//! `(u1, u2, u3, phi)`, so local dof `4 a + c`.
//!
//! The coupled element matrix is the symmetrized form
//! `[[A, B], [B^T, -D]]` obtained by negating the electric test equation.

use crate::tensors::{kronecker, MaterialTensors, Mat3};

pub const NODES: usize = 8;
pub const DOFS: usize = 32;

/// Corner offsets of the local nodes.
pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Gauss points in local voxel coordinates `[0,1]^3`.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let g = 0.5 / 3f64.sqrt();
    let lo = 0.5 - g;
    let hi = 0.5 + g;
    let mut pts = [[0.0; 3]; 8];
    for (q, c) in CORNERS.iter().enumerate() {
        for d in 0..3 {
            pts[q][d] = if c[d] == 1 { hi } else { lo };
        }
    }
    pts
}

/// Quadrature weight of one Gauss point for a voxel of edge `h`.
#[inline]
pub fn gauss_weight(h: f64) -> f64 {
    h * h * h / 8.0
}

#[inline]
fn lin(c: usize, t: f64) -> f64 {
    if c == 1 {
        t
    } else {
        1.0 - t
    }
}

#[inline]
fn dlin(c: usize) -> f64 {
    if c == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn shape_values(xi: [f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = lin(c[0], xi[0]) * lin(c[1], xi[1]) * lin(c[2], xi[2]);
    }
    n
}

/// Physical gradients `dN_a/dx_d` at local point `xi` of a voxel of edge `h`.
pub fn shape_gradients(xi: [f64; 3], h: f64) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, c) in CORNERS.iter().enumerate() {
        g[a][0] = dlin(c[0]) * lin(c[1], xi[1]) * lin(c[2], xi[2]) / h;
        g[a][1] = lin(c[0], xi[0]) * dlin(c[1]) * lin(c[2], xi[2]) / h;
        g[a][2] = lin(c[0], xi[0]) * lin(c[1], xi[1]) * dlin(c[2]) / h;
    }
    g
}

/// Symmetrized coupled element matrix, row-major `32 x 32`.
pub fn element_matrix(m: &MaterialTensors, h: f64) -> Vec<f64> {
    let c = m.c.to_full();
    let e = m.e.to_full();
    let d = m.d.to_matrix();
    let w = gauss_weight(h);
    let mut k = vec![0.0; DOFS * DOFS];
    for xi in gauss_points() {
        let g = shape_gradients(xi, h);
        for a in 0..NODES {
            for b in 0..NODES {
                for i in 0..3 {
                    for kk in 0..3 {
                        let mut s = 0.0;
                        for j in 0..3 {
                            for l in 0..3 {
                                s += c[i][j][kk][l] * g[a][j] * g[b][l];
                            }
                        }
                        k[(4 * a + i) * DOFS + 4 * b + kk] += w * s;
                    }
                    // coupling: e_kij dN_b/dx_k dN_a/dx_j
                    let mut s = 0.0;
                    for j in 0..3 {
                        for kk in 0..3 {
                            s += e[kk][i][j] * g[b][kk] * g[a][j];
                        }
                    }
                    k[(4 * a + i) * DOFS + 4 * b + 3] += w * s;
                    k[(4 * b + 3) * DOFS + 4 * a + i] += w * s;
                }
                let mut s = 0.0;
                for kk in 0..3 {
                    for l in 0..3 {
                        s += d[kk][l] * g[a][kk] * g[b][l];
                    }
                }
                k[(4 * a + 3) * DOFS + 4 * b + 3] -= w * s;
            }
        }
    }
    for p in 0..DOFS {
        for q in 0..p {
            let s = 0.5 * (k[p * DOFS + q] + k[q * DOFS + p]);
            k[p * DOFS + q] = s;
            k[q * DOFS + p] = s;
        }
    }
    k
}

/// The nine cell load cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum LoadCase {
    /// Unit symmetric prestrain `tau^{mh}`, zero-based with `m <= h`.
    Elastic(usize, usize),
    /// Unit macroscopic potential gradient along axis `n` (zero-based).
    Electric(usize),
}

impl LoadCase {
    /// Six elastic cases in Voigt order followed by three electric cases.
    pub fn all() -> [LoadCase; 9] {
        [
            LoadCase::Elastic(0, 0),
            LoadCase::Elastic(1, 1),
            LoadCase::Elastic(2, 2),
            LoadCase::Elastic(1, 2),
            LoadCase::Elastic(0, 2),
            LoadCase::Elastic(0, 1),
            LoadCase::Electric(0),
            LoadCase::Electric(1),
            LoadCase::Electric(2),
        ]
    }

    /// Position in [`LoadCase::all`].
    pub fn index(&self) -> usize {
        match *self {
            LoadCase::Elastic(m, h) => crate::tensors::voigt_index(m, h),
            LoadCase::Electric(n) => 6 + n,
        }
    }

    pub fn elastic(m: usize, h: usize) -> LoadCase {
        LoadCase::Elastic(m.min(h), m.max(h))
    }

    /// The constant prestrain (elastic cases) or zero.
    pub fn prestrain(&self) -> Mat3 {
        let mut t = [[0.0; 3]; 3];
        if let LoadCase::Elastic(m, h) = *self {
            for (k, row) in t.iter_mut().enumerate() {
                for (l, v) in row.iter_mut().enumerate() {
                    *v = crate::tensors::tau(k, l, m, h);
                }
            }
        }
        t
    }

    /// The constant potential gradient (electric cases) or zero.
    pub fn field(&self) -> [f64; 3] {
        match *self {
            LoadCase::Elastic(..) => [0.0; 3],
            LoadCase::Electric(n) => [kronecker(0, n), kronecker(1, n), kronecker(2, n)],
        }
    }
}

impl std::fmt::Display for LoadCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadCase::Elastic(m, h) => write!(f, "elastic({}{})", m + 1, h + 1),
            LoadCase::Electric(n) => write!(f, "electric({})", n + 1),
        }
    }
}

/// Element right-hand side of a cell load case in the symmetrized sign convention.
///
/// Elastic rows carry `-(c T + e^T G) : grad N`, the potential row carries
/// `-(e T - d G) . grad N`, where `T` is the prestrain and `G` the imposed
/// potential gradient of the case.
pub fn element_load(m: &MaterialTensors, h: f64, case: LoadCase) -> [f64; DOFS] {
    let t = case.prestrain();
    let gfield = case.field();
    // macroscopic stress and (negated-row) electric flux of the imposed state
    let mut sigma = [[0.0; 3]; 3];
    let mut flux = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += m.c.get(i, j, k, l) * t[k][l];
                }
                s += m.e.get(k, i, j) * gfield[k];
            }
            sigma[i][j] = s;
        }
        let mut q = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                q += m.e.get(i, k, l) * t[k][l];
            }
            q -= m.d.get(i, k) * gfield[k];
        }
        flux[i] = q;
    }
    let w = gauss_weight(h);
    let mut f = [0.0; DOFS];
    for xi in gauss_points() {
        let g = shape_gradients(xi, h);
        for a in 0..NODES {
            for i in 0..3 {
                f[4 * a + i] -= w * (0..3).map(|j| sigma[i][j] * g[a][j]).sum::<f64>();
            }
            f[4 * a + 3] -= w * (0..3).map(|k| flux[k] * g[a][k]).sum::<f64>();
        }
    }
    f
}

/// Consistent element mass matrix (scalar, 8 x 8) for a voxel of edge `h`.
pub fn mass_matrix(h: f64) -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (a, ca) in CORNERS.iter().enumerate() {
        for (b, cb) in CORNERS.iter().enumerate() {
            let mut v = h * h * h;
            for d in 0..3 {
                v *= if ca[d] == cb[d] { 1.0 / 3.0 } else { 1.0 / 6.0 };
            }
            m[a][b] = v;
        }
    }
    m
}

/// Strain and potential gradient at local point `xi` from the 32 local values.
pub fn local_gradients(values: &[f64; DOFS], xi: [f64; 3], h: f64) -> (Mat3, [f64; 3]) {
    let g = shape_gradients(xi, h);
    let mut du = [[0.0; 3]; 3];
    let mut gphi = [0.0; 3];
    for a in 0..NODES {
        for i in 0..3 {
            for j in 0..3 {
                du[i][j] += values[4 * a + i] * g[a][j];
            }
        }
        for k in 0..3 {
            gphi[k] += values[4 * a + 3] * g[a][k];
        }
    }
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 0.5 * (du[i][j] + du[j][i]);
        }
    }
    (s, gphi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::{DielectricTensor, ElasticTensor, PiezoTensor};

    fn material() -> MaterialTensors {
        let mut e = [[0.0; 6]; 3];
        e[2][0] = -0.4;
        e[2][2] = 1.1;
        e[0][4] = 0.7;
        MaterialTensors::new(ElasticTensor::isotropic(1.0, 1.0), PiezoTensor::from_voigt(e), DielectricTensor::isotropic(1.0))
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let xi = [0.3, 0.8, 0.1];
        let n = shape_values(xi);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = shape_gradients(xi, 0.25);
        for d in 0..3 {
            assert!(g.iter().map(|r| r[d]).sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn element_matrix_is_symmetric_with_rigid_modes() {
        let k = element_matrix(&material(), 0.5);
        for p in 0..DOFS {
            for q in 0..DOFS {
                assert!((k[p * DOFS + q] - k[q * DOFS + p]).abs() < 1e-14);
            }
        }
        // translations and constant potential lie in the kernel
        for comp in 0..4 {
            for p in 0..DOFS {
                let s: f64 = (0..NODES).map(|a| k[p * DOFS + 4 * a + comp]).sum();
                assert!(s.abs() < 1e-13, "comp {comp} row {p}: {s}");
            }
        }
    }

    #[test]
    fn linear_field_has_constant_gradient() {
        let h = 0.125;
        let a = [[0.3, -0.2, 0.5], [0.1, 0.4, -0.7], [0.9, 0.0, 0.2]];
        let b = [0.6, -1.1, 0.25];
        let mut vals = [0.0; DOFS];
        for (n, c) in CORNERS.iter().enumerate() {
            let x = [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h];
            for i in 0..3 {
                vals[4 * n + i] = (0..3).map(|j| a[i][j] * x[j]).sum();
            }
            vals[4 * n + 3] = (0..3).map(|j| b[j] * x[j]).sum();
        }
        for xi in [[0.1, 0.2, 0.3], [0.9, 0.5, 0.7]] {
            let (s, g) = local_gradients(&vals, xi, h);
            for i in 0..3 {
                assert!((g[i] - b[i]).abs() < 1e-13);
                for j in 0..3 {
                    assert!((s[i][j] - 0.5 * (a[i][j] + a[j][i])).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn mass_matrix_integrates_volume() {
        let h = 0.5;
        let total: f64 = mass_matrix(h).iter().flatten().sum();
        assert!((total - h * h * h).abs() < 1e-15);
    }
}

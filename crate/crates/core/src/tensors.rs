//! Material tensors in full index notation.
//!
//! Storage is canonical: the elastic tensor keeps the 21 independent
//! components of its 6x6 representation, the piezoelectric tensor keeps
//! `e_{k(ij)}` with the symmetric pair folded, and the dielectric tensor keeps
//! its upper triangle. Index symmetries therefore hold exactly. Voigt
//! matrices only appear at the I/O boundary through [`voigt_pack`] and
//! [`voigt_unpack`].
//!
//! Ellipticity constants are reported as eigenvalues of the Mandel-scaled
//! 6x6 matrix (shear rows/columns multiplied by sqrt 2), which is the exact
//! constant `min c:X:X / X:X` over symmetric `X`.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];
pub type Tensor3 = [[[f64; 3]; 3]; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Voigt ordering (11, 22, 33, 23, 13, 12), zero-based.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Relative tolerance used when accepting symmetric matrices from files.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Margin for "positive definite" reporting, relative to the trace.
pub const POSITIVITY_MARGIN: f64 = 1e-10;

#[inline]
pub fn voigt_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => panic!("index out of range: ({i}, {j})"),
    }
}

#[inline]
fn upper_index(a: usize, b: usize) -> usize {
    let (r, c) = (a.min(b), a.max(b));
    // row-major upper triangle of a 6x6
    r * 6 - r * (r + 1) / 2 + c
}

#[inline]
fn upper3_index(a: usize, b: usize) -> usize {
    let (r, c) = (a.min(b), a.max(b));
    r * 3 - r * (r + 1) / 2 + c
}

pub fn kronecker(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// The symmetric unit basis tensor `tau^{kl}_{mh} = (d_km d_lh + d_kh d_lm) / 2`.
pub fn tau(k: usize, l: usize, m: usize, h: usize) -> f64 {
    0.5 * (kronecker(k, m) * kronecker(l, h) + kronecker(k, h) * kronecker(l, m))
}

/// Fourth-order stiffness tensor with minor and major symmetries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticTensor {
    upper: [f64; 21],
}

impl ElasticTensor {
    pub fn zero() -> Self {
        Self { upper: [0.0; 21] }
    }

    /// `c_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)`.
    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        let mut t = Self::zero();
        for a in 0..6 {
            for b in a..6 {
                let (i, j) = VOIGT_PAIRS[a];
                let (k, l) = VOIGT_PAIRS[b];
                t.upper[upper_index(a, b)] = lambda * kronecker(i, j) * kronecker(k, l)
                    + mu * (kronecker(i, k) * kronecker(j, l) + kronecker(i, l) * kronecker(j, k));
            }
        }
        t
    }

    /// Entry of the 6x6 Voigt representation.
    #[inline]
    pub fn voigt(&self, a: usize, b: usize) -> f64 {
        self.upper[upper_index(a, b)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.voigt(voigt_index(i, j), voigt_index(k, l))
    }

    pub fn to_full(&self) -> Tensor4 {
        let mut out = [[[[0.0; 3]; 3]; 3]; 3];
        for (i, oi) in out.iter_mut().enumerate() {
            for (j, oj) in oi.iter_mut().enumerate() {
                for (k, ok) in oj.iter_mut().enumerate() {
                    for (l, v) in ok.iter_mut().enumerate() {
                        *v = self.get(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Projects an arbitrary 3^4 array onto the space of tensors with minor and
    /// major symmetries by averaging over the eight symmetric images.
    pub fn from_full_symmetrized(t: &Tensor4) -> Self {
        let mut out = Self::zero();
        for a in 0..6 {
            for b in a..6 {
                let (i, j) = VOIGT_PAIRS[a];
                let (k, l) = VOIGT_PAIRS[b];
                // pairwise means keep already-symmetric input bit-exact
                let mid = |x: f64, y: f64| 0.5 * (x + y);
                let first = mid(mid(t[i][j][k][l], t[j][i][k][l]), mid(t[i][j][l][k], t[j][i][l][k]));
                let second = mid(mid(t[k][l][i][j], t[l][k][i][j]), mid(t[k][l][j][i], t[l][k][j][i]));
                out.upper[upper_index(a, b)] = mid(first, second);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.upper.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn trace_voigt(&self) -> f64 {
        (0..6).map(|a| self.voigt(a, a)).sum()
    }

    /// Exact ellipticity constant `min_X c:X:X / X:X`.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue_mandel(&voigt_pack(self))
    }
}

/// Packs `c` into its symmetric 6x6 Voigt matrix (no engineering factors).
pub fn voigt_pack(c: &ElasticTensor) -> Matrix6<f64> {
    Matrix6::from_fn(|a, b| c.voigt(a, b))
}

/// Inverse of [`voigt_pack`]; rejects matrices that are not symmetric to
/// [`SYMMETRY_TOLERANCE`] relative to their largest entry.
pub fn voigt_unpack(m: &Matrix6<f64>) -> Result<ElasticTensor> {
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NonSymmetricVoigt(asym / scale));
    }
    let mut t = ElasticTensor::zero();
    for a in 0..6 {
        for b in a..6 {
            t.upper[upper_index(a, b)] = m[(a, b)];
        }
    }
    Ok(t)
}

/// Smallest eigenvalue of a Voigt stiffness matrix after Mandel scaling.
pub fn min_eigenvalue_mandel(voigt: &Matrix6<f64>) -> f64 {
    let w = [1.0, 1.0, 1.0, 2f64.sqrt(), 2f64.sqrt(), 2f64.sqrt()];
    let mut m = Matrix6::from_fn(|a, b| voigt[(a, b)] * w[a] * w[b]);
    m = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.min()
}

/// Third-order piezoelectric tensor `e_kij = e_kji`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoTensor {
    voigt: [[f64; 6]; 3],
}

impl PiezoTensor {
    pub fn zero() -> Self {
        Self { voigt: [[0.0; 6]; 3] }
    }

    /// Builds from a 3x6 Voigt matrix whose columns follow the elastic ordering.
    pub fn from_voigt(voigt: [[f64; 6]; 3]) -> Self {
        Self { voigt }
    }

    pub fn voigt(&self) -> [[f64; 6]; 3] {
        self.voigt
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.voigt[k][voigt_index(i, j)]
    }

    pub fn to_full(&self) -> Tensor3 {
        let mut out = [[[0.0; 3]; 3]; 3];
        for (k, ok) in out.iter_mut().enumerate() {
            for (i, oi) in ok.iter_mut().enumerate() {
                for (j, v) in oi.iter_mut().enumerate() {
                    *v = self.get(k, i, j);
                }
            }
        }
        out
    }

    /// Symmetrizes the last index pair of an arbitrary 3^3 array.
    pub fn from_full_symmetrized(t: &Tensor3) -> Self {
        let mut out = Self::zero();
        for k in 0..3 {
            for (a, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
                out.voigt[k][a] = 0.5 * (t[k][i][j] + t[k][j][i]);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.voigt.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }
}

/// Symmetric second-order permittivity tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DielectricTensor {
    upper: [f64; 6],
}

impl DielectricTensor {
    pub fn isotropic(value: f64) -> Self {
        Self {
            upper: [value, 0.0, 0.0, value, 0.0, value],
        }
    }

    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                asym = asym.max((m[i][j] - m[j][i]).abs());
            }
        }
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NonSymmetricDielectric(asym / scale));
        }
        let mut upper = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                upper[upper3_index(i, j)] = m[i][j];
            }
        }
        Ok(Self { upper })
    }

    pub fn from_matrix_symmetrized(m: &Mat3) -> Self {
        let mut upper = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                upper[upper3_index(i, j)] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        Self { upper }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper3_index(i, j)]
    }

    pub fn to_matrix(&self) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.upper.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn trace(&self) -> f64 {
        self.get(0, 0) + self.get(1, 1) + self.get(2, 2)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue_sym3(&self.to_matrix())
    }
}

pub fn min_eigenvalue_sym3(m: &Mat3) -> f64 {
    let m = Matrix3::from_fn(|i, j| 0.5 * (m[i][j] + m[j][i]));
    SymmetricEigen::new(m).eigenvalues.min()
}

/// The constitutive triple at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialTensors {
    pub c: ElasticTensor,
    pub e: PiezoTensor,
    pub d: DielectricTensor,
}

impl MaterialTensors {
    pub fn new(c: ElasticTensor, e: PiezoTensor, d: DielectricTensor) -> Self {
        Self { c, e, d }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            c: self.c.scaled(s),
            e: self.e.scaled(s),
            d: self.d.scaled(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationCertificate {
    pub ok: bool,
    pub min_eig_c: f64,
    pub min_eig_d: f64,
}

/// Checks the ellipticity bounds of `c` and `d`; never fails on physics.
pub fn validate_material(m: &MaterialTensors, alpha_c: f64, alpha_d: f64) -> ValidationCertificate {
    assert!(alpha_c > 0.0 && alpha_d > 0.0, "ellipticity bounds must be positive");
    let min_eig_c = m.c.min_eigenvalue();
    let min_eig_d = m.d.min_eigenvalue();
    ValidationCertificate {
        ok: min_eig_c >= alpha_c && min_eig_d >= alpha_d,
        min_eig_c,
        min_eig_d,
    }
}

/// Per-voxel assignment of material tensors on a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialField {
    Uniform(MaterialTensors),
    Phases {
        phases: Vec<MaterialTensors>,
        /// One entry per voxel, x fastest.
        voxel_phase: Vec<u16>,
    },
}

impl MaterialField {
    /// Two-phase laminate on an `n^3` grid: voxels whose center coordinate
    /// along `axis` (0-based) is below `fraction` get `first`, the rest `second`.
    pub fn laminate(n: usize, axis: usize, fraction: f64, first: MaterialTensors, second: MaterialTensors) -> Self {
        let mut voxel_phase = vec![0u16; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = [i, j, k][axis];
                    let center = (idx as f64 + 0.5) / n as f64;
                    voxel_phase[i + n * (j + n * k)] = if center < fraction { 0 } else { 1 };
                }
            }
        }
        MaterialField::Phases {
            phases: vec![first, second],
            voxel_phase,
        }
    }

    pub fn phases(&self) -> &[MaterialTensors] {
        match self {
            MaterialField::Uniform(m) => std::slice::from_ref(m),
            MaterialField::Phases { phases, .. } => phases,
        }
    }

    #[inline]
    pub fn phase_of(&self, voxel: usize) -> usize {
        match self {
            MaterialField::Uniform(_) => 0,
            MaterialField::Phases { voxel_phase, .. } => voxel_phase[voxel] as usize,
        }
    }

    pub fn at_voxel(&self, voxel: usize) -> &MaterialTensors {
        &self.phases()[self.phase_of(voxel)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            MaterialField::Uniform(m) => MaterialField::Uniform(m.scaled(s)),
            MaterialField::Phases { phases, voxel_phase } => MaterialField::Phases {
                phases: phases.iter().map(|m| m.scaled(s)).collect(),
                voxel_phase: voxel_phase.clone(),
            },
        }
    }

    /// Checks that a per-voxel field matches an `n^3` grid.
    pub fn check_resolution(&self, n: usize) -> Result<()> {
        if let MaterialField::Phases { phases, voxel_phase } = self {
            if voxel_phase.len() != n * n * n {
                return Err(Error::ShapeMismatch(format!(
                    "material field has {} voxels, geometry has {}",
                    voxel_phase.len(),
                    n * n * n
                )));
            }
            if voxel_phase.iter().any(|&p| p as usize >= phases.len()) {
                return Err(Error::ShapeMismatch("voxel phase index out of range".into()));
            }
        }
        Ok(())
    }
}

impl From<MaterialTensors> for MaterialField {
    fn from(m: MaterialTensors) -> Self {
        MaterialField::Uniform(m)
    }
}

/// Diagnostic residuals of a set of homogenized tensors. All defects are
/// relative Frobenius norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub c_h_major_symmetry_defect: f64,
    pub e_h_f_h_defect: f64,
    pub d_h_symmetry_defect: f64,
    pub e_h_symmetry_defect: f64,
    pub c_h_min_eigenvalue: f64,
    pub d_h_min_eigenvalue: f64,
}

/// Homogenized coefficients as computed, with measured (not assumed) symmetries.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensors {
    pub c_h: Tensor4,
    pub e_h: Tensor3,
    pub f_h: Tensor3,
    pub d_h: Mat3,
    pub diagnostics: Diagnostics,
}

const TINY: f64 = 1e-300;

fn norm4(t: &Tensor4) -> f64 {
    t.iter().flatten().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm3(t: &Tensor3) -> f64 {
    t.iter().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm2(t: &Mat3) -> f64 {
    t.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

impl EffectiveTensors {
    pub fn new(c_h: Tensor4, e_h: Tensor3, f_h: Tensor3, d_h: Mat3) -> Self {
        let mut t = Self {
            c_h,
            e_h,
            f_h,
            d_h,
            diagnostics: Diagnostics {
                c_h_major_symmetry_defect: 0.0,
                e_h_f_h_defect: 0.0,
                d_h_symmetry_defect: 0.0,
                e_h_symmetry_defect: 0.0,
                c_h_min_eigenvalue: 0.0,
                d_h_min_eigenvalue: 0.0,
            },
        };
        t.diagnostics = tensor_defects(&t);
        t
    }

    pub fn c_h_symmetrized(&self) -> ElasticTensor {
        ElasticTensor::from_full_symmetrized(&self.c_h)
    }

    pub fn d_h_symmetrized(&self) -> DielectricTensor {
        DielectricTensor::from_matrix_symmetrized(&self.d_h)
    }

    /// Coefficients of the macroscopic problem: symmetrized `cH`, `eH`, `dH`.
    pub fn symmetrized_material(&self) -> MaterialTensors {
        MaterialTensors::new(
            self.c_h_symmetrized(),
            PiezoTensor::from_full_symmetrized(&self.e_h),
            self.d_h_symmetrized(),
        )
    }

    /// Voigt view of the measured `cH` (row pair taken as `(i<=j)`).
    pub fn c_h_voigt(&self) -> [[f64; 6]; 6] {
        let mut m = [[0.0; 6]; 6];
        for (a, row) in m.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                let (i, j) = VOIGT_PAIRS[a];
                let (k, l) = VOIGT_PAIRS[b];
                *v = self.c_h[i][j][k][l];
            }
        }
        m
    }

    pub fn third_order_voigt(t: &Tensor3) -> [[f64; 6]; 3] {
        let mut m = [[0.0; 6]; 3];
        for (k, row) in m.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (i, j) = VOIGT_PAIRS[a];
                *v = t[k][i][j];
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut c_h = self.c_h;
        c_h.iter_mut().flatten().flatten().flatten().for_each(|v| *v *= s);
        let mut e_h = self.e_h;
        e_h.iter_mut().flatten().flatten().for_each(|v| *v *= s);
        let mut f_h = self.f_h;
        f_h.iter_mut().flatten().flatten().for_each(|v| *v *= s);
        let mut d_h = self.d_h;
        d_h.iter_mut().flatten().for_each(|v| *v *= s);
        Self::new(c_h, e_h, f_h, d_h)
    }
}

/// Measures the structural identities of a set of homogenized tensors.
pub fn tensor_defects(t: &EffectiveTensors) -> Diagnostics {
    let mut c_skew = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for m in 0..3 {
                for h in 0..3 {
                    c_skew[i][j][m][h] = t.c_h[i][j][m][h] - t.c_h[m][h][i][j];
                }
            }
        }
    }
    let mut ef = [[[0.0; 3]; 3]; 3];
    let mut e_skew = [[[0.0; 3]; 3]; 3];
    for n in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                ef[n][i][j] = t.e_h[n][i][j] - t.f_h[n][i][j];
                e_skew[n][i][j] = t.e_h[n][i][j] - t.e_h[n][j][i];
            }
        }
    }
    let mut d_skew = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d_skew[i][j] = t.d_h[i][j] - t.d_h[j][i];
        }
    }
    let e_norm = norm3(&t.e_h);
    Diagnostics {
        c_h_major_symmetry_defect: norm4(&c_skew) / norm4(&t.c_h).max(TINY),
        e_h_f_h_defect: norm3(&ef) / e_norm.max(norm3(&t.f_h)).max(TINY),
        d_h_symmetry_defect: norm2(&d_skew) / norm2(&t.d_h).max(TINY),
        e_h_symmetry_defect: norm3(&e_skew) / e_norm.max(TINY),
        c_h_min_eigenvalue: ElasticTensor::from_full_symmetrized(&t.c_h).min_eigenvalue(),
        d_h_min_eigenvalue: min_eigenvalue_sym3(&t.d_h),
    }
}

/// Strict positivity with a floating-point floor relative to `trace`.
pub fn is_positive(min_eigenvalue: f64, trace: f64) -> bool {
    min_eigenvalue > POSITIVITY_MARGIN * trace.abs()
}

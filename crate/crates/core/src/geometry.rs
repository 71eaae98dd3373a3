//! Voxelized perforated unit cell.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A region removed from the material. Coordinates are in the unit cell and
/// membership is evaluated against all periodic images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HolePrimitive {
    Sphere { center: [f64; 3], radius: f64 },
    /// `axis` is 1-based; `center` holds the two remaining coordinates in
    /// increasing axis order.
    AxisCylinder { axis: usize, center: [f64; 2], radius: f64 },
    Box { lo: [f64; 3], hi: [f64; 3] },
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Shortest periodic distance between two coordinates in [0,1).
fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl HolePrimitive {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHole(format!("{msg}: {self:?}")));
        match self {
            HolePrimitive::Sphere { center, radius } => {
                if !center.iter().all(|&c| in_unit(c)) {
                    return bad("center outside [0,1]^3");
                }
                if !(*radius > 0.0) {
                    return bad("radius must be positive");
                }
            }
            HolePrimitive::AxisCylinder { axis, center, radius } => {
                if !(1..=3).contains(axis) {
                    return bad("axis must be 1, 2 or 3");
                }
                if !center.iter().all(|&c| in_unit(c)) {
                    return bad("center outside [0,1]^2");
                }
                if !(*radius > 0.0) {
                    return bad("radius must be positive");
                }
            }
            HolePrimitive::Box { lo, hi } => {
                if !lo.iter().chain(hi.iter()).all(|&c| in_unit(c)) {
                    return bad("corner outside [0,1]^3");
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return bad("lo must not exceed hi");
                }
            }
        }
        Ok(())
    }

    /// Whether `p` (any real point) lies inside the hole or one of its images.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            HolePrimitive::Sphere { center, radius } => {
                let d2: f64 = (0..3).map(|a| periodic_delta(p[a], center[a]).powi(2)).sum();
                d2 < radius * radius
            }
            HolePrimitive::AxisCylinder { axis, center, radius } => {
                let others: Vec<usize> = (0..3).filter(|&a| a != axis - 1).collect();
                let d2: f64 = others
                    .iter()
                    .zip(center)
                    .map(|(&a, &c)| periodic_delta(p[a], c).powi(2))
                    .sum();
                d2 < radius * radius
            }
            HolePrimitive::Box { lo, hi } => (0..3).all(|a| {
                let width = hi[a] - lo[a];
                width >= 1.0 || (p[a] - lo[a]).rem_euclid(1.0) < width
            }),
        }
    }
}

/// Voxel characteristic function of the material part of the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    n: usize,
    mask: Vec<bool>,
    theta: f64,
    connected: bool,
}

impl CellGeometry {
    /// Builds the cell by removing every voxel whose center falls in a hole.
    pub fn build(n: usize, holes: &[HolePrimitive]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidResolution(n));
        }
        for h in holes {
            h.validate()?;
        }
        let mut mask = vec![true; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let c = [
                        (i as f64 + 0.5) / n as f64,
                        (j as f64 + 0.5) / n as f64,
                        (k as f64 + 0.5) / n as f64,
                    ];
                    if holes.iter().any(|h| h.contains(c)) {
                        mask[i + n * (j + n * k)] = false;
                    }
                }
            }
        }
        Self::from_mask(n, mask)
    }

    /// Wraps an explicit voxel mask (x fastest, `true` = material).
    pub fn from_mask(n: usize, mask: Vec<bool>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidResolution(n));
        }
        if mask.len() != n * n * n {
            return Err(Error::ShapeMismatch(format!("mask has {} entries, expected {}", mask.len(), n * n * n)));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::AllVoid);
        }
        let connected = connectivity_check(n, &mask);
        Ok(Self {
            n,
            theta: count as f64 / (n * n * n) as f64,
            mask,
            connected,
        })
    }

    /// Imports a raw mask of `n^3` bytes (0 = void, anything else = material).
    pub fn from_raw_bytes(n: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_mask(n, bytes.iter().map(|&b| b != 0).collect())
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::from_mask(n, vec![true; n * n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    #[inline]
    pub fn voxel_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn is_material(&self, voxel: usize) -> bool {
        self.mask[voxel]
    }

    /// Voxel containing `y` after reduction modulo 1, plus the local
    /// coordinates of `y` inside that voxel in [0,1)^3.
    pub fn locate(&self, y: [f64; 3]) -> (usize, [f64; 3]) {
        let n = self.n as f64;
        let mut idx = [0usize; 3];
        let mut local = [0.0; 3];
        for a in 0..3 {
            let s = y[a].rem_euclid(1.0) * n;
            let i = (s.floor() as usize).min(self.n - 1);
            idx[a] = i;
            local[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        (self.voxel_index(idx[0], idx[1], idx[2]), local)
    }

    /// Value of the periodic characteristic function at `y`.
    pub fn chi_at(&self, y: [f64; 3]) -> u8 {
        let (v, _) = self.locate(y);
        self.mask[v] as u8
    }

    /// True when some void voxel lies on a face of the cell.
    pub fn hole_touches_boundary(&self) -> bool {
        let n = self.n;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let on_face = [i, j, k].iter().any(|&c| c == 0 || c == n - 1);
                    if on_face && !self.mask[self.voxel_index(i, j, k)] {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Whether the material voxels form one component under periodic face adjacency.
pub fn connectivity_check(n: usize, mask: &[bool]) -> bool {
    let total = mask.iter().filter(|&&m| m).count();
    let Some(start) = mask.iter().position(|&m| m) else {
        return false;
    };
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut reached = 1;
    while let Some(v) = queue.pop_front() {
        let (i, j, k) = (v % n, (v / n) % n, v / (n * n));
        let neighbors = [
            ((i + 1) % n, j, k),
            ((i + n - 1) % n, j, k),
            (i, (j + 1) % n, k),
            (i, (j + n - 1) % n, k),
            (i, j, (k + 1) % n),
            (i, j, (k + n - 1) % n),
        ];
        for (a, b, c) in neighbors {
            let w = a + n * (b + n * c);
            if mask[w] && !seen[w] {
                seen[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn centered_sphere(r: f64) -> HolePrimitive {
        HolePrimitive::Sphere { center: [0.5; 3], radius: r }
    }

    fn ball_fraction(r: f64) -> f64 {
        1.0 - 4.0 / 3.0 * std::f64::consts::PI * r.powi(3)
    }

    #[test]
    fn no_holes_is_full_and_connected() {
        let g = CellGeometry::build(8, &[]).unwrap();
        assert_eq!(g.theta(), 1.0);
        assert!(g.connected());
    }

    #[test]
    fn sphere_volume_fraction() {
        let g = CellGeometry::build(64, &[centered_sphere(0.25)]).unwrap();
        assert!((g.theta() - ball_fraction(0.25)).abs() < 0.005, "theta = {}", g.theta());
        assert!(g.connected());
    }

    #[test]
    fn full_box_is_all_void() {
        let hole = HolePrimitive::Box { lo: [0.0; 3], hi: [1.0; 3] };
        assert!(matches!(CellGeometry::build(4, &[hole]), Err(Error::AllVoid)));
    }

    #[test]
    fn rejects_bad_primitives() {
        assert!(CellGeometry::build(4, &[HolePrimitive::Sphere { center: [1.5, 0.5, 0.5], radius: 0.1 }]).is_err());
        assert!(CellGeometry::build(4, &[HolePrimitive::Sphere { center: [0.5; 3], radius: 0.0 }]).is_err());
        assert!(CellGeometry::build(4, &[HolePrimitive::AxisCylinder { axis: 4, center: [0.5; 2], radius: 0.1 }]).is_err());
        assert!(matches!(CellGeometry::build(1, &[]), Err(Error::InvalidResolution(1))));
    }

    #[test]
    fn connectivity_examples() {
        let n = 4;
        let full = vec![true; n * n * n];
        assert!(connectivity_check(n, &full));

        let mut wrap = vec![false; n * n * n];
        wrap[0] = true;
        wrap[n - 1] = true;
        assert!(connectivity_check(n, &wrap));

        let n = 5;
        let mut apart = vec![false; n * n * n];
        apart[0] = true;
        apart[2 + n * (2 + n * 2)] = true;
        assert!(!connectivity_check(n, &apart));
    }

    #[test]
    fn chi_values() {
        let full = CellGeometry::build(8, &[]).unwrap();
        assert_eq!(full.chi_at([0.3, 0.7, 0.1]), 1);
        let g = CellGeometry::build(8, &[centered_sphere(0.25)]).unwrap();
        assert_eq!(g.chi_at([0.5, 0.5, 0.5]), 0);
        assert_eq!(g.chi_at([0.05, 0.05, 0.05]), 1);
    }

    #[test]
    fn boundary_crossing_hole_uses_periodic_images() {
        // a sphere centered on a corner carves all eight corners of the cell
        let g = CellGeometry::build(8, &[HolePrimitive::Sphere { center: [0.0; 3], radius: 0.2 }]).unwrap();
        assert_eq!(g.chi_at([0.01, 0.01, 0.01]), 0);
        assert_eq!(g.chi_at([0.99, 0.99, 0.99]), 0);
        assert!(g.hole_touches_boundary());
        let interior = CellGeometry::build(8, &[centered_sphere(0.25)]).unwrap();
        assert!(!interior.hole_touches_boundary());
    }

    #[test]
    fn refinement_approaches_ball_volume() {
        let exact = ball_fraction(0.25);
        let mut prev: Option<f64> = None;
        for n in [8usize, 16, 32, 64] {
            let g = CellGeometry::build(n, &[centered_sphere(0.25)]).unwrap();
            let err = (g.theta() - exact).abs();
            if let Some(p) = prev {
                assert!(err <= p + 2.0 / n as f64, "n={n}: {err} vs {p}");
            }
            prev = Some(err);
        }
    }

    fn arb_hole() -> impl Strategy<Value = HolePrimitive> {
        prop_oneof![
            (proptest::array::uniform3(0.0f64..1.0), 0.01f64..0.4)
                .prop_map(|(center, radius)| HolePrimitive::Sphere { center, radius }),
            (1usize..=3, proptest::array::uniform2(0.0f64..1.0), 0.01f64..0.3)
                .prop_map(|(axis, center, radius)| HolePrimitive::AxisCylinder { axis, center, radius }),
            (proptest::array::uniform3(0.0f64..0.6), proptest::array::uniform3(0.0f64..0.4)).prop_map(|(lo, w)| {
                HolePrimitive::Box { lo, hi: [lo[0] + w[0], lo[1] + w[1], lo[2] + w[2]] }
            }),
        ]
    }

    proptest! {
        #[test]
        fn chi_is_periodic(y in proptest::array::uniform3(0.0f64..1.0), shift in proptest::array::uniform3(-3i32..3), hole in arb_hole()) {
            let g = CellGeometry::build(8, &[hole]);
            if let Ok(g) = g {
                let z = [y[0] + shift[0] as f64, y[1] + shift[1] as f64, y[2] + shift[2] as f64];
                // integer shifts of values near voxel faces can round across the face
                let near_face = y.iter().any(|&c| ((c * 8.0) - (c * 8.0).round()).abs() < 1e-9);
                if !near_face {
                    prop_assert_eq!(g.chi_at(y), g.chi_at(z));
                }
            }
        }

        #[test]
        fn adding_a_hole_never_increases_theta(a in arb_hole(), b in arb_hole()) {
            if let (Ok(g1), Ok(g2)) = (CellGeometry::build(8, std::slice::from_ref(&a)), CellGeometry::build(8, &[a, b])) {
                prop_assert!(g2.theta() <= g1.theta());
            }
        }
    }
}

mod common;

use common::{anisotropic_material, coupled_material, dense_comparison};
use piezocell::geometry::CellGeometry;

const TOL: f64 = 1e-9;

fn one_void_voxel() -> CellGeometry {
    let mut mask = vec![true; 8];
    mask[5] = false;
    CellGeometry::from_mask(2, mask).unwrap()
}

fn check(geometry: &CellGeometry, name: &str) {
    for (label, m) in [("coupled", coupled_material()), ("anisotropic", anisotropic_material())] {
        let (k, f, x) = dense_comparison(geometry, &m);
        assert!(k <= 1e-12, "{name}/{label}: matrix differs by {k:e}");
        assert!(f <= TOL, "{name}/{label}: loads differ by {f:e}");
        assert!(x <= TOL, "{name}/{label}: solutions differ by {x:e}");
    }
}

#[test]
fn full_two_cell_matches_dense_loops() {
    check(&CellGeometry::full(2).unwrap(), "full");
}

#[test]
fn two_cell_with_void_voxel_matches_dense_loops() {
    check(&one_void_voxel(), "void");
}

#[test]
fn three_cell_with_void_voxels_matches_dense_loops() {
    let mut mask = vec![true; 27];
    mask[13] = false;
    mask[0] = false;
    check(&CellGeometry::from_mask(3, mask).unwrap(), "n3");
}

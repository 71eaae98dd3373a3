mod common;

use common::{coupled_material, sphere_cell};
use piezocell::effective::homogenize;

fn flat(n: usize) -> Vec<f64> {
    let r = homogenize(&sphere_cell(n, 0.25), &coupled_material().into()).unwrap();
    let t = r.tensors;
    t.c_h
        .iter()
        .flatten()
        .flatten()
        .flatten()
        .chain(t.e_h.iter().flatten().flatten())
        .chain(t.d_h.iter().flatten())
        .copied()
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn effective_tensors_are_cauchy_under_refinement() {
    let t4 = flat(4);
    let t8 = flat(8);
    let t16 = flat(16);
    let d1 = dist(&t4, &t8);
    let d2 = dist(&t8, &t16);
    assert!(d2 < d1, "|t8 - t16| = {d2:e} is not below |t4 - t8| = {d1:e}");
}

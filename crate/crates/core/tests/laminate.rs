mod common;

use common::{arithmetic_mean, harmonic_mean};
use piezocell::effective::homogenize;
use piezocell::geometry::CellGeometry;
use piezocell::tensors::{DielectricTensor, ElasticTensor, MaterialField, MaterialTensors, PiezoTensor};

fn layered(n: usize, first: MaterialTensors, second: MaterialTensors) -> MaterialField {
    MaterialField::laminate(n, 0, 0.5, first, second)
}

fn layer_values(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n).map(|i| if (i as f64 + 0.5) / (n as f64) < 0.5 { a } else { b }).collect()
}

#[test]
fn dielectric_laminate_gives_harmonic_and_arithmetic_means() {
    let n = 8;
    let c = ElasticTensor::isotropic(1.0, 1.0);
    let first = MaterialTensors::new(c, PiezoTensor::zero(), DielectricTensor::isotropic(1.0));
    let second = MaterialTensors::new(c, PiezoTensor::zero(), DielectricTensor::isotropic(3.0));
    let r = homogenize(&CellGeometry::full(n).unwrap(), &layered(n, first, second)).unwrap();
    let vals = layer_values(n, 1.0, 3.0);
    let across = harmonic_mean(&vals);
    let along = arithmetic_mean(&vals);
    assert!((across - 1.5).abs() < 1e-15);
    assert!((along - 2.0).abs() < 1e-15);
    let d = r.tensors.d_h;
    assert!((d[0][0] - across).abs() <= 1e-9, "dH11 = {}", d[0][0]);
    assert!((d[1][1] - along).abs() <= 1e-9, "dH22 = {}", d[1][1]);
    assert!((d[2][2] - along).abs() <= 1e-9, "dH33 = {}", d[2][2]);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(d[i][j].abs() <= 1e-9);
            }
        }
    }
}

/// Normal stress across the layers is constant, so `cH_1111 = <1/(lambda + 2 mu)>^{-1}`.
#[test]
fn elastic_laminate_matches_one_dimensional_cell_solution() {
    let n = 8;
    let d = DielectricTensor::isotropic(1.0);
    let first = MaterialTensors::new(ElasticTensor::isotropic(1.0, 1.0), PiezoTensor::zero(), d);
    let second = MaterialTensors::new(ElasticTensor::isotropic(2.0, 3.0), PiezoTensor::zero(), d);
    let r = homogenize(&CellGeometry::full(n).unwrap(), &layered(n, first, second)).unwrap();
    let expected = harmonic_mean(&layer_values(n, 3.0, 8.0));
    assert!((expected - 48.0 / 11.0).abs() < 1e-14);
    let got = r.tensors.c_h[0][0][0][0];
    assert!((got - expected).abs() <= 1e-6 * expected, "cH1111 = {got}, expected {expected}");
    // shear across the layers: harmonic mean of mu
    let shear = harmonic_mean(&layer_values(n, 1.0, 3.0));
    assert!((r.tensors.c_h[0][1][0][1] - shear).abs() <= 1e-6 * shear);
}

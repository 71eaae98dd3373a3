mod common;

use common::{coupled_material, sphere_cell};
use piezocell::corrector::epsilon_sweep;
use piezocell::effective::homogenize;
use piezocell::geometry::CellGeometry;
use piezocell::hex8;
use piezocell::macrodns::{solve_dns, solve_macro, BodyForce, DnsProblem, FieldSolution, MacroProblem, SolveOptions};

fn macro_solution(n: usize) -> FieldSolution {
    let m = coupled_material();
    let r = homogenize(&CellGeometry::full(2).unwrap(), &m.into()).unwrap();
    let sol = solve_macro(
        &MacroProblem {
            tensors: r.tensors,
            theta: r.theta,
            body_force: BodyForce::Constant([0.0, 0.0, -1.0]),
            resolution: n,
        },
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sol.diagnostics.relative_residual <= 1e-9);
    assert!(sol.diagnostics.energy_balance_defect <= 1e-8);
    sol
}

/// `(int |s(u_c) - s(u_f)|^2 + |grad phi_c - grad phi_f|^2)^(1/2)` with the
/// coarse field evaluated at the Gauss points of the fine grid.
fn gradient_distance(coarse: &FieldSolution, fine: &FieldSolution) -> f64 {
    let q = fine.n / coarse.n;
    let h = 1.0 / fine.n as f64;
    let w = hex8::gauss_weight(h);
    let mut sum = 0.0;
    for k in 0..fine.n {
        for j in 0..fine.n {
            for i in 0..fine.n {
                let fv = fine.local_values(i, j, k);
                let cv = coarse.local_values(i / q, j / q, k / q);
                for xi in hex8::gauss_points() {
                    let (fs, fg) = hex8::local_gradients(&fv, xi, h);
                    let cxi = [
                        ((i % q) as f64 + xi[0]) / q as f64,
                        ((j % q) as f64 + xi[1]) / q as f64,
                        ((k % q) as f64 + xi[2]) / q as f64,
                    ];
                    let (cs, cg) = hex8::local_gradients(&cv, cxi, 1.0 / coarse.n as f64);
                    for a in 0..3 {
                        for b in 0..3 {
                            sum += w * (fs[a][b] - cs[a][b]).powi(2);
                        }
                        sum += w * (fg[a] - cg[a]).powi(2);
                    }
                }
            }
        }
    }
    sum.sqrt()
}

#[test]
fn macro_solution_is_self_convergent_in_energy() {
    let u8 = macro_solution(8);
    let u16 = macro_solution(16);
    let u32 = macro_solution(32);
    let d1 = gradient_distance(&u8, &u16);
    let d2 = gradient_distance(&u16, &u32);
    assert!(d2 < d1, "|u16 - u32| = {d2:e}, |u8 - u16| = {d1:e}");
    let (w8, w16, w32) = (u8.diagnostics.work, u16.diagnostics.work, u32.diagnostics.work);
    assert!((w32 - w16).abs() < (w16 - w8).abs(), "{w8} {w16} {w32}");
}

#[test]
fn dns_weak_gap_shrinks_with_epsilon() {
    let cell = sphere_cell(4, 0.25);
    let report = epsilon_sweep(
        &cell,
        &coupled_material().into(),
        &BodyForce::default(),
        &[0.5, 0.25],
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(report.rows.len(), 2);
    let (a, b) = (report.rows[0], report.rows[1]);
    assert!(b.weak_gap < a.weak_gap, "{a:?} {b:?}");
    assert!(b.strain_residual < a.strain_residual, "{a:?} {b:?}");
    assert!(b.efield_residual < a.efield_residual, "{a:?} {b:?}");
}

#[test]
fn dns_energy_balance_on_perforated_domain() {
    let sol = solve_dns(
        &DnsProblem {
            cell: sphere_cell(4, 0.25),
            material: coupled_material().into(),
            epsilon: 0.25,
            body_force: BodyForce::Constant([0.3, -0.2, -1.0]),
        },
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sol.diagnostics.relative_residual <= 1e-9);
    assert!(sol.diagnostics.energy_balance_defect <= 1e-8);
    assert!(sol.diagnostics.work > 0.0);
}

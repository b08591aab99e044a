mod common;

use num_complex::Complex64 as C;
use steklov::forward::ForwardSolver;
use steklov::geometry::{Coefficient, Scene, Shape};
use steklov::special::fundamental_solution;

fn rel_error(a: &[Vec<C>], b: &[Vec<C>]) -> f64 {
    let num: f64 = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().flatten().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn disc_data_converges_to_mode_matching_reference() {
    let scene = Scene {
        n_sources: 10,
        ..Scene::default()
    };
    let n = C::new(5.0, 0.0);
    let mut errs = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let solver = ForwardSolver::new(Shape::unit_disc(), &Coefficient::Constant(n), &scene, h).unwrap();
        let data = solver.simulate().unwrap();
        let mut ru = Vec::new();
        let mut rd = Vec::new();
        for &t0 in &data.source_angles {
            let (u, d): (Vec<C>, Vec<C>) = data
                .receiver_angles
                .iter()
                .map(|&t| common::disc_cauchy(n, 1.0, 1.0, 2.0, t, 3.0, t0))
                .unzip();
            ru.push(u);
            rd.push(d);
        }
        let (eu, ed) = (rel_error(&data.u, &ru), rel_error(&data.dnu, &rd));
        eprintln!("h={h} dofs={} u_err={eu:.3e} dnu_err={ed:.3e}", solver.n_dofs());
        errs.push((eu, ed));
    }
    let order = |a: f64, b: f64| (a / b).log2();
    let u_order = order(errs[1].0, errs[2].0);
    assert!((1.5..=2.5).contains(&u_order), "trace order {u_order}");
    assert!(order(errs[1].1, errs[2].1) > 1.2);
    assert!(errs[0].0 > errs[1].0 && errs[0].1 > errs[1].1);
    assert!(errs[2].0 < 0.01 && errs[2].1 < 0.02);
}

#[test]
fn absorbing_layer_reproduces_free_space_point_load() {
    let scene = Scene::default();
    let solver = ForwardSolver::new(Shape::unit_disc(), &Coefficient::real(1.0), &scene, 0.05).unwrap();
    let x0 = [3.0 * 0.3f64.cos(), 3.0 * 0.3f64.sin()];
    let u = solver.point_load_field(x0).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for v in solver.receiver_vertices() {
        let phi = fundamental_solution(1.0, solver.mesh.vertices[v], x0).unwrap();
        num += (u[v] - phi).norm_sqr();
        den += phi.norm_sqr();
    }
    let err = (num / den).sqrt();
    eprintln!("point load rel err {err:.3e}");
    assert!(err < 0.01, "relative error {err}");
}

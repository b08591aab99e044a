use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::PI;
use steklov::auxiliary::AuxSeries;
use steklov::forward::CauchyData;
use steklov::geometry::uniform_angles;
use steklov::rg::{detect_peaks, plane_wave, reciprocity_gap, tikhonov, Grid, IndicatorField, RgContext, TikhonovForm};
use steklov::special::bessel_j;

fn cvec(n: usize) -> impl Strategy<Value = Vec<C>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C::new(a, b)), n)
}

proptest! {
    #[test]
    fn gap_is_antisymmetric(v1 in cvec(16), d1 in cvec(16), v2 in cvec(16), d2 in cvec(16), w in proptest::collection::vec(0.0f64..1.0, 16)) {
        let a = reciprocity_gap(&v1, &d1, &v2, &d2, &w).unwrap();
        let b = reciprocity_gap(&v2, &d2, &v1, &d1, &w).unwrap();
        prop_assert!((a + b).norm() < 1e-12);
        prop_assert!(reciprocity_gap(&v1, &d1, &v1, &d1, &w).unwrap().norm() < 1e-12);
    }

    #[test]
    fn gap_is_bilinear(v1 in cvec(12), d1 in cvec(12), v2 in cvec(12), d2 in cvec(12), v3 in cvec(12), d3 in cvec(12),
                       s in (-2.0f64..2.0, -2.0f64..2.0)) {
        let w = vec![0.3; 12];
        let s = C::new(s.0, s.1);
        let comb = |x: &[C], y: &[C]| x.iter().zip(y).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let lhs = reciprocity_gap(&v1, &d1, &comb(&v2, &v3), &comb(&d2, &d3), &w).unwrap();
        let rhs = reciprocity_gap(&v1, &d1, &v2, &d2, &w).unwrap() + s * reciprocity_gap(&v1, &d1, &v3, &d3, &w).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn tikhonov_shrinks_with_alpha(a1 in 1e-6f64..1.0, factor in 1.5f64..100.0, entries in cvec(16), rhs in cvec(4)) {
        let a = DMatrix::from_vec(4, 4, entries);
        let f = DVector::from_vec(rhs);
        let g1 = tikhonov(&a, &f, a1, TikhonovForm::Standard).unwrap();
        let g2 = tikhonov(&a, &f, a1 * factor, TikhonovForm::Standard).unwrap();
        prop_assert!(g2.norm() <= g1.norm() * (1.0 + 1e-10));
    }
}

#[test]
fn gap_rejects_length_mismatch() {
    let v = vec![C::new(1.0, 0.0); 3];
    assert!(reciprocity_gap(&v, &v, &v[..2], &v, &[1.0; 3]).is_err());
}

#[test]
fn plane_waves_have_zero_gap_on_circle() {
    // Both are entire solutions, so the Jacobi-Anger series sums to zero.
    let n = 100;
    let r = 2.0;
    let th = uniform_angles(n);
    let w = vec![2.0 * PI * r / n as f64; n];
    let wave = |phi: f64| -> (Vec<C>, Vec<C>) {
        th.iter()
            .map(|&t| plane_wave(1.0, phi, [r * t.cos(), r * t.sin()], [t.cos(), t.sin()]))
            .unzip()
    };
    let (e1, de1) = wave(0.3);
    let (e2, de2) = wave(2.1);
    assert!(reciprocity_gap(&e1, &de1, &e2, &de2, &w).unwrap().norm() < 1e-8);
}

#[test]
fn constant_density_gives_bessel_zero() {
    let dirs = uniform_angles(100);
    for x in [[0.5, 0.2], [1.3, -0.7], [0.0, 1.9]] {
        let v: C = dirs.iter().map(|&phi| plane_wave(1.0, phi, x, [1.0, 0.0]).0).sum::<C>() * (2.0 * PI / 100.0);
        let expect = 2.0 * PI * bessel_j(0, x[0].hypot(x[1])).unwrap();
        assert!((v - expect).norm() < 1e-8);
    }
}

#[test]
fn tikhonov_limits() {
    let a = DMatrix::<C>::identity(3, 3);
    let f = DVector::from_vec(vec![C::new(1.0, 2.0), C::new(-0.5, 0.0), C::new(0.0, 3.0)]);
    let g = tikhonov(&a, &f, 1e-12, TikhonovForm::Standard).unwrap();
    assert!((g - &f).norm() < 1e-10);
    let big = tikhonov(&a, &f, 1e12, TikhonovForm::Standard).unwrap();
    assert!(big.norm() < 1e-11);
    assert!(tikhonov(&a, &f, 0.0, TikhonovForm::Standard).is_err());
    let lit = tikhonov(&a, &f, 1e-5, TikhonovForm::Literal).unwrap();
    assert!((lit - f * C::new(1.0 / (1.0 + 1e-5), 0.0)).norm() < 1e-12);
}

fn aux_as_data(lambda: C) -> CauchyData {
    let n = 24;
    let aux = AuxSeries::new(1.0, 2.0, 3.0, 1e-12).unwrap();
    let angles = uniform_angles(n);
    let u = aux.traces(lambda, &angles, &angles).unwrap();
    let dnu = u.iter().map(|row| row.iter().map(|v| -lambda * v).collect()).collect();
    CauchyData {
        k: 1.0,
        gamma_radius: 2.0,
        source_radius: 3.0,
        source_angles: angles.clone(),
        receiver_angles: angles,
        weights: vec![2.0 * PI * 2.0 / n as f64; n],
        u,
        dnu,
        noise_level: 0.0,
        seed: 0,
        clean: None,
    }
}

#[test]
fn identical_data_gives_zero_matrix() {
    let lambda = C::new(0.7, 0.0);
    let data = aux_as_data(lambda);
    let ctx = RgContext::new(&data, [0.2, 0.6], 30).unwrap();
    let sys = ctx.system(lambda).unwrap();
    assert_eq!(sys.a.shape(), (24, 30));
    assert_eq!(sys.f.len(), 24);
    assert!(sys.a.norm() < 1e-12);
}

#[test]
fn sampling_point_must_be_inside() {
    let data = aux_as_data(C::new(0.7, 0.0));
    assert!(RgContext::new(&data, [2.5, 0.0], 10).is_err());
}

#[test]
fn row_permutation_of_sources_permutes_system() {
    let mut data = aux_as_data(C::new(0.7, 0.0));
    for row in data.u.iter_mut() {
        for v in row.iter_mut() {
            *v *= C::new(1.1, 0.05);
        }
    }
    let lambda = C::new(-0.3, 0.1);
    let base = RgContext::new(&data, [0.2, 0.6], 16).unwrap().system(lambda).unwrap();
    let mut perm = data.clone();
    perm.source_angles.reverse();
    perm.u.reverse();
    perm.dnu.reverse();
    let moved = RgContext::new(&perm, [0.2, 0.6], 16).unwrap().system(lambda).unwrap();
    let n = data.n_sources();
    for l in 0..n {
        for j in 0..16 {
            assert!((base.a[(l, j)] - moved.a[(n - 1 - l, j)]).norm() < 1e-14);
        }
        assert!((base.f[l] - moved.f[n - 1 - l]).norm() < 1e-14);
    }
}

fn field(values: Vec<f64>, grid: Grid) -> IndicatorField {
    IndicatorField {
        points: grid.points(),
        values: values.into_iter().map(Some).collect(),
        grid,
        alpha: 1e-5,
        z: [0.2, 0.6],
    }
}

#[test]
fn peak_detection_examples() {
    let grid = Grid::Interval {
        a: -1.0,
        b: 1.0,
        step: 0.02,
    };
    let n = grid.dims().0;
    assert!(detect_peaks(&field(vec![1.0; n], grid), 5.0).unwrap().is_empty());
    let mut spike = vec![1.0; n];
    spike[37] = 100.0;
    let peaks = detect_peaks(&field(spike, grid), 5.0).unwrap();
    assert_eq!(peaks.len(), 1);
    assert!((peaks[0].lambda.re - (-1.0 + 0.02 * 37.0)).abs() < 1e-12);

    let rect = Grid::Rect {
        re0: 0.0,
        re1: 0.1,
        im0: 0.0,
        im1: 0.1,
        step: 0.02,
    };
    let (nre, nim) = rect.dims();
    let mut v = vec![1.0; nre * nim];
    v[2 * nre + 3] = 50.0;
    v[2 * nre + 4] = 49.0;
    let peaks = detect_peaks(&field(v, rect), 5.0).unwrap();
    assert_eq!(peaks.len(), 1);
    assert!((peaks[0].lambda - C::new(0.06, 0.04)).norm() < 1e-12);
}

#[test]
fn mostly_invalid_field_is_rejected() {
    let grid = Grid::Interval { a: 0.0, b: 1.0, step: 0.1 };
    let mut f = field(vec![1.0; 11], grid);
    for v in f.values.iter_mut().take(3) {
        *v = None;
    }
    assert!(detect_peaks(&f, 5.0).is_err());
}

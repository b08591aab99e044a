//! Independent closed-form references built from ascending series only.
#![allow(dead_code)]

use num_complex::Complex64 as C;
use std::f64::consts::PI;

const EULER: f64 = 0.577_215_664_901_532_9;

pub fn series_j(m: i32, z: C) -> C {
    let n = m.unsigned_abs() as usize;
    let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let half = z / 2.0;
    let mut lead = C::new(1.0, 0.0);
    for i in 1..=n {
        lead *= half / i as f64;
    }
    let mut sum = C::new(0.0, 0.0);
    let mut term = lead;
    for k in 0..300 {
        if k > 0 {
            term *= -half * half / (k as f64 * (k + n) as f64);
        }
        sum += term;
        if k > 5 && term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sign * sum
}

pub fn series_jp(m: i32, z: C) -> C {
    0.5 * (series_j(m - 1, z) - series_j(m + 1, z))
}

fn digamma_int(k: usize) -> f64 {
    -EULER + (1..k).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Ascending series for `Y_n(x)`, `x > 0`.
pub fn series_y(m: i32, x: f64) -> f64 {
    let n = m.unsigned_abs() as usize;
    let sign = if m < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let h = x / 2.0;
    let mut first = 0.0;
    for k in 0..n {
        let mut t = h.powi(2 * k as i32 - n as i32);
        for i in 1..=(n - k - 1) {
            t *= i as f64;
        }
        for i in 1..=k {
            t /= i as f64;
        }
        first += t;
    }
    let jn = series_j(n as i32, C::new(x, 0.0)).re;
    let mut second = 0.0;
    let mut fac = h.powi(n as i32);
    for i in 1..=n {
        fac /= i as f64;
    }
    for k in 0..300usize {
        if k > 0 {
            fac *= -h * h / (k as f64 * (k + n) as f64);
        }
        let t = (digamma_int(k + 1) + digamma_int(n + k + 1)) * fac;
        second += t;
        if k > 5 && t.abs() < 1e-18 * second.abs().max(1e-300) {
            break;
        }
    }
    sign * (-first / PI + 2.0 / PI * h.ln() * jn - second / PI)
}

pub fn hankel(m: i32, x: f64) -> C {
    C::new(series_j(m, C::new(x, 0.0)).re, series_y(m, x))
}

pub fn hankel_p(m: i32, x: f64) -> C {
    0.5 * (hankel(m - 1, x) - hankel(m + 1, x))
}

/// Steklov eigenvalue of mode `m` for a core of radius `a` and index `n`
/// inside the disc of radius `big_r`, from the two-region radial solution.
pub fn disc_steklov(m: i32, n: C, a: f64, big_r: f64, k: f64) -> C {
    let kappa = k * n.sqrt();
    let ja = series_j(m, kappa * a);
    let jpa = series_jp(m, kappa * a);
    let ka = C::new(k * a, 0.0);
    let (jk, jpk) = (series_j(m, ka).re, series_jp(m, ka).re);
    let (yk, ypk) = (series_y(m, k * a), 0.5 * (series_y(m - 1, k * a) - series_y(m + 1, k * a)));
    let w = 2.0 / (PI * k * a);
    let c1 = (ja * k * ypk - kappa * jpa * yk) / (k * w);
    let c2 = (kappa * jpa * jk - ja * k * jpk) / (k * w);
    let kr = C::new(k * big_r, 0.0);
    let (jr, jpr) = (series_j(m, kr).re, series_jp(m, kr).re);
    let (yr, ypr) = (
        series_y(m, k * big_r),
        0.5 * (series_y(m - 1, k * big_r) - series_y(m + 1, k * big_r)),
    );
    -k * (c1 * jpr + c2 * ypr) / (c1 * jr + c2 * yr)
}

/// Total field and outward normal derivative at `(radius, theta)` for a point
/// source at `(rc, theta0)` scattered by a homogeneous disc of radius `a`.
pub fn disc_cauchy(n: C, a: f64, k: f64, radius: f64, theta: f64, rc: f64, theta0: f64) -> (C, C) {
    let kappa = k * n.sqrt();
    let mut u = C::new(0.0, 0.0);
    let mut du = C::new(0.0, 0.0);
    for m in -40..=40i32 {
        let ka = k * a;
        let (j, jp) = (series_j(m, C::new(ka, 0.0)).re, series_jp(m, C::new(ka, 0.0)).re);
        let (h, hp) = (hankel(m, ka), hankel_p(m, ka));
        let (jc, jpc) = (series_j(m, kappa * a), series_jp(m, kappa * a));
        let b = (kappa * jpc * j - k * jp * jc) / (k * hp * jc - kappa * jpc * h);
        let src = C::new(0.0, 0.25) * hankel(m, k * rc) * C::from_polar(1.0, m as f64 * (theta - theta0));
        u += src * b * hankel(m, k * radius);
        du += src * b * k * hankel_p(m, k * radius);
    }
    let x = [radius * theta.cos(), radius * theta.sin()];
    let y = [rc * theta0.cos(), rc * theta0.sin()];
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    let phi = C::new(0.0, 0.25) * hankel(0, k * r);
    let dr = C::new(0.0, -0.25) * k * hankel(1, k * r);
    let dn = dr * (d[0] * theta.cos() + d[1] * theta.sin()) / r;
    (u + phi, du + dn)
}

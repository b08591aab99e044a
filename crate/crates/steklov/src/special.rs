//! Cylinder functions of integer order.
//!
//! Real arguments use Miller's backward recurrence for `J` and Neumann's
//! expansion for `Y_0`, `Y_1`, followed by upward recurrence for `Y_m`.
//! Complex arguments (needed only for an absorbing core) use the ascending
//! series and are limited to moderate `|z|`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::SpecialError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_LIMIT: f64 = 1e250;

/// Largest `|z|` accepted by the ascending-series path.
pub const COMPLEX_SERIES_LIMIT: f64 = 25.0;

fn miller_start(nmax: usize, x: f64) -> usize {
    let base = (nmax as f64).max(x) + 25.0 + 10.0 * x.cbrt();
    let n = base.ceil() as usize;
    n + (n & 1)
}

/// `J_0(x), ..., J_nmax(x)` for real `x`.
pub fn bessel_j_orders(nmax: usize, x: f64) -> Result<Vec<f64>, SpecialError> {
    if !x.is_finite() {
        return Err(SpecialError::NonFinite(x));
    }
    if x < 0.0 {
        let mut v = bessel_j_orders(nmax, -x)?;
        for (m, val) in v.iter_mut().enumerate() {
            if m % 2 == 1 {
                *val = -*val;
            }
        }
        return Ok(v);
    }
    if x == 0.0 {
        let mut v = vec![0.0; nmax + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    let (full, _) = miller(nmax, x);
    Ok(full[..=nmax].to_vec())
}

/// Backward recurrence. Returns `J_0..J_N` for the internal start order `N`.
fn miller(nmax: usize, x: f64) -> (Vec<f64>, usize) {
    let start = miller_start(nmax, x);
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-30;
    for m in (1..=start).rev() {
        let next = 2.0 * m as f64 / x * vals[m] - vals[m + 1];
        vals[m - 1] = next;
        if next.abs() > RESCALE_LIMIT {
            for v in vals[m - 1..].iter_mut() {
                *v /= RESCALE_LIMIT;
            }
        }
    }
    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    for v in vals.iter_mut() {
        *v /= norm;
    }
    vals.truncate(start + 1);
    (vals, start)
}

/// `Y_0(x), ..., Y_nmax(x)` for `x > 0`.
pub fn bessel_y_orders(nmax: usize, x: f64) -> Result<Vec<f64>, SpecialError> {
    if !x.is_finite() {
        return Err(SpecialError::NonFinite(x));
    }
    if x <= 0.0 {
        return Err(SpecialError::NonPositiveArgument(x));
    }
    let (j, start) = miller(1, x);
    let log_term = (x / 2.0).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k < start {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = 2.0 / PI * log_term * j[0] - 4.0 / PI * s0;
    let y1 = 2.0 / PI * (log_term * j[1] - j[0] / x) + 2.0 / PI * s1;
    let mut y = Vec::with_capacity(nmax + 1);
    y.push(y0);
    if nmax >= 1 {
        y.push(y1);
    }
    for m in 1..nmax {
        let next = 2.0 * m as f64 / x * y[m] - y[m - 1];
        y.push(next);
    }
    Ok(y)
}

/// `J_m`, `Y_m` for `0 <= m <= nmax + 1` at a single argument, with derivative
/// and negative-order helpers.
#[derive(Debug, Clone)]
pub struct CylinderValues {
    pub x: f64,
    j: Vec<f64>,
    y: Vec<f64>,
}

fn parity(m: i32) -> f64 {
    if m.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

impl CylinderValues {
    pub fn new(nmax: usize, x: f64) -> Result<Self, SpecialError> {
        Ok(Self {
            x,
            j: bessel_j_orders(nmax + 1, x)?,
            y: bessel_y_orders(nmax + 1, x)?,
        })
    }

    /// Highest order whose derivative is available.
    pub fn max_order(&self) -> usize {
        self.j.len() - 2
    }

    pub fn j(&self, m: i32) -> f64 {
        parity(m.min(0)) * self.j[m.unsigned_abs() as usize]
    }

    pub fn y(&self, m: i32) -> f64 {
        parity(m.min(0)) * self.y[m.unsigned_abs() as usize]
    }

    pub fn h(&self, m: i32) -> Complex64 {
        Complex64::new(self.j(m), self.y(m))
    }

    pub fn jp(&self, m: i32) -> f64 {
        0.5 * (self.j(m - 1) - self.j(m + 1))
    }

    pub fn yp(&self, m: i32) -> f64 {
        0.5 * (self.y(m - 1) - self.y(m + 1))
    }

    pub fn hp(&self, m: i32) -> Complex64 {
        Complex64::new(self.jp(m), self.yp(m))
    }
}

pub fn bessel_j(m: i32, x: f64) -> Result<f64, SpecialError> {
    let v = bessel_j_orders(m.unsigned_abs() as usize, x)?;
    Ok(parity(m.min(0)) * v[m.unsigned_abs() as usize])
}

pub fn bessel_y(m: i32, x: f64) -> Result<f64, SpecialError> {
    let v = bessel_y_orders(m.unsigned_abs() as usize, x)?;
    Ok(parity(m.min(0)) * v[m.unsigned_abs() as usize])
}

pub fn hankel1(m: i32, x: f64) -> Result<Complex64, SpecialError> {
    Ok(Complex64::new(bessel_j(m, x)?, bessel_y(m, x)?))
}

/// Outgoing fundamental solution `(i/4) H_0^(1)(k|x - y|)`.
pub fn fundamental_solution(k: f64, x: [f64; 2], y: [f64; 2]) -> Result<Complex64, SpecialError> {
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    let h = hankel1(0, k * r)?;
    Ok(Complex64::new(0.0, 0.25) * h)
}

/// Gradient in `x` of the fundamental solution.
pub fn fundamental_gradient(k: f64, x: [f64; 2], y: [f64; 2]) -> Result<[Complex64; 2], SpecialError> {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    // d/dr H_0 = -H_1
    let h1 = hankel1(1, k * r)?;
    let radial = Complex64::new(0.0, -0.25) * k * h1;
    Ok([radial * (d[0] / r), radial * (d[1] / r)])
}

/// Ascending series `J_m(z)` for complex `z`, `|z| <= COMPLEX_SERIES_LIMIT`.
pub fn bessel_j_complex(m: i32, z: Complex64) -> Result<Complex64, SpecialError> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(SpecialError::NonFinite(z.norm()));
    }
    if z.norm() > COMPLEX_SERIES_LIMIT {
        return Err(SpecialError::ComplexArgumentTooLarge(z.norm()));
    }
    let order = m.unsigned_abs() as usize;
    let half = z / 2.0;
    let mut term = Complex64::new(1.0, 0.0);
    for i in 1..=order {
        term *= half / i as f64;
    }
    let q = -half * half;
    let mut sum = term;
    let mut k = 1usize;
    loop {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() && k > 2 {
            break;
        }
        if k > 400 {
            break;
        }
        k += 1;
    }
    Ok(parity(m.min(0)) * sum)
}

pub fn bessel_jp_complex(m: i32, z: Complex64) -> Result<Complex64, SpecialError> {
    Ok(0.5 * (bessel_j_complex(m - 1, z)? - bessel_j_complex(m + 1, z)?))
}

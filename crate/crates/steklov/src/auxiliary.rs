//! Background field with a Robin condition on the measurement circle:
//! `u = Phi(., x0) + sum_m a_m H_m(k r) e^{i m theta}` outside `B`, with
//! `d_nu u + lambda u = 0` on the circle. Evaluated by separation of variables.

use num_complex::Complex64;

use crate::error::{Error, SolveError};
use crate::special::{fundamental_gradient, fundamental_solution, CylinderValues};

type C = Complex64;

const START_ORDER: usize = 40;
const MAX_ORDER: usize = 640;

/// Precomputed cylinder values for a fixed geometry.
#[derive(Debug, Clone)]
pub struct AuxSeries {
    pub k: f64,
    pub gamma_radius: f64,
    pub source_radius: f64,
    /// Truncation order `M` (modes `-M..=M`).
    pub order: usize,
    h_src: Vec<C>,
    j_g: Vec<f64>,
    jp_g: Vec<f64>,
    h_g: Vec<C>,
    hp_g: Vec<C>,
    tol: f64,
}

impl AuxSeries {
    /// Chooses `M` by doubling from 40 until the last retained mode contributes
    /// less than `tol` relative to the largest one on the circle.
    pub fn new(k: f64, gamma_radius: f64, source_radius: f64, tol: f64) -> Result<Self, Error> {
        if !(k > 0.0 && gamma_radius > 0.0 && source_radius > gamma_radius) {
            return Err(Error::Config("auxiliary problem needs 0 < R < source radius".into()));
        }
        let mut order = START_ORDER;
        loop {
            let s = Self::with_order(k, gamma_radius, source_radius, order, tol)?;
            let contrib: Vec<f64> = (0..=order)
                .map(|m| (s.h_src[m] * s.robin_ratio(m, C::new(0.0, 0.0)) * s.h_g[m]).norm())
                .collect();
            let max = contrib.iter().cloned().fold(0.0, f64::max);
            if contrib[order] <= tol * max || order >= MAX_ORDER {
                return Ok(s);
            }
            order *= 2;
        }
    }

    pub fn with_order(k: f64, gamma_radius: f64, source_radius: f64, order: usize, tol: f64) -> Result<Self, Error> {
        let src = CylinderValues::new(order, k * source_radius)?;
        let gam = CylinderValues::new(order, k * gamma_radius)?;
        let mi = |m: usize| m as i32;
        Ok(Self {
            k,
            gamma_radius,
            source_radius,
            order,
            h_src: (0..=order).map(|m| src.h(mi(m))).collect(),
            j_g: (0..=order).map(|m| gam.j(mi(m))).collect(),
            jp_g: (0..=order).map(|m| gam.jp(mi(m))).collect(),
            h_g: (0..=order).map(|m| gam.h(mi(m))).collect(),
            hp_g: (0..=order).map(|m| gam.hp(mi(m))).collect(),
            tol,
        })
    }

    /// `(k J_m' + lambda J_m) / (k H_m' + lambda H_m)` at the circle, `m >= 0`.
    fn robin_ratio(&self, m: usize, lambda: C) -> C {
        let num = self.k * self.jp_g[m] + lambda * self.j_g[m];
        let den = self.k * self.hp_g[m] + lambda * self.h_g[m];
        num / den
    }

    fn checked_ratio(&self, m: usize, lambda: C) -> Result<C, SolveError> {
        let den = self.k * self.hp_g[m] + lambda * self.h_g[m];
        let scale = (self.k * self.hp_g[m]).norm() + (lambda * self.h_g[m]).norm();
        if den.norm() <= 1e-13 * scale || !den.re.is_finite() {
            return Err(SolveError::Resonant {
                order: m as i32,
                denominator: den.norm(),
            });
        }
        Ok(self.robin_ratio(m, lambda))
    }

    /// Modal coefficients `a_m`, `m = -M..=M`, for a source at angle `theta0`.
    pub fn coefficients(&self, lambda: C, theta0: f64) -> Result<Vec<C>, SolveError> {
        let m_max = self.order as i32;
        (-m_max..=m_max)
            .map(|m| {
                let a = m.unsigned_abs() as usize;
                let rho = self.checked_ratio(a, lambda)?;
                // H_{-m} = (-1)^m H_m and the same for J, so the ratio is even in m
                // and the source factor picks up the same sign as the trace.
                let sign = if m < 0 && a % 2 == 1 { -1.0 } else { 1.0 };
                Ok(C::new(0.0, -0.25) * sign * self.h_src[a] * rho * C::from_polar(1.0, -(m as f64) * theta0))
            })
            .collect()
    }

    /// Per-order weights `w_m` with
    /// `u_scat(theta; theta0) = sum_{m>=0} w_m cos(m (theta - theta0))`.
    pub fn cosine_weights(&self, lambda: C) -> Result<Vec<C>, SolveError> {
        (0..=self.order)
            .map(|m| {
                let rho = self.checked_ratio(m, lambda)?;
                let eps = if m == 0 { 1.0 } else { 2.0 };
                Ok(C::new(0.0, -0.25) * eps * self.h_src[m] * self.h_g[m] * rho)
            })
            .collect()
    }

    /// Trace of `u_lambda` at the receivers for each source:
    /// `out[l][j] = u(receiver j; source l)`. The normal derivative is
    /// `-lambda` times the trace.
    pub fn traces(&self, lambda: C, source_angles: &[f64], receiver_angles: &[f64]) -> Result<Vec<Vec<C>>, Error> {
        let w = self.cosine_weights(lambda)?;
        let mut out = Vec::with_capacity(source_angles.len());
        for &t0 in source_angles {
            let y = [self.source_radius * t0.cos(), self.source_radius * t0.sin()];
            let mut row = Vec::with_capacity(receiver_angles.len());
            for &t in receiver_angles {
                let x = [self.gamma_radius * t.cos(), self.gamma_radius * t.sin()];
                row.push(fundamental_solution(self.k, x, y)? + cosine_sum(&w, t - t0));
            }
            out.push(row);
        }
        Ok(out)
    }

    /// Trace and normal derivative at one receiver evaluated mode by mode
    /// (no use of the boundary condition), for checking.
    pub fn cauchy_pair(&self, lambda: C, theta0: f64, theta: f64) -> Result<(C, C), Error> {
        let a = self.coefficients(lambda, theta0)?;
        let m_max = self.order as i32;
        let y = [self.source_radius * theta0.cos(), self.source_radius * theta0.sin()];
        let x = [self.gamma_radius * theta.cos(), self.gamma_radius * theta.sin()];
        let mut u = fundamental_solution(self.k, x, y)?;
        let g = fundamental_gradient(self.k, x, y)?;
        let mut du = g[0] * theta.cos() + g[1] * theta.sin();
        for (idx, m) in (-m_max..=m_max).enumerate() {
            let abs = m.unsigned_abs() as usize;
            let sign = if m < 0 && abs % 2 == 1 { -1.0 } else { 1.0 };
            let e = C::from_polar(1.0, m as f64 * theta);
            u += a[idx] * sign * self.h_g[abs] * e;
            du += a[idx] * sign * self.k * self.hp_g[abs] * e;
        }
        Ok((u, du))
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }
}

/// `sum_m w_m cos(m x)` via the Chebyshev recurrence.
fn cosine_sum(w: &[C], x: f64) -> C {
    let c1 = x.cos();
    let (mut prev, mut cur) = (1.0, c1);
    let mut s = w[0];
    for wm in &w[1..] {
        s += wm * cur;
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_condition_holds_mode_by_mode() {
        let s = AuxSeries::new(1.0, 2.0, 3.0, 1e-12).unwrap();
        for lambda in [C::new(-1.0, 0.0), C::new(0.0, 0.0), C::new(1.3, 0.0), C::new(0.2, 0.7)] {
            for t in [0.0, 0.4, 2.0] {
                let (u, du) = s.cauchy_pair(lambda, 0.3, t).unwrap();
                assert!((du + lambda * u).norm() < 1e-10 * u.norm().max(1.0));
            }
        }
    }

    #[test]
    fn cosine_form_matches_modal_sum() {
        let s = AuxSeries::new(1.0, 2.0, 3.0, 1e-12).unwrap();
        let lambda = C::new(-0.48, 0.05);
        let tr = s.traces(lambda, &[0.3], &[1.1]).unwrap();
        let (u, _) = s.cauchy_pair(lambda, 0.3, 1.1).unwrap();
        assert!((tr[0][0] - u).norm() < 1e-12);
    }

    #[test]
    fn truncation_order_is_adaptive() {
        let s = AuxSeries::new(1.0, 2.0, 3.0, 1e-12).unwrap();
        assert!(s.order >= 40);
        let loose = AuxSeries::new(1.0, 2.0, 3.0, 1e-3).unwrap();
        assert_eq!(loose.order, 40);
    }
}

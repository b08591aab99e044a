//! Reciprocity-gap reconstruction of Steklov eigenvalues from Cauchy data.
//!
//! For each trial `lambda`, solve the first-kind system
//! `R(u_lambda(., x_l) - u(., x_l), v_g) = R(u_lambda(., x_l), Phi_z)` for
//! the Herglotz density `g` and record `||g||`. The norm blows up near
//! Steklov eigenvalues.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::auxiliary::AuxSeries;
use crate::error::{Error, ParseError};
use crate::forward::CauchyData;
use crate::special::{fundamental_gradient, fundamental_solution};
use crate::steklov::{EigenvalueSet, Method, SearchRect};

type C = Complex64;

/// `R(v1, v2) = int_Gamma (v1 d_nu v2 - v2 d_nu v1) ds` by the given quadrature.
pub fn reciprocity_gap(v1: &[C], dv1: &[C], v2: &[C], dv2: &[C], weights: &[f64]) -> Result<C, Error> {
    let n = weights.len();
    if [v1.len(), dv1.len(), v2.len(), dv2.len()].iter().any(|&l| l != n) {
        return Err(Error::Numerical("reciprocity gap: length mismatch".into()));
    }
    Ok((0..n).map(|i| weights[i] * (v1[i] * dv2[i] - v2[i] * dv1[i])).sum())
}

/// `e^{i k x.d}` and its derivative along `normal` at `x`, with `d` at angle `phi`.
pub fn plane_wave(k: f64, phi: f64, x: [f64; 2], normal: [f64; 2]) -> (C, C) {
    let d = [phi.cos(), phi.sin()];
    let e = C::from_polar(1.0, k * (x[0] * d[0] + x[1] * d[1]));
    (e, C::new(0.0, k * (normal[0] * d[0] + normal[1] * d[1])) * e)
}

/// Form of the regularised normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TikhonovForm {
    /// `(A^* A + alpha I) g = A^* f`.
    #[default]
    Standard,
    /// `(A^* A + alpha A) g = A^* f`, as printed in the source of the method.
    Literal,
}

pub fn tikhonov(a: &DMatrix<C>, f: &DVector<C>, alpha: f64, form: TikhonovForm) -> Result<DVector<C>, Error> {
    if !(alpha > 0.0) {
        return Err(Error::Config("Tikhonov parameter must be positive".into()));
    }
    let ah = a.adjoint();
    let mut m = &ah * a;
    match form {
        TikhonovForm::Standard => {
            for i in 0..m.nrows() {
                m[(i, i)] += alpha;
            }
        }
        TikhonovForm::Literal => {
            if !a.is_square() {
                return Err(Error::Config("literal Tikhonov form needs a square system".into()));
            }
            m += a * C::new(alpha, 0.0);
        }
    }
    let g = m
        .lu()
        .solve(&(ah * f))
        .ok_or_else(|| Error::Numerical("regularised system is singular".into()))?;
    if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("regularised solution is not finite".into()));
    }
    Ok(g)
}

/// Assembled system for one trial value.
#[derive(Debug, Clone)]
pub struct RgSystem {
    pub lambda: C,
    pub z: [f64; 2],
    /// `n_sources x n_directions`.
    pub a: DMatrix<C>,
    pub f: DVector<C>,
}

/// Everything that does not depend on `lambda`.
pub struct RgContext<'a> {
    pub data: &'a CauchyData,
    pub aux: AuxSeries,
    pub z: [f64; 2],
    pub directions: Vec<f64>,
    /// Plane-wave traces and fluxes times receiver and direction weights,
    /// `n_receivers x n_directions`, so that `A g` discretises the Herglotz integral.
    ew: DMatrix<C>,
    efw: DMatrix<C>,
    /// Weighted `Phi_z` and `d_nu Phi_z` at the receivers.
    phi_w: Vec<C>,
    dphi_w: Vec<C>,
    u: DMatrix<C>,
    dnu: DMatrix<C>,
}

impl<'a> RgContext<'a> {
    pub fn new(data: &'a CauchyData, z: [f64; 2], n_directions: usize) -> Result<Self, Error> {
        if z[0].hypot(z[1]) >= data.gamma_radius {
            return Err(Error::Config("sampling point must lie inside the measurement circle".into()));
        }
        if n_directions == 0 {
            return Err(Error::Config("need at least one direction".into()));
        }
        let aux = AuxSeries::new(data.k, data.gamma_radius, data.source_radius, 1e-12)?;
        let directions = crate::geometry::uniform_angles(n_directions);
        let dphi = 2.0 * std::f64::consts::PI / n_directions as f64;
        let nr = data.n_receivers();
        let ns = data.n_sources();
        let mut ew = DMatrix::zeros(nr, n_directions);
        let mut efw = DMatrix::zeros(nr, n_directions);
        let mut phi_w = Vec::with_capacity(nr);
        let mut dphi_w = Vec::with_capacity(nr);
        for i in 0..nr {
            let x = data.receiver_point(i);
            let t = data.receiver_angles[i];
            let nu = [t.cos(), t.sin()];
            let w = data.weights[i];
            for (j, &phi) in directions.iter().enumerate() {
                let (e, de) = plane_wave(data.k, phi, x, nu);
                ew[(i, j)] = e * (w * dphi);
                efw[(i, j)] = de * (w * dphi);
            }
            let g = fundamental_gradient(data.k, x, z)?;
            phi_w.push(fundamental_solution(data.k, x, z)? * w);
            dphi_w.push((g[0] * nu[0] + g[1] * nu[1]) * w);
        }
        let u = DMatrix::from_fn(ns, nr, |l, i| data.u[l][i]);
        let dnu = DMatrix::from_fn(ns, nr, |l, i| data.dnu[l][i]);
        Ok(Self {
            data,
            aux,
            z,
            directions,
            ew,
            efw,
            phi_w,
            dphi_w,
            u,
            dnu,
        })
    }

    pub fn system(&self, lambda: C) -> Result<RgSystem, Error> {
        let ul = self.aux.traces(lambda, &self.data.source_angles, &self.data.receiver_angles)?;
        let (ns, nr) = (self.u.nrows(), self.u.ncols());
        let ul = DMatrix::from_fn(ns, nr, |l, i| ul[l][i]);
        let diff = &ul - &self.u;
        let ddiff = ul.map(|v| -lambda * v) - &self.dnu;
        let a = &diff * &self.efw - &ddiff * &self.ew;
        let rhs: DVector<C> = DVector::from_fn(nr, |i, _| self.dphi_w[i] + lambda * self.phi_w[i]);
        let f = &ul * rhs;
        Ok(RgSystem { lambda, z: self.z, a, f })
    }

    /// `||g_lambda||`, or `None` when the auxiliary problem is resonant.
    pub fn indicator(&self, lambda: C, alpha: f64, form: TikhonovForm) -> Option<f64> {
        let sys = self.system(lambda).ok()?;
        let g = tikhonov(&sys.a, &sys.f, alpha, form).ok()?;
        Some(g.norm())
    }
}

/// Uniform grid of trial values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    Interval { a: f64, b: f64, step: f64 },
    Rect { re0: f64, re1: f64, im0: f64, im1: f64, step: f64 },
}

impl Grid {
    fn count(lo: f64, hi: f64, step: f64) -> usize {
        ((hi - lo) / step + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = match *self {
            Grid::Interval { a, b, step } => step > 0.0 && b >= a && a.is_finite() && b.is_finite(),
            Grid::Rect { re0, re1, im0, im1, step } => {
                step > 0.0 && re1 >= re0 && im1 >= im0 && [re0, re1, im0, im1].iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid grid {self:?}")))
        }
    }

    /// `(n_re, n_im)`; `n_im = 1` for intervals.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Grid::Interval { a, b, step } => (Self::count(a, b, step), 1),
            Grid::Rect { re0, re1, im0, im1, step } => (Self::count(re0, re1, step), Self::count(im0, im1, step)),
        }
    }

    pub fn step(&self) -> f64 {
        match *self {
            Grid::Interval { step, .. } | Grid::Rect { step, .. } => step,
        }
    }

    /// Points ordered with the real index fastest.
    pub fn points(&self) -> Vec<C> {
        let (nre, nim) = self.dims();
        let (re0, im0, step) = match *self {
            Grid::Interval { a, step, .. } => (a, 0.0, step),
            Grid::Rect { re0, im0, step, .. } => (re0, im0, step),
        };
        let mut out = Vec::with_capacity(nre * nim);
        for q in 0..nim {
            for p in 0..nre {
                out.push(C::new(re0 + step * p as f64, im0 + step * q as f64));
            }
        }
        out
    }

    pub fn bounds(&self) -> SearchRect {
        match *self {
            Grid::Interval { a, b, step } => SearchRect::real_interval(a, b, step / 2.0),
            Grid::Rect { re0, re1, im0, im1, .. } => SearchRect::new(re0, re1, im0, im1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub grid: Grid,
    pub points: Vec<C>,
    /// `None` where the auxiliary problem was resonant.
    pub values: Vec<Option<f64>>,
    pub alpha: f64,
    pub z: [f64; 2],
}

impl IndicatorField {
    pub fn valid_fraction(&self) -> f64 {
        self.values.iter().filter(|v| v.is_some()).count() as f64 / self.values.len().max(1) as f64
    }

    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.values.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().flatten().copied().reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re_lambda,im_lambda,g_norm,valid\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            let _ = match v {
                Some(v) => writeln!(s, "{:e},{:e},{:e},1", p.re, p.im, v),
                None => writeln!(s, "{:e},{:e},NaN,0", p.re, p.im),
            };
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub alpha: f64,
    pub z: [f64; 2],
    /// Tried when the field at `z` shows no contrast.
    pub fallback_z: [f64; 2],
    pub n_directions: usize,
    pub form: TikhonovForm,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            alpha: 1e-5,
            z: [0.2, 0.6],
            fallback_z: [-0.3, -0.4],
            n_directions: 100,
            form: TikhonovForm::Standard,
        }
    }
}

/// Indicator over the grid at one sampling point.
pub fn sweep_at(data: &CauchyData, grid: &Grid, z: [f64; 2], opts: &SweepOptions) -> Result<IndicatorField, Error> {
    grid.validate()?;
    let ctx = RgContext::new(data, z, opts.n_directions)?;
    let points = grid.points();
    let values = points.par_iter().map(|&l| ctx.indicator(l, opts.alpha, opts.form)).collect();
    Ok(IndicatorField {
        grid: *grid,
        points,
        values,
        alpha: opts.alpha,
        z,
    })
}

/// Indicator over the grid, switching to the fallback sampling point when the
/// field has max/median below 2.
pub fn sweep(data: &CauchyData, grid: &Grid, opts: &SweepOptions) -> Result<IndicatorField, Error> {
    let field = sweep_at(data, grid, opts.z, opts)?;
    let contrast = match (field.max(), field.median()) {
        (Some(m), Some(med)) if med > 0.0 => m / med,
        _ => 0.0,
    };
    if contrast < 2.0 {
        return sweep_at(data, grid, opts.fallback_z, opts);
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub lambda: C,
    pub value: f64,
}

/// Strict local maxima (two neighbours on intervals, eight on rectangles)
/// exceeding `threshold` times the median.
pub fn detect_peaks(field: &IndicatorField, threshold: f64) -> Result<Vec<Peak>, Error> {
    if field.valid_fraction() < 0.9 {
        return Err(Error::Numerical(format!(
            "indicator valid on only {:.0}% of the grid",
            100.0 * field.valid_fraction()
        )));
    }
    let Some(median) = field.median() else {
        return Ok(Vec::new());
    };
    let (nre, nim) = field.grid.dims();
    let at = |p: isize, q: isize| -> Option<f64> {
        if p < 0 || q < 0 || p >= nre as isize || q >= nim as isize {
            return None;
        }
        field.values[q as usize * nre + p as usize]
    };
    let mut peaks = Vec::new();
    for q in 0..nim as isize {
        for p in 0..nre as isize {
            let Some(v) = at(p, q) else { continue };
            if !(v > threshold * median) {
                continue;
            }
            let mut is_max = true;
            for dq in -1..=1 {
                for dp in -1..=1 {
                    if (dp, dq) == (0, 0) || (nim == 1 && dq != 0) {
                        continue;
                    }
                    if let Some(w) = at(p + dp, q + dq) {
                        if w >= v {
                            is_max = false;
                        }
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    lambda: field.points[q as usize * nre + p as usize],
                    value: v,
                });
            }
        }
    }
    Ok(peaks)
}

pub fn peaks_to_set(peaks: &[Peak], grid: &Grid) -> EigenvalueSet {
    EigenvalueSet::build(peaks.iter().map(|p| (p.lambda, 0.0)).collect(), Method::Rg, grid.bounds())
}

pub fn peaks_to_csv(peaks: &[Peak]) -> String {
    let mut s = String::from("re_lambda,im_lambda,g_norm\n");
    for p in peaks {
        let _ = writeln!(s, "{:e},{:e},{:e}", p.lambda.re, p.lambda.im, p.value);
    }
    s
}

/// Reads a peaks table: optional header, then `re,im[,g_norm]` per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_peaks_csv(text: &str) -> Result<Vec<Peak>, ParseError> {
    let mut out = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let is_header = first && cols[0].parse::<f64>().is_err() && cols[0].starts_with(|c: char| c.is_ascii_alphabetic());
        first = false;
        if is_header {
            continue;
        }
        if cols.len() < 2 || cols.len() > 3 {
            return Err(ParseError::new(ln, format!("expected 2 or 3 columns, found {}", cols.len())));
        }
        let num = |s: &str| -> Result<f64, ParseError> {
            let v: f64 = s.parse().map_err(|_| ParseError::new(ln, format!("bad number `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ParseError::new(ln, format!("non-finite value `{s}`")))
            }
        };
        let re = num(cols[0])?;
        let im = num(cols[1])?;
        let value = if cols.len() == 3 { num(cols[2])? } else { 0.0 };
        out.push(Peak {
            lambda: C::new(re, im),
            value,
        });
    }
    Ok(out)
}

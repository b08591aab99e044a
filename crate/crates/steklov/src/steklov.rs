//! Steklov eigenvalues of the medium: `Delta w + k^2 n w = 0` in `B`,
//! `d_nu w + lambda w = 0` on the measurement circle.
//!
//! The discrete pencil is `(K - k^2 M_n) w = -lambda B w` where `B` is the
//! boundary mass. Three routes: a closed form for a homogeneous concentric
//! disc, a dense solve of the boundary Schur complement, and a contour-integral
//! projection method working on the sparse pencil.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, SolveError};
use crate::fem;
use crate::geometry::{Coefficient, Shape};
use crate::mesh::{self, Mesh, MeshRequest};
use crate::sparse::{norm, LuAnalysis, SparseLu, SparseMatrix};
use crate::special::{bessel_j_complex, bessel_jp_complex, CylinderValues};

type C = Complex64;

const ONE: C = C::new(1.0, 0.0);
const ZERO: C = C::new(0.0, 0.0);

/// Closed axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl SearchRect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Self {
            re: (re0.min(re1), re0.max(re1)),
            im: (im0.min(im1), im0.max(im1)),
        }
    }

    /// Thin rectangle around a real interval.
    pub fn real_interval(a: f64, b: f64, half_height: f64) -> Self {
        Self::new(a, b, -half_height, half_height)
    }

    pub fn contains(&self, z: C) -> bool {
        z.re >= self.re.0 && z.re <= self.re.1 && z.im >= self.im.0 && z.im <= self.im.1
    }

    pub fn width(&self) -> f64 {
        self.re.1 - self.re.0
    }

    pub fn height(&self) -> f64 {
        self.im.1 - self.im.0
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn inflate(&self, margin: f64) -> Self {
        Self::new(self.re.0 - margin, self.re.1 + margin, self.im.0 - margin, self.im.1 + margin)
    }

    /// Two halves across the longer side. The cut is nudged off-centre so
    /// that symmetric spectra do not sit on it.
    pub fn bisect(&self) -> (Self, Self) {
        const CUT: f64 = 0.5123;
        if self.width() >= self.height() {
            let m = self.re.0 + CUT * self.width();
            (
                Self::new(self.re.0, m, self.im.0, self.im.1),
                Self::new(m, self.re.1, self.im.0, self.im.1),
            )
        } else {
            let m = self.im.0 + CUT * self.height();
            (
                Self::new(self.re.0, self.re.1, self.im.0, m),
                Self::new(self.re.0, self.re.1, m, self.im.1),
            )
        }
    }

    /// Smallest rectangle containing the points, inflated by `margin`.
    pub fn bounding(points: &[C], margin: f64) -> Option<Self> {
        let first = points.first()?;
        let mut r = Self::new(first.re, first.re, first.im, first.im);
        for p in points {
            r.re = (r.re.0.min(p.re), r.re.1.max(p.re));
            r.im = (r.im.0.min(p.im), r.im.1.max(p.im));
        }
        Some(r.inflate(margin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bessel,
    Schur,
    Sim,
    /// Peaks of the reciprocity-gap indicator.
    Rg,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bessel => "bessel",
            Method::Schur => "schur",
            Method::Sim => "sim",
            Method::Rg => "rg",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bessel" => Ok(Method::Bessel),
            "schur" | "schur-dense" => Ok(Method::Schur),
            "sim" => Ok(Method::Sim),
            "rg" => Ok(Method::Rg),
            other => Err(Error::Config(format!("unknown eigen method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteklovEigenvalue {
    pub value: C,
    /// Relative residual of the eigenpair (zero for the closed form).
    pub residual: f64,
    /// Number of listed eigenvalues in the same cluster, this one included.
    pub multiplicity: usize,
}

/// Eigenvalues found in a search rectangle, each listed once per multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueSet {
    pub values: Vec<SteklovEigenvalue>,
    pub method: Method,
    pub region: SearchRect,
}

const CLUSTER_TOL: f64 = 1e-3;

impl EigenvalueSet {
    pub(crate) fn build(mut vals: Vec<(C, f64)>, method: Method, region: SearchRect) -> Self {
        vals.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
        let values = vals
            .iter()
            .map(|&(v, r)| SteklovEigenvalue {
                value: v,
                residual: r,
                multiplicity: vals.iter().filter(|w| (w.0 - v).norm() < CLUSTER_TOL * v.norm().max(1.0)).count(),
            })
            .collect();
        Self { values, method, region }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn complex_values(&self) -> Vec<C> {
        self.values.iter().map(|e| e.value).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re_lambda,im_lambda,residual,method\n");
        for e in &self.values {
            s.push_str(&format!("{:e},{:e},{:e},{}\n", e.value.re, e.value.im, e.residual, self.method));
        }
        s
    }
}

/// One separated mode of the concentric-disc problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselMode {
    pub order: u32,
    /// `None` when the radial solution vanishes on the circle (the wavenumber
    /// is a Dirichlet eigenvalue for this mode).
    pub value: Option<C>,
    pub multiplicity: usize,
}

/// Trace `w_m(R)` and radial derivative `w_m'(R)` of the separated solution
/// that equals `J_m(k sqrt(n) r)` in the core, for `m = 0..=max_order`.
pub fn radial_traces(n: C, core_radius: f64, outer_radius: f64, k: f64, max_order: u32) -> Result<Vec<(C, C)>, Error> {
    if !(core_radius > 0.0 && outer_radius > core_radius && k > 0.0) {
        return Err(Error::Config("closed form needs 0 < core radius < outer radius".into()));
    }
    let kappa = k * n.sqrt();
    let za = kappa * core_radius;
    let nmax = max_order as usize + 1;
    let inner = CylinderValues::new(nmax, k * core_radius)?;
    let outer = CylinderValues::new(nmax, k * outer_radius)?;
    let real_core = if n.im == 0.0 && n.re > 0.0 {
        Some(CylinderValues::new(nmax, za.re)?)
    } else {
        None
    };
    let wronskian = 2.0 / (std::f64::consts::PI * k * core_radius);
    let mut out = Vec::with_capacity(nmax);
    for m in 0..=max_order as i32 {
        let (jc, jpc) = match &real_core {
            Some(cv) => (C::new(cv.j(m), 0.0), C::new(cv.jp(m), 0.0)),
            None => (bessel_j_complex(m, za)?, bessel_jp_complex(m, za)?),
        };
        // Continue J_m(kappa r) across r = a as c1 J_m(k r) + c2 Y_m(k r).
        let c1 = (jc * k * inner.yp(m) - kappa * jpc * inner.y(m)) / (k * wronskian);
        let c2 = (kappa * jpc * inner.j(m) - jc * k * inner.jp(m)) / (k * wronskian);
        let w = c1 * outer.j(m) + c2 * outer.y(m);
        let dw = k * (c1 * outer.jp(m) + c2 * outer.yp(m));
        out.push((w, dw));
    }
    Ok(out)
}

/// Closed-form Steklov eigenvalues for a homogeneous core of radius
/// `core_radius` and index `n` inside the disc of radius `outer_radius`.
pub fn bessel_modes(n: C, core_radius: f64, outer_radius: f64, k: f64, max_order: u32) -> Result<Vec<BesselMode>, Error> {
    let traces = radial_traces(n, core_radius, outer_radius, k, max_order)?;
    Ok(traces
        .into_iter()
        .enumerate()
        .map(|(m, (w, dw))| BesselMode {
            order: m as u32,
            value: if w.norm() <= 1e-14 * dw.norm() { None } else { Some(-dw / w) },
            multiplicity: if m == 0 { 1 } else { 2 },
        })
        .collect())
}

/// True when no mode `m <= max_order` has a vanishing normal derivative for
/// any core index sampled on `c_values` (sign changes of `w_m'(R)` between
/// neighbouring samples indicate a Neumann eigenvalue in between).
pub fn neumann_free(c_values: &[f64], core_radius: f64, outer_radius: f64, k: f64, max_order: u32) -> Result<bool, Error> {
    let mut prev: Option<Vec<f64>> = None;
    for &c in c_values {
        let derivs: Vec<f64> = radial_traces(C::new(c, 0.0), core_radius, outer_radius, k, max_order)?
            .iter()
            .map(|(_, dw)| dw.re)
            .collect();
        if derivs.contains(&0.0) {
            return Ok(false);
        }
        if let Some(p) = &prev {
            if p.iter().zip(&derivs).any(|(a, b)| a.signum() != b.signum()) {
                return Ok(false);
            }
        }
        prev = Some(derivs);
    }
    Ok(true)
}

/// Eigenvalue with the largest negative real part, if any.
pub fn largest_negative(values: &[C]) -> Option<C> {
    values.iter().filter(|v| v.re < 0.0).max_by(|a, b| a.re.total_cmp(&b.re)).copied()
}

/// Closed-form eigenvalues inside `region`, listed with multiplicity.
pub fn bessel_eigenvalues(n: C, core_radius: f64, outer_radius: f64, k: f64, region: &SearchRect) -> Result<EigenvalueSet, Error> {
    let modes = bessel_modes(n, core_radius, outer_radius, k, 60)?;
    let mut vals = Vec::new();
    for m in modes {
        if let Some(v) = m.value {
            if region.contains(v) {
                for _ in 0..m.multiplicity {
                    vals.push((v, 0.0));
                }
            }
        }
    }
    Ok(EigenvalueSet::build(vals, Method::Bessel, *region))
}

/// Discrete Steklov pencil on a mesh of the disc bounded by the measurement circle.
pub struct SteklovPencil {
    pub mesh: Mesh,
    /// `K - k^2 M_n` on all vertices.
    pub a0: SparseMatrix,
    /// Boundary mass on all vertices.
    pub b: SparseMatrix,
    analysis: LuAnalysis,
}

impl SteklovPencil {
    pub fn new(shape: Shape, coeff: &Coefficient, k: f64, gamma_radius: f64, h: f64) -> Result<Self, Error> {
        coeff.validate(&shape)?;
        let mesh = mesh::generate(&MeshRequest::interior(shape, gamma_radius, h))?;
        Self::on_mesh(mesh, coeff, k)
    }

    pub fn on_mesh(mesh: Mesh, coeff: &Coefficient, k: f64) -> Result<Self, Error> {
        let pat = fem::mesh_pattern(&mesh);
        let stiff = fem::stiffness(&mesh, &pat, None);
        let mass = fem::index_mass(&mesh, &pat, coeff, None);
        let a0 = SparseMatrix::combine(&[(ONE, &stiff), (C::new(-k * k, 0.0), &mass)]);
        let b = fem::boundary_mass(&mesh, &pat);
        Self::from_operators(mesh, a0, b)
    }

    /// Pencil from preassembled operators sharing the mesh pattern.
    pub fn from_operators(mesh: Mesh, a0: SparseMatrix, b: SparseMatrix) -> Result<Self, Error> {
        if mesh.gamma_ring.is_empty() {
            return Err(Error::Config("mesh has no measurement circle".into()));
        }
        assert!(a0.same_pattern(&b), "operators must share a pattern");
        let analysis = LuAnalysis::new(&a0.pattern)?;
        Ok(Self { mesh, a0, b, analysis })
    }

    pub fn n(&self) -> usize {
        self.a0.n()
    }

    /// `A0 + lambda B`.
    pub fn at(&self, lambda: C) -> SparseMatrix {
        SparseMatrix::combine(&[(ONE, &self.a0), (lambda, &self.b)])
    }

    pub fn factor(&self, lambda: C) -> Result<SparseLu, SolveError> {
        SparseLu::with_analysis(&self.analysis, &self.at(lambda))
    }

    /// `||(A0 + lambda B) w|| / (||A0 w|| + |lambda| ||B w||)`.
    pub fn residual(&self, lambda: C, w: &[C]) -> f64 {
        let aw = self.a0.matvec(w);
        let bw = self.b.matvec(w);
        let r: Vec<C> = aw.iter().zip(&bw).map(|(a, b)| a + lambda * b).collect();
        norm(&r) / (norm(&aw) + lambda.norm() * norm(&bw)).max(f64::MIN_POSITIVE)
    }

    /// Transpose Rayleigh quotient `-(w^T A0 w) / (w^T B w)`.
    pub fn rayleigh(&self, w: &[C]) -> C {
        let aw = self.a0.matvec(w);
        let bw = self.b.matvec(w);
        let num: C = w.iter().zip(&aw).map(|(x, y)| x * y).sum();
        let den: C = w.iter().zip(&bw).map(|(x, y)| x * y).sum();
        -num / den
    }

    fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let gamma = self.mesh.gamma_ring.clone();
        let mut on = vec![false; self.n()];
        for &g in &gamma {
            on[g] = true;
        }
        let interior = (0..self.n()).filter(|&v| !on[v]).collect();
        (gamma, interior)
    }
}

/// Eigenpair with the eigenvector on all vertices.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: C,
    pub vector: Vec<C>,
    pub residual: f64,
}

/// Dense solve of the boundary Schur complement
/// `S = A_GG - A_GI A_II^{-1} A_IG`, `S g = -lambda B_GG g`.
pub fn schur_dense(pencil: &SteklovPencil, region: &SearchRect) -> Result<EigenvalueSet, Error> {
    let pairs = schur_dense_pairs(pencil, region, false)?;
    let vals = pairs.into_iter().map(|p| (p.value, p.residual)).collect();
    Ok(EigenvalueSet::build(vals, Method::Schur, *region))
}

/// As [`schur_dense`], returning eigenvectors when `vectors` is set.
pub fn schur_dense_pairs(pencil: &SteklovPencil, region: &SearchRect, vectors: bool) -> Result<Vec<Eigenpair>, Error> {
    let (gamma, interior) = pencil.split();
    let ng = gamma.len();
    let mut pos = vec![usize::MAX; pencil.n()];
    for (i, &v) in interior.iter().enumerate() {
        pos[v] = i;
    }
    let a_ii = pencil.a0.restrict(&interior);
    let lu = SparseLu::new(&a_ii)?;
    // Columns of A_IG (= rows of A_GI by symmetry).
    let cols: Vec<Vec<C>> = gamma
        .iter()
        .map(|&g| {
            let mut c = vec![ZERO; interior.len()];
            for (j, a) in pencil.a0.row_entries(g) {
                if pos[j] != usize::MAX {
                    c[pos[j]] = a;
                }
            }
            c
        })
        .collect();
    let x = lu.solve_columns(&cols)?;
    let mut s = DMatrix::<C>::zeros(ng, ng);
    for (p, &g) in gamma.iter().enumerate() {
        for (q, &h) in gamma.iter().enumerate() {
            let mut v = pencil.a0.get(g, h);
            for (j, a) in pencil.a0.row_entries(g) {
                if pos[j] != usize::MAX {
                    v -= a * x[q][pos[j]];
                }
            }
            s[(p, q)] = v;
        }
    }
    let bgg = DMatrix::<f64>::from_fn(ng, ng, |p, q| pencil.b.get(gamma[p], gamma[q]).re);
    let chol = bgg
        .cholesky()
        .ok_or_else(|| SolveError::Eigen("boundary mass is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| SolveError::Eigen("boundary mass factor is singular".into()))?;
    let linv_c = linv.map(|v| C::new(v, 0.0));
    let c = &linv_c * &s * linv_c.transpose();

    let mut found: Vec<(C, Option<DVector<C>>)> = Vec::new();
    let real = c.iter().all(|v| v.im == 0.0);
    if real {
        let cr = c.map(|v| v.re);
        let cr = (&cr + cr.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(cr);
        for (i, &mu) in eig.eigenvalues.iter().enumerate() {
            let lambda = C::new(-mu, 0.0);
            if region.contains(lambda) {
                let y = eig.eigenvectors.column(i).map(|v| C::new(v, 0.0));
                found.push((lambda, Some(y)));
            }
        }
    } else {
        let eigs = nalgebra::Schur::new(c.clone())
            .eigenvalues()
            .ok_or_else(|| SolveError::Eigen("complex Schur iteration did not converge".into()))?;
        for &mu in eigs.iter() {
            let lambda = -mu;
            if region.contains(lambda) {
                found.push((lambda, None));
            }
        }
        let mus: Vec<C> = found.iter().map(|f| -f.0).collect();
        for (f, y) in found.iter_mut().zip(dense_vectors(&c, &mus)) {
            f.1 = Some(y);
        }
    }
    let lt_inv = linv_c.transpose();
    let mut out = Vec::with_capacity(found.len());
    for (lambda, y) in found {
        let y = y.unwrap();
        let gvec = &lt_inv * y;
        let mut w = vec![ZERO; pencil.n()];
        for (p, &g) in gamma.iter().enumerate() {
            w[g] = gvec[p];
        }
        for (i, &v) in interior.iter().enumerate() {
            let mut acc = ZERO;
            for q in 0..ng {
                acc -= x[q][i] * gvec[q];
            }
            w[v] = acc;
        }
        let residual = pencil.residual(lambda, &w);
        out.push(Eigenpair {
            value: lambda,
            vector: if vectors { w } else { Vec::new() },
            residual,
        });
    }
    Ok(out)
}

fn dense_null_vector(c: &DMatrix<C>, mu: C, against: &[DVector<C>]) -> DVector<C> {
    let n = c.nrows();
    let shift = mu + C::new(1e-10 * mu.norm().max(1.0), 1e-10 * mu.norm().max(1.0));
    let m = c - DMatrix::<C>::identity(n, n) * shift;
    let lu = m.lu();
    let mut y = DVector::<C>::from_fn(n, |i, _| C::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            y = z;
        }
        // Keep copies of a repeated eigenvalue independent.
        for a in against {
            let proj = a.dotc(&y) / a.dotc(a);
            y -= a * proj;
        }
        let ny = y.norm();
        if ny > 0.0 && ny.is_finite() {
            y /= C::new(ny, 0.0);
        }
    }
    y
}

/// Eigenvectors for a list of eigenvalues of `c`, independent within clusters.
fn dense_vectors(c: &DMatrix<C>, mus: &[C]) -> Vec<DVector<C>> {
    let mut out: Vec<DVector<C>> = Vec::with_capacity(mus.len());
    for (i, &mu) in mus.iter().enumerate() {
        let near: Vec<DVector<C>> = (0..i)
            .filter(|&j| (mus[j] - mu).norm() < CLUSTER_TOL * mu.norm().max(1.0))
            .map(|j| out[j].clone())
            .collect();
        out.push(dense_null_vector(c, mu, &near));
    }
    out
}

/// Options for the contour-integral projection method.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Number of random probe vectors.
    pub probes: usize,
    /// Regions whose indicator falls below this are empty.
    pub indicator_tol: f64,
    /// Relative singular-value cut for the projected block.
    pub rank_tol: f64,
    /// Smallest rectangle diameter before subdivision stops.
    pub min_diameter: f64,
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            nodes_per_panel: 8,
            probes: 8,
            indicator_tol: 0.1,
            rank_tol: 1e-5,
            min_diameter: 1e-4,
            residual_tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

/// Diagnostics of one visited rectangle.
#[derive(Debug, Clone)]
pub struct SimRegionReport {
    pub rect: SearchRect,
    pub depth: usize,
    pub indicator: f64,
    pub rank: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub eigenvalues: EigenvalueSet,
    pub pairs: Vec<Eigenpair>,
    pub regions: Vec<SimRegionReport>,
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Eigenvalues of the Jacobi matrix (Golub-Welsch).
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Contour nodes `z_q` and weights `dz_q / (2 pi i)` for the rectangle boundary,
/// counterclockwise, with panels no longer than the short side.
fn contour(rect: &SearchRect, nodes_per_panel: usize) -> Vec<(C, C)> {
    let (x, w) = gauss_legendre(nodes_per_panel);
    let corners = [
        C::new(rect.re.0, rect.im.0),
        C::new(rect.re.1, rect.im.0),
        C::new(rect.re.1, rect.im.1),
        C::new(rect.re.0, rect.im.1),
    ];
    let short = rect.width().min(rect.height()).max(1e-300);
    let two_pi_i = C::new(0.0, 2.0 * std::f64::consts::PI);
    let mut out = Vec::new();
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let panels = (((b - a).norm() / short).ceil() as usize).clamp(1, 64);
        for p in 0..panels {
            let pa = a + (b - a) * (p as f64 / panels as f64);
            let pb = a + (b - a) * ((p + 1) as f64 / panels as f64);
            let half = (pb - pa) / 2.0;
            let mid = (pa + pb) / 2.0;
            for (xi, wi) in x.iter().zip(&w) {
                out.push((mid + half * *xi, half * *wi / two_pi_i));
            }
        }
    }
    out
}

/// `(1 / 2 pi i) \oint (A0 + z B)^{-1} B F dz` for the columns of `f`.
fn project(pencil: &SteklovPencil, nodes: &[(C, C)], f: &[Vec<C>]) -> Result<Vec<Vec<C>>, Error> {
    let bf: Vec<Vec<C>> = f.iter().map(|v| pencil.b.matvec(v)).collect();
    let mut acc = vec![vec![ZERO; pencil.n()]; f.len()];
    for &(z, w) in nodes {
        let lu = pencil.factor(z)?;
        let sol = lu.solve_columns(&bf)?;
        for (a, s) in acc.iter_mut().zip(&sol) {
            for (ai, si) in a.iter_mut().zip(s) {
                *ai += w * si;
            }
        }
    }
    Ok(acc)
}

/// Orthonormal basis of the dominant column space of `y` and its singular values.
fn dominant_basis(y: &[Vec<C>], rank_tol: f64) -> (Vec<Vec<C>>, Vec<f64>) {
    let n = y[0].len();
    let p = y.len();
    let m = DMatrix::<C>::from_fn(n, p, |i, j| y[j][i]);
    let svd = m.svd(true, false);
    let u = svd.u.unwrap();
    let s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let basis = idx
        .iter()
        .filter(|&&i| smax > 0.0 && s[i] > rank_tol * smax)
        .map(|&i| u.column(i).iter().cloned().collect())
        .collect();
    let mut sorted: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
    sorted.truncate(p);
    (basis, sorted)
}

fn dot_t(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_h(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Rayleigh-Ritz on `basis`; returns Ritz values and vectors.
fn rayleigh_ritz(pencil: &SteklovPencil, basis: &[Vec<C>]) -> Result<Vec<(C, Vec<C>)>, Error> {
    let r = basis.len();
    let av: Vec<Vec<C>> = basis.iter().map(|v| pencil.a0.matvec(v)).collect();
    let bv: Vec<Vec<C>> = basis.iter().map(|v| pencil.b.matvec(v)).collect();
    let ah = DMatrix::<C>::from_fn(r, r, |i, j| dot_h(&basis[i], &av[j]));
    let bh = DMatrix::<C>::from_fn(r, r, |i, j| dot_h(&basis[i], &bv[j]));
    let Some(binv) = bh.clone().try_inverse() else {
        return Ok(Vec::new());
    };
    let m = -(binv * ah);
    let eigs = nalgebra::Schur::new(m.clone())
        .eigenvalues()
        .ok_or_else(|| SolveError::Eigen("reduced eigenproblem did not converge".into()))?;
    let lambdas: Vec<C> = eigs.iter().cloned().collect();
    let vectors = dense_vectors(&m, &lambdas);
    let mut out = Vec::with_capacity(r);
    for (&lambda, y) in lambdas.iter().zip(vectors) {
        let mut w = vec![ZERO; pencil.n()];
        for (k, v) in basis.iter().enumerate() {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi += y[k] * vi;
            }
        }
        out.push((lambda, w));
    }
    Ok(out)
}

/// Inverse iteration with the transpose Rayleigh quotient.
fn polish(pencil: &SteklovPencil, mut lambda: C, mut w: Vec<C>, tol: f64) -> Result<(C, Vec<C>, f64), Error> {
    let mut res = pencil.residual(lambda, &w);
    for _ in 0..6 {
        if res <= tol * 1e-3 {
            break;
        }
        let lu = match pencil.factor(lambda) {
            Ok(lu) => lu,
            Err(_) => break,
        };
        let Ok(next) = lu.solve(&pencil.b.matvec(&w)) else {
            break;
        };
        let nn = norm(&next);
        if !(nn > 0.0 && nn.is_finite()) {
            break;
        }
        let next: Vec<C> = next.iter().map(|v| v / nn).collect();
        let mu = pencil.rayleigh(&next);
        let r = pencil.residual(mu, &next);
        if r < res {
            lambda = mu;
            w = next;
            res = r;
        } else {
            break;
        }
    }
    Ok((lambda, w, res))
}

/// Contour-integral projection method with recursive bisection.
pub fn sim(pencil: &SteklovPencil, region: &SearchRect, opts: &SimOptions) -> Result<SimOutput, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes: Vec<Vec<C>> = (0..opts.probes)
        .map(|_| {
            (0..pencil.n())
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    C::new(a, b)
                })
                .collect()
        })
        .collect();

    let mut stack = vec![(*region, 0usize)];
    let mut reports = Vec::new();
    let mut accepted: Vec<Eigenpair> = Vec::new();
    while let Some((rect, depth)) = stack.pop() {
        let nodes = contour(&rect, opts.nodes_per_panel);
        let y = project(pencil, &nodes, &probes)?;
        let yhat: Vec<Vec<C>> = y
            .iter()
            .map(|v| {
                let n = norm(v);
                if n > 0.0 {
                    v.iter().map(|x| x / n).collect()
                } else {
                    v.clone()
                }
            })
            .collect();
        let z = project(pencil, &nodes, &yhat)?;
        let indicator = z.iter().map(|v| norm(v)).fold(0.0, f64::max);
        if indicator < opts.indicator_tol {
            reports.push(SimRegionReport {
                rect,
                depth,
                indicator,
                rank: 0,
                accepted: 0,
            });
            continue;
        }
        let (basis, _sv) = dominant_basis(&z, opts.rank_tol);
        let rank = basis.len();
        if rank >= opts.probes && rect.diameter() > opts.min_diameter {
            let (a, b) = rect.bisect();
            reports.push(SimRegionReport {
                rect,
                depth,
                indicator,
                rank,
                accepted: 0,
            });
            stack.push((b, depth + 1));
            stack.push((a, depth + 1));
            continue;
        }
        let mut count = 0;
        for (lambda, w) in rayleigh_ritz(pencil, &basis)? {
            if !rect.inflate(1e-9).contains(lambda) {
                continue;
            }
            let (lambda, w, res) = polish(pencil, lambda, w, opts.residual_tol)?;
            if res > opts.residual_tol || !rect.inflate(1e-9).contains(lambda) {
                continue;
            }
            let nw = norm(&w);
            let w: Vec<C> = w.iter().map(|v| v / nw).collect();
            let duplicate = accepted
                .iter()
                .any(|p| (p.value - lambda).norm() < 1e-8 * lambda.norm().max(1.0) && dot_h(&p.vector, &w).norm() > 1.0 - 1e-6);
            if !duplicate {
                accepted.push(Eigenpair {
                    value: lambda,
                    vector: w,
                    residual: res,
                });
                count += 1;
            }
        }
        reports.push(SimRegionReport {
            rect,
            depth,
            indicator,
            rank,
            accepted: count,
        });
    }
    let vals = accepted
        .iter()
        .filter(|p| region.contains(p.value))
        .map(|p| (p.value, p.residual))
        .collect();
    Ok(SimOutput {
        eigenvalues: EigenvalueSet::build(vals, Method::Sim, *region),
        pairs: accepted,
        regions: reports,
    })
}

/// Transpose inner product `w^T B w`, used for normalising eigenfunctions.
pub fn boundary_pairing(pencil: &SteklovPencil, w: &[C]) -> C {
    dot_t(w, &pencil.b.matvec(w))
}

/// Bounds on the shift of an eigenvalue when the index is raised by `dc` on the
/// scatterer: `k^2 dc (w,w)_D / (3 <w,w>)` and `3 k^2 dc (w,w)_D / <w,w>`.
pub fn perturbation_bounds(pencil: &SteklovPencil, w: &[C], k: f64, dc: f64) -> (f64, f64) {
    let pat = pencil.a0.pattern.clone();
    let md = fem::scatterer_mass(&pencil.mesh, &pat, &|_| ONE);
    let vol = dot_h(w, &md.matvec(w)).re;
    let bdry = dot_h(w, &pencil.b.matvec(w)).re;
    let base = k * k * dc * vol / bdry;
    (base / 3.0, 3.0 * base)
}

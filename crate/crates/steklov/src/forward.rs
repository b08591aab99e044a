//! Synthetic near-field Cauchy data: point sources on the source circle,
//! scattered fields from the absorbing-layer finite element model, and the
//! plain-text dataset format.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::error::{Error, ParseError, SolveError};
use crate::fem::{self, DofMap, Pml};
use crate::geometry::{Coefficient, Scene, Shape};
use crate::mesh::{self, Mesh, MeshRequest, Region};
use crate::sparse::{SparseLu, SparseMatrix};
use crate::special::{fundamental_gradient, fundamental_solution};

type C = Complex64;

/// Total-field traces on the measurement circle for every source.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub k: f64,
    pub gamma_radius: f64,
    pub source_radius: f64,
    pub source_angles: Vec<f64>,
    pub receiver_angles: Vec<f64>,
    /// Quadrature weight of each receiver along the circle.
    pub weights: Vec<f64>,
    /// `u[l][j]`: field of source `l` at receiver `j`.
    pub u: Vec<Vec<C>>,
    /// Outward normal derivative, same layout as `u`.
    pub dnu: Vec<Vec<C>>,
    pub noise_level: f64,
    pub seed: u64,
    /// Noise-free copy of `(u, dnu)` kept alongside perturbed data.
    pub clean: Option<(Vec<Vec<C>>, Vec<Vec<C>>)>,
}

impl CauchyData {
    pub fn n_sources(&self) -> usize {
        self.source_angles.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receiver_angles.len()
    }

    pub fn source_point(&self, l: usize) -> [f64; 2] {
        let t = self.source_angles[l];
        [self.source_radius * t.cos(), self.source_radius * t.sin()]
    }

    pub fn receiver_point(&self, j: usize) -> [f64; 2] {
        let t = self.receiver_angles[j];
        [self.gamma_radius * t.cos(), self.gamma_radius * t.sin()]
    }

    /// Multiplies every trace value by `1 + level (xi_1 + i xi_2)` with
    /// `xi` uniform on `[-1, 1]`. Keeps the noise-free copy.
    pub fn add_noise(&mut self, level: f64, seed: u64) {
        if self.clean.is_none() {
            self.clean = Some((self.u.clone(), self.dnu.clone()));
        }
        let (u0, d0) = self.clean.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factor = || {
            let a: f64 = rng.random_range(-1.0..=1.0);
            let b: f64 = rng.random_range(-1.0..=1.0);
            C::new(1.0, 0.0) + level * C::new(a, b)
        };
        for l in 0..u0.len() {
            for j in 0..u0[l].len() {
                self.u[l][j] = u0[l][j] * factor();
                self.dnu[l][j] = d0[l][j] * factor();
            }
        }
        self.noise_level = level;
        self.seed = seed;
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "steklov-cauchy v1 {} {} {:e} {:e} {:e} {:e} {}",
            self.n_sources(),
            self.n_receivers(),
            self.k,
            self.gamma_radius,
            self.source_radius,
            self.noise_level,
            self.seed
        );
        for (t, w) in self.receiver_angles.iter().zip(&self.weights) {
            let _ = writeln!(s, "{t:e} {w:e}");
        }
        for l in 0..self.n_sources() {
            let _ = writeln!(s, "source {:e}", self.source_angles[l]);
            for j in 0..self.n_receivers() {
                let (u, d) = (self.u[l][j], self.dnu[l][j]);
                let _ = writeln!(s, "{:e} {:e} {:e} {:e}", u.re, u.im, d.re, d.im);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| ParseError::new(1, "empty dataset"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 9 || f[0] != "steklov-cauchy" || f[1] != "v1" {
            return Err(ParseError::new(ln + 1, "bad dataset header"));
        }
        let bad = |what: &str| ParseError::new(ln + 1, format!("bad {what}"));
        let ns: usize = f[2].parse().map_err(|_| bad("source count"))?;
        let nr: usize = f[3].parse().map_err(|_| bad("receiver count"))?;
        let num =
            |s: &str, what: &str| -> Result<f64, ParseError> { s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(what)) };
        let k = num(f[4], "wavenumber")?;
        let gamma_radius = num(f[5], "measurement radius")?;
        let source_radius = num(f[6], "source radius")?;
        let noise_level = num(f[7], "noise level")?;
        let seed: u64 = f[8].parse().map_err(|_| bad("seed"))?;
        if ns == 0 || nr == 0 {
            return Err(bad("counts"));
        }
        if !(k > 0.0 && gamma_radius > 0.0 && source_radius > 0.0 && noise_level >= 0.0) {
            return Err(bad("scene parameters"));
        }
        let mut receiver_angles = Vec::with_capacity(nr.min(1 << 16));
        let mut weights = Vec::with_capacity(nr.min(1 << 16));
        for _ in 0..nr {
            let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing receiver lines"))?;
            let xs = mesh::parse_floats(l, 2, ln + 1)?;
            receiver_angles.push(xs[0]);
            weights.push(xs[1]);
        }
        let mut source_angles = Vec::with_capacity(ns.min(1 << 16));
        let mut u = Vec::with_capacity(ns.min(1 << 16));
        let mut dnu = Vec::with_capacity(ns.min(1 << 16));
        for _ in 0..ns {
            let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing source block"))?;
            let theta = l
                .strip_prefix("source")
                .ok_or_else(|| ParseError::new(ln + 1, "expected `source <angle>`"))?;
            source_angles.push(mesh::parse_floats(theta, 1, ln + 1)?[0]);
            let mut ur = Vec::with_capacity(nr.min(1 << 16));
            let mut dr = Vec::with_capacity(nr.min(1 << 16));
            for _ in 0..nr {
                let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing trace lines"))?;
                let xs = mesh::parse_floats(l, 4, ln + 1)?;
                ur.push(C::new(xs[0], xs[1]));
                dr.push(C::new(xs[2], xs[3]));
            }
            u.push(ur);
            dnu.push(dr);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(ParseError::new(ln + 1, "trailing content"));
        }
        Ok(Self {
            k,
            gamma_radius,
            source_radius,
            source_angles,
            receiver_angles,
            weights,
            u,
            dnu,
            noise_level,
            seed,
            clean: None,
        })
    }
}

/// Forward model on one mesh, factorized once for all sources.
pub struct ForwardSolver {
    pub mesh: Mesh,
    pub scene: Scene,
    dofs: DofMap,
    system: SparseMatrix,
    lu: SparseLu,
    /// `(1 - n)`-weighted scatterer mass on all vertices.
    contrast: SparseMatrix,
    /// Helmholtz operator assembled over triangles inside the measurement circle.
    interior: SparseMatrix,
    gamma_mass: SparseMatrix,
    gamma_lu: SparseLu,
    /// Position in `mesh.gamma_ring` of each receiver.
    receiver_slots: Vec<usize>,
}

impl ForwardSolver {
    pub fn new(shape: Shape, coeff: &Coefficient, scene: &Scene, h: f64) -> Result<Self, Error> {
        scene.validate(&shape)?;
        coeff.validate(&shape)?;
        let mesh = mesh::generate(&MeshRequest::scene(shape, scene, h))?;
        Self::on_mesh(mesh, coeff, scene)
    }

    pub fn on_mesh(mesh: Mesh, coeff: &Coefficient, scene: &Scene) -> Result<Self, Error> {
        let nr = scene.n_receivers;
        if mesh.gamma_ring.is_empty() || !mesh.gamma_ring.len().is_multiple_of(nr) {
            return Err(Error::Config(
                "measurement circle segments must be a multiple of the receiver count".into(),
            ));
        }
        let pml = Pml::from_scene(scene);
        let k2 = C::new(scene.k * scene.k, 0.0);
        let pattern = fem::mesh_pattern(&mesh);
        let stiff = fem::stiffness(&mesh, &pattern, Some(&pml));
        let mass = fem::index_mass(&mesh, &pattern, coeff, Some(&pml));
        let full = SparseMatrix::combine(&[(C::new(1.0, 0.0), &stiff), (-k2, &mass)]);
        let dofs = DofMap::new(mesh.n_vertices(), &mesh.dirichlet_vertices());
        let system = full.restrict(&dofs.free);
        let lu = SparseLu::new(&system)?;

        let contrast = fem::scatterer_mass(&mesh, &pattern, &|x| C::new(1.0, 0.0) - coeff.inside(x));
        let radius = scene.gamma_radius;
        let inside = |t: usize| {
            let c = mesh.centroid(t);
            mesh.regions[t] != Region::Pml && c[0].hypot(c[1]) < radius
        };
        let stiff_b = fem::stiffness_where(&mesh, &pattern, None, &inside);
        let mass_b = fem::mass(&mesh, &pattern, None, &|t, x| {
            inside(t).then(|| match mesh.regions[t] {
                Region::Scatterer => coeff.inside(x),
                _ => C::new(1.0, 0.0),
            })
        });
        let interior = SparseMatrix::combine(&[(C::new(1.0, 0.0), &stiff_b), (-k2, &mass_b)]);
        let gamma_mass = fem::boundary_mass(&mesh, &pattern).restrict(&mesh.gamma_ring);
        let gamma_lu = SparseLu::new(&gamma_mass)?;
        let stride = mesh.gamma_ring.len() / nr;
        let receiver_slots = (0..nr).map(|j| j * stride).collect();
        Ok(Self {
            mesh,
            scene: scene.clone(),
            dofs,
            system,
            lu,
            contrast,
            interior,
            gamma_mass,
            gamma_lu,
            receiver_slots,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Scattered field at every vertex for a point source at `x0`.
    pub fn scattered_fields(&self, sources: &[[f64; 2]]) -> Result<Vec<Vec<C>>, Error> {
        let k = self.scene.k;
        let k2 = k * k;
        let loads: Vec<Vec<C>> = sources
            .par_iter()
            .map(|&x0| -> Result<Vec<C>, Error> {
                let phi: Vec<C> = self
                    .mesh
                    .vertices
                    .iter()
                    .map(|&x| incident_or_zero(k, x, x0))
                    .collect::<Result<_, _>>()?;
                let f = self.contrast.matvec(&phi);
                Ok(self.dofs.free.iter().map(|&v| -k2 * f[v]).collect())
            })
            .collect::<Result<_, _>>()?;
        let sols = self.lu.solve_columns(&loads)?;
        let mut out = Vec::with_capacity(sols.len());
        for (sol, load) in sols.iter().zip(&loads) {
            check_residual(&self.system, sol, load)?;
            let mut us = vec![C::new(0.0, 0.0); self.mesh.n_vertices()];
            for (d, &v) in self.dofs.free.iter().enumerate() {
                us[v] = sol[d];
            }
            out.push(us);
        }
        Ok(out)
    }

    /// Normal derivative of the scattered field at the measurement-circle
    /// vertices, recovered from the weak-form residual.
    pub fn scattered_flux(&self, us: &[C]) -> Result<Vec<C>, Error> {
        let ring = &self.mesh.gamma_ring;
        let r: Vec<C> = ring
            .iter()
            .map(|&v| self.interior.row_entries(v).map(|(c, a)| a * us[c]).sum())
            .collect();
        let q = self.gamma_lu.solve_checked(&self.gamma_mass, &r, 1e-10)?;
        Ok(q)
    }

    /// Cauchy data for all sources of the scene.
    pub fn simulate(&self) -> Result<CauchyData, Error> {
        let scene = &self.scene;
        let source_angles = scene.source_angles();
        let sources: Vec<[f64; 2]> = source_angles.iter().map(|&t| scene.source_point(t)).collect();
        let fields = self.scattered_fields(&sources)?;
        let nr = scene.n_receivers;
        let receiver_angles = scene.receiver_angles();
        let weight = 2.0 * std::f64::consts::PI * scene.gamma_radius / nr as f64;
        let mut u = Vec::with_capacity(sources.len());
        let mut dnu = Vec::with_capacity(sources.len());
        for (us, &x0) in fields.iter().zip(&sources) {
            let q = self.scattered_flux(us)?;
            let mut ur = Vec::with_capacity(nr);
            let mut dr = Vec::with_capacity(nr);
            for (j, &slot) in self.receiver_slots.iter().enumerate() {
                let v = self.mesh.gamma_ring[slot];
                let t = receiver_angles[j];
                let x = [scene.gamma_radius * t.cos(), scene.gamma_radius * t.sin()];
                let phi = fundamental_solution(scene.k, x, x0)?;
                let g = fundamental_gradient(scene.k, x, x0)?;
                let dphi = g[0] * t.cos() + g[1] * t.sin();
                ur.push(us[v] + phi);
                dr.push(q[slot] + dphi);
            }
            u.push(ur);
            dnu.push(dr);
        }
        Ok(CauchyData {
            k: scene.k,
            gamma_radius: scene.gamma_radius,
            source_radius: scene.source_radius,
            source_angles,
            receiver_angles,
            weights: vec![weight; nr],
            u,
            dnu,
            noise_level: 0.0,
            seed: 0,
            clean: None,
        })
    }

    /// Total field for a unit point load at `x0` (no incident-field split).
    pub fn point_load_field(&self, x0: [f64; 2]) -> Result<Vec<C>, Error> {
        let (t, bary) = locate(&self.mesh, x0).ok_or_else(|| Error::Numerical("point load lies outside the mesh".into()))?;
        let mut load = vec![C::new(0.0, 0.0); self.dofs.len()];
        for (i, &v) in self.mesh.triangles[t].iter().enumerate() {
            if let Some(d) = self.dofs.of_vertex[v] {
                load[d] = C::new(bary[i], 0.0);
            }
        }
        let sol = self.lu.solve_checked(&self.system, &load, 1e-10)?;
        let mut u = vec![C::new(0.0, 0.0); self.mesh.n_vertices()];
        for (d, &v) in self.dofs.free.iter().enumerate() {
            u[v] = sol[d];
        }
        Ok(u)
    }

    /// Receiver vertex indices in receiver order.
    pub fn receiver_vertices(&self) -> Vec<usize> {
        self.receiver_slots.iter().map(|&s| self.mesh.gamma_ring[s]).collect()
    }
}

fn incident_or_zero(k: f64, x: [f64; 2], x0: [f64; 2]) -> Result<C, Error> {
    if x == x0 {
        return Ok(C::new(0.0, 0.0));
    }
    Ok(fundamental_solution(k, x, x0)?)
}

fn check_residual(a: &SparseMatrix, x: &[C], b: &[C]) -> Result<(), SolveError> {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
    let bn: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if bn > 0.0 && r > 1e-8 * bn {
        return Err(SolveError::Residual(r / bn));
    }
    Ok(())
}

/// Containing triangle and barycentric coordinates.
pub fn locate(mesh: &Mesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
        let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
        let l0 = 1.0 - l1 - l2;
        let eps = -1e-12;
        if l0 >= eps && l1 >= eps && l2 >= eps {
            return Some((t, [l0, l1, l2]));
        }
    }
    None
}

/// Convenience wrapper: mesh, factorize and simulate.
pub fn simulate(shape: Shape, coeff: &Coefficient, scene: &Scene, h: f64) -> Result<CauchyData, Error> {
    ForwardSolver::new(shape, coeff, scene, h)?.simulate()
}

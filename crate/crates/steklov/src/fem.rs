//! Piecewise-linear assembly: stiffness, weighted mass and boundary mass on
//! the measurement circle, with radial complex stretching in the absorbing
//! layer.

use num_complex::Complex64;
use std::sync::Arc;

use crate::geometry::{Coefficient, Scene};
use crate::mesh::{Mesh, Region};
use crate::sparse::{SparseMatrix, SparsePattern};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Radial stretching `r -> r (1 + i sigma(r) / k)` with
/// `sigma(r) = strength ((r - inner) / (outer - inner))^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pml {
    pub inner: f64,
    pub outer: f64,
    pub strength: f64,
    pub k: f64,
}

impl Pml {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            inner: scene.pml_inner,
            outer: scene.pml_outer,
            strength: scene.pml_strength,
            k: scene.k,
        }
    }

    /// Anisotropic coefficient tensor and volume factor at `x`.
    pub fn tensor(&self, x: [f64; 2]) -> ([[C; 2]; 2], C) {
        let r = x[0].hypot(x[1]);
        if r <= self.inner {
            return ([[ONE, ZERO], [ZERO, ONE]], ONE);
        }
        let w = self.outer - self.inner;
        let s = (r - self.inner) / w;
        let sigma = self.strength * s * s;
        let dsigma = 2.0 * self.strength * s / w;
        let d_tilde = C::new(1.0, sigma / self.k);
        let d = C::new(1.0, (sigma + r * dsigma) / self.k);
        let arr = d_tilde / d;
        let att = d / d_tilde;
        let (c, sn) = (x[0] / r, x[1] / r);
        let a = [
            [arr * c * c + att * sn * sn, (arr - att) * c * sn],
            [(arr - att) * c * sn, arr * sn * sn + att * c * c],
        ];
        (a, d * d_tilde)
    }
}

/// Sparsity pattern coupling all vertex pairs of each triangle.
pub fn mesh_pattern(mesh: &Mesh) -> Arc<SparsePattern> {
    let mut pairs = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        for &a in t {
            for &b in t {
                pairs.push((a, b));
            }
        }
    }
    SparsePattern::from_pairs(mesh.n_vertices(), pairs)
}

fn gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.vertices[i]);
    let area = mesh.area(t);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
    }
    (g, area)
}

fn midpoints(mesh: &Mesh, t: usize) -> [([f64; 2], [f64; 3]); 3] {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.vertices[i]);
    let mid = |a: usize, b: usize| [(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0];
    [
        (mid(0, 1), [0.5, 0.5, 0.0]),
        (mid(1, 2), [0.0, 0.5, 0.5]),
        (mid(2, 0), [0.5, 0.0, 0.5]),
    ]
}

fn scatter(m: &mut SparseMatrix, tri: [usize; 3], e: &[[C; 3]; 3]) {
    for a in 0..3 {
        for b in 0..3 {
            m.add(tri[a], tri[b], e[a][b]);
        }
    }
}

/// `int A grad u . grad v`, with `A` the identity outside the absorbing layer.
pub fn stiffness(mesh: &Mesh, pattern: &Arc<SparsePattern>, pml: Option<&Pml>) -> SparseMatrix {
    stiffness_where(mesh, pattern, pml, &|_| true)
}

/// Stiffness over the triangles selected by `keep`.
pub fn stiffness_where(mesh: &Mesh, pattern: &Arc<SparsePattern>, pml: Option<&Pml>, keep: &dyn Fn(usize) -> bool) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(pattern);
    for t in 0..mesh.triangles.len() {
        if !keep(t) {
            continue;
        }
        let (g, area) = gradients(mesh, t);
        let mut e = [[ZERO; 3]; 3];
        match (pml, mesh.regions[t]) {
            (Some(pml), Region::Pml) => {
                for (x, _) in midpoints(mesh, t) {
                    let (a, _) = pml.tensor(x);
                    for i in 0..3 {
                        let ag = [a[0][0] * g[i][0] + a[0][1] * g[i][1], a[1][0] * g[i][0] + a[1][1] * g[i][1]];
                        for j in i..3 {
                            e[i][j] += area / 3.0 * (ag[0] * g[j][0] + ag[1] * g[j][1]);
                        }
                    }
                }
            }
            _ => {
                for i in 0..3 {
                    for j in i..3 {
                        e[i][j] = C::new(area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]), 0.0);
                    }
                }
            }
        }
        symmetrize(&mut e);
        scatter(&mut m, mesh.triangles[t], &e);
    }
    m
}

fn symmetrize(e: &mut [[C; 3]; 3]) {
    for i in 0..3 {
        for j in 0..i {
            e[i][j] = e[j][i];
        }
    }
}

/// Weighted mass `int w u v`. `weight(t, x)` gives the weight at point `x` of
/// triangle `t` (`None` skips the triangle). Ordinary triangles interpolate
/// the weight at the vertices and integrate exactly; absorbing-layer triangles
/// use the edge-midpoint rule with the stretching volume factor.
pub fn mass(mesh: &Mesh, pattern: &Arc<SparsePattern>, pml: Option<&Pml>, weight: &dyn Fn(usize, [f64; 2]) -> Option<C>) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(pattern);
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let area = mesh.area(t);
        let mut e = [[ZERO; 3]; 3];
        match (pml, mesh.regions[t]) {
            (Some(pml), Region::Pml) => {
                let mut skip = false;
                for (x, phi) in midpoints(mesh, t) {
                    let Some(w) = weight(t, x) else {
                        skip = true;
                        break;
                    };
                    let (_, jac) = pml.tensor(x);
                    for i in 0..3 {
                        for j in i..3 {
                            e[i][j] += area / 3.0 * w * jac * phi[i] * phi[j];
                        }
                    }
                }
                if skip {
                    continue;
                }
            }
            _ => {
                let w: Option<Vec<C>> = tri.iter().map(|&v| weight(t, mesh.vertices[v])).collect();
                let Some(w) = w else {
                    continue;
                };
                for i in 0..3 {
                    for j in i..3 {
                        e[i][j] = if i == j {
                            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                            area * (w[i] / 10.0 + (w[a] + w[b]) / 30.0)
                        } else {
                            let k = 3 - i - j;
                            area * ((w[i] + w[j]) / 30.0 + w[k] / 60.0)
                        };
                    }
                }
            }
        }
        symmetrize(&mut e);
        scatter(&mut m, tri, &e);
    }
    m
}

/// Mass weighted by the index of refraction (one outside the scatterer).
pub fn index_mass(mesh: &Mesh, pattern: &Arc<SparsePattern>, coeff: &Coefficient, pml: Option<&Pml>) -> SparseMatrix {
    mass(mesh, pattern, pml, &|t, x| {
        Some(if mesh.regions[t] == Region::Scatterer {
            coeff.inside(x)
        } else {
            ONE
        })
    })
}

/// Mass restricted to scatterer triangles with weight `f(x)`.
pub fn scatterer_mass(mesh: &Mesh, pattern: &Arc<SparsePattern>, f: &dyn Fn([f64; 2]) -> C) -> SparseMatrix {
    mass(mesh, pattern, None, &|t, x| (mesh.regions[t] == Region::Scatterer).then(|| f(x)))
}

/// `int_Gamma u v` along the measurement-circle edges.
pub fn boundary_mass(mesh: &Mesh, pattern: &Arc<SparsePattern>) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(pattern);
    for [a, b] in mesh.gamma_edges() {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        let len = (p[0] - q[0]).hypot(p[1] - q[1]);
        let d = C::new(len / 3.0, 0.0);
        let o = C::new(len / 6.0, 0.0);
        m.add(a, a, d);
        m.add(b, b, d);
        m.add(a, b, o);
        m.add(b, a, o);
    }
    m
}

/// Degree-of-freedom numbering that drops Dirichlet vertices.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Vertex of each free dof.
    pub free: Vec<usize>,
    /// Dof of each vertex, if free.
    pub of_vertex: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(n_vertices: usize, fixed: &[usize]) -> Self {
        let mut is_fixed = vec![false; n_vertices];
        for &v in fixed {
            is_fixed[v] = true;
        }
        let free: Vec<usize> = (0..n_vertices).filter(|&v| !is_fixed[v]).collect();
        let mut of_vertex = vec![None; n_vertices];
        for (d, &v) in free.iter().enumerate() {
            of_vertex[v] = Some(d);
        }
        Self { free, of_vertex }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }
}

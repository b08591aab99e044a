//! Triangular meshes fitted to the scatterer boundary, the measurement circle
//! and the absorbing layer.

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{MeshError, ParseError};
use crate::geometry::{circle_polygon, circle_segments, point_in_polygon, Scene, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Scatterer,
    Background,
    Pml,
}

impl Region {
    pub fn tag(self) -> u8 {
        match self {
            Region::Scatterer => 0,
            Region::Background => 1,
            Region::Pml => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Region::Scatterer),
            1 => Some(Region::Background),
            2 => Some(Region::Pml),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// Vertices on the measurement circle in counterclockwise order; consecutive
    /// entries (cyclically) are mesh edges.
    pub gamma_ring: Vec<usize>,
    pub h: f64,
}

/// What to mesh.
#[derive(Debug, Clone)]
pub struct MeshRequest {
    pub shape: Shape,
    pub h: f64,
    pub gamma_radius: f64,
    /// Number of measurement-circle segments is rounded up to a multiple of this.
    pub gamma_multiple: usize,
    /// `(inner, outer)` radii of the absorbing layer; `None` meshes only the
    /// disc bounded by the measurement circle.
    pub pml: Option<(f64, f64)>,
}

impl MeshRequest {
    /// Full forward-problem mesh out to the truncation circle.
    pub fn scene(shape: Shape, scene: &Scene, h: f64) -> Self {
        Self {
            shape,
            h,
            gamma_radius: scene.gamma_radius,
            gamma_multiple: scene.n_receivers,
            pml: Some((scene.pml_inner, scene.pml_outer)),
        }
    }

    /// Mesh of the disc bounded by the measurement circle.
    pub fn interior(shape: Shape, gamma_radius: f64, h: f64) -> Self {
        Self {
            shape,
            h,
            gamma_radius,
            gamma_multiple: 1,
            pml: None,
        }
    }
}

const LATTICE_MARGIN: f64 = 0.45;

pub fn generate(req: &MeshRequest) -> Result<Mesh, MeshError> {
    let h = req.h;
    if !(h > 0.0 && h.is_finite()) || h > req.gamma_radius / 4.0 {
        return Err(MeshError::InvalidInput(format!("mesh size {h} out of range")));
    }
    if !(req.gamma_radius > req.shape.extent() + h) {
        return Err(MeshError::InvalidInput("measurement circle too close to the scatterer".into()));
    }
    if let Some((a, b)) = req.pml {
        if !(a > req.gamma_radius + h && b > a + h) {
            return Err(MeshError::InvalidInput("absorbing layer radii out of order".into()));
        }
    }
    let outer_radius = req.pml.map_or(req.gamma_radius, |(_, b)| b);

    let mut n_gamma = circle_segments(req.gamma_radius, h);
    let mult = req.gamma_multiple.max(1);
    n_gamma = n_gamma.div_ceil(mult) * mult;

    let mut loops: Vec<Vec<[f64; 2]>> = vec![circle_polygon(req.gamma_radius, n_gamma)];
    let shape_poly = req.shape.boundary_polygon(h);
    loops.push(shape_poly.clone());
    if let Some((a, b)) = req.pml {
        loops.push(circle_polygon(a, circle_segments(a, h)));
        loops.push(circle_polygon(b, circle_segments(b, h)));
    }

    let mut circle_radii = vec![req.gamma_radius];
    if let Some((a, b)) = req.pml {
        circle_radii.push(a);
        circle_radii.push(b);
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut loop_handles = Vec::with_capacity(loops.len());
    for lp in &loops {
        let mut hs = Vec::with_capacity(lp.len());
        for p in lp {
            let v = cdt
                .insert(Point2::new(p[0], p[1]))
                .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
            hs.push(v);
        }
        loop_handles.push(hs);
    }

    let dy = h * 3f64.sqrt() / 2.0;
    let rows = (outer_radius / dy).ceil() as i64 + 1;
    let cols = (outer_radius / h).ceil() as i64 + 1;
    let margin = LATTICE_MARGIN * h;
    for iy in -rows..=rows {
        let y = iy as f64 * dy;
        let shift = if iy.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        for ix in -cols..=cols {
            let x = ix as f64 * h + shift;
            let r = x.hypot(y);
            if r > outer_radius - margin {
                continue;
            }
            if circle_radii.iter().any(|&c| (r - c).abs() < margin) {
                continue;
            }
            if req.shape.boundary_distance([x, y]) < margin {
                continue;
            }
            cdt.insert(Point2::new(x, y))
                .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        }
    }

    for hs in &loop_handles {
        for i in 0..hs.len() {
            let (a, b) = (hs[i], hs[(i + 1) % hs.len()]);
            if !cdt.can_add_constraint(a, b) {
                return Err(MeshError::MissingConstraintEdge(a.index(), b.index()));
            }
            cdt.add_constraint(a, b);
        }
    }
    for hs in &loop_handles {
        for i in 0..hs.len() {
            let (a, b) = (hs[i], hs[(i + 1) % hs.len()]);
            if cdt.get_edge_from_neighbors(a, b).is_none() {
                return Err(MeshError::MissingConstraintEdge(a.index(), b.index()));
            }
        }
    }

    let mut vertices = vec![[0.0; 2]; cdt.num_vertices()];
    for v in cdt.vertices() {
        let p = v.position();
        vertices[v.fix().index()] = [p.x, p.y];
    }
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut regions = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let mut t = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        if signed_area(&vertices, t) < 0.0 {
            t.swap(1, 2);
        }
        let c = centroid(&vertices, t);
        let region = if point_in_polygon(&shape_poly, c) {
            Region::Scatterer
        } else if req.pml.is_some_and(|(a, _)| c[0].hypot(c[1]) > a) {
            Region::Pml
        } else {
            Region::Background
        };
        triangles.push(t);
        regions.push(region);
    }
    let gamma_ring = loop_handles[0].iter().map(|v| v.index()).collect();
    let mesh = Mesh {
        vertices,
        triangles,
        regions,
        gamma_ring,
        h,
    };
    Ok(mesh)
}

pub fn signed_area(v: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn centroid(v: &[[f64; 2]], t: [usize; 3]) -> [f64; 2] {
    [
        (v[t[0]][0] + v[t[1]][0] + v[t[2]][0]) / 3.0,
        (v[t[0]][1] + v[t[1]][1] + v[t[2]][1]) / 3.0,
    ]
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        centroid(&self.vertices, self.triangles[t])
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.area(t))
            .sum()
    }

    pub fn max_edge(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (self.vertices[t[i]], self.vertices[t[(i + 1) % 3]]);
                m = m.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        m
    }

    /// Edges on the measurement circle as ordered vertex pairs.
    pub fn gamma_edges(&self) -> Vec<[usize; 2]> {
        let n = self.gamma_ring.len();
        (0..n).map(|i| [self.gamma_ring[i], self.gamma_ring[(i + 1) % n]]).collect()
    }

    /// Vertices on edges that belong to exactly one triangle.
    pub fn topological_boundary(&self) -> Vec<usize> {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut on = vec![false; self.vertices.len()];
        for ((a, b), c) in count {
            if c == 1 {
                on[a] = true;
                on[b] = true;
            }
        }
        (0..on.len()).filter(|&i| on[i]).collect()
    }

    /// Boundary vertices carrying a homogeneous Dirichlet condition: the
    /// topological boundary minus the measurement circle.
    pub fn dirichlet_vertices(&self) -> Vec<usize> {
        let mut on_gamma = vec![false; self.vertices.len()];
        for &g in &self.gamma_ring {
            on_gamma[g] = true;
        }
        self.topological_boundary().into_iter().filter(|&v| !on_gamma[v]).collect()
    }

    /// Restriction to triangles satisfying `keep`, with vertices renumbered.
    /// The measurement circle is kept when all of its vertices survive.
    pub fn submesh(&self, keep: impl Fn(usize) -> bool) -> Mesh {
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut regions = Vec::new();
        for t in 0..self.triangles.len() {
            if !keep(t) {
                continue;
            }
            let mut tri = [0; 3];
            for (i, &v) in self.triangles[t].iter().enumerate() {
                if map[v] == usize::MAX {
                    map[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                }
                tri[i] = map[v];
            }
            triangles.push(tri);
            regions.push(self.regions[t]);
        }
        let gamma_ring = if self.gamma_ring.iter().all(|&v| map[v] != usize::MAX) {
            self.gamma_ring.iter().map(|&v| map[v]).collect()
        } else {
            Vec::new()
        };
        Mesh {
            vertices,
            triangles,
            regions,
            gamma_ring,
            h: self.h,
        }
    }

    /// Triangles inside the measurement circle.
    pub fn interior(&self, gamma_radius: f64) -> Mesh {
        self.submesh(|t| {
            let c = self.centroid(t);
            self.regions[t] != Region::Pml && c[0].hypot(c[1]) < gamma_radius
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "steklov-mesh v1 {} {} {} {:e}",
            self.vertices.len(),
            self.triangles.len(),
            self.gamma_ring.len(),
            self.h
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
        }
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r.tag());
        }
        for e in self.gamma_edges() {
            let _ = writeln!(s, "{} {}", e[0], e[1]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh, ParseError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| ParseError::new(1, "empty mesh file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "steklov-mesh" || fields[1] != "v1" {
            return Err(ParseError::new(ln + 1, "bad mesh header"));
        }
        let count = |s: &str| -> Result<usize, ParseError> { s.parse().map_err(|_| ParseError::new(ln + 1, format!("bad count `{s}`"))) };
        let (nv, nt, ng) = (count(fields[2])?, count(fields[3])?, count(fields[4])?);
        let h: f64 = fields[5].parse().map_err(|_| ParseError::new(ln + 1, "bad mesh size"))?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(ParseError::new(ln + 1, "mesh size must be positive"));
        }
        let mut vertices = Vec::with_capacity(nv.min(1 << 20));
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing vertex lines"))?;
            let xs = parse_floats(l, 2, ln + 1)?;
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::with_capacity(nt.min(1 << 20));
        let mut regions = Vec::with_capacity(nt.min(1 << 20));
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing triangle lines"))?;
            let xs = parse_indices(l, 4, ln + 1)?;
            let mut t = [xs[0], xs[1], xs[2]];
            if t.iter().any(|&i| i >= nv) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(ParseError::new(ln + 1, "invalid triangle"));
            }
            let region = u8::try_from(xs[3])
                .ok()
                .and_then(Region::from_tag)
                .ok_or_else(|| ParseError::new(ln + 1, "invalid region tag"))?;
            if signed_area(&vertices, t) < 0.0 {
                t.swap(1, 2);
            }
            triangles.push(t);
            regions.push(region);
        }
        let mut edges = Vec::with_capacity(ng.min(1 << 20));
        for _ in 0..ng {
            let (ln, l) = lines.next().ok_or_else(|| ParseError::new(0, "missing boundary edge lines"))?;
            let xs = parse_indices(l, 2, ln + 1)?;
            if xs.iter().any(|&i| i >= nv) {
                return Err(ParseError::new(ln + 1, "boundary edge index out of range"));
            }
            edges.push([xs[0], xs[1]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(ParseError::new(ln + 1, "trailing content"));
        }
        let gamma_ring = chain_ring(&edges)?;
        Ok(Mesh {
            vertices,
            triangles,
            regions,
            gamma_ring,
            h,
        })
    }
}

fn chain_ring(edges: &[[usize; 2]]) -> Result<Vec<usize>, ParseError> {
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for e in edges {
        if next.insert(e[0], e[1]).is_some() {
            return Err(ParseError::new(0, "boundary edges do not form a simple cycle"));
        }
    }
    let start = edges[0][0];
    let mut ring = vec![start];
    let mut cur = edges[0][1];
    while cur != start {
        if ring.len() >= edges.len() {
            return Err(ParseError::new(0, "boundary edges do not form a simple cycle"));
        }
        ring.push(cur);
        cur = *next
            .get(&cur)
            .ok_or_else(|| ParseError::new(0, "boundary edges do not form a closed cycle"))?;
    }
    if ring.len() != edges.len() {
        return Err(ParseError::new(0, "boundary edges form more than one cycle"));
    }
    Ok(ring)
}

pub(crate) fn parse_floats(line: &str, n: usize, ln: usize) -> Result<Vec<f64>, ParseError> {
    let xs: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::new(ln, "malformed number"))?;
    if xs.len() != n {
        return Err(ParseError::new(ln, format!("expected {n} values, found {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ParseError::new(ln, "non-finite value"));
    }
    Ok(xs)
}

fn parse_indices(line: &str, n: usize, ln: usize) -> Result<Vec<usize>, ParseError> {
    let xs: Vec<usize> = line
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::new(ln, "malformed index"))?;
    if xs.len() != n {
        return Err(ParseError::new(ln, format!("expected {n} indices, found {}", xs.len())));
    }
    Ok(xs)
}

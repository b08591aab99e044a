//! Scatterer shapes, refractive-index models and the measurement scene.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Disc of the given radius centred at the origin.
    Disc { radius: f64 },
    /// Square with vertices `(0,-1), (1,0), (0,1), (-1,0)`.
    Square,
    /// L-shaped hexagon `[-0.9,1.1] x [-1.1,0.9]` minus `[0.1,1.1] x [-1.1,-0.1]`.
    LShape,
}

const SQUARE: [[f64; 2]; 4] = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
const LSHAPE: [[f64; 2]; 6] = [[-0.9, -1.1], [0.1, -1.1], [0.1, -0.1], [1.1, -0.1], [1.1, 0.9], [-0.9, 0.9]];

impl Shape {
    pub fn unit_disc() -> Self {
        Shape::Disc { radius: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Disc { .. } => "disc",
            Shape::Square => "square",
            Shape::LShape => "lshape",
        }
    }

    /// Corner list for polygonal shapes (counterclockwise).
    pub fn corners(&self) -> Option<&'static [[f64; 2]]> {
        match self {
            Shape::Disc { .. } => None,
            Shape::Square => Some(&SQUARE),
            Shape::LShape => Some(&LSHAPE),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Disc { radius } => PI * radius * radius,
            _ => polygon_area(self.corners().unwrap()),
        }
    }

    /// Largest distance from the origin to a boundary point.
    pub fn extent(&self) -> f64 {
        match self {
            Shape::Disc { radius } => *radius,
            _ => self.corners().unwrap().iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max),
        }
    }

    /// Exact membership test (closed set).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Disc { radius } => p[0].hypot(p[1]) <= *radius,
            _ => point_in_polygon(self.corners().unwrap(), p) || self.boundary_distance(p) < 1e-12,
        }
    }

    /// Distance from `p` to the exact boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Disc { radius } => (p[0].hypot(p[1]) - radius).abs(),
            _ => {
                let c = self.corners().unwrap();
                (0..c.len())
                    .map(|i| segment_distance(p, c[i], c[(i + 1) % c.len()]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Counterclockwise boundary polyline with segments no longer than `h`.
    pub fn boundary_polygon(&self, h: f64) -> Vec<[f64; 2]> {
        match self {
            Shape::Disc { radius } => circle_polygon(*radius, circle_segments(*radius, h)),
            _ => {
                let c = self.corners().unwrap();
                let mut out = Vec::new();
                for i in 0..c.len() {
                    let a = c[i];
                    let b = c[(i + 1) % c.len()];
                    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                    let n = (len / h).ceil().max(1.0) as usize;
                    for s in 0..n {
                        let t = s as f64 / n as f64;
                        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "disc" | "disk" | "circle" => Ok(Shape::unit_disc()),
            "square" => Ok(Shape::Square),
            "lshape" | "l-shape" | "l" => Ok(Shape::LShape),
            other => Err(Error::Config(format!("unknown shape `{other}`"))),
        }
    }
}

pub fn circle_segments(radius: f64, h: f64) -> usize {
    ((2.0 * PI * radius / h).ceil() as usize).max(8)
}

/// Vertices `r (cos 2 pi j / n, sin 2 pi j / n)`.
pub fn circle_polygon(radius: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

pub fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let mut a = 0.0;
    for i in 0..p.len() {
        let q = p[(i + 1) % p.len()];
        a += p[i][0] * q[1] - q[0] * p[i][1];
    }
    0.5 * a
}

/// Even-odd rule.
pub fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Index of refraction inside the scatterer; it equals one outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Constant(Complex64),
    /// `n(x) = b0 + b1 |x|`.
    RadialAffine {
        b0: f64,
        b1: f64,
    },
}

impl Coefficient {
    pub fn real(c: f64) -> Self {
        Coefficient::Constant(Complex64::new(c, 0.0))
    }

    /// Value inside the scatterer at `x`.
    pub fn inside(&self, x: [f64; 2]) -> Complex64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::RadialAffine { b0, b1 } => Complex64::new(b0 + b1 * x[0].hypot(x[1]), 0.0),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Coefficient::Constant(c) => c.im == 0.0,
            Coefficient::RadialAffine { .. } => true,
        }
    }

    /// Checks `Re n > 0`, `Im n >= 0` at the corners and centre of the bounding disc.
    pub fn validate(&self, shape: &Shape) -> Result<(), Error> {
        let r = shape.extent();
        for x in [[0.0, 0.0], [r, 0.0]] {
            let v = self.inside(x);
            if !(v.re > 0.0) || v.im < 0.0 || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Config(format!("index of refraction {v} is not admissible")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) if c.im == 0.0 => write!(f, "constant {}", c.re),
            Coefficient::Constant(c) => write!(f, "constant {}{:+}i", c.re, c.im),
            Coefficient::RadialAffine { b0, b1 } => write!(f, "radial {b0} {b1}"),
        }
    }
}

/// Measurement scene: wavenumber, measurement circle, source circle and absorbing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub k: f64,
    pub gamma_radius: f64,
    pub source_radius: f64,
    pub n_sources: usize,
    pub n_receivers: usize,
    pub pml_inner: f64,
    pub pml_outer: f64,
    pub pml_strength: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            k: 1.0,
            gamma_radius: 2.0,
            source_radius: 3.0,
            n_sources: 100,
            n_receivers: 100,
            pml_inner: 3.5,
            pml_outer: 4.5,
            pml_strength: 1.0,
        }
    }
}

impl Scene {
    pub fn validate(&self, shape: &Shape) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("wavenumber must be positive");
        }
        if !(self.gamma_radius > shape.extent()) {
            return bad("measurement circle must enclose the scatterer");
        }
        if !(self.source_radius > self.gamma_radius) {
            return bad("source circle must lie outside the measurement circle");
        }
        if !(self.pml_inner > self.source_radius && self.pml_outer > self.pml_inner) {
            return bad("absorbing layer must lie outside the source circle");
        }
        if self.n_sources == 0 || self.n_receivers == 0 {
            return bad("source and receiver counts must be positive");
        }
        if !(self.pml_strength >= 0.0) {
            return bad("absorbing layer strength must be non-negative");
        }
        Ok(())
    }

    pub fn source_angles(&self) -> Vec<f64> {
        uniform_angles(self.n_sources)
    }

    pub fn receiver_angles(&self) -> Vec<f64> {
        uniform_angles(self.n_receivers)
    }

    pub fn source_point(&self, theta: f64) -> [f64; 2] {
        [self.source_radius * theta.cos(), self.source_radius * theta.sin()]
    }
}

pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn areas() {
        assert!((Shape::Square.area() - 2.0).abs() < 1e-14);
        assert!((Shape::LShape.area() - 3.0).abs() < 1e-14);
        assert!((Shape::unit_disc().area() - PI).abs() < 1e-14);
    }

    #[test]
    fn membership() {
        assert!(Shape::LShape.contains([0.0, 0.0]));
        assert!(!Shape::LShape.contains([0.6, -0.6]));
        assert!(Shape::LShape.contains([0.6, 0.4]));
        assert!(Shape::Square.contains([0.4, 0.4]));
        assert!(!Shape::Square.contains([0.6, 0.6]));
        assert!(Shape::Square.contains([1.0, 0.0]));
    }

    #[test]
    fn boundary_polygon_segments_bounded() {
        for shape in [Shape::unit_disc(), Shape::Square, Shape::LShape] {
            let p = shape.boundary_polygon(0.1);
            for i in 0..p.len() {
                let q = p[(i + 1) % p.len()];
                assert!((q[0] - p[i][0]).hypot(q[1] - p[i][1]) <= 0.1 + 1e-12);
            }
            assert!(polygon_area(&p) > 0.0);
        }
    }

    #[test]
    fn default_scene_is_valid() {
        for shape in [Shape::unit_disc(), Shape::Square, Shape::LShape] {
            Scene::default().validate(&shape).unwrap();
        }
        let s = Scene {
            source_radius: 1.5,
            ..Scene::default()
        };
        assert!(s.validate(&Shape::Square).is_err());
    }
}

//! Bayesian estimation of the index of refraction from Steklov eigenvalues.
//!
//! Likelihood `exp(-|lambda - G(n)|^2 / (2 sigma^2))` with uniform box priors,
//! explored by random-walk Metropolis-Hastings.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::error::Error;
use crate::fem;
use crate::geometry::{Coefficient, Shape};
use crate::mesh::{self, Mesh, MeshRequest, Region};
use crate::sparse::{SparseMatrix, SparsePattern};
use crate::steklov::{bessel_eigenvalues, schur_dense, SearchRect, SteklovPencil};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `n = p0`.
    Constant,
    /// `n = p0 + p1 |x|`.
    Radial,
    /// `n = p0 + i p1`.
    Complex,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(ModelKind::Constant),
            "radial" => Ok(ModelKind::Radial),
            "complex" => Ok(ModelKind::Complex),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Constant => "constant",
            ModelKind::Radial => "radial",
            ModelKind::Complex => "complex",
        })
    }
}

/// Parametrised index with an open uniform box prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub bounds: Vec<(f64, f64)>,
}

impl Model {
    pub fn new(kind: ModelKind) -> Self {
        let bounds = match kind {
            ModelKind::Constant => vec![(0.0, 8.0)],
            ModelKind::Radial => vec![(3.0, 7.0), (0.0, 6.0)],
            ModelKind::Complex => vec![(0.0, 8.0), (0.0, 8.0)],
        };
        Self { kind, bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::Constant => &["n"],
            ModelKind::Radial => &["beta1", "beta2"],
            ModelKind::Complex => &["re_n", "im_n"],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.bounds).all(|(v, (a, b))| *v > *a && *v < *b)
    }

    pub fn coefficient(&self, p: &[f64]) -> Coefficient {
        match self.kind {
            ModelKind::Constant => Coefficient::real(p[0]),
            ModelKind::Radial => Coefficient::RadialAffine { b0: p[0], b1: p[1] },
            ModelKind::Complex => Coefficient::Constant(C::new(p[0], p[1])),
        }
    }

    /// Starting point: `n = 2` for the constant model, the box centre otherwise.
    pub fn default_initial(&self) -> Vec<f64> {
        match self.kind {
            ModelKind::Constant => vec![2.0],
            _ => self.bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    /// Checks that every index in the prior box has `Re n > 0`, `Im n >= 0` on the shape.
    pub fn validate(&self, shape: &Shape) -> Result<(), Error> {
        if self.bounds.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("prior bounds must be finite with lower < upper".into()));
        }
        let d = self.dim();
        for corner in 0..(1usize << d) {
            let p: Vec<f64> = (0..d)
                .map(|i| if corner >> i & 1 == 0 { self.bounds[i].0 } else { self.bounds[i].1 })
                .collect();
            let c = self.coefficient(&p);
            for r in [0.0, shape.extent()] {
                let v = c.inside([r, 0.0]);
                if v.re < 0.0 || v.im < 0.0 {
                    return Err(Error::Config(format!("prior box admits index {v} with negative part")));
                }
            }
        }
        Ok(())
    }
}

/// Pairs each reference value with a distinct computed value, closest pairs first.
pub fn match_nearest(reference: &[C], computed: &[C]) -> Vec<Option<C>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(reference.len() * computed.len());
    for (i, r) in reference.iter().enumerate() {
        for (j, c) in computed.iter().enumerate() {
            pairs.push(((r - c).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; reference.len()];
    let mut used = vec![false; computed.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(computed[j]);
            used[j] = true;
        }
    }
    out
}

/// FEM operators on a fixed mesh of the measurement disc, split so that
/// `K - k^2 M_n` is a linear combination in the model parameters.
struct FemOperators {
    mesh: Arc<Mesh>,
    k: f64,
    stiff: SparseMatrix,
    outside: SparseMatrix,
    inside: SparseMatrix,
    inside_r: SparseMatrix,
    boundary: SparseMatrix,
}

impl FemOperators {
    fn new(shape: Shape, gamma_radius: f64, k: f64, h: f64) -> Result<Self, Error> {
        let mesh = mesh::generate(&MeshRequest::interior(shape, gamma_radius, h))?;
        let pat: Arc<SparsePattern> = fem::mesh_pattern(&mesh);
        let one = C::new(1.0, 0.0);
        let stiff = fem::stiffness(&mesh, &pat, None);
        let outside = fem::mass(&mesh, &pat, None, &|t, _| (mesh.regions[t] != Region::Scatterer).then_some(one));
        let inside = fem::scatterer_mass(&mesh, &pat, &|_| one);
        let inside_r = fem::scatterer_mass(&mesh, &pat, &|x| C::new(x[0].hypot(x[1]), 0.0));
        let boundary = fem::boundary_mass(&mesh, &pat);
        Ok(Self {
            mesh: Arc::new(mesh),
            k,
            stiff,
            outside,
            inside,
            inside_r,
            boundary,
        })
    }

    fn pencil(&self, model: &Model, p: &[f64]) -> Result<SteklovPencil, Error> {
        let kk = C::new(-self.k * self.k, 0.0);
        let (c0, c1) = match model.kind {
            ModelKind::Constant => (C::new(p[0], 0.0), C::new(0.0, 0.0)),
            ModelKind::Radial => (C::new(p[0], 0.0), C::new(p[1], 0.0)),
            ModelKind::Complex => (C::new(p[0], p[1]), C::new(0.0, 0.0)),
        };
        let a0 = SparseMatrix::combine(&[
            (C::new(1.0, 0.0), &self.stiff),
            (kk, &self.outside),
            (kk * c0, &self.inside),
            (kk * c1, &self.inside_r),
        ]);
        SteklovPencil::from_operators((*self.mesh).clone(), a0, self.boundary.clone())
    }
}

enum Backend {
    Bessel { core_radius: f64, outer_radius: f64, k: f64 },
    Fem(FemOperators),
}

/// Eigenvalue forward map `G` with a cache on parameters quantised to 1e-3.
pub struct ForwardMap {
    pub model: Model,
    pub region: SearchRect,
    backend: Backend,
    cache: Mutex<HashMap<Vec<i64>, Vec<C>>>,
}

const QUANTUM: f64 = 1e-3;

impl ForwardMap {
    /// The search region is the bounding box of `reference` inflated by `margin`.
    /// Discs with a constant (real or complex) index use the closed form;
    /// everything else uses the boundary Schur complement on a mesh of size `h`.
    pub fn new(shape: Shape, model: Model, k: f64, gamma_radius: f64, h: f64, reference: &[C], margin: f64) -> Result<Self, Error> {
        model.validate(&shape)?;
        let region = SearchRect::bounding(reference, margin).ok_or_else(|| Error::Config("no reference eigenvalues".into()))?;
        let backend = match (shape, model.kind) {
            (Shape::Disc { radius }, ModelKind::Constant | ModelKind::Complex) => Backend::Bessel {
                core_radius: radius,
                outer_radius: gamma_radius,
                k,
            },
            _ => Backend::Fem(FemOperators::new(shape, gamma_radius, k, h)?),
        };
        Ok(Self {
            model,
            region,
            backend,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn uses_closed_form(&self) -> bool {
        matches!(self.backend, Backend::Bessel { .. })
    }

    /// All eigenvalues in the region at the quantised parameters.
    pub fn eigenvalues(&self, p: &[f64]) -> Result<Vec<C>, Error> {
        let key: Vec<i64> = p.iter().map(|v| (v / QUANTUM).round() as i64).collect();
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let q: Vec<f64> = key.iter().map(|&i| i as f64 * QUANTUM).collect();
        let vals = match &self.backend {
            Backend::Bessel {
                core_radius,
                outer_radius,
                k,
            } => {
                let n = match self.model.kind {
                    ModelKind::Complex => C::new(q[0], q[1]),
                    _ => C::new(q[0], 0.0),
                };
                bessel_eigenvalues(n, *core_radius, *outer_radius, *k, &self.region)?.complex_values()
            }
            Backend::Fem(ops) => schur_dense(&ops.pencil(&self.model, &q)?, &self.region)?.complex_values(),
        };
        self.cache.lock().unwrap().insert(key, vals.clone());
        Ok(vals)
    }

    /// `G(p)`: the computed eigenvalues matched to `reference`.
    pub fn matched(&self, p: &[f64], reference: &[C]) -> Result<Vec<Option<C>>, Error> {
        Ok(match_nearest(reference, &self.eigenvalues(p)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Misfit {
    /// `|lambda - G(n)|^2`.
    #[default]
    Squared,
    /// `|lambda - G(n)|`.
    Norm,
}

pub struct Posterior {
    pub eigenvalues: Vec<C>,
    pub sigma2: f64,
    pub misfit: Misfit,
    pub forward: ForwardMap,
}

impl Posterior {
    pub fn new(eigenvalues: Vec<C>, sigma2: f64, misfit: Misfit, forward: ForwardMap) -> Result<Self, Error> {
        if !(sigma2 > 0.0) {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        if eigenvalues.is_empty() {
            return Err(Error::Config("need at least one eigenvalue".into()));
        }
        Ok(Self {
            eigenvalues,
            sigma2,
            misfit,
            forward,
        })
    }

    /// Squared misfit with unmatched values charged the region diameter.
    pub fn residual2(&self, p: &[f64]) -> f64 {
        let penalty = self.forward.region.diameter();
        match self.forward.matched(p, &self.eigenvalues) {
            Ok(m) => m
                .iter()
                .zip(&self.eigenvalues)
                .map(|(g, l)| g.map_or(penalty * penalty, |g| (g - l).norm_sqr()))
                .sum(),
            Err(_) => penalty * penalty * self.eigenvalues.len() as f64,
        }
    }

    /// Unnormalised log density; `-inf` outside the prior box.
    pub fn log_density(&self, p: &[f64]) -> f64 {
        if !self.forward.model.contains(p) {
            return f64::NEG_INFINITY;
        }
        let r2 = self.residual2(p);
        let m = match self.misfit {
            Misfit::Squared => r2,
            Misfit::Norm => r2.sqrt(),
        };
        -m / (2.0 * self.sigma2)
    }
}

#[derive(Debug, Clone)]
pub struct MhOptions {
    pub samples: usize,
    pub gamma2: f64,
    pub seed: u64,
}

impl Default for MhOptions {
    fn default() -> Self {
        Self {
            samples: 3000,
            gamma2: 2.4 * 2.4 / 2.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// `samples[0]` is the initial state.
    pub samples: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    pub log_post: Vec<f64>,
    pub gamma2: f64,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of accepted proposals (the initial state is not a proposal).
    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.len() < 2 {
            return 0.0;
        }
        self.accepted[1..].iter().filter(|a| **a).count() as f64 / (self.accepted.len() - 1) as f64
    }

    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut s = String::from("index");
        for n in names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",accepted,log_post\n");
        for (i, p) in self.samples.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in p {
                let _ = write!(s, ",{v:?}");
            }
            let _ = writeln!(s, ",{},{:?}", u8::from(self.accepted[i]), self.log_post[i]);
        }
        s
    }
}

/// Random-walk Metropolis-Hastings: isotropic Gaussian proposals with variance
/// `gamma2`, accepted when `min(1, pi(w)/pi(n)) >= t` with `t ~ U(0,1)`.
pub fn metropolis_hastings(log_density: &dyn Fn(&[f64]) -> f64, initial: &[f64], opts: &MhOptions) -> Result<Chain, Error> {
    if opts.samples == 0 || !(opts.gamma2 > 0.0) {
        return Err(Error::Config("need at least one sample and a positive proposal variance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let gamma = opts.gamma2.sqrt();
    let mut cur = initial.to_vec();
    let mut cur_lp = log_density(&cur);
    let mut chain = Chain {
        samples: Vec::with_capacity(opts.samples),
        accepted: Vec::with_capacity(opts.samples),
        log_post: Vec::with_capacity(opts.samples),
        gamma2: opts.gamma2,
        seed: opts.seed,
    };
    chain.samples.push(cur.clone());
    chain.accepted.push(true);
    chain.log_post.push(cur_lp);
    for _ in 1..opts.samples {
        let prop: Vec<f64> = cur
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + gamma * z
            })
            .collect();
        let t: f64 = rng.random();
        let lp = log_density(&prop);
        let ratio = if lp == f64::NEG_INFINITY {
            0.0
        } else if cur_lp == f64::NEG_INFINITY {
            1.0
        } else {
            (lp - cur_lp).exp().min(1.0)
        };
        let accept = ratio >= t && lp > f64::NEG_INFINITY;
        if accept {
            cur = prop;
            cur_lp = lp;
        }
        chain.samples.push(cur.clone());
        chain.accepted.push(accept);
        chain.log_post.push(cur_lp);
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins.max(1)];
        let w = (hi - lo) / counts.len() as f64;
        for v in values {
            if *v >= lo && *v <= hi {
                let b = (((v - lo) / w) as usize).min(counts.len() - 1);
                counts[b] += 1;
            }
        }
        Self { lo, hi, counts }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn centre(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.bin_width()
    }

    /// Centres of local maxima of the 3-bin moving average that reach
    /// `min_fraction` of its peak; plateaus report their middle.
    pub fn modes(&self, min_fraction: f64) -> Vec<f64> {
        let n = self.counts.len();
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let a = i.saturating_sub(1);
                let b = (i + 1).min(n - 1);
                (a..=b).map(|j| self.counts[j] as f64).sum::<f64>() / (b - a + 1) as f64
            })
            .collect();
        let top = s.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            let left = if i == 0 { f64::NEG_INFINITY } else { s[i - 1] };
            let right = if j + 1 == n { f64::NEG_INFINITY } else { s[j + 1] };
            if s[i] > left && s[i] > right && s[i] >= min_fraction * top && s[i] > 0.0 {
                out.push(0.5 * (self.centre(i) + self.centre(j)));
            }
            i = j + 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub burn_in: usize,
    pub mean: Vec<f64>,
    pub acceptance_rate: f64,
    pub histograms: Vec<Histogram>,
}

/// Post-burn-in mean and histograms over `bounds`.
pub fn summarize(chain: &Chain, burn_in_fraction: f64, bounds: &[(f64, f64)], bins: usize) -> Result<ChainSummary, Error> {
    if !(0.0..=0.9).contains(&burn_in_fraction) {
        return Err(Error::Config("burn-in fraction must lie in [0, 0.9]".into()));
    }
    if chain.is_empty() {
        return Err(Error::Config("empty chain".into()));
    }
    let burn_in = (burn_in_fraction * chain.len() as f64).floor() as usize;
    let kept = &chain.samples[burn_in..];
    let d = chain.samples[0].len();
    let mean = (0..d).map(|i| kept.iter().map(|p| p[i]).sum::<f64>() / kept.len() as f64).collect();
    let histograms = (0..d)
        .map(|i| {
            let vals: Vec<f64> = kept.iter().map(|p| p[i]).collect();
            let (lo, hi) = bounds.get(i).copied().unwrap_or_else(|| {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi.max(lo + 1e-12))
            });
            Histogram::new(&vals, lo, hi, bins)
        })
        .collect();
    Ok(ChainSummary {
        burn_in,
        mean,
        acceptance_rate: chain.acceptance_rate(),
        histograms,
    })
}

impl ChainSummary {
    pub fn to_json(&self, model: &Model) -> String {
        let names = model.names();
        let params: Vec<serde_json::Value> = (0..self.mean.len())
            .map(|i| {
                let h = &self.histograms[i];
                serde_json::json!({
                    "name": names.get(i).copied().unwrap_or("p"),
                    "cm": self.mean[i],
                    "histogram": { "lo": h.lo, "hi": h.hi, "counts": h.counts },
                    "modes": h.modes(0.2),
                })
            })
            .collect();
        let v = serde_json::json!({
            "model": model.kind.to_string(),
            "burn_in": self.burn_in,
            "acceptance_rate": self.acceptance_rate,
            "parameters": params,
        });
        serde_json::to_string_pretty(&v).expect("summary serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_is_greedy_and_exclusive() {
        let r = [C::new(-0.48, 0.0), C::new(1.3, 0.0)];
        let c = [C::new(1.29, 0.0), C::new(-0.47, 0.0), C::new(-0.58, 0.0)];
        let m = match_nearest(&r, &c);
        assert_eq!(m, vec![Some(c[1]), Some(c[0])]);
        let m = match_nearest(&[C::new(0.0, 0.0), C::new(0.1, 0.0)], &[C::new(0.05, 0.0)]);
        assert_eq!(m.iter().filter(|v| v.is_some()).count(), 1);
    }

    #[test]
    fn constant_chain_summary() {
        let chain = Chain {
            samples: vec![vec![5.0]; 100],
            accepted: vec![true; 100],
            log_post: vec![0.0; 100],
            gamma2: 1.0,
            seed: 0,
        };
        let s = summarize(&chain, 0.2, &[(0.0, 8.0)], 40).unwrap();
        assert_eq!(s.mean, vec![5.0]);
        assert_eq!(s.histograms[0].counts.iter().filter(|c| **c > 0).count(), 1);
        assert!(summarize(&chain, 0.95, &[(0.0, 8.0)], 40).is_err());
    }

    #[test]
    fn histogram_modes() {
        let mut v = vec![5.1; 300];
        v.extend(vec![7.1; 200]);
        v.extend((0..50).map(|i| 4.0 + i as f64 * 0.08));
        let h = Histogram::new(&v, 0.0, 8.0, 40);
        let modes = h.modes(0.2);
        assert_eq!(modes.len(), 2, "{modes:?}");
        assert!((modes[0] - 5.1).abs() < 0.3 && (modes[1] - 7.1).abs() < 0.3, "{modes:?}");
    }

    #[test]
    fn prior_boxes_are_admissible() {
        for kind in [ModelKind::Constant, ModelKind::Radial, ModelKind::Complex] {
            Model::new(kind).validate(&Shape::LShape).unwrap();
        }
        let bad = Model {
            kind: ModelKind::Radial,
            bounds: vec![(-1.0, 2.0), (0.0, 1.0)],
        };
        assert!(bad.validate(&Shape::Square).is_err());
    }
}

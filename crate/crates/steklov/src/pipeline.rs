//! Configuration, presets and the simulate / eigs / reconstruct / estimate pipeline.
//!
//! Config files are flat `key = value` lines grouped under `[section]`
//! headers; `#` starts a comment. A leading `preset = name` line starts from
//! one of the built-in presets and the remaining keys override it.

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bayes::{metropolis_hastings, summarize, ForwardMap, MhOptions, Misfit, Model, ModelKind, Posterior};
use crate::error::{Error, ParseError};
use crate::forward::{simulate, CauchyData};
use crate::geometry::{Coefficient, Scene, Shape};
use crate::rg::{detect_peaks, parse_peaks_csv, peaks_to_csv, sweep, Grid, Peak, SweepOptions, TikhonovForm};
use crate::steklov::{bessel_eigenvalues, schur_dense, sim, Method, SearchRect, SimOptions, SteklovPencil};

type C = Complex64;

/// Parses `a`, `a+bi`, `a-bi`, `bi`, `i`, `-i` (also with `j`), ignoring spaces.
pub fn parse_complex(s: &str) -> Result<C, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err("empty complex literal".into());
    }
    let bad = || format!("bad complex literal `{s}`");
    let finite = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite value in `{s}`"))
        }
    };
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return Ok(C::new(finite(t.parse().map_err(|_| bad())?)?, 0.0));
    };
    // Split before the last sign that is not a leading sign or an exponent sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().map_err(|_| bad())?,
    };
    let re = if re.is_empty() { 0.0 } else { re.parse().map_err(|_| bad())? };
    Ok(C::new(finite(re)?, finite(im)?))
}

pub fn format_complex(z: C) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Eigs,
    Reconstruct,
    Estimate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Eigs => "eigs",
            Stage::Reconstruct => "reconstruct-eigs",
            Stage::Estimate => "estimate-n",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "simulate" => Some(Stage::Simulate),
            "eigs" => Some(Stage::Eigs),
            "reconstruct" | "reconstruct-eigs" => Some(Stage::Reconstruct),
            "estimate" | "estimate-n" => Some(Stage::Estimate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub shape: Shape,
    pub index: Coefficient,
    pub scene: Scene,
    pub mesh_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgConfig {
    pub grid: Grid,
    pub sweep: SweepOptions,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigsConfig {
    pub method: Method,
    /// Defaults to the reconstruction grid's bounds.
    pub region: Option<SearchRect>,
    pub mesh_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesConfig {
    pub model: ModelKind,
    /// Eigenvalues to fit; when absent the reconstructed peaks are used.
    pub eigs: Option<Vec<C>>,
    /// Keep only the peaks nearest to these values.
    pub select: Option<Vec<C>>,
    pub sigma2: f64,
    pub samples: usize,
    pub seed: u64,
    pub gamma2: f64,
    pub burn_in: f64,
    pub misfit: Misfit,
    pub forward_mesh_size: f64,
    pub margin: f64,
    pub initial: Option<Vec<f64>>,
    pub bins: usize,
    /// Fit a constant first and report it next to the final model.
    pub two_stage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stages: Vec<Stage>,
    pub output: PathBuf,
    pub dataset: Option<PathBuf>,
    pub peaks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub name: String,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub rg: RgConfig,
    pub eigs: EigsConfig,
    pub bayes: BayesConfig,
    pub run: RunConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            scene: SceneConfig {
                shape: Shape::unit_disc(),
                index: Coefficient::real(5.0),
                scene: Scene::default(),
                mesh_size: 0.05,
            },
            noise: NoiseConfig { level: 0.03, seed: 1 },
            rg: RgConfig {
                grid: Grid::Interval {
                    a: -5.0,
                    b: 5.0,
                    step: 0.02,
                },
                sweep: SweepOptions::default(),
                threshold: 5.0,
            },
            eigs: EigsConfig {
                method: Method::Schur,
                region: None,
                mesh_size: 0.05,
            },
            bayes: BayesConfig {
                model: ModelKind::Constant,
                eigs: None,
                select: None,
                sigma2: 0.05,
                samples: 3000,
                seed: 1,
                gamma2: 2.4 * 2.4 / 2.0,
                burn_in: 0.2,
                misfit: Misfit::Squared,
                forward_mesh_size: 0.1,
                margin: 0.5,
                initial: None,
                bins: 40,
                two_stage: false,
            },
            run: RunConfig {
                stages: vec![Stage::Simulate, Stage::Reconstruct],
                output: PathBuf::from("out"),
                dataset: None,
                peaks: None,
            },
        }
    }
}

const SHAPES: [(&str, Shape); 3] = [
    ("disc", Shape::Disc { radius: 1.0 }),
    ("square", Shape::Square),
    ("lshape", Shape::LShape),
];

/// Names and one-line descriptions of the built-in presets.
pub fn list_presets() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for ex in 1..=6 {
        for (s, _) in SHAPES {
            let name = format!("example{ex}-{s}");
            let cfg = preset(&name).expect("built-in preset");
            out.push((name, describe(&cfg)));
        }
    }
    out
}

fn describe(cfg: &PipelineConfig) -> String {
    let stages: Vec<&str> = cfg.run.stages.iter().map(|s| s.name()).collect();
    let mut d = format!("{} with n = {}; stages {}", cfg.scene.shape, cfg.scene.index, stages.join(","));
    if cfg.run.stages.contains(&Stage::Reconstruct) {
        let _ = write!(d, "; grid {}", grid_text(&cfg.rg.grid));
    }
    if cfg.run.stages.contains(&Stage::Estimate) {
        let eigs = cfg
            .bayes
            .eigs
            .as_ref()
            .map(|v| v.iter().map(|z| format_complex(*z)).collect::<Vec<_>>().join(" "));
        let _ = write!(
            d,
            "; {} model, eigenvalues {}",
            cfg.bayes.model,
            eigs.unwrap_or_else(|| "from peaks".into())
        );
    }
    d
}

/// Built-in configuration for `example<1-6>-<disc|square|lshape>`.
pub fn preset(name: &str) -> Result<PipelineConfig, Error> {
    let unknown = || Error::Config(format!("unknown preset `{name}`"));
    let (ex, shape_name) = name.strip_prefix("example").and_then(|r| r.split_once('-')).ok_or_else(unknown)?;
    let ex: u32 = ex.parse().map_err(|_| unknown())?;
    let shape = SHAPES.iter().find(|(s, _)| *s == shape_name).map(|(_, s)| *s).ok_or_else(unknown)?;
    let mut cfg = PipelineConfig {
        name: name.to_string(),
        ..Default::default()
    };
    cfg.scene.shape = shape;
    cfg.run.output = PathBuf::from("out").join(name);
    let real = |v: &[f64]| v.iter().map(|&x| C::new(x, 0.0)).collect::<Vec<_>>();
    let index = match ex {
        1 | 4 => Coefficient::real(5.0),
        2 | 5 => Coefficient::RadialAffine { b0: 4.0, b1: 2.0 },
        3 | 6 => Coefficient::Constant(C::new(2.0, 4.0)),
        _ => return Err(unknown()),
    };
    cfg.scene.index = index;
    match ex {
        1 | 2 => {}
        3 => {
            cfg.rg.grid = Grid::Rect {
                re0: -1.0,
                re1: 0.5,
                im0: -0.5,
                im1: 1.0,
                step: 0.02,
            };
        }
        _ => {
            cfg.run.stages = vec![Stage::Estimate];
            let (model, eigs) = match (ex, shape_name) {
                (4, "disc") => (ModelKind::Constant, real(&[-0.48])),
                (4, "square") => (ModelKind::Constant, real(&[-0.54])),
                (4, _) => (ModelKind::Constant, real(&[-0.52])),
                (5, "disc") => (ModelKind::Radial, real(&[2.10, -0.48])),
                (5, "square") => (ModelKind::Radial, real(&[0.42, -0.58])),
                (5, _) => (ModelKind::Radial, real(&[1.00, -0.50])),
                (6, "disc") => (ModelKind::Complex, vec![C::new(-0.02, 0.26)]),
                (6, "square") => (ModelKind::Complex, vec![C::new(-0.64, 0.02), C::new(0.12, 0.56)]),
                (6, _) => (ModelKind::Complex, vec![C::new(-0.1, 0.52), C::new(0.04, 0.22)]),
                _ => unreachable!(),
            };
            cfg.bayes.model = model;
            cfg.bayes.eigs = Some(eigs);
            cfg.bayes.two_stage = ex == 5;
        }
    }
    Ok(cfg)
}

fn grid_text(g: &Grid) -> String {
    match *g {
        Grid::Interval { a, b, step } => format!("interval {a} {b} {step}"),
        Grid::Rect { re0, re1, im0, im1, step } => format!("rect {re0} {re1} {im0} {im1} {step}"),
    }
}

fn index_text(c: &Coefficient) -> String {
    match *c {
        Coefficient::Constant(z) => format!("constant {} {}", z.re, z.im),
        Coefficient::RadialAffine { b0, b1 } => format!("radial {b0} {b1}"),
    }
}

fn list_text(v: &[C]) -> String {
    v.iter().map(|z| format_complex(*z)).collect::<Vec<_>>().join(" ")
}

impl PipelineConfig {
    /// Full config text; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sc = &self.scene;
        let _ = writeln!(s, "name = {}\n", self.name);
        let _ = writeln!(s, "[scene]");
        let _ = writeln!(s, "shape = {}", sc.shape);
        let _ = writeln!(s, "index = {}", index_text(&sc.index));
        let _ = writeln!(s, "k = {}", sc.scene.k);
        let _ = writeln!(s, "gamma_radius = {}", sc.scene.gamma_radius);
        let _ = writeln!(s, "source_radius = {}", sc.scene.source_radius);
        let _ = writeln!(s, "sources = {}", sc.scene.n_sources);
        let _ = writeln!(s, "receivers = {}", sc.scene.n_receivers);
        let _ = writeln!(s, "pml_inner = {}", sc.scene.pml_inner);
        let _ = writeln!(s, "pml_outer = {}", sc.scene.pml_outer);
        let _ = writeln!(s, "pml_strength = {}", sc.scene.pml_strength);
        let _ = writeln!(s, "mesh_size = {}\n", sc.mesh_size);
        let _ = writeln!(s, "[noise]\nlevel = {}\nseed = {}\n", self.noise.level, self.noise.seed);
        let rg = &self.rg;
        let _ = writeln!(s, "[rg]");
        let _ = writeln!(s, "grid = {}", grid_text(&rg.grid));
        let _ = writeln!(s, "alpha = {:e}", rg.sweep.alpha);
        let _ = writeln!(s, "z = {} {}", rg.sweep.z[0], rg.sweep.z[1]);
        let _ = writeln!(s, "fallback_z = {} {}", rg.sweep.fallback_z[0], rg.sweep.fallback_z[1]);
        let _ = writeln!(s, "directions = {}", rg.sweep.n_directions);
        let _ = writeln!(
            s,
            "tikhonov = {}",
            match rg.sweep.form {
                TikhonovForm::Standard => "standard",
                TikhonovForm::Literal => "literal",
            }
        );
        let _ = writeln!(s, "threshold = {}\n", rg.threshold);
        let _ = writeln!(s, "[eigs]\nmethod = {}", self.eigs.method);
        if let Some(r) = &self.eigs.region {
            let _ = writeln!(s, "region = {} {} {} {}", r.re.0, r.re.1, r.im.0, r.im.1);
        }
        let _ = writeln!(s, "mesh_size = {}\n", self.eigs.mesh_size);
        let b = &self.bayes;
        let _ = writeln!(s, "[bayes]\nmodel = {}", b.model);
        if let Some(e) = &b.eigs {
            let _ = writeln!(s, "eigs = {}", list_text(e));
        }
        if let Some(e) = &b.select {
            let _ = writeln!(s, "select = {}", list_text(e));
        }
        let _ = writeln!(s, "sigma2 = {}", b.sigma2);
        let _ = writeln!(s, "samples = {}", b.samples);
        let _ = writeln!(s, "seed = {}", b.seed);
        let _ = writeln!(s, "gamma2 = {}", b.gamma2);
        let _ = writeln!(s, "burn_in = {}", b.burn_in);
        let _ = writeln!(
            s,
            "misfit = {}",
            match b.misfit {
                Misfit::Squared => "squared",
                Misfit::Norm => "norm",
            }
        );
        let _ = writeln!(s, "forward_mesh_size = {}", b.forward_mesh_size);
        let _ = writeln!(s, "margin = {}", b.margin);
        if let Some(p) = &b.initial {
            let _ = writeln!(s, "initial = {}", p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        }
        let _ = writeln!(s, "bins = {}", b.bins);
        let _ = writeln!(s, "two_stage = {}\n", b.two_stage);
        let stages: Vec<&str> = self.run.stages.iter().map(|s| s.name()).collect();
        let _ = writeln!(s, "[run]\nstages = {}", stages.join(" "));
        let _ = writeln!(s, "output = {}", self.run.output.display());
        if let Some(p) = &self.run.dataset {
            let _ = writeln!(s, "dataset = {}", p.display());
        }
        if let Some(p) = &self.run.peaks {
            let _ = writeln!(s, "peaks = {}", p.display());
        }
        s
    }

    pub fn validate(&self) -> Result<(), Error> {
        let sc = &self.scene;
        sc.scene.validate(&sc.shape)?;
        sc.index.validate(&sc.shape)?;
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive")))
            }
        };
        pos(sc.mesh_size, "mesh size")?;
        pos(self.eigs.mesh_size, "eigenvalue mesh size")?;
        pos(self.bayes.forward_mesh_size, "forward mesh size")?;
        pos(self.rg.sweep.alpha, "alpha")?;
        pos(self.rg.threshold, "threshold")?;
        pos(self.bayes.sigma2, "sigma2")?;
        pos(self.bayes.gamma2, "gamma2")?;
        pos(self.bayes.margin, "margin")?;
        if !(0.0..1.0).contains(&self.noise.level) {
            return Err(Error::Config("noise level must lie in [0, 1)".into()));
        }
        if !(0.0..=0.9).contains(&self.bayes.burn_in) {
            return Err(Error::Config("burn-in must lie in [0, 0.9]".into()));
        }
        if self.bayes.samples == 0 || self.bayes.bins == 0 || self.rg.sweep.n_directions == 0 {
            return Err(Error::Config("sample, bin and direction counts must be positive".into()));
        }
        self.rg.grid.validate()?;
        let model = Model::new(self.bayes.model);
        if let Some(p) = &self.bayes.initial {
            if !model.contains(p) {
                return Err(Error::Config("initial sample lies outside the prior box".into()));
            }
        }
        let has = |s: Stage| self.run.stages.contains(&s);
        if has(Stage::Reconstruct) && !has(Stage::Simulate) && self.run.dataset.is_none() {
            return Err(Error::Config(
                "reconstruction needs a dataset: run simulate or set run.dataset".into(),
            ));
        }
        if has(Stage::Estimate) && self.bayes.eigs.is_none() && !has(Stage::Reconstruct) && self.run.peaks.is_none() {
            return Err(Error::Config(
                "estimation needs eigenvalues: set bayes.eigs, run reconstruction or set run.peaks".into(),
            ));
        }
        Ok(())
    }
}

fn parse_f64(v: &str, ln: usize) -> Result<f64, ParseError> {
    let x: f64 = v.parse().map_err(|_| ParseError::new(ln, format!("bad number `{v}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ParseError::new(ln, format!("non-finite number `{v}`")))
    }
}

fn parse_floats(v: &str, n: usize, ln: usize) -> Result<Vec<f64>, ParseError> {
    let out: Vec<f64> = v.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<_, _>>()?;
    if out.len() != n {
        return Err(ParseError::new(ln, format!("expected {n} numbers, found {}", out.len())));
    }
    Ok(out)
}

fn parse_uint<T: std::str::FromStr>(v: &str, ln: usize) -> Result<T, ParseError> {
    v.parse().map_err(|_| ParseError::new(ln, format!("bad integer `{v}`")))
}

fn parse_bool(v: &str, ln: usize) -> Result<bool, ParseError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ParseError::new(ln, format!("bad boolean `{v}`"))),
    }
}

fn parse_complex_list(v: &str, ln: usize) -> Result<Vec<C>, ParseError> {
    let out: Vec<C> = v
        .split([' ', ',', '\t'])
        .filter(|t| !t.is_empty())
        .map(|t| parse_complex(t).map_err(|m| ParseError::new(ln, m)))
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(ParseError::new(ln, "empty eigenvalue list"));
    }
    Ok(out)
}

fn parse_index(v: &str, ln: usize) -> Result<Coefficient, ParseError> {
    let mut it = v.split_whitespace();
    let kind = it.next().unwrap_or("");
    let rest: Vec<&str> = it.collect();
    let nums = |n: usize| parse_floats(&rest.join(" "), n, ln);
    match kind {
        "constant" if rest.len() == 1 => Ok(Coefficient::Constant(parse_complex(rest[0]).map_err(|m| ParseError::new(ln, m))?)),
        "constant" => {
            let p = nums(2)?;
            Ok(Coefficient::Constant(C::new(p[0], p[1])))
        }
        "radial" => {
            let p = nums(2)?;
            Ok(Coefficient::RadialAffine { b0: p[0], b1: p[1] })
        }
        _ => Err(ParseError::new(
            ln,
            format!("bad index `{v}` (constant <n> | constant <re> <im> | radial <b0> <b1>)"),
        )),
    }
}

fn parse_grid(v: &str, ln: usize) -> Result<Grid, ParseError> {
    let (kind, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
    match kind {
        "interval" => {
            let p = parse_floats(rest, 3, ln)?;
            Ok(Grid::Interval {
                a: p[0],
                b: p[1],
                step: p[2],
            })
        }
        "rect" => {
            let p = parse_floats(rest, 5, ln)?;
            Ok(Grid::Rect {
                re0: p[0],
                re1: p[1],
                im0: p[2],
                im1: p[3],
                step: p[4],
            })
        }
        _ => Err(ParseError::new(
            ln,
            format!("bad grid `{v}` (interval a b step | rect re0 re1 im0 im1 step)"),
        )),
    }
}

/// Parses config text. Semantic checks are left to [`PipelineConfig::validate`].
pub fn parse_config(text: &str) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::default();
    let mut section = String::new();
    let mut seen_key = false;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ParseError::new(ln, "unterminated section header"))?;
            if !["scene", "noise", "rg", "eigs", "bayes", "run"].contains(&name.trim()) {
                return Err(ParseError::new(ln, format!("unknown section `{name}`")).into());
            }
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ParseError::new(ln, "expected `key = value`"))?;
        let (key, v) = (key.trim(), value.trim());
        let err = |m: String| -> Error { ParseError::new(ln, m).into() };
        match (section.as_str(), key) {
            ("", "preset") => {
                if seen_key {
                    return Err(err("`preset` must come before other keys".into()));
                }
                cfg = preset(v).map_err(|e| err(e.to_string()))?;
            }
            ("", "name") => cfg.name = v.to_string(),
            ("scene", "shape") => cfg.scene.shape = v.parse().map_err(|e: Error| err(e.to_string()))?,
            ("scene", "index") => cfg.scene.index = parse_index(v, ln)?,
            ("scene", "k") => cfg.scene.scene.k = parse_f64(v, ln)?,
            ("scene", "gamma_radius") => cfg.scene.scene.gamma_radius = parse_f64(v, ln)?,
            ("scene", "source_radius") => cfg.scene.scene.source_radius = parse_f64(v, ln)?,
            ("scene", "sources") => cfg.scene.scene.n_sources = parse_uint(v, ln)?,
            ("scene", "receivers") => cfg.scene.scene.n_receivers = parse_uint(v, ln)?,
            ("scene", "pml_inner") => cfg.scene.scene.pml_inner = parse_f64(v, ln)?,
            ("scene", "pml_outer") => cfg.scene.scene.pml_outer = parse_f64(v, ln)?,
            ("scene", "pml_strength") => cfg.scene.scene.pml_strength = parse_f64(v, ln)?,
            ("scene", "mesh_size") => cfg.scene.mesh_size = parse_f64(v, ln)?,
            ("noise", "level") => cfg.noise.level = parse_f64(v, ln)?,
            ("noise", "seed") => cfg.noise.seed = parse_uint(v, ln)?,
            ("rg", "grid") => cfg.rg.grid = parse_grid(v, ln)?,
            ("rg", "alpha") => cfg.rg.sweep.alpha = parse_f64(v, ln)?,
            ("rg", "z") => {
                let p = parse_floats(v, 2, ln)?;
                cfg.rg.sweep.z = [p[0], p[1]];
            }
            ("rg", "fallback_z") => {
                let p = parse_floats(v, 2, ln)?;
                cfg.rg.sweep.fallback_z = [p[0], p[1]];
            }
            ("rg", "directions") => cfg.rg.sweep.n_directions = parse_uint(v, ln)?,
            ("rg", "tikhonov") => {
                cfg.rg.sweep.form = match v {
                    "standard" => TikhonovForm::Standard,
                    "literal" => TikhonovForm::Literal,
                    _ => return Err(err(format!("bad tikhonov form `{v}` (standard | literal)"))),
                }
            }
            ("rg", "threshold") => cfg.rg.threshold = parse_f64(v, ln)?,
            ("eigs", "method") => cfg.eigs.method = v.parse().map_err(|e: Error| err(e.to_string()))?,
            ("eigs", "region") => {
                let p = parse_floats(v, 4, ln)?;
                cfg.eigs.region = Some(SearchRect::new(p[0], p[1], p[2], p[3]));
            }
            ("eigs", "mesh_size") => cfg.eigs.mesh_size = parse_f64(v, ln)?,
            ("bayes", "model") => cfg.bayes.model = v.parse().map_err(|e: Error| err(e.to_string()))?,
            ("bayes", "eigs") => cfg.bayes.eigs = Some(parse_complex_list(v, ln)?),
            ("bayes", "select") => cfg.bayes.select = Some(parse_complex_list(v, ln)?),
            ("bayes", "sigma2") => cfg.bayes.sigma2 = parse_f64(v, ln)?,
            ("bayes", "samples") => cfg.bayes.samples = parse_uint(v, ln)?,
            ("bayes", "seed") => cfg.bayes.seed = parse_uint(v, ln)?,
            ("bayes", "gamma2") => cfg.bayes.gamma2 = parse_f64(v, ln)?,
            ("bayes", "burn_in") => cfg.bayes.burn_in = parse_f64(v, ln)?,
            ("bayes", "misfit") => {
                cfg.bayes.misfit = match v {
                    "squared" => Misfit::Squared,
                    "norm" => Misfit::Norm,
                    _ => return Err(err(format!("bad misfit `{v}` (squared | norm)"))),
                }
            }
            ("bayes", "forward_mesh_size") => cfg.bayes.forward_mesh_size = parse_f64(v, ln)?,
            ("bayes", "margin") => cfg.bayes.margin = parse_f64(v, ln)?,
            ("bayes", "initial") => {
                let p: Vec<f64> = v.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<_, _>>()?;
                cfg.bayes.initial = Some(p);
            }
            ("bayes", "bins") => cfg.bayes.bins = parse_uint(v, ln)?,
            ("bayes", "two_stage") => cfg.bayes.two_stage = parse_bool(v, ln)?,
            ("run", "stages") => {
                cfg.run.stages = v
                    .split_whitespace()
                    .map(|s| Stage::parse(s).ok_or_else(|| err(format!("unknown stage `{s}`"))))
                    .collect::<Result<_, _>>()?;
            }
            ("run", "output") => cfg.run.output = PathBuf::from(v),
            ("run", "dataset") => cfg.run.dataset = Some(PathBuf::from(v)),
            ("run", "peaks") => cfg.run.peaks = Some(PathBuf::from(v)),
            (sec, key) => {
                let at = if sec.is_empty() {
                    "top level".to_string()
                } else {
                    format!("[{sec}]")
                };
                return Err(err(format!("unknown key `{key}` at {at}")));
            }
        }
        seen_key = true;
    }
    Ok(cfg)
}

/// One produced file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::from("steklov-manifest v1\n");
        for e in &self.entries {
            let _ = writeln!(s, "{}  {}  {}", e.sha256, e.bytes, e.name);
        }
        s
    }

    pub fn get(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Everything produced by a pipeline run, in memory.
#[derive(Debug, Default)]
pub struct PipelineOutput {
    pub manifest: Manifest,
    pub data: Option<CauchyData>,
    pub peaks: Option<Vec<Peak>>,
    pub eigenvalues: Option<Vec<C>>,
    pub posterior_mean: Option<Vec<f64>>,
    pub constant_mean: Option<f64>,
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, content: &str) -> Result<(), Error> {
        fs::write(self.dir.join(name), content)?;
        let hash = Sha256::digest(content.as_bytes());
        let sha256 = hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.manifest.entries.push(ManifestEntry {
            name: name.to_string(),
            sha256,
            bytes: content.len(),
        });
        Ok(())
    }
}

fn stage<T>(s: Stage, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| Error::Stage {
        stage: s.name(),
        source: Box::new(e),
    })
}

/// Keeps, for each target, the nearest peak.
pub fn select_peaks(peaks: &[Peak], targets: &[C]) -> Vec<C> {
    targets
        .iter()
        .filter_map(|t| {
            peaks
                .iter()
                .min_by(|a, b| (a.lambda - t).norm().total_cmp(&(b.lambda - t).norm()))
                .map(|p| p.lambda)
        })
        .collect()
}

/// Runs the configured stages, writing outputs and `manifest.txt` into `run.output`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, Error> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.run.output)?;
    let mut w = Writer {
        dir: &cfg.run.output,
        manifest: Manifest::default(),
    };
    let mut out = PipelineOutput::default();
    let has = |s: Stage| cfg.run.stages.contains(&s);

    if !cfg.run.stages.is_empty() {
        // Output location is left out so identical runs hash identically.
        let resolved: String = cfg
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output ="))
            .map(|l| format!("{l}\n"))
            .collect();
        w.put("config.txt", &resolved)?;
    }

    if has(Stage::Simulate) {
        let data = stage(Stage::Simulate, simulate_stage(cfg))?;
        w.put("dataset.txt", &data.to_text())?;
        out.data = Some(data);
    } else if let Some(p) = &cfg.run.dataset {
        if has(Stage::Reconstruct) {
            let text = fs::read_to_string(p)?;
            out.data = Some(CauchyData::from_text(&text)?);
        }
    }

    if has(Stage::Eigs) {
        let csv = stage(Stage::Eigs, eigs_stage(cfg))?;
        w.put("eigs.csv", &csv)?;
    }

    if has(Stage::Reconstruct) {
        let data = out.data.as_ref().expect("dataset resolved above");
        let (field_csv, peaks) = stage(
            Stage::Reconstruct,
            (|| {
                let field = sweep(data, &cfg.rg.grid, &cfg.rg.sweep)?;
                let peaks = detect_peaks(&field, cfg.rg.threshold)?;
                Ok((field.to_csv(), peaks))
            })(),
        )?;
        w.put("indicator.csv", &field_csv)?;
        w.put("peaks.csv", &peaks_to_csv(&peaks))?;
        out.peaks = Some(peaks);
    } else if let Some(p) = &cfg.run.peaks {
        if has(Stage::Estimate) {
            out.peaks = Some(parse_peaks_csv(&fs::read_to_string(p)?)?);
        }
    }

    if has(Stage::Estimate) {
        let eigs = match (&cfg.bayes.eigs, &out.peaks) {
            (Some(e), _) => e.clone(),
            (None, Some(p)) => match &cfg.bayes.select {
                Some(t) => select_peaks(p, t),
                None => p.iter().map(|p| p.lambda).collect(),
            },
            (None, None) => unreachable!("validated"),
        };
        let est = stage(Stage::Estimate, estimate_stage(cfg, &eigs))?;
        if let Some((csv, mean)) = &est.stage1 {
            w.put("chain_constant.csv", csv)?;
            out.constant_mean = Some(*mean);
        }
        w.put("chain.csv", &est.chain_csv)?;
        w.put("summary.json", &est.summary_json)?;
        out.posterior_mean = Some(est.mean);
        out.eigenvalues = Some(eigs);
    }

    w.manifest.entries.sort_by(|a, b| a.name.cmp(&b.name));
    fs::write(cfg.run.output.join("manifest.txt"), w.manifest.to_text())?;
    out.manifest = w.manifest;
    Ok(out)
}

fn simulate_stage(cfg: &PipelineConfig) -> Result<CauchyData, Error> {
    let sc = &cfg.scene;
    let mut data = simulate(sc.shape, &sc.index, &sc.scene, sc.mesh_size)?;
    if cfg.noise.level > 0.0 {
        data.add_noise(cfg.noise.level, cfg.noise.seed);
    }
    Ok(data)
}

fn eigs_stage(cfg: &PipelineConfig) -> Result<String, Error> {
    let sc = &cfg.scene;
    let region = cfg.eigs.region.unwrap_or_else(|| match cfg.rg.grid {
        Grid::Interval { a, b, .. } => SearchRect::real_interval(a, b, 0.1),
        g => g.bounds(),
    });
    let set = match (cfg.eigs.method, sc.shape, sc.index) {
        (Method::Bessel, Shape::Disc { radius }, Coefficient::Constant(n)) => {
            bessel_eigenvalues(n, radius, sc.scene.gamma_radius, sc.scene.k, &region)?
        }
        (Method::Bessel, ..) => return Err(Error::Config("closed form needs a disc with a constant index".into())),
        (Method::Rg, ..) => return Err(Error::Config("use the reconstruction stage for indicator peaks".into())),
        (method, ..) => {
            let pencil = SteklovPencil::new(sc.shape, &sc.index, sc.scene.k, sc.scene.gamma_radius, cfg.eigs.mesh_size)?;
            match method {
                Method::Sim => sim(&pencil, &region, &SimOptions::default())?.eigenvalues,
                _ => schur_dense(&pencil, &region)?,
            }
        }
    };
    Ok(set.to_csv())
}

struct Estimate {
    chain_csv: String,
    summary_json: String,
    mean: Vec<f64>,
    stage1: Option<(String, f64)>,
}

fn run_chain(cfg: &PipelineConfig, model: Model, eigs: &[C], initial: Option<Vec<f64>>) -> Result<(crate::bayes::Chain, Posterior), Error> {
    let sc = &cfg.scene;
    let b = &cfg.bayes;
    let fwd = ForwardMap::new(
        sc.shape,
        model.clone(),
        sc.scene.k,
        sc.scene.gamma_radius,
        b.forward_mesh_size,
        eigs,
        b.margin,
    )?;
    let post = Posterior::new(eigs.to_vec(), b.sigma2, b.misfit, fwd)?;
    let initial = initial.unwrap_or_else(|| model.default_initial());
    let opts = MhOptions {
        samples: b.samples,
        gamma2: b.gamma2,
        seed: b.seed,
    };
    let chain = metropolis_hastings(&|p| post.log_density(p), &initial, &opts)?;
    Ok((chain, post))
}

fn estimate_stage(cfg: &PipelineConfig, eigs: &[C]) -> Result<Estimate, Error> {
    if eigs.is_empty() {
        return Err(Error::Numerical("no eigenvalues to fit".into()));
    }
    let b = &cfg.bayes;
    let stage1 = if b.two_stage && b.model != ModelKind::Constant {
        let model = Model::new(ModelKind::Constant);
        let (chain, _) = run_chain(cfg, model.clone(), eigs, None)?;
        let s = summarize(&chain, b.burn_in, &model.bounds, b.bins)?;
        Some((chain.to_csv(model.names()), s.mean[0]))
    } else {
        None
    };
    let model = Model::new(b.model);
    let (chain, _) = run_chain(cfg, model.clone(), eigs, b.initial.clone())?;
    let summary = summarize(&chain, b.burn_in, &model.bounds, b.bins)?;
    let mut json = summary.to_json(&model);
    if let Some((_, n0)) = &stage1 {
        // Splice the constant pre-fit into the top-level object.
        json = json.replacen('{', &format!("{{\n  \"constant_prefit_cm\": {n0:?},"), 1);
    }
    Ok(Estimate {
        chain_csv: chain.to_csv(model.names()),
        summary_json: json,
        mean: summary.mean,
        stage1,
    })
}

/// Caps the global worker pool. Only the first call has an effect.
pub fn configure_threads(n: usize) -> Result<(), Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let cases = [
            ("5", C::new(5.0, 0.0)),
            ("-0.48", C::new(-0.48, 0.0)),
            ("-0.02+0.26i", C::new(-0.02, 0.26)),
            ("2-4j", C::new(2.0, -4.0)),
            ("i", C::new(0.0, 1.0)),
            ("-i", C::new(0.0, -1.0)),
            ("3.5i", C::new(0.0, 3.5)),
            ("1e-3+2E-1i", C::new(1e-3, 0.2)),
            ("-1e+2-i", C::new(-100.0, -1.0)),
            (" 1 + 2i ", C::new(1.0, 2.0)),
        ];
        for (s, z) in cases {
            assert_eq!(parse_complex(s).unwrap(), z, "{s}");
        }
        for bad in ["", "abc", "1+", "1+2", "++i", "1i2", "nan", "inf+i"] {
            assert!(parse_complex(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn eighteen_presets() {
        let p = list_presets();
        assert_eq!(p.len(), 18);
        let e3 = preset("example3-lshape").unwrap();
        assert_eq!(
            e3.rg.grid,
            Grid::Rect {
                re0: -1.0,
                re1: 0.5,
                im0: -0.5,
                im1: 1.0,
                step: 0.02
            }
        );
        let e5 = preset("example5-square").unwrap();
        assert_eq!(e5.bayes.eigs, Some(vec![C::new(0.42, 0.0), C::new(-0.58, 0.0)]));
        assert!(preset("example7-disc").is_err());
        assert!(preset("example1-circle").is_err());
    }

    #[test]
    fn config_round_trip() {
        for (name, _) in list_presets() {
            let cfg = preset(&name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn overrides_apply_after_preset() {
        let cfg = parse_config("preset = example1-disc\n[noise]\nseed = 9\n[rg]\nalpha = 1e-4\n").unwrap();
        assert_eq!(cfg.noise.seed, 9);
        assert_eq!(cfg.rg.sweep.alpha, 1e-4);
        assert_eq!(cfg.scene.shape, Shape::unit_disc());
        assert!(parse_config("[noise]\nseed = 1\npreset = example1-disc\n").is_err());
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let e = parse_config("[scene]\nshape = disc\nk = fast\n").unwrap_err();
        assert!(matches!(e, Error::Parse(ParseError { line: 3, .. })), "{e}");
        assert!(parse_config("[nope]\n").is_err());
        assert!(parse_config("[scene]\ncolour = red\n").is_err());
        assert!(parse_config("[scene\n").is_err());
        assert_eq!(parse_config("[scene]\nk = fast\n").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn empty_stage_list_gives_empty_manifest() {
        let dir = std::env::temp_dir().join(format!("steklov-empty-{}", std::process::id()));
        let mut cfg = PipelineConfig::default();
        cfg.run.stages.clear();
        cfg.run.output = dir.clone();
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.manifest.entries.is_empty());
        assert_eq!(fs::read_to_string(dir.join("manifest.txt")).unwrap(), "steklov-manifest v1\n");
        let _ = fs::remove_dir_all(dir);
    }
}

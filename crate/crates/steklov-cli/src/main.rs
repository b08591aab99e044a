use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use steklov::error::Error;
use steklov::mesh::{generate, MeshRequest};
use steklov::pipeline::{list_presets, parse_config, preset, run_pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(
    name = "steklov-rg",
    version,
    about = "Steklov eigenvalues from Cauchy data and Bayesian index estimation"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate noisy Cauchy data with the finite element forward solver.
    Simulate {
        #[command(flatten)]
        base: Base,
        #[command(flatten)]
        scene: SceneArgs,
        /// Also write the scene mesh to this path.
        #[arg(long)]
        export_mesh: Option<PathBuf>,
    },
    /// Steklov eigenvalues of the scatterer from the closed form or the FEM pencil.
    Eigs {
        #[command(flatten)]
        base: Base,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        eigs: EigsArgs,
    },
    /// Indicator sweep and peak detection from a stored dataset.
    ReconstructEigs {
        #[command(flatten)]
        base: Base,
        /// Cauchy data written by `simulate`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        rg: RgArgs,
    },
    /// Metropolis-Hastings estimate of the refractive index.
    EstimateN {
        #[command(flatten)]
        base: Base,
        #[command(flatten)]
        scene: SceneArgs,
        /// Peaks CSV written by `reconstruct-eigs`.
        #[arg(long)]
        peaks: Option<PathBuf>,
        #[command(flatten)]
        bayes: BayesArgs,
    },
    /// Run the stages listed in the config.
    Run {
        #[command(flatten)]
        base: Base,
        /// Space-separated stage list, e.g. "simulate reconstruct-eigs".
        #[arg(long)]
        stages: Option<String>,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        rg: RgArgs,
        #[command(flatten)]
        eigs: EigsArgs,
        #[command(flatten)]
        bayes: BayesArgs,
    },
    /// List the built-in presets, or print one as a config file.
    Presets {
        /// Preset to print in full.
        name: Option<String>,
    },
}

#[derive(Args)]
struct Base {
    /// Config file; `preset = <name>` inside it selects a starting preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a built-in preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SceneArgs {
    /// disc | square | lshape
    #[arg(long)]
    shape: Option<String>,
    /// "constant 5", "constant 2 4", "constant 2+4i" or "radial 4 2".
    #[arg(long)]
    index: Option<String>,
    #[arg(long)]
    k: Option<f64>,
    /// Mesh size of the forward solver (for `eigs`, of the eigenvalue pencil).
    #[arg(long)]
    mesh_size: Option<f64>,
    /// Multiplicative noise level.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args)]
struct RgArgs {
    #[arg(long, num_args = 3, value_names = ["A", "B", "STEP"], allow_negative_numbers = true)]
    grid_interval: Option<Vec<f64>>,
    #[arg(long, num_args = 5, value_names = ["RE0", "RE1", "IM0", "IM1", "STEP"], allow_negative_numbers = true, conflicts_with = "grid_interval")]
    grid_rect: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
    z: Option<Vec<f64>>,
    /// Peak threshold as a multiple of the median indicator value.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    directions: Option<usize>,
    /// Regularise with alpha*A instead of alpha*I.
    #[arg(long)]
    tikhonov_paper_form: bool,
}

#[derive(Args)]
struct EigsArgs {
    /// bessel | schur | sim
    #[arg(long)]
    method: Option<String>,
    #[arg(long, num_args = 4, value_names = ["RE0", "RE1", "IM0", "IM1"], allow_negative_numbers = true)]
    region: Option<Vec<f64>>,
}

#[derive(Args)]
struct BayesArgs {
    /// Eigenvalues to fit, e.g. "-0.48" or "-0.64+0.02i 0.12+0.56i".
    #[arg(long, allow_hyphen_values = true)]
    eigs: Option<String>,
    /// Keep only the peaks nearest to these values.
    #[arg(long, allow_hyphen_values = true)]
    select: Option<String>,
    /// constant | radial | complex
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma2: Option<f64>,
    /// Fraction of the chain discarded before averaging.
    #[arg(long)]
    burn_in: Option<f64>,
    /// squared | norm
    #[arg(long)]
    misfit: Option<String>,
    #[arg(long)]
    forward_mesh_size: Option<f64>,
    /// Fit a constant index first and report it alongside.
    #[arg(long)]
    two_stage: bool,
}

/// Applies `[section] key = value` overrides through the config parser so
/// flags and files share one validation path.
struct Overrides(String);

impl Overrides {
    fn set(&mut self, section: &str, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.0.push_str(&format!("[{section}]\n{key} = {v}\n"));
        }
    }

    fn scene(&mut self, a: &SceneArgs) {
        self.set("scene", "shape", a.shape.clone());
        self.set("scene", "index", a.index.clone());
        self.set("scene", "k", a.k.map(|v| v.to_string()));
        self.set("noise", "level", a.noise.map(|v| v.to_string()));
        self.set("noise", "seed", a.noise_seed.map(|v| v.to_string()));
    }

    fn rg(&mut self, a: &RgArgs) {
        let join = |v: &Vec<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        self.set("rg", "grid", a.grid_interval.as_ref().map(|v| format!("interval {}", join(v))));
        self.set("rg", "grid", a.grid_rect.as_ref().map(|v| format!("rect {}", join(v))));
        self.set("rg", "alpha", a.alpha.map(|v| v.to_string()));
        self.set("rg", "z", a.z.as_ref().map(join));
        self.set("rg", "threshold", a.threshold.map(|v| v.to_string()));
        self.set("rg", "directions", a.directions.map(|v| v.to_string()));
        if a.tikhonov_paper_form {
            self.set("rg", "tikhonov", Some("literal".into()));
        }
    }

    fn eigs(&mut self, a: &EigsArgs) {
        self.set("eigs", "method", a.method.clone());
        self.set(
            "eigs",
            "region",
            a.region
                .as_ref()
                .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")),
        );
    }

    fn bayes(&mut self, a: &BayesArgs) {
        self.set("bayes", "eigs", a.eigs.clone());
        self.set("bayes", "select", a.select.clone());
        self.set("bayes", "model", a.model.clone());
        self.set("bayes", "sigma2", a.sigma2.map(|v| v.to_string()));
        self.set("bayes", "samples", a.samples.map(|v| v.to_string()));
        self.set("bayes", "seed", a.seed.map(|v| v.to_string()));
        self.set("bayes", "gamma2", a.gamma2.map(|v| v.to_string()));
        self.set("bayes", "burn_in", a.burn_in.map(|v| v.to_string()));
        self.set("bayes", "misfit", a.misfit.clone());
        self.set("bayes", "forward_mesh_size", a.forward_mesh_size.map(|v| v.to_string()));
        if a.two_stage {
            self.set("bayes", "two_stage", Some("true".into()));
        }
    }
}

fn load(base: &Base) -> Result<PipelineConfig, Error> {
    let mut text = String::new();
    if let Some(p) = &base.config {
        text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
    } else if let Some(name) = &base.preset {
        text = format!("preset = {name}\n");
    }
    if let Some(out) = &base.output {
        text.push_str(&format!("[run]\noutput = {}\n", out.display()));
    }
    parse_config(&text)
}

fn finish(mut cfg: PipelineConfig, extra: Overrides) -> Result<PipelineConfig, Error> {
    if !extra.0.is_empty() {
        // Re-parse the resolved config with the overrides appended.
        let text = cfg.to_text() + &extra.0;
        cfg = parse_config(&text)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        steklov::pipeline::configure_threads(n)?;
    }
    let (cfg, export_mesh) = match cli.command {
        Command::Presets { name: None } => {
            for (name, desc) in list_presets() {
                println!("{name:<18} {desc}");
            }
            return Ok(());
        }
        Command::Presets { name: Some(name) } => {
            print!("{}", preset(&name)?.to_text());
            return Ok(());
        }
        Command::Simulate { base, scene, export_mesh } => {
            let mut o = Overrides(String::new());
            o.scene(&scene);
            o.set("scene", "mesh_size", scene.mesh_size.map(|v| v.to_string()));
            let mut cfg = finish(load(&base)?, o)?;
            cfg.run.stages = vec![Stage::Simulate];
            (cfg, export_mesh)
        }
        Command::Eigs { base, scene, eigs } => {
            let mut o = Overrides(String::new());
            o.scene(&scene);
            o.set("eigs", "mesh_size", scene.mesh_size.map(|v| v.to_string()));
            o.eigs(&eigs);
            let mut cfg = finish(load(&base)?, o)?;
            cfg.run.stages = vec![Stage::Eigs];
            (cfg, None)
        }
        Command::ReconstructEigs { base, dataset, rg } => {
            let mut o = Overrides(String::new());
            o.rg(&rg);
            o.set("run", "dataset", dataset.map(|p| p.display().to_string()));
            let mut cfg = finish(load(&base)?, o)?;
            cfg.run.stages = vec![Stage::Reconstruct];
            (cfg, None)
        }
        Command::EstimateN { base, scene, peaks, bayes } => {
            let mut o = Overrides(String::new());
            o.scene(&scene);
            o.bayes(&bayes);
            o.set("run", "peaks", peaks.map(|p| p.display().to_string()));
            let mut cfg = finish(load(&base)?, o)?;
            if bayes.eigs.is_none() && cfg.run.peaks.is_some() {
                // An explicit peaks file wins over eigenvalues wired into a preset.
                cfg.bayes.eigs = None;
            }
            cfg.run.stages = vec![Stage::Estimate];
            (cfg, None)
        }
        Command::Run {
            base,
            stages,
            scene,
            rg,
            eigs,
            bayes,
        } => {
            let mut o = Overrides(String::new());
            o.scene(&scene);
            o.set("scene", "mesh_size", scene.mesh_size.map(|v| v.to_string()));
            o.rg(&rg);
            o.eigs(&eigs);
            o.bayes(&bayes);
            o.set("run", "stages", stages);
            (finish(load(&base)?, o)?, None)
        }
    };
    if let Some(path) = export_mesh {
        let sc = &cfg.scene;
        let mesh = generate(&MeshRequest::scene(sc.shape, &sc.scene, sc.mesh_size))?;
        fs::write(path, mesh.to_text())?;
    }
    let out = run_pipeline(&cfg)?;
    println!("output: {}", cfg.run.output.display());
    print!("{}", out.manifest.to_text());
    if let Some(p) = &out.peaks {
        for pk in p {
            println!("peak {:.4}{:+.4}i  g = {:.4e}", pk.lambda.re, pk.lambda.im, pk.value);
        }
    }
    if let Some(n0) = out.constant_mean {
        println!("constant pre-fit CM: {n0:.4}");
    }
    if let Some(m) = &out.posterior_mean {
        let names = steklov::bayes::Model::new(cfg.bayes.model).names();
        let parts: Vec<String> = names.iter().zip(m).map(|(n, v)| format!("{n} = {v:.4}")).collect();
        println!("posterior CM: {}", parts.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

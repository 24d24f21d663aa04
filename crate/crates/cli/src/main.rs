//! `gedmrg`: XXZ divergence and mutual-information sweeps.
//!
//! Exit codes: 0 when every point converged, 1 when some point did not,
//! 2 for invalid configuration, 3 when the output cannot be written.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use gedmrg::divergence::GeometryKind;
use gedmrg::exec::Executor;
use gedmrg::pipeline::{
    meta_path, run_sweep, write_outputs, Method, Model, PipelineError, RunConfig,
};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Xxz,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeometryArg {
    Aeb,
    Eaebe,
    Custom,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Edge,
    Gdmrg,
    Exact,
    Vn,
    FreeFermion,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Edge => Method::Edge,
            MethodArg::Gdmrg => Method::Gdmrg,
            MethodArg::Exact => Method::Exact,
            MethodArg::Vn => Method::Vn,
            MethodArg::FreeFermion => Method::FreeFermion,
        }
    }
}

/// Maximal Rényi divergence and mutual information of XXZ ground states.
///
/// Flags override values read from --config. The dense oracle limit can be
/// raised with the GEDMRG_DENSE_LIMIT environment variable.
#[derive(Debug, Parser)]
#[command(name = "gedmrg", version)]
struct Cli {
    /// TOML file with run parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Exchange coupling.
    #[arg(long = "J", allow_hyphen_values = true)]
    j: Option<f64>,
    /// Anisotropy; repeat or separate with commas for a sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta: Vec<f64>,
    /// Longitudinal field.
    #[arg(long, allow_hyphen_values = true)]
    h: Option<f64>,
    /// Chain length.
    #[arg(long = "n", alias = "N")]
    n: Option<usize>,
    #[arg(long, value_enum)]
    geometry: Option<GeometryArg>,
    /// Region size for aeb and eaebe.
    #[arg(long)]
    ns: Option<usize>,
    /// Sites of A for the custom geometry.
    #[arg(long, value_delimiter = ',')]
    region_a: Option<Vec<usize>>,
    /// Sites of B for the custom geometry.
    #[arg(long, value_delimiter = ',')]
    region_b: Option<Vec<usize>>,
    /// Bond dimension of both the ground state and the divergence states.
    #[arg(long)]
    chi: Option<usize>,
    /// Bond cap of compressed operators (default chi^2).
    #[arg(long)]
    chi_1: Option<usize>,
    /// Regularization added to the product of marginals.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Measure to evaluate; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sweep points evaluated concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Cli {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(ModelArg::Xxz) = self.model {
            cfg.model = Model::Xxz;
        }
        if let Some(j) = self.j {
            cfg.j = j;
        }
        if !self.delta.is_empty() {
            cfg.delta = self.delta.clone();
        }
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(g) = self.geometry {
            cfg.geometry = match g {
                GeometryArg::Aeb => GeometryKind::Aeb,
                GeometryArg::Eaebe => GeometryKind::Eaebe,
                GeometryArg::Custom => GeometryKind::Custom,
            };
        }
        if let Some(ns) = self.ns {
            cfg.ns = ns;
        }
        if let Some(a) = &self.region_a {
            cfg.region_a = a.clone();
        }
        if let Some(b) = &self.region_b {
            cfg.region_b = b.clone();
        }
        if let Some(chi) = self.chi {
            cfg.chi_s = chi;
            cfg.chi_2 = chi;
        }
        if self.chi_1.is_some() {
            cfg.chi_1 = self.chi_1;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if !self.method.is_empty() {
            cfg.methods = self.method.iter().map(|&m| m.into()).collect();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = cli.run_config()?;
    let exec = Executor::with_jobs(cfg.jobs);
    log::info!("{} point(s) on {} worker(s)", cfg.delta.len(), exec.jobs());
    let out = run_sweep(&cfg, exec)?;
    for p in &out.points {
        for e in &p.errors {
            log::warn!("delta = {}: {e}", p.delta);
        }
    }
    write_outputs(&out)?;
    log::info!(
        "wrote {} and {}",
        out.config.output.display(),
        meta_path(&out.config.output).display()
    );
    if !out.all_converged {
        let bad: Vec<String> = out
            .points
            .iter()
            .filter(|p| !p.converged)
            .map(|p| p.delta.to_string())
            .collect();
        log::error!("not converged at delta = {}", bad.join(", "));
    }
    Ok(out.all_converged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            match e.downcast_ref::<PipelineError>() {
                Some(PipelineError::Config(_)) => ExitCode::from(2),
                Some(_) => ExitCode::from(3),
                None => ExitCode::from(2),
            }
        }
    }
}

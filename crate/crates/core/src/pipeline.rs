//! Batch evaluation over XXZ parameter sweeps.
//!
//! Each sweep point builds the XXZ ground state with DMRG, then evaluates
//! the requested measures. Points are independent and run through an
//! [`Executor`]. Records are sorted before they are written, so output does
//! not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::divergence::{
    max_divergence_dense, max_divergence_edge, max_divergence_general, mutual_information_vn,
    DivergenceConfig, DivergenceResult, Geometry, GeometryKind,
};
use crate::dmrg::{dmrg_extremal, DmrgResult, SweepConfig};
use crate::exec::Executor;
use crate::krylov::Mode;
use crate::mpo::{szsz_average_mpo, xxz_mpo, XxzParams};
use crate::mps::{expectation, mps_sum, product_mps, MatrixProductState};
use crate::oracle::{dense_limit, free_fermion_mi};
use crate::C64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Xxz,
}

/// Measures a run can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Edge,
    Gdmrg,
    Exact,
    Vn,
    FreeFermion,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Edge => "edge",
            Method::Gdmrg => "gdmrg",
            Method::Exact => "exact",
            Method::Vn => "vn",
            Method::FreeFermion => "free-fermion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Method::Edge,
            Method::Gdmrg,
            Method::Exact,
            Method::Vn,
            Method::FreeFermion,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }

    /// Measure name written for this method.
    pub fn measure(self) -> &'static str {
        match self {
            Method::Edge | Method::Gdmrg | Method::Exact => "d_inf",
            Method::Vn | Method::FreeFermion => "mi",
        }
    }
}

/// Numerical knobs shared by every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    pub energy_tol: f64,
    pub lanczos_tol: f64,
    pub lanczos_max_iter: usize,
    pub cg_max_iter: usize,
    pub svd_cutoff: f64,
    pub operator_cutoff: f64,
    pub max_operator_bond: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SweepConfig::default();
        let d = DivergenceConfig::default();
        Self {
            max_sweeps: s.max_sweeps,
            energy_tol: s.energy_tol,
            lanczos_tol: s.lanczos_tol,
            lanczos_max_iter: s.lanczos_max_iter,
            cg_max_iter: s.cg_max_iter,
            svd_cutoff: s.svd_cutoff,
            operator_cutoff: d.operator_cutoff,
            max_operator_bond: d.max_operator_bond,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

/// Full description of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(rename = "J", alias = "j")]
    pub j: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub delta: Vec<f64>,
    pub h: f64,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub geometry: GeometryKind,
    pub ns: usize,
    pub region_a: Vec<usize>,
    pub region_b: Vec<usize>,
    /// Bond cap of the ground state.
    pub chi_s: usize,
    /// Bond cap of the state optimized by the divergence solvers.
    pub chi_2: usize,
    /// Bond cap of compressed operators; `chi_s^2` when unset.
    pub chi_1: Option<usize>,
    pub epsilon: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output: PathBuf,
    pub jobs: usize,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: Model::Xxz,
            j: 1.0,
            delta: vec![0.0],
            h: 0.0,
            n: 10,
            geometry: GeometryKind::Aeb,
            ns: 3,
            region_a: vec![],
            region_b: vec![],
            chi_s: 32,
            chi_2: 32,
            chi_1: None,
            epsilon: 1e-6,
            methods: vec![Method::Edge, Method::Gdmrg, Method::Exact, Method::Vn],
            seed: 0,
            output: PathBuf::from("results.csv"),
            jobs: 1,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults expanded and methods deduplicated in canonical order.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.chi_1 = Some(c.chi_1.unwrap_or(c.chi_s.saturating_mul(c.chi_s)));
        c.methods.sort();
        c.methods.dedup();
        if c.geometry != GeometryKind::Custom {
            c.region_a.clear();
            c.region_b.clear();
        }
        c
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let g = match self.geometry {
            GeometryKind::Aeb => Geometry::aeb(self.n, self.ns),
            GeometryKind::Eaebe => Geometry::eaebe(self.n, self.ns),
            GeometryKind::Custom => {
                Geometry::custom(self.n, self.region_a.clone(), self.region_b.clone())
            }
        };
        g.map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Checks parameters and method compatibility with geometry and size.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if self.delta.is_empty() {
            return bad("at least one delta is required".into());
        }
        if !self
            .delta
            .iter()
            .chain([&self.j, &self.h])
            .all(|x| x.is_finite())
        {
            return bad("J, delta and h must be finite".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.chi_s == 0 || self.chi_2 == 0 || self.chi_1 == Some(0) {
            return bad("bond dimensions must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        let geom = self.geometry()?;
        let limit = dense_limit();
        for &m in &self.methods {
            match m {
                Method::Edge if !geom.is_edge() => {
                    return bad(
                        "method edge requires A and B at the chain edges (geometry aeb)".into(),
                    );
                }
                Method::Gdmrg if geom.region_a[geom.region_a.len() - 1] > geom.region_b[0] => {
                    return bad("method gdmrg requires every site of A to the left of B".into());
                }
                Method::Exact if dense_dim(self.n).map_or(true, |d| d > limit) => {
                    return bad(format!(
                        "method exact needs 2^{} amplitudes, above the dense limit {limit}",
                        self.n
                    ));
                }
                Method::Vn if dense_dim(geom.union().len()).map_or(true, |d| d > limit) => {
                    return bad(format!(
                        "method vn needs a 2^{} density matrix, above the dense limit {limit}",
                        geom.union().len()
                    ));
                }
                Method::FreeFermion
                    if self.h != 0.0 || self.j == 0.0 || self.delta.iter().any(|&d| d != 0.0) =>
                {
                    return bad("method free-fermion requires delta = 0, h = 0 and J != 0".into());
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn ground_sweep(&self) -> SweepConfig {
        let s = &self.solver;
        SweepConfig {
            max_sweeps: s.max_sweeps,
            energy_tol: s.energy_tol,
            chi_max: self.chi_s,
            svd_cutoff: s.svd_cutoff,
            lanczos_tol: s.lanczos_tol,
            lanczos_max_iter: s.lanczos_max_iter,
            cg_max_iter: s.cg_max_iter,
            seed: self.seed,
        }
    }

    fn divergence(&self) -> DivergenceConfig {
        let s = &self.solver;
        DivergenceConfig {
            sweep: SweepConfig {
                chi_max: self.chi_2,
                ..self.ground_sweep()
            },
            operator_chi: self.chi_1.unwrap_or(self.chi_s.saturating_mul(self.chi_s)),
            operator_cutoff: s.operator_cutoff,
            max_operator_bond: s.max_operator_bond,
        }
    }
}

fn dense_dim(sites: usize) -> Option<usize> {
    1usize
        .checked_shl(sites as u32)
        .filter(|_| sites < usize::BITS as usize)
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub ns: usize,
    pub geometry: String,
    pub method: String,
    pub measure: String,
    pub value: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub cg_mean_iters: f64,
    pub runtime_seconds: f64,
}

/// Ground state found for one point.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub psi: MatrixProductState,
    pub candidate: &'static str,
    pub sweeps: usize,
    pub converged: bool,
}

/// Everything computed at one delta.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub delta: f64,
    pub records: Vec<Record>,
    pub divergences: Vec<DivergenceResult>,
    pub errors: Vec<String>,
    pub ground_candidate: &'static str,
    pub converged: bool,
}

/// Product-state starting points: both polarized states and both spin-flip
/// parities of the Néel cat. Each is an eigenstate of the conserved
/// magnetization and spin-flip symmetry, so DMRG from it stays in its
/// symmetry sector.
fn ground_candidates(n: usize) -> Vec<(&'static str, MatrixProductState)> {
    let up = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let dn = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let neel = |first_up: bool, sign: f64| -> Vec<Vec<C64>> {
        (0..n)
            .map(|i| {
                let v = if (i % 2 == 0) == first_up {
                    up.clone()
                } else {
                    dn.clone()
                };
                if i == 0 {
                    v.iter().map(|z| z * sign).collect()
                } else {
                    v
                }
            })
            .collect()
    };
    let cat = |sign: f64| -> MatrixProductState {
        let a = product_mps(&neel(true, 1.0)).expect("product state");
        let b = product_mps(&neel(false, sign)).expect("product state");
        mps_sum(&a, &b)
            .and_then(|s| s.canonicalize(0))
            .expect("two orthogonal product states")
    };
    vec![
        (
            "polarized-up",
            product_mps(&vec![up.clone(); n]).expect("product state"),
        ),
        (
            "polarized-down",
            product_mps(&vec![dn.clone(); n]).expect("product state"),
        ),
        ("neel-even", cat(1.0)),
        ("neel-odd", cat(-1.0)),
    ]
}

/// XXZ ground state: DMRG from every candidate, keeping the lowest energy.
/// Energies within `1e-9 * max(1, |E|)` count as tied and the earlier
/// candidate wins, which makes degenerate cases deterministic.
pub fn xxz_ground_state(
    p: &XxzParams,
    cfg: &SweepConfig,
) -> std::result::Result<GroundState, String> {
    let h = xxz_mpo(p).map_err(|e| e.to_string())?;
    let mut runs: Vec<(&'static str, DmrgResult)> = vec![];
    for (name, psi0) in ground_candidates(p.n) {
        let r = dmrg_extremal(&h, &psi0, Mode::Lowest, cfg)
            .map_err(|e| format!("ground state from {name}: {e}"))?;
        runs.push((name, r));
    }
    let emin = runs
        .iter()
        .map(|(_, r)| r.energy)
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * emin.abs().max(1.0);
    let (name, best) = runs
        .into_iter()
        .find(|(_, r)| r.energy <= emin + tol)
        .expect("at least one candidate");
    Ok(GroundState {
        energy: best.energy,
        psi: best.psi,
        candidate: name,
        sweeps: best.sweeps_used,
        converged: best.converged,
    })
}

/// Ground state and every requested measure at one delta. Solver failures
/// are recorded per method; the other methods still run.
pub fn run_point(cfg: &RunConfig, delta: f64) -> PointOutcome {
    let geom_kind = cfg.geometry.as_str().to_string();
    // Custom geometries report |A|.
    let ns = cfg.geometry().map_or(cfg.ns, |g| g.ns());
    let mut out = PointOutcome {
        delta,
        records: vec![],
        divergences: vec![],
        errors: vec![],
        ground_candidate: "",
        converged: true,
    };
    let row = |method: &str,
               measure: &str,
               value: f64,
               converged: bool,
               sweeps: usize,
               cg: f64,
               t: f64| Record {
        delta,
        n: cfg.n,
        ns,
        geometry: geom_kind.clone(),
        method: method.into(),
        measure: measure.into(),
        value,
        converged,
        sweeps,
        cg_mean_iters: cg,
        runtime_seconds: t,
    };

    let start = Instant::now();
    let params = XxzParams::new(cfg.j, delta, cfg.h, cfg.n);
    let ground = match xxz_ground_state(&params, &cfg.ground_sweep()) {
        Ok(g) => g,
        Err(e) => {
            out.errors.push(format!("delta={delta}: {e}"));
            out.converged = false;
            return out;
        }
    };
    let t = start.elapsed().as_secs_f64();
    out.ground_candidate = ground.candidate;
    out.converged &= ground.converged;
    out.records.push(row(
        "dmrg",
        "energy",
        ground.energy,
        ground.converged,
        ground.sweeps,
        0.0,
        t,
    ));
    match szsz_average_mpo(cfg.n)
        .map_err(|e| e.to_string())
        .and_then(|op| expectation(&ground.psi, &op).map_err(|e| e.to_string()))
    {
        Ok(v) => out.records.push(row(
            "dmrg",
            "szsz",
            v.re,
            ground.converged,
            ground.sweeps,
            0.0,
            t,
        )),
        Err(e) => {
            out.errors.push(format!("delta={delta} szsz: {e}"));
            out.converged = false;
        }
    }

    let geom = match cfg.geometry() {
        Ok(g) => g,
        Err(e) => {
            out.errors.push(e.to_string());
            out.converged = false;
            return out;
        }
    };
    let dcfg = cfg.divergence();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    for m in methods {
        let start = Instant::now();
        let result: std::result::Result<(f64, bool, usize, f64, Option<DivergenceResult>), String> =
            match m {
                Method::Edge | Method::Gdmrg | Method::Exact => {
                    let r = match m {
                        Method::Edge => {
                            max_divergence_edge(&ground.psi, geom.ns(), cfg.epsilon, &dcfg)
                        }
                        Method::Gdmrg => {
                            max_divergence_general(&ground.psi, &geom, cfg.epsilon, &dcfg)
                        }
                        _ => max_divergence_dense(&ground.psi, &geom, cfg.epsilon),
                    };
                    r.map(|r| {
                        (
                            r.d_infinity,
                            r.converged,
                            r.diagnostics.sweeps,
                            r.diagnostics.cg_mean_iterations,
                            Some(r),
                        )
                    })
                    .map_err(|e| e.to_string())
                }
                Method::Vn => mutual_information_vn(&ground.psi, &geom)
                    .map(|v| (v, true, 0, 0.0, None))
                    .map_err(|e| e.to_string()),
                Method::FreeFermion => Ok((
                    free_fermion_mi(cfg.n, &geom.region_a, &geom.region_b),
                    true,
                    0,
                    0.0,
                    None,
                )),
            };
        let t = start.elapsed().as_secs_f64();
        match result {
            Ok((value, converged, sweeps, cg, div)) => {
                if let Some(d) = div {
                    if d.regularization_dominated {
                        log::warn!(
                            "delta={delta} {}: lambda={} is dominated by the regularization",
                            m.as_str(),
                            d.lambda
                        );
                    }
                    out.divergences.push(d);
                }
                out.converged &= converged;
                out.records.push(row(
                    m.as_str(),
                    m.measure(),
                    value,
                    converged,
                    sweeps,
                    cg,
                    t,
                ));
            }
            Err(e) => {
                out.errors
                    .push(format!("delta={delta} {}: {e}", m.as_str()));
                out.converged = false;
                out.records
                    .push(row(m.as_str(), m.measure(), f64::NAN, false, 0, 0.0, t));
            }
        }
    }
    out
}

/// Results of a full sweep, records sorted deterministically.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub config: RunConfig,
    pub points: Vec<PointOutcome>,
    pub records: Vec<Record>,
    pub all_converged: bool,
}

/// Evaluate every delta of `cfg` under `exec`.
pub fn run_sweep(cfg: &RunConfig, exec: Executor) -> Result<SweepOutcome> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let points = exec.map(&cfg.delta, |&d| run_point(&cfg, d));
    let mut records: Vec<Record> = points
        .iter()
        .flat_map(|p| p.records.iter().cloned())
        .collect();
    records.sort_by(|a, b| {
        a.delta
            .total_cmp(&b.delta)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.measure.cmp(&b.measure))
    });
    let all_converged = points.iter().all(|p| p.converged);
    Ok(SweepOutcome {
        config: cfg,
        points,
        records,
        all_converged,
    })
}

/// Sidecar path: `results.csv` becomes `results.meta.json`.
pub fn meta_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

#[derive(Serialize)]
struct PointMeta<'a> {
    delta: f64,
    ground_candidate: &'a str,
    converged: bool,
    divergences: &'a [DivergenceResult],
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    config: &'a RunConfig,
    dense_limit: usize,
    all_converged: bool,
    points: Vec<PointMeta<'a>>,
    errors: Vec<&'a str>,
}

/// CSV records to `cfg.output` plus the JSON metadata sidecar.
pub fn write_outputs(out: &SweepOutcome) -> Result<()> {
    let path = &out.config.output;
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source: std::io::Error| PipelineError::Output { path: p, source }
    };
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &out.records {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;

    let mut pts: Vec<&PointOutcome> = out.points.iter().collect();
    pts.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        config: &out.config,
        dense_limit: dense_limit(),
        all_converged: out.all_converged,
        points: pts
            .iter()
            .map(|p| PointMeta {
                delta: p.delta,
                ground_candidate: p.ground_candidate,
                converged: p.converged,
                divergences: &p.divergences,
            })
            .collect(),
        errors: pts
            .iter()
            .flat_map(|p| p.errors.iter().map(String::as_str))
            .collect(),
    };
    let mpath = meta_path(path);
    let file = std::fs::File::create(&mpath).map_err(io_err(&mpath))?;
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(())
}

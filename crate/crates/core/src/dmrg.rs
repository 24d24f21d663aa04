//! Two-site DMRG sweeps.
//!
//! [`dmrg_ground_state`] (and [`dmrg_extremal`]) optimize `<psi|H|psi>` with
//! standard Lanczos on the two-site effective operator. [`generalized_dmrg`]
//! optimizes the ratio `<psi|rho|psi> / <psi|sigma + eps I|psi>` with
//! generalized Lanczos: both MPOs get their own environments, the metric is
//! the sigma applier plus `eps` times the identity, and inner solves use
//! conjugate gradient.
//!
//! Sweeps visit pairs `(i, i+1)` for `i = 0..N-2` left to right, then
//! `i = N-2..0` right to left. After each local solve the two-site tensor is
//! split by SVD and truncated to `chi_max`. Because every tensor outside the
//! pair is isometric, the identity on the full space restricts to the
//! identity on the local space, which keeps `sigma + eps I` exact locally.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::krylov::{
    conjugate_gradient, generalized_lanczos_seeded, lanczos_seeded, KrylovError, LinearOperator,
    Mode, Shifted,
};
use crate::linalg::{inner, norm};
use crate::mpo::{MatrixProductOperator, MpoError};
use crate::mps::{expectation, CanonicalForm, MatrixProductState, MpsError};
use crate::tensor::{contract, scale_leg, svd_with_bond, Tensor, TensorError};
use crate::C64;

#[derive(Debug, Error)]
pub enum DmrgError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("effective operator at sites ({site}, {}) is not Hermitian (defect {defect:e})", site + 1)]
    NotHermitian { site: usize, defect: f64 },
    #[error("environment for sites ({site}, {}) is stale", site + 1)]
    StaleEnvironment { site: usize },
    #[error(
        "conjugate gradient did not converge in sweep {sweep} at sites ({site}, {}): \
         relative residual {residual:e} after {iterations} iterations",
        site + 1
    )]
    CgNotConverged {
        sweep: usize,
        site: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("invalid sweep configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DmrgError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub max_sweeps: usize,
    /// Relative change of the objective per full sweep.
    pub energy_tol: f64,
    pub chi_max: usize,
    /// Relative singular-value cutoff of the two-site split.
    pub svd_cutoff: f64,
    pub lanczos_tol: f64,
    pub lanczos_max_iter: usize,
    /// Inner CG iteration cap for generalized sweeps.
    pub cg_max_iter: usize,
    /// Seed for random vectors (breakdown restarts, Hermiticity probes).
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            energy_tol: 1e-8,
            chi_max: 64,
            svd_cutoff: 1e-14,
            lanczos_tol: 1e-10,
            lanczos_max_iter: 100,
            cg_max_iter: 200,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(DmrgError::Config(what.to_string()));
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be positive");
        }
        if !(self.energy_tol > 0.0 && self.lanczos_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.svd_cutoff < 0.0 {
            return bad("svd_cutoff must be non-negative");
        }
        if self.chi_max == 0 || self.lanczos_max_iter == 0 || self.cg_max_iter == 0 {
            return bad("chi_max and iteration caps must be positive");
        }
        Ok(())
    }

    /// Inner CG tolerance: a hundredth of the outer Lanczos tolerance.
    pub fn cg_tol(&self) -> f64 {
        0.01 * self.lanczos_tol
    }
}

/// Cached left and right environments of `<psi|op|psi>`.
///
/// `left[i]` contracts sites `0..i`, `right[i]` contracts sites `i..N`; both
/// have legs `(k, w, b)` for ket, operator, and bra bonds. Entries are
/// dropped when a site they depend on changes.
#[derive(Clone, Debug)]
pub struct Environment {
    left: Vec<Option<Tensor>>,
    right: Vec<Option<Tensor>>,
}

fn unit_env() -> Tensor {
    Tensor::from_parts(&[("k", 1), ("w", 1), ("b", 1)], vec![C64::new(1.0, 0.0)]).unwrap()
}

fn extend_left(env: &Tensor, ket: &Tensor, w: &Tensor) -> Result<Tensor> {
    let x = contract(
        env,
        &ket.clone().relabel_all(&[("p", "pi"), ("r", "k2")])?,
        &[("k", "l")],
    )?;
    let x = contract(
        &x,
        &w.clone().relabel("r", "w2")?,
        &[("w", "l"), ("pi", "pi")],
    )?;
    let bra = ket.conjugate().relabel_all(&[("p", "po"), ("r", "b2")])?;
    let x = contract(&x, &bra, &[("b", "l"), ("po", "po")])?;
    Ok(x.relabel_all(&[("k2", "k"), ("w2", "w"), ("b2", "b")])?
        .permute(&["k", "w", "b"])?)
}

fn extend_right(env: &Tensor, ket: &Tensor, w: &Tensor) -> Result<Tensor> {
    let x = contract(
        &ket.clone().relabel_all(&[("l", "k2"), ("p", "pi")])?,
        env,
        &[("r", "k")],
    )?;
    let x = contract(
        &x,
        &w.clone().relabel("l", "w2")?,
        &[("pi", "pi"), ("w", "r")],
    )?;
    let bra = ket.conjugate().relabel_all(&[("l", "b2"), ("p", "po")])?;
    let x = contract(&x, &bra, &[("b", "r"), ("po", "po")])?;
    Ok(x.relabel_all(&[("k2", "k"), ("w2", "w"), ("b2", "b")])?
        .permute(&["k", "w", "b"])?)
}

impl Environment {
    /// Environments for `psi` with orthogonality center `c`: left blocks up
    /// to `c`, right blocks down to `c + 1`.
    pub fn new(op: &MatrixProductOperator, psi: &MatrixProductState) -> Result<Self> {
        check_pair(op, psi)?;
        let n = psi.n_sites();
        let c = psi.center();
        let mut env = Self {
            left: vec![None; n + 1],
            right: vec![None; n + 1],
        };
        env.left[0] = Some(unit_env());
        env.right[n] = Some(unit_env());
        for i in 0..c {
            env.update_left(op, psi, i)?;
        }
        for i in (c + 1..n).rev() {
            env.update_right(op, psi, i)?;
        }
        Ok(env)
    }

    /// Every left and right block computed from scratch.
    pub fn rebuild(op: &MatrixProductOperator, psi: &MatrixProductState) -> Result<Self> {
        check_pair(op, psi)?;
        let n = psi.n_sites();
        let mut env = Self {
            left: vec![None; n + 1],
            right: vec![None; n + 1],
        };
        env.left[0] = Some(unit_env());
        env.right[n] = Some(unit_env());
        for i in 0..n {
            env.update_left(op, psi, i)?;
        }
        for i in (0..n).rev() {
            env.update_right(op, psi, i)?;
        }
        Ok(env)
    }

    pub fn left(&self, i: usize) -> Option<&Tensor> {
        self.left.get(i).and_then(|t| t.as_ref())
    }

    pub fn right(&self, i: usize) -> Option<&Tensor> {
        self.right.get(i).and_then(|t| t.as_ref())
    }

    /// Compute `left[i+1]` from `left[i]` and site `i`.
    pub fn update_left(
        &mut self,
        op: &MatrixProductOperator,
        psi: &MatrixProductState,
        i: usize,
    ) -> Result<()> {
        let prev = self
            .left(i)
            .ok_or(DmrgError::StaleEnvironment { site: i })?;
        self.left[i + 1] = Some(extend_left(prev, psi.site(i), &op.sites()[i])?);
        Ok(())
    }

    /// Compute `right[i]` from `right[i+1]` and site `i`.
    pub fn update_right(
        &mut self,
        op: &MatrixProductOperator,
        psi: &MatrixProductState,
        i: usize,
    ) -> Result<()> {
        let prev = self
            .right(i + 1)
            .ok_or(DmrgError::StaleEnvironment { site: i })?;
        self.right[i] = Some(extend_right(prev, psi.site(i), &op.sites()[i])?);
        Ok(())
    }

    /// Site `i` changed: drop every block that contains it.
    pub fn invalidate(&mut self, i: usize) {
        for t in &mut self.left[i + 1..] {
            *t = None;
        }
        for t in &mut self.right[..=i] {
            *t = None;
        }
    }
}

fn check_pair(op: &MatrixProductOperator, psi: &MatrixProductState) -> Result<()> {
    if op.n_sites() != psi.n_sites() || op.phys_dim() != psi.phys_dim() {
        return Err(DmrgError::Shape(format!(
            "operator has {} sites (d={}), state {} sites (d={})",
            op.n_sites(),
            op.phys_dim(),
            psi.n_sites(),
            psi.phys_dim()
        )));
    }
    Ok(())
}

/// Two-site effective operator on the `(l, p1, p2, r)` space.
#[derive(Clone, Debug)]
pub struct TwoSiteApplier {
    left: Tensor,
    w1: Tensor,
    w2: Tensor,
    right: Tensor,
    dims: [usize; 4],
}

impl TwoSiteApplier {
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    fn apply_tensor(&self, theta: &Tensor) -> Result<Tensor> {
        let t = contract(&self.left, theta, &[("k", "l")])?;
        let t = contract(&t, &self.w1, &[("w", "l"), ("p1", "p1")])?;
        let t = contract(&t, &self.w2, &[("w1", "w1"), ("p2", "p2")])?;
        let t = contract(&t, &self.right, &[("r", "k"), ("w2", "w")])?;
        Ok(
            t.relabel_all(&[("b", "l"), ("o1", "p1"), ("o2", "p2"), ("rb", "r")])?
                .permute(&["l", "p1", "p2", "r"])?,
        )
    }

    fn as_tensor(&self, x: &[C64]) -> Tensor {
        let [l, d1, d2, r] = self.dims;
        Tensor::from_parts(&[("l", l), ("p1", d1), ("p2", d2), ("r", r)], x.to_vec()).unwrap()
    }
}

impl LinearOperator for TwoSiteApplier {
    fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.apply_tensor(&self.as_tensor(x))
            .expect("two-site applier legs are consistent")
            .into_data()
    }

    /// Product of the Frobenius norms of the four factors.
    fn norm_bound(&self) -> Option<f64> {
        Some(self.left.norm() * self.w1.norm() * self.w2.norm() * self.right.norm())
    }
}

/// Effective operator for the pair `(i, i+1)`. The state only fixes the
/// bond and physical dimensions; the environments must be current.
pub fn two_site_applier(
    op: &MatrixProductOperator,
    env: &Environment,
    i: usize,
) -> Result<TwoSiteApplier> {
    if i + 1 >= op.n_sites() {
        return Err(DmrgError::Shape(format!("no pair at site {i}")));
    }
    let stale = DmrgError::StaleEnvironment { site: i };
    let left = env.left(i).ok_or_else(|| stale)?.clone();
    let right = env
        .right(i + 2)
        .ok_or(DmrgError::StaleEnvironment { site: i })?
        .clone()
        .relabel("b", "rb")?;
    let w1 = op.sites()[i]
        .clone()
        .relabel_all(&[("po", "o1"), ("pi", "p1"), ("r", "w1")])?;
    let w2 = op.sites()[i + 1].clone().relabel_all(&[
        ("po", "o2"),
        ("pi", "p2"),
        ("l", "w1"),
        ("r", "w2"),
    ])?;
    let dims = [
        left.dim("k")?,
        w1.dim("p1")?,
        w2.dim("p2")?,
        right.dim("k")?,
    ];
    Ok(TwoSiteApplier {
        left,
        w1,
        w2,
        right,
        dims,
    })
}

/// Contract sites `i` and `i+1` into `(l, p1, p2, r)`.
fn two_site_tensor(psi: &MatrixProductState, i: usize) -> Result<Tensor> {
    let a = psi
        .site(i)
        .clone()
        .relabel_all(&[("p", "p1"), ("r", "m")])?;
    let b = psi
        .site(i + 1)
        .clone()
        .relabel_all(&[("p", "p2"), ("l", "m")])?;
    Ok(contract(&a, &b, &[("m", "m")])?)
}

/// Largest `|<x|Ay> - conj(<y|Ax>)|` relative to `||x|| ||y||` times the
/// operator magnitude, from random probes. The magnitude is the larger of
/// the norm bound (when known) and the observed `||A y|| / ||y||`.
fn hermiticity_defect<A: LinearOperator>(a: &A, rng: &mut ChaCha8Rng) -> f64 {
    let n = a.dim();
    let mut v = || -> Vec<C64> {
        (0..n)
            .map(|_| {
                C64::new(
                    StandardNormal.sample(&mut *rng),
                    StandardNormal.sample(&mut *rng),
                )
            })
            .collect()
    };
    let (x, y) = (v(), v());
    let (ax, ay) = (a.apply(&x), a.apply(&y));
    let lhs = inner(&x, &ay);
    let rhs = inner(&y, &ax).conj();
    let observed = (norm(&ay) / norm(&y)).max(norm(&ax) / norm(&x));
    let magnitude = observed.max(a.norm_bound().unwrap_or(0.0));
    let scale = (norm(&x) * norm(&y) * magnitude).max(f64::MIN_POSITIVE);
    (lhs - rhs).norm() / scale
}

const HERMITICITY_TOL: f64 = 1e-8;

/// Per-sweep diagnostics shared by both optimizers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub lanczos_steps: usize,
    pub local_solves: usize,
    pub cg_solves: usize,
    pub cg_iterations: usize,
    pub max_discarded_weight: f64,
}

impl SweepStats {
    /// Mean inner CG iterations per generalized Lanczos step.
    pub fn cg_mean_iterations(&self) -> f64 {
        if self.cg_solves == 0 {
            0.0
        } else {
            self.cg_iterations as f64 / self.cg_solves as f64
        }
    }
}

/// Local eigensolver used by the sweep driver.
trait LocalProblem {
    fn operators(&self) -> Vec<&MatrixProductOperator>;
    /// Solve at pair `i` starting from `theta0`; returns the new two-site
    /// vector (normalized) and its Ritz value.
    fn solve(
        &mut self,
        envs: &[Environment],
        i: usize,
        sweep: usize,
        theta0: &[C64],
        stats: &mut SweepStats,
    ) -> Result<(Vec<C64>, f64)>;
}

struct Standard<'a> {
    op: &'a MatrixProductOperator,
    mode: Mode,
    cfg: &'a SweepConfig,
    rng: ChaCha8Rng,
}

impl LocalProblem for Standard<'_> {
    fn operators(&self) -> Vec<&MatrixProductOperator> {
        vec![self.op]
    }

    fn solve(
        &mut self,
        envs: &[Environment],
        i: usize,
        _sweep: usize,
        theta0: &[C64],
        stats: &mut SweepStats,
    ) -> Result<(Vec<C64>, f64)> {
        let h = two_site_applier(self.op, &envs[0], i)?;
        let defect = hermiticity_defect(&h, &mut self.rng);
        if defect > HERMITICITY_TOL {
            return Err(DmrgError::NotHermitian { site: i, defect });
        }
        let seed = self.cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let rep = lanczos_seeded(
            &h,
            theta0,
            self.mode,
            self.cfg.lanczos_tol,
            self.cfg.lanczos_max_iter,
            seed,
        )?;
        stats.lanczos_steps += rep.iterations;
        stats.local_solves += 1;
        let n = norm(&rep.vector);
        Ok((rep.vector.iter().map(|z| z / n).collect(), rep.theta))
    }
}

struct Generalized<'a> {
    rho: &'a MatrixProductOperator,
    sigma: &'a MatrixProductOperator,
    eps: f64,
    mode: Mode,
    cfg: &'a SweepConfig,
    rng: ChaCha8Rng,
}

impl LocalProblem for Generalized<'_> {
    fn operators(&self) -> Vec<&MatrixProductOperator> {
        vec![self.rho, self.sigma]
    }

    fn solve(
        &mut self,
        envs: &[Environment],
        i: usize,
        sweep: usize,
        theta0: &[C64],
        stats: &mut SweepStats,
    ) -> Result<(Vec<C64>, f64)> {
        let a = two_site_applier(self.rho, &envs[0], i)?;
        let m = Shifted {
            op: two_site_applier(self.sigma, &envs[1], i)?,
            shift: self.eps,
        };
        for defect in [
            hermiticity_defect(&a, &mut self.rng),
            hermiticity_defect(&m, &mut self.rng),
        ] {
            if defect > HERMITICITY_TOL {
                return Err(DmrgError::NotHermitian { site: i, defect });
            }
        }
        let cfg = self.cfg;
        let mut failure: Option<DmrgError> = None;
        let mut cg_solves = 0;
        let mut cg_iterations = 0;
        let solve_m = |b: &[C64]| -> std::result::Result<Vec<C64>, KrylovError> {
            // Zero initial guess: the new right-hand side is M-orthogonal to
            // the previous solution, so reusing it can only add error.
            let out = conjugate_gradient(&m, b, None, cfg.cg_tol(), cfg.cg_max_iter)?;
            cg_solves += 1;
            cg_iterations += out.iterations;
            if !out.converged {
                let residual = out.residual_norm / norm(b).max(f64::MIN_POSITIVE);
                failure = Some(DmrgError::CgNotConverged {
                    sweep,
                    site: i,
                    residual,
                    iterations: out.iterations,
                });
                return Err(KrylovError::Solve(
                    "conjugate gradient hit its iteration cap".into(),
                ));
            }
            Ok(out.x)
        };
        let seed = cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ sweep as u64;
        let rep = generalized_lanczos_seeded(
            &a,
            &m,
            solve_m,
            theta0,
            self.mode,
            cfg.lanczos_tol,
            cfg.lanczos_max_iter,
            seed,
        );
        stats.cg_solves += cg_solves;
        stats.cg_iterations += cg_iterations;
        let rep = match (rep, failure) {
            (_, Some(e)) => return Err(e),
            (r, None) => r?,
        };
        stats.lanczos_steps += rep.iterations;
        stats.local_solves += 1;
        let n = norm(&rep.vector);
        Ok((rep.vector.iter().map(|z| z / n).collect(), rep.theta))
    }
}

struct SweepOutcome {
    psi: MatrixProductState,
    history: Vec<f64>,
    sweeps: usize,
    converged: bool,
    stats: SweepStats,
}

/// Shared two-site sweep driver.
fn run_sweeps(
    problem: &mut dyn LocalProblem,
    psi0: &MatrixProductState,
    cfg: &SweepConfig,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let n = psi0.n_sites();
    if n < 2 {
        return Err(DmrgError::Shape(
            "two-site sweeps need at least two sites".into(),
        ));
    }
    let mut psi = psi0.canonicalize(0)?;
    let mut envs: Vec<Environment> = problem
        .operators()
        .iter()
        .map(|op| Environment::new(op, &psi))
        .collect::<Result<_>>()?;
    let mut history: Vec<f64> = vec![];
    let mut stats = SweepStats::default();
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 0..cfg.max_sweeps {
        sweeps = sweep + 1;
        let mut last = f64::NAN;
        for (i, left_to_right) in (0..n - 1)
            .map(|i| (i, true))
            .chain((0..n - 1).rev().map(|i| (i, false)))
        {
            let theta = two_site_tensor(&psi, i)?;
            let (vec, value) = problem.solve(&envs, i, sweep, theta.data(), &mut stats)?;
            last = value;
            let theta = Tensor::new(theta.legs().to_vec(), vec)?;
            let res = svd_with_bond(&theta, &["l", "p1"], cfg.chi_max, cfg.svd_cutoff, "b")?;
            stats.max_discarded_weight = stats.max_discarded_weight.max(res.discarded_weight);
            let snorm = res.s.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s: Vec<f64> = res.s.iter().map(|x| x / snorm).collect();
            let u = res.u.relabel_all(&[("p1", "p"), ("b", "r")])?;
            let vh = res.vh.relabel_all(&[("b", "l"), ("p2", "p")])?;
            let (sites, mut schmidt, _) = psi.into_parts();
            let mut sites = sites;
            schmidt[i] = s.clone();
            let center = if left_to_right {
                sites[i] = u;
                sites[i + 1] = scale_leg(&vh, "l", &s)?;
                i + 1
            } else {
                sites[i] = scale_leg(&u, "r", &s)?;
                sites[i + 1] = vh;
                i
            };
            psi =
                MatrixProductState::from_raw(sites, schmidt, center, CanonicalForm::MixedAtCenter);
            for (env, op) in envs.iter_mut().zip(problem.operators()) {
                env.invalidate(i);
                env.invalidate(i + 1);
                if left_to_right {
                    env.update_left(op, &psi, i)?;
                } else {
                    env.update_right(op, &psi, i + 1)?;
                }
            }
        }
        let prev = history.last().copied();
        history.push(last);
        if let Some(prev) = prev {
            if (last - prev).abs() <= cfg.energy_tol * last.abs().max(f64::EPSILON) {
                converged = true;
                break;
            }
        }
    }
    Ok(SweepOutcome {
        psi: psi.canonicalize(0)?,
        history,
        sweeps,
        converged,
        stats,
    })
}

/// Result of a standard DMRG run.
#[derive(Clone, Debug)]
pub struct DmrgResult {
    /// `<psi|H|psi>` of the returned (normalized) state.
    pub energy: f64,
    pub psi: MatrixProductState,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Last local Ritz value of every full sweep.
    pub history: Vec<f64>,
    pub stats: SweepStats,
}

/// Lowest eigenpair of `h` by two-site DMRG; returns `(energy, psi)`.
pub fn dmrg_ground_state(
    h: &MatrixProductOperator,
    psi0: &MatrixProductState,
    cfg: &SweepConfig,
) -> Result<(f64, MatrixProductState)> {
    let r = dmrg_extremal(h, psi0, Mode::Lowest, cfg)?;
    Ok((r.energy, r.psi))
}

/// Extremal eigenpair of `h` in either direction, with diagnostics.
pub fn dmrg_extremal(
    h: &MatrixProductOperator,
    psi0: &MatrixProductState,
    mode: Mode,
    cfg: &SweepConfig,
) -> Result<DmrgResult> {
    check_pair(h, psi0)?;
    let mut problem = Standard {
        op: h,
        mode,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let out = run_sweeps(&mut problem, psi0, cfg)?;
    let energy = expectation(&out.psi, h)?.re;
    Ok(DmrgResult {
        energy,
        psi: out.psi,
        sweeps_used: out.sweeps,
        converged: out.converged,
        history: out.history,
        stats: out.stats,
    })
}

#[derive(Clone, Debug)]
pub struct GdmrgResult {
    /// Rayleigh quotient `<psi|rho|psi> / <psi|sigma + eps|psi>` of the
    /// returned state.
    pub lambda: f64,
    pub psi: MatrixProductState,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Last local generalized Ritz value of every full sweep.
    pub history: Vec<f64>,
    pub stats: SweepStats,
    /// `lambda > 1/eps`: the value is set by the regularization rather than
    /// by the operators.
    pub regularization_dominated: bool,
}

/// Extremal generalized eigenvalue of `rho x = lambda (sigma + eps I) x`
/// over MPS.
pub fn generalized_dmrg(
    rho: &MatrixProductOperator,
    sigma: &MatrixProductOperator,
    psi0: &MatrixProductState,
    eps: f64,
    mode: Mode,
    cfg: &SweepConfig,
) -> Result<GdmrgResult> {
    check_pair(rho, psi0)?;
    check_pair(sigma, psi0)?;
    if !(eps > 0.0) {
        return Err(DmrgError::Config(format!(
            "regularization epsilon must be positive, got {eps}"
        )));
    }
    let mut problem = Generalized {
        rho,
        sigma,
        eps,
        mode,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let out = run_sweeps(&mut problem, psi0, cfg)?;
    let num = expectation(&out.psi, rho)?.re;
    let den = expectation(&out.psi, sigma)?.re + eps;
    let lambda = num / den;
    Ok(GdmrgResult {
        lambda,
        psi: out.psi,
        sweeps_used: out.sweeps,
        converged: out.converged,
        history: out.history,
        stats: out.stats,
        regularization_dominated: lambda > 1.0 / eps,
    })
}

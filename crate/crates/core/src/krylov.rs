//! Krylov eigensolvers over abstract linear operators.
//!
//! * [`Lanczos`]: standard Hermitian Lanczos with full reorthogonalization.
//! * [`GeneralizedLanczos`]: Lanczos for `A x = lambda M x` with an
//!   M-orthonormal basis. Coefficients are computed directly as
//!   `alpha_j = <q_j|A|q_j>` and `beta_j = <q_{j-1}|A|q_j>`, and the next
//!   direction solves `M u_{j+1} = A q_j - alpha_j M q_j - beta_j M q_{j-1}`.
//! * [`conjugate_gradient`] for the inner `M` solves.
//!
//! Both eigensolvers are step-wise state machines so callers can inspect
//! every iterate; [`lanczos`] and [`generalized_lanczos`] drive them to
//! convergence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{axpy, eigh_real, inner, norm, DenseMatrix};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("start vector is zero")]
    ZeroStart,
    #[error("vector length {got} does not match operator dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error(
        "non-positive curvature <p|A|p> = {curvature:e} at CG iteration {iteration}; \
         the operator is not positive definite (increase the regularization epsilon)"
    )]
    NonPositiveCurvature { iteration: usize, curvature: f64 },
    #[error("operator is not Hermitian: imaginary part {0:e} in a diagonal or coupling element")]
    NotHermitian(f64),
    #[error("M is not positive definite: <u|M|u> = {0:e}")]
    IndefiniteMetric(f64),
    #[error("inner solve failed: {0}")]
    Solve(String),
}

pub type Result<T> = std::result::Result<T, KrylovError>;

/// Linear map on `C^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    /// Upper bound on the operator norm as represented, if cheaply known.
    /// Roundoff in `apply` is relative to this rather than to `||A x||`.
    fn norm_bound(&self) -> Option<f64> {
        None
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (**self).apply(x)
    }
    fn norm_bound(&self) -> Option<f64> {
        (**self).norm_bound()
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matvec(x)
    }
}

/// Operator given by a closure.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[C64]) -> Vec<C64>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[C64]) -> Vec<C64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (self.f)(x)
    }
}

/// `op + shift * I`, applied on the fly.
pub struct Shifted<A> {
    pub op: A,
    pub shift: f64,
}

impl<A: LinearOperator> LinearOperator for Shifted<A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = self.op.apply(x);
        axpy(C64::new(self.shift, 0.0), x, &mut y);
        y
    }
    fn norm_bound(&self) -> Option<f64> {
        self.op.norm_bound().map(|b| b + self.shift.abs())
    }
}

/// Which end of the spectrum to target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lowest,
    Highest,
}

/// Krylov basis and the tridiagonal projection.
#[derive(Clone, Debug, Default)]
pub struct KrylovState {
    pub basis: Vec<Vec<C64>>,
    /// Diagonal of `T`.
    pub alpha: Vec<f64>,
    /// Off-diagonal of `T`; `beta[k]` couples `basis[k]` and `basis[k+1]`.
    pub beta: Vec<f64>,
    /// Residual `r_{j+1}` of the last completed step.
    pub residual: Vec<C64>,
    pub iteration: usize,
}

impl KrylovState {
    /// Eigenpairs of the current `T`, ascending.
    pub fn ritz_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.alpha.len();
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            t[i * k + i] = self.alpha[i];
            if i + 1 < k {
                t[i * k + i + 1] = self.beta[i];
                t[(i + 1) * k + i] = self.beta[i];
            }
        }
        eigh_real(k, &t)
    }

    /// Extremal Ritz value and its `T` eigenvector.
    pub fn extremal_ritz(&self, mode: Mode) -> (f64, Vec<f64>) {
        let k = self.alpha.len();
        let (vals, vecs) = self.ritz_pairs();
        let idx = match mode {
            Mode::Lowest => 0,
            Mode::Highest => k - 1,
        };
        (vals[idx], (0..k).map(|r| vecs[r * k + idx]).collect())
    }

    /// `Q s`.
    pub fn ritz_vector(&self, s: &[f64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.basis[0].len()];
        for (q, &c) in self.basis.iter().zip(s) {
            axpy(C64::new(c, 0.0), q, &mut y);
        }
        y
    }

    /// Largest absolute Ritz value, used as the operator scale.
    fn scale(&self) -> f64 {
        let (vals, _) = self.ritz_pairs();
        vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Per-iteration record.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub theta: f64,
    pub ritz_residual: f64,
}

#[derive(Clone, Debug)]
pub struct EigSolveReport {
    pub theta: f64,
    pub vector: Vec<C64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Breakdown restarts with a fresh random direction.
    pub restarts: usize,
    pub trace: Vec<IterationRecord>,
}

/// `||r_{j+1}|| * |<e_j|s>|`.
pub fn ritz_residual(r_next: &[C64], s: &[f64]) -> f64 {
    norm(r_next) * s.last().map_or(0.0, |x| x.abs())
}

/// Outcome of one solver step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Converged,
    /// Krylov space exhausted the whole space; Ritz values are exact.
    Exhausted,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(KrylovError::DimMismatch { expected, got });
    }
    Ok(())
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

/// Imaginary parts of `T` entries above this (relative to the operator
/// scale) indicate a non-Hermitian operator.
const HERMITIAN_TOL: f64 = 1e-10;

/// Magnitude against which `<q|A q>` roundoff is measured.
fn hermitian_scale<A: LinearOperator>(op: &A, q: &[C64], aq: &[C64]) -> f64 {
    let nq = norm(q);
    let bound = op.norm_bound().unwrap_or(0.0) * nq;
    (nq * norm(aq).max(bound)).max(1.0)
}

/// Standard Lanczos state machine.
pub struct Lanczos<A> {
    op: A,
    mode: Mode,
    tol: f64,
    state: KrylovState,
    /// `A q_j - alpha_j q_j - beta_{j-1} q_{j-1}`, orthogonalized.
    next: Option<Vec<C64>>,
    rng: ChaCha8Rng,
    restarts: usize,
    trace: Vec<IterationRecord>,
}

impl<A: LinearOperator> Lanczos<A> {
    pub fn new(op: A, v0: &[C64], mode: Mode, tol: f64, seed: u64) -> Result<Self> {
        check_len(op.dim(), v0.len())?;
        let n0 = norm(v0);
        if n0 == 0.0 {
            return Err(KrylovError::ZeroStart);
        }
        let q = v0.iter().map(|z| z / n0).collect();
        let state = KrylovState {
            basis: vec![q],
            ..Default::default()
        };
        Ok(Self {
            op,
            mode,
            tol,
            state,
            next: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            restarts: 0,
            trace: vec![],
        })
    }

    pub fn state(&self) -> &KrylovState {
        &self.state
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    /// Extend the Krylov space by one vector.
    pub fn step(&mut self) -> Result<Step> {
        let dim = self.op.dim();
        if let Some(w) = self.next.take() {
            let b = *self.state.beta.last().unwrap();
            let q = if b > 0.0 {
                w.iter().map(|z| z / b).collect()
            } else {
                // Breakdown with an unconverged estimate: restart.
                self.restarts += 1;
                self.fresh_direction(dim)
            };
            self.state.basis.push(q);
        }
        let j = self.state.basis.len() - 1;
        let q = &self.state.basis[j];
        let mut w = self.op.apply(q);
        let a = inner(q, &w);
        let scale = hermitian_scale(&self.op, q, &w);
        if a.im.abs() > HERMITIAN_TOL * scale {
            return Err(KrylovError::NotHermitian(a.im));
        }
        let alpha = a.re;
        axpy(C64::new(-alpha, 0.0), q, &mut w);
        if j > 0 {
            let b = self.state.beta[j - 1];
            axpy(C64::new(-b, 0.0), &self.state.basis[j - 1], &mut w);
        }
        for _ in 0..2 {
            for q in &self.state.basis {
                let c = inner(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        self.state.alpha.push(alpha);
        let beta = norm(&w);
        self.state.iteration += 1;

        let (theta, s) = self.state.extremal_ritz(self.mode);
        let res = beta * s.last().unwrap().abs();
        self.trace.push(IterationRecord {
            theta,
            ritz_residual: res,
        });
        let scale = self.state.scale().max(f64::MIN_POSITIVE);
        self.state.residual = w.clone();
        if res <= self.tol * scale {
            return Ok(Step::Converged);
        }
        if self.state.basis.len() == dim {
            return Ok(Step::Exhausted);
        }
        let breakdown = beta <= 1e-14 * scale;
        self.state.beta.push(if breakdown { 0.0 } else { beta });
        self.next = Some(w);
        Ok(Step::Continue)
    }

    fn fresh_direction(&mut self, dim: usize) -> Vec<C64> {
        loop {
            let mut v = random_vector(&mut self.rng, dim);
            for _ in 0..2 {
                for q in &self.state.basis {
                    let c = inner(q, &v);
                    axpy(-c, q, &mut v);
                }
            }
            let n = norm(&v);
            if n > 1e-8 {
                return v.iter().map(|z| z / n).collect();
            }
        }
    }

    pub fn report(&self, converged: bool) -> EigSolveReport {
        let (theta, s) = self.state.extremal_ritz(self.mode);
        EigSolveReport {
            theta,
            vector: self.state.ritz_vector(&s),
            residual_norm: self.trace.last().map_or(f64::INFINITY, |t| t.ritz_residual),
            iterations: self.state.iteration,
            converged,
            restarts: self.restarts,
            trace: self.trace.clone(),
        }
    }
}

/// Extremal eigenpair of Hermitian `a` by Lanczos.
pub fn lanczos<A: LinearOperator>(
    a: A,
    v0: &[C64],
    mode: Mode,
    tol: f64,
    max_iter: usize,
) -> Result<EigSolveReport> {
    lanczos_seeded(a, v0, mode, tol, max_iter, 0)
}

/// [`lanczos`] with an explicit seed for breakdown restarts.
pub fn lanczos_seeded<A: LinearOperator>(
    a: A,
    v0: &[C64],
    mode: Mode,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigSolveReport> {
    let mut solver = Lanczos::new(a, v0, mode, tol, seed)?;
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        match solver.step()? {
            Step::Continue => {}
            Step::Converged | Step::Exhausted => {
                converged = true;
                break;
            }
        }
    }
    Ok(solver.report(converged))
}

/// Generalized Lanczos state machine for `A x = lambda M x`.
pub struct GeneralizedLanczos<A, M, S> {
    a: A,
    m: M,
    solve_m: S,
    mode: Mode,
    tol: f64,
    state: KrylovState,
    /// `M q_j` for every basis vector.
    mq: Vec<Vec<C64>>,
    /// Unnormalized next direction `u_{j+1}` awaiting normalization.
    next: Option<Vec<C64>>,
    rng: ChaCha8Rng,
    restarts: usize,
    /// Basis indices introduced by a breakdown restart.
    restart_marks: Vec<usize>,
    trace: Vec<IterationRecord>,
}

impl<A, M, S> GeneralizedLanczos<A, M, S>
where
    A: LinearOperator,
    M: LinearOperator,
    S: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    pub fn new(
        a: A,
        m: M,
        solve_m: S,
        u0: &[C64],
        mode: Mode,
        tol: f64,
        seed: u64,
    ) -> Result<Self> {
        check_len(a.dim(), u0.len())?;
        check_len(a.dim(), m.dim())?;
        if norm(u0) == 0.0 {
            return Err(KrylovError::ZeroStart);
        }
        let mut me = Self {
            a,
            m,
            solve_m,
            mode,
            tol,
            state: KrylovState::default(),
            mq: vec![],
            next: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            restarts: 0,
            restart_marks: vec![],
            trace: vec![],
        };
        if !me.push_normalized(u0.to_vec())? {
            return Err(KrylovError::ZeroStart);
        }
        Ok(me)
    }

    pub fn state(&self) -> &KrylovState {
        &self.state
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    /// M-orthogonalize `u` against the basis (two passes).
    fn m_orthogonalize(&self, u: &mut [C64]) {
        for _ in 0..2 {
            for (q, mq) in self.state.basis.iter().zip(&self.mq) {
                let c = inner(mq, u);
                axpy(-c, q, u);
            }
        }
    }

    /// Normalize in the M-norm and append. Returns false if `u` is
    /// numerically zero.
    fn push_normalized(&mut self, u: Vec<C64>) -> Result<bool> {
        let mu = self.m.apply(&u);
        let nrm2 = inner(&u, &mu).re;
        if nrm2 < 0.0 {
            return Err(KrylovError::IndefiniteMetric(nrm2));
        }
        if nrm2 == 0.0 || !nrm2.is_finite() {
            return Ok(false);
        }
        let s = 1.0 / nrm2.sqrt();
        self.state.basis.push(u.iter().map(|z| z * s).collect());
        self.mq.push(mu.iter().map(|z| z * s).collect());
        Ok(true)
    }

    fn restart(&mut self) -> Result<()> {
        let dim = self.a.dim();
        loop {
            let mut v = random_vector(&mut self.rng, dim);
            self.m_orthogonalize(&mut v);
            if norm(&v) > 1e-8 && self.push_normalized(v)? {
                self.restarts += 1;
                self.restart_marks.push(self.state.basis.len() - 1);
                return Ok(());
            }
        }
    }

    pub fn step(&mut self) -> Result<Step> {
        let dim = self.a.dim();
        if let Some(u) = self.next.take() {
            let scale = self.state.scale().max(f64::MIN_POSITIVE);
            let un = norm(&u);
            if un <= 1e-14 * (1.0 + scale) || !self.push_normalized(u)? {
                self.restart()?;
            }
        }
        let j = self.state.basis.len() - 1;
        let q = self.state.basis[j].clone();
        let aq = self.a.apply(&q);
        let a = inner(&q, &aq);
        let scale = hermitian_scale(&self.a, &q, &aq);
        if a.im.abs() > HERMITIAN_TOL * scale {
            return Err(KrylovError::NotHermitian(a.im));
        }
        let alpha = a.re;
        let mut r = aq.clone();
        axpy(C64::new(-alpha, 0.0), &self.mq[j], &mut r);
        if j > 0 {
            let b = inner(&self.state.basis[j - 1], &aq);
            if b.im.abs() > HERMITIAN_TOL * scale {
                return Err(KrylovError::NotHermitian(b.im));
            }
            // After a breakdown restart the new vector is decoupled from the
            // previous one; the coupling is then roundoff and is dropped.
            let beta = if self.restarted_at(j) { 0.0 } else { b.re };
            self.state.beta.push(beta);
            axpy(C64::new(-beta, 0.0), &self.mq[j - 1], &mut r);
        }
        self.state.alpha.push(alpha);
        self.state.iteration += 1;

        let (theta, s) = self.state.extremal_ritz(self.mode);
        let res = ritz_residual(&r, &s);
        self.trace.push(IterationRecord {
            theta,
            ritz_residual: res,
        });
        self.state.residual = r;
        let tscale = self.state.scale().max(f64::MIN_POSITIVE);
        if res <= self.tol * tscale {
            return Ok(Step::Converged);
        }
        if self.state.basis.len() == dim {
            return Ok(Step::Exhausted);
        }
        let mut u = (self.solve_m)(&self.state.residual)?;
        check_len(dim, u.len())?;
        self.m_orthogonalize(&mut u);
        self.next = Some(u);
        Ok(Step::Continue)
    }

    fn restarted_at(&self, j: usize) -> bool {
        self.restart_marks.contains(&j)
    }

    pub fn report(&self, converged: bool) -> EigSolveReport {
        let (theta, s) = self.state.extremal_ritz(self.mode);
        EigSolveReport {
            theta,
            vector: self.state.ritz_vector(&s),
            residual_norm: self.trace.last().map_or(f64::INFINITY, |t| t.ritz_residual),
            iterations: self.state.iteration,
            converged,
            restarts: self.restarts,
            trace: self.trace.clone(),
        }
    }
}

/// Extremal generalized eigenpair of `A x = lambda M x`. `solve_m` returns
/// an approximate solution of `M x = b`.
pub fn generalized_lanczos<A, M, S>(
    a: A,
    m: M,
    solve_m: S,
    u0: &[C64],
    mode: Mode,
    tol: f64,
    max_iter: usize,
) -> Result<EigSolveReport>
where
    A: LinearOperator,
    M: LinearOperator,
    S: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    generalized_lanczos_seeded(a, m, solve_m, u0, mode, tol, max_iter, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn generalized_lanczos_seeded<A, M, S>(
    a: A,
    m: M,
    solve_m: S,
    u0: &[C64],
    mode: Mode,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigSolveReport>
where
    A: LinearOperator,
    M: LinearOperator,
    S: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    let mut solver = GeneralizedLanczos::new(a, m, solve_m, u0, mode, tol, seed)?;
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        match solver.step()? {
            Step::Continue => {}
            Step::Converged | Step::Exhausted => {
                converged = true;
                break;
            }
        }
    }
    Ok(solver.report(converged))
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `||A x - b||` from the recurrence.
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradient for Hermitian positive definite `a`. Stops when
/// `||A x - b|| <= tol ||b||`; otherwise returns the last iterate with
/// `converged = false` after `max_iter` iterations.
pub fn conjugate_gradient<A: LinearOperator>(
    a: A,
    b: &[C64],
    x0: Option<&[C64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    conjugate_gradient_observed(a, b, x0, tol, max_iter, |_| {})
}

/// [`conjugate_gradient`] calling `observe` with every iterate.
pub fn conjugate_gradient_observed<A: LinearOperator>(
    a: A,
    b: &[C64],
    x0: Option<&[C64]>,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[C64]),
) -> Result<CgOutcome> {
    let n = a.dim();
    check_len(n, b.len())?;
    let mut x = match x0 {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![C64::new(0.0, 0.0); n],
    };
    let bn = norm(b);
    let target = tol * bn;
    let mut r: Vec<C64> = if x0.is_some() {
        let ax = a.apply(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    } else {
        b.to_vec()
    };
    let mut rr = inner(&r, &r).re;
    if rr.sqrt() <= target || bn == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_norm: rr.sqrt(),
            converged: true,
        });
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let ap = a.apply(&p);
        let pap = inner(&p, &ap).re;
        if pap <= 0.0 {
            return Err(KrylovError::NonPositiveCurvature {
                iteration: it,
                curvature: pap,
            });
        }
        let step = C64::new(rr / pap, 0.0);
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        observe(&x);
        let rr_new = inner(&r, &r).re;
        if rr_new.sqrt() <= target {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual_norm: rr_new.sqrt(),
                converged: true,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
    }
    Ok(CgOutcome {
        x,
        iterations: max_iter,
        residual_norm: rr.sqrt(),
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_real_diagonal(v)
    }

    fn random_hermitian(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_row_major(n, n, random_vector(&mut rng, n * n));
        g.add(&g.adjoint()).scale(c(0.5))
    }

    fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_row_major(n, n, random_vector(&mut rng, n * n));
        g.matmul(&g.adjoint()).scale(c(1.0 / n as f64)).shifted(0.5)
    }

    fn exact_solver(m: &DenseMatrix) -> impl FnMut(&[C64]) -> Result<Vec<C64>> + '_ {
        move |b| {
            m.solve_hpd(b)
                .ok_or_else(|| KrylovError::Solve("cholesky failed".into()))
        }
    }

    #[test]
    fn lanczos_diagonal_lowest() {
        let v0 = vec![c(1.0); 3];
        let rep = lanczos(diag(&[1.0, 2.0, 3.0]), &v0, Mode::Lowest, 1e-12, 10).unwrap();
        assert!(rep.converged);
        assert!((rep.theta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_eigenvector_start() {
        let rep = lanczos(
            diag(&[1.0, 2.0, 3.0]),
            &[c(0.0), c(1.0), c(0.0)],
            Mode::Lowest,
            1e-12,
            10,
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert!((rep.theta - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lanczos_zero_start() {
        let err = lanczos(
            diag(&[1.0, 2.0]),
            &[c(0.0), c(0.0)],
            Mode::Lowest,
            1e-12,
            10,
        )
        .unwrap_err();
        assert_eq!(err, KrylovError::ZeroStart);
    }

    #[test]
    fn lanczos_random_hermitian() {
        let a = random_hermitian(50, 11);
        let eig = a.eigh().values;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v0 = random_vector(&mut rng, 50);
        let lo = lanczos(&a, &v0, Mode::Lowest, 1e-12, 50).unwrap();
        let hi = lanczos(&a, &v0, Mode::Highest, 1e-12, 50).unwrap();
        assert!((lo.theta - eig[0]).abs() < 1e-9);
        assert!((hi.theta - eig[49]).abs() < 1e-9);
    }

    #[test]
    fn lanczos_restarts_after_breakdown() {
        // Start in an invariant subspace that does not hold the lowest state.
        // With tol = 0 the exact breakdown counts as unconverged.
        let a = diag(&[5.0, 1.0, 3.0, 4.0]);
        let v0 = [c(1.0), c(0.0), c(1.0), c(0.0)];
        let rep = lanczos(&a, &v0, Mode::Lowest, 0.0, 10).unwrap();
        assert!(rep.restarts >= 1);
        assert!((rep.theta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn generalized_decoupled_pair() {
        let a = diag(&[2.0, 6.0]);
        let m = diag(&[1.0, 2.0]);
        let rep = generalized_lanczos(
            &a,
            &m,
            exact_solver(&m),
            &[c(1.0), c(1.0)],
            Mode::Highest,
            1e-12,
            10,
        )
        .unwrap();
        assert!(rep.converged);
        assert!((rep.theta - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_with_identity_matches_standard() {
        let a = random_hermitian(30, 4);
        let id = DenseMatrix::identity(30);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v0 = random_vector(&mut rng, 30);
        let mut std = Lanczos::new(&a, &v0, Mode::Lowest, 0.0, 0).unwrap();
        let mut gen = GeneralizedLanczos::new(
            &a,
            &id,
            |b: &[C64]| Ok(b.to_vec()),
            &v0,
            Mode::Lowest,
            0.0,
            0,
        )
        .unwrap();
        for _ in 0..20 {
            std.step().unwrap();
            gen.step().unwrap();
            let (s, g) = (std.state(), gen.state());
            let q1 = s.basis.last().unwrap();
            let q2 = g.basis.last().unwrap();
            let d: f64 = q1
                .iter()
                .zip(q2)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(d < 1e-10, "iterate differs by {d}");
            assert!(
                (std.trace().last().unwrap().theta - gen.trace().last().unwrap().theta).abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn generalized_random_pair() {
        let a = random_hermitian(40, 5);
        let m = random_spd(40, 6);
        let dense = crate::oracle::dense_generalized_eig(&a, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u0 = random_vector(&mut rng, 40);
        let rep =
            generalized_lanczos(&a, &m, exact_solver(&m), &u0, Mode::Highest, 1e-12, 40).unwrap();
        assert!((rep.theta - dense.values[39]).abs() < 1e-8);
    }

    #[test]
    fn ritz_residual_structural_zeros() {
        assert_eq!(ritz_residual(&[c(0.0); 3], &[0.3, 0.4]), 0.0);
        assert_eq!(ritz_residual(&[c(1.0); 3], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn cg_identity_and_diagonal() {
        let b = [c(1.0), c(-2.0), c(0.5)];
        let out = conjugate_gradient(DenseMatrix::identity(3), &b, None, 1e-14, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b.to_vec());
        let out =
            conjugate_gradient(diag(&[1.0, 2.0, 4.0]), &[c(1.0); 3], None, 1e-14, 10).unwrap();
        for (x, y) in out.x.iter().zip([1.0, 0.5, 0.25]) {
            assert!((x - c(y)).norm() < 1e-14);
        }
    }

    #[test]
    fn cg_random_spd_finite_termination() {
        let a = random_spd(60, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random_vector(&mut rng, 60);
        let out = conjugate_gradient(&a, &b, None, 1e-10, 200).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 60);
        let exact = a.solve_hpd(&b).unwrap();
        let err: f64 = out
            .x
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-9 * norm(&exact));
    }

    #[test]
    fn cg_rejects_indefinite() {
        let err =
            conjugate_gradient(diag(&[1.0, -1.0]), &[c(1.0), c(1.0)], None, 1e-12, 10).unwrap_err();
        assert!(matches!(err, KrylovError::NonPositiveCurvature { .. }));
        assert!(err.to_string().contains("regularization"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn cg_error_a_norm_non_increasing(seed in any::<u64>(), n in 5usize..30) {
            let a = random_spd(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let b = random_vector(&mut rng, n);
            let exact = a.solve_hpd(&b).unwrap();
            let a_norm = |x: &[C64]| {
                let e: Vec<C64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
                inner(&e, &a.matvec(&e)).re.max(0.0).sqrt()
            };
            let mut errs = vec![a_norm(&vec![c(0.0); n])];
            conjugate_gradient_observed(&a, &b, None, 1e-13, 3 * n, |x| errs.push(a_norm(x))).unwrap();
            for w in errs.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn m_orthonormal_basis(seed in any::<u64>()) {
            let n = 30;
            let a = random_hermitian(n, seed);
            let m = random_spd(n, seed ^ 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let u0 = random_vector(&mut rng, n);
            let mut solver = GeneralizedLanczos::new(&a, &m, exact_solver(&m), &u0, Mode::Highest, 0.0, 0).unwrap();
            for _ in 0..n {
                if solver.step().unwrap() != Step::Continue { break; }
            }
            let q = &solver.state().basis;
            for i in 0..q.len() {
                let mqi = m.matvec(&q[i]);
                for (j, qj) in q.iter().enumerate() {
                    let g = inner(qj, &mqi);
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g - c(want)).norm() <= 1e-8);
                }
            }
        }

        #[test]
        fn full_space_reproduces_generalized_spectrum(seed in any::<u64>(), n in 4usize..16) {
            let a = random_hermitian(n, seed);
            let m = random_spd(n, seed ^ 5);
            let dense = crate::oracle::dense_generalized_eig(&a, &m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let u0 = random_vector(&mut rng, n);
            let mut solver = GeneralizedLanczos::new(&a, &m, exact_solver(&m), &u0, Mode::Highest, 0.0, 0).unwrap();
            for _ in 0..n {
                if solver.step().unwrap() != Step::Continue { break; }
            }
            let (ritz, _) = solver.state().ritz_pairs();
            prop_assert_eq!(ritz.len(), n);
            for (x, y) in ritz.iter().zip(&dense.values) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}

//! Brute-force dense references.
//!
//! Nothing here touches the tensor-network code: Hamiltonians are built with
//! bit operations, reduced density matrices by reshaping dense vectors, and
//! generalized eigenproblems by dense diagonalization of
//! `C = M^{-1/2} A M^{-1/2}`. Also holds the free-fermion reference for the
//! XY chain and the Chebyshev convergence bound for generalized Lanczos.
//!
//! Dense basis convention: site 0 is the most significant digit, digit 0 is
//! spin up.

use thiserror::Error;

use crate::linalg::{eigh_real, DenseMatrix};
use crate::mpo::XxzParams;
use crate::C64;

/// Default cap on dense matrix dimensions.
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 14;

/// Environment variable overriding [`DEFAULT_DENSE_LIMIT`].
pub const DENSE_LIMIT_ENV: &str = "GEDMRG_DENSE_LIMIT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dense dimension {dim} exceeds limit {limit} (set {DENSE_LIMIT_ENV} to raise it)")]
    DenseLimit { dim: usize, limit: usize },
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("metric is not positive definite (smallest eigenvalue {0:e}); regularize it first")]
    SingularMetric(f64),
    #[error("largest eigenvalue is degenerate; the convergence bound is undefined")]
    DegenerateTop,
    #[error("invalid region: {0}")]
    Region(String),
    #[error("state vector length {len} is not d^N for d={d}, N={n}")]
    Shape { len: usize, d: usize, n: usize },
    #[error("state has zero norm")]
    ZeroVector,
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Dense limit, honouring `GEDMRG_DENSE_LIMIT`.
pub fn dense_limit() -> usize {
    std::env::var(DENSE_LIMIT_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_LIMIT)
}

fn check_limit(dim: usize) -> Result<()> {
    let limit = dense_limit();
    if dim > limit {
        return Err(OracleError::DenseLimit { dim, limit });
    }
    Ok(())
}

/// Normalized dense state of `n` sites with local dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    amplitudes: Vec<C64>,
    d: usize,
    n: usize,
}

impl DenseState {
    /// Normalizes the input.
    pub fn new(amplitudes: Vec<C64>, d: usize, n: usize) -> Result<Self> {
        if d.checked_pow(n as u32) != Some(amplitudes.len()) {
            return Err(OracleError::Shape {
                len: amplitudes.len(),
                d,
                n,
            });
        }
        let nrm = crate::linalg::norm(&amplitudes);
        if nrm == 0.0 {
            return Err(OracleError::ZeroVector);
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|z| z / nrm).collect(),
            d,
            n,
        })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }
}

fn sz(bit: usize) -> f64 {
    if bit == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Dense XXZ Hamiltonian from bit manipulation.
pub fn xxz_dense(p: &XxzParams) -> Result<DenseMatrix> {
    let n = p.n;
    let dim = 1usize << n;
    check_limit(dim)?;
    let bit = |s: usize, i: usize| (s >> (n - 1 - i)) & 1;
    let mut h = DenseMatrix::zeros(dim, dim);
    for s in 0..dim {
        let mut diag = 0.0;
        for i in 0..n {
            diag -= 2.0 * p.h * sz(bit(s, i));
        }
        for i in 0..n - 1 {
            let (a, b) = (bit(s, i), bit(s, i + 1));
            diag -= p.j * p.delta * sz(a) * sz(b);
            if a != b {
                let t = s ^ (1 << (n - 1 - i)) ^ (1 << (n - 2 - i));
                h[(t, s)] += -0.5 * p.j;
            }
        }
        h[(s, s)] += diag;
    }
    Ok(h)
}

/// Lowest eigenpair by full diagonalization. A matrix of dimension `2^N`
/// is read as `N` qubits; any other dimension as a single site.
pub fn exact_ground_state(h: &DenseMatrix) -> Result<(f64, DenseState)> {
    let dim = h.rows();
    check_limit(dim)?;
    let asym = h.hermiticity_defect();
    if asym > 1e-10 {
        return Err(OracleError::NotHermitian(asym));
    }
    let eig = h.eigh();
    let v = eig.vectors.column(0);
    let (d, n) = if dim.is_power_of_two() && dim > 1 {
        (2, dim.trailing_zeros() as usize)
    } else {
        (dim, 1)
    };
    Ok((eig.values[0], DenseState::new(v, d, n)?))
}

fn check_sites(region: &[usize], n: usize) -> Result<()> {
    for (k, &i) in region.iter().enumerate() {
        if i >= n || region[..k].contains(&i) {
            return Err(OracleError::Region(format!("{region:?} on {n} sites")));
        }
    }
    Ok(())
}

/// Partial trace over the complement of `region`. Row/column digits follow
/// the order of `region` as given.
pub fn reduced_density(v: &DenseState, region: &[usize]) -> Result<DenseMatrix> {
    let (d, n) = (v.d, v.n);
    check_sites(region, n)?;
    let rdim = d.pow(region.len() as u32);
    check_limit(rdim)?;
    let complement: Vec<usize> = (0..n).filter(|i| !region.contains(i)).collect();
    let cdim = d.pow(complement.len() as u32);
    // Digits of a full index, site 0 most significant.
    let digit = |s: usize, i: usize| (s / d.pow((n - 1 - i) as u32)) % d;
    let compose = |s: usize, sites: &[usize]| sites.iter().fold(0, |acc, &i| acc * d + digit(s, i));
    let mut m = DenseMatrix::zeros(rdim, cdim);
    for (s, &a) in v.amplitudes.iter().enumerate() {
        m[(compose(s, region), compose(s, &complement))] = a;
    }
    Ok(m.matmul(&m.adjoint()))
}

/// Von Neumann entropy of a density matrix (natural log).
pub fn von_neumann_entropy(rho: &DenseMatrix) -> f64 {
    rho.eigh()
        .values
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Rényi entropy of order `alpha` (`1` is von Neumann, infinity is the
/// min-entropy).
pub fn renyi_entropy_exact(rho: &DenseMatrix, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return von_neumann_entropy(rho);
    }
    let p: Vec<f64> = rho.eigh().values.into_iter().filter(|&p| p > 0.0).collect();
    if alpha.is_infinite() {
        return -p.iter().cloned().fold(0.0, f64::max).ln();
    }
    p.iter().map(|x| x.powf(alpha)).sum::<f64>().ln() / (1.0 - alpha)
}

/// `S(A) + S(B) - S(AB)`.
pub fn mutual_information_exact(v: &DenseState, a: &[usize], b: &[usize]) -> Result<f64> {
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    check_sites(&ab, v.n)?;
    let sa = von_neumann_entropy(&reduced_density(v, a)?);
    let sb = von_neumann_entropy(&reduced_density(v, b)?);
    let sab = von_neumann_entropy(&reduced_density(v, &ab)?);
    Ok(sa + sb - sab)
}

/// Eigenpairs of `rho_A (x) rho_B` from the eigenpairs of the factors.
/// The product basis resolves the spectrum far more accurately than
/// diagonalizing the Kronecker product, whose tiny eigenvalues cluster at
/// roundoff level.
fn product_eigen(rho_a: &DenseMatrix, rho_b: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let ea = rho_a.eigh();
    let eb = rho_b.eigh();
    let values = ea
        .values
        .iter()
        .flat_map(|x| eb.values.iter().map(move |y| x * y))
        .collect();
    (values, ea.vectors.kron(&eb.vectors))
}

/// Largest eigenvalue of `s^{-1/2} rho_AB s^{-1/2}` with
/// `s = rho_A (x) rho_B + eps I`.
pub fn max_eigenvalue_exact(v: &DenseState, a: &[usize], b: &[usize], eps: f64) -> Result<f64> {
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    check_sites(&ab, v.n)?;
    let rho = reduced_density(v, &ab)?;
    let (values, u) = product_eigen(&reduced_density(v, a)?, &reduced_density(v, b)?);
    let w: Vec<f64> = values
        .iter()
        .map(|x| {
            let s = x + eps;
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // u^dag rho u in the product eigenbasis, weighted on both sides.
    let c = u.adjoint().matmul(&rho).matmul(&u);
    let n = w.len();
    let c = DenseMatrix::from_fn(n, n, |i, j| c[(i, j)] * (w[i] * w[j]));
    let c = c.add(&c.adjoint()).scale(C64::new(0.5, 0.0));
    Ok(*c.eigh().values.last().unwrap())
}

/// `ln` of [`max_eigenvalue_exact`].
pub fn max_divergence_exact(v: &DenseState, a: &[usize], b: &[usize], eps: f64) -> Result<f64> {
    Ok(max_eigenvalue_exact(v, a, b, eps)?.ln())
}

/// Largest `||rho_AB w||` over eigenvectors `w` of `rho_A (x) rho_B` with
/// eigenvalue below `kernel_tol`; zero when the kernel is empty.
pub fn kernel_leak(v: &DenseState, a: &[usize], b: &[usize], kernel_tol: f64) -> Result<f64> {
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    check_sites(&ab, v.n)?;
    let rho = reduced_density(v, &ab)?;
    let (values, u) = product_eigen(&reduced_density(v, a)?, &reduced_density(v, b)?);
    let mut worst = 0.0f64;
    for (k, &lam) in values.iter().enumerate() {
        if lam < kernel_tol {
            let w = u.column(k);
            worst = worst.max(crate::linalg::norm(&rho.matvec(&w)));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct GeneralizedEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: DenseMatrix,
}

/// Dense solve of `A x = lambda M x` for Hermitian `A`, positive definite `M`.
pub fn dense_generalized_eig(a: &DenseMatrix, m: &DenseMatrix) -> Result<GeneralizedEig> {
    check_limit(a.rows())?;
    for x in [a, m] {
        let asym = x.hermiticity_defect();
        if asym > 1e-10 * (1.0 + x.frobenius_norm()) {
            return Err(OracleError::NotHermitian(asym));
        }
    }
    let me = m.eigh();
    let min = me.values[0];
    if min <= 0.0 {
        return Err(OracleError::SingularMetric(min));
    }
    let inv_sqrt = m.hermitian_function(|x| 1.0 / x.sqrt());
    let c = inv_sqrt.matmul(a).matmul(&inv_sqrt);
    let c = c.add(&c.adjoint()).scale(C64::new(0.5, 0.0));
    let ce = c.eigh();
    Ok(GeneralizedEig {
        values: ce.values,
        vectors: inv_sqrt.matmul(&ce.vectors),
    })
}

/// Single-particle modes of the open XY chain: energies `-J cos(k pi/(N+1))`
/// and sine modes, `k = 1..N`.
fn free_fermion_modes(n: usize, j: f64) -> Vec<(f64, Vec<f64>)> {
    let l = (n + 1) as f64;
    (1..=n)
        .map(|k| {
            let q = k as f64 * std::f64::consts::PI / l;
            let phi = (0..n)
                .map(|i| (2.0 / l).sqrt() * (q * (i + 1) as f64).sin())
                .collect();
            (-j * q.cos(), phi)
        })
        .collect()
}

/// Ground-state energy of the XX chain (`delta = 0`, `h = 0`): sum of the
/// negative single-particle energies. The sine modes of an open chain have
/// no zero mode for even `N`; for odd `N` the zero mode is left empty.
pub fn free_fermion_energy(n: usize, j: f64) -> f64 {
    free_fermion_modes(n, j)
        .iter()
        .map(|m| m.0)
        .filter(|&e| e < 0.0)
        .sum()
}

/// `C_ij = <c_i^dag c_j>` of the filled Fermi sea, row-major.
pub fn free_fermion_correlation(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for (e, phi) in free_fermion_modes(n, 1.0) {
        if e < 0.0 {
            for i in 0..n {
                for k in 0..n {
                    c[i * n + k] += phi[i] * phi[k];
                }
            }
        }
    }
    c
}

fn fermion_entropy(c: &[f64], n: usize, region: &[usize]) -> f64 {
    let k = region.len();
    if k == 0 {
        return 0.0;
    }
    let sub: Vec<f64> = region
        .iter()
        .flat_map(|&i| region.iter().map(move |&j| c[i * n + j]))
        .collect();
    let (nu, _) = eigh_real(k, &sub);
    nu.iter()
        .map(|&v| v.clamp(0.0, 1.0))
        .map(|v| {
            let f = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
            f(v) + f(1.0 - v)
        })
        .sum()
}

fn is_contiguous(region: &[usize]) -> bool {
    region.windows(2).all(|w| w[1] == w[0] + 1)
}

/// Spin entanglement entropy of `region` in the XX ground state. The
/// Jordan-Wigner string makes block reduced states of spins and fermions
/// coincide, so a contiguous region (or, since the state is pure, a region
/// with contiguous complement) is exact. For other regions the fermionic
/// value is returned.
pub fn free_fermion_entropy(n: usize, region: &[usize]) -> f64 {
    let c = free_fermion_correlation(n);
    let mut region = region.to_vec();
    region.sort_unstable();
    if region.len() == n {
        return 0.0;
    }
    if is_contiguous(&region) {
        return fermion_entropy(&c, n, &region);
    }
    let complement: Vec<usize> = (0..n).filter(|i| !region.contains(i)).collect();
    if is_contiguous(&complement) {
        return fermion_entropy(&c, n, &complement);
    }
    fermion_entropy(&c, n, &region)
}

/// Mutual information of the XX ground state from single-particle
/// correlations.
pub fn free_fermion_mi(n: usize, a: &[usize], b: &[usize]) -> f64 {
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    free_fermion_entropy(n, a) + free_fermion_entropy(n, b) - free_fermion_entropy(n, &ab)
}

/// Inputs of the Kaniel-Paige style bound
/// `lambda_1 - theta_1 <= (lambda_1 - lambda_n) (tan(phi_1) / c_{m-1}(1 + 2 rho_1))^2`.
#[derive(Clone, Debug)]
pub struct ConvergenceBoundInputs {
    /// Descending eigenvalues of `C = M^{-1/2} A M^{-1/2}`.
    pub spectrum: Vec<f64>,
    pub phi1: f64,
    pub m: usize,
}

impl ConvergenceBoundInputs {
    /// Angle between the start vector (mapped by `M^{1/2}`) and the top
    /// eigenvector of `C`.
    pub fn from_problem(
        a: &DenseMatrix,
        m: &DenseMatrix,
        u0: &[C64],
        krylov_dim: usize,
    ) -> Result<Self> {
        let sqrt_m = m.hermitian_function(|x| x.max(0.0).sqrt());
        let ge = dense_generalized_eig(a, m)?;
        let n = ge.values.len();
        let y0 = sqrt_m.matvec(u0);
        let top = sqrt_m.matvec(&ge.vectors.column(n - 1));
        let cos = crate::linalg::inner(&top, &y0).norm()
            / (crate::linalg::norm(&top) * crate::linalg::norm(&y0));
        let mut spectrum = ge.values;
        spectrum.reverse();
        Ok(Self {
            spectrum,
            phi1: cos.clamp(0.0, 1.0).acos(),
            m: krylov_dim,
        })
    }

    /// `(lambda_1 - lambda_2) / (lambda_2 - lambda_n)`.
    pub fn rho1(&self) -> f64 {
        let s = &self.spectrum;
        (s[0] - s[1]) / (s[1] - s[s.len() - 1])
    }
}

/// Chebyshev polynomial of the first kind; hyperbolic form for `|z| > 1`.
pub fn chebyshev(k: usize, z: f64) -> f64 {
    let k = k as f64;
    if z >= 1.0 {
        (k * z.acosh()).cosh()
    } else if z <= -1.0 {
        let s = if (k as i64) % 2 == 0 { 1.0 } else { -1.0 };
        s * (k * (-z).acosh()).cosh()
    } else {
        (k * z.acos()).cos()
    }
}

/// Right-hand side of the convergence bound.
pub fn chebyshev_bound(inp: &ConvergenceBoundInputs) -> Result<f64> {
    let s = &inp.spectrum;
    if s.len() < 2 || s[0] <= s[1] {
        return Err(OracleError::DegenerateTop);
    }
    let spread = s[0] - s[s.len() - 1];
    let tan = inp.phi1.tan();
    if tan == 0.0 {
        return Ok(0.0);
    }
    if inp.m <= 1 {
        return Ok(spread * tan * tan);
    }
    let below = s[1] - s[s.len() - 1];
    if below == 0.0 {
        // Two distinct eigenvalues: one step past the start is exact.
        return Ok(0.0);
    }
    let c = chebyshev(inp.m - 1, 1.0 + 2.0 * inp.rho1());
    Ok(spread * (tan / c).powi(2))
}

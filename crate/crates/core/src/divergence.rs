//! Maximal Rényi divergence `D_inf(rho_AB || rho_A (x) rho_B)` and von
//! Neumann mutual information of MPS subsystems.
//!
//! Three routes are provided:
//! * [`max_divergence_edge`] for subsystems at the chain edges. The Schmidt
//!   bases at the inner edges of A and B diagonalize `sigma = rho_A (x)
//!   rho_B`, so `(sigma + eps)^{-1/2}` is the diagonal weight
//!   `g_ab = (s_a^2 s'_b^2 + eps)^{-1/2}` in that basis. The weighted
//!   `rho_AB` between the edge isometries forms an MPO whose top eigenvalue
//!   is found with standard DMRG.
//! * [`max_divergence_general`] for any pair of regions with A left of B,
//!   via generalized DMRG on `rho_AB x = lambda (sigma + eps) x`.
//! * [`max_divergence_dense`], the dense reference on the full state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmrg::{dmrg_extremal, generalized_dmrg, DmrgError, SweepConfig, SweepStats};
use crate::krylov::Mode;
use crate::linalg::DenseMatrix;
use crate::mpo::{
    ket_bra, mpo_compress, mpo_to_dense_limited, product_density_mpo, reduced_density_mpo,
    MatrixProductOperator, MpoError,
};
use crate::mps::{random_mps, MatrixProductState, MpsError};
use crate::oracle::{self, dense_limit, DenseState, OracleError};
use crate::tensor::{contract, Tensor, TensorError};
use crate::C64;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error(transparent)]
    Dmrg(#[from] DmrgError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("the edge method needs A and B at the chain edges (AEB geometry)")]
    NotEdge,
    #[error("operator bond dimension {bond} exceeds the budget of {limit}")]
    Budget { bond: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, DivergenceError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Aeb,
    Eaebe,
    Custom,
}

impl GeometryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometryKind::Aeb => "aeb",
            GeometryKind::Eaebe => "eaebe",
            GeometryKind::Custom => "custom",
        }
    }
}

/// Two disjoint, sorted, nonempty site sets on an `n`-site chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub kind: GeometryKind,
    pub region_a: Vec<usize>,
    pub region_b: Vec<usize>,
    pub n: usize,
}

impl Geometry {
    /// A = first `ns` sites, B = last `ns` sites.
    pub fn aeb(n: usize, ns: usize) -> Result<Self> {
        if ns == 0 || 2 * ns > n {
            return Err(DivergenceError::Geometry(format!(
                "AEB needs 1 <= ns <= N/2, got ns={ns}, N={n}"
            )));
        }
        Ok(Self {
            kind: GeometryKind::Aeb,
            region_a: (0..ns).collect(),
            region_b: (n - ns..n).collect(),
            n,
        })
    }

    /// `E A E B E` with equal-sized A and B. The `n - 2 ns` environment
    /// sites are split into three floor-divided segments; leftover sites
    /// go to the segments from left to right.
    pub fn eaebe(n: usize, ns: usize) -> Result<Self> {
        if ns == 0 || 2 * ns > n {
            return Err(DivergenceError::Geometry(format!(
                "EAEBE needs 1 <= ns <= N/2, got ns={ns}, N={n}"
            )));
        }
        let env = n - 2 * ns;
        let (q, r) = (env / 3, env % 3);
        let e0 = q + usize::from(r > 0);
        let e1 = q + usize::from(r > 1);
        let a0 = e0;
        let b0 = a0 + ns + e1;
        Ok(Self {
            kind: GeometryKind::Eaebe,
            region_a: (a0..a0 + ns).collect(),
            region_b: (b0..b0 + ns).collect(),
            n,
        })
    }

    pub fn custom(n: usize, mut region_a: Vec<usize>, mut region_b: Vec<usize>) -> Result<Self> {
        region_a.sort_unstable();
        region_b.sort_unstable();
        let g = Self {
            kind: GeometryKind::Custom,
            region_a,
            region_b,
            n,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DivergenceError::Geometry(m));
        for (name, r) in [("A", &self.region_a), ("B", &self.region_b)] {
            if r.is_empty() {
                return err(format!("region {name} is empty"));
            }
            if r.windows(2).any(|w| w[0] >= w[1]) {
                return err(format!("region {name} has repeated or unsorted sites"));
            }
            if r[r.len() - 1] >= self.n {
                return err(format!(
                    "region {name} exceeds the chain of {} sites",
                    self.n
                ));
            }
        }
        if self.region_a.iter().any(|i| self.region_b.contains(i)) {
            return err("regions A and B overlap".into());
        }
        Ok(())
    }

    /// `A ∪ B` with A's sites first.
    pub fn union(&self) -> Vec<usize> {
        self.region_a
            .iter()
            .chain(&self.region_b)
            .copied()
            .collect()
    }

    /// Size of A (the `ns` of symmetric geometries).
    pub fn ns(&self) -> usize {
        self.region_a.len()
    }

    /// A and B sit at the two ends of the chain with equal size.
    pub fn is_edge(&self) -> bool {
        let ns = self.region_a.len();
        ns == self.region_b.len()
            && 2 * ns <= self.n
            && self.region_a.iter().copied().eq(0..ns)
            && self.region_b.iter().copied().eq(self.n - ns..self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceMethod {
    Edge,
    Gdmrg,
    Exact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sweeps: usize,
    pub lanczos_steps: usize,
    pub cg_solves: usize,
    pub cg_iterations: usize,
    pub cg_mean_iterations: f64,
    /// Largest bond of the operator before compression (edge method: the
    /// fused three-layer bond).
    pub raw_operator_bond: usize,
    /// Largest bond of the operator handed to the optimizer.
    pub operator_bond: usize,
    /// Largest bond of the input state.
    pub state_bond: usize,
    /// Objective after each full sweep.
    pub history: Vec<f64>,
}

impl Diagnostics {
    fn from_stats(stats: &SweepStats, sweeps: usize, history: Vec<f64>) -> Self {
        Self {
            sweeps,
            lanczos_steps: stats.lanczos_steps,
            cg_solves: stats.cg_solves,
            cg_iterations: stats.cg_iterations,
            cg_mean_iterations: stats.cg_mean_iterations(),
            history,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    /// `ln lambda`, natural log.
    pub d_infinity: f64,
    pub lambda: f64,
    pub method: DivergenceMethod,
    pub epsilon: f64,
    pub converged: bool,
    /// `lambda >= 0.5 / eps`: the value reflects the regularization.
    pub regularization_dominated: bool,
    pub diagnostics: Diagnostics,
}

impl DivergenceResult {
    fn new(
        lambda: f64,
        method: DivergenceMethod,
        epsilon: f64,
        converged: bool,
        diagnostics: Diagnostics,
    ) -> Self {
        Self {
            d_infinity: lambda.ln(),
            lambda,
            method,
            epsilon,
            converged,
            regularization_dominated: lambda >= 0.5 / epsilon,
            diagnostics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivergenceConfig {
    /// Sweeps over the optimized state; `chi_max` caps its bonds.
    pub sweep: SweepConfig,
    /// Bond cap for compressed operators.
    pub operator_chi: usize,
    /// Relative singular-value cutoff for operator compression.
    pub operator_cutoff: f64,
    /// Largest uncompressed operator bond allowed.
    pub max_operator_bond: usize,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            operator_chi: usize::MAX,
            operator_cutoff: 1e-14,
            max_operator_bond: 1 << 14,
        }
    }
}

/// `(s^2 + eps)^{-1/2}` elementwise.
pub fn regularized_inverse_sqrt_schmidt(s: &[f64], eps: f64) -> Vec<f64> {
    s.iter().map(|x| 1.0 / (x * x + eps).sqrt()).collect()
}

/// Weight matrix `g_ab = (s_a^2 t_b^2 + eps)^{-1/2}`: the eigenvalues of
/// `(rho_A (x) rho_B + eps)^{-1/2}` on the product Schmidt basis.
pub fn joint_edge_weights(s: &[f64], t: &[f64], eps: f64) -> DenseMatrix {
    DenseMatrix::from_fn(s.len(), t.len(), |a, b| {
        C64::new(1.0 / ((s[a] * t[b]).powi(2) + eps).sqrt(), 0.0)
    })
}

fn check_budget(bond: usize, cfg: &DivergenceConfig) -> Result<()> {
    if bond > cfg.max_operator_bond {
        return Err(DivergenceError::Budget {
            bond,
            limit: cfg.max_operator_bond,
        });
    }
    Ok(())
}

fn compress(op: &MatrixProductOperator, cfg: &DivergenceConfig) -> Result<MatrixProductOperator> {
    Ok(mpo_compress(op, cfg.operator_chi, cfg.operator_cutoff)?.0)
}

/// `sigma~^{-1/2} rho_AB sigma~^{-1/2}` as an MPO on the `2 ns` edge sites.
///
/// The isometries of A and B up to their inner edges are kept; between
/// them sits the core `O[(a,a'),(b,b')] = g_ab g_a'b' rho[(a,b),(a',b')]`
/// in the product Schmidt basis, with `rho` obtained by tracing the
/// environment through transfer matrices. The core is made exactly
/// Hermitian and split by SVD across the middle bond.
fn edge_operator_mpo(
    psi: &MatrixProductState,
    ns: usize,
    eps: f64,
) -> Result<MatrixProductOperator> {
    let n = psi.n_sites();
    let (left, s, rest) = psi.split_at_bond(ns)?;
    let (_, t, right) = psi.split_at_bond(n - ns)?;
    let (ca, cb) = (s.len(), t.len());

    // T[a, a2, x, x2] = sum_e C[a, e, x] conj(C[a2, e, x2]) with C the
    // Schmidt-weighted environment chain.
    let mut tr = Tensor::zeros(&[("a", ca), ("a2", ca), ("x", ca), ("x2", ca)])?;
    for a in 0..ca {
        for a2 in 0..ca {
            tr.set(&[a, a2, a, a2], C64::new(s[a] * s[a2], 0.0));
        }
    }
    let n_env = n - 2 * ns;
    for m in &rest[..n_env] {
        let x = contract(&tr, &m.clone().relabel("r", "y")?, &[("x", "l")])?;
        let mc = m.conjugate().relabel("r", "y2")?;
        tr = contract(&x, &mc, &[("x2", "l"), ("p", "p")])?
            .relabel_all(&[("y", "x"), ("y2", "x2")])?;
    }
    // Z[x, b] = <right_b | rest_x> over the B sites.
    let mut z = Tensor::from_parts(&[("x", 1), ("b", 1)], vec![C64::new(1.0, 0.0)])?;
    for (m, mp) in rest[n_env..].iter().zip(&right).rev() {
        let y = contract(&m.clone().relabel("l", "xl")?, &z, &[("r", "x")])?;
        let mc = mp.conjugate().relabel("l", "bl")?;
        z = contract(&y, &mc, &[("b", "r"), ("p", "p")])?
            .relabel_all(&[("xl", "x"), ("bl", "b")])?;
    }
    let rho = contract(&tr, &z, &[("x", "x")])?;
    let rho = contract(
        &rho,
        &z.conjugate().relabel_all(&[("x", "x2"), ("b", "b2")])?,
        &[("x2", "x2")],
    )?;
    let rho = rho.permute(&["a", "a2", "b", "b2"])?;

    // Schmidt vectors at roundoff level span the numerical kernel of sigma;
    // weighting them by eps^{-1/2} would only amplify roundoff.
    let g = joint_edge_weights(&s, &t, eps);
    let floor = |v: &[f64]| f64::EPSILON * v.iter().cloned().fold(0.0, f64::max);
    let (fs, ft) = (floor(&s), floor(&t));
    let gw = |a: usize, b: usize| {
        if s[a] <= fs || t[b] <= ft {
            0.0
        } else {
            g[(a, b)].re
        }
    };
    let (rows, cols) = (ca * ca, cb * cb);
    let at =
        |a: usize, a2: usize, b: usize, b2: usize| rho.data()[((a * ca + a2) * cb + b) * cb + b2];
    let core = DenseMatrix::from_fn(rows, cols, |r, c| {
        let (a, a2, b, b2) = (r / ca, r % ca, c / cb, c % cb);
        let herm = 0.5 * (at(a, a2, b, b2) + at(a2, a, b2, b).conj());
        herm * (gw(a, b) * gw(a2, b2))
    });
    let svd = core.svd();
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd
        .s
        .iter()
        .take_while(|&&x| x > 1e-15 * smax)
        .count()
        .max(1);

    let mut sites: Vec<Tensor> = left
        .iter()
        .map(ket_bra)
        .collect::<std::result::Result<_, _>>()?;
    let mut us = Tensor::zeros(&[("r", rows), ("k", rank)])?;
    for r in 0..rows {
        for k in 0..rank {
            us.set(&[r, k], svd.u[(r, k)] * svd.s[k]);
        }
    }
    let last = sites.pop().unwrap();
    sites.push(contract(&last, &us, &[("r", "r")])?.relabel("k", "r")?);

    let mut bsites: Vec<Tensor> = right
        .iter()
        .map(ket_bra)
        .collect::<std::result::Result<_, _>>()?;
    let vh = Tensor::from_parts(
        &[("k", rank), ("l", cols)],
        (0..rank * cols)
            .map(|i| svd.vh[(i / cols, i % cols)])
            .collect(),
    )?;
    let first = bsites.remove(0);
    sites.push(
        contract(&vh, &first, &[("l", "l")])?
            .relabel("k", "l")?
            .permute(&["l", "po", "pi", "r"])?,
    );
    sites.extend(bsites);
    Ok(MatrixProductOperator::from_sites(sites)?)
}

fn random_start(n: usize, cfg: &SweepConfig) -> Result<MatrixProductState> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(random_mps(n, 2, cfg.chi_max, &mut rng)?)
}

/// Edge-subsystem method: A = first `ns` sites, B = last `ns` sites.
pub fn max_divergence_edge(
    psi: &MatrixProductState,
    ns: usize,
    eps: f64,
    cfg: &DivergenceConfig,
) -> Result<DivergenceResult> {
    let n = psi.n_sites();
    if ns == 0 || 2 * ns > n {
        return Err(DivergenceError::NotEdge);
    }
    let (ca, cb) = (psi.bond_dims()[ns - 1], psi.bond_dims()[n - ns - 1]);
    check_budget((ca * ca).max(cb * cb), cfg)?;
    let raw = edge_operator_mpo(psi, ns, eps)?;
    let raw_max = raw.bond_dim();
    let op = compress(&raw, cfg)?;

    let psi0 = random_start(2 * ns, &cfg.sweep)?;
    let out = dmrg_extremal(&op, &psi0, Mode::Highest, &cfg.sweep)?;
    let mut diag = Diagnostics::from_stats(&out.stats, out.sweeps_used, out.history);
    diag.raw_operator_bond = raw_max;
    diag.operator_bond = op.bond_dim();
    diag.state_bond = psi.max_bond_dim();
    Ok(DivergenceResult::new(
        out.energy,
        DivergenceMethod::Edge,
        eps,
        out.converged,
        diag,
    ))
}

/// Generalized DMRG on `rho_AB x = lambda (rho_A (x) rho_B + eps) x`.
pub fn max_divergence_general(
    psi: &MatrixProductState,
    geom: &Geometry,
    eps: f64,
    cfg: &DivergenceConfig,
) -> Result<DivergenceResult> {
    geom.validate()?;
    if geom.n != psi.n_sites() {
        return Err(DivergenceError::Geometry(format!(
            "geometry is for {} sites, state has {}",
            geom.n,
            psi.n_sites()
        )));
    }
    let rho_raw = reduced_density_mpo(psi, &geom.union())?;
    let sigma_raw = product_density_mpo(psi, &geom.region_a, &geom.region_b)?;
    let raw_max = rho_raw.bond_dim().max(sigma_raw.bond_dim());
    check_budget(raw_max, cfg)?;
    let rho = compress(&rho_raw, cfg)?;
    let sigma = compress(&sigma_raw, cfg)?;

    let psi0 = random_start(rho.n_sites(), &cfg.sweep)?;
    let out = generalized_dmrg(&rho, &sigma, &psi0, eps, Mode::Highest, &cfg.sweep)?;
    let mut diag = Diagnostics::from_stats(&out.stats, out.sweeps_used, out.history);
    diag.raw_operator_bond = raw_max;
    diag.operator_bond = rho.bond_dim().max(sigma.bond_dim());
    diag.state_bond = psi.max_bond_dim();
    Ok(DivergenceResult::new(
        out.lambda,
        DivergenceMethod::Gdmrg,
        eps,
        out.converged,
        diag,
    ))
}

/// Dense reference: expands the whole state.
pub fn max_divergence_dense(
    psi: &MatrixProductState,
    geom: &Geometry,
    eps: f64,
) -> Result<DivergenceResult> {
    geom.validate()?;
    let v = dense_state(psi)?;
    let lambda = oracle::max_eigenvalue_exact(&v, &geom.region_a, &geom.region_b, eps)?;
    let diag = Diagnostics {
        state_bond: psi.max_bond_dim(),
        ..Default::default()
    };
    Ok(DivergenceResult::new(
        lambda,
        DivergenceMethod::Exact,
        eps,
        true,
        diag,
    ))
}

fn dense_state(psi: &MatrixProductState) -> Result<DenseState> {
    let amps = psi.to_dense_limited(dense_limit())?;
    Ok(DenseState::new(amps, psi.phys_dim(), psi.n_sites())?)
}

/// `S(rho_A) + S(rho_B) - S(rho_AB)` in nats, from dense reduced density
/// matrices of the regions.
pub fn mutual_information_vn(psi: &MatrixProductState, geom: &Geometry) -> Result<f64> {
    geom.validate()?;
    let limit = dense_limit();
    let entropy = |region: &[usize]| -> Result<f64> {
        let rho = mpo_to_dense_limited(&reduced_density_mpo(psi, region)?, limit)?;
        Ok(oracle::von_neumann_entropy(&rho))
    };
    Ok(entropy(&geom.region_a)? + entropy(&geom.region_b)? - entropy(&geom.union())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmrg::dmrg_ground_state;
    use crate::mpo::{xxz_mpo, XxzParams};
    use crate::mps::product_mps;
    use crate::oracle::free_fermion_mi;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn bell() -> MatrixProductState {
        let h = 0.5f64.sqrt();
        MatrixProductState::from_dense_state(&[r(0.0), r(h), r(h), r(0.0)], 2, 2, 4, 0.0).unwrap()
    }

    fn ground(n: usize, delta: f64) -> MatrixProductState {
        let h = xxz_mpo(&XxzParams::new(1.0, delta, 0.0, n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi0 = random_mps(n, 2, 8, &mut rng).unwrap();
        let cfg = SweepConfig {
            chi_max: 32,
            ..Default::default()
        };
        dmrg_ground_state(&h, &psi0, &cfg).unwrap().1
    }

    #[test]
    fn geometry_placement() {
        let g = Geometry::aeb(10, 3).unwrap();
        assert_eq!(g.region_a, vec![0, 1, 2]);
        assert_eq!(g.region_b, vec![7, 8, 9]);
        assert!(g.is_edge());
        let g = Geometry::eaebe(10, 2).unwrap();
        assert_eq!(g.region_a, vec![2, 3]);
        assert_eq!(g.region_b, vec![6, 7]);
        let g = Geometry::eaebe(9, 2).unwrap();
        assert_eq!(g.region_a, vec![2, 3]);
        assert_eq!(g.region_b, vec![6, 7]);
        let g = Geometry::eaebe(10, 3).unwrap();
        assert_eq!(g.region_a, vec![2, 3, 4]);
        assert_eq!(g.region_b, vec![6, 7, 8]);
        assert!(Geometry::aeb(5, 3).is_err());
        assert!(Geometry::custom(6, vec![0, 1], vec![1, 4]).is_err());
        assert!(Geometry::custom(6, vec![], vec![4]).is_err());
        let g = Geometry::custom(6, vec![4, 0], vec![2]).unwrap();
        assert_eq!(g.region_a, vec![0, 4]);
        assert!(!g.is_edge());
    }

    #[test]
    fn inverse_sqrt_examples() {
        assert_eq!(regularized_inverse_sqrt_schmidt(&[1.0], 0.0), vec![1.0]);
        let h = 0.5f64.sqrt();
        for x in regularized_inverse_sqrt_schmidt(&[h, h], 0.0) {
            assert!((x - 2f64.sqrt()).abs() < 1e-14);
        }
        let s: Vec<f64> = [0.9f64, 0.1, 1e-16].iter().map(|x| x.sqrt()).collect();
        let out = regularized_inverse_sqrt_schmidt(&s, 1e-6);
        assert!((out[2] - 1e3).abs() < 1e-6);
    }

    #[test]
    fn product_state_has_no_divergence() {
        let up = vec![r(1.0), r(0.0)];
        let plus = vec![r(0.6), r(0.8)];
        let psi = product_mps(&[up.clone(), plus.clone(), up, plus]).unwrap();
        let eps = 1e-6;
        let cfg = DivergenceConfig::default();
        let geom = Geometry::aeb(4, 1).unwrap();
        let edge = max_divergence_edge(&psi, 1, eps, &cfg).unwrap();
        let gen = max_divergence_general(&psi, &geom, eps, &cfg).unwrap();
        let exact = max_divergence_dense(&psi, &geom, eps).unwrap();
        for d in [edge.d_infinity, gen.d_infinity, exact.d_infinity] {
            assert!(d.abs() < 10.0 * eps, "{d}");
        }
        assert!(mutual_information_vn(&psi, &geom).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bell_pair_values() {
        let psi = bell();
        let eps = 1e-10;
        let cfg = DivergenceConfig::default();
        let geom = Geometry::aeb(2, 1).unwrap();
        let edge = max_divergence_edge(&psi, 1, eps, &cfg).unwrap();
        assert!((edge.lambda - 4.0).abs() < 1e-6);
        assert!((edge.d_infinity - 4f64.ln()).abs() < 1e-6);
        let gen = max_divergence_general(&psi, &geom, eps, &cfg).unwrap();
        assert!((gen.lambda - 4.0).abs() < 1e-6);
        let mi = mutual_information_vn(&psi, &geom).unwrap();
        assert!((mi - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn edge_operator_matches_dense() {
        let psi = ground(6, -0.5);
        let eps = 1e-6;
        let op = crate::mpo::mpo_to_dense(&edge_operator_mpo(&psi, 2, eps).unwrap()).unwrap();
        assert!(op.hermiticity_defect() < 1e-14 * op.frobenius_norm());
        let v = dense_state(&psi).unwrap();
        let geom = Geometry::aeb(6, 2).unwrap();
        let sigma = oracle::reduced_density(&v, &geom.region_a)
            .unwrap()
            .kron(&oracle::reduced_density(&v, &geom.region_b).unwrap());
        let w = sigma.hermitian_function(|x| 1.0 / (x.max(0.0) + eps).sqrt());
        let rho = oracle::reduced_density(&v, &geom.union()).unwrap();
        let want = w.matmul(&rho).matmul(&w);
        let err = op.sub(&want).frobenius_norm();
        assert!(err < 1e-8 * want.frobenius_norm(), "err={err}");
    }

    #[test]
    fn xxz_edge_matches_dense() {
        let psi = ground(8, -2.0);
        let eps = 1e-6;
        let geom = Geometry::aeb(8, 3).unwrap();
        let cfg = DivergenceConfig::default();
        let edge = max_divergence_edge(&psi, 3, eps, &cfg).unwrap();
        let exact = max_divergence_dense(&psi, &geom, eps).unwrap();
        assert!(
            (edge.d_infinity - exact.d_infinity).abs() < 1e-4,
            "{} vs {}",
            edge.d_infinity,
            exact.d_infinity
        );
        assert!(edge.converged);
        assert!(edge.diagnostics.raw_operator_bond >= edge.diagnostics.operator_bond);
    }

    #[test]
    fn xxz_general_matches_dense() {
        let psi = ground(8, 0.0);
        let eps = 1e-6;
        let geom = Geometry::eaebe(8, 2).unwrap();
        let cfg = DivergenceConfig::default();
        let gen = max_divergence_general(&psi, &geom, eps, &cfg).unwrap();
        let exact = max_divergence_dense(&psi, &geom, eps).unwrap();
        assert!(
            (gen.d_infinity - exact.d_infinity).abs() < 1e-4,
            "{} vs {}",
            gen.d_infinity,
            exact.d_infinity
        );
        assert!(gen.diagnostics.cg_solves > 0);
    }

    #[test]
    fn xx_mutual_information_matches_free_fermions() {
        let psi = ground(8, 0.0);
        let geom = Geometry::aeb(8, 2).unwrap();
        let mi = mutual_information_vn(&psi, &geom).unwrap();
        let ff = free_fermion_mi(8, &geom.region_a, &geom.region_b);
        assert!((mi - ff).abs() < 1e-6, "{mi} vs {ff}");
    }

    #[test]
    fn budget_enforced() {
        let psi = ground(6, -1.0);
        let cfg = DivergenceConfig {
            max_operator_bond: 4,
            ..Default::default()
        };
        assert!(matches!(
            max_divergence_edge(&psi, 2, 1e-6, &cfg),
            Err(DivergenceError::Budget { .. })
        ));
        assert!(matches!(
            max_divergence_edge(&psi, 4, 1e-6, &cfg),
            Err(DivergenceError::NotEdge)
        ));
    }
}

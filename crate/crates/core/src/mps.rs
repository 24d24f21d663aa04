//! Matrix product states.
//!
//! Site tensors carry legs `("l", "p", "r")`. Bond `b` (for `1 <= b <= N-1`)
//! sits between sites `b-1` and `b`; its Schmidt values are `schmidt[b-1]`.
//! Dense vectors use site 0 as the most significant digit, and physical
//! index 0 is spin up.
//!
//! Entropies use the natural logarithm.

use rand::Rng;
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::mpo::MatrixProductOperator;
use crate::tensor::{contract, scale_leg, svd_with_bond, Tensor, TensorError};
use crate::C64;

/// Default cap on `d^N` for [`MatrixProductState::to_dense`].
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 16;

/// Schmidt values below this are kept but reported by
/// [`MatrixProductState::tiny_schmidt_values`].
pub const TINY_SCHMIDT: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected {expected} amplitudes for d={d}, N={n}, got {got}")]
    LengthMismatch {
        expected: usize,
        got: usize,
        d: usize,
        n: usize,
    },
    #[error("state has zero norm")]
    ZeroVector,
    #[error("index {index} out of range (allowed {lo}..={hi})")]
    OutOfRange { index: usize, lo: usize, hi: usize },
    #[error("state is not in canonical form")]
    NotCanonical,
    #[error("dense dimension {dim} exceeds limit {limit}")]
    DenseLimit { dim: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("Renyi order must be positive, got {0}")]
    InvalidAlpha(f64),
}

pub type Result<T> = std::result::Result<T, MpsError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CanonicalForm {
    MixedAtCenter,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixProductState {
    sites: Vec<Tensor>,
    schmidt: Vec<Vec<f64>>,
    center: usize,
    form: CanonicalForm,
    d: usize,
}

pub(crate) fn check_site_chain(sites: &[Tensor], tag: &str, phys: &[&str]) -> Result<()> {
    if sites.is_empty() {
        return Err(MpsError::Shape(format!("{tag} needs at least one site")));
    }
    for (i, t) in sites.iter().enumerate() {
        let mut want = vec!["l"];
        want.extend_from_slice(phys);
        want.push("r");
        if t.labels() != want {
            return Err(MpsError::Shape(format!(
                "site {i} has legs {:?}, expected {want:?}",
                t.labels()
            )));
        }
    }
    let first = sites[0].dim("l")?;
    let last = sites[sites.len() - 1].dim("r")?;
    if first != 1 || last != 1 {
        return Err(MpsError::Shape(
            "boundary bonds must have dimension 1".into(),
        ));
    }
    for i in 0..sites.len() - 1 {
        let (r, l) = (sites[i].dim("r")?, sites[i + 1].dim("l")?);
        if r != l {
            return Err(MpsError::Shape(format!(
                "bond {} mismatch: {r} vs {l}",
                i + 1
            )));
        }
    }
    Ok(())
}

impl MatrixProductState {
    /// Wrap raw site tensors. The result is not canonical.
    pub fn from_sites(sites: Vec<Tensor>) -> Result<Self> {
        check_site_chain(&sites, "state", &["p"])?;
        let d = sites[0].dim("p")?;
        if sites.iter().any(|t| t.dim("p").ok() != Some(d)) {
            return Err(MpsError::Shape(
                "all sites must share the physical dimension".into(),
            ));
        }
        let n = sites.len();
        Ok(Self {
            sites,
            schmidt: vec![vec![]; n - 1],
            center: 0,
            form: CanonicalForm::None,
            d,
        })
    }

    /// Rebuild a canonical state from stored parts, validating shapes and
    /// canonical conditions.
    pub fn from_canonical_parts(
        sites: Vec<Tensor>,
        schmidt: Vec<Vec<f64>>,
        center: usize,
    ) -> Result<Self> {
        let mut psi = Self::from_sites(sites)?;
        if schmidt.len() != psi.n_sites() - 1 {
            return Err(MpsError::Shape("need N-1 Schmidt sequences".into()));
        }
        for (b, s) in schmidt.iter().enumerate() {
            if s.len() != psi.sites[b].dim("r")? {
                return Err(MpsError::Shape(format!(
                    "Schmidt sequence {} has wrong length",
                    b + 1
                )));
            }
        }
        if center >= psi.n_sites() {
            return Err(MpsError::OutOfRange {
                index: center,
                lo: 0,
                hi: psi.n_sites() - 1,
            });
        }
        psi.schmidt = schmidt;
        psi.center = center;
        psi.form = CanonicalForm::MixedAtCenter;
        if psi.canonical_defect() > 1e-10 {
            return Err(MpsError::NotCanonical);
        }
        Ok(psi)
    }

    /// Decompose a dense state vector by successive SVDs, then bring the
    /// result into canonical form with center 0.
    pub fn from_dense_state(
        amplitudes: &[C64],
        d: usize,
        n: usize,
        chi_max: usize,
        cutoff: f64,
    ) -> Result<Self> {
        Self::from_dense_state_report(amplitudes, d, n, chi_max, cutoff).map(|(psi, _)| psi)
    }

    /// As [`Self::from_dense_state`], also returning the discarded weight at
    /// each bond.
    pub fn from_dense_state_report(
        amplitudes: &[C64],
        d: usize,
        n: usize,
        chi_max: usize,
        cutoff: f64,
    ) -> Result<(Self, Vec<f64>)> {
        let expected = d.checked_pow(n as u32).unwrap_or(usize::MAX);
        if n == 0 || d == 0 || amplitudes.len() != expected {
            return Err(MpsError::LengthMismatch {
                expected,
                got: amplitudes.len(),
                d,
                n,
            });
        }
        let nrm = crate::linalg::norm(amplitudes);
        if nrm == 0.0 {
            return Err(MpsError::ZeroVector);
        }
        let mut rest = Tensor::from_parts(
            &[("l", 1), ("rest", expected)],
            amplitudes.iter().map(|z| z / nrm).collect(),
        )?;
        let mut sites = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n - 1 {
            let l = rest.dim("l")?;
            let remaining = d.pow((n - i - 1) as u32);
            let t = Tensor::from_parts(&[("l", l), ("p", d), ("r", remaining)], rest.into_data())?;
            let res = svd_with_bond(&t, &["l", "p"], chi_max, cutoff, "b")?;
            weights.push(res.discarded_weight);
            sites.push(res.u.relabel("b", "r")?);
            rest = scale_leg(&res.vh, "b", &res.s)?.relabel_all(&[("b", "l"), ("r", "rest")])?;
        }
        let l = rest.dim("l")?;
        sites.push(Tensor::from_parts(
            &[("l", l), ("p", d), ("r", 1)],
            rest.into_data(),
        )?);
        let psi = Self::from_sites(sites)?.canonicalize(0)?;
        Ok((psi, weights))
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.d
    }

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &Tensor {
        &self.sites[i]
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        self.form
    }

    pub fn schmidt(&self) -> &[Vec<f64>] {
        &self.schmidt
    }

    /// Dimensions of bonds `1..N-1`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.n_sites() - 1]
            .iter()
            .map(|t| t.dims()[2])
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `(bond, index, value)` for every stored Schmidt value below
    /// [`TINY_SCHMIDT`].
    pub fn tiny_schmidt_values(&self) -> Vec<(usize, usize, f64)> {
        let mut out = vec![];
        for (b, s) in self.schmidt.iter().enumerate() {
            for (k, &v) in s.iter().enumerate() {
                if v < TINY_SCHMIDT {
                    out.push((b + 1, k, v));
                }
            }
        }
        out
    }

    /// Mixed-canonical form with the orthogonality center at `new_center`.
    /// The state is normalized; Schmidt values are recomputed for every bond.
    pub fn canonicalize(&self, new_center: usize) -> Result<Self> {
        let n = self.n_sites();
        if new_center >= n {
            return Err(MpsError::OutOfRange {
                index: new_center,
                lo: 0,
                hi: n - 1,
            });
        }
        let mut sites = self.sites.clone();
        // Left sweep: pushes the whole norm into the last site.
        for i in 0..n - 1 {
            let res = svd_with_bond(&sites[i], &["l", "p"], usize::MAX, 0.0, "b")?;
            sites[i] = res.u.relabel("b", "r")?;
            let carry = scale_leg(&res.vh, "b", &res.s)?;
            sites[i + 1] = contract(&carry, &sites[i + 1], &[("r", "l")])?.relabel("b", "l")?;
        }
        let nrm = sites[n - 1].norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(MpsError::ZeroVector);
        }
        sites[n - 1].scale_in_place(1.0 / nrm);
        // Right sweep: right-canonical tensors and the Schmidt spectra.
        let mut schmidt = vec![vec![]; n - 1];
        for i in (1..n).rev() {
            let (b, s, vt) = split_right(&sites[i])?;
            let carry = scale_leg(&vt, "b", &s)?;
            sites[i] = b;
            schmidt[i - 1] = s;
            sites[i - 1] = contract(&sites[i - 1], &carry, &[("r", "l")])?.relabel("b", "r")?;
        }
        // Move the center right; Schmidt values are gauge invariant.
        for i in 0..new_center {
            let res = svd_with_bond(&sites[i], &["l", "p"], usize::MAX, 0.0, "b")?;
            sites[i] = res.u.relabel("b", "r")?;
            let carry = scale_leg(&res.vh, "b", &res.s)?;
            sites[i + 1] = contract(&carry, &sites[i + 1], &[("r", "l")])?.relabel("b", "l")?;
        }
        Ok(Self {
            sites,
            schmidt,
            center: new_center,
            form: CanonicalForm::MixedAtCenter,
            d: self.d,
        })
    }

    /// Truncate every bond to `chi_max` (and relative `cutoff`) by a single
    /// left-to-right SVD sweep from a right-canonical state. Returns the
    /// renormalized state, canonical at the original center, and the summed
    /// discarded weight.
    pub fn compress(&self, chi_max: usize, cutoff: f64) -> Result<(Self, f64)> {
        let target = if self.form == CanonicalForm::MixedAtCenter {
            self.center
        } else {
            0
        };
        let mut sites = self.canonicalize(0)?.sites;
        let mut discarded = 0.0;
        for i in 0..sites.len() - 1 {
            let res = svd_with_bond(&sites[i], &["l", "p"], chi_max, cutoff, "b")?;
            discarded += res.discarded_weight;
            sites[i] = res.u.relabel("b", "r")?;
            let carry = scale_leg(&res.vh, "b", &res.s)?;
            sites[i + 1] = contract(&carry, &sites[i + 1], &[("r", "l")])?.relabel("b", "l")?;
        }
        Ok((Self::from_sites(sites)?.canonicalize(target)?, discarded))
    }

    /// Schmidt values on bond `bond` (between sites `bond-1` and `bond`).
    pub fn schmidt_values(&self, bond: usize) -> Result<&[f64]> {
        if self.form != CanonicalForm::MixedAtCenter {
            return Err(MpsError::NotCanonical);
        }
        let n = self.n_sites();
        if bond == 0 || bond >= n {
            return Err(MpsError::OutOfRange {
                index: bond,
                lo: 1,
                hi: n - 1,
            });
        }
        Ok(&self.schmidt[bond - 1])
    }

    /// Rényi entropy of order `alpha` across `bond`. `alpha == 1` gives the
    /// von Neumann entropy and `f64::INFINITY` the min-entropy.
    pub fn entropy(&self, bond: usize, alpha: f64) -> Result<f64> {
        let s = self.schmidt_values(bond)?;
        let p: Vec<f64> = s.iter().map(|x| x * x).collect();
        renyi_from_probabilities(&p, alpha)
    }

    /// Split the state at `bond`: left-canonical tensors of sites
    /// `0..bond`, the Schmidt values, and right-canonical tensors of sites
    /// `bond..N`. Contracting `left · diag(s) · right` gives the state.
    pub fn split_at_bond(&self, bond: usize) -> Result<(Vec<Tensor>, Vec<f64>, Vec<Tensor>)> {
        let n = self.n_sites();
        if bond == 0 || bond >= n {
            return Err(MpsError::OutOfRange {
                index: bond,
                lo: 1,
                hi: n - 1,
            });
        }
        let c = self.canonicalize(bond)?;
        let mut sites = c.sites;
        let (b, s, vt) = split_right(&sites[bond])?;
        sites[bond] = b;
        sites[bond - 1] = contract(&sites[bond - 1], &vt, &[("r", "l")])?.relabel("b", "r")?;
        let right = sites.split_off(bond);
        Ok((sites, s, right))
    }

    /// Largest violation of the left/right canonical conditions and of the
    /// Schmidt normalization.
    pub fn canonical_defect(&self) -> f64 {
        if self.form != CanonicalForm::MixedAtCenter {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.center {
            worst = worst.max(isometry_defect(&self.sites[i], &["l", "p"]));
        }
        for i in self.center + 1..self.n_sites() {
            worst = worst.max(isometry_defect(&self.sites[i], &["p", "r"]));
        }
        for s in &self.schmidt {
            let n2: f64 = s.iter().map(|x| x * x).sum();
            worst = worst.max((n2 - 1.0).abs());
        }
        worst
    }

    /// Dense amplitudes, subject to [`DEFAULT_DENSE_LIMIT`].
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        self.to_dense_limited(DEFAULT_DENSE_LIMIT)
    }

    pub fn to_dense_limited(&self, limit: usize) -> Result<Vec<C64>> {
        let dim = self
            .d
            .checked_pow(self.n_sites() as u32)
            .unwrap_or(usize::MAX);
        if dim > limit {
            return Err(MpsError::DenseLimit { dim, limit });
        }
        let mut acc = DenseMatrix::identity(1);
        for t in &self.sites {
            let (l, p, r) = (t.dims()[0], t.dims()[1], t.dims()[2]);
            let m = DenseMatrix::from_row_major(l, p * r, t.data().to_vec());
            let prod = acc.matmul(&m);
            acc = DenseMatrix::from_row_major(prod.rows() * p, r, prod.into_vec());
        }
        Ok(acc.into_vec())
    }

    /// Site tensors after overwriting; used by the sweep optimizers, which
    /// maintain the gauge themselves.
    pub(crate) fn from_raw(
        sites: Vec<Tensor>,
        schmidt: Vec<Vec<f64>>,
        center: usize,
        form: CanonicalForm,
    ) -> Self {
        let d = sites[0].dims()[1];
        Self {
            sites,
            schmidt,
            center,
            form,
            d,
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<Tensor>, Vec<Vec<f64>>, usize) {
        (self.sites, self.schmidt, self.center)
    }
}

/// SVD of a site with `(p, r)` on the isometric side. Returns the
/// right-canonical tensor, the singular values, and `vh^T` with legs
/// `(l, b)` to be absorbed (after scaling by s) into the left neighbour.
fn split_right(site: &Tensor) -> Result<(Tensor, Vec<f64>, Tensor)> {
    let res = svd_with_bond(site, &["p", "r"], usize::MAX, 0.0, "b")?;
    let b = res.u.relabel("b", "l")?.permute(&["l", "p", "r"])?;
    let vt = res.vh.permute(&["l", "b"])?;
    Ok((b, res.s, vt))
}

/// Max deviation of `sum over legs(t* t)` from identity on the free leg.
fn isometry_defect(t: &Tensor, summed: &[&str]) -> f64 {
    let Ok((m, _, _)) = t.to_matrix(summed) else {
        return f64::INFINITY;
    };
    let g = m.adjoint().matmul(&m);
    g.sub(&DenseMatrix::identity(g.rows()))
        .as_slice()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Rényi entropy of a probability vector (natural log). Zero entries are
/// skipped.
pub fn renyi_from_probabilities(p: &[f64], alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(MpsError::InvalidAlpha(alpha));
    }
    let p = p.iter().copied().filter(|&x| x > 0.0);
    Ok(if alpha == 1.0 {
        -p.map(|x| x * x.ln()).sum::<f64>()
    } else if alpha.is_infinite() {
        -p.fold(0.0, f64::max).ln()
    } else {
        p.map(|x| x.powf(alpha)).sum::<f64>().ln() / (1.0 - alpha)
    })
}

/// `<a|b>`.
pub fn overlap(a: &MatrixProductState, b: &MatrixProductState) -> Result<C64> {
    if a.n_sites() != b.n_sites() || a.d != b.d {
        return Err(MpsError::Shape(
            "overlap of states with different N or d".into(),
        ));
    }
    let mut env = Tensor::from_parts(&[("a", 1), ("b", 1)], vec![C64::new(1.0, 0.0)])?;
    for (ta, tb) in a.sites.iter().zip(&b.sites) {
        let t = contract(&env, tb, &[("b", "l")])?;
        let ca = ta.conjugate().relabel_all(&[("l", "a"), ("r", "ra")])?;
        env = contract(&ca, &t, &[("a", "a"), ("p", "p")])?
            .relabel_all(&[("ra", "a"), ("r", "b")])?;
    }
    Ok(env.data()[0])
}

/// `<psi|op|psi>`.
pub fn expectation(psi: &MatrixProductState, op: &MatrixProductOperator) -> Result<C64> {
    if psi.n_sites() != op.n_sites() {
        return Err(MpsError::Shape(format!(
            "state has {} sites, operator {}",
            psi.n_sites(),
            op.n_sites()
        )));
    }
    let mut env = Tensor::from_parts(&[("a", 1), ("w", 1), ("b", 1)], vec![C64::new(1.0, 0.0)])?;
    for (t, w) in psi.sites.iter().zip(op.sites()) {
        if w.dim("pi")? != t.dim("p")? {
            return Err(MpsError::Shape("physical dimensions differ".into()));
        }
        // env(a,w,b) · ket(b,pi,r) -> (a,w,pi,r)
        let x = contract(
            &env,
            &t.clone().relabel_all(&[("p", "pi"), ("r", "rb")])?,
            &[("b", "l")],
        )?;
        // · W(w,po,pi,rw) -> (a, rb, po, rw)
        let x = contract(
            &x,
            &w.clone().relabel("r", "rw")?,
            &[("w", "l"), ("pi", "pi")],
        )?;
        // · bra*(a,po,ra) -> (rb, rw, ra)
        let bra = t.conjugate().relabel_all(&[("p", "po"), ("r", "ra")])?;
        let x = contract(&x, &bra, &[("a", "l"), ("po", "po")])?;
        env = x
            .relabel_all(&[("ra", "a"), ("rw", "w"), ("rb", "b")])?
            .permute(&["a", "w", "b"])?;
    }
    Ok(env.data()[0])
}

/// Random state with bond dimensions `min(chi, d^b, d^(N-b))`, Gaussian
/// entries, canonical at center 0.
pub fn random_mps<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    chi: usize,
    rng: &mut R,
) -> Result<MatrixProductState> {
    if n == 0 || d == 0 || chi == 0 {
        return Err(MpsError::Shape("random_mps needs N, d, chi >= 1".into()));
    }
    let bond = |b: usize| -> usize {
        if b == 0 || b == n {
            return 1;
        }
        let cap = |k: usize| d.checked_pow(k as u32).unwrap_or(usize::MAX);
        chi.min(cap(b)).min(cap(n - b))
    };
    let sites = (0..n)
        .map(|i| Tensor::random(&[("l", bond(i)), ("p", d), ("r", bond(i + 1))], rng))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    MatrixProductState::from_sites(sites)?.canonicalize(0)
}

/// Product state from per-site local vectors, canonical at center 0.
pub fn product_mps(local: &[Vec<C64>]) -> Result<MatrixProductState> {
    let sites = local
        .iter()
        .map(|v| Tensor::from_parts(&[("l", 1), ("p", v.len()), ("r", 1)], v.clone()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    MatrixProductState::from_sites(sites)?.canonicalize(0)
}

/// Unnormalized sum `a + b` as a direct-sum MPS (not canonical).
pub fn mps_sum(a: &MatrixProductState, b: &MatrixProductState) -> Result<MatrixProductState> {
    let n = a.n_sites();
    if n != b.n_sites() || a.d != b.d {
        return Err(MpsError::Shape(
            "sum of states with different N or d".into(),
        ));
    }
    if n == 1 {
        return MatrixProductState::from_sites(vec![a.sites[0].add(&b.sites[0])?]);
    }
    let d = a.d;
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let (ta, tb) = (&a.sites[i], &b.sites[i]);
        let (la, ra) = (ta.dims()[0], ta.dims()[2]);
        let (lb, rb) = (tb.dims()[0], tb.dims()[2]);
        let (l, r) = match i {
            0 => (1, ra + rb),
            _ if i == n - 1 => (la + lb, 1),
            _ => (la + lb, ra + rb),
        };
        let (ol, or) = (if i == 0 { 0 } else { la }, if i == n - 1 { 0 } else { ra });
        let mut t = Tensor::zeros(&[("l", l), ("p", d), ("r", r)])?;
        for p in 0..d {
            for x in 0..la {
                for y in 0..ra {
                    t.set(&[x, p, y], ta.get(&[x, p, y]));
                }
            }
            for x in 0..lb {
                for y in 0..rb {
                    t.set(&[x + ol, p, y + or], tb.get(&[x, p, y]));
                }
            }
        }
        sites.push(t);
    }
    MatrixProductState::from_sites(sites)
}

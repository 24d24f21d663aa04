//! Matrix product operators.
//!
//! Site tensors carry legs `("l", "po", "pi", "r")`: `po` is the output
//! (row) physical index and `pi` the input (column) index that contracts with
//! a ket. For density-matrix MPOs `po` belongs to the ket and `pi` to the bra,
//! so the entry `<po|rho|pi>` is `psi(po) conj(psi(pi))`.
//!
//! Spin-1/2 convention: index 0 is up, `Sz = diag(1/2, -1/2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::mps::{check_site_chain, MatrixProductState, MpsError};
use crate::tensor::{contract, scale_leg, svd_with_bond, Tensor, TensorError};
use crate::C64;

/// Default cap on the row dimension `d^N` for [`mpo_to_dense`].
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 13;

#[derive(Debug, Error)]
pub enum MpoError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("region must be nonempty")]
    EmptyRegion,
    #[error("region {0:?} is not a sorted set of sites inside the chain")]
    BadRegion(Vec<usize>),
    #[error("regions must be disjoint with A entirely left of B")]
    Interleaved,
    #[error("dense dimension {dim} exceeds limit {limit}")]
    DenseLimit { dim: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, MpoError>;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixProductOperator {
    sites: Vec<Tensor>,
    d: usize,
}

/// Parameters of `H = -J sum (SxSx + SySy + delta SzSz) - 2h sum Sz` on an
/// open chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XxzParams {
    #[serde(rename = "J")]
    pub j: f64,
    pub delta: f64,
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl XxzParams {
    pub fn new(j: f64, delta: f64, h: f64, n: usize) -> Self {
        Self { j, delta, h, n }
    }
}

impl MatrixProductOperator {
    pub fn from_sites(sites: Vec<Tensor>) -> Result<Self> {
        check_site_chain(&sites, "operator", &["po", "pi"])?;
        let d = sites[0].dim("po")?;
        for t in &sites {
            if t.dim("po")? != d || t.dim("pi")? != d {
                return Err(MpoError::Shape(
                    "all sites must share a square physical dimension".into(),
                ));
            }
        }
        Ok(Self { sites, d })
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

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.n_sites() - 1]
            .iter()
            .map(|t| t.dims()[3])
            .collect()
    }

    /// Largest internal bond dimension.
    pub fn bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Total number of stored complex entries.
    pub fn num_entries(&self) -> usize {
        self.sites.iter().map(|t| t.len()).sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut sites = self.sites.clone();
        sites[0].scale_in_place(alpha);
        Self { sites, d: self.d }
    }
}

pub(crate) fn spin_ops() -> [DenseMatrix; 4] {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let id = DenseMatrix::identity(2);
    let sz = DenseMatrix::from_real_diagonal(&[0.5, -0.5]);
    let sp = DenseMatrix::from_row_major(2, 2, vec![z, o, z, z]);
    let sm = DenseMatrix::from_row_major(2, 2, vec![z, z, o, z]);
    [id, sz, sp, sm]
}

/// Assemble an MPO from a bulk operator-valued matrix `w[a][b]`. The left
/// boundary selects row `first`, the right boundary column `last`.
fn mpo_from_bulk(
    n: usize,
    w: &[Vec<Option<DenseMatrix>>],
    first: usize,
    last: usize,
) -> Result<MatrixProductOperator> {
    let k = w.len();
    let d = 2;
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let rows: Vec<usize> = if i == 0 {
            vec![first]
        } else {
            (0..k).collect()
        };
        let cols: Vec<usize> = if i == n - 1 {
            vec![last]
        } else {
            (0..k).collect()
        };
        let mut t = Tensor::zeros(&[("l", rows.len()), ("po", d), ("pi", d), ("r", cols.len())])?;
        for (a, &ra) in rows.iter().enumerate() {
            for (b, &cb) in cols.iter().enumerate() {
                if let Some(op) = &w[ra][cb] {
                    for po in 0..d {
                        for pi in 0..d {
                            t.set(&[a, po, pi, b], op[(po, pi)]);
                        }
                    }
                }
            }
        }
        sites.push(t);
    }
    MatrixProductOperator::from_sites(sites)
}

/// XXZ Hamiltonian with the 5x5 lower-triangular transfer construction.
pub fn xxz_mpo(p: &XxzParams) -> Result<MatrixProductOperator> {
    if p.n < 2 {
        return Err(MpoError::Shape("XXZ chain needs N >= 2".into()));
    }
    let [id, sz, sp, sm] = spin_ops();
    let c = |x: f64| C64::new(x, 0.0);
    let mut w: Vec<Vec<Option<DenseMatrix>>> = vec![vec![None; 5]; 5];
    w[0][0] = Some(id.clone());
    w[1][0] = Some(sm.clone());
    w[2][0] = Some(sp.clone());
    w[3][0] = Some(sz.clone());
    w[4][0] = Some(sz.scale(c(-2.0 * p.h)));
    w[4][1] = Some(sp.scale(c(-0.5 * p.j)));
    w[4][2] = Some(sm.scale(c(-0.5 * p.j)));
    w[4][3] = Some(sz.scale(c(-p.j * p.delta)));
    w[4][4] = Some(id);
    mpo_from_bulk(p.n, &w, 4, 0)
}

/// `coeff * sum_i a_i b_{i+1}` over nearest-neighbour pairs.
pub fn nearest_neighbour_mpo(
    n: usize,
    a: &DenseMatrix,
    b: &DenseMatrix,
    coeff: f64,
) -> Result<MatrixProductOperator> {
    if n < 2 {
        return Err(MpoError::Shape("nearest-neighbour sum needs N >= 2".into()));
    }
    let id = DenseMatrix::identity(2);
    let mut w: Vec<Vec<Option<DenseMatrix>>> = vec![vec![None; 3]; 3];
    w[0][0] = Some(id.clone());
    w[1][0] = Some(b.clone());
    w[2][1] = Some(a.scale(C64::new(coeff, 0.0)));
    w[2][2] = Some(id);
    mpo_from_bulk(n, &w, 2, 0)
}

/// Chain average of `<Sz_i Sz_{i+1}>` as an operator.
pub fn szsz_average_mpo(n: usize) -> Result<MatrixProductOperator> {
    let [_, sz, _, _] = spin_ops();
    nearest_neighbour_mpo(n, &sz, &sz, 1.0 / (n as f64 - 1.0))
}

pub fn identity_mpo(n: usize, d: usize) -> Result<MatrixProductOperator> {
    let id = DenseMatrix::identity(d);
    let sites = (0..n)
        .map(|_| {
            Tensor::from_parts(
                &[("l", 1), ("po", d), ("pi", d), ("r", 1)],
                id.as_slice().to_vec(),
            )
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    MatrixProductOperator::from_sites(sites)
}

fn check_region(region: &[usize], n: usize) -> Result<()> {
    if region.is_empty() {
        return Err(MpoError::EmptyRegion);
    }
    if region.windows(2).any(|w| w[0] >= w[1]) || region[region.len() - 1] >= n {
        return Err(MpoError::BadRegion(region.to_vec()));
    }
    Ok(())
}

/// Ket-bra stack of one site: legs `(l, po, pi, r)` with fused bonds of
/// dimension `chi^2`.
pub(crate) fn ket_bra(a: &Tensor) -> Result<Tensor> {
    let ket = a.clone().relabel("p", "po")?;
    let bra = a
        .conjugate()
        .relabel_all(&[("l", "l2"), ("p", "pi"), ("r", "r2")])?;
    let t = contract(&ket, &bra, &[])?.permute(&["l", "l2", "po", "pi", "r", "r2"])?;
    fuse_bonds(t)
}

/// Reinterpret `(l, l2, po, pi, r, r2)` as `(l, po, pi, r)`.
fn fuse_bonds(t: Tensor) -> Result<Tensor> {
    let d = t.dims();
    let legs = [
        ("l", d[0] * d[1]),
        ("po", d[2]),
        ("pi", d[3]),
        ("r", d[4] * d[5]),
    ];
    Ok(Tensor::from_parts(&legs, t.into_data())?)
}

/// Trace the physical leg of `site` into the right bond of `w`.
/// `w` has legs `(l, po, pi, r)` with `r` fused as `(k, k2)`.
fn absorb_traced(w: &Tensor, site: &Tensor) -> Result<Tensor> {
    let dw = w.dims();
    let chi = site.dim("l")?;
    let split = Tensor::from_parts(
        &[
            ("l", dw[0]),
            ("po", dw[1]),
            ("pi", dw[2]),
            ("k", chi),
            ("k2", chi),
        ],
        w.data().to_vec(),
    )?;
    let x = contract(&split, &site.clone().relabel("r", "r1")?, &[("k", "l")])?;
    let bra = site.conjugate().relabel("r", "r2")?;
    let x = contract(&x, &bra, &[("k2", "l"), ("p", "p")])?;
    let x = x.permute(&["l", "po", "pi", "r1", "r2"])?;
    let dx = x.dims();
    Ok(Tensor::from_parts(
        &[
            ("l", dx[0]),
            ("po", dx[1]),
            ("pi", dx[2]),
            ("r", dx[3] * dx[4]),
        ],
        x.into_data(),
    )?)
}

/// `Tr_{complement} |psi><psi|` as an MPO on the sites of `region` (in
/// order). Internal bonds are at most `chi^2`.
pub fn reduced_density_mpo(
    psi: &MatrixProductState,
    region: &[usize],
) -> Result<MatrixProductOperator> {
    let n = psi.n_sites();
    check_region(region, n)?;
    // With the center on the first region site, everything to the left is
    // left-canonical and everything to the right right-canonical, so the
    // outer traces reduce to identities on the boundary bonds.
    let c = psi.canonicalize(region[0])?;
    let sites = c.sites();
    let mut out: Vec<Tensor> = Vec::with_capacity(region.len());
    for (k, &i) in region.iter().enumerate() {
        let mut w = ket_bra(&sites[i])?;
        if k == 0 {
            // Left identity boundary: sum over l = l2.
            let chi = sites[i].dim("l")?;
            let dims = w.dims();
            let mut t =
                Tensor::zeros(&[("l", 1), ("po", dims[1]), ("pi", dims[2]), ("r", dims[3])])?;
            let inner = dims[1] * dims[2] * dims[3];
            for a in 0..chi {
                let off = (a * chi + a) * inner;
                for (x, y) in t.data_mut().iter_mut().zip(&w.data()[off..off + inner]) {
                    *x += y;
                }
            }
            w = t;
        }
        let stop = region.get(k + 1).copied().unwrap_or(i + 1);
        for site in &sites[i + 1..stop] {
            w = absorb_traced(&w, site)?;
        }
        out.push(w);
    }
    // Right identity boundary on the last region site.
    let last = out.pop().unwrap();
    let chi = sites[region[region.len() - 1]].dim("r")?;
    let dims = last.dims();
    let mut t = Tensor::zeros(&[("l", dims[0]), ("po", dims[1]), ("pi", dims[2]), ("r", 1)])?;
    let rows = dims[0] * dims[1] * dims[2];
    for row in 0..rows {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..chi {
            acc += last.data()[row * dims[3] + a * chi + a];
        }
        t.data_mut()[row] = acc;
    }
    out.push(t);
    MatrixProductOperator::from_sites(out)
}

/// `rho_A (x) rho_B` on the sites of `A` followed by `B`.
pub fn product_density_mpo(
    psi: &MatrixProductState,
    region_a: &[usize],
    region_b: &[usize],
) -> Result<MatrixProductOperator> {
    let n = psi.n_sites();
    check_region(region_a, n)?;
    check_region(region_b, n)?;
    if region_a[region_a.len() - 1] >= region_b[0] {
        return Err(MpoError::Interleaved);
    }
    let ra = reduced_density_mpo(psi, region_a)?;
    let rb = reduced_density_mpo(psi, region_b)?;
    let mut sites = ra.sites;
    sites.extend(rb.sites);
    MatrixProductOperator::from_sites(sites)
}

/// Dense matrix, subject to [`DEFAULT_DENSE_LIMIT`].
pub fn mpo_to_dense(op: &MatrixProductOperator) -> Result<DenseMatrix> {
    mpo_to_dense_limited(op, DEFAULT_DENSE_LIMIT)
}

pub fn mpo_to_dense_limited(op: &MatrixProductOperator, limit: usize) -> Result<DenseMatrix> {
    let dim = op.d.checked_pow(op.n_sites() as u32).unwrap_or(usize::MAX);
    if dim > limit {
        return Err(MpoError::DenseLimit { dim, limit });
    }
    let mut acc = Tensor::from_parts(&[("o", 1), ("i", 1), ("r", 1)], vec![C64::new(1.0, 0.0)])?;
    for w in &op.sites {
        let x = contract(&acc, w, &[("r", "l")])?.permute(&["o", "po", "i", "pi", "r"])?;
        let dx = x.dims();
        acc = Tensor::from_parts(
            &[("o", dx[0] * dx[1]), ("i", dx[2] * dx[3]), ("r", dx[4])],
            x.into_data(),
        )?;
    }
    let d = acc.dims();
    Ok(DenseMatrix::from_row_major(d[0], d[1], acc.into_data()))
}

/// `op |psi>` compressed to `chi_max`/`cutoff`. Returns the normalized
/// result and the norm of the uncompressed product.
pub fn mpo_apply(
    op: &MatrixProductOperator,
    psi: &MatrixProductState,
    chi_max: usize,
    cutoff: f64,
) -> Result<(MatrixProductState, f64)> {
    if op.n_sites() != psi.n_sites() || op.d != psi.phys_dim() {
        return Err(MpoError::Shape("operator and state sizes differ".into()));
    }
    let mut sites = Vec::with_capacity(psi.n_sites());
    for (w, a) in op.sites.iter().zip(psi.sites()) {
        let x = contract(
            &w.clone().relabel_all(&[("l", "wl"), ("r", "wr")])?,
            a,
            &[("pi", "p")],
        )?;
        let x = x.permute(&["wl", "l", "po", "wr", "r"])?;
        let dx = x.dims();
        sites.push(Tensor::from_parts(
            &[("l", dx[0] * dx[1]), ("p", dx[2]), ("r", dx[3] * dx[4])],
            x.into_data(),
        )?);
    }
    let raw = MatrixProductState::from_sites(sites)?;
    let norm = crate::mps::overlap(&raw, &raw)?.re.max(0.0).sqrt();
    if norm == 0.0 {
        return Err(MpoError::Mps(MpsError::ZeroVector));
    }
    let (out, _) = raw.compress(chi_max, cutoff)?;
    Ok((out, norm))
}

/// Operator product `a · b` (b acts first).
pub fn mpo_product(
    a: &MatrixProductOperator,
    b: &MatrixProductOperator,
) -> Result<MatrixProductOperator> {
    if a.n_sites() != b.n_sites() || a.d != b.d {
        return Err(MpoError::Shape("operator sizes differ".into()));
    }
    let mut sites = Vec::with_capacity(a.n_sites());
    for (wa, wb) in a.sites.iter().zip(&b.sites) {
        let ta = wa
            .clone()
            .relabel_all(&[("l", "la"), ("r", "ra"), ("pi", "k")])?;
        let tb = wb
            .clone()
            .relabel_all(&[("l", "lb"), ("r", "rb"), ("po", "k")])?;
        let x =
            contract(&ta, &tb, &[("k", "k")])?.permute(&["la", "lb", "po", "pi", "ra", "rb"])?;
        sites.push(fuse_bonds(x)?);
    }
    MatrixProductOperator::from_sites(sites)
}

/// Operator sum `a + b` by direct sum of bonds.
pub fn mpo_sum(
    a: &MatrixProductOperator,
    b: &MatrixProductOperator,
) -> Result<MatrixProductOperator> {
    let n = a.n_sites();
    if n != b.n_sites() || a.d != b.d {
        return Err(MpoError::Shape("operator sizes differ".into()));
    }
    let to_state = |op: &MatrixProductOperator| -> Result<MatrixProductState> {
        Ok(MatrixProductState::from_sites(
            op.sites.iter().map(fuse_phys).collect::<Result<Vec<_>>>()?,
        )?)
    };
    let sum = crate::mps::mps_sum(&to_state(a)?, &to_state(b)?)?;
    let (sites, _, _) = sum.into_parts();
    MatrixProductOperator::from_sites(
        sites
            .iter()
            .map(|t| split_phys(t, a.d))
            .collect::<Result<Vec<_>>>()?,
    )
}

fn fuse_phys(w: &Tensor) -> Result<Tensor> {
    let d = w.dims();
    Ok(Tensor::from_parts(
        &[("l", d[0]), ("p", d[1] * d[2]), ("r", d[3])],
        w.data().to_vec(),
    )?)
}

fn split_phys(t: &Tensor, d: usize) -> Result<Tensor> {
    let dims = t.dims();
    Ok(Tensor::from_parts(
        &[("l", dims[0]), ("po", d), ("pi", d), ("r", dims[2])],
        t.data().to_vec(),
    )?)
}

/// Bond compression by SVD sweeps, treating `(po, pi)` as one physical leg.
/// Preserves the operator's Frobenius norm up to truncation. Returns the
/// compressed operator and the summed discarded weight.
pub fn mpo_compress(
    op: &MatrixProductOperator,
    chi_max: usize,
    cutoff: f64,
) -> Result<(MatrixProductOperator, f64)> {
    let mut sites = op.sites.iter().map(fuse_phys).collect::<Result<Vec<_>>>()?;
    let n = sites.len();
    for i in 0..n - 1 {
        let res = svd_with_bond(&sites[i], &["l", "p"], usize::MAX, 0.0, "b")?;
        sites[i] = res.u.relabel("b", "r")?;
        let carry = scale_leg(&res.vh, "b", &res.s)?;
        sites[i + 1] = contract(&carry, &sites[i + 1], &[("r", "l")])?.relabel("b", "l")?;
    }
    let mut discarded = 0.0;
    for i in (1..n).rev() {
        let res = svd_with_bond(&sites[i], &["p", "r"], chi_max, cutoff, "b")?;
        discarded += res.discarded_weight;
        sites[i] = res.u.relabel("b", "l")?.permute(&["l", "p", "r"])?;
        let carry = scale_leg(&res.vh, "b", &res.s)?.permute(&["l", "b"])?;
        sites[i - 1] = contract(&sites[i - 1], &carry, &[("r", "l")])?.relabel("b", "r")?;
    }
    let sites = sites
        .iter()
        .map(|t| split_phys(t, op.d))
        .collect::<Result<Vec<_>>>()?;
    Ok((MatrixProductOperator::from_sites(sites)?, discarded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{expectation, overlap, product_mps, random_mps};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn sorted_eigs(m: &DenseMatrix) -> Vec<f64> {
        m.eigh().values
    }

    /// Independent dense XXZ built from Kronecker products.
    fn dense_xxz(p: &XxzParams) -> DenseMatrix {
        let [id, sz, sp, sm] = spin_ops();
        let embed = |ops: Vec<(usize, &DenseMatrix)>| -> DenseMatrix {
            let mut acc = DenseMatrix::identity(1);
            for i in 0..p.n {
                let o = ops
                    .iter()
                    .find(|(k, _)| *k == i)
                    .map(|(_, o)| (*o).clone())
                    .unwrap_or_else(|| id.clone());
                acc = acc.kron(&o);
            }
            acc
        };
        let dim = 1 << p.n;
        let mut h = DenseMatrix::zeros(dim, dim);
        for i in 0..p.n - 1 {
            let xy = embed(vec![(i, &sp), (i + 1, &sm)])
                .add(&embed(vec![(i, &sm), (i + 1, &sp)]))
                .scale(r(0.5));
            let zz = embed(vec![(i, &sz), (i + 1, &sz)]).scale(r(p.delta));
            h = h.sub(&xy.add(&zz).scale(r(p.j)));
        }
        for i in 0..p.n {
            h = h.sub(&embed(vec![(i, &sz)]).scale(r(2.0 * p.h)));
        }
        h
    }

    #[test]
    fn heisenberg_pair_spectrum() {
        let h = mpo_to_dense(&xxz_mpo(&XxzParams::new(1.0, 1.0, 0.0, 2)).unwrap()).unwrap();
        assert!(h.hermiticity_defect() < 1e-15);
        let e = sorted_eigs(&h);
        for (x, y) in e.iter().zip([-0.25, -0.25, -0.25, 0.75]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn field_only_is_diagonal() {
        let n = 5;
        let h = mpo_to_dense(&xxz_mpo(&XxzParams::new(0.0, 0.7, 1.0, n)).unwrap()).unwrap();
        let off: f64 = (0..32)
            .flat_map(|a| (0..32).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| h[(a, b)].norm())
            .sum();
        assert_eq!(off, 0.0);
        assert!((sorted_eigs(&h)[0] + n as f64).abs() < 1e-12);
    }

    #[test]
    fn xy_pair_ground_energy() {
        let h = mpo_to_dense(&xxz_mpo(&XxzParams::new(1.0, 0.0, 0.0, 2)).unwrap()).unwrap();
        assert!((sorted_eigs(&h)[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn xxz_matches_kron_construction() {
        let p = XxzParams::new(0.8, -1.3, 0.4, 6);
        let a = mpo_to_dense(&xxz_mpo(&p).unwrap()).unwrap();
        let b = dense_xxz(&p);
        assert!(a.sub(&b).frobenius_norm() < 1e-12);
        assert_eq!(xxz_mpo(&p).unwrap().bond_dim(), 5);
    }

    #[test]
    fn expectation_of_identity_and_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_mps(7, 2, 6, &mut rng).unwrap();
        let id = identity_mpo(7, 2).unwrap();
        assert!((expectation(&psi, &id).unwrap() - r(1.0)).norm() < 1e-12);
        let p = XxzParams::new(1.0, 0.6, 0.2, 7);
        let v = psi.to_dense().unwrap();
        let hv = dense_xxz(&p).matvec(&v);
        let want = crate::linalg::inner(&v, &hv);
        let got = expectation(&psi, &xxz_mpo(&p).unwrap()).unwrap();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn full_region_gives_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random_mps(5, 2, 4, &mut rng).unwrap();
        let v = psi.to_dense().unwrap();
        let rho = mpo_to_dense(&reduced_density_mpo(&psi, &[0, 1, 2, 3, 4]).unwrap()).unwrap();
        let proj = DenseMatrix::from_fn(32, 32, |a, b| v[a] * v[b].conj());
        assert!(rho.sub(&proj).frobenius_norm() < 1e-10);
    }

    #[test]
    fn bell_marginals() {
        let h = 0.5f64.sqrt();
        let psi = MatrixProductState::from_dense_state(&[r(0.0), r(h), r(h), r(0.0)], 2, 2, 4, 0.0)
            .unwrap();
        let rho0 = mpo_to_dense(&reduced_density_mpo(&psi, &[0]).unwrap()).unwrap();
        assert!(
            rho0.sub(&DenseMatrix::identity(2).scale(r(0.5)))
                .frobenius_norm()
                < 1e-12
        );
        let sigma = mpo_to_dense(&product_density_mpo(&psi, &[0], &[1]).unwrap()).unwrap();
        assert!(
            sigma
                .sub(&DenseMatrix::identity(4).scale(r(0.25)))
                .frobenius_norm()
                < 1e-12
        );
    }

    #[test]
    fn product_state_sigma_equals_rho() {
        let up = vec![r(0.6), r(0.8)];
        let tilt = vec![r(0.28), C64::new(0.0, 0.96)];
        let psi = product_mps(&[up.clone(), tilt.clone(), up, tilt]).unwrap();
        let rho = mpo_to_dense(&reduced_density_mpo(&psi, &[0, 3]).unwrap()).unwrap();
        let sigma = mpo_to_dense(&product_density_mpo(&psi, &[0], &[3]).unwrap()).unwrap();
        assert!(rho.sub(&sigma).frobenius_norm() < 1e-10);
    }

    #[test]
    fn region_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_mps(4, 2, 2, &mut rng).unwrap();
        assert!(matches!(
            reduced_density_mpo(&psi, &[]),
            Err(MpoError::EmptyRegion)
        ));
        assert!(matches!(
            reduced_density_mpo(&psi, &[2, 1]),
            Err(MpoError::BadRegion(_))
        ));
        assert!(matches!(
            reduced_density_mpo(&psi, &[4]),
            Err(MpoError::BadRegion(_))
        ));
        assert!(matches!(
            product_density_mpo(&psi, &[0, 2], &[1, 3]),
            Err(MpoError::Interleaved)
        ));
        assert!(matches!(
            product_density_mpo(&psi, &[2], &[1]),
            Err(MpoError::Interleaved)
        ));
    }

    #[test]
    fn apply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let psi = random_mps(6, 2, 4, &mut rng).unwrap();
        let p = XxzParams::new(1.0, 0.3, 0.1, 6);
        let (out, norm) = mpo_apply(&xxz_mpo(&p).unwrap(), &psi, usize::MAX, 0.0).unwrap();
        let want = dense_xxz(&p).matvec(&psi.to_dense().unwrap());
        let got: Vec<C64> = out.to_dense().unwrap().iter().map(|z| z * norm).collect();
        // Canonicalization fixes the global phase; compare up to it.
        let phase = crate::linalg::inner(&got, &want);
        let phase = phase / phase.norm();
        let diff: f64 = got
            .iter()
            .zip(&want)
            .map(|(g, w)| (g * phase - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10, "{diff}");
        let (idout, _) = mpo_apply(&identity_mpo(6, 2).unwrap(), &psi, 64, 0.0).unwrap();
        assert!((overlap(&idout, &psi).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_sum_compress() {
        let p = XxzParams::new(1.0, 0.5, 0.0, 5);
        let h = xxz_mpo(&p).unwrap();
        let hd = mpo_to_dense(&h).unwrap();
        let h2 = mpo_to_dense(&mpo_product(&h, &h).unwrap()).unwrap();
        assert!(h2.sub(&hd.matmul(&hd)).frobenius_norm() < 1e-10);
        let s = mpo_sum(&h, &identity_mpo(5, 2).unwrap()).unwrap();
        let sd = mpo_to_dense(&s).unwrap();
        assert!(sd.sub(&hd.shifted(1.0)).frobenius_norm() < 1e-10);
        let (c, w) = mpo_compress(&s, 64, 1e-13).unwrap();
        assert!(w < 1e-20);
        assert!(c.bond_dim() <= 5);
        assert!(mpo_to_dense(&c).unwrap().sub(&sd).frobenius_norm() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn reduced_density_is_a_state(seed in any::<u64>(), n in 3usize..=8, mask in 1u32..255) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chi = 3;
            let psi = random_mps(n, 2, chi, &mut rng).unwrap();
            let region: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            prop_assume!(!region.is_empty());
            let op = reduced_density_mpo(&psi, &region).unwrap();
            prop_assert!(op.bond_dim() <= chi * chi);
            let m = mpo_to_dense(&op).unwrap();
            prop_assert!((m.trace() - r(1.0)).norm() < 1e-10);
            prop_assert!(m.hermiticity_defect() < 1e-10);
            prop_assert!(m.eigh().values[0] >= -1e-10);
        }
    }
}

//! Dense tensors with named legs.
//!
//! Data is stored row-major over the declared leg order: the last leg varies
//! fastest. Every contraction is reduced to a permutation followed by a
//! matrix product.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{gemm, DenseMatrix};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("leg `{0}` not found")]
    MissingLeg(String),
    #[error("duplicate leg label `{0}`")]
    DuplicateLeg(String),
    #[error("dimension mismatch on `{a}`/`{b}`: {da} vs {db}")]
    DimMismatch {
        a: String,
        b: String,
        da: usize,
        db: usize,
    },
    #[error("data length {got} does not match leg dimensions (expected {expected})")]
    DataLength { expected: usize, got: usize },
    #[error("leg `{0}` has zero dimension")]
    ZeroDim(String),
    #[error("svd needs a nonempty proper subset of legs on the left")]
    BadPartition,
    #[error("permutation must list every leg exactly once")]
    BadPermutation,
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq)]
pub struct Leg {
    pub label: String,
    pub dim: usize,
}

impl Leg {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self {
            label: label.into(),
            dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    legs: Vec<Leg>,
    data: Vec<C64>,
}

/// Truncated SVD of a tensor split into left and right leg groups.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left legs followed by the new bond leg.
    pub u: Tensor,
    pub s: Vec<f64>,
    /// The new bond leg followed by the right legs.
    pub vh: Tensor,
    /// Dropped weight `sum(dropped s^2) / sum(all s^2)`.
    pub discarded_weight: f64,
}

fn check_legs(legs: &[Leg]) -> Result<()> {
    for (i, l) in legs.iter().enumerate() {
        if l.dim == 0 {
            return Err(TensorError::ZeroDim(l.label.clone()));
        }
        if legs[..i].iter().any(|o| o.label == l.label) {
            return Err(TensorError::DuplicateLeg(l.label.clone()));
        }
    }
    Ok(())
}

impl Tensor {
    pub fn new(legs: Vec<Leg>, data: Vec<C64>) -> Result<Self> {
        check_legs(&legs)?;
        let expected: usize = legs.iter().map(|l| l.dim).product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { legs, data })
    }

    /// Convenience constructor from `(label, dim)` pairs.
    pub fn from_parts(legs: &[(&str, usize)], data: Vec<C64>) -> Result<Self> {
        Self::new(legs.iter().map(|&(l, d)| Leg::new(l, d)).collect(), data)
    }

    pub fn zeros(legs: &[(&str, usize)]) -> Result<Self> {
        let n = legs.iter().map(|l| l.1).product();
        Self::from_parts(legs, vec![C64::new(0.0, 0.0); n])
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            legs: vec![],
            data: vec![z],
        }
    }

    /// Entries drawn from a complex standard normal distribution.
    pub fn random<R: Rng + ?Sized>(legs: &[(&str, usize)], rng: &mut R) -> Result<Self> {
        let n = legs.iter().map(|l| l.1).product();
        let data = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::from_parts(legs, data)
    }

    /// A matrix viewed as a two-leg tensor.
    pub fn from_matrix(m: &DenseMatrix, row: &str, col: &str) -> Result<Self> {
        Self::from_parts(&[(row, m.rows()), (col, m.cols())], m.as_slice().to_vec())
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn rank(&self) -> usize {
        self.legs.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.dim).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.legs.iter().map(|l| l.label.as_str()).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.legs
            .iter()
            .position(|l| l.label == label)
            .ok_or_else(|| TensorError::MissingLeg(label.to_string()))
    }

    pub fn dim(&self, label: &str) -> Result<usize> {
        Ok(self.legs[self.position(label)?].dim)
    }

    pub fn has_leg(&self, label: &str) -> bool {
        self.legs.iter().any(|l| l.label == label)
    }

    /// Value of a 0-leg (or single-entry) tensor.
    pub fn scalar_value(&self) -> Option<C64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], z: C64) {
        let k = self.flat_index(index);
        self.data[k] = z;
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.legs.len());
        index.iter().zip(&self.legs).fold(0, |acc, (&i, l)| {
            assert!(i < l.dim, "index out of range on leg `{}`", l.label);
            acc * l.dim + i
        })
    }

    pub fn relabel(mut self, from: &str, to: &str) -> Result<Self> {
        let p = self.position(from)?;
        if from != to && self.has_leg(to) {
            return Err(TensorError::DuplicateLeg(to.to_string()));
        }
        self.legs[p].label = to.to_string();
        Ok(self)
    }

    pub fn relabel_all(mut self, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut positions = Vec::with_capacity(pairs.len());
        for (from, _) in pairs {
            positions.push(self.position(from)?);
        }
        for (p, (_, to)) in positions.into_iter().zip(pairs) {
            self.legs[p].label = to.to_string();
        }
        check_legs(&self.legs)?;
        Ok(self)
    }

    /// Reorder legs to the given label order.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.legs.len() {
            return Err(TensorError::BadPermutation);
        }
        let mut perm = Vec::with_capacity(order.len());
        for l in order {
            let p = self.position(l)?;
            if perm.contains(&p) {
                return Err(TensorError::BadPermutation);
            }
            perm.push(p);
        }
        Ok(self.permute_positions(&perm))
    }

    /// `perm[k]` is the source position of destination leg `k`.
    pub(crate) fn permute_positions(&self, perm: &[usize]) -> Self {
        let legs: Vec<Leg> = perm.iter().map(|&p| self.legs[p].clone()).collect();
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let n = self.legs.len();
        let mut src_strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            src_strides[k] = src_strides[k + 1] * self.legs[k + 1].dim;
        }
        let dims: Vec<usize> = legs.iter().map(|l| l.dim).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let total = self.data.len();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        let mut src = 0usize;
        let inner = n - 1;
        let (d_in, s_in) = (dims[inner], strides[inner]);
        while out.len() < total {
            for i in 0..d_in {
                out.push(self.data[src + i * s_in]);
            }
            // Advance the multi-index over all but the innermost leg.
            let mut k = inner;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                src += strides[k];
                if idx[k] < dims[k] {
                    break;
                }
                src -= strides[k] * dims[k];
                idx[k] = 0;
            }
        }
        Self { legs, data: out }
    }

    /// Matrix view with `rows` legs (in the given order) as the row index and
    /// the remaining legs (in current order) as the column index.
    pub fn to_matrix(&self, rows: &[&str]) -> Result<(DenseMatrix, Vec<Leg>, Vec<Leg>)> {
        let mut order: Vec<&str> = rows.to_vec();
        for l in &self.legs {
            if !rows.contains(&l.label.as_str()) {
                order.push(&l.label);
            }
        }
        let t = self.permute(&order)?;
        let (rl, cl) = t.legs.split_at(rows.len());
        let r: usize = rl.iter().map(|l| l.dim).product();
        let c: usize = cl.iter().map(|l| l.dim).product();
        let (rl, cl) = (rl.to_vec(), cl.to_vec());
        Ok((DenseMatrix::from_row_major(r, c, t.data), rl, cl))
    }

    pub fn conjugate(&self) -> Self {
        Self {
            legs: self.legs.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self {
            legs: self.legs.clone(),
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for z in &mut self.data {
            *z *= alpha;
        }
    }

    /// Elementwise sum; `other` is permuted to match this leg order.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let other = other.permute(&self.labels())?;
        if other.dims() != self.dims() {
            let l = self
                .legs
                .iter()
                .zip(&other.legs)
                .find(|(a, b)| a.dim != b.dim)
                .unwrap();
            return Err(TensorError::DimMismatch {
                a: l.0.label.clone(),
                b: l.1.label.clone(),
                da: l.0.dim,
                db: l.1.dim,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            legs: self.legs.clone(),
            data,
        })
    }
}

/// Contract `a` and `b` over the listed `(leg of a, leg of b)` pairs.
///
/// Result legs are the free legs of `a` followed by the free legs of `b`,
/// each in their original order.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(&str, &str)]) -> Result<Tensor> {
    let mut pa = Vec::with_capacity(pairs.len());
    let mut pb = Vec::with_capacity(pairs.len());
    for &(la, lb) in pairs {
        let (ia, ib) = (a.position(la)?, b.position(lb)?);
        let (da, db) = (a.legs[ia].dim, b.legs[ib].dim);
        if da != db {
            return Err(TensorError::DimMismatch {
                a: la.into(),
                b: lb.into(),
                da,
                db,
            });
        }
        if pa.contains(&ia) {
            return Err(TensorError::DuplicateLeg(la.into()));
        }
        if pb.contains(&ib) {
            return Err(TensorError::DuplicateLeg(lb.into()));
        }
        pa.push(ia);
        pb.push(ib);
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !pa.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !pb.contains(i)).collect();
    let mut legs: Vec<Leg> = free_a.iter().map(|&i| a.legs[i].clone()).collect();
    legs.extend(free_b.iter().map(|&i| b.legs[i].clone()));
    check_legs(&legs)?;

    let perm_a: Vec<usize> = free_a.iter().chain(&pa).copied().collect();
    let perm_b: Vec<usize> = pb.iter().chain(&free_b).copied().collect();
    let ta = a.permute_positions(&perm_a);
    let tb = b.permute_positions(&perm_b);
    let m: usize = free_a.iter().map(|&i| a.legs[i].dim).product();
    let k: usize = pa.iter().map(|&i| a.legs[i].dim).product();
    let n: usize = free_b.iter().map(|&i| b.legs[i].dim).product();
    let data = gemm(&ta.data, m, k, &tb.data, n);
    Ok(Tensor { legs, data })
}

/// Truncated SVD with the new bond labelled `"bond"`.
pub fn svd(t: &Tensor, left_legs: &[&str], chi_max: usize, cutoff: f64) -> Result<SvdResult> {
    svd_with_bond(t, left_legs, chi_max, cutoff, "bond")
}

/// Truncated SVD. Keeps at most `chi_max` values and drops those below
/// `cutoff * s_max`. At least one value is always kept.
pub fn svd_with_bond(
    t: &Tensor,
    left_legs: &[&str],
    chi_max: usize,
    cutoff: f64,
    bond: &str,
) -> Result<SvdResult> {
    if left_legs.is_empty() || left_legs.len() >= t.rank() {
        return Err(TensorError::BadPartition);
    }
    let (m, rl, cl) = t.to_matrix(left_legs)?;
    let full = m.svd();
    let total: f64 = full.s.iter().map(|s| s * s).sum();
    let smax = full.s.first().copied().unwrap_or(0.0);
    let mut keep = full
        .s
        .iter()
        .take_while(|&&s| s > cutoff * smax || cutoff == 0.0)
        .count();
    keep = keep.clamp(1, chi_max.max(1)).min(full.s.len());
    let dropped: f64 = full.s[keep..].iter().map(|s| s * s).sum();
    let discarded_weight = if total > 0.0 { dropped / total } else { 0.0 };

    // Fix the phase freedom of each singular pair: the dominant entry of
    // every u column is made real positive. Makes repeated decompositions of
    // the same state reproduce the same tensors.
    let phases: Vec<C64> = (0..keep)
        .map(|c| {
            let mags: Vec<f64> = (0..m.rows()).map(|r| full.u[(r, c)].norm()).collect();
            let max = mags.iter().cloned().fold(0.0, f64::max);
            match mags.iter().position(|&x| x >= max * (1.0 - 1e-8)) {
                Some(r) if max > 0.0 => full.u[(r, c)] / mags[r],
                _ => C64::new(1.0, 0.0),
            }
        })
        .collect();
    let u = DenseMatrix::from_fn(m.rows(), keep, |r, c| full.u[(r, c)] * phases[c].conj());
    let vh = DenseMatrix::from_fn(keep, m.cols(), |r, c| full.vh[(r, c)] * phases[r]);
    let mut ulegs = rl;
    ulegs.push(Leg::new(bond, keep));
    let mut vlegs = vec![Leg::new(bond, keep)];
    vlegs.extend(cl);
    Ok(SvdResult {
        u: Tensor::new(ulegs, u.into_vec())?,
        s: full.s[..keep].to_vec(),
        vh: Tensor::new(vlegs, vh.into_vec())?,
        discarded_weight,
    })
}

/// Multiply the slices of `t` along `label` by `weights` (diagonal contraction).
pub fn scale_leg(t: &Tensor, label: &str, weights: &[f64]) -> Result<Tensor> {
    let p = t.position(label)?;
    let d = t.legs[p].dim;
    if weights.len() != d {
        return Err(TensorError::DimMismatch {
            a: label.into(),
            b: "weights".into(),
            da: d,
            db: weights.len(),
        });
    }
    let inner: usize = t.legs[p + 1..].iter().map(|l| l.dim).product();
    let mut out = t.clone();
    for (k, z) in out.data.iter_mut().enumerate() {
        *z *= weights[(k / inner) % d];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn identity_times_vector() {
        let id = Tensor::from_parts(&[("i", 2), ("j", 2)], vec![r(1.0), r(0.0), r(0.0), r(1.0)])
            .unwrap();
        let v = Tensor::from_parts(&[("k", 2)], vec![r(1.0), r(2.0)]).unwrap();
        let out = contract(&id, &v, &[("j", "k")]).unwrap();
        assert_eq!(out.labels(), vec!["i"]);
        assert_eq!(out.data(), &[r(1.0), r(2.0)]);
    }

    #[test]
    fn hand_matrix_product() {
        let a = Tensor::from_parts(&[("i", 2), ("j", 2)], vec![r(0.0), r(1.0), r(1.0), r(0.0)])
            .unwrap();
        let b = Tensor::from_parts(&[("k", 2), ("l", 2)], vec![r(1.0), r(0.0), r(0.0), r(-1.0)])
            .unwrap();
        let out = contract(&a, &b, &[("j", "k")]).unwrap();
        assert_eq!(out.data(), &[r(0.0), r(-1.0), r(1.0), r(0.0)]);
    }

    #[test]
    fn self_contraction_is_squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::random(&[("a", 3), ("b", 4), ("c", 2)], &mut rng).unwrap();
        let s = contract(&t, &t.conjugate(), &[("a", "a"), ("b", "b"), ("c", "c")]).unwrap();
        assert_eq!(s.rank(), 0);
        let v = s.scalar_value().unwrap();
        assert!((v.re.sqrt() - t.norm()).abs() < 1e-12);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn contract_errors() {
        let a = Tensor::zeros(&[("i", 2), ("j", 3)]).unwrap();
        let b = Tensor::zeros(&[("i", 2), ("k", 2)]).unwrap();
        assert!(matches!(
            contract(&a, &b, &[("j", "k")]),
            Err(TensorError::DimMismatch { .. })
        ));
        assert!(matches!(
            contract(&a, &b, &[]),
            Err(TensorError::DuplicateLeg(_))
        ));
        assert!(matches!(
            contract(&a, &b, &[("x", "k")]),
            Err(TensorError::MissingLeg(_))
        ));
    }

    #[test]
    fn svd_rank_one() {
        let u = [r(1.0), r(2.0), r(2.0)];
        let v = [r(3.0), r(4.0)];
        let data = u
            .iter()
            .flat_map(|a| v.iter().map(move |b| a * b))
            .collect();
        let t = Tensor::from_parts(&[("i", 3), ("j", 2)], data).unwrap();
        let res = svd(&t, &["i"], 10, 1e-14).unwrap();
        assert_eq!(res.s.len(), 1);
        assert!((res.s[0] - 15.0).abs() < 1e-12);
        assert!(res.discarded_weight < 1e-28);
    }

    #[test]
    fn svd_discarded_weight() {
        let t = Tensor::from_parts(&[("i", 2), ("j", 2)], vec![r(3.0), r(0.0), r(0.0), r(1.0)])
            .unwrap();
        let res = svd(&t, &["i"], 1, 0.0).unwrap();
        assert_eq!(res.s.len(), 1);
        assert!((res.s[0] - 3.0).abs() < 1e-14);
        assert!((res.discarded_weight - 0.1).abs() < 1e-14);
    }

    #[test]
    fn svd_unitary() {
        let h = 0.5;
        let data = vec![
            h, h, h, h, //
            h, -h, h, -h, //
            h, h, -h, -h, //
            h, -h, -h, h,
        ]
        .into_iter()
        .map(r)
        .collect();
        let t = Tensor::from_parts(&[("i", 4), ("j", 4)], data).unwrap();
        let res = svd(&t, &["i"], 4, 0.0).unwrap();
        assert_eq!(res.s.len(), 4);
        for s in res.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_partition_errors() {
        let t = Tensor::zeros(&[("i", 2), ("j", 2)]).unwrap();
        assert_eq!(svd(&t, &[], 2, 0.0).unwrap_err(), TensorError::BadPartition);
        assert_eq!(
            svd(&t, &["i", "j"], 2, 0.0).unwrap_err(),
            TensorError::BadPartition
        );
    }

    #[test]
    fn conjugate_and_norm() {
        let t = Tensor::from_parts(&[("i", 2), ("j", 2)], vec![r(1.0), r(0.0), r(0.0), r(1.0)])
            .unwrap();
        assert_eq!(t.conjugate(), t);
        assert!((t.norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn permute_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tensor::random(&[("a", 2), ("b", 3), ("c", 4), ("d", 1)], &mut rng).unwrap();
        let p = t.permute(&["c", "a", "d", "b"]).unwrap();
        assert_eq!(p.get(&[3, 1, 0, 2]), t.get(&[1, 2, 3, 0]));
        let back = p.permute(&["a", "b", "c", "d"]).unwrap();
        assert_eq!(back, t);
    }

    fn dims_strategy() -> impl Strategy<Value = (usize, usize, usize, u64)> {
        (1usize..5, 1usize..5, 1usize..5, any::<u64>())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn contract_is_bilinear((da, db, dc, seed) in dims_strategy(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::random(&[("x", da), ("y", db)], &mut rng).unwrap();
            let b = Tensor::random(&[("y", db), ("z", dc)], &mut rng).unwrap();
            let alpha = C64::new(re, im);
            let lhs = contract(&a.scale(alpha), &b, &[("y", "y")]).unwrap();
            let rhs = contract(&a, &b, &[("y", "y")]).unwrap().scale(alpha);
            let diff = lhs.add(&rhs.scale(r(-1.0))).unwrap().norm();
            prop_assert!(diff <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn svd_reconstruction_bound((da, db, dc, seed) in dims_strategy(), chi in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::random(&[("x", da), ("y", db), ("z", dc)], &mut rng).unwrap();
            let res = svd(&t, &["x", "z"], chi, 0.0).unwrap();
            let us = scale_leg(&res.u, "bond", &res.s).unwrap();
            let back = contract(&us, &res.vh, &[("bond", "bond")]).unwrap();
            let err = back.add(&t.scale(r(-1.0))).unwrap().norm() / t.norm();
            prop_assert!(err <= res.discarded_weight.sqrt() + 1e-10);
            prop_assert!(res.s.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(res.s.iter().all(|&s| s >= 0.0));
        }

        #[test]
        fn svd_untruncated_is_exact((da, db, dc, seed) in dims_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::random(&[("x", da), ("y", db), ("z", dc)], &mut rng).unwrap();
            let res = svd(&t, &["y"], usize::MAX, 0.0).unwrap();
            prop_assert_eq!(res.discarded_weight, 0.0);
            // Isometries on the retained bond.
            let uu = contract(&res.u.conjugate().relabel("bond", "b2").unwrap(), &res.u, &[("y", "y")]).unwrap();
            let k = res.s.len();
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((uu.get(&[i, j]) - r(want)).norm() < 1e-12);
                }
            }
            let vv = contract(&res.vh, &res.vh.conjugate().relabel("bond", "b2").unwrap(), &[("x", "x"), ("z", "z")]).unwrap();
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((vv.get(&[i, j]) - r(want)).norm() < 1e-12);
                }
            }
        }
    }
}

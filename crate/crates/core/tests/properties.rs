//! Property tests for the divergence measures against the dense oracle.

use gedmrg::divergence::{
    max_divergence_dense, max_divergence_edge, max_divergence_general, mutual_information_vn,
    DivergenceConfig, Geometry,
};
use gedmrg::dmrg::SweepConfig;
use gedmrg::linalg::DenseMatrix;
use gedmrg::mpo::reduced_density_mpo;
use gedmrg::mps::{random_mps, MatrixProductState};
use gedmrg::oracle::{reduced_density, renyi_entropy_exact, von_neumann_entropy, DenseState};
use gedmrg::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

fn state(n: usize, chi: usize, seed: u64) -> MatrixProductState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mps(n, 2, chi, &mut rng)
        .unwrap()
        .canonicalize(0)
        .unwrap()
}

fn dense(psi: &MatrixProductState) -> DenseState {
    DenseState::new(psi.to_dense().unwrap(), 2, psi.n_sites()).unwrap()
}

fn cfg() -> DivergenceConfig {
    DivergenceConfig {
        sweep: SweepConfig {
            chi_max: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Regions `A = [a0, a0 + na)` and `B = [b0, b0 + nb)` with A left of B.
fn regions(n: usize, picks: [usize; 4]) -> Geometry {
    let na = 1 + picks[0] % (n - 1).min(3);
    let a0 = picks[1] % (n - na);
    let room = n - a0 - na;
    let nb = 1 + picks[2] % room.min(3);
    let b0 = a0 + na + picks[3] % (room - nb + 1);
    Geometry::custom(n, (a0..a0 + na).collect(), (b0..b0 + nb).collect()).unwrap()
}

fn min_positive_eig(m: &DenseMatrix) -> f64 {
    m.eigh().values.into_iter().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn divergence_is_nonnegative_and_dominates_mi(
        n in 3usize..7, chi in 1usize..4, seed in 0u64..1000, picks in any::<[usize; 4]>()
    ) {
        let psi = state(n, chi, seed);
        let geom = regions(n, picks);
        let exact = max_divergence_dense(&psi, &geom, EPS).unwrap().d_infinity;
        let mi = mutual_information_vn(&psi, &geom).unwrap();
        prop_assert!(exact >= -10.0 * EPS, "D_inf = {exact}");
        prop_assert!(exact >= mi - 10.0 * EPS, "D_inf = {exact}, MI = {mi}");
    }

    #[test]
    fn generalized_dmrg_matches_dense(
        n in 3usize..7, chi in 1usize..4, seed in 0u64..1000, picks in any::<[usize; 4]>()
    ) {
        let psi = state(n, chi, seed);
        let geom = regions(n, picks);
        let exact = max_divergence_dense(&psi, &geom, EPS).unwrap().d_infinity;
        let gen = max_divergence_general(&psi, &geom, EPS, &cfg()).unwrap();
        prop_assert!(gen.converged);
        prop_assert!((gen.d_infinity - exact).abs() <= 1e-4f64.max(50.0 * EPS), "{} vs {exact}", gen.d_infinity);
    }

    #[test]
    fn edge_method_matches_dense(n in 2usize..8, chi in 1usize..4, seed in 0u64..1000, k in 0usize..4) {
        let psi = state(n, chi, seed);
        let ns = 1 + k % (n / 2);
        let geom = Geometry::aeb(n, ns).unwrap();
        let exact = max_divergence_dense(&psi, &geom, EPS).unwrap().d_infinity;
        let edge = max_divergence_edge(&psi, ns, EPS, &cfg()).unwrap();
        prop_assert!((edge.d_infinity - exact).abs() <= 1e-4f64.max(50.0 * EPS), "{} vs {exact}", edge.d_infinity);
    }

    /// With the marginal spectra bounded away from eps, `d ln(lambda) / d eps`
    /// is at most `1 / min eig(sigma)`.
    #[test]
    fn epsilon_stability(n in 4usize..7, seed in 0u64..1000) {
        let psi = state(n, 2, seed);
        let geom = Geometry::aeb(n, 1).unwrap();
        let v = dense(&psi);
        let sigma = reduced_density(&v, &geom.region_a).unwrap().kron(&reduced_density(&v, &geom.region_b).unwrap());
        let gap = min_positive_eig(&sigma);
        prop_assume!(gap > 1e3 * EPS);
        let d1 = max_divergence_edge(&psi, 1, EPS, &cfg()).unwrap().d_infinity;
        let d2 = max_divergence_edge(&psi, 1, EPS / 10.0, &cfg()).unwrap().d_infinity;
        prop_assert!((d1 - d2).abs() <= 0.9 * EPS / gap + 1e-9, "|{d1} - {d2}| with gap {gap}");
    }

    #[test]
    fn renyi_entropy_approaches_von_neumann(n in 2usize..7, chi in 1usize..4, seed in 0u64..1000, cut in 1usize..6) {
        let psi = state(n, chi, seed);
        let region: Vec<usize> = (0..1 + cut % (n - 1)).collect();
        let rho = reduced_density(&dense(&psi), &region).unwrap();
        let vn = von_neumann_entropy(&rho);
        for alpha in [1.0 - 1e-4, 1.0 + 1e-4] {
            prop_assert!((renyi_entropy_exact(&rho, alpha) - vn).abs() <= 1e-3);
        }
    }

    #[test]
    fn reduced_density_bond_is_at_most_chi_squared(
        n in 3usize..8, chi in 1usize..4, seed in 0u64..1000, picks in any::<[usize; 4]>()
    ) {
        let psi = state(n, chi, seed);
        let geom = regions(n, picks);
        let rho = reduced_density_mpo(&psi, &geom.union()).unwrap();
        let bound = psi.max_bond_dim().pow(2);
        prop_assert!(rho.bond_dim() <= bound, "{} > {bound}", rho.bond_dim());
    }
}

/// Exactly degenerate singular values in a rank-deficient matrix: the
/// factorization must still reconstruct it.
#[test]
fn svd_of_degenerate_rank_deficient_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let iso = |rows: usize, rng: &mut ChaCha8Rng| {
        let g = DenseMatrix::from_fn(rows, 4, |_, _| {
            use rand::Rng;
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        g.svd().u
    };
    let (u, v) = (iso(64, &mut rng), iso(16, &mut rng));
    let s = [0.6, 0.49, 0.49, 0.38];
    let a = DenseMatrix::from_fn(64, 16, |r, c| {
        (0..4).map(|k| u[(r, k)] * s[k] * v[(c, k)].conj()).sum()
    });
    let svd = a.svd();
    assert!(svd.reconstruction_error(&a) < 1e-12);
    for (x, y) in svd.s.iter().zip(s) {
        assert!((x - y).abs() < 1e-12);
    }
}

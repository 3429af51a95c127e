use super::*;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cross() -> (Arc<DiscreteMeasure>, Arc<DiscreteMeasure>) {
    (
        Arc::new(DiscreteMeasure::uniform_from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap()),
        Arc::new(DiscreteMeasure::uniform_from_rows(&[vec![0.0, -1.0], vec![0.0, 1.0]]).unwrap()),
    )
}

fn three_atom() -> (Arc<DiscreteMeasure>, Arc<DiscreteMeasure>) {
    (
        Arc::new(
            DiscreteMeasure::uniform_from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        ),
        Arc::new(
            DiscreteMeasure::uniform_from_rows(&[vec![2.0, 1.0], vec![3.0, 0.0], vec![2.0, 2.0]]).unwrap(),
        ),
    )
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Arc<DiscreteMeasure> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|k| rng.random::<f64>() * 2.0 + if k == 0 { shift } else { 0.0 }).collect())
        .collect();
    Arc::new(DiscreteMeasure::uniform_from_rows(&rows).unwrap())
}

fn inf() -> NormSpec {
    NormSpec::operator()
}

#[test]
fn quadratic_ot_diracs() {
    let a = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
    let b = Arc::new(DiscreteMeasure::dirac(&[1.0, 0.0]).unwrap());
    let (v, c) = quadratic_ot(&a, &b, &PsdMatrix::identity(2)).unwrap();
    assert_relative_eq!(v, 1.0);
    assert_eq!(c.plan()[(0, 0)], 1.0);
}

#[test]
fn quadratic_ot_cross_is_two() {
    let (mu, nu) = cross();
    let (v, _) = quadratic_ot(&mu, &nu, &PsdMatrix::identity(2)).unwrap();
    assert_relative_eq!(v, 2.0, epsilon = 1e-14);
}

#[test]
fn quadratic_ot_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mu = random_cloud(&mut rng, 5, 2, 0.0);
    let nu = random_cloud(&mut rng, 5, 2, 1.0);
    // permutation oracle: uniform marginals have a permutation vertex optimum
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..5).collect();
    fn heap(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == 1 {
            f(perm);
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, f);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            perm.swap(j, k - 1);
        }
    }
    let mut count = 0;
    heap(5, &mut perm, &mut |p| {
        count += 1;
        let c: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let x = mu.point(i);
                let y = nu.point(j);
                (y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)
            })
            .sum::<f64>()
            / 5.0;
        best = best.min(c);
    });
    assert_eq!(count, 120);
    let (v, _) = quadratic_ot(&mu, &nu, &PsdMatrix::identity(2)).unwrap();
    assert_relative_eq!(v, best, epsilon = 1e-12);
    let (va, _) = quadratic_ot_with(&mu, &nu, &PsdMatrix::identity(2), InnerSolver::Assignment).unwrap();
    assert_relative_eq!(va, best, epsilon = 1e-12);
}

#[test]
fn quadratic_ot_rejects_dimension_mismatch() {
    let (mu, _) = cross();
    let other = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0, 0.0]).unwrap());
    assert!(matches!(
        quadratic_ot(&mu, &other, &PsdMatrix::identity(2)),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn cross_instance_values() {
    let (mu, nu) = cross();
    let opts = SolverOptions::default();
    let s = spectral_wasserstein(&mu, &nu, inf(), &opts).unwrap();
    assert_relative_eq!(s.value_sq, 1.0, epsilon = 1e-9);
    assert!(s.gap <= 1e-7, "gap {}", s.gap);
    let s = spectral_wasserstein(&mu, &nu, NormSpec::frobenius(), &opts).unwrap();
    assert_relative_eq!(s.value_sq, 2f64.sqrt(), epsilon = 1e-9);
    assert!(s.gap <= 1e-7 * 2f64.sqrt());
    let s = spectral_wasserstein(&mu, &nu, NormSpec::trace(), &opts).unwrap();
    assert_relative_eq!(s.value_sq, 2.0, epsilon = 1e-12);
    assert_eq!(s.gap, 0.0);
}

#[test]
fn dirac_pair_is_squared_distance_for_every_p() {
    let a = Arc::new(DiscreteMeasure::dirac(&[0.5, -1.0, 2.0]).unwrap());
    let b = Arc::new(DiscreteMeasure::dirac(&[1.5, 1.0, 0.0]).unwrap());
    for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
        let s = spectral_wasserstein(&a, &b, NormSpec::schatten(p).unwrap(), &SolverOptions::default()).unwrap();
        assert_relative_eq!(s.value_sq, 9.0, epsilon = 1e-9);
    }
}

#[test]
fn non_monotone_norm_rejected() {
    let (mu, nu) = cross();
    let r = spectral_wasserstein(&mu, &nu, NormSpec::nonspectral(3.0).unwrap(), &SolverOptions::default());
    assert!(matches!(r, Err(Error::UnsupportedNorm(_))));
}

#[test]
fn monge_examples() {
    let (mu, nu) = cross();
    for norm in [inf(), NormSpec::frobenius()] {
        let (v, _) = monge_restricted(&mu, &nu, norm).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-14);
    }
    let (a, _) = three_atom();
    let (v, perm) = monge_restricted(&a, &a, inf()).unwrap();
    assert_eq!(v, 0.0);
    assert_eq!(perm, vec![0, 1, 2]);
}

#[test]
fn monge_refuses_large_or_weighted() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = random_cloud(&mut rng, 11, 2, 0.0);
    assert!(matches!(monge_restricted(&big, &big, inf()), Err(Error::TooLarge(_))));
    let w = Arc::new(DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap());
    assert!(monge_restricted(&w, &w, inf()).is_err());
}

#[test]
fn three_atom_instance_against_grid_and_monge() {
    let (mu, nu) = three_atom();
    let sol = spectral_wasserstein(&mu, &nu, inf(), &SolverOptions::default()).unwrap();
    let grid = grid_oracle(&mu, &nu, inf(), 128, 128).unwrap();
    assert!(grid <= sol.upper_bound + 1e-12);
    assert!(((sol.value_sq - grid) / grid).abs() <= 1e-3, "solver {} grid {}", sol.value_sq, grid);
    let (monge, _) = monge_restricted(&mu, &nu, inf()).unwrap();
    assert!(sol.value_sq <= monge + 1e-8);
}

#[test]
fn grid_oracle_cross_and_trace_case() {
    let (mu, nu) = cross();
    let g = grid_oracle(&mu, &nu, inf(), 64, 64).unwrap();
    assert!((g - 1.0).abs() <= 1e-6, "{g}");
    let (w2, _) = quadratic_ot(&mu, &nu, &PsdMatrix::identity(2)).unwrap();
    assert_eq!(grid_oracle(&mu, &nu, NormSpec::trace(), 8, 8).unwrap(), w2);
    let three = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0, 0.0]).unwrap());
    assert!(grid_oracle(&three, &three, inf(), 4, 4).is_err());
}

#[test]
fn certify_examples() {
    let (mu, nu) = cross();
    let sol = spectral_wasserstein(&mu, &nu, inf(), &SolverOptions::default()).unwrap();
    let rep = certify(&sol).unwrap();
    assert!(rep.gap <= 1e-7 && rep.value_gap <= 1e-7);
    assert!(rep.dual_feasible);

    // hand-built: Q = Id/2 with the vertex coupling the LP returns for it
    let q = PsdMatrix::from_matrix(DMatrix::identity(2, 2) * 0.5).unwrap();
    let (v, coupling) = quadratic_ot(&mu, &nu, &q).unwrap();
    let hand = StaticSolution {
        norm: inf(),
        value_sq: v,
        upper_bound: 2.0,
        q_star: q,
        coupling,
        gap: 1.0,
        iterations: 0,
        converged: false,
    };
    assert!(certify(&hand).unwrap().gap > 0.5);

    let s1 = spectral_wasserstein(&mu, &nu, NormSpec::trace(), &SolverOptions::default()).unwrap();
    assert_eq!(certify(&s1).unwrap().gap, 0.0);
}

#[test]
fn weak_duality_and_ordering_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let mu = random_cloud(&mut rng, 5, 2, 0.0);
        let nu = random_cloud(&mut rng, 5, 2, 0.5);
        let mut prev = f64::INFINITY;
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            let s = spectral_wasserstein(&mu, &nu, NormSpec::schatten(p).unwrap(), &SolverOptions::default()).unwrap();
            assert!(s.gap >= -1e-9);
            assert!(s.converged, "p={p} gap {}", s.relative_gap());
            let (monge, _) = monge_restricted(&mu, &nu, NormSpec::schatten(p).unwrap()).unwrap();
            assert!(s.value_sq <= monge + 1e-8);
            assert!(s.value_sq <= prev + 1e-9 * prev.max(1.0));
            prev = s.value_sq;
        }
    }
}

#[test]
fn weighted_unequal_supports() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mu = Arc::new(
        DiscreteMeasure::from_rows(
            &[vec![0.0, 0.0], vec![1.0, 0.3], vec![0.2, 1.0], vec![0.5, 0.5]],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap(),
    );
    let nu = random_cloud(&mut rng, 6, 2, 2.0);
    for p in [2.0, f64::INFINITY] {
        let norm = NormSpec::schatten(p).unwrap();
        let s = spectral_wasserstein(&mu, &nu, norm, &SolverOptions::default()).unwrap();
        assert!(s.converged);
        let (r, c) = s.coupling.marginal_residuals();
        assert!(r < 1e-12 && c < 1e-12);
        let g = grid_oracle(&mu, &nu, norm, 128, 128).unwrap();
        assert!(((s.value_sq - g) / g).abs() < 1e-3);
    }
}

#[test]
fn matched_pairs_flags_ties() {
    let (mu, nu) = cross();
    let split = crate::measures::product_coupling(&mu, &nu).unwrap();
    let pairs = matched_pairs(&split);
    assert!(pairs.iter().all(|p| p.tie));
    let perm = crate::measures::permutation_coupling(&mu, &nu, &[1, 0]).unwrap();
    let pairs = matched_pairs(&perm);
    assert_eq!(pairs[0].target_idx, 1);
    assert!(!pairs[0].tie);
}

#[test]
fn master_weights_stay_on_the_simplex() {
    let bits = |b: &[u64]| -> Arc<DiscreteMeasure> {
        let v: Vec<f64> = b.iter().map(|&x| f64::from_bits(x)).collect();
        Arc::new(DiscreteMeasure::uniform(DMatrix::from_column_slice(4, 2, &v)).unwrap())
    };
    let a = bits(&[
        4594217470546820960, 4598303066577712492, 4605726530541211344, 4610914011110143699,
        4610353493955141039, 4610278094652955991, 4597503502387979144, 4606178184705550220,
    ]);
    let b = bits(&[
        4610755687164914619, 4611157728646763305, 4611068341962875726, 4612917345896831405,
        4598803324679740552, 4600138186394690396, 4608641895730537069, 4606595651611170486,
    ]);
    let fwd = spectral_wasserstein(&a, &b, inf(), &SolverOptions::default()).unwrap();
    let bwd = spectral_wasserstein(&b, &a, inf(), &SolverOptions::default()).unwrap();
    for s in [&fwd, &bwd] {
        assert!(s.converged);
        assert!(s.relative_gap() <= 1e-7, "gap {}", s.relative_gap());
    }
    assert!((fwd.value_sq - bwd.value_sq).abs() <= 1e-7 * fwd.value_sq);
}

mod common;

use common::{low_rank, random_matrix, rng};
use faer::Mat;
use proptest::prelude::*;
use sls_core::linalg::{
    frobenius, kron, min_norm_least_squares, normalize_nonzero_rows, null_space_basis, subspace_distance,
    unvec, vec, Spectral, Tolerance,
};

fn tol() -> Tolerance {
    Tolerance::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kron_vec_identity(seed in any::<u64>(), m in 1usize..=6, n in 1usize..=6, p in 1usize..=6, q in 1usize..=6) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, m, n);
        let x = random_matrix(&mut r, n, p);
        let b = random_matrix(&mut r, p, q);
        let lhs = kron(b.transpose(), a.as_ref()) * vec(x.as_ref());
        let rhs = vec((&a * &x * &b).as_ref());
        prop_assert!((&lhs - &rhs).norm_l2() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vec_roundtrip_is_exact(seed in any::<u64>(), rows in 0usize..=7, cols in 0usize..=7) {
        let m = random_matrix(&mut rng(seed), rows, cols);
        prop_assert_eq!(unvec(vec(m.as_ref()).as_ref(), rows, cols).unwrap(), m);
    }

    #[test]
    fn null_space_certificate(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8, r in 0usize..=8) {
        let mut g = rng(seed);
        let psi = low_rank(&mut g, rows, cols, r.min(rows).min(cols));
        let sv = Spectral::new(psi.as_ref(), &tol()).unwrap();
        let basis = null_space_basis(psi.as_ref(), &tol()).unwrap();
        prop_assert!(frobenius((&psi * &basis).as_ref()) <= 1e-9 * (1.0 + frobenius(psi.as_ref())));
        let gram = basis.transpose() * &basis;
        let eye = Mat::<f64>::identity(basis.ncols(), basis.ncols());
        prop_assert!((&gram - &eye).norm_l2() <= 1e-10);
        prop_assert_eq!(basis.ncols() + sv.rank(), cols);
        prop_assert_eq!(sv.rank(), r.min(rows).min(cols));
    }

    #[test]
    fn least_squares_is_stationary_and_min_norm(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8, r in 1usize..=8, k in 1usize..=3) {
        let mut g = rng(seed);
        let gamma = low_rank(&mut g, rows, cols, r.min(rows).min(cols));
        let z = random_matrix(&mut g, rows, k);
        let m = min_norm_least_squares(gamma.as_ref(), z.as_ref(), &tol()).unwrap();
        let normal = gamma.transpose() * (&gamma * &m - &z);
        let scale = frobenius(gamma.as_ref()).powi(2) * frobenius(m.as_ref()) + frobenius(gamma.as_ref()) * frobenius(z.as_ref());
        prop_assert!(frobenius(normal.as_ref()) <= 1e-9 * (1.0 + scale));
        let kernel = null_space_basis(gamma.as_ref(), &tol()).unwrap();
        prop_assert!(frobenius((kernel.transpose() * &m).as_ref()) <= 1e-9 * (1.0 + frobenius(m.as_ref())));
    }

    #[test]
    fn normalization_preserves_kernel(seed in any::<u64>(), rows in 1usize..=6, cols in 1usize..=7, zeros in proptest::collection::vec(any::<bool>(), 6)) {
        let mut g = rng(seed);
        let mut psi = random_matrix(&mut g, rows, cols);
        for (i, &z) in zeros.iter().take(rows).enumerate() {
            if z {
                psi.row_mut(i).fill(0.0);
            }
        }
        let normed = normalize_nonzero_rows(psi.as_ref(), &tol());
        for i in 0..normed.nrows() {
            prop_assert!((normed.row(i).norm_l2() - 1.0).abs() < 1e-14);
        }
        let a = null_space_basis(psi.as_ref(), &tol()).unwrap();
        let b = null_space_basis(normed.as_ref(), &tol()).unwrap();
        prop_assert!(subspace_distance(a.as_ref(), b.as_ref()) <= 1e-9);
    }
}

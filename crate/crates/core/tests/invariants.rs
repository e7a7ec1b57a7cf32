//! Randomized invariants across modules.

use num_complex::Complex64;
use proptest::prelude::*;

use ltbf::arith::{Arith, ArithmeticProfile};
use ltbf::inversion::{cg_inverse, poly_inverse, Scaling};
use ltbf::linalg::{lu_inverse, matmul, matmul_adj, row_space_angle, ComplexMatrix, HermitianPsd};
use ltbf::ltbf::{interference_basis, nulled_user_covariance, nulling_projector};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| ComplexMatrix::from_vec(rows, cols, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap())
}

/// `I + B B^H` for a random `B`.
fn spd(n: usize) -> impl Strategy<Value = HermitianPsd> {
    matrix(n, n).prop_map(move |b| HermitianPsd::symmetrized(&matmul_adj(&b, &b).unwrap().add(&ComplexMatrix::identity(n)).unwrap()).unwrap())
}

fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_is_an_orthogonal_projector(h in matrix(12, 3)) {
        let (p, _, regularized) = nulling_projector(&h).unwrap();
        prop_assume!(!regularized);
        let pp = matmul(&p, &p, Arith::FP64).unwrap();
        prop_assert!(pp.sub(&p).unwrap().max_abs() < 1e-10);
        prop_assert!(p.sub(&p.adjoint()).unwrap().max_abs() < 1e-12);
        prop_assert!(matmul(&p, &h, Arith::FP64).unwrap().max_abs() < 1e-10);
        prop_assert!((p.trace().re - 9.0).abs() < 1e-9);
    }

    #[test]
    fn nulled_covariance_matches_sandwich(h in matrix(10, 2), f in matrix(10, 3)) {
        let qi = HermitianPsd::symmetrized(&matmul_adj(&f, &f).unwrap()).unwrap();
        let (p, m, regularized) = nulling_projector(&h).unwrap();
        prop_assume!(!regularized);
        let fast = nulled_user_covariance(&qi, &h, &m).unwrap();
        let direct = matmul(&matmul(&p, qi.matrix(), Arith::FP64).unwrap(), &p, Arith::FP64).unwrap();
        prop_assert!(fast.matrix().sub(&direct).unwrap().max_abs() < 1e-10 * qi.matrix().max_abs().max(1.0));
    }

    #[test]
    fn basis_spans_the_dominant_interference(f in matrix(10, 2)) {
        let qv = HermitianPsd::symmetrized(&matmul_adj(&f.scaled(10.0), &f).unwrap().add(&ComplexMatrix::identity(10)).unwrap()).unwrap();
        let (h, padded) = interference_basis(&qv, 2).unwrap();
        prop_assert!(!padded);
        let hh = matmul_adj(&h, &h).unwrap();
        let expected = qv.matrix().sub(&ComplexMatrix::identity(10)).unwrap();
        prop_assert!(rel_err(&hh, &expected) < 1e-9);
    }

    #[test]
    fn full_cg_inverts(q in spd(8)) {
        let (x, _) = cg_inverse(&q, 8, Arith::FP64).unwrap();
        prop_assert!(rel_err(&x, &lu_inverse(q.matrix()).unwrap()) < 1e-6);
    }

    #[test]
    fn neumann_error_shrinks_with_degree(q in spd(6)) {
        let oracle = lu_inverse(q.matrix()).unwrap();
        let e = |d| rel_err(&poly_inverse(&q, d, Arith::FP64, Scaling::Spectral).unwrap().0, &oracle);
        prop_assert!(e(8) <= e(2) + 1e-12);
    }

    #[test]
    fn row_space_angle_ignores_left_transforms(g in matrix(2, 8), t in matrix(2, 2)) {
        let t = t.add(&ComplexMatrix::identity(2).scaled(3.0)).unwrap();
        let tg = matmul(&t, &g, Arith::FP64).unwrap();
        prop_assert!(row_space_angle(&g, &tg).unwrap() < 1e-6);
    }

    #[test]
    fn quantized_matmul_stays_on_grid(a in matrix(3, 4), b in matrix(4, 2)) {
        let arith = Arith::narrow(ArithmeticProfile::Q7_16);
        let c = matmul(&a.quantized(arith), &b.quantized(arith), arith).unwrap();
        let unit = 65536.0;
        for z in c.data() {
            prop_assert_eq!((z.re * unit).fract(), 0.0);
            prop_assert_eq!((z.im * unit).fract(), 0.0);
        }
    }
}

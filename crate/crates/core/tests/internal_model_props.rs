use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use regulab::internal_model::{
    build_frequency_im, build_periodic_im, linear_closed_loop, synthesize_linear_regulator, LinearPlantSS,
};
use regulab::linalg::Matrix;

fn max_real_part(m: &Matrix<f64>) -> f64 {
    let na = DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice());
    na.complex_eigenvalues().iter().fold(f64::NEG_INFINITY, |a, z| a.max(z.re))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn periodic_pairs_carry_the_declared_spectrum(period in PI..4.0 * PI, d in 1usize..=5, n_e in 1usize..=2) {
        let im = build_periodic_im(period, d, n_e).unwrap();
        prop_assert_eq!(im.n_eta(), (2 * d + 1) * n_e);
        prop_assert!(im.spectrum_error().unwrap() <= 1e-9);
        prop_assert_eq!(im.controllability_rank(), im.n_eta());
        prop_assert!(im.cayley_hamilton_residual() <= 1e-8);
    }

    #[test]
    fn frequency_pairs_carry_the_declared_spectrum(
        raw in proptest::collection::btree_set(1u32..40, 1..4),
        n_e in 1usize..=2,
    ) {
        let freqs: Vec<f64> = raw.iter().map(|&k| k as f64 / 40.0).collect();
        let im = build_frequency_im(&freqs, n_e).unwrap();
        prop_assert_eq!(im.n_eta(), (2 * freqs.len() + 1) * n_e);
        prop_assert!(im.spectrum_error().unwrap() <= 1e-9);
        prop_assert_eq!(im.controllability_rank(), im.n_eta());
        prop_assert!(im.cayley_hamilton_residual() <= 1e-8);
    }

    #[test]
    fn synthesized_loops_are_stable(
        a in proptest::collection::vec(-2.0..2.0f64, 4),
        b in proptest::collection::vec(0.2..2.0f64, 2),
        p in proptest::collection::vec(-1.0..1.0f64, 4),
        omega in 0.3..3.0f64,
    ) {
        let plant = LinearPlantSS {
            S: Matrix::from_rows(&[vec![0.0, omega], vec![-omega, 0.0]]).unwrap(),
            A: Matrix::from_row_slice(2, 2, &a),
            B: Matrix::from_row_slice(2, 1, &b),
            P: Matrix::from_row_slice(2, 2, &p),
            C_e: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            C_y: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        };
        // Plants violating a hypothesis are refused, which is fine here.
        let Ok(design) = synthesize_linear_regulator(&plant) else { return Ok(()) };
        prop_assert!(design.max_real_part() <= -0.1);
        let cl = linear_closed_loop(&plant, &design.internal_model.phi, &design.internal_model.g, &design.k_x, &design.k_eta, &design.l).unwrap();
        prop_assert!(max_real_part(&cl) <= -0.1 + 1e-9, "{}", max_real_part(&cl));
    }
}

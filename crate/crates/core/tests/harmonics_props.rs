mod common;

use std::f64::consts::TAU;

use common::trig_direct;
use num_complex::Complex;
use proptest::prelude::*;
use regulab::harmonics::{fourier_coeff, generalized_fourier_coeff, UniformSegment};
use regulab::internal_model::build_periodic_im;

fn trig() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            -1.0..1.0f64,
            proptest::collection::vec(-1.0..1.0f64, n),
            proptest::collection::vec(-1.0..1.0f64, n),
        )
    })
}

fn coeffs(period: f64, periods: usize, f: impl Fn(f64) -> f64, k: usize) -> Complex<f64> {
    let seg = UniformSegment::periodic_scalar(period, 2048, periods, f).unwrap();
    fourier_coeff(&seg, period, k).unwrap()[0]
}

/// k-th derivative of `α + Σ β sin(nωt) + γ cos(nωt)`.
fn trig_derivative(alpha: f64, beta: &[f64], gamma: &[f64], omega: f64, order: u32, t: f64) -> f64 {
    let mut s = if order == 0 { alpha } else { 0.0 };
    for (j, (b, g)) in beta.iter().zip(gamma).enumerate() {
        let w = omega * (j + 1) as f64;
        // d^m/dt^m of e^{iwt} is (iw)^m e^{iwt}
        let rot = Complex::new(0.0, w).powu(order) * Complex::from_polar(1.0, w * t);
        // b sin + g cos = Re[(g - i b) e^{iwt}]
        s += (Complex::new(*g, -*b) * rot).re;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn coefficients_are_linear(f in trig(), g in trig(), a in -3.0..3.0f64, b in -3.0..3.0f64, period in 1.0..10.0f64, k in 0usize..8) {
        let w = TAU / period;
        let ff = |t: f64| trig_direct(f.0, &f.1, &f.2, w * t);
        let gg = |t: f64| trig_direct(g.0, &g.1, &g.2, w * t) * (0.3 * (w * t).sin()).exp();
        let lhs = coeffs(period, 1, |t| a * ff(t) + b * gg(t), k);
        let rhs = coeffs(period, 1, ff, k) * a + coeffs(period, 1, gg, k) * b;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()) * period);
    }

    #[test]
    fn derivative_transfer(f in trig(), period in 1.0..10.0f64, k in 0usize..8) {
        let w = TAU / period;
        let x = |t: f64| trig_derivative(f.0, &f.1, &f.2, w, 0, t);
        let dx = |t: f64| trig_derivative(f.0, &f.1, &f.2, w, 1, t);
        let lhs = coeffs(period, 1, dx, k);
        let rhs = Complex::new(0.0, w * k as f64) * coeffs(period, 1, x, k);
        prop_assert!((lhs - rhs).norm() <= 1e-8);
    }

    #[test]
    fn averaged_and_unnormalized_conventions_agree(f in trig(), period in 1.0..10.0f64, k in 1usize..6) {
        let w = TAU / period;
        let x = |t: f64| trig_direct(f.0, &f.1, &f.2, w * t);
        let seg = UniformSegment::periodic_scalar(period, 2048, 20, x).unwrap();
        let avg = generalized_fourier_coeff(&seg, k as f64 / period, None).unwrap().value[0];
        let c = coeffs(period, 1, x, k);
        prop_assert!((avg * period - c).norm() <= 1e-9, "{} vs {}", avg * period, c);
    }

    /// η¹ periodic and e = p(d/dt) η¹ with p the internal-model polynomial:
    /// the embedded harmonics of e vanish, the others generally do not.
    #[test]
    fn internal_model_relation_kills_embedded_harmonics(f in trig(), period in 2.0..10.0f64, d in 1usize..4) {
        let im = build_periodic_im(period, d, 1).unwrap();
        let p = im.char_poly.coeffs().to_vec();
        let w = TAU / period;
        let e = |t: f64| {
            p.iter().enumerate().map(|(m, a)| a * trig_derivative(f.0, &f.1, &f.2, w, m as u32, t)).sum::<f64>()
        };
        let scale = 1.0 + (0..256).map(|j| e(period * j as f64 / 256.0).abs()).fold(0.0, f64::max);
        for k in 0..=d {
            let c = coeffs(period, 1, e, k);
            prop_assert!(c.norm() <= 1e-8 * scale * period, "k={}: {}", k, c.norm());
        }
    }
}

#[test]
fn textbook_values() {
    assert!((coeffs(TAU, 1, f64::cos, 1) - Complex::new(TAU / 2.0, 0.0)).norm() < 1e-9);
    assert!((coeffs(TAU, 1, |_| 1.0, 0) - Complex::new(TAU, 0.0)).norm() < 1e-9);
    assert!(coeffs(TAU, 1, |t| (2.0 * t).sin(), 1).norm() < 1e-9);
    // averaged over several periods, same value
    assert!((coeffs(TAU, 5, f64::cos, 1) - Complex::new(TAU / 2.0, 0.0)).norm() < 1e-9);
}

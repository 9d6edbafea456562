mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regulab::expr::parse;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_then_parse_evaluates_identically(e in arb_expr(), pts in proptest::collection::vec(arb_point(), 100)) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        for p in &pts {
            let (a, b) = (eval_at(&e, p), eval_at(&back, p));
            prop_assert!(same(a, b), "`{}`: {} vs {}", text, a, b);
        }
    }

    #[test]
    fn printing_is_a_fixed_point(e in arb_expr()) {
        let once = e.to_string();
        let twice = parse(&once).unwrap().to_string();
        prop_assert_eq!(parse(&twice).unwrap().to_string(), twice);
    }

    #[test]
    fn symbolic_derivative_matches_central_difference(e in arb_expr(), p in arb_point(), axis in 0..VARS.len()) {
        let sym = eval_at(&e.differentiate(VARS[axis]), &p);
        let fd = central_diff(&e, &p, axis, 1e-5);
        prop_assert!((sym - fd).abs() <= 1e-6 * (1.0 + eval_at(&e, &p).abs().max(sym.abs())), "`{}`: {} vs {}", e, sym, fd);
    }

    #[test]
    fn evaluation_is_deterministic(e in arb_expr(), p in arb_point()) {
        prop_assert!(same(eval_at(&e, &p), eval_at(&e.clone(), &p)));
    }
}

#[test]
fn deep_trees_differentiate_consistently() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let e = random_expr(&mut rng, 6);
        let p = random_point(&mut rng);
        for (axis, v) in VARS.iter().enumerate() {
            let sym = eval_at(&e.differentiate(*v), &p);
            let fd = central_diff(&e, &p, axis, 1e-5);
            let value = eval_at(&e, &p).abs().max(sym.abs());
            assert!((sym - fd).abs() <= 1e-6 * (1.0 + value), "`{e}` d/d{v}: {sym} vs {fd}");
        }
    }
}

#[test]
fn derivative_of_unrelated_variable_is_zero() {
    let e = parse("sin(w1) * x1^2").unwrap();
    assert!(e.differentiate(VARS[1]).is_zero());
}

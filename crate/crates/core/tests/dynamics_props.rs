use proptest::prelude::*;
use regulab::dynamics::{compose_closed_loop, linearize_at, ExtendedPlant, Regulator};
use regulab::expr::{parse, Expr, Var, VarBinding};

fn exprs(src: &[&str]) -> Vec<Expr> {
    src.iter().map(|s| parse(s).unwrap()).collect()
}

fn plant() -> ExtendedPlant {
    ExtendedPlant::new(
        exprs(&["w2", "-w1"]),
        exprs(&["x2", "-x1 - x1^3 + tanh(x2) + w1 * u1", "sin(x1) + u2"]),
        exprs(&["x1 - w1", "x3 * x2"]),
        exprs(&["x1 - w1"]),
        2,
    )
    .unwrap()
}

fn regulator() -> Regulator {
    Regulator::new(exprs(&["c2 + y1", "-c1 + y2^2"]), exprs(&["-c1 - y1", "cos(c2) * y2"]), 2, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn composition_matches_chained_evaluation(z in proptest::collection::vec(-2.0..2.0f64, 7)) {
        let (p, r) = (plant(), regulator());
        let sys = compose_closed_loop(&p, &r).unwrap();
        let mut out = vec![0.0; 7];
        sys.eval_field(&z, &mut out).unwrap();

        let (w, x, c) = (&z[0..2], &z[2..5], &z[5..7]);
        let mut b = VarBinding::new();
        for (i, v) in w.iter().enumerate() { b.set(Var::w(i as u32 + 1), *v); }
        for (i, v) in x.iter().enumerate() { b.set(Var::x(i as u32 + 1), *v); }
        for (i, v) in c.iter().enumerate() { b.set(Var::c(i as u32 + 1), *v); }
        let y: Vec<f64> = p.h_p().iter().map(|h| h.eval(&b).unwrap()).collect();
        for (i, v) in y.iter().enumerate() { b.set(Var::y(i as u32 + 1), *v); }
        let u: Vec<f64> = r.h_c().iter().map(|h| h.eval(&b).unwrap()).collect();
        for (i, v) in u.iter().enumerate() { b.set(Var::u(i as u32 + 1), *v); }
        let mut expected: Vec<f64> = p.s().iter().map(|e| e.eval(&b).unwrap()).collect();
        expected.extend(p.f_p().iter().map(|e| e.eval::<f64, _>(&b).unwrap()));
        expected.extend(r.f_c().iter().map(|e| e.eval::<f64, _>(&b).unwrap()));
        for (a, e) in out.iter().zip(&expected) {
            prop_assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{} vs {}", a, e);
        }
        let err = sys.eval_error(&z).unwrap();
        prop_assert!((err[0] - (x[0] - w[0])).abs() <= 1e-15);
    }

    #[test]
    fn linear_plant_linearizes_identically_everywhere(pt in proptest::collection::vec(-5.0..5.0f64, 5)) {
        let p = ExtendedPlant::new(
            exprs(&["w2", "-w1"]),
            exprs(&["2*x1 - 0.5*x2 + w1 + u1", "x1 - 3*w2"]),
            exprs(&["x1", "x2 + w1"]),
            exprs(&["x1 - 0.25*w2"]),
            1,
        ).unwrap();
        let at0 = linearize_at(&p, &[0.0; 5]).unwrap();
        let here = linearize_at(&p, &pt).unwrap();
        for (a, b) in [(&at0.dfdx, &here.dfdx), (&at0.dfdu, &here.dfdu), (&at0.dfdw, &here.dfdw),
                       (&at0.dhedx, &here.dhedx), (&at0.dhedw, &here.dhedw), (&at0.dhdx, &here.dhdx), (&at0.dsdw, &here.dsdw)] {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn zero_control_leaves_exosystem_input() {
    let p = ExtendedPlant::new(exprs(&["0"]), exprs(&["w1 + u1"]), exprs(&["x1"]), exprs(&["x1"]), 1).unwrap();
    let r = Regulator::static_feedback(exprs(&["0"]), 1).unwrap();
    let sys = compose_closed_loop(&p, &r).unwrap();
    assert_eq!(sys.field()[1].to_string(), "w1");
}

#[test]
fn composed_field_has_no_signal_variables() {
    let sys = compose_closed_loop(&plant(), &regulator()).unwrap();
    for e in sys.field() {
        for v in e.free_vars() {
            let name = v.to_string();
            assert!(!name.starts_with('u') && !name.starts_with('y') && !name.starts_with('e'), "{name}");
        }
    }
}

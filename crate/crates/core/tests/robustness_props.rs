use regulab::robustness::{run_counterexample, run_sweep, run_sweep_with_jobs, CounterexampleConfig, Scenario};

const LINEAR: &str = include_str!("../../cli/examples/linear_regulator.json");
const HARMONIC: &str = include_str!("../../cli/examples/harmonic_rejection.json");

#[test]
fn sweeps_are_byte_reproducible() {
    let sc = Scenario::from_json(HARMONIC).unwrap();
    let a = serde_json::to_string(&run_sweep(&sc, 5).unwrap()).unwrap();
    let b = serde_json::to_string(&run_sweep_with_jobs(&sc, 5, Some(1)).unwrap()).unwrap();
    let c = serde_json::to_string(&run_sweep_with_jobs(&sc, 5, Some(4)).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn shrinking_epsilon_keeps_an_all_pass_sweep() {
    let mut sc = Scenario::from_json(LINEAR).unwrap();
    let wide = run_sweep(&sc, 10).unwrap();
    assert!(wide.aggregate.all_stable && wide.aggregate.all_property);
    if let regulab::perturbations::PerturbationSpec::LinearMatrix { epsilon, .. } = &mut sc.perturbation {
        *epsilon /= 2.0;
    }
    let narrow = run_sweep(&sc, 10).unwrap();
    assert!(narrow.aggregate.all_stable && narrow.aggregate.all_property);
    // same stream, same direction, half the size
    for (w, n) in wide.samples.iter().zip(&narrow.samples) {
        assert_eq!(w.stream, n.stream);
        assert!((n.size - w.size / 2.0).abs() <= 1e-15, "{} vs {}", n.size, w.size);
    }
}

#[test]
fn counterexample_rows_satisfy_the_dichotomy() {
    let cfg = CounterexampleConfig { n_samples: 8, ..CounterexampleConfig::default() };
    let r = run_counterexample(&cfg, None).unwrap();
    for row in &r.rows {
        if row.stable && row.periodic {
            let scale = 1.0 + row.sup_e.unwrap();
            for k in 0..=cfg.d {
                assert!(row.abs_c[k] <= cfg.tolerance * scale, "row {}: |c{k}| = {}", row.index, row.abs_c[k]);
            }
        }
        assert!(row.dichotomy_holds);
    }
    assert!(r.summary.dichotomy_holds);
    assert!(r.rows.iter().any(|row| row.sup_e.unwrap_or(0.0) >= 1e-2));
}

#[test]
fn digest_ignores_key_order_and_whitespace() {
    let a = Scenario::from_json(LINEAR).unwrap();
    let value: serde_json::Value = serde_json::from_str(LINEAR).unwrap();
    let mut pairs: Vec<(String, serde_json::Value)> = value.as_object().unwrap().clone().into_iter().collect();
    pairs.reverse();
    let mut text = String::from("{");
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            text.push_str(" ,\n  ");
        }
        text.push_str(&format!("{:?} :  {}", k, serde_json::to_string(v).unwrap()));
    }
    text.push('}');
    let b = Scenario::from_json(&text).unwrap();
    assert_eq!(a.digest(), b.digest());
    let mut c = a.clone();
    c.seed += 1;
    assert_ne!(a.digest(), c.digest());
}

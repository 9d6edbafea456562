//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Lines go straight to stderr so they show up without `--nocapture`.

mod common;

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regulab::expr::{parse, Expr};
use regulab::harmonics::{fourier_coeff, UniformSegment};
use regulab::internal_model::build_periodic_im;
use regulab::perturbations::{
    delta_for_ball, hausdorff_distance, lift_to_c0, sample_trig_ball_with, substream_rng, weak_ck_semimetric, CompactGrid,
    TrigPolynomial,
};
use regulab::robustness::{
    dimension_probe, run_counterexample_with, run_sweep, run_sweep_with_jobs, CounterexampleConfig, Scenario,
};

use common::*;

const LINEAR_SCENARIO: &str = include_str!("../../cli/examples/linear_regulator.json");
const HARMONIC_SCENARIO: &str = include_str!("../../cli/examples/harmonic_rejection.json");

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// --- 1 -------------------------------------------------------------------

/// Nearest-neighbour matching of two equally sized multisets.
fn match_error(mut computed: Vec<Complex<f64>>, expected: &[Complex<f64>]) -> f64 {
    if computed.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for e in expected {
        let (i, d) = computed
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        worst = worst.max(d);
        computed.swap_remove(i);
    }
    worst
}

fn to_na(m: &regulab::Matrix64) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_eig: f64 = 0.0;
    let mut worst_ch: f64 = 0.0;
    for trial in 0..20 {
        let period = rng.random_range(PI..4.0 * PI);
        let d = rng.random_range(1..=5usize);
        let n_e = rng.random_range(1..=2usize);
        let im = build_periodic_im(period, d, n_e).map_err(|e| e.to_string())?;
        let mut expected = Vec::new();
        for _ in 0..n_e {
            expected.push(Complex::new(0.0, 0.0));
            for k in 1..=d {
                let w = TAU * k as f64 / period;
                expected.push(Complex::new(0.0, w));
                expected.push(Complex::new(0.0, -w));
            }
        }
        let n = im.phi.nrows();
        ensure(n == (2 * d + 1) * n_e, || format!("trial {trial}: n_eta = {n}"))?;
        let computed = im.phi.eigenvalues().map_err(|e| e.to_string())?;
        let err = match_error(computed, &expected);
        worst_eig = worst_eig.max(err);
        ensure(err <= 1e-9, || format!("trial {trial} (T={period:.4}, d={d}, n_e={n_e}): eigenvalue error {err:e}"))?;

        // Controllability: rank of [G, ΦG, …] through nalgebra's SVD on the
        // orthonormalized Krylov basis.
        let phi = to_na(&im.phi);
        let g = to_na(&im.g);
        let mut blocks = vec![g.clone()];
        for _ in 1..n {
            let next = &phi * blocks.last().unwrap();
            blocks.push(next);
        }
        let mut kry = DMatrix::zeros(n, n * n_e);
        for (j, b) in blocks.iter().enumerate() {
            let nb = b.norm().max(1e-300);
            kry.view_mut((0, j * n_e), (n, n_e)).copy_from(&(b / nb));
        }
        let qr = kry.transpose().qr();
        let rank = qr.r().diagonal().iter().filter(|v| v.abs() > 1e-10).count();
        let rank = rank.max(kry.rank(1e-10));
        ensure(rank == n, || format!("trial {trial}: controllability rank {rank} < {n}"))?;

        // Cayley-Hamilton with the polynomial λ Π (λ² + ω_k²).
        let mut p = vec![0.0, 1.0];
        for k in 1..=d {
            let w2 = (TAU * k as f64 / period).powi(2);
            let mut q = vec![0.0; p.len() + 2];
            for (i, c) in p.iter().enumerate() {
                q[i] += w2 * c;
                q[i + 2] += c;
            }
            p = q;
        }
        let mut acc = DMatrix::zeros(n, n);
        let mut pow = DMatrix::identity(n, n);
        let mut scale = 0.0;
        for c in &p {
            acc += &pow * *c;
            scale += c.abs() * pow.norm();
            pow = &pow * &phi;
        }
        let res = acc.norm() / scale;
        worst_ch = worst_ch.max(res);
        ensure(res <= 1e-8, || format!("trial {trial}: Cayley-Hamilton residual {res:e}"))?;
    }
    Ok(format!("20 models, eigenvalue error {worst_eig:.1e}, Cayley-Hamilton residual {worst_ch:.1e}"))
}

// --- 2 -------------------------------------------------------------------

fn criterion_2() -> Check {
    let sc = Scenario::from_json(LINEAR_SCENARIO).map_err(|e| e.to_string())?;
    ensure(sc.simulation.horizon == 200.0 && sc.simulation.rtol == 1e-10, || "scenario drifted".into())?;
    let r = run_sweep(&sc, 50).map_err(|e| e.to_string())?;
    ensure(r.nominal.stable, || "nominal loop unstable".into())?;
    let mut worst: f64 = 0.0;
    for s in &r.samples {
        ensure(s.verdict.stable, || format!("sample {} not UUB: {:?}", s.index, s.verdict.failure))?;
        let m = s.verdict.metric().ok_or_else(|| format!("sample {} has no metric", s.index))?;
        worst = worst.max(m);
        ensure(m <= 1e-5, || format!("sample {}: P_0 metric {m:e}", s.index))?;
    }
    ensure(r.samples.len() == 50, || "sample count".into())?;
    Ok(format!("50 samples within 0.02, worst sup|e| {worst:.2e}"))
}

// --- 3 -------------------------------------------------------------------

fn criterion_3() -> Check {
    let sc = Scenario::from_json(HARMONIC_SCENARIO).map_err(|e| e.to_string())?;
    let r = run_sweep(&sc, 20).map_err(|e| e.to_string())?;
    let mut counted = 0;
    let mut max_ratio: f64 = 0.0;
    for s in &r.samples {
        let v = &s.verdict;
        if !(v.stable && v.periodic) {
            continue;
        }
        counted += 1;
        let p = v.property.as_ref().ok_or("missing property verdict")?;
        let bound = 1e-3 * p.metrics["scale"];
        let c0 = p.metrics["abs_c0"];
        let c1 = p.metrics["abs_c1"];
        ensure(c0 <= bound && c1 <= bound, || format!("sample {}: |c0| {c0:e}, |c1| {c1:e}, bound {bound:e}", s.index))?;
        max_ratio = max_ratio.max(p.metrics["abs_c2"] / bound);
    }
    ensure(counted > 0, || "no UUB periodic sample".into())?;
    ensure(max_ratio >= 10.0, || format!("largest |c2| / bound = {max_ratio:.2}"))?;

    // Doubling the horizon and the grid resolution leaves the verdicts unchanged.
    let mut refined = sc.clone();
    refined.simulation.horizon *= 2.0;
    if let regulab::perturbations::PerturbationSpec::TrigBall {
        grid: regulab::perturbations::GridSpec::Disk { resolution, .. },
        ..
    } = &mut refined.perturbation
    {
        *resolution /= 2.0;
    }
    let r2 = run_sweep(&refined, 4).map_err(|e| e.to_string())?;
    for (a, b) in r.samples.iter().zip(&r2.samples) {
        ensure(a.verdict.holds == b.verdict.holds, || format!("sample {} changes verdict under refinement", a.index))?;
    }
    Ok(format!("{counted}/20 UUB periodic samples, |c0|,|c1| within bound, max |c2| = {max_ratio:.0} x bound"))
}

// --- 4 -------------------------------------------------------------------

fn criterion_4() -> Check {
    let cfg = CounterexampleConfig::default();
    let sigma = TrigPolynomial::new(0.0, vec![0.0, 0.0, 0.05], vec![0.0; 3]).map_err(|e| e.to_string())?;
    let report = run_counterexample_with(&cfg, &[sigma], None).map_err(|e| e.to_string())?;
    ensure(report.regulator_states >= 3, || "internal model lacks {0, 1/2π}".into())?;
    let row = &report.rows[0];
    ensure(row.stable && row.periodic, || format!("closed loop not UUB/periodic: {:?}", row.failure))?;
    let sup_e = row.sup_e.ok_or("missing sup|e|")?;
    let scale = 1.0 + sup_e;
    ensure(row.abs_c[1] <= 1e-3 * scale, || format!("|c1| = {:e}", row.abs_c[1]))?;
    let p_nu = row.p_nu.as_ref().ok_or("missing averaged verdict")?;
    ensure(p_nu.holds && p_nu.metric <= 1e-3 * scale, || format!("averaged |c'| = {:e}", p_nu.metric))?;
    ensure(sup_e >= 1e-2, || format!("sup|e| = {sup_e:e}"))?;
    Ok(format!("|c1| = {:.1e}, |c'_1| = {:.1e}, sup|e| = {sup_e:.3}", row.abs_c[1], p_nu.metric))
}

// --- 5 -------------------------------------------------------------------

fn criterion_5() -> Check {
    let eps = 0.2;
    let disk = CompactGrid::disk(1.0, 0.02).map_err(|e| e.to_string())?;
    let fine = disk.refined().map_err(|e| e.to_string())?;
    let mut worst_sup: f64 = 0.0;
    for i in 0..100u64 {
        let n = 1 + (i as usize % 10);
        let delta = delta_for_ball(eps, n, &disk).map_err(|e| e.to_string())?;
        let sigma = sample_trig_ball_with(n, delta, &mut substream_rng(5, i)).map_err(|e| e.to_string())?;
        ensure(sigma.coord_norm() < delta, || format!("sample {i} outside the ball"))?;
        let lift = lift_to_c0(&sigma, &disk).map_err(|e| e.to_string())?;
        // Polar closed form on the grid and on a grid twice as fine.
        let sup = fine.points().iter().chain(disk.points()).map(|p| polar_lift(&sigma, p[0], p[1]).abs()).fold(0.0, f64::max);
        worst_sup = worst_sup.max(sup);
        ensure(sup < eps && lift.sup < eps, || format!("sample {i}: sup|c_σ| = {sup}"))?;
        for p in disk.points().iter().step_by(97) {
            let d = (eval_at(&lift.expr, &[p[0], p[1], 0.0, 0.0]) - polar_lift(&sigma, p[0], p[1])).abs();
            ensure(d <= 1e-12, || format!("sample {i}: lift differs from the polar form by {d:e}"))?;
        }
        let mut worst: f64 = 0.0;
        for j in 0..4096 {
            let t = TAU * j as f64 / 4096.0;
            let lifted = eval_at(&lift.expr, &[t.sin(), t.cos(), 0.0, 0.0]);
            worst = worst.max((lifted - trig_direct(sigma.alpha, &sigma.beta, &sigma.gamma, t)).abs());
        }
        ensure(worst <= 1e-10, || format!("sample {i} (N={n}): lift identity error {worst:e}"))?;
    }
    Ok(format!("100 samples, N = 1..10, max sup|c_σ| = {worst_sup:.3} < {eps}"))
}

/// With `a = ρ sin θ`, `b = ρ cos θ` the recursion gives `q_n + i r_n = (b + i a)^n`.
fn polar_lift(sigma: &TrigPolynomial<f64>, a: f64, b: f64) -> f64 {
    let z = Complex::new(b, a);
    let mut zn = Complex::new(1.0, 0.0);
    let mut s = sigma.alpha;
    for (be, ga) in sigma.beta.iter().zip(&sigma.gamma) {
        zn *= z;
        s += be * zn.im + ga * zn.re;
    }
    s
}

// --- 6 -------------------------------------------------------------------

fn coeff(period: f64, f: impl Fn(f64) -> f64, k: usize) -> Result<Complex<f64>, String> {
    let seg = UniformSegment::periodic_scalar(period, 2048, 1, f).map_err(|e| e.to_string())?;
    Ok(fourier_coeff(&seg, period, k).map_err(|e| e.to_string())?[0])
}

fn criterion_6() -> Check {
    let c1 = coeff(TAU, f64::cos, 1)?;
    ensure((c1 - Complex::new(PI, 0.0)).norm() <= 1e-9, || format!("c1(cos) = {c1}"))?;
    let c0 = coeff(TAU, |_| 1.0, 0)?;
    ensure((c0 - Complex::new(TAU, 0.0)).norm() <= 1e-9, || format!("c0(1) = {c0}"))?;
    let c = coeff(TAU, |t| (2.0 * t).sin(), 1)?;
    ensure(c.norm() <= 1e-9, || format!("c1(sin 2t) = {c}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let period = rng.random_range(1.0..10.0);
        let n = rng.random_range(1..=6usize);
        let a0 = rng.random_range(-1.0..1.0);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = TAU / period;
        let f = |t: f64| trig_direct(a0, &b, &g, w * t);
        let df = |t: f64| {
            (0..n).map(|j| {
                let k = (j + 1) as f64;
                w * k * (b[j] * (k * w * t).cos() - g[j] * (k * w * t).sin())
            }).sum::<f64>()
        };
        for k in 0..=n + 1 {
            let lhs = coeff(period, df, k)?;
            let rhs = Complex::new(0.0, w * k as f64) * coeff(period, f, k)?;
            worst = worst.max((lhs - rhs).norm());
        }
    }
    ensure(worst <= 1e-8, || format!("derivative transfer error {worst:e}"))?;
    Ok(format!("oracles to 1e-9, derivative transfer error {worst:.1e}"))
}

// --- 7 -------------------------------------------------------------------

fn criterion_7() -> Check {
    let disk = CompactGrid::disk(1.0, 0.02).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for n in 1..=3 {
        let delta = delta_for_ball(0.2, n, &disk).map_err(|e| e.to_string())?;
        let full = dimension_probe(2 * n + 1, n, delta, 100, 7).map_err(|e| e.to_string())?;
        ensure(full.max_residual <= 1e-8, || format!("N={n}: m=2N+1 residual {:e}", full.max_residual))?;
        let short = dimension_probe(2 * n, n, delta, 100, 7).map_err(|e| e.to_string())?;
        ensure(short.max_residual >= 0.1 * delta, || format!("N={n}: m=2N residual {:e} < 0.1 δ", short.max_residual))?;
        lines.push(format!("N={n}: {:.1e}/{:.2}δ", full.max_residual, short.max_residual / delta));
    }
    Ok(lines.join(", "))
}

// --- 8 -------------------------------------------------------------------

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Parser round trip and derivatives.
    let mut worst_fd: f64 = 0.0;
    for i in 0..200 {
        let e = random_expr(&mut rng, 5);
        let text = e.to_string();
        let back = parse(&text).map_err(|err| format!("{text}: {err}"))?;
        for _ in 0..100 {
            let p = random_point(&mut rng);
            let (a, b) = (eval_at(&e, &p), eval_at(&back, &p));
            ensure(same(a, b), || format!("expr {i} `{text}`: {a} vs {b}"))?;
        }
        for _ in 0..5 {
            let p = random_point(&mut rng);
            for (axis, v) in VARS.iter().enumerate() {
                let sym = eval_at(&e.differentiate(*v), &p);
                let fd = central_diff(&e, &p, axis, 1e-5);
                let rel = (sym - fd).abs() / sym.abs().max(1.0);
                worst_fd = worst_fd.max(rel);
                ensure(rel <= 1e-6, || format!("`{text}` d/d{v}: {sym} vs {fd}"))?;
            }
        }
    }

    // Semimetric axioms.
    let grid = CompactGrid::new_box(vec![-1.0, -1.0], vec![1.0, 1.0], vec![9, 9]).map_err(|e| e.to_string())?;
    let vars = [VARS[0], VARS[1]];
    let planar = |rng: &mut ChaCha8Rng| -> Expr {
        loop {
            let e = random_expr(rng, 3);
            if e.free_vars().iter().all(|v| vars.contains(v)) {
                return e;
            }
        }
    };
    for t in 0..100 {
        let (f, g, h) = (vec![planar(&mut rng)], vec![planar(&mut rng)], vec![planar(&mut rng)]);
        for k in 0..=1u8 {
            let d = |a: &[Expr], b: &[Expr]| weak_ck_semimetric(a, b, &vars, k, &grid).map_err(|e| e.to_string());
            let (fg, gf, gh, fh, ff) = (d(&f, &g)?, d(&g, &f)?, d(&g, &h)?, d(&f, &h)?, d(&f, &f)?);
            ensure(fg >= 0.0 && ff == 0.0, || format!("triple {t}: non-negativity"))?;
            ensure(fg == gf, || format!("triple {t}: symmetry {fg} vs {gf}"))?;
            ensure(fh <= fg + gh + 1e-12, || format!("triple {t}: triangle {fh} > {fg} + {gh}"))?;
        }
        let cloud = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let m = rng.random_range(1..12);
            (0..m).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect()
        };
        let (x, y, z) = (cloud(&mut rng), cloud(&mut rng), cloud(&mut rng));
        let hd = |a: &[Vec<f64>], b: &[Vec<f64>]| hausdorff_distance(a, b).unwrap();
        ensure(hd(&x, &x) == 0.0 && hd(&x, &y) == hd(&y, &x), || format!("triple {t}: Hausdorff symmetry"))?;
        ensure(hd(&x, &z) <= hd(&x, &y) + hd(&y, &z), || format!("triple {t}: Hausdorff triangle"))?;
    }

    // Sweep reproducibility across thread counts.
    let sc = Scenario::from_json(HARMONIC_SCENARIO).map_err(|e| e.to_string())?;
    let one = run_sweep_with_jobs(&sc, 8, Some(1)).map_err(|e| e.to_string())?;
    let many = run_sweep_with_jobs(&sc, 8, Some(8)).map_err(|e| e.to_string())?;
    let (a, b) = (serde_json::to_string_pretty(&one).unwrap(), serde_json::to_string_pretty(&many).unwrap());
    ensure(a == b, || "sweep reports differ between 1 and 8 jobs".into())?;
    Ok(format!("200 round trips, FD rel. error {worst_fd:.1e}, 100 semimetric triples, sweep bytes identical"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 internal-model spectra", criterion_1),
        ("2 linear robustness", criterion_2),
        ("3 harmonic rejection under nonlinear perturbation", criterion_3),
        ("4 counterexample", criterion_4),
        ("5 lift construction", criterion_5),
        ("6 Fourier oracles", criterion_6),
        ("7 dimension probe", criterion_7),
        ("8 infrastructure properties", criterion_8),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (name, f) in criteria {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => {
                let _ = writeln!(err, "PASS criterion {name} ({secs:.2} s): {detail}");
            }
            Err(detail) => {
                let _ = writeln!(err, "FAIL criterion {name} ({secs:.2} s): {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

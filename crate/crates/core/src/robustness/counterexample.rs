//! Rotation exosystem driving a scalar integrator plant, perturbed by lifted
//! trigonometric polynomials. An internal model tuned to `{0, 1/(2π)}`
//! removes those harmonics from the error but lets higher ones through.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_closed_loop, RobustnessError, RunVerdict, SimulationSpec};
use crate::dynamics::{compose_closed_loop, ExtendedPlant, Regulator};
use crate::expr::{parse, Expr};
use crate::harmonics::{fourier_coeff, PropertyKind, PropertySpec, PropertyVerdict, SteadySignals, evaluate_signals};
use crate::internal_model::{build_frequency_im, synthesize_with_im, LinearPlantSS, LinearRegulatorDesign};
use crate::linalg::Matrix;
use crate::perturbations::{delta_for_ball, lift_to_c0, sample_trig_ball_with, substream_rng, GridSpec, TrigPolynomial};

const TAU: f64 = std::f64::consts::TAU;

/// `ẇ = (w2, -w1)`, `ẋ_p = q(w) + w1 + u`, `y = e = x_p`.
pub fn counterexample_plant(q: Option<Expr>) -> ExtendedPlant {
    let p = |s: &str| parse(s).expect("static expression");
    let mut f = p("w1 + u1");
    if let Some(q) = q {
        f = q + f;
    }
    ExtendedPlant::new(vec![p("w2"), p("-w1")], vec![f], vec![p("x1")], vec![p("x1")], 1)
        .expect("counterexample plant is well formed")
}

/// Linear Regulator for the linearized nominal plant with internal-model
/// frequencies `{0, 1/(2π)}`.
pub fn default_counterexample_design() -> Result<LinearRegulatorDesign, RobustnessError> {
    let m = |r: &[&[f64]]| Matrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).expect("rectangular");
    let lin = LinearPlantSS {
        S: m(&[&[0.0, 1.0], &[-1.0, 0.0]]),
        A: m(&[&[0.0]]),
        B: m(&[&[1.0]]),
        P: m(&[&[1.0, 0.0]]),
        C_e: m(&[&[1.0]]),
        C_y: m(&[&[1.0]]),
    };
    Ok(synthesize_with_im(&lin, build_frequency_im(&[1.0 / TAU], 1)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub epsilon_star: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Harmonics embedded in the regulator's internal model (`P_T` order).
    pub d: usize,
    /// Frequencies (Hz) checked by the averaged property.
    pub freqs: Vec<f64>,
    pub grid: GridSpec,
    pub simulation: SimulationSpec,
    pub tolerance: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        let mut simulation = SimulationSpec::new(400.0);
        simulation.period = Some(TAU);
        simulation.uub_bound = 1e2;
        Self {
            epsilon_star: 0.2,
            n: 3,
            n_samples: 20,
            seed: 0,
            d: 1,
            freqs: vec![1.0 / TAU],
            grid: GridSpec::Disk { radius: 1.0, resolution: 0.02 },
            simulation,
            tolerance: 1e-3,
        }
    }
}

impl CounterexampleConfig {
    pub fn validate(&self) -> Result<(), RobustnessError> {
        if self.n == 0 {
            return Err(RobustnessError::Config("N must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(RobustnessError::Config("at least one sample is needed".into()));
        }
        if !(self.epsilon_star > 0.0) || !(self.tolerance > 0.0) {
            return Err(RobustnessError::Config("epsilon and tolerance must be positive".into()));
        }
        self.simulation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub index: usize,
    pub stream: u64,
    pub sigma: TrigPolynomial<f64>,
    /// `|φ_N(σ)|`
    pub coefficient_norm: f64,
    /// `sup_K |c_σ|` on the grid.
    pub lift_sup: f64,
    /// Amplitude of σ per harmonic, bias first.
    pub sigma_harmonics: Vec<f64>,
    pub stable: bool,
    pub periodic: bool,
    pub sup_e: Option<f64>,
    /// `|c_k(e)|`, `k = 0..=max(N, d + 1)`.
    pub abs_c: Vec<f64>,
    /// `sqrt(Σ_{k > d} |c_k(e)|²)` over the listed harmonics.
    pub higher_harmonic_energy: Option<f64>,
    pub p_0: Option<PropertyVerdict>,
    pub p_t: Option<PropertyVerdict>,
    pub p_nu: Option<PropertyVerdict>,
    /// UUB with periodic η implies the embedded harmonics vanish.
    pub dichotomy_holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSummary {
    pub all_stable: bool,
    pub all_p_t: bool,
    pub all_p_0: bool,
    pub max_sup_e: f64,
    pub dichotomy_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub epsilon_star: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub regulator_states: usize,
    pub nominal: RunVerdict,
    pub rows: Vec<CounterexampleRow>,
    pub summary: CounterexampleSummary,
    pub notes: Vec<String>,
}

fn amplitudes(s: &TrigPolynomial<f64>) -> Vec<f64> {
    let mut v = vec![s.alpha.abs()];
    v.extend(s.beta.iter().zip(&s.gamma).map(|(b, g)| b.hypot(*g)));
    v
}

struct Evaluated {
    verdict: RunVerdict,
    sup_e: Option<f64>,
    abs_c: Vec<f64>,
    p_t: Option<PropertyVerdict>,
    p_nu: Option<PropertyVerdict>,
    eta_periodic: bool,
}

fn evaluate(
    cfg: &CounterexampleConfig,
    regulator: &Regulator,
    q: Option<Expr>,
    kmax: usize,
) -> Result<Evaluated, RobustnessError> {
    let sys = compose_closed_loop(&counterexample_plant(q), regulator)?;
    let mut z0 = vec![0.0, 1.0, 0.0];
    z0.extend(regulator.initial_set().center());
    let p0 = PropertySpec::new(PropertyKind::Regulation, cfg.tolerance);
    let run = run_closed_loop(sys, &[z0], &cfg.simulation, &p0, Some(TAU))?;
    let Some(ss) = run.steady_states.first() else {
        return Ok(Evaluated { verdict: run.verdict, sup_e: None, abs_c: Vec::new(), p_t: None, p_nu: None, eta_periodic: false });
    };
    let sig = SteadySignals::from_estimate(ss, &run.system)?;
    let sup_e = sig.error.sup_norm();
    let abs_c = (0..=kmax)
        .map(|k| fourier_coeff(&sig.error, TAU, k).map(|c| c[0].norm()))
        .collect::<Result<Vec<_>, _>>()?;
    let pt = PropertySpec::new(PropertyKind::Harmonic { period: TAU, d: cfg.d }, cfg.tolerance);
    let p_t = evaluate_signals(&pt, &sig, cfg.simulation.periodicity_tol)?;
    let pnu = PropertySpec::new(PropertyKind::Frequency { freqs: cfg.freqs.clone() }, cfg.tolerance);
    let p_nu = evaluate_signals(&pnu, &sig, cfg.simulation.periodicity_tol)?;
    let eta_periodic = match &sig.eta {
        Some(eta) => {
            let lag = eta.steps_per_period(TAU)?;
            let v = eta.values();
            let drift = (0..v.len().saturating_sub(lag))
                .flat_map(|i| v[i].iter().zip(&v[i + lag]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            drift <= cfg.simulation.periodicity_tol * (1.0 + eta.sup_norm())
        }
        None => false,
    };
    Ok(Evaluated { verdict: run.verdict, sup_e: Some(sup_e), abs_c, p_t: Some(p_t), p_nu: Some(p_nu), eta_periodic })
}

/// Samples σ from the ball of radius `δ = delta_for_ball(ε*, N, K)` and
/// evaluates the counterexample loop for each. `regulator` defaults to
/// [`default_counterexample_design`].
pub fn run_counterexample(cfg: &CounterexampleConfig, regulator: Option<Regulator>) -> Result<CounterexampleReport, RobustnessError> {
    cfg.validate()?;
    let k = cfg.grid.build()?;
    let delta = delta_for_ball(cfg.epsilon_star, cfg.n, &k)?;
    let sigmas = (0..cfg.n_samples)
        .map(|i| sample_trig_ball_with(cfg.n, delta, &mut substream_rng(cfg.seed, i as u64 + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = run_counterexample_with(cfg, &sigmas, regulator)?;
    report.delta = delta;
    Ok(report)
}

/// Counterexample loop for explicit perturbations `sigmas`.
pub fn run_counterexample_with(
    cfg: &CounterexampleConfig,
    sigmas: &[TrigPolynomial<f64>],
    regulator: Option<Regulator>,
) -> Result<CounterexampleReport, RobustnessError> {
    cfg.simulation.validate()?;
    let regulator = match regulator {
        Some(r) => r,
        None => default_counterexample_design()?.regulator.into_regulator(),
    };
    let k = cfg.grid.build()?;
    let kmax = sigmas.iter().map(|s| s.order()).max().unwrap_or(0).max(cfg.n).max(cfg.d + 1);

    let nominal = evaluate(cfg, &regulator, None, kmax)?;
    if !nominal.verdict.stable {
        return Err(RobustnessError::NominalUnstable(
            nominal.verdict.failure.unwrap_or_else(|| "unbounded nominal loop".into()),
        ));
    }

    let rows: Vec<CounterexampleRow> = sigmas
        .par_iter()
        .enumerate()
        .map(|(index, sigma)| {
            let stream = index as u64 + 1;
            let lift = lift_to_c0(sigma, &k);
            let mut row = CounterexampleRow {
                index,
                stream,
                sigma: sigma.clone(),
                coefficient_norm: sigma.coord_norm(),
                lift_sup: f64::NAN,
                sigma_harmonics: amplitudes(sigma),
                stable: false,
                periodic: false,
                sup_e: None,
                abs_c: Vec::new(),
                higher_harmonic_energy: None,
                p_0: None,
                p_t: None,
                p_nu: None,
                dichotomy_holds: true,
                failure: None,
            };
            let lift = match lift {
                Ok(l) => l,
                Err(e) => {
                    row.failure = Some(e.to_string());
                    return row;
                }
            };
            row.lift_sup = lift.sup;
            match evaluate(cfg, &regulator, Some(lift.expr), kmax) {
                Ok(ev) => {
                    row.stable = ev.verdict.stable;
                    row.periodic = ev.verdict.periodic;
                    row.failure = ev.verdict.failure.clone();
                    row.sup_e = ev.sup_e;
                    row.higher_harmonic_energy = (!ev.abs_c.is_empty())
                        .then(|| ev.abs_c.iter().skip(cfg.d + 1).map(|c| c * c).sum::<f64>().sqrt());
                    row.abs_c = ev.abs_c;
                    row.p_0 = ev.verdict.property;
                    row.dichotomy_holds = !(row.stable && ev.eta_periodic) || ev.p_t.as_ref().is_some_and(|p| p.holds);
                    row.p_t = ev.p_t;
                    row.p_nu = ev.p_nu;
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
            row
        })
        .collect();

    let summary = CounterexampleSummary {
        all_stable: rows.iter().all(|r| r.stable),
        all_p_t: rows.iter().all(|r| r.p_t.as_ref().is_some_and(|p| p.holds)),
        all_p_0: rows.iter().all(|r| r.p_0.as_ref().is_some_and(|p| p.holds)),
        max_sup_e: rows.iter().filter_map(|r| r.sup_e).fold(0.0, f64::max),
        dichotomy_holds: rows.iter().all(|r| r.dichotomy_holds),
    };
    let n_c = regulator.n_c();
    let mut notes = vec!["sampled perturbations only: no violation outside the drawn samples is excluded".to_string()];
    // a generator of dimension m reproduces T_N only if N <= (m - 1) / 2
    let m = n_c + 2;
    if 2 * cfg.n < m {
        notes.push(format!("N = {} is small for a loop of dimension {m}; choose N > {}", cfg.n, (m - 1) / 2));
    }
    Ok(CounterexampleReport {
        epsilon_star: cfg.epsilon_star,
        n: cfg.n,
        delta: f64::NAN,
        seed: cfg.seed,
        regulator_states: n_c,
        nominal: nominal.verdict,
        rows,
        summary,
        notes,
    })
}

impl CounterexampleReport {
    /// Per-sample table (header first).
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let kmax = self.rows.iter().map(|r| r.abs_c.len()).max().unwrap_or(0);
        let mut header: Vec<String> =
            ["index", "stream", "phi_norm", "lift_sup", "stable", "periodic", "sup_e"].iter().map(|s| s.to_string()).collect();
        header.extend((0..kmax).map(|k| format!("abs_c{k}")));
        header.extend(["higher_harmonic_energy", "p_0", "p_t", "p_nu", "dichotomy"].iter().map(|s| s.to_string()));
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let holds = |p: &Option<PropertyVerdict>| p.as_ref().map_or(String::new(), |p| p.holds.to_string());
        let mut rows = vec![header];
        for r in &self.rows {
            let mut row = vec![
                r.index.to_string(),
                r.stream.to_string(),
                format!("{:e}", r.coefficient_norm),
                format!("{:e}", r.lift_sup),
                r.stable.to_string(),
                r.periodic.to_string(),
                opt(r.sup_e),
            ];
            row.extend((0..kmax).map(|k| opt(r.abs_c.get(k).copied())));
            row.push(opt(r.higher_harmonic_energy));
            row.push(holds(&r.p_0));
            row.push(holds(&r.p_t));
            row.push(holds(&r.p_nu));
            row.push(r.dichotomy_holds.to_string());
            rows.push(row);
        }
        rows
    }
}

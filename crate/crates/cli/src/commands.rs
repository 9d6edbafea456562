use std::fs;
use std::path::Path;

use regulab::dynamics::compose_closed_loop;
use regulab::harmonics::{HarmonicSpectrum, PropertyKind, SteadySignals};
use regulab::internal_model::{non_resonance_check, InternalModelError, LinearRegulatorDesign};
use regulab::linalg::Matrix;
use regulab::robustness::{
    in_pool, run_counterexample, run_nominal_details, run_sweep_with_jobs, CounterexampleConfig, RobustnessError, RunVerdict,
    Scenario,
};
use serde::Serialize;

use crate::artifacts::{ensure_dir, out_dir, write_json, write_rows, write_trajectory};
use crate::{Cli, CliError, Command, GlobalOpts};

fn condition(e: &InternalModelError) -> &'static str {
    match e {
        InternalModelError::NotStabilizable { .. } => "stabilizability",
        InternalModelError::NotDetectable { .. } => "detectability",
        InternalModelError::NonResonance { .. } => "non-resonance",
        InternalModelError::ExosystemNotMarginal(_) => "exosystem",
        InternalModelError::Placement(_) => "pole placement",
        InternalModelError::ErrorNotInOutput => "error in output",
        _ => "internal model",
    }
}

impl From<RobustnessError> for CliError {
    fn from(e: RobustnessError) -> Self {
        match e {
            RobustnessError::InternalModel(ref im) if im.is_hypothesis_violation() => {
                CliError::Hypothesis { condition: condition(im), message: im.to_string() }
            }
            RobustnessError::NominalUnstable(m) => CliError::Hypothesis { condition: "nominal stability", message: m },
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Reads a scenario and applies the global overrides.
pub fn load_scenario(path: &Path, g: &GlobalOpts) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut sc: Scenario =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = g.seed {
        sc.seed = s;
    }
    if let Some(v) = g.rtol {
        sc.simulation.rtol = v;
    }
    if let Some(v) = g.atol {
        sc.simulation.atol = v;
    }
    if let Some(v) = g.horizon {
        sc.simulation.horizon = v;
    }
    if let Some(v) = g.tail_fraction {
        sc.simulation.tail_fraction = v;
    }
    sc.validate()?;
    Ok(sc)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth { scenario } => synth(&load_scenario(scenario, g)?),
        Command::Simulate { scenario } => simulate(&load_scenario(scenario, g)?, g),
        Command::Sweep { scenario, samples } => sweep(&load_scenario(scenario, g)?, *samples, g),
        Command::Counterexample { epsilon, n, samples } => counterexample(*epsilon, *n, *samples, g),
        Command::PrintSystem { scenario } => {
            let sc = load_scenario(scenario, g)?;
            let prep = sc.prepare()?;
            let sys = compose_closed_loop(&prep.plant, &prep.regulator).map_err(|e| CliError::Config(e.to_string()))?;
            println!("{sys}");
            Ok(())
        }
    }
}

fn print_matrix(name: &str, m: &Matrix<f64>) {
    println!("{name} =");
    for r in m.to_rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>12.6}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

fn print_vector(name: &str, v: &[f64]) {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    println!("{name} = [{}]", cells.join(", "));
}

fn print_design(d: &LinearRegulatorDesign) {
    print_matrix("Phi", &d.internal_model.phi);
    print_matrix("G", &d.internal_model.g);
    let eigs: Vec<String> = d
        .internal_model
        .phi
        .eigenvalues()
        .unwrap_or_default()
        .iter()
        .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
        .collect();
    println!("eig(Phi) = {{{}}}", eigs.join(", "));
    print_vector("K_x", &d.k_x);
    print_vector("K_eta", &d.k_eta);
    print_vector("L", &d.l);
    println!("closed-loop spectral abscissa = {:.6}", d.max_real_part());
}

fn synth(sc: &Scenario) -> Result<(), CliError> {
    let prep = sc.prepare()?;
    let Some(design) = &prep.design else {
        return Err(CliError::Config("scenario regulator is inline; synth needs {\"synthesize\": \"linear-regulator\"}".into()));
    };
    let lin = match &prep.linear {
        Some(l) => l.clone(),
        None => regulab::robustness::linearize_plant(&prep.plant)?,
    };
    print_design(design);
    let exo = lin.S.eigenvalues().map_err(|e| CliError::Config(e.to_string()))?;
    let cert = non_resonance_check(&lin.linearization(), &exo);
    println!("non-resonance: {}", if cert.pass { "pass" } else { "fail" });
    for (lam, s) in &cert.min_singular_values {
        println!("  lambda = {:.6}{:+.6}i  sigma_min = {s:.6e}", lam.re, lam.im);
    }
    Ok(())
}

#[derive(Serialize)]
struct SteadySummary {
    period: Option<f64>,
    periods: usize,
    periodicity: regulab::simulate::Periodicity,
    metric: f64,
    scale: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    scenario_digest: String,
    seed: u64,
    initial_conditions: Vec<Vec<f64>>,
    nominal: RunVerdict,
    steady_states: Vec<SteadySummary>,
}

fn simulate(sc: &Scenario, g: &GlobalOpts) -> Result<(), CliError> {
    let prep = sc.prepare()?;
    let run = run_nominal_details(sc, &prep)?;
    let dir = out_dir(&g.out);
    ensure_dir(&dir)?;
    let tdir = dir.join("trajectories");
    ensure_dir(&tdir)?;
    for (i, tr) in run.trajectories.iter().enumerate() {
        write_trajectory(&tdir.join(format!("ic{i}.csv")), tr)?;
    }
    if let Some(ss) = run.steady_states.first() {
        let sig = SteadySignals::from_estimate(ss, &run.system).map_err(|e| CliError::Config(e.to_string()))?;
        let spectrum = match (&sc.property.kind, ss.period) {
            (PropertyKind::Frequency { freqs } | PropertyKind::FrequencyWeak { freqs }, _) => {
                HarmonicSpectrum::averaged(&sig.error, freqs).ok()
            }
            (kind, Some(p)) => {
                let kmax = match kind {
                    PropertyKind::Harmonic { d, .. } | PropertyKind::HarmonicWeak { d, .. } => d + 1,
                    _ => 4,
                };
                HarmonicSpectrum::periodic(&sig.error, p, kmax).ok()
            }
            _ => None,
        };
        if let Some(s) = spectrum {
            let path = dir.join("spectrum.csv");
            let file = fs::File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            s.write_csv(std::io::BufWriter::new(file)).map_err(|source| CliError::Io { path, source })?;
        }
    }
    let report = SimulateReport {
        scenario_digest: sc.digest(),
        seed: sc.seed,
        initial_conditions: prep.initial_conditions.clone(),
        steady_states: run
            .steady_states
            .iter()
            .map(|s| SteadySummary { period: s.period, periods: s.periods, periodicity: s.verdict, metric: s.metric, scale: s.scale })
            .collect(),
        nominal: run.verdict,
    };
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "nominal: stable={} holds={} metric={}",
        report.nominal.stable,
        report.nominal.holds,
        report.nominal.metric().map_or("n/a".to_string(), |m| format!("{m:e}"))
    );
    Ok(())
}

fn sweep(sc: &Scenario, samples: usize, g: &GlobalOpts) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Config("--samples must be at least 1".into()));
    }
    let report = run_sweep_with_jobs(sc, samples, g.jobs)?;
    let dir = out_dir(&g.out);
    ensure_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    write_rows(&dir.join("samples.csv"), &report.samples_csv_rows())?;
    println!(
        "all_stable={} all_property={} worst_metric={}",
        report.aggregate.all_stable,
        report.aggregate.all_property,
        report.aggregate.worst_metric.map_or("n/a".to_string(), |m| format!("{m:e}"))
    );
    println!("{}", report.conclusion);
    Ok(())
}

fn counterexample(epsilon: f64, n: usize, samples: usize, g: &GlobalOpts) -> Result<(), CliError> {
    let mut cfg = CounterexampleConfig { epsilon_star: epsilon, n, n_samples: samples, ..CounterexampleConfig::default() };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(v) = g.rtol {
        cfg.simulation.rtol = v;
    }
    if let Some(v) = g.atol {
        cfg.simulation.atol = v;
    }
    if let Some(v) = g.horizon {
        cfg.simulation.horizon = v;
    }
    if let Some(v) = g.tail_fraction {
        cfg.simulation.tail_fraction = v;
    }
    cfg.validate()?;
    let report = in_pool(g.jobs, || run_counterexample(&cfg, None))??;
    let dir = out_dir(&g.out);
    ensure_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    write_rows(&dir.join("samples.csv"), &report.csv_rows())?;
    println!(
        "delta={:e} all_stable={} all_P_T={} max_sup_e={:e} dichotomy={}",
        report.delta, report.summary.all_stable, report.summary.all_p_t, report.summary.max_sup_e, report.summary.dichotomy_holds
    );
    Ok(())
}

//! Nominal runs, perturbation sweeps and the built-in experiments.
//!
//! Verdicts are empirical: a sweep explores finitely many seeded
//! perturbations inside a stated radius, so a passing report means no
//! violation was found among them, not that a neighbourhood is certified.

mod counterexample;
mod probe;
mod scenario;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{compose_closed_loop, ClosedLoopSystem, DynamicsError, ExtendedPlant};
use crate::expr::{Expr, Var};
use crate::harmonics::{evaluate_property, HarmonicsError, PropertySpec, PropertyVerdict};
use crate::internal_model::InternalModelError;
use crate::perturbations::{
    delta_for_ball, lift_to_c0, perturb_linear_with, sample_trig_ball_with, substream_rng, weak_ck_semimetric,
    PerturbationError, PerturbationSpec,
};
use crate::simulate::{
    check_uub, estimate_steady_state, integrate_many, SteadyStateError, SteadyStateEstimate, Trajectory,
};

pub use counterexample::{
    counterexample_plant, default_counterexample_design, run_counterexample, run_counterexample_with,
    CounterexampleConfig, CounterexampleReport, CounterexampleRow, CounterexampleSummary,
};
pub use probe::{dimension_probe, modal_basis, ProbeReport, PROBE_NOTE, PROBE_SAMPLES};
pub use scenario::{
    canonical_digest, lattice, linearize_plant, InitialSets, PlantSpec, Prepared, RegulatorSpec, Scenario,
    SimulationSpec, SynthesisMethod,
};

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    InternalModel(#[from] InternalModelError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    SteadyState(#[from] SteadyStateError),
    #[error("nominal closed loop is not stable: {0}")]
    NominalUnstable(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl RobustnessError {
    /// Failures caused by the plant or regulator violating a hypothesis of
    /// the theory, as opposed to malformed input.
    pub fn is_hypothesis_violation(&self) -> bool {
        match self {
            RobustnessError::InternalModel(e) => e.is_hypothesis_violation(),
            RobustnessError::NominalUnstable(_) => true,
            _ => false,
        }
    }
}

/// Outcome of one closed loop from a lattice of initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    /// Every integration finished and every tail stayed within the bound.
    pub stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub max_tail_norm: Option<f64>,
    /// Every steady state passed the periodicity test.
    pub periodic: bool,
    /// Property combined over all initial conditions.
    pub property: Option<PropertyVerdict>,
    /// `stable` and the property holds.
    pub holds: bool,
}

impl RunVerdict {
    fn unstable(reason: String, max_tail_norm: Option<f64>) -> Self {
        Self { stable: false, failure: Some(reason), max_tail_norm, periodic: false, property: None, holds: false }
    }

    pub fn metric(&self) -> Option<f64> {
        self.property.as_ref().map(|p| p.metric)
    }
}

/// Everything produced by a run, for callers that write artifacts.
#[derive(Debug, Clone)]
pub struct RunDetails {
    pub system: ClosedLoopSystem,
    pub verdict: RunVerdict,
    pub trajectories: Vec<Trajectory<f64>>,
    pub steady_states: Vec<SteadyStateEstimate<f64>>,
}

/// Worst case over initial conditions: holds only if all hold, metric and
/// per-key metrics are maxima, vacuous only if all are vacuous.
fn combine(verdicts: Vec<PropertyVerdict>) -> Option<PropertyVerdict> {
    let mut it = verdicts.into_iter();
    let mut acc = it.next()?;
    for v in it {
        acc.holds &= v.holds;
        acc.vacuous &= v.vacuous;
        acc.metric = acc.metric.max(v.metric);
        acc.threshold = acc.threshold.min(v.threshold);
        for (k, x) in v.metrics {
            let e = acc.metrics.entry(k).or_insert(x);
            *e = e.max(x);
        }
    }
    Some(acc)
}

/// Integrates `sys` from every initial condition, checks ultimate
/// boundedness, extracts steady states and evaluates `property`.
///
/// Integration failures and unbounded tails are verdicts, not errors;
/// errors are reserved for settings that make evaluation impossible.
pub fn run_closed_loop(
    sys: ClosedLoopSystem,
    initial_conditions: &[Vec<f64>],
    sim: &SimulationSpec,
    property: &PropertySpec,
    period_hint: Option<f64>,
) -> Result<RunDetails, RobustnessError> {
    let opts = sim.integrator_options();
    let results = integrate_many(&sys, initial_conditions, sim.horizon, &opts);
    let mut trajectories = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => {
                let verdict = RunVerdict::unstable(format!("initial condition {i}: {e}"), None);
                return Ok(RunDetails { system: sys, verdict, trajectories, steady_states: Vec::new() });
            }
        }
    }
    let uub = check_uub(&trajectories, sim.t_discard(), sim.uub_bound);
    if !uub.bounded {
        let verdict = RunVerdict::unstable(
            format!("tail norm {:e} exceeds bound {:e}", uub.max_tail_norm, sim.uub_bound),
            Some(uub.max_tail_norm),
        );
        return Ok(RunDetails { system: sys, verdict, trajectories, steady_states: Vec::new() });
    }
    let ss_opts = sim.steady_state_options();
    let steady_states = trajectories
        .iter()
        .map(|t| estimate_steady_state(t, period_hint, &ss_opts))
        .collect::<Result<Vec<_>, _>>()?;
    let verdicts = steady_states
        .iter()
        .map(|ss| evaluate_property(property, ss, &sys, sim.periodicity_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let property = combine(verdicts);
    let holds = property.as_ref().is_some_and(|p| p.holds);
    let verdict = RunVerdict {
        stable: true,
        failure: None,
        max_tail_norm: Some(uub.max_tail_norm),
        periodic: steady_states.iter().all(|s| s.verdict.is_periodic()),
        property,
        holds,
    };
    Ok(RunDetails { system: sys, verdict, trajectories, steady_states })
}

/// Nominal run of a prepared scenario.
pub fn run_nominal_details(sc: &Scenario, prep: &Prepared) -> Result<RunDetails, RobustnessError> {
    let sys = compose_closed_loop(&prep.plant, &prep.regulator)?;
    run_closed_loop(sys, &prep.initial_conditions, &sc.simulation, &sc.property, sc.period_hint())
}

/// Nominal stability and property verdict.
pub fn run_nominal(sc: &Scenario) -> Result<RunVerdict, RobustnessError> {
    let prep = sc.prepare()?;
    Ok(run_nominal_details(sc, &prep)?.verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    /// RNG stream of this sample under the report's master seed.
    pub stream: u64,
    /// Size of the drawn perturbation: coefficient-vector norm for
    /// trig-ball samples, largest entry change for matrix samples.
    pub size: f64,
    /// Distance of the perturbed plant to the nominal one.
    pub distance: f64,
    pub verdict: RunVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub all_stable: bool,
    pub all_property: bool,
    pub worst_metric: Option<f64>,
    pub worst_metrics: BTreeMap<String, f64>,
    /// Streams of the samples that failed stability or the property.
    pub failure_seeds: Vec<u64>,
    pub max_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub scenario_digest: String,
    pub seed: u64,
    /// Radius of the sampled perturbation class.
    pub radius: f64,
    /// How `SampleRecord::distance` is measured.
    pub distance_kind: String,
    pub nominal: RunVerdict,
    pub samples: Vec<SampleRecord>,
    pub aggregate: Aggregate,
    pub conclusion: String,
}

impl RobustnessReport {
    /// Flattened per-sample metrics (header first).
    pub fn samples_csv_rows(&self) -> Vec<Vec<String>> {
        let keys: Vec<String> = self.aggregate.worst_metrics.keys().cloned().collect();
        let mut header: Vec<String> =
            ["index", "stream", "size", "distance", "stable", "periodic", "holds", "vacuous", "metric", "threshold"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        header.extend(keys.iter().cloned());
        let mut rows = vec![header];
        for s in &self.samples {
            let p = s.verdict.property.as_ref();
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
            let mut row = vec![
                s.index.to_string(),
                s.stream.to_string(),
                format!("{:e}", s.size),
                format!("{:e}", s.distance),
                s.verdict.stable.to_string(),
                s.verdict.periodic.to_string(),
                s.verdict.holds.to_string(),
                p.map_or(String::new(), |p| p.vacuous.to_string()),
                opt(p.map(|p| p.metric)),
                opt(p.map(|p| p.threshold)),
            ];
            row.extend(keys.iter().map(|k| opt(p.and_then(|p| p.metrics.get(k).copied()))));
            rows.push(row);
        }
        rows
    }
}

struct DrawnPlant {
    plant: ExtendedPlant,
    size: f64,
    distance: f64,
}

fn matrix_max_diff(a: &crate::linalg::Matrix<f64>, b: &crate::linalg::Matrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn draw_plant(sc: &Scenario, prep: &Prepared, stream: u64) -> Result<DrawnPlant, RobustnessError> {
    let mut rng = substream_rng(sc.seed, stream);
    match &sc.perturbation {
        PerturbationSpec::None => Ok(DrawnPlant { plant: prep.plant.clone(), size: 0.0, distance: 0.0 }),
        PerturbationSpec::LinearMatrix { epsilon, freeze_s } => {
            let lin = prep.linear.as_ref().ok_or_else(|| RobustnessError::Config("linear-matrix needs a linear plant".into()))?;
            let p = perturb_linear_with(lin, *epsilon, &mut rng, *freeze_s);
            let pairs = [(&p.S, &lin.S), (&p.A, &lin.A), (&p.B, &lin.B), (&p.P, &lin.P), (&p.C_e, &lin.C_e), (&p.C_y, &lin.C_y)];
            let distance = pairs.iter().fold(0.0f64, |m, (a, b)| m.max(matrix_max_diff(a, b)));
            Ok(DrawnPlant { plant: p.to_extended_plant()?, size: distance, distance })
        }
        PerturbationSpec::TrigBall { epsilon, n, grid, component } => {
            if prep.plant.n_w() < 2 {
                return Err(RobustnessError::Config("trig-ball perturbations need at least two exosystem states".into()));
            }
            let k = grid.build()?;
            let delta = delta_for_ball(*epsilon, *n, &k)?;
            let sigma = sample_trig_ball_with(*n, delta, &mut rng)?;
            let lift = lift_to_c0(&sigma, &k)?;
            let distance = weak_ck_semimetric(&[Expr::zero()], std::slice::from_ref(&lift.expr), &[Var::w(1), Var::w(2)], 1, &k)?;
            let plant = prep.plant.with_added_term(component - 1, lift.expr)?;
            Ok(DrawnPlant { plant, size: sigma.coord_norm(), distance })
        }
    }
}

fn perturbation_radius(p: &PerturbationSpec) -> (f64, &'static str) {
    match p {
        PerturbationSpec::None => (0.0, "none"),
        PerturbationSpec::LinearMatrix { epsilon, .. } => (*epsilon, "max entry change of (S, A, B, P, C_e, C_y)"),
        PerturbationSpec::TrigBall { epsilon, .. } => (*epsilon, "weak C1 distance on the grid"),
    }
}

fn run_sample(sc: &Scenario, prep: &Prepared, index: usize) -> SampleRecord {
    let stream = index as u64 + 1;
    let result = draw_plant(sc, prep, stream).and_then(|d| {
        let sys = compose_closed_loop(&d.plant, &prep.regulator)?;
        let run = run_closed_loop(sys, &prep.initial_conditions, &sc.simulation, &sc.property, sc.period_hint())?;
        Ok((d.size, d.distance, run.verdict))
    });
    match result {
        Ok((size, distance, verdict)) => SampleRecord { index, stream, size, distance, verdict },
        Err(e) => SampleRecord {
            index,
            stream,
            size: f64::NAN,
            distance: f64::NAN,
            verdict: RunVerdict::unstable(e.to_string(), None),
        },
    }
}

fn aggregate(samples: &[SampleRecord]) -> Aggregate {
    let mut worst_metrics = BTreeMap::new();
    let mut worst_metric: Option<f64> = None;
    for s in samples {
        if let Some(p) = &s.verdict.property {
            worst_metric = Some(worst_metric.map_or(p.metric, |m| m.max(p.metric)));
            for (k, &v) in &p.metrics {
                let e = worst_metrics.entry(k.clone()).or_insert(v);
                *e = f64::max(*e, v);
            }
        }
    }
    Aggregate {
        all_stable: samples.iter().all(|s| s.verdict.stable),
        all_property: samples.iter().all(|s| s.verdict.holds),
        worst_metric,
        worst_metrics,
        failure_seeds: samples.iter().filter(|s| !s.verdict.holds).map(|s| s.stream).collect(),
        max_distance: samples.iter().map(|s| s.distance).fold(0.0, f64::max),
    }
}

/// Perturbation sweep with the global thread pool.
pub fn run_sweep(sc: &Scenario, n_samples: usize) -> Result<RobustnessReport, RobustnessError> {
    run_sweep_with_jobs(sc, n_samples, None)
}

/// Perturbation sweep on `jobs` threads. The report does not depend on
/// `jobs`: sample `i` always uses stream `i + 1` and results merge by index.
pub fn run_sweep_with_jobs(sc: &Scenario, n_samples: usize, jobs: Option<usize>) -> Result<RobustnessReport, RobustnessError> {
    if n_samples == 0 {
        return Err(RobustnessError::Config("a sweep needs at least one sample".into()));
    }
    let prep = sc.prepare()?;
    let body = || -> Result<RobustnessReport, RobustnessError> {
        let nominal = run_nominal_details(sc, &prep)?.verdict;
        let samples: Vec<SampleRecord> = (0..n_samples).into_par_iter().map(|i| run_sample(sc, &prep, i)).collect();
        let aggregate = aggregate(&samples);
        let (radius, kind) = perturbation_radius(&sc.perturbation);
        let conclusion = if aggregate.all_stable && aggregate.all_property {
            format!("no violation found among {n_samples} samples within radius {radius}")
        } else {
            format!("{} of {n_samples} samples violate stability or the property", aggregate.failure_seeds.len())
        };
        Ok(RobustnessReport {
            scenario_digest: sc.digest(),
            seed: sc.seed,
            radius,
            distance_kind: kind.to_string(),
            nominal,
            samples,
            aggregate,
            conclusion,
        })
    };
    in_pool(jobs, body)?
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub fn in_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, RobustnessError> {
    match jobs {
        None => Ok(f()),
        Some(j) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| RobustnessError::ThreadPool(e.to_string()))?
            .install(f)),
    }
}

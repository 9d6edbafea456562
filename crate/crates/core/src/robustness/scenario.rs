//! Scenario description shared by the library entry points and the CLI.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RobustnessError;
use crate::dynamics::{linearize_at, ExtendedPlant, InitialSet, Regulator};
use crate::harmonics::{PropertyKind, PropertySpec};
use crate::internal_model::{
    build_frequency_im, synthesize_linear_regulator, synthesize_with_im, LinearPlantSS, LinearRegulatorDesign,
};
use crate::perturbations::PerturbationSpec;
use crate::simulate::{IntegratorOptions, SteadyStateOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    Linear(LinearPlantSS<f64>),
    Nonlinear(ExtendedPlant),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    LinearRegulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegulatorSpec {
    /// Linear Regulator for the plant (linearized at the origin when
    /// nonlinear). `frequencies` (Hz, nonzero) replaces the exosystem's
    /// minimal polynomial by an internal model with `{0} ∪ frequencies`.
    Synthesize {
        synthesize: SynthesisMethod,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frequencies: Option<Vec<f64>>,
    },
    Inline(Regulator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSets {
    /// Initial set of `(w, x_p)`.
    pub plant: InitialSet,
    /// Initial set of the regulator state; the regulator's own set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regulator: Option<InitialSet>,
    /// Number of lattice points: the centre first, then box corners.
    #[serde(default = "default_lattice")]
    pub lattice_points: usize,
}

fn default_lattice() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub horizon: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    /// Period hint for steady-state extraction. Defaults to the period of a
    /// periodic property when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Euclidean bound used for ultimate boundedness.
    #[serde(default = "default_bound")]
    pub uub_bound: f64,
    /// Relative tolerance of every periodicity test.
    #[serde(default = "default_periodicity_tol")]
    pub periodicity_tol: f64,
}

fn default_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-11
}
fn default_tail() -> f64 {
    0.5
}
fn default_bound() -> f64 {
    1e3
}
fn default_periodicity_tol() -> f64 {
    1e-6
}

impl SimulationSpec {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            rtol: default_rtol(),
            atol: default_atol(),
            tail_fraction: default_tail(),
            period: None,
            uub_bound: default_bound(),
            periodicity_tol: default_periodicity_tol(),
        }
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions::with_tolerances(self.rtol, self.atol)
    }

    pub fn steady_state_options(&self) -> SteadyStateOptions {
        SteadyStateOptions { tail_fraction: self.tail_fraction, tol: self.periodicity_tol, ..SteadyStateOptions::default() }
    }

    /// Time after which states must stay within the bound.
    pub fn t_discard(&self) -> f64 {
        self.horizon * (1.0 - self.tail_fraction)
    }

    pub fn validate(&self) -> Result<(), RobustnessError> {
        let bad = |m: &str| Err(RobustnessError::Config(m.to_string()));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("simulation.horizon must be positive");
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return bad("simulation.rtol and simulation.atol must be positive");
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad("simulation.tail_fraction must lie in (0, 1]");
        }
        if matches!(self.period, Some(p) if !(p > 0.0)) {
            return bad("simulation.period must be positive");
        }
        if !(self.uub_bound > 0.0) || !(self.periodicity_tol > 0.0) {
            return bad("simulation.uub_bound and simulation.periodicity_tol must be positive");
        }
        Ok(())
    }
}

/// One experiment: plant, regulator, initial sets, simulation settings,
/// property and perturbation class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plant: PlantSpec,
    pub regulator: RegulatorSpec,
    pub initial_sets: InitialSets,
    pub simulation: SimulationSpec,
    pub property: PropertySpec,
    #[serde(default = "no_perturbation")]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub seed: u64,
}

fn no_perturbation() -> PerturbationSpec {
    PerturbationSpec::None
}

/// SHA-256 of the key-sorted compact JSON form of `value`.
pub fn canonical_digest(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical
    let text = serde_json::to_string(value).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A scenario resolved into concrete objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub plant: ExtendedPlant,
    pub linear: Option<LinearPlantSS<f64>>,
    pub regulator: Regulator,
    pub design: Option<LinearRegulatorDesign>,
    /// Initial conditions of the closed loop `(w, x_p, x_c)`.
    pub initial_conditions: Vec<Vec<f64>>,
}

/// Centre, then corners of `[lo, hi]` (all-lo, all-hi, then the rest in
/// binary order), without duplicates, truncated to `count`.
pub fn lattice(lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let mut out: Vec<Vec<f64>> = vec![lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()];
    let corner = |mask: u64| -> Vec<f64> { (0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect() };
    let full = if d >= 63 { u64::MAX } else { (1u64 << d) - 1 };
    let mut masks = vec![0, full];
    masks.extend((1..full).take(count));
    for m in masks {
        if out.len() >= count {
            break;
        }
        let c = corner(m);
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out.truncate(count.max(1));
    out
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, RobustnessError> {
        serde_json::from_str(text).map_err(|e| RobustnessError::Config(e.to_string()))
    }

    /// Digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        canonical_digest(&serde_json::to_value(self).expect("scenarios serialize"))
    }

    /// Period used for steady-state extraction.
    pub fn period_hint(&self) -> Option<f64> {
        self.simulation.period.or(match &self.property.kind {
            PropertyKind::Harmonic { period, .. } | PropertyKind::HarmonicWeak { period, .. } => Some(*period),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), RobustnessError> {
        self.simulation.validate()?;
        self.property.validate()?;
        self.perturbation.validate()?;
        self.initial_sets.plant.validate()?;
        if let Some(x) = &self.initial_sets.regulator {
            x.validate()?;
        }
        if self.initial_sets.lattice_points == 0 {
            return Err(RobustnessError::Config("initial_sets.lattice_points must be at least 1".into()));
        }
        if matches!(self.perturbation, PerturbationSpec::LinearMatrix { .. }) && !matches!(self.plant, PlantSpec::Linear(_)) {
            return Err(RobustnessError::Config("linear-matrix perturbations need a linear plant".into()));
        }
        Ok(())
    }

    /// Builds the symbolic plant, the regulator (synthesizing it if asked)
    /// and the initial-condition lattice.
    pub fn prepare(&self) -> Result<Prepared, RobustnessError> {
        self.validate()?;
        let (plant, linear) = match &self.plant {
            PlantSpec::Linear(l) => (l.to_extended_plant()?, Some(l.clone())),
            PlantSpec::Nonlinear(p) => (p.clone(), None),
        };
        let (regulator, design) = match &self.regulator {
            RegulatorSpec::Inline(r) => (r.clone(), None),
            RegulatorSpec::Synthesize { synthesize: SynthesisMethod::LinearRegulator, frequencies } => {
                let lin = match &linear {
                    Some(l) => l.clone(),
                    None => linearize_plant(&plant)?,
                };
                let design = match frequencies {
                    Some(f) => synthesize_with_im(&lin, build_frequency_im(f, 1)?)?,
                    None => synthesize_linear_regulator(&lin)?,
                };
                (design.regulator.regulator().clone(), Some(design))
            }
        };
        let x = &self.initial_sets.plant;
        if x.dim() != plant.n_w() + plant.n_p() {
            return Err(RobustnessError::Config(format!(
                "initial_sets.plant has dimension {}, plant has n_w + n_p = {}",
                x.dim(),
                plant.n_w() + plant.n_p()
            )));
        }
        let xc = self.initial_sets.regulator.clone().unwrap_or_else(|| regulator.initial_set().clone());
        if xc.dim() != regulator.n_c() {
            return Err(RobustnessError::Config(format!(
                "initial_sets.regulator has dimension {}, regulator has {} states",
                xc.dim(),
                regulator.n_c()
            )));
        }
        let (mut lo, mut hi) = x.bounds();
        let (clo, chi) = xc.bounds();
        lo.extend(clo);
        hi.extend(chi);
        let initial_conditions = lattice(&lo, &hi, self.initial_sets.lattice_points);
        Ok(Prepared { plant, linear, regulator, design, initial_conditions })
    }
}

/// Linearization at the origin as a linear plant (the error must not read `w`).
pub fn linearize_plant(plant: &ExtendedPlant) -> Result<LinearPlantSS<f64>, RobustnessError> {
    let zero = vec![0.0; plant.n_w() + plant.n_p() + plant.n_u()];
    let lin = linearize_at::<f64>(plant, &zero)?;
    if lin.dhedw.norm_max() != 0.0 {
        return Err(RobustnessError::Config("synthesis needs an error map that does not depend on w".into()));
    }
    Ok(LinearPlantSS { S: lin.dsdw, A: lin.dfdx, B: lin.dfdu, P: lin.dfdw, C_e: lin.dhedx, C_y: lin.dhdx })
}

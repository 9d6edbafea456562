//! Fourier coefficients of steady-state signals and evaluation of
//! steady-state properties.
//!
//! `c_k(α) = ∫_0^T α(t) e^{-i2πkt/T} dt` is kept unnormalized. The averaged
//! coefficients `c'_k(α) = lim (1/H) ∫_0^H α(t) e^{-i2πν_k t} dt` are
//! approximated on the available horizon. Both use absolute time, so
//! segments need not start at `t = 0`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ClosedLoopSystem;
use crate::expr::EvalError;
use crate::real::Real;
use crate::simulate::{Periodicity, SteadyStateEstimate};

/// Samples per period used by the steady-state resampler.
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 2048;

/// Minimum horizon, in periods of the slowest frequency, for averaged coefficients.
pub const MIN_AVERAGING_PERIODS: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("non-uniform grid at sample {index}")]
    NonUniformGrid { index: usize },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("period {period} is not a whole number of grid steps ({dt})")]
    PeriodMismatch { period: f64, dt: f64 },
    #[error("segment covers less than one period")]
    TooShort,
    #[error("{samples} samples per period are too few for harmonic {k} (need {needed})")]
    TooFewSamples { samples: usize, k: usize, needed: usize },
    #[error("horizon {horizon} is shorter than {needed} needed for averaging")]
    HorizonTooShort { horizon: f64, needed: f64 },
    #[error("missing signal: {0}")]
    MissingSignal(String),
    #[error("invalid property: {0}")]
    InvalidProperty(String),
    #[error("error map evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Samples `values[j]` at `t0 + j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSegment<T> {
    t0: T,
    dt: T,
    values: Vec<Vec<T>>,
}

impl<T: Real> UniformSegment<T> {
    pub fn new(t0: T, dt: T, values: Vec<Vec<T>>) -> Result<Self, HarmonicsError> {
        if !(dt > T::zero()) {
            return Err(HarmonicsError::InvalidSegment("grid step must be positive".into()));
        }
        if values.len() < 2 {
            return Err(HarmonicsError::InvalidSegment("need at least two samples".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(HarmonicsError::InvalidSegment("sample dimension varies".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HarmonicsError::InvalidSegment("non-finite sample".into()));
        }
        Ok(Self { t0, dt, values })
    }

    /// Checks that `times` is uniform to a relative `1e-9`.
    pub fn from_times(times: &[T], values: Vec<Vec<T>>) -> Result<Self, HarmonicsError> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(HarmonicsError::InvalidSegment("times and values must have equal length >= 2".into()));
        }
        let n = times.len();
        let dt = (times[n - 1] - times[0]) / T::from_usize_lossy(n - 1);
        for (j, &t) in times.iter().enumerate() {
            let want = times[0] + dt * T::from_usize_lossy(j);
            if (t - want).abs() > T::lit(1e-9) * dt.max(want.abs() * T::epsilon()) {
                return Err(HarmonicsError::NonUniformGrid { index: j });
            }
        }
        Self::new(times[0], dt, values)
    }

    pub fn from_fn(t0: T, dt: T, n: usize, f: impl Fn(T) -> Vec<T>) -> Result<Self, HarmonicsError> {
        let values = (0..n).map(|j| f(t0 + dt * T::from_usize_lossy(j))).collect();
        Self::new(t0, dt, values)
    }

    /// Scalar signal sampled at `m` steps per period over `periods` periods
    /// (both endpoints included).
    pub fn periodic_scalar(period: T, m: usize, periods: usize, f: impl Fn(T) -> T) -> Result<Self, HarmonicsError> {
        let dt = period / T::from_usize_lossy(m);
        Self::from_fn(T::zero(), dt, m * periods + 1, |t| vec![f(t)])
    }

    pub fn t0(&self) -> T {
        self.t0
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }
    pub fn span(&self) -> T {
        self.dt * T::from_usize_lossy(self.len() - 1)
    }
    pub fn time(&self, j: usize) -> T {
        self.t0 + self.dt * T::from_usize_lossy(j)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Keeps the listed components.
    pub fn select(&self, comps: &[usize]) -> Self {
        let values = self.values.iter().map(|v| comps.iter().map(|&c| v[c]).collect()).collect();
        Self { t0: self.t0, dt: self.dt, values }
    }

    /// Trailing sub-segment of `n` samples.
    fn tail(&self, n: usize) -> Self {
        let start = self.len() - n;
        Self { t0: self.time(start), dt: self.dt, values: self.values[start..].to_vec() }
    }

    /// Trapezoid `∫ α(t) e^{-iωt} dt` over samples `[0, n)`.
    fn weighted_integral(&self, omega: T, n: usize) -> Vec<Complex<T>> {
        let mut acc = vec![Complex::new(T::zero(), T::zero()); self.dim()];
        for j in 0..n {
            let w = if j == 0 || j + 1 == n { T::lit(0.5) } else { T::one() };
            let ph = -omega * self.time(j);
            let rot = Complex::new(ph.cos(), ph.sin()) * (w * self.dt);
            for (a, &v) in acc.iter_mut().zip(&self.values[j]) {
                *a += rot * v;
            }
        }
        acc
    }

    /// Grid steps per period, checking that `period` is a whole number of steps.
    pub fn steps_per_period(&self, period: T) -> Result<usize, HarmonicsError> {
        let ratio = period / self.dt;
        let m = ratio.round();
        if !(m >= T::one()) || (ratio - m).abs() > T::lit(1e-6) {
            return Err(HarmonicsError::PeriodMismatch { period: period.to_f64_lossy(), dt: self.dt.to_f64_lossy() });
        }
        m.to_usize().ok_or(HarmonicsError::TooShort)
    }
}

/// `c_k` per component, averaged over all whole periods that end at the
/// segment's last sample (one period gives the plain integral).
pub fn fourier_coeff<T: Real>(seg: &UniformSegment<T>, period: T, k: usize) -> Result<Vec<Complex<T>>, HarmonicsError> {
    let m = seg.steps_per_period(period)?;
    let needed = (8 * k).max(2);
    if m < needed {
        return Err(HarmonicsError::TooFewSamples { samples: m, k, needed });
    }
    let periods = (seg.len() - 1) / m;
    if periods == 0 {
        return Err(HarmonicsError::TooShort);
    }
    let tail = seg.tail(periods * m + 1);
    let omega = T::TAU() * T::from_usize_lossy(k) / period;
    let scale = T::one() / T::from_usize_lossy(periods);
    Ok(tail.weighted_integral(omega, tail.len()).into_iter().map(|c| c * scale).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedCoeff<T> {
    pub value: Vec<Complex<T>>,
    /// `max |value(H) - value(H/2)|` over components.
    pub estimate: T,
}

/// `c'` at frequency `nu` (Hz) from the whole horizon `H`, with the
/// half-horizon value as convergence check. `reference_period` sets the
/// horizon requirement when `nu = 0`.
pub fn generalized_fourier_coeff<T: Real>(
    seg: &UniformSegment<T>,
    nu: T,
    reference_period: Option<T>,
) -> Result<GeneralizedCoeff<T>, HarmonicsError> {
    let h = seg.span();
    let slowest = if nu > T::zero() {
        T::one() / nu
    } else {
        reference_period.ok_or_else(|| HarmonicsError::InvalidProperty("nu = 0 needs a reference period".into()))?
    };
    let needed = T::lit(MIN_AVERAGING_PERIODS) * slowest;
    if h < needed * (T::one() - T::lit(1e-9)) {
        return Err(HarmonicsError::HorizonTooShort { horizon: h.to_f64_lossy(), needed: needed.to_f64_lossy() });
    }
    let omega = T::TAU() * nu;
    let n = seg.len();
    let half = (n - 1) / 2 + 1;
    let full: Vec<Complex<T>> = seg.weighted_integral(omega, n).into_iter().map(|c| c / h).collect();
    let h2 = seg.dt * T::from_usize_lossy(half - 1);
    let part: Vec<Complex<T>> = seg.weighted_integral(omega, half).into_iter().map(|c| c / h2).collect();
    let estimate = full.iter().zip(&part).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()));
    Ok(GeneralizedCoeff { value: full, estimate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `c_k`, integral over one period
    Unnormalized,
    /// `c'_k`, time average
    Averaged,
}

/// Coefficients `coeffs[k][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum<T> {
    pub convention: Convention,
    pub period: Option<T>,
    /// Frequency of every row, Hz.
    pub freqs: Vec<T>,
    pub samples_per_period: Option<usize>,
    pub coeffs: Vec<Vec<Complex<T>>>,
    /// Convergence estimates (averaged convention only).
    pub estimates: Vec<T>,
}

impl<T: Real> HarmonicSpectrum<T> {
    pub fn periodic(seg: &UniformSegment<T>, period: T, kmax: usize) -> Result<Self, HarmonicsError> {
        let coeffs = (0..=kmax).map(|k| fourier_coeff(seg, period, k)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            convention: Convention::Unnormalized,
            period: Some(period),
            freqs: (0..=kmax).map(|k| T::from_usize_lossy(k) / period).collect(),
            samples_per_period: Some(seg.steps_per_period(period)?),
            coeffs,
            estimates: Vec::new(),
        })
    }

    /// Rows for `0` followed by `freqs`.
    pub fn averaged(seg: &UniformSegment<T>, freqs: &[T]) -> Result<Self, HarmonicsError> {
        let slowest = freqs.iter().fold(T::infinity(), |m, &f| m.min(f));
        let reference = (slowest.is_finite() && slowest > T::zero()).then(|| T::one() / slowest);
        let mut all = vec![T::zero()];
        all.extend_from_slice(freqs);
        let mut coeffs = Vec::new();
        let mut estimates = Vec::new();
        for &nu in &all {
            let g = generalized_fourier_coeff(seg, nu, reference)?;
            coeffs.push(g.value);
            estimates.push(g.estimate);
        }
        Ok(Self { convention: Convention::Averaged, period: None, freqs: all, samples_per_period: None, coeffs, estimates })
    }

    /// Largest coefficient modulus over the rows and components.
    pub fn max_abs(&self) -> T {
        self.coeffs.iter().flatten().fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// CSV with header `k,component,re,im,abs` (components numbered from 1).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,component,re,im,abs")?;
        for (k, row) in self.coeffs.iter().enumerate() {
            for (c, z) in row.iter().enumerate() {
                writeln!(w, "{k},{},{:e},{:e},{:e}", c + 1, z.re.to_f64_lossy(), z.im.to_f64_lossy(), z.norm().to_f64_lossy())?;
            }
        }
        Ok(())
    }
}

/// Steady-state property with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    #[serde(flatten)]
    pub kind: PropertyKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PropertyKind {
    /// Steady states stay in the box `[lo, hi]`.
    #[serde(rename = "P_A")]
    SetMembership { lo: Vec<f64>, hi: Vec<f64> },
    /// Steady states are equilibria.
    #[serde(rename = "P_eq")]
    Equilibrium,
    /// `e ≡ 0`.
    #[serde(rename = "P_0")]
    Regulation,
    /// `sup |e| ≤ ε`.
    #[serde(rename = "P_eps")]
    Approximate { eps: f64 },
    /// Zero-mean error.
    #[serde(rename = "P_DC")]
    ZeroMean,
    /// `η` not T-periodic, or `c_k(e) = 0` for `k ≤ d`.
    #[serde(rename = "P_T_weak")]
    HarmonicWeak { period: f64, d: usize },
    /// `c_k(e) = 0` for `k ≤ d`.
    #[serde(rename = "P_T")]
    Harmonic { period: f64, d: usize },
    /// `c'(η)` does not exist, or `c'_k(e) = 0` for `ν ∈ {0} ∪ freqs`.
    #[serde(rename = "P_nu_weak")]
    FrequencyWeak { freqs: Vec<f64> },
    /// `c'_k(e) = 0` for `ν ∈ {0} ∪ freqs`.
    #[serde(rename = "P_nu")]
    Frequency { freqs: Vec<f64> },
}

impl PropertyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PropertyKind::SetMembership { .. } => "P_A",
            PropertyKind::Equilibrium => "P_eq",
            PropertyKind::Regulation => "P_0",
            PropertyKind::Approximate { .. } => "P_eps",
            PropertyKind::ZeroMean => "P_DC",
            PropertyKind::HarmonicWeak { .. } => "P_T_weak",
            PropertyKind::Harmonic { .. } => "P_T",
            PropertyKind::FrequencyWeak { .. } => "P_nu_weak",
            PropertyKind::Frequency { .. } => "P_nu",
        }
    }
}

impl PropertySpec {
    pub fn new(kind: PropertyKind, tolerance: f64) -> Self {
        Self { kind, tolerance }
    }

    pub fn validate(&self) -> Result<(), HarmonicsError> {
        let bad = |m: &str| Err(HarmonicsError::InvalidProperty(m.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        match &self.kind {
            PropertyKind::SetMembership { lo, hi } if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a > b) => {
                bad("box bounds are inconsistent")
            }
            PropertyKind::Approximate { eps } if !(*eps >= 0.0) => bad("eps must be non-negative"),
            PropertyKind::HarmonicWeak { period, .. } | PropertyKind::Harmonic { period, .. } if !(*period > 0.0) => {
                bad("period must be positive")
            }
            PropertyKind::FrequencyWeak { freqs } | PropertyKind::Frequency { freqs }
                if freqs.is_empty() || freqs.iter().any(|f| !(*f > 0.0)) =>
            {
                bad("frequency list must be non-empty and positive")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: String,
    pub holds: bool,
    /// The property holds only through its "or" clause (internal-model
    /// state not periodic / coefficients not convergent).
    pub vacuous: bool,
    pub metric: f64,
    pub threshold: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Signals a property is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySignals<T> {
    pub states: Option<UniformSegment<T>>,
    pub error: UniformSegment<T>,
    pub eta: Option<UniformSegment<T>>,
    /// Periodicity verdict of the whole state.
    pub periodicity: Periodicity,
}

impl<T: Real> SteadySignals<T> {
    /// Reconstructs `e` through the closed loop's error map.
    pub fn from_estimate(ss: &SteadyStateEstimate<T>, sys: &ClosedLoopSystem) -> Result<Self, HarmonicsError> {
        let states = UniformSegment::new(ss.t0, ss.dt, ss.samples.clone())?;
        let e = ss.samples.iter().map(|z| sys.eval_error(z)).collect::<Result<Vec<_>, _>>()?;
        let error = UniformSegment::new(ss.t0, ss.dt, e)?;
        let eta = sys.internal_model_range().map(|r| states.select(&r.collect::<Vec<_>>()));
        Ok(Self { states: Some(states), error, eta, periodicity: ss.verdict })
    }

    /// Error-only signals, e.g. synthetic test segments.
    pub fn from_error(error: UniformSegment<T>, periodicity: Periodicity) -> Self {
        Self { states: None, error, eta: None, periodicity }
    }
}

struct Outcome {
    metric: f64,
    scale: f64,
    vacuous: bool,
    /// forced failure (e.g. strong periodic property on an aperiodic tail)
    falsified: bool,
    absolute: bool,
    extra: BTreeMap<String, f64>,
}

fn shift_sup<T: Real>(seg: &UniformSegment<T>, lag: usize) -> T {
    let v = seg.values();
    let mut m = T::zero();
    for i in 0..v.len().saturating_sub(lag) {
        for (a, b) in v[i].iter().zip(&v[i + lag]) {
            m = m.max((*a - *b).abs());
        }
    }
    m
}

fn harmonic_metric<T: Real>(e: &UniformSegment<T>, period: T, d: usize, extra: &mut BTreeMap<String, f64>) -> Result<T, HarmonicsError> {
    let mut worst = T::zero();
    for k in 0..=d {
        let c = fourier_coeff(e, period, k)?;
        let mag = c.iter().fold(T::zero(), |m, z| m.max(z.norm()));
        extra.insert(format!("abs_c{k}"), mag.to_f64_lossy());
        worst = worst.max(mag);
    }
    // first harmonic outside the model, for diagnostics only
    if let Ok(c) = fourier_coeff(e, period, d + 1) {
        let mag = c.iter().fold(T::zero(), |m, z| m.max(z.norm()));
        extra.insert(format!("abs_c{}", d + 1), mag.to_f64_lossy());
    }
    Ok(worst)
}

fn averaged_metric<T: Real>(
    seg: &UniformSegment<T>,
    freqs: &[T],
    label: &str,
    extra: &mut BTreeMap<String, f64>,
) -> Result<(T, T), HarmonicsError> {
    let spec = HarmonicSpectrum::averaged(seg, freqs)?;
    let mut worst = T::zero();
    for (k, row) in spec.coeffs.iter().enumerate() {
        let mag = row.iter().fold(T::zero(), |m, z| m.max(z.norm()));
        extra.insert(format!("{label}abs_c{k}_avg"), mag.to_f64_lossy());
        worst = worst.max(mag);
    }
    let est = spec.estimates.iter().fold(T::zero(), |m, &v| m.max(v));
    Ok((worst, est))
}

/// Evaluates `prop` on steady-state signals. `periodicity_tol` is the
/// relative tolerance for the internal-model periodicity test of `P_T_weak`.
pub fn evaluate_signals<T: Real>(
    prop: &PropertySpec,
    sig: &SteadySignals<T>,
    periodicity_tol: f64,
) -> Result<PropertyVerdict, HarmonicsError> {
    prop.validate()?;
    let e = &sig.error;
    let sup_e = e.sup_norm();
    let scale_e = (T::one() + sup_e).to_f64_lossy();
    let states = || sig.states.as_ref().ok_or_else(|| HarmonicsError::MissingSignal("state samples".into()));
    let eta = || sig.eta.as_ref().ok_or_else(|| HarmonicsError::MissingSignal("internal-model state".into()));
    let mut extra = BTreeMap::new();
    extra.insert("sup_e".to_string(), sup_e.to_f64_lossy());
    let base = |metric: T, scale: f64, extra: BTreeMap<String, f64>| Outcome {
        metric: metric.to_f64_lossy(),
        scale,
        vacuous: false,
        falsified: false,
        absolute: false,
        extra,
    };
    let out = match &prop.kind {
        PropertyKind::SetMembership { lo, hi } => {
            let x = states()?;
            if lo.len() != x.dim() {
                return Err(HarmonicsError::InvalidProperty(format!("box has dimension {}, state has {}", lo.len(), x.dim())));
            }
            let mut worst = T::zero();
            for z in x.values() {
                let d2 = z.iter().zip(lo.iter().zip(hi)).fold(T::zero(), |acc, (&v, (&a, &b))| {
                    let gap = (T::lit(a) - v).max(v - T::lit(b)).max(T::zero());
                    acc + gap * gap
                });
                worst = worst.max(d2.sqrt());
            }
            base(worst, (T::one() + x.sup_norm()).to_f64_lossy(), extra)
        }
        PropertyKind::Equilibrium => {
            let x = states()?;
            let mut worst = T::zero();
            for c in 0..x.dim() {
                let (lo, hi) = x.values().iter().fold((T::infinity(), T::neg_infinity()), |(a, b), v| (a.min(v[c]), b.max(v[c])));
                worst = worst.max(hi - lo);
            }
            base(worst, (T::one() + x.sup_norm()).to_f64_lossy(), extra)
        }
        PropertyKind::Regulation => base(sup_e, scale_e, extra),
        PropertyKind::Approximate { eps } => {
            extra.insert("eps".into(), *eps);
            let mut o = base(sup_e, 1.0, extra);
            o.absolute = true;
            o
        }
        PropertyKind::ZeroMean => {
            // trapezoid mean over the whole segment
            let n = e.len();
            let mut acc = vec![T::zero(); e.dim()];
            for (j, v) in e.values().iter().enumerate() {
                let w = if j == 0 || j + 1 == n { T::lit(0.5) } else { T::one() };
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += w * x;
                }
            }
            let norm = T::from_usize_lossy(n - 1);
            let mean = acc.iter().fold(T::zero(), |m, &a| m.max((a / norm).abs()));
            base(mean, scale_e, extra)
        }
        PropertyKind::HarmonicWeak { period, d } => {
            let p = T::lit(*period);
            let eta = eta()?;
            let lag = eta.steps_per_period(p)?;
            let drift = shift_sup(eta, lag);
            let eta_scale = T::one() + eta.sup_norm();
            extra.insert("eta_periodicity".into(), (drift / eta_scale).to_f64_lossy());
            if eta.len() <= lag || drift > T::lit(periodicity_tol) * eta_scale {
                let mut o = base(T::zero(), scale_e, extra);
                o.vacuous = true;
                o
            } else {
                let m = harmonic_metric(e, p, *d, &mut extra)?;
                base(m, scale_e, extra)
            }
        }
        PropertyKind::Harmonic { period, d } => {
            let m = harmonic_metric(e, T::lit(*period), *d, &mut extra)?;
            let mut o = base(m, scale_e, extra);
            o.falsified = !sig.periodicity.is_periodic();
            o
        }
        PropertyKind::FrequencyWeak { freqs } => {
            let f: Vec<T> = freqs.iter().map(|&v| T::lit(v)).collect();
            let eta = eta()?;
            let (_, est) = averaged_metric(eta, &f, "eta_", &mut extra)?;
            let eta_scale = T::one() + eta.sup_norm();
            extra.insert("eta_convergence".into(), (est / eta_scale).to_f64_lossy());
            if est > T::lit(prop.tolerance) * eta_scale {
                let mut o = base(T::zero(), scale_e, extra);
                o.vacuous = true;
                o
            } else {
                let (m, _) = averaged_metric(e, &f, "", &mut extra)?;
                base(m, scale_e, extra)
            }
        }
        PropertyKind::Frequency { freqs } => {
            let f: Vec<T> = freqs.iter().map(|&v| T::lit(v)).collect();
            let (m, est) = averaged_metric(e, &f, "", &mut extra)?;
            extra.insert("convergence".into(), est.to_f64_lossy());
            base(m, scale_e, extra)
        }
    };
    let threshold = match &prop.kind {
        PropertyKind::Approximate { eps } if out.absolute => *eps,
        _ => prop.tolerance * out.scale,
    };
    let holds = out.vacuous || (!out.falsified && out.metric <= threshold);
    let mut metrics = out.extra;
    metrics.insert("scale".into(), out.scale);
    Ok(PropertyVerdict {
        property: prop.kind.name().to_string(),
        holds,
        vacuous: out.vacuous,
        metric: out.metric,
        threshold,
        metrics,
    })
}

/// Evaluates `prop` on a steady-state estimate of `sys`.
pub fn evaluate_property<T: Real>(
    prop: &PropertySpec,
    ss: &SteadyStateEstimate<T>,
    sys: &ClosedLoopSystem,
    periodicity_tol: f64,
) -> Result<PropertyVerdict, HarmonicsError> {
    let sig = SteadySignals::from_estimate(ss, sys)?;
    evaluate_signals(prop, &sig, periodicity_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn one_period(f: impl Fn(f64) -> f64) -> UniformSegment<f64> {
        UniformSegment::periodic_scalar(TAU, DEFAULT_SAMPLES_PER_PERIOD, 1, f).unwrap()
    }

    #[test]
    fn fourier_examples() {
        let c = fourier_coeff(&one_period(f64::cos), TAU, 1).unwrap()[0];
        assert!((c.re - PI).abs() < 1e-12 && c.im.abs() < 1e-12);
        let c = fourier_coeff(&one_period(|_| 1.0), TAU, 0).unwrap()[0];
        assert!((c.re - TAU).abs() < 1e-12);
        let c = fourier_coeff(&one_period(|t| (2.0 * t).sin()), TAU, 1).unwrap()[0];
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn fourier_preconditions() {
        let seg = UniformSegment::periodic_scalar(TAU, 16, 1, f64::sin).unwrap();
        assert!(matches!(fourier_coeff(&seg, TAU, 3), Err(HarmonicsError::TooFewSamples { .. })));
        assert!(matches!(fourier_coeff(&seg, 1.0, 1), Err(HarmonicsError::PeriodMismatch { .. })));
        let times = [0.0, 0.1, 0.25, 0.3];
        let vals = times.iter().map(|&t| vec![t]).collect();
        assert!(matches!(UniformSegment::from_times(&times, vals), Err(HarmonicsError::NonUniformGrid { index: 2 })));
    }

    #[test]
    fn generalized_examples() {
        let nu: f64 = 0.5;
        let dt = 1.0 / (nu * 512.0);
        let seg = UniformSegment::from_fn(0.0, dt, 512 * 40 + 1, |t| vec![(TAU * nu * t).cos()]).unwrap();
        let g = generalized_fourier_coeff(&seg, nu, None).unwrap();
        assert!((g.value[0].re - 0.5).abs() <= g.estimate.max(1e-6));
        let konst = UniformSegment::<f64>::from_fn(0.0, 0.01, 5001, |_| vec![3.0]).unwrap();
        let g = generalized_fourier_coeff(&konst, 0.0, Some(1.0)).unwrap();
        assert!((g.value[0].re - 3.0).abs() < 1e-12);
        let h = seg.span();
        let other = nu + 3.0 / h;
        let g = generalized_fourier_coeff(&seg, other, None).unwrap();
        assert!(g.value[0].norm() <= 2.0 / (TAU * (other - nu).abs() * h));
        assert!(matches!(
            generalized_fourier_coeff(&konst, 0.1, None),
            Err(HarmonicsError::HorizonTooShort { .. })
        ));
    }

    fn error_only(f: impl Fn(f64) -> f64) -> SteadySignals<f64> {
        let seg = UniformSegment::periodic_scalar(TAU, DEFAULT_SAMPLES_PER_PERIOD, 3, f).unwrap();
        SteadySignals::from_error(seg, Periodicity::Periodic { period: TAU })
    }

    #[test]
    fn property_examples() {
        let zero = error_only(|_| 0.0);
        let v = evaluate_signals(&PropertySpec::new(PropertyKind::Regulation, 1e-9), &zero, 1e-6).unwrap();
        assert!(v.holds && v.metric == 0.0);

        let sig = error_only(|t| 0.1 * (2.0 * t).sin());
        let pt = PropertySpec::new(PropertyKind::Harmonic { period: TAU, d: 1 }, 1e-3);
        let v = evaluate_signals(&pt, &sig, 1e-6).unwrap();
        assert!(v.holds && v.metric <= 1e-9, "{v:?}");
        let eps = PropertySpec::new(PropertyKind::Approximate { eps: 0.05 }, 1e-3);
        assert!(!evaluate_signals(&eps, &sig, 1e-6).unwrap().holds);

        let dc = error_only(|t| 0.2 + t.sin());
        let v = evaluate_signals(&PropertySpec::new(PropertyKind::ZeroMean, 1e-3), &dc, 1e-6).unwrap();
        assert!(!v.holds && (v.metric - 0.2).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn strong_periodic_property_fails_on_aperiodic_tail() {
        let mut sig = error_only(|t| 0.1 * (2.0 * t).sin());
        sig.periodicity = Periodicity::Aperiodic;
        let pt = PropertySpec::new(PropertyKind::Harmonic { period: TAU, d: 1 }, 1e-3);
        assert!(!evaluate_signals(&pt, &sig, 1e-6).unwrap().holds);
    }

    #[test]
    fn weak_property_is_vacuous_for_non_periodic_eta() {
        let seg = |f: &dyn Fn(f64) -> f64| UniformSegment::periodic_scalar(TAU, 256, 4, f).unwrap();
        let sig = SteadySignals {
            states: None,
            error: seg(&|t| t.sin()),
            eta: Some(seg(&|t| (t / 3.0).sin())),
            periodicity: Periodicity::Aperiodic,
        };
        let p = PropertySpec::new(PropertyKind::HarmonicWeak { period: TAU, d: 1 }, 1e-3);
        let v = evaluate_signals(&p, &sig, 1e-6).unwrap();
        assert!(v.holds && v.vacuous);
        let periodic_eta = SteadySignals { eta: Some(seg(&|t| t.cos())), ..sig };
        let v = evaluate_signals(&p, &periodic_eta, 1e-6).unwrap();
        assert!(!v.holds && !v.vacuous);
        assert!(evaluate_signals(&p, &error_only(f64::sin), 1e-6).is_err());
    }

    #[test]
    fn property_spec_json() {
        let p: PropertySpec = serde_json::from_str(r#"{"kind":"P_T","period":6.283185307179586,"d":1,"tolerance":0.001}"#).unwrap();
        assert_eq!(p.kind, PropertyKind::Harmonic { period: TAU, d: 1 });
        let q: PropertySpec = serde_json::from_str(r#"{"kind":"P_0"}"#).unwrap();
        assert_eq!(q.tolerance, 1e-3);
        assert!(PropertySpec::new(PropertyKind::Regulation, 0.0).validate().is_err());
    }

    #[test]
    fn spectrum_csv() {
        let seg = one_period(|t| 1.0 + t.cos());
        let s = HarmonicSpectrum::periodic(&seg, TAU, 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,component,re,im,abs\n0,1,"));
        assert_eq!(text.lines().count(), 4);
    }
}

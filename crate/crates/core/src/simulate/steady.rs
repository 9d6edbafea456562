//! Steady-state extraction from a finite trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::integrator::Trajectory;
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyStateError {
    #[error("trajectory too short: spans {span}, needs at least {needed}")]
    TooShort { span: f64, needed: f64 },
    #[error("invalid steady-state options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateOptions {
    /// Fraction of the trajectory, counted from the end, treated as the tail.
    pub tail_fraction: f64,
    /// Relative periodicity tolerance.
    pub tol: f64,
    pub samples_per_period: usize,
    /// Period reported for a (numerically) constant tail when no hint is given.
    pub default_period: f64,
    /// Shortest trajectory accepted without a period hint.
    pub min_horizon: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tail_fraction: 0.5,
            tol: 1e-6,
            samples_per_period: 2048,
            default_period: 1.0,
            min_horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Periodicity {
    Periodic { period: f64 },
    Aperiodic,
    Undecided,
}

impl Periodicity {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Periodicity::Periodic { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateEstimate<T> {
    /// First trajectory grid index inside the tail.
    pub tail_start: usize,
    pub t_tail: T,
    /// Time of `samples[0]`.
    pub t0: T,
    pub dt: T,
    /// Uniform resample ending at the trajectory's final time.
    pub samples: Vec<Vec<T>>,
    /// Period used for the metric (hint, detected, or `None`).
    pub period: Option<T>,
    /// Whole periods covered by `samples` (0 when no period was used).
    pub periods: usize,
    pub verdict: Periodicity,
    /// sup over the tail of |x(t) - x(t+T)| (max-abs norm).
    pub metric: T,
    /// `1 + sup |x|` over the tail.
    pub scale: T,
}

impl<T: Real> SteadyStateEstimate<T> {
    pub fn relative_metric(&self) -> T {
        self.metric / self.scale
    }

    /// Times of the resample grid.
    pub fn sample_times(&self) -> Vec<T> {
        (0..self.samples.len()).map(|i| self.t0 + self.dt * T::from_usize_lossy(i)).collect()
    }

    /// Samples per period of the resample grid, when a period was used.
    pub fn samples_per_period(&self) -> Option<usize> {
        (self.periods > 0).then(|| (self.samples.len() - 1) / self.periods)
    }

    /// Component `k` of the resample.
    pub fn component(&self, k: usize) -> Vec<T> {
        self.samples.iter().map(|s| s[k]).collect()
    }
}

fn sup_abs<T: Real>(s: &[Vec<T>]) -> T {
    s.iter().flatten().fold(T::zero(), |m, &v| m.max(v.abs()))
}

fn resample<T: Real>(traj: &Trajectory<T>, t0: T, dt: T, count: usize) -> Vec<Vec<T>> {
    let end = traj.t_end();
    (0..count)
        .map(|i| {
            let t = if i + 1 == count { end } else { t0 + dt * T::from_usize_lossy(i) };
            traj.sample(t)
        })
        .collect()
}

/// sup_i |x_i - x_{i+lag}| in the max-abs norm.
fn shift_metric<T: Real>(s: &[Vec<T>], lag: usize) -> T {
    let mut m = T::zero();
    for i in 0..s.len().saturating_sub(lag) {
        for (a, b) in s[i].iter().zip(&s[i + lag]) {
            m = m.max((*a - *b).abs());
        }
    }
    m
}

fn classify<T: Real>(metric: T, scale: T, tol: f64, period: T) -> Periodicity {
    let bound = T::lit(tol) * scale;
    if metric <= bound {
        Periodicity::Periodic { period: period.to_f64_lossy() }
    } else if metric <= T::lit(10.0) * bound {
        Periodicity::Undecided
    } else {
        Periodicity::Aperiodic
    }
}

fn with_period<T: Real>(
    traj: &Trajectory<T>,
    tail_start_t: T,
    period: T,
    opts: &SteadyStateOptions,
) -> Option<SteadyStateEstimate<T>> {
    let span = traj.t_end() - tail_start_t;
    let periods = (span / period).floor().to_usize()?;
    if periods < 2 {
        return None;
    }
    let m = opts.samples_per_period;
    let dt = period / T::from_usize_lossy(m);
    let t0 = traj.t_end() - period * T::from_usize_lossy(periods);
    let samples = resample(traj, t0, dt, periods * m + 1);
    let metric = shift_metric(&samples, m);
    let scale = T::one() + sup_abs(&samples);
    Some(SteadyStateEstimate {
        tail_start: 0,
        t_tail: tail_start_t,
        t0,
        dt,
        samples,
        period: Some(period),
        periods,
        verdict: classify(metric, scale, opts.tol, period),
        metric,
        scale,
    })
}

/// Mean-square mismatch between the tail and its shift by `tau`, on dense samples.
fn mean_square_shift<T: Real>(traj: &Trajectory<T>, t0: T, t1: T, tau: T, points: usize) -> T {
    let h = (t1 - t0 - tau) / T::from_usize_lossy(points);
    let mut acc = T::zero();
    for i in 0..points {
        let t = t0 + h * T::from_usize_lossy(i);
        let a = traj.sample(t);
        let b = traj.sample(t + tau);
        acc += a.iter().zip(&b).fold(T::zero(), |s, (x, y)| s + (*x - *y) * (*x - *y));
    }
    acc / T::from_usize_lossy(points)
}

fn golden_section<T: Real>(mut a: T, mut b: T, f: impl Fn(T) -> T) -> T {
    let g = T::lit(0.5 * (5f64.sqrt() - 1.0));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= T::epsilon() * T::lit(16.0) * b.abs() {
            break;
        }
    }
    T::lit(0.5) * (a + b)
}

/// Candidate periods from the normalized autocorrelation of the mean-removed tail.
fn period_candidates<T: Real>(grid: &[Vec<T>], dt: T) -> Vec<T> {
    let n = grid.len();
    let dim = grid[0].len();
    let mut mean = vec![T::zero(); dim];
    for s in grid {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += *v;
        }
    }
    for m in &mut mean {
        *m /= T::from_usize_lossy(n);
    }
    let x: Vec<Vec<T>> = grid.iter().map(|s| s.iter().zip(&mean).map(|(v, m)| *v - *m).collect()).collect();
    let dot = |i: usize, j: usize| x[i].iter().zip(&x[j]).fold(T::zero(), |a, (p, q)| a + *p * *q);
    let var = (0..n).fold(T::zero(), |a, i| a + dot(i, i)) / T::from_usize_lossy(n);
    if var <= T::zero() {
        return Vec::new();
    }
    let max_lag = n / 2;
    let r: Vec<T> = (0..=max_lag)
        .map(|lag| {
            let c = (0..n - lag).fold(T::zero(), |a, i| a + dot(i, i + lag));
            c / T::from_usize_lossy(n - lag) / var
        })
        .collect();
    let Some(first_low) = r.iter().position(|&v| v < T::lit(0.5)) else {
        return Vec::new();
    };
    let peak = r[first_low..].iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut out = Vec::new();
    for lag in first_low.max(1)..max_lag {
        if r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= T::lit(0.9) * peak {
            out.push(dt * T::from_usize_lossy(lag));
        }
    }
    out
}

/// Extracts the tail of `traj` and decides whether it is periodic.
///
/// With a hint the period is fixed; otherwise a constant tail is reported as
/// periodic with `opts.default_period`, and oscillating tails get their period
/// from the autocorrelation peak refined by golden-section search.
pub fn estimate_steady_state<T: Real>(
    traj: &Trajectory<T>,
    t_hint: Option<T>,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateEstimate<T>, SteadyStateError> {
    if !(opts.tail_fraction > 0.0 && opts.tail_fraction <= 1.0) {
        return Err(SteadyStateError::InvalidOptions("tail_fraction must lie in (0, 1]".into()));
    }
    if opts.samples_per_period < 8 || !(opts.tol > 0.0) {
        return Err(SteadyStateError::InvalidOptions("need tol > 0 and at least 8 samples per period".into()));
    }
    let span = traj.t_end() - traj.t_start();
    let needed = match t_hint {
        Some(p) if !(p > T::zero()) => {
            return Err(SteadyStateError::InvalidOptions("period hint must be positive".into()))
        }
        Some(p) => p * T::lit(10.0),
        None => T::lit(opts.min_horizon),
    };
    if span < needed * (T::one() - T::lit(1e-12)) {
        return Err(SteadyStateError::TooShort { span: span.to_f64_lossy(), needed: needed.to_f64_lossy() });
    }
    let t_tail = traj.t_end() - span * T::lit(opts.tail_fraction);
    let tail_start = traj.times().partition_point(|&t| t < t_tail);
    let too_short = || SteadyStateError::TooShort {
        span: (span * T::lit(opts.tail_fraction)).to_f64_lossy(),
        needed: 2.0 * t_hint.map_or(opts.default_period, |p| p.to_f64_lossy()),
    };

    if let Some(p) = t_hint {
        let mut est = with_period(traj, t_tail, p, opts).ok_or_else(too_short)?;
        est.tail_start = tail_start;
        return Ok(est);
    }

    let tail_len = traj.t_end() - t_tail;
    let count = 4096;
    let dt = tail_len / T::from_usize_lossy(count - 1);
    let grid = resample(traj, t_tail, dt, count);
    let scale = T::one() + sup_abs(&grid);
    let mut lo = grid[0].clone();
    let mut hi = grid[0].clone();
    for s in &grid {
        for k in 0..s.len() {
            lo[k] = lo[k].min(s[k]);
            hi[k] = hi[k].max(s[k]);
        }
    }
    let spread = lo.iter().zip(&hi).fold(T::zero(), |m, (a, b)| m.max(*b - *a));
    if spread <= T::lit(opts.tol) * scale {
        let p = T::lit(opts.default_period);
        if let Some(mut est) = with_period(traj, t_tail, p, opts) {
            est.tail_start = tail_start;
            return Ok(est);
        }
        return Ok(SteadyStateEstimate {
            tail_start,
            t_tail,
            t0: t_tail,
            dt,
            samples: grid,
            period: Some(p),
            periods: 0,
            verdict: Periodicity::Periodic { period: opts.default_period },
            metric: spread,
            scale,
        });
    }

    let mut best: Option<SteadyStateEstimate<T>> = None;
    for cand in period_candidates(&grid, dt) {
        let refined = golden_section(cand - dt, cand + dt, |tau| {
            mean_square_shift(traj, t_tail, traj.t_end(), tau, 2048)
        });
        let Some(mut est) = with_period(traj, t_tail, refined, opts) else { continue };
        est.tail_start = tail_start;
        let done = est.verdict.is_periodic();
        if best.as_ref().is_none_or(|b| est.relative_metric() < b.relative_metric()) {
            best = Some(est);
        }
        if done {
            break;
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    Ok(SteadyStateEstimate {
        tail_start,
        t_tail,
        t0: t_tail,
        dt,
        samples: grid,
        period: None,
        periods: 0,
        verdict: Periodicity::Aperiodic,
        metric: spread,
        scale,
    })
}

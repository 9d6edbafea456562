//! Dormand–Prince 5(4) with step-size control and 4th-order dense output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ClosedLoopSystem;
use crate::expr::EvalError;
use crate::real::Real;

/// Right-hand side `ż = F(t, z)`.
pub trait VectorField<T> {
    fn dim(&self) -> usize;
    fn eval(&self, t: T, z: &[T], out: &mut [T]) -> Result<(), EvalError>;
}

impl<T: Real> VectorField<T> for ClosedLoopSystem {
    fn dim(&self) -> usize {
        ClosedLoopSystem::dim(self)
    }
    fn eval(&self, _t: T, z: &[T], out: &mut [T]) -> Result<(), EvalError> {
        self.eval_field(z, out)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T, F: Fn(T, &[T], &mut [T])> VectorField<T> for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: T, z: &[T], out: &mut [T]) -> Result<(), EvalError> {
        (self.f)(t, z, out);
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("invalid integration request: {0}")]
    InvalidInput(String),
    #[error("step size underflow at t = {t}: probable finite escape, solution is not complete")]
    FiniteEscape { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("vector field evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest admissible step; `None` means the whole interval.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-11, max_step: None, max_steps: 5_000_000 }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted states on the integrator's own grid, plus the dense-output
/// polynomial of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<Vec<T>>,
    // five coefficient vectors per step, flattened
    dense: Vec<Vec<T>>,
    stats: IntegratorStats,
}

impl<T: Real> Trajectory<T> {
    /// Trajectory without dense output; sampling between grid points falls
    /// back to linear interpolation.
    pub fn from_samples(times: Vec<T>, states: Vec<Vec<T>>) -> Result<Self, IntegrationError> {
        if times.is_empty() || times.len() != states.len() {
            return Err(IntegrationError::InvalidInput("times and states must be non-empty and of equal length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IntegrationError::InvalidInput("times must be strictly increasing".into()));
        }
        let n = states[0].len();
        if states.iter().any(|s| s.len() != n) {
            return Err(IntegrationError::InvalidInput("state dimension changes along the trajectory".into()));
        }
        Ok(Self { times, states, dense: Vec::new(), stats: IntegratorStats::default() })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }
    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }
    pub fn stats(&self) -> IntegratorStats {
        self.stats
    }
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn t_start(&self) -> T {
        self.times[0]
    }
    pub fn t_end(&self) -> T {
        *self.times.last().expect("non-empty trajectory")
    }
    pub fn last_state(&self) -> &[T] {
        self.states.last().expect("non-empty trajectory")
    }
    pub fn has_dense_output(&self) -> bool {
        !self.dense.is_empty()
    }

    /// Same trajectory with every time shifted by `dt`.
    pub fn shifted(&self, dt: T) -> Self {
        let mut out = self.clone();
        for t in &mut out.times {
            *t += dt;
        }
        out
    }

    /// State at time `t`, clamped to the covered interval.
    pub fn sample(&self, t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.sample_into(t, &mut out);
        out
    }

    pub fn sample_into(&self, t: T, out: &mut [T]) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            out.copy_from_slice(&self.states[0]);
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(&self.states[n - 1]);
            return;
        }
        // segment i covers [times[i], times[i+1]]
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = (t - t0) / (t1 - t0);
        if self.dense.is_empty() {
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.states[i][k] + s * (self.states[i + 1][k] - self.states[i][k]);
            }
            return;
        }
        let d = &self.dense[i];
        let dim = out.len();
        let s1 = T::one() - s;
        for (k, o) in out.iter_mut().enumerate() {
            let r = |j: usize| d[j * dim + k];
            *o = r(0) + s * (r(1) + s1 * (r(2) + s * (r(3) + s1 * r(4))));
        }
    }

    /// Grid states with time `≥ t`, preceded by the dense sample at `t`.
    pub fn tail_from(&self, t: T) -> Vec<Vec<T>> {
        let start = self.times.partition_point(|&s| s < t);
        let mut out = Vec::with_capacity(self.len() - start + 1);
        if start == self.len() || self.times[start] > t {
            out.push(self.sample(t));
        }
        out.extend(self.states[start..].iter().cloned());
        out
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stepper<'a, T, F: ?Sized> {
    f: &'a F,
    n: usize,
    evals: usize,
    k: [Vec<T>; 7],
    tmp: Vec<T>,
}

impl<T: Real, F: VectorField<T> + ?Sized> Stepper<'_, T, F> {
    fn rhs(&mut self, t: T, stage: usize) -> Result<(), EvalError> {
        self.evals += 1;
        let (tmp, k) = (&self.tmp, &mut self.k);
        self.f.eval(t, tmp, &mut k[stage])
    }

    fn combine(&mut self, y: &[T], h: T, coeffs: &[(usize, f64)]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for &(s, c) in coeffs {
                acc += T::lit(c) * self.k[s][i];
            }
            self.tmp[i] = y[i] + h * acc;
        }
    }

    /// Stages 2..7 given `k[0] = F(t, y)`. Leaves the 5th-order solution in
    /// `tmp` and `F` at it in `k[6]`.
    fn step(&mut self, t: T, y: &[T], h: T) -> Result<(), EvalError> {
        self.combine(y, h, &[(0, A21)]);
        self.rhs(t + T::lit(C2) * h, 1)?;
        self.combine(y, h, &[(0, A31), (1, A32)]);
        self.rhs(t + T::lit(C3) * h, 2)?;
        self.combine(y, h, &[(0, A41), (1, A42), (2, A43)]);
        self.rhs(t + T::lit(C4) * h, 3)?;
        self.combine(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        self.rhs(t + T::lit(C5) * h, 4)?;
        self.combine(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        self.rhs(t + h, 5)?;
        self.combine(y, h, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        self.rhs(t + h, 6)?;
        Ok(())
    }

    fn error_norm(&self, y: &[T], h: T, rtol: T, atol: T) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            let k = &self.k;
            let e = h
                * (T::lit(E1) * k[0][i]
                    + T::lit(E3) * k[2][i]
                    + T::lit(E4) * k[3][i]
                    + T::lit(E5) * k[4][i]
                    + T::lit(E6) * k[5][i]
                    + T::lit(E7) * k[6][i]);
            let sk = atol + rtol * y[i].abs().max(self.tmp[i].abs());
            acc += (e / sk) * (e / sk);
        }
        (acc / T::from_usize_lossy(self.n.max(1))).sqrt()
    }

    fn dense_coeffs(&self, y: &[T], h: T) -> Vec<T> {
        let n = self.n;
        let mut d = vec![T::zero(); 5 * n];
        let k = &self.k;
        for i in 0..n {
            let ydiff = self.tmp[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            d[i] = y[i];
            d[n + i] = ydiff;
            d[2 * n + i] = bspl;
            d[3 * n + i] = ydiff - h * k[6][i] - bspl;
            d[4 * n + i] = h
                * (T::lit(D1) * k[0][i]
                    + T::lit(D3) * k[2][i]
                    + T::lit(D4) * k[3][i]
                    + T::lit(D5) * k[4][i]
                    + T::lit(D6) * k[5][i]
                    + T::lit(D7) * k[6][i]);
        }
        d
    }
}

fn rms<T: Real>(v: &[T], scale: &[T]) -> T {
    let s = v.iter().zip(scale).fold(T::zero(), |a, (&x, &s)| a + (x / s) * (x / s));
    (s / T::from_usize_lossy(v.len().max(1))).sqrt()
}

/// Integrates `ż = F(t, z)` from `(t0, z0)` to `t_end`.
pub fn integrate_from<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    t0: T,
    z0: &[T],
    t_end: T,
    opts: &IntegratorOptions,
) -> Result<Trajectory<T>, IntegrationError> {
    let n = f.dim();
    if z0.len() != n {
        return Err(IntegrationError::InvalidInput(format!(
            "initial state has dimension {}, system has {n}",
            z0.len()
        )));
    }
    if !(t_end > t0) {
        return Err(IntegrationError::InvalidInput("t_end must exceed the start time".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(IntegrationError::InvalidInput("tolerances must be positive".into()));
    }
    if z0.iter().any(|x| !x.is_finite()) {
        return Err(IntegrationError::NonFinite { t: t0.to_f64_lossy() });
    }
    let (rtol, atol) = (T::lit(opts.rtol), T::lit(opts.atol));
    let span = t_end - t0;
    let h_max = opts.max_step.map(T::lit).unwrap_or(span).min(span);

    let mut st = Stepper {
        f,
        n,
        evals: 0,
        k: std::array::from_fn(|_| vec![T::zero(); n]),
        tmp: vec![T::zero(); n],
    };
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![z0.to_vec()],
        dense: Vec::new(),
        stats: IntegratorStats::default(),
    };
    let mut y = z0.to_vec();
    let mut t = t0;
    st.tmp.copy_from_slice(&y);
    st.rhs(t, 0)?;

    // initial step guess
    let sk: Vec<T> = y.iter().map(|&v| atol + rtol * v.abs()).collect();
    let dnf = rms(&st.k[0], &sk);
    let dny = rms(&y, &sk);
    let small = T::lit(1e-10);
    let mut h = if dnf <= small || dny <= small { T::lit(1e-6) } else { T::lit(0.01) * dny / dnf };
    h = h.min(h_max);
    for i in 0..n {
        st.tmp[i] = y[i] + h * st.k[0][i];
    }
    let f0 = st.k[0].clone();
    st.rhs(t + h, 1)?;
    let diff: Vec<T> = st.k[1].iter().zip(&f0).map(|(&a, &b)| a - b).collect();
    let der2 = rms(&diff, &sk) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= T::lit(1e-15) {
        T::lit(1e-6).max(h * T::lit(1e-3))
    } else {
        (T::lit(0.01) / der12).powf(T::lit(0.2))
    };
    h = (T::lit(100.0) * h).min(h1).min(h_max);

    let (beta, safe) = (T::lit(0.04), T::lit(0.9));
    let expo1 = T::lit(0.2) - beta * T::lit(0.75);
    let (fac_min, fac_max) = (T::lit(0.2), T::lit(10.0));
    let mut facold = T::lit(1e-4);
    let mut reject = false;
    let eps = T::epsilon();

    while t < t_end {
        if traj.stats.steps + traj.stats.rejected >= opts.max_steps {
            return Err(IntegrationError::TooManySteps(opts.max_steps));
        }
        if h.abs() <= T::lit(10.0) * eps * t.abs().max(T::one()) {
            return Err(IntegrationError::FiniteEscape { t: t.to_f64_lossy() });
        }
        let last = t + h * (T::one() + T::lit(1e-12)) >= t_end;
        if last {
            h = t_end - t;
        }
        st.step(t, &y, h)?;
        let err = st.error_norm(&y, h, rtol, atol);
        if !err.is_finite() || st.tmp.iter().any(|v| !v.is_finite()) {
            // shrink hard and retry; persistent blow-up ends in underflow
            traj.stats.rejected += 1;
            reject = true;
            h *= T::lit(0.1);
            continue;
        }
        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta)) / safe;
        let fac = fac.max(T::one() / fac_max).min(T::one() / fac_min);
        let mut h_new = h / fac;
        if err <= T::one() {
            facold = err.max(T::lit(1e-4));
            let d = st.dense_coeffs(&y, h);
            traj.dense.push(d);
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&st.tmp);
            let k6 = std::mem::take(&mut st.k[6]);
            st.k[6] = std::mem::replace(&mut st.k[0], k6);
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.stats.steps += 1;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t: t.to_f64_lossy() });
            }
            h_new = h_new.min(h_max);
            if reject {
                h_new = h_new.min(h);
            }
            reject = false;
        } else {
            h_new = h / (T::one() / fac_min).min(fac11 / safe);
            reject = true;
            traj.stats.rejected += 1;
        }
        h = h_new;
    }
    traj.stats.evaluations = st.evals;
    Ok(traj)
}

/// Integrates from `t = 0`.
pub fn integrate<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    z0: &[T],
    t_end: T,
    opts: &IntegratorOptions,
) -> Result<Trajectory<T>, IntegrationError> {
    integrate_from(f, T::zero(), z0, t_end, opts)
}

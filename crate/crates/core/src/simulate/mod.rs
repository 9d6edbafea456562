//! Closed-loop integration, ultimate boundedness and steady-state extraction.

mod integrator;
mod steady;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::real::Real;

pub use integrator::{
    integrate, integrate_from, FnField, IntegrationError, IntegratorOptions, IntegratorStats, Trajectory,
    VectorField,
};
pub use steady::{estimate_steady_state, Periodicity, SteadyStateError, SteadyStateEstimate, SteadyStateOptions};

/// Integrates one trajectory per initial state, in parallel. Results keep
/// the order of `x0s`.
pub fn integrate_many<T, F>(
    f: &F,
    x0s: &[Vec<T>],
    t_end: T,
    opts: &IntegratorOptions,
) -> Vec<Result<Trajectory<T>, IntegrationError>>
where
    T: Real,
    F: VectorField<T> + Sync + ?Sized,
{
    x0s.par_iter().map(|x0| integrate(f, x0, t_end, opts)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UubVerdict {
    pub bounded: bool,
    pub max_tail_norm: f64,
}

fn euclid<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

/// Checks that every state after `t_discard` has Euclidean norm at most `bound`.
pub fn check_uub<T: Real>(trajs: &[Trajectory<T>], t_discard: T, bound: T) -> UubVerdict {
    let mut max = T::zero();
    for tr in trajs {
        for s in tr.tail_from(t_discard) {
            let n = euclid(&s);
            max = if n.is_nan() { T::infinity() } else { max.max(n) };
        }
    }
    UubVerdict { bounded: max <= bound, max_tail_norm: max.to_f64_lossy() }
}

/// States with time in `[t, t_end]` over all integrations from `samples`:
/// a finite stand-in for the reachable tail from time `t`.
pub fn reachable_tail_cloud<T, F>(
    f: &F,
    samples: &[Vec<T>],
    t: T,
    t_end: T,
    opts: &IntegratorOptions,
) -> Result<Vec<Vec<T>>, IntegrationError>
where
    T: Real,
    F: VectorField<T> + Sync + ?Sized,
{
    if t > t_end {
        return Err(IntegrationError::InvalidInput("tail start after t_end".into()));
    }
    let trajs: Result<Vec<_>, _> = integrate_many(f, samples, t_end, opts).into_iter().collect();
    Ok(trajs?.iter().flat_map(|tr| tr.tail_from(t)).collect())
}

/// Largest Euclidean norm in a point cloud.
pub fn cloud_radius<T: Real>(cloud: &[Vec<T>]) -> T {
    cloud.iter().fold(T::zero(), |m, p| m.max(euclid(p)))
}

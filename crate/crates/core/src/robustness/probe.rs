//! Fixed-modal fit of sampled trigonometric signals by low-dimensional
//! linear generators.

use serde::{Deserialize, Serialize};

use super::RobustnessError;
use crate::linalg::Matrix;
use crate::perturbations::{sample_trig_ball_with, substream_rng, TrigPolynomial};

pub const PROBE_SAMPLES: usize = 512;

pub const PROBE_NOTE: &str = "illustrative only: the generator matrix is fixed to the modal form, \
so a large residual shows that this restricted family cannot reproduce the signals, not that no \
generator of that dimension can";

/// Output functions of the modal generator of dimension `m`: the bias, then
/// `cos kt`, `sin kt` for `k = 1, 2, …`, truncated to the first `m`.
pub fn modal_basis(m: usize, t: f64) -> Vec<f64> {
    (0..m)
        .map(|j| match j {
            0 => 1.0,
            _ => {
                let k = j.div_ceil(2) as f64;
                if j % 2 == 1 {
                    (k * t).cos()
                } else {
                    (k * t).sin()
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    /// RMS fit residual per sampled signal.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub note: String,
}

/// Least-squares fit of `n_signals` sampled `σ ∈ δB(T_N)` on
/// [`PROBE_SAMPLES`] points of `[0, 2π)` by the modal generator of
/// dimension `m`.
pub fn dimension_probe(m: usize, n: usize, delta: f64, n_signals: usize, seed: u64) -> Result<ProbeReport, RobustnessError> {
    if m == 0 {
        return Err(RobustnessError::Config("generator dimension must be at least 1".into()));
    }
    let sigmas = (0..n_signals)
        .map(|i| sample_trig_ball_with(n, delta, &mut substream_rng(seed, i as u64 + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = probe_signals(m, &sigmas)?;
    report.n = n;
    report.delta = delta;
    report.seed = seed;
    Ok(report)
}

/// Same fit for explicit signals.
pub fn probe_signals(m: usize, sigmas: &[TrigPolynomial<f64>]) -> Result<ProbeReport, RobustnessError> {
    let times: Vec<f64> = (0..PROBE_SAMPLES).map(|i| std::f64::consts::TAU * i as f64 / PROBE_SAMPLES as f64).collect();
    let design = Matrix::from_fn(PROBE_SAMPLES, m, |i, j| modal_basis(m, times[i])[j]);
    let mut residuals = Vec::with_capacity(sigmas.len());
    for s in sigmas {
        let v: Vec<f64> = times.iter().map(|&t| s.eval(t)).collect();
        let c = design.lstsq(&v).map_err(|e| RobustnessError::Config(format!("least squares: {e}")))?;
        let fit = design.mul_vec(&c);
        let ss: f64 = fit.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        residuals.push((ss / PROBE_SAMPLES as f64).sqrt());
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(ProbeReport {
        m,
        n: sigmas.iter().map(|s| s.order()).max().unwrap_or(0),
        delta: f64::NAN,
        seed: 0,
        residuals,
        max_residual,
        note: PROBE_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_dimension_reproduces_every_signal() {
        for n in 1..=3 {
            let r = dimension_probe(2 * n + 1, n, 1.0, 50, 7).unwrap();
            assert!(r.max_residual <= 1e-8, "{}", r.max_residual);
        }
    }

    #[test]
    fn dropping_a_mode_leaves_residual() {
        for n in 1..=3 {
            let r = dimension_probe(2 * n, n, 1.0, 100, 7).unwrap();
            assert!(r.max_residual >= 0.1, "N={n}: {}", r.max_residual);
        }
    }

    #[test]
    fn bias_only_fit_of_sine() {
        let s = TrigPolynomial::new(0.0, vec![0.3], vec![0.0]).unwrap();
        let r = probe_signals(1, &[s]).unwrap();
        assert!((r.max_residual - 0.3 / 2f64.sqrt()).abs() < 1e-12);
    }
}

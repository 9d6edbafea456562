//! Grid semimetrics, the trigonometric lift of periodic perturbations and
//! seeded samplers.
//!
//! Compact sets are replaced by finite grids. Every sup below is a max over
//! grid points, so results depend on the grid resolution.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Var, VarBinding};
use crate::internal_model::LinearPlantSS;
use crate::linalg::Matrix;
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("empty point set")]
    EmptySet,
    #[error("point dimensions differ")]
    DimensionMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("evaluation failed at grid point {index}: {source}")]
    Eval { index: usize, source: EvalError },
}

/// RNG for sample `index` of a run seeded with `seed`. Streams are
/// independent of one another and of evaluation order.
pub fn substream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Finite point set standing in for a compact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per axis of the underlying lattice.
    pub counts: Vec<usize>,
    /// Largest distance between lattice neighbours along an axis.
    pub resolution: f64,
    points: Vec<Vec<f64>>,
}

fn lattice(lo: &[f64], hi: &[f64], counts: &[usize]) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for ((&a, &b), &n) in lo.iter().zip(hi).zip(counts) {
        let axis: Vec<f64> = if n == 1 {
            vec![0.5 * (a + b)]
        } else {
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

impl CompactGrid {
    /// Box `[lo, hi]` with `counts[i]` points along axis `i` (endpoints included).
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self, PerturbationError> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(PerturbationError::InvalidGrid("bounds and counts must have equal non-zero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(PerturbationError::InvalidGrid("need finite lo <= hi".into()));
        }
        if counts.contains(&0) {
            return Err(PerturbationError::InvalidGrid("zero points on an axis".into()));
        }
        let total: usize = counts.iter().product();
        if total > 50_000_000 {
            return Err(PerturbationError::InvalidGrid(format!("{total} points is too many")));
        }
        let resolution = lo
            .iter()
            .zip(&hi)
            .zip(&counts)
            .map(|((a, b), &n)| if n == 1 { b - a } else { (b - a) / (n - 1) as f64 })
            .fold(0.0, f64::max);
        let points = lattice(&lo, &hi, &counts);
        Ok(Self { lo, hi, counts, resolution, points })
    }

    /// Box with spacing at most `resolution` along every axis.
    pub fn with_resolution(lo: Vec<f64>, hi: Vec<f64>, resolution: f64) -> Result<Self, PerturbationError> {
        if !(resolution > 0.0) {
            return Err(PerturbationError::InvalidGrid("resolution must be positive".into()));
        }
        let counts = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / resolution).ceil().max(0.0) as usize + 1).collect();
        Self::new_box(lo, hi, counts)
    }

    /// Closed disk of radius `r` centred at the origin in the plane: the
    /// lattice points inside it plus points on the boundary circle (which
    /// include the four axis crossings).
    pub fn disk(r: f64, resolution: f64) -> Result<Self, PerturbationError> {
        if !(r > 0.0) || !(resolution > 0.0) {
            return Err(PerturbationError::InvalidGrid("radius and resolution must be positive".into()));
        }
        let mut g = Self::with_resolution(vec![-r, -r], vec![r, r], resolution)?;
        g.points.retain(|p| p[0] * p[0] + p[1] * p[1] <= r * r);
        let m = 4 * ((std::f64::consts::TAU * r / resolution / 4.0).ceil() as usize).max(1);
        for i in 0..m {
            let th = std::f64::consts::TAU * i as f64 / m as f64;
            g.points.push(vec![r * th.cos(), r * th.sin()]);
        }
        Ok(g)
    }

    /// Same region with the spacing halved.
    pub fn refined(&self) -> Result<Self, PerturbationError> {
        let is_disk = self.points.len() != self.counts.iter().product::<usize>();
        if is_disk {
            Self::disk(self.hi[0], self.resolution / 2.0)
        } else {
            let counts = self.counts.iter().map(|&n| if n == 1 { 1 } else { 2 * n - 1 }).collect();
            Self::new_box(self.lo.clone(), self.hi.clone(), counts)
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Max of `|f|` over the grid.
    pub fn sup_abs(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().map(|p| f(p).abs()).fold(0.0, f64::max)
    }
}

/// Grid description used in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GridSpec {
    Box { lo: Vec<f64>, hi: Vec<f64>, resolution: f64 },
    Disk { radius: f64, resolution: f64 },
}

impl GridSpec {
    pub fn build(&self) -> Result<CompactGrid, PerturbationError> {
        match self {
            GridSpec::Box { lo, hi, resolution } => CompactGrid::with_resolution(lo.clone(), hi.clone(), *resolution),
            GridSpec::Disk { radius, resolution } => CompactGrid::disk(*radius, *resolution),
        }
    }
}

fn bind(vars: &[Var], p: &[f64]) -> VarBinding<f64> {
    vars.iter().copied().zip(p.iter().copied()).collect()
}

/// `max_{i ≤ k} sup_grid |F^{(i)} - G^{(i)}|` for expression lists `f`, `g`
/// whose variables are `vars` (grid axis `i` holds `vars[i]`). Derivatives
/// are symbolic partials with respect to every variable in `vars`.
pub fn weak_ck_semimetric(
    f: &[Expr],
    g: &[Expr],
    vars: &[Var],
    k: u8,
    grid: &CompactGrid,
) -> Result<f64, PerturbationError> {
    if f.len() != g.len() {
        return Err(PerturbationError::SignatureMismatch(format!("{} vs {} components", f.len(), g.len())));
    }
    if vars.len() != grid.dim() {
        return Err(PerturbationError::SignatureMismatch(format!(
            "{} variables on a {}-dimensional grid",
            vars.len(),
            grid.dim()
        )));
    }
    if k > 1 {
        return Err(PerturbationError::InvalidParameter("k must be 0 or 1".into()));
    }
    let allowed: BTreeSet<Var> = vars.iter().copied().collect();
    for e in f.iter().chain(g) {
        if let Some(v) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
            return Err(PerturbationError::SignatureMismatch(format!("variable {v} is not a grid axis")));
        }
    }
    let mut pairs: Vec<(Expr, Expr)> = f.iter().cloned().zip(g.iter().cloned()).collect();
    if k == 1 {
        for (a, b) in f.iter().zip(g) {
            for &v in vars {
                pairs.push((a.differentiate(v), b.differentiate(v)));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (index, p) in grid.points().iter().enumerate() {
        let b = bind(vars, p);
        for (a, c) in &pairs {
            let da: f64 = a.eval(&b).map_err(|source| PerturbationError::Eval { index, source })?;
            let dc: f64 = c.eval(&b).map_err(|source| PerturbationError::Eval { index, source })?;
            worst = worst.max((da - dc).abs());
        }
    }
    Ok(worst)
}

fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y)).sqrt()
}

/// Hausdorff distance between finite point sets (Euclidean norm).
pub fn hausdorff_distance<T: Real>(x: &[Vec<T>], z: &[Vec<T>]) -> Result<T, PerturbationError> {
    if x.is_empty() || z.is_empty() {
        return Err(PerturbationError::EmptySet);
    }
    let d = x[0].len();
    if x.iter().chain(z).any(|p| p.len() != d) {
        return Err(PerturbationError::DimensionMismatch);
    }
    let directed = |from: &[Vec<T>], to: &[Vec<T>]| {
        from.iter()
            .map(|p| to.iter().map(|q| dist(p, q)).fold(T::infinity(), T::min))
            .fold(T::zero(), T::max)
    };
    Ok(directed(x, z).max(directed(z, x)))
}

/// Pairs `(r_n, q_n)`, `n = 1..=n_max`, in `a = w1`, `b = w2`, with
/// `r_n(sin t, cos t) = sin nt` and `q_n(sin t, cos t) = cos nt`.
pub fn trig_recursion(n_max: usize) -> Vec<(Expr, Expr)> {
    let a = Expr::var(Var::w(1));
    let b = Expr::var(Var::w(2));
    let mut out: Vec<(Expr, Expr)> = Vec::with_capacity(n_max);
    if n_max == 0 {
        return out;
    }
    out.push((a.clone(), b.clone()));
    for n in 1..n_max {
        let (r, q) = out[n - 1].clone();
        let r_next = r.clone() * b.clone() + q.clone() * a.clone();
        let q_next = q * b.clone() - r * a.clone();
        out.push((r_next, q_next));
    }
    out
}

/// Numeric values of the recursion at `(a, b)`.
pub fn trig_recursion_values<T: Real>(n_max: usize, a: T, b: T) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(n_max);
    let (mut r, mut q) = (a, b);
    for _ in 0..n_max {
        out.push((r, q));
        let r_next = r * b + q * a;
        q = q * b - r * a;
        r = r_next;
    }
    out
}

/// `σ(t) = α + Σ_n (βⁿ sin nt + γⁿ cos nt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial<T> {
    pub alpha: T,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
}

impl<T: Real> TrigPolynomial<T> {
    pub fn new(alpha: T, beta: Vec<T>, gamma: Vec<T>) -> Result<Self, PerturbationError> {
        if beta.len() != gamma.len() {
            return Err(PerturbationError::InvalidParameter("beta and gamma lengths differ".into()));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn order(&self) -> usize {
        self.beta.len()
    }

    /// Coordinates `(α, β¹, γ¹, …, βᴺ, γᴺ)`.
    pub fn to_coords(&self) -> Vec<T> {
        let mut v = vec![self.alpha];
        for (b, g) in self.beta.iter().zip(&self.gamma) {
            v.push(*b);
            v.push(*g);
        }
        v
    }

    pub fn from_coords(v: &[T]) -> Result<Self, PerturbationError> {
        if v.len().is_multiple_of(2) {
            return Err(PerturbationError::InvalidParameter("coordinate vector must have odd length".into()));
        }
        let beta = v.iter().skip(1).step_by(2).copied().collect();
        let gamma = v.iter().skip(2).step_by(2).copied().collect();
        Ok(Self { alpha: v[0], beta, gamma })
    }

    pub fn coord_norm(&self) -> T {
        self.to_coords().iter().fold(T::zero(), |s, &c| s + c * c).sqrt()
    }

    pub fn eval(&self, t: T) -> T {
        self.beta.iter().zip(&self.gamma).enumerate().fold(self.alpha, |s, (i, (&b, &g))| {
            let nt = T::from_usize_lossy(i + 1) * t;
            s + b * nt.sin() + g * nt.cos()
        })
    }

    /// `c_σ(a, b)` evaluated through the recursion.
    pub fn lift_value(&self, a: T, b: T) -> T {
        trig_recursion_values(self.order(), a, b)
            .into_iter()
            .zip(self.beta.iter().zip(&self.gamma))
            .fold(self.alpha, |s, ((r, q), (&be, &ga))| s + be * r + ga * q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lift {
    /// `c_σ` in `w1`, `w2`.
    pub expr: Expr,
    /// `sup |c_σ|` over the grid.
    pub sup: f64,
}

/// `c_σ(a, b) = α + Σ (βⁿ r_n(a, b) + γⁿ q_n(a, b))` and its sup over `k`.
///
/// The recursion is run on coefficient arrays of polynomials in `a, b`, so
/// the expression is a sum of at most `(N + 1)(N + 2) / 2` monomials rather
/// than a tree that doubles with every order.
pub fn lift_to_c0(sigma: &TrigPolynomial<f64>, k: &CompactGrid) -> Result<Lift, PerturbationError> {
    if k.dim() != 2 {
        return Err(PerturbationError::InvalidGrid("lift needs a planar grid".into()));
    }
    let n = sigma.order();
    let w = n + 1;
    // coeffs[i * w + j] multiplies a^i b^j
    let mut total = vec![0.0; w * w];
    total[0] = sigma.alpha;
    let mut r = vec![0.0; w * w];
    let mut q = vec![0.0; w * w];
    if n > 0 {
        r[w] = 1.0;
        q[1] = 1.0;
    }
    for (be, ga) in sigma.beta.iter().zip(&sigma.gamma) {
        for (t, (x, y)) in total.iter_mut().zip(r.iter().zip(&q)) {
            *t += be * x + ga * y;
        }
        // r' = b r + a q,  q' = b q - a r
        let mut r_next = vec![0.0; w * w];
        let mut q_next = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..w {
                let (rv, qv) = (r[i * w + j], q[i * w + j]);
                if rv == 0.0 && qv == 0.0 {
                    continue;
                }
                if j + 1 < w {
                    r_next[i * w + j + 1] += rv;
                    q_next[i * w + j + 1] += qv;
                }
                if i + 1 < w {
                    r_next[(i + 1) * w + j] += qv;
                    q_next[(i + 1) * w + j] -= rv;
                }
            }
        }
        r = r_next;
        q = q_next;
    }
    let a = Expr::var(Var::w(1));
    let b = Expr::var(Var::w(2));
    let mut expr = Expr::zero();
    for i in 0..w {
        for j in 0..w {
            let c = total[i * w + j];
            if c != 0.0 {
                expr = expr + Expr::constant(c) * a.clone().powi(i as u32) * b.clone().powi(j as u32);
            }
        }
    }
    let sup = k.sup_abs(|p| sigma.lift_value(p[0], p[1]));
    Ok(Lift { expr, sup })
}

/// `δ = ε / (1 + Σ_n (sup_K |r_n| + sup_K |q_n|))`.
pub fn delta_for_ball(epsilon: f64, n_max: usize, k: &CompactGrid) -> Result<f64, PerturbationError> {
    if !(epsilon > 0.0) {
        return Err(PerturbationError::InvalidParameter("epsilon must be positive".into()));
    }
    if k.dim() != 2 {
        return Err(PerturbationError::InvalidGrid("needs a planar grid".into()));
    }
    let mut sups = vec![(0.0f64, 0.0f64); n_max];
    for p in k.points() {
        for (s, (r, q)) in sups.iter_mut().zip(trig_recursion_values(n_max, p[0], p[1])) {
            s.0 = s.0.max(r.abs());
            s.1 = s.1.max(q.abs());
        }
    }
    Ok(epsilon / (1.0 + sups.iter().map(|(r, q)| r + q).sum::<f64>()))
}

/// Uniform draw from the open Euclidean ball of radius `delta` in the
/// coordinates of order-`n` trigonometric polynomials.
pub fn sample_trig_ball(n: usize, delta: f64, seed: u64) -> Result<TrigPolynomial<f64>, PerturbationError> {
    sample_trig_ball_with(n, delta, &mut substream_rng(seed, 0))
}

pub fn sample_trig_ball_with<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Result<TrigPolynomial<f64>, PerturbationError> {
    if !(delta > 0.0) {
        return Err(PerturbationError::InvalidParameter("delta must be positive".into()));
    }
    let dim = 2 * n + 1;
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            break v.into_iter().map(|x| x / norm).collect();
        }
    };
    let u: f64 = rng.random();
    let radius = delta * u.powf(1.0 / dim as f64);
    let coords: Vec<f64> = dir.into_iter().map(|x| x * radius).collect();
    TrigPolynomial::from_coords(&coords)
}

/// Adds independent uniform `[-ε, ε]` entries to `A, B, P, C_e, C_y` and,
/// unless `freeze_s`, to `S`.
pub fn perturb_linear<T: Real>(plant: &LinearPlantSS<T>, epsilon: T, seed: u64, freeze_s: bool) -> LinearPlantSS<T> {
    perturb_linear_with(plant, epsilon, &mut substream_rng(seed, 0), freeze_s)
}

pub fn perturb_linear_with<T: Real, R: Rng + ?Sized>(
    plant: &LinearPlantSS<T>,
    epsilon: T,
    rng: &mut R,
    freeze_s: bool,
) -> LinearPlantSS<T> {
    let mut jitter = |m: &Matrix<T>| {
        if epsilon == T::zero() {
            return m.clone();
        }
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            m[(i, j)] + epsilon * T::lit(u)
        })
    };
    let s = if freeze_s { plant.S.clone() } else { jitter(&plant.S) };
    LinearPlantSS {
        S: s,
        A: jitter(&plant.A),
        B: jitter(&plant.B),
        P: jitter(&plant.P),
        C_e: jitter(&plant.C_e),
        C_y: jitter(&plant.C_y),
    }
}

/// Perturbation description in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationSpec {
    None,
    /// `σ(w)` added to one component of the plant's vector field, with the
    /// exosystem's first two states playing `(sin t, cos t)`.
    TrigBall {
        epsilon: f64,
        #[serde(rename = "N")]
        n: usize,
        grid: GridSpec,
        /// Index (from 1) of the plant state receiving the term.
        #[serde(default = "one")]
        component: usize,
    },
    LinearMatrix {
        epsilon: f64,
        #[serde(default = "yes", rename = "freeze_S")]
        freeze_s: bool,
    },
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), PerturbationError> {
        match self {
            PerturbationSpec::None => Ok(()),
            PerturbationSpec::TrigBall { epsilon, n, grid, component } => {
                if !(*epsilon > 0.0) || *n == 0 || *component == 0 {
                    return Err(PerturbationError::InvalidParameter("trig-ball needs epsilon > 0, N >= 1, component >= 1".into()));
                }
                grid.build().map(|_| ())
            }
            PerturbationSpec::LinearMatrix { epsilon, .. } if !(*epsilon >= 0.0) => {
                Err(PerturbationError::InvalidParameter("epsilon must be non-negative".into()))
            }
            PerturbationSpec::LinearMatrix { .. } => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn semimetric_examples() {
        let grid = CompactGrid::with_resolution(vec![-1.0], vec![1.0], 0.01).unwrap();
        let x = [Var::x(1)];
        assert_eq!(weak_ck_semimetric(&[p("x1")], &[p("x1")], &x, 1, &grid).unwrap(), 0.0);
        let d = weak_ck_semimetric(&[p("x1")], &[p("x1 + 0.1")], &x, 0, &grid).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        let d = weak_ck_semimetric(&[p("0")], &[p("0.1*sin(10*x1)")], &x, 1, &grid).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "{d}");
        assert!(weak_ck_semimetric(&[p("x1")], &[p("x2")], &x, 0, &grid).is_err());
        assert!(weak_ck_semimetric(&[p("x1")], &[], &x, 0, &grid).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_distance(&[vec![0.0]], &[vec![3.0]]).unwrap(), 3.0);
        assert_eq!(hausdorff_distance(&[vec![0.0]], &[vec![0.0], vec![2.0]]).unwrap(), 2.0);
        let x = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        assert_eq!(hausdorff_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(hausdorff_distance::<f64>(&[], &x), Err(PerturbationError::EmptySet));
    }

    #[test]
    fn recursion_examples() {
        let rq = trig_recursion(3);
        assert_eq!(rq[0].0.to_string(), "w1");
        let at = |e: &Expr, a: f64, b: f64| e.eval(&VarBinding::new().with(Var::w(1), a).with(Var::w(2), b)).unwrap();
        for &(a, b) in &[(0.3, -0.7), (1.5, 2.0)] {
            assert!((at(&rq[1].0, a, b) - 2.0 * a * b).abs() < 1e-12);
            assert!((at(&rq[1].1, a, b) - (b * b - a * a)).abs() < 1e-12);
        }
        for (r, q) in &rq {
            assert_eq!(at(q, 0.0, 1.0), 1.0);
            let _ = r;
        }
        let worst = (0..1024)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 1024.0;
                (at(&rq[2].0, t.sin(), t.cos()) - (3.0 * t).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12);
    }

    #[test]
    fn lift_examples() {
        let disk = CompactGrid::disk(1.0, 0.05).unwrap();
        let c = TrigPolynomial::new(0.5, vec![], vec![]).unwrap();
        let l = lift_to_c0(&c, &disk).unwrap();
        assert_eq!(l.sup, 0.5);
        assert_eq!(l.expr.as_const(), Some(0.5));
        let s = TrigPolynomial::new(0.0, vec![0.2], vec![0.0]).unwrap();
        let l = lift_to_c0(&s, &disk).unwrap();
        assert!((l.sup - 0.2).abs() < 1e-15);
        let s3 = TrigPolynomial::new(0.0, vec![0.0, 0.0, 0.05], vec![0.0; 3]).unwrap();
        let l = lift_to_c0(&s3, &disk).unwrap();
        let worst = (0..1024)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 1024.0;
                let b = VarBinding::new().with(Var::w(1), t.sin()).with(Var::w(2), t.cos());
                (l.expr.eval(&b).unwrap() - s3.eval(t)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12);
    }

    #[test]
    fn delta_examples() {
        let disk = CompactGrid::disk(1.0, 0.05).unwrap();
        let d = delta_for_ball(0.3, 1, &disk).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        assert!((delta_for_ball(0.6, 1, &disk).unwrap() - 2.0 * d).abs() < 1e-15);
        let big = CompactGrid::disk(2.0, 0.05).unwrap();
        assert!(delta_for_ball(0.3, 3, &big).unwrap() <= delta_for_ball(0.3, 3, &disk).unwrap());
    }

    #[test]
    fn ball_sampler() {
        let a = sample_trig_ball(3, 0.5, 9).unwrap();
        assert!(a.coord_norm() < 0.5);
        assert_eq!(a, sample_trig_ball(3, 0.5, 9).unwrap());
        assert_ne!(a, sample_trig_ball(3, 0.5, 10).unwrap());
        let mean = (0..1000).map(|i| sample_trig_ball(1, 1.0, i).unwrap().coord_norm()).sum::<f64>() / 1000.0;
        assert!((0.70..=0.80).contains(&mean), "{mean}");
    }

    #[test]
    fn coords_round_trip() {
        let s = TrigPolynomial::new(1.0, vec![2.0, 4.0], vec![3.0, 5.0]).unwrap();
        assert_eq!(s.to_coords(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(TrigPolynomial::from_coords(&s.to_coords()).unwrap(), s);
    }

    #[test]
    fn linear_perturbation() {
        let m = |r: usize, c: usize, v: f64| Matrix::from_fn(r, c, |i, j| v + (i * c + j) as f64);
        let plant = LinearPlantSS { S: m(2, 2, 0.5), A: m(3, 3, -1.0), B: m(3, 1, 1.0), P: m(3, 2, 0.0), C_e: m(1, 3, 1.0), C_y: m(1, 3, 2.0) };
        assert_eq!(perturb_linear(&plant, 0.0, 1, false), plant);
        let q = perturb_linear(&plant, 0.1, 1, true);
        assert_eq!(q.S, plant.S);
        let diff = Matrix::from_fn(3, 3, |i, j| q.A[(i, j)] - plant.A[(i, j)]);
        assert!(diff.norm_fro() <= 0.1 * 3.0);
        assert!(diff.norm_max() <= 0.1 && diff.norm_max() > 0.0);
        assert_ne!(perturb_linear(&plant, 0.1, 1, false).S, plant.S);
    }

    #[test]
    fn grid_refinement() {
        let g = CompactGrid::with_resolution(vec![-1.0, 0.0], vec![1.0, 1.0], 0.25).unwrap();
        assert_eq!(g.len(), 9 * 5);
        let r = g.refined().unwrap();
        assert!((r.resolution - 0.125).abs() < 1e-15);
        let d = CompactGrid::disk(1.0, 0.1).unwrap();
        assert!(d.points().iter().all(|p| p[0].hypot(p[1]) <= 1.0 + 1e-12));
        assert!(d.refined().unwrap().len() > d.len());
    }

    #[test]
    fn spec_json() {
        let s: PerturbationSpec = serde_json::from_str(
            r#"{"kind":"trig-ball","epsilon":0.2,"N":3,"grid":{"shape":"disk","radius":1.0,"resolution":0.05}}"#,
        )
        .unwrap();
        assert!(s.validate().is_ok());
        let l: PerturbationSpec = serde_json::from_str(r#"{"kind":"linear-matrix","epsilon":0.01}"#).unwrap();
        assert_eq!(l, PerturbationSpec::LinearMatrix { epsilon: 0.01, freeze_s: true });
    }
}

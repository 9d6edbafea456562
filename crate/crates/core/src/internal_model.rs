//! Companion-form internal models, minimal polynomials, non-resonance and
//! the Linear Regulator for SISO linear plants.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, ExtendedPlant, LinearIMRegulator, LinearizationBundle};
use crate::expr::{linear_combination, Expr, Var};
use crate::linalg::{complex_singular_values, controllability_matrix, controllability_rank, LinalgError, Matrix, RANK_TOL};
use crate::poly::Poly;
use crate::real::Real;

/// Cap on `d·n_e` for harmonic internal models.
pub const MAX_HARMONIC_BLOCKS: usize = 64;

/// Largest exosystem handled by [`minimal_polynomial`].
pub const MAX_MINPOLY_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InternalModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("internal model too large: d*n_e = {0} exceeds {MAX_HARMONIC_BLOCKS}")]
    TooLarge(usize),
    #[error("duplicate frequency {0}")]
    DuplicateFrequency(f64),
    #[error("rank decision is ill-conditioned at degree {degree} (relative singular value {ratio:e})")]
    IllConditioned { degree: usize, ratio: f64 },
    #[error("minimal polynomial verification failed: residual {residual:e}")]
    Verification { residual: f64 },
    #[error("only SISO error channels are supported (n_e = {n_e}, n_u = {n_u})")]
    NotSiso { n_e: usize, n_u: usize },
    #[error("the first measured output is not the regulation error")]
    ErrorNotInOutput,
    #[error("(A, B) is not stabilizable at eigenvalue {re}{im:+}i")]
    NotStabilizable { re: f64, im: f64 },
    #[error("(A, C_y) is not detectable at eigenvalue {re}{im:+}i")]
    NotDetectable { re: f64, im: f64 },
    #[error("non-resonance condition fails at λ = {re}{im:+}i (singular value {sigma:e})")]
    NonResonance { re: f64, im: f64, sigma: f64 },
    #[error("exosystem is not marginally stable with simple minimal-polynomial roots: {0}")]
    ExosystemNotMarginal(String),
    #[error("pole placement failed: {0}")]
    Placement(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl InternalModelError {
    /// True when a hypothesis of the Linear Regulator construction is violated,
    /// as opposed to malformed input.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Self::NotStabilizable { .. }
                | Self::NotDetectable { .. }
                | Self::NonResonance { .. }
                | Self::ExosystemNotMarginal(_)
                | Self::Placement(_)
                | Self::ErrorNotInOutput
        )
    }
}

/// `(Φ, G)` in block-companion form together with the frequencies it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalModelPair<T: Real> {
    pub phi: Matrix<T>,
    pub g: Matrix<T>,
    pub n_e: usize,
    /// Frequencies in Hz, `0` first, when the pair was built from a harmonic set.
    pub freqs: Option<Vec<T>>,
    /// Set when the frequencies are `k/T`.
    pub period: Option<T>,
    /// `λ^m + a_m λ^{m-1} + … + a_1`.
    pub char_poly: Poly<T>,
}

impl<T: Real> InternalModelPair<T> {
    pub fn n_eta(&self) -> usize {
        self.phi.nrows()
    }

    /// Declared spectrum: `{0} ∪ {±i2πν_k}`, each repeated `n_e` times.
    pub fn expected_spectrum(&self) -> Option<Vec<Complex<T>>> {
        let freqs = self.freqs.as_ref()?;
        let mut out = Vec::new();
        for &nu in freqs {
            let w = T::TAU() * nu;
            for _ in 0..self.n_e {
                if nu == T::zero() {
                    out.push(Complex::new(T::zero(), T::zero()));
                } else {
                    out.push(Complex::new(T::zero(), w));
                    out.push(Complex::new(T::zero(), -w));
                }
            }
        }
        Some(out)
    }

    /// Largest distance between computed eigenvalues of `Φ` and the declared
    /// spectrum under a greedy nearest matching.
    pub fn spectrum_error(&self) -> Result<T, InternalModelError> {
        let expected = self
            .expected_spectrum()
            .ok_or_else(|| InternalModelError::InvalidInput("pair carries no frequency set".into()))?;
        let computed = self.phi.eigenvalues()?;
        Ok(multiset_distance(&computed, &expected))
    }

    pub fn controllability_rank(&self) -> usize {
        controllability_rank(&self.phi, &self.g, T::lit(RANK_TOL))
    }

    /// `‖p(Φ)‖_F / Σ_j |a_j| ‖Φ‖_F^j`: zero up to rounding when `p` annihilates `Φ`.
    pub fn cayley_hamilton_residual(&self) -> T {
        cayley_hamilton_residual(&self.char_poly, &self.phi)
    }
}

/// Relative residual of `p(M)` with respect to the size of its terms.
pub fn cayley_hamilton_residual<T: Real>(p: &Poly<T>, m: &Matrix<T>) -> T {
    let norm = m.norm_fro();
    let mut scale = T::zero();
    let mut pw = T::one();
    for &c in p.coeffs() {
        scale += c.abs() * pw;
        pw *= norm;
    }
    p.eval_matrix(m).norm_fro() / scale.max(T::min_positive_value())
}

/// Greedy nearest matching of two equally long multisets; returns the worst pair distance.
pub fn multiset_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    if a.len() != b.len() {
        return T::infinity();
    }
    let mut used = vec![false; b.len()];
    let mut worst = T::zero();
    for x in a {
        let mut best = None;
        for (j, y) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (*x - *y).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let (j, d) = best.expect("equal lengths");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Block-companion pair for `λ^m + a_m λ^{m-1} + … + a_1` replicated over `n_e`
/// error channels: identity blocks on the superdiagonal, last block row
/// `(-a_1 I, …, -a_m I)`, `G = (0, …, 0, I)ᵀ`.
pub fn companion_pair<T: Real>(coeffs: &[T], n_e: usize) -> Result<InternalModelPair<T>, InternalModelError> {
    let m = coeffs.len();
    if m == 0 || n_e == 0 {
        return Err(InternalModelError::InvalidInput("need m >= 1 coefficients and n_e >= 1".into()));
    }
    let n = m * n_e;
    let mut phi = Matrix::zeros(n, n);
    for b in 0..m - 1 {
        for i in 0..n_e {
            phi[(b * n_e + i, (b + 1) * n_e + i)] = T::one();
        }
    }
    for (b, &a) in coeffs.iter().enumerate() {
        for i in 0..n_e {
            phi[((m - 1) * n_e + i, b * n_e + i)] = -a;
        }
    }
    let mut g = Matrix::zeros(n, n_e);
    for i in 0..n_e {
        g[((m - 1) * n_e + i, i)] = T::one();
    }
    Ok(InternalModelPair { phi, g, n_e, freqs: None, period: None, char_poly: Poly::monic_from_tail(coeffs) })
}

/// `λ·∏_k (λ² + (2πν_k)²)`.
fn harmonic_poly<T: Real>(freqs: &[T]) -> Poly<T> {
    let mut p = Poly::new(vec![T::zero(), T::one()]);
    for &nu in freqs {
        let w = T::TAU() * nu;
        p = p.mul(&Poly::new(vec![w * w, T::zero(), T::one()]));
    }
    p
}

fn harmonic_pair<T: Real>(freqs: &[T], n_e: usize) -> Result<InternalModelPair<T>, InternalModelError> {
    if n_e == 0 {
        return Err(InternalModelError::InvalidInput("n_e must be at least 1".into()));
    }
    if freqs.len() * n_e > MAX_HARMONIC_BLOCKS {
        return Err(InternalModelError::TooLarge(freqs.len() * n_e));
    }
    let p = harmonic_poly(freqs);
    let mut pair = companion_pair(p.tail(), n_e)?;
    let mut all = vec![T::zero()];
    all.extend_from_slice(freqs);
    pair.freqs = Some(all);
    Ok(pair)
}

/// Internal model of the harmonics `0, 1/T, …, d/T`.
pub fn build_periodic_im<T: Real>(period: T, d: usize, n_e: usize) -> Result<InternalModelPair<T>, InternalModelError> {
    if !(period > T::zero()) || !period.is_finite() {
        return Err(InternalModelError::InvalidInput("period must be positive".into()));
    }
    let freqs: Vec<T> = (1..=d).map(|k| T::from_usize_lossy(k) / period).collect();
    let mut pair = harmonic_pair(&freqs, n_e)?;
    pair.period = Some(period);
    Ok(pair)
}

/// Internal model of `0` and the given positive, pairwise distinct frequencies (Hz).
pub fn build_frequency_im<T: Real>(freqs: &[T], n_e: usize) -> Result<InternalModelPair<T>, InternalModelError> {
    for (i, &nu) in freqs.iter().enumerate() {
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(InternalModelError::InvalidInput(format!("frequency {nu} is not positive")));
        }
        if freqs[..i].contains(&nu) {
            return Err(InternalModelError::DuplicateFrequency(nu.to_f64_lossy()));
        }
    }
    harmonic_pair(freqs, n_e)
}

/// Monic minimal polynomial of `S` from the first linear dependence among
/// `I, S, S², …` (vectorized, columns normalized, SVD rank test).
pub fn minimal_polynomial<T: Real>(s: &Matrix<T>) -> Result<Poly<T>, InternalModelError> {
    let n = s.nrows();
    if !s.is_square() || n == 0 {
        return Err(InternalModelError::InvalidInput("S must be square and non-empty".into()));
    }
    if n > MAX_MINPOLY_DIM {
        return Err(InternalModelError::InvalidInput(format!("S is {n}x{n}, limit is {MAX_MINPOLY_DIM}")));
    }
    let norm = s.norm_fro();
    if norm == T::zero() {
        return Ok(Poly::new(vec![T::zero(), T::one()]));
    }
    let sn = s.scale(T::one() / norm);
    let tol = T::lit(RANK_TOL);
    let ambiguous = T::lit(1e3) * tol;
    let mut powers = vec![Matrix::identity(n)];
    for k in 1..=n {
        powers.push(&powers[k - 1] * &sn);
        let cols: Vec<Vec<T>> = powers.iter().map(|p| p.as_slice().to_vec()).collect();
        let krylov = Matrix::from_fn(n * n, k + 1, |i, j| {
            let c = &cols[j];
            let cn = c.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            c[i] / cn
        });
        let sv = krylov.singular_values();
        let ratio = sv[k] / sv[0];
        if ratio > ambiguous {
            continue;
        }
        if ratio > tol {
            return Err(InternalModelError::IllConditioned { degree: k, ratio: ratio.to_f64_lossy() });
        }
        // Σ_{j<k} c_j vec(Sn^j) = -vec(Sn^k)
        let basis = Matrix::from_fn(n * n, k, |i, j| cols[j][i]);
        let rhs: Vec<T> = cols[k].iter().map(|&v| -v).collect();
        let c = basis.lstsq(&rhs)?;
        // undo the scaling: Sn = S/norm
        let tail: Vec<T> = c
            .iter()
            .enumerate()
            .map(|(j, &cj)| cj * norm.powi((k - j) as i32))
            .collect();
        let p = Poly::monic_from_tail(&tail);
        let residual = p.eval_matrix(s).norm_fro();
        let bound = T::lit(1e-8) * norm.powi(k as i32).max(T::one());
        if residual > bound {
            return Err(InternalModelError::Verification { residual: residual.to_f64_lossy() });
        }
        return Ok(p);
    }
    unreachable!("Cayley-Hamilton bounds the degree by n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonResonanceVerdict {
    pub pass: bool,
    /// `(λ, σ_{n_p+n_e})` for every tested eigenvalue; `σ = 0` when the pencil
    /// has fewer columns than `n_p + n_e`.
    pub min_singular_values: Vec<(Complex<f64>, f64)>,
}

/// Rank test of `[[A - λI, B], [C_e, 0]]` at every exosystem eigenvalue.
pub fn non_resonance_check<T: Real>(lin: &LinearizationBundle<T>, exo_eigs: &[Complex<T>]) -> NonResonanceVerdict {
    let n_p = lin.dfdx.nrows();
    let n_u = lin.dfdu.ncols();
    let n_e = lin.dhedx.nrows();
    let rows = n_p + n_e;
    let cols = n_p + n_u;
    let mut out = Vec::with_capacity(exo_eigs.len());
    for &lam in exo_eigs {
        let mut re = Matrix::zeros(rows, cols);
        let mut im = Matrix::zeros(rows, cols);
        re.set_block(0, 0, &lin.dfdx);
        re.set_block(0, n_p, &lin.dfdu);
        re.set_block(n_p, 0, &lin.dhedx);
        for i in 0..n_p {
            re[(i, i)] -= lam.re;
            im[(i, i)] = -lam.im;
        }
        let sv = complex_singular_values(&re, &im);
        let sigma = if sv.len() >= rows { sv[rows - 1] } else { T::zero() };
        out.push((
            Complex::new(lam.re.to_f64_lossy(), lam.im.to_f64_lossy()),
            sigma.to_f64_lossy(),
        ));
    }
    let pass = out.iter().all(|&(_, s)| s > RANK_TOL);
    NonResonanceVerdict { pass, min_singular_values: out }
}

/// Linear extended plant `ẇ = Sw`, `ẋ_p = A x_p + B u + P w`, `e = C_e x_p`,
/// `y = C_y x_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LinearPlantSS<T: Real> {
    pub S: Matrix<T>,
    pub A: Matrix<T>,
    pub B: Matrix<T>,
    pub P: Matrix<T>,
    pub C_e: Matrix<T>,
    pub C_y: Matrix<T>,
}

#[allow(non_snake_case)]
impl<T: Real> LinearPlantSS<T> {
    pub fn validate(&self) -> Result<(), InternalModelError> {
        let n_w = self.S.nrows();
        let n_p = self.A.nrows();
        let bad = |what: &str| Err(InternalModelError::InvalidInput(format!("dimension mismatch in {what}")));
        if !self.S.is_square() || !self.A.is_square() {
            return bad("S or A (not square)");
        }
        if self.B.nrows() != n_p {
            return bad("B");
        }
        if self.P.nrows() != n_p || self.P.ncols() != n_w {
            return bad("P");
        }
        if self.C_e.ncols() != n_p {
            return bad("C_e");
        }
        if self.C_y.ncols() != n_p {
            return bad("C_y");
        }
        let all = [&self.S, &self.A, &self.B, &self.P, &self.C_e, &self.C_y];
        if all.iter().any(|m| !m.is_finite()) {
            return Err(InternalModelError::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(())
    }

    pub fn n_w(&self) -> usize {
        self.S.nrows()
    }
    pub fn n_p(&self) -> usize {
        self.A.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.B.ncols()
    }
    pub fn n_e(&self) -> usize {
        self.C_e.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.C_y.nrows()
    }

    /// The exact Jacobians of the plant (state-independent).
    pub fn linearization(&self) -> LinearizationBundle<T> {
        LinearizationBundle {
            dfdx: self.A.clone(),
            dfdu: self.B.clone(),
            dfdw: self.P.clone(),
            dhedx: self.C_e.clone(),
            dhedw: Matrix::zeros(self.n_e(), self.n_w()),
            dhdx: self.C_y.clone(),
            dsdw: self.S.clone(),
        }
    }

    /// Symbolic form of the plant.
    pub fn to_extended_plant(&self) -> Result<ExtendedPlant, InternalModelError> {
        self.validate()?;
        let w = |j: usize| Expr::from(Var::w(j as u32 + 1));
        let x = |j: usize| Expr::from(Var::x(j as u32 + 1));
        let u = |j: usize| Expr::from(Var::u(j as u32 + 1));
        let f = |m: &Matrix<T>, i: usize, j: usize| m[(i, j)].to_f64_lossy();
        let s = (0..self.n_w()).map(|i| linear_combination((0..self.n_w()).map(|j| (f(&self.S, i, j), w(j))))).collect();
        let f_p = (0..self.n_p())
            .map(|i| {
                let ax = (0..self.n_p()).map(|j| (f(&self.A, i, j), x(j)));
                let bu = (0..self.n_u()).map(|j| (f(&self.B, i, j), u(j)));
                let pw = (0..self.n_w()).map(|j| (f(&self.P, i, j), w(j)));
                linear_combination(ax.chain(bu).chain(pw))
            })
            .collect();
        let out = |c: &Matrix<T>| -> Vec<Expr> {
            (0..c.nrows()).map(|i| linear_combination((0..self.n_p()).map(|j| (f(c, i, j), x(j))))).collect()
        };
        Ok(ExtendedPlant::new(s, f_p, out(&self.C_y), out(&self.C_e), self.n_u())?)
    }
}

/// Closed-loop poles `-1, -1.25, -1.5, …` starting at index `from`.
pub fn placement_poles<T: Real>(from: usize, count: usize) -> Vec<T> {
    (from..from + count).map(|i| -(T::one() + T::lit(0.25) * T::from_usize_lossy(i))).collect()
}

/// Ackermann's formula: `K` with `σ(A - bK)` equal to `poles`.
pub fn ackermann<T: Real>(a: &Matrix<T>, b: &Matrix<T>, poles: &[T]) -> Result<Vec<T>, InternalModelError> {
    let n = a.nrows();
    if b.ncols() != 1 || b.nrows() != n || poles.len() != n {
        return Err(InternalModelError::InvalidInput("Ackermann needs a single input and n poles".into()));
    }
    if controllability_rank(a, b, T::lit(RANK_TOL)) < n {
        return Err(InternalModelError::Placement("pair is not controllable".into()));
    }
    let w = controllability_matrix(a, b);
    let mut e_n = vec![T::zero(); n];
    e_n[n - 1] = T::one();
    let v = w.transpose().solve(&e_n).map_err(|_| InternalModelError::Placement("controllability matrix is singular".into()))?;
    let mut p = Poly::one();
    for &r in poles {
        p = p.mul(&Poly::new(vec![-r, T::one()]));
    }
    let pa = p.eval_matrix(a);
    Ok((0..n).map(|j| (0..n).fold(T::zero(), |acc, i| acc + v[i] * pa[(i, j)])).collect())
}

/// Result of [`synthesize_linear_regulator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegulatorDesign {
    pub regulator: LinearIMRegulator,
    pub internal_model: InternalModelPair<f64>,
    /// State feedback on `(x̂, η)`: `u = -k_x x̂ - k_η η`.
    pub k_x: Vec<f64>,
    pub k_eta: Vec<f64>,
    /// Observer gain on the first output.
    pub l: Vec<f64>,
    /// Eigenvalues of the nominal linear closed loop without the exosystem.
    pub closed_loop_eigs: Vec<Complex<f64>>,
}

impl LinearRegulatorDesign {
    pub fn max_real_part(&self) -> f64 {
        self.closed_loop_eigs.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }
}

fn unstable_modes(a: &Matrix<f64>) -> Result<Vec<Complex<f64>>, InternalModelError> {
    Ok(a.eigenvalues()?.into_iter().filter(|z| z.re >= -1e-12).collect())
}

fn pbh_rank(a: &Matrix<f64>, extra: &Matrix<f64>, lam: Complex<f64>, stack_cols: bool) -> usize {
    let n = a.nrows();
    let shifted = |part: f64| Matrix::from_fn(n, n, |i, j| if i == j { a[(i, j)] - part } else { a[(i, j)] });
    let re_a = shifted(lam.re);
    let im_a = Matrix::from_fn(n, n, |i, j| if i == j { -lam.im } else { 0.0 });
    let zeros = Matrix::zeros(extra.nrows(), extra.ncols());
    let (re, im) = if stack_cols {
        (re_a.hstack(extra).expect("rows"), im_a.hstack(&zeros).expect("rows"))
    } else {
        (re_a.vstack(extra).expect("cols"), im_a.vstack(&zeros).expect("cols"))
    };
    let sv = complex_singular_values(&re, &im);
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    sv.iter().filter(|&&s| s > RANK_TOL * scale).count()
}

fn check_exosystem(p: &Poly<f64>) -> Result<(), InternalModelError> {
    let roots = p.roots()?;
    let mag = roots.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    for (i, r) in roots.iter().enumerate() {
        if r.re.abs() > 1e-9 * mag {
            return Err(InternalModelError::ExosystemNotMarginal(format!("eigenvalue {r} is off the imaginary axis")));
        }
        if roots[..i].iter().any(|q| (q - r).norm() < 1e-6 * mag) {
            return Err(InternalModelError::ExosystemNotMarginal(format!(
                "repeated minimal-polynomial root {r} (nontrivial Jordan block)"
            )));
        }
    }
    Ok(())
}

/// Linear Regulator: internal model from the minimal polynomial of `S`,
/// observer-based stabilizer from pole placement.
pub fn synthesize_linear_regulator(plant: &LinearPlantSS<f64>) -> Result<LinearRegulatorDesign, InternalModelError> {
    plant.validate()?;
    let minpoly = minimal_polynomial(&plant.S)?;
    check_exosystem(&minpoly)?;
    let im = companion_pair(minpoly.tail(), 1)?;
    let exo_eigs = plant.S.eigenvalues()?;
    synthesize_inner(plant, im, &exo_eigs)
}

/// Same construction with a prescribed internal model (e.g. extra harmonics).
pub fn synthesize_with_im(
    plant: &LinearPlantSS<f64>,
    im: InternalModelPair<f64>,
) -> Result<LinearRegulatorDesign, InternalModelError> {
    plant.validate()?;
    if im.n_e != 1 {
        return Err(InternalModelError::NotSiso { n_e: im.n_e, n_u: plant.n_u() });
    }
    let im_eigs = im.phi.eigenvalues()?;
    synthesize_inner(plant, im, &im_eigs)
}

fn synthesize_inner(
    plant: &LinearPlantSS<f64>,
    im: InternalModelPair<f64>,
    resonance_eigs: &[Complex<f64>],
) -> Result<LinearRegulatorDesign, InternalModelError> {
    let (n_p, n_e, n_u) = (plant.n_p(), plant.n_e(), plant.n_u());
    if n_e != 1 || n_u != 1 {
        return Err(InternalModelError::NotSiso { n_e, n_u });
    }
    if plant.n_y() == 0 || plant.C_y.row(0) != plant.C_e.row(0) {
        return Err(InternalModelError::ErrorNotInOutput);
    }
    let (a, b) = (&plant.A, &plant.B);
    for lam in unstable_modes(a)? {
        if pbh_rank(a, b, lam, true) < n_p {
            return Err(InternalModelError::NotStabilizable { re: lam.re, im: lam.im });
        }
        if pbh_rank(a, &plant.C_y, lam, false) < n_p {
            return Err(InternalModelError::NotDetectable { re: lam.re, im: lam.im });
        }
    }
    let verdict = non_resonance_check(&plant.linearization(), resonance_eigs);
    if let Some(&(lam, sigma)) = verdict.min_singular_values.iter().find(|(_, s)| *s <= RANK_TOL) {
        return Err(InternalModelError::NonResonance { re: lam.re, im: lam.im, sigma });
    }

    let n_eta = im.n_eta();
    let n_a = n_p + n_eta;
    // augmented pair on (x_p, η): η̇ = Φη + G C_e x_p
    let mut a_aug = Matrix::zeros(n_a, n_a);
    a_aug.set_block(0, 0, a);
    a_aug.set_block(n_p, 0, &im.g.matmul(&plant.C_e)?);
    a_aug.set_block(n_p, n_p, &im.phi);
    let mut b_aug = Matrix::zeros(n_a, 1);
    b_aug.set_block(0, 0, b);
    let k = ackermann(&a_aug, &b_aug, &placement_poles(0, n_a))
        .map_err(|e| InternalModelError::Placement(format!("augmented plant/internal-model pair: {e}")))?;
    let (k_x, k_eta) = (k[..n_p].to_vec(), k[n_p..].to_vec());

    let c1 = Matrix::from_row_slice(1, n_p, plant.C_y.row(0));
    let l = ackermann(&a.transpose(), &c1.transpose(), &placement_poles(n_a, n_p))
        .map_err(|e| InternalModelError::Placement(format!("observer on the first output: {e}")))?;

    // regulator state c = (η, x̂); y1 = e
    let eta = |j: usize| Expr::from(Var::c(j as u32 + 1));
    let xh = |j: usize| Expr::from(Var::c((n_eta + j) as u32 + 1));
    let u_terms: Vec<(f64, Expr)> = (0..n_p)
        .map(|j| (-k_x[j], xh(j)))
        .chain((0..n_eta).map(|j| (-k_eta[j], eta(j))))
        .collect();
    let h_c = vec![linear_combination(u_terms.clone())];
    let f_st: Vec<Expr> = (0..n_p)
        .map(|i| {
            let mut terms: Vec<(f64, Expr)> = Vec::new();
            for j in 0..n_p {
                // (A - L c1) x̂
                terms.push((a[(i, j)] - l[i] * c1[(0, j)], xh(j)));
            }
            for (coef, t) in &u_terms {
                terms.push((b[(i, 0)] * coef, t.clone()));
            }
            terms.push((l[i], Expr::from(Var::y(1))));
            linear_combination(terms)
        })
        .collect();
    let regulator = LinearIMRegulator::new(im.phi.clone(), im.g.clone(), f_st, h_c, plant.n_y(), None)?;

    let acl = linear_closed_loop(plant, &im.phi, &im.g, &k_x, &k_eta, &l)?;
    let closed_loop_eigs = acl.eigenvalues()?;
    let design = LinearRegulatorDesign { regulator, internal_model: im, k_x, k_eta, l, closed_loop_eigs };
    if design.max_real_part() > -0.1 {
        return Err(InternalModelError::Placement(format!(
            "closed-loop spectral abscissa {} exceeds -0.1",
            design.max_real_part()
        )));
    }
    Ok(design)
}

/// Closed-loop matrix on `(x_p, η, x̂)` with `w = 0`.
pub fn linear_closed_loop(
    plant: &LinearPlantSS<f64>,
    phi: &Matrix<f64>,
    g: &Matrix<f64>,
    k_x: &[f64],
    k_eta: &[f64],
    l: &[f64],
) -> Result<Matrix<f64>, InternalModelError> {
    let n_p = plant.n_p();
    let n_eta = phi.nrows();
    let n = 2 * n_p + n_eta;
    let (a, b) = (&plant.A, &plant.B);
    let kx = Matrix::from_row_slice(1, n_p, k_x);
    let keta = Matrix::from_row_slice(1, n_eta, k_eta);
    let lc = Matrix::column_vector(l).matmul(&Matrix::from_row_slice(1, n_p, plant.C_y.row(0)))?;
    let mut m = Matrix::zeros(n, n);
    let (xp, et, xh) = (0, n_p, n_p + n_eta);
    m.set_block(xp, xp, a);
    m.set_block(xp, et, &-&b.matmul(&keta)?);
    m.set_block(xp, xh, &-&b.matmul(&kx)?);
    m.set_block(et, xp, &g.matmul(&plant.C_e)?);
    m.set_block(et, et, phi);
    m.set_block(xh, xp, &lc);
    m.set_block(xh, et, &-&b.matmul(&keta)?);
    m.set_block(xh, xh, &(&(a - &b.matmul(&kx)?) - &lc));
    Ok(m)
}

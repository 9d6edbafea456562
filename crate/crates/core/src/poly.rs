//! Real polynomials in one variable, stored lowest degree first.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Matrix};
use crate::real::Real;

/// `coeffs[j]` multiplies `λ^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Real> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&T::zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Self { coeffs }
    }

    /// Coefficients given highest degree first, e.g. `[1, 0, 1]` for `λ² + 1`.
    pub fn from_high_first(high: &[T]) -> Self {
        Self::new(high.iter().rev().copied().collect())
    }

    /// `λ^m + a_m λ^{m-1} + … + a_1` from the tail coefficients `a_1..a_m`.
    pub fn monic_from_tail(tail: &[T]) -> Self {
        let mut c = tail.to_vec();
        c.push(T::one());
        Self::new(c)
    }

    pub fn one() -> Self {
        Self::new(vec![T::one()])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn high_first(&self) -> Vec<T> {
        self.coeffs.iter().rev().copied().collect()
    }

    /// `a_1..a_m` of a monic polynomial (everything but the leading one).
    pub fn tail(&self) -> &[T] {
        &self.coeffs[..self.degree()]
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs.last() == Some(&T::one())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex<T>) -> Complex<T> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * z + Complex::new(c, T::zero()))
    }

    /// `p(M)` by Horner's scheme.
    pub fn eval_matrix(&self, m: &Matrix<T>) -> Matrix<T> {
        let n = m.nrows();
        let mut acc = Matrix::zeros(n, n);
        for &c in self.coeffs.iter().rev() {
            acc = &(&acc * m) + &Matrix::identity(n).scale(c);
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::new(vec![T::zero()]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * T::from_usize_lossy(j))
                .collect(),
        )
    }

    /// Roots as eigenvalues of the scalar companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex<T>>, LinalgError> {
        let m = self.degree();
        if m == 0 {
            return Ok(Vec::new());
        }
        let lead = self.coeffs[m];
        let comp = Matrix::from_fn(m, m, |i, j| {
            if i + 1 < m {
                if j == i + 1 { T::one() } else { T::zero() }
            } else {
                -self.coeffs[j] / lead
            }
        });
        comp.eigenvalues()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiply_and_evaluate() {
        // λ (λ² + 1) = λ³ + λ
        let p = Poly::new(vec![0.0, 1.0]).mul(&Poly::new(vec![1.0, 0.0, 1.0]));
        assert_eq!(p.coeffs(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(p.eval(2.0), 10.0);
        assert_eq!(p.high_first(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.tail(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn matrix_evaluation_is_cayley_hamilton_for_rotation() {
        let s = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let p = Poly::from_high_first(&[1.0, 0.0, 1.0]);
        assert_eq!(p.eval_matrix(&s).norm_max(), 0.0);
    }

    #[test]
    fn roots_of_cubic() {
        let p = Poly::<f64>::from_high_first(&[1.0, 0.0, 1.0, 0.0]);
        let r = p.roots().unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().any(|z| z.norm() < 1e-12));
        assert!(r.iter().any(|z| (z.im - 1.0).abs() < 1e-12));
    }
}

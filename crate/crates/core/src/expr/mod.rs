//! Scalar expressions over named state, input and output variables.
//!
//! Every vector field and output map in the crate is a list of [`Expr`]s.
//! Trees are immutable and share subtrees through `Arc`, so cloning and
//! substitution are cheap and expressions can be evaluated from many threads.

mod diff;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::real::Real;

pub use parse::{parse, ParseError, ParseErrorKind};

/// Smoothing constant of `abs`: `abs(z) = sqrt(z² + σ²)`.
pub const ABS_SMOOTHING: f64 = 1e-9;

/// Reserved variable families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Exosystem state.
    W,
    /// Plant state.
    X,
    /// Regulator state.
    C,
    /// Control input.
    U,
    /// Regulation error.
    E,
    /// Measured output.
    Y,
}

impl Family {
    pub fn letter(self) -> char {
        match self {
            Family::W => 'w',
            Family::X => 'x',
            Family::C => 'c',
            Family::U => 'u',
            Family::E => 'e',
            Family::Y => 'y',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'w' => Family::W,
            'x' => Family::X,
            'c' => Family::C,
            'u' => Family::U,
            'e' => Family::E,
            'y' => Family::Y,
            _ => return None,
        })
    }
}

/// A variable: `w3`, `x1`, ... (indices start at 1), or time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Indexed(Family, u32),
    Time,
}

impl Var {
    pub fn w(i: u32) -> Self {
        Var::Indexed(Family::W, i)
    }
    pub fn x(i: u32) -> Self {
        Var::Indexed(Family::X, i)
    }
    pub fn c(i: u32) -> Self {
        Var::Indexed(Family::C, i)
    }
    pub fn u(i: u32) -> Self {
        Var::Indexed(Family::U, i)
    }
    pub fn e(i: u32) -> Self {
        Var::Indexed(Family::E, i)
    }
    pub fn y(i: u32) -> Self {
        Var::Indexed(Family::Y, i)
    }

    pub fn family(self) -> Option<Family> {
        match self {
            Var::Indexed(f, _) => Some(f),
            Var::Time => None,
        }
    }

    /// Parses `w1`, `x12`, `t`, ...
    pub fn from_name(name: &str) -> Option<Self> {
        if name == "t" {
            return Some(Var::Time);
        }
        let mut chars = name.chars();
        let family = Family::from_letter(chars.next()?)?;
        let digits = chars.as_str();
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let index = digits.parse::<u32>().ok()?;
        Some(Var::Indexed(family, index))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Indexed(fam, i) => write!(f, "{}{}", fam.letter(), i),
            Var::Time => f.write_str("t"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    /// Smooth absolute value `sqrt(z² + σ²)`.
    AbsSmooth,
}

impl UnaryOp {
    fn function_name(self) -> Option<&'static str> {
        Some(match self {
            UnaryOp::Neg => return None,
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Tanh => "tanh",
            UnaryOp::AbsSmooth => "abs",
        })
    }

    fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "tanh" => UnaryOp::Tanh,
            "abs" => UnaryOp::AbsSmooth,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    /// Base raised to a non-negative integer literal.
    Pow(Arc<Expr>, u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
}

/// Source of variable values during evaluation.
pub trait Bindings<T> {
    fn value(&self, v: Var) -> Option<T>;
}

/// Explicit name-to-value map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarBinding<T> {
    values: BTreeMap<Var, T>,
}

impl<T: Copy> VarBinding<T> {
    pub fn new() -> Self {
        Self { values: BTreeMap::new() }
    }

    pub fn with(mut self, v: Var, value: T) -> Self {
        self.values.insert(v, value);
        self
    }

    pub fn set(&mut self, v: Var, value: T) {
        self.values.insert(v, value);
    }

    pub fn get(&self, v: Var) -> Option<T> {
        self.values.get(&v).copied()
    }
}

impl<T: Copy> FromIterator<(Var, T)> for VarBinding<T> {
    fn from_iter<I: IntoIterator<Item = (Var, T)>>(iter: I) -> Self {
        Self { values: iter.into_iter().collect() }
    }
}

impl<T: Copy> Bindings<T> for VarBinding<T> {
    fn value(&self, v: Var) -> Option<T> {
        self.get(v)
    }
}

impl<T: Copy, F: Fn(Var) -> Option<T>> Bindings<T> for F {
    fn value(&self, v: Var) -> Option<T> {
        self(v)
    }
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    pub fn one() -> Self {
        Expr::Const(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Evaluates the tree with values supplied by `b`.
    pub fn eval<T: Real, B: Bindings<T> + ?Sized>(&self, b: &B) -> Result<T, EvalError> {
        Ok(match self {
            Expr::Const(c) => T::lit(*c),
            Expr::Var(v) => b.value(*v).ok_or(EvalError::Unbound(*v))?,
            Expr::Unary(op, a) => {
                let z = a.eval(b)?;
                match op {
                    UnaryOp::Neg => -z,
                    UnaryOp::Sin => z.sin(),
                    UnaryOp::Cos => z.cos(),
                    UnaryOp::Exp => z.exp(),
                    UnaryOp::Tanh => z.tanh(),
                    UnaryOp::AbsSmooth => {
                        let s = T::lit(ABS_SMOOTHING);
                        (z * z + s * s).sqrt()
                    }
                }
            }
            Expr::Binary(op, l, r) => {
                let x = l.eval(b)?;
                let y = r.eval(b)?;
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == T::zero() {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(a, n) => a.eval(b)?.powi(*n as i32),
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Replaces variables for which `f` returns an expression, folding the
    /// trivial constants the replacement creates.
    pub fn substitute(&self, f: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => f(*v).unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => unary(*op, a.substitute(f)),
            Expr::Binary(op, l, r) => binary(*op, l.substitute(f), r.substitute(f)),
            Expr::Pow(a, n) => pow(a.substitute(f), *n),
        }
    }

    /// Number of nodes in the tree (shared subtrees counted each time).
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.size(),
            Expr::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn differentiate(&self, v: Var) -> Expr {
        diff::differentiate(self, v)
    }

    pub fn sin(self) -> Expr {
        unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Expr {
        unary(UnaryOp::Cos, self)
    }

    pub fn powi(self, n: u32) -> Expr {
        pow(self, n)
    }
}

/// Linear combination `Σ coef·term`, dropping zero coefficients.
pub fn linear_combination(terms: impl IntoIterator<Item = (f64, Expr)>) -> Expr {
    let mut acc: Option<Expr> = None;
    for (coef, term) in terms {
        if coef == 0.0 || term.is_zero() {
            continue;
        }
        let piece = if coef == 1.0 { term } else { mul(Expr::Const(coef), term) };
        acc = Some(match acc {
            None => piece,
            Some(a) => add(a, piece),
        });
    }
    acc.unwrap_or_else(Expr::zero)
}

pub(crate) fn unary(op: UnaryOp, a: Expr) -> Expr {
    match (op, &a) {
        (UnaryOp::Neg, Expr::Const(c)) => Expr::Const(-c),
        (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, inner)) => (**inner).clone(),
        _ => Expr::Unary(op, Arc::new(a)),
    }
}

pub(crate) fn binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    match op {
        BinaryOp::Add => add(l, r),
        BinaryOp::Sub => sub(l, r),
        BinaryOp::Mul => mul(l, r),
        BinaryOp::Div => div(l, r),
    }
}

pub(crate) fn add(l: Expr, r: Expr) -> Expr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => Expr::Const(a + b),
        (Some(a), _) if a == 0.0 => r,
        (_, Some(b)) if b == 0.0 => l,
        _ => Expr::Binary(BinaryOp::Add, Arc::new(l), Arc::new(r)),
    }
}

pub(crate) fn sub(l: Expr, r: Expr) -> Expr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => Expr::Const(a - b),
        (_, Some(b)) if b == 0.0 => l,
        (Some(a), _) if a == 0.0 => unary(UnaryOp::Neg, r),
        _ => Expr::Binary(BinaryOp::Sub, Arc::new(l), Arc::new(r)),
    }
}

pub(crate) fn mul(l: Expr, r: Expr) -> Expr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => Expr::Const(a * b),
        (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::zero(),
        (Some(a), _) if a == 1.0 => r,
        (_, Some(b)) if b == 1.0 => l,
        _ => Expr::Binary(BinaryOp::Mul, Arc::new(l), Arc::new(r)),
    }
}

pub(crate) fn div(l: Expr, r: Expr) -> Expr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) if b != 0.0 => Expr::Const(a / b),
        (_, Some(b)) if b == 1.0 => l,
        _ => Expr::Binary(BinaryOp::Div, Arc::new(l), Arc::new(r)),
    }
}

pub(crate) fn pow(a: Expr, n: u32) -> Expr {
    match (n, a.as_const()) {
        (0, _) => Expr::one(),
        (1, _) => a,
        (_, Some(c)) => Expr::Const(c.powi(n as i32)),
        _ => Expr::Pow(Arc::new(a), n),
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        div(self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        unary(UnaryOp::Neg, self)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::Var(v)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(|e| serde::de::Error::custom(format!("expression {text:?}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ev(text: &str, b: &VarBinding<f64>) -> Result<f64, EvalError> {
        parse(text).unwrap().eval(b)
    }

    #[test]
    fn sum_of_two_variables_parses_to_add_node() {
        let e = parse("w1 + u1").unwrap();
        assert_eq!(
            e,
            Expr::Binary(BinaryOp::Add, Arc::new(Expr::Var(Var::w(1))), Arc::new(Expr::Var(Var::u(1))))
        );
    }

    #[test]
    fn evaluation_examples() {
        let b = VarBinding::new().with(Var::w(1), std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(ev("2*sin(w1)", &b).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(Expr::Const(7.0).eval(&VarBinding::<f64>::new()).unwrap(), 7.0);
        let b = VarBinding::new().with(Var::x(1), 3.0);
        assert_eq!(ev("x1*x1 - 1", &b).unwrap(), 8.0);
        let b = VarBinding::new().with(Var::x(1), 0.0).with(Var::u(1), 1.0);
        assert_eq!(ev("u1/x1", &b), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn unbound_variable_is_reported() {
        let b = VarBinding::<f64>::new();
        assert_eq!(ev("x2 + 1", &b), Err(EvalError::Unbound(Var::x(2))));
    }

    #[test]
    fn precedence_of_power_over_unary_minus() {
        let b = VarBinding::new().with(Var::x(1), 3.0);
        assert_eq!(ev("-x1^2", &b).unwrap(), -9.0);
        assert_eq!(ev("-2^2", &b).unwrap(), -4.0);
        assert_eq!(ev("(-2)^2", &b).unwrap(), 4.0);
        assert_eq!(ev("2 - 3 - 4", &b).unwrap(), -5.0);
        assert_eq!(ev("12 / 3 / 2", &b).unwrap(), 2.0);
    }

    #[test]
    fn substitution_folds_zero_input() {
        let f = parse("w1 + u1").unwrap();
        let g = f.substitute(&|v| (v == Var::u(1)).then(Expr::zero));
        assert_eq!(g.to_string(), "w1");
    }

    #[test]
    fn smooth_abs_value() {
        let b = VarBinding::new().with(Var::x(1), -2.5);
        assert_abs_diff_eq!(ev("abs(x1)", &b).unwrap(), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn generic_evaluation_in_f32() {
        let b = VarBinding::new().with(Var::x(1), 3.0f32);
        assert_eq!(parse("x1*x1 - 1").unwrap().eval(&b).unwrap(), 8.0f32);
    }

    #[test]
    fn serde_roundtrip_through_string() {
        let e = parse("-x1^3 + 0.3*w1^2").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}

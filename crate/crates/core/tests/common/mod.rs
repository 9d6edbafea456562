#![allow(dead_code)]

use std::f64::consts::TAU;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use regulab::expr::{BinaryOp, Expr, Family, UnaryOp, Var};

pub const VARS: [Var; 4] = [
    Var::Indexed(Family::W, 1),
    Var::Indexed(Family::W, 2),
    Var::Indexed(Family::X, 1),
    Var::Indexed(Family::X, 2),
];

fn un(op: UnaryOp, a: Expr) -> Expr {
    Expr::Unary(op, Arc::new(a))
}

fn bin(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    Expr::Binary(op, Arc::new(l), Arc::new(r))
}

/// Denominators of the form `2 + sin(..)` stay in `[1, 3]`.
fn safe_den(r: Expr) -> Expr {
    bin(BinaryOp::Add, Expr::Const(2.0), un(UnaryOp::Sin, r))
}

/// Random tree built directly from the enum (no simplification).
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.6) {
            Expr::Var(VARS[rng.random_range(0..VARS.len())])
        } else {
            Expr::Const((rng.random_range(-4.0..4.0f64) * 8.0).round() / 8.0)
        };
    }
    let d = depth - 1;
    match rng.random_range(0..10) {
        0 => un(UnaryOp::Neg, random_expr(rng, d)),
        1 => un(UnaryOp::Sin, random_expr(rng, d)),
        2 => un(UnaryOp::Cos, random_expr(rng, d)),
        3 => un(UnaryOp::Exp, un(UnaryOp::Sin, random_expr(rng, d))),
        4 => un(UnaryOp::Tanh, random_expr(rng, d)),
        5 => Expr::Pow(Arc::new(un(UnaryOp::Tanh, random_expr(rng, d))), rng.random_range(0..4)),
        6 => bin(BinaryOp::Add, random_expr(rng, d), random_expr(rng, d)),
        7 => bin(BinaryOp::Sub, random_expr(rng, d), random_expr(rng, d)),
        8 => bin(BinaryOp::Mul, random_expr(rng, d), random_expr(rng, d)),
        _ => bin(BinaryOp::Div, random_expr(rng, d), safe_den(random_expr(rng, d))),
    }
}

pub fn random_point<R: Rng>(rng: &mut R) -> Vec<f64> {
    VARS.iter().map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn eval_at(e: &Expr, p: &[f64]) -> f64 {
    let b = |v: Var| VARS.iter().position(|&u| u == v).map(|i| p[i]);
    e.eval(&b).expect("all variables bound")
}

/// Same value, treating two NaNs as equal.
pub fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

pub fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0..VARS.len()).prop_map(|i| Expr::Var(VARS[i])),
        (-32i32..32).prop_map(|k| Expr::Const(k as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| un(UnaryOp::Neg, a)),
            inner.clone().prop_map(|a| un(UnaryOp::Sin, a)),
            inner.clone().prop_map(|a| un(UnaryOp::Cos, a)),
            inner.clone().prop_map(|a| un(UnaryOp::Exp, un(UnaryOp::Sin, a))),
            inner.clone().prop_map(|a| un(UnaryOp::Tanh, a)),
            (inner.clone(), 0u32..4).prop_map(|(a, n)| Expr::Pow(Arc::new(un(UnaryOp::Tanh, a)), n)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| bin(BinaryOp::Add, l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| bin(BinaryOp::Sub, l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| bin(BinaryOp::Mul, l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| bin(BinaryOp::Div, l, safe_den(r))),
        ]
    })
}

pub fn arb_point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, VARS.len())
}

/// Central difference with step `h`.
pub fn central_diff(e: &Expr, p: &[f64], axis: usize, h: f64) -> f64 {
    let mut a = p.to_vec();
    let mut b = p.to_vec();
    a[axis] += h;
    b[axis] -= h;
    (eval_at(e, &a) - eval_at(e, &b)) / (2.0 * h)
}

/// `α + Σ (βⁿ sin nt + γⁿ cos nt)` evaluated directly.
pub fn trig_direct(alpha: f64, beta: &[f64], gamma: &[f64], t: f64) -> f64 {
    let mut s = alpha;
    for (n, (b, g)) in beta.iter().zip(gamma).enumerate() {
        let k = (n + 1) as f64;
        s += b * (k * t).sin() + g * (k * t).cos();
    }
    s
}

pub fn uniform_times(m: usize) -> Vec<f64> {
    (0..m).map(|j| TAU * j as f64 / m as f64).collect()
}

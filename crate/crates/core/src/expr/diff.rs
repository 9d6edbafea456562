//! Symbolic differentiation. Only trivial constant folding is applied.

use super::{add, div, mul, pow, sub, unary, BinaryOp, Expr, UnaryOp, Var};

pub(super) fn differentiate(e: &Expr, v: Var) -> Expr {
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(w) => {
            if *w == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Unary(op, a) => {
            let da = differentiate(a, v);
            if da.is_zero() {
                return Expr::zero();
            }
            let a = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return unary(UnaryOp::Neg, da),
                UnaryOp::Sin => unary(UnaryOp::Cos, a),
                UnaryOp::Cos => unary(UnaryOp::Neg, unary(UnaryOp::Sin, a)),
                UnaryOp::Exp => e.clone(),
                // 1 - tanh²
                UnaryOp::Tanh => sub(Expr::one(), pow(e.clone(), 2)),
                // z / sqrt(z² + σ²)
                UnaryOp::AbsSmooth => div(a, e.clone()),
            };
            mul(outer, da)
        }
        Expr::Binary(op, l, r) => {
            let dl = differentiate(l, v);
            let dr = differentiate(r, v);
            let (l, r) = ((**l).clone(), (**r).clone());
            match op {
                BinaryOp::Add => add(dl, dr),
                BinaryOp::Sub => sub(dl, dr),
                BinaryOp::Mul => add(mul(dl, r), mul(l, dr)),
                BinaryOp::Div => {
                    if dr.is_zero() {
                        div(dl, r)
                    } else {
                        div(sub(mul(dl, r.clone()), mul(l, dr)), pow(r, 2))
                    }
                }
            }
        }
        Expr::Pow(a, n) => {
            let da = differentiate(a, v);
            if *n == 0 || da.is_zero() {
                return Expr::zero();
            }
            mul(mul(Expr::Const(*n as f64), pow((**a).clone(), n - 1)), da)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Var, VarBinding};

    fn d_at(text: &str, v: Var, at: f64) -> f64 {
        let e = parse(text).unwrap().differentiate(v);
        e.eval(&VarBinding::new().with(v, at).with(Var::u(1), 0.3)).unwrap()
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(d_at("x1*x1", Var::x(1), 3.0), 6.0);
        assert_eq!(d_at("sin(w1)", Var::w(1), 0.0), 1.0);
        let d = parse("w1").unwrap().differentiate(Var::u(1));
        assert!(d.is_zero());
    }

    #[test]
    fn quotient_and_chain_rules() {
        // d/dx (1/x) = -1/x²
        assert!((d_at("1/x1", Var::x(1), 2.0) + 0.25).abs() < 1e-15);
        // d/dx tanh(2x) at 0 = 2
        assert!((d_at("tanh(2*x1)", Var::x(1), 0.0) - 2.0).abs() < 1e-15);
        // d/dx exp(x²) at 1 = 2e
        assert!((d_at("exp(x1^2)", Var::x(1), 1.0) - 2.0 * std::f64::consts::E).abs() < 1e-14);
        // d/dx abs(x) at -3 ≈ -1
        assert!((d_at("abs(x1)", Var::x(1), -3.0) + 1.0).abs() < 1e-15);
    }
}

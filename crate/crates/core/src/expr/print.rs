use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
        Expr::Const(_) | Expr::Var(_) => PREC_ATOM,
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        Expr::Unary(..) => PREC_ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_MUL,
        Expr::Pow(..) => PREC_POW,
    }
}

fn write_number(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        write!(f, "{}", c)
    } else {
        write!(f, "{:?}", c)
    }
}

fn write_wrapped(e: &Expr, wrap: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_number(*c, f),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                let wrap = matches!(**a, Expr::Const(_)) || precedence(a) < PREC_UNARY;
                write_wrapped(a, wrap, f)
            }
            Expr::Unary(op, a) => {
                let name = op.function_name().expect("named function");
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, l, r) => {
                let p = precedence(self);
                write_wrapped(l, precedence(l) < p, f)?;
                let sym = match op {
                    BinaryOp::Add => " + ",
                    BinaryOp::Sub => " - ",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                f.write_str(sym)?;
                write_wrapped(r, precedence(r) <= p, f)
            }
            Expr::Pow(a, n) => {
                write_wrapped(a, precedence(a) <= PREC_POW, f)?;
                write!(f, "^{n}")
            }
        }
    }
}

use super::Expr;
use std::fmt;

// Precedence levels mirror the grammar: expr < term < factor < unary < atom.
const EXPR: u8 = 0;
const TERM: u8 = 1;
const FACTOR: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 4;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => EXPR,
        Expr::Mul(..) | Expr::Div(..) => TERM,
        Expr::Pow(..) => FACTOR,
        Expr::Neg(_) => UNARY,
        _ => ATOM,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if level(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Num(v) => write!(f, "{v}"),
        Expr::ImagUnit => write!(f, "i"),
        Expr::Var(k) => write!(f, "u{k}"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_at(f, a, ATOM)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write_at(f, a, EXPR)?;
            write!(f, "{}", if matches!(e, Expr::Add(..)) { "+" } else { "-" })?;
            write_at(f, b, TERM)
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write_at(f, a, TERM)?;
            write!(f, "{}", if matches!(e, Expr::Mul(..)) { "*" } else { "/" })?;
            write_at(f, b, FACTOR)
        }
        Expr::Pow(a, b) => {
            write_at(f, a, UNARY)?;
            write!(f, "^")?;
            write_at(f, b, FACTOR)
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

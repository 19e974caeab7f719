//! A small expression language over complex coordinates `u0..up` with
//! truncated multivariate Taylor jets.
//!
//! ```
//! use sbrana::exprlang::{parse, JetSpace};
//! use num_complex::Complex64 as C64;
//!
//! let e = parse("u0^2*u1").unwrap();
//! let space = JetSpace::shared(2, 2);
//! let j = e.jet(&space, &[C64::new(2.0, 0.0), C64::new(3.0, 0.0)]).unwrap();
//! assert_eq!(j.value().re, 12.0);
//! assert_eq!(j.d1(0).re, 12.0);
//! assert_eq!(j.d1(1).re, 4.0);
//! ```

mod jet;
mod parse;
mod print;

pub use jet::{Jet, JetSpace};
pub use parse::{parse, parse_with_vars};

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown symbol `{name}` at position {position}")]
    UnknownSymbol { name: String, position: usize },
    #[error("{func} is not analytic at {re}{im:+}i")]
    Domain { func: &'static str, re: f64, im: f64 },
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }
}

/// Expression tree. `Num` holds the non-negative literals the parser
/// produces; negation is always an explicit `Neg` node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    ImagUnit,
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

fn on_cut(z: C64) -> bool {
    z.im == 0.0 && z.re < 0.0
}

fn as_integer(z: C64) -> Option<i32> {
    if z.im == 0.0 && z.re.fract() == 0.0 && z.re.abs() < 1e6 {
        Some(z.re as i32)
    } else {
        None
    }
}

pub(crate) fn apply_func(f: Func, z: C64) -> Result<C64, ExprError> {
    Ok(match f {
        Func::Sin => z.sin(),
        Func::Cos => z.cos(),
        Func::Sinh => z.sinh(),
        Func::Cosh => z.cosh(),
        Func::Exp => z.exp(),
        Func::Log => {
            if on_cut(z) || z == C64::new(0.0, 0.0) {
                return Err(domain("log", z));
            }
            z.ln()
        }
        Func::Sqrt => {
            if on_cut(z) {
                return Err(domain("sqrt", z));
            }
            z.sqrt()
        }
    })
}

pub(crate) fn domain(func: &'static str, z: C64) -> ExprError {
    ExprError::Domain {
        func,
        re: z.re,
        im: z.im,
    }
}

pub(crate) fn complex_pow(a: C64, b: C64) -> Result<C64, ExprError> {
    if let Some(n) = as_integer(b) {
        if n < 0 && a == C64::new(0.0, 0.0) {
            return Err(ExprError::DivisionByZero);
        }
        return Ok(a.powi(n));
    }
    if a == C64::new(0.0, 0.0) || on_cut(a) {
        return Err(domain("pow", a));
    }
    Ok((b * a.ln()).exp())
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// Largest variable index + 1 (0 for constant expressions).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::ImagUnit => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 0.0)
    }

    /// Plain complex evaluation.
    pub fn eval(&self, x: &[C64]) -> Result<C64, ExprError> {
        Ok(match self {
            Expr::Num(v) => C64::new(*v, 0.0),
            Expr::ImagUnit => C64::new(0.0, 1.0),
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d == C64::new(0.0, 0.0) {
                    return Err(ExprError::DivisionByZero);
                }
                a.eval(x)? / d
            }
            Expr::Pow(a, b) => complex_pow(a.eval(x)?, b.eval(x)?)?,
            Expr::Call(f, a) => apply_func(*f, a.eval(x)?)?,
        })
    }

    pub fn eval_real(&self, x: &[f64]) -> Result<C64, ExprError> {
        let z: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.eval(&z)
    }

    /// Truncated Taylor jet at `x` in the given space.
    pub fn jet(&self, space: &std::sync::Arc<JetSpace>, x: &[C64]) -> Result<Jet, ExprError> {
        let vars: Vec<Jet> = (0..space.nvars())
            .map(|i| Jet::variable(space, i, x[i]))
            .collect();
        self.jet_with(space, &vars)
    }

    pub fn jet_with(&self, space: &std::sync::Arc<JetSpace>, vars: &[Jet]) -> Result<Jet, ExprError> {
        Ok(match self {
            Expr::Num(v) => Jet::constant(space, C64::new(*v, 0.0)),
            Expr::ImagUnit => Jet::constant(space, C64::new(0.0, 1.0)),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Neg(a) => -&a.jet_with(space, vars)?,
            Expr::Add(a, b) => &a.jet_with(space, vars)? + &b.jet_with(space, vars)?,
            Expr::Sub(a, b) => &a.jet_with(space, vars)? - &b.jet_with(space, vars)?,
            Expr::Mul(a, b) => &a.jet_with(space, vars)? * &b.jet_with(space, vars)?,
            Expr::Div(a, b) => a.jet_with(space, vars)?.div(&b.jet_with(space, vars)?)?,
            Expr::Pow(a, b) => a.jet_with(space, vars)?.pow(&b.jet_with(space, vars)?)?,
            Expr::Call(f, a) => a.jet_with(space, vars)?.apply(*f)?,
        })
    }
}

// Independent derivative oracles: a symbolic differentiator over the AST and
// Richardson-extrapolated central differences.
use num_complex::Complex64 as C64;
use sbrana::exprlang::{Expr, Func};

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn is_const(e: &Expr) -> bool {
    e.arity() == 0 && !contains_var(e)
}

fn contains_var(e: &Expr) -> bool {
    match e {
        Expr::Var(_) => true,
        Expr::Num(_) | Expr::ImagUnit => false,
        Expr::Neg(a) | Expr::Call(_, a) => contains_var(a),
        Expr::Add(a, c) | Expr::Sub(a, c) | Expr::Mul(a, c) | Expr::Div(a, c) | Expr::Pow(a, c) => {
            contains_var(a) || contains_var(c)
        }
    }
}

pub fn sym_diff(e: &Expr, v: usize) -> Expr {
    use Expr::*;
    match e {
        Num(_) | ImagUnit => Num(0.0),
        Var(k) => Num(if *k == v { 1.0 } else { 0.0 }),
        Neg(a) => Neg(b(sym_diff(a, v))),
        Add(x, y) => Add(b(sym_diff(x, v)), b(sym_diff(y, v))),
        Sub(x, y) => Sub(b(sym_diff(x, v)), b(sym_diff(y, v))),
        Mul(x, y) => Add(
            b(Mul(b(sym_diff(x, v)), y.clone())),
            b(Mul(x.clone(), b(sym_diff(y, v)))),
        ),
        Div(x, y) => Sub(
            b(Div(b(sym_diff(x, v)), y.clone())),
            b(Div(b(Mul(x.clone(), b(sym_diff(y, v)))), b(Mul(y.clone(), y.clone())))),
        ),
        Pow(x, y) if is_const(y) => Mul(
            b(Mul(y.clone(), b(Pow(x.clone(), b(Sub(y.clone(), b(Num(1.0)))))))),
            b(sym_diff(x, v)),
        ),
        Pow(x, y) => Mul(
            b(e.clone()),
            b(Add(
                b(Mul(b(sym_diff(y, v)), b(Call(Func::Log, x.clone())))),
                b(Div(b(Mul(y.clone(), b(sym_diff(x, v)))), x.clone())),
            )),
        ),
        Call(f, a) => {
            let outer = match f {
                Func::Sin => Call(Func::Cos, a.clone()),
                Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                Func::Sinh => Call(Func::Cosh, a.clone()),
                Func::Cosh => Call(Func::Sinh, a.clone()),
                Func::Exp => Call(Func::Exp, a.clone()),
                Func::Log => Div(b(Num(1.0)), a.clone()),
                Func::Sqrt => Div(b(Num(0.5)), b(Call(Func::Sqrt, a.clone()))),
            };
            Mul(b(outer), b(sym_diff(a, v)))
        }
    }
}

/// First derivative along `v` by two-level Richardson extrapolation.
pub fn richardson_d1(e: &Expr, x: &[C64], v: usize) -> C64 {
    let central = |h: f64| {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[v] += h;
        xm[v] -= h;
        (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h)
    };
    let h = 1e-2;
    let r = |h: f64| (central(h / 2.0) * 4.0 - central(h)) / 3.0;
    (r(h / 2.0) * 16.0 - r(h)) / 15.0
}

/// Mixed second derivative by Richardson extrapolation of the 4-point stencil.
pub fn richardson_d2(e: &Expr, x: &[C64], i: usize, j: usize) -> C64 {
    let f = |di: f64, dj: f64| {
        let mut y = x.to_vec();
        y[i] += di;
        y[j] += dj;
        e.eval(&y).unwrap()
    };
    let stencil = |h: f64| {
        if i == j {
            (f(h, 0.0) - f(0.0, 0.0) * 2.0 + f(-h, 0.0)) / (h * h)
        } else {
            (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)
        }
    };
    let h = 2e-2;
    let r = |h: f64| (stencil(h / 2.0) * 4.0 - stencil(h)) / 3.0;
    (r(h / 2.0) * 16.0 - r(h)) / 15.0
}

mod common;

use common::corpus::CORPUS;
use common::oracle::{richardson_d1, richardson_d2, sym_diff};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use sbrana::exprlang::{parse, parse_with_vars, Expr, ExprError, Func, JetSpace};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn pt(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| c(v)).collect()
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

#[test]
fn monomial_jet_matches_hand_values() {
    let e = parse("u0^2*u1").unwrap();
    let j = e.jet(&JetSpace::shared(2, 2), &pt(&[2.0, 3.0])).unwrap();
    assert_eq!(j.value(), c(12.0));
    assert_eq!(j.d1(0), c(12.0));
    assert_eq!(j.d1(1), c(4.0));
    assert_eq!(j.d2(0, 0), c(6.0));
    assert_eq!(j.d2(0, 1), c(4.0));
    assert_eq!(j.d2(1, 1), c(0.0));
}

#[test]
fn sine_jet_at_zero() {
    let e = parse("sin(u0)").unwrap();
    let j = e.jet(&JetSpace::shared(1, 3), &[c(0.0)]).unwrap();
    assert_eq!(j.value(), c(0.0));
    assert_eq!(j.d1(0), c(1.0));
    assert_eq!(j.d2(0, 0), c(0.0));
    assert!(close(j.partial(&[3]), c(-1.0), 1e-15));
}

#[test]
fn syntax_error_position() {
    assert_eq!(
        parse("sin("),
        Err(ExprError::Syntax {
            position: 4,
            expected: "number, identifier or `(`".into()
        })
    );
    assert!(matches!(parse("u0 +* u1"), Err(ExprError::Syntax { position: 4, .. })));
    assert!(matches!(parse("(u0"), Err(ExprError::Syntax { position: 3, .. })));
    assert!(matches!(parse("u0 u1"), Err(ExprError::Syntax { position: 3, .. })));
}

#[test]
fn unknown_symbols() {
    assert!(matches!(parse("tan(u0)"), Err(ExprError::UnknownSymbol { .. })));
    assert!(matches!(parse("x + 1"), Err(ExprError::UnknownSymbol { .. })));
    assert!(matches!(
        parse_with_vars("u0 + u3", 3),
        Err(ExprError::UnknownSymbol { position: 5, .. })
    ));
    assert!(parse_with_vars("u0 + u2", 3).is_ok());
}

#[test]
fn domain_and_division_errors() {
    let sp = JetSpace::shared(1, 2);
    for (src, at) in [("log(u0)", -1.0), ("sqrt(u0)", -4.0), ("log(u0)", 0.0)] {
        let e = parse(src).unwrap();
        assert!(matches!(e.jet(&sp, &[c(at)]), Err(ExprError::Domain { .. })), "{src}");
        assert!(matches!(e.eval(&[c(at)]), Err(ExprError::Domain { .. })), "{src}");
    }
    // off the cut a negative real part is fine
    let e = parse("log(u0)").unwrap();
    assert!(e.jet(&sp, &[C64::new(-1.0, 0.5)]).is_ok());
    let e = parse("1/u0").unwrap();
    assert_eq!(e.jet(&sp, &[c(0.0)]).unwrap_err(), ExprError::DivisionByZero);
    let e = parse("1/(u0 - u0)").unwrap();
    assert_eq!(e.eval(&[c(3.0)]).unwrap_err(), ExprError::DivisionByZero);
}

#[test]
fn printing_inserts_needed_parentheses() {
    let e = Expr::Pow(
        Box::new(Expr::Var(0)),
        Box::new(Expr::Add(Box::new(Expr::Num(1.0)), Box::new(Expr::Num(1.0)))),
    );
    assert_eq!(e.to_string(), "u0^(1+1)");
    let e = Expr::Mul(
        Box::new(Expr::Call(Func::Sin, Box::new(Expr::Var(0)))),
        Box::new(Expr::Var(1)),
    );
    assert_eq!(e.to_string(), "sin(u0)*u1");
    assert_eq!(parse("u0-(u1-u2)").unwrap().to_string(), "u0-(u1-u2)");
    assert_eq!(parse("2^3^2").unwrap().eval(&[]).unwrap(), c(512.0));
    assert_eq!(parse("(2^3)^2").unwrap().to_string(), "(2^3)^2");
}

#[test]
fn unary_minus_binds_tighter_than_power() {
    // factor := unary ('^' factor)?, so -u0^2 is (-u0)^2
    let e = parse("-u0^2").unwrap();
    assert_eq!(e.eval(&[c(3.0)]).unwrap(), c(9.0));
    assert_eq!(parse("0-u0^2").unwrap().eval(&[c(3.0)]).unwrap(), c(-9.0));
}

#[test]
fn imaginary_unit_and_principal_branch() {
    let e = parse("(u0 + i*u1)^0.5").unwrap();
    let z = e.eval(&[c(0.0), c(2.0)]).unwrap();
    assert!(close(z, C64::new(1.0, 1.0), 1e-15));
    let e = parse("u0^0.5").unwrap();
    let j = e.jet(&JetSpace::shared(1, 1), &[C64::new(-4.0, 1e-300)]).unwrap();
    assert!(close(j.value(), C64::new(0.0, 2.0), 1e-12));
}

#[test]
fn corpus_first_derivatives_against_richardson() {
    for (src, x, _) in CORPUS {
        let e = parse_with_vars(src, 3).unwrap();
        let x = pt(x);
        let j = e.jet(&JetSpace::shared(3, 2), &x).unwrap();
        assert!(close(j.value(), e.eval(&x).unwrap(), 1e-14), "{src}");
        for v in 0..3 {
            let fd = richardson_d1(&e, &x, v);
            assert!(close(j.d1(v), fd, 1e-6), "{src} d{v}: {} vs {}", j.d1(v), fd);
        }
    }
}

#[test]
fn corpus_second_derivatives_against_oracles() {
    for (src, x, _) in CORPUS {
        let e = parse_with_vars(src, 3).unwrap();
        let x = pt(x);
        let j = e.jet(&JetSpace::shared(3, 3), &x).unwrap();
        for a in 0..3 {
            for b in a..3 {
                let sym = sym_diff(&sym_diff(&e, a), b).eval(&x).unwrap();
                assert!(close(j.d2(a, b), sym, 1e-10), "{src} d{a}{b}");
                let fd = richardson_d2(&e, &x, a, b);
                assert!(close(j.d2(a, b), fd, 1e-6), "{src} d{a}{b}: {} vs {fd}", j.d2(a, b));
            }
        }
    }
}

#[test]
fn polynomials_are_exact() {
    for (src, x, poly) in CORPUS {
        if !poly {
            continue;
        }
        let e = parse_with_vars(src, 3).unwrap();
        let x = pt(x);
        let j = e.jet(&JetSpace::shared(3, 3), &x).unwrap();
        for a in 0..3 {
            let d = sym_diff(&e, a);
            assert!(close(j.d1(a), d.eval(&x).unwrap(), 1e-12), "{src}");
            for bb in 0..3 {
                for cc in 0..3 {
                    let d3 = sym_diff(&sym_diff(&d, bb), cc).eval(&x).unwrap();
                    let mut m = [0u8; 3];
                    m[a] += 1;
                    m[bb] += 1;
                    m[cc] += 1;
                    assert!(close(j.partial(&m), d3, 1e-12), "{src}");
                }
            }
        }
    }
}

#[test]
fn derivative_of_jet_matches_higher_partials() {
    let e = parse("exp(u0*u1)*sin(u1)").unwrap();
    let j = e.jet(&JetSpace::shared(2, 4), &pt(&[0.3, 0.7])).unwrap();
    let dj = j.deriv(1);
    assert_eq!(dj.order(), 3);
    assert!(close(dj.d2(0, 1), j.partial(&[1, 2]), 1e-14));
    assert!(close(dj.value(), j.d1(1), 1e-14));
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|k| Expr::Num(k as f64 / 8.0)),
        Just(Expr::ImagUnit),
        (0usize..3).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Pow(Box::new(a), Box::new(b))),
            (0usize..7, inner).prop_map(|(f, a)| Expr::Call(Func::ALL[f], Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in arb_expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse(&text).unwrap(), e);
    }

    #[test]
    fn jet_arithmetic_is_linear_and_multiplicative(
        x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, s in -3.0f64..3.0,
    ) {
        let sp = JetSpace::shared(2, 3);
        let x = pt(&[x0, x1]);
        let f = parse("sin(u0)*u1 + u0^2").unwrap().jet(&sp, &x).unwrap();
        let g = parse("exp(u1) - u0*u1").unwrap().jet(&sp, &x).unwrap();
        let lin = &f.scale(c(s)) + &g;
        let prod = &f * &g;
        for a in 0..2 {
            prop_assert!(close(lin.d1(a), f.d1(a) * s + g.d1(a), 1e-12));
            prop_assert!(close(prod.d1(a), f.d1(a) * g.value() + f.value() * g.d1(a), 1e-12));
            for b in 0..2 {
                let leibniz = f.d2(a, b) * g.value() + f.d1(a) * g.d1(b)
                    + f.d1(b) * g.d1(a) + f.value() * g.d2(a, b);
                prop_assert!(close(prod.d2(a, b), leibniz, 1e-12));
            }
        }
    }
}

// Expressions in u0, u1, u2 with an evaluation point where each is analytic.
// The bool marks polynomials.
pub const CORPUS: &[(&str, [f64; 3], bool)] = &[
    ("u0^2*u1", [2.0, 3.0, 0.0], true),
    ("u0*u1*u2", [0.3, -1.2, 2.0], true),
    ("u0^3 - 2*u0*u1 + 5", [1.1, 0.4, 0.0], true),
    ("(u0+u1)^4", [0.2, 0.7, 0.0], true),
    ("u0^5*u2^2 - u1^3", [0.9, -0.5, 1.3], true),
    ("-u0^2 + 3*u1*u2 - 7", [0.4, 0.8, -0.6], true),
    ("(1 - u0)*(1 + u1)*(2 - u2)", [0.1, 0.2, 0.3], true),
    ("u0*(u1 - u2)^3", [1.5, 0.25, -0.75], true),
    ("2.5*u0^2*u1^2 + 0.125", [-1.0, 1.0, 0.0], true),
    ("(u0*u1 + u2)^2 - u0", [0.6, -0.3, 0.9], true),
    ("3*u0 - 4*u1 + u2/2", [0.5, 0.5, 0.5], true),
    ("sin(u0)", [0.0, 0.0, 0.0], false),
    ("cos(u0*u1)", [0.7, 1.3, 0.0], false),
    ("sinh(u0 - u1)", [0.4, -0.2, 0.0], false),
    ("cosh(2*u2)", [0.0, 0.0, 0.35], false),
    ("exp(u0 + u1*u2)", [0.1, 0.5, -0.4], false),
    ("log(1 + u0^2)", [0.8, 0.0, 0.0], false),
    ("sqrt(2 + u0*u1)", [0.6, 0.9, 0.0], false),
    ("1/(1 + u0^2 + u1^2)", [0.3, -0.4, 0.0], false),
    ("u0/(u1 + 3)", [1.2, 0.5, 0.0], false),
    ("sin(u0)*cos(u1)", [0.9, -0.3, 0.0], false),
    ("exp(-u0^2)*u1", [0.5, 2.0, 0.0], false),
    ("log(u0)*u1^2", [1.7, 0.6, 0.0], false),
    ("u0^0.5", [2.3, 0.0, 0.0], false),
    ("u0^1.5*u1", [0.7, 1.4, 0.0], false),
    ("u0^u1", [1.3, 0.8, 0.0], false),
    ("(1 + u0)^(-2)", [0.4, 0.0, 0.0], false),
    ("sqrt(u0^2 + u1^2 + u2^2)", [1.0, 2.0, 2.0], false),
    ("sin(u0 + u1 + u2)^2", [0.2, 0.3, 0.4], false),
    ("cos(u0)^3 - sin(u1)^3", [0.5, 1.1, 0.0], false),
    ("sin(u0)/cos(u0)", [0.3, 0.0, 0.0], false),
    ("exp(sin(u0))", [0.6, 0.0, 0.0], false),
    ("log(cosh(u0) + u1^2)", [0.3, 0.7, 0.0], false),
    ("sinh(u0)/cosh(u0)", [0.45, 0.0, 0.0], false),
    ("u0*exp(u1)*sin(u2)", [1.2, -0.3, 0.8], false),
    ("1/sqrt(1 + u0*u1*u2)", [0.5, 0.5, 0.5], false),
    ("(u0 - u1)/(u0 + u1)", [2.0, 0.5, 0.0], false),
    ("exp(u0)^2 - exp(2*u0)", [0.3, 0.0, 0.0], false),
    ("cos(u0)^2 + sin(u0)^2", [1.234, 0.0, 0.0], false),
    ("log(exp(u0) + exp(u1))", [0.1, 0.9, 0.0], false),
    ("sqrt(u0)*sqrt(u1)", [0.8, 1.9, 0.0], false),
    ("u0^(1/3)", [3.0, 0.0, 0.0], false),
    ("2^u0", [0.7, 0.0, 0.0], false),
    ("sin(cos(u0*u1))", [0.4, 0.6, 0.0], false),
    ("u1*log(u0 + u1 + u2)", [0.5, 1.0, 1.5], false),
    ("exp(-u0)*cos(u1) + u2", [0.2, 0.3, 0.4], false),
    ("(u0^2 + 1)^(-1.5)", [0.6, 0.0, 0.0], false),
    ("sinh(u0)*cosh(u1) - cosh(u0)*sinh(u1)", [0.8, 0.3, 0.0], false),
    ("u2/(u0^2 + u1^2)", [1.0, 1.0, 2.0], false),
    ("exp(u0*u1*u2)/(1 + u2^2)", [0.4, 0.5, 0.6], false),
];

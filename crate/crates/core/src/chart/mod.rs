//! Conjugate charts: Christoffel table, metric, optional immersion and
//! support function, together with the DMZ operator and the residual checks
//! built on it.

mod file;
mod grid;

pub use file::{parse_chart_file, ChartFile, CurveSection};
pub use grid::{jacobian, to_complex, Grid};

use crate::exprlang::{ExprError, Jet, JetSpace};
use crate::exprlang::{parse_with_vars, Expr};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: in `{key}`: {source}")]
    Expr {
        line: usize,
        key: String,
        source: ExprError,
    },
    #[error("evaluating {what}: {source}")]
    Eval { what: String, source: ExprError },
    #[error("invalid chart: {0}")]
    Invalid(String),
    #[error("conjugation symmetry broken in {table}: {detail}")]
    Conjugation { table: String, detail: String },
    #[error("chart has no {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ambient {
    Sphere,
    Hyperbolic,
}

impl Ambient {
    pub fn eps(self) -> f64 {
        match self {
            Ambient::Sphere => 1.0,
            Ambient::Hyperbolic => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConjugateChart {
    pub name: String,
    p: usize,
    conj: Vec<usize>,
    ambient: Ambient,
    // gamma[j][i] holds Γ_{ji}^i (i != j); None means identically zero
    gamma: Vec<Vec<Option<Expr>>>,
    // symmetric; None means identically zero
    metric: Vec<Vec<Option<Expr>>>,
    immersion: Option<Vec<Expr>>,
    support: Option<Expr>,
    pub grid: Grid,
}

/// Jets of the chart data at one point.
#[derive(Debug, Clone)]
pub struct ChartJets {
    pub space: Arc<JetSpace>,
    pub point: Vec<C64>,
    pub gamma: Vec<Vec<Jet>>,
    pub metric: Vec<Vec<Jet>>,
    pub eps: f64,
}

impl ChartJets {
    /// Γ_{ji}^i
    pub fn g(&self, j: usize, i: usize) -> &Jet {
        &self.gamma[j][i]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub max: f64,
    pub worst: Option<[usize; 3]>,
    pub vacuous: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceInvariants {
    /// (i, j, m_ij) for ordered pairs i != j
    pub m2: Vec<(usize, usize, C64)>,
    /// (i, j, k, m_ijk) for distinct triples
    pub m3: Vec<(usize, usize, usize, C64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometricReport {
    pub metric: f64,
    pub norm: f64,
    pub dmz: f64,
}

impl GeometricReport {
    pub fn max(&self) -> f64 {
        self.metric.max(self.norm).max(self.dmz)
    }
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Ambient bilinear product with the sign convention of the ambient space form:
/// Euclidean for the sphere, `-+++…` for hyperbolic space.
pub fn ambient_dot(eps: f64, a: &[C64], b: &[C64]) -> C64 {
    let mut s = zero();
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let sign = if k == 0 && eps < 0.0 { -1.0 } else { 1.0 };
        s += x * y * sign;
    }
    s
}

impl ConjugateChart {
    /// Empty chart (all tables zero) with the given conjugation involution.
    pub fn new(p: usize, conj: Vec<usize>, ambient: Ambient) -> Result<ConjugateChart, ChartError> {
        let n = p + 1;
        if conj.len() != n {
            return Err(ChartError::Invalid(format!(
                "conjugation has {} entries, expected {n}",
                conj.len()
            )));
        }
        for (i, &j) in conj.iter().enumerate() {
            if j >= n || conj[j] != i {
                return Err(ChartError::Invalid("conjugation is not an involution".into()));
            }
        }
        Ok(ConjugateChart {
            name: String::new(),
            p,
            conj,
            ambient,
            gamma: vec![vec![None; n]; n],
            metric: vec![vec![None; n]; n],
            immersion: None,
            support: None,
            grid: Grid::cube(n, -0.5, 0.5, 8),
        })
    }

    pub fn real(p: usize) -> ConjugateChart {
        ConjugateChart::new(p, (0..=p).collect(), Ambient::Sphere).unwrap()
    }

    fn parse_expr(&self, src: &str, key: &str) -> Result<Expr, ChartError> {
        parse_with_vars(src, self.p + 1).map_err(|e| ChartError::Expr {
            line: 0,
            key: key.to_string(),
            source: e,
        })
    }

    /// Sets Γ_{ji}^i.
    pub fn set_gamma(&mut self, j: usize, i: usize, e: Expr) -> Result<(), ChartError> {
        if i == j || i > self.p || j > self.p {
            return Err(ChartError::Invalid(format!("no Christoffel entry G_{j}_{i}")));
        }
        self.gamma[j][i] = if e.is_zero_literal() { None } else { Some(e) };
        Ok(())
    }

    pub fn with_gamma(mut self, j: usize, i: usize, src: &str) -> Result<Self, ChartError> {
        let e = self.parse_expr(src, &format!("G_{j}_{i}"))?;
        self.set_gamma(j, i, e)?;
        Ok(self)
    }

    pub fn set_metric(&mut self, i: usize, j: usize, e: Expr) -> Result<(), ChartError> {
        if i > self.p || j > self.p {
            return Err(ChartError::Invalid(format!("no metric entry g_{i}_{j}")));
        }
        let v = if e.is_zero_literal() { None } else { Some(e) };
        self.metric[i][j] = v.clone();
        self.metric[j][i] = v;
        Ok(())
    }

    pub fn with_metric(mut self, i: usize, j: usize, src: &str) -> Result<Self, ChartError> {
        let e = self.parse_expr(src, &format!("g_{i}_{j}"))?;
        self.set_metric(i, j, e)?;
        Ok(self)
    }

    pub fn set_immersion(&mut self, h: Vec<Expr>) {
        self.immersion = Some(h);
    }

    pub fn with_immersion(mut self, h: &[&str]) -> Result<Self, ChartError> {
        let v = h
            .iter()
            .enumerate()
            .map(|(k, s)| self.parse_expr(s, &format!("h_{k}")))
            .collect::<Result<Vec<_>, _>>()?;
        self.immersion = Some(v);
        Ok(self)
    }

    pub fn set_support(&mut self, gamma: Expr) {
        self.support = Some(gamma);
    }

    pub fn with_support(mut self, src: &str) -> Result<Self, ChartError> {
        self.support = Some(self.parse_expr(src, "gamma")?);
        Ok(self)
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn dim(&self) -> usize {
        self.p + 1
    }
    pub fn conj(&self) -> &[usize] {
        &self.conj
    }
    pub fn ambient(&self) -> Ambient {
        self.ambient
    }
    pub fn eps(&self) -> f64 {
        self.ambient.eps()
    }
    /// Number of conjugate pairs.
    pub fn s(&self) -> usize {
        self.conj.iter().enumerate().filter(|(i, &j)| *i < j).count()
    }
    pub fn is_real(&self) -> bool {
        self.s() == 0
    }
    pub fn gamma_expr(&self, j: usize, i: usize) -> Option<&Expr> {
        self.gamma[j][i].as_ref()
    }
    pub fn metric_expr(&self, i: usize, j: usize) -> Option<&Expr> {
        self.metric[i][j].as_ref()
    }
    pub fn immersion(&self) -> Option<&[Expr]> {
        self.immersion.as_deref()
    }
    pub fn support(&self) -> Option<&Expr> {
        self.support.as_ref()
    }
    pub fn has_christoffel_data(&self) -> bool {
        self.gamma.iter().flatten().any(|e| e.is_some())
    }

    /// Complex coordinates of a real parameter vector.
    pub fn point(&self, t: &[f64]) -> Vec<C64> {
        to_complex(&self.conj, t)
    }

    pub fn base_point(&self) -> Vec<C64> {
        self.point(&self.grid.base)
    }

    pub fn sample_points(&self) -> Vec<Vec<C64>> {
        self.grid.all_params().iter().map(|t| self.point(t)).collect()
    }

    fn jet_of(&self, e: Option<&Expr>, space: &Arc<JetSpace>, x: &[C64], what: &str) -> Result<Jet, ChartError> {
        match e {
            None => Ok(Jet::constant(space, zero())),
            Some(e) => e.jet(space, x).map_err(|source| ChartError::Eval {
                what: what.to_string(),
                source,
            }),
        }
    }

    pub fn jets(&self, x: &[C64], order: usize) -> Result<ChartJets, ChartError> {
        let n = self.dim();
        let space = JetSpace::shared(n, order);
        let mut gamma = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = Vec::with_capacity(n);
            for i in 0..n {
                row.push(self.jet_of(self.gamma[j][i].as_ref(), &space, x, &format!("G_{j}_{i}"))?);
            }
            gamma.push(row);
        }
        let mut metric = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(self.jet_of(self.metric[i][j].as_ref(), &space, x, &format!("g_{i}_{j}"))?);
            }
            metric.push(row);
        }
        Ok(ChartJets {
            space,
            point: x.to_vec(),
            gamma,
            metric,
            eps: self.eps(),
        })
    }

    /// Γ_{ji}^i values (order-0 evaluation), `out[j][i]`.
    pub fn gamma_values(&self, x: &[C64]) -> Result<Vec<Vec<C64>>, ChartError> {
        let n = self.dim();
        let mut out = vec![vec![zero(); n]; n];
        for j in 0..n {
            for i in 0..n {
                if let Some(e) = &self.gamma[j][i] {
                    out[j][i] = e.eval(x).map_err(|source| ChartError::Eval {
                        what: format!("G_{j}_{i}"),
                        source,
                    })?;
                }
            }
        }
        Ok(out)
    }

    pub fn immersion_jets(&self, x: &[C64], order: usize) -> Result<Vec<Jet>, ChartError> {
        let h = self.immersion.as_ref().ok_or(ChartError::Missing("immersion"))?;
        let space = JetSpace::shared(self.dim(), order);
        h.iter()
            .enumerate()
            .map(|(k, e)| self.jet_of(Some(e), &space, x, &format!("h_{k}")))
            .collect()
    }

    pub fn support_jet(&self, x: &[C64], order: usize) -> Result<Jet, ChartError> {
        let g = self.support.as_ref().ok_or(ChartError::Missing("support function"))?;
        self.jet_of(Some(g), &JetSpace::shared(self.dim(), order), x, "gamma")
    }

    /// `Q_ij(ξ)` for all ordered pairs (diagonal left zero). `xi` must carry
    /// second derivatives.
    pub fn dmz_apply(&self, cj: &ChartJets, xi: &Jet) -> Vec<Vec<C64>> {
        let n = self.dim();
        let mut q = vec![vec![zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                q[i][j] = xi.d2(i, j) - cj.g(j, i).value() * xi.d1(i) - cj.g(i, j).value() * xi.d1(j)
                    + cj.metric[i][j].value() * cj.eps * xi.value();
            }
        }
        q
    }

    /// Max |Q_ij(ξ)| over pairs and over the given points.
    pub fn dmz_residual(&self, xi: &Expr, points: &[Vec<C64>]) -> Result<f64, ChartError> {
        let mut worst = 0.0f64;
        for x in points {
            let cj = self.jets(x, 0)?;
            let j = self.jet_of(Some(xi), &JetSpace::shared(self.dim(), 2), x, "function")?;
            for row in self.dmz_apply(&cj, &j) {
                for v in row {
                    worst = worst.max(v.norm());
                }
            }
        }
        Ok(worst)
    }

    /// Residual of the compatibility identity among Γ and g for distinct
    /// triples; vacuous when p = 1.
    pub fn integrability_at(&self, cj: &ChartJets) -> IntegrabilityReport {
        let n = self.dim();
        let mut rep = IntegrabilityReport {
            max: 0.0,
            worst: None,
            vacuous: n < 3,
        };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let g = |a: usize, b: usize| cj.g(a, b).value();
                    let r = cj.g(k, j).d1(i) + g(k, j) * g(i, j) - g(k, j) * g(i, k) - g(i, j) * g(k, i)
                        + cj.metric[i][k].value() * cj.eps;
                    if r.norm() > rep.max || rep.worst.is_none() {
                        rep.max = rep.max.max(r.norm());
                        rep.worst = Some([i, j, k]);
                    }
                }
            }
        }
        rep
    }

    pub fn integrability_residual(&self, x: &[C64]) -> Result<IntegrabilityReport, ChartError> {
        Ok(self.integrability_at(&self.jets(x, 1)?))
    }

    /// Max integrability residual over the chart grid.
    pub fn integrability_on_grid(&self) -> Result<IntegrabilityReport, ChartError> {
        let mut out = IntegrabilityReport {
            max: 0.0,
            worst: None,
            vacuous: self.dim() < 3,
        };
        for x in self.sample_points() {
            let r = self.integrability_residual(&x)?;
            if r.max >= out.max {
                out.max = r.max;
                out.worst = r.worst;
            }
        }
        Ok(out)
    }

    /// Laplace invariants with `a_ij^j = -Γ_ij^j`, `b_ij = ε g_ij`.
    pub fn laplace_invariants(&self, x: &[C64]) -> Result<LaplaceInvariants, ChartError> {
        let cj = self.jets(x, 1)?;
        let n = self.dim();
        let a = |i: usize, j: usize| -cj.g(i, j).value();
        let mut m2 = Vec::new();
        let mut m3 = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // m_ij = ∂_i a_ji^i + a_ji^i a_ij^j - b_ij
                let m = -cj.g(j, i).d1(i) + a(j, i) * a(i, j) - cj.metric[i][j].value() * cj.eps;
                m2.push((i, j, m));
                for k in 0..n {
                    if k != i && k != j {
                        // a_kj^k = -Γ_jk^k, a_ij^i = -Γ_ji^i
                        m3.push((i, j, k, a(j, k) - a(j, i)));
                    }
                }
            }
        }
        Ok(LaplaceInvariants { m2, m3 })
    }

    /// `|∂_1Γ_01^1 - Γ_10^0 Γ_01^1 + ε g_01|` for p = 1.
    pub fn intersection_type_residual(&self, x: &[C64]) -> Result<f64, ChartError> {
        if self.p != 1 {
            return Err(ChartError::Invalid("intersection type is defined for p = 1".into()));
        }
        let cj = self.jets(x, 1)?;
        let r = cj.g(0, 1).d1(1) - cj.g(1, 0).value() * cj.g(0, 1).value()
            + cj.metric[0][1].value() * cj.eps;
        Ok(r.norm())
    }

    pub fn intersection_type_on_grid(&self) -> Result<f64, ChartError> {
        let mut m = 0.0f64;
        for x in self.sample_points() {
            m = m.max(self.intersection_type_residual(&x)?);
        }
        Ok(m)
    }

    /// Checks `g_ij = <∂_i h, ∂_j h>`, `<h,h> = ε` and `Q(h) = 0` on the given points.
    pub fn geometric_consistency(&self, points: &[Vec<C64>]) -> Result<GeometricReport, ChartError> {
        let n = self.dim();
        let mut rep = GeometricReport {
            metric: 0.0,
            norm: 0.0,
            dmz: 0.0,
        };
        let eps = self.eps();
        for x in points {
            let h = self.immersion_jets(x, 2)?;
            let cj = self.jets(x, 0)?;
            let val: Vec<C64> = h.iter().map(|j| j.value()).collect();
            rep.norm = rep.norm.max((ambient_dot(eps, &val, &val) - eps).norm());
            let d: Vec<Vec<C64>> = (0..n).map(|i| h.iter().map(|j| j.d1(i)).collect()).collect();
            for i in 0..n {
                for j in i..n {
                    let r = cj.metric[i][j].value() - ambient_dot(eps, &d[i], &d[j]);
                    rep.metric = rep.metric.max(r.norm());
                }
            }
            for comp in &h {
                for row in self.dmz_apply(&cj, comp) {
                    for v in row {
                        rep.dmz = rep.dmz.max(v.norm());
                    }
                }
            }
        }
        Ok(rep)
    }

    /// Verifies that the tables respect the conjugation on real-form sample
    /// points: Γ_{j̄ī}^ī = conj(Γ_{ji}^i), g_{īj̄} = conj(g_ij), and that the
    /// immersion and support function take real values.
    pub fn check_conjugation(&self, tol: f64) -> Result<(), ChartError> {
        let n = self.dim();
        let c = &self.conj;
        for x in self.sample_points() {
            let gv = self.gamma_values(&x)?;
            for j in 0..n {
                for i in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = (gv[c[j]][c[i]] - gv[j][i].conj()).norm();
                    if d > tol * (1.0 + gv[j][i].norm()) {
                        return Err(ChartError::Conjugation {
                            table: "christoffel".into(),
                            detail: format!("G_{}_{} is not the conjugate of G_{j}_{i}", c[j], c[i]),
                        });
                    }
                }
            }
            for i in 0..n {
                for j in i..n {
                    let ev = |a: usize, b: usize| -> Result<C64, ChartError> {
                        match &self.metric[a][b] {
                            None => Ok(zero()),
                            Some(e) => e.eval(&x).map_err(|source| ChartError::Eval {
                                what: format!("g_{a}_{b}"),
                                source,
                            }),
                        }
                    };
                    let (gij, gbar) = (ev(i, j)?, ev(c[i], c[j])?);
                    if (gbar - gij.conj()).norm() > tol * (1.0 + gij.norm()) {
                        return Err(ChartError::Conjugation {
                            table: "metric".into(),
                            detail: format!("g_{}_{} is not the conjugate of g_{i}_{j}", c[i], c[j]),
                        });
                    }
                }
            }
            if let Some(h) = &self.immersion {
                for (k, e) in h.iter().enumerate() {
                    let v = e.eval(&x).map_err(|source| ChartError::Eval {
                        what: format!("h_{k}"),
                        source,
                    })?;
                    if v.im.abs() > tol * (1.0 + v.re.abs()) {
                        return Err(ChartError::Conjugation {
                            table: "immersion".into(),
                            detail: format!("h_{k} is not real on the real form"),
                        });
                    }
                }
            }
            if let Some(g) = &self.support {
                let v = g.eval(&x).map_err(|source| ChartError::Eval {
                    what: "gamma".into(),
                    source,
                })?;
                if v.im.abs() > tol * (1.0 + v.re.abs()) {
                    return Err(ChartError::Conjugation {
                        table: "support".into(),
                        detail: "gamma is not real on the real form".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

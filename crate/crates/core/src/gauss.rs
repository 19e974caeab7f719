//! Gauss parametrization `ψ(x, w) = γh + ∇γ + w` of a rank p+1 hypersurface
//! of Euclidean space from its spherical Gauss image `h: L^{p+1} → S^n` and
//! support function `γ`, together with the operator `P_w`, splitting tensors,
//! a genericity test and a finite-difference rank check.
//!
//! Only real charts in the sphere are supported. Normal vectors `w` are given
//! by their coefficients in the normal frame at the chart point.

use crate::chart::{Ambient, ChartError, ConjugateChart, Grid};
use crate::exprlang::{ExprError, Func, Jet};
use crate::linalg::{null_space_real, rank_real};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GaussError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unsupported chart: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("chart metric is singular (condition {cond:.3e})")]
    SingularMetric { cond: f64 },
    #[error("P_w is singular (condition {cond:.3e})")]
    SingularP { cond: f64 },
    #[error("normal frame degenerates: {0}")]
    Frame(String),
}

/// Condition numbers above this count as singular.
pub const COND_CAP: f64 = 1e12;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    let mut s = &a[0] * &b[0];
    for (x, y) in a.iter().zip(b).skip(1) {
        s = &s + &(x * y);
    }
    s
}

fn sub_scaled(y: &[Jet], a: &Jet, x: &[Jet]) -> Vec<Jet> {
    y.iter().zip(x).map(|(yk, xk)| yk - &(a * xk)).collect()
}

fn normalize(v: &[Jet]) -> Result<Vec<Jet>, ExprError> {
    let inv = dot(v, v).apply(Func::Sqrt)?;
    v.iter().map(|x| x.div(&inv)).collect()
}

/// Gauss–Jordan inverse of a matrix of jets, pivoting on values.
fn jet_inverse(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>, ExprError> {
    let n = m.len();
    let space = m[0][0].space().clone();
    let order = m[0][0].order();
    let one = Jet::constant(&space, c(1.0)).truncate(order);
    let zero = Jet::constant(&space, c(0.0)).truncate(order);
    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { one.clone() } else { zero.clone() }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].value().norm().total_cmp(&a[j][col].value().norm()))
            .unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col].clone();
        a[col] = a[col].iter().map(|x| x.div(&d)).collect::<Result<_, _>>()?;
        inv[col] = inv[col].iter().map(|x| x.div(&d)).collect::<Result<_, _>>()?;
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col].clone();
            a[r] = sub_scaled(&a[r], &f, &a[col]);
            inv[r] = sub_scaled(&inv[r], &f, &inv[col]);
        }
    }
    Ok(inv)
}

fn cond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn re(v: &[Jet]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|j| j.value().re))
}

/// Validated Gauss data: a real chart with immersion `h` into `S^n` and a
/// support function.
#[derive(Debug, Clone)]
pub struct GaussData {
    chart: ConjugateChart,
    /// dimension of the hypersurface; `h` has n+1 components
    pub n: usize,
    pub p: usize,
    /// dimension of the normal space of `h` inside the sphere, n - p - 1
    pub normal_rank: usize,
    /// ambient axes seeding the normal Gram–Schmidt, chosen at the basepoint
    pub seeds: Vec<usize>,
}

/// Jets of the Gauss data at one point. `h` and `gamma` carry the requested
/// order; everything built from first derivatives carries one order less.
#[derive(Debug, Clone)]
pub struct GaussJets {
    pub h: Vec<Jet>,
    pub gamma: Jet,
    /// `dh[i]` = ∂_i h
    pub dh: Vec<Vec<Jet>>,
    pub metric: Vec<Vec<Jet>>,
    pub metric_inv: Vec<Vec<Jet>>,
    /// orthonormal frame of the normal space of h in the sphere
    pub normal: Vec<Vec<Jet>>,
    /// γh + ∇γ
    pub base: Vec<Jet>,
}

/// Values of the data up to second derivatives at one point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub h: DVector<f64>,
    pub dh: Vec<DVector<f64>>,
    /// `ddh[c][b]` = ∂_c∂_b h
    pub ddh: Vec<Vec<DVector<f64>>>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub normal: Vec<DVector<f64>>,
    pub gamma: f64,
    pub dgamma: DVector<f64>,
    pub ddgamma: DMatrix<f64>,
    pub base: DVector<f64>,
    /// `christoffel[e][(c, b)]` of the metric of h
    pub christoffel: Vec<DMatrix<f64>>,
}

impl PointData {
    pub fn normal_vector(&self, w: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.h.len());
        for (a, nu) in w.iter().zip(&self.normal) {
            v += nu * *a;
        }
        v
    }

    /// Hess γ + γ g in coordinates.
    pub fn hessian_form(&self) -> DMatrix<f64> {
        let k = self.dh.len();
        DMatrix::from_fn(k, k, |c, b| {
            let mut v = self.ddgamma[(c, b)] + self.gamma * self.metric[(c, b)];
            for e in 0..k {
                v -= self.christoffel[e][(c, b)] * self.dgamma[e];
            }
            v
        })
    }

    /// `⟨∂_c∂_b h, ξ⟩`, the second fundamental form of h along an ambient normal.
    pub fn second_form(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let k = self.dh.len();
        DMatrix::from_fn(k, k, |c, b| self.ddh[c][b].dot(xi))
    }

    /// `g P_w = Hess γ + γ g − B_w`.
    pub fn lowered_p(&self, w: &[f64]) -> DMatrix<f64> {
        self.hessian_form() - self.second_form(&self.normal_vector(w))
    }

    pub fn p_operator(&self, w: &[f64]) -> DMatrix<f64> {
        &self.metric_inv * self.lowered_p(w)
    }

    /// Component of `∂_a∂_b h` normal to h inside the sphere.
    pub fn alpha(&self, a: usize, b: usize) -> DVector<f64> {
        let mut v = &self.ddh[a][b] + &self.h * self.metric[(a, b)];
        for (l, dl) in self.dh.iter().enumerate() {
            v -= dl * self.christoffel[l][(a, b)];
        }
        v
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenericityOptions {
    pub samples: usize,
    /// eigenvalue separation relative to the spectral radius
    pub margin: f64,
    pub cond_cap: f64,
    pub seed: u64,
}

impl Default for GenericityOptions {
    fn default() -> Self {
        GenericityOptions {
            samples: 64,
            margin: 1e-6,
            cond_cap: COND_CAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityReport {
    /// false when p = 0: a splitting tensor on a line is trivially semisimple
    pub applicable: bool,
    pub p_condition: f64,
    pub generic: bool,
    /// best relative eigenvalue gap over the sampled directions
    pub gap: f64,
    pub witness: Option<Vec<f64>>,
    /// eigenvalues of C_ξ at the witness, as (re, im)
    pub eigenvalues: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankSample {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub jacobian_rank: usize,
    pub shape_rank: Option<usize>,
    /// |⟨ψ, N⟩ − γ|
    pub support: Option<f64>,
    /// max |A e_w| / |A| over fiber directions
    pub fiber: Option<f64>,
    /// |A_tt + P^{-1}| / |P^{-1}| on the leaf block
    pub shape_vs_p: Option<f64>,
    /// max distance between sorted eigenvalues of A_tt and −P^{-1}
    pub eigen_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub n: usize,
    pub expected_rank: usize,
    pub samples: Vec<RankSample>,
    /// samples where ψ is not an immersion or the shape rank differs from p+1
    pub rank_drops: usize,
    pub max_support: f64,
    pub max_fiber: f64,
    pub max_shape_vs_p: f64,
    pub max_eigen_error: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RankOptions {
    /// finite-difference step (Richardson-extrapolated central differences)
    pub step: f64,
    pub rank_tol: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            step: 2e-3,
            rank_tol: 1e-6,
        }
    }
}

fn richardson_jacobian<E>(
    f: &impl Fn(&[f64]) -> Result<DVector<f64>, E>,
    q: &[f64],
    h: f64,
) -> Result<DMatrix<f64>, E> {
    let m = f(q)?.len();
    let mut jac = DMatrix::zeros(m, q.len());
    for k in 0..q.len() {
        let central = |s: f64| -> Result<DVector<f64>, E> {
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[k] += s;
            b[k] -= s;
            Ok((f(&a)? - f(&b)?) / (2.0 * s))
        };
        let d = (central(h / 2.0)? * 4.0 - central(h)?) / 3.0;
        jac.set_column(k, &d);
    }
    Ok(jac)
}

fn sorted_eigs(m: &DMatrix<f64>) -> Vec<C64> {
    let mut e: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    e
}

impl GaussData {
    pub fn new(chart: ConjugateChart) -> Result<GaussData, GaussError> {
        if !chart.is_real() || chart.ambient() != Ambient::Sphere {
            return Err(GaussError::Unsupported(
                "the Gauss parametrization is implemented for real charts in the sphere".into(),
            ));
        }
        let h = chart.immersion().ok_or(ChartError::Missing("immersion"))?;
        chart.support().ok_or(ChartError::Missing("support function"))?;
        let p = chart.p();
        if h.len() < p + 3 {
            return Err(GaussError::Dimension(format!(
                "h has {} components; rank {} needs at least {} so the normal space is nonzero",
                h.len(),
                p + 1,
                p + 3
            )));
        }
        let n = h.len() - 1;
        let mut gd = GaussData {
            chart,
            n,
            p,
            normal_rank: n - p - 1,
            seeds: vec![],
        };
        gd.seeds = gd.choose_seeds()?;
        Ok(gd)
    }

    pub fn chart(&self) -> &ConjugateChart {
        &self.chart
    }

    /// Greedy choice of ambient axes with the largest component normal to
    /// span{h, ∂h} at the basepoint.
    fn choose_seeds(&self) -> Result<Vec<usize>, GaussError> {
        let x = self.chart.base_point();
        let h = self.chart.immersion_jets(&x, 1)?;
        let mut span: Vec<DVector<f64>> = Vec::new();
        let push = |v: DVector<f64>, span: &mut Vec<DVector<f64>>| -> f64 {
            let mut r = v;
            for e in span.iter() {
                r -= e * e.dot(&r);
            }
            let norm = r.norm();
            if norm > 1e-8 {
                span.push(r / norm);
            }
            norm
        };
        let hv = re(&h);
        push(hv, &mut span);
        for i in 0..=self.p {
            let d = DVector::from_iterator(h.len(), h.iter().map(|j| j.d1(i).re));
            if push(d, &mut span) <= 1e-8 {
                return Err(GaussError::Frame("h is not an immersion at the basepoint".into()));
            }
        }
        let mut seeds = Vec::new();
        for _ in 0..self.normal_rank {
            let mut best = (0, 0.0);
            for axis in 0..=self.n {
                if seeds.contains(&axis) {
                    continue;
                }
                let mut r = DVector::zeros(self.n + 1);
                r[axis] = 1.0;
                for e in &span {
                    r -= e * e.dot(&r);
                }
                if r.norm() > best.1 {
                    best = (axis, r.norm());
                }
            }
            let mut e = DVector::zeros(self.n + 1);
            e[best.0] = 1.0;
            push(e, &mut span);
            seeds.push(best.0);
        }
        Ok(seeds)
    }

    pub fn jets(&self, t: &[f64], order: usize) -> Result<GaussJets, GaussError> {
        assert!(order >= 1, "Gauss jets need order >= 1");
        let x = self.chart.point(t);
        let h = self.chart.immersion_jets(&x, order)?;
        let gamma = self.chart.support_jet(&x, order)?;
        let k = self.p + 1;
        let dh: Vec<Vec<Jet>> = (0..k).map(|i| h.iter().map(|j| j.deriv(i)).collect()).collect();
        let metric: Vec<Vec<Jet>> = (0..k).map(|i| (0..k).map(|j| dot(&dh[i], &dh[j])).collect()).collect();
        let gm = DMatrix::from_fn(k, k, |i, j| metric[i][j].value().re);
        let cn = cond(&gm);
        if cn > COND_CAP {
            return Err(GaussError::SingularMetric { cond: cn });
        }
        let metric_inv = jet_inverse(&metric)?;
        let htr: Vec<Jet> = h.iter().map(|j| j.truncate(order - 1)).collect();

        let mut ortho: Vec<Vec<Jet>> = Vec::new();
        let project_out = |v: Vec<Jet>, ortho: &[Vec<Jet>]| -> Vec<Jet> {
            let mut r = v;
            for e in ortho {
                let a = dot(e, &r);
                r = sub_scaled(&r, &a, e);
            }
            r
        };
        for v in std::iter::once(htr.clone()).chain(dh.iter().cloned()) {
            let r = project_out(v, &ortho);
            ortho.push(normalize(&r)?);
        }
        let space = h[0].space().clone();
        let mut normal = Vec::with_capacity(self.normal_rank);
        for &axis in &self.seeds {
            let e: Vec<Jet> = (0..=self.n)
                .map(|k| Jet::constant(&space, c(if k == axis { 1.0 } else { 0.0 })).truncate(order - 1))
                .collect();
            let r = project_out(e, &ortho);
            if dot(&r, &r).value().norm().sqrt() < 1e-8 {
                return Err(GaussError::Frame(format!("seed axis {axis} falls into span{{h, dh}} at {t:?}")));
            }
            let v = normalize(&r)?;
            ortho.push(v.clone());
            normal.push(v);
        }

        let mut base: Vec<Jet> = htr.iter().map(|hk| &gamma.truncate(order - 1) * hk).collect();
        for i in 0..k {
            let mut coef = &metric_inv[i][0] * &gamma.deriv(0);
            for j in 1..k {
                coef = &coef + &(&metric_inv[i][j] * &gamma.deriv(j));
            }
            base = base.iter().zip(&dh[i]).map(|(b, d)| b + &(&coef * d)).collect();
        }
        Ok(GaussJets {
            h,
            gamma,
            dh,
            metric,
            metric_inv,
            normal,
            base,
        })
    }

    pub fn point_data(&self, t: &[f64]) -> Result<PointData, GaussError> {
        let j = self.jets(t, 2)?;
        let k = self.p + 1;
        let dh: Vec<DVector<f64>> = j.dh.iter().map(|v| re(v)).collect();
        let ddh: Vec<Vec<DVector<f64>>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| DVector::from_iterator(j.h.len(), j.h.iter().map(|x| x.d2(a, b).re)))
                    .collect()
            })
            .collect();
        let metric = DMatrix::from_fn(k, k, |a, b| j.metric[a][b].value().re);
        let metric_inv = DMatrix::from_fn(k, k, |a, b| j.metric_inv[a][b].value().re);
        let christoffel = (0..k)
            .map(|e| {
                DMatrix::from_fn(k, k, |a, b| (0..k).map(|l| metric_inv[(e, l)] * ddh[a][b].dot(&dh[l])).sum())
            })
            .collect();
        Ok(PointData {
            h: re(&j.h),
            dh,
            ddh,
            metric,
            metric_inv,
            normal: j.normal.iter().map(|v| re(v)).collect(),
            gamma: j.gamma.value().re,
            dgamma: DVector::from_iterator(k, (0..k).map(|i| j.gamma.d1(i).re)),
            ddgamma: DMatrix::from_fn(k, k, |a, b| j.gamma.d2(a, b).re),
            base: re(&j.base),
            christoffel,
        })
    }

    fn check_fiber(&self, w: &[f64]) -> Result<(), GaussError> {
        if w.len() != self.normal_rank {
            return Err(GaussError::Dimension(format!(
                "expected {} normal coefficients, got {}",
                self.normal_rank,
                w.len()
            )));
        }
        Ok(())
    }

    /// ψ(x, w) = γh + ∇γ + w.
    pub fn gauss_parametrize(&self, t: &[f64], w: &[f64]) -> Result<DVector<f64>, GaussError> {
        self.check_fiber(w)?;
        let j = self.jets(t, 1)?;
        let mut v = re(&j.base);
        for (a, nu) in w.iter().zip(&j.normal) {
            v += re(nu) * *a;
        }
        Ok(v)
    }

    /// Orthonormal normal frame of h in the sphere at `t`.
    pub fn normal_frame(&self, t: &[f64]) -> Result<Vec<DVector<f64>>, GaussError> {
        Ok(self.jets(t, 1)?.normal.iter().map(|v| re(v)).collect())
    }

    /// `P_w = g^{-1}(Hess γ + γ g − B_w)` in the coordinate frame.
    pub fn p_operator(&self, t: &[f64], w: &[f64]) -> Result<DMatrix<f64>, GaussError> {
        self.check_fiber(w)?;
        Ok(self.point_data(t)?.p_operator(w))
    }

    /// Asymmetry of the metric-lowered `P_w`.
    pub fn p_symmetry(&self, t: &[f64], w: &[f64]) -> Result<f64, GaussError> {
        self.check_fiber(w)?;
        let l = self.point_data(t)?.lowered_p(w);
        Ok((&l - l.transpose()).amax())
    }

    /// `⟨A∂_i, ∂_i⟩ = −(g P_w)_ii` for the hypersurface at ψ(x, w).
    pub fn shape_values(&self, t: &[f64], w: &[f64]) -> Result<Vec<f64>, GaussError> {
        self.check_fiber(w)?;
        let l = self.point_data(t)?.lowered_p(w);
        Ok((0..=self.p).map(|i| -l[(i, i)]).collect())
    }

    fn invert_p(&self, pd: &PointData, w: &[f64], cap: f64) -> Result<DMatrix<f64>, GaussError> {
        let p = pd.p_operator(w);
        let cn = cond(&p);
        if cn > cap {
            return Err(GaussError::SingularP { cond: cn });
        }
        p.try_inverse().ok_or(GaussError::SingularP { cond: f64::INFINITY })
    }

    /// `C_ξ = B_ξ P_w^{-1}` with `B_ξ` the shape operator of h along ξ.
    pub fn splitting_tensor(&self, t: &[f64], w: &[f64], xi: &[f64]) -> Result<DMatrix<f64>, GaussError> {
        self.check_fiber(w)?;
        self.check_fiber(xi)?;
        let pd = self.point_data(t)?;
        let pinv = self.invert_p(&pd, w, COND_CAP)?;
        Ok(&pd.metric_inv * pd.second_form(&pd.normal_vector(xi)) * pinv)
    }

    /// Searches for a normal direction ξ whose splitting tensor has p+1
    /// separated eigenvalues.
    pub fn genericity_test(&self, t: &[f64], w: &[f64], opts: &GenericityOptions) -> Result<GenericityReport, GaussError> {
        self.check_fiber(w)?;
        let pd = self.point_data(t)?;
        let pcond = cond(&pd.p_operator(w));
        let mut rep = GenericityReport {
            applicable: self.p >= 1,
            p_condition: pcond,
            generic: false,
            gap: 0.0,
            witness: None,
            eigenvalues: vec![],
        };
        if !rep.applicable || pcond > opts.cond_cap {
            return Ok(rep);
        }
        let pinv = self.invert_p(&pd, w, opts.cond_cap)?;
        let m = self.normal_rank;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let axes = (0..m).map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
        let random: Vec<Vec<f64>> = (0..opts.samples)
            .map(|_| {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        for xi in axes.chain(random) {
            let cm = &pd.metric_inv * pd.second_form(&pd.normal_vector(&xi)) * &pinv;
            let eig = sorted_eigs(&cm);
            let radius = eig.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if radius == 0.0 {
                continue;
            }
            let mut gap = f64::INFINITY;
            for i in 0..eig.len() {
                for j in i + 1..eig.len() {
                    gap = gap.min((eig[i] - eig[j]).norm() / radius);
                }
            }
            if gap > rep.gap {
                rep.gap = gap;
                rep.witness = Some(xi.clone());
                rep.eigenvalues = eig.iter().map(|z| (z.re, z.im)).collect();
            }
        }
        rep.generic = rep.gap > opts.margin;
        if !rep.generic {
            rep.witness = None;
        }
        Ok(rep)
    }

    /// Finite-difference oracle for `ψ_*∂_r = h_*P∂_r + (normal terms)`: the
    /// tangential coefficients of ∂_rψ at fixed `w` against `P_w`,
    /// relative to `max(1, |P|)`.
    pub fn jacobian_residual(&self, t: &[f64], w: &[f64], step: f64) -> Result<f64, GaussError> {
        self.check_fiber(w)?;
        let pd = self.point_data(t)?;
        let p = pd.p_operator(w);
        let psi = |tt: &[f64]| self.gauss_parametrize(tt, w);
        let jac = richardson_jacobian(&psi, t, step)?;
        let k = self.p + 1;
        let mut worst = 0.0f64;
        for r in 0..k {
            let col = jac.column(r);
            for l in 0..k {
                let coef: f64 = (0..k).map(|m| pd.metric_inv[(l, m)] * pd.dh[m].dot(&col)).sum();
                worst = worst.max((coef - p[(l, r)]).abs());
            }
        }
        Ok(worst / p.amax().max(1.0))
    }

    fn psi_q(&self, q: &[f64]) -> Result<DVector<f64>, GaussError> {
        let k = self.p + 1;
        self.gauss_parametrize(&q[..k], &q[k..])
    }

    /// Unit normal of ψ from the finite-difference Jacobian, oriented along h.
    fn numeric_normal(&self, q: &[f64], step: f64) -> Result<Option<DVector<f64>>, GaussError> {
        let jac = richardson_jacobian(&|x: &[f64]| self.psi_q(x), q, step)?;
        let ns = null_space_real(&jac.transpose(), 1e-7, 1e-12);
        if ns.len() != 1 {
            return Ok(None);
        }
        let h = re(&self.jets(&q[..=self.p], 1)?.h);
        let v = &ns[0];
        Ok(Some(if v.dot(&h) < 0.0 { -v } else { v.clone() }))
    }

    /// Estimates the shape operator of the sampled hypersurface by finite
    /// differences of its unit normal and checks rank, nullity along the
    /// fibers, the support identity and the relation to `−P_w^{-1}`.
    pub fn rank_sample(&self, t: &[f64], w: &[f64], opts: &RankOptions) -> Result<RankSample, GaussError> {
        self.check_fiber(w)?;
        let k = self.p + 1;
        let q: Vec<f64> = t.iter().chain(w).copied().collect();
        let jac = richardson_jacobian(&|x: &[f64]| self.psi_q(x), &q, opts.step)?;
        let (jrank, _) = rank_real(&jac, 1e-7, 1e-12);
        let mut s = RankSample {
            t: t.to_vec(),
            w: w.to_vec(),
            jacobian_rank: jrank,
            shape_rank: None,
            support: None,
            fiber: None,
            shape_vs_p: None,
            eigen_error: None,
        };
        if jrank < self.n {
            return Ok(s);
        }
        let Some(nrm) = self.numeric_normal(&q, opts.step)? else {
            return Ok(s);
        };
        let normal_of = |x: &[f64]| -> Result<DVector<f64>, GaussError> {
            self.numeric_normal(x, opts.step)?
                .ok_or_else(|| GaussError::Frame("normal lost near the sample".into()))
        };
        let dn = richardson_jacobian(&normal_of, &q, opts.step)?;
        let jtj = jac.transpose() * &jac;
        let a = -(jtj.try_inverse().ok_or(GaussError::SingularMetric { cond: f64::INFINITY })? * jac.transpose() * dn);
        let scale = a.amax().max(1e-300);
        s.shape_rank = Some(rank_real(&a, opts.rank_tol, 1e-12).0);
        let psi = self.psi_q(&q)?;
        let pd = self.point_data(t)?;
        s.support = Some((psi.dot(&nrm) - pd.gamma).abs());
        let mut fib = 0.0f64;
        for col in k..self.n {
            fib = fib.max(a.column(col).amax() / scale);
        }
        s.fiber = Some(fib);
        if let Ok(pinv) = self.invert_p(&pd, w, COND_CAP) {
            let att = a.view((0, 0), (k, k)).into_owned();
            s.shape_vs_p = Some((&att + &pinv).amax() / pinv.amax());
            let ea = sorted_eigs(&att);
            let ep = sorted_eigs(&(-pinv));
            s.eigen_error = Some(ea.iter().zip(&ep).fold(0.0f64, |m, (x, y)| m.max((x - y).norm())));
        }
        Ok(s)
    }

    /// [`GaussData::rank_sample`] over every grid point and fiber point.
    pub fn hypersurface_rank_check(
        &self,
        grid: &Grid,
        fibers: &[Vec<f64>],
        opts: &RankOptions,
    ) -> Result<RankReport, GaussError> {
        let mut rep = RankReport {
            n: self.n,
            expected_rank: self.p + 1,
            samples: vec![],
            rank_drops: 0,
            max_support: 0.0,
            max_fiber: 0.0,
            max_shape_vs_p: 0.0,
            max_eigen_error: 0.0,
        };
        for t in grid.all_params() {
            for w in fibers {
                let s = self.rank_sample(&t, w, opts)?;
                if s.jacobian_rank < self.n || s.shape_rank != Some(self.p + 1) {
                    rep.rank_drops += 1;
                }
                rep.max_support = rep.max_support.max(s.support.unwrap_or(0.0));
                rep.max_fiber = rep.max_fiber.max(s.fiber.unwrap_or(0.0));
                rep.max_shape_vs_p = rep.max_shape_vs_p.max(s.shape_vs_p.unwrap_or(0.0));
                rep.max_eigen_error = rep.max_eigen_error.max(s.eigen_error.unwrap_or(0.0));
                rep.samples.push(s);
            }
        }
        Ok(rep)
    }

    /// Max |⟨ψ, h⟩ − γ| over grid and fiber points.
    pub fn support_identity(&self, grid: &Grid, fibers: &[Vec<f64>]) -> Result<f64, GaussError> {
        let mut worst = 0.0f64;
        for t in grid.all_params() {
            let j = self.jets(&t, 1)?;
            let h = re(&j.h);
            for w in fibers {
                let psi = self.gauss_parametrize(&t, w)?;
                worst = worst.max((psi.dot(&h) - j.gamma.value().re).abs());
            }
        }
        Ok(worst)
    }

    /// CSV sample cloud: chart parameters, fiber coefficients, ambient point.
    pub fn sample_cloud_csv(&self, grid: &Grid, fibers: &[Vec<f64>]) -> Result<String, GaussError> {
        let mut out = String::new();
        let mut head: Vec<String> = (0..=self.p).map(|i| format!("t{i}")).collect();
        head.extend((0..self.normal_rank).map(|a| format!("w{a}")));
        head.extend((0..=self.n).map(|k| format!("x{k}")));
        out.push_str(&head.join(","));
        out.push('\n');
        for t in grid.all_params() {
            for w in fibers {
                let psi = self.gauss_parametrize(&t, w)?;
                let row: Vec<String> = t
                    .iter()
                    .chain(w.iter())
                    .chain(psi.iter())
                    .map(|v| format!("{v:.12e}"))
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        Ok(out)
    }
}

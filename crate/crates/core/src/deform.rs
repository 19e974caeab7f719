//! Deformation data attached to a parallel section φ of the Sbrana bundle:
//! the 1-form matrix φ_ij, the normal-bundle data of the deformed immersion,
//! the structural residual checks, and integration of the deformed
//! immersion `g` on a grid by a moving-frame ODE.
//!
//! Index conventions: `gamma[j][i]` is Γ_{ji}^i, `forms.table[i][j][r]` is
//! φ_ij(∂_r), and `d_ij = 1 + δ_ij/φ_i` is the product ⟨η_i, η_j⟩.

use crate::chart::{jacobian, ChartError, ChartJets, ConjugateChart, Grid};
use crate::exprlang::{ExprError, Jet};
use crate::gauss::{GaussData, GaussError};
use crate::moduli::{adapted_basis, d_matrix, index_of, is_admissible, quotient_signature, ModuliError};
use crate::ode::{integrate, OdeFailure, OdeOptions};
use crate::sbrana::{apply_omega, b_matrices, extend_section, SbranaError, SectionField, TransportOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeformError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Gauss(#[from] GaussError),
    #[error(transparent)]
    Sbrana(#[from] SbranaError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("φ_{index} vanishes")]
    ZeroPhi { index: usize },
    #[error("φ is not admissible at grid point {at:?}: {detail}")]
    NotAdmissible { at: Vec<usize>, detail: String },
    #[error("index of φ changes over the grid: {first} at the base, {other} at {at:?}")]
    IndexChanges { first: usize, other: usize, at: Vec<usize> },
    #[error("shape value ⟨A∂_{index}, ∂_{index}⟩ = {value:.3e} vanishes")]
    ZeroShapeValue { index: usize, value: f64 },
    #[error("integrability residual {residual:.3e} exceeds the gate {gate:.1e}")]
    IntegrabilityTooPoor { residual: f64, gate: f64 },
    #[error("frame integration failed: {0}")]
    StepFailure(String),
    #[error("{0}")]
    Invalid(String),
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `∂_r φ` for every `r`, from the section equations `∂φ = −ωφ`:
/// `∂_iφ_k = 2Γ_ik^k φ_k` (k ≠ i), `∂_iφ_i = −2Σ_k Γ_ik^k φ_k`.
pub fn section_derivatives(g: &[Vec<C64>], phi: &[C64]) -> Vec<Vec<C64>> {
    (0..phi.len())
        .map(|r| apply_omega(g, r, phi).into_iter().map(|z| -z).collect())
        .collect()
}

fn section_rhs_jets(cj: &ChartJets, r: usize, phi: &[Jet]) -> Vec<Jet> {
    let n = phi.len();
    let two = c(2.0);
    let mut out: Vec<Jet> = phi.iter().map(|p| p.scale(c(0.0))).collect();
    for k in 0..n {
        if k != r {
            let t = (cj.g(r, k) * &phi[k]).scale(two);
            out[r] = &out[r] - &t;
            out[k] = t;
        }
    }
    out
}

/// Taylor jets of the parallel section through `phi` at `cj.point`, solved
/// degree by degree from the section equations.
pub fn section_jet_from(cj: &ChartJets, phi: &[C64], order: usize) -> Vec<Jet> {
    let space = cj.space.clone();
    let order = order.min(space.order());
    let n = phi.len();
    let mut coeffs: Vec<Vec<C64>> = phi
        .iter()
        .map(|&v| {
            let mut cf = vec![c(0.0); space.len(order)];
            cf[0] = v;
            cf
        })
        .collect();
    for d in 1..=order {
        let cur: Vec<Jet> = coeffs.iter().map(|cf| Jet::from_coeffs(&space, d - 1, cf)).collect();
        let rhs: Vec<Vec<Jet>> = (0..n).map(|r| section_rhs_jets(cj, r, &cur)).collect();
        for idx in space.len(d - 1)..space.len(d) {
            let m = space.monomials()[idx].clone();
            let r = m.iter().position(|&e| e > 0).unwrap();
            let mut prev = m.clone();
            prev[r] -= 1;
            for k in 0..n {
                coeffs[k][idx] = rhs[r][k].coeff(&prev) / m[r] as f64;
            }
        }
    }
    coeffs.iter().map(|cf| Jet::from_coeffs(&space, order, cf)).collect()
}

pub fn section_jet(chart: &ConjugateChart, x: &[C64], phi: &[C64], order: usize) -> Result<Vec<Jet>, DeformError> {
    let cj = chart.jets(x, order.max(1))?;
    Ok(section_jet_from(&cj, phi, order))
}

/// Coefficients `table[i][j][r] = φ_ij(∂_r)`.
#[derive(Debug, Clone, Serialize)]
pub struct PhiForms {
    pub table: Vec<Vec<Vec<C64>>>,
}

impl PhiForms {
    /// max |φ_ij(∂_r) + φ_ji(∂_r)| over i ≠ j
    pub fn antisymmetry(&self) -> f64 {
        let n = self.table.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    for r in 0..n {
                        worst = worst.max((self.table[i][j][r] + self.table[j][i][r]).norm());
                    }
                }
            }
        }
        worst
    }

    /// max |Σ_k φ_k φ_ik(∂_r)|
    pub fn kernel_sum(&self, phi: &[C64]) -> f64 {
        let n = self.table.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for r in 0..n {
                let s: C64 = (0..n).map(|k| phi[k] * self.table[i][k][r]).sum();
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// max |φ_ij(∂_r)| over i ≠ j and r ∉ {i, j}
    pub fn support(&self) -> f64 {
        let n = self.table.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for r in 0..n {
                    if i != j && r != i && r != j {
                        worst = worst.max(self.table[i][j][r].norm());
                    }
                }
            }
        }
        worst
    }
}

fn check_nonzero(phi: &[C64]) -> Result<(), DeformError> {
    match phi.iter().position(|z| z.norm() == 0.0) {
        Some(index) => Err(DeformError::ZeroPhi { index }),
        None => Ok(()),
    }
}

/// φ_is(∂_i) = −Γ_is^s/φ_i, φ_is(∂_s) = Γ_si^i/φ_s, φ_ii = ½ d(1/φ_i), zero
/// otherwise. `dphi[r][k] = ∂_r φ_k`.
pub fn phi_forms(g: &[Vec<C64>], phi: &[C64], dphi: &[Vec<C64>]) -> Result<PhiForms, DeformError> {
    check_nonzero(phi)?;
    let n = phi.len();
    let mut table = vec![vec![vec![c(0.0); n]; n]; n];
    for i in 0..n {
        for s in 0..n {
            if s != i {
                table[i][s][i] = -g[i][s] / phi[i];
                table[i][s][s] = g[s][i] / phi[s];
            }
        }
        for r in 0..n {
            table[i][i][r] = -dphi[r][i] / (phi[i] * phi[i] * 2.0);
        }
    }
    Ok(PhiForms { table })
}

/// [`phi_forms`] at a chart point, with derivatives from the section equations.
pub fn phi_forms_at(chart: &ConjugateChart, x: &[C64], phi: &[C64]) -> Result<PhiForms, DeformError> {
    let g = chart.gamma_values(x)?;
    phi_forms(&g, phi, &section_derivatives(&g, phi))
}

/// The same table as jets, one order below `phi`.
fn phi_form_jets(cj: &ChartJets, phi: &[Jet]) -> Result<Vec<Vec<Vec<Jet>>>, DeformError> {
    let n = phi.len();
    let order = phi[0].order() - 1;
    let zero = phi[0].scale(c(0.0)).truncate(order);
    let one = &zero + c(1.0);
    let mut table = vec![vec![vec![zero.clone(); n]; n]; n];
    for i in 0..n {
        let inv = one.div(&phi[i].truncate(order))?;
        for s in 0..n {
            if s != i {
                table[i][s][i] = (&cj.g(i, s).truncate(order) * &inv).scale(c(-1.0));
                table[i][s][s] = cj.g(s, i).truncate(order).div(&phi[s].truncate(order))?;
            }
        }
        let inv_full = (&phi[i].scale(c(0.0)) + c(1.0)).div(&phi[i])?;
        for r in 0..n {
            table[i][i][r] = inv_full.deriv(r).scale(c(0.5));
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionResidual {
    /// max |∂_iφ_k − 2Γ_ik^kφ_k| over k ≠ i
    pub off_diagonal: f64,
    /// max |∂_iφ_i + 2Σ_kΓ_ik^kφ_k|
    pub diagonal: f64,
    pub max: f64,
    pub interior_points: usize,
    pub tol: f64,
    pub flagged: bool,
}

/// Residual of the section equations for a sampled field, using fourth-order
/// central differences at points two steps away from the boundary.
pub fn section_residual(chart: &ConjugateChart, field: &SectionField, tol: f64) -> Result<SectionResidual, DeformError> {
    let grid = &field.grid;
    let n = chart.dim();
    let jac = jacobian(chart.conj());
    let jt = DMatrix::from_fn(n, n, |k, i| jac[i][k]);
    let lu = jt.lu();
    let mut out = SectionResidual {
        off_diagonal: 0.0,
        diagonal: 0.0,
        max: 0.0,
        interior_points: 0,
        tol,
        flagged: false,
    };
    for idx in 0..grid.len() {
        let m = grid.unflatten(idx);
        if (0..n).any(|a| m[a] < 2 || m[a] + 2 >= grid.n[a]) {
            continue;
        }
        out.interior_points += 1;
        let mut dt = DMatrix::from_element(n, n, c(0.0));
        for a in 0..n {
            let h = grid.step(a);
            let at = |off: isize| {
                let mut q = m.clone();
                q[a] = (q[a] as isize + off) as usize;
                field.at(&q).to_vec()
            };
            let (p2, p1, m1, m2) = (at(2), at(1), at(-1), at(-2));
            for k in 0..n {
                dt[(a, k)] = (-p2[k] + p1[k] * 8.0 - m1[k] * 8.0 + m2[k]) / (12.0 * h);
            }
        }
        let du = lu.solve(&dt).ok_or_else(|| DeformError::Invalid("singular parameter jacobian".into()))?;
        let phi = field.at(&m);
        let g = chart.gamma_values(&chart.point(&grid.params(&m)))?;
        let want = section_derivatives(&g, phi);
        for i in 0..n {
            for k in 0..n {
                let r = (du[(i, k)] - want[i][k]).norm();
                if k == i {
                    out.diagonal = out.diagonal.max(r);
                } else {
                    out.off_diagonal = out.off_diagonal.max(r);
                }
            }
        }
    }
    out.max = out.off_diagonal.max(out.diagonal);
    out.flagged = out.max > tol;
    Ok(out)
}

/// A parallel section over a grid with constant index.
#[derive(Debug, Clone, Serialize)]
pub struct DeformationPackage {
    #[serde(skip)]
    pub chart: ConjugateChart,
    pub field: SectionField,
    pub mu: usize,
    /// max |φ| at the base lattice point; tolerances on φ are relative to it
    pub scale: f64,
}

impl DeformationPackage {
    /// Builds the section from `phi0` at parameters `t0` by parallel transport.
    pub fn build(
        chart: &ConjugateChart,
        grid: &Grid,
        t0: &[f64],
        phi0: &[C64],
        opts: &TransportOptions,
    ) -> Result<DeformationPackage, DeformError> {
        if phi0.len() != chart.dim() {
            return Err(DeformError::Invalid(format!(
                "φ has {} entries, the chart needs {}",
                phi0.len(),
                chart.dim()
            )));
        }
        check_nonzero(phi0)?;
        let field = extend_section(chart, grid, t0, phi0, opts)?;
        DeformationPackage::from_field(chart, field)
    }

    pub fn from_field(chart: &ConjugateChart, field: SectionField) -> Result<DeformationPackage, DeformError> {
        let grid = field.grid.clone();
        let base = grid.base_index();
        let scale = field.at(&base).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let tol = 1e-9 * scale.max(1.0);
        let mut mu = None;
        for idx in 0..grid.len() {
            let m = grid.unflatten(idx);
            let phi = &field.values[idx];
            let adm = is_admissible(phi, chart.conj(), tol);
            if !adm.admissible {
                return Err(DeformError::NotAdmissible {
                    at: m,
                    detail: adm.failures.join(", "),
                });
            }
            let k = index_of(phi, chart.conj(), tol)?;
            match mu {
                None => mu = Some(k),
                Some(first) if first != k => return Err(DeformError::IndexChanges { first, other: k, at: m }),
                _ => {}
            }
        }
        let mu = index_of(field.at(&base), chart.conj(), tol)?;
        Ok(DeformationPackage {
            chart: chart.clone(),
            field,
            mu,
            scale,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn phi(&self, m: &[usize]) -> &[C64] {
        self.field.at(m)
    }

    /// `d_ij = 1 + δ_ij/φ_i` at a lattice point.
    pub fn d_table(&self, m: &[usize]) -> Result<DMatrix<C64>, DeformError> {
        Ok(d_matrix(self.phi(m))?)
    }

    pub fn forms(&self, m: &[usize]) -> Result<PhiForms, DeformError> {
        phi_forms_at(&self.chart, &self.chart.point(&self.grid().params(m)), self.phi(m))
    }
}

/// Per-condition maxima over the package grid.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConditionReport {
    /// |Q_ij(γ)|
    pub support_dmz: f64,
    /// |(Hess γ + γg)_ab (d_ia − d_ib)|, a ≠ b
    pub hessian: f64,
    /// |α^h(∂_a, ∂_b)| |d_ia − d_ib|, a ≠ b
    pub alpha: f64,
    pub kernel_sum: f64,
    pub antisymmetry: f64,
    pub codazzi: f64,
    pub ricci: f64,
    /// |B_0 φ| / |φ|
    pub section_compat: f64,
    /// sweep-order discrepancy of the section field, relative to |φ|
    pub sweep: f64,
    pub mu: usize,
    pub points: usize,
}

impl ConditionReport {
    /// Max over every condition except Ricci, which the others imply.
    pub fn structural_max(&self) -> f64 {
        [
            self.support_dmz,
            self.hessian,
            self.alpha,
            self.kernel_sum,
            self.antisymmetry,
            self.codazzi,
            self.section_compat,
            self.sweep,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.structural_max().max(self.ricci)
    }
}

/// Evaluates the structural equations of the reconstruction on every grid
/// point of the package.
pub fn verify_conditions(gd: &GaussData, pkg: &DeformationPackage) -> Result<ConditionReport, DeformError> {
    let chart = gd.chart();
    if chart.dim() != pkg.chart.dim() {
        return Err(DeformError::Invalid("package and Gauss data live on different charts".into()));
    }
    let grid = pkg.grid();
    let n = chart.dim();
    let mut rep = ConditionReport {
        mu: pkg.mu,
        points: grid.len(),
        sweep: pkg.field.sweep_residual / pkg.scale.max(1e-300),
        ..Default::default()
    };
    for idx in 0..grid.len() {
        let m = grid.unflatten(idx);
        let t = grid.params(&m);
        let x = chart.point(&t);
        let phi = pkg.phi(&m);
        let pd = gd.point_data(&t)?;
        let cj = chart.jets(&x, 2)?;
        let gamma = chart.support_jet(&x, 2)?;
        for row in chart.dmz_apply(&cj, &gamma) {
            for q in row {
                rep.support_dmz = rep.support_dmz.max(q.norm());
            }
        }

        let d = |i: usize, k: usize| c(1.0) + if i == k { c(1.0) / phi[i] } else { c(0.0) };
        let s = pd.hessian_form();
        for i in 0..n {
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        let gap = (d(i, a) - d(i, b)).norm();
                        rep.hessian = rep.hessian.max(s[(a, b)].abs() * gap);
                        rep.alpha = rep.alpha.max(pd.alpha(a, b).norm() * gap);
                    }
                }
            }
        }

        let pj = section_jet_from(&cj, phi, 2);
        let fj = phi_form_jets(&cj, &pj)?;
        let f = |i: usize, j: usize, r: usize| fj[i][j][r].value();
        let table: Vec<Vec<Vec<C64>>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|r| f(i, j, r)).collect()).collect())
            .collect();
        let forms = PhiForms { table };
        rep.kernel_sum = rep.kernel_sum.max(forms.kernel_sum(phi));
        rep.antisymmetry = rep.antisymmetry.max(forms.antisymmetry().max(forms.support()));

        // ∂_r d_is = δ_is ∂_r(1/φ_i)
        let inv: Vec<Jet> = pj
            .iter()
            .map(|p| (&p.scale(c(0.0)) + c(1.0)).div(p))
            .collect::<Result<_, _>>()?;
        let dd = |r: usize, i: usize, s: usize| if i == s { inv[i].d1(r) } else { c(0.0) };
        for i in 0..n {
            for r in 0..n {
                for s in 0..n {
                    if r == s {
                        continue;
                    }
                    for l in 0..n {
                        let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        let lhs = dd(r, i, s) * kd(l, s) - dd(s, i, r) * kd(l, r)
                            + (d(i, s) - d(i, r)) * pd.christoffel[l][(r, s)];
                        let mut rhs = c(0.0);
                        for j in 0..n {
                            rhs += phi[j] * (f(i, j, r) * d(j, s) * kd(l, s) - f(i, j, s) * d(j, r) * kd(l, r));
                        }
                        rep.codazzi = rep.codazzi.max((lhs - rhs).norm());
                    }
                }
            }
        }

        for i in 0..n {
            for j in i + 1..n {
                for r in 0..n {
                    for s in r + 1..n {
                        let lhs = (d(j, r) * d(i, s) - d(i, r) * d(j, s)) * pd.metric[(r, s)];
                        let mut rhs = fj[i][j][s].d1(r) - fj[i][j][r].d1(s);
                        for k in 0..n {
                            rhs += phi[k] * (f(i, k, r) * f(j, k, s) - f(i, k, s) * f(j, k, r));
                        }
                        rep.ricci = rep.ricci.max((lhs - rhs).norm());
                    }
                }
            }
        }

        let b0 = &b_matrices(chart, &x, 0, 1)?[0];
        let pv = DVector::from_column_slice(phi);
        let norm = pv.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        rep.section_compat = rep.section_compat.max((b0 * &pv).camax() / norm);
    }
    Ok(rep)
}

/// Quotient data at one lattice point.
#[derive(Debug, Clone, Serialize)]
pub struct NormalData {
    pub point: Vec<usize>,
    /// nonzero eigenvalues of ⟨[e_i],[e_j]⟩ = d_ij on the real form of the quotient
    pub metric: Vec<f64>,
    /// matching eigenvectors as combinations of e_0..e_p
    pub basis: Vec<Vec<C64>>,
    pub n_plus: usize,
    pub n_minus: usize,
    /// `connection[r][i][j] = φ_j φ_ij(∂_r)`: ∇^E_r [e_i] = Σ_j connection[r][i][j] [e_j]
    pub connection: Vec<Vec<Vec<C64>>>,
    /// a_i with γ(∂_i, ∂_i) = a_i [e_i]
    pub second_form: Vec<f64>,
}

/// Normal-bundle metric, connection and second fundamental form at `m`, with
/// shape values `⟨A∂_i, ∂_i⟩` supplied by the caller.
pub fn build_normal_data(pkg: &DeformationPackage, m: &[usize], shape: &[f64]) -> Result<NormalData, DeformError> {
    let phi = pkg.phi(m);
    let n = phi.len();
    if shape.len() != n {
        return Err(DeformError::Invalid(format!("expected {n} shape values, got {}", shape.len())));
    }
    let amax = shape.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if let Some(index) = shape.iter().position(|a| a.abs() <= 1e-9 * amax.max(1e-300)) {
        return Err(DeformError::ZeroShapeValue {
            index,
            value: shape[index],
        });
    }
    let conj = pkg.chart.conj();
    let tol = 1e-9 * pkg.scale.max(1.0);
    let sig = quotient_signature(phi, conj, tol)?;
    let d = d_matrix(phi)?;
    let t = adapted_basis(phi, conj);
    let gram = t.transpose() * d * &t;
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * (gram[(i, j)].re + gram[(j, i)].re));
    let eig = SymmetricEigen::new(g);
    let drop = (0..n)
        .min_by(|&i, &j| eig.eigenvalues[i].abs().total_cmp(&eig.eigenvalues[j].abs()))
        .unwrap();
    let mut order: Vec<usize> = (0..n).filter(|&k| k != drop).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let metric = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = order
        .iter()
        .map(|&k| {
            let v = eig.eigenvectors.column(k).map(c);
            (&t * v).iter().copied().collect()
        })
        .collect();
    let forms = pkg.forms(m)?;
    let connection = (0..n)
        .map(|r| (0..n).map(|i| (0..n).map(|j| phi[j] * forms.table[i][j][r]).collect()).collect())
        .collect();
    Ok(NormalData {
        point: m.to_vec(),
        metric,
        basis,
        n_plus: sig.n_plus,
        n_minus: sig.n_minus,
        connection,
        second_form: shape.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct ImmersionOptions {
    /// fiber point w0 selecting the section σ(x) = ψ(x, w0); zeros by default
    pub w0: Option<Vec<f64>>,
    pub ode: OdeOptions,
    /// integrability gate on [`ConditionReport::structural_max`]
    pub gate: f64,
}

impl Default for ImmersionOptions {
    fn default() -> Self {
        ImmersionOptions {
            w0: None,
            ode: OdeOptions::default(),
            gate: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImmersionResiduals {
    /// |⟨∂_r g, ∂_s g⟩ − ⟨∂_r σ, ∂_s σ⟩| with fourth-order differences of the samples
    pub pullback: f64,
    /// |⟨T_k, T_l⟩ − ⟨b_k, b_l⟩| for the integrated tangent frame
    pub frame_metric: f64,
    /// |⟨η_i, η_j⟩ − d_ij| and |⟨η_i, T_k⟩|
    pub normal_metric: f64,
    /// flatness of β = α^g ⊕ α^f on the sampled frames
    pub flatness: f64,
    /// max |g_fwd − g_rev| over the grid
    pub sweep: f64,
    /// co-integrated φ against the transported field, relative to |φ|
    pub phi_drift: f64,
    pub ode_error: f64,
}

/// Sampled deformed immersion over the leaf-space grid.
#[derive(Debug, Clone, Serialize)]
pub struct Immersion {
    pub ambient_dim: usize,
    pub mu: usize,
    /// one sign per ambient coordinate, negative ones first
    pub signature: String,
    pub w0: Vec<f64>,
    #[serde(skip)]
    pub grid: Grid,
    /// g(x, w0) at flat grid indices
    pub positions: Vec<Vec<f64>>,
    /// images of the fiber directions at each grid point
    #[serde(skip)]
    pub fiber_frames: Vec<Vec<Vec<f64>>>,
    pub residuals: ImmersionResiduals,
    pub conditions: ConditionReport,
}

impl Immersion {
    /// g(x, w) with the fibers adjoined affinely.
    pub fn point(&self, m: &[usize], w: &[f64]) -> Vec<f64> {
        let idx = self.grid.flatten(m);
        let mut out = self.positions[idx].clone();
        for (a, f) in self.fiber_frames[idx].iter().enumerate() {
            let dw = w[a] - self.w0[a];
            for (o, x) in out.iter_mut().zip(f) {
                *o += dw * x;
            }
        }
        out
    }

    /// Rows `t…, w…, x…` for every grid point and fiber value, after a header
    /// naming the ambient dimension and signature.
    pub fn csv(&self, fibers: &[Vec<f64>]) -> String {
        let dim = self.grid.dim();
        let mut s = format!(
            "# ambient_dim={} signature={} mu={}\n",
            self.ambient_dim, self.signature, self.mu
        );
        let mut cols: Vec<String> = (0..dim).map(|k| format!("t{k}")).collect();
        cols.extend((0..self.w0.len()).map(|k| format!("w{k}")));
        cols.extend((0..self.ambient_dim).map(|k| format!("x{k}")));
        s.push_str(&cols.join(","));
        s.push('\n');
        let default = [self.w0.clone()];
        let fibers = if fibers.is_empty() { &default[..] } else { fibers };
        for idx in 0..self.grid.len() {
            let m = self.grid.unflatten(idx);
            for w in fibers {
                let row: Vec<String> = self
                    .grid
                    .params(&m)
                    .iter()
                    .chain(w.iter())
                    .chain(self.point(&m, w).iter())
                    .map(|v| format!("{v:.12e}"))
                    .collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
        }
        s
    }
}

fn signed_dot(mu: usize, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| if k < mu { -x * y } else { x * y })
        .sum()
}

/// Tangent data of the section σ = ψ(·, w0) of the hypersurface.
struct LeafData {
    /// σ_0..σ_p then ν_1..ν_m, in R^{n+1}
    b: Vec<DVector<f64>>,
    gram: DMatrix<f64>,
    /// a[(r, s)] = ⟨∂_r σ_s, h⟩ = −⟨h_r, σ_s⟩
    a: DMatrix<f64>,
    /// ∂_r b_k
    db: Vec<Vec<DVector<f64>>>,
}

fn vals(v: &[Jet]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|j| j.value().re))
}

fn leaf_data(gd: &GaussData, t: &[f64], w0: &[f64]) -> Result<LeafData, DeformError> {
    let j = gd.jets(t, 3)?;
    let k = gd.p + 1;
    let mut sigma = j.base.clone();
    for (wa, nu) in w0.iter().zip(&j.normal) {
        sigma = sigma.iter().zip(nu).map(|(s, v)| s + &v.scale(c(*wa))).collect();
    }
    let ds: Vec<Vec<Jet>> = (0..k).map(|s| sigma.iter().map(|x| x.deriv(s)).collect()).collect();
    let mut b: Vec<DVector<f64>> = ds.iter().map(|v| vals(v)).collect();
    b.extend(j.normal.iter().map(|v| vals(v)));
    let nb = b.len();
    let gram = DMatrix::from_fn(nb, nb, |a, c| b[a].dot(&b[c]));
    let db = (0..k)
        .map(|r| {
            let mut out: Vec<DVector<f64>> = ds
                .iter()
                .map(|v| DVector::from_iterator(v.len(), v.iter().map(|x| x.d1(r).re)))
                .collect();
            out.extend(
                j.normal
                    .iter()
                    .map(|v| DVector::from_iterator(v.len(), v.iter().map(|x| x.d1(r).re))),
            );
            out
        })
        .collect();
    let dh: Vec<DVector<f64>> = j.dh.iter().map(|v| vals(v)).collect();
    let a = DMatrix::from_fn(k, k, |r, s| -dh[r].dot(&b[s]));
    Ok(LeafData {
        b,
        gram,
        a,
        db,
    })
}

/// State layout: position, tangent frame T_0..T_{n-1}, η_0..η_p, scaled φ.
struct Layout {
    big_n: usize,
    nt: usize,
    k: usize,
}

impl Layout {
    fn pos(&self) -> usize {
        0
    }
    fn t(&self, i: usize) -> usize {
        self.big_n * (1 + i)
    }
    fn eta(&self, i: usize) -> usize {
        self.big_n * (1 + self.nt + i)
    }
    fn phi(&self, i: usize) -> usize {
        self.big_n * (1 + self.nt + self.k) + i
    }
    fn len(&self) -> usize {
        self.big_n * (1 + self.nt + self.k) + self.k
    }
}

struct Integrator<'a> {
    gd: &'a GaussData,
    w0: Vec<f64>,
    scale: f64,
    lay: Layout,
}

impl Integrator<'_> {
    /// d/dt_r of the state at parameters t.
    fn rhs(&self, t: &[f64], r: usize, y: &DVector<f64>) -> Result<DVector<f64>, DeformError> {
        let lay = &self.lay;
        let (bn, nt, k) = (lay.big_n, lay.nt, lay.k);
        let ld = leaf_data(self.gd, t, &self.w0)?;
        let ginv = ld
            .gram
            .clone()
            .try_inverse()
            .ok_or_else(|| DeformError::Invalid(format!("tangent frame degenerates at {t:?}")))?;
        let proj = DMatrix::from_fn(nt, nt, |l, kk| ld.db[r][kk].dot(&ld.b[l]));
        let conn = &ginv * proj; // ∇_r b_k = Σ_l conn[(l, k)] b_l
        let phis: Vec<C64> = (0..k).map(|i| c(y[lay.phi(i)])).collect();
        let g = self.gd.chart().gamma_values(&self.gd.chart().point(t))?;
        let dphi = section_derivatives(&g, &phis);
        let forms = phi_forms(&g, &phis, &dphi)?;
        let phi_true: Vec<f64> = phis.iter().map(|z| z.re * self.scale).collect();
        let ar = ld.a[(r, r)];
        let seg = |y: &DVector<f64>, off: usize| y.rows(off, bn).into_owned();
        let tv: Vec<DVector<f64>> = (0..nt).map(|i| seg(y, lay.t(i))).collect();
        let ev: Vec<DVector<f64>> = (0..k).map(|i| seg(y, lay.eta(i))).collect();
        let mut out = DVector::zeros(lay.len());
        out.rows_mut(lay.pos(), bn).copy_from(&tv[r]);
        for kk in 0..nt {
            let mut v = DVector::zeros(bn);
            for l in 0..nt {
                v += &tv[l] * conn[(l, kk)];
            }
            if kk == r {
                v += &ev[r] * ar;
            }
            out.rows_mut(lay.t(kk), bn).copy_from(&v);
        }
        for i in 0..k {
            let dir = if i == r { 1.0 + 1.0 / phi_true[i] } else { 1.0 };
            let mut lowered = DVector::zeros(nt);
            lowered[r] = ar * dir;
            let coef = &ginv * lowered;
            let mut v = DVector::zeros(bn);
            for l in 0..nt {
                v -= &tv[l] * coef[l];
            }
            for j in 0..k {
                v += &ev[j] * (phis[j] * forms.table[i][j][r]).re;
            }
            out.rows_mut(lay.eta(i), bn).copy_from(&v);
        }
        for i in 0..k {
            out[lay.phi(i)] = dphi[r][i].re;
        }
        Ok(out)
    }

    fn segment(&self, from: &[f64], axis: usize, to: f64, y: &DVector<f64>, opts: &OdeOptions) -> Result<(DVector<f64>, f64), DeformError> {
        let delta = to - from[axis];
        let sol = integrate(
            |s: f64, y: &DVector<f64>| {
                let mut t = from.to_vec();
                t[axis] += s * delta;
                Ok::<_, DeformError>(self.rhs(&t, axis, y)? * delta)
            },
            y,
            opts,
        )
        .map_err(|e| match e {
            OdeFailure::Rhs(e) => e,
            OdeFailure::Step { error, steps } => {
                DeformError::StepFailure(format!("error {error:.3e} after {steps} steps"))
            }
            OdeFailure::BlowUp { norm } => DeformError::StepFailure(format!("state norm {norm:.3e}")),
        })?;
        Ok((sol.y, sol.error))
    }

    fn sweep(&self, grid: &Grid, y0: &DVector<f64>, order: &[usize], opts: &OdeOptions) -> Result<(Vec<DVector<f64>>, f64), DeformError> {
        let start = grid.base_index();
        let mut vals: Vec<Option<DVector<f64>>> = vec![None; grid.len()];
        vals[grid.flatten(&start)] = Some(y0.clone());
        let mut err = 0.0f64;
        let mut filled = vec![start];
        for &axis in order {
            let mut next = Vec::new();
            for m in &filled {
                next.push(m.clone());
                for dir in [1isize, -1] {
                    let mut cur = m.clone();
                    loop {
                        let k = cur[axis] as isize + dir;
                        if k < 0 || k >= grid.n[axis] as isize {
                            break;
                        }
                        let mut nxt = cur.clone();
                        nxt[axis] = k as usize;
                        let from = vals[grid.flatten(&cur)].clone().unwrap();
                        let (y, e) = self.segment(&grid.params(&cur), axis, grid.coord(axis, k as usize), &from, opts)?;
                        err = err.max(e);
                        vals[grid.flatten(&nxt)] = Some(y);
                        next.push(nxt.clone());
                        cur = nxt;
                    }
                }
            }
            filled = next;
        }
        Ok((vals.into_iter().map(|v| v.unwrap()).collect(), err))
    }
}

/// Fourth-order first difference of samples `f(0..len)` at index `i`.
fn diff4(f: &dyn Fn(usize) -> DVector<f64>, len: usize, i: usize, h: f64) -> DVector<f64> {
    if i >= 2 && i + 2 < len {
        (f(i - 2) - f(i - 1) * 8.0 + f(i + 1) * 8.0 - f(i + 2)) / (12.0 * h)
    } else if i < 2 {
        (f(i) * -25.0 + f(i + 1) * 48.0 - f(i + 2) * 36.0 + f(i + 3) * 16.0 - f(i + 4) * 3.0) / (12.0 * h)
    } else {
        (f(i) * 25.0 - f(i - 1) * 48.0 + f(i - 2) * 36.0 - f(i - 3) * 16.0 + f(i - 4) * 3.0) / (12.0 * h)
    }
}

/// Integrates the deformed immersion `g` into `R^{n+p}` with signature μ over
/// the package grid: the moving frame of g (tangent frame, normal vectors η_i,
/// position) is transported along axis-ordered paths, in both axis orders.
pub fn integrate_immersion(gd: &GaussData, pkg: &DeformationPackage, opts: &ImmersionOptions) -> Result<Immersion, DeformError> {
    let grid = pkg.grid().clone();
    let k = gd.p + 1;
    let nt = gd.n;
    let big_n = gd.n + gd.p;
    let mu = pkg.mu;
    if let Some(a) = (0..grid.dim()).find(|&a| grid.n[a] < 5) {
        return Err(DeformError::Invalid(format!(
            "axis {a} needs at least 5 grid points for the pullback check"
        )));
    }
    let w0 = opts.w0.clone().unwrap_or_else(|| vec![0.0; gd.normal_rank]);
    if w0.len() != gd.normal_rank {
        return Err(DeformError::Invalid(format!(
            "w0 has {} entries, expected {}",
            w0.len(),
            gd.normal_rank
        )));
    }
    let conditions = verify_conditions(gd, pkg)?;
    let structural = conditions.structural_max();
    // NaN fails the gate too
    if structural.is_nan() || structural >= opts.gate {
        return Err(DeformError::IntegrabilityTooPoor {
            residual: structural,
            gate: opts.gate,
        });
    }

    let base = grid.base_index();
    let tb = grid.params(&base);
    // the section must stay away from the focal set where P_w degenerates
    let det0 = gd.p_operator(&tb, &w0)?.determinant();
    for t in grid.all_params() {
        let det = gd.p_operator(&t, &w0)?.determinant();
        if det * det0 <= 0.0 {
            return Err(DeformError::Invalid(format!(
                "P_w changes sign between the base and {t:?}; choose another fiber point w0"
            )));
        }
    }
    let shape = gd.shape_values(&tb, &w0)?;
    let nd = build_normal_data(pkg, &base, &shape)?;
    if nd.n_minus != mu {
        return Err(DeformError::Invalid(format!(
            "quotient signature has {} negative directions, index is {mu}",
            nd.n_minus
        )));
    }

    // seed frame: tangent frame from the Cholesky factor of the Gram matrix in
    // the positive slots μ..μ+n, η from the eigen-decomposition of d
    let lay = Layout { big_n, nt, k };
    let ld = leaf_data(gd, &tb, &w0)?;
    let chol = ld
        .gram
        .clone()
        .cholesky()
        .ok_or_else(|| DeformError::Invalid("tangent Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut y0 = DVector::zeros(lay.len());
    for kk in 0..nt {
        for j in 0..nt {
            y0[lay.t(kk) + mu + j] = l[(kk, j)];
        }
    }
    let phi_base: Vec<f64> = pkg.phi(&base).iter().map(|z| z.re).collect();
    let d = DMatrix::from_fn(k, k, |i, j| 1.0 + if i == j { 1.0 / phi_base[i] } else { 0.0 });
    let eig = SymmetricEigen::new(d.clone());
    let drop = (0..k)
        .min_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()))
        .unwrap();
    let (mut neg_slot, mut pos_slot) = (0usize, mu + nt);
    for kk in (0..k).filter(|&kk| kk != drop) {
        let lam = eig.eigenvalues[kk];
        let slot = if lam < 0.0 {
            neg_slot += 1;
            neg_slot - 1
        } else {
            pos_slot += 1;
            pos_slot - 1
        };
        if slot >= big_n || (lam < 0.0 && slot >= mu) {
            return Err(DeformError::Invalid("normal eigenvalue signs do not match the index".into()));
        }
        for i in 0..k {
            y0[lay.eta(i) + slot] = lam.abs().sqrt() * eig.eigenvectors[(i, kk)];
        }
    }
    for i in 0..k {
        y0[lay.phi(i)] = phi_base[i] / pkg.scale;
    }

    let integ = Integrator {
        gd,
        w0: w0.clone(),
        scale: pkg.scale,
        lay,
    };
    let fwd: Vec<usize> = (0..k).collect();
    let rev: Vec<usize> = fwd.iter().rev().copied().collect();
    let (a, ea) = integ.sweep(&grid, &y0, &fwd, &opts.ode)?;
    let (b, eb) = integ.sweep(&grid, &y0, &rev, &opts.ode)?;
    let lay = &integ.lay;
    let mut res = ImmersionResiduals {
        ode_error: ea.max(eb),
        ..Default::default()
    };
    for (ya, yb) in a.iter().zip(&b) {
        res.sweep = res.sweep.max((ya.rows(0, big_n) - yb.rows(0, big_n)).amax());
    }

    let positions: Vec<Vec<f64>> = a.iter().map(|y| y.rows(0, big_n).iter().copied().collect()).collect();
    let fiber_frames: Vec<Vec<Vec<f64>>> = a
        .iter()
        .map(|y| (k..nt).map(|f| y.rows(lay.t(f), big_n).iter().copied().collect()).collect())
        .collect();
    for idx in 0..grid.len() {
        let m = grid.unflatten(idx);
        let t = grid.params(&m);
        let y = &a[idx];
        let ld = leaf_data(gd, &t, &w0)?;
        let tv: Vec<Vec<f64>> = (0..nt).map(|i| y.rows(lay.t(i), big_n).iter().copied().collect()).collect();
        let ev: Vec<Vec<f64>> = (0..k).map(|i| y.rows(lay.eta(i), big_n).iter().copied().collect()).collect();
        let phi: Vec<f64> = pkg.phi(&m).iter().map(|z| z.re).collect();
        let dij = |i: usize, j: usize| 1.0 + if i == j { 1.0 / phi[i] } else { 0.0 };
        for p in 0..nt {
            for q in 0..nt {
                res.frame_metric = res.frame_metric.max((signed_dot(mu, &tv[p], &tv[q]) - ld.gram[(p, q)]).abs());
            }
        }
        for i in 0..k {
            for j in 0..k {
                res.normal_metric = res.normal_metric.max((signed_dot(mu, &ev[i], &ev[j]) - dij(i, j)).abs());
            }
            for t in &tv {
                res.normal_metric = res.normal_metric.max(signed_dot(mu, &ev[i], t).abs());
            }
        }
        for i in 0..k {
            let drift = (y[lay.phi(i)] * pkg.scale - phi[i]).abs() / pkg.scale;
            res.phi_drift = res.phi_drift.max(drift);
        }
        // β(∂_r, ∂_s) = (δ_rs a_rr η_r, a_rs); ⟨·,·⟩ is ⟨·,·⟩_g − ⟨·,·⟩_f
        let beta = |r: usize, s: usize, u: usize, v: usize| {
            let g = if r == s && u == v {
                ld.a[(r, r)] * ld.a[(u, u)] * signed_dot(mu, &ev[r], &ev[u])
            } else {
                0.0
            };
            g - ld.a[(r, s)] * ld.a[(u, v)]
        };
        for r in 0..k {
            for s in 0..k {
                for u in 0..k {
                    for v in 0..k {
                        res.flatness = res.flatness.max((beta(r, s, u, v) - beta(r, v, u, s)).abs());
                    }
                }
            }
        }
        for r in 0..k {
            let fr = |i: usize| {
                let mut q = m.clone();
                q[r] = i;
                DVector::from_vec(positions[grid.flatten(&q)].clone())
            };
            let gr = diff4(&fr, grid.n[r], m[r], grid.step(r));
            for s in 0..k {
                let fs = |i: usize| {
                    let mut q = m.clone();
                    q[s] = i;
                    DVector::from_vec(positions[grid.flatten(&q)].clone())
                };
                let gs = diff4(&fs, grid.n[s], m[s], grid.step(s));
                let got = signed_dot(mu, gr.as_slice(), gs.as_slice());
                res.pullback = res.pullback.max((got - ld.gram[(r, s)]).abs());
            }
        }
    }
    let signature: String = (0..big_n).map(|k| if k < mu { '-' } else { '+' }).collect();
    Ok(Immersion {
        ambient_dim: big_n,
        mu,
        signature,
        w0,
        grid,
        positions,
        fiber_frames,
        residuals: res,
        conditions,
    })
}

/// Max deviation after the best orthogonal alignment of the centered point
/// sets (Kabsch); reflections are allowed.
pub fn procrustes_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let dim = a[0].len().max(b[0].len());
    let pad = |v: &Vec<f64>| DVector::from_fn(dim, |i, _| v.get(i).copied().unwrap_or(0.0));
    let pa: Vec<DVector<f64>> = a.iter().map(pad).collect();
    let pb: Vec<DVector<f64>> = b.iter().map(pad).collect();
    let mean = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(dim), |s, x| s + x) / v.len() as f64;
    let (ma, mb) = (mean(&pa), mean(&pb));
    let ca: Vec<DVector<f64>> = pa.iter().map(|x| x - &ma).collect();
    let cb: Vec<DVector<f64>> = pb.iter().map(|x| x - &mb).collect();
    let mut h = DMatrix::zeros(dim, dim);
    for (x, y) in ca.iter().zip(&cb) {
        h += x * y.transpose();
    }
    let svd = h.svd(true, true);
    let rot = svd.v_t.unwrap().transpose() * svd.u.unwrap().transpose();
    ca.iter().zip(&cb).map(|(x, y)| (&rot * x - y).amax()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlReport {
    pub phi: Vec<f64>,
    pub mu: usize,
    pub procrustes: f64,
    pub residuals: ImmersionResiduals,
}

/// Zero-deformation control: for φ = (L, …, L, −1 − pL) with L large, d_ij is
/// nearly the all-ones matrix, every η_i is nearly the same unit normal and g
/// must be congruent to the section of ψ itself.
pub fn zero_deformation_control(gd: &GaussData, grid: &Grid, opts: &ImmersionOptions) -> Result<ControlReport, DeformError> {
    const L: f64 = 1e8;
    let p = gd.p;
    let mut phi = vec![L; p + 1];
    phi[p] = -1.0 - p as f64 * L;
    let t0 = grid.params(&grid.base_index());
    let phic: Vec<C64> = phi.iter().map(|&x| c(x)).collect();
    let pkg = DeformationPackage::build(gd.chart(), grid, &t0, &phic, &TransportOptions::default())?;
    let imm = integrate_immersion(gd, &pkg, opts)?;
    let mut fibers = vec![imm.w0.clone()];
    for a in 0..imm.w0.len() {
        let mut w = imm.w0.clone();
        w[a] += 0.1;
        fibers.push(w);
    }
    let (mut fp, mut gp) = (Vec::new(), Vec::new());
    for idx in 0..grid.len() {
        let m = grid.unflatten(idx);
        let t = grid.params(&m);
        for w in &fibers {
            fp.push(gd.gauss_parametrize(&t, w)?.iter().copied().collect());
            gp.push(imm.point(&m, w));
        }
    }
    Ok(ControlReport {
        phi,
        mu: imm.mu,
        procrustes: procrustes_residual(&fp, &gp),
        residuals: imm.residuals,
    })
}

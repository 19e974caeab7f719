//! Sbrana bundle: connection `d + ω` on the trivial bundle `C^{p+1}`, the
//! curvature stack `B_0..B_p`, its common kernel (trivial holonomy), species,
//! and parallel transport of sections.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::chart::{jacobian, to_complex, Grid};
use crate::chart::{ChartError, ChartJets, ConjugateChart};
use crate::exprlang::Jet;
use crate::linalg;

#[derive(Debug, Error)]
pub enum SbranaError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("jet order {have} is too low, need at least {need}")]
    JetOrderTooLow { need: usize, have: usize },
    #[error("curvature stack has non-finite entries at level {level}")]
    DegenerateStack { level: usize },
    #[error("step halving did not converge: error {error:.3e} with {steps} steps")]
    StepFailure { error: f64, steps: usize },
    #[error("section blew up: |phi| = {norm:.3e}")]
    SectionBlowUp { norm: f64 },
    #[error("{0}")]
    Invalid(String),
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// `(ω_i)[k][j] = ω_ij^k` at a point, from values `g[j][i] = Γ_ji^i`.
pub fn omega_from_gamma(g: &[Vec<C64>], i: usize) -> DMatrix<C64> {
    let n = g.len();
    let mut m = DMatrix::from_element(n, n, zero());
    for j in 0..n {
        if j != i {
            m[(j, j)] = g[i][j] * -2.0;
            m[(i, j)] = g[i][j] * 2.0;
        }
    }
    m
}

pub fn omega_matrices(chart: &ConjugateChart, x: &[C64]) -> Result<Vec<DMatrix<C64>>, SbranaError> {
    let g = chart.gamma_values(x)?;
    Ok((0..chart.dim()).map(|i| omega_from_gamma(&g, i)).collect())
}

/// `ω_i φ` without forming the matrix.
pub fn apply_omega(g: &[Vec<C64>], i: usize, phi: &[C64]) -> Vec<C64> {
    let n = phi.len();
    let mut out = vec![zero(); n];
    for k in 0..n {
        if k != i {
            out[k] = g[i][k] * phi[k] * -2.0;
            out[i] += g[i][k] * phi[k] * 2.0;
        }
    }
    out
}

/// Max of `|ω_ī[k̄][j̄] - conj(ω_i[k][j])|` at the real-form point with
/// parameters `t`.
pub fn omega_equivariance(chart: &ConjugateChart, t: &[f64]) -> Result<f64, SbranaError> {
    let c = chart.conj();
    let w = omega_matrices(chart, &chart.point(t))?;
    let n = chart.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                worst = worst.max((w[c[i]][(c[k], c[j])] - w[i][(k, j)].conj()).norm());
            }
        }
    }
    Ok(worst)
}

/// Rows of `B_0` as jets, ordered by `(i, j)` with `i < j`.
fn b0_jets(cj: &ChartJets) -> Vec<Vec<Jet>> {
    let n = cj.gamma.len();
    let g = |j: usize, i: usize| &cj.gamma[j][i];
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let gji_gij = g(j, i) * g(i, j);
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                let e = if k == i {
                    &g(j, i).deriv(i) - &gji_gij.scale(C64::new(2.0, 0.0))
                } else if k == j {
                    &g(i, j).deriv(j) - &gji_gij.scale(C64::new(2.0, 0.0))
                } else {
                    let quad = &(&(g(i, k) * g(j, k)) - &(g(i, k) * g(j, i))) - &(g(j, k) * g(i, j));
                    &g(i, k).deriv(j) + &quad.scale(C64::new(2.0, 0.0))
                };
                row.push(e);
            }
            rows.push(row);
        }
    }
    rows
}

/// `B_{n+1}` from `B_n`: blocks `∂_r B_n - B_n ω_r` for `r = 0..=p`.
fn b_next(b: &[Vec<Jet>], cj: &ChartJets) -> Vec<Vec<Jet>> {
    let n = cj.gamma.len();
    let two = C64::new(2.0, 0.0);
    let mut out = Vec::with_capacity(b.len() * n);
    for r in 0..n {
        for row in b {
            let mut new = Vec::with_capacity(n);
            for c in 0..n {
                let d = row[c].deriv(r);
                if c == r {
                    new.push(d);
                } else {
                    // (B ω_r)[c] = 2 Γ_rc^c (B[r] - B[c])
                    let t = &(&row[r] - &row[c]) * &cj.gamma[r][c];
                    new.push(&d - &t.scale(two));
                }
            }
            out.push(new);
        }
    }
    out
}

fn jets_to_matrix(rows: &[Vec<Jet>], ncols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c].value())
}

/// `[B_0, ..., B_depth]` evaluated at `x` from jets of order `jet_order`.
pub fn b_matrices(
    chart: &ConjugateChart,
    x: &[C64],
    depth: usize,
    jet_order: usize,
) -> Result<Vec<DMatrix<C64>>, SbranaError> {
    if jet_order < depth + 1 {
        return Err(SbranaError::JetOrderTooLow {
            need: depth + 1,
            have: jet_order,
        });
    }
    let n = chart.dim();
    let cj = chart.jets(x, jet_order)?;
    let mut level = b0_jets(&cj);
    let mut out = vec![jets_to_matrix(&level, n)];
    for _ in 0..depth {
        level = b_next(&level, &cj);
        out.push(jets_to_matrix(&level, n));
    }
    for (lvl, m) in out.iter().enumerate() {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SbranaError::DegenerateStack { level: lvl });
        }
    }
    Ok(out)
}

pub fn stack(levels: &[DMatrix<C64>]) -> DMatrix<C64> {
    let ncols = levels.first().map_or(0, |m| m.ncols());
    let nrows: usize = levels.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::from_element(nrows, ncols, zero());
    let mut r0 = 0;
    for m in levels {
        out.view_mut((r0, 0), (m.nrows(), ncols)).copy_from(m);
        r0 += m.nrows();
    }
    out
}

#[derive(Debug, Clone)]
pub struct HolonomyOptions {
    /// Defaults to `p + 2`.
    pub jet_order: Option<usize>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
    pub witness_samples: usize,
    /// A kernel vector is a genericity witness when
    /// `min(min_i |v_i|, |Σ v_i|) / max_i |v_i|` exceeds this.
    pub witness_margin: f64,
    /// Parameters of the cross-check point; defaults to a shifted base.
    pub second_point: Option<Vec<f64>>,
    pub transport: TransportOptions,
}

impl Default for HolonomyOptions {
    fn default() -> Self {
        HolonomyOptions {
            jet_order: None,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            seed: 0,
            witness_samples: 256,
            witness_margin: 1e-6,
            second_point: None,
            transport: TransportOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SbranaHolonomy {
    pub p: usize,
    pub basepoint: Vec<f64>,
    pub jet_order: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub stack_rank: usize,
    /// Complex kernel basis.
    pub kernel: Vec<Vec<C64>>,
    /// Orthonormal basis of the real form, in real parameter coordinates.
    pub real_kernel: Vec<Vec<f64>>,
    pub rank: usize,
    pub species: usize,
    pub generic: bool,
    pub witness: Option<Vec<C64>>,
    pub witness_margin: f64,
    /// `max ‖B v‖ / (‖B‖ ‖v‖)` over the kernel basis, per level `0..=p`.
    pub annihilation: Vec<f64>,
    /// Same quantity for the whole stack.
    pub stack_annihilation: f64,
    /// `‖B_{p+1} v‖` relative to `max(‖B‖, ‖B_{p+1}‖)`; `None` if the jet
    /// order does not reach level `p + 1`.
    pub stabilization: Option<f64>,
    /// Kernel transported to a second point and re-tested against the stack.
    pub cross_check: Option<f64>,
    pub stack_norm: f64,
}

/// Real parameter coordinates of a vector fixed by the conjugation.
pub fn real_coords(conj: &[usize], v: &[C64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..v.len() {
        let j = conj[i];
        if j == i {
            out[i] = v[i].re;
        } else if i < j {
            out[i] = v[i].re;
            out[j] = v[i].im;
        }
    }
    out
}

/// Conjugation operator `(Cv)_i = conj(v_ī)`.
pub fn conjugate_vector(conj: &[usize], v: &[C64]) -> Vec<C64> {
    (0..v.len()).map(|i| v[conj[i]].conj()).collect()
}

/// `‖m v‖ / (norm ‖v‖)`, zero when `norm` is at or below `floor` (the matrix
/// is numerically zero).
fn relative_residual(m: &DMatrix<C64>, norm: f64, floor: f64, v: &DVector<C64>) -> f64 {
    if norm <= floor || m.nrows() == 0 {
        return 0.0;
    }
    (m * v).norm() / (norm * v.norm())
}

/// Margin `min(min_i |v_i|, |Σ v_i|) / max_i |v_i|`.
pub fn genericity_margin(v: &[C64]) -> f64 {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return 0.0;
    }
    let min = v.iter().fold(f64::INFINITY, |m, z| m.min(z.norm()));
    let sum: C64 = v.iter().sum();
    min.min(sum.norm()) / max
}

fn witness_search(conj: &[usize], basis: &[Vec<f64>], samples: usize, seed: u64) -> (Vec<C64>, f64) {
    let r = basis.len();
    let n = conj.len();
    let eval = |c: &[f64]| {
        let mut t = vec![0.0; n];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..n {
                t[i] += c[k] * b[i];
            }
        }
        let v = to_complex(conj, &t);
        let m = genericity_margin(&v);
        (v, m)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_c = vec![0.0; r];
    let mut best = (vec![zero(); n], -1.0);
    for _ in 0..samples.max(1) {
        let c: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = eval(&c);
        if e.1 > best.1 {
            best = e;
            best_c = c;
        }
    }
    let mut step = 0.25;
    while step > 1e-6 {
        let mut improved = false;
        for k in 0..r {
            for s in [step, -step] {
                let mut c = best_c.clone();
                c[k] += s;
                let e = eval(&c);
                if e.1 > best.1 {
                    best = e;
                    best_c = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn default_second_point(grid: &Grid, t: &[f64]) -> Vec<f64> {
    (0..t.len())
        .map(|a| {
            let w = grid.hi[a] - grid.lo[a];
            let up = t[a] + 0.15 * w;
            if up <= grid.hi[a] {
                up
            } else {
                t[a] - 0.15 * w
            }
        })
        .collect()
}

/// Common kernel of `B_0..B_p` at real parameters `t`, its real form, the
/// species and a genericity witness.
pub fn trivial_holonomy(
    chart: &ConjugateChart,
    t: &[f64],
    opts: &HolonomyOptions,
) -> Result<SbranaHolonomy, SbranaError> {
    let p = chart.p();
    let n = chart.dim();
    let m = opts.jet_order.unwrap_or(p + 2);
    let depth = if m >= p + 2 { p + 1 } else { p };
    let x = chart.point(t);
    let levels = b_matrices(chart, &x, depth, m)?;
    let main = stack(&levels[..=p]);
    let ns = linalg::null_space(&main, opts.rel_tol, opts.abs_tol);
    let smax = ns.singular_values.first().copied().unwrap_or(0.0);
    let threshold = opts.abs_tol.max(opts.rel_tol * smax);

    let annihilation = levels[..=p]
        .iter()
        .map(|b| {
            let nb = linalg::spectral_norm(b);
            ns.basis.iter().fold(0.0f64, |w, v| w.max(relative_residual(b, nb, opts.abs_tol, v)))
        })
        .collect();
    let stack_annihilation = ns
        .basis
        .iter()
        .fold(0.0f64, |w, v| w.max(relative_residual(&main, smax, opts.abs_tol, v)));
    let stabilization = (depth > p).then(|| {
        let extra = &levels[p + 1];
        let scale = smax.max(linalg::spectral_norm(extra));
        ns.basis.iter().fold(0.0f64, |w, v| w.max(relative_residual(extra, scale, opts.abs_tol, v)))
    });

    // real form: span of (v + Cv)/2 and (v - Cv)/2i in parameter coordinates
    let conj = chart.conj();
    let mut cols = Vec::new();
    for v in &ns.basis {
        let v: Vec<C64> = v.iter().copied().collect();
        let cv = conjugate_vector(conj, &v);
        let re: Vec<C64> = (0..n).map(|i| (v[i] + cv[i]) * 0.5).collect();
        let im: Vec<C64> = (0..n).map(|i| (v[i] - cv[i]) * C64::new(0.0, -0.5)).collect();
        cols.push(DVector::from_vec(real_coords(conj, &re)));
        cols.push(DVector::from_vec(real_coords(conj, &im)));
    }
    let real_kernel: Vec<Vec<f64>> = if cols.is_empty() {
        vec![]
    } else {
        linalg::column_space_real(&DMatrix::from_columns(&cols), 1e-8, 1e-14)
            .into_iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    };
    if real_kernel.len() != ns.basis.len() {
        return Err(SbranaError::Invalid(format!(
            "kernel is not closed under conjugation: real dimension {} vs complex {}",
            real_kernel.len(),
            ns.basis.len()
        )));
    }
    let rank = ns.basis.len();

    let (witness, witness_margin) = if rank == 0 {
        (None, 0.0)
    } else {
        let (v, mgn) = witness_search(conj, &real_kernel, opts.witness_samples, opts.seed);
        (Some(v), mgn)
    };
    let generic = witness_margin > opts.witness_margin;

    let cross_check = if rank == 0 {
        None
    } else {
        let t2 = opts
            .second_point
            .clone()
            .unwrap_or_else(|| default_second_point(&chart.grid, t));
        let levels2 = b_matrices(chart, &chart.point(&t2), p, m)?;
        let main2 = stack(&levels2);
        let n2 = linalg::spectral_norm(&main2);
        let mut worst = 0.0f64;
        for v in &ns.basis {
            let phi: Vec<C64> = v.iter().copied().collect();
            let moved = parallel_transport(chart, &[t.to_vec(), t2.clone()], &phi, &opts.transport)?;
            worst = worst.max(relative_residual(&main2, n2, opts.abs_tol, &DVector::from_vec(moved.phi)));
        }
        Some(worst)
    };

    Ok(SbranaHolonomy {
        p,
        basepoint: t.to_vec(),
        jet_order: m,
        singular_values: ns.singular_values.clone(),
        threshold,
        stack_rank: ns.rank,
        kernel: ns.basis.iter().map(|v| v.iter().copied().collect()).collect(),
        real_kernel,
        rank,
        species: p + 2 - rank,
        generic,
        witness: if generic { witness } else { None },
        witness_margin,
        annihilation,
        stack_annihilation,
        stabilization,
        cross_check,
        stack_norm: smax,
    })
}

#[derive(Debug, Clone)]
pub struct TransportOptions {
    /// Initial RK4 steps per unit segment.
    pub steps: usize,
    /// Accepted step-halving disagreement, relative to `1 + |φ|`.
    pub tol: f64,
    pub max_steps: usize,
    pub blowup: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            steps: 8,
            tol: 1e-11,
            max_steps: 1 << 14,
            blowup: 1e12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Transported {
    pub phi: Vec<C64>,
    /// Richardson estimate from step halving.
    pub error: f64,
    pub steps: usize,
}

fn sup(v: &[C64]) -> f64 {
    v.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

struct Segment<'a> {
    chart: &'a ConjugateChart,
    a: &'a [f64],
    d: Vec<f64>,
    du: Vec<C64>,
}

impl<'a> Segment<'a> {
    fn new(chart: &'a ConjugateChart, a: &'a [f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let jac = jacobian(chart.conj());
        let du = jac
            .iter()
            .map(|row| row.iter().zip(&d).map(|(j, dk)| j * dk).sum())
            .collect();
        Segment { chart, a, d, du }
    }

    fn rhs(&self, s: f64, phi: &[C64]) -> Result<Vec<C64>, SbranaError> {
        let t: Vec<f64> = self.a.iter().zip(&self.d).map(|(a, d)| a + s * d).collect();
        let g = self.chart.gamma_values(&self.chart.point(&t))?;
        let n = phi.len();
        let mut out = vec![zero(); n];
        for i in 0..n {
            if self.du[i] == zero() {
                continue;
            }
            let w = apply_omega(&g, i, phi);
            for k in 0..n {
                out[k] -= self.du[i] * w[k];
            }
        }
        Ok(out)
    }

    fn rk4(&self, phi0: &[C64], steps: usize) -> Result<Vec<C64>, SbranaError> {
        let h = 1.0 / steps as f64;
        let mut y = phi0.to_vec();
        let axpy = |y: &[C64], k: &[C64], c: f64| -> Vec<C64> { y.iter().zip(k).map(|(a, b)| a + b * c).collect() };
        for s in 0..steps {
            let s0 = s as f64 * h;
            let k1 = self.rhs(s0, &y)?;
            let k2 = self.rhs(s0 + 0.5 * h, &axpy(&y, &k1, 0.5 * h))?;
            let k3 = self.rhs(s0 + 0.5 * h, &axpy(&y, &k2, 0.5 * h))?;
            let k4 = self.rhs(s0 + h, &axpy(&y, &k3, h))?;
            for k in 0..y.len() {
                y[k] += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (h / 6.0);
            }
        }
        Ok(y)
    }
}

fn transport_segment(
    chart: &ConjugateChart,
    a: &[f64],
    b: &[f64],
    phi: &[C64],
    opts: &TransportOptions,
) -> Result<Transported, SbranaError> {
    let seg = Segment::new(chart, a, b);
    if seg.d.iter().all(|&x| x == 0.0) {
        return Ok(Transported {
            phi: phi.to_vec(),
            error: 0.0,
            steps: 0,
        });
    }
    let mut n = opts.steps.max(1);
    let mut coarse = seg.rk4(phi, n)?;
    loop {
        let fine = seg.rk4(phi, 2 * n)?;
        let norm = sup(&fine);
        if !norm.is_finite() || norm > opts.blowup {
            return Err(SbranaError::SectionBlowUp { norm });
        }
        let diff: Vec<C64> = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
        let err = sup(&diff) / 15.0;
        if err <= opts.tol * (1.0 + norm) {
            return Ok(Transported {
                phi: fine,
                error: err,
                steps: 2 * n,
            });
        }
        if 2 * n >= opts.max_steps {
            return Err(SbranaError::StepFailure { error: err, steps: 2 * n });
        }
        coarse = fine;
        n *= 2;
    }
}

/// Solves `dφ + ωφ = 0` along a polyline in real parameters.
pub fn parallel_transport(
    chart: &ConjugateChart,
    path: &[Vec<f64>],
    phi: &[C64],
    opts: &TransportOptions,
) -> Result<Transported, SbranaError> {
    if phi.len() != chart.dim() {
        return Err(SbranaError::Invalid(format!(
            "section has {} components, chart has {}",
            phi.len(),
            chart.dim()
        )));
    }
    let mut out = Transported {
        phi: phi.to_vec(),
        error: 0.0,
        steps: 0,
    };
    for w in path.windows(2) {
        let r = transport_segment(chart, &w[0], &w[1], &out.phi, opts)?;
        out.phi = r.phi;
        out.error += r.error;
        out.steps += r.steps;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionField {
    #[serde(skip)]
    pub grid: Grid,
    /// Values at flat grid indices (axis 0 fastest).
    pub values: Vec<Vec<C64>>,
    /// Max discrepancy between the two sweep orders.
    pub sweep_residual: f64,
    pub transport_error: f64,
}

impl SectionField {
    pub fn at(&self, m: &[usize]) -> &[C64] {
        &self.values[self.grid.flatten(m)]
    }
}

fn sweep(
    chart: &ConjugateChart,
    grid: &Grid,
    start: &[usize],
    phi: &[C64],
    order: &[usize],
    opts: &TransportOptions,
) -> Result<(Vec<Vec<C64>>, f64), SbranaError> {
    let mut vals: Vec<Option<Vec<C64>>> = vec![None; grid.len()];
    let mut err = 0.0f64;
    vals[grid.flatten(start)] = Some(phi.to_vec());
    let mut filled = vec![start.to_vec()];
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
                    let r = transport_segment(chart, &grid.params(&cur), &grid.params(&nxt), &from, opts)?;
                    err = err.max(r.error);
                    vals[grid.flatten(&nxt)] = Some(r.phi);
                    next.push(nxt.clone());
                    cur = nxt;
                }
            }
        }
        filled = next;
    }
    Ok((vals.into_iter().map(|v| v.unwrap()).collect(), err))
}

/// Extends `φ_q` given at parameters `t_q` to every grid point by parallel
/// transport along axis-ordered paths, comparing two sweep orders.
pub fn extend_section(
    chart: &ConjugateChart,
    grid: &Grid,
    t_q: &[f64],
    phi_q: &[C64],
    opts: &TransportOptions,
) -> Result<SectionField, SbranaError> {
    if grid.dim() != chart.dim() {
        return Err(SbranaError::Invalid("grid dimension does not match the chart".into()));
    }
    let start = grid.base_index();
    let to_start = parallel_transport(chart, &[t_q.to_vec(), grid.params(&start)], phi_q, opts)?;
    let fwd: Vec<usize> = (0..grid.dim()).collect();
    let rev: Vec<usize> = fwd.iter().rev().copied().collect();
    let (a, ea) = sweep(chart, grid, &start, &to_start.phi, &fwd, opts)?;
    let (b, eb) = sweep(chart, grid, &start, &to_start.phi, &rev, opts)?;
    let mut resid = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.iter().zip(y) {
            resid = resid.max((u - v).norm());
        }
    }
    Ok(SectionField {
        grid: grid.clone(),
        values: a,
        sweep_residual: resid,
        transport_error: ea.max(eb) + to_start.error,
    })
}

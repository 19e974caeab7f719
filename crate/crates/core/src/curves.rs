//! Pairs of curves in semi-Euclidean space `R^N_ν` (first ν coordinates
//! negative): the shared dimension, the orthogonal splitting of their spans,
//! and the honest-deformation interval of an intersection-type hypersurface
//! built from a pair of polar-normalized Lorentz curves.

use crate::chart::CurveSection;
use crate::exprlang::{Expr, ExprError, JetSpace};
use crate::linalg::{column_space_real, null_space_real};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurvesError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("curve {curve} is singular at {at}")]
    Singular { curve: usize, at: f64 },
    #[error("degenerate span configuration: {0}")]
    DegenerateSpan(String),
    #[error("curve {curve} is not polar-normalized at {at}: ⟨α',α'⟩ = {value}")]
    NotPolarNormalized { curve: usize, at: f64, value: f64 },
    #[error("shared dimension is {found}, the interval needs 2")]
    SharedDimensionNotTwo { found: usize },
    #[error("no honest parameter: projected norms {x1} and {x2} leave the interval empty")]
    EmptyInterval { x1: f64, x2: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct CurvePair {
    pub alpha1: Vec<Expr>,
    pub alpha2: Vec<Expr>,
    /// number of negative coordinates, placed first
    pub signature: usize,
    pub window1: (f64, f64),
    pub window2: (f64, f64),
    pub base: (f64, f64),
}

fn samples(w: (f64, f64), n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (w.0 + w.1)];
    }
    (0..n).map(|k| w.0 + (w.1 - w.0) * k as f64 / (n - 1) as f64).collect()
}

impl CurvePair {
    pub fn from_section(s: &CurveSection) -> Result<CurvePair, CurvesError> {
        if s.alpha1.len() != s.alpha2.len() || s.signature > s.alpha1.len() {
            return Err(CurvesError::Invalid("inconsistent ambient dimension or signature".into()));
        }
        Ok(CurvePair {
            alpha1: s.alpha1.clone(),
            alpha2: s.alpha2.clone(),
            signature: s.signature,
            window1: s.window1,
            window2: s.window2,
            base: s.base,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha1.len()
    }

    pub fn with_windows(&self, window1: (f64, f64), window2: (f64, f64)) -> CurvePair {
        CurvePair {
            window1,
            window2,
            ..self.clone()
        }
    }

    fn curve(&self, which: usize) -> &[Expr] {
        if which == 1 {
            &self.alpha1
        } else {
            &self.alpha2
        }
    }

    pub fn window(&self, which: usize) -> (f64, f64) {
        if which == 1 {
            self.window1
        } else {
            self.window2
        }
    }

    pub fn position(&self, which: usize, u: f64) -> Result<DVector<f64>, CurvesError> {
        let x = [C64::new(u, 0.0)];
        let v: Result<Vec<f64>, ExprError> = self.curve(which).iter().map(|e| Ok(e.eval(&x)?.re)).collect();
        Ok(DVector::from_vec(v?))
    }

    /// α_which'(u).
    pub fn velocity(&self, which: usize, u: f64) -> Result<DVector<f64>, CurvesError> {
        let space = JetSpace::shared(1, 1);
        let x = [C64::new(u, 0.0)];
        let v: Result<Vec<f64>, ExprError> = self
            .curve(which)
            .iter()
            .map(|e| Ok(e.jet(&space, &x)?.d1(0).re))
            .collect();
        Ok(DVector::from_vec(v?))
    }

    pub fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .enumerate()
            .map(|(k, (x, y))| if k < self.signature { -x * y } else { x * y })
            .sum()
    }

    fn metric(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| match (i == j, i < self.signature) {
            (false, _) => 0.0,
            (true, true) => -1.0,
            (true, false) => 1.0,
        })
    }

    fn velocities(&self, which: usize, n: usize) -> Result<Vec<DVector<f64>>, CurvesError> {
        samples(self.window(which), n)
            .into_iter()
            .map(|u| {
                let v = self.velocity(which, u)?;
                if v.amax() < 1e-12 {
                    return Err(CurvesError::Singular { curve: which, at: u });
                }
                Ok(v)
            })
            .collect()
    }

    /// Regularity on `n` samples of each window.
    pub fn check_regular(&self, n: usize) -> Result<(), CurvesError> {
        self.velocities(1, n)?;
        self.velocities(2, n)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SharedDimension {
    pub dimension: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub samples: usize,
    pub window1: (f64, f64),
    pub window2: (f64, f64),
}

/// Numerical separable rank of `⟨α_1'(u), α_2'(v)⟩` on an `n × n` sample grid
/// of the windows; singular values below `rel_tol · σ_max` count as zero.
pub fn shared_dimension(pair: &CurvePair, n: usize, rel_tol: f64) -> Result<SharedDimension, CurvesError> {
    let a = pair.velocities(1, n)?;
    let b = pair.velocities(2, n)?;
    let g = DMatrix::from_fn(n, n, |i, j| pair.dot(&a[i], &b[j]));
    let mut sv: Vec<f64> = g.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = (rel_tol * smax).max(1e-12);
    Ok(SharedDimension {
        dimension: sv.iter().filter(|&&s| s > threshold).count(),
        singular_values: sv,
        threshold,
        samples: n,
        window1: pair.window1,
        window2: pair.window2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Split {
    /// span(α_1) ∩ span(α_2)^⊥
    pub v1: Vec<Vec<f64>>,
    /// span(α_2) ∩ span(α_1)^⊥
    pub v2: Vec<Vec<f64>>,
    /// complement of V_1 ⊕ V_2 in span(α_1) + span(α_2)
    pub vl: Vec<Vec<f64>>,
    pub l: usize,
    pub span_dims: (usize, usize),
    /// Gram spectra certifying the preconditions
    pub sum_spectrum: Vec<f64>,
    pub complement1_spectrum: Vec<f64>,
    pub complement2_spectrum: Vec<f64>,
    pub vl_spectrum: Vec<f64>,
}

fn cols(v: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    if v.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    DMatrix::from_columns(v)
}

fn spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return vec![];
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

fn to_vecs(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// `A ∩ B^⊥` for orthonormal (Euclidean) bases `a`, `b`.
fn meet_perp(a: &DMatrix<f64>, b: &DMatrix<f64>, eta: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return a.clone();
    }
    if b.ncols() == 0 {
        return a.clone();
    }
    let k = null_space_real(&(b.transpose() * eta * a), tol, 1e-12);
    a * cols(&k, a.ncols())
}

fn split_spaces(pair: &CurvePair, n: usize, tol: f64) -> Result<Split, CurvesError> {
    let dim = pair.dim();
    let eta = pair.metric();
    let basis = |which: usize| -> Result<DMatrix<f64>, CurvesError> {
        let v = pair.velocities(which, n)?;
        Ok(cols(&column_space_real(&cols(&v, dim), tol, 1e-12), dim))
    };
    let b1 = basis(1)?;
    let b2 = basis(2)?;
    let mut both = b1.clone().resize_horizontally(b1.ncols() + b2.ncols(), 0.0);
    both.view_mut((0, b1.ncols()), (dim, b2.ncols())).copy_from(&b2);
    let s = cols(&column_space_real(&both, tol, 1e-12), dim);
    let sum_spectrum = spectrum(&(s.transpose() * &eta * &s));
    let big = sum_spectrum.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sum_spectrum.iter().any(|x| x.abs() <= tol * big) {
        return Err(CurvesError::DegenerateSpan(format!(
            "span(α_1) + span(α_2) is degenerate (Gram spectrum {sum_spectrum:?})"
        )));
    }
    let perp = |b: &DMatrix<f64>| -> DMatrix<f64> {
        let k = null_space_real(&(b.transpose() * &eta), tol, 1e-12);
        cols(&k, dim)
    };
    let definite = |c: &DMatrix<f64>| -> Result<Vec<f64>, CurvesError> {
        let sp = spectrum(&(c.transpose() * &eta * c));
        if sp.iter().any(|x| *x > 0.0) && sp.iter().any(|x| *x < 0.0) || sp.iter().any(|x| x.abs() <= tol) {
            return Err(CurvesError::DegenerateSpan(format!("a span complement is not definite ({sp:?})")));
        }
        Ok(sp)
    };
    let complement1_spectrum = definite(&perp(&b1))?;
    let complement2_spectrum = definite(&perp(&b2))?;
    let v1 = meet_perp(&b1, &b2, &eta, tol);
    let v2 = meet_perp(&b2, &b1, &eta, tol);
    let mut v12 = v1.clone().resize_horizontally(v1.ncols() + v2.ncols(), 0.0);
    v12.view_mut((0, v1.ncols()), (dim, v2.ncols())).copy_from(&v2);
    let vl = meet_perp(&s, &v12, &eta, tol);
    Ok(Split {
        v1: to_vecs(&v1),
        v2: to_vecs(&v2),
        l: vl.ncols(),
        vl_spectrum: spectrum(&(vl.transpose() * &eta * &vl)),
        vl: to_vecs(&vl),
        span_dims: (b1.ncols(), b2.ncols()),
        sum_spectrum,
        complement1_spectrum,
        complement2_spectrum,
    })
}

/// Orthogonal decomposition `span(α_1) + span(α_2) = V_1 ⊕ V^l ⊕ V_2`, with
/// spans taken from sampled derivatives on the windows. A configuration in
/// which one span contains the other is rejected as degenerate: the two flat
/// factors would not meet transversally.
pub fn orthogonal_split(pair: &CurvePair, n: usize, tol: f64) -> Result<Split, CurvesError> {
    let sp = split_spaces(pair, n, tol)?;
    let sum_dim = sp.sum_spectrum.len();
    if sum_dim == sp.span_dims.0.max(sp.span_dims.1) {
        return Err(CurvesError::DegenerateSpan(format!(
            "one span contains the other (dimensions {:?}, sum {sum_dim})",
            sp.span_dims
        )));
    }
    Ok(sp)
}

#[derive(Debug, Clone, Serialize)]
pub struct HonestInterval {
    pub lower: f64,
    pub upper: f64,
    /// ⟨ᾱ_1'(u0), ᾱ_1'(u0)⟩ and ⟨ᾱ_2'(v0), ᾱ_2'(v0)⟩
    pub x1: f64,
    pub x2: f64,
    /// interval valid on the whole windows: (sup x1, inf 1/x2), if nonempty
    pub window: Option<(f64, f64)>,
    /// lower · x2, below 1 for a nonempty interval
    pub certificate: f64,
    pub shared_dimension: usize,
    pub base: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct IntervalOptions {
    pub samples: usize,
    pub rel_tol: f64,
    /// allowed |⟨α_i', α_i'⟩ + 1|
    pub norm_tol: f64,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        IntervalOptions {
            samples: 64,
            rel_tol: 1e-8,
            norm_tol: 1e-9,
        }
    }
}

/// Open interval of honest deformation parameters for a polar-normalized
/// pair: `⟨ᾱ_1', ᾱ_1'⟩ < t < ⟨ᾱ_2', ᾱ_2'⟩^{-1}` at the base point, with ᾱ_i the
/// metric projections onto the two-dimensional shared factor V^l.
pub fn honest_interval(pair: &CurvePair, opts: &IntervalOptions) -> Result<HonestInterval, CurvesError> {
    for which in [1, 2] {
        for u in samples(pair.window(which), opts.samples) {
            let v = pair.velocity(which, u)?;
            let value = pair.dot(&v, &v);
            if (value + 1.0).abs() > opts.norm_tol {
                return Err(CurvesError::NotPolarNormalized { curve: which, at: u, value });
            }
        }
    }
    let sd = shared_dimension(pair, opts.samples, opts.rel_tol)?;
    if sd.dimension != 2 {
        return Err(CurvesError::SharedDimensionNotTwo { found: sd.dimension });
    }
    let sp = split_spaces(pair, opts.samples, opts.rel_tol)?;
    if sp.l != 2 {
        return Err(CurvesError::DegenerateSpan(format!("shared factor has dimension {}", sp.l)));
    }
    let eta = pair.metric();
    let q = DMatrix::from_fn(pair.dim(), 2, |i, j| sp.vl[j][i]);
    let gram_inv = (q.transpose() * &eta * &q)
        .try_inverse()
        .ok_or_else(|| CurvesError::DegenerateSpan("shared factor is degenerate".into()))?;
    let project = |v: DVector<f64>| &q * (&gram_inv * (q.transpose() * &eta * v));
    let x = |which: usize, u: f64| -> Result<f64, CurvesError> {
        let p = project(pair.velocity(which, u)?);
        Ok(pair.dot(&p, &p))
    };
    let x1 = x(1, pair.base.0)?;
    let x2 = x(2, pair.base.1)?;
    if x2.is_nan() || x2 <= 0.0 || x1 * x2 >= 1.0 || x1.is_nan() {
        return Err(CurvesError::EmptyInterval { x1, x2 });
    }
    let mut lo = f64::NEG_INFINITY;
    for u in samples(pair.window1, opts.samples) {
        lo = lo.max(x(1, u)?);
    }
    let mut hi = f64::INFINITY;
    for v in samples(pair.window2, opts.samples) {
        let y = x(2, v)?;
        hi = if y > 0.0 { hi.min(1.0 / y) } else { f64::NEG_INFINITY };
    }
    Ok(HonestInterval {
        lower: x1,
        upper: 1.0 / x2,
        x1,
        x2,
        window: (lo < hi).then_some((lo, hi)),
        certificate: x1 * x2,
        shared_dimension: sd.dimension,
        base: pair.base,
    })
}

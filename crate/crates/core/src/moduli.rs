//! Admissible tuples, the matrix `D_φ`, the index and quotient signature, and
//! sampling of the moduli set over the trivial holonomy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::chart::{to_complex, Ambient, ConjugateChart};
use crate::linalg;
use crate::sbrana::SbranaHolonomy;

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("tuple is not admissible: {0}")]
    NotAdmissible(String),
    #[error("phi_{index} vanishes")]
    ZeroEntry { index: usize },
    #[error("D_phi is singular (1 + sum phi = {sum})")]
    Singular { sum: C64 },
    #[error("conjugation pattern has length {got}, tuple has {want}")]
    Pattern { got: usize, want: usize },
    #[error("no admissible point found after {samples} samples")]
    EmptyModuli { samples: usize },
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// Names of the failing conditions: "conjugation", "nonzero", "sum".
    pub failures: Vec<String>,
    /// Number of conjugate pairs.
    pub s: usize,
    /// Number of real indices with `φ_i > 0`.
    pub positive: usize,
    /// `p - (s + P)` when admissible.
    pub index: Option<usize>,
}

/// Checks `φ_ī = conj φ_i`, `φ_i ≠ 0` and `1 + Σφ_i = 0` to `tol`.
pub fn is_admissible(phi: &[C64], conj: &[usize], tol: f64) -> Admissibility {
    let n = phi.len();
    let mut failures = Vec::new();
    if conj.len() != n || (0..n).any(|i| (phi[conj[i]] - phi[i].conj()).norm() > tol) {
        failures.push("conjugation".to_string());
    }
    if phi.iter().any(|z| z.norm() <= tol) {
        failures.push("nonzero".to_string());
    }
    let sum: C64 = phi.iter().sum();
    if (sum + one()).norm() > tol {
        failures.push("sum".to_string());
    }
    let s = (0..conj.len().min(n)).filter(|&i| conj[i] > i).count();
    let positive = (0..conj.len().min(n)).filter(|&i| conj[i] == i && phi[i].re > 0.0).count();
    let admissible = failures.is_empty();
    let p = n.saturating_sub(1);
    Admissibility {
        admissible,
        failures,
        s,
        positive,
        index: admissible.then(|| p - (s + positive)),
    }
}

pub fn index_of(phi: &[C64], conj: &[usize], tol: f64) -> Result<usize, ModuliError> {
    let a = is_admissible(phi, conj, tol);
    a.index.ok_or_else(|| ModuliError::NotAdmissible(a.failures.join(", ")))
}

fn check_nonzero(phi: &[C64]) -> Result<(), ModuliError> {
    match phi.iter().position(|z| z.norm() == 0.0) {
        Some(index) => Err(ModuliError::ZeroEntry { index }),
        None => Ok(()),
    }
}

/// `d_ij = 1 + δ_ij / φ_i`.
pub fn d_matrix(phi: &[C64]) -> Result<DMatrix<C64>, ModuliError> {
    check_nonzero(phi)?;
    let n = phi.len();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { one() + one() / phi[i] } else { one() }))
}

/// `det D_φ = (1 + Σφ_i) / Πφ_i`.
pub fn det_closed_form(phi: &[C64]) -> C64 {
    let sum: C64 = phi.iter().sum();
    let prod: C64 = phi.iter().product();
    (one() + sum) / prod
}

#[derive(Debug, Clone, Serialize)]
pub struct DAnalysis {
    pub det_closed: C64,
    pub det_lu: C64,
    /// `Σφ_j e_j` when `D_φ` is singular, with `‖D_φ v‖`.
    pub kernel: Option<(Vec<C64>, f64)>,
}

pub fn d_analysis(phi: &[C64], tol: f64) -> Result<DAnalysis, ModuliError> {
    let d = d_matrix(phi)?;
    let det_closed = det_closed_form(phi);
    let det_lu = d.clone().lu().determinant();
    let sum: C64 = phi.iter().sum();
    let kernel = ((one() + sum).norm() <= tol).then(|| {
        let v = DVector::from_column_slice(phi);
        (phi.to_vec(), (&d * v).norm())
    });
    Ok(DAnalysis {
        det_closed,
        det_lu,
        kernel,
    })
}

/// `(D_φ^{-1})_ij = δ_ij φ_i - φ_i φ_j / (1 + Σφ_k)`.
pub fn d_inverse(phi: &[C64]) -> Result<DMatrix<C64>, ModuliError> {
    check_nonzero(phi)?;
    let denom = one() + phi.iter().sum::<C64>();
    if denom.norm() == 0.0 {
        return Err(ModuliError::Singular { sum: denom - one() });
    }
    let n = phi.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { phi[i] } else { C64::new(0.0, 0.0) };
        diag - phi[i] * phi[j] / denom
    }))
}

/// The entry formula with `φ_i²` in the numerator, kept to show it fails the
/// identity test.
pub fn d_inverse_squared_variant(phi: &[C64]) -> DMatrix<C64> {
    let denom = one() + phi.iter().sum::<C64>();
    let n = phi.len();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { phi[i] } else { C64::new(0.0, 0.0) };
        diag - phi[i] * phi[i] / denom
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseCheck {
    /// `‖D·D^{-1} - I‖_max` for the `φ_iφ_j` entry.
    pub product_form: f64,
    /// Same for the `φ_i²` entry.
    pub squared_form: f64,
    pub verified: &'static str,
}

pub fn verify_inverse_formula(phi: &[C64]) -> Result<InverseCheck, ModuliError> {
    let d = d_matrix(phi)?;
    let n = phi.len();
    let err = |inv: &DMatrix<C64>| (&d * inv - DMatrix::<C64>::identity(n, n)).camax();
    let product_form = err(&d_inverse(phi)?);
    let squared_form = err(&d_inverse_squared_variant(phi));
    let verified = if product_form <= 1e-10 * (1.0 + d.camax()) {
        "delta_ij*phi_i - phi_i*phi_j/(1+sum phi)"
    } else if squared_form <= 1e-10 * (1.0 + d.camax()) {
        "delta_ij*phi_i - phi_i^2/(1+sum phi)"
    } else {
        "none"
    };
    Ok(InverseCheck {
        product_form,
        squared_form,
        verified,
    })
}

/// Real basis of the real form `{v : v_ī = conj v_i}` adapted to `φ`:
/// `(ω e_a + ω̄ e_b)/√2`, `(iω e_a - iω̄ e_b)/√2` with `ω² = φ_a` for each pair
/// `a < b`, and `√|φ_j| e_j` for each real index.
pub fn adapted_basis(phi: &[C64], conj: &[usize]) -> DMatrix<C64> {
    let n = phi.len();
    let r2 = std::f64::consts::SQRT_2;
    let mut t = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for a in 0..n {
        let b = conj[a];
        if b == a {
            t[(a, a)] = C64::new(phi[a].norm().sqrt(), 0.0);
        } else if a < b {
            let w = phi[a].sqrt();
            let i = C64::new(0.0, 1.0);
            t[(a, a)] = w / r2;
            t[(b, a)] = w.conj() / r2;
            t[(a, b)] = i * w / r2;
            t[(b, b)] = -i * w.conj() / r2;
        }
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct Signature {
    pub n_plus: usize,
    pub n_minus: usize,
    pub eigenvalues: Vec<f64>,
}

/// Sign counts of the product `⟨[e_i],[e_j]⟩ = d_ij` on the real form of
/// `C^{p+1} / span{φ}`.
pub fn quotient_signature(phi: &[C64], conj: &[usize], tol: f64) -> Result<Signature, ModuliError> {
    if conj.len() != phi.len() {
        return Err(ModuliError::Pattern {
            got: conj.len(),
            want: phi.len(),
        });
    }
    index_of(phi, conj, tol)?;
    let d = d_matrix(phi)?;
    let t = adapted_basis(phi, conj);
    let gram = t.transpose() * d * &t;
    let g = DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| 0.5 * (gram[(i, j)].re + gram[(j, i)].re));
    let mut eig: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    // exactly one eigenvalue belongs to the kernel direction: drop the smallest in magnitude
    let k = (0..eig.len())
        .min_by(|&i, &j| eig[i].abs().total_cmp(&eig[j].abs()))
        .unwrap();
    let rest: Vec<f64> = eig.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &x)| x).collect();
    Ok(Signature {
        n_plus: rest.iter().filter(|&&x| x > 0.0).count(),
        n_minus: rest.iter().filter(|&&x| x < 0.0).count(),
        eigenvalues: eig,
    })
}

#[derive(Debug, Clone)]
pub struct ModuliOptions {
    /// Half-width of the sampling box in slice coordinates.
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Points with some `|u_i|` at or below this are rejected.
    pub zero_tol: f64,
    /// Representatives stored per bucket.
    pub keep: usize,
}

impl Default for ModuliOptions {
    fn default() -> Self {
        ModuliOptions {
            radius: 3.0,
            samples: 4000,
            seed: 0,
            zero_tol: 1e-6,
            keep: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuliSample {
    pub params: Vec<f64>,
    pub phi: Vec<C64>,
    pub mu: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bucket {
    pub mu: usize,
    /// Signs of the real coordinates, e.g. "+-".
    pub signs: String,
    pub count: usize,
    pub representatives: Vec<ModuliSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuliDescription {
    pub p: usize,
    pub species: usize,
    /// Affine dimension of the slice `{1 + Σu_i = 0}` of the real kernel.
    pub dimension: usize,
    pub slice_point: Vec<f64>,
    pub slice_directions: Vec<Vec<f64>>,
    pub samples_drawn: usize,
    pub admissible_samples: usize,
    /// Admissible sample counts by index `μ`.
    pub by_index: BTreeMap<usize, usize>,
    /// Ambient index of the deformation for each `μ` present (`μ` for the
    /// sphere, `p - μ` for the hyperbolic ambient).
    pub ambient_index: BTreeMap<usize, usize>,
    pub buckets: Vec<Bucket>,
    /// Number of sign buckets of `U_0`.
    pub u0_components: usize,
}

/// `Σ u_i` as a linear functional on real parameters.
fn sum_weights(conj: &[usize]) -> Vec<f64> {
    (0..conj.len())
        .map(|i| match conj[i] {
            j if j == i => 1.0,
            j if i < j => 2.0,
            _ => 0.0,
        })
        .collect()
}

fn sign_string(phi: &[C64], conj: &[usize]) -> String {
    (0..phi.len())
        .map(|i| {
            if conj[i] != i {
                'c'
            } else if phi[i].re > 0.0 {
                '+'
            } else {
                '-'
            }
        })
        .collect()
}

/// Samples the admissible points of the real kernel slice `{1 + Σu_i = 0}`
/// and buckets them by index and sign pattern.
pub fn moduli_space(
    chart: &ConjugateChart,
    hol: &SbranaHolonomy,
    opts: &ModuliOptions,
) -> Result<ModuliDescription, ModuliError> {
    let conj = chart.conj();
    let p = chart.p();
    let n = p + 1;
    let r = hol.real_kernel.len();
    if r == 0 {
        return Err(ModuliError::EmptyModuli { samples: 0 });
    }
    let basis = DMatrix::from_fn(n, r, |i, k| hol.real_kernel[k][i]);
    let w = DVector::from_vec(sum_weights(conj));
    let a = basis.transpose() * &w;
    if a.norm() <= 1e-12 {
        // the kernel lies in {Σu = 0}
        return Err(ModuliError::EmptyModuli { samples: 0 });
    }
    let c0 = &a * (-1.0 / a.norm_squared());
    let dirs = linalg::null_space_real(&DMatrix::from_row_slice(1, r, a.as_slice()), 1e-10, 1e-14);
    let slice_point: Vec<f64> = (&basis * &c0).iter().copied().collect();
    let slice_directions: Vec<Vec<f64>> = dirs.iter().map(|d| (&basis * d).iter().copied().collect()).collect();
    let dimension = slice_directions.len();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws = if dimension == 0 { 1 } else { opts.samples };
    let mut by_index = BTreeMap::new();
    let mut buckets: BTreeMap<(usize, String), Bucket> = BTreeMap::new();
    let mut admissible = 0;
    for _ in 0..draws {
        let mut t = slice_point.clone();
        for d in &slice_directions {
            let s: f64 = rng.gen_range(-opts.radius..opts.radius);
            for i in 0..n {
                t[i] += s * d[i];
            }
        }
        let phi = to_complex(conj, &t);
        if phi.iter().any(|z| z.norm() <= opts.zero_tol) {
            continue;
        }
        let Ok(mu) = index_of(&phi, conj, 1e-9) else { continue };
        admissible += 1;
        *by_index.entry(mu).or_insert(0) += 1;
        let signs = sign_string(&phi, conj);
        let b = buckets.entry((mu, signs.clone())).or_insert_with(|| Bucket {
            mu,
            signs,
            count: 0,
            representatives: vec![],
        });
        b.count += 1;
        if b.representatives.len() < opts.keep {
            b.representatives.push(ModuliSample { params: t, phi, mu });
        }
    }
    if admissible == 0 {
        return Err(ModuliError::EmptyModuli { samples: draws });
    }
    let ambient_index = by_index
        .keys()
        .map(|&mu| {
            let a = match chart.ambient() {
                Ambient::Sphere => mu,
                Ambient::Hyperbolic => p - mu,
            };
            (mu, a)
        })
        .collect();
    let buckets: Vec<Bucket> = buckets.into_values().collect();
    let u0_components = buckets.iter().filter(|b| b.mu == 0).count();
    Ok(ModuliDescription {
        p,
        species: hol.species,
        dimension,
        slice_point,
        slice_directions,
        samples_drawn: draws,
        admissible_samples: admissible,
        by_index,
        ambient_index,
        buckets,
        u0_components,
    })
}

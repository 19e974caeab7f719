//! Classical RK4 over the unit interval with step doubling until the
//! Richardson error estimate meets a tolerance.

use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeOptions {
    /// initial number of steps
    pub steps: usize,
    /// accepted when |y_2N - y_N|/15 <= tol (1 + |y|)
    pub tol: f64,
    pub max_steps: usize,
    pub blowup: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            steps: 4,
            tol: 1e-11,
            max_steps: 1 << 12,
            blowup: 1e12,
        }
    }
}

#[derive(Debug)]
pub enum OdeFailure<E> {
    Rhs(E),
    Step { error: f64, steps: usize },
    BlowUp { norm: f64 },
}

pub struct OdeSolution {
    pub y: DVector<f64>,
    pub error: f64,
    pub steps: usize,
}

pub fn rk4<E, F>(f: &mut F, y0: &DVector<f64>, steps: usize) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let h = 1.0 / steps as f64;
    let mut y = y0.clone();
    for k in 0..steps {
        let s = k as f64 * h;
        let k1 = f(s, &y)?;
        let k2 = f(s + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
        let k3 = f(s + 0.5 * h, &(&y + &k2 * (0.5 * h)))?;
        let k4 = f(s + h, &(&y + &k3 * h))?;
        y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    Ok(y)
}

/// Integrates `y' = f(s, y)` for `s` in `[0, 1]`.
pub fn integrate<E, F>(mut f: F, y0: &DVector<f64>, opts: &OdeOptions) -> Result<OdeSolution, OdeFailure<E>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let mut n = opts.steps.max(1);
    let mut coarse = rk4(&mut f, y0, n).map_err(OdeFailure::Rhs)?;
    loop {
        let fine = rk4(&mut f, y0, 2 * n).map_err(OdeFailure::Rhs)?;
        let norm = fine.amax();
        if !norm.is_finite() || norm > opts.blowup {
            return Err(OdeFailure::BlowUp { norm });
        }
        let err = (&fine - &coarse).amax() / 15.0;
        if err <= opts.tol * (1.0 + norm) {
            return Ok(OdeSolution {
                y: fine,
                error: err,
                steps: 2 * n,
            });
        }
        if 2 * n >= opts.max_steps {
            return Err(OdeFailure::Step { error: err, steps: 2 * n });
        }
        coarse = fine;
        n *= 2;
    }
}

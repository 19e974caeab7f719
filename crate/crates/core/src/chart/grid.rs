use num_complex::Complex64 as C64;

/// Rectangular lattice in the real parameters `t_0..t_p`.
///
/// A real coordinate is `u_i = t_i`; a conjugate pair `a < b` is sampled as
/// `u_a = t_a + i t_b`, `u_b = t_a - i t_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
    pub base: Vec<f64>,
}

impl Grid {
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Grid {
        Grid {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
            n: vec![n; dim],
            base: vec![0.5 * (lo + hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn with_resolution(&self, n: usize) -> Grid {
        Grid {
            n: vec![n; self.dim()],
            ..self.clone()
        }
    }

    pub fn step(&self, axis: usize) -> f64 {
        if self.n[axis] <= 1 {
            0.0
        } else {
            (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
        }
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        if self.n[axis] <= 1 {
            self.lo[axis]
        } else {
            self.lo[axis] + self.step(axis) * k as f64
        }
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of the flat index (axis 0 fastest).
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim());
        for &n in &self.n {
            out.push(idx % n);
            idx /= n;
        }
        out
    }

    pub fn flatten(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim()).rev() {
            idx = idx * self.n[a] + m[a];
        }
        idx
    }

    pub fn params(&self, m: &[usize]) -> Vec<f64> {
        m.iter().enumerate().map(|(a, &k)| self.coord(a, k)).collect()
    }

    /// All lattice points as real parameter vectors.
    pub fn all_params(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.params(&self.unflatten(i))).collect()
    }

    /// Grid index closest to the base point.
    pub fn base_index(&self) -> Vec<usize> {
        (0..self.dim())
            .map(|a| {
                let h = self.step(a);
                if h == 0.0 {
                    0
                } else {
                    let k = ((self.base[a] - self.lo[a]) / h).round();
                    k.clamp(0.0, (self.n[a] - 1) as f64) as usize
                }
            })
            .collect()
    }
}

/// Linear map from real parameters to complex coordinates for a given
/// conjugation involution.
pub fn to_complex(conj: &[usize], t: &[f64]) -> Vec<C64> {
    (0..conj.len())
        .map(|i| {
            let j = conj[i];
            if j == i {
                C64::new(t[i], 0.0)
            } else if i < j {
                C64::new(t[i], t[j])
            } else {
                C64::new(t[j], -t[i])
            }
        })
        .collect()
}

/// Jacobian `du_i / dt_k` of [`to_complex`].
pub fn jacobian(conj: &[usize]) -> Vec<Vec<C64>> {
    let n = conj.len();
    let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        let j = conj[i];
        if j == i {
            m[i][i] = C64::new(1.0, 0.0);
        } else if i < j {
            m[i][i] = C64::new(1.0, 0.0);
            m[i][j] = C64::new(0.0, 1.0);
        } else {
            m[i][j] = C64::new(1.0, 0.0);
            m[i][i] = C64::new(0.0, -1.0);
        }
    }
    m
}

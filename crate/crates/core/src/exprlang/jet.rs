use super::{as_integer, domain, on_cut, ExprError, Func};
use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial bookkeeping for jets in `nvars` variables up to total degree
/// `order`. Monomials are stored in graded order, so a jet of lower order
/// is a prefix of the coefficient vector.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    // count[k] = number of monomials of degree <= k
    count: Vec<usize>,
    // (a, b, c) with mono[a] + mono[b] = mono[c], sorted by degree of c
    mul: Vec<(u32, u32, u32)>,
    mul_end: Vec<usize>,
    // per variable: (from, to, factor) with mono[to] = mono[from] + e_r
    shift: Vec<Vec<(u32, u32, f64)>>,
}

fn monomials_of_degree(nvars: usize, d: usize) -> Vec<Vec<u8>> {
    if nvars == 0 {
        return if d == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for mut rest in monomials_of_degree(nvars - 1, d - first) {
            let mut m = vec![first as u8];
            m.append(&mut rest);
            out.push(m);
        }
    }
    out
}

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> JetSpace {
        let mut monos = Vec::new();
        let mut count = Vec::new();
        for d in 0..=order {
            monos.extend(monomials_of_degree(nvars, d));
            count.push(monos.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let deg = |m: &Vec<u8>| m.iter().map(|&v| v as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (a, ma) in monos.iter().enumerate() {
            for (b, mb) in monos.iter().enumerate() {
                if deg(ma) + deg(mb) > order {
                    continue;
                }
                let mc: Vec<u8> = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
                mul.push((a as u32, b as u32, index[&mc] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, c)| c);
        let mut mul_end = vec![0; order + 1];
        for (k, end) in mul_end.iter_mut().enumerate() {
            *end = mul.partition_point(|&(_, _, c)| (c as usize) < count[k]);
        }

        let mut shift = vec![Vec::new(); nvars];
        for (r, sh) in shift.iter_mut().enumerate() {
            for (from, m) in monos.iter().enumerate() {
                if deg(m) == order {
                    continue;
                }
                let mut up = m.clone();
                up[r] += 1;
                sh.push((from as u32, index[&up] as u32, up[r] as f64));
            }
        }
        JetSpace {
            nvars,
            order,
            monos,
            index,
            count,
            mul,
            mul_end,
            shift,
        }
    }

    /// Process-wide cache of spaces keyed by (nvars, order).
    pub fn shared(nvars: usize, order: usize) -> Arc<JetSpace> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<JetSpace>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::new(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn len(&self, order: usize) -> usize {
        self.count[order]
    }
    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monos
    }
    pub fn index_of(&self, m: &[u8]) -> Option<usize> {
        self.index.get(m).copied()
    }
}

/// Truncated Taylor expansion: `f(x + h) = sum_a c_a h^a`, |a| <= order.
#[derive(Debug, Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    order: usize,
    c: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, v: C64) -> Jet {
        let mut c = vec![C64::new(0.0, 0.0); space.len(space.order)];
        c[0] = v;
        Jet {
            space: space.clone(),
            order: space.order,
            c,
        }
    }

    pub fn variable(space: &Arc<JetSpace>, i: usize, v: C64) -> Jet {
        let mut j = Jet::constant(space, v);
        if space.order >= 1 {
            let mut m = vec![0u8; space.nvars];
            m[i] = 1;
            j.c[space.index[&m]] = C64::new(1.0, 0.0);
        }
        j
    }

    /// Jet of the given order from its graded Taylor coefficients; missing
    /// trailing coefficients are zero.
    pub fn from_coeffs(space: &Arc<JetSpace>, order: usize, coeffs: &[C64]) -> Jet {
        let order = order.min(space.order);
        let mut c = vec![C64::new(0.0, 0.0); space.len(order)];
        let k = c.len().min(coeffs.len());
        c[..k].copy_from_slice(&coeffs[..k]);
        Jet {
            space: space.clone(),
            order,
            c,
        }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn value(&self) -> C64 {
        self.c[0]
    }
    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    /// Taylor coefficient of the monomial `m` (zero above the jet order).
    pub fn coeff(&self, m: &[u8]) -> C64 {
        match self.space.index_of(m) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Mixed partial derivative with multiplicities `m`.
    pub fn partial(&self, m: &[u8]) -> C64 {
        let f: f64 = m.iter().map(|&k| factorial(k as usize)).product();
        self.coeff(m) * f
    }

    pub fn d1(&self, i: usize) -> C64 {
        let mut m = vec![0u8; self.space.nvars];
        m[i] = 1;
        self.partial(&m)
    }

    pub fn d2(&self, i: usize, j: usize) -> C64 {
        let mut m = vec![0u8; self.space.nvars];
        m[i] += 1;
        m[j] += 1;
        self.partial(&m)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet {
            space: self.space.clone(),
            order,
            c: self.c[..self.space.len(order)].to_vec(),
        }
    }

    /// Exact derivative; the result has one order less.
    pub fn deriv(&self, r: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let mut c = vec![C64::new(0.0, 0.0); self.space.len(order)];
        for &(from, to, f) in &self.space.shift[r] {
            let (from, to) = (from as usize, to as usize);
            if from < c.len() && to < self.c.len() {
                c[from] = self.c[to] * f;
            }
        }
        Jet {
            space: self.space.clone(),
            order,
            c,
        }
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet {
            space: self.space.clone(),
            order: self.order,
            c: self.c.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.c[1..].iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    fn zip(&self, o: &Jet, f: impl Fn(C64, C64) -> C64) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.space, &o.space) || self.space.nvars == o.space.nvars);
        let order = self.order.min(o.order);
        let n = self.space.len(order);
        Jet {
            space: self.space.clone(),
            order,
            c: (0..n).map(|i| f(self.c[i], o.c[i])).collect(),
        }
    }

    fn mul_jet(&self, o: &Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut c = vec![C64::new(0.0, 0.0); self.space.len(order)];
        for &(a, b, k) in &self.space.mul[..self.space.mul_end[order]] {
            c[k as usize] += self.c[a as usize] * o.c[b as usize];
        }
        Jet {
            space: self.space.clone(),
            order,
            c,
        }
    }

    /// `sum_k t[k] * delta^k` where `delta` is this jet minus its value.
    fn compose(&self, t: &[C64]) -> Jet {
        let mut delta = self.clone();
        delta.c[0] = C64::new(0.0, 0.0);
        let mut acc = Jet::constant(&self.space, t[self.order]).truncate(self.order);
        for k in (0..self.order).rev() {
            acc = acc.mul_jet(&delta);
            acc.c[0] += t[k];
        }
        acc
    }

    fn recip(&self) -> Result<Jet, ExprError> {
        let a = self.value();
        if a == C64::new(0.0, 0.0) {
            return Err(ExprError::DivisionByZero);
        }
        let t: Vec<C64> = (0..=self.order)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                a.powi(-(k as i32) - 1) * s
            })
            .collect();
        Ok(self.compose(&t))
    }

    pub fn div(&self, o: &Jet) -> Result<Jet, ExprError> {
        Ok(self.mul_jet(&o.recip()?))
    }

    fn powi(&self, n: i32) -> Result<Jet, ExprError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = Jet::constant(&self.space, C64::new(1.0, 0.0)).truncate(self.order);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        Ok(result)
    }

    /// Principal-branch power with constant exponent.
    fn powc(&self, s: C64, name: &'static str) -> Result<Jet, ExprError> {
        let a = self.value();
        if on_cut(a) {
            return Err(domain(name, a));
        }
        if a == C64::new(0.0, 0.0) {
            if self.order == 0 && s.re > 0.0 {
                return Ok(Jet::constant(&self.space, a).truncate(0));
            }
            return Err(domain(name, a));
        }
        let mut t = Vec::with_capacity(self.order + 1);
        let mut binom = C64::new(1.0, 0.0);
        let base = (s * a.ln()).exp();
        for k in 0..=self.order {
            t.push(binom * base * a.powi(-(k as i32)));
            binom = binom * (s - k as f64) / (k as f64 + 1.0);
        }
        Ok(self.compose(&t))
    }

    pub fn pow(&self, e: &Jet) -> Result<Jet, ExprError> {
        if e.is_constant() {
            if let Some(n) = as_integer(e.value()) {
                return self.powi(n);
            }
            return self.powc(e.value(), "pow");
        }
        let l = self.apply(Func::Log)?;
        e.mul_jet(&l).apply(Func::Exp)
    }

    pub fn apply(&self, f: Func) -> Result<Jet, ExprError> {
        let a = self.value();
        let m = self.order;
        let inv_fact = |k: usize| 1.0 / factorial(k);
        let t: Vec<C64> = match f {
            Func::Exp => {
                let e = a.exp();
                (0..=m).map(|k| e * inv_fact(k)).collect()
            }
            Func::Sin | Func::Cos => {
                let (s, c) = (a.sin(), a.cos());
                let cyc = [s, c, -s, -c];
                let off = if f == Func::Sin { 0 } else { 1 };
                (0..=m).map(|k| cyc[(k + off) % 4] * inv_fact(k)).collect()
            }
            Func::Sinh | Func::Cosh => {
                let (s, c) = (a.sinh(), a.cosh());
                let off = if f == Func::Sinh { 0 } else { 1 };
                (0..=m)
                    .map(|k| if (k + off) % 2 == 0 { s } else { c } * inv_fact(k))
                    .collect()
            }
            Func::Log => {
                if on_cut(a) || a == C64::new(0.0, 0.0) {
                    return Err(domain("log", a));
                }
                let mut t = vec![a.ln()];
                for k in 1..=m {
                    let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                    t.push(a.powi(-(k as i32)) * (s / k as f64));
                }
                t
            }
            Func::Sqrt => return self.powc(C64::new(0.5, 0.0), "sqrt"),
        };
        Ok(self.compose(&t))
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a + b)
    }
}
impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a - b)
    }
}
impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        self.mul_jet(o)
    }
}
impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}
impl Add<C64> for &Jet {
    type Output = Jet;
    fn add(self, s: C64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }
}

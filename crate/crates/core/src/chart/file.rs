//! Plain-text chart files.
//!
//! ```text
//! # flat torus in S^5
//! [meta]
//! name = flat_torus_p2
//! p = 2
//! s = 0
//! ambient = sphere
//! pairs =
//!
//! [christoffel]
//! G_1_0 = 0            # Γ_{10}^0
//!
//! [metric]
//! g_0_0 = 1/3
//!
//! [immersion]
//! h_0 = sqrt(1/3)*cos(u0)
//!
//! [support]
//! gamma = 1
//!
//! [grid]
//! box = -0.5 0.5, -0.5 0.5, -0.5 0.5
//! resolution = 6
//! basepoint = 0 0 0
//!
//! [curves]
//! signature = 0
//! alpha1 = cos(u0), sin(u0), 0
//! alpha2 = 0, cos(u0), sin(u0)
//! window1 = -1 1
//! window2 = -1 1
//! base = 0 0
//! ```
//!
//! `pairs` lists the conjugate pairs explicitly as `a b; c d`. Indices not
//! listed are real. `s` is optional and must agree with `pairs`.

use super::{Ambient, ChartError, ConjugateChart, Grid};
use crate::exprlang::{parse_with_vars, Expr};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct CurveSection {
    /// number of negative coordinates, placed first
    pub signature: usize,
    pub alpha1: Vec<Expr>,
    pub alpha2: Vec<Expr>,
    pub window1: (f64, f64),
    pub window2: (f64, f64),
    pub base: (f64, f64),
}

#[derive(Debug, Clone, Default)]
pub struct ChartFile {
    pub chart: Option<ConjugateChart>,
    pub curves: Option<CurveSection>,
}

struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn perr(line: usize, message: impl Into<String>) -> ChartError {
    ChartError::Parse {
        line,
        message: message.into(),
    }
}

fn split_sections(text: &str) -> Result<Sections, ChartError> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.split('#').next().unwrap().trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| perr(line, "unterminated section header"))?
                .trim()
                .to_string();
            const KNOWN: [&str; 7] = ["meta", "christoffel", "metric", "immersion", "support", "grid", "curves"];
            if !KNOWN.contains(&name.as_str()) {
                return Err(perr(line, format!("unknown section [{name}]")));
            }
            if out.contains_key(&name) {
                return Err(perr(line, format!("duplicate section [{name}]")));
            }
            out.insert(name.clone(), BTreeMap::new());
            current = Some(name);
            continue;
        }
        let sec = current
            .as_ref()
            .ok_or_else(|| perr(line, "key outside of a section"))?;
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| perr(line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let map = out.get_mut(sec).unwrap();
        if map.contains_key(&key) {
            return Err(perr(line, format!("duplicate key `{key}`")));
        }
        map.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Ok(out)
}

fn numbers(e: &Entry) -> Result<Vec<f64>, ChartError> {
    e.value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| perr(e.line, format!("bad number `{t}`"))))
        .collect()
}

fn index_pair(key: &str, prefix: &str, line: usize) -> Result<(usize, usize), ChartError> {
    let rest = key
        .strip_prefix(prefix)
        .ok_or_else(|| perr(line, format!("unexpected key `{key}`")))?;
    let mut it = rest.split('_');
    let a = it.next().and_then(|t| t.parse().ok());
    let b = it.next().and_then(|t| t.parse().ok());
    match (a, b, it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(perr(line, format!("malformed key `{key}`"))),
    }
}

fn expr(e: &Entry, key: &str, nvars: usize) -> Result<Expr, ChartError> {
    parse_with_vars(&e.value, nvars).map_err(|source| ChartError::Expr {
        line: e.line,
        key: key.to_string(),
        source,
    })
}

fn parse_meta(secs: &Sections) -> Result<ConjugateChart, ChartError> {
    let meta = secs.get("meta").ok_or_else(|| perr(0, "missing [meta] section"))?;
    for (k, e) in meta {
        if !["name", "p", "s", "ambient", "pairs"].contains(&k.as_str()) {
            return Err(perr(e.line, format!("unknown key `{k}` in [meta]")));
        }
    }
    let pe = meta.get("p").ok_or_else(|| perr(0, "[meta] needs `p`"))?;
    let p: usize = pe
        .value
        .parse()
        .map_err(|_| perr(pe.line, "p must be a non-negative integer"))?;
    let ambient = match meta.get("ambient") {
        None => Ambient::Sphere,
        Some(e) => match e.value.as_str() {
            "sphere" => Ambient::Sphere,
            "hyperbolic" => Ambient::Hyperbolic,
            other => return Err(perr(e.line, format!("unknown ambient `{other}`"))),
        },
    };
    let mut conj: Vec<usize> = (0..=p).collect();
    let mut npairs = 0;
    if let Some(e) = meta.get("pairs") {
        for chunk in e.value.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let ids: Vec<usize> = chunk
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(e.line, format!("bad index `{t}`"))))
                .collect::<Result<_, _>>()?;
            if ids.len() != 2 || ids[0] == ids[1] || ids.iter().any(|&i| i > p) {
                return Err(perr(e.line, format!("bad pair `{chunk}`")));
            }
            let (a, b) = (ids[0], ids[1]);
            if conj[a] != a || conj[b] != b {
                return Err(perr(e.line, format!("index used in two pairs: `{chunk}`")));
            }
            conj[a] = b;
            conj[b] = a;
            npairs += 1;
        }
    }
    if let Some(e) = meta.get("s") {
        let s: usize = e.value.parse().map_err(|_| perr(e.line, "s must be an integer"))?;
        if s != npairs {
            return Err(perr(e.line, format!("s = {s} but {npairs} pairs listed")));
        }
    }
    let mut chart = ConjugateChart::new(p, conj, ambient)?;
    if let Some(e) = meta.get("name") {
        chart.name = e.value.clone();
    }
    Ok(chart)
}

fn parse_grid(e: &BTreeMap<String, Entry>, dim: usize) -> Result<Grid, ChartError> {
    let mut g = Grid::cube(dim, -0.5, 0.5, 8);
    for (k, entry) in e {
        match k.as_str() {
            "box" => {
                let v = numbers(entry)?;
                if v.len() == 2 {
                    g.lo = vec![v[0]; dim];
                    g.hi = vec![v[1]; dim];
                } else if v.len() == 2 * dim {
                    g.lo = v.iter().step_by(2).copied().collect();
                    g.hi = v.iter().skip(1).step_by(2).copied().collect();
                } else {
                    return Err(perr(entry.line, format!("box needs 2 or {} numbers", 2 * dim)));
                }
                if g.lo.iter().zip(&g.hi).any(|(a, b)| a > b) {
                    return Err(perr(entry.line, "box has lo > hi"));
                }
            }
            "resolution" => {
                let v = numbers(entry)?;
                let ok = v.iter().all(|x| x.fract() == 0.0 && *x >= 1.0);
                if !ok || !(v.len() == 1 || v.len() == dim) {
                    return Err(perr(entry.line, "resolution must be 1 or p+1 positive integers"));
                }
                g.n = if v.len() == 1 {
                    vec![v[0] as usize; dim]
                } else {
                    v.iter().map(|x| *x as usize).collect()
                };
            }
            "basepoint" => {
                let v = numbers(entry)?;
                if v.len() != dim {
                    return Err(perr(entry.line, format!("basepoint needs {dim} numbers")));
                }
                g.base = v;
            }
            _ => return Err(perr(entry.line, format!("unknown key `{k}` in [grid]"))),
        }
    }
    if !e.contains_key("basepoint") {
        g.base = g.lo.iter().zip(&g.hi).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    Ok(g)
}

fn parse_curves(sec: &BTreeMap<String, Entry>) -> Result<CurveSection, ChartError> {
    let get = |k: &str| sec.get(k).ok_or_else(|| perr(0, format!("[curves] needs `{k}`")));
    let comps = |k: &str| -> Result<Vec<Expr>, ChartError> {
        let e = get(k)?;
        e.value
            .split(',')
            .enumerate()
            .map(|(c, s)| {
                parse_with_vars(s.trim(), 1).map_err(|source| ChartError::Expr {
                    line: e.line,
                    key: format!("{k}[{c}]"),
                    source,
                })
            })
            .collect()
    };
    let pair = |k: &str, default: (f64, f64)| -> Result<(f64, f64), ChartError> {
        match sec.get(k) {
            None => Ok(default),
            Some(e) => {
                let v = numbers(e)?;
                if v.len() != 2 {
                    return Err(perr(e.line, format!("`{k}` needs two numbers")));
                }
                Ok((v[0], v[1]))
            }
        }
    };
    for (k, e) in sec {
        if !["signature", "alpha1", "alpha2", "window1", "window2", "base"].contains(&k.as_str()) {
            return Err(perr(e.line, format!("unknown key `{k}` in [curves]")));
        }
    }
    let signature = match sec.get("signature") {
        None => 0,
        Some(e) => e.value.parse().map_err(|_| perr(e.line, "signature must be an integer"))?,
    };
    let alpha1 = comps("alpha1")?;
    let alpha2 = comps("alpha2")?;
    if alpha1.len() != alpha2.len() {
        return Err(perr(get("alpha2")?.line, "curves live in different ambient dimensions"));
    }
    if signature > alpha1.len() {
        return Err(perr(0, "signature exceeds ambient dimension"));
    }
    let window1 = pair("window1", (-1.0, 1.0))?;
    let window2 = pair("window2", (-1.0, 1.0))?;
    let base = pair(
        "base",
        (0.5 * (window1.0 + window1.1), 0.5 * (window2.0 + window2.1)),
    )?;
    Ok(CurveSection {
        signature,
        alpha1,
        alpha2,
        window1,
        window2,
        base,
    })
}

pub fn parse_chart_file(text: &str) -> Result<ChartFile, ChartError> {
    let secs = split_sections(text)?;
    let mut out = ChartFile::default();
    if let Some(c) = secs.get("curves") {
        out.curves = Some(parse_curves(c)?);
    }
    let chart_sections = ["meta", "christoffel", "metric", "immersion", "support", "grid"];
    if !chart_sections.iter().any(|s| secs.contains_key(*s)) {
        return Ok(out);
    }
    let mut chart = parse_meta(&secs)?;
    let n = chart.dim();
    if let Some(sec) = secs.get("christoffel") {
        for (k, e) in sec {
            let (j, i) = index_pair(k, "G_", e.line)?;
            if i == j || i >= n || j >= n {
                return Err(perr(e.line, format!("no Christoffel entry `{k}` for p = {}", n - 1)));
            }
            chart.set_gamma(j, i, expr(e, k, n)?)?;
        }
    }
    if let Some(sec) = secs.get("metric") {
        for (k, e) in sec {
            let (i, j) = index_pair(k, "g_", e.line)?;
            if i > j || j >= n {
                return Err(perr(e.line, format!("metric keys need i <= j <= p, got `{k}`")));
            }
            chart.set_metric(i, j, expr(e, k, n)?)?;
        }
    }
    if let Some(sec) = secs.get("immersion") {
        let mut comps: Vec<(usize, Expr)> = Vec::new();
        for (k, e) in sec {
            let idx: usize = k
                .strip_prefix("h_")
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| perr(e.line, format!("unexpected key `{k}`")))?;
            comps.push((idx, expr(e, k, n)?));
        }
        comps.sort_by_key(|(i, _)| *i);
        if comps.iter().enumerate().any(|(k, (i, _))| k != *i) {
            return Err(perr(0, "immersion components must be h_0..h_n without gaps"));
        }
        chart.set_immersion(comps.into_iter().map(|(_, e)| e).collect());
    }
    if let Some(sec) = secs.get("support") {
        for (k, e) in sec {
            if k != "gamma" {
                return Err(perr(e.line, format!("unknown key `{k}` in [support]")));
            }
            chart.set_support(expr(e, k, n)?);
        }
    }
    if let Some(sec) = secs.get("grid") {
        chart.grid = parse_grid(sec, n)?;
    }
    out.chart = Some(chart);
    Ok(out)
}

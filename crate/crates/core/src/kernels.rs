//! Kernel registry and sampled certificates for the Calderón-Zygmund size and
//! regularity conditions and their weakened integral forms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic::{cube_distance, DyadicCube, GridSpec};
use crate::{par, Error, Result};

pub const BUILTIN_KERNELS: &[&str] = &[
    "constant",
    "separable",
    "truncated-hilbert",
    "truncated-abs",
    "tabulated",
];

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Constant { c: f64 },
    /// `u(x)·v(y)` with polynomial coefficients in increasing degree.
    Separable { u: Vec<f64>, v: Vec<f64> },
    /// `(x−y)/((x−y)² + δ²)`.
    TruncatedHilbert { delta: f64 },
    /// `1/max(|x−y|, δ)`.
    TruncatedAbs { delta: f64 },
    /// Cell values on an `n×n` grid over `[0, domain)²`, row-major.
    Tabulated {
        n: usize,
        domain: f64,
        values: Arc<Vec<f64>>,
    },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

impl KernelKind {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelKind::Constant { c } => *c,
            KernelKind::Separable { u, v } => poly(u, x) * poly(v, y),
            KernelKind::TruncatedHilbert { delta } => {
                let t = x - y;
                t / (t * t + delta * delta)
            }
            KernelKind::TruncatedAbs { delta } => 1.0 / (x - y).abs().max(*delta),
            KernelKind::Tabulated { n, domain, values } => {
                let cell = |z: f64| ((z / domain * *n as f64).floor().max(0.0) as usize).min(n - 1);
                values[cell(x) * n + cell(y)]
            }
        }
    }

    /// `κ` with `K(x, y) = κ(x − y)`, for kernels that are translation invariant.
    pub fn profile(&self, t: f64) -> Option<f64> {
        match self {
            KernelKind::Constant { c } => Some(*c),
            KernelKind::TruncatedHilbert { delta } => Some(t / (t * t + delta * delta)),
            KernelKind::TruncatedAbs { delta } => Some(1.0 / t.abs().max(*delta)),
            _ => None,
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        matches!(
            self,
            KernelKind::Constant { .. }
                | KernelKind::TruncatedHilbert { .. }
                | KernelKind::TruncatedAbs { .. }
        )
    }
}

/// A kernel together with its declared Calderón-Zygmund constants. The
/// declared values are claims; the `check_*` functions measure them.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub name: String,
    pub kind: KernelKind,
    /// Declared size constant in `|K(x,y)| ≤ C0/|x−y|`.
    pub c0: f64,
    /// Declared Hölder exponent in `(0, 1]`.
    pub s: f64,
    /// Declared regularity constant, if one is known.
    pub c1: Option<f64>,
    pub params: BTreeMap<String, f64>,
}

impl KernelSpec {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.kind.eval(x, y)
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.kind.is_translation_invariant()
    }
}

/// Parameters accepted by [`kernel_registry_get`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Value of the constant kernel (default 1).
    pub c: Option<f64>,
    /// Mollification width (default: the grid mesh `h`).
    pub delta: Option<f64>,
    /// Polynomial coefficients of the separable factors.
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
    /// Path to a tabulated kernel file.
    pub table: Option<PathBuf>,
}

/// Looks up a built-in kernel for use on `grid`.
pub fn kernel_registry_get(name: &str, params: &KernelParams, grid: &GridSpec) -> Result<KernelSpec> {
    let diam = grid.domain_len();
    let mut echo = BTreeMap::new();
    let delta = || -> Result<f64> {
        let d = params.delta.unwrap_or_else(|| grid.h());
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidKernelParam(format!("delta must be positive, got {d}")));
        }
        Ok(d)
    };
    let spec = match name {
        "constant" => {
            let c = params.c.unwrap_or(1.0);
            if !c.is_finite() {
                return Err(Error::InvalidKernelParam("c must be finite".into()));
            }
            echo.insert("c".into(), c);
            KernelSpec {
                name: name.into(),
                kind: KernelKind::Constant { c },
                c0: c.abs() * diam,
                s: 1.0,
                c1: Some(0.0),
                params: echo,
            }
        }
        "separable" => {
            let u = if params.u.is_empty() { vec![0.0, 1.0] } else { params.u.clone() };
            let v = if params.v.is_empty() { vec![1.0] } else { params.v.clone() };
            if u.iter().chain(&v).any(|x| !x.is_finite()) {
                return Err(Error::InvalidKernelParam("polynomial coefficients must be finite".into()));
            }
            let bound = |c: &[f64]| c.iter().enumerate().map(|(i, a)| a.abs() * diam.powi(i as i32)).sum::<f64>();
            for (i, a) in u.iter().enumerate() {
                echo.insert(format!("u{i}"), *a);
            }
            for (i, a) in v.iter().enumerate() {
                echo.insert(format!("v{i}"), *a);
            }
            KernelSpec {
                name: name.into(),
                c0: bound(&u) * bound(&v) * diam,
                kind: KernelKind::Separable { u, v },
                s: 1.0,
                c1: None,
                params: echo,
            }
        }
        "truncated-hilbert" => {
            let d = delta()?;
            echo.insert("delta".into(), d);
            KernelSpec {
                name: name.into(),
                kind: KernelKind::TruncatedHilbert { delta: d },
                c0: 1.0,
                s: 1.0,
                c1: Some(8.0),
                params: echo,
            }
        }
        "truncated-abs" => {
            let d = delta()?;
            echo.insert("delta".into(), d);
            KernelSpec {
                name: name.into(),
                kind: KernelKind::TruncatedAbs { delta: d },
                c0: 1.0,
                s: 1.0,
                c1: Some(8.0),
                params: echo,
            }
        }
        "tabulated" => {
            let path = params
                .table
                .as_ref()
                .ok_or_else(|| Error::InvalidKernelParam("tabulated kernel needs a `table` path".into()))?;
            let table = load_table(path)?;
            if table.n != grid.n() {
                return Err(Error::InvalidKernelParam(format!(
                    "table has N = {}, grid has N = {}",
                    table.n,
                    grid.n()
                )));
            }
            table.into_spec(diam)
        }
        other => return Err(Error::UnknownKernel(other.into())),
    };
    Ok(spec)
}

/// Parsed tabulated kernel file.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub n: usize,
    pub declared_c0: Option<f64>,
    pub declared_s: Option<f64>,
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn into_spec(self, domain: f64) -> KernelSpec {
        let mut echo = BTreeMap::new();
        echo.insert("n".into(), self.n as f64);
        KernelSpec {
            name: "tabulated".into(),
            c0: self.declared_c0.unwrap_or(f64::INFINITY),
            s: self.declared_s.unwrap_or(1.0),
            c1: None,
            kind: KernelKind::Tabulated {
                n: self.n,
                domain,
                values: Arc::new(self.values),
            },
            params: echo,
        }
    }
}

/// Reads a tabulated kernel. The first line is `N`, optionally followed by
/// `,C0` and `,s`; the remaining `N×N` values are row-major, separated by
/// commas, whitespace or newlines.
pub fn parse_table(text: &str) -> Result<KernelTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty kernel table".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    let n: usize = fields[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad table header `{header}`")))?;
    let num = |i: usize| -> Result<Option<f64>> {
        fields
            .get(i)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad table header `{header}`"))))
            .transpose()
    };
    let declared_c0 = num(1)?;
    let declared_s = num(2)?;
    let mut values = Vec::with_capacity(n * n);
    for line in lines {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad table value `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::Format("table values must be finite".into()));
            }
            values.push(v);
        }
    }
    if n == 0 || values.len() != n * n {
        return Err(Error::Format(format!(
            "expected {} table values, found {}",
            n * n,
            values.len()
        )));
    }
    Ok(KernelTable { n, declared_c0, declared_s, values })
}

pub fn load_table(path: &Path) -> Result<KernelTable> {
    parse_table(&std::fs::read_to_string(path)?)
}

/// Rule for the finest-level cell averages `K̄(p, q)`: midpoint value, or an
/// `refine×refine` composite midpoint rule on cells with `|p − q| ≤ cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrature {
    pub refine: usize,
    pub cutoff: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { refine: 1, cutoff: 0 }
    }
}

impl Quadrature {
    pub fn midpoint() -> Self {
        Self::default()
    }

    pub fn refined(refine: usize, cutoff: usize) -> Self {
        Self { refine: refine.max(1), cutoff }
    }

    /// `K̄(p, q)` on `spec`.
    pub fn cell_average(&self, k: &KernelSpec, spec: &GridSpec, p: usize, q: usize) -> f64 {
        let h = spec.h();
        if self.refine <= 1 || p.abs_diff(q) > self.cutoff {
            return k.eval(spec.midpoint(p), spec.midpoint(q));
        }
        let m = self.refine;
        let sub = h / m as f64;
        let (x0, y0) = (p as f64 * h, q as f64 * h);
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += k.eval(x0 + (a as f64 + 0.5) * sub, y0 + (b as f64 + 0.5) * sub);
            }
        }
        acc / (m * m) as f64
    }

    /// `κ̄(d)` for a translation-invariant kernel, cell offset `d = p − q`.
    pub(crate) fn profile_average(&self, k: &KernelSpec, spec: &GridSpec, d: i64) -> f64 {
        let h = spec.h();
        let prof = |t: f64| k.kind.profile(t).expect("translation-invariant kernel");
        if self.refine <= 1 || d.unsigned_abs() as usize > self.cutoff {
            return prof(d as f64 * h);
        }
        let m = self.refine;
        let sub = h / m as f64;
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += prof(d as f64 * h + (a as f64 - b as f64) * sub);
            }
        }
        acc / (m * m) as f64
    }
}

/// Same-level cube-center pairs `(x, y)`, `x ≠ y`.
pub fn center_pairs(grid: &GridSpec, level: u32) -> Vec<(f64, f64)> {
    let side = grid.side(level);
    let c = |k: usize| DyadicCube::new(level, k).center();
    (0..side)
        .flat_map(|a| (0..side).filter(move |&b| b != a).map(move |b| (c(a), c(b))))
        .collect()
}

/// Triples `(x, x', y)` built from center pairs with `x' = x ± |x−y|/2^r`,
/// `r = 1..=refinements`, kept inside the domain.
pub fn center_triples(grid: &GridSpec, level: u32, refinements: u32) -> Vec<(f64, f64, f64)> {
    let len = grid.domain_len();
    let mut out = Vec::new();
    for (x, y) in center_pairs(grid, level) {
        let dist = (x - y).abs();
        for r in 1..=refinements {
            let step = dist / (r as f64).exp2();
            for xp in [x + step, x - step] {
                if (0.0..len).contains(&xp) {
                    out.push((x, xp, y));
                }
            }
        }
    }
    out
}

/// Sampled certificate for one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub declared: Option<f64>,
    pub pass: bool,
}

/// `sup |K(x,y)|·|x−y|` over the sample pairs; passes iff `≤ C0`.
pub fn check_size(k: &KernelSpec, samples: &[(f64, f64)]) -> Result<Measured> {
    let pairs: Vec<_> = samples.iter().filter(|(x, y)| x != y).collect();
    if pairs.is_empty() {
        return Err(Error::EmptySamples("size check needs pairs with x ≠ y"));
    }
    let value = pairs
        .iter()
        .map(|(x, y)| k.eval(*x, *y).abs() * (x - y).abs())
        .fold(0.0, f64::max);
    Ok(Measured {
        value,
        declared: Some(k.c0),
        pass: value.is_finite() && value <= k.c0 * (1.0 + 1e-12),
    })
}

/// Regularity ratio at exponent `s` over triples with `|x−x'| ≤ ½|x−y|`.
/// Triples violating the precondition are skipped.
pub fn regularity_constant(k: &KernelSpec, s: f64, triples: &[(f64, f64, f64)]) -> Result<f64> {
    let mut best = 0.0f64;
    let mut used = 0usize;
    for &(x, xp, y) in triples {
        let dx = (x - xp).abs();
        let dist = (x - y).abs();
        if dx == 0.0 || dist == 0.0 || dx > 0.5 * dist {
            continue;
        }
        used += 1;
        let diff = (k.eval(x, y) - k.eval(xp, y)).abs() + (k.eval(y, x) - k.eval(y, xp)).abs();
        best = best.max(diff * dist.powf(1.0 + s) / dx.powf(s));
    }
    if used == 0 {
        return Err(Error::EmptySamples("no triple satisfies |x − x'| ≤ |x − y|/2"));
    }
    Ok(best)
}

/// [`regularity_constant`] at the declared exponent, compared against the
/// declared constant when there is one.
pub fn check_regularity(k: &KernelSpec, triples: &[(f64, f64, f64)]) -> Result<Measured> {
    let value = regularity_constant(k, k.s, triples)?;
    let pass = value.is_finite() && k.c1.is_none_or(|c| value <= c * (1.0 + 1e-12));
    Ok(Measured { value, declared: k.c1, pass })
}

/// Measured constants of the weakened (integral) kernel conditions at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakIntegralCheck {
    pub level: u32,
    /// `sup ∫_Q∫_R |K| / |Q|` over adjacent distinct cubes.
    pub adjacent: f64,
    /// `sup ∫_Q∫_R |K(x,y) − K(x,y_R)| · d(Q,R)·ln^{2+ε}(2 + d/|Q|)` over
    /// separated cubes, with the transposed kernel term added.
    pub separated: f64,
    pub epsilon: f64,
}

/// Exact cell sums of the weakened conditions over all same-level cube pairs.
pub fn check_weak_integral(
    k: &KernelSpec,
    grid: &GridSpec,
    level: u32,
    epsilon: f64,
    quad: &Quadrature,
) -> Result<WeakIntegralCheck> {
    if level > grid.j {
        return Err(Error::InvalidArgument(format!("level {level} exceeds J = {}", grid.j)));
    }
    let side = grid.side(level);
    let h = grid.h();
    let rows: Vec<(f64, f64)> = par::map_range(side, |a| {
        let q = DyadicCube::new(level, a);
        let mut adj = 0.0f64;
        let mut sep = 0.0f64;
        for b in 0..side {
            if b == a {
                continue;
            }
            let r = DyadicCube::new(level, b);
            let d = cube_distance(&q, &r).expect("same level");
            if d == 0.0 {
                let mut acc = 0.0;
                for p in q.cells(grid) {
                    for qq in r.cells(grid) {
                        acc += quad.cell_average(k, grid, p, qq).abs();
                    }
                }
                adj = adj.max(acc * h * h / q.len());
            } else {
                let yr = r.center();
                let mut acc = 0.0;
                for p in q.cells(grid) {
                    let x = grid.midpoint(p);
                    let (k_xr, k_rx) = (k.eval(x, yr), k.eval(yr, x));
                    for qq in r.cells(grid) {
                        acc += (quad.cell_average(k, grid, p, qq) - k_xr).abs();
                        acc += (quad.cell_average(k, grid, qq, p) - k_rx).abs();
                    }
                }
                let weight = d * (2.0 + d / q.len()).ln().powf(2.0 + epsilon);
                sep = sep.max(acc * h * h * weight);
            }
        }
        (adj, sep)
    });
    let (adjacent, separated) = rows
        .iter()
        .fold((0.0f64, 0.0f64), |(a, s), (x, y)| (a.max(*x), s.max(*y)));
    Ok(WeakIntegralCheck { level, adjacent, separated, epsilon })
}

/// Whether `K` is finite at every cell corner and midpoint of the closed
/// domain square.
pub fn check_local_boundedness(k: &KernelSpec, grid: &GridSpec) -> bool {
    let n = grid.n();
    let h = grid.h();
    let pts: Vec<f64> = (0..=2 * n).map(|i| i as f64 * h * 0.5).collect();
    par::map_range(pts.len(), |a| pts.iter().all(|&y| k.eval(pts[a], y).is_finite()))
        .into_iter()
        .all(|ok| ok)
}

/// Summary of all kernel certificates at one sample level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckReport {
    pub kernel: String,
    pub sample_level: u32,
    pub locally_bounded: bool,
    pub size: Measured,
    pub regularity: Measured,
    pub weak_integral: WeakIntegralCheck,
}

impl KernelCheckReport {
    pub fn pass(&self) -> bool {
        self.locally_bounded && self.size.pass && self.regularity.pass
    }
}

pub fn check_kernel(
    k: &KernelSpec,
    grid: &GridSpec,
    sample_level: u32,
    epsilon: f64,
    quad: &Quadrature,
) -> Result<KernelCheckReport> {
    let level = sample_level.min(grid.j);
    Ok(KernelCheckReport {
        kernel: k.name.clone(),
        sample_level: level,
        locally_bounded: check_local_boundedness(k, grid),
        size: check_size(k, &center_pairs(grid, level))?,
        regularity: check_regularity(k, &center_triples(grid, level, 3))?,
        weak_integral: check_weak_integral(k, grid, level, epsilon, quad)?,
    })
}

//! Operator application: the dense oracle, the levelwise non-standard-form
//! apply, power-iteration norm estimates and apply timings.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{self, GridFunction, GridSpec};
use crate::kernels::{KernelSpec, Quadrature};
use crate::nsform::{self, build_nsform_pyramid, BuildOptions, DiagonalForm, LevelMatrix, NonStandardForm, SplitForm};
use crate::{par, Error, Result};

/// A linear operator on grid functions of one grid, with its adjoint for the
/// bracket `⟨g, f⟩ = h·Σ g_p f_p`.
pub trait LinearOp: Sync {
    fn grid(&self) -> GridSpec;
    fn apply(&self, f: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64>;
}

/// `(p, q) ↦ h·K̄(p, q)`. Translation-invariant kernels are held as one
/// Toeplitz row; application is an `O(N²)` matrix–vector product either way.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    spec: GridSpec,
    storage: DenseStorage,
}

#[derive(Debug, Clone, PartialEq)]
enum DenseStorage {
    Full(Vec<f64>),
    /// `t[d + N − 1]` for `d = p − q`, plus its reversal.
    Toeplitz { t: Vec<f64>, rev: Vec<f64> },
}

impl DenseOperator {
    pub fn from_matrix(spec: GridSpec, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != spec.n() * spec.n() {
            return Err(Error::GridMismatch("matrix must be N×N".into()));
        }
        Ok(Self { spec, storage: DenseStorage::Full(matrix) })
    }

    pub fn from_kernel(k: &KernelSpec, spec: &GridSpec, quad: &Quadrature, dense_limit: usize) -> Result<Self> {
        if k.is_translation_invariant() {
            let n = spec.n();
            let h = spec.h();
            let mut t = vec![0.0; 2 * n - 1];
            par::fill_indexed(&mut t, |i| h * quad.profile_average(k, spec, i as i64 - (n as i64 - 1)));
            let rev = t.iter().rev().copied().collect();
            return Ok(Self { spec: *spec, storage: DenseStorage::Toeplitz { t, rev } });
        }
        let m = nsform::build::finest_matrix(k, spec, quad, dense_limit)?;
        Ok(Self { spec: *spec, storage: DenseStorage::Full(m) })
    }

    /// Matrix of any operator, column by column.
    pub fn assemble(op: &dyn LinearOp) -> Self {
        let spec = op.grid();
        let n = spec.n();
        let cols: Vec<Vec<f64>> = par::map_range(n, |q| {
            let mut e = vec![0.0; n];
            e[q] = 1.0;
            op.apply(&e)
        });
        let mut m = vec![0.0; n * n];
        for (q, col) in cols.iter().enumerate() {
            for (p, v) in col.iter().enumerate() {
                m[p * n + q] = *v;
            }
        }
        Self { spec, storage: DenseStorage::Full(m) }
    }

    pub fn entry(&self, p: usize, q: usize) -> f64 {
        let n = self.spec.n();
        match &self.storage {
            DenseStorage::Full(m) => m[p * n + q],
            DenseStorage::Toeplitz { t, .. } => t[p + n - 1 - q],
        }
    }

    pub fn to_matrix(&self) -> Vec<f64> {
        let n = self.spec.n();
        (0..n * n).map(|i| self.entry(i / n, i % n)).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.spec.n();
        let storage = match &self.storage {
            DenseStorage::Full(m) => DenseStorage::Full((0..n * n).map(|i| m[(i % n) * n + i / n]).collect()),
            DenseStorage::Toeplitz { t, rev } => DenseStorage::Toeplitz { t: rev.clone(), rev: t.clone() },
        };
        Self { spec: self.spec, storage }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearOp for DenseOperator {
    fn grid(&self) -> GridSpec {
        self.spec
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.spec.n();
        let mut y = vec![0.0; n];
        match &self.storage {
            DenseStorage::Full(m) => par::fill_indexed(&mut y, |p| dot(&m[p * n..(p + 1) * n], f)),
            // t[p − q + N − 1] = rev[N − 1 − p + q]
            DenseStorage::Toeplitz { rev, .. } => par::fill_indexed(&mut y, |p| dot(&rev[n - 1 - p..2 * n - 1 - p], f)),
        }
        y
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let n = self.spec.n();
        let mut y = vec![0.0; n];
        match &self.storage {
            DenseStorage::Full(m) => par::fill_indexed(&mut y, |q| (0..n).map(|p| m[p * n + q] * g[p]).sum()),
            DenseStorage::Toeplitz { t, .. } => par::fill_indexed(&mut y, |q| dot(&t[n - 1 - q..2 * n - 1 - q], g)),
        }
        y
    }
}

pub fn apply_dense(t: &DenseOperator, f: &GridFunction) -> Result<GridFunction> {
    t.spec.check_same(&f.spec)?;
    Ok(GridFunction { spec: f.spec, values: t.apply(&f.values) })
}

/// Per-level coefficient arrays acting in the Haar pyramid:
/// ψ-output `+= U·d_j + V·s_j`, φ-output `+= W·d_j`, plus the diagonal
/// families and the coarse block on `s_0`.
#[derive(Debug, Clone, Copy)]
pub struct LevelwiseOp<'a> {
    pub spec: GridSpec,
    pub u: Option<&'a [LevelMatrix]>,
    pub v: Option<&'a [LevelMatrix]>,
    pub w: Option<&'a [LevelMatrix]>,
    pub diag: Option<&'a DiagonalForm>,
    pub coarse: Option<&'a LevelMatrix>,
}

impl<'a> LevelwiseOp<'a> {
    pub fn empty(spec: GridSpec) -> Self {
        Self { spec, u: None, v: None, w: None, diag: None, coarse: None }
    }

    fn run(&self, f: &[f64], adjoint: bool) -> Vec<f64> {
        let spec = self.spec;
        let (scaling, detail) = dyadic::pyramid(&spec, f);
        let levels = spec.j as usize;
        let outs: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(levels, |j| {
            let side = spec.side(j as u32);
            let (d, s) = (&detail[j], &scaling[j]);
            let mut psi = vec![0.0; side];
            let mut phi = vec![0.0; side];
            if !adjoint {
                if let Some(u) = self.u {
                    u[j].matvec_add(d, &mut psi);
                }
                if let Some(v) = self.v {
                    v[j].matvec_add(s, &mut psi);
                }
                if let Some(w) = self.w {
                    w[j].matvec_add(d, &mut phi);
                }
            } else {
                if let Some(u) = self.u {
                    u[j].matvec_t_add(d, &mut psi);
                }
                if let Some(v) = self.v {
                    v[j].matvec_t_add(d, &mut phi);
                }
                if let Some(w) = self.w {
                    w[j].matvec_t_add(s, &mut psi);
                }
            }
            if let Some(dg) = self.diag {
                let (to_psi, to_phi) = if adjoint { (&dg.c[j], &dg.b[j]) } else { (&dg.b[j], &dg.c[j]) };
                for k in 0..side {
                    psi[k] += dg.a[j][k] * d[k] + to_psi[k] * s[k];
                    phi[k] += to_phi[k] * d[k];
                }
            }
            (psi, phi)
        });
        let (psi, mut phi): (Vec<_>, Vec<_>) = outs.into_iter().unzip();
        if let Some(c) = self.coarse {
            if phi.is_empty() {
                phi.push(vec![0.0; spec.m]);
            }
            if adjoint {
                c.matvec_t_add(&scaling[0], &mut phi[0]);
            } else {
                c.matvec_add(&scaling[0], &mut phi[0]);
            }
        }
        dyadic::synthesize_folded(&spec, &psi, &phi)
    }
}

impl LinearOp for LevelwiseOp<'_> {
    fn grid(&self) -> GridSpec {
        self.spec
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.run(f, false)
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        self.run(g, true)
    }
}

impl LinearOp for DiagonalForm {
    fn grid(&self) -> GridSpec {
        self.spec
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        LevelwiseOp { diag: Some(self), ..LevelwiseOp::empty(self.spec) }.apply(f)
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        LevelwiseOp { diag: Some(self), ..LevelwiseOp::empty(self.spec) }.apply_adjoint(g)
    }
}

/// Perfect dyadic part applied to `f`; `O(N)`.
pub fn apply_dyadic(form: &DiagonalForm, f: &GridFunction) -> Result<GridFunction> {
    form.spec.check_same(&f.spec)?;
    Ok(GridFunction { spec: f.spec, values: form.apply(&f.values) })
}

/// Which parts of a form an [`ApplyPlan`] applies. For a full form `u, v, w`
/// select `A, B, C`; for a split form they select `α, β, γ` and `dyadic`
/// selects the diagonal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub u: bool,
    pub v: bool,
    pub w: bool,
    pub dyadic: bool,
    pub coarse: bool,
}

impl ComponentSet {
    pub const ALL: Self = Self { u: true, v: true, w: true, dyadic: true, coarse: true };
    pub const NONE: Self = Self { u: false, v: false, w: false, dyadic: false, coarse: false };
    pub const SMOOTH: Self = Self { u: true, v: true, w: true, dyadic: false, coarse: false };
    pub const DYADIC: Self = Self { dyadic: true, ..Self::NONE };
    pub const COARSE: Self = Self { coarse: true, ..Self::NONE };

    /// Parses `+`-joined names: `full`, `smooth`, `dyadic`, `coarse`, `u`,
    /// `v`, `w`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut set = Self::NONE;
        for part in s.split('+').map(str::trim) {
            match part {
                "full" | "all" => set = Self::ALL,
                "smooth" => {
                    set.u = true;
                    set.v = true;
                    set.w = true;
                }
                "dyadic" => set.dyadic = true,
                "coarse" => set.coarse = true,
                "u" => set.u = true,
                "v" => set.v = true,
                "w" => set.w = true,
                other => return Err(Error::InvalidArgument(format!("unknown component `{other}`"))),
            }
        }
        Ok(set)
    }

    pub fn label(&self) -> String {
        if *self == Self::ALL {
            return "full".into();
        }
        let mut parts = Vec::new();
        if self.u && self.v && self.w {
            parts.push("smooth");
        } else {
            for (on, name) in [(self.u, "u"), (self.v, "v"), (self.w, "w")] {
                if on {
                    parts.push(name);
                }
            }
        }
        if self.dyadic {
            parts.push("dyadic");
        }
        if self.coarse {
            parts.push("coarse");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanForm {
    Full(NonStandardForm),
    Split(SplitForm),
}

/// A form, a component selection and an optional band cap, ready to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplyPlan {
    form: PlanForm,
    components: ComponentSet,
    band: Option<u32>,
}

impl ApplyPlan {
    /// Truncation (when `band` is set) happens once here; split forms keep
    /// their cancellation under truncation.
    pub fn new(form: PlanForm, components: ComponentSet, band: Option<u32>) -> Result<Self> {
        let form = match (form, band) {
            (PlanForm::Full(f), _) if components.dyadic => {
                let _ = f;
                return Err(Error::InvalidArgument("a full form has no separate dyadic component".into()));
            }
            (f, None) => f,
            (PlanForm::Full(f), Some(r)) => PlanForm::Full(f.band_truncate(r)?),
            (PlanForm::Split(f), Some(r)) => PlanForm::Split(SplitForm {
                smooth: f.smooth.band_truncate(r)?,
                ..f
            }),
        };
        Ok(Self { form, components, band })
    }

    pub fn full(nsf: NonStandardForm) -> Self {
        Self { form: PlanForm::Full(nsf), components: ComponentSet::ALL, band: None }
    }

    pub fn split(sf: SplitForm, components: ComponentSet) -> Self {
        Self { form: PlanForm::Split(sf), components, band: None }
    }

    pub fn components(&self) -> ComponentSet {
        self.components
    }

    pub fn band(&self) -> Option<u32> {
        self.band
    }

    pub fn form(&self) -> &PlanForm {
        &self.form
    }

    pub fn with_components(&self, components: ComponentSet) -> Result<Self> {
        if components.dyadic && matches!(self.form, PlanForm::Full(_)) {
            return Err(Error::InvalidArgument("a full form has no separate dyadic component".into()));
        }
        Ok(Self { components, ..self.clone() })
    }

    pub fn levelwise(&self) -> LevelwiseOp<'_> {
        let c = self.components;
        match &self.form {
            PlanForm::Full(f) => LevelwiseOp {
                spec: f.spec,
                u: c.u.then_some(&f.a[..]),
                v: c.v.then_some(&f.b[..]),
                w: c.w.then_some(&f.c[..]),
                diag: None,
                coarse: c.coarse.then_some(&f.coarse),
            },
            PlanForm::Split(f) => LevelwiseOp {
                spec: f.smooth.spec,
                u: c.u.then_some(&f.smooth.alpha[..]),
                v: c.v.then_some(&f.smooth.beta[..]),
                w: c.w.then_some(&f.smooth.gamma[..]),
                diag: c.dyadic.then_some(&f.dyadic),
                coarse: c.coarse.then_some(&f.coarse),
            },
        }
    }
}

impl LinearOp for ApplyPlan {
    fn grid(&self) -> GridSpec {
        self.levelwise().spec
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.levelwise().apply(f)
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        self.levelwise().apply_adjoint(g)
    }
}

pub fn apply_nsform(plan: &ApplyPlan, f: &GridFunction) -> Result<GridFunction> {
    plan.grid().check_same(&f.spec)?;
    Ok(GridFunction { spec: f.spec, values: plan.apply(&f.values) })
}

/// Swaps a [`LinearOp`] with its adjoint.
pub struct Adjoint<'a>(pub &'a dyn LinearOp);

impl LinearOp for Adjoint<'_> {
    fn grid(&self) -> GridSpec {
        self.0.grid()
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.0.apply_adjoint(f)
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        self.0.apply(g)
    }
}

/// Difference `a − b` of two operators on the same grid.
pub struct Difference<'a>(pub &'a dyn LinearOp, pub &'a dyn LinearOp);

impl LinearOp for Difference<'_> {
    fn grid(&self) -> GridSpec {
        self.0.grid()
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut y = self.0.apply(f);
        y.iter_mut().zip(self.1.apply(f)).for_each(|(a, b)| *a -= b);
        y
    }

    fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut y = self.0.apply_adjoint(g);
        y.iter_mut().zip(self.1.apply_adjoint(g)).for_each(|(a, b)| *a -= b);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

/// Documented default seed for norm estimates.
pub const DEFAULT_SEED: u64 = 0x5EED_2007;

impl Default for PowerOptions {
    fn default() -> Self {
        Self { max_iters: 200, rel_tol: 1e-9, seed: DEFAULT_SEED }
    }
}

/// Random vector with entries uniform in `[-1, 1)`.
pub fn random_values(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `L²→L²` norm by power iteration on `T*T`. Deterministic in the seed.
pub fn estimate_opnorm(op: &dyn LinearOp, opts: &PowerOptions) -> Result<f64> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("power iteration needs at least one step".into()));
    }
    let spec = op.grid();
    let norm = |v: &[f64]| dyadic::l2_norm(&spec, v);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = random_values(spec.n(), &mut rng);
    let mut lambda = 0.0f64;
    let mut reseeded = false;
    let mut it = 0;
    while it < opts.max_iters {
        let nx = norm(&x);
        if nx == 0.0 {
            if reseeded {
                return Ok(0.0);
            }
            reseeded = true;
            x = random_values(spec.n(), &mut rng);
            continue;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = op.apply(&x);
        let next = norm(&y).powi(2);
        let z = op.apply_adjoint(&y);
        let done = it > 0 && (next - lambda).abs() <= opts.rel_tol * next.abs();
        lambda = lambda.max(next);
        if done {
            break;
        }
        if norm(&z) == 0.0 {
            // T x = 0 for this start; try once more from a fresh vector
            if reseeded || next == 0.0 && lambda == 0.0 && reseeded {
                break;
            }
            reseeded = true;
            x = random_values(spec.n(), &mut rng);
            it += 1;
            continue;
        }
        x = z;
        it += 1;
    }
    Ok(lambda.sqrt())
}

/// One timing row of [`bench_apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    /// Kept offset bound `2^Rmax` (0 for the dense apply).
    pub band: usize,
    pub components: String,
    pub seconds: f64,
    /// Time ratio to the previous size in the same series.
    pub doubling_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub min_time: Duration,
    pub trials: usize,
    pub seed: u64,
    pub include_dense: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            min_time: Duration::from_millis(30),
            trials: 3,
            seed: DEFAULT_SEED,
            include_dense: true,
        }
    }
}

/// Seconds per apply: best of `trials` batches of at least `min_time`.
pub fn time_apply(op: &dyn LinearOp, f: &[f64], opts: &BenchOptions) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..opts.trials.max(1) {
        let start = Instant::now();
        let mut reps = 0u32;
        while reps == 0 || start.elapsed() < opts.min_time {
            std::hint::black_box(op.apply(std::hint::black_box(f)));
            reps += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / reps as f64);
    }
    best
}

/// Times the dense apply and banded full-form applies for `N = M·2^J`,
/// `J ∈ levels` (increasing), `Rmax ∈ bands`.
pub fn bench_apply(
    k: &KernelSpec,
    m: usize,
    levels: &[u32],
    bands: &[u32],
    quad: &Quadrature,
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sizes must be increasing".into()));
    }
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut series: Vec<(usize, String, Option<f64>)> = Vec::new();
    let mut push = |rows: &mut Vec<BenchRow>, n: usize, band: usize, comp: &str, secs: f64| {
        let key = series.iter_mut().find(|(b, c, _)| *b == band && c == comp);
        let ratio = match key {
            Some((_, _, prev)) => {
                let r = prev.map(|p| secs / p);
                *prev = Some(secs);
                r
            }
            None => {
                series.push((band, comp.to_string(), Some(secs)));
                None
            }
        };
        rows.push(BenchRow { n, band, components: comp.into(), seconds: secs, doubling_ratio: ratio });
    };
    for &j in levels {
        let spec = GridSpec::new(m, j)?;
        let f = random_values(spec.n(), &mut rng);
        if opts.include_dense {
            let dense = DenseOperator::from_kernel(k, &spec, quad, usize::MAX)?;
            let secs = time_apply(&dense, &f, opts);
            push(&mut rows, spec.n(), 0, "dense", secs);
        }
        for &r in bands {
            let build = BuildOptions { quadrature: *quad, band: Some(r), dense_limit: usize::MAX };
            let nsf = build_nsform_pyramid(k, &spec, &build)?;
            let plan = ApplyPlan::full(nsf);
            let secs = time_apply(&plan, &f, opts);
            push(&mut rows, spec.n(), nsform::band_half_width(r) + 1, "nsf-full", secs);
        }
    }
    Ok(rows)
}

/// Geometric mean of the doubling ratios of one series.
pub fn mean_doubling_ratio(rows: &[BenchRow], components: &str, band: usize) -> Option<f64> {
    let s: Vec<&BenchRow> = rows.iter().filter(|r| r.components == components && r.band == band).collect();
    let (first, last) = (s.first()?, s.last()?);
    if s.len() < 2 {
        return None;
    }
    let doublings = (last.n as f64 / first.n as f64).log2();
    Some((last.seconds / first.seconds).powf(1.0 / doublings))
}

pub fn write_bench_csv<W: std::io::Write>(mut w: W, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "N,band,component-set,seconds-per-apply,doubling-ratio")?;
    for r in rows {
        let ratio = r.doubling_ratio.map(|x| format!("{x:.4}")).unwrap_or_default();
        writeln!(w, "{},{},{},{:.6e},{}", r.n, r.band, r.components, r.seconds, ratio)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_registry_get, KernelParams};
    use crate::nsform::split;

    struct Scale(GridSpec, f64);

    impl LinearOp for Scale {
        fn grid(&self) -> GridSpec {
            self.0
        }
        fn apply(&self, f: &[f64]) -> Vec<f64> {
            f.iter().map(|v| v * self.1).collect()
        }
        fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
            self.apply(g)
        }
    }

    #[test]
    fn opnorm_of_scalings() {
        let g = GridSpec::new(2, 5).unwrap();
        for s in [1.0, 3.0, -0.5] {
            let est = estimate_opnorm(&Scale(g, s), &PowerOptions::default()).unwrap();
            assert!((est - s.abs()).abs() < 1e-6);
        }
        assert_eq!(estimate_opnorm(&Scale(g, 0.0), &PowerOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_kernel_dense_apply() {
        let g = GridSpec::new(3, 4).unwrap();
        let k = kernel_registry_get("constant", &KernelParams::default(), &g).unwrap();
        let t = DenseOperator::from_kernel(&k, &g, &Quadrature::default(), 4096).unwrap();
        let out = apply_dense(&t, &GridFunction::from_fn(g, |_| 1.0)).unwrap();
        assert!(out.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let zero = apply_dense(&t, &GridFunction::zeros(g)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(apply_dense(&t, &GridFunction::zeros(GridSpec::new(2, 4).unwrap())).is_err());
    }

    #[test]
    fn toeplitz_storage_matches_full_storage() {
        let g = GridSpec::new(2, 4).unwrap();
        let k = kernel_registry_get("truncated-hilbert", &KernelParams::default(), &g).unwrap();
        let t = DenseOperator::from_kernel(&k, &g, &Quadrature::default(), 4096).unwrap();
        let full = DenseOperator::from_matrix(g, t.to_matrix()).unwrap();
        let f = random_values(g.n(), &mut ChaCha8Rng::seed_from_u64(1));
        let (a, b) = (t.apply(&f), full.apply(&f));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));
        let (a, b) = (t.apply_adjoint(&f), full.apply_adjoint(&f));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));
        assert_eq!(t.transpose().entry(3, 5), t.entry(5, 3));
    }

    #[test]
    fn constant_kernel_kills_cellwise_mean_zero_input() {
        let g = GridSpec::new(2, 4).unwrap();
        let k = kernel_registry_get("constant", &KernelParams::default(), &g).unwrap();
        let nsf = build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap();
        let plan = ApplyPlan::full(nsf);
        let f = GridFunction::psi(g, 2, 5);
        let out = apply_nsform(&plan, &f).unwrap();
        assert!(out.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn components_parse_and_label() {
        assert_eq!(ComponentSet::parse("full").unwrap(), ComponentSet::ALL);
        let s = ComponentSet::parse("smooth+coarse").unwrap();
        assert!(s.u && s.v && s.w && s.coarse && !s.dyadic);
        assert_eq!(s.label(), "smooth+coarse");
        assert!(ComponentSet::parse("bogus").is_err());
        let g = GridSpec::new(1, 2).unwrap();
        let k = kernel_registry_get("constant", &KernelParams::default(), &g).unwrap();
        let nsf = build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap();
        assert!(ApplyPlan::new(PlanForm::Full(nsf.clone()), ComponentSet::DYADIC, None).is_err());
        let plan = ApplyPlan::new(PlanForm::Split(split(&nsf)), ComponentSet::ALL, Some(1)).unwrap();
        assert_eq!(plan.band(), Some(1));
    }

    #[test]
    fn bench_rows_are_ordered_with_ratios() {
        let k = kernel_registry_get("truncated-hilbert", &KernelParams::default(), &GridSpec::new(2, 6).unwrap()).unwrap();
        let opts = BenchOptions { min_time: Duration::from_millis(1), trials: 1, ..Default::default() };
        let rows = bench_apply(&k, 2, &[5, 6], &[1, 2], &Quadrature::default(), &opts).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].components, "dense");
        assert_eq!(rows[1].band, 2);
        assert_eq!(rows[2].band, 4);
        assert!(rows[..3].iter().all(|r| r.doubling_ratio.is_none()));
        assert!(rows[3..].iter().all(|r| r.doubling_ratio.is_some()));
        let mut csv = Vec::new();
        write_bench_csv(&mut csv, &rows).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("N,band,component-set"));
        assert!(bench_apply(&k, 2, &[6, 5], &[1], &Quadrature::default(), &opts).is_err());
    }
}

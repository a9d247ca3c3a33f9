//! Measurements on the cancellative families: coefficient shells, their
//! Schur constants and norms, decay fits, atom decompositions and the
//! one-cell translation counterexample.

use serde::{Deserialize, Serialize};

use crate::dyadic::{self, DyadicCube, GridFunction, GridSpec};
use crate::fastapply::{estimate_opnorm, LevelwiseOp, LinearOp, PowerOptions};
use crate::nsform::{LevelMatrix, ModifiedForm, NonStandardForm};
use crate::{par, Error, Result};

/// Shell index of an offset: `2^{R−1} ≤ d < 2^R`; 0 for the diagonal.
pub fn shell_of(d: usize) -> u32 {
    usize::BITS - d.leading_zeros()
}

/// Number of shells needed to cover every offset of the form.
pub fn shell_count(spec: &GridSpec) -> u32 {
    let max_side = spec.side(spec.j.saturating_sub(1));
    shell_of(max_side.saturating_sub(1)).max(1)
}

/// The `R`-th shell of the cancellative families. `γ` is always present;
/// `α` and `β` only when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellCoeffs {
    pub r: u32,
    pub gamma: Vec<LevelMatrix>,
    pub alpha: Option<Vec<LevelMatrix>>,
    pub beta: Option<Vec<LevelMatrix>>,
}

impl ShellCoeffs {
    pub fn is_zero(&self) -> bool {
        let all = |v: &[LevelMatrix]| v.iter().all(|m| m.max_abs() == 0.0);
        all(&self.gamma)
            && self.alpha.as_deref().is_none_or(all)
            && self.beta.as_deref().is_none_or(all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShellFamilies {
    pub alpha: bool,
    pub beta: bool,
}

#[derive(Clone, Copy)]
enum Compensate {
    None,
    Rows,
    Cols,
}

fn shell_matrix(m: &LevelMatrix, r: u32, comp: Compensate) -> LevelMatrix {
    let side = m.side();
    let hw = ((1usize << r) - 1).min(m.half_width());
    let in_shell = |k: usize, l: usize| k != l && shell_of(k.abs_diff(l)) == r;
    let sums: Vec<f64> = match comp {
        Compensate::None => Vec::new(),
        Compensate::Rows => (0..side)
            .map(|k| m.row_entries(k).filter(|&(l, _)| in_shell(k, l)).map(|(_, v)| v).sum())
            .collect(),
        Compensate::Cols => (0..side)
            .map(|l| m.col_entries(l).filter(|&(k, _)| in_shell(k, l)).map(|(_, v)| v).sum())
            .collect(),
    };
    LevelMatrix::from_fn_banded(side, hw, |k, l| {
        if k == l {
            match comp {
                Compensate::None => 0.0,
                Compensate::Rows | Compensate::Cols => -sums[k],
            }
        } else if in_shell(k, l) {
            m.get(k, l)
        } else {
            0.0
        }
    })
}

/// Partitions the off-diagonal entries of `γ` (and optionally `α`, `β`) by
/// `2^{R−1} ≤ |k − ℓ| < 2^R`. Each `γ` shell carries its own diagonal so its
/// column sums vanish; `β` shells likewise for rows.
pub fn shell_decompose(mf: &ModifiedForm, families: ShellFamilies) -> Vec<ShellCoeffs> {
    let count = shell_count(&mf.spec);
    par::map_range(count as usize, |i| {
        let r = i as u32 + 1;
        let of = |v: &[LevelMatrix], c| v.iter().map(|m| shell_matrix(m, r, c)).collect::<Vec<_>>();
        ShellCoeffs {
            r,
            gamma: of(&mf.gamma, Compensate::Cols),
            alpha: families.alpha.then(|| of(&mf.alpha, Compensate::None)),
            beta: families.beta.then(|| of(&mf.beta, Compensate::Rows)),
        }
    })
}

/// Per-shell constants. `r = 0` is reserved for the `α` Schur constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub r: u32,
    pub gamma: f64,
    pub norm_estimate: Option<f64>,
    /// `norm_estimate / (√R·Γ(R))`.
    pub ratio: Option<f64>,
    pub schur_a: Option<f64>,
}

/// `Γ(R) = sup_{j,k} Σ_ℓ |γ^{j,R}_{k,ℓ}| + |γ^{j,R}_{ℓ,k}|`.
pub fn compute_gamma_r(shells: &[ShellCoeffs]) -> Vec<BlockStats> {
    shells
        .iter()
        .map(|s| BlockStats {
            r: s.r,
            gamma: s.gamma.iter().map(LevelMatrix::schur_sup).fold(0.0, f64::max),
            norm_estimate: None,
            ratio: None,
            schur_a: None,
        })
        .collect()
}

/// `A = sup_{j,k} Σ_ℓ |α^j_{k,ℓ}| + |α^j_{ℓ,k}|`.
pub fn compute_schur_a(mf: &ModifiedForm) -> f64 {
    mf.alpha.iter().map(LevelMatrix::schur_sup).fold(0.0, f64::max)
}

/// The operator `f ↦ Σ_j Σ_k φ_{j,k} Σ_ℓ γ^{j,R}_{k,ℓ} ⟨ψ_{j,ℓ}, f⟩`.
pub fn shell_operator<'a>(shell: &'a ShellCoeffs, spec: GridSpec) -> LevelwiseOp<'a> {
    LevelwiseOp { w: Some(&shell.gamma), ..LevelwiseOp::empty(spec) }
}

/// Fills `norm_estimate` and `ratio` for every shell by power iteration.
pub fn wr_norm_scan(shells: &[ShellCoeffs], spec: GridSpec, opts: &PowerOptions) -> Result<Vec<BlockStats>> {
    let mut stats = compute_gamma_r(shells);
    for (s, st) in shells.iter().zip(stats.iter_mut()) {
        let norm = if s.is_zero() { 0.0 } else { estimate_opnorm(&shell_operator(s, spec), opts)? };
        st.norm_estimate = Some(norm);
        st.ratio = (st.gamma > 0.0).then(|| norm / ((s.r as f64).sqrt() * st.gamma));
    }
    Ok(stats)
}

/// Spectral norm of one level matrix by power iteration on `MᵀM`.
pub fn level_matrix_norm(m: &LevelMatrix, opts: &PowerOptions) -> f64 {
    use rand::SeedableRng;
    let side = m.side();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = crate::fastapply::random_values(side, &mut rng);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut lambda = 0.0f64;
    for it in 0..opts.max_iters {
        let nx = norm(&x);
        if nx == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut y = vec![0.0; side];
        m.matvec_add(&x, &mut y);
        let next = norm(&y).powi(2);
        let done = it > 0 && (next - lambda).abs() <= opts.rel_tol * next;
        lambda = lambda.max(next);
        if done {
            break;
        }
        let mut z = vec![0.0; side];
        m.matvec_t_add(&y, &mut z);
        x = z;
    }
    lambda.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    A,
    B,
    C,
    /// `max(|a|, |b|, |c|)` entrywise.
    Combined,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "combined" | "abc" => Ok(Self::Combined),
            _ => Err(Error::InvalidArgument(format!("unknown coefficient family `{s}`"))),
        }
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// `(C, s)` of the model `C(1 + d)^{−1−s}` fitted to an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub family: Option<Family>,
    /// `envelope[d]` = largest `|coefficient|` at offset `d`.
    pub envelope: Vec<f64>,
    pub range: (usize, usize),
    pub c_hat: Option<f64>,
    pub s_hat: Option<f64>,
    /// Lower and upper half-range slopes of `ln e` against `ln(1 + d)`.
    pub half_slopes: Option<(f64, f64)>,
    pub power_law: bool,
    /// No positive envelope values in range.
    pub degenerate: bool,
}

/// Half-range slopes differing by more than this flag a non-power-law decay.
pub const POWER_LAW_SLOPE_TOL: f64 = 0.5;

fn log_points(envelope: &[f64], lo: usize, hi: usize) -> Vec<(f64, f64)> {
    (lo..=hi)
        .filter(|&d| envelope[d] > 0.0)
        .map(|d| ((1.0 + d as f64).ln(), envelope[d].ln()))
        .collect()
}

/// Fits an envelope over offsets `range.0..=range.1`.
pub fn fit_envelope(envelope: Vec<f64>, range: (usize, usize)) -> Result<DecayFit> {
    let (lo, hi) = range;
    if lo > hi || hi >= envelope.len() {
        return Err(Error::InvalidArgument(format!(
            "fit range {lo}..={hi} outside available offsets 0..{}",
            envelope.len()
        )));
    }
    let pts = log_points(&envelope, lo, hi);
    let fit = fit_line(&pts);
    let mid = ((lo.max(1) as f64) * (hi as f64)).sqrt().round() as usize;
    let half_slopes = match (fit_line(&log_points(&envelope, lo, mid)), fit_line(&log_points(&envelope, mid, hi))) {
        (Some((a, _)), Some((b, _))) => Some((a, b)),
        _ => None,
    };
    Ok(DecayFit {
        family: None,
        range,
        c_hat: fit.map(|(_, b)| b.exp()),
        s_hat: fit.map(|(m, _)| -m - 1.0),
        power_law: half_slopes.is_some_and(|(a, b)| (a - b).abs() <= POWER_LAW_SLOPE_TOL),
        half_slopes,
        degenerate: fit.is_none(),
        envelope,
    })
}

/// Largest `|coefficient|` at each offset, over every level and row.
pub fn envelope(nsf: &NonStandardForm, family: Family) -> Vec<f64> {
    let len = nsf.a.last().map_or(0, LevelMatrix::side);
    let mut env = vec![0.0f64; len];
    let sets: Vec<&[LevelMatrix]> = match family {
        Family::A => vec![&nsf.a],
        Family::B => vec![&nsf.b],
        Family::C => vec![&nsf.c],
        Family::Combined => vec![&nsf.a, &nsf.b, &nsf.c],
    };
    for set in sets {
        for m in set {
            for k in 0..m.side() {
                for (l, v) in m.row_entries(k) {
                    let d = k.abs_diff(l);
                    env[d] = env[d].max(v.abs());
                }
            }
        }
    }
    env
}

pub fn decay_fit(nsf: &NonStandardForm, family: Family, range: (usize, usize)) -> Result<DecayFit> {
    let mut fit = fit_envelope(envelope(nsf, family), range)?;
    fit.family = Some(family);
    Ok(fit)
}

/// Weaker decay model `e(d) ≤ C(1 + d)^{−1} ln^{−2−ε}(1 + d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVariantCheck {
    pub epsilon: f64,
    /// `max e(d)(1 + d) ln^{2+ε}(1 + d)` over the range.
    pub constant: f64,
    /// Slope of the log of that product against `ln(1 + d)`.
    pub trend: f64,
    pub pass: bool,
}

/// Largest growth trend of the normalized product still accepted as bounded.
pub const LOG_VARIANT_TREND_TOL: f64 = 0.1;

pub fn check_log_variant(fit: &DecayFit, epsilon: f64) -> Result<LogVariantCheck> {
    let (lo, hi) = fit.range;
    let lo = lo.max(1);
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .filter(|&d| fit.envelope[d] > 0.0)
        .map(|d| {
            let x = 1.0 + d as f64;
            (x.ln(), (fit.envelope[d] * x * x.ln().powf(2.0 + epsilon)).ln())
        })
        .collect();
    let constant = pts.iter().map(|p| p.1.exp()).fold(0.0, f64::max);
    let trend = fit_line(&pts).map(|(m, _)| m).ok_or(Error::EmptySamples("log-variant fit"))?;
    Ok(LogVariantCheck { epsilon, constant, trend, pass: trend <= LOG_VARIANT_TREND_TOL })
}

/// Pieces `a_m` of `𝒰a` by unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDecomposition {
    pub cube: DyadicCube,
    pub values: Vec<f64>,
    /// `‖a_m‖₂` per unit cell.
    pub per_cell: Vec<f64>,
    /// `Σ_m ‖a_m‖₂`.
    pub b: f64,
    /// `max |Σ_m a_m − 𝒰a|` relative to `max |𝒰a|`.
    pub reconstruction_error: f64,
    /// Largest value of any `a_m` outside its cell.
    pub support_leak: f64,
    /// Largest `|∫ a_m|`.
    pub max_mean: f64,
}

impl AtomDecomposition {
    /// Log–log slope of `‖a_m‖₂` against `1 + m` over `m ≥ from`.
    pub fn slope(&self, from: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .per_cell
            .iter()
            .enumerate()
            .skip(from)
            .filter(|(_, &v)| v > 0.0)
            .map(|(m, &v)| ((1.0 + m as f64).ln(), v.ln()))
            .collect();
        fit_line(&pts).map(|(s, _)| s)
    }
}

pub const ATOM_TOL: f64 = 1e-12;

/// `a_m = Σ_j Σ_{Q_{j,k} ⊂ Q_{0,m}} (Σ_ℓ ⟨a, ψ_{j,ℓ}⟩ α^j_{k,ℓ}) ψ_{j,k}` for an
/// atom on `Q_{0,0}`.
pub fn atom_decompose_u(mf: &ModifiedForm, atom: &GridFunction) -> Result<AtomDecomposition> {
    let spec = mf.spec;
    spec.check_same(&atom.spec)?;
    let cube = DyadicCube::new(0, 0);
    let inside = cube.cells(&spec);
    if let Some(p) = atom.values.iter().enumerate().position(|(p, &v)| v != 0.0 && !inside.contains(&p)) {
        return Err(Error::Support { j: 0, k: 0, msg: format!("atom is nonzero at cell {p}") });
    }
    let norm = atom.norm();
    if atom.integral().abs() > ATOM_TOL * norm.max(1.0) {
        return Err(Error::InvalidArgument(format!("atom mean {:e} is not zero", atom.integral())));
    }
    if norm > 1.0 + ATOM_TOL {
        return Err(Error::InvalidArgument(format!("atom norm {norm} exceeds 1")));
    }
    let (_, detail) = dyadic::pyramid(&spec, &atom.values);
    let u: Vec<Vec<f64>> = spec
        .levels()
        .map(|j| {
            let mut out = vec![0.0; spec.side(j)];
            mf.alpha[j as usize].matvec_add(&detail[j as usize], &mut out);
            out
        })
        .collect();
    let full = LevelwiseOp { u: Some(&mf.alpha), ..LevelwiseOp::empty(spec) }.apply(&atom.values);
    let pieces: Vec<(f64, f64, f64, Vec<f64>)> = par::map_range(spec.m, |m| {
        let psi: Vec<Vec<f64>> = u
            .iter()
            .enumerate()
            .map(|(j, uj)| {
                let per = 1usize << j;
                let own = m * per..(m + 1) * per;
                uj.iter().enumerate().map(|(k, &v)| if own.contains(&k) { v } else { 0.0 }).collect()
            })
            .collect();
        let norm = psi.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let values = dyadic::synthesize_folded(&spec, &psi, &[]);
        let cells = DyadicCube::new(0, m).cells(&spec);
        let leak = values
            .iter()
            .enumerate()
            .filter(|(p, _)| !cells.contains(p))
            .fold(0.0f64, |a, (_, v)| a.max(v.abs()));
        let mean = values.iter().sum::<f64>() * spec.h();
        (norm, leak, mean.abs(), values)
    });
    let mut sum = vec![0.0; spec.n()];
    for (.., v) in &pieces {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
    }
    let scale = full.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = sum.iter().zip(&full).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let per_cell: Vec<f64> = pieces.iter().map(|p| p.0).collect();
    Ok(AtomDecomposition {
        cube,
        values: full,
        b: per_cell.iter().sum(),
        reconstruction_error: if scale > 0.0 { diff / scale } else { diff },
        support_leak: pieces.iter().map(|p| p.1).fold(0.0, f64::max),
        max_mean: pieces.iter().map(|p| p.2).fold(0.0, f64::max),
        per_cell,
    })
}

/// The rank-one `𝒲` sending `ψ_{0,1}` to `φ_{0,1} − φ_{0,0}`: a one-cell
/// translate of the construction on cells `[−1, 0)`, `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRecord {
    pub grid: GridSpec,
    pub output: Vec<f64>,
    /// `max |𝒲ψ_{0,1} − (1_{[1,2)} − 1_{[0,1)})|`.
    pub deviation: f64,
    pub nonzero_shells: Vec<u32>,
    /// `γ^{·,1}` reproduces `γ` entrywise.
    pub first_shell_is_whole: bool,
    /// `∫ 𝒲ψ_{0,1}`.
    pub integral: f64,
    /// Integral over the translated right half-line `[1, M)`.
    pub right_integral: f64,
    pub left_integral: f64,
    pub pass: bool,
}

pub const COUNTEREXAMPLE_TOL: f64 = 1e-14;

pub fn counterexample_w1(spec: GridSpec) -> Result<CounterexampleRecord> {
    if spec.m < 2 {
        return Err(Error::InvalidArgument("the counterexample needs at least two unit cells".into()));
    }
    let mut mf = ModifiedForm::zeros(spec);
    mf.gamma[0].set(1, 1, 1.0);
    mf.gamma[0].set(0, 1, -1.0);
    let shells = shell_decompose(&mf, ShellFamilies::default());
    let nonzero_shells: Vec<u32> = shells.iter().filter(|s| !s.is_zero()).map(|s| s.r).collect();
    let first_shell_is_whole = shells[0]
        .gamma
        .iter()
        .zip(&mf.gamma)
        .all(|(s, g)| (0..g.side()).all(|k| (0..g.side()).all(|l| s.get(k, l) == g.get(k, l))));
    let input = GridFunction::psi(spec, 0, 1);
    let output = shell_operator(&shells[0], spec).apply(&input.values);
    let per = 1usize << spec.j;
    let expected = |p: usize| match p / per {
        0 => -1.0,
        1 => 1.0,
        _ => 0.0,
    };
    let deviation = output.iter().enumerate().fold(0.0f64, |a, (p, v)| a.max((v - expected(p)).abs()));
    let h = spec.h();
    let integral = output.iter().sum::<f64>() * h;
    let right_integral = output[per..].iter().sum::<f64>() * h;
    let left_integral = output[..per].iter().sum::<f64>() * h;
    let pass = deviation <= COUNTEREXAMPLE_TOL
        && nonzero_shells == [1]
        && first_shell_is_whole
        && integral.abs() <= COUNTEREXAMPLE_TOL
        && right_integral.abs() > 0.5
        && left_integral.abs() > 0.5;
    Ok(CounterexampleRecord {
        grid: spec,
        output,
        deviation,
        nonzero_shells,
        first_shell_is_whole,
        integral,
        right_integral,
        left_integral,
        pass,
    })
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub pass: bool,
}

impl CheckRecord {
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, threshold: format!("<= {bound:e}"), pass: measured <= bound }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), measured, threshold: format!("[{lo}, {hi}]"), pass: (lo..=hi).contains(&measured) }
    }

    pub fn flag(name: &str, measured: f64, pass: bool, threshold: &str) -> Self {
        Self { name: name.into(), measured, threshold: threshold.into(), pass }
    }
}

pub fn write_gamma_csv<W: std::io::Write>(mut w: W, stats: &[BlockStats]) -> Result<()> {
    writeln!(w, "R,Gamma,normEstimate,ratio")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
    for s in stats {
        writeln!(w, "{},{:.6e},{},{}", s.r, s.gamma, opt(s.norm_estimate), opt(s.ratio))?;
    }
    Ok(())
}

pub fn write_envelope_csv<W: std::io::Write>(mut w: W, fit: &DecayFit) -> Result<()> {
    writeln!(w, "distance,envelope")?;
    for (d, e) in fit.envelope.iter().enumerate() {
        writeln!(w, "{d},{e:.6e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_level(side: usize, entries: &[(usize, usize, f64)]) -> ModifiedForm {
        let spec = GridSpec::new(side, 1).unwrap();
        let mut mf = ModifiedForm::zeros(spec);
        for &(k, l, v) in entries {
            mf.gamma[0].set(k, l, v);
            mf.alpha[0].set(k, l, v);
        }
        mf
    }

    #[test]
    fn shell_indices() {
        assert_eq!(shell_of(0), 0);
        assert_eq!(shell_of(1), 1);
        assert_eq!(shell_of(2), 2);
        assert_eq!(shell_of(3), 2);
        assert_eq!(shell_of(4), 3);
        assert_eq!(shell_count(&GridSpec::new(2, 8).unwrap()), 8);
        assert_eq!(shell_count(&GridSpec::new(3, 4).unwrap()), 5);
    }

    #[test]
    fn tridiagonal_gamma_has_one_shell() {
        let mf = single_level(6, &[(0, 1, 2.0), (1, 0, -1.0), (3, 4, 0.5), (5, 4, 1.5)]);
        let shells = shell_decompose(&mf, ShellFamilies::default());
        assert!(!shells[0].is_zero());
        assert!(shells[1..].iter().all(ShellCoeffs::is_zero));
        let g = &shells[0].gamma[0];
        assert!(g.col_sums().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(g.get(4, 4), -2.0);
    }

    #[test]
    fn schur_constants_on_four_by_four() {
        let v = -0.75;
        // entry at (0, 1): row 0 sees |v|, column 1 sees |v| plus its diagonal |v|
        let mf = single_level(4, &[(0, 1, v)]);
        assert_eq!(compute_schur_a(&mf), v.abs());
        let shells = shell_decompose(&mf, ShellFamilies::default());
        let stats = compute_gamma_r(&shells);
        let brute = (0..4)
            .map(|k| {
                let g = &shells[0].gamma[0];
                (0..4).map(|l| g.get(k, l).abs() + g.get(l, k).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        assert_eq!(stats[0].gamma, brute);
        assert_eq!(stats[0].gamma, 3.0 * v.abs());
        assert!(stats[1..].iter().all(|s| s.gamma == 0.0));
        assert_eq!(compute_schur_a(&ModifiedForm::zeros(GridSpec::new(2, 3).unwrap())), 0.0);
    }

    #[test]
    fn zero_form_scan() {
        let spec = GridSpec::new(2, 3).unwrap();
        let shells = shell_decompose(&ModifiedForm::zeros(spec), ShellFamilies { alpha: true, beta: true });
        let stats = wr_norm_scan(&shells, spec, &PowerOptions::default()).unwrap();
        assert!(stats.iter().all(|s| s.gamma == 0.0 && s.norm_estimate == Some(0.0) && s.ratio.is_none()));
    }

    #[test]
    fn counterexample_values() {
        let rec = counterexample_w1(GridSpec::new(3, 3).unwrap()).unwrap();
        assert!(rec.pass, "{rec:?}");
        assert_eq!(rec.nonzero_shells, vec![1]);
        assert!(rec.output[..8].iter().all(|&v| (v + 1.0).abs() < 1e-14));
        assert!(rec.output[8..16].iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(rec.output[16..].iter().all(|&v| v == 0.0));
        assert!(counterexample_w1(GridSpec::new(1, 3).unwrap()).is_err());
    }

    #[test]
    fn fits_recover_power_laws() {
        let env: Vec<f64> = (0..100).map(|d| 3.0 * (1.0 + d as f64).powf(-2.5)).collect();
        let fit = fit_envelope(env, (2, 64)).unwrap();
        assert!((fit.s_hat.unwrap() - 1.5).abs() < 1e-12);
        assert!((fit.c_hat.unwrap() - 3.0).abs() < 1e-10);
        assert!(fit.power_law);
        let zero = fit_envelope(vec![0.0; 10], (2, 8)).unwrap();
        assert!(zero.degenerate && zero.s_hat.is_none());
        assert!(fit_envelope(vec![1.0; 10], (2, 10)).is_err());
        assert!(fit_envelope(vec![1.0; 10], (5, 3)).is_err());
    }

    #[test]
    fn log_decay_is_not_a_power_law() {
        let eps = 0.5;
        let env: Vec<f64> = (0..100)
            .map(|d| {
                let x = 1.0 + d as f64;
                if d == 0 { 1.0 } else { 1.0 / (x * x.ln().powf(2.0 + eps)) }
            })
            .collect();
        let fit = fit_envelope(env, (2, 64)).unwrap();
        assert!(!fit.power_law, "{:?}", fit.half_slopes);
        let lv = check_log_variant(&fit, eps).unwrap();
        assert!(lv.pass && lv.trend.abs() < 1e-9);
        let slow: Vec<f64> = (0..100).map(|d| 1.0 / (1.0 + d as f64)).collect();
        assert!(!check_log_variant(&fit_envelope(slow, (2, 64)).unwrap(), eps).unwrap().pass);
    }

    #[test]
    fn atom_rejections() {
        let spec = GridSpec::new(4, 3).unwrap();
        let mf = ModifiedForm::zeros(spec);
        assert!(atom_decompose_u(&mf, &GridFunction::psi(spec, 0, 1)).is_err());
        assert!(atom_decompose_u(&mf, &GridFunction::indicator(spec, &DyadicCube::new(0, 0))).is_err());
        let big = GridFunction { spec, values: GridFunction::psi(spec, 0, 0).values.iter().map(|v| 2.0 * v).collect() };
        assert!(atom_decompose_u(&mf, &big).is_err());
        let dec = atom_decompose_u(&mf, &GridFunction::psi(spec, 0, 0)).unwrap();
        assert!(dec.per_cell.iter().all(|&v| v == 0.0) && dec.b == 0.0);
    }
}

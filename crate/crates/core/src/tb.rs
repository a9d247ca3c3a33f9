//! Local T(b) testing conditions: normalization, size and image constants of
//! a b-system, the T(1) constant of the perfect dyadic part, and the
//! per-cube reduction from an operator to its perfect dyadic part.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, GridSpec};
use crate::fastapply::{estimate_opnorm, LevelwiseOp, LinearOp, PowerOptions};
use crate::nsform::{DiagonalForm, SplitForm};
use crate::{par, Error, Result};

/// An exponent in `(1, ∞]`; serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub struct Exponent(f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<ExponentRepr> for Exponent {
    type Error = Error;

    fn try_from(r: ExponentRepr) -> Result<Self> {
        match r {
            ExponentRepr::Num(v) => Exponent::new(v),
            ExponentRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Exponent> for ExponentRepr {
    fn from(e: Exponent) -> Self {
        if e.is_infinite() {
            ExponentRepr::Text("inf".into())
        } else {
            ExponentRepr::Num(e.0)
        }
    }
}

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() || v <= 1.0 {
            return Err(Error::InvalidArgument(format!("exponent {v} must lie in (1, inf]")));
        }
        Ok(Self(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn reciprocal(self) -> f64 {
        if self.is_infinite() { 0.0 } else { 1.0 / self.0 }
    }

    /// `p′ = p/(p − 1)`, with `∞′ = 1`.
    pub fn dual(self) -> f64 {
        if self.is_infinite() { 1.0 } else { self.0 / (self.0 - 1.0) }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Self::INFINITY),
            t => Exponent::new(t.parse().map_err(|_| Error::InvalidArgument(format!("bad exponent `{t}`")))?),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() { f.write_str("inf") } else { write!(f, "{}", self.0) }
    }
}

/// Test functions of one cube, stored on the cube's cells only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BCube {
    pub cube: DyadicCube,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BSystem {
    pub spec: GridSpec,
    pub levels: Range<u32>,
    pub p: Exponent,
    pub q: Exponent,
    pub cubes: Vec<BCube>,
}

fn check_levels(spec: &GridSpec, levels: &Range<u32>) -> Result<()> {
    if levels.start >= levels.end || levels.end > spec.j {
        return Err(Error::InvalidArgument(format!(
            "level range {}..{} must be non-empty within 0..{}",
            levels.start, levels.end, spec.j
        )));
    }
    Ok(())
}

/// `b¹_Q = b²_Q = 1_Q` for every cube at the given levels.
pub fn make_bsystem_indicator(spec: GridSpec, levels: Range<u32>, p: Exponent, q: Exponent) -> Result<BSystem> {
    check_levels(&spec, &levels)?;
    let cubes = DyadicCube::all(&spec, levels.clone())
        .into_iter()
        .map(|cube| {
            let len = cube.cells(&spec).len();
            BCube { cube, b1: vec![1.0; len], b2: vec![1.0; len] }
        })
        .collect();
    Ok(BSystem { spec, levels, p, q, cubes })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BSystemFile {
    p: Exponent,
    q: Exponent,
    cubes: Vec<BCubeFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BCubeFile {
    j: u32,
    k: usize,
    b1: Vec<f64>,
    b2: Option<Vec<f64>>,
}

impl BSystem {
    /// `1/p + 1/q ≤ 1`, equivalently `q′ ≤ p`.
    pub fn exponent_constraint(&self) -> bool {
        self.p.reciprocal() + self.q.reciprocal() <= 1.0
    }

    /// Reads a JSON b-system whose functions are given on the whole grid:
    /// `{"p": 2, "q": "inf", "cubes": [{"j": 0, "k": 1, "b1": [...], "b2": [...]}]}`.
    /// `b2` defaults to `b1`.
    pub fn from_json(text: &str, spec: GridSpec) -> Result<Self> {
        let file: BSystemFile = serde_json::from_str(text)?;
        if file.cubes.is_empty() {
            return Err(Error::Format("b-system has no cubes".into()));
        }
        let mut cubes = Vec::with_capacity(file.cubes.len());
        for c in file.cubes {
            let cube = DyadicCube::new(c.j, c.k);
            if !cube.is_valid(&spec) {
                return Err(Error::Support { j: c.j, k: c.k, msg: "cube is not on the grid".into() });
            }
            let cells = cube.cells(&spec);
            let local = |name: &str, v: &[f64]| -> Result<Vec<f64>> {
                if v.len() != spec.n() {
                    return Err(Error::GridMismatch(format!(
                        "{name} of cube ({}, {}) has {} values, expected {}",
                        c.j,
                        c.k,
                        v.len(),
                        spec.n()
                    )));
                }
                if let Some(p) = (0..spec.n()).find(|p| !cells.contains(p) && v[*p] != 0.0) {
                    return Err(Error::Support { j: c.j, k: c.k, msg: format!("{name} is nonzero at cell {p}") });
                }
                Ok(v[cells.clone()].to_vec())
            };
            let b1 = local("b1", &c.b1)?;
            let b2 = match &c.b2 {
                Some(v) => local("b2", v)?,
                None => b1.clone(),
            };
            cubes.push(BCube { cube, b1, b2 });
        }
        let lo = cubes.iter().map(|c| c.cube.j).min().unwrap_or(0);
        let hi = cubes.iter().map(|c| c.cube.j).max().unwrap_or(0) + 1;
        Ok(BSystem { spec, levels: lo..hi, p: file.p, q: file.q, cubes })
    }

    fn extended(&self, c: &BCube, second: bool) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.n()];
        v[c.cube.cells(&self.spec)].copy_from_slice(if second { &c.b2 } else { &c.b1 });
        v
    }
}

/// `(1/|Q|)∫_Q |g|^r`, or `max_Q |g|` for `r = ∞`.
fn mean_power(values: &[f64], r: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if r.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        values.iter().map(|v| v.abs().powf(r)).sum::<f64>() / values.len() as f64
    }
}

/// `((1/|Q|)∫_Q |g|^r)^{1/r}`.
fn mean_norm(values: &[f64], r: f64) -> f64 {
    let m = mean_power(values, r);
    if r.is_infinite() { m } else { m.powf(1.0 / r) }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-cube constants and their supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeConstants {
    pub per_cube: Vec<f64>,
    pub sup: f64,
}

impl CubeConstants {
    fn new(per_cube: Vec<f64>) -> Self {
        let sup = per_cube.iter().fold(0.0, |m: f64, v| m.max(*v));
        Self { per_cube, sup }
    }
}

/// `max(|∫b¹_Q − |Q||, |∫b²_Q − |Q||)/|Q|` per cube.
pub fn check_normalization(bs: &BSystem) -> CubeConstants {
    CubeConstants::new(
        bs.cubes
            .iter()
            .map(|c| (mean(&c.b1) - 1.0).abs().max((mean(&c.b2) - 1.0).abs()))
            .collect(),
    )
}

/// `(∫_Q |b¹_Q|^p + |b²_Q|^q)/|Q|` per cube; an infinite exponent uses the
/// sup norm of that function instead.
pub fn check_size(bs: &BSystem) -> CubeConstants {
    CubeConstants::new(
        bs.cubes
            .iter()
            .map(|c| mean_power(&c.b1, bs.p.value()) + mean_power(&c.b2, bs.q.value()))
            .collect(),
    )
}

fn restrict<'a>(bs: &BSystem, c: &BCube, v: &'a [f64]) -> &'a [f64] {
    &v[c.cube.cells(&bs.spec)]
}

/// `(∫_Q |Tb¹_Q|^{q′} + |T*b²_Q|^{p′})/|Q|` per cube.
pub fn check_image(bs: &BSystem, t: &dyn LinearOp) -> Result<CubeConstants> {
    bs.spec.check_same(&t.grid())?;
    if bs.p.value() <= 1.0 || bs.q.value() <= 1.0 {
        return Err(Error::InvalidArgument("image check needs p, q > 1".into()));
    }
    let (pd, qd) = (bs.p.dual(), bs.q.dual());
    Ok(CubeConstants::new(par::map_range(bs.cubes.len(), |i| {
        let c = &bs.cubes[i];
        let tb = t.apply(&bs.extended(c, false));
        let tsb = t.apply_adjoint(&bs.extended(c, true));
        mean_power(restrict(bs, c, &tb), qd) + mean_power(restrict(bs, c, &tsb), pd)
    })))
}

/// `(∫_Q |T1_Q| + |T*1_Q|)/|Q|` for every cube at the given levels.
pub fn check_t1(t: &dyn LinearOp, levels: Range<u32>) -> Result<CubeConstants> {
    let spec = t.grid();
    check_levels(&spec, &levels)?;
    let cubes = DyadicCube::all(&spec, levels);
    Ok(CubeConstants::new(par::map_range(cubes.len(), |i| {
        let cells = cubes[i].cells(&spec);
        let mut one = vec![0.0; spec.n()];
        one[cells.clone()].iter_mut().for_each(|v| *v = 1.0);
        let a = t.apply(&one);
        let b = t.apply_adjoint(&one);
        mean_power(&a[cells.clone()], 1.0) + mean_power(&b[cells], 1.0)
    })))
}

/// T(1) constant of the perfect dyadic part.
pub fn check_t1_dyadic(dyadic: &DiagonalForm, levels: Range<u32>) -> Result<CubeConstants> {
    check_t1(dyadic, levels)
}

/// Per-cube record of a [`TbReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub j: u32,
    pub k: usize,
    pub normalization: f64,
    pub size: f64,
    pub image: f64,
    pub image_dyadic: f64,
    /// `(avg_Q |𝕋b¹_Q|^{q′})^{1/q′}` and `(avg_Q |𝕋*b²_Q|^{p′})^{1/p′}`.
    pub reduction_lhs: [f64; 2],
    /// `‖𝒯‖·(avg_Q |b|^p)^{1/p} + (avg_Q |Tb|^{q′})^{1/q′}` and its adjoint
    /// counterpart.
    pub reduction_rhs: [f64; 2],
    pub reduction_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbReport {
    pub grid: GridSpec,
    pub levels: [u32; 2],
    pub p: Exponent,
    pub q: Exponent,
    pub p_dual: f64,
    pub q_dual: f64,
    /// `1/p + 1/q ≤ 1`.
    pub exponent_constraint: bool,
    pub c: f64,
    /// `L²` norm estimate of the smooth and coarse parts; it bounds their
    /// `L^p` norm only for `p = 2`.
    pub smooth_norm: f64,
    pub smooth_norm_is_lp: bool,
    pub sup_normalization: f64,
    pub sup_size: f64,
    pub sup_image: f64,
    pub sup_image_dyadic: f64,
    pub t1: f64,
    pub t1_dyadic: f64,
    pub pass_normalization: bool,
    pub pass_size: bool,
    pub pass_image: bool,
    pub pass_t1: bool,
    pub reduction_holds: bool,
    pub cubes: Vec<CubeRecord>,
}

impl TbReport {
    pub fn pass(&self) -> bool {
        self.pass_normalization && self.pass_size && self.pass_image && self.pass_t1 && self.reduction_holds
    }
}

pub const NORMALIZATION_TOL: f64 = 1e-12;
const REDUCTION_SLACK: f64 = 1e-9;

/// All conditions on `t`, plus the reduction `𝕋 = T − 𝒯` cube by cube:
/// `‖𝕋b‖_{q′,Q} ≤ ‖𝒯‖·‖b‖_{p,Q} + ‖Tb‖_{q′,Q}` in cube averages, where `𝒯`
/// is the smooth part with the coarse block.
pub fn run_tb_report(bs: &BSystem, t: &dyn LinearOp, split: &SplitForm, c: f64, opts: &PowerOptions) -> Result<TbReport> {
    let spec = bs.spec;
    spec.check_same(&t.grid())?;
    spec.check_same(&split.smooth.spec)?;
    let smooth = LevelwiseOp {
        u: Some(&split.smooth.alpha),
        v: Some(&split.smooth.beta),
        w: Some(&split.smooth.gamma),
        coarse: Some(&split.coarse),
        ..LevelwiseOp::empty(spec)
    };
    let dyadic = &split.dyadic;
    let smooth_norm = estimate_opnorm(&smooth, opts)?;
    let norm = check_normalization(bs);
    let size = check_size(bs);
    let (p, q) = (bs.p.value(), bs.q.value());
    let (pd, qd) = (bs.p.dual(), bs.q.dual());
    if p <= 1.0 || q <= 1.0 {
        return Err(Error::InvalidArgument("T(b) report needs p, q > 1".into()));
    }
    let per_cube: Vec<(f64, f64, [f64; 2], [f64; 2])> = par::map_range(bs.cubes.len(), |i| {
        let cb = &bs.cubes[i];
        let (b1, b2) = (bs.extended(cb, false), bs.extended(cb, true));
        let on = |v: &[f64]| restrict(bs, cb, v).to_vec();
        let (tb, tsb) = (on(&t.apply(&b1)), on(&t.apply_adjoint(&b2)));
        let (db, dsb) = (on(&dyadic.apply(&b1)), on(&dyadic.apply_adjoint(&b2)));
        let image = mean_power(&tb, qd) + mean_power(&tsb, pd);
        let image_dyadic = mean_power(&db, qd) + mean_power(&dsb, pd);
        let lhs = [mean_norm(&db, qd), mean_norm(&dsb, pd)];
        let rhs = [
            smooth_norm * mean_norm(&cb.b1, p) + mean_norm(&tb, qd),
            smooth_norm * mean_norm(&cb.b2, q) + mean_norm(&tsb, pd),
        ];
        (image, image_dyadic, lhs, rhs)
    });
    let cubes: Vec<CubeRecord> = bs
        .cubes
        .iter()
        .zip(&per_cube)
        .enumerate()
        .map(|(i, (cb, &(image, image_dyadic, lhs, rhs)))| CubeRecord {
            j: cb.cube.j,
            k: cb.cube.k,
            normalization: norm.per_cube[i],
            size: size.per_cube[i],
            image,
            image_dyadic,
            reduction_lhs: lhs,
            reduction_rhs: rhs,
            reduction_holds: lhs.iter().zip(&rhs).all(|(l, r)| *l <= r * (1.0 + REDUCTION_SLACK) + 1e-14),
        })
        .collect();
    let t1 = check_t1(t, bs.levels.clone())?.sup;
    let t1_dyadic = check_t1_dyadic(dyadic, bs.levels.clone())?.sup;
    let sup = |f: fn(&CubeRecord) -> f64| cubes.iter().map(f).fold(0.0, f64::max);
    let sup_image = sup(|r| r.image);
    Ok(TbReport {
        grid: spec,
        levels: [bs.levels.start, bs.levels.end],
        p: bs.p,
        q: bs.q,
        p_dual: pd,
        q_dual: qd,
        exponent_constraint: bs.exponent_constraint(),
        c,
        smooth_norm,
        smooth_norm_is_lp: p == 2.0 && q == 2.0,
        sup_normalization: norm.sup,
        sup_size: size.sup,
        sup_image,
        sup_image_dyadic: sup(|r| r.image_dyadic),
        t1,
        t1_dyadic,
        pass_normalization: norm.sup <= NORMALIZATION_TOL,
        pass_size: size.sup <= c,
        pass_image: sup_image <= c,
        pass_t1: t1 <= c,
        reduction_holds: cubes.iter().all(|r| r.reduction_holds),
        cubes,
    })
}

/// The three conditions checked directly on the perfect dyadic part.
pub fn run_tb_dyadic(bs: &BSystem, dyadic: &DiagonalForm, c: f64) -> Result<(CubeConstants, CubeConstants, CubeConstants, bool)> {
    let norm = check_normalization(bs);
    let size = check_size(bs);
    let image = check_image(bs, dyadic)?;
    let pass = norm.sup <= NORMALIZATION_TOL && size.sup <= c && image.sup <= c;
    Ok((norm, size, image, pass))
}

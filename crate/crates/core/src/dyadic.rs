//! Finite dyadic grid on `[0, M)`, Haar functions and the pyramid transforms.
//!
//! A [`GridSpec`] with `M` unit cells and finest level `J` has `N = M·2^J`
//! cells of width `h = 2^-J`. Functions are piecewise constant at scale `h`,
//! so every inner product below is an exact finite sum.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of unit cells `[m, m+1)`.
    pub m: usize,
    /// Finest refinement level.
    pub j: u32,
}

impl GridSpec {
    pub fn new(m: usize, j: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("M must be positive".into()));
        }
        if j > 40 || m.checked_shl(j).is_none_or(|n| n >> j != m) {
            return Err(Error::InvalidArgument(format!("grid M={m}, J={j} overflows")));
        }
        Ok(Self { m, j })
    }

    /// Sample count `N = M·2^J`.
    pub fn n(&self) -> usize {
        self.m << self.j
    }

    /// Mesh `h = 2^-J`.
    pub fn h(&self) -> f64 {
        (-(self.j as f64)).exp2()
    }

    /// Number of level-`level` cubes, `M·2^level`.
    pub fn side(&self, level: u32) -> usize {
        self.m << level
    }

    /// Wavelet levels `0..J`.
    pub fn levels(&self) -> std::ops::Range<u32> {
        0..self.j
    }

    pub fn midpoint(&self, p: usize) -> f64 {
        (p as f64 + 0.5) * self.h()
    }

    pub fn domain_len(&self) -> f64 {
        self.m as f64
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "M={}, J={} vs M={}, J={}",
                self.m, self.j, other.m, other.j
            )));
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {len}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// The dyadic cube `Q_{j,k} = 2^-j [k, k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub j: u32,
    pub k: usize,
}

impl DyadicCube {
    pub fn new(j: u32, k: usize) -> Self {
        Self { j, k }
    }

    pub fn len(&self) -> f64 {
        (-(self.j as f64)).exp2()
    }

    pub fn left(&self) -> f64 {
        self.k as f64 * self.len()
    }

    pub fn right(&self) -> f64 {
        (self.k + 1) as f64 * self.len()
    }

    pub fn center(&self) -> f64 {
        (self.k as f64 + 0.5) * self.len()
    }

    /// Whether `other ⊂ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.j >= self.j && (other.k >> (other.j - self.j)) == self.k
    }

    /// Range of finest cells covered on `spec`.
    pub fn cells(&self, spec: &GridSpec) -> std::ops::Range<usize> {
        let w = 1usize << (spec.j - self.j);
        self.k * w..(self.k + 1) * w
    }

    pub fn is_valid(&self, spec: &GridSpec) -> bool {
        self.j <= spec.j && self.k < spec.side(self.j)
    }

    /// All cubes at levels `levels` on `spec`, coarse to fine.
    pub fn all(spec: &GridSpec, levels: std::ops::Range<u32>) -> Vec<DyadicCube> {
        levels
            .flat_map(|j| (0..spec.side(j)).map(move |k| DyadicCube::new(j, k)))
            .collect()
    }
}

/// Gap between two same-level closed cubes; zero iff adjacent or equal.
pub fn cube_distance(q: &DyadicCube, r: &DyadicCube) -> Result<f64> {
    if q.j != r.j {
        return Err(Error::InvalidArgument(format!(
            "cube levels differ ({} vs {})",
            q.j, r.j
        )));
    }
    let gap = q.k.abs_diff(r.k).saturating_sub(1);
    Ok(gap as f64 * q.len())
}

/// `2^{j/2} ψ(2^j x − k)` with the Haar mother wavelet.
pub fn eval_psi(j: u32, k: i64, x: f64) -> f64 {
    let t = x * (j as f64).exp2() - k as f64;
    let amp = (j as f64 * 0.5).exp2();
    if (0.0..0.5).contains(&t) {
        amp
    } else if (0.5..1.0).contains(&t) {
        -amp
    } else {
        0.0
    }
}

/// `2^{j/2} 1_{[0,1)}(2^j x − k)`.
pub fn eval_phi(j: u32, k: i64, x: f64) -> f64 {
    let t = x * (j as f64).exp2() - k as f64;
    if (0.0..1.0).contains(&t) {
        (j as f64 * 0.5).exp2()
    } else {
        0.0
    }
}

/// A function that is constant on every finest cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.check_len(values.len())?;
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.n()] }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..spec.n()).map(|p| f(spec.midpoint(p))).collect();
        Self { spec, values }
    }

    pub fn indicator(spec: GridSpec, cube: &DyadicCube) -> Self {
        let mut g = Self::zeros(spec);
        g.values[cube.cells(&spec)].fill(1.0);
        g
    }

    pub fn psi(spec: GridSpec, j: u32, k: usize) -> Self {
        Self::from_fn(spec, |x| eval_psi(j, k as i64, x))
    }

    pub fn phi(spec: GridSpec, j: u32, k: usize) -> Self {
        Self::from_fn(spec, |x| eval_phi(j, k as i64, x))
    }

    /// The bilinear bracket `h·Σ f_p g_p`.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        inner(&self.spec, &self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.spec.h() * self.values.iter().sum::<f64>()
    }
}

pub(crate) fn inner(spec: &GridSpec, f: &[f64], g: &[f64]) -> f64 {
    spec.h() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

pub(crate) fn l2_norm(spec: &GridSpec, f: &[f64]) -> f64 {
    inner(spec, f, f).sqrt()
}

/// Haar coefficients: `coarse[m] = ⟨f, φ_{0,m}⟩`, `detail[j][k] = ⟨f, ψ_{j,k}⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoeffs {
    pub spec: GridSpec,
    pub coarse: Vec<f64>,
    pub detail: Vec<Vec<f64>>,
}

impl WaveletCoeffs {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            coarse: vec![0.0; spec.m],
            detail: spec.levels().map(|j| vec![0.0; spec.side(j)]).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        let c: f64 = self.coarse.iter().map(|x| x * x).sum();
        c + self
            .detail
            .iter()
            .flatten()
            .map(|x| x * x)
            .sum::<f64>()
    }
}

/// `2^{j/2}`, exact for even `j`.
#[inline]
fn half_power(j: i64) -> f64 {
    let w = ((j.div_euclid(2)) as f64).exp2();
    if j.rem_euclid(2) == 1 { w * SQRT_2 } else { w }
}

/// Full pyramid: scaling coefficients for levels `0..=J` and details for
/// `0..J`, indexed by level.
///
/// The cascade runs on unnormalized pair sums and differences of the cell
/// values; level `j` is scaled once by `h·2^{j/2}`. Dyadic-rational inputs
/// therefore give exact coefficients at even levels.
pub(crate) fn pyramid(spec: &GridSpec, values: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let levels = spec.j as usize;
    let mut sums = vec![Vec::new(); levels + 1];
    let mut diffs = vec![Vec::new(); levels];
    sums[levels] = values.to_vec();
    for j in (0..levels).rev() {
        let fine = &sums[j + 1];
        let (s, d): (Vec<f64>, Vec<f64>) = fine.chunks_exact(2).map(|p| (p[0] + p[1], p[0] - p[1])).unzip();
        sums[j] = s;
        diffs[j] = d;
    }
    let h = spec.h();
    let scale = |j: usize, v: &mut Vec<f64>| {
        let w = h * half_power(j as i64);
        v.iter_mut().for_each(|x| *x *= w);
    };
    sums.iter_mut().enumerate().for_each(|(j, v)| scale(j, v));
    diffs.iter_mut().enumerate().for_each(|(j, v)| scale(j, v));
    (sums, diffs)
}

/// Rebuilds cell values from per-level ψ-coefficients and φ-coefficients.
///
/// `phi[j]` may be non-empty at any level `0..=J`; it is folded into the
/// running cube values before refining past level `j`, which realizes
/// `Σ_j Σ_k phi[j][k]·φ_{j,k}` (the φ's are not orthogonal across levels).
pub(crate) fn synthesize_folded(spec: &GridSpec, psi: &[Vec<f64>], phi: &[Vec<f64>]) -> Vec<f64> {
    let mut running = vec![0.0; spec.m];
    let mut next = Vec::new();
    for j in 0..=spec.j as usize {
        let w = half_power(j as i64);
        if let Some(add) = phi.get(j).filter(|v| !v.is_empty()) {
            running.iter_mut().zip(add).for_each(|(r, a)| *r += a * w);
        }
        if j == spec.j as usize {
            break;
        }
        next.clear();
        match psi.get(j).filter(|v| !v.is_empty()) {
            Some(d) => {
                for (r, c) in running.iter().zip(d) {
                    let c = c * w;
                    next.push(r + c);
                    next.push(r - c);
                }
            }
            None => running.iter().for_each(|&r| next.extend([r, r])),
        }
        std::mem::swap(&mut running, &mut next);
    }
    running
}

/// Forward transform by the two-scale cascade; `O(N)`.
pub fn haar_analysis(f: &GridFunction) -> WaveletCoeffs {
    let (mut scaling, detail) = pyramid(&f.spec, &f.values);
    WaveletCoeffs {
        spec: f.spec,
        coarse: std::mem::take(&mut scaling[0]),
        detail,
    }
}

/// Inverse of [`haar_analysis`]; `O(N)`.
pub fn haar_synthesis(c: &WaveletCoeffs) -> Result<GridFunction> {
    let spec = c.spec;
    if c.coarse.len() != spec.m
        || c.detail.len() != spec.j as usize
        || c.detail.iter().enumerate().any(|(j, d)| d.len() != spec.side(j as u32))
    {
        return Err(Error::GridMismatch("malformed wavelet coefficients".into()));
    }
    let phi = vec![c.coarse.clone()];
    let values = synthesize_folded(&spec, &c.detail, &phi);
    Ok(GridFunction { spec, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(m: usize, j: u32) -> GridSpec {
        GridSpec::new(m, j).unwrap()
    }

    #[test]
    fn haar_values() {
        assert_eq!(eval_psi(0, 0, 0.25), 1.0);
        assert_eq!(eval_psi(0, 0, 0.75), -1.0);
        assert_relative_eq!(eval_psi(1, 1, 0.6), 2f64.sqrt());
        assert_eq!(eval_psi(0, 0, 1.0), 0.0);
        assert_eq!(eval_phi(0, 0, 0.5), 1.0);
        assert_eq!(eval_phi(2, 3, 0.8), 2.0);
        assert_eq!(eval_phi(0, 1, 0.5), 0.0);
        assert_eq!(eval_phi(0, -1, -0.5), 1.0);
    }

    #[test]
    fn cube_geometry() {
        let q = DyadicCube::new(2, 0);
        assert_eq!(cube_distance(&q, &DyadicCube::new(2, 1)).unwrap(), 0.0);
        assert_eq!(cube_distance(&q, &DyadicCube::new(2, 3)).unwrap(), 0.5);
        assert_eq!(cube_distance(&q, &q).unwrap(), 0.0);
        assert!(cube_distance(&q, &DyadicCube::new(1, 0)).is_err());
        assert!(DyadicCube::new(1, 1).contains(&DyadicCube::new(3, 5)));
        assert!(!DyadicCube::new(1, 1).contains(&DyadicCube::new(3, 3)));
        assert!(!DyadicCube::new(3, 5).contains(&DyadicCube::new(1, 1)));
        assert_eq!(DyadicCube::new(1, 1).cells(&spec(2, 3)), 4..8);
    }

    #[test]
    fn constant_function_has_no_detail() {
        let s = spec(2, 3);
        let f = GridFunction::from_fn(s, |_| 1.0);
        let c = haar_analysis(&f);
        for (j, d) in c.detail.iter().enumerate() {
            assert!(d.iter().all(|&x| x.abs() < 1e-15), "level {j}");
        }
        assert_relative_eq!(c.coarse[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.coarse[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wavelet_picks_out_its_coefficient() {
        let s = spec(2, 3);
        let c = haar_analysis(&GridFunction::psi(s, 1, 0));
        for (j, d) in c.detail.iter().enumerate() {
            for (k, &x) in d.iter().enumerate() {
                let expect = if (j, k) == (1, 0) { 1.0 } else { 0.0 };
                assert!((x - expect).abs() < 1e-14, "({j},{k}) = {x}");
            }
        }
        assert!(c.coarse.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn parseval_and_round_trip() {
        let s = spec(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = GridFunction::from_fn(s, |_| rng.random_range(-1.0..1.0));
        let c = haar_analysis(&f);
        assert_relative_eq!(c.energy(), f.inner(&f), max_relative = 1e-12);
        let g = haar_synthesis(&c).unwrap();
        let err = f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn synthesis_of_trivial_coefficients() {
        let s = spec(2, 4);
        let z = haar_synthesis(&WaveletCoeffs::zeros(s)).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let mut c = WaveletCoeffs::zeros(s);
        c.coarse.fill(1.0);
        let one = haar_synthesis(&c).unwrap();
        assert!(one.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn orthonormality() {
        let s = spec(2, 4);
        let mut basis = Vec::new();
        for m in 0..s.m {
            basis.push(GridFunction::phi(s, 0, m));
        }
        for j in s.levels() {
            for k in 0..s.side(j) {
                basis.push(GridFunction::psi(s, j, k));
            }
        }
        assert_eq!(basis.len(), s.n());
        for (a, fa) in basis.iter().enumerate() {
            for (b, fb) in basis.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((fa.inner(fb) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_scale_relations() {
        let s = spec(2, 4);
        for j in 0..s.j {
            for k in 0..s.side(j) {
                let phi = GridFunction::phi(s, j, k);
                let psi = GridFunction::psi(s, j, k);
                let c0 = GridFunction::phi(s, j + 1, 2 * k);
                let c1 = GridFunction::phi(s, j + 1, 2 * k + 1);
                for p in 0..s.n() {
                    let sum = (c0.values[p] + c1.values[p]) * FRAC_1_SQRT_2;
                    let diff = (c0.values[p] - c1.values[p]) * FRAC_1_SQRT_2;
                    assert!((phi.values[p] - sum).abs() < 1e-12);
                    assert!((psi.values[p] - diff).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(GridSpec::new(0, 3).is_err());
        assert!(GridFunction::new(spec(2, 2), vec![0.0; 7]).is_err());
    }
}

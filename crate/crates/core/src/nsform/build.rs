use crate::dyadic::{eval_phi, eval_psi, GridSpec};
use crate::kernels::{KernelSpec, Quadrature};
use crate::{par, Error, Result};

use super::{band_half_width, FormMeta, LevelMatrix, NonStandardForm};

/// Largest `N` for which dense `N×N` storage is allocated.
pub const DEFAULT_DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub quadrature: Quadrature,
    /// Store every level banded with `|k − ℓ| < 2^Rmax`.
    pub band: Option<u32>,
    pub dense_limit: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::default(),
            band: None,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

impl BuildOptions {
    pub fn banded(rmax: u32) -> Self {
        Self { band: Some(rmax), ..Self::default() }
    }

    fn meta(&self, k: &KernelSpec) -> FormMeta {
        FormMeta {
            kernel: k.name.clone(),
            params: k.params.clone(),
            quadrature: self.quadrature,
            band: self.band,
        }
    }

    fn store(&self, side: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> LevelMatrix {
        match self.band {
            Some(r) => LevelMatrix::from_fn_banded(side, band_half_width(r), f),
            None => LevelMatrix::from_fn(side, f),
        }
    }
}

/// Haar butterfly on the four children `s^{j+1}_{2k+a, 2ℓ+b}`:
/// returns `(s^j, a^j, b^j, c^j)` at `(k, ℓ)`.
#[inline]
fn butterfly(s00: f64, s01: f64, s10: f64, s11: f64) -> [f64; 4] {
    [
        0.5 * (s00 + s01 + s10 + s11),
        0.5 * (s00 - s01 - s10 + s11),
        0.5 * (s00 + s01 - s10 - s11),
        0.5 * (s00 - s01 + s10 - s11),
    ]
}

/// Builds the form from the finest cell averages by the two-scale cascade.
///
/// Translation-invariant kernels take a Toeplitz route that never stores an
/// `N×N` array, so banded builds scale to large `N`.
pub fn build_nsform_pyramid(k: &KernelSpec, grid: &GridSpec, opts: &BuildOptions) -> Result<NonStandardForm> {
    if opts.band.is_some_and(|r| r == 0) {
        return Err(Error::InvalidArgument("Rmax must be at least 1".into()));
    }
    if opts.band.is_none() && grid.n() > opts.dense_limit {
        return Err(Error::TooLarge { n: grid.n(), limit: opts.dense_limit });
    }
    if k.is_translation_invariant() {
        Ok(pyramid_toeplitz(k, grid, opts))
    } else {
        pyramid_dense(k, grid, opts)
    }
}

/// `h·K̄(p, q)` for all finest cells, row-major.
pub(crate) fn finest_matrix(k: &KernelSpec, grid: &GridSpec, quad: &Quadrature, limit: usize) -> Result<Vec<f64>> {
    let n = grid.n();
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    let h = grid.h();
    let mut s = vec![0.0; n * n];
    par::for_each_row(&mut s, n, |p, row| {
        for (q, v) in row.iter_mut().enumerate() {
            *v = h * quad.cell_average(k, grid, p, q);
        }
    });
    Ok(s)
}

fn pyramid_dense(k: &KernelSpec, grid: &GridSpec, opts: &BuildOptions) -> Result<NonStandardForm> {
    let mut s = finest_matrix(k, grid, &opts.quadrature, opts.dense_limit)?;
    let levels = grid.j as usize;
    let (mut a, mut b, mut c) = (vec![None; levels], vec![None; levels], vec![None; levels]);
    for j in (0..grid.j).rev() {
        let side = grid.side(j);
        let fine = 2 * side;
        let block = |kk: usize, l: usize| {
            let at = |r: usize, q: usize| s[r * fine + q];
            butterfly(
                at(2 * kk, 2 * l),
                at(2 * kk, 2 * l + 1),
                at(2 * kk + 1, 2 * l),
                at(2 * kk + 1, 2 * l + 1),
            )
        };
        a[j as usize] = Some(opts.store(side, |kk, l| block(kk, l)[1]));
        b[j as usize] = Some(opts.store(side, |kk, l| block(kk, l)[2]));
        c[j as usize] = Some(opts.store(side, |kk, l| block(kk, l)[3]));
        let coarser = LevelMatrix::from_fn(side, |kk, l| block(kk, l)[0]);
        s = coarser.to_dense();
    }
    Ok(NonStandardForm {
        spec: *grid,
        a: a.into_iter().map(Option::unwrap).collect(),
        b: b.into_iter().map(Option::unwrap).collect(),
        c: c.into_iter().map(Option::unwrap).collect(),
        coarse: LevelMatrix::from_dense(grid.m, s),
        meta: opts.meta(k),
    })
}

/// Toeplitz section `t[d + n − 1]`, `d ∈ (−n, n)`.
struct Toeplitz {
    n: usize,
    t: Vec<f64>,
}

impl Toeplitz {
    #[inline]
    fn at(&self, d: i64) -> f64 {
        self.t[(d + self.n as i64 - 1) as usize]
    }

    fn entry(&self) -> impl Fn(usize, usize) -> f64 + Sync + Send + '_ {
        move |k, l| self.at(k as i64 - l as i64)
    }
}

fn pyramid_toeplitz(k: &KernelSpec, grid: &GridSpec, opts: &BuildOptions) -> NonStandardForm {
    let n = grid.n();
    let h = grid.h();
    let mut fine = Toeplitz { n, t: vec![0.0; 2 * n - 1] };
    par::fill_indexed(&mut fine.t, |i| h * opts.quadrature.profile_average(k, grid, i as i64 - (n as i64 - 1)));
    let levels = grid.j as usize;
    let (mut a, mut b, mut c) = (vec![None; levels], vec![None; levels], vec![None; levels]);
    for j in (0..grid.j).rev() {
        let side = grid.side(j);
        let mut out: [Toeplitz; 4] = std::array::from_fn(|_| Toeplitz { n: side, t: vec![0.0; 2 * side - 1] });
        for i in 0..2 * side - 1 {
            let d = i as i64 - (side as i64 - 1);
            // s00 and s11 sit at offset 2d, s01 at 2d − 1, s10 at 2d + 1
            let v = butterfly(fine.at(2 * d), fine.at(2 * d - 1), fine.at(2 * d + 1), fine.at(2 * d));
            for (o, x) in out.iter_mut().zip(v) {
                o.t[i] = x;
            }
        }
        let [s, aa, bb, cc] = out;
        a[j as usize] = Some(opts.store(side, aa.entry()));
        b[j as usize] = Some(opts.store(side, bb.entry()));
        c[j as usize] = Some(opts.store(side, cc.entry()));
        fine = s;
    }
    NonStandardForm {
        spec: *grid,
        a: a.into_iter().map(Option::unwrap).collect(),
        b: b.into_iter().map(Option::unwrap).collect(),
        c: c.into_iter().map(Option::unwrap).collect(),
        coarse: LevelMatrix::from_fn(grid.m, fine.entry()),
        meta: opts.meta(k),
    }
}

/// Oracle builder: assembles the dense operator and takes explicit inner
/// products against Haar functions sampled from their definitions.
pub fn build_nsform_direct(k: &KernelSpec, grid: &GridSpec, opts: &BuildOptions) -> Result<NonStandardForm> {
    let n = grid.n();
    let h = grid.h();
    let t = finest_matrix(k, grid, &opts.quadrature, opts.dense_limit)?;
    let x: Vec<f64> = (0..n).map(|p| grid.midpoint(p)).collect();

    // ⟨u, T v⟩ for u supported on `ru`, v supported on `rv`.
    let bracket = |u: &dyn Fn(usize) -> f64, ru: std::ops::Range<usize>, tv: &[f64]| -> f64 {
        h * ru.map(|p| u(p) * tv[p]).sum::<f64>()
    };
    let apply = |v: &dyn Fn(usize) -> f64, rv: std::ops::Range<usize>| -> Vec<f64> {
        (0..n)
            .map(|p| rv.clone().map(|q| t[p * n + q] * v(q)).sum::<f64>())
            .collect()
    };
    let support = |j: u32, idx: usize| {
        let w = 1usize << (grid.j - j);
        idx * w..(idx + 1) * w
    };

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut c = Vec::new();
    for j in grid.levels() {
        let side = grid.side(j);
        let cols: Vec<[Vec<f64>; 3]> = par::map_range(side, |l| {
            let psi_l = |q: usize| eval_psi(j, l as i64, x[q]);
            let phi_l = |q: usize| eval_phi(j, l as i64, x[q]);
            let t_psi = apply(&psi_l, support(j, l));
            let t_phi = apply(&phi_l, support(j, l));
            let mut out = [vec![0.0; side], vec![0.0; side], vec![0.0; side]];
            for kk in 0..side {
                let psi_k = |p: usize| eval_psi(j, kk as i64, x[p]);
                let phi_k = |p: usize| eval_phi(j, kk as i64, x[p]);
                let sup = support(j, kk);
                let [oa, ob, oc] = &mut out;
                oa[kk] = bracket(&psi_k, sup.clone(), &t_psi);
                ob[kk] = bracket(&psi_k, sup.clone(), &t_phi);
                oc[kk] = bracket(&phi_k, sup, &t_psi);
            }
            out
        });
        a.push(opts.store(side, |kk, l| cols[l][0][kk]));
        b.push(opts.store(side, |kk, l| cols[l][1][kk]));
        c.push(opts.store(side, |kk, l| cols[l][2][kk]));
    }
    let coarse_cols: Vec<Vec<f64>> = par::map_range(grid.m, |l| {
        let phi_l = |q: usize| eval_phi(0, l as i64, x[q]);
        let t_phi = apply(&phi_l, support(0, l));
        (0..grid.m)
            .map(|kk| bracket(&|p| eval_phi(0, kk as i64, x[p]), support(0, kk), &t_phi))
            .collect()
    });
    Ok(NonStandardForm {
        spec: *grid,
        a,
        b,
        c,
        coarse: LevelMatrix::from_fn(grid.m, |kk, l| coarse_cols[l][kk]),
        meta: opts.meta(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_registry_get, KernelParams};

    fn kernel(name: &str, g: &GridSpec) -> KernelSpec {
        kernel_registry_get(name, &KernelParams::default(), g).unwrap()
    }

    #[test]
    fn constant_kernel_has_only_coarse_block() {
        let g = GridSpec::new(2, 3).unwrap();
        let k = kernel_registry_get("constant", &KernelParams { c: Some(2.5), ..Default::default() }, &g).unwrap();
        for f in [
            build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap(),
            build_nsform_direct(&k, &g, &BuildOptions::default()).unwrap(),
        ] {
            for m in f.a.iter().chain(&f.b).chain(&f.c) {
                assert!(m.max_abs() < 1e-13);
            }
            for kk in 0..2 {
                for l in 0..2 {
                    assert!((f.coarse.get(kk, l) - 2.5).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn toeplitz_route_matches_dense_route() {
        let g = GridSpec::new(3, 4).unwrap();
        for name in ["truncated-hilbert", "truncated-abs", "constant"] {
            let k = kernel(name, &g);
            for quad in [Quadrature::midpoint(), Quadrature::refined(3, 2)] {
                let opts = BuildOptions { quadrature: quad, ..Default::default() };
                let fast = pyramid_toeplitz(&k, &g, &opts);
                let slow = pyramid_dense(&k, &g, &opts).unwrap();
                let diff = fast.max_abs_diff(&slow).unwrap();
                assert!(diff <= 1e-14 * slow.max_abs(), "{name}: {diff}");
            }
        }
    }

    #[test]
    fn banded_build_keeps_only_the_band() {
        let g = GridSpec::new(2, 5).unwrap();
        let k = kernel("truncated-hilbert", &g);
        let full = build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap();
        let band = build_nsform_pyramid(&k, &g, &BuildOptions::banded(2)).unwrap();
        assert_eq!(band.max_abs_diff(&full.band_truncate(2).unwrap()).unwrap(), 0.0);
        assert_eq!(band.a[4].half_width(), 3);
    }

    #[test]
    fn dense_limit_is_enforced() {
        let g = GridSpec::new(2, 6).unwrap();
        let k = kernel("separable", &g);
        let opts = BuildOptions { dense_limit: 64, ..Default::default() };
        assert!(matches!(build_nsform_direct(&k, &g, &opts), Err(Error::TooLarge { .. })));
        assert!(matches!(build_nsform_pyramid(&k, &g, &opts), Err(Error::TooLarge { .. })));
    }
}

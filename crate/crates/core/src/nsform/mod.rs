//! Non-standard form of a kernel operator and its smooth / perfect-dyadic split.
//!
//! For every level `j` the form holds `A_j = ⟨ψ_{j,k}, Tψ_{j,ℓ}⟩`,
//! `B_j = ⟨ψ_{j,k}, Tφ_{j,ℓ}⟩`, `C_j = ⟨φ_{j,k}, Tψ_{j,ℓ}⟩`, plus the coarse
//! block `S_0 = ⟨φ_{0,k}, Tφ_{0,ℓ}⟩`. Together they reproduce the discretized
//! operator exactly.

pub(crate) mod build;
mod matrix;
mod serialize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use build::{build_nsform_direct, build_nsform_pyramid, BuildOptions, DEFAULT_DENSE_LIMIT};
pub use matrix::{LevelMatrix, Storage};
pub use serialize::{encoded_len, read_form_file, write_form_file, BlockInfo, FormFile, FormHeader};

use crate::dyadic::GridSpec;
use crate::kernels::Quadrature;
use crate::{Error, Result};

/// Provenance carried alongside a form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormMeta {
    pub kernel: String,
    pub params: BTreeMap<String, f64>,
    pub quadrature: Quadrature,
    /// Shell cap `Rmax` if the form was band-truncated.
    pub band: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonStandardForm {
    pub spec: GridSpec,
    pub a: Vec<LevelMatrix>,
    pub b: Vec<LevelMatrix>,
    pub c: Vec<LevelMatrix>,
    pub coarse: LevelMatrix,
    pub meta: FormMeta,
}

/// The cancellative families: `α` with zero diagonal, `β` with zero row sums,
/// `γ` with zero column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedForm {
    pub spec: GridSpec,
    pub alpha: Vec<LevelMatrix>,
    pub beta: Vec<LevelMatrix>,
    pub gamma: Vec<LevelMatrix>,
}

/// One coefficient per cube and level: the perfect dyadic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalForm {
    pub spec: GridSpec,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitForm {
    pub smooth: ModifiedForm,
    pub dyadic: DiagonalForm,
    pub coarse: LevelMatrix,
    pub meta: FormMeta,
}

/// Largest kept `|k − ℓ|` for a shell cap: entries with `|k − ℓ| < 2^Rmax`.
pub fn band_half_width(rmax: u32) -> usize {
    if rmax >= usize::BITS - 1 {
        usize::MAX / 2
    } else {
        (1usize << rmax) - 1
    }
}

fn check_rmax(rmax: u32) -> Result<()> {
    if rmax == 0 {
        return Err(Error::InvalidArgument("Rmax must be at least 1".into()));
    }
    Ok(())
}

impl NonStandardForm {
    pub fn levels(&self) -> usize {
        self.a.len()
    }

    /// Zero form on `spec` (dense storage).
    pub fn zeros(spec: GridSpec) -> Self {
        let lv = |_| spec.levels().map(|j| LevelMatrix::zeros(spec.side(j))).collect::<Vec<_>>();
        Self {
            spec,
            a: lv(()),
            b: lv(()),
            c: lv(()),
            coarse: LevelMatrix::zeros(spec.m),
            meta: FormMeta::default(),
        }
    }

    /// Largest coefficient magnitude across all families and the coarse block.
    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .map(LevelMatrix::max_abs)
            .fold(self.coarse.max_abs(), f64::max)
    }

    /// `max |self − other|` over all entries.
    pub fn max_abs_diff(&self, other: &NonStandardForm) -> Result<f64> {
        self.spec.check_same(&other.spec)?;
        let diff = |x: &LevelMatrix, y: &LevelMatrix| {
            let w = x.half_width().max(y.half_width());
            (0..x.side())
                .flat_map(|k| (k.saturating_sub(w)..(k + w + 1).min(x.side())).map(move |l| (k, l)))
                .map(|(k, l)| (x.get(k, l) - y.get(k, l)).abs())
                .fold(0.0, f64::max)
        };
        let mut m = diff(&self.coarse, &other.coarse);
        for j in 0..self.levels() {
            m = m
                .max(diff(&self.a[j], &other.a[j]))
                .max(diff(&self.b[j], &other.b[j]))
                .max(diff(&self.c[j], &other.c[j]));
        }
        Ok(m)
    }

    /// Keeps entries with `|k − ℓ| < 2^Rmax`, storing every level banded.
    pub fn band_truncate(&self, rmax: u32) -> Result<NonStandardForm> {
        check_rmax(rmax)?;
        let w = band_half_width(rmax);
        let t = |v: &[LevelMatrix]| v.iter().map(|m| m.truncated(w)).collect();
        let mut meta = self.meta.clone();
        meta.band = Some(meta.band.map_or(rmax, |b| b.min(rmax)));
        Ok(NonStandardForm {
            spec: self.spec,
            a: t(&self.a),
            b: t(&self.b),
            c: t(&self.c),
            coarse: self.coarse.clone(),
            meta,
        })
    }

    /// The adjoint's form: `a ↦ aᵀ`, `b ↦ cᵀ`, `c ↦ bᵀ`, `S_0 ↦ S_0ᵀ`.
    pub fn transpose(&self) -> NonStandardForm {
        let t = |v: &[LevelMatrix]| v.iter().map(LevelMatrix::transpose).collect();
        NonStandardForm {
            spec: self.spec,
            a: t(&self.a),
            b: t(&self.c),
            c: t(&self.b),
            coarse: self.coarse.transpose(),
            meta: self.meta.clone(),
        }
    }
}

/// `α = a` off the diagonal with zero diagonal; `β`, `γ` replace the diagonal
/// by minus the off-diagonal row (resp. column) sum over existing indices.
pub fn modify(nsf: &NonStandardForm) -> ModifiedForm {
    let alpha = nsf
        .a
        .iter()
        .map(|m| m.map_entries(|k, l, v| if k == l { 0.0 } else { v }))
        .collect();
    let beta = nsf
        .b
        .iter()
        .map(|m| {
            let off = off_diagonal_row_sums(m);
            m.map_entries(|k, l, v| if k == l { -off[k] } else { v })
        })
        .collect();
    let gamma = nsf
        .c
        .iter()
        .map(|m| {
            let off = off_diagonal_col_sums(m);
            m.map_entries(|k, l, v| if k == l { -off[l] } else { v })
        })
        .collect();
    ModifiedForm { spec: nsf.spec, alpha, beta, gamma }
}

fn off_diagonal_row_sums(m: &LevelMatrix) -> Vec<f64> {
    (0..m.side())
        .map(|k| m.row_entries(k).filter(|&(l, _)| l != k).map(|(_, v)| v).sum())
        .collect()
}

fn off_diagonal_col_sums(m: &LevelMatrix) -> Vec<f64> {
    (0..m.side())
        .map(|l| m.col_entries(l).filter(|&(k, _)| k != l).map(|(_, v)| v).sum())
        .collect()
}

/// Realizes the decomposition `(a, b, c) = (α, β, γ) + diag(𝐚, 𝐛, 𝐜)`.
pub fn split(nsf: &NonStandardForm) -> SplitForm {
    let dyadic = DiagonalForm {
        spec: nsf.spec,
        a: nsf.a.iter().map(LevelMatrix::diagonal).collect(),
        b: nsf.b.iter().map(LevelMatrix::row_sums).collect(),
        c: nsf.c.iter().map(LevelMatrix::col_sums).collect(),
    };
    SplitForm {
        smooth: modify(nsf),
        dyadic,
        coarse: nsf.coarse.clone(),
        meta: nsf.meta.clone(),
    }
}

impl ModifiedForm {
    pub fn levels(&self) -> usize {
        self.alpha.len()
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let lv = || spec.levels().map(|j| LevelMatrix::zeros(spec.side(j))).collect::<Vec<_>>();
        Self { spec, alpha: lv(), beta: lv(), gamma: lv() }
    }

    /// Keeps entries with `|k − ℓ| < 2^Rmax` and recomputes the `β`/`γ`
    /// diagonals so row and column sums stay zero.
    pub fn band_truncate(&self, rmax: u32) -> Result<ModifiedForm> {
        check_rmax(rmax)?;
        let w = band_half_width(rmax);
        let alpha = self.alpha.iter().map(|m| m.truncated(w)).collect();
        let beta = self
            .beta
            .iter()
            .map(|m| {
                let t = m.truncated(w);
                let off = off_diagonal_row_sums(&t);
                t.map_entries(|k, l, v| if k == l { -off[k] } else { v })
            })
            .collect();
        let gamma = self
            .gamma
            .iter()
            .map(|m| {
                let t = m.truncated(w);
                let off = off_diagonal_col_sums(&t);
                t.map_entries(|k, l, v| if k == l { -off[l] } else { v })
            })
            .collect();
        Ok(ModifiedForm { spec: self.spec, alpha, beta, gamma })
    }

    /// Largest `|row sum of β_j|` and `|column sum of γ_j|` over all levels.
    pub fn cancellation_residual(&self) -> f64 {
        let rows = self.beta.iter().flat_map(|m| m.row_sums());
        let cols = self.gamma.iter().flat_map(|m| m.col_sums());
        rows.chain(cols).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.alpha
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .map(LevelMatrix::max_abs)
            .fold(0.0, f64::max)
    }
}

impl DiagonalForm {
    pub fn zeros(spec: GridSpec) -> Self {
        let lv = || spec.levels().map(|j| vec![0.0; spec.side(j)]).collect::<Vec<_>>();
        Self { spec, a: lv(), b: lv(), c: lv() }
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).chain(&self.c).flatten().all(|&v| v == 0.0)
    }

    /// Adjoint: `𝐛` and `𝐜` exchange roles.
    pub fn transpose(&self) -> DiagonalForm {
        DiagonalForm {
            spec: self.spec,
            a: self.a.clone(),
            b: self.c.clone(),
            c: self.b.clone(),
        }
    }
}

impl SplitForm {
    /// `(α, β, γ) + diag(𝐚, 𝐛, 𝐜)` as a non-standard form (dense or banded
    /// as the smooth part is stored).
    pub fn reassemble(&self) -> NonStandardForm {
        let add_diag = |v: &[LevelMatrix], d: &[Vec<f64>]| {
            v.iter()
                .zip(d)
                .map(|(m, dv)| m.map_entries(|k, l, x| if k == l { x + dv[k] } else { x }))
                .collect()
        };
        NonStandardForm {
            spec: self.smooth.spec,
            a: add_diag(&self.smooth.alpha, &self.dyadic.a),
            b: add_diag(&self.smooth.beta, &self.dyadic.b),
            c: add_diag(&self.smooth.gamma, &self.dyadic.c),
            coarse: self.coarse.clone(),
            meta: self.meta.clone(),
        }
    }
}

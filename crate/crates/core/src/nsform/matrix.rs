use serde::{Deserialize, Serialize};

use crate::par;

/// Storage layout of a per-level coefficient array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "layout")]
pub enum Storage {
    Dense,
    /// Entries with `|k − ℓ| ≤ half_width`, stored row-major with
    /// `2·half_width + 1` slots per row (out-of-range slots are zero).
    Banded { half_width: usize },
}

/// Square coefficient array of one level, dense or banded.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMatrix {
    side: usize,
    storage: Storage,
    data: Vec<f64>,
}

impl LevelMatrix {
    pub fn zeros(side: usize) -> Self {
        Self { side, storage: Storage::Dense, data: vec![0.0; side * side] }
    }

    pub fn zeros_banded(side: usize, half_width: usize) -> Self {
        let half_width = half_width.min(side.saturating_sub(1));
        Self {
            side,
            storage: Storage::Banded { half_width },
            data: vec![0.0; side * (2 * half_width + 1)],
        }
    }

    pub fn from_dense(side: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), side * side, "dense data length");
        Self { side, storage: Storage::Dense, data }
    }

    pub(crate) fn from_raw(side: usize, storage: Storage, data: Vec<f64>) -> Option<Self> {
        let expect = match storage {
            Storage::Dense => side * side,
            Storage::Banded { half_width } => side * (2 * half_width + 1),
        };
        (data.len() == expect).then_some(Self { side, storage, data })
    }

    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let mut m = Self::zeros(side);
        par::for_each_row(&mut m.data, side, |k, row| {
            row.iter_mut().enumerate().for_each(|(l, v)| *v = f(k, l))
        });
        m
    }

    pub fn from_fn_banded(side: usize, half_width: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let mut m = Self::zeros_banded(side, half_width);
        let w = m.half_width();
        par::for_each_row(&mut m.data, 2 * w + 1, |k, row| {
            for (slot, v) in row.iter_mut().enumerate() {
                if let Some(l) = (k + slot).checked_sub(w).filter(|&l| l < side) {
                    *v = f(k, l);
                }
            }
        });
        m
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Largest stored `|k − ℓ|`.
    pub fn half_width(&self) -> usize {
        match self.storage {
            Storage::Dense => self.side.saturating_sub(1),
            Storage::Banded { half_width } => half_width,
        }
    }

    #[inline]
    fn index(&self, k: usize, l: usize) -> Option<usize> {
        match self.storage {
            Storage::Dense => Some(k * self.side + l),
            Storage::Banded { half_width } => {
                (k.abs_diff(l) <= half_width).then(|| k * (2 * half_width + 1) + l + half_width - k)
            }
        }
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.index(k, l).map_or(0.0, |i| self.data[i])
    }

    /// Panics if `(k, ℓ)` lies outside the stored band.
    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        let i = self.index(k, l).expect("entry outside band");
        self.data[i] = v;
    }

    /// Column range of row `k` that is stored.
    #[inline]
    pub fn row_range(&self, k: usize) -> std::ops::Range<usize> {
        let w = self.half_width();
        k.saturating_sub(w)..(k + w + 1).min(self.side)
    }

    /// Stored entries `(ℓ, value)` of row `k`.
    pub fn row_entries(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(k).map(move |l| (l, self.get(k, l)))
    }

    /// Stored entries `(k, value)` of column `l`.
    pub fn col_entries(&self, l: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(l).map(move |k| (k, self.get(k, l)))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.side).map(|k| self.get(k, k)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.side).map(|k| self.row_entries(k).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.side).map(|l| self.col_entries(l).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y += M·x`.
    pub fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.side);
        debug_assert_eq!(y.len(), self.side);
        match self.storage {
            Storage::Dense => par::add_indexed(y, |k| {
                let row = &self.data[k * self.side..(k + 1) * self.side];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }),
            Storage::Banded { half_width: w } => {
                let len = 2 * w + 1;
                par::add_indexed(y, |k| {
                    let row = &self.data[k * len..(k + 1) * len];
                    let lo = k.saturating_sub(w);
                    let hi = (k + w + 1).min(self.side);
                    let off = lo + w - k;
                    row[off..off + hi - lo]
                        .iter()
                        .zip(&x[lo..hi])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
            }
        }
    }

    /// `y += Mᵀ·x`.
    pub fn matvec_t_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.side);
        debug_assert_eq!(y.len(), self.side);
        match self.storage {
            Storage::Dense => par::add_indexed(y, |l| {
                (0..self.side).map(|k| self.data[k * self.side + l] * x[k]).sum::<f64>()
            }),
            Storage::Banded { half_width: w } => {
                let len = 2 * w + 1;
                par::add_indexed(y, |l| {
                    self.row_range(l)
                        .map(|k| self.data[k * len + l + w - k] * x[k])
                        .sum::<f64>()
                })
            }
        }
    }

    pub fn transpose(&self) -> LevelMatrix {
        match self.storage {
            Storage::Dense => LevelMatrix::from_fn(self.side, |k, l| self.get(l, k)),
            Storage::Banded { half_width } => {
                LevelMatrix::from_fn_banded(self.side, half_width, |k, l| self.get(l, k))
            }
        }
    }

    /// Copy with every entry `|k − ℓ| > half_width` dropped, stored banded.
    pub fn truncated(&self, half_width: usize) -> LevelMatrix {
        let w = half_width.min(self.half_width());
        LevelMatrix::from_fn_banded(self.side, w, |k, l| self.get(k, l))
    }

    /// Entrywise map over stored entries.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync + Send) -> LevelMatrix {
        match self.storage {
            Storage::Dense => LevelMatrix::from_fn(self.side, |k, l| f(k, l, self.get(k, l))),
            Storage::Banded { half_width } => {
                LevelMatrix::from_fn_banded(self.side, half_width, |k, l| f(k, l, self.get(k, l)))
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.side * self.side];
        for k in 0..self.side {
            for (l, v) in self.row_entries(k) {
                out[k * self.side + l] = v;
            }
        }
        out
    }

    /// Sum of absolute values of row `k` plus column `k`.
    pub fn row_col_abs(&self, k: usize) -> f64 {
        self.row_entries(k).map(|(_, v)| v.abs()).sum::<f64>()
            + self.col_entries(k).map(|(_, v)| v.abs()).sum::<f64>()
    }

    /// `sup_k Σ_ℓ |m_{k,ℓ}| + |m_{ℓ,k}|`.
    pub fn schur_sup(&self) -> f64 {
        (0..self.side).map(|k| self.row_col_abs(k)).fold(0.0, f64::max)
    }
}

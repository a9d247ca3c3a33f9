//! Haar-basis non-standard form of singular integral operators.
//!
//! The crate discretizes a kernel operator on the dyadic grid of `[0, M)` at
//! mesh `2^-J`, builds its per-level coefficient families `(a, b, c)` by the
//! Haar pyramid, splits them into a cancellative "smooth" part `(α, β, γ)` and
//! a diagonal perfect-dyadic part `(𝐚, 𝐛, 𝐜)`, and applies either part in
//! `O(N)` per retained band. The [`analysis`] and [`tb`] modules measure the
//! quantities that control boundedness of the smooth part and the local
//! testing conditions of the operator.
//!
//! Inner loops run on rayon when the `parallel` feature is enabled (default)
//! and sequentially otherwise.

pub mod analysis;
pub mod dyadic;
mod error;
pub mod fastapply;
pub mod io;
pub mod kernels;
pub mod nsform;
pub mod par;
pub mod tb;

pub use dyadic::{DyadicCube, GridFunction, GridSpec, WaveletCoeffs};
pub use error::{Error, Result};
pub use fastapply::{ApplyPlan, ComponentSet, DenseOperator, LinearOp};
pub use kernels::{KernelKind, KernelSpec, Quadrature};
pub use nsform::{DiagonalForm, LevelMatrix, ModifiedForm, NonStandardForm, SplitForm};

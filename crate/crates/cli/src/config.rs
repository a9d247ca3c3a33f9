use std::path::{Path, PathBuf};

use haarbcr::fastapply::DEFAULT_SEED;
use haarbcr::kernels::{kernel_registry_get, KernelParams, Quadrature};
use haarbcr::tb::Exponent;
use haarbcr::{GridSpec, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every run setting. Config files hold a flat JSON object with these keys;
/// command-line flags override keys of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kernel: String,
    /// Value of the constant kernel.
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub table: Option<PathBuf>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub j: u32,
    pub refine: usize,
    pub cutoff: usize,
    /// Shell cap `Rmax`; entries with `|k − ℓ| < 2^Rmax` are kept.
    pub band: Option<u32>,
    pub p: Exponent,
    pub q: Exponent,
    /// Bound for the testing-condition constants.
    #[serde(rename = "C")]
    pub c_bound: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub form: Option<PathBuf>,
    pub components: String,
    /// `nsf` or `dense`.
    pub mode: String,
    pub bsystem: Option<PathBuf>,
    pub bench_levels: Vec<u32>,
    pub bench_bands: Vec<u32>,
    pub bench_min_ms: u64,
    #[serde(rename = "atom_M")]
    pub atom_m: usize,
    #[serde(rename = "atom_J")]
    pub atom_j: u32,
    pub sample_level: u32,
    pub epsilon: f64,
    pub power_iters: usize,
    pub tol_oracle: f64,
    pub tol_reconstruction: f64,
    pub tol_cancellation: f64,
    pub tol_support: f64,
    pub decay_range: [usize; 2],
    pub decay_s: [f64; 2],
    pub gamma_log2: [f64; 2],
    pub wr_spread: f64,
    pub atom_slope: f64,
    pub t1_stability: f64,
    pub record_timing: bool,
}

impl Default for Config {
    fn default() -> Self {
        let two = Exponent::new(2.0).expect("2 is a valid exponent");
        Self {
            kernel: "truncated-hilbert".into(),
            c: None,
            delta: None,
            u: Vec::new(),
            v: Vec::new(),
            table: None,
            m: 2,
            j: 8,
            refine: 1,
            cutoff: 0,
            band: None,
            p: two,
            q: two,
            c_bound: 10.0,
            seed: DEFAULT_SEED,
            threads: 0,
            out: None,
            input: None,
            form: None,
            components: "full".into(),
            mode: "nsf".into(),
            bsystem: None,
            bench_levels: vec![9, 10, 11, 12, 13],
            bench_bands: vec![3],
            bench_min_ms: 50,
            atom_m: 16,
            atom_j: 5,
            sample_level: 4,
            epsilon: 0.5,
            power_iters: 200,
            tol_oracle: 1e-12,
            tol_reconstruction: 1e-10,
            tol_cancellation: 1e-12,
            tol_support: 1e-10,
            decay_range: [2, 64],
            decay_s: [0.8, 1.2],
            gamma_log2: [0.5, 1.5],
            wr_spread: 4.0,
            atom_slope: -1.7,
            t1_stability: 0.1,
            record_timing: false,
        }
    }
}

pub const THREADS_ENV: &str = "HAARBCR_THREADS";

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))
            }
        }
    }

    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            self.threads = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.m < 1 || self.j < 1 {
            return bad(format!("M and J must be at least 1 (got M={}, J={})", self.m, self.j));
        }
        if self.band == Some(0) {
            return bad("band (Rmax) must be at least 1".into());
        }
        if !(self.c_bound.is_finite() && self.c_bound >= 0.0) {
            return bad("C must be a finite non-negative number".into());
        }
        if self.power_iters == 0 {
            return bad("power_iters must be at least 1".into());
        }
        if !matches!(self.mode.as_str(), "nsf" | "dense") {
            return bad(format!("mode must be `nsf` or `dense`, got `{}`", self.mode));
        }
        haarbcr::ComponentSet::parse(&self.components).map_err(|e| CliError::Usage(e.to_string()))?;
        self.grid()?;
        self.kernel_on(&self.grid()?)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.m, self.j).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature::refined(self.refine, self.cutoff)
    }

    pub fn params(&self) -> KernelParams {
        KernelParams {
            c: self.c,
            delta: self.delta,
            u: self.u.clone(),
            v: self.v.clone(),
            table: self.table.clone(),
        }
    }

    /// The configured kernel on `grid`.
    pub fn kernel_on(&self, grid: &GridSpec) -> Result<KernelSpec, CliError> {
        kernel_registry_get(&self.kernel, &self.params(), grid).map_err(CliError::from)
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use haarbcr::analysis::{
    atom_decompose_u, compute_gamma_r, counterexample_w1, decay_fit, level_matrix_norm, shell_count,
    shell_decompose, wr_norm_scan, CheckRecord, Family, ShellFamilies,
};
use haarbcr::fastapply::{
    bench_apply, random_values, write_bench_csv, BenchOptions, PowerOptions,
};
use haarbcr::kernels::check_kernel;
use haarbcr::nsform::{
    build_nsform_direct, build_nsform_pyramid, read_form_file, split, write_form_file, BuildOptions, FormFile,
    DEFAULT_DENSE_LIMIT,
};
use haarbcr::tb::{check_t1_dyadic, make_bsystem_indicator, run_tb_report, BSystem};
use haarbcr::{
    io, par, ApplyPlan, ComponentSet, DenseOperator, DyadicCube, GridFunction, GridSpec, LinearOp, NonStandardForm,
    SplitForm,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

/// Largest `N` on which the direct (per-coefficient) build is run as an oracle.
const ORACLE_MAX_N: usize = 256;
const RANDOM_INPUTS: usize = 20;
const SUPPORT_SAMPLES: usize = 100;
const ATOM_RECONSTRUCTION_TOL: f64 = 1e-12;
const SCHUR_SLACK: f64 = 1e-9;

pub fn run(config: &Config, cmd: fn(&Config) -> Result<(), CliError>) -> Result<(), CliError> {
    par::init_threads(config.threads);
    cmd(config)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn build_options(config: &Config) -> BuildOptions {
    BuildOptions { quadrature: config.quadrature(), band: config.band, dense_limit: DEFAULT_DENSE_LIMIT }
}

fn power_options(config: &Config) -> PowerOptions {
    PowerOptions { max_iters: config.power_iters, seed: config.seed, ..PowerOptions::default() }
}

/// Writes `bytes` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            std::fs::write(p, bytes).map_err(|e| io_err(p, e))
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Loads a form file, or builds the non-standard form from the config.
fn load_or_build(config: &Config) -> Result<(NonStandardForm, Option<SplitForm>), CliError> {
    match &config.form {
        Some(path) => match read_form_file(path)?.1 {
            FormFile::NonStandard(nsf) => Ok((nsf, None)),
            FormFile::Split(sf) => Ok((sf.reassemble(), Some(sf))),
        },
        None => {
            let grid = config.grid()?;
            let k = config.kernel_on(&grid)?;
            Ok((build_nsform_pyramid(&k, &grid, &build_options(config))?, None))
        }
    }
}

#[derive(Serialize)]
struct BuildReport {
    grid: GridSpec,
    kernel: String,
    band: Option<u32>,
    files: Vec<BuiltFile>,
}

#[derive(Serialize)]
struct BuiltFile {
    kind: &'static str,
    path: PathBuf,
    bytes: u64,
    checksum: String,
}

pub fn build(config: &Config) -> Result<(), CliError> {
    let grid = config.grid()?;
    let k = config.kernel_on(&grid)?;
    let nsf = build_nsform_pyramid(&k, &grid, &build_options(config))?;
    let sf = split(&nsf);
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut files = Vec::new();
    for (kind, name, form) in [
        ("nsf", "nsf.hbf", FormFile::NonStandard(nsf)),
        ("split", "split.hbf", FormFile::Split(sf)),
    ] {
        let path = dir.join(name);
        let checksum = write_form_file(&path, &form)?;
        let bytes = std::fs::metadata(&path).map_err(|e| io_err(&path, e))?.len();
        files.push(BuiltFile { kind, path, bytes, checksum });
    }
    let report = BuildReport { grid, kernel: k.name.clone(), band: config.band, files };
    emit(None, &to_json(&report)?)
}

pub fn apply(config: &Config) -> Result<(), CliError> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("apply needs --input".into()))?;
    let out = config
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("apply needs --out".into()))?;
    let components = ComponentSet::parse(&config.components)?;
    let values = io::read_values(input)?;
    let op: Box<dyn LinearOp> = if config.mode == "dense" {
        if components != ComponentSet::ALL {
            return Err(CliError::Usage("dense mode applies the full operator only".into()));
        }
        let grid = config.grid()?;
        let k = config.kernel_on(&grid)?;
        Box::new(DenseOperator::from_kernel(&k, &grid, &config.quadrature(), DEFAULT_DENSE_LIMIT)?)
    } else {
        let (nsf, sf) = load_or_build(config)?;
        if components == ComponentSet::ALL && sf.is_none() {
            Box::new(ApplyPlan::full(nsf))
        } else {
            let sf = sf.unwrap_or_else(|| split(&nsf));
            Box::new(ApplyPlan::split(sf, components))
        }
    };
    let f = GridFunction::new(op.grid(), values)?;
    io::write_values(out, &op.apply(&f.values))?;
    Ok(())
}

pub fn bench(config: &Config) -> Result<(), CliError> {
    let grid = config.grid()?;
    let k = config.kernel_on(&grid)?;
    let opts = BenchOptions {
        min_time: Duration::from_millis(config.bench_min_ms),
        seed: config.seed,
        ..BenchOptions::default()
    };
    let rows = bench_apply(&k, config.m, &config.bench_levels, &config.bench_bands, &config.quadrature(), &opts)?;
    let mut bytes = Vec::new();
    write_bench_csv(&mut bytes, &rows)?;
    emit(config.out.as_deref(), &bytes)
}

fn load_bsystem(config: &Config, grid: GridSpec) -> Result<BSystem, CliError> {
    match &config.bsystem {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            Ok(BSystem::from_json(&text, grid)?)
        }
        None => Ok(make_bsystem_indicator(grid, grid.levels(), config.p, config.q)?),
    }
}

pub fn tb(config: &Config) -> Result<(), CliError> {
    let (nsf, sf) = load_or_build(config)?;
    let grid = nsf.spec;
    let bs = load_bsystem(config, grid)?;
    let sf = sf.unwrap_or_else(|| split(&nsf));
    let t = ApplyPlan::full(nsf);
    let report = run_tb_report(&bs, &t, &sf, config.c_bound, &power_options(config))?;
    emit(config.out.as_deref(), &to_json(&report)?)?;
    if report.pass() {
        Ok(())
    } else {
        Err(CliError::Check(format!("T(b) conditions not met with C = {}", config.c_bound)))
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a Config,
    checks: Vec<CheckRecord>,
    pass: bool,
    timing: Option<Vec<(String, f64)>>,
    artifacts: Vec<PathBuf>,
}

/// Collects checks and per-stage wall time.
struct Suite {
    checks: Vec<CheckRecord>,
    timing: Vec<(String, f64)>,
    clock: Instant,
}

impl Suite {
    fn new() -> Self {
        Self { checks: Vec::new(), timing: Vec::new(), clock: Instant::now() }
    }

    fn push(&mut self, c: CheckRecord) {
        self.checks.push(c);
    }

    fn stage(&mut self, name: &str) {
        self.timing.push((name.into(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn not_applicable(&mut self, name: &str, why: &str) {
        self.checks.push(CheckRecord::flag(name, f64::NAN, true, &format!("not applicable: {why}")));
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// `num / den` with `0 / 0 = 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Grid for the direct-build oracle: the configured one, coarsened until `N ≤ ORACLE_MAX_N`.
fn oracle_grid(grid: GridSpec) -> GridSpec {
    let mut j = grid.j;
    while j > 1 && grid.m << j > ORACLE_MAX_N {
        j -= 1;
    }
    GridSpec::new(grid.m, j).expect("coarsened grid stays valid")
}

pub fn verify(config: &Config) -> Result<(), CliError> {
    let mut s = Suite::new();
    let mut artifacts = Vec::new();
    if let Some(p) = &config.form {
        artifacts.push(p.clone());
    }
    let (nsf, loaded_split) = load_or_build(config)?;
    let grid = nsf.spec;
    let quad = config.quadrature();
    let k = config.kernel_on(&grid)?;
    let sf = loaded_split.unwrap_or_else(|| split(&nsf));
    let mf = &sf.smooth;
    let opts = power_options(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    s.stage("build");

    let kc = check_kernel(&k, &grid, config.sample_level, config.epsilon, &quad)?;
    s.push(CheckRecord::flag("kernel_local_boundedness", f64::NAN, kc.locally_bounded, "finite everywhere"));
    s.push(CheckRecord::flag("kernel_size", kc.size.value, kc.size.pass, &format!("<= {:e}", k.c0)));
    let reg_threshold = match kc.regularity.declared {
        Some(c) => format!("<= {c:e}"),
        None => "finite".into(),
    };
    s.push(CheckRecord::flag("kernel_regularity", kc.regularity.value, kc.regularity.pass, &reg_threshold));
    let wi = kc.weak_integral;
    s.push(CheckRecord::flag("kernel_weak_adjacent", wi.adjacent, wi.adjacent.is_finite(), "finite"));
    s.push(CheckRecord::flag("kernel_weak_separated", wi.separated, wi.separated.is_finite(), "finite"));
    s.stage("kernel conditions");

    let (og, ok) = match config.kernel_on(&oracle_grid(grid)) {
        Ok(ok) => (oracle_grid(grid), ok),
        Err(_) => (grid, k.clone()),
    };
    let plain = BuildOptions { quadrature: quad, ..BuildOptions::default() };
    let p = build_nsform_pyramid(&ok, &og, &plain)?;
    let d = build_nsform_direct(&ok, &og, &plain)?;
    s.push(CheckRecord::at_most("oracle_equivalence", ratio(p.max_abs_diff(&d)?, d.max_abs()), config.tol_oracle));
    s.stage("oracle");

    if config.band.is_some() {
        s.not_applicable("reconstruction_full", "form is band-truncated");
        s.not_applicable("reconstruction_split", "form is band-truncated");
    } else {
        let dense = DenseOperator::from_kernel(&k, &grid, &quad, DEFAULT_DENSE_LIMIT)?;
        let full = ApplyPlan::full(nsf.clone());
        let parts = ApplyPlan::split(sf.clone(), ComponentSet::ALL);
        let (mut wf, mut ws) = (0.0f64, 0.0f64);
        for _ in 0..RANDOM_INPUTS {
            let f = random_values(grid.n(), &mut rng);
            let want = dense.apply(&f);
            wf = wf.max(rel_diff(&full.apply(&f), &want));
            ws = ws.max(rel_diff(&parts.apply(&f), &want));
        }
        s.push(CheckRecord::at_most("reconstruction_full", wf, config.tol_reconstruction));
        s.push(CheckRecord::at_most("reconstruction_split", ws, config.tol_reconstruction));
    }
    s.stage("reconstruction");

    let cancel = ratio(mf.cancellation_residual(), nsf.max_abs());
    s.push(CheckRecord::at_most("cancellation", cancel, config.tol_cancellation));

    let mut leak = 0.0f64;
    for _ in 0..SUPPORT_SAMPLES {
        let j = rng.random_range(0..grid.j);
        let cube = DyadicCube::new(j, rng.random_range(0..grid.side(j)));
        let cells = cube.cells(&grid);
        let local = random_values(cells.len(), &mut rng);
        let mean = local.iter().sum::<f64>() / local.len() as f64;
        let mut f = vec![0.0; grid.n()];
        f[cells.clone()].iter_mut().zip(&local).for_each(|(v, x)| *v = x - mean);
        let out = sf.dyadic.apply(&f);
        let norm = GridFunction::new(grid, f)?.norm();
        let outside = out
            .iter()
            .enumerate()
            .filter(|(p, _)| !cells.contains(p))
            .fold(0.0f64, |a, (_, v)| a.max(v.abs()));
        leak = leak.max(outside / norm);
    }
    s.push(CheckRecord::at_most("dyadic_support", leak, config.tol_support));
    s.stage("cancellation and support");

    let available = grid.side(grid.j - 1).saturating_sub(1);
    let (lo, hi) = (config.decay_range[0], config.decay_range[1].min(available));
    match decay_fit(&nsf, Family::Combined, (lo, hi)) {
        Ok(fit) if fit.degenerate => {
            s.push(CheckRecord::flag("decay_exponent", f64::NAN, true, "degenerate: envelope vanishes"))
        }
        Ok(fit) => {
            let v = fit.s_hat.unwrap_or(f64::NAN);
            s.push(CheckRecord::within("decay_exponent", v, config.decay_s[0], config.decay_s[1]));
        }
        Err(e) => s.not_applicable("decay_exponent", &e.to_string()),
    }
    s.stage("decay fit");

    let shells = shell_decompose(mf, ShellFamilies::default());
    let stats = compute_gamma_r(&shells);
    let count = shell_count(&grid) as usize;
    for r in 2..=5usize {
        let name = format!("gamma_decay_R{r}");
        if r + 2 > count {
            s.not_applicable(&name, &format!("shell {} reaches the domain edge ({count} shells)", r + 1));
            continue;
        }
        let (a, b) = (stats[r - 1].gamma, stats[r].gamma);
        if a == 0.0 && b == 0.0 {
            s.push(CheckRecord::flag(&name, 0.0, true, "degenerate: shells vanish"));
        } else {
            s.push(CheckRecord::within(&name, (a / b).log2(), config.gamma_log2[0], config.gamma_log2[1]));
        }
    }
    let upto = count.min(5);
    let scan = wr_norm_scan(&shells[..upto], grid, &opts)?;
    let ratios: Vec<f64> = scan.iter().filter_map(|b| b.ratio).filter(|r| r.is_finite() && *r > 0.0).collect();
    if ratios.len() < 2 {
        s.push(CheckRecord::flag("shell_norm_spread", f64::NAN, true, "degenerate: fewer than two nonzero shells"));
    } else {
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        s.push(CheckRecord::at_most("shell_norm_spread", max / min, config.wr_spread));
    }
    let mut excess = f64::NEG_INFINITY;
    for (shell, st) in shells.iter().zip(&stats) {
        for m in &shell.gamma {
            excess = excess.max(level_matrix_norm(m, &opts) - st.gamma * (1.0 + SCHUR_SLACK));
        }
    }
    s.push(CheckRecord::at_most("shell_level_schur_bound", excess, 0.0));
    s.stage("shell scans");

    match GridSpec::new(config.atom_m, config.atom_j).and_then(|ag| config_kernel(config, &ag).map(|k| (ag, k))) {
        Ok((ag, ak)) => {
            let amf = split(&build_nsform_pyramid(&ak, &ag, &BuildOptions { quadrature: quad, ..Default::default() })?).smooth;
            let dec = atom_decompose_u(&amf, &GridFunction::psi(ag, 0, 0))?;
            match dec.slope(1) {
                Some(v) => s.push(CheckRecord::at_most("atom_slope", v, config.atom_slope)),
                None => s.push(CheckRecord::flag("atom_slope", f64::NAN, true, "degenerate: image vanishes")),
            }
            s.push(CheckRecord::at_most("atom_reconstruction", dec.reconstruction_error, ATOM_RECONSTRUCTION_TOL));
            s.push(CheckRecord::at_most("atom_support_leak", dec.support_leak, 0.0));
        }
        Err(e) => {
            for name in ["atom_slope", "atom_reconstruction", "atom_support_leak"] {
                s.not_applicable(name, &e.to_string());
            }
        }
    }
    s.stage("atom");

    let cg = GridSpec::new(grid.m.max(2), grid.j)?;
    let rec = counterexample_w1(cg)?;
    s.push(CheckRecord::flag("translation_counterexample", rec.deviation, rec.pass, "exact +1/-1 image, zero total integral"));

    let coarse = GridSpec::new(grid.m, grid.j - 1).ok().filter(|g| g.j >= 1);
    match coarse.map(|g| config_kernel(config, &g).map(|k| (g, k))) {
        Some(Ok((g, ck))) if config.form.is_none() => {
            let csf = split(&build_nsform_pyramid(&ck, &g, &BuildOptions { quadrature: quad, ..Default::default() })?);
            let a = check_t1_dyadic(&csf.dyadic, g.levels())?.sup;
            let b = check_t1_dyadic(&sf.dyadic, grid.levels())?.sup;
            let change = ratio((b - a).abs(), a);
            s.push(CheckRecord::at_most("t1_stability", change, config.t1_stability));
        }
        Some(Ok(_)) => s.not_applicable("t1_stability", "form loaded from file"),
        Some(Err(e)) => s.not_applicable("t1_stability", &e.to_string()),
        None => s.not_applicable("t1_stability", "needs J >= 2"),
    }
    s.stage("counterexample and T(1)");

    let bs = make_bsystem_indicator(grid, grid.levels(), config.p, config.q)?;
    let t = ApplyPlan::full(nsf);
    let rep = run_tb_report(&bs, &t, &sf, config.c_bound, &opts)?;
    let held = rep.cubes.iter().filter(|c| c.reduction_holds).count();
    s.push(CheckRecord::flag(
        "reduction_inequality",
        held as f64,
        rep.reduction_holds,
        &format!("holds on all {} cubes", rep.cubes.len()),
    ));
    s.push(CheckRecord::flag("exponent_constraint", config.p.reciprocal() + config.q.reciprocal(), rep.exponent_constraint, "<= 1"));
    s.stage("reduction");

    let pass = s.checks.iter().all(|c| c.pass);
    let report = RunReport {
        config,
        pass,
        checks: s.checks,
        timing: config.record_timing.then_some(s.timing),
        artifacts,
    };
    emit(config.out.as_deref(), &to_json(&report)?)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check("one or more checks failed".into()))
    }
}

fn config_kernel(config: &Config, grid: &GridSpec) -> haarbcr::Result<haarbcr::KernelSpec> {
    haarbcr::kernels::kernel_registry_get(&config.kernel, &config.params(), grid)
}

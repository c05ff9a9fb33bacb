//! Job orchestration behind the `adsprop` binary.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::boundary_symbol::{validate_hypothesis, BoundarySymbol};
use crate::config::JobConfig;
use crate::error::{Error, Result, StageExt};
use crate::evolution::{fd_green, fd_pairing, pull_back_two_point, DeformationProfile, FdGrid};
use crate::geometry::{ModelKind, SpacetimeModel};
use crate::io::{csv_bytes, emit_plot_data, sha256_hex, write_json, Table};
use crate::mode_spectrum::{check_lower_bound, compute_spectrum, theta_sweep, SpectralData, SpectrumSettings};
use crate::propagators::{
    build_kernel, prepare, random_test_functions, smear, smear_prepared, spatial_slice, KernelKind, KernelSum, RadialProfile, TestFunction,
    TimeProfile, ZonalProfile,
};
use crate::verify::{green_convergence, positivity_link, time_slice_residual, TwistingFunction};

pub const OUT_ENV: &str = "ADSPROP_OUT";

#[derive(Debug, Parser)]
#[command(name = "adsprop", version, about = "Propagators and two-point functions on static AdS with boundary conditions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: JobKind,
    /// TOML job configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory (overrides ADSPROP_OUT and the config)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// seed for randomized batteries (overrides the config)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// multiplies every pass/fail tolerance
    #[arg(long = "tolerance-scale", global = true)]
    pub tolerance_scale: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// eigenvalues and trace coefficients per ℓ
    Spectrum,
    /// kernel slices and the CCR/positivity battery
    Kernel,
    /// the default verification battery
    Verify,
    /// wavepacket bounce off the boundary
    Bounce,
    /// deformation pullback on the 1+1 half strip
    Deform,
    /// lowest eigenvalue against a Robin θ sweep
    Sweep,
}

impl JobKind {
    pub fn name(&self) -> &'static str {
        match self {
            JobKind::Spectrum => "spectrum",
            JobKind::Kernel => "kernel",
            JobKind::Verify => "verify",
            JobKind::Bounce => "bounce",
            JobKind::Deform => "deform",
            JobKind::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub job: JobKind,
    pub out: PathBuf,
    pub seed: u64,
    pub tolerance_scale: f64,
}

impl RunOptions {
    /// Flags win over ADSPROP_OUT, which wins over the config.
    pub fn resolve(cli: &Cli, config: &JobConfig) -> Self {
        let out = cli
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| config.job.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        RunOptions {
            job: cli.command,
            out,
            seed: cli.seed.unwrap_or(config.job.seed),
            tolerance_scale: cli.tolerance_scale.unwrap_or(config.job.tolerance_scale),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitReport {
    pub job: JobKind,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
}

impl ExitReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Ctx<'a> {
    cfg: &'a JobConfig,
    opts: &'a RunOptions,
    checks: Vec<Check>,
    tables: Vec<Table>,
    warnings: Vec<String>,
    files: Vec<FileEntry>,
}

impl Ctx<'_> {
    /// value ≤ tolerance·scale
    fn at_most(&mut self, name: &str, value: f64, tolerance: f64) {
        let tol = tolerance * self.opts.tolerance_scale;
        self.checks.push(Check { name: name.into(), value, tolerance: tol, passed: value <= tol });
    }

    /// value ≥ bound (bound scaled when negative)
    fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        let b = if bound < 0.0 { bound * self.opts.tolerance_scale } else { bound };
        self.checks.push(Check { name: name.into(), value, tolerance: b, passed: value >= b });
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.checks.push(Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, tolerance: 1.0, passed: ok });
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        write_json(&self.opts.out, name, self.opts.seed, body)?;
        Ok(())
    }

    fn spectrum(&self, model: &SpacetimeModel, l_max: usize) -> Result<SpectralData> {
        let settings = SpectrumSettings { l_max, ..self.cfg.spectrum_settings()? };
        compute_spectrum(model, &self.cfg.symbol, &settings)
    }

    fn kernel(&self, data: Arc<SpectralData>, kind: KernelKind) -> Result<KernelSum> {
        Ok(build_kernel(data, kind)?
            .with_regulator(self.cfg.truncation.epsilon)
            .with_time_grid(self.cfg.time_grid()))
    }
}

/// Runs one job, writes its files and `<job>_report.json`.
pub fn run(cfg: &JobConfig, opts: &RunOptions) -> Result<ExitReport> {
    let mut ctx = Ctx { cfg, opts, checks: vec![], tables: vec![], warnings: vec![], files: vec![] };
    let stage = opts.job.name();
    validate_hypothesis(&cfg.symbol.into()).stage("symbol")?;
    match opts.job {
        JobKind::Spectrum => spectrum_job(&mut ctx),
        JobKind::Kernel => kernel_job(&mut ctx),
        JobKind::Verify => verify_job(&mut ctx),
        JobKind::Bounce => bounce_job(&mut ctx),
        JobKind::Deform => deform_job(&mut ctx),
        JobKind::Sweep => sweep_job(&mut ctx),
    }
    .stage(stage)?;
    let (written, warning) = emit_plot_data(&opts.out, &ctx.tables, opts.seed).stage("output")?;
    ctx.warnings.extend(warning);
    for (path, sha) in written {
        let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        ctx.files.push(FileEntry { file, sha256: sha });
    }
    let report = ExitReport {
        job: opts.job,
        seed: opts.seed,
        tolerance_scale: opts.tolerance_scale,
        checks: ctx.checks,
        files: ctx.files,
        warnings: ctx.warnings,
    };
    write_json(&opts.out, &format!("{stage}_report"), opts.seed, &report).stage("output")?;
    Ok(report)
}

fn spectrum_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.spacetime()?;
    let data = ctx.spectrum(&model, ctx.cfg.truncation.l_max)?;
    let mut t = Table::new("spectrum", &["ell", "k", "omega_sq", "omega", "a", "b", "nodes"]);
    for m in &data.modes {
        for (k, p) in m.pairs.iter().enumerate() {
            t.push(vec![m.ell as f64, k as f64, p.omega_sq, p.omega(), p.a, p.b, p.nodes as f64]);
        }
    }
    let shown = data.mode(0).map_or(0, |m| m.pairs.len().min(5));
    let mut cols = vec!["rho".to_string()];
    cols.extend((0..shown).map(|k| format!("psi_{k}")));
    let mut ef = Table { kind: "eigenfunctions_l0".into(), columns: cols, rows: vec![] };
    if let Some(m) = data.mode(0) {
        let stride = (data.chart.intervals / 400).max(1);
        for i in (0..data.chart.len()).step_by(stride) {
            let mut row = vec![data.chart.rho(i)];
            row.extend(m.pairs.iter().take(shown).map(|p| p.func.psi[i]));
            ef.push(row);
        }
    }
    let checksum = sha256_hex(&csv_bytes(&t, ctx.opts.seed)?);
    ctx.tables.push(t);
    ctx.tables.push(ef);
    let ortho = data.orthonormality_defect(data.k_max.min(10));
    ctx.at_most("orthonormality", ortho, 1e-8);
    match check_lower_bound(&data) {
        Ok(w2) => ctx.at_least("lowest_omega_sq", w2, f64::NEG_INFINITY),
        Err(e @ Error::NegativeMode { .. }) => ctx.warnings.push(format!("{e}; two-point functions are unavailable")),
        Err(e) => return Err(e),
    }
    ctx.json("spectrum", &json!({ "spectrum": data, "checksums": { "spectrum.csv": checksum } }))
}

fn pair_battery(ctx: &Ctx, dim: usize) -> Vec<(TestFunction, TestFunction)> {
    let fs = random_test_functions(dim, 2 * ctx.cfg.job.battery, ctx.opts.seed);
    fs.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect()
}

/// Smallest eigenvalue of the Hermitian matrix [[a, b], [conj b, d]] over its trace.
pub fn gram_min_eigen(a: f64, b: Complex64, d: f64) -> f64 {
    let half = 0.5 * (a + d);
    (half - (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt()) / (a + d).abs().max(f64::MIN_POSITIVE)
}

/// Over the battery: max |λ(f,g) - λ(g,f) - iG(f,g)| / |G(f,g)| with G taken
/// as retarded minus advanced, and the smallest normalized eigenvalue of the
/// 2×2 Gram matrices of λ.
pub fn ccr_battery(two_point: &KernelSum, ret: &KernelSum, adv: &KernelSum, pairs: &[(TestFunction, TestFunction)]) -> Result<(f64, f64, Table)> {
    let mut t = Table::new("ccr_battery", &["pair", "causal", "two_point_re", "two_point_im", "defect", "gram_min"]);
    let mut worst: f64 = 0.0;
    let mut min_pos = f64::INFINITY;
    for (i, (f, g)) in pairs.iter().enumerate() {
        let (pf, pg) = (prepare(two_point, f)?, prepare(two_point, g)?);
        let fg = smear_prepared(two_point, &pf, &pg).value;
        let gf = smear_prepared(two_point, &pg, &pf).value;
        let ff = smear_prepared(two_point, &pf, &pf).value.re;
        let gg = smear_prepared(two_point, &pg, &pg).value.re;
        let causal = smear(ret, f, g)?.value.re - smear(adv, f, g)?.value.re;
        let defect = (fg - gf - Complex64::i() * causal).norm() / causal.abs().max(1e-300);
        let gram = gram_min_eigen(ff, fg, gg);
        worst = worst.max(defect);
        min_pos = min_pos.min(gram);
        t.push(vec![i as f64, causal, fg.re, fg.im, defect, gram]);
    }
    Ok((worst, min_pos, t))
}

fn kernel_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.spacetime()?;
    let data = Arc::new(ctx.spectrum(&model, ctx.cfg.truncation.l_max)?);
    let dim = model.sphere_dim();
    let causal = ctx.kernel(data.clone(), KernelKind::Causal)?;
    let ret = causal.with_kind(KernelKind::Retarded)?;
    let adv = causal.with_kind(KernelKind::Advanced)?;
    let two = match causal.with_kind(KernelKind::TwoPoint) {
        Ok(k) => Some(k),
        Err(e @ Error::NegativeMode { .. }) => {
            ctx.warnings.push(format!("{e}; skipping the two-point function"));
            None
        }
        Err(e) => return Err(e),
    };
    let radial = |id: &str, r: f64| {
        TestFunction::single(id, TimeProfile::Bump { center: 1.0, half_width: 0.2 }, RadialProfile::Bump { center: r, half_width: 0.2 }, ZonalProfile::monopole(dim))
    };
    let (src, rcv) = (radial("src", 0.7), radial("rcv", 0.9));
    let kernels = [&causal, &ret, &adv];
    let prep: Vec<_> = kernels.iter().map(|k| Ok((prepare(k, &src)?, prepare(k, &rcv)?))).collect::<Result<_>>()?;
    let prep2 = two.as_ref().map(|k| Ok::<_, Error>((prepare(k, &src)?, prepare(k, &rcv)?))).transpose()?;
    let mut slices = Table::new("kernel_slices", &["dt", "causal", "retarded", "advanced", "two_point_re", "two_point_im"]);
    for i in 0..=200 {
        let dt = -2.0 + 0.02 * i as f64;
        let mut row = vec![dt];
        for (k, (ps, pr)) in kernels.iter().zip(&prep) {
            row.push(spatial_slice(k, pr, ps, dt).value.re);
        }
        let w = match (&two, &prep2) {
            (Some(k), Some((ps, pr))) => spatial_slice(k, pr, ps, dt).value,
            _ => Complex64::new(f64::NAN, f64::NAN),
        };
        row.extend([w.re, w.im]);
        slices.push(row);
    }
    ctx.tables.push(slices);
    if let Some(k2) = &two {
        let pairs = pair_battery(ctx, dim);
        let (ccr, pos, t) = ccr_battery(k2, &ret, &adv, &pairs)?;
        ctx.tables.push(t);
        ctx.at_most("ccr", ccr, 1e-8);
        ctx.at_least("positivity", pos, -1e-10);
    }
    ctx.json("kernel", &json!({ "model": model, "symbol": ctx.cfg.symbol, "l_max": data.l_max, "k_max": data.k_max }))
}

fn verify_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.spacetime()?;
    let twist = TwistingFunction::canonical(&model);
    let ell = if model.kind == ModelKind::GlobalAds { 1 } else { 0 };
    let conv = green_convergence(&model, &ctx.cfg.symbol, &twist, ell, &[(0, 1.0), (1, 0.5)], &[(1, 1.0), (2, -0.3)], &[200, 400, 800])
        .stage("green")?;
    let mut t = Table::new("green_convergence", &["intervals", "residual"]);
    for (n, r) in conv.intervals.iter().zip(&conv.residuals) {
        t.push(vec![*n as f64, *r]);
    }
    ctx.tables.push(t);
    ctx.at_most("green_residual", *conv.residuals.last().unwrap(), 1e-6);
    ctx.at_least("green_order", conv.orders.iter().cloned().fold(f64::INFINITY, f64::min), 2.0);

    let data = Arc::new(ctx.spectrum(&model, ctx.cfg.truncation.l_max.min(4))?);
    let dim = model.sphere_dim();
    let causal = ctx.kernel(data.clone(), KernelKind::Causal)?;
    let ret = causal.with_kind(KernelKind::Retarded)?;
    let adv = causal.with_kind(KernelKind::Advanced)?;
    let shell = |id: &str, t: f64| {
        TestFunction::single(id, TimeProfile::Bump { center: t, half_width: 0.2 }, RadialProfile::Bump { center: 0.7, half_width: 0.2 }, ZonalProfile::monopole(dim))
    };
    let (early, late) = (shell("early", 1.0), shell("late", 2.0));
    let peak = smear(&ret, &late, &early)?.value.norm();
    ctx.at_most("retarded_support", smear(&ret, &early, &late)?.value.norm() / peak, 1e-6);
    ctx.at_most("advanced_support", smear(&adv, &late, &early)?.value.norm() / peak, 1e-6);
    let eq = smear(&causal, &early, &early)?;
    ctx.at_most("equal_time_causal", eq.value.norm() / eq.scale.max(f64::MIN_POSITIVE), ctx.cfg.truncation.tail_tolerance);

    let ts = time_slice_residual(&causal, &shell("f", 3.0), (1.0, 2.0), ctx.cfg.grid.dt.max(2.5e-3)).stage("time_slice")?;
    ctx.at_most("time_slice", ts.residual, 1e-3);

    let link = positivity_link(&data, &twist, 5).stage("positivity_link")?;
    ctx.flag("positivity_link", link.spectrum_positive == link.form_positive);
    match causal.with_kind(KernelKind::TwoPoint) {
        Ok(two) => {
            let pairs = pair_battery(ctx, dim);
            let (ccr, pos, t) = ccr_battery(&two, &ret, &adv, &pairs)?;
            ctx.tables.push(t);
            ctx.at_most("ccr", ccr, 1e-8);
            ctx.at_least("positivity", pos, -1e-10);
        }
        Err(e @ Error::NegativeMode { .. }) => ctx.warnings.push(format!("{e}; skipping the two-point battery")),
        Err(e) => return Err(e),
    }
    ctx.json("verify", &json!({ "green": conv, "time_slice": ts, "positivity_link": link }))
}

fn bounce_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.spacetime()?;
    let data = ctx.spectrum(&model, 0)?;
    let b = crate::verify::bounce_test(&data, ctx.cfg.bounce.rho0, ctx.cfg.bounce.width)?;
    let mut t = Table::new("bounce", &["t", "centroid", "localization", "marker"]);
    let mark = b
        .trajectory
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 .0 - b.measured).abs().total_cmp(&(y.1 .0 - b.measured).abs()))
        .map(|(i, _)| i);
    for (i, &(time, c, l)) in b.trajectory.iter().enumerate() {
        t.push(vec![time, c, l, if Some(i) == mark { 1.0 } else { 0.0 }]);
    }
    ctx.tables.push(t);
    ctx.at_most("bounce_time", b.relative_error(), 0.02);
    ctx.json("bounce", &json!({ "measured": b.measured, "predicted": b.predicted, "peak_time": b.peak_time }))
}

/// Late-window battery for the pullback: four bumps after `start`.
pub fn late_battery(start: f64) -> Vec<TestFunction> {
    let mk = |id: &str, t: f64, tw: f64, r: f64, rw: f64| {
        TestFunction::single(id, TimeProfile::Bump { center: start + t, half_width: tw }, RadialProfile::Bump { center: r, half_width: rw }, ZonalProfile::monopole(0))
    };
    vec![mk("a", 0.3, 0.25, 0.6, 0.25), mk("b", 0.6, 0.3, 1.0, 0.3), mk("c", 0.8, 0.2, 0.4, 0.2), mk("d", 1.0, 0.3, 0.8, 0.35)]
}

fn deform_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.strip()?;
    let symbol: BoundarySymbol = ctx.cfg.symbol;
    let data = Arc::new(ctx.spectrum(&model, 0)?);
    let grid = FdGrid::new(&model, &symbol, ctx.cfg.grid.fd_intervals)?;
    let dtau = ctx.cfg.grid.courant * grid.h;
    let profile = ctx.cfg.deform.profile();
    let early = (ctx.cfg.deform.early_window[0], ctx.cfg.deform.early_window[1]);
    let battery = late_battery(ctx.cfg.deform.late_start);

    // static-region cross-check of the retarded kernel
    let ret = ctx.kernel(data.clone(), KernelKind::Retarded)?;
    let f = TestFunction::single("f", TimeProfile::Bump { center: 1.0, half_width: 0.3 }, RadialProfile::Bump { center: 0.7, half_width: 0.25 }, ZonalProfile::monopole(0));
    let g = TestFunction::single("g", TimeProfile::Bump { center: 2.2, half_width: 0.3 }, RadialProfile::Bump { center: 1.0, half_width: 0.25 }, ZonalProfile::monopole(0));
    let spectral = smear(&ret, &g, &f)?.value.re;
    let fd = fd_pairing(&grid, &DeformationProfile::none(), &g, &f, KernelKind::Retarded, dtau).stage("fd_green")?;
    ctx.at_most("fd_vs_spectral", (fd - spectral).abs() / spectral.abs(), 1e-3);

    let hist = fd_green(&grid, &profile, &f, dtau, profile.tau_support().1 + 0.5, ((0.05 / dtau).round() as usize).max(1)).stage("fd_green")?;
    let mut t = Table::new("field_history", &["tau", "rho", "psi"]);
    let rstride = (hist.rho.len() / 100).max(1);
    for (tau, psi) in hist.taus.iter().zip(&hist.psi) {
        for j in (0..hist.rho.len()).step_by(rstride) {
            t.push(vec![*tau, hist.rho[j], psi[j]]);
        }
    }
    ctx.tables.push(t);

    match ctx.kernel(data.clone(), KernelKind::TwoPoint) {
        Ok(two) => {
            let deformed = pull_back_two_point(&two, &grid, &profile, early, &battery, dtau).stage("pullback")?;
            let flat = pull_back_two_point(&two, &grid, &DeformationProfile::none(), early, &battery, dtau).stage("pullback")?;
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (i, a) in battery.iter().enumerate() {
                for (j, b) in battery.iter().enumerate() {
                    let direct = smear(&two, a, b)?.value;
                    worst = worst.max((flat.lambda[i][j] - direct).norm());
                    scale = scale.max(direct.norm());
                }
            }
            ctx.at_most("zero_bump", worst / scale, 1e-3);
            ctx.at_most("pullback_ccr", deformed.ccr_defect(), 1e-3);
            ctx.at_least("pullback_positivity", deformed.min_diagonal(), -1e-10);
            ctx.json("pullback", &json!({ "profile": profile, "early_window": early, "deformed": deformed, "undeformed": flat }))
        }
        Err(e @ Error::NegativeMode { .. }) => {
            ctx.warnings.push(format!("{e}; no pullback without a ground state"));
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn sweep_job(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.cfg.spacetime()?;
    let s = &ctx.cfg.sweep;
    if s.count < 2 || !(s.theta_max > s.theta_min) {
        return Err(Error::Config("`sweep` needs count >= 2 and theta_max > theta_min".into()));
    }
    let thetas: Vec<f64> = (0..s.count).map(|i| s.theta_max - (s.theta_max - s.theta_min) * i as f64 / (s.count - 1) as f64).collect();
    let chart = ctx.cfg.chart()?;
    let sweep = theta_sweep(&model, s.ell, &thetas, &chart)?;
    let mut t = Table::new("theta_sweep", &["theta", "lowest_omega_sq"]);
    let mut pts = sweep.points.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (th, w2) in &pts {
        t.push(vec![*th, *w2]);
    }
    ctx.tables.push(t);
    ctx.flag("monotone_in_theta", pts.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9));
    if let Some(star) = sweep.theta_star {
        let past = BoundarySymbol::Robin { theta: star - 0.05 };
        let settings = SpectrumSettings { chart: chart.clone(), l_max: s.ell, k_max: 2, ..Default::default() };
        let data = compute_spectrum(&model, &past, &settings)?;
        let refused = matches!(build_kernel(Arc::new(data), KernelKind::TwoPoint), Err(Error::NegativeMode { .. }));
        ctx.flag("two_point_refused_past_critical", refused);
    } else {
        ctx.warnings.push("no negative mode in the sweep range".into());
    }
    ctx.json("sweep", &sweep)
}

/// Parses arguments, runs the job and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config PATH is required");
        return 2;
    };
    let cfg = match JobConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: stage `config` failed: {e}");
            return 2;
        }
    };
    let opts = RunOptions::resolve(&cli, &cfg);
    match run(&cfg, &opts) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for c in &report.checks {
                println!("{} {} value={:.3e} tolerance={:.3e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            for f in &report.files {
                println!("wrote {} sha256={}", opts.out.join(&f.file).display(), f.sha256);
            }
            if report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

//! Mode-sum propagators smeared against test functions.
//!
//! Every kernel is a sum over modes (ℓ, k) of
//! `K_ℓ(cos γ) ψ_k(ρ) ψ_k(ρ') w(ω_k, t - t')` with K_ℓ the zonal addition
//! kernel of the boundary sphere and weights
//!
//! | kind      | w(ω, Δt)                 |
//! |-----------|--------------------------|
//! | Causal    | sin(ωΔt)/ω               |
//! | Retarded  | ϑ(Δt) sin(ωΔt)/ω         |
//! | Advanced  | -ϑ(-Δt) sin(ωΔt)/ω       |
//! | TwoPoint  | e^{+iωΔt}/(2ω)           |
//!
//! with Δt = t - t', t the time argument of the first test function.
//! Naming: "Retarded" is supported in the causal future of the source
//! (Δt ≥ 0). The text this code follows labels that same object with a minus
//! sign (G⁻ = ϑ(τ - τ')G) and the advanced one G⁺; only the names differ.
//!
//! With this convention λ₂(f, g) - λ₂(g, f) = i·G(f, g) and λ₂(f, f) ≥ 0.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_spectrum::{check_lower_bound, RadialFunction, SpectralData};
use crate::special::{addition_kernel, bump, bump_deriv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Causal,
    Retarded,
    Advanced,
    TwoPoint,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Causal => "causal",
            KernelKind::Retarded => "retarded",
            KernelKind::Advanced => "advanced",
            KernelKind::TwoPoint => "two_point",
        }
    }
}

/// Uniform time grid t_i = t0 + i·dt, i < n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn covering(t0: f64, t1: f64, dt: f64) -> Self {
        TimeGrid { t0, dt, n: ((t1 - t0) / dt).round() as usize + 1 }
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.n - 1)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::covering(-2.0, 10.0, 1e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimeProfile {
    /// smooth bump with peak 1
    Bump { center: f64, half_width: f64 },
    /// samples on their own uniform grid; must align with the kernel grid
    Samples { t0: f64, dt: f64, values: Vec<f64> },
}

impl TimeProfile {
    pub fn support(&self) -> (f64, f64) {
        match self {
            TimeProfile::Bump { center, half_width } => (center - half_width, center + half_width),
            TimeProfile::Samples { t0, dt, values } => (*t0, t0 + dt * (values.len().max(1) - 1) as f64),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Bump { center, half_width } => bump(t, *center, *half_width),
            TimeProfile::Samples { t0, dt, values } => {
                let s = (t - t0) / dt;
                let i = s.round();
                if (s - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < values.len() {
                    values[i as usize]
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RadialProfile {
    /// smooth bump in ρ, Schrödinger gauge
    Bump { center: f64, half_width: f64 },
    /// the k-th eigenfunction of each ℓ
    Mode { k: usize },
    /// values and ρ-derivatives at the chart nodes
    Samples { values: Vec<f64>, derivs: Vec<f64> },
}

impl RadialProfile {
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            RadialProfile::Bump { center, half_width } => Some((center - half_width, center + half_width)),
            _ => None,
        }
    }
}

/// Zonal angular factor Σ_ℓ a_ℓ K_ℓ(n·Ω) around the unit vector `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZonalProfile {
    pub axis: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl ZonalProfile {
    /// Only the ℓ = 0 component, with unit coefficient.
    pub fn monopole(dim: usize) -> Self {
        let mut axis = vec![0.0; dim];
        if let Some(a) = axis.last_mut() {
            *a = 1.0;
        }
        ZonalProfile { axis, coeffs: vec![1.0] }
    }

    pub fn coeff(&self, ell: usize) -> f64 {
        self.coeffs.get(ell).copied().unwrap_or(0.0)
    }

    fn cos_angle(&self, other: &ZonalProfile) -> f64 {
        if self.axis.is_empty() || other.axis.is_empty() {
            return 1.0;
        }
        let dot: f64 = self.axis.iter().zip(&other.axis).map(|(a, b)| a * b).sum();
        let na: f64 = self.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableTerm {
    pub amplitude: f64,
    pub time: TimeProfile,
    pub radial: RadialProfile,
    pub angular: ZonalProfile,
}

/// A real test function: a finite sum of separable terms T(t)·R(ρ)·Z(Ω).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub terms: Vec<SeparableTerm>,
}

impl TestFunction {
    pub fn single(id: &str, time: TimeProfile, radial: RadialProfile, angular: ZonalProfile) -> Self {
        TestFunction { id: id.into(), terms: vec![SeparableTerm { amplitude: 1.0, time, radial, angular }] }
    }

    pub fn zero(id: &str) -> Self {
        TestFunction { id: id.into(), terms: vec![] }
    }

    pub fn t_support(&self) -> Option<(f64, f64)> {
        self.terms.iter().map(|t| t.time.support()).fold(None, |acc, (a, b)| match acc {
            None => Some((a, b)),
            Some((x, y)) => Some((x.min(a), y.max(b))),
        })
    }

    /// Checks that supports lie strictly inside the grids and that the time
    /// profiles pass a fourth-difference smoothness proxy.
    pub fn validate(&self, data: &SpectralData, grid: &TimeGrid) -> Result<()> {
        let chart = &data.chart;
        for term in &self.terms {
            let (a, b) = term.time.support();
            if !(a > grid.t0 && b < grid.t_end()) {
                return Err(Error::InvalidInput(format!(
                    "{}: time support [{a}, {b}] not inside grid [{}, {}]",
                    self.id,
                    grid.t0,
                    grid.t_end()
                )));
            }
            if let Some((r0, r1)) = term.radial.support() {
                if !(r0 > chart.rho_min() && r1 < chart.rho_max()) {
                    return Err(Error::InvalidInput(format!("{}: radial support [{r0}, {r1}] touches a layer", self.id)));
                }
            }
            if let RadialProfile::Samples { values, derivs } = &term.radial {
                if values.len() != chart.len() || derivs.len() != chart.len() {
                    return Err(Error::InvalidInput(format!("{}: radial samples do not match the chart", self.id)));
                }
            }
            if let TimeProfile::Bump { half_width, .. } = term.time {
                if half_width < 4.0 * grid.dt {
                    return Err(Error::InvalidInput(format!("{}: time bump not resolved by dt", self.id)));
                }
            }
            if let TimeProfile::Samples { dt, values, .. } = &term.time {
                if (dt - grid.dt).abs() > 1e-12 * grid.dt {
                    return Err(Error::InvalidInput(format!("{}: sample spacing differs from the kernel grid", self.id)));
                }
                let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let d4 = values
                    .windows(5)
                    .map(|w| (w[0] - 4.0 * w[1] + 6.0 * w[2] - 4.0 * w[3] + w[4]).abs())
                    .fold(0.0f64, f64::max)
                    / dt.powi(4);
                let span = dt * values.len() as f64;
                if !d4.is_finite() || d4 > 1e8 * peak / span.powi(4) {
                    return Err(Error::InvalidInput(format!("{}: time samples fail the smoothness proxy", self.id)));
                }
            }
        }
        Ok(())
    }
}

/// Spectral kernel with its truncation, regulator and time quadrature grid.
#[derive(Clone, Debug)]
pub struct KernelSum {
    pub data: Arc<SpectralData>,
    pub kind: KernelKind,
    pub l_max: usize,
    pub k_max: usize,
    /// e^{-εω} applied to every mode; zero disables it
    pub epsilon: f64,
    pub time_grid: TimeGrid,
    /// relative tail size above which smears carry a truncation warning
    pub tail_tolerance: f64,
}

/// Builds a kernel over all computed modes. TwoPoint needs a positive spectrum.
pub fn build_kernel(data: Arc<SpectralData>, kind: KernelKind) -> Result<KernelSum> {
    if kind == KernelKind::TwoPoint {
        check_lower_bound(&data)?;
    }
    Ok(KernelSum {
        l_max: data.l_max,
        k_max: data.k_max,
        data,
        kind,
        epsilon: 0.0,
        time_grid: TimeGrid::default(),
        tail_tolerance: 1e-6,
    })
}

impl KernelSum {
    pub fn with_truncation(mut self, l_max: usize, k_max: usize) -> Self {
        self.l_max = l_max.min(self.data.l_max);
        self.k_max = k_max.min(self.data.k_max);
        self
    }

    pub fn with_regulator(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_time_grid(mut self, grid: TimeGrid) -> Self {
        self.time_grid = grid;
        self
    }

    pub fn with_kind(&self, kind: KernelKind) -> Result<Self> {
        if kind == KernelKind::TwoPoint {
            check_lower_bound(&self.data)?;
        }
        let mut k = self.clone();
        k.kind = kind;
        Ok(k)
    }

    /// Mode weight w(ω, Δt) for ω² > 0, including the regulator.
    pub fn weight(&self, omega: f64, dt: f64) -> Complex64 {
        let reg = (-self.epsilon * omega).exp();
        let s = (omega * dt).sin() / omega;
        let w = match self.kind {
            KernelKind::Causal => Complex64::new(s, 0.0),
            KernelKind::Retarded => Complex64::new(if dt >= 0.0 { s } else { 0.0 }, 0.0),
            KernelKind::Advanced => Complex64::new(if dt <= 0.0 { -s } else { 0.0 }, 0.0),
            KernelKind::TwoPoint => Complex64::from_polar(1.0 / (2.0 * omega), omega * dt),
        };
        w * reg
    }

    fn modes(&self) -> impl Iterator<Item = (usize, &crate::mode_spectrum::ModeSet)> {
        self.data
            .modes
            .iter()
            .filter(move |m| m.ell <= self.l_max)
            .map(|m| (m.ell, m))
    }
}

/// Oscillator factors: w(ω, t - t') = [s(t)c(t') - c(t)s(t')] / div.
#[derive(Clone, Copy, Debug)]
enum Osc {
    Trig(f64),
    Hyp(f64),
    Zero,
}

impl Osc {
    fn new(omega_sq: f64) -> Self {
        if omega_sq > 0.0 {
            Osc::Trig(omega_sq.sqrt())
        } else if omega_sq < 0.0 {
            Osc::Hyp((-omega_sq).sqrt())
        } else {
            Osc::Zero
        }
    }

    #[inline]
    fn cs(&self, t: f64) -> (f64, f64) {
        match *self {
            Osc::Trig(w) => {
                let (s, c) = (w * t).sin_cos();
                (c, s)
            }
            Osc::Hyp(k) => ((k * t).cosh(), (k * t).sinh()),
            Osc::Zero => (1.0, t),
        }
    }

    fn div(&self) -> f64 {
        match *self {
            Osc::Trig(w) | Osc::Hyp(w) => w,
            Osc::Zero => 1.0,
        }
    }

    fn omega(&self) -> f64 {
        match *self {
            Osc::Trig(w) => w,
            _ => 0.0,
        }
    }
}

/// Time profile sampled on the kernel grid, with trapezoid weights folded in.
#[derive(Clone, Debug)]
struct TimeSamples {
    i0: usize,
    vals: Vec<f64>,
}

fn sample_time(profile: &TimeProfile, grid: &TimeGrid) -> Result<TimeSamples> {
    let (a, b) = profile.support();
    if !(a >= grid.t0 && b <= grid.t_end()) {
        return Err(Error::InvalidInput(format!("time support [{a}, {b}] outside kernel grid")));
    }
    let i0 = ((a - grid.t0) / grid.dt).floor().max(0.0) as usize;
    let i1 = (((b - grid.t0) / grid.dt).ceil() as usize).min(grid.n - 1);
    let mut vals: Vec<f64> = (i0..=i1).map(|i| profile.at(grid.t(i))).collect();
    if let Some(v) = vals.first_mut() {
        *v *= 0.5;
    }
    if let Some(v) = vals.last_mut() {
        *v *= 0.5;
    }
    Ok(TimeSamples { i0, vals })
}

/// A test function prepared against a kernel: radial overlaps per (ℓ, k) and
/// sampled time profiles.
#[derive(Clone, Debug)]
pub struct Prepared {
    terms: Vec<PreparedTerm>,
}

#[derive(Clone, Debug)]
struct PreparedTerm {
    time: TimeSamples,
    angular: ZonalProfile,
    /// amplitude·⟨ψ_{kℓ}, R⟩ indexed [ℓ][k]
    overlaps: Vec<Vec<f64>>,
}

pub(crate) fn radial_function(profile: &RadialProfile, data: &SpectralData, ell: usize, k: usize) -> Option<RadialFunction> {
    let chart = &data.chart;
    match profile {
        RadialProfile::Bump { center, half_width } => {
            let grid = chart.rho_grid();
            Some(RadialFunction::interior(
                grid.iter().map(|&r| bump(r, *center, *half_width)).collect(),
                grid.iter().map(|&r| bump_deriv(r, *center, *half_width)).collect(),
            ))
        }
        RadialProfile::Mode { k: kk } => {
            if *kk == k {
                data.mode(ell).and_then(|m| m.pairs.get(*kk)).map(|p| p.func.clone())
            } else {
                None
            }
        }
        RadialProfile::Samples { values, derivs } => Some(RadialFunction::interior(values.clone(), derivs.clone())),
    }
}

/// a_ℓ b_ℓ K_ℓ(n_a·n_b); on the half strip K ≡ 1.
pub(crate) fn angular_factor(dim: usize, ell: usize, a: &ZonalProfile, b: &ZonalProfile) -> f64 {
    let c = a.coeff(ell) * b.coeff(ell);
    if c == 0.0 || dim == 0 {
        c
    } else {
        c * addition_kernel(dim, ell, a.cos_angle(b))[ell]
    }
}

/// Computes radial overlaps and time samples of `f` for the kernel's truncation.
pub fn prepare(kernel: &KernelSum, f: &TestFunction) -> Result<Prepared> {
    f.validate(&kernel.data, &kernel.time_grid)?;
    let data = &kernel.data;
    let mut terms = Vec::with_capacity(f.terms.len());
    for term in &f.terms {
        let overlaps: Vec<Vec<f64>> = kernel
            .modes()
            .map(|(ell, m)| {
                if term.angular.coeff(ell) == 0.0 {
                    return vec![0.0; m.pairs.len().min(kernel.k_max)];
                }
                let fixed = match &term.radial {
                    RadialProfile::Mode { .. } => None,
                    other => radial_function(other, data, ell, 0),
                };
                m.pairs
                    .iter()
                    .take(kernel.k_max)
                    .enumerate()
                    .map(|(k, p)| {
                        let r = match &fixed {
                            Some(r) => p.func.inner(r, &data.chart),
                            None => radial_function(&term.radial, data, ell, k)
                                .map_or(0.0, |r| p.func.inner(&r, &data.chart)),
                        };
                        term.amplitude * r
                    })
                    .collect()
            })
            .collect();
        terms.push(PreparedTerm { time: sample_time(&term.time, &kernel.time_grid)?, angular: term.angular.clone(), overlaps });
    }
    Ok(Prepared { terms })
}

/// Smeared value with a tail estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmearResult {
    pub value: Complex64,
    /// Σ|mode contribution| over the last decade of retained modes
    pub tail: f64,
    /// Σ|mode contribution| over all retained modes
    pub scale: f64,
    pub warning: Option<TruncationWarning>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationWarning {
    pub relative_tail: f64,
    pub tolerance: f64,
}

impl SmearResult {
    pub fn relative_tail(&self) -> f64 {
        if self.scale > 0.0 {
            self.tail / self.scale
        } else {
            0.0
        }
    }

    /// Turns a truncation warning into an error.
    pub fn strict(self) -> Result<SmearResult> {
        match self.warning {
            Some(w) => Err(Error::InvalidInput(format!(
                "truncation warning: relative tail {:.3e} > {:.3e}",
                w.relative_tail, w.tolerance
            ))),
            None => Ok(self),
        }
    }
}

/// Time integrals of a sampled profile against c(t), s(t), plus optional cumulative arrays.
struct TimeMoments {
    c: f64,
    s: f64,
    cum: Option<(Vec<f64>, Vec<f64>)>,
}

fn moments(ts: &TimeSamples, osc: Osc, grid: &TimeGrid, t_ref: f64, cumulative: bool) -> TimeMoments {
    let (mut c, mut s) = (0.0, 0.0);
    let mut cum = cumulative.then(|| (Vec::with_capacity(ts.vals.len()), Vec::with_capacity(ts.vals.len())));
    // cumulative trapezoid: value at node m integrates up to t_m
    let mut prev = (0.0, 0.0);
    let dt = grid.dt;
    let n = ts.vals.len();
    for (m, v) in ts.vals.iter().enumerate() {
        let (cc, ss) = osc.cs(grid.t(ts.i0 + m) - t_ref);
        let raw = if m == 0 || m == n - 1 { 2.0 * v } else { *v };
        if let Some((cc_acc, ss_acc)) = cum.as_mut() {
            let (pc, ps) = prev;
            let (lc, ls) = if m == 0 { (0.0, 0.0) } else { (cc_acc[m - 1], ss_acc[m - 1]) };
            let step_c = if m == 0 { 0.0 } else { 0.5 * dt * (pc + raw * cc) };
            let step_s = if m == 0 { 0.0 } else { 0.5 * dt * (ps + raw * ss) };
            cc_acc.push(lc + step_c);
            ss_acc.push(ls + step_s);
        }
        prev = (raw * cc, raw * ss);
        c += v * cc * dt;
        s += v * ss * dt;
    }
    TimeMoments { c, s, cum }
}

/// ∫ T_f(t) [s(t) Cum_c^g(t) - c(t) Cum_s^g(t)] dt, the retarded pairing kernel
/// before division; Cum^g is the running integral of the g profile.
fn retarded_pairing(tf: &TimeSamples, tg: &TimeSamples, mg: &TimeMoments, osc: Osc, grid: &TimeGrid, t_ref: f64) -> f64 {
    let (cumc, cums) = mg.cum.as_ref().expect("cumulative moments");
    let g_end = tg.i0 + tg.vals.len() - 1;
    let mut acc = 0.0;
    for (m, v) in tf.vals.iter().enumerate() {
        let i = tf.i0 + m;
        let (gc, gs) = if i < tg.i0 {
            continue;
        } else if i > g_end {
            (mg.c, mg.s)
        } else {
            (cumc[i - tg.i0], cums[i - tg.i0])
        };
        let (cc, ss) = osc.cs(grid.t(i) - t_ref);
        acc += v * (ss * gc - cc * gs) * grid.dt;
    }
    acc
}

/// -∫ T_f(t) [s(t) (C^g - Cum_c^g(t)) - c(t) (S^g - Cum_s^g(t))] dt
fn advanced_pairing(tf: &TimeSamples, tg: &TimeSamples, mg: &TimeMoments, osc: Osc, grid: &TimeGrid, t_ref: f64) -> f64 {
    let (cumc, cums) = mg.cum.as_ref().expect("cumulative moments");
    let g_end = tg.i0 + tg.vals.len() - 1;
    let mut acc = 0.0;
    for (m, v) in tf.vals.iter().enumerate() {
        let i = tf.i0 + m;
        let (gc, gs) = if i > g_end {
            continue;
        } else if i < tg.i0 {
            (mg.c, mg.s)
        } else {
            (mg.c - cumc[i - tg.i0], mg.s - cums[i - tg.i0])
        };
        let (cc, ss) = osc.cs(grid.t(i) - t_ref);
        acc -= v * (ss * gc - cc * gs) * grid.dt;
    }
    acc
}

/// Smears the kernel against two test functions: Σ_ℓ Σ_k w ⊗ overlaps ⊗ K_ℓ.
pub fn smear(kernel: &KernelSum, f: &TestFunction, g: &TestFunction) -> Result<SmearResult> {
    let pf = prepare(kernel, f)?;
    let pg = prepare(kernel, g)?;
    Ok(smear_prepared(kernel, &pf, &pg))
}

pub fn smear_prepared(kernel: &KernelSum, pf: &Prepared, pg: &Prepared) -> SmearResult {
    let grid = kernel.time_grid;
    let t_ref = 0.5 * (grid.t0 + grid.t_end());
    let dim = kernel.data.model.sphere_dim();
    let need_cum = matches!(kernel.kind, KernelKind::Retarded | KernelKind::Advanced);
    let ells: Vec<(usize, &crate::mode_spectrum::ModeSet)> = kernel.modes().collect();
    let per_ell: Vec<Vec<Complex64>> = ells
        .par_iter()
        .enumerate()
        .map(|(li, (ell, m))| {
            let ell = *ell;
            // angular Gram factors between the terms of f and g
            let ang: Vec<Vec<f64>> = pf
                .terms
                .iter()
                .map(|a| {
                    pg.terms
                        .iter()
                        .map(|b| angular_factor(dim, ell, &a.angular, &b.angular))
                        .collect()
                })
                .collect();
            let kmax = m.pairs.len().min(kernel.k_max);
            let mut out = Vec::with_capacity(kmax);
            for k in 0..kmax {
                let w2 = m.pairs[k].omega_sq;
                let osc = Osc::new(w2);
                let reg = if kernel.epsilon > 0.0 { (-kernel.epsilon * osc.omega()).exp() } else { 1.0 };
                let mut total = Complex64::new(0.0, 0.0);
                let mf: Vec<Option<TimeMoments>> = pf
                    .terms
                    .iter()
                    .map(|t| (t.overlaps[li][k] != 0.0).then(|| moments(&t.time, osc, &grid, t_ref, false)))
                    .collect();
                let mg: Vec<Option<TimeMoments>> = pg
                    .terms
                    .iter()
                    .map(|t| (t.overlaps[li][k] != 0.0).then(|| moments(&t.time, osc, &grid, t_ref, need_cum)))
                    .collect();
                for (i, ti) in pf.terms.iter().enumerate() {
                    let Some(fi) = &mf[i] else { continue };
                    for (j, tj) in pg.terms.iter().enumerate() {
                        let Some(gj) = &mg[j] else { continue };
                        let a = ang[i][j];
                        if a == 0.0 {
                            continue;
                        }
                        let o = ti.overlaps[li][k] * tj.overlaps[li][k] * a;
                        let div = osc.div();
                        let w = match kernel.kind {
                            KernelKind::Causal => Complex64::new((fi.s * gj.c - fi.c * gj.s) / div, 0.0),
                            KernelKind::TwoPoint => {
                                Complex64::new(fi.c, fi.s) * Complex64::new(gj.c, -gj.s) / (2.0 * div)
                            }
                            KernelKind::Retarded => {
                                Complex64::new(retarded_pairing(&ti.time, &tj.time, gj, osc, &grid, t_ref) / div, 0.0)
                            }
                            KernelKind::Advanced => {
                                Complex64::new(advanced_pairing(&ti.time, &tj.time, gj, osc, &grid, t_ref) / div, 0.0)
                            }
                        };
                        total += w * o * reg;
                    }
                }
                out.push(total);
            }
            out
        })
        .collect();
    let mut value = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    let mut tail = 0.0;
    let l_cut = tail_cut(kernel.l_max);
    for (li, contribs) in per_ell.iter().enumerate() {
        let ell = ells[li].0;
        let k_cut = tail_cut(contribs.len().saturating_sub(1));
        for (k, c) in contribs.iter().enumerate() {
            value += c;
            scale += c.norm();
            if k >= k_cut || (kernel.l_max >= 10 && ell >= l_cut) {
                tail += c.norm();
            }
        }
    }
    let rel = if scale > 0.0 { tail / scale } else { 0.0 };
    let warning = (rel > kernel.tail_tolerance).then_some(TruncationWarning {
        relative_tail: rel,
        tolerance: kernel.tail_tolerance,
    });
    SmearResult { value, tail, scale, warning }
}

/// Fixed-time slice: Σ w(ω, Δt)·⟨f_R, ψ⟩⟨ψ, g_R⟩·K_ℓ with the time profiles
/// of both test functions ignored. The tail estimate matches [`smear`].
pub fn spatial_slice(kernel: &KernelSum, pf: &Prepared, pg: &Prepared, dt: f64) -> SmearResult {
    let dim = kernel.data.model.sphere_dim();
    let ells: Vec<(usize, &crate::mode_spectrum::ModeSet)> = kernel.modes().collect();
    let mut value = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    let mut tail = 0.0;
    let l_cut = tail_cut(kernel.l_max);
    for (li, (ell, m)) in ells.iter().enumerate() {
        let kmax = m.pairs.len().min(kernel.k_max);
        let k_cut = tail_cut(kmax.saturating_sub(1));
        for k in 0..kmax {
            let osc = Osc::new(m.pairs[k].omega_sq);
            let (_, s) = osc.cs(dt);
            let reg = if kernel.epsilon > 0.0 { (-kernel.epsilon * osc.omega()).exp() } else { 1.0 };
            let sdiv = s / osc.div();
            let w = match kernel.kind {
                KernelKind::Causal => Complex64::new(sdiv, 0.0),
                KernelKind::Retarded => Complex64::new(if dt >= 0.0 { sdiv } else { 0.0 }, 0.0),
                KernelKind::Advanced => Complex64::new(if dt <= 0.0 { -sdiv } else { 0.0 }, 0.0),
                KernelKind::TwoPoint => Complex64::from_polar(1.0 / (2.0 * osc.div()), osc.omega() * dt),
            } * reg;
            let mut o = 0.0;
            for a in &pf.terms {
                for b in &pg.terms {
                    let oa = a.overlaps[li][k] * b.overlaps[li][k];
                    if oa != 0.0 {
                        o += oa * angular_factor(dim, *ell, &a.angular, &b.angular);
                    }
                }
            }
            let contrib = w * o;
            value += contrib;
            scale += contrib.norm();
            if k >= k_cut || (kernel.l_max >= 10 && *ell >= l_cut) {
                tail += contrib.norm();
            }
        }
    }
    let rel = if scale > 0.0 { tail / scale } else { 0.0 };
    let warning = (rel > kernel.tail_tolerance).then_some(TruncationWarning { relative_tail: rel, tolerance: kernel.tail_tolerance });
    SmearResult { value, tail, scale, warning }
}

/// Start of the last decade of indices 0..=top.
fn tail_cut(top: usize) -> usize {
    let n = top + 1;
    n - (n / 10).max(1)
}

/// Projection of a spatial profile at fixed time onto the retained modes:
/// ⟨∂_t G(t, ·; t', ·), f⟩ at t = t'. `fields[i][ℓ]` is Σ_k ψ_k⟨ψ_k, R_i⟩ for term i.
#[derive(Clone, Debug)]
pub struct DeltaResponse {
    pub fields: Vec<Vec<RadialFunction>>,
    pub coefficients: Vec<Vec<Vec<f64>>>,
}

/// Reconstructs f from the δ initial condition of the causal propagator.
pub fn delta_response(kernel: &KernelSum, f: &TestFunction) -> Result<DeltaResponse> {
    if kernel.kind != KernelKind::Causal {
        return Err(Error::InvalidInput("delta_response needs the causal kernel".into()));
    }
    let data = &kernel.data;
    let n = data.chart.len();
    let mut fields = Vec::new();
    let mut coefficients = Vec::new();
    for term in &f.terms {
        let mut per_ell = Vec::new();
        let mut coeff_ell = Vec::new();
        for (ell, m) in kernel.modes() {
            let mut acc = RadialFunction::interior(vec![0.0; n], vec![0.0; n]);
            let mut cs = Vec::new();
            let a = term.angular.coeff(ell);
            for (k, p) in m.pairs.iter().take(kernel.k_max).enumerate() {
                let c = if a == 0.0 {
                    0.0
                } else {
                    radial_function(&term.radial, data, ell, k).map_or(0.0, |r| p.func.inner(&r, &data.chart))
                        * term.amplitude
                };
                // d/dt of the causal weight at Δt = 0 is 1 (times the regulator)
                let reg = if kernel.epsilon > 0.0 { (-kernel.epsilon * p.omega().max(0.0)).exp() } else { 1.0 };
                if c != 0.0 {
                    acc = acc.axpy(c * reg, &p.func);
                }
                cs.push(c * reg);
            }
            per_ell.push(acc);
            coeff_ell.push(cs);
        }
        fields.push(per_ell);
        coefficients.push(coeff_ell);
    }
    Ok(DeltaResponse { fields, coefficients })
}

/// Relative L² error (radial ⊗ angular) of the δ reconstruction of f at fixed time.
pub fn reconstruction_error(kernel: &KernelSum, f: &TestFunction) -> Result<f64> {
    let resp = delta_response(kernel, f)?;
    let data = &kernel.data;
    let chart = &data.chart;
    let dim = data.model.sphere_dim();
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    for (li, (ell, _)) in kernel.modes().enumerate() {
        let originals: Vec<Option<RadialFunction>> = f
            .terms
            .iter()
            .map(|t| match &t.radial {
                RadialProfile::Mode { k } => data.mode(ell).and_then(|m| m.pairs.get(*k)).map(|p| p.func.scaled(t.amplitude)),
                other => radial_function(other, data, ell, 0).map(|r| r.scaled(t.amplitude)),
            })
            .collect();
        for (i, ti) in f.terms.iter().enumerate() {
            for (j, tj) in f.terms.iter().enumerate() {
                let a = angular_factor(dim, ell, &ti.angular, &tj.angular);
                if a == 0.0 {
                    continue;
                }
                let (Some(fi), Some(fj)) = (&originals[i], &originals[j]) else { continue };
                let ri = fi.axpy(-1.0, &resp.fields[i][li]);
                let rj = fj.axpy(-1.0, &resp.fields[j][li]);
                err2 += a * ri.inner(&rj, chart);
                norm2 += a * fi.inner(fj, chart);
            }
        }
    }
    if norm2 <= 0.0 {
        return Ok(0.0);
    }
    Ok((err2.max(0.0) / norm2).sqrt())
}

/// Residuals of the discretized Klein-Gordon operator applied to G f.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PgResidual {
    /// ‖P u - f‖ / ‖f‖ for retarded/advanced, ‖P u‖ / ‖f‖ for causal
    pub residual: f64,
    pub dt: f64,
}

/// Builds u = G^kind f mode by mode on a time grid of spacing `dt`, applies
/// P = ∂²_t + E with a centered second difference in t and the exact mode
/// action of E, and measures the residual on a radial subgrid
/// [ρ_lo, ρ_hi] at times away from the grid ends.
pub fn apply_p_then_g(kernel: &KernelSum, f: &TestFunction, dt: f64, rho_window: (f64, f64)) -> Result<PgResidual> {
    if kernel.kind == KernelKind::TwoPoint {
        return Err(Error::InvalidInput("P∘G check is for causal/retarded/advanced kernels".into()));
    }
    let (ts, te) = match f.t_support() {
        Some(s) => s,
        None => return Ok(PgResidual { residual: 0.0, dt }),
    };
    let span = te - ts;
    let grid = TimeGrid::covering(ts - 0.5 * span - 10.0 * dt, te + 0.5 * span + 10.0 * dt, dt);
    let k = kernel.clone().with_time_grid(grid);
    let pf = prepare(&k, f)?;
    let data = &k.data;
    let chart = &data.chart;
    let rho = chart.rho_grid();
    let sub: Vec<usize> = (0..rho.len())
        .step_by(10)
        .filter(|&i| rho[i] >= rho_window.0 && rho[i] <= rho_window.1)
        .collect();
    let dim = data.model.sphere_dim();
    let t_ref = 0.5 * (grid.t0 + grid.t_end());
    let nt = grid.n;
    let mut res2 = 0.0;
    let mut f2 = 0.0;
    for (li, (ell, m)) in k.modes().enumerate() {
        let kmax = m.pairs.len().min(k.k_max);
        // per term: residual field r_i(t, ρ) and source field f_i(t, ρ) on the subgrid
        let mut r_fields = vec![vec![0.0; nt * sub.len()]; pf.terms.len()];
        let mut f_fields = vec![vec![0.0; nt * sub.len()]; pf.terms.len()];
        for (i, term) in pf.terms.iter().enumerate() {
            let full = TimeSamples {
                i0: 0,
                vals: (0..nt)
                    .map(|n| {
                        let local = n as isize - term.time.i0 as isize;
                        let mut v = if local >= 0 && (local as usize) < term.time.vals.len() {
                            term.time.vals[local as usize]
                        } else {
                            0.0
                        };
                        // undo the trapezoid end weights stored in the samples
                        if local == 0 || local as usize == term.time.vals.len() - 1 {
                            v *= 2.0;
                        }
                        v
                    })
                    .collect(),
            };
            for kk in 0..kmax {
                let o = term.overlaps[li][kk];
                if o == 0.0 {
                    continue;
                }
                let w2 = m.pairs[kk].omega_sq;
                let osc = Osc::new(w2);
                let mut weighted = full.clone();
                weighted.vals[0] *= 0.5;
                weighted.vals[nt - 1] *= 0.5;
                let mo = moments(&weighted, osc, &grid, t_ref, true);
                let (cumc, cums) = mo.cum.as_ref().unwrap();
                let u: Vec<f64> = (0..nt)
                    .map(|n| {
                        let (c, s) = osc.cs(grid.t(n) - t_ref);
                        let ret = (s * cumc[n] - c * cums[n]) / osc.div();
                        let causal = (s * mo.c - c * mo.s) / osc.div();
                        match k.kind {
                            KernelKind::Retarded => ret,
                            KernelKind::Advanced => ret - causal,
                            _ => causal,
                        }
                    })
                    .collect();
                let psi: Vec<f64> = sub.iter().map(|&j| m.pairs[kk].func.psi[j]).collect();
                for n in 1..nt - 1 {
                    let pu = (u[n + 1] - 2.0 * u[n] + u[n - 1]) / (dt * dt) + w2 * u[n];
                    let src = if k.kind == KernelKind::Causal { 0.0 } else { full.vals[n] };
                    let r = o * (pu - src);
                    for (q, p) in psi.iter().enumerate() {
                        r_fields[i][n * sub.len() + q] += r * p;
                    }
                }
            }
            // the source itself on the subgrid
            let rf = match &f.terms[i].radial {
                RadialProfile::Mode { k: kk } => m.pairs.get(*kk).map(|p| p.func.clone()),
                other => radial_function(other, data, ell, 0),
            };
            if let Some(rf) = rf {
                for n in 0..nt {
                    for (q, &j) in sub.iter().enumerate() {
                        f_fields[i][n * sub.len() + q] = f.terms[i].amplitude * full.vals[n] * rf.psi[j];
                    }
                }
            }
        }
        for (i, ti) in pf.terms.iter().enumerate() {
            for (j, tj) in pf.terms.iter().enumerate() {
                let a = angular_factor(dim, ell, &ti.angular, &tj.angular);
                if a == 0.0 {
                    continue;
                }
                let rr: f64 = r_fields[i].iter().zip(&r_fields[j]).map(|(x, y)| x * y).sum();
                let ff: f64 = f_fields[i].iter().zip(&f_fields[j]).map(|(x, y)| x * y).sum();
                res2 += a * rr;
                f2 += a * ff;
            }
        }
    }
    if f2 <= 0.0 {
        return Ok(PgResidual { residual: 0.0, dt });
    }
    Ok(PgResidual { residual: (res2.max(0.0) / f2).sqrt(), dt })
}

/// A spacetime point (t, ρ, unit vector on the boundary sphere).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub rho: f64,
    pub dir: Vec<f64>,
}

/// Regulated pointwise kernel Σ_ℓ K_ℓ(cos γ) Σ_k ψ_k(ρ)ψ_k(ρ') w(ω, Δt) e^{-εω}.
pub fn point_value(kernel: &KernelSum, x: &Point, y: &Point, epsilon: f64) -> Complex64 {
    let data = &kernel.data;
    let chart = &data.chart;
    let dim = data.model.sphere_dim();
    let cosg = if dim == 0 {
        1.0
    } else {
        let d: f64 = x.dir.iter().zip(&y.dir).map(|(a, b)| a * b).sum();
        d.clamp(-1.0, 1.0)
    };
    let kl = if dim == 0 { vec![1.0] } else { addition_kernel(dim, kernel.l_max, cosg) };
    let per: Vec<Complex64> = kernel
        .modes()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(ell, m)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in m.pairs.iter().take(kernel.k_max) {
                let w = p.omega();
                let base = KernelSum { epsilon: 0.0, ..kernel.clone() };
                acc += base.weight(w, x.t - y.t)
                    * (-epsilon * w).exp()
                    * p.func.eval(chart, x.rho)
                    * p.func.eval(chart, y.rho);
            }
            acc * kl[*ell]
        })
        .collect();
    per.iter().sum()
}

/// Point-split value with Richardson extrapolation ε → 0 from ε0, ε0/2, ε0/4, …
pub fn point_split(kernel: &KernelSum, x: &Point, y: &Point, eps0: f64, levels: usize) -> Complex64 {
    let levels = levels.max(1);
    let mut table: Vec<Complex64> = (0..levels).map(|i| point_value(kernel, x, y, eps0 / 2f64.powi(i as i32))).collect();
    // the regulated value is smooth in ε, so eliminate successive powers of ε
    for order in 1..levels {
        let f = 2f64.powi(order as i32);
        table = table.windows(2).map(|w| (w[1] * f - w[0]) / (f - 1.0)).collect();
    }
    table[0]
}

/// `count` random smooth test functions for batteries: one or two separable
/// terms with bumps in t ∈ [0.4, 3], ρ ∈ [0.25, 1.25] and zonal factors up to
/// ℓ = 3 about random axes (`dim` is the sphere dimension).
pub fn random_test_functions(dim: usize, count: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n_terms = rng.gen_range(1..=2);
            let terms = (0..n_terms)
                .map(|_| {
                    let tw = rng.gen_range(0.15..0.4);
                    let rw = rng.gen_range(0.12..0.3);
                    let axis: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n_l = if dim == 0 { 1 } else { rng.gen_range(1..=4) };
                    SeparableTerm {
                        amplitude: rng.gen_range(-1.0..1.0),
                        time: TimeProfile::Bump { center: rng.gen_range(0.4 + tw..3.0), half_width: tw },
                        radial: RadialProfile::Bump { center: rng.gen_range(0.25 + rw..1.25), half_width: rw },
                        angular: ZonalProfile { axis, coeffs: (0..n_l).map(|_| rng.gen_range(-1.0..1.0)).collect() },
                    }
                })
                .collect();
            TestFunction { id: format!("r{i}"), terms }
        })
        .collect()
}

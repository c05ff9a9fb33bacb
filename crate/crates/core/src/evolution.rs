//! Time-domain evolution on the half strip, with a warped non-static region,
//! and the deformation pullback of the static two-point function.
//!
//! The field is stored in the twisted variable w = ψ / y^a, a = 1/2 - ν,
//! y = π/2 - ρ, so that near the boundary w = A + B y^{2ν} + O(y²) and the
//! boundary condition B = θA becomes a flux condition. In w the static
//! operator is L w = -y^{-2a} ∂_y(y^{2a} ∂_y w) + V_rest w with the bounded
//! remainder V_rest = (ν² - 1/4)(1/sin²y - 1/y²).
//!
//! Space: finite volumes on a uniform y grid with masses M_j = ∫ y^{2a} over
//! the cell and face weights κ = 1/∫ y^{-2a} between nodes (exact for the
//! y^{2ν} branch). The boundary node carries the flux 2νθ w₀; Dirichlet drops
//! it. The center ρ = 0 is the wall w = 0.
//!
//! Time: the deformed equation is taken in divergence form
//! ∂_τ(β⁻¹ ∂_τ ψ) + E ψ = f, integrated by kick-drift-kick on the momentum
//! p = β⁻¹ ∂_τ w.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_symbol::{theta_of_mode, BoundarySymbol, ThetaValue};
use crate::error::{Error, Result};
use crate::geometry::{ModelKind, SpacetimeModel};
use crate::propagators::{KernelKind, KernelSum, RadialProfile, TestFunction};
use crate::special::{bump, smoothstep5};

/// β(τ, ρ) = 1 + amplitude · bump(τ) · bump(ρ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationProfile {
    pub amplitude: f64,
    pub tau_center: f64,
    pub tau_half_width: f64,
    pub rho_center: f64,
    pub rho_half_width: f64,
}

impl DeformationProfile {
    pub fn none() -> Self {
        DeformationProfile { amplitude: 0.0, tau_center: 0.0, tau_half_width: 1.0, rho_center: 0.5, rho_half_width: 0.2 }
    }

    pub fn beta(&self, tau: f64, rho: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 1.0;
        }
        1.0 + self.amplitude * bump(tau, self.tau_center, self.tau_half_width) * bump(rho, self.rho_center, self.rho_half_width)
    }

    /// [τ₀, τ₁] outside of which β ≡ 1.
    pub fn tau_support(&self) -> (f64, f64) {
        (self.tau_center - self.tau_half_width, self.tau_center + self.tau_half_width)
    }

    pub fn is_static(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Bounds C ≤ β ≤ 1/C with C = 1 - |amplitude|, and β ≡ 1 near the boundary.
    pub fn validate(&self) -> Result<f64> {
        if !(self.amplitude.abs() < 1.0) {
            return Err(Error::OutOfRange { what: "deformation amplitude (needs |a| < 1)", value: self.amplitude });
        }
        if !(self.tau_half_width > 0.0 && self.rho_half_width > 0.0) {
            return Err(Error::InvalidInput("deformation widths must be positive".into()));
        }
        if self.rho_center - self.rho_half_width <= 0.0 || self.rho_center + self.rho_half_width >= PI / 2.0 - 0.05 {
            return Err(Error::InvalidInput("deformation must stay away from the center and the boundary".into()));
        }
        // fourth differences across the bump, as a smoothness proxy
        let d = self.tau_half_width / 50.0;
        let max4 = (0..100)
            .map(|i| {
                let t = self.tau_center - self.tau_half_width + i as f64 * d;
                let b = |s: f64| self.beta(s, self.rho_center);
                (b(t - 2.0 * d) - 4.0 * b(t - d) + 6.0 * b(t) - 4.0 * b(t + d) + b(t + 2.0 * d)).abs() / d.powi(4)
            })
            .fold(0.0f64, f64::max);
        if !max4.is_finite() {
            return Err(Error::InvalidInput("deformation profile is not smooth".into()));
        }
        let c = 1.0 - self.amplitude.abs();
        Ok(c)
    }
}

/// Finite-volume discretization of L on the half strip.
#[derive(Clone, Debug)]
pub struct FdGrid {
    pub model: SpacetimeModel,
    pub theta: ThetaValue,
    pub intervals: usize,
    pub h: f64,
    /// twist exponent 1/2 - ν
    pub a: f64,
    pub y: Vec<f64>,
    pub mass: Vec<f64>,
    /// face weights between nodes j and j+1
    pub kappa: Vec<f64>,
    pub vrest: Vec<f64>,
    /// first active node: 1 under Dirichlet, else 0
    pub first: usize,
    pub safety: f64,
}

impl FdGrid {
    pub fn new(model: &SpacetimeModel, symbol: &BoundarySymbol, intervals: usize) -> Result<Self> {
        if model.kind != ModelKind::HalfStrip1p1 {
            return Err(Error::UnsupportedModel("time-domain evolution runs on the 1+1 half strip".into()));
        }
        if !(model.nu > 0.0 && model.nu < 1.0) {
            return Err(Error::UnsupportedModel(format!("evolution needs 0 < ν < 1, got {}", model.nu)));
        }
        if intervals < 16 {
            return Err(Error::OutOfRange { what: "evolution intervals", value: intervals as f64 });
        }
        let nu = model.nu;
        let a = 0.5 - nu;
        let h = PI / 2.0 / intervals as f64;
        let y: Vec<f64> = (0..=intervals).map(|j| j as f64 * h).collect();
        let prim = |s: f64| s.powf(2.0 * a + 1.0) / (2.0 * a + 1.0);
        let mass: Vec<f64> = (0..=intervals)
            .map(|j| {
                let lo = (y[j] - 0.5 * h).max(0.0);
                let hi = (y[j] + 0.5 * h).min(PI / 2.0);
                prim(hi) - prim(lo)
            })
            .collect();
        let kappa: Vec<f64> = (0..intervals)
            .map(|j| 2.0 * nu / (y[j + 1].powf(2.0 * nu) - y[j].powf(2.0 * nu)))
            .collect();
        let c = nu * nu - 0.25;
        let vrest: Vec<f64> = y
            .iter()
            .map(|&s| if s < 1e-4 { c * (1.0 / 3.0 + s * s / 15.0) } else { c * (1.0 / s.sin().powi(2) - 1.0 / (s * s)) })
            .collect();
        let theta = theta_of_mode(symbol, 2, 0);
        let first = if theta == ThetaValue::Infinite { 1 } else { 0 };
        Ok(FdGrid { model: model.clone(), theta, intervals, h, a, y, mass, kappa, vrest, first, safety: 0.9 })
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self, j: usize) -> f64 {
        PI / 2.0 - self.y[j]
    }

    /// K w, the stiffness action (mass times L); inactive nodes give 0.
    pub fn stiffness(&self, w: &[f64]) -> Vec<f64> {
        let j_max = self.intervals;
        let mut out = vec![0.0; w.len()];
        for j in self.first..j_max {
            let mut v = self.mass[j] * self.vrest[j] * w[j];
            v -= self.kappa[j] * (w[j + 1] - w[j]);
            if j > 0 {
                v += self.kappa[j - 1] * (w[j] - w[j - 1]);
            } else if let ThetaValue::Finite(t) = self.theta {
                v += 2.0 * self.model.nu * t * w[0];
            }
            out[j] = v;
        }
        out
    }

    /// Gershgorin bound on the largest eigenvalue of M⁻¹K.
    pub fn lambda_bound(&self) -> f64 {
        (self.first..self.intervals)
            .map(|j| {
                let mut r = 2.0 * self.kappa[j] + self.mass[j] * self.vrest[j].abs();
                if j > 0 {
                    r += 2.0 * self.kappa[j - 1];
                } else if let ThetaValue::Finite(t) = self.theta {
                    r += (2.0 * self.model.nu * t).abs();
                }
                r / self.mass[j]
            })
            .fold(0.0, f64::max)
    }

    /// Largest stable |dτ| for a given β_max.
    pub fn cfl_limit(&self, beta_max: f64) -> f64 {
        self.safety * 2.0 / (beta_max * self.lambda_bound()).sqrt()
    }

    /// Twisted nodal values of a ψ-gauge function; node 0 takes the boundary
    /// coefficient A.
    pub fn twist(&self, psi: impl Fn(f64) -> f64, boundary_a: f64) -> Vec<f64> {
        let mut w: Vec<f64> = (0..=self.intervals)
            .map(|j| if j == 0 { boundary_a } else { psi(self.rho(j)) / self.y[j].powf(self.a) })
            .collect();
        w[self.intervals] = 0.0;
        if self.first == 1 {
            w[0] = 0.0;
        }
        w
    }

    /// ψ = y^a w at the nodes j ≥ 1.
    pub fn psi(&self, w: &[f64]) -> Vec<f64> {
        (1..=self.intervals).map(|j| self.y[j].powf(self.a) * w[j]).collect()
    }

    /// ψ-gauge source divided by y^a at the nodes.
    fn source_profile(&self, radial: &RadialProfile) -> Result<Vec<f64>> {
        match radial {
            RadialProfile::Bump { center, half_width } => Ok((0..=self.intervals)
                .map(|j| if j == 0 || j == self.intervals { 0.0 } else { bump(self.rho(j), *center, *half_width) / self.y[j].powf(self.a) })
                .collect()),
            _ => Err(Error::InvalidInput("finite-difference sources need bump radial profiles".into())),
        }
    }
}

/// (τ, w, p) with p = β⁻¹ ∂_τ w.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionState {
    pub tau: f64,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
}

impl EvolutionState {
    pub fn zero(grid: &FdGrid, tau: f64) -> Self {
        EvolutionState { tau, w: vec![0.0; grid.len()], p: vec![0.0; grid.len()] }
    }

    /// ∂_τ w = β p.
    pub fn velocity(&self, grid: &FdGrid, profile: &DeformationProfile) -> Vec<f64> {
        (0..grid.len()).map(|j| profile.beta(self.tau, grid.rho(j)) * self.p[j]).collect()
    }

    /// ½ pᵀMp + ½ wᵀKw; conserved up to O(dτ²) where β ≡ 1.
    pub fn energy(&self, grid: &FdGrid) -> f64 {
        let kw = grid.stiffness(&self.w);
        let kin: f64 = self.p.iter().zip(&grid.mass).map(|(p, m)| m * p * p).sum();
        let pot: f64 = self.w.iter().zip(&kw).map(|(w, k)| w * k).sum();
        0.5 * (kin + pot)
    }

    /// Fit of the outermost nodes to A + B y^{2ν}; returns |B - θA| / (|A| + |B|).
    pub fn closure_defect(&self, grid: &FdGrid) -> f64 {
        let two_nu = 2.0 * grid.model.nu;
        let (y1, y2) = (grid.y[1], grid.y[2]);
        let (w1, w2) = (self.w[1], self.w[2]);
        let b = (w2 - w1) / (y2.powf(two_nu) - y1.powf(two_nu));
        let a = w1 - b * y1.powf(two_nu);
        let scale = a.abs() + b.abs();
        if scale == 0.0 {
            return 0.0;
        }
        match grid.theta {
            ThetaValue::Infinite => a.abs() / scale,
            ThetaValue::Finite(t) => (b - t * a).abs() / scale,
        }
    }
}

/// A source term f(τ, ρ) for the w equation.
pub trait Source: Sync {
    /// f/y^a at the nodes at time τ, or None when it vanishes.
    fn at(&self, tau: f64) -> Option<Vec<f64>>;
}

pub struct NoSource;

impl Source for NoSource {
    fn at(&self, _tau: f64) -> Option<Vec<f64>> {
        None
    }
}

/// A separable test function used as a source on an FdGrid.
pub struct FdSource {
    terms: Vec<(crate::propagators::TimeProfile, Vec<f64>)>,
}

impl FdSource {
    pub fn new(grid: &FdGrid, f: &TestFunction) -> Result<Self> {
        let terms = f
            .terms
            .iter()
            .map(|t| Ok((t.time.clone(), grid.source_profile(&t.radial)?.into_iter().map(|v| v * t.amplitude).collect())))
            .collect::<Result<Vec<_>>>()?;
        Ok(FdSource { terms })
    }
}

impl Source for FdSource {
    fn at(&self, tau: f64) -> Option<Vec<f64>> {
        let mut out: Option<Vec<f64>> = None;
        for (tp, prof) in &self.terms {
            let s = tp.at(tau);
            if s != 0.0 {
                let o = out.get_or_insert_with(|| vec![0.0; prof.len()]);
                for (a, b) in o.iter_mut().zip(prof) {
                    *a += s * b;
                }
            }
        }
        out
    }
}

fn kick(grid: &FdGrid, state: &mut EvolutionState, src: Option<Vec<f64>>, half: f64) {
    let kw = grid.stiffness(&state.w);
    for j in grid.first..grid.intervals {
        let f = src.as_ref().map_or(0.0, |s| s[j]);
        state.p[j] += half * (f - kw[j] / grid.mass[j]);
    }
}

fn beta_max(profile: &DeformationProfile) -> f64 {
    1.0 + profile.amplitude.max(0.0)
}

/// One kick-drift-kick step of size dτ (negative marches backward).
pub fn step(grid: &FdGrid, state: &EvolutionState, profile: &DeformationProfile, dtau: f64, source: &dyn Source) -> Result<EvolutionState> {
    let limit = grid.cfl_limit(beta_max(profile));
    if dtau.abs() > limit {
        return Err(Error::CflViolation { dtau: dtau.abs(), limit });
    }
    Ok(step_unchecked(grid, state, profile, dtau, source))
}

fn step_unchecked(grid: &FdGrid, state: &EvolutionState, profile: &DeformationProfile, dtau: f64, source: &dyn Source) -> EvolutionState {
    let mut s = state.clone();
    let src = source.at(s.tau);
    kick(grid, &mut s, src, 0.5 * dtau);
    let tm = s.tau + 0.5 * dtau;
    for j in grid.first..grid.intervals {
        s.w[j] += dtau * profile.beta(tm, grid.rho(j)) * s.p[j];
    }
    s.tau += dtau;
    let src = source.at(s.tau);
    kick(grid, &mut s, src, 0.5 * dtau);
    s
}

/// Runs `steps` steps, calling `observe` on the initial state and after every step.
pub fn evolve<F: FnMut(&EvolutionState)>(
    grid: &FdGrid,
    profile: &DeformationProfile,
    init: EvolutionState,
    dtau: f64,
    steps: usize,
    source: &dyn Source,
    mut observe: F,
) -> Result<EvolutionState> {
    let limit = grid.cfl_limit(beta_max(profile));
    if dtau.abs() > limit {
        return Err(Error::CflViolation { dtau: dtau.abs(), limit });
    }
    let mut s = init;
    observe(&s);
    for _ in 0..steps {
        s = step_unchecked(grid, &s, profile, dtau, source);
        if s.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::ClosureDiverged { tau: s.tau });
        }
        observe(&s);
    }
    Ok(s)
}

/// Growth-rate estimate (‖Aᴺx‖/‖x‖)^{1/N} of the static one-step map.
pub fn step_spectral_radius(grid: &FdGrid, dtau: f64, iterations: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = EvolutionState::zero(grid, 0.0);
    for j in grid.first..grid.intervals {
        s.w[j] = rng.gen_range(-1.0..1.0);
        s.p[j] = rng.gen_range(-1.0..1.0);
    }
    // norm in which the map is (nearly) an isometry at small dτ
    let norm = |s: &EvolutionState| -> f64 {
        let m: f64 = s.p.iter().zip(&grid.mass).map(|(p, m)| m * p * p).sum();
        let w: f64 = s.w.iter().zip(&grid.mass).map(|(w, m)| m * w * w).sum();
        (m + w * grid.lambda_bound()).sqrt()
    };
    let n0 = norm(&s);
    let mut log_growth = 0.0;
    let profile = DeformationProfile::none();
    for _ in 0..iterations {
        s = step(grid, &s, &profile, dtau, &NoSource)?;
        let n = norm(&s);
        log_growth += (n / n0).ln();
        for v in s.w.iter_mut().chain(s.p.iter_mut()) {
            *v *= n0 / n;
        }
    }
    Ok((log_growth / iterations as f64).exp())
}

/// Snapshots of a field history.
#[derive(Clone, Debug, Serialize)]
pub struct FieldHistory {
    pub rho: Vec<f64>,
    pub taus: Vec<f64>,
    /// ψ at the nodes j ≥ 1 for each recorded time
    pub psi: Vec<Vec<f64>>,
}

/// Global time grid τ_n = n·dτ; index of the first node at or after `t`.
fn grid_index_ceil(t: f64, dtau: f64) -> i64 {
    (t / dtau - 1e-9).ceil() as i64
}

fn grid_index_floor(t: f64, dtau: f64) -> i64 {
    (t / dtau + 1e-9).floor() as i64
}

/// ∫∫ g ψ dρ dτ accumulated one time slice at a time.
struct Pairing {
    time: crate::propagators::TimeProfile,
    weights: Vec<f64>,
}

impl Pairing {
    fn new(grid: &FdGrid, g: &TestFunction) -> Result<Vec<Pairing>> {
        g.terms
            .iter()
            .map(|t| {
                let prof = match &t.radial {
                    RadialProfile::Bump { center, half_width } => (0..=grid.intervals)
                        .map(|j| {
                            if j == 0 {
                                0.0
                            } else {
                                t.amplitude * grid.h * bump(grid.rho(j), *center, *half_width) * grid.y[j].powf(grid.a)
                            }
                        })
                        .collect(),
                    _ => return Err(Error::InvalidInput("finite-difference pairings need bump radial profiles".into())),
                };
                Ok(Pairing { time: t.time.clone(), weights: prof })
            })
            .collect()
    }

    fn slice(list: &[Pairing], tau: f64, w: &[f64]) -> f64 {
        list.iter()
            .map(|p| {
                let s = p.time.at(tau);
                if s == 0.0 {
                    0.0
                } else {
                    s * p.weights.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
                }
            })
            .sum()
    }
}

/// Retarded solution of P ψ = f, zero before supp f, recorded every `stride`
/// steps up to `t_end`.
pub fn fd_green(grid: &FdGrid, profile: &DeformationProfile, source: &TestFunction, dtau: f64, t_end: f64, stride: usize) -> Result<FieldHistory> {
    let (ts, _) = source.t_support().ok_or_else(|| Error::InvalidInput("empty source".into()))?;
    let n0 = grid_index_floor(ts, dtau) - 2;
    let n1 = grid_index_ceil(t_end, dtau);
    let src = FdSource::new(grid, source)?;
    let mut hist = FieldHistory { rho: (1..=grid.intervals).map(|j| grid.rho(j)).collect(), taus: vec![], psi: vec![] };
    let mut count = 0usize;
    evolve(grid, profile, EvolutionState::zero(grid, n0 as f64 * dtau), dtau, (n1 - n0).max(0) as usize, &src, |s| {
        if count % stride.max(1) == 0 {
            hist.taus.push(s.tau);
            hist.psi.push(grid.psi(&s.w));
        }
        count += 1;
    })?;
    Ok(hist)
}

/// ∫ g · (G^± f) with the finite-difference retarded (forward) or advanced
/// (backward) solution.
pub fn fd_pairing(grid: &FdGrid, profile: &DeformationProfile, g: &TestFunction, f: &TestFunction, kind: KernelKind, dtau: f64) -> Result<f64> {
    let (fs, fe) = f.t_support().ok_or_else(|| Error::InvalidInput("empty source".into()))?;
    let (gs, ge) = g.t_support().ok_or_else(|| Error::InvalidInput("empty receiver".into()))?;
    let src = FdSource::new(grid, f)?;
    let pair = Pairing::new(grid, g)?;
    let mut acc = 0.0;
    match kind {
        KernelKind::Retarded => {
            let n0 = grid_index_floor(fs, dtau) - 2;
            let n1 = grid_index_ceil(ge, dtau) + 1;
            if n1 <= n0 {
                return Ok(0.0);
            }
            evolve(grid, profile, EvolutionState::zero(grid, n0 as f64 * dtau), dtau, (n1 - n0) as usize, &src, |s| {
                acc += Pairing::slice(&pair, s.tau, &s.w) * dtau;
            })?;
        }
        KernelKind::Advanced => {
            let n1 = grid_index_ceil(fe, dtau) + 2;
            let n0 = grid_index_floor(gs, dtau) - 1;
            if n1 <= n0 {
                return Ok(0.0);
            }
            evolve(grid, profile, EvolutionState::zero(grid, n1 as f64 * dtau), -dtau, (n1 - n0) as usize, &src, |s| {
                acc += Pairing::slice(&pair, s.tau, &s.w) * dtau;
            })?;
        }
        KernelKind::Causal => {
            return Ok(fd_pairing(grid, profile, g, f, KernelKind::Retarded, dtau)?
                - fd_pairing(grid, profile, g, f, KernelKind::Advanced, dtau)?)
        }
        KernelKind::TwoPoint => return Err(Error::InvalidInput("no finite-difference two-point function".into())),
    }
    Ok(acc)
}

/// Pulled-back two-point matrix over a late-time battery.
#[derive(Clone, Debug, Serialize)]
pub struct PullbackResult {
    pub ids: Vec<String>,
    /// λ₂'(f_i, f_j)
    pub lambda: Vec<Vec<Complex64>>,
    /// G_β(f_i, f_j) from the finite-difference retarded and advanced solutions
    pub causal_fd: Vec<Vec<f64>>,
}

impl PullbackResult {
    /// max |λ'(f,g) - λ'(g,f) - iG(f,g)| relative to max |G|.
    pub fn ccr_defect(&self) -> f64 {
        let n = self.ids.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = self.lambda[i][j] - self.lambda[j][i] - Complex64::i() * self.causal_fd[i][j];
                worst = worst.max(d.norm());
                scale = scale.max(self.causal_fd[i][j].abs());
            }
        }
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    /// min_i λ'(f_i, f_i) relative to max_i |λ'(f_i, f_i)|.
    pub fn min_diagonal(&self) -> f64 {
        let diag: Vec<f64> = (0..self.ids.len()).map(|i| self.lambda[i][i].re).collect();
        let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diag.iter().fold(f64::INFINITY, |m, v| m.min(*v)) / scale.max(f64::MIN_POSITIVE)
    }
}

/// For each late test function f: h_f = P(χ·G_β f) on the early static window,
/// projected on the eigenmodes of `kernel`, then λ₂'(f, g) = Σ Ĥ_f conj(Ĥ_g)/(2ω).
/// χ is a quintic smoothstep over `early_window`.
pub fn pull_back_two_point(
    kernel: &KernelSum,
    grid: &FdGrid,
    profile: &DeformationProfile,
    early_window: (f64, f64),
    battery: &[TestFunction],
    dtau: f64,
) -> Result<PullbackResult> {
    if kernel.kind != KernelKind::TwoPoint {
        return Err(Error::InvalidInput("pullback needs the two-point kernel of the early region".into()));
    }
    profile.validate()?;
    let (w1, w2) = early_window;
    let (b0, b1) = profile.tau_support();
    if !profile.is_static() && w2 + 2.0 * dtau >= b0 {
        return Err(Error::WindowOverlap(format!("early window [{w1}, {w2}] reaches the deformation [{b0}, {b1}]")));
    }
    if w2 - w1 < 10.0 * dtau {
        return Err(Error::WindowTooNarrow(format!("cutoff window [{w1}, {w2}] spans fewer than 10 steps")));
    }
    for f in battery {
        let (s, _) = f.t_support().ok_or_else(|| Error::InvalidInput(format!("{}: empty test function", f.id)))?;
        if s <= w2 || (!profile.is_static() && s <= b1) {
            return Err(Error::WindowOverlap(format!("{} starts at {s}, before the deformation ends", f.id)));
        }
    }
    let data = &kernel.data;
    let set = data.mode(0).ok_or(Error::OutOfRange { what: "ell", value: 0.0 })?;
    let modes: Vec<_> = set.pairs.iter().take(kernel.k_max).collect();
    // M w_k and K w_k for the projections
    let proj: Vec<(f64, Vec<f64>, Vec<f64>)> = modes
        .par_iter()
        .map(|p| {
            let wk = grid.twist(|r| p.func.eval(&data.chart, r), p.a);
            let mk: Vec<f64> = wk.iter().zip(&grid.mass).map(|(a, m)| a * m).collect();
            (p.omega(), mk, grid.stiffness(&wk))
        })
        .collect();
    let late_end = battery.iter().filter_map(|f| f.t_support()).map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let n_lo = grid_index_floor(w1, dtau) - 2;
    let n_hi = grid_index_ceil(w2, dtau) + 2;
    let reg = if kernel.epsilon > 0.0 { kernel.epsilon } else { 0.0 };

    struct Column {
        hat: Vec<Complex64>,
        ret: Vec<f64>,
        adv: Vec<f64>,
    }
    let pairings: Vec<Vec<Pairing>> = battery.iter().map(|g| Pairing::new(grid, g)).collect::<Result<_>>()?;
    let columns: Vec<Column> = battery
        .par_iter()
        .map(|f| -> Result<Column> {
            let (fs, fe) = f.t_support().unwrap();
            let src = FdSource::new(grid, f)?;
            // advanced solution, marching back into the early window
            let n_top = grid_index_ceil(fe.max(late_end), dtau) + 2;
            let mut adv = vec![0.0; battery.len()];
            let mut snaps: Vec<(i64, Vec<f64>)> = Vec::new();
            let mut idx = n_top;
            evolve(grid, profile, EvolutionState::zero(grid, n_top as f64 * dtau), -dtau, (n_top - n_lo) as usize, &src, |s| {
                for (i, p) in pairings.iter().enumerate() {
                    adv[i] += Pairing::slice(p, s.tau, &s.w) * dtau;
                }
                if idx <= n_hi && idx >= n_lo {
                    // G f = -Adv f before supp f
                    snaps.push((idx, s.w.iter().map(|v| -v).collect()));
                }
                idx -= 1;
            })?;
            snaps.reverse();
            // retarded solution over the late window
            let n_start = grid_index_floor(fs, dtau) - 2;
            let mut ret = vec![0.0; battery.len()];
            evolve(grid, profile, EvolutionState::zero(grid, n_start as f64 * dtau), dtau, (n_top - n_start).max(0) as usize, &src, |s| {
                for (i, p) in pairings.iter().enumerate() {
                    ret[i] += Pairing::slice(p, s.tau, &s.w) * dtau;
                }
            })?;
            // h = D_tt(χ w) + L(χ w), projected mode by mode
            let taus: Vec<f64> = snaps.iter().map(|(n, _)| *n as f64 * dtau).collect();
            let chi: Vec<f64> = taus.iter().map(|&t| smoothstep5(t, w1, w2)).collect();
            let hat: Vec<Complex64> = proj
                .iter()
                .map(|(omega, mk, qk)| {
                    let alpha: Vec<f64> =
                        snaps.iter().zip(&chi).map(|((_, w), c)| c * mk.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).collect();
                    let beta: Vec<f64> =
                        snaps.iter().zip(&chi).map(|((_, w), c)| c * qk.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).collect();
                    let mut acc = Complex64::new(0.0, 0.0);
                    for n in 1..snaps.len() - 1 {
                        let h = (alpha[n + 1] - 2.0 * alpha[n] + alpha[n - 1]) / (dtau * dtau) + beta[n];
                        acc += Complex64::from_polar(h * dtau, omega * taus[n]);
                    }
                    acc * (-reg * omega).exp().sqrt()
                })
                .collect();
            Ok(Column { hat, ret, adv })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = battery.len();
    let mut lambda = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut causal_fd = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, (omega, _, _)) in proj.iter().enumerate() {
                acc += columns[i].hat[k] * columns[j].hat[k].conj() / (2.0 * omega);
            }
            lambda[i][j] = acc;
            // G(f_i, f_j) = ∫ f_i (Ret - Adv) f_j
            causal_fd[i][j] = columns[j].ret[i] - columns[j].adv[i];
        }
    }
    Ok(PullbackResult { ids: battery.iter().map(|f| f.id.clone()).collect(), lambda, causal_fd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_model_nu, RadialChart};
    use crate::mode_spectrum::{compute_spectrum, SpectralData, SpectrumSettings};
    use crate::propagators::{build_kernel, smear, TimeProfile, ZonalProfile};
    use std::sync::Arc;

    fn strip(nu: f64) -> SpacetimeModel {
        build_model_nu(2, nu, ModelKind::HalfStrip1p1).unwrap()
    }

    fn modes(model: &SpacetimeModel, symbol: BoundarySymbol, k: usize) -> Arc<SpectralData> {
        let s = SpectrumSettings { chart: RadialChart::default(), l_max: 0, k_max: k, ..Default::default() };
        Arc::new(compute_spectrum(model, &symbol, &s).unwrap())
    }

    fn tf(id: &str, t: f64, tw: f64, r: f64, rw: f64) -> TestFunction {
        TestFunction::single(
            id,
            TimeProfile::Bump { center: t, half_width: tw },
            RadialProfile::Bump { center: r, half_width: rw },
            ZonalProfile::monopole(0),
        )
    }

    #[test]
    fn eigenmode_oscillates_at_second_order() {
        let m = strip(0.3);
        let sym = BoundarySymbol::Robin { theta: 0.5 };
        let d = modes(&m, sym, 1);
        let p = &d.mode(0).unwrap().pairs[0];
        let period = 2.0 * PI / p.omega();
        let mut errs = vec![];
        for j in [100, 200, 400] {
            let g = FdGrid::new(&m, &sym, j).unwrap();
            let w0 = g.twist(|r| p.func.eval(&d.chart, r), p.a);
            let dt = 0.5 * g.h;
            let steps = (period / dt).round() as usize;
            let dt = period / steps as f64;
            let init = EvolutionState { tau: 0.0, w: w0.clone(), p: vec![0.0; g.len()] };
            let end = evolve(&g, &DeformationProfile::none(), init, dt, steps, &NoSource, |_| {}).unwrap();
            let num: f64 = (1..j).map(|i| g.mass[i] * (end.w[i] - w0[i]).powi(2)).sum::<f64>();
            let den: f64 = (1..j).map(|i| g.mass[i] * w0[i].powi(2)).sum::<f64>();
            errs.push((num / den).sqrt());
        }
        assert!(errs[2] < 1e-3, "{errs:?}");
        for e in errs.windows(2) {
            let order = (e[0] / e[1]).log2();
            assert!(order > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn zero_data_stays_zero_and_cfl_enforced() {
        let m = strip(0.5);
        let g = FdGrid::new(&m, &BoundarySymbol::Dirichlet, 64).unwrap();
        let s = EvolutionState::zero(&g, 0.0);
        let end = evolve(&g, &DeformationProfile::none(), s.clone(), 0.5 * g.h, 100, &NoSource, |_| {}).unwrap();
        assert!(end.w.iter().all(|v| *v == 0.0));
        assert!(matches!(step(&g, &s, &DeformationProfile::none(), 3.0 * g.h, &NoSource), Err(Error::CflViolation { .. })));
        let ads = crate::geometry::build_model_nu(4, 0.5, ModelKind::GlobalAds).unwrap();
        assert!(matches!(FdGrid::new(&ads, &BoundarySymbol::Dirichlet, 64), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn energy_drift_is_second_order() {
        let m = strip(0.3);
        let sym = BoundarySymbol::Robin { theta: 1.0 };
        let mut drifts = vec![];
        for j in [100, 200] {
            let g = FdGrid::new(&m, &sym, j).unwrap();
            let w0 = g.twist(|r| bump(r, 0.8, 0.3), 0.0);
            let dt = 0.5 * g.h;
            let init = EvolutionState { tau: 0.0, w: w0, p: vec![0.0; g.len()] };
            let e0 = init.energy(&g);
            let mut worst: f64 = 0.0;
            evolve(&g, &DeformationProfile::none(), init, dt, (2.0 * PI / dt) as usize, &NoSource, |s| {
                worst = worst.max((s.energy(&g) - e0).abs() / e0);
            })
            .unwrap();
            drifts.push(worst);
        }
        assert!(drifts[0] < 1e-2 && drifts[1] < drifts[0] / 3.0, "{drifts:?}");
    }

    #[test]
    fn one_step_map_is_stable() {
        let g = FdGrid::new(&strip(0.3), &BoundarySymbol::Robin { theta: 1.0 }, 128).unwrap();
        let r = step_spectral_radius(&g, 0.5 * g.h, 400, 3).unwrap();
        assert!(r <= 1.0 + 1e-3, "{r}");
    }

    #[test]
    fn retarded_matches_spectral_kernel() {
        let m = strip(0.5);
        let sym = BoundarySymbol::Robin { theta: 1.0 };
        let d = modes(&m, sym, 60);
        let k = build_kernel(d, KernelKind::Retarded).unwrap();
        let f = tf("f", 1.0, 0.3, 0.7, 0.25);
        let g = tf("g", 2.2, 0.3, 1.0, 0.25);
        let spectral = smear(&k, &g, &f).unwrap().value.re;
        let mut errs = vec![];
        for j in [200, 400] {
            let grid = FdGrid::new(&m, &sym, j).unwrap();
            let fd = fd_pairing(&grid, &DeformationProfile::none(), &g, &f, KernelKind::Retarded, 0.5 * grid.h).unwrap();
            errs.push((fd - spectral).abs() / spectral.abs());
        }
        assert!(errs[1] < 1e-3 && errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn source_after_window_gives_zero() {
        let m = strip(0.5);
        let grid = FdGrid::new(&m, &BoundarySymbol::Dirichlet, 100).unwrap();
        let f = tf("f", 3.0, 0.2, 0.7, 0.2);
        let g = tf("g", 1.0, 0.2, 0.7, 0.2);
        let v = fd_pairing(&grid, &DeformationProfile::none(), &g, &f, KernelKind::Retarded, 0.5 * grid.h).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn green_front_bounces_on_time() {
        let m = strip(0.5);
        let grid = FdGrid::new(&m, &BoundarySymbol::Dirichlet, 800).unwrap();
        let (rs, ts) = (PI / 4.0, 0.2);
        let src = tf("s", ts, 0.04, rs, 0.04);
        let hist = fd_green(&grid, &DeformationProfile::none(), &src, 0.5 * grid.h, 1.6, 1).unwrap();
        let probe = hist.rho.iter().position(|&r| r <= 1.2).unwrap();
        let series: Vec<f64> = hist.psi.iter().map(|p| p[probe]).collect();
        let rate: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let t_of = |i: usize| hist.taus[i];
        let split = rate.len() / 2;
        let first = (0..split).max_by(|&a, &b| rate[a].partial_cmp(&rate[b]).unwrap()).unwrap();
        let second = (first + 20..rate.len()).max_by(|&a, &b| rate[a].partial_cmp(&rate[b]).unwrap()).unwrap();
        let bounce = 0.5 * (t_of(first) + t_of(second)) - ts;
        let predicted = PI / 2.0 - rs;
        assert!((bounce - predicted).abs() / predicted < 0.02, "{bounce} vs {predicted}");
    }

    fn battery() -> Vec<TestFunction> {
        vec![tf("a", 3.6, 0.25, 0.6, 0.25), tf("b", 3.9, 0.3, 1.0, 0.3), tf("c", 4.1, 0.2, 0.4, 0.2)]
    }

    #[test]
    fn pullback_without_deformation_is_the_static_state() {
        let m = strip(0.5);
        let sym = BoundarySymbol::Robin { theta: 1.0 };
        let d = modes(&m, sym, 60);
        let k = build_kernel(d, KernelKind::TwoPoint).unwrap();
        let grid = FdGrid::new(&m, &sym, 400).unwrap();
        let b = battery();
        let r = pull_back_two_point(&k, &grid, &DeformationProfile::none(), (0.5, 1.2), &b, 0.5 * grid.h).unwrap();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (i, f) in b.iter().enumerate() {
            for (j, g) in b.iter().enumerate() {
                let direct = smear(&k, f, g).unwrap().value;
                worst = worst.max((r.lambda[i][j] - direct).norm());
                scale = scale.max(direct.norm());
            }
        }
        assert!(worst / scale < 1e-3, "{}", worst / scale);
        assert!(r.min_diagonal() > 0.0);
    }

    #[test]
    fn pullback_with_deformation_keeps_ccr_and_positivity() {
        let m = strip(0.5);
        let sym = BoundarySymbol::Robin { theta: 1.0 };
        let d = modes(&m, sym, 60);
        let k = build_kernel(d, KernelKind::TwoPoint).unwrap();
        let profile = DeformationProfile { amplitude: 0.4, tau_center: 2.2, tau_half_width: 0.6, rho_center: 0.8, rho_half_width: 0.4 };
        let mut defects = vec![];
        for j in [200, 400] {
            let grid = FdGrid::new(&m, &sym, j).unwrap();
            let r = pull_back_two_point(&k, &grid, &profile, (0.5, 1.2), &battery(), 0.5 * grid.h).unwrap();
            assert!(r.min_diagonal() > 0.0);
            defects.push(r.ccr_defect());
        }
        assert!(defects[1] < defects[0] / 3.0, "{defects:?}");
        let grid = FdGrid::new(&m, &sym, 100).unwrap();
        assert!(matches!(
            pull_back_two_point(&k, &grid, &profile, (0.5, 1.7), &battery(), 0.5 * grid.h),
            Err(Error::WindowOverlap(_))
        ));
    }
}

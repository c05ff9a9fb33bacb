//! Per-mode singular Sturm-Liouville problems
//!
//! ```text
//!     -ψ'' + V_ℓ ψ = ω² ψ   on (0, π/2),   ψ ~ ρ^{1/2+μ_ℓ} at the center,
//!     ψ = A x^{1/2-ν}(1 + …) + B x^{1/2+ν}(1 + …)   near x = cos ρ = 0,
//! ```
//!
//! with the boundary condition B = θ_ℓ·A (Dirichlet: A = 0). Eigenpairs are
//! found by shooting from the center, bracketing the shooting function on a
//! uniform grid in σ = sign(ω²)·|ω²|^{1/2}, bisection and a secant polish.
//!
//! Near both singular ends the solution is carried as a Frobenius series, so
//! norms and inner products include the two end layers exactly.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_symbol::{theta_of_mode, validate_hypothesis, BoundarySymbol, ThetaValue};
use crate::error::{Error, Result};
use crate::geometry::{ModelKind, RadialChart, SpacetimeModel};
use crate::series::{frobenius_coeffs, frobenius_coeffs_adaptive, Puiseux};
use crate::special::{simpson, trapezoid};

/// A radial function on (0, π/2): interior samples on the chart plus series
/// representations in the two end layers.
#[derive(Clone, Debug)]
pub struct RadialFunction {
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    /// ψ as a series in ξ = sin ρ for ρ < match_radius.
    pub center: Puiseux,
    /// ψ as a series in ξ = cos ρ for x < boundary_layer.
    pub boundary: Puiseux,
}

impl RadialFunction {
    /// Function supported strictly inside the chart, given at the nodes.
    pub fn interior(psi: Vec<f64>, dpsi: Vec<f64>) -> Self {
        RadialFunction { psi, dpsi, center: Puiseux::zero(2), boundary: Puiseux::zero(2) }
    }

    pub fn eval(&self, chart: &RadialChart, rho: f64) -> f64 {
        self.eval_with_deriv(chart, rho).0
    }

    /// (ψ, dψ/dρ) at any ρ in (0, π/2).
    pub fn eval_with_deriv(&self, chart: &RadialChart, rho: f64) -> (f64, f64) {
        if rho < chart.rho_min() {
            let z = rho.sin();
            (self.center.eval(z), rho.cos() * self.center.deriv().eval(z))
        } else if rho > chart.rho_max() {
            let x = rho.cos();
            (self.boundary.eval(x), -rho.sin() * self.boundary.deriv().eval(x))
        } else {
            let h = chart.h();
            let s = (rho - chart.rho_min()) / h;
            let i = (s.floor() as usize).min(chart.intervals - 1);
            let t = s - i as f64;
            let (y0, y1) = (self.psi[i], self.psi[i + 1]);
            let (m0, m1) = (self.dpsi[i] * h, self.dpsi[i + 1] * h);
            let t2 = t * t;
            let t3 = t2 * t;
            let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * m0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * m1;
            let d = (6.0 * t2 - 6.0 * t) * y0
                + (3.0 * t2 - 4.0 * t + 1.0) * m0
                + (-6.0 * t2 + 6.0 * t) * y1
                + (3.0 * t2 - 2.0 * t) * m1;
            (v, d / h)
        }
    }

    /// L² inner product over (0, π/2). The interior part is the trapezoid rule
    /// with the h² endpoint correction built from the derivative samples.
    pub fn inner(&self, other: &RadialFunction, chart: &RadialChart) -> f64 {
        let h = chart.h();
        let n = self.psi.len();
        let prod: Vec<f64> = self.psi.iter().zip(&other.psi).map(|(a, b)| a * b).collect();
        let dprod = |i: usize| self.dpsi[i] * other.psi[i] + self.psi[i] * other.dpsi[i];
        let mut s = trapezoid(&prod, h) - h * h / 12.0 * (dprod(n - 1) - dprod(0));
        s += layer_integral(&self.center.mul(&other.center), chart.center_xi());
        s += layer_integral(&self.boundary.mul(&other.boundary), chart.boundary_layer);
        s
    }

    /// Inner product with a function given only at the interior nodes.
    pub fn inner_samples(&self, samples: &[f64], chart: &RadialChart) -> f64 {
        let prod: Vec<f64> = self.psi.iter().zip(samples).map(|(a, b)| a * b).collect();
        simpson(&prod, chart.h())
    }

    pub fn norm(&self, chart: &RadialChart) -> f64 {
        self.inner(self, chart).sqrt()
    }

    pub fn scaled(&self, s: f64) -> RadialFunction {
        RadialFunction {
            psi: self.psi.iter().map(|v| v * s).collect(),
            dpsi: self.dpsi.iter().map(|v| v * s).collect(),
            center: self.center.scale(s),
            boundary: self.boundary.scale(s),
        }
    }

    /// self + s·other
    pub fn axpy(&self, s: f64, other: &RadialFunction) -> RadialFunction {
        RadialFunction {
            psi: self.psi.iter().zip(&other.psi).map(|(a, b)| a + s * b).collect(),
            dpsi: self.dpsi.iter().zip(&other.dpsi).map(|(a, b)| a + s * b).collect(),
            center: self.center.add(&other.center.scale(s)),
            boundary: self.boundary.add(&other.boundary.scale(s)),
        }
    }

    /// Number of sign changes on (0, π/2), layers included.
    pub fn count_nodes(&self, chart: &RadialChart) -> usize {
        let mut seq = Vec::with_capacity(self.psi.len() + 200);
        seq.push(limit_sign(&self.center));
        let zc = chart.center_xi();
        for m in (1..=40).rev() {
            seq.push(self.center.eval(zc * 0.5f64.powi(m)));
        }
        for i in 1..16 {
            seq.push(self.center.eval(zc * i as f64 / 16.0));
        }
        seq.extend_from_slice(&self.psi);
        let xb = chart.boundary_layer;
        for i in (1..16).rev() {
            seq.push(self.boundary.eval(xb * i as f64 / 16.0));
        }
        for m in 1..=40 {
            seq.push(self.boundary.eval(xb * 0.5f64.powi(m)));
        }
        seq.push(limit_sign(&self.boundary));
        let mut count = 0;
        let mut last = 0.0f64;
        for v in seq {
            if v == 0.0 || !v.is_finite() {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                count += 1;
            }
            last = v;
        }
        count
    }
}

/// Sign of the series as ξ → 0⁺, from the lowest exponent with a nonzero coefficient.
fn limit_sign(p: &Puiseux) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for (e, c) in p.terms() {
        for (j, cj) in c.iter().enumerate() {
            if *cj == 0.0 {
                continue;
            }
            let ex = e + 2.0 * j as f64;
            if best.map_or(true, |(b, _)| ex < b) {
                best = Some((ex, *cj));
            }
        }
    }
    best.map_or(0.0, |(_, c)| c.signum())
}

/// ∫ of a layer series in dρ = dξ / √(1 - ξ²) from the end to ξ_max.
pub(crate) fn layer_integral(p: &Puiseux, xi_max: f64) -> f64 {
    if p.terms().is_empty() {
        return 0.0;
    }
    let jac = Puiseux::one_minus_sq_pow(-0.5, p.order());
    p.mul(&jac).integrate(xi_max).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug)]
pub struct ModeProblem {
    pub model: SpacetimeModel,
    pub symbol: BoundarySymbol,
    pub ell: usize,
    pub chart: RadialChart,
    /// search interval for ω²
    pub omega_bracket: (f64, f64),
    /// bracketing step in σ = sign(ω²)|ω²|^{1/2}
    pub step: f64,
    /// relative eigenvalue tolerance on ω²
    pub tol: f64,
}

impl ModeProblem {
    pub fn new(model: SpacetimeModel, symbol: BoundarySymbol, ell: usize, chart: RadialChart, omega_max: f64) -> Self {
        ModeProblem {
            model,
            symbol,
            ell,
            chart,
            omega_bracket: (-25.0, omega_max * omega_max),
            step: 0.05,
            tol: 1e-10,
        }
    }

    pub fn theta(&self) -> ThetaValue {
        theta_of_mode(&self.symbol, self.model.n, self.ell)
    }

    fn validate(&self) -> Result<()> {
        validate_hypothesis(&self.symbol.into())?;
        self.chart.validate()?;
        if !self.symbol.is_dirichlet() && !(self.model.nu > 0.0 && self.model.nu < 1.0) {
            return Err(Error::UnsupportedModel(format!(
                "non-Dirichlet boundary conditions need 0 < nu < 1, got nu = {}",
                self.model.nu
            )));
        }
        let (lo, hi) = self.omega_bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("bad omega^2 window ({lo}, {hi})")));
        }
        if !(self.tol > 0.0) || !(self.step > 0.0) {
            return Err(Error::InvalidInput("tol and step must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the radial equation that is regular at the center, at a given ω².
#[derive(Clone, Debug)]
pub struct Shot {
    pub omega_sq: f64,
    pub a: f64,
    pub b: f64,
    pub func: RadialFunction,
}

/// Precomputed pieces for repeated shooting at fixed (model, ℓ, chart).
pub struct Shooter {
    nu: f64,
    mu: f64,
    chart: RadialChart,
    v_nodes: Vec<f64>,
    v_mid: Vec<f64>,
}

impl Shooter {
    pub fn new(model: &SpacetimeModel, ell: usize, chart: &RadialChart) -> Result<Self> {
        let pot = model.radial_potential(ell)?;
        let h = chart.h();
        let v_nodes = (0..chart.len()).map(|i| pot.at(chart.rho(i))).collect();
        let v_mid = (0..chart.intervals).map(|i| pot.at(chart.rho(i) + 0.5 * h)).collect();
        Ok(Shooter { nu: pot.nu, mu: pot.mu, chart: chart.clone(), v_nodes, v_mid })
    }

    pub fn chart(&self) -> &RadialChart {
        &self.chart
    }

    /// Boundary basis φ∓ as series in x.
    pub fn boundary_basis(&self, omega_sq: f64) -> (Puiseux, Puiseux) {
        let k = self.chart.boundary_terms;
        let xb = self.chart.boundary_layer;
        let sm = 0.5 - self.nu;
        let sp = 0.5 + self.nu;
        let cm = frobenius_coeffs_adaptive(sm, self.nu, self.mu, omega_sq, k, xb);
        let cp = frobenius_coeffs_adaptive(sp, self.nu, self.mu, omega_sq, k, xb);
        let order = cm.len().max(cp.len());
        (Puiseux::even(sm, &cm, order), Puiseux::even(sp, &cp, order))
    }

    /// Regular center solution as a series in z = sin ρ, scaled to be ≈ 1 at the match radius.
    pub fn center_series(&self, omega_sq: f64) -> Puiseux {
        let s = 0.5 + self.mu;
        let zc = self.chart.center_xi();
        let c = frobenius_coeffs_adaptive(s, self.mu, self.nu, omega_sq, self.chart.center_terms, zc);
        Puiseux::even(s, &c, c.len()).scale(zc.powf(-s))
    }

    /// Integrates from the center only; returns (ψ, ψ') at the boundary-layer edge.
    fn march(&self, omega_sq: f64, store: Option<(&mut Vec<f64>, &mut Vec<f64>)>) -> (f64, f64, Puiseux) {
        let center = self.center_series(omega_sq);
        let rc = self.chart.rho_min();
        let zc = rc.sin();
        let mut y = center.eval(zc);
        let mut p = rc.cos() * center.deriv().eval(zc);
        let h = self.chart.h();
        let n = self.chart.intervals;
        let w = omega_sq;
        match store {
            Some((ps, dps)) => {
                ps.clear();
                dps.clear();
                ps.push(y);
                dps.push(p);
                for i in 0..n {
                    rk4_step(&mut y, &mut p, h, self.v_nodes[i] - w, self.v_mid[i] - w, self.v_nodes[i + 1] - w);
                    ps.push(y);
                    dps.push(p);
                }
            }
            None => {
                for i in 0..n {
                    rk4_step(&mut y, &mut p, h, self.v_nodes[i] - w, self.v_mid[i] - w, self.v_nodes[i + 1] - w);
                }
            }
        }
        (y, p, center)
    }

    /// Trace coefficients (A, B) of a solution with value and ρ-derivative
    /// (y, p) at the boundary-layer edge, via Wronskians with the series basis.
    pub fn traces_at_edge(&self, omega_sq: f64, y: f64, p: f64) -> (f64, f64) {
        let (fm, fp) = self.boundary_basis(omega_sq);
        let x = self.chart.boundary_layer;
        let s = (1.0 - x * x).sqrt();
        let (m, dm) = (fm.eval(x), -s * fm.deriv().eval(x));
        let (q, dq) = (fp.eval(x), -s * fp.deriv().eval(x));
        let wmp = m * dq - dm * q;
        let a = (y * dq - p * q) / wmp;
        let b = (m * p - dm * y) / wmp;
        (a, b)
    }

    /// Wronskian W(φ₋, φ₊) in ρ at the layer edge; equals -2ν.
    pub fn basis_wronskian(&self, omega_sq: f64) -> f64 {
        let (fm, fp) = self.boundary_basis(omega_sq);
        let x = self.chart.boundary_layer;
        let s = (1.0 - x * x).sqrt();
        fm.eval(x) * (-s * fp.deriv().eval(x)) - (-s * fm.deriv().eval(x)) * fp.eval(x)
    }

    /// Shooting function value: (A, B) for the regular solution at ω².
    pub fn traces(&self, omega_sq: f64) -> (f64, f64) {
        let (y, p, _) = self.march(omega_sq, None);
        self.traces_at_edge(omega_sq, y, p)
    }

    pub fn shoot(&self, omega_sq: f64) -> Shot {
        let mut ps = Vec::new();
        let mut dps = Vec::new();
        let (y, p, center) = self.march(omega_sq, Some((&mut ps, &mut dps)));
        let (a, b) = self.traces_at_edge(omega_sq, y, p);
        let (fm, fp) = self.boundary_basis(omega_sq);
        let boundary = fm.scale(a).add(&fp.scale(b));
        Shot { omega_sq, a, b, func: RadialFunction { psi: ps, dpsi: dps, center, boundary } }
    }

    /// Integrates an arbitrary solution from interior data (ψ, ψ') at node `i0`
    /// out to the boundary layer and returns (A, B).
    pub fn traces_from_node(&self, omega_sq: f64, i0: usize, y0: f64, p0: f64) -> (f64, f64) {
        let (mut y, mut p) = (y0, p0);
        let h = self.chart.h();
        for i in i0..self.chart.intervals {
            let w = omega_sq;
            rk4_step(&mut y, &mut p, h, self.v_nodes[i] - w, self.v_mid[i] - w, self.v_nodes[i + 1] - w);
        }
        self.traces_at_edge(omega_sq, y, p)
    }
}

#[inline]
fn rk4_step(y: &mut f64, p: &mut f64, h: f64, q0: f64, qm: f64, q1: f64) {
    let (y0, p0) = (*y, *p);
    let k1y = p0;
    let k1p = q0 * y0;
    let y2 = y0 + 0.5 * h * k1y;
    let k2y = p0 + 0.5 * h * k1p;
    let k2p = qm * y2;
    let y3 = y0 + 0.5 * h * k2y;
    let k3y = p0 + 0.5 * h * k2p;
    let k3p = qm * y3;
    let y4 = y0 + h * k3y;
    let k4y = p0 + h * k3p;
    let k4p = q1 * y4;
    *y = y0 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    *p = p0 + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
}

/// Least-squares fit of boundary-layer samples (x_i, ψ_i) to A·φ₋ + B·φ₊,
/// with the series basis of mode ℓ at ω². Fails when the relative rms
/// residual exceeds `threshold`.
pub fn frobenius_traces(
    samples: &[(f64, f64)],
    model: &SpacetimeModel,
    ell: usize,
    omega_sq: f64,
    terms: usize,
    threshold: f64,
) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least two boundary samples".into()));
    }
    let nu = model.nu;
    let mu = model.mu(ell)?;
    let sm = 0.5 - nu;
    let sp = 0.5 + nu;
    let fm = Puiseux::even(sm, &frobenius_coeffs(sm, nu, mu, omega_sq, terms), terms);
    let fp = Puiseux::even(sp, &frobenius_coeffs(sp, nu, mu, omega_sq, terms), terms);
    let cols: Vec<(f64, f64, f64)> = samples.iter().map(|&(x, y)| (fm.eval(x), fp.eval(x), y)).collect();
    let n1 = cols.iter().map(|c| c.0 * c.0).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let n2 = cols.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let (mut g11, mut g12, mut g22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(u, v, y) in &cols {
        let (u, v) = (u / n1, v / n2);
        g11 += u * u;
        g12 += u * v;
        g22 += v * v;
        r1 += u * y;
        r2 += v * y;
    }
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-14 {
        return Err(Error::FitDiverged { residual: f64::INFINITY, threshold });
    }
    let a = (g22 * r1 - g12 * r2) / det / n1;
    let b = (g11 * r2 - g12 * r1) / det / n2;
    let res2: f64 = cols.iter().map(|&(u, v, y)| (y - a * u - b * v).powi(2)).sum();
    let sig2: f64 = cols.iter().map(|c| c.2 * c.2).sum();
    let residual = (res2 / sig2.max(f64::MIN_POSITIVE)).sqrt();
    if residual > threshold || !residual.is_finite() {
        return Err(Error::FitDiverged { residual, threshold });
    }
    Ok((a, b))
}

/// One normalized eigenpair of a radial mode problem.
#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub omega_sq: f64,
    pub a: f64,
    pub b: f64,
    pub norm: f64,
    pub nodes: usize,
    #[serde(skip)]
    pub func: RadialFunction,
}

impl EigenPair {
    pub fn omega(&self) -> f64 {
        self.omega_sq.signum() * self.omega_sq.abs().sqrt()
    }

    pub fn psi(&self) -> &[f64] {
        &self.func.psi
    }
}

/// Eigenpairs of one ℓ, in increasing order.
#[derive(Clone, Debug, Serialize)]
pub struct ModeSet {
    pub ell: usize,
    pub theta: Option<f64>,
    pub pairs: Vec<EigenPair>,
    /// eigenvalues known to lie below the ω² window (from node counting)
    pub below_window: usize,
}

fn sigma_to_w2(s: f64) -> f64 {
    s * s.abs()
}

fn shooting_value(theta: ThetaValue, a: f64, b: f64) -> f64 {
    match theta {
        ThetaValue::Infinite => a,
        ThetaValue::Finite(t) => b - t * a,
    }
}

/// The k_max lowest eigenpairs in the problem window.
pub fn solve_modes(problem: &ModeProblem, k_max: usize) -> Result<ModeSet> {
    problem.validate()?;
    let shooter = Shooter::new(&problem.model, problem.ell, &problem.chart)?;
    let theta = problem.theta();
    let s = |w2: f64| {
        let (a, b) = shooter.traces(w2);
        shooting_value(theta, a, b)
    };
    let (lo, hi) = problem.omega_bracket;
    let sig_lo = lo.signum() * lo.abs().sqrt();
    let sig_hi = hi.signum() * hi.abs().sqrt();
    let steps = ((sig_hi - sig_lo) / problem.step).ceil() as usize;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_sig = sig_lo;
    let mut prev_val = s(sigma_to_w2(sig_lo));
    for i in 1..=steps {
        if roots.len() >= k_max {
            break;
        }
        let sig = (sig_lo + i as f64 * problem.step).min(sig_hi);
        let val = s(sigma_to_w2(sig));
        if !val.is_finite() {
            return Err(Error::BracketExhausted {
                ell: problem.ell,
                detail: format!("non-finite shooting value at omega^2 = {}", sigma_to_w2(sig)),
            });
        }
        if val == 0.0 {
            roots.push(sigma_to_w2(sig));
            prev_sig = sig;
            prev_val = s(sigma_to_w2(sig + 1e-3 * problem.step));
            continue;
        }
        if prev_val != 0.0 && val.signum() != prev_val.signum() {
            roots.push(refine_root(&s, prev_sig, sig, prev_val, val, problem.tol));
        }
        prev_sig = sig;
        prev_val = val;
    }
    if roots.len() < k_max {
        return Err(Error::BracketExhausted {
            ell: problem.ell,
            detail: format!("found {} of {} roots below omega^2 = {hi}", roots.len(), k_max),
        });
    }
    let chart = &problem.chart;
    let mut pairs = Vec::with_capacity(roots.len());
    let mut below_window = 0;
    for (k, &w2) in roots.iter().enumerate() {
        let shot = shooter.shoot(w2);
        let mut func = shot.func;
        let (mut a, mut b) = (shot.a, shot.b);
        if problem.symbol.is_dirichlet() {
            // the ν₋ branch is switched off; keep only the ν₊ part in the layer
            let (_, fp) = shooter.boundary_basis(w2);
            func.boundary = fp.scale(b);
        }
        let nrm = func.norm(chart);
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::DegenerateRoot { ell: problem.ell, omega_sq: w2 });
        }
        func = func.scaled(1.0 / nrm);
        a /= nrm;
        b /= nrm;
        let nodes = func.count_nodes(chart);
        if k == 0 {
            below_window = nodes;
        } else if nodes != k + below_window {
            return Err(Error::DegenerateRoot { ell: problem.ell, omega_sq: w2 });
        }
        pairs.push(EigenPair { omega_sq: w2, a, b, norm: func.norm(chart), nodes, func });
    }
    Ok(ModeSet { ell: problem.ell, theta: theta.finite(), pairs, below_window })
}

fn refine_root<F: Fn(f64) -> f64>(s: &F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let wa = sigma_to_w2(a);
        let wb = sigma_to_w2(b);
        if (wb - wa).abs() <= tol * wa.abs().max(wb.abs()).max(1.0) {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = s(sigma_to_w2(m));
        if fm == 0.0 {
            return sigma_to_w2(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    // secant polish in ω² within the final bracket
    let (wa, wb) = (sigma_to_w2(a), sigma_to_w2(b));
    let ws = wb - fb * (wb - wa) / (fb - fa);
    if ws.is_finite() && ws >= wa.min(wb) && ws <= wa.max(wb) {
        ws
    } else {
        0.5 * (wa + wb)
    }
}

/// Eigen-data for all ℓ ≤ L_max.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub model: SpacetimeModel,
    pub symbol: BoundarySymbol,
    pub chart: RadialChart,
    pub l_max: usize,
    pub k_max: usize,
    pub omega_max: f64,
    pub modes: Vec<ModeSet>,
}

#[derive(Clone, Debug)]
pub struct SpectrumSettings {
    pub chart: RadialChart,
    pub l_max: usize,
    pub k_max: usize,
    /// upper end of the search window in ω; `None` picks one from k_max and L_max
    pub omega_max: Option<f64>,
    pub omega_sq_min: f64,
    pub step: f64,
    pub tol: f64,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings {
            chart: RadialChart::default(),
            l_max: 20,
            k_max: 60,
            omega_max: None,
            omega_sq_min: -25.0,
            step: 0.05,
            tol: 1e-10,
        }
    }
}

impl SpectrumSettings {
    pub fn window_top(&self) -> f64 {
        self.omega_max
            .unwrap_or((2 * self.k_max + self.l_max) as f64 + 12.0)
    }
}

/// Solves all modes ℓ = 0..=L_max in parallel.
pub fn compute_spectrum(model: &SpacetimeModel, symbol: &BoundarySymbol, settings: &SpectrumSettings) -> Result<SpectralData> {
    let l_max = model.max_ell(settings.l_max);
    let top = settings.window_top();
    let modes: Result<Vec<ModeSet>> = (0..=l_max)
        .into_par_iter()
        .map(|ell| {
            let mut p = ModeProblem::new(model.clone(), *symbol, ell, settings.chart.clone(), top);
            p.omega_bracket.0 = settings.omega_sq_min;
            p.step = settings.step;
            p.tol = settings.tol;
            solve_modes(&p, settings.k_max)
        })
        .collect();
    Ok(SpectralData {
        model: model.clone(),
        symbol: *symbol,
        chart: settings.chart.clone(),
        l_max,
        k_max: settings.k_max,
        omega_max: top,
        modes: modes?,
    })
}

impl SpectralData {
    pub fn mode(&self, ell: usize) -> Option<&ModeSet> {
        self.modes.iter().find(|m| m.ell == ell)
    }

    /// Restricts to a smaller truncation.
    pub fn truncated(&self, l_max: usize, k_max: usize) -> SpectralData {
        let mut d = self.clone();
        d.l_max = l_max.min(self.l_max);
        d.k_max = k_max.min(self.k_max);
        d.modes.retain(|m| m.ell <= d.l_max);
        for m in &mut d.modes {
            m.pairs.truncate(d.k_max);
        }
        d
    }

    /// Largest |⟨ψ_j, ψ_k⟩ - δ_jk| over the first `k` pairs of every ℓ.
    pub fn orthonormality_defect(&self, k: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.modes {
            let n = m.pairs.len().min(k);
            for i in 0..n {
                for j in i..n {
                    let g = m.pairs[i].func.inner(&m.pairs[j].func, &self.chart);
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g - target).abs());
                }
            }
        }
        worst
    }
}

/// Smallest ω² of the data, or `NegativeMode` when any ω² ≤ 0 (or a bound
/// state lies below the search window).
pub fn check_lower_bound(data: &SpectralData) -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for m in &data.modes {
        if m.below_window > 0 {
            return Err(Error::NegativeMode { ell: m.ell, omega_sq: f64::NEG_INFINITY });
        }
        if let Some(p) = m.pairs.first() {
            if p.omega_sq <= 0.0 {
                return Err(Error::NegativeMode { ell: m.ell, omega_sq: p.omega_sq });
            }
            lowest = lowest.min(p.omega_sq);
        }
    }
    if lowest.is_infinite() {
        return Err(Error::InvalidInput("empty spectral data".into()));
    }
    Ok(lowest)
}

/// ‖f - Σ_k ⟨ψ_k, f⟩ψ_k‖ / ‖f‖ using the first `k_max` modes of ℓ.
pub fn completeness_defect(data: &SpectralData, f: &RadialFunction, ell: usize, k_max: usize) -> Result<f64> {
    let m = data
        .mode(ell)
        .ok_or_else(|| Error::InvalidInput(format!("no modes for l = {ell}")))?;
    let chart = &data.chart;
    let fnorm = f.norm(chart);
    if fnorm == 0.0 {
        return Ok(0.0);
    }
    let mut r = f.clone();
    for p in m.pairs.iter().take(k_max) {
        let c = p.func.inner(f, chart);
        r = r.axpy(-c, &p.func);
    }
    Ok(r.norm(chart) / fnorm)
}

/// ⟨Eu, v⟩ - ⟨u, Ev⟩ in terms of the boundary traces: 2ν(B_u A_v - A_u B_v).
pub fn lagrange_form(nu: f64, (au, bu): (f64, f64), (av, bv): (f64, f64)) -> f64 {
    2.0 * nu * (bu * av - au * bv)
}

/// Lowest eigenvalue for one Robin value and the critical value where it crosses zero.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaSweep {
    pub points: Vec<(f64, f64)>,
    pub theta_star: Option<f64>,
}

/// Lowest ω² of mode ℓ, or `NegativeMode`.
pub fn lowest_for_theta(model: &SpacetimeModel, ell: usize, theta: f64, chart: &RadialChart) -> Result<f64> {
    let mut p = ModeProblem::new(model.clone(), BoundarySymbol::Robin { theta }, ell, chart.clone(), 12.0);
    p.tol = 1e-12;
    let set = solve_modes(&p, 1)?;
    let data = SpectralData {
        model: model.clone(),
        symbol: p.symbol,
        chart: chart.clone(),
        l_max: ell,
        k_max: 1,
        omega_max: 12.0,
        modes: vec![set.clone()],
    };
    check_lower_bound(&data)?;
    Ok(set.pairs[0].omega_sq)
}

/// Sweeps θ in the given (descending) order; the first θ producing a
/// negative mode is bracketed against the last good one and bisected.
pub fn theta_sweep(model: &SpacetimeModel, ell: usize, thetas: &[f64], chart: &RadialChart) -> Result<ThetaSweep> {
    let results: Vec<Result<f64>> = thetas
        .par_iter()
        .map(|&t| lowest_for_theta(model, ell, t, chart))
        .collect();
    let mut points = Vec::new();
    let mut good: Option<f64> = None;
    let mut bad: Option<f64> = None;
    for (&t, r) in thetas.iter().zip(results) {
        match r {
            Ok(w2) => {
                points.push((t, w2));
                if bad.is_none() {
                    good = Some(t);
                }
            }
            Err(Error::NegativeMode { .. }) => {
                if bad.is_none() {
                    bad = Some(t);
                }
            }
            Err(e) => return Err(e),
        }
    }
    let theta_star = match (good, bad) {
        (Some(mut g), Some(mut b)) => {
            while (g - b).abs() > 1e-7 {
                let m = 0.5 * (g + b);
                match lowest_for_theta(model, ell, m, chart) {
                    Ok(_) => g = m,
                    Err(Error::NegativeMode { .. }) => b = m,
                    Err(e) => return Err(e),
                }
            }
            Some(0.5 * (g + b))
        }
        _ => None,
    };
    Ok(ThetaSweep { points, theta_star })
}

/// Convenience for the common case of global AdS_n.
pub fn is_global(model: &SpacetimeModel) -> bool {
    model.kind == ModelKind::GlobalAds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_model, build_model_nu};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn ads4_half() -> SpacetimeModel {
        build_model(4, -2.0, ModelKind::GlobalAds).unwrap()
    }

    fn coarse() -> RadialChart {
        RadialChart::default().with_intervals(3000)
    }

    #[test]
    fn frobenius_trace_examples() {
        let m = ads4_half();
        let xs: Vec<f64> = (1..=20).map(|i| 0.01 * i as f64 / 20.0).collect();
        let one: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0)).collect();
        let (a, b) = frobenius_traces(&one, &m, 0, 0.0, 6, 1e-10).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-10);
        assert!(b.abs() < 1e-8);
        let lin: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0 * x)).collect();
        let (a, b) = frobenius_traces(&lin, &m, 0, 1.0, 6, 1e-10).unwrap();
        assert!(a.abs() < 1e-10);
        assert_relative_eq!(b, 3.0, epsilon = 1e-8);
        // sin(ω y) with y = π/2 - ρ, ω = 2: A = sin(ωπ/2) = 0, B = -ω cos(ωπ/2) = 2
        let s2: Vec<(f64, f64)> = xs.iter().map(|&x| (x, (2.0 * x.asin()).sin())).collect();
        let (a, b) = frobenius_traces(&s2, &m, 0, 4.0, 6, 1e-10).unwrap();
        assert!(a.abs() < 1e-10);
        assert_relative_eq!(b, 2.0, epsilon = 1e-8);
        // a non-solution does not fit
        let bad: Vec<(f64, f64)> = xs.iter().map(|&x| (x, (40.0 * x).cos() + x.sqrt())).collect();
        assert!(matches!(frobenius_traces(&bad, &m, 0, 4.0, 6, 1e-6), Err(Error::FitDiverged { .. })));
    }

    #[test]
    fn shooter_traces_match_closed_form() {
        // V ≡ 0, regular solution sin(ωρ) up to scale: A ∝ sin(ωπ/2), B ∝ -ω cos(ωπ/2)
        let sh = Shooter::new(&ads4_half(), 0, &coarse()).unwrap();
        for &w in &[0.7, 1.3, 2.9] {
            let (a, b) = sh.traces(w * w);
            let ratio = b / a;
            assert_relative_eq!(ratio, -w / (w * PI / 2.0).tan(), max_relative = 1e-9);
        }
        assert_relative_eq!(sh.basis_wronskian(3.3), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn dirichlet_and_robin_zero_ell0() {
        let m = ads4_half();
        let p = ModeProblem::new(m.clone(), BoundarySymbol::Dirichlet, 0, coarse(), 14.0);
        let set = solve_modes(&p, 5).unwrap();
        for (k, e) in set.pairs.iter().enumerate() {
            assert_relative_eq!(e.omega(), 2.0 + 2.0 * k as f64, max_relative = 1e-8);
            assert_eq!(e.nodes, k);
            assert_relative_eq!(e.norm, 1.0, epsilon = 1e-12);
        }
        let p = ModeProblem::new(m, BoundarySymbol::Robin { theta: 0.0 }, 0, coarse(), 14.0);
        let set = solve_modes(&p, 5).unwrap();
        for (k, e) in set.pairs.iter().enumerate() {
            assert_relative_eq!(e.omega(), 1.0 + 2.0 * k as f64, max_relative = 1e-8);
            assert!(e.b.abs() < 1e-8);
        }
    }

    #[test]
    fn eigenfunction_matches_sine() {
        let m = ads4_half();
        let chart = coarse();
        let p = ModeProblem::new(m, BoundarySymbol::Dirichlet, 0, chart.clone(), 8.0);
        let set = solve_modes(&p, 2).unwrap();
        for (k, e) in set.pairs.iter().enumerate() {
            let w = 2.0 + 2.0 * k as f64;
            let norm = (4.0 / PI).sqrt();
            for &r in &[0.005, 0.3, 1.0, 1.5, 1.565] {
                assert_relative_eq!(e.func.eval(&chart, r), norm * (w * r).sin(), epsilon = 1e-8);
            }
        }
    }

    /// Exact Pöschl-Teller eigenvalues: ω = ±ν + μ + 1 + 2k for Dirichlet / Robin(0).
    #[test]
    fn general_nu_and_ell_oracle() {
        let chart = RadialChart::default();
        for &(n, nu, ell) in &[(4usize, 0.3, 2usize), (5, 0.7, 1), (3, 0.45, 3)] {
            let m = build_model_nu(n, nu, ModelKind::GlobalAds).unwrap();
            let mu = m.mu(ell).unwrap();
            let d = solve_modes(&ModeProblem::new(m.clone(), BoundarySymbol::Dirichlet, ell, chart.clone(), 20.0), 4).unwrap();
            let r = solve_modes(&ModeProblem::new(m, BoundarySymbol::Robin { theta: 0.0 }, ell, chart.clone(), 20.0), 4).unwrap();
            for k in 0..4 {
                assert_relative_eq!(d.pairs[k].omega(), nu + mu + 1.0 + 2.0 * k as f64, max_relative = 1e-7);
                assert_relative_eq!(r.pairs[k].omega(), -nu + mu + 1.0 + 2.0 * k as f64, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn dirichlet_large_nu_and_resonant() {
        let chart = coarse();
        for &nu in &[1.5, 2.0] {
            let m = build_model_nu(4, nu, ModelKind::GlobalAds).unwrap();
            let d = solve_modes(&ModeProblem::new(m, BoundarySymbol::Dirichlet, 1, chart.clone(), 20.0), 3).unwrap();
            for k in 0..3 {
                assert_relative_eq!(d.pairs[k].omega(), nu + 1.5 + 1.0 + 2.0 * k as f64, max_relative = 1e-7);
            }
        }
        let m = build_model_nu(4, 1.5, ModelKind::GlobalAds).unwrap();
        let p = ModeProblem::new(m, BoundarySymbol::Robin { theta: 0.0 }, 0, chart, 20.0);
        assert!(matches!(solve_modes(&p, 2), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn half_strip_spectrum() {
        let m = build_model_nu(2, 0.5, ModelKind::HalfStrip1p1).unwrap();
        let p = ModeProblem::new(m, BoundarySymbol::Robin { theta: 0.0 }, 0, coarse(), 10.0);
        let set = solve_modes(&p, 3).unwrap();
        for k in 0..3 {
            assert_relative_eq!(set.pairs[k].omega(), 1.0 + 2.0 * k as f64, max_relative = 1e-8);
        }
    }

    #[test]
    fn robin_cot_equation() {
        let m = ads4_half();
        for &theta in &[-0.5, 1.0, 3.0] {
            let p = ModeProblem::new(m.clone(), BoundarySymbol::Robin { theta }, 0, coarse(), 12.0);
            let set = solve_modes(&p, 4).unwrap();
            for e in &set.pairs {
                let w = e.omega();
                assert!((-w / (w * PI / 2.0).tan() - theta).abs() < 1e-8, "theta {theta} omega {w}");
                assert_relative_eq!(e.b, theta * e.a, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bound_state_below_critical_theta() {
        let m = ads4_half();
        let theta = -1.5;
        let p = ModeProblem::new(m, BoundarySymbol::Robin { theta }, 0, coarse(), 6.0);
        let set = solve_modes(&p, 2).unwrap();
        let w2 = set.pairs[0].omega_sq;
        assert!(w2 < 0.0);
        let kappa = (-w2).sqrt();
        assert!((-kappa / (kappa * PI / 2.0).tanh() - theta).abs() < 1e-8);
    }

    #[test]
    fn lowest_eigenvalue_monotone_in_theta() {
        let m = ads4_half();
        let chart = coarse();
        let thetas: Vec<f64> = (0..=10).map(|i| -0.5 + 0.5 * i as f64).collect();
        let vals: Vec<f64> = thetas.iter().map(|&t| lowest_for_theta(&m, 0, t, &chart).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]), "{vals:?}");
    }

    #[test]
    fn measure_equivalence() {
        // ∫ψ² dρ equals ∫ R² x² dμ_g restricted to the mode, with R = ψ / tan^{(n-2)/2}ρ
        let m = build_model(4, -2.0, ModelKind::GlobalAds).unwrap();
        let chart = coarse();
        let set = solve_modes(&ModeProblem::new(m.clone(), BoundarySymbol::Dirichlet, 2, chart.clone(), 12.0), 1).unwrap();
        let f = &set.pairs[0].func;
        let grid = chart.rho_grid();
        let weighted: Vec<f64> = grid
            .iter()
            .map(|&r| {
                let big_r = f.eval(&chart, r) / m.liouville_weight(r);
                // x² √|g| = cos²ρ · sin^{n-2}ρ / cos^nρ, angular volume factored out
                let x = r.cos();
                big_r * big_r * x * x * r.sin().powi(2) / x.powi(4)
            })
            .collect();
        let plain: Vec<f64> = f.psi.iter().map(|v| v * v).collect();
        assert_relative_eq!(simpson(&weighted, chart.h()), simpson(&plain, chart.h()), max_relative = 1e-12);
    }

    #[test]
    fn lagrange_identity_with_fixed_constant() {
        let m = build_model_nu(4, 0.35, ModelKind::GlobalAds).unwrap();
        let chart = coarse();
        let sh = Shooter::new(&m, 1, &chart).unwrap();
        // regular solutions at two different ω²: (ω_u² - ω_v²)∫uv = 2ν(B_u A_v - A_u B_v)
        for &(wu, wv) in &[(3.7, 11.2), (0.4, 20.5), (-2.0, 6.0)] {
            let u = sh.shoot(wu);
            let v = sh.shoot(wv);
            // use the full (unprojected) layer expansions
            let integral = u.func.inner(&v.func, &chart);
            let lhs = (wu - wv) * integral;
            let rhs = lagrange_form(m.nu, (u.a, u.b), (v.a, v.b));
            assert!((lhs - rhs).abs() < 1e-7 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
        // same ω²: the Wronskian of two arbitrary solutions equals -2ν(A_u B_v - B_u A_v)
        let w2 = 5.3;
        let i0 = chart.intervals / 2;
        let (au, bu) = sh.traces_from_node(w2, i0, 1.0, 0.3);
        let (av, bv) = sh.traces_from_node(w2, i0, -0.4, 2.0);
        let wronskian = 1.0 * 2.0 - 0.3 * -0.4;
        assert_relative_eq!(wronskian, lagrange_form(m.nu, (au, bu), (av, bv)), max_relative = 1e-8);
    }

    #[test]
    fn orthonormality_and_completeness() {
        let m = ads4_half();
        let settings = SpectrumSettings {
            chart: coarse(),
            l_max: 2,
            k_max: 16,
            ..Default::default()
        };
        let data = compute_spectrum(&m, &BoundarySymbol::Robin { theta: 1.0 }, &settings).unwrap();
        assert!(data.orthonormality_defect(16) < 1e-8);
        let chart = &data.chart;
        let grid = chart.rho_grid();
        let bump = RadialFunction::interior(
            grid.iter().map(|&r| crate::special::bump(r, PI / 4.0, 0.3)).collect(),
            grid.iter().map(|&r| crate::special::bump_deriv(r, PI / 4.0, 0.3)).collect(),
        );
        let mut last = f64::INFINITY;
        for k in [2, 4, 8, 16] {
            let d = completeness_defect(&data, &bump, 1, k).unwrap();
            assert!(d < last);
            last = d;
        }
        let psi0 = data.modes[0].pairs[0].func.clone();
        assert!(completeness_defect(&data, &psi0, 0, 16).unwrap() < 1e-8);
        // remove the first 4 modes by Gram-Schmidt: nothing left to reconstruct with them
        let mut g = bump.clone();
        for p in data.modes[1].pairs.iter().take(4) {
            g = g.axpy(-p.func.inner(&g, chart), &p.func);
        }
        assert_relative_eq!(completeness_defect(&data, &g, 1, 4).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn lower_bound_examples() {
        let m = ads4_half();
        let s = SpectrumSettings { chart: coarse(), l_max: 1, k_max: 2, ..Default::default() };
        let d = compute_spectrum(&m, &BoundarySymbol::Dirichlet, &s).unwrap();
        assert_relative_eq!(check_lower_bound(&d).unwrap(), 4.0, max_relative = 1e-8);
        let r = compute_spectrum(&m, &BoundarySymbol::Robin { theta: 0.0 }, &s).unwrap();
        assert_relative_eq!(check_lower_bound(&r).unwrap(), 1.0, max_relative = 1e-8);
        let neg = compute_spectrum(&m, &BoundarySymbol::Robin { theta: -2.0 }, &s).unwrap();
        assert!(matches!(check_lower_bound(&neg), Err(Error::NegativeMode { ell: 0, .. })));
    }
}

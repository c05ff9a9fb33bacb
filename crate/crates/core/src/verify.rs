//! Numerical checks of the analytic identities: twisted Green formula and
//! energy form, time-slice property, wavepacket reflection, causal support.
//!
//! Per angular harmonic, all fields are handled in the Schrödinger gauge
//! ψ = tan^{(n-2)/2}ρ · u. In that gauge
//! ∫ P u · v dμ_g = -⟨E ψ_u, ψ_v⟩ on a spatial slice, and the twisted
//! Dirichlet form becomes
//! E₀(u, v) = -∫ [(d_F ψ_u)(d_F ψ_v) + λ ψ_u ψ_v / sin²ρ] dρ,
//! d_F ψ = ψ' - ψ Φ'/Φ with Φ = tan^{(n-2)/2}ρ · F.
//! The boundary term comes out as -2ν B_u A_v with A, B the raw Frobenius
//! coefficients, i.e. -2νθ A_u A_v under B = θA.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_symbol::{theta_of_mode, ThetaValue};
use crate::error::{Error, Result};
use crate::geometry::{null_bounce_time, RadialChart, SpacetimeModel};
use crate::mode_spectrum::{compute_spectrum, layer_integral, RadialFunction, SpectralData, SpectrumSettings};
use crate::propagators::{angular_factor, radial_function, smear, KernelSum, TestFunction, TimeProfile};
use crate::series::Puiseux;
use crate::special::{simpson, smoothstep5, trapezoid};

/// F = cos^{ν₋}ρ · (1 + c cos²ρ), so F = x^{ν₋} w with w = 1 + c x².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwistingFunction {
    pub nu_minus: f64,
    pub c: f64,
}

impl TwistingFunction {
    pub fn new(model: &SpacetimeModel, c: f64) -> Result<Self> {
        if !(c > -1.0) || !c.is_finite() {
            return Err(Error::OutOfRange { what: "twisting coefficient (needs c > -1)", value: c });
        }
        Ok(TwistingFunction { nu_minus: model.nu_minus, c })
    }

    /// The pure power x^{ν₋}.
    pub fn canonical(model: &SpacetimeModel) -> Self {
        TwistingFunction { nu_minus: model.nu_minus, c: 0.0 }
    }

    pub fn value(&self, rho: f64) -> f64 {
        let x = rho.cos();
        x.powf(self.nu_minus) * (1.0 + self.c * x * x)
    }

    /// (log Φ)' with Φ = tan^{(n-2)/2}ρ · F.
    fn log_deriv(&self, n: usize, rho: f64) -> f64 {
        let (s, c) = rho.sin_cos();
        let half = (n as f64 - 2.0) / 2.0;
        half / (s * c) - self.nu_minus * s / c - 2.0 * self.c * c * s / (1.0 + self.c * c * c)
    }

    /// S_F / x², with S_F = F⁻¹ P F from applying the radial operator to F.
    /// F', F'' come from second-order forward-mode jets; finite differences
    /// lose too much to the O(x²) cancellation near the boundary.
    pub fn s_over_x2(&self, model: &SpacetimeModel, rho: f64) -> f64 {
        let n = model.n as f64;
        let c = Jet::var(rho).cos();
        let f = c.powf(self.nu_minus).mul(&c.mul(&c).scale(self.c).add_const(1.0));
        let (s, x) = rho.sin_cos();
        let t = s / x;
        let w2 = t.powf(n - 2.0);
        let dw2 = if n == 2.0 { 0.0 } else { (n - 2.0) * t.powf(n - 3.0) / (x * x) };
        let mu = s.powf(n - 2.0) / x.powf(n);
        let pf = (dw2 * f.d + w2 * f.dd) / mu - model.mass_sq * f.v;
        pf / f.v / (x * x)
    }

    /// S_F/x² at the chart nodes.
    pub fn s_samples(&self, model: &SpacetimeModel, chart: &RadialChart) -> Vec<f64> {
        chart.rho_grid().iter().map(|&r| self.s_over_x2(model, r)).collect()
    }

    /// sup |S_F/x²| on the grid; errors if it is not finite.
    pub fn admissibility(&self, model: &SpacetimeModel, chart: &RadialChart) -> Result<f64> {
        let m = self.s_samples(model, chart).iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if !m.is_finite() {
            return Err(Error::InvalidInput("twisting function is not admissible: S_F/x² unbounded".into()));
        }
        Ok(m)
    }
}

/// Value with first and second derivative.
#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    d: f64,
    dd: f64,
}

impl Jet {
    fn var(x: f64) -> Self {
        Jet { v: x, d: 1.0, dd: 0.0 }
    }

    fn cos(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        Jet { v: c, d: -s * self.d, dd: -c * self.d * self.d - s * self.dd }
    }

    fn powf(&self, p: f64) -> Self {
        let v = self.v.powf(p);
        let d1 = p * self.v.powf(p - 1.0);
        let d2 = p * (p - 1.0) * self.v.powf(p - 2.0);
        Jet { v, d: d1 * self.d, dd: d2 * self.d * self.d + d1 * self.dd }
    }

    fn mul(&self, o: &Jet) -> Self {
        Jet { v: self.v * o.v, d: self.d * o.v + self.v * o.d, dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd }
    }

    fn scale(&self, s: f64) -> Self {
        Jet { v: self.v * s, d: self.d * s, dd: self.dd * s }
    }

    fn add_const(&self, c: f64) -> Self {
        Jet { v: self.v + c, ..*self }
    }
}

/// Series helpers for one end layer: ξ = cos ρ at the boundary, ξ = sin ρ at the center.
struct Layer {
    boundary: bool,
    order: usize,
}

impl Layer {
    fn cos_pow(&self, a: f64) -> Puiseux {
        if self.boundary {
            Puiseux::monomial(a, 1.0, self.order)
        } else {
            Puiseux::one_minus_sq_pow(a / 2.0, self.order)
        }
    }

    fn sin_pow(&self, a: f64) -> Puiseux {
        if self.boundary {
            Puiseux::one_minus_sq_pow(a / 2.0, self.order)
        } else {
            Puiseux::monomial(a, 1.0, self.order)
        }
    }

    fn d_rho(&self, p: &Puiseux) -> Puiseux {
        let r = p.deriv().mul(&Puiseux::one_minus_sq_pow(0.5, self.order));
        if self.boundary {
            r.scale(-1.0)
        } else {
            r
        }
    }

    /// (1 + c cos²ρ)^{±1}
    fn warp(&self, c: f64, inverse: bool) -> Puiseux {
        let o = self.order;
        if self.boundary {
            if inverse {
                let co: Vec<f64> = (0..o).map(|j| (-c).powi(j as i32)).collect();
                Puiseux::even(0.0, &co, o)
            } else {
                Puiseux::even(0.0, &[1.0, c], o)
            }
        } else if inverse {
            let r = c / (1.0 + c);
            let co: Vec<f64> = (0..o).map(|j| r.powi(j as i32) / (1.0 + c)).collect();
            Puiseux::even(0.0, &co, o)
        } else {
            Puiseux::even(0.0, &[1.0 + c, -c], o)
        }
    }
}

/// Drops coefficients below `rel` times the largest one.
fn prune(p: &Puiseux, rel: f64) -> Puiseux {
    let big = p.terms().iter().flat_map(|(_, c)| c.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Puiseux::zero(p.order());
    for (e, c) in p.terms() {
        let cleaned: Vec<f64> = c.iter().map(|v| if v.abs() <= rel * big { 0.0 } else { *v }).collect();
        if cleaned.iter().any(|v| *v != 0.0) {
            out = out.add(&Puiseux::even(*e, &cleaned, p.order()));
        }
    }
    out
}

/// d_F ψ and S_F/cos² as series in one layer.
fn layer_parts(model: &SpacetimeModel, twist: &TwistingFunction, psi: &Puiseux, boundary: bool) -> (Puiseux, Puiseux) {
    let layer = Layer { boundary, order: psi.order().max(12) };
    let n = model.n as f64;
    let half = (n - 2.0) / 2.0;
    let nm = twist.nu_minus;
    let phi = layer.sin_pow(half).mul(&layer.cos_pow(nm - half)).mul(&layer.warp(twist.c, false));
    let phi_inv = layer.sin_pow(-half).mul(&layer.cos_pow(half - nm)).mul(&layer.warp(twist.c, true));
    let dfpsi = phi.mul(&layer.d_rho(&psi.mul(&phi_inv)));
    let f = layer.cos_pow(nm).mul(&layer.warp(twist.c, false));
    let f_inv = layer.cos_pow(-nm).mul(&layer.warp(twist.c, true));
    let w2 = layer.sin_pow(n - 2.0).mul(&layer.cos_pow(2.0 - n));
    let mu_inv = layer.sin_pow(2.0 - n).mul(&layer.cos_pow(n));
    let pf = mu_inv.mul(&layer.d_rho(&w2.mul(&layer.d_rho(&f)))).sub(&f.scale(model.mass_sq));
    let s = prune(&pf.mul(&f_inv).mul(&layer.cos_pow(-2.0)), 1e-13);
    (dfpsi, s)
}

/// One angular harmonic of a real field on a spatial slice.
#[derive(Clone, Debug)]
pub struct SampledField {
    pub ell: usize,
    pub func: RadialFunction,
    /// E ψ when known exactly (finite eigenmode combinations)
    pub e_func: Option<RadialFunction>,
    /// raw coefficients of y^{1/2-ν} and y^{1/2+ν} at the boundary
    pub a: f64,
    pub b: f64,
}

impl SampledField {
    /// Σ c_k ψ_k at fixed ℓ.
    pub fn from_modes(data: &SpectralData, ell: usize, coeffs: &[(usize, f64)]) -> Result<Self> {
        let set = data.mode(ell).ok_or(Error::OutOfRange { what: "ell", value: ell as f64 })?;
        let n = data.chart.len();
        let zero = RadialFunction::interior(vec![0.0; n], vec![0.0; n]);
        let (mut f, mut ef, mut a, mut b) = (zero.clone(), zero, 0.0, 0.0);
        for &(k, c) in coeffs {
            let p = set.pairs.get(k).ok_or(Error::OutOfRange { what: "mode index", value: k as f64 })?;
            f = f.axpy(c, &p.func);
            ef = ef.axpy(c * p.omega_sq, &p.func);
            a += c * p.a;
            b += c * p.b;
        }
        Ok(SampledField { ell, func: f, e_func: Some(ef), a, b })
    }

    /// A bump strictly inside the chart (zero boundary data).
    pub fn bump(data: &SpectralData, ell: usize, center: f64, half_width: f64) -> Self {
        let func = radial_function(&crate::propagators::RadialProfile::Bump { center, half_width }, data, ell, 0)
            .expect("bump profile");
        SampledField { ell, func, e_func: None, a: 0.0, b: 0.0 }
    }
}

/// The terms of the twisted Green formula for one pair of fields.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenTerms {
    /// ∫ P u · v dμ_g
    pub lhs: f64,
    pub e0: f64,
    /// ∫ S_F u v dμ_g
    pub s_term: f64,
    /// -2ν B_u A_v
    pub boundary: f64,
    /// |lhs - (e0 + s_term + boundary)| / scale
    pub residual: f64,
    /// quadrature self-estimate, relative
    pub estimate: f64,
}

/// Interior integral by Simpson with a stride-2 error estimate.
fn interior_integral(vals: &[f64], h: f64) -> (f64, f64) {
    let fine = simpson(vals, h);
    let m = vals.len() - 1;
    let coarse_est = if m % 4 == 0 {
        let coarse: Vec<f64> = vals.iter().step_by(2).copied().collect();
        (fine - simpson(&coarse, 2.0 * h)).abs() / 15.0
    } else {
        (fine - trapezoid(vals, h)).abs()
    };
    (fine, coarse_est)
}

fn form_parts(data: &SpectralData, twist: &TwistingFunction, u: &SampledField, v: &SampledField) -> Result<(f64, f64, f64)> {
    if u.ell != v.ell {
        return Ok((0.0, 0.0, 0.0));
    }
    let model = &data.model;
    let chart = &data.chart;
    let lambda = model.lambda(u.ell);
    let rho = chart.rho_grid();
    let h = chart.h();
    let s = twist.s_samples(model, chart);
    let (fu, fv) = (&u.func, &v.func);
    let mut e_int = Vec::with_capacity(rho.len());
    let mut s_int = Vec::with_capacity(rho.len());
    for (i, &r) in rho.iter().enumerate() {
        let l = twist.log_deriv(model.n, r);
        let du = fu.dpsi[i] - fu.psi[i] * l;
        let dv = fv.dpsi[i] - fv.psi[i] * l;
        e_int.push(du * dv + lambda * fu.psi[i] * fv.psi[i] / r.sin().powi(2));
        s_int.push(s[i] * fu.psi[i] * fv.psi[i]);
    }
    let (mut e0, e_err) = interior_integral(&e_int, h);
    let (mut st, s_err) = interior_integral(&s_int, h);
    for (boundary, xi) in [(true, chart.boundary_layer), (false, chart.center_xi())] {
        let (pu, pv) = if boundary { (&fu.boundary, &fv.boundary) } else { (&fu.center, &fv.center) };
        if pu.terms().is_empty() || pv.terms().is_empty() {
            continue;
        }
        let (du, s_layer) = layer_parts(model, twist, pu, boundary);
        let (dv, _) = layer_parts(model, twist, pv, boundary);
        let layer = Layer { boundary, order: pu.order().max(12) };
        let mut integrand = du.mul(&dv);
        if lambda != 0.0 {
            integrand = integrand.add(&pu.mul(pv).mul(&layer.sin_pow(-2.0)).scale(lambda));
        }
        e0 += layer_integral(&integrand, xi);
        st += layer_integral(&s_layer.mul(&pu.mul(pv)), xi);
    }
    if !e0.is_finite() || !st.is_finite() {
        return Err(Error::InvalidInput("layer integral diverged".into()));
    }
    let scale = e0.abs() + st.abs() + f64::MIN_POSITIVE;
    Ok((-e0, st, (e_err + s_err) / scale))
}

/// Residual of ∫Pu·v dμ_g = E₀(u,v) + ∫S_F uv dμ_g - 2ν B_u A_v.
pub fn green_identity_residual(
    data: &SpectralData,
    twist: &TwistingFunction,
    u: &SampledField,
    v: &SampledField,
    tolerance: f64,
) -> Result<GreenTerms> {
    let ef = u
        .e_func
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("u needs an exact E u (use an eigenmode combination)".into()))?;
    let lhs = if u.ell == v.ell { -ef.inner(&v.func, &data.chart) } else { 0.0 };
    let (e0, s_term, estimate) = form_parts(data, twist, u, v)?;
    if estimate > tolerance {
        return Err(Error::GridTooCoarse { estimate, tolerance });
    }
    let boundary = if u.ell == v.ell { -2.0 * data.model.nu * u.b * v.a } else { 0.0 };
    let scale = lhs.abs() + e0.abs() + s_term.abs() + boundary.abs();
    let residual = if scale == 0.0 { 0.0 } else { (lhs - e0 - s_term - boundary).abs() / scale };
    Ok(GreenTerms { lhs, e0, s_term, boundary, residual, estimate })
}

/// E_Θ(u, v) = E₀ + ∫S_F uv - 2ν θ_ℓ A_u A_v. Dirichlet drops the boundary term.
pub fn energy_functional(data: &SpectralData, twist: &TwistingFunction, u: &SampledField, v: &SampledField) -> Result<f64> {
    let (e0, st, _) = form_parts(data, twist, u, v)?;
    let bdry = if u.ell != v.ell {
        0.0
    } else {
        match theta_of_mode(&data.symbol, data.model.n, u.ell) {
            ThetaValue::Infinite => 0.0,
            ThetaValue::Finite(t) => -2.0 * data.model.nu * t * u.a * v.a,
        }
    };
    Ok(e0 + st + bdry)
}

/// E_Θ on complex combinations of eigenmodes at one ℓ, sesquilinear in v.
pub fn energy_functional_complex(
    data: &SpectralData,
    twist: &TwistingFunction,
    ell: usize,
    u: &[(usize, Complex64)],
    v: &[(usize, Complex64)],
) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for &(i, cu) in u {
        let fi = SampledField::from_modes(data, ell, &[(i, 1.0)])?;
        for &(j, cv) in v {
            let fj = SampledField::from_modes(data, ell, &[(j, 1.0)])?;
            total += cu * cv.conj() * energy_functional(data, twist, &fi, &fj)?;
        }
    }
    Ok(total)
}

/// Residuals and observed orders for the Green formula at N, 2N, 4N intervals.
#[derive(Clone, Debug, Serialize)]
pub struct GreenConvergence {
    pub intervals: Vec<usize>,
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
}

/// Recomputes the spectrum on each chart and evaluates the Green residual for
/// u = Σ c_k ψ_k, v = Σ d_k ψ_k at one ℓ.
pub fn green_convergence(
    model: &SpacetimeModel,
    symbol: &crate::boundary_symbol::BoundarySymbol,
    twist: &TwistingFunction,
    ell: usize,
    u: &[(usize, f64)],
    v: &[(usize, f64)],
    intervals: &[usize],
) -> Result<GreenConvergence> {
    let k_need = u.iter().chain(v).map(|p| p.0).max().unwrap_or(0) + 1;
    let residuals: Result<Vec<f64>> = intervals
        .iter()
        .map(|&n| {
            let settings = SpectrumSettings {
                chart: RadialChart::default().with_intervals(n),
                l_max: ell,
                k_max: k_need,
                ..Default::default()
            };
            let data = compute_spectrum(model, symbol, &settings)?;
            let fu = SampledField::from_modes(&data, ell, u)?;
            let fv = SampledField::from_modes(&data, ell, v)?;
            Ok(green_identity_residual(&data, twist, &fu, &fv, f64::INFINITY)?.residual)
        })
        .collect();
    let residuals = residuals?;
    let orders = residuals
        .windows(2)
        .zip(intervals.windows(2))
        .map(|(r, n)| (r[0] / r[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect();
    Ok(GreenConvergence { intervals: intervals.to_vec(), residuals, orders })
}

/// Both sides of the positivity link on the computed data.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PositivityLink {
    pub spectrum_positive: bool,
    /// -E_Θ(ψ, ψ) > 0 for every computed eigenfunction
    pub form_positive: bool,
    /// max |E_Θ(ψ,ψ) + ω²| over the checked modes
    pub max_mismatch: f64,
}

/// Checks ω² > 0 for all modes ⇔ -E_Θ(ψ_k, ψ_k) > 0, on the first `k` modes per ℓ.
pub fn positivity_link(data: &SpectralData, twist: &TwistingFunction, k: usize) -> Result<PositivityLink> {
    let rows: Result<Vec<(bool, bool, f64)>> = data
        .modes
        .par_iter()
        .map(|m| {
            let mut spec = m.below_window == 0;
            let mut form = true;
            let mut mis: f64 = 0.0;
            for (i, p) in m.pairs.iter().take(k).enumerate() {
                let f = SampledField::from_modes(data, m.ell, &[(i, 1.0)])?;
                let e = energy_functional(data, twist, &f, &f)?;
                spec &= p.omega_sq > 0.0;
                form &= -e > 0.0;
                mis = mis.max((e + p.omega_sq).abs() / p.omega_sq.abs().max(1.0));
            }
            Ok((spec, form, mis))
        })
        .collect();
    let rows = rows?;
    Ok(PositivityLink {
        spectrum_positive: rows.iter().all(|r| r.0),
        form_positive: rows.iter().all(|r| r.1),
        max_mismatch: rows.iter().fold(0.0, |m, r| m.max(r.2)),
    })
}

/// ‖G h - G f‖ / ‖G f‖ for h = P(χ G f).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TimeSliceReport {
    pub residual: f64,
    pub dt: f64,
}

/// Builds h = P(χ·G f) with a quintic smoothstep χ over the window and a
/// centered second difference in time, then compares G h with G f on a late
/// subgrid. Mode sums are truncated as in `kernel`.
pub fn time_slice_residual(kernel: &KernelSum, f: &TestFunction, window: (f64, f64), dt: f64) -> Result<TimeSliceReport> {
    let (t1, t2) = window;
    if !(t2 - t1 >= 10.0 * dt) {
        return Err(Error::WindowTooNarrow(format!("window [{t1}, {t2}] spans fewer than 10 steps of {dt}")));
    }
    let Some((fs, fe)) = f.t_support() else {
        return Ok(TimeSliceReport { residual: 0.0, dt });
    };
    let data = &kernel.data;
    let dim = data.model.sphere_dim();
    let t0 = t1.min(fs) - 5.0 * dt;
    let t_end = t2.max(fe) + 1.0;
    let nt = ((t_end - t0) / dt).round() as usize + 1;
    let ts: Vec<f64> = (0..nt).map(|i| t0 + i as f64 * dt).collect();
    let chi: Vec<f64> = ts.iter().map(|&t| smoothstep5(t, t1, t2)).collect();
    let late: Vec<usize> = (0..nt).filter(|&i| ts[i] >= t2).step_by(5).collect();
    let tref = 0.5 * (t0 + t_end);
    let profiles: Vec<Vec<f64>> = f.terms.iter().map(|term| ts.iter().map(|&t| term.time.at(t)).collect()).collect();
    let ells: Vec<usize> = data.modes.iter().map(|m| m.ell).filter(|&l| l <= kernel.l_max).collect();
    let per_ell: Vec<(f64, f64)> = ells
        .par_iter()
        .map(|&ell| {
            let m = data.mode(ell).unwrap();
            let kmax = m.pairs.len().min(kernel.k_max);
            let (mut r2, mut g2) = (0.0, 0.0);
            for k in 0..kmax {
                let p = &m.pairs[k];
                let w = p.omega_sq.max(1e-300).sqrt();
                let (cs, sn): (Vec<f64>, Vec<f64>) = ts.iter().map(|&t| ((w * (t - tref)).cos(), (w * (t - tref)).sin())).unzip();
                // per term: late-time series of G f and G h for this mode
                let mut series: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
                for (ti, term) in f.terms.iter().enumerate() {
                    let o = radial_function(&term.radial, data, ell, k)
                        .map_or(0.0, |r| p.func.inner(&r, &data.chart))
                        * term.amplitude;
                    if o == 0.0 || term.angular.coeff(ell) == 0.0 {
                        series.push((vec![0.0; late.len()], vec![0.0; late.len()]));
                        continue;
                    }
                    let prof = &profiles[ti];
                    let c: f64 = trapezoid(&prof.iter().zip(&cs).map(|(a, b)| a * b).collect::<Vec<_>>(), dt);
                    let s: f64 = trapezoid(&prof.iter().zip(&sn).map(|(a, b)| a * b).collect::<Vec<_>>(), dt);
                    let u: Vec<f64> = (0..nt).map(|i| (sn[i] * c - cs[i] * s) / w).collect();
                    let v: Vec<f64> = (0..nt).map(|i| chi[i] * u[i]).collect();
                    let mut h = vec![0.0; nt];
                    for i in 1..nt - 1 {
                        h[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dt * dt) + p.omega_sq * v[i];
                    }
                    let ch = trapezoid(&h.iter().zip(&cs).map(|(a, b)| a * b).collect::<Vec<_>>(), dt);
                    let sh = trapezoid(&h.iter().zip(&sn).map(|(a, b)| a * b).collect::<Vec<_>>(), dt);
                    let gf: Vec<f64> = late.iter().map(|&i| o * u[i]).collect();
                    let gh: Vec<f64> = late.iter().map(|&i| o * (sn[i] * ch - cs[i] * sh) / w).collect();
                    series.push((gf, gh));
                }
                for (i, a) in f.terms.iter().enumerate() {
                    for (j, b) in f.terms.iter().enumerate() {
                        let g = angular_factor(dim, ell, &a.angular, &b.angular);
                        if g == 0.0 {
                            continue;
                        }
                        for q in 0..late.len() {
                            let ri = series[i].1[q] - series[i].0[q];
                            let rj = series[j].1[q] - series[j].0[q];
                            r2 += g * ri * rj;
                            g2 += g * series[i].0[q] * series[j].0[q];
                        }
                    }
                }
            }
            (r2, g2)
        })
        .collect();
    let (r2, g2) = per_ell.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let residual = if g2 > 0.0 { (r2.max(0.0) / g2).sqrt() } else { 0.0 };
    Ok(TimeSliceReport { residual, dt })
}

/// Outcome of a wavepacket reflection run.
#[derive(Clone, Debug, Serialize)]
pub struct BounceResult {
    pub measured: f64,
    pub predicted: f64,
    /// time of the centroid maximum
    pub peak_time: f64,
    /// (t, centroid, localized fraction)
    pub trajectory: Vec<(f64, f64, f64)>,
}

impl BounceResult {
    pub fn relative_error(&self) -> f64 {
        (self.measured - self.predicted).abs() / self.predicted
    }
}

/// Evolves an outgoing ℓ = 0 Gaussian packet by the mode sum and locates the
/// maximum of the energy centroid.
pub fn bounce_test(data: &SpectralData, rho0: f64, width: f64) -> Result<BounceResult> {
    let predicted = null_bounce_time(&data.model, rho0)?;
    if !(rho0 - 4.0 * width > 0.0 && rho0 + 4.0 * width < PI / 2.0) {
        return Err(Error::InvalidInput(format!("packet at {rho0} with width {width} touches an endpoint")));
    }
    let m = data.mode(0).ok_or(Error::OutOfRange { what: "ell", value: 0.0 })?;
    let chart = &data.chart;
    let pts = 1600;
    let dr = (PI / 2.0) / pts as f64;
    let grid: Vec<f64> = (0..pts).map(|i| (i as f64 + 0.5) * dr).collect();
    let gauss = |r: f64| (-(r - rho0).powi(2) / (2.0 * width * width)).exp();
    let u0: Vec<f64> = chart.rho_grid().iter().map(|&r| gauss(r)).collect();
    let v0: Vec<f64> = chart.rho_grid().iter().map(|&r| gauss(r) * (r - rho0) / (width * width)).collect();
    let u0_du: Vec<f64> = chart.rho_grid().iter().map(|&r| -gauss(r) * (r - rho0) / (width * width)).collect();
    let u0f = RadialFunction::interior(u0.clone(), u0_du);
    let v0f = RadialFunction::interior(v0, vec![0.0; u0.len()]);
    let modes: Vec<_> = m.pairs.iter().filter(|p| p.omega_sq != 0.0).collect();
    let coeffs: Vec<(f64, f64)> = modes
        .par_iter()
        .map(|p| (p.func.inner(&u0f, chart), p.func.inner_samples(&v0f.psi, chart)))
        .collect();
    let tables: Vec<Vec<(f64, f64)>> =
        modes.par_iter().map(|p| grid.iter().map(|&r| p.func.eval_with_deriv(chart, r)).collect()).collect();
    let t_end = 2.0 * predicted;
    let dt = 2e-3;
    let nt = (t_end / dt).round() as usize + 1;
    let traj: Vec<(f64, f64, f64)> = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = it as f64 * dt;
            let mut ur = vec![0.0; pts];
            let mut ut = vec![0.0; pts];
            for (q, p) in modes.iter().enumerate() {
                let (c, d) = coeffs[q];
                // bound states (ω² < 0) grow as cosh/sinh
                let (a, at) = if p.omega_sq > 0.0 {
                    let w = p.omega_sq.sqrt();
                    let (s, co) = (w * t).sin_cos();
                    (c * co + d * s / w, -c * w * s + d * co)
                } else {
                    let k = (-p.omega_sq).sqrt();
                    let (s, co) = ((k * t).sinh(), (k * t).cosh());
                    (c * co + d * s / k, c * k * s + d * co)
                };
                for (i, &(psi, dpsi)) in tables[q].iter().enumerate() {
                    ur[i] += a * dpsi;
                    ut[i] += at * psi;
                }
            }
            let e: Vec<f64> = (0..pts).map(|i| 0.5 * (ut[i] * ut[i] + ur[i] * ur[i])).collect();
            let total: f64 = e.iter().sum();
            let cen: f64 = e.iter().zip(&grid).map(|(a, r)| a * r).sum::<f64>() / total;
            let local: f64 = e
                .iter()
                .zip(&grid)
                .filter(|(_, r)| (**r - cen).abs() <= 4.0 * width)
                .map(|(a, _)| a)
                .sum::<f64>()
                / total;
            (t, cen, local)
        })
        .collect();
    let imax = traj
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if let Some(bad) = traj[..=imax].iter().find(|p| p.2 < 0.5) {
        return Err(Error::PacketDispersed { time: bad.0, fraction: bad.2 });
    }
    let peak_time = if imax == 0 || imax + 1 >= traj.len() {
        traj[imax].0
    } else {
        let (y0, y1, y2) = (traj[imax - 1].1, traj[imax].1, traj[imax + 1].1);
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        traj[imax].0 + shift * dt
    };
    // the reflection event is where the free incoming and outgoing tracks meet;
    // the centroid maximum itself is biased by the reflected wake under Robin data
    let far = PI / 2.0 - 5.0 * width;
    let incoming: Vec<(f64, f64)> = traj[..imax].iter().filter(|p| p.1 < far).map(|p| (p.0, p.1)).collect();
    let outgoing: Vec<(f64, f64)> = traj[imax..].iter().filter(|p| p.1 < far).map(|p| (p.0, p.1)).collect();
    let measured = match (line_fit(&incoming), line_fit(&outgoing)) {
        (Some((a1, b1)), Some((a2, b2))) if (b1 - b2).abs() > 1e-6 => (a2 - a1) / (b1 - b2),
        _ => peak_time,
    };
    Ok(BounceResult { measured, predicted, peak_time, trajectory: traj })
}

/// Least-squares line y = a + b t.
fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, my) = (st / n, sy / n);
    let (mut stt, mut sty) = (0.0, 0.0);
    for p in pts {
        stt += (p.0 - mt) * (p.0 - mt);
        sty += (p.0 - mt) * (p.1 - my);
    }
    if stt == 0.0 {
        return None;
    }
    let b = sty / stt;
    Some((my - b * mt, b))
}

/// One case of the causal-support battery: ℓ = 0 shells at (t, ρ) with
/// bump half-width `half_width` in both t and ρ.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CausalCase {
    pub t_f: f64,
    pub rho_f: f64,
    pub t_g: f64,
    pub rho_g: f64,
    pub half_width: f64,
}

impl CausalCase {
    pub fn new(rho_f: f64, rho_g: f64, dt: f64, half_width: f64) -> Self {
        CausalCase { t_f: 1.0 + dt, rho_f, t_g: 1.0, rho_g, half_width }
    }

    pub fn functions(&self, dim: usize) -> (TestFunction, TestFunction) {
        let mk = |id: &str, t: f64, r: f64| {
            TestFunction::single(
                id,
                TimeProfile::Bump { center: t, half_width: self.half_width },
                crate::propagators::RadialProfile::Bump { center: r, half_width: self.half_width },
                crate::propagators::ZonalProfile::monopole(dim),
            )
        };
        (mk("f", self.t_f, self.rho_f), mk("g", self.t_g, self.rho_g))
    }
}

/// Whether a broken null path (straight through the center or reflected at
/// the boundary, repeatedly) joins the two shells. Path lengths for one
/// boundary bounce come from `null_bounce_time`; the pattern repeats with
/// period π.
pub fn broken_null_connected(model: &SpacetimeModel, case: &CausalCase) -> Result<bool> {
    let samples = 15;
    let w = case.half_width;
    let lin = |c: f64| (0..samples).map(move |i| c - w + 2.0 * w * i as f64 / (samples - 1) as f64);
    for tf in lin(case.t_f) {
        for tg in lin(case.t_g) {
            let dt = (tf - tg).abs();
            for rf in lin(case.rho_f) {
                for rg in lin(case.rho_g) {
                    let d = (rf - rg).abs();
                    let s = rf + rg;
                    let reflected = null_bounce_time(model, rf)? + null_bounce_time(model, rg)?;
                    let periods = (dt / PI).floor() as i64;
                    for j in (periods - 1).max(0)..=periods + 1 {
                        let off = j as f64 * PI;
                        if (dt >= off + d && dt <= off + s) || (dt >= off + reflected && dt <= off + PI - d) {
                            return Ok(true);
                        }
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Classifies a case from the smeared causal kernel: connected when
/// |G(f, g)| exceeds `threshold` times Σ|mode contributions|.
pub fn causal_connected(kernel: &KernelSum, case: &CausalCase, threshold: f64) -> Result<(bool, f64)> {
    let (f, g) = case.functions(kernel.data.model.sphere_dim());
    let r = smear(kernel, &f, &g)?;
    let rel = if r.scale > 0.0 { r.value.norm() / r.scale } else { 0.0 };
    Ok((rel > threshold, rel))
}

/// The default ten-case battery: direct band, reflected band, the gap
/// between them and spacelike separations.
pub fn causal_battery() -> Vec<CausalCase> {
    let w = 0.05;
    [
        (0.4, 0.6, 0.6),
        (0.3, 0.7, 0.05),
        (0.4, 0.6, 1.55),
        (0.4, 0.6, 2.5),
        (0.3, 0.7, 3.05),
        (0.5, 0.5, 0.3),
        (0.5, 0.5, 1.6),
        (0.2, 0.9, 0.3),
        (0.2, 0.9, 0.9),
        (0.2, 0.9, 2.25),
    ]
    .iter()
    .map(|&(a, b, dt)| CausalCase::new(a, b, dt, w))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_symbol::BoundarySymbol;
    use crate::geometry::{build_model, build_model_nu, ModelKind};
    use crate::propagators::{build_kernel, KernelKind, RadialProfile, ZonalProfile};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ads4() -> SpacetimeModel {
        build_model(4, -2.0, ModelKind::GlobalAds).unwrap()
    }

    fn spectrum(model: &SpacetimeModel, symbol: BoundarySymbol, l_max: usize, k_max: usize, n: usize) -> SpectralData {
        let s = SpectrumSettings { chart: RadialChart::default().with_intervals(n), l_max, k_max, ..Default::default() };
        compute_spectrum(model, &symbol, &s).unwrap()
    }

    #[test]
    fn canonical_twisting_s_matches_closed_form() {
        // S_F = -ν₋² x² for F = x^{ν₋}
        for &(n, nu) in &[(4usize, 0.5), (4, 0.3), (3, 0.8), (5, 0.6)] {
            let m = build_model_nu(n, nu, ModelKind::GlobalAds).unwrap();
            let f = TwistingFunction::canonical(&m);
            for &r in &[0.1, 0.5, 1.0, 1.4, 1.55] {
                assert_relative_eq!(f.s_over_x2(&m, r), -m.nu_minus.powi(2), max_relative = 1e-6);
            }
            let (_, s) = layer_parts(&m, &f, &Puiseux::monomial(0.0, 1.0, 8), true);
            assert_relative_eq!(s.eval(0.01), -m.nu_minus.powi(2), max_relative = 1e-10);
        }
    }

    #[test]
    fn twisting_rejects_nonpositive_warp() {
        assert!(TwistingFunction::new(&ads4(), -1.0).is_err());
        assert!(TwistingFunction::new(&ads4(), 0.5).is_ok());
    }

    #[test]
    fn green_identity_dirichlet_eigenmode() {
        let m = ads4();
        let d = spectrum(&m, BoundarySymbol::Dirichlet, 1, 3, 6000);
        let f = TwistingFunction::canonical(&m);
        let u = SampledField::from_modes(&d, 1, &[(0, 1.0)]).unwrap();
        let g = green_identity_residual(&d, &f, &u, &u, 1e-6).unwrap();
        assert!(g.residual <= 1e-8, "{g:?}");
        assert_eq!(g.boundary.abs() < 1e-10, true);
    }

    #[test]
    fn green_identity_robin_generic_v() {
        let m = ads4();
        let theta = 1.3;
        let d = spectrum(&m, BoundarySymbol::Robin { theta }, 2, 4, 6000);
        for &c in &[0.0, 0.5] {
            let f = TwistingFunction::new(&m, c).unwrap();
            let u = SampledField::from_modes(&d, 2, &[(0, 1.0), (1, -0.4)]).unwrap();
            let v = SampledField::from_modes(&d, 2, &[(2, 0.7), (3, 0.2)]).unwrap();
            let g = green_identity_residual(&d, &f, &u, &v, 1e-6).unwrap();
            assert!(g.residual <= 1e-6, "{g:?}");
            assert_relative_eq!(g.boundary, -2.0 * m.nu * theta * u.a * v.a, max_relative = 1e-8);
        }
        let f = TwistingFunction::canonical(&m);
        let u = SampledField::from_modes(&d, 0, &[(0, 1.0)]).unwrap();
        let zero = SampledField::from_modes(&d, 0, &[]).unwrap();
        let g = green_identity_residual(&d, &f, &u, &zero, 1e-6).unwrap();
        assert_eq!((g.lhs, g.e0, g.s_term, g.boundary), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn green_identity_converges_for_small_nu() {
        let m = build_model_nu(4, 0.3, ModelKind::GlobalAds).unwrap();
        let f = TwistingFunction::canonical(&m);
        let c = green_convergence(&m, &BoundarySymbol::Robin { theta: -1.0 }, &f, 1, &[(0, 1.0)], &[(1, 1.0)], &[400, 800, 1600])
            .unwrap();
        assert!(c.orders.iter().all(|&o| o >= 2.0), "{c:?}");
    }

    #[test]
    fn grid_too_coarse_is_reported() {
        let m = ads4();
        let d = spectrum(&m, BoundarySymbol::Dirichlet, 0, 6, 64);
        let f = TwistingFunction::canonical(&m);
        let u = SampledField::from_modes(&d, 0, &[(5, 1.0)]).unwrap();
        assert!(matches!(green_identity_residual(&d, &f, &u, &u, 1e-12), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn energy_form_eigen_identity_and_hermiticity() {
        let m = ads4();
        let d = spectrum(&m, BoundarySymbol::SecondOrder { a: 1.0, b: 0.1 }, 2, 4, 6000);
        let f = TwistingFunction::canonical(&m);
        for ell in 0..=2 {
            let p = &d.mode(ell).unwrap().pairs[1];
            let u = SampledField::from_modes(&d, ell, &[(1, 1.0)]).unwrap();
            assert_relative_eq!(energy_functional(&d, &f, &u, &u).unwrap(), -p.omega_sq, max_relative = 1e-8);
        }
        let u = [(0, Complex64::new(1.0, 0.5)), (2, Complex64::new(-0.3, 0.2))];
        let v = [(1, Complex64::new(0.2, -1.0)), (2, Complex64::new(0.7, 0.1))];
        let a = energy_functional_complex(&d, &f, 1, &u, &v).unwrap();
        let b = energy_functional_complex(&d, &f, 1, &v, &u).unwrap();
        assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn positivity_link_both_directions() {
        let m = ads4();
        let f = TwistingFunction::canonical(&m);
        let good = spectrum(&m, BoundarySymbol::Robin { theta: 0.5 }, 1, 3, 3000);
        let l = positivity_link(&good, &f, 3).unwrap();
        assert!(l.spectrum_positive && l.form_positive && l.max_mismatch < 1e-6, "{l:?}");
        let bad = spectrum(&m, BoundarySymbol::Robin { theta: -2.0 }, 1, 3, 3000);
        let l = positivity_link(&bad, &f, 3).unwrap();
        assert!(!l.spectrum_positive && !l.form_positive, "{l:?}");
    }

    fn shell_kernel(symbol: BoundarySymbol, k: usize) -> KernelSum {
        let d = spectrum(&ads4(), symbol, 0, k, 6000);
        build_kernel(Arc::new(d), KernelKind::Causal).unwrap()
    }

    #[test]
    fn time_slice_second_order() {
        let k = shell_kernel(BoundarySymbol::Robin { theta: 1.0 }, 30);
        let f = TestFunction::single(
            "f",
            TimeProfile::Bump { center: 3.0, half_width: 0.4 },
            RadialProfile::Bump { center: 0.7, half_width: 0.3 },
            ZonalProfile::monopole(3),
        );
        let r1 = time_slice_residual(&k, &f, (1.0, 2.0), 0.02).unwrap().residual;
        let r2 = time_slice_residual(&k, &f, (1.0, 2.0), 0.01).unwrap().residual;
        let order = (r1 / r2).log2();
        assert!(order > 1.8 && order < 2.3, "{r1} {r2}");
        assert_eq!(time_slice_residual(&k, &TestFunction::zero("0"), (1.0, 2.0), 0.01).unwrap().residual, 0.0);
        assert!(matches!(time_slice_residual(&k, &f, (1.0, 1.05), 0.01), Err(Error::WindowTooNarrow(_))));
    }

    #[test]
    fn bounce_dirichlet_and_robin() {
        let m = ads4();
        for sym in [BoundarySymbol::Dirichlet, BoundarySymbol::Robin { theta: 1.0 }] {
            let d = spectrum(&m, sym, 0, 60, 6000);
            let b = bounce_test(&d, PI / 4.0, 0.05).unwrap();
            assert!(b.relative_error() < 0.02, "{sym:?}: {} vs {}", b.measured, b.predicted);
        }
    }

    #[test]
    fn causal_battery_matches_geometry() {
        let m = ads4();
        let k = shell_kernel(BoundarySymbol::Dirichlet, 60);
        let mut connected = 0;
        for case in causal_battery() {
            let geo = broken_null_connected(&m, &case).unwrap();
            let (num, rel) = causal_connected(&k, &case, 1e-3).unwrap();
            assert_eq!(geo, num, "{case:?}: rel {rel:e}");
            connected += geo as usize;
        }
        assert!(connected >= 4 && connected <= 6);
    }
}

//! Static AdS backgrounds, the boundary function x = cos ρ and the per-mode
//! radial potential in Schrödinger gauge.
//!
//! Global AdS_n is `(-dτ² + dρ² + sin²ρ dΩ²_{n-2}) / cos²ρ` with ρ ∈ [0, π/2).
//! The half strip is its 1+1 dimensional cousin with a regular wall at ρ = 0.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GlobalAds,
    HalfStrip1p1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeModel {
    pub n: usize,
    pub mass_sq: f64,
    pub nu: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub kind: ModelKind,
}

/// Builds a model from the dimension and the squared mass.
pub fn build_model(n: usize, mass_sq: f64, kind: ModelKind) -> Result<SpacetimeModel> {
    match kind {
        ModelKind::GlobalAds if n < 3 => {
            return Err(Error::UnsupportedModel(format!("global AdS needs n >= 3, got {n}")))
        }
        ModelKind::HalfStrip1p1 if n != 2 => {
            return Err(Error::UnsupportedModel(format!("half strip is 1+1 dimensional, got n = {n}")))
        }
        _ => {}
    }
    let d = (n - 1) as f64;
    let value = d * d + 4.0 * mass_sq;
    if value <= 0.0 || !value.is_finite() {
        return Err(Error::BfViolation { n, mass_sq, value });
    }
    let nu = 0.5 * value.sqrt();
    Ok(SpacetimeModel {
        n,
        mass_sq,
        nu,
        nu_minus: 0.5 * d - nu,
        nu_plus: 0.5 * d + nu,
        kind,
    })
}

/// Builds a model from ν directly (m² = ν² - (n-1)²/4).
pub fn build_model_nu(n: usize, nu: f64, kind: ModelKind) -> Result<SpacetimeModel> {
    if nu <= 0.0 || !nu.is_finite() {
        let d = n.saturating_sub(1) as f64;
        return Err(Error::BfViolation { n, mass_sq: nu * nu - 0.25 * d * d, value: 4.0 * nu * nu });
    }
    let d = (n.max(1) - 1) as f64;
    let mut m = build_model(n, nu * nu - 0.25 * d * d, kind)?;
    // keep ν exact rather than round-tripping through the square root
    m.nu = nu;
    m.nu_minus = 0.5 * d - nu;
    m.nu_plus = 0.5 * d + nu;
    Ok(m)
}

impl SpacetimeModel {
    /// Dimension of the boundary sphere S^{n-2}; zero for the half strip.
    pub fn sphere_dim(&self) -> usize {
        match self.kind {
            ModelKind::GlobalAds => self.n - 2,
            ModelKind::HalfStrip1p1 => 0,
        }
    }

    /// Center index μ_ℓ. The half strip only has ℓ = 0, with a Dirichlet-type wall (μ = 1/2).
    pub fn mu(&self, ell: usize) -> Result<f64> {
        match self.kind {
            ModelKind::GlobalAds => Ok(ell as f64 + (self.n as f64 - 3.0) / 2.0),
            ModelKind::HalfStrip1p1 if ell == 0 => Ok(0.5),
            ModelKind::HalfStrip1p1 => Err(Error::UnsupportedModel(format!(
                "half strip has a single mode, asked for l = {ell}"
            ))),
        }
    }

    /// Eigenvalue ℓ(ℓ + n - 3) of minus the Laplacian on the unit (n-2)-sphere.
    pub fn lambda(&self, ell: usize) -> f64 {
        match self.kind {
            ModelKind::GlobalAds => (ell * (ell + self.n - 3)) as f64,
            ModelKind::HalfStrip1p1 => 0.0,
        }
    }

    /// Largest admissible ℓ for the model (the half strip carries one mode).
    pub fn max_ell(&self, requested: usize) -> usize {
        match self.kind {
            ModelKind::GlobalAds => requested,
            ModelKind::HalfStrip1p1 => 0,
        }
    }

    /// Boundary function x(ρ).
    pub fn boundary_coordinate(&self, rho: f64) -> f64 {
        rho.cos()
    }

    /// ĝ⁻¹(dx, dx) for the conformally rescaled metric at radius ρ.
    pub fn boundary_normalization(&self, rho: f64) -> f64 {
        let dx = -rho.sin();
        dx * dx
    }

    /// Radial potential for any model kind.
    pub fn radial_potential(&self, ell: usize) -> Result<Potential> {
        Ok(Potential { nu: self.nu, mu: self.mu(ell)? })
    }

    /// Liouville factor W(ρ) = tan^{(n-2)/2}ρ with ψ = W·R.
    pub fn liouville_weight(&self, rho: f64) -> f64 {
        rho.tan().powf((self.n as f64 - 2.0) / 2.0)
    }
}

/// V(ρ) = (ν² - 1/4)/cos²ρ + (μ² - 1/4)/sin²ρ
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential {
    pub nu: f64,
    pub mu: f64,
}

impl Potential {
    pub fn at(&self, rho: f64) -> f64 {
        let c = rho.cos();
        let s = rho.sin();
        (self.nu * self.nu - 0.25) / (c * c) + (self.mu * self.mu - 0.25) / (s * s)
    }
}

/// Schrödinger-form potential of mode ℓ on global AdS.
pub fn effective_potential(model: &SpacetimeModel, ell: usize) -> Result<impl Fn(f64) -> f64> {
    if model.kind != ModelKind::GlobalAds {
        return Err(Error::UnsupportedModel("effective_potential needs angular separation".into()));
    }
    let p = model.radial_potential(ell)?;
    Ok(move |rho: f64| p.at(rho))
}

/// Coordinate time for an outgoing radial null ray from ρ₀ to reach x = 0.
pub fn null_bounce_time(_model: &SpacetimeModel, rho0: f64) -> Result<f64> {
    if !(0.0..=FRAC_PI_2).contains(&rho0) || !rho0.is_finite() {
        return Err(Error::OutOfRange { what: "rho0", value: rho0 });
    }
    Ok(FRAC_PI_2 - rho0)
}

/// Radial discretization: a uniform ρ grid between the center series layer
/// and the boundary series layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialChart {
    /// ρ below which the center Frobenius series is used.
    pub match_radius: f64,
    /// x = cos ρ below which the boundary Frobenius series is used.
    pub boundary_layer: f64,
    /// number of uniform intervals between the two layers (even).
    pub intervals: usize,
    pub boundary_terms: usize,
    pub center_terms: usize,
}

impl Default for RadialChart {
    fn default() -> Self {
        RadialChart {
            match_radius: 0.02,
            boundary_layer: 0.01,
            intervals: 6000,
            boundary_terms: 6,
            center_terms: 16,
        }
    }
}

impl RadialChart {
    pub fn new(match_radius: f64, boundary_layer: f64, intervals: usize) -> Result<Self> {
        let c = RadialChart { match_radius, boundary_layer, intervals, ..Default::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn with_intervals(&self, intervals: usize) -> Self {
        RadialChart { intervals, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.match_radius > 0.0 && self.match_radius < 0.5) {
            return Err(Error::OutOfRange { what: "match_radius", value: self.match_radius });
        }
        if !(self.boundary_layer > 0.0 && self.boundary_layer < 0.5) {
            return Err(Error::OutOfRange { what: "boundary_layer", value: self.boundary_layer });
        }
        if self.intervals < 16 || self.intervals % 2 != 0 {
            return Err(Error::OutOfRange { what: "intervals (even, >= 16)", value: self.intervals as f64 });
        }
        if self.boundary_terms < 2 || self.center_terms < 2 {
            return Err(Error::OutOfRange { what: "series terms", value: self.boundary_terms.min(self.center_terms) as f64 });
        }
        Ok(())
    }

    pub fn rho_min(&self) -> f64 {
        self.match_radius
    }

    pub fn rho_max(&self) -> f64 {
        self.boundary_layer.acos()
    }

    pub fn h(&self) -> f64 {
        (self.rho_max() - self.rho_min()) / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.rho_min() + i as f64 * self.h()
    }

    pub fn rho_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.rho(i)).collect()
    }

    pub fn x_of_rho(&self, rho: f64) -> f64 {
        rho.cos()
    }

    /// sin of the match radius: the extent of the center layer in ξ = sin ρ.
    pub fn center_xi(&self) -> f64 {
        self.match_radius.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::d1;
    use approx::assert_relative_eq;

    fn ads4(mass_sq: f64) -> SpacetimeModel {
        build_model(4, mass_sq, ModelKind::GlobalAds).unwrap()
    }

    #[test]
    fn nu_examples() {
        let m = ads4(0.0);
        assert_relative_eq!(m.nu, 1.5);
        assert_relative_eq!(m.nu_minus, 0.0);
        assert_relative_eq!(m.nu_plus, 3.0);
        let m = ads4(-2.0);
        assert_relative_eq!(m.nu, 0.5);
        assert_relative_eq!(m.nu_minus, 1.0);
        assert_relative_eq!(m.nu_plus, 2.0);
        assert!(matches!(build_model(4, -2.25, ModelKind::GlobalAds), Err(Error::BfViolation { .. })));
    }

    #[test]
    fn exponent_identities() {
        for &(n, m2) in &[(3, -0.9), (4, -2.0), (5, 1.3), (7, -8.9)] {
            let m = build_model(n, m2, ModelKind::GlobalAds).unwrap();
            assert!(m.nu_minus < m.nu_plus);
            assert_relative_eq!(m.nu_minus + m.nu_plus, (n - 1) as f64, epsilon = 1e-14);
            assert_relative_eq!(m.nu_plus - m.nu_minus, 2.0 * m.nu, epsilon = 1e-14);
            // both exponents solve s(s - (n-1)) = m²
            for s in [m.nu_minus, m.nu_plus] {
                assert_relative_eq!(s * (s - (n - 1) as f64), m2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn boundary_function_normalized() {
        let m = ads4(-2.0);
        assert_eq!(m.boundary_normalization(FRAC_PI_2), 1.0);
    }

    #[test]
    fn potential_examples() {
        let v0 = effective_potential(&ads4(-2.0), 0).unwrap();
        let v1 = effective_potential(&ads4(-2.0), 1).unwrap();
        let v2 = effective_potential(&ads4(0.0), 0).unwrap();
        for i in 1..50 {
            let r = i as f64 * FRAC_PI_2 / 50.0;
            assert!(v0(r).abs() < 1e-14);
            assert_relative_eq!(v1(r), 2.0 / r.sin().powi(2), epsilon = 1e-12);
            assert_relative_eq!(v2(r), 2.0 / r.cos().powi(2), epsilon = 1e-12);
        }
        let strip = build_model_nu(2, 0.5, ModelKind::HalfStrip1p1).unwrap();
        assert!(matches!(effective_potential(&strip, 0), Err(Error::UnsupportedModel(_))));
    }

    /// Applies the untransformed radial Klein-Gordon operator to R = ψ/W and
    /// compares with the Schrödinger form ψ'' - Vψ.
    #[test]
    fn potential_matches_radial_operator() {
        for &(n, m2, ell) in &[(4usize, -2.0, 1usize), (4, 0.0, 0), (5, -3.1, 2), (3, -0.7, 3)] {
            let m = build_model(n, m2, ModelKind::GlobalAds).unwrap();
            let v = effective_potential(&m, ell).unwrap();
            let k = (n as f64 - 2.0) / 2.0;
            let psi = |r: f64| (1.7 * r).sin() * (0.3 + r * r);
            let big_r = |r: f64| psi(r) / r.tan().powf(k);
            let flux = |r: f64| r.tan().powf(2.0 * k) * d1(&big_r, r, 1e-4);
            let lam = m.lambda(ell);
            for &r in &[0.3f64, 0.7, 1.1, 1.4] {
                let w = r.tan().powf(k);
                let radial = d1(&flux, r, 1e-4) / (w * w) - (lam / r.sin().powi(2) + m2 / r.cos().powi(2)) * big_r(r);
                let lhs = w * radial;
                let h = 1e-3;
                let psi2 = (-psi(r + 2.0 * h) + 16.0 * psi(r + h) - 30.0 * psi(r) + 16.0 * psi(r - h)
                    - psi(r - 2.0 * h))
                    / (12.0 * h * h);
                let rhs = psi2 - v(r) * psi(r);
                assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "n={n} l={ell} r={r}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn potential_swap_symmetry() {
        let m = build_model(5, -3.1, ModelKind::GlobalAds).unwrap();
        let ell = 2;
        let p = m.radial_potential(ell).unwrap();
        let swapped = Potential { nu: p.mu, mu: p.nu };
        for i in 1..40 {
            let r = i as f64 * FRAC_PI_2 / 40.0;
            assert_relative_eq!(p.at(r), swapped.at(FRAC_PI_2 - r), max_relative = 1e-12);
        }
    }

    #[test]
    fn bounce_time_against_ray_integration() {
        let m = ads4(-2.0);
        assert_eq!(null_bounce_time(&m, FRAC_PI_2).unwrap(), 0.0);
        // affine null geodesic of g = ĝ/cos²ρ: Ω²ρ' and Ω²τ' are conserved, so
        // ρ' = τ' = cos²ρ. RK4 in the affine parameter until just short of the boundary.
        let rhs = |r: f64| r.cos().powi(2);
        let (mut rho, mut t, dl) = (std::f64::consts::FRAC_PI_4, 0.0, 1e-3);
        let stop = FRAC_PI_2 - 1e-3;
        while rho < stop {
            let k1 = rhs(rho);
            let k2 = rhs(rho + 0.5 * dl * k1);
            let k3 = rhs(rho + 0.5 * dl * k2);
            let k4 = rhs(rho + dl * k3);
            let dr = dl * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            rho += dr;
            t += dr; // τ' = ρ'
        }
        let remaining = FRAC_PI_2 - rho;
        assert_relative_eq!(t + remaining, null_bounce_time(&m, std::f64::consts::FRAC_PI_4).unwrap(), epsilon = 1e-9);
        assert_relative_eq!(null_bounce_time(&m, 1e-12).unwrap(), FRAC_PI_2, epsilon = 1e-11);
        assert!(null_bounce_time(&m, -0.1).is_err());
    }

    #[test]
    fn chart_monotone() {
        let c = RadialChart::default();
        c.validate().unwrap();
        let g = c.rho_grid();
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.windows(2).all(|w| c.x_of_rho(w[1]) < c.x_of_rho(w[0])));
        assert_relative_eq!(c.x_of_rho(*g.last().unwrap()), c.boundary_layer, epsilon = 1e-12);
    }
}

//! Generalized power series  Σ_i ξ^{p_i} Σ_j c_ij ξ^{2j}  used for the
//! Frobenius expansions at the two singular ends of the radial problem.

/// Sum of terms ξ^p · E(ξ²), truncated at a fixed number of even powers.
#[derive(Clone, Debug, PartialEq)]
pub struct Puiseux {
    terms: Vec<(f64, Vec<f64>)>,
    order: usize,
}

const EXP_MERGE: f64 = 1e-10;

impl Puiseux {
    pub fn zero(order: usize) -> Self {
        Puiseux { terms: Vec::new(), order }
    }

    /// ξ^p · Σ_j coeffs[j] ξ^{2j}
    pub fn even(p: f64, coeffs: &[f64], order: usize) -> Self {
        let mut c = coeffs.to_vec();
        c.resize(order, 0.0);
        Puiseux { terms: vec![(p, c)], order }
    }

    pub fn monomial(p: f64, c: f64, order: usize) -> Self {
        Self::even(p, &[c], order)
    }

    /// (1 - ξ²)^alpha
    pub fn one_minus_sq_pow(alpha: f64, order: usize) -> Self {
        let mut c = vec![0.0; order];
        let mut binom = 1.0;
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = binom;
            binom *= -(alpha - j as f64) / (j as f64 + 1.0);
        }
        Puiseux { terms: vec![(0.0, c)], order }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[(f64, Vec<f64>)] {
        &self.terms
    }

    fn push(&mut self, p: f64, coeffs: &[f64]) {
        if let Some((_, c)) = self.terms.iter_mut().find(|(q, _)| (q - p).abs() < EXP_MERGE) {
            for (a, b) in c.iter_mut().zip(coeffs) {
                *a += b;
            }
        } else {
            let mut c = coeffs.to_vec();
            c.resize(self.order, 0.0);
            self.terms.push((p, c));
        }
    }

    pub fn add(&self, other: &Puiseux) -> Puiseux {
        let order = self.order.max(other.order);
        let mut out = Puiseux::zero(order);
        for (p, c) in self.terms.iter().chain(other.terms.iter()) {
            out.push(*p, c);
        }
        out
    }

    pub fn sub(&self, other: &Puiseux) -> Puiseux {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Puiseux {
        Puiseux {
            terms: self
                .terms
                .iter()
                .map(|(p, c)| (*p, c.iter().map(|x| x * s).collect()))
                .collect(),
            order: self.order,
        }
    }

    /// Product truncated at the larger of the two orders.
    pub fn mul(&self, other: &Puiseux) -> Puiseux {
        let order = self.order.max(other.order);
        let mut out = Puiseux::zero(order);
        for (p, a) in &self.terms {
            for (q, b) in &other.terms {
                let mut c = vec![0.0; order];
                for (i, ai) in a.iter().enumerate() {
                    if *ai == 0.0 {
                        continue;
                    }
                    for (j, bj) in b.iter().enumerate().take(order.saturating_sub(i)) {
                        c[i + j] += ai * bj;
                    }
                }
                out.push(p + q, &c);
            }
        }
        out
    }

    /// d/dξ
    pub fn deriv(&self) -> Puiseux {
        let mut out = Puiseux::zero(self.order);
        for (p, c) in &self.terms {
            let d: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(j, cj)| cj * (p + 2.0 * j as f64))
                .collect();
            out.push(p - 1.0, &d);
        }
        out
    }

    /// Real power of a single-term series with nonzero leading coefficient.
    pub fn powf(&self, alpha: f64) -> Puiseux {
        let live: Vec<&(f64, Vec<f64>)> =
            self.terms.iter().filter(|(_, c)| c.iter().any(|x| *x != 0.0)).collect();
        assert_eq!(live.len(), 1, "powf needs a single-term series");
        let (p, a) = live[0];
        assert!(a[0] != 0.0, "powf needs a nonzero leading coefficient");
        if alpha.fract() != 0.0 {
            assert!(a[0] > 0.0, "non-integer power of a negative leading coefficient");
        }
        let n = self.order;
        let mut b = vec![0.0; n];
        b[0] = if alpha.fract() == 0.0 { a[0].powi(alpha as i32) } else { a[0].powf(alpha) };
        for m in 1..n {
            let mut s = 0.0;
            for k in 1..=m {
                s += ((alpha + 1.0) * k as f64 - m as f64) * a[k] * b[m - k];
            }
            b[m] = s / (m as f64 * a[0]);
        }
        Puiseux { terms: vec![(p * alpha, b)], order: n }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let t = xi * xi;
        self.terms
            .iter()
            .map(|(p, c)| {
                let mut acc = 0.0;
                for cj in c.iter().rev() {
                    acc = acc * t + cj;
                }
                if acc == 0.0 {
                    0.0
                } else {
                    xi.powf(*p) * acc
                }
            })
            .sum()
    }

    /// ∫_0^{xi_b} of the series. Monomials with exponent ≤ -1 must have a
    /// negligible coefficient relative to the largest one, otherwise `None`.
    pub fn integrate(&self, xi_b: f64) -> Option<f64> {
        let scale = self.magnitude(xi_b);
        let mut total = 0.0;
        for (p, c) in &self.terms {
            for (j, cj) in c.iter().enumerate() {
                let e = p + 2.0 * j as f64;
                if *cj == 0.0 {
                    continue;
                }
                if e <= -1.0 + 1e-9 {
                    if (cj * xi_b.powf(e + 1.0)).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE)
                        || cj.abs() <= 1e-12 * self.max_coeff()
                    {
                        continue;
                    }
                    return None;
                }
                total += cj * xi_b.powf(e + 1.0) / (e + 1.0);
            }
        }
        Some(total)
    }

    fn max_coeff(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|(_, c)| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn magnitude(&self, xi: f64) -> f64 {
        self.terms
            .iter()
            .flat_map(|(p, c)| {
                c.iter().enumerate().filter_map(move |(j, cj)| {
                    let e = p + 2.0 * j as f64;
                    if e > -1.0 + 1e-9 && *cj != 0.0 {
                        Some((cj * xi.powf(e + 1.0)).abs())
                    } else {
                        None
                    }
                })
            })
            .fold(0.0, f64::max)
    }
}

/// Frobenius coefficients for  -ψ'' + [a/ξ² + b/(1-ξ²)]ψ = ω²ψ  written in ξ = cos ρ
/// (or ξ = sin ρ at the other end, which swaps the two indices), with
/// a = idx_here² - 1/4, b = idx_other² - 1/4 and leading exponent `s`.
/// Returns c_0 = 1, c_1, ... such that ψ = Σ c_j ξ^{s+2j}.
/// A resonant coefficient (vanishing indicial factor) is set to zero.
pub fn frobenius_coeffs(s: f64, idx_here: f64, idx_other: f64, omega_sq: f64, terms: usize) -> Vec<f64> {
    let a = idx_here * idx_here - 0.25;
    let b = idx_other * idx_other - 0.25;
    let mut c = vec![0.0; terms.max(1)];
    c[0] = 1.0;
    for j in 1..terms {
        let p = s + 2.0 * j as f64;
        let q = p - 2.0;
        let r = p - 4.0;
        let ind = p * (p - 1.0) - a;
        let mut rhs = (2.0 * q * (q - 1.0) + q + (b - a - omega_sq)) * c[j - 1];
        if j >= 2 {
            rhs -= (r * r - omega_sq) * c[j - 2];
        }
        c[j] = if ind.abs() < 1e-12 { 0.0 } else { rhs / ind };
    }
    c
}

/// Like [`frobenius_coeffs`] but with at least `min_terms` terms and as many
/// more as needed for the tail to drop below rounding at ξ = `xi_max`.
pub fn frobenius_coeffs_adaptive(
    s: f64,
    idx_here: f64,
    idx_other: f64,
    omega_sq: f64,
    min_terms: usize,
    xi_max: f64,
) -> Vec<f64> {
    const CAP: usize = 60;
    let full = frobenius_coeffs(s, idx_here, idx_other, omega_sq, CAP);
    let t = xi_max * xi_max;
    let mut size = 0.0f64;
    let mut pw = 1.0;
    let mut mags = Vec::with_capacity(CAP);
    for c in &full {
        let m = (c * pw).abs();
        size = size.max(m);
        mags.push(m);
        pw *= t;
    }
    let mut n = min_terms.max(2);
    while n < CAP && (mags[n - 1] > 1e-17 * size || mags[n - 2] > 1e-17 * size) {
        n += 1;
    }
    full[..n].to_vec()
}

/// True when the leading-exponent family hits a vanishing indicial factor.
pub fn is_resonant(s: f64, idx_here: f64, terms: usize) -> bool {
    let a = idx_here * idx_here - 0.25;
    (1..terms).any(|j| {
        let p = s + 2.0 * j as f64;
        (p * (p - 1.0) - a).abs() < 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_minus_sq_half_matches_sqrt() {
        let s = Puiseux::one_minus_sq_pow(0.5, 12);
        for &x in &[0.01, 0.1, 0.2] {
            assert_relative_eq!(s.eval(x), (1.0 - x * x).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn powf_inverts_product() {
        let s = Puiseux::even(0.5, &[2.0, 0.3, -0.1], 8);
        let inv = s.powf(-1.0);
        let one = s.mul(&inv);
        assert_relative_eq!(one.eval(0.07), 1.0, epsilon = 1e-12);
        let sq = s.powf(0.5).mul(&s.powf(0.5));
        assert_relative_eq!(sq.eval(0.05), s.eval(0.05), epsilon = 1e-13);
    }

    #[test]
    fn derivative_and_integral() {
        let s = Puiseux::even(0.3, &[1.0, 2.0], 4);
        let x: f64 = 0.1;
        let d = s.deriv().eval(x);
        let expect = 0.3 * x.powf(-0.7) + 2.0 * 2.3 * x.powf(1.3);
        assert_relative_eq!(d, expect, epsilon = 1e-12);
        let i = s.integrate(x).unwrap();
        assert_relative_eq!(i, x.powf(1.3) / 1.3 + 2.0 * x.powf(3.3) / 3.3, epsilon = 1e-14);
        assert!(Puiseux::monomial(-1.5, 1.0, 2).integrate(0.1).is_none());
    }

    #[test]
    fn frobenius_free_wave() {
        // V ≡ 0: regular branch at the boundary end with s = 0 reproduces cos(ω y) where
        // sin y = ξ; for ω = 2 this is 1 - 2ξ² exactly.
        let c = frobenius_coeffs(0.0, 0.5, 0.5, 4.0, 5);
        assert_relative_eq!(c[1], -2.0, epsilon = 1e-14);
        assert!(c[2].abs() < 1e-14);
        // s = 1, ω = 3: sin(3y) = 3ξ - 4ξ³
        let c = frobenius_coeffs(1.0, 0.5, 0.5, 9.0, 5);
        assert_relative_eq!(c[1], -4.0 / 3.0, epsilon = 1e-14);
        assert!(c[2].abs() < 1e-14);
    }

    #[test]
    fn frobenius_solves_ode_numerically() {
        let (nu, mu, w2) = (0.3, 1.5, 7.3);
        for s in [0.5 - nu, 0.5 + nu] {
            let c = frobenius_coeffs(s, nu, mu, w2, 14);
            let psi = Puiseux::even(s, &c, 14);
            let x: f64 = 0.08;
            // ψ_ρρ = (1 - x²) ψ_xx - x ψ_x
            let dx = psi.deriv();
            let dxx = dx.deriv();
            let prr = (1.0 - x * x) * dxx.eval(x) - x * dx.eval(x);
            let v = (nu * nu - 0.25) / (x * x) + (mu * mu - 0.25) / (1.0 - x * x);
            let res = -prr + (v - w2) * psi.eval(x);
            assert!(res.abs() < 1e-12 * (v * psi.eval(x)).abs().max(1.0), "residual {res}");
        }
    }

    #[test]
    fn resonance_detection() {
        assert!(is_resonant(0.5 - 1.0, 1.0, 6));
        assert!(!is_resonant(0.5 - 0.3, 0.3, 6));
    }
}

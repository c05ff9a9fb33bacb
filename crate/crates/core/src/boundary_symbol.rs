//! Boundary conditions B = θ_ℓ·A as a real symbol on angular harmonics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundarySymbol {
    Dirichlet,
    Robin { theta: f64 },
    SecondOrder { a: f64, b: f64 },
}

/// θ_ℓ, with Dirichlet as the formal infinite limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaValue {
    Finite(f64),
    Infinite,
}

impl ThetaValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ThetaValue::Finite(t) => Some(t),
            ThetaValue::Infinite => None,
        }
    }
}

impl BoundarySymbol {
    pub fn order(&self) -> u32 {
        match self {
            BoundarySymbol::SecondOrder { b, .. } if *b != 0.0 => 2,
            _ => 0,
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundarySymbol::Dirichlet)
    }

    pub fn label(&self) -> String {
        match self {
            BoundarySymbol::Dirichlet => "dirichlet".into(),
            BoundarySymbol::Robin { theta } => format!("robin({theta})"),
            BoundarySymbol::SecondOrder { a, b } => format!("second_order({a},{b})"),
        }
    }
}

/// θ_ℓ for dimension n. SecondOrder uses λ_ℓ = ℓ(ℓ + n - 3).
pub fn theta_of_mode(symbol: &BoundarySymbol, n: usize, ell: usize) -> ThetaValue {
    match *symbol {
        BoundarySymbol::Dirichlet => ThetaValue::Infinite,
        BoundarySymbol::Robin { theta } => ThetaValue::Finite(theta),
        BoundarySymbol::SecondOrder { a, b } => {
            let lambda = if n >= 3 { (ell * (ell + n - 3)) as f64 } else { 0.0 };
            ThetaValue::Finite(a + b * lambda)
        }
    }
}

/// A symbol as supplied by a user before validation: a polynomial
/// Σ_j c_j λ^j in the boundary Laplacian eigenvalue, possibly complex.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSpec {
    pub dirichlet: bool,
    pub coefficients: Vec<Complex64>,
}

impl From<BoundarySymbol> for SymbolSpec {
    fn from(s: BoundarySymbol) -> Self {
        match s {
            BoundarySymbol::Dirichlet => SymbolSpec { dirichlet: true, coefficients: vec![] },
            BoundarySymbol::Robin { theta } => SymbolSpec {
                dirichlet: false,
                coefficients: vec![Complex64::new(theta, 0.0)],
            },
            BoundarySymbol::SecondOrder { a, b } => SymbolSpec {
                dirichlet: false,
                coefficients: vec![Complex64::new(a, 0.0), Complex64::new(b, 0.0)],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub self_adjoint: bool,
    pub local_in_time: bool,
    pub order: u32,
    pub symbol: BoundarySymbol,
}

/// Checks reality of the coefficients and order ≤ 2 and returns the real symbol.
/// Static symbols are local in time by construction.
pub fn validate_hypothesis(spec: &SymbolSpec) -> Result<HypothesisReport> {
    if spec.dirichlet {
        if !spec.coefficients.is_empty() {
            return Err(Error::HypothesisViolation("Dirichlet takes no coefficients".into()));
        }
        return Ok(HypothesisReport {
            self_adjoint: true,
            local_in_time: true,
            order: 0,
            symbol: BoundarySymbol::Dirichlet,
        });
    }
    if let Some(c) = spec.coefficients.iter().find(|c| c.im != 0.0) {
        return Err(Error::HypothesisViolation(format!("non-real coefficient {c}: symbol is not self-adjoint")));
    }
    if spec.coefficients.iter().any(|c| !c.re.is_finite()) {
        return Err(Error::HypothesisViolation("non-finite coefficient".into()));
    }
    let mut coeffs: Vec<f64> = spec.coefficients.iter().map(|c| c.re).collect();
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    let order = 2 * (coeffs.len().max(1) as u32 - 1);
    if order > 2 {
        return Err(Error::HypothesisViolation(format!("order {order} exceeds 2")));
    }
    let symbol = match coeffs.as_slice() {
        [] => BoundarySymbol::Robin { theta: 0.0 },
        [t] => BoundarySymbol::Robin { theta: *t },
        [a, b] => BoundarySymbol::SecondOrder { a: *a, b: *b },
        _ => unreachable!(),
    };
    Ok(HypothesisReport { self_adjoint: true, local_in_time: true, order, symbol })
}

/// Boundary data given by harmonic coefficients: `data[ℓ]` holds the 2ℓ+1
/// (or, in general, dim H_ℓ) complex coefficients of γ₋.
pub type HarmonicData = Vec<Vec<Complex64>>;

/// |⟨Θγ₋u, γ₋v⟩ - ⟨γ₋u, Θγ₋v⟩| relative to the size of the two pairings.
pub fn energy_form_symmetry_check(symbol: &BoundarySymbol, n: usize, u: &HarmonicData, v: &HarmonicData) -> f64 {
    if symbol.is_dirichlet() {
        return 0.0;
    }
    let mut left = Complex64::new(0.0, 0.0);
    let mut right = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for (ell, (ul, vl)) in u.iter().zip(v.iter()).enumerate() {
        let th = theta_of_mode(symbol, n, ell).finite().unwrap_or(0.0);
        for (a, b) in ul.iter().zip(vl.iter()) {
            let tu = a * th;
            let tv = b * th;
            left += tu * b.conj();
            right += a * tv.conj();
            scale += (tu * b.conj()).norm();
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        (left - right).norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, lmax: usize) -> HarmonicData {
        (0..=lmax)
            .map(|l| (0..2 * l + 1).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect()
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_of_mode(&BoundarySymbol::Robin { theta: 0.0 }, 4, 7), ThetaValue::Finite(0.0));
        assert_eq!(theta_of_mode(&BoundarySymbol::SecondOrder { a: 1.0, b: 2.0 }, 4, 3), ThetaValue::Finite(25.0));
        assert_eq!(theta_of_mode(&BoundarySymbol::Dirichlet, 4, 5), ThetaValue::Infinite);
    }

    #[test]
    fn hypothesis_examples() {
        let r = validate_hypothesis(&BoundarySymbol::Robin { theta: -1.5 }.into()).unwrap();
        assert_eq!(r.order, 0);
        assert!(r.self_adjoint && r.local_in_time);
        let r = validate_hypothesis(&BoundarySymbol::SecondOrder { a: 0.0, b: 0.3 }.into()).unwrap();
        assert_eq!(r.order, 2);
        let bad = SymbolSpec { dirichlet: false, coefficients: vec![Complex64::new(1.0, 0.5)] };
        assert!(matches!(validate_hypothesis(&bad), Err(Error::HypothesisViolation(_))));
        let quartic = SymbolSpec {
            dirichlet: false,
            coefficients: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)],
        };
        assert!(matches!(validate_hypothesis(&quartic), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn symmetry_check_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_data(&mut rng, 6);
        assert!(energy_form_symmetry_check(&BoundarySymbol::Robin { theta: 2.0 }, 4, &u, &u) <= 1e-14);
        let v = random_data(&mut rng, 6);
        let s = BoundarySymbol::SecondOrder { a: 1.0, b: 1.0 };
        assert!(energy_form_symmetry_check(&s, 4, &u, &v) <= 1e-12);
        assert_eq!(energy_form_symmetry_check(&BoundarySymbol::Dirichlet, 4, &u, &v), 0.0);
    }

    #[test]
    fn monotone_in_ell_for_nonnegative_b() {
        for &(a, b) in &[(0.0, 0.0), (-1.0, 0.1), (2.0, 3.0)] {
            let s = BoundarySymbol::SecondOrder { a, b };
            let vals: Vec<f64> = (0..=20).map(|l| theta_of_mode(&s, 4, l).finite().unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn second_order_without_b_is_robin() {
        for l in 0..10 {
            assert_eq!(
                theta_of_mode(&BoundarySymbol::SecondOrder { a: 0.7, b: 0.0 }, 5, l),
                theta_of_mode(&BoundarySymbol::Robin { theta: 0.7 }, 5, l)
            );
        }
    }
}

//! Small numerical helpers: bumps, quadrature, Gegenbauer polynomials and
//! the zonal addition kernel on spheres.

use std::f64::consts::PI;

/// Smooth compactly supported bump on [center - half_width, center + half_width], peak 1.
pub fn bump(t: f64, center: f64, half_width: f64) -> f64 {
    let s = (t - center) / half_width;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Derivative of [`bump`] in `t`.
pub fn bump_deriv(t: f64, center: f64, half_width: f64) -> f64 {
    let s = (t - center) / half_width;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s * s;
    bump(t, center, half_width) * (-2.0 * s / (q * q)) / half_width
}

/// Quintic smoothstep: 0 below `a`, 1 above `b`, C^2 in between.
pub fn smoothstep5(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        0.0
    } else if t >= b {
        1.0
    } else {
        let s = (t - a) / (b - a);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Composite Simpson on uniformly spaced samples; falls back to a trapezoid
/// panel for the last interval when the count is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = 0.0;
    if even > 0 {
        s += values[0] + values[even];
        for (i, v) in values.iter().enumerate().take(even).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s *= h / 3.0;
    }
    if even < intervals {
        s += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    s
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Gegenbauer polynomials C_0..=C_lmax at x for parameter alpha > 0.
pub fn gegenbauer_all(lmax: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; lmax + 1];
    out[0] = 1.0;
    if lmax >= 1 {
        out[1] = 2.0 * alpha * x;
    }
    for l in 2..=lmax {
        let lf = l as f64;
        out[l] = (2.0 * x * (lf + alpha - 1.0) * out[l - 1] - (lf + 2.0 * alpha - 2.0) * out[l - 2]) / lf;
    }
    out
}

/// Gamma function at a positive integer or half-integer.
pub fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round();
    assert!(twice >= 1.0 && (2.0 * x - twice).abs() < 1e-12, "gamma_half_integer({x})");
    let (mut acc, mut y) = if twice as i64 % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while y < x - 1e-12 {
        acc *= y;
        y += 1.0;
    }
    acc
}

/// Area of the unit d-sphere embedded in R^{d+1}.
pub fn sphere_area(d: usize) -> f64 {
    let k = (d as f64 + 1.0) / 2.0;
    2.0 * PI.powf(k) / gamma_half_integer(k)
}

/// Dimension of degree-l spherical harmonics on S^d.
pub fn harmonic_dimension(d: usize, l: usize) -> f64 {
    match d {
        0 => {
            if l == 0 {
                1.0
            } else {
                0.0
            }
        }
        1 => {
            if l == 0 {
                1.0
            } else {
                2.0
            }
        }
        _ => {
            // (2l + d - 1) (l + d - 2)! / (l! (d - 1)!)
            let mut binom = 1.0;
            for i in 1..=(d - 2) {
                binom *= (l + i) as f64 / i as f64;
            }
            binom * (2 * l + d - 1) as f64 / (d - 1) as f64
        }
    }
}

/// Zonal addition kernel on S^d: sum over m of Y_lm(a) Y_lm(b) as a function of cos of the angle.
/// Returns values for l = 0..=lmax.
pub fn addition_kernel(d: usize, lmax: usize, cos_gamma: f64) -> Vec<f64> {
    let c = cos_gamma.clamp(-1.0, 1.0);
    let area = sphere_area(d);
    if d == 1 {
        let g = c.acos();
        return (0..=lmax)
            .map(|l| harmonic_dimension(1, l) * (l as f64 * g).cos() / area)
            .collect();
    }
    let alpha = (d as f64 - 1.0) / 2.0;
    let at_x = gegenbauer_all(lmax, alpha, c);
    let at_one = gegenbauer_all(lmax, alpha, 1.0);
    (0..=lmax)
        .map(|l| harmonic_dimension(d, l) / area * at_x[l] / at_one[l])
        .collect()
}

/// Five-point first derivative.
pub fn d1<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, epsilon = 1e-13);
    }

    #[test]
    fn harmonic_dims() {
        for l in 0..6 {
            assert_eq!(harmonic_dimension(2, l), (2 * l + 1) as f64);
            assert_eq!(harmonic_dimension(3, l), ((l + 1) * (l + 1)) as f64);
        }
    }

    #[test]
    fn legendre_from_gegenbauer() {
        let x: f64 = 0.3;
        let p = gegenbauer_all(3, 0.5, x);
        assert_relative_eq!(p[2], 0.5 * (3.0 * x * x - 1.0), epsilon = 1e-14);
        assert_relative_eq!(p[3], 0.5 * (5.0 * x.powi(3) - 3.0 * x), epsilon = 1e-14);
    }

    #[test]
    fn addition_kernel_s2_matches_legendre_form() {
        let x = -0.4;
        let k = addition_kernel(2, 4, x);
        let p = gegenbauer_all(4, 0.5, x);
        for l in 0..=4 {
            assert_relative_eq!(k[l], (2 * l + 1) as f64 / (4.0 * PI) * p[l], epsilon = 1e-14);
        }
    }

    #[test]
    fn addition_kernel_integrates_to_dimension_on_diagonal() {
        // K_l(1) * area = dim H_l
        for d in 1..=4 {
            let k = addition_kernel(d, 5, 1.0);
            for (l, kl) in k.iter().enumerate() {
                assert_relative_eq!(kl * sphere_area(d), harmonic_dimension(d, l), epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn simpson_exact_on_cubic() {
        let h = 0.1;
        let v: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert_relative_eq!(simpson(&v, h), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn smoothstep_plateaus() {
        assert_eq!(smoothstep5(0.0, 1.0, 2.0), 0.0);
        assert_eq!(smoothstep5(3.0, 1.0, 2.0), 1.0);
        assert_relative_eq!(smoothstep5(1.5, 1.0, 2.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bump_derivative_matches_difference() {
        for &t in &[0.1, 0.35, -0.2, 0.7] {
            let fd = d1(&|s| bump(s, 0.1, 0.8), t, 1e-4);
            assert_relative_eq!(bump_deriv(t, 0.1, 0.8), fd, epsilon = 1e-8);
        }
    }
}

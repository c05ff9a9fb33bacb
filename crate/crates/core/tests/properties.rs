use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, OnceLock};

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::evolution::{evolve, DeformationProfile, EvolutionState, FdGrid, NoSource};
use adsprop::geometry::{build_model, build_model_nu, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, lagrange_form, lowest_for_theta, SpectralData, SpectrumSettings};
use adsprop::propagators::{build_kernel, random_test_functions, smear, KernelKind};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn robin_data() -> Arc<SpectralData> {
    static DATA: OnceLock<Arc<SpectralData>> = OnceLock::new();
    DATA.get_or_init(|| {
        let m = build_model(4, -2.0, ModelKind::GlobalAds).unwrap();
        let s = SpectrumSettings { chart: RadialChart::default().with_intervals(2000), l_max: 3, k_max: 20, ..Default::default() };
        Arc::new(compute_spectrum(&m, &BoundarySymbol::Robin { theta: 1.0 }, &s).unwrap())
    })
    .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Strip ν = 1/2, ℓ = 0: the lowest Robin mode solves -ω cot(ωπ/2) = θ.
    #[test]
    fn lowest_robin_mode_solves_the_secular_equation(theta in -0.6f64..4.0) {
        let m = build_model_nu(2, 0.5, ModelKind::HalfStrip1p1).unwrap();
        let w2 = lowest_for_theta(&m, 0, theta, &RadialChart::default().with_intervals(2000)).unwrap();
        let w = w2.sqrt();
        prop_assert!((-w / (w * FRAC_PI_2).tan() - theta).abs() < 1e-7 * theta.abs().max(1.0));
    }

    #[test]
    fn lowest_mode_increases_with_theta(theta in -0.6f64..4.0, step in 0.05f64..1.0) {
        let m = build_model(4, -2.0, ModelKind::GlobalAds).unwrap();
        let chart = RadialChart::default().with_intervals(1500);
        let lo = lowest_for_theta(&m, 0, theta, &chart).unwrap();
        let hi = lowest_for_theta(&m, 0, theta + step, &chart).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn lagrange_form_is_antisymmetric_and_vanishes_on_a_common_condition(
        nu in 0.05f64..3.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0, theta in -5.0f64..5.0, b1 in -5.0f64..5.0,
    ) {
        let u = (a1, b1);
        let v = (a2, theta * a2);
        prop_assert_eq!(lagrange_form(nu, u, v), -lagrange_form(nu, v, u));
        prop_assert!(lagrange_form(nu, (a1, theta * a1), v).abs() < 1e-12 * (1.0 + (a1 * a2 * theta).abs()));
    }

    #[test]
    fn causal_pairing_is_antisymmetric_and_the_two_point_imaginary_part_is_half_of_it(seed in any::<u64>()) {
        let two = build_kernel(robin_data(), KernelKind::TwoPoint).unwrap();
        let causal = two.with_kind(KernelKind::Causal).unwrap();
        let fs = random_test_functions(2, 2, seed);
        let fg = smear(&causal, &fs[0], &fs[1]).unwrap();
        let gf = smear(&causal, &fs[1], &fs[0]).unwrap();
        prop_assert!((fg.value + gf.value).norm() <= 1e-12 * fg.scale.max(1e-300));
        let w = smear(&two, &fs[0], &fs[1]).unwrap().value;
        prop_assert!((w.im - 0.5 * fg.value.re).abs() <= 1e-12 * fg.scale.max(1e-300));
        prop_assert!(smear(&two, &fs[0], &fs[0]).unwrap().value.re >= 0.0);
    }
}

#[test]
fn static_evolution_conserves_energy_for_random_data() {
    let m = build_model_nu(2, 0.5, ModelKind::HalfStrip1p1).unwrap();
    let grid = FdGrid::new(&m, &BoundarySymbol::Robin { theta: 0.5 }, 200).unwrap();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(6));
    runner
        .run(&(0.3f64..1.2, 0.1f64..0.3), |(center, width)| {
            let w = grid.twist(|rho| adsprop::special::bump(rho, center, width), 0.0);
            let init = EvolutionState { tau: 0.0, p: vec![0.0; w.len()], w };
            let e0 = init.energy(&grid);
            let dtau = 0.5 * grid.h;
            // one full period; leapfrog energy oscillates at O(dτ²) without secular growth
            let steps = (2.0 * std::f64::consts::PI / dtau) as usize;
            let mut worst: f64 = 0.0;
            let end = evolve(&grid, &DeformationProfile::none(), init, dtau, steps, &NoSource, |s| {
                worst = worst.max((s.energy(&grid) - e0).abs() / e0);
            })
            .unwrap();
            assert!(worst < 1e-2, "{worst}");
            assert_relative_eq!(end.energy(&grid), e0, max_relative = 1e-2);
            Ok(())
        })
        .unwrap();
}

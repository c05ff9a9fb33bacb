//! Retarded, advanced and causal pairings of two shell test functions, plus a
//! fixed-time slice of the causal kernel.

use std::sync::Arc;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::propagators::{
    build_kernel, prepare, smear, spatial_slice, KernelKind, RadialProfile, TestFunction, TimeProfile, ZonalProfile,
};

fn shell(id: &str, t: f64, rho: f64, w: f64) -> TestFunction {
    TestFunction::single(id, TimeProfile::Bump { center: t, half_width: w }, RadialProfile::Bump { center: rho, half_width: w }, ZonalProfile::monopole(2))
}

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(3000), l_max: 2, k_max: 30, ..Default::default() };
    let data = Arc::new(compute_spectrum(&model, &BoundarySymbol::Robin { theta: 1.0 }, &s)?);
    let ret = build_kernel(data, KernelKind::Retarded)?;
    let adv = ret.with_kind(KernelKind::Advanced)?;
    let causal = ret.with_kind(KernelKind::Causal)?;

    let early = shell("early", 1.0, 0.7, 0.2);
    let late = shell("late", 2.2, 0.9, 0.2);
    for (name, k) in [("retarded", &ret), ("advanced", &adv), ("causal", &causal)] {
        let a = smear(k, &late, &early)?;
        let b = smear(k, &early, &late)?;
        println!("{name:9} G(late, early) = {:+.6e}  G(early, late) = {:+.6e}", a.value.re, b.value.re);
    }

    let (pf, pg) = (prepare(&causal, &early)?, prepare(&causal, &late)?);
    println!("causal slice in Δt:");
    for i in -4..=4 {
        let dt = 0.25 * i as f64;
        println!("  {dt:+.2} {:+.6e}", spatial_slice(&causal, &pf, &pg, dt).value.re);
    }
    Ok(())
}

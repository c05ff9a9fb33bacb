//! Replacing a late source by an equivalent one supported in an early window
//! leaves the causal propagator unchanged, up to O(dt²).

use std::sync::Arc;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::propagators::{build_kernel, KernelKind, RadialProfile, TestFunction, TimeProfile, ZonalProfile};
use adsprop::verify::time_slice_residual;

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(4000), l_max: 0, k_max: 30, ..Default::default() };
    let data = Arc::new(compute_spectrum(&model, &BoundarySymbol::Robin { theta: 1.0 }, &s)?);
    let k = build_kernel(data, KernelKind::Causal)?;
    let f = TestFunction::single(
        "f",
        TimeProfile::Bump { center: 3.0, half_width: 0.4 },
        RadialProfile::Bump { center: 0.7, half_width: 0.3 },
        ZonalProfile::monopole(2),
    );
    for dt in [0.02, 0.01, 0.005, 0.0025] {
        let r = time_slice_residual(&k, &f, (1.0, 2.0), dt)?;
        println!("dt = {dt:.4}  |G h - G f| / |G f| = {:.3e}", r.residual);
    }
    Ok(())
}

//! A radial wave packet launched at ρ₀ = π/4 reflects off the boundary and
//! returns at the null-geodesic time.

use std::f64::consts::FRAC_PI_4;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::verify::bounce_test;

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(6000), l_max: 0, k_max: 60, ..Default::default() };
    for symbol in [BoundarySymbol::Dirichlet, BoundarySymbol::Robin { theta: 1.0 }, BoundarySymbol::Robin { theta: -1.0 }] {
        let data = compute_spectrum(&model, &symbol, &s)?;
        let b = bounce_test(&data, FRAC_PI_4, 0.05)?;
        println!(
            "{:12} measured {:.5}  predicted {:.5}  rel err {:.2e}",
            symbol.label(),
            b.measured,
            b.predicted,
            b.relative_error()
        );
    }
    Ok(())
}

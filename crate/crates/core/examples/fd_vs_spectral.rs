//! The finite-volume retarded solution against the mode sum for ν = 0.3.

use std::sync::Arc;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::evolution::{fd_pairing, DeformationProfile, FdGrid};
use adsprop::geometry::{build_model_nu, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::propagators::{build_kernel, smear, KernelKind, RadialProfile, TestFunction, TimeProfile, ZonalProfile};

fn bump(id: &str, t: f64, rho: f64) -> TestFunction {
    TestFunction::single(id, TimeProfile::Bump { center: t, half_width: 0.25 }, RadialProfile::Bump { center: rho, half_width: 0.25 }, ZonalProfile::monopole(0))
}

fn main() -> adsprop::error::Result<()> {
    let model = build_model_nu(2, 0.3, ModelKind::HalfStrip1p1)?;
    let symbol = BoundarySymbol::Robin { theta: 0.5 };
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(6000), l_max: 0, k_max: 60, ..Default::default() };
    let ret = build_kernel(Arc::new(compute_spectrum(&model, &symbol, &s)?), KernelKind::Retarded)?;
    let (f, g) = (bump("f", 1.0, 0.7), bump("g", 2.2, 1.0));
    let spectral = smear(&ret, &g, &f)?.value.re;
    println!("spectral  {spectral:.10e}");
    for j in [100, 200, 400, 800] {
        let grid = FdGrid::new(&model, &symbol, j)?;
        let fd = fd_pairing(&grid, &DeformationProfile::none(), &g, &f, KernelKind::Retarded, 0.5 * grid.h)?;
        println!("J = {j:3}    {fd:.10e}  rel diff {:.2e}", (fd - spectral).abs() / spectral.abs());
    }
    Ok(())
}

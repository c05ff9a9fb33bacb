//! Pull back the ground state of the undeformed half strip through a compactly
//! supported metric deformation and check the commutator on a late battery.

use std::sync::Arc;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::cli::late_battery;
use adsprop::evolution::{pull_back_two_point, DeformationProfile, FdGrid};
use adsprop::geometry::{build_model_nu, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::propagators::{build_kernel, KernelKind};

fn main() -> adsprop::error::Result<()> {
    let model = build_model_nu(2, 0.5, ModelKind::HalfStrip1p1)?;
    let symbol = BoundarySymbol::Robin { theta: 1.0 };
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(6000), l_max: 0, k_max: 60, ..Default::default() };
    let two = build_kernel(Arc::new(compute_spectrum(&model, &symbol, &s)?), KernelKind::TwoPoint)?;

    let profile = DeformationProfile { amplitude: 0.4, tau_center: 2.2, tau_half_width: 0.6, rho_center: 0.8, rho_half_width: 0.4 };
    let battery = late_battery(3.3);
    for j in [200, 400, 800] {
        let grid = FdGrid::new(&model, &symbol, j)?;
        let flat = pull_back_two_point(&two, &grid, &DeformationProfile::none(), (0.5, 1.2), &battery, 0.5 * grid.h)?;
        let bent = pull_back_two_point(&two, &grid, &profile, (0.5, 1.2), &battery, 0.5 * grid.h)?;
        println!(
            "J = {j:3}  ccr defect {:.2e}  λ'(f₀,f₀) flat {:.6e} deformed {:.6e}",
            bent.ccr_defect(),
            flat.lambda[0][0].re,
            bent.lambda[0][0].re
        );
    }
    Ok(())
}

//! Normal modes of a conformally coupled scalar in AdS4 with Dirichlet and
//! Robin conditions, printed next to the closed forms.

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let settings = SpectrumSettings { chart: RadialChart::default().with_intervals(4000), l_max: 3, k_max: 5, ..Default::default() };

    let dir = compute_spectrum(&model, &BoundarySymbol::Dirichlet, &settings)?;
    println!("Dirichlet (exact ω = 2 + ℓ + 2k)");
    for m in &dir.modes {
        let row: Vec<String> = m.pairs.iter().map(|p| format!("{:.10}", p.omega())).collect();
        println!("  ℓ={} {}", m.ell, row.join(" "));
    }

    let robin = compute_spectrum(&model, &BoundarySymbol::Robin { theta: 0.7 }, &settings)?;
    println!("Robin θ = 0.7, ℓ = 0 (check -ω cot(ωπ/2) = θ)");
    for p in &robin.modes[0].pairs {
        let w = p.omega();
        println!("  ω = {w:.10}   -ω cot(ωπ/2) = {:.10}", -w / (w * std::f64::consts::FRAC_PI_2).tan());
    }
    println!("orthonormality defect {:.2e}", robin.orthonormality_defect(5));
    Ok(())
}

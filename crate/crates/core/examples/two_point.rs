//! Seeded battery of random test functions: commutator and positivity checks
//! for the ground-state two-point function.

use std::sync::Arc;

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::cli::ccr_battery;
use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::{compute_spectrum, SpectrumSettings};
use adsprop::propagators::{build_kernel, random_test_functions, KernelKind};

fn main() -> adsprop::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let s = SpectrumSettings { chart: RadialChart::default().with_intervals(3000), l_max: 3, k_max: 30, ..Default::default() };
    let data = Arc::new(compute_spectrum(&model, &BoundarySymbol::SecondOrder { a: 1.0, b: 0.1 }, &s)?);
    let two = build_kernel(data, KernelKind::TwoPoint)?;
    let ret = two.with_kind(KernelKind::Retarded)?;
    let adv = two.with_kind(KernelKind::Advanced)?;

    let fs = random_test_functions(2, 40, seed);
    let pairs: Vec<_> = fs.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
    let (ccr, gram, table) = ccr_battery(&two, &ret, &adv, &pairs)?;
    println!("seed {seed}, {} pairs", table.rows.len());
    println!("worst |Im λ(f,g) - G(f,g)/2| relative: {ccr:.2e}");
    println!("smallest Gram eigenvalue / trace:       {gram:.2e}");
    Ok(())
}

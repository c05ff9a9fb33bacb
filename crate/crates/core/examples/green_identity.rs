//! Convergence of the twisted Green formula under chart refinement.

use adsprop::boundary_symbol::BoundarySymbol;
use adsprop::geometry::{build_model, ModelKind};
use adsprop::verify::{green_convergence, TwistingFunction};

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let twist = TwistingFunction::canonical(&model);
    for symbol in [BoundarySymbol::Dirichlet, BoundarySymbol::Robin { theta: -1.0 }, BoundarySymbol::SecondOrder { a: 1.0, b: 0.1 }] {
        let c = green_convergence(&model, &symbol, &twist, 1, &[(0, 1.0), (1, 0.5)], &[(1, 1.0), (2, -0.3)], &[100, 200, 400, 800])?;
        println!("{}", symbol.label());
        for (n, r) in c.intervals.iter().zip(&c.residuals) {
            println!("  N = {n:4}  residual {r:.3e}");
        }
        println!("  observed orders {:?}", c.orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>());
    }
    Ok(())
}

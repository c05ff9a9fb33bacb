//! Lowest ℓ = 0 eigenvalue as θ decreases, and the critical value where a
//! negative mode appears (closed form -2/π for ν = 1/2).

use adsprop::geometry::{build_model, ModelKind, RadialChart};
use adsprop::mode_spectrum::theta_sweep;

fn main() -> adsprop::error::Result<()> {
    let model = build_model(4, -2.0, ModelKind::GlobalAds)?;
    let thetas: Vec<f64> = (0..=20).map(|i| 2.0 - 0.15 * i as f64).collect();
    let sweep = theta_sweep(&model, 0, &thetas, &RadialChart::default().with_intervals(3000))?;
    for (theta, w2) in &sweep.points {
        println!("θ = {theta:+.2}  ω₀² = {w2:.6}");
    }
    if let Some(star) = sweep.theta_star {
        println!("θ* = {star:.8}  (-2/π = {:.8})", -2.0 / std::f64::consts::PI);
    }
    Ok(())
}

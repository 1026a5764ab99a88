//! Binary logistic loss against a smoothed target: where each curve bottoms
//! out, and the values it takes at a few logits.

use lskd::labels::{linspace, smoothed_logistic_curve};

fn main() -> lskd::Result<()> {
    let grid = linspace(-10.0, 10.0, 2001);
    for alpha in [0.0, 0.05, 0.1, 0.2] {
        let curve = smoothed_logistic_curve(&grid, alpha)?;
        let (z_min, l_min) = curve
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty grid");
        let at = |z: f64| curve.iter().find(|p| (p.0 - z).abs() < 1e-9).map_or(f64::NAN, |p| p.1);
        let optimum = if alpha > 0.0 { ((1.0 - alpha) / alpha).ln() } else { f64::INFINITY };
        println!(
            "alpha={alpha:<4} grid min {l_min:.6} at z={z_min:+.2} (optimum z*={optimum:.4}); loss(-5)={:.4} loss(0)={:.4} loss(5)={:.4} loss(10)={:.6}",
            at(-5.0),
            at(0.0),
            at(5.0),
            at(10.0)
        );
    }
    Ok(())
}

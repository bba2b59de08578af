//! Noise of a kernel regression estimate with FARIMA errors: variance along
//! z, tail bounds, and one simulated sinusoid fit.

use moddev::cgf::InnovationModel;
use moddev::field::{CoefficientField, Cutoff};
use moddev::regress::{regression_tail, simulate, Kernel, RegressionDesign, RegressionFunction};
use moddev::tilt::TiltOptions;

fn main() -> moddev::error::Result<()> {
    let field = CoefficientField::farima(0.3, vec![], vec![], Cutoff::Auto)?;
    let design = RegressionDesign::new(field, InnovationModel::centered_poisson(1.0)?, 200, Kernel::Gaussian, 0.05)?;
    let queries: Vec<Vec<f64>> = (1..10).map(|k| vec![k as f64 / 10.0]).collect();
    for z in &queries {
        let t = regression_tail(&design, z, 2.0, &TiltOptions::default())?;
        println!(
            "z = {:.1}  B_n(z) = {:.4}  P(S > 2 sd) = {:.5}  P(|S| > 2 sd) = {:.5}",
            z[0], t.b_n, t.upper.value, t.two_sided
        );
    }
    let fit = simulate(&design, RegressionFunction::Sinusoid { amplitude: 1.0 }, &queries, 42)?;
    for p in fit {
        println!("z = {:.1}  g = {:+.4}  E g_n = {:+.4}  g_n = {:+.4}  noise/sd = {:+.2}", p.z[0], p.g, p.mean, p.estimate, p.noise / p.sd);
    }
    Ok(())
}

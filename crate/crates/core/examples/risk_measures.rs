//! Value at risk and expected shortfall for a skewed long-memory sum, and
//! the effect of truncating the moving average.

use moddev::cgf::InnovationModel;
use moddev::field::{CoefficientField, Cutoff};
use moddev::risk::{expected_shortfall, truncation_ratio};
use moddev::tilt::TiltOptions;

fn main() -> moddev::error::Result<()> {
    let opts = TiltOptions::default();
    let inn = InnovationModel::centered_poisson(1.0)?;
    let field = CoefficientField::farima(0.3, vec![], vec![], Cutoff::Auto)?;
    let model = field.window_weights(&inn, 200)?;
    let gauss = model.with_innovation(InnovationModel::gaussian(1.0)?)?;
    for alpha in [0.05, 0.01, 0.001] {
        let r = expected_shortfall(&model, alpha, &opts)?;
        let g = expected_shortfall(&gauss, alpha, &opts)?;
        println!(
            "alpha = {alpha:<6} VaR = {:>8.3} (normal {:>8.3})  ES = {:>8.3} (normal {:>8.3})",
            r.q,
            g.q,
            r.es.unwrap(),
            g.es.unwrap()
        );
    }
    for m in [5, 20, 80, 320] {
        let t = field.truncated_weights(&inn, 200, m)?;
        let c = truncation_ratio(&model, &t, 3.0, &opts)?;
        println!("m = {m:>3}: tail ratio full/truncated at x = 3 is {:.5} (leading term {:.5})", c.ratio, c.dominant);
    }
    Ok(())
}

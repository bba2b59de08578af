//! Moderate-deviation tail of an i.i.d. Poisson sum against the normal tail
//! and an importance-sampling estimate.

use moddev::cgf::InnovationModel;
use moddev::field::PartialSumModel;
use moddev::mc::{mid_lattice, tilted_is};
use moddev::tilt::{normal, tail_upper, TiltOptions, Variant};

fn main() -> moddev::error::Result<()> {
    let model = PartialSumModel::uniform_weights(InnovationModel::centered_poisson(1.0)?, 1001)?;
    let opts = TiltOptions::default();
    let sb = model.b_n().sqrt();
    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "x", "normal", "approx", "IS", "rel.se");
    for k in 1..=8 {
        let s = mid_lattice(&model, 0.5 * k as f64 * sb);
        let x = s / sb;
        let approx = tail_upper(&model, x, Variant::TheoremForm, &opts)?;
        let is = tilted_is(&model, s, 200_000, k, &opts)?;
        println!(
            "{x:>6.3} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.1e}",
            normal::sf(x),
            approx.value,
            is.p_hat,
            is.rel_std_err()
        );
    }
    Ok(())
}

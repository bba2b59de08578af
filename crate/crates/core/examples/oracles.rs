//! The verification oracles side by side: exact enumeration, Irwin-Hall,
//! plain Monte Carlo and tilted importance sampling.

use moddev::cgf::InnovationModel;
use moddev::field::PartialSumModel;
use moddev::mc::{exact_tail_enum, irwin_hall_tail, plain_mc, tilted_is};
use moddev::tilt::TiltOptions;

fn main() -> moddev::error::Result<()> {
    let opts = TiltOptions::default();
    let rad = PartialSumModel::uniform_weights(InnovationModel::rademacher(), 21)?;
    let exact = exact_tail_enum(&rad, 6.0)?;
    let is = tilted_is(&rad, 6.0, 100_000, 1, &opts)?;
    println!("rademacher N=21, S > 6: exact {:.6e}, IS {:.6e} +- {:.1e}", exact.p_hat, is.p_hat, is.std_err);

    let uni = PartialSumModel::uniform_weights(InnovationModel::centered_uniform(1.0)?, 20)?;
    for s in [1.0, 2.0, 4.0] {
        let exact = irwin_hall_tail(20, s)?;
        let mc = plain_mc(&uni, s, 200_000, 2)?;
        let is = tilted_is(&uni, s, 200_000, 3, &opts)?;
        println!(
            "uniform N=20, S > {s:>4}: exact {:.6e}, plain {:.6e} +- {:.1e}, IS {:.6e} +- {:.1e}",
            exact.p_hat, mc.p_hat, mc.std_err, is.p_hat, is.std_err
        );
    }
    Ok(())
}
